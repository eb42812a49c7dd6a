# -*- coding: utf-8 -*-
from __future__ import annotations

import numpy as np
import pytest

from geometry_core import look_at
from raster import buffer_shape, clipped_polygon_area, face_visibility, point_visibility, render_depth


def square(half: float, z: float, up: bool = True) -> np.ndarray:
    a, b, c, d = (-half, -half, z), (half, -half, z), (half, half, z), (-half, half, z)
    tris = [(a, b, c), (a, c, d)] if up else [(a, c, b), (a, d, c)]
    return np.asarray(tris, dtype=float)


@pytest.fixture
def nadir(intrinsics):
    return look_at(0, (0.0, 0.0, 10.0), (0.0, 0.0, 0.0), intrinsics)


def test_buffer_shape(nadir):
    assert buffer_shape(nadir, 0.25) == (120, 160)
    assert buffer_shape(nadir, 1e-6) == (1, 1)


def test_facing_triangles_are_visible(nadir):
    vis = face_visibility(nadir, square(1.0, 0.0), 0.25, 1e-3)
    assert vis.tolist() == [True, True]


def test_back_facing_triangles_are_culled(nadir):
    vis = face_visibility(nadir, square(1.0, 0.0, up=False), 0.25, 1e-3)
    assert not vis.any()


def test_occluded_triangles_are_hidden(nadir):
    corners = np.concatenate([square(1.0, 1.0), square(0.5, 0.0)])
    vis = face_visibility(nadir, corners, 0.25, 1e-3)
    assert vis.tolist() == [True, True, False, False]


def test_depth_tolerance_lets_coplanar_faces_through(nadir):
    corners = np.concatenate([square(1.0, 0.01), square(0.5, 0.0)])
    assert face_visibility(nadir, corners, 0.25, 0.1)[2:].all()


def test_out_of_image_and_behind_camera(nadir):
    # piu' largo del campo visivo a 10 m (+-6.4 m in x)
    assert not face_visibility(nadir, square(8.0, 0.0), 0.25, 1e-3).any()
    assert not face_visibility(nadir, square(1.0, 12.0), 0.25, 1e-3).any()


def test_empty_corners(nadir):
    assert face_visibility(nadir, np.zeros((0, 3, 3)), 0.25, 1e-3).shape == (0,)


def test_render_depth_stores_nearest_surface(nadir):
    render = render_depth(nadir, np.concatenate([square(0.5, 0.0), square(1.0, 1.0)]), 0.25)
    center = render.zbuf[60, 80]
    assert center == pytest.approx(9.0)
    assert np.isinf(render.zbuf[0, 0])
    assert render.front.all()


def test_point_visibility(nadir):
    render = render_depth(nadir, square(1.0, 1.0), 0.25)
    points = np.array([[0.1, 0.1, 1.0], [0.1, 0.1, 0.0], [0.1, 0.1, 1.0], [0.0, 0.0, 11.0]])
    normals = np.array([[0, 0, 1.0], [0, 0, 1.0], [0, 0, -1.0], [0, 0, 1.0]])
    vis = point_visibility(nadir, points, normals, render, 1e-3)
    assert vis.tolist() == [True, False, False, False]
    assert point_visibility(nadir, np.zeros((0, 3)), np.zeros((0, 3)), render, 1e-3).shape == (0,)


def test_clipped_polygon_area():
    assert clipped_polygon_area([(10, 10), (20, 10), (20, 20), (10, 20)], 640, 480) == pytest.approx(100.0)
    # meta' fuori a sinistra
    assert clipped_polygon_area([(-10, 0), (10, 0), (10, 10), (-10, 10)], 640, 480) == pytest.approx(100.0)
    assert clipped_polygon_area([(-30, -30), (-20, -30), (-20, -20)], 640, 480) == 0.0
    # triangolo che copre tutta l'immagine
    assert clipped_polygon_area([(-1000, -1000), (3000, -1000), (-1000, 3000)], 640, 480) == pytest.approx(640 * 480)
