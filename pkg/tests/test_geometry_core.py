# -*- coding: utf-8 -*-
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from geometry_core import (
    Intrinsics, Point3, Ray3, ViewPose, insphere, insphere_sos, look_at, orient3d, point3,
    project, project_points, ray_between, tet_volume, triangle_area, unproject,
)
from recon_errors import GeometryError

coord = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)
point = st.tuples(coord, coord, coord)


def exact_orient(a, b, c, d) -> int:
    fa, fb, fc, fd = ([Fraction(x) for x in p] for p in (a, b, c, d))
    u = [fb[k] - fa[k] for k in range(3)]
    v = [fc[k] - fa[k] for k in range(3)]
    w = [fd[k] - fa[k] for k in range(3)]
    det = (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
           + u[2] * (v[0] * w[1] - v[1] * w[0]))
    return (det > 0) - (det < 0)


# =============================
# orient3d
# =============================

def test_orient3d_unit_tet(unit_tet):
    a, b, c, d = unit_tet
    assert orient3d(a, b, c, d) == 1
    assert orient3d(b, a, c, d) == -1
    assert orient3d(a, b, c, (0.3, 0.3, 0.0)) == 0


def test_orient3d_nearly_coplanar_uses_exact_arithmetic():
    a, b, c = (0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)
    d = (0.5, 0.5, 2.0 ** -60)
    assert orient3d(a, b, c, d) == 1
    assert orient3d(a, b, c, (0.5, 0.5, -(2.0 ** -60))) == -1


def test_orient3d_collinear_points_on_large_coordinates():
    # stesso piano, coordinate grandi: il filtro float non decide
    base = 1e8
    a = (base, base, base)
    b = (base + 1.0, base, base)
    c = (base, base + 1.0, base)
    d = (base + 3.0, base + 7.0, base)
    assert orient3d(a, b, c, d) == 0


@given(point, point, point, point)
def test_orient3d_matches_fraction_oracle(a, b, c, d):
    assert orient3d(a, b, c, d) == exact_orient(a, b, c, d)


@given(point, point, point, point)
def test_orient3d_antisymmetric(a, b, c, d):
    assert orient3d(a, b, c, d) == -orient3d(b, a, c, d)
    assert orient3d(a, b, c, d) == orient3d(b, c, a, d)


def test_orient3d_rejects_non_finite_on_exact_path():
    with pytest.raises(GeometryError):
        orient3d((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (math.nan, 0.0, 0.0))


# =============================
# insphere
# =============================

def test_insphere_unit_tet(unit_tet):
    a, b, c, d = unit_tet
    assert insphere(a, b, c, d, (0.25, 0.25, 0.25)) == 1
    assert insphere(a, b, c, d, (5.0, 5.0, 5.0)) == -1
    # (1, 1, 0) sta sulla sfera circoscritta (centro (.5,.5,.5), r^2 = .75)
    assert insphere(a, b, c, d, (1.0, 1.0, 0.0)) == 0


def test_insphere_flips_with_orientation(unit_tet):
    a, b, c, d = unit_tet
    p = (0.25, 0.25, 0.25)
    assert insphere(b, a, c, d, p) == -insphere(a, b, c, d, p)


def test_insphere_degenerate_tet_raises():
    with pytest.raises(GeometryError):
        insphere((0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0), (0.2, 0.2, 0.2))


def test_insphere_sos_never_zero_and_consistent(unit_tet):
    a, b, c, d = unit_tet
    on_sphere = (1.0, 1.0, 0.0)
    s = insphere_sos(a, b, c, d, on_sphere)
    assert s in (-1, 1)
    # deterministico
    assert insphere_sos(a, b, c, d, on_sphere) == s
    assert insphere_sos(a, b, c, d, (0.25, 0.25, 0.25)) == 1
    assert insphere_sos(a, b, c, d, (5.0, 5.0, 5.0)) == -1


def test_insphere_sos_cospherical_cube_is_consistent():
    # 8 vertici del cubo sulla stessa sfera: le due diagonali devono dare esiti opposti
    a, b, c, d = (0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)
    for p in [(1.0, 1.0, 0.0), (1.0, 0.0, 1.0), (0.0, 1.0, 1.0), (1.0, 1.0, 1.0)]:
        assert insphere(a, b, c, d, p) == 0
        assert insphere_sos(a, b, c, d, p) == insphere_sos(a, b, c, d, p)


def _det(m):
    return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))


def exact_circumsphere_gap(a, b, c, d, p) -> int:
    """Segno esatto di |p - centro|^2 - r^2 (regola di Cramer in Fraction)."""
    fa, fb, fc, fd, fp = ([Fraction(x) for x in q] for q in (a, b, c, d, p))
    rows = [[2 * (q[k] - fa[k]) for k in range(3)] for q in (fb, fc, fd)]
    rhs = [sum(q[k] ** 2 - fa[k] ** 2 for k in range(3)) for q in (fb, fc, fd)]
    den = _det(rows)
    center = []
    for col in range(3):
        m = [row[:] for row in rows]
        for i in range(3):
            m[i][col] = rhs[i]
        center.append(_det(m) / den)
    r2 = sum((fa[k] - center[k]) ** 2 for k in range(3))
    gap = sum((fp[k] - center[k]) ** 2 for k in range(3)) - r2
    return (gap > 0) - (gap < 0)


@settings(max_examples=200)
@given(point, point, point, point, point)
def test_insphere_matches_circumsphere_distance(a, b, c, d, p):
    o = orient3d(a, b, c, d)
    assume(o != 0)
    assert insphere(a, b, c, d, p) == -exact_circumsphere_gap(a, b, c, d, p) * o


# =============================
# tipi e camera
# =============================

def test_point3_rejects_non_finite():
    assert point3(1, 2, 3) == Point3(1.0, 2.0, 3.0)
    with pytest.raises(GeometryError):
        point3(math.inf, 0, 0)


def test_ray_requires_unit_direction():
    with pytest.raises(GeometryError):
        Ray3(Point3(0, 0, 0), (1.0, 1.0, 0.0))
    ray, length = ray_between((0, 0, 0), (3, 4, 0))
    assert length == pytest.approx(5.0)
    assert tuple(ray.at(5.0)) == pytest.approx((3.0, 4.0, 0.0))
    with pytest.raises(GeometryError):
        ray_between((1, 1, 1), (1, 1, 1))


def test_intrinsics_validation():
    with pytest.raises(GeometryError):
        Intrinsics(focal=0.0, cx=1, cy=1, width=2, height=2)
    with pytest.raises(GeometryError):
        Intrinsics(focal=1.0, cx=1, cy=1, width=0, height=2)


def test_view_pose_rejects_non_orthonormal(intrinsics):
    with pytest.raises(GeometryError):
        ViewPose(0, Point3(0, 0, 0), np.diag([1.0, 1.0, 2.0]), intrinsics)


def test_look_at_projects_target_to_principal_point(intrinsics):
    view = look_at(3, (4.0, -2.0, 5.0), (0.0, 1.0, 0.0), intrinsics)
    assert np.allclose(view.rotation @ view.rotation.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(view.rotation) == pytest.approx(1.0)
    u, v = project(view, (0.0, 1.0, 0.0))
    assert u == pytest.approx(320.0)
    assert v == pytest.approx(240.0)


def test_look_at_straight_down(intrinsics):
    view = look_at(0, (0.0, 0.0, 10.0), (0.0, 0.0, 0.0), intrinsics)
    assert np.allclose(view.forward, (0.0, 0.0, -1.0))
    with pytest.raises(GeometryError):
        look_at(1, (1.0, 1.0, 1.0), (1.0, 1.0, 1.0), intrinsics)


def test_project_behind_camera_is_none(intrinsics):
    view = look_at(0, (0.0, 0.0, 10.0), (0.0, 0.0, 0.0), intrinsics)
    assert project(view, (0.0, 0.0, 20.0)) is None
    uv, depth = project_points(view, np.array([[0.0, 0.0, 20.0], [0.0, 0.0, 0.0]]))
    assert np.isnan(uv[0]).all()
    assert depth[1] == pytest.approx(10.0)


@given(st.floats(0, 640), st.floats(0, 480), st.floats(0.5, 50.0))
def test_unproject_inverts_project(u, v, depth):
    k = Intrinsics(focal=500.0, cx=320.0, cy=240.0, width=640, height=480)
    view = look_at(0, (1.0, 2.0, 8.0), (0.0, 0.0, 0.0), k)
    p = unproject(view, u, v, depth)
    back = project(view, p)
    assert back[0] == pytest.approx(u, abs=1e-6)
    assert back[1] == pytest.approx(v, abs=1e-6)


def test_triangle_area_and_volume(unit_tet):
    a, b, c, d = unit_tet
    assert triangle_area(a, b, c) == pytest.approx(0.5)
    assert tet_volume(a, b, c, d) == pytest.approx(1.0 / 6.0)
    assert tet_volume(b, a, c, d) == pytest.approx(-1.0 / 6.0)
