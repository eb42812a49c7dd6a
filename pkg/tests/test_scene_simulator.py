# -*- coding: utf-8 -*-
from __future__ import annotations

import math

import numpy as np
import pytest

from batch_io import format_batch
from geometry_core import project_points
from mesh_io import read_ply
from path_planner import Waypoint
from recon_errors import ConfigError
from scene_simulator import (
    Ground, SceneCapture, capture, circle_trajectory, generate_scene, nadir_trajectory, preset_trajectory,
    sample_surface, write_scene_ply,
)


@pytest.fixture(scope="module")
def small_scene():
    return generate_scene(seed=3, building_count=2, feature_density=0.2, gt_density=5.0)


def nadir_block(scene, start: int = 36, count: int = 4):
    return list(nadir_trajectory(scene).waypoints[start:start + count])


# =============================
# scena
# =============================

def test_scene_is_deterministic():
    a = generate_scene(seed=7, feature_density=0.2, gt_density=2.0)
    b = generate_scene(seed=7, feature_density=0.2, gt_density=2.0)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.landmarks, b.landmarks)
    assert np.array_equal(a.truth_points, b.truth_points)
    assert a.building_kinds == b.building_kinds
    c = generate_scene(seed=8, feature_density=0.2, gt_density=2.0)
    assert not np.array_equal(a.vertices, c.vertices)


def test_scene_rejects_bad_parameters():
    with pytest.raises(ConfigError):
        generate_scene(extent=0.0)
    with pytest.raises(ConfigError):
        generate_scene(building_count=-1)


def test_building_kinds_cycle():
    scene = generate_scene(seed=1, building_count=3, feature_density=0.1, gt_density=1.0)
    kinds = scene.building_kinds
    assert kinds == ["block", "overhang", "courtyard"][:len(kinds)]
    # blocco 1 box, sbalzo 2 (tetto del pilastro escluso), corte 8 (8 contatti da 4 triangoli esclusi)
    boxes = sum({"block": 1, "overhang": 2, "courtyard": 8}[k] for k in kinds)
    tris = sum({"block": 12, "overhang": 22, "courtyard": 64}[k] for k in kinds)
    assert len(scene.boxes) == boxes
    assert len(scene.triangles) == 2 * 12 * 12 + tris


def test_courtyard_has_no_internal_faces():
    for seed in range(1, 6):
        scene = generate_scene(seed=seed, building_count=3, feature_density=0.1, gt_density=1.0)
        if "courtyard" in scene.building_kinds:
            break
    else:
        pytest.fail("nessuna corte generata")
    tol = 1e-7
    pts = scene.truth_points
    # un punto su una faccia di contatto sta nella chiusura di due box
    inside = np.zeros(len(pts), dtype=int)
    for lo, hi in scene.boxes:
        inside += np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)
    assert len(pts) > 0
    assert inside.max() <= 1
    # nessun triangolo della mesh giace su una faccia coperta da un altro box
    c = scene.vertices[scene.triangles]
    for k, (lo, hi) in enumerate(scene.boxes):
        own = np.all((c >= lo - tol) & (c <= hi + tol), axis=(1, 2))
        for j, (lo2, hi2) in enumerate(scene.boxes):
            if j != k:
                assert not (own & np.all((c >= lo2 - tol) & (c <= hi2 + tol), axis=(1, 2))).any()


def test_ground_only_scene_keeps_every_truth_sample():
    scene = generate_scene(seed=2, building_count=0, feature_density=0.1, gt_density=3.0)
    c = scene.vertices[scene.triangles]
    area = float((0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)).sum())
    assert len(scene.truth_points) == math.ceil(3.0 * area)
    assert not scene.hidden(scene.truth_points).any()


def test_ground_height_interpolates_mesh_nodes():
    g = Ground(extent=10.0, amplitude=0.3, fx=1, fy=2, px=0.4, py=1.1, cells=5)
    nodes = g.nodes()
    xs, ys = np.meshgrid(nodes, nodes, indexing="ij")
    assert g.height(xs.ravel(), ys.ravel()) == pytest.approx(g.relief(xs, ys).ravel())
    # centro del lato comune di una cella: media delle due quote
    x0, x1 = nodes[1], nodes[2]
    mid = g.height(0.5 * (x0 + x1), nodes[3])
    assert mid[0] == pytest.approx(0.5 * (g.relief(x0, nodes[3]) + g.relief(x1, nodes[3])))


def test_hidden_points(small_scene):
    lo, hi = small_scene.boxes[0]
    inside = 0.5 * (lo + hi)
    on_roof = np.array([inside[0], inside[1], hi[2]])
    deep = np.array([0.0, 0.0, -50.0])
    mask = small_scene.hidden(np.vstack([inside, on_roof, deep]))
    assert mask.tolist() == [True, False, True]
    assert small_scene.below_surface(deep)


def test_truth_and_landmarks_are_on_visible_surface(small_scene):
    assert len(small_scene.truth_points) > 0
    assert not small_scene.hidden(small_scene.truth_points).any()
    assert not small_scene.hidden(small_scene.landmarks).any()
    assert np.linalg.norm(small_scene.landmark_normals, axis=1) == pytest.approx(1.0)


def test_sigma_3d_perturbs_landmarks():
    clean = generate_scene(seed=4, building_count=1, feature_density=0.2, gt_density=1.0)
    noisy = generate_scene(seed=4, building_count=1, feature_density=0.2, gt_density=1.0, sigma_3d=0.01)
    assert clean.landmarks.shape == noisy.landmarks.shape
    diff = np.abs(clean.landmarks - noisy.landmarks)
    assert 0.0 < diff.max() < 0.1


def test_sample_surface_density():
    verts = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [2.0, 2.0, 0.0]])
    tris = np.array([[0, 1, 3], [0, 3, 2]])
    pts, faces = sample_surface(verts, tris, 10.0, np.random.default_rng(0))
    assert len(pts) == 40
    assert set(faces.tolist()) <= {0, 1}
    assert np.all((pts[:, :2] >= 0.0) & (pts[:, :2] <= 2.0))
    assert np.allclose(pts[:, 2], 0.0)
    empty, _ = sample_surface(verts, np.zeros((0, 3), dtype=int), 10.0, np.random.default_rng(0))
    assert empty.shape == (0, 3)


def test_write_scene_ply(tmp_path, small_scene):
    path = tmp_path / "scene.ply"
    write_scene_ply(path, small_scene)
    pts, tris, colors = read_ply(path)
    assert len(pts) == len(small_scene.vertices)
    assert len(tris) == len(small_scene.triangles)
    assert colors is None


# =============================
# traiettorie di riferimento
# =============================

def test_nadir_preset(small_scene):
    traj = nadir_trajectory(small_scene)
    assert len(traj) == 81
    r = small_scene.radius
    for w in traj.waypoints:
        assert w.position[2] == pytest.approx(0.5 * r)
        assert w.look_at[2] == 0.0
        assert w.look_at[:2] == pytest.approx(w.position[:2])
    # serpentina: passi consecutivi sempre di 0.2 R
    steps = [np.linalg.norm(np.subtract(b.position, a.position)) for a, b in zip(traj.waypoints, traj.waypoints[1:])]
    assert steps == pytest.approx([0.2 * r] * 80)


def test_circle_preset(small_scene):
    traj = circle_trajectory(small_scene)
    assert len(traj) == 54
    r, c = small_scene.radius, small_scene.center
    heights = sorted({round(w.position[2] / r, 6) for w in traj.waypoints})
    assert heights == pytest.approx([0.2, 0.7, 1.2])
    for w in traj.waypoints:
        assert math.hypot(w.position[0] - c[0], w.position[1] - c[1]) == pytest.approx(0.7 * r)
        assert w.look_at == pytest.approx(tuple(c))


def test_unknown_preset(small_scene):
    assert len(preset_trajectory("circle", small_scene)) == 54
    with pytest.raises(ConfigError):
        preset_trajectory("spiral", small_scene)


# =============================
# cattura
# =============================

def test_capture_without_noise_is_exact(small_scene):
    batch = capture(small_scene, nadir_block(small_scene), sigma_px=0.0)
    assert len(batch.views) == 4
    assert batch.tracks
    views = {v.view_id: v for v in batch.views}
    for track in batch.tracks:
        assert len(track.observations) >= 2
        assert np.array_equal(np.asarray(track.point), small_scene.landmarks[track.track_id])
        for view_id, u, v in track.observations:
            uv, depth = project_points(views[view_id], small_scene.landmarks[track.track_id])
            assert depth[0] > 0
            assert (u, v) == pytest.approx((uv[0, 0], uv[0, 1]), abs=1e-9)


def test_capture_noise_is_seeded(small_scene):
    a = capture(small_scene, nadir_block(small_scene), sigma_px=1.0, seed=5)
    b = capture(small_scene, nadir_block(small_scene), sigma_px=1.0, seed=5)
    c = capture(small_scene, nadir_block(small_scene), sigma_px=1.0, seed=6)
    assert format_batch(a) == format_batch(b)
    assert format_batch(a) != format_batch(c)


def test_single_view_observations_wait_for_a_second_view(small_scene):
    sim = SceneCapture(small_scene, sigma_px=0.0)
    block = nadir_block(small_scene, count=2)
    first = sim.capture(block[:1])
    assert first.batch_id == 0
    assert len(first.views) == 1
    assert first.tracks == ()
    assert sim.pending
    second = sim.capture(block[1:])
    assert second.batch_id == 1
    assert second.views[0].view_id == 1
    assert second.tracks
    assert all(sorted(t.view_ids()) == [0, 1] for t in second.tracks)


def test_emitted_landmarks_keep_streaming(small_scene):
    sim = SceneCapture(small_scene, sigma_px=0.0)
    block = nadir_block(small_scene, count=3)
    emitted = {t.track_id for t in sim.capture(block[:2]).tracks}
    third = sim.capture(block[2:])
    single = [t for t in third.tracks if len(t.observations) == 1]
    assert single
    assert {t.track_id for t in single} <= emitted


def test_invalid_waypoints_are_skipped(small_scene):
    below = Waypoint((0.0, 0.0, -50.0), (0.0, 0.0, -60.0))
    degenerate = Waypoint((0.0, 0.0, 30.0), (0.0, 0.0, 30.0))
    batch = SceneCapture(small_scene).capture([below, degenerate])
    assert batch.views == ()
    assert batch.is_empty()


def test_capture_rejects_negative_noise(small_scene):
    with pytest.raises(ConfigError):
        SceneCapture(small_scene, sigma_px=-1.0)
