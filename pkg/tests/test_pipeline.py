# -*- coding: utf-8 -*-
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

import pipeline

from batch_io import ObservationBatch, SparseTrack
from geometry_core import Point3
from loop_config import LoopConfig, load_config, parse_config
from mesh_io import write_mesh_ply, write_ply, write_quality_csv
from pipeline import LoopState, TimingRow, main, replay, run_closed_loop, run_iteration, timing_stability
from quality_assessor import QualityRecord
from recon_errors import IngestionError
from scene_simulator import SceneCapture, generate_scene, nadir_trajectory
from surface_extractor import SurfaceMesh

DEFAULT_CONF = Path(__file__).resolve().parents[1] / "data" / "input" / "default.conf"


@pytest.fixture(scope="module")
def scene():
    return generate_scene(seed=5, building_count=2, feature_density=0.3, gt_density=5.0)


def center_batches(scene, count: int = 2, size: int = 4):
    """Blocchi di viste nadir al centro della serpentina, catturati senza rumore."""
    waypoints = nadir_trajectory(scene).waypoints
    sim = SceneCapture(scene, sigma_px=0.0)
    return [sim.capture(waypoints[36 + k * size:36 + (k + 1) * size]) for k in range(count)]


def run_batches(batches, config=None):
    state = LoopState.initial(config or LoopConfig())
    for batch in batches:
        state, _ = run_iteration(state, batch)
    return state


# =============================
# iterazione
# =============================

def test_empty_batch_is_rejected():
    state = LoopState.initial(LoopConfig())
    with pytest.raises(IngestionError):
        run_iteration(state, ObservationBatch(0, (), ()))
    assert state.batches == 0
    assert state.views == {}


def test_iteration_builds_mesh_and_quality(scene):
    state = LoopState.initial(LoopConfig())
    for batch in center_batches(scene):
        state, artifacts = run_iteration(state, batch)
        assert artifacts.batch_id == batch.batch_id
        assert artifacts.timing.images == len(batch.views)
        assert artifacts.timing.snapshot_ms >= 0.0
        assert artifacts.timing.per_image_s >= artifacts.timing.snapshot_ms / 1000.0 / len(batch.views)
    assert state.batches == 2
    assert len(state.views) == 8
    assert state.complex is not None
    assert len(state.mesh) > 0
    assert len(state.records) == len(state.mesh)
    assert [r.face_id for r in state.records] == list(range(len(state.mesh)))
    assert all(r.q_total is None or 0.0 <= r.q_total <= 1.0 for r in state.records)
    assert state.anchors is not None
    assert state.plan is not None
    assert len(state.timings) == 2


def test_failed_batch_leaves_state_untouched(scene):
    first, second = center_batches(scene)
    state, _ = run_iteration(LoopState.initial(LoopConfig()), first)
    faces, views, rays = len(state.mesh), sorted(state.views), state.store.active_count()
    # vista gia' registrata: batch rifiutato
    bad = ObservationBatch(99, first.views[:1] + second.views, second.tracks)
    with pytest.raises(IngestionError):
        run_iteration(state, bad)
    assert len(state.mesh) == faces
    assert sorted(state.views) == views
    assert state.store.active_count() == rays
    assert state.batches == 1
    # traccia su una vista sconosciuta
    orphan = ObservationBatch(100, (), (SparseTrack(10_000, Point3(0.0, 0.0, 1.0), ((555, 1.0, 1.0),)),))
    with pytest.raises(IngestionError):
        run_iteration(state, orphan)
    again, _ = run_iteration(state, second)
    assert again.batches == 2


def test_iteration_is_deterministic(scene):
    a = run_batches(center_batches(scene))
    b = run_batches(center_batches(scene))
    assert a.mesh.triangles == b.mesh.triangles
    assert a.records == b.records
    assert a.plan.trajectory.waypoints == b.plan.trajectory.waypoints


def test_intermediate_batches_skip_planning(scene):
    first, second = center_batches(scene)
    state, artifacts = run_iteration(LoopState.initial(LoopConfig()), first, replan=False)
    assert artifacts.plan is None
    assert state.plan is None
    assert artifacts.timing.trajectory_ms < 1.0
    assert len(state.records) == len(state.mesh)
    state, artifacts = run_iteration(state, second)
    assert artifacts.plan is not None


def test_parallel_workers_match_serial(scene):
    serial = run_batches(center_batches(scene))
    parallel = run_batches(center_batches(scene), LoopConfig(workers=4))
    assert serial.mesh.triangles == parallel.mesh.triangles
    assert serial.records == parallel.records


def test_timing_stability():
    def row(images, per_image):
        return TimingRow(0, images, per_image, 0.0, 0.0, 0.0, 0, 0, 0.0, 0.0, 0.0)

    assert timing_stability([]) == 0.0
    assert timing_stability([row(4, 1.0), row(4, 1.0), row(4, 2.0), row(0, 50.0)]) == pytest.approx(2.0)


# =============================
# loop chiuso
# =============================

SMALL_LOOP = """
iteration_cap = 2
building_count = 2
feature_density = 0.3
gt_sample_density = 5.0
sigma_px = 0.5
"""


@pytest.mark.slow
def test_default_loop_improves_every_iteration(tmp_path):
    config = load_config(DEFAULT_CONF)
    assert config.iteration_cap == 3
    report = run_closed_loop(config, out_dir=tmp_path / "run")
    assert len(report.iterations) == 3
    quality = [it.mean_quality for it in report.iterations]
    assert quality[0] < quality[1] < quality[2]
    first, last = report.iterations[0], report.iterations[-1]
    assert last.views > first.views
    assert last.evaluation.f_score - first.evaluation.f_score >= 10.0


@pytest.mark.slow
def test_closed_loop_replays_byte_for_byte(tmp_path):
    config = parse_config(SMALL_LOOP)
    run_dir = tmp_path / "run"
    report = run_closed_loop(config, out_dir=run_dir)
    assert report.iterations
    first = report.iterations[0]
    assert first.faces > 0
    assert first.batches == 9
    assert first.plan_batch is not None
    data = json.loads((run_dir / "report.json").read_text(encoding="utf-8"))
    assert data["timing"] is None
    assert [it["plan_batch"] for it in data["iterations"]] == [it.plan_batch for it in report.iterations]
    # una traiettoria per iterazione
    assert len(list(run_dir.glob("trajectory_*.json"))) == len(report.iterations)

    replay_dir = tmp_path / "replay"
    plan_batches = [it.plan_batch for it in report.iterations]
    state = replay(run_dir / "batches", config, replay_dir, plan_batches)
    assert state.batches == sum(it.batches for it in report.iterations)
    for produced in sorted(run_dir.glob("mesh_*.ply")):
        assert (replay_dir / produced.name).read_bytes() == produced.read_bytes()
    for produced in sorted(run_dir.glob("trajectory_*.json")):
        assert (replay_dir / produced.name).read_text(encoding="utf-8") == produced.read_text(encoding="utf-8")
    assert sorted(p.name for p in replay_dir.glob("trajectory_*.json")) == \
        sorted(p.name for p in run_dir.glob("trajectory_*.json"))


@pytest.mark.slow
def test_iteration_cap_one_produces_one_plan(scene, monkeypatch):
    calls = []
    real_plan = pipeline.plan

    def counting_plan(*args, **kwargs):
        calls.append(args[0])
        return real_plan(*args, **kwargs)

    monkeypatch.setattr(pipeline, "plan", counting_plan)
    config = LoopConfig(iteration_cap=1, gt_sample_density=5.0)
    report = run_closed_loop(config, scene=scene)
    (only,) = report.iterations
    assert only.batches > 1
    assert len(calls) == 1


def test_closed_loop_with_given_scene(scene):
    config = LoopConfig(iteration_cap=1, initial_preset="circle", batch_size=18)
    report = run_closed_loop(config, scene=scene)
    (only,) = report.iterations
    assert only.batches == 3
    assert 0 < only.views <= 54
    assert 0.0 <= only.evaluation.precision <= 100.0


# =============================
# CLI
# =============================

def test_cli_config_error_exit_code(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.conf"), "--out", str(tmp_path / "out")]) == 2


def test_cli_ingestion_error_exit_codes(tmp_path):
    assert main(["eval", "--mesh", str(tmp_path / "a.ply"), "--truth", str(tmp_path / "b.ply"), "--d", "0.1"]) == 3
    (tmp_path / "batches").mkdir()
    assert main(["replay", "--batches", str(tmp_path / "batches")]) == 3


def test_cli_eval(tmp_path):
    pts = np.random.default_rng(0).uniform(0.0, 1.0, (30, 3))
    write_ply(tmp_path / "rec.ply", pts)
    write_ply(tmp_path / "truth.ply", pts + [0.0, 0.0, 5.0])
    out = tmp_path / "eval.json"
    code = main(["eval", "--mesh", str(tmp_path / "rec.ply"), "--truth", str(tmp_path / "truth.ply"),
                 "--d", "0.01", "--out", str(out)])
    assert code == 0
    data = json.loads(out.read_text(encoding="utf-8"))
    assert data["d"] == 0.01
    assert data["f_score"] == 0.0


def flat_mesh() -> SurfaceMesh:
    pts = np.array([[np.nan] * 3, [0, 0, 0], [4, 0, 0], [4, 4, 0], [0, 4, 0]], dtype=float)
    return SurfaceMesh(points=pts, triangles=[(1, 2, 3), (1, 3, 4)])


def test_cli_plan(tmp_path):
    write_mesh_ply(tmp_path / "mesh.ply", flat_mesh())
    write_quality_csv(tmp_path / "quality.csv", [QualityRecord(k, 0.01, 3, 0.5, 1.0) for k in range(2)])
    (tmp_path / "plan.conf").write_text("tau_quality = 0.5\n", encoding="utf-8")
    out = tmp_path / "trajectory.json"
    code = main(["plan", "--mesh", str(tmp_path / "mesh.ply"), "--quality", str(tmp_path / "quality.csv"),
                 "--config", str(tmp_path / "plan.conf"), "--start", "2", "2", "5", "--out", str(out)])
    assert code == 0
    summary = json.loads(out.read_text(encoding="utf-8"))
    assert summary["summary"]["viewpoint_count"] == 0


def test_cli_plan_rejects_mismatched_quality(tmp_path):
    write_mesh_ply(tmp_path / "mesh.ply", flat_mesh())
    write_quality_csv(tmp_path / "quality.csv", [QualityRecord(0, 0.01, 3, 0.5, 1.0)])
    code = main(["plan", "--mesh", str(tmp_path / "mesh.ply"), "--quality", str(tmp_path / "quality.csv")])
    assert code == 3
