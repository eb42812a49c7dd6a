# -*- coding: utf-8 -*-
from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eval_metrics import EvalReport, evaluate, evaluate_mesh, f_score, sample_mesh, write_report
from recon_errors import IngestionError
from surface_extractor import SurfaceMesh


def brute_fraction(queries, reference, d):
    dist = np.linalg.norm(queries[:, None] - reference[None, :], axis=2).min(axis=1)
    return 100.0 * np.count_nonzero(dist < d) / len(queries)


def test_f_score():
    assert f_score(0.0, 0.0) == 0.0
    assert f_score(100.0, 100.0) == pytest.approx(100.0)
    assert f_score(50.0, 100.0) == pytest.approx(200.0 / 3.0)


def test_identical_sets_score_full():
    pts = np.random.default_rng(0).uniform(0.0, 1.0, (50, 3))
    report = evaluate(pts, pts, 0.01)
    assert report == EvalReport(0.01, 100.0, 100.0, 100.0)


def test_shift_beyond_threshold_scores_zero():
    pts = np.random.default_rng(1).uniform(0.0, 1.0, (30, 3)) * [100.0, 100.0, 0.0]
    report = evaluate(pts, pts + [0.0, 0.0, 0.5], 0.4)
    assert report.precision == 0.0
    assert report.recall == 0.0
    assert report.f_score == 0.0


def test_partial_reconstruction_keeps_precision():
    gt = np.array([[float(i), 0.0, 0.0] for i in range(10)])
    rec = gt[:5] + [0.0, 0.001, 0.0]
    report = evaluate(rec, gt, 0.01)
    assert report.precision == pytest.approx(100.0)
    assert report.recall == pytest.approx(50.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 40), st.integers(1, 40), st.floats(0.01, 0.8))
def test_matches_brute_force_and_is_symmetric(seed, n_rec, n_gt, d):
    rng = np.random.default_rng(seed)
    rec = rng.uniform(0.0, 1.0, (n_rec, 3))
    gt = rng.uniform(0.0, 1.0, (n_gt, 3))
    report = evaluate(rec, gt, d)
    assert report.precision == pytest.approx(brute_fraction(rec, gt, d))
    assert report.recall == pytest.approx(brute_fraction(gt, rec, d))
    swapped = evaluate(gt, rec, d)
    assert swapped.precision == report.recall
    assert swapped.recall == report.precision


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 0.4), st.floats(0.0, 0.4))
def test_scores_grow_with_threshold(seed, d, extra):
    rng = np.random.default_rng(seed)
    rec, gt = rng.uniform(0, 1, (25, 3)), rng.uniform(0, 1, (25, 3))
    small, large = evaluate(rec, gt, d), evaluate(rec, gt, d + extra)
    assert large.precision >= small.precision
    assert large.recall >= small.recall


def test_invalid_inputs():
    pts = np.zeros((3, 3))
    with pytest.raises(IngestionError):
        evaluate(np.zeros((0, 3)), pts, 0.1)
    with pytest.raises(IngestionError):
        evaluate(pts, pts, 0.0)


def square_mesh(z: float = 0.0) -> SurfaceMesh:
    pts = np.array([[np.nan] * 3, [0, 0, z], [1, 0, z], [1, 1, z], [0, 1, z]], dtype=float)
    return SurfaceMesh(points=pts, triangles=[(1, 2, 3), (1, 3, 4)])


def test_sample_mesh_density_and_bounds():
    pts = sample_mesh(square_mesh(), density=200.0, seed=3)
    assert len(pts) == 200
    assert np.all((pts >= -1e-12) & (pts <= 1.0 + 1e-12))
    assert np.allclose(pts[:, 2], 0.0)
    again = sample_mesh(square_mesh(), density=200.0, seed=3)
    assert np.array_equal(pts, again)


def test_sample_mesh_never_skips_small_faces():
    pts = sample_mesh(square_mesh(), density=0.1, seed=0)
    assert len(pts) == 2


def test_evaluate_mesh_against_its_own_surface():
    grid = np.array([[x, y, 0.0] for x in np.linspace(0, 1, 21) for y in np.linspace(0, 1, 21)])
    report = evaluate_mesh(square_mesh(), grid, scene_diagonal=np.sqrt(2.0), d=0.05, density=20000.0)
    assert report.precision == pytest.approx(100.0)
    assert report.recall == pytest.approx(100.0)
    far = evaluate_mesh(square_mesh(z=1.0), grid, scene_diagonal=np.sqrt(2.0), density=500.0)
    assert far.d == pytest.approx(0.01 * np.sqrt(2.0))
    assert far.f_score == 0.0


def test_evaluate_empty_mesh_scores_zero():
    empty = SurfaceMesh(points=np.full((1, 3), np.nan))
    report = evaluate_mesh(empty, np.zeros((4, 3)), scene_diagonal=10.0)
    assert report.d == pytest.approx(0.1)
    assert (report.precision, report.recall, report.f_score) == (0.0, 0.0, 0.0)


def test_write_report(tmp_path):
    path = tmp_path / "eval.json"
    write_report(path, EvalReport(0.2, 90.0, 80.0, f_score(90.0, 80.0)))
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["precision"] == 90.0
    assert set(data) == {"d", "precision", "recall", "f_score"}
