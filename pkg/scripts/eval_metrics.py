# -*- coding: utf-8 -*-
"""
Valutazione della mesh contro il ground truth: precisione, recall e F-score
alla soglia d (percentuali).

  P(d) = % punti ricostruiti con distanza dal GT < d
  R(d) = % punti GT con distanza dalla ricostruzione < d
  F(d) = 2 P R / (P + R)
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from recon_errors import IngestionError
from recon_utils import EVAL_SAMPLE_DENSITY, EVAL_THRESHOLD_FACTOR
from surface_extractor import SurfaceMesh

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalReport:
    d: float
    precision: float
    recall: float
    f_score: float

    def to_dict(self) -> dict:
        return asdict(self)


def f_score(precision: float, recall: float) -> float:
    if precision + recall <= 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _fraction_within(queries: np.ndarray, reference: np.ndarray, d: float, workers: int = 1) -> float:
    dist, _ = cKDTree(reference).query(queries, k=1, workers=workers)
    return 100.0 * float(np.count_nonzero(dist < d)) / len(queries)


def evaluate(reconstructed: np.ndarray, ground_truth: np.ndarray, d: float, workers: int = 1) -> EvalReport:
    rec = np.asarray(reconstructed, dtype=float).reshape(-1, 3)
    gt = np.asarray(ground_truth, dtype=float).reshape(-1, 3)
    if len(rec) == 0 or len(gt) == 0:
        raise IngestionError("valutazione su un insieme di punti vuoto")
    if not d > 0:
        raise IngestionError(f"soglia di valutazione non positiva: {d}")
    p = _fraction_within(rec, gt, d, workers)
    r = _fraction_within(gt, rec, d, workers)
    return EvalReport(d=float(d), precision=p, recall=r, f_score=f_score(p, r))


def sample_mesh(mesh: SurfaceMesh, density: float = EVAL_SAMPLE_DENSITY, seed: int = 0) -> np.ndarray:
    """Punti uniformi in area sulla mesh: ceil(density * area), mai meno delle facce non degeneri."""
    if len(mesh) == 0:
        return np.zeros((0, 3))
    rng = np.random.default_rng(seed)
    c = mesh.corners()
    areas = mesh.areas()
    total = float(areas.sum())
    if total <= 0.0:
        return c.mean(axis=1)
    n = max(int(np.ceil(density * total)), int(np.count_nonzero(areas)))
    faces = rng.choice(len(c), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    return (1.0 - r1)[:, None] * c[faces, 0] + (r1 * (1.0 - r2))[:, None] * c[faces, 1] + (r1 * r2)[:, None] * c[faces, 2]


def evaluate_mesh(mesh: SurfaceMesh, ground_truth: np.ndarray, scene_diagonal: float, d: Optional[float] = None,
                  density: float = EVAL_SAMPLE_DENSITY, seed: int = 0) -> EvalReport:
    """Valutazione con d di default = 0.01 * D_scene; mesh vuota -> tutto a 0."""
    if d is None:
        d = EVAL_THRESHOLD_FACTOR * scene_diagonal
    pts = sample_mesh(mesh, density, seed)
    if len(pts) == 0:
        logger.warning("⚠️ mesh vuota: precisione e recall a 0")
        return EvalReport(d=float(d), precision=0.0, recall=0.0, f_score=0.0)
    return evaluate(pts, ground_truth, d)


def write_report(path: Path, report: EvalReport) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
