# -*- coding: utf-8 -*-
"""
Qualita' per faccia della mesh corrente: GSD, ridondanza di osservazione,
errore di riproiezione e indice fuso Q_total.

Visibilita' con rasterizzazione software (raster.py), parallela sulle viste.
La fusione normalizza ogni componente tra i percentili P5 / P95 delle facce
osservate; le componenti sconosciute valgono 0.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from geometry_core import ViewPose, project_points
from raster import clipped_polygon_area, face_visibility
from recon_errors import ConfigError
from recon_utils import (
    DEPTH_TOLERANCE_FACTOR, INVERSE_FLOOR, PERCENTILE_HIGH, PERCENTILE_LOW,
    RESOLUTION_SCALE, W_GSD, W_REDUNDANCY, W_REPROJ,
)
from surface_extractor import SurfaceMesh

logger = logging.getLogger(__name__)

# vertice Delaunay -> {view_id: (u, v)}
Measurements = Dict[int, Dict[int, Tuple[float, float]]]


@dataclass(frozen=True)
class QualityRecord:
    face_id: int
    gsd: Optional[float]
    redundancy: int
    reproj_error: Optional[float]
    q_total: Optional[float] = None


def effective_quality(record: QualityRecord) -> float:
    """Q_total con le facce mai osservate a 0."""
    return 0.0 if record.q_total is None else record.q_total


@dataclass
class VisibilityTable:
    visible: np.ndarray          # (facce, viste) bool
    view_ids: List[int]

    def views_of(self, face: int) -> List[int]:
        """Indici (colonne) delle viste che vedono la faccia."""
        return [int(j) for j in np.flatnonzero(self.visible[face])]

    def redundancy(self) -> np.ndarray:
        return self.visible.sum(axis=1).astype(int)


@dataclass(frozen=True)
class QualityAnchors:
    """Estremi fissi (basso, alto) della normalizzazione per GSD^-1, R, E^-1."""

    gsd_inv: Tuple[float, float]
    redundancy: Tuple[float, float]
    reproj_inv: Tuple[float, float]


# =============================
# Visibilita'
# =============================

def build_visibility(mesh: SurfaceMesh, views: Sequence[ViewPose], resolution_scale: float = RESOLUTION_SCALE,
                     eps_z: Optional[float] = None, scene_diagonal: float = 1.0, workers: int = 1) -> VisibilityTable:
    if eps_z is None:
        eps_z = DEPTH_TOLERANCE_FACTOR * scene_diagonal
    corners = mesh.corners()
    if workers > 1 and len(views) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            cols = list(executor.map(lambda v: face_visibility(v, corners, resolution_scale, eps_z), views))
    else:
        cols = [face_visibility(v, corners, resolution_scale, eps_z) for v in views]
    visible = np.stack(cols, axis=1) if cols else np.zeros((len(mesh), 0), dtype=bool)
    return VisibilityTable(visible=visible, view_ids=[v.view_id for v in views])


# =============================
# Indicatori
# =============================

def face_gsd(face: int, mesh: SurfaceMesh, views: Sequence[ViewPose], table: VisibilityTable) -> Optional[float]:
    """min sulle viste visibili di sqrt(A / P); None se nessuna vista utile."""
    corners = mesh.corners()[face]
    area = 0.5 * float(np.linalg.norm(np.cross(corners[1] - corners[0], corners[2] - corners[0])))
    best = None
    for j in table.views_of(face):
        view = views[j]
        uv, _ = project_points(view, corners)
        p = clipped_polygon_area(uv, view.intrinsics.width, view.intrinsics.height)
        if p <= 0.0:
            continue
        g = math.sqrt(area / p)
        if best is None or g < best:
            best = g
    return best


def face_redundancy(face: int, table: VisibilityTable) -> int:
    return int(table.visible[face].sum())


def face_reproj_error(face: int, mesh: SurfaceMesh, views: Sequence[ViewPose], table: VisibilityTable,
                      measurements: Measurements) -> Optional[float]:
    """Media di |proiezione - misura| sulle coppie (vertice, vista visibile) con misura."""
    errors = []
    visible = table.views_of(face)
    for v in mesh.triangles[face]:
        obs = measurements.get(v)
        if not obs:
            continue
        point = mesh.points[v]
        for j in visible:
            view = views[j]
            m = obs.get(view.view_id)
            if m is None:
                continue
            uv, _ = project_points(view, point)
            errors.append(math.hypot(uv[0, 0] - m[0], uv[0, 1] - m[1]))
    if not errors:
        return None
    return float(np.mean(errors))


def compute_indicators(mesh: SurfaceMesh, views: Sequence[ViewPose], table: VisibilityTable,
                       measurements: Measurements) -> List[QualityRecord]:
    records = []
    for f in range(len(mesh)):
        r = face_redundancy(f, table)
        if r == 0:
            records.append(QualityRecord(f, None, 0, None))
            continue
        records.append(QualityRecord(
            face_id=f,
            gsd=face_gsd(f, mesh, views, table),
            redundancy=r,
            reproj_error=face_reproj_error(f, mesh, views, table, measurements),
        ))
    return records


# =============================
# Fusione
# =============================

def _components(record: QualityRecord,
                floor: float = INVERSE_FLOOR) -> Tuple[Optional[float], Optional[float], Optional[float]]:
    gsd_inv = None if record.gsd is None else 1.0 / max(record.gsd, floor)
    reproj_inv = None if record.reproj_error is None else 1.0 / max(record.reproj_error, floor)
    return gsd_inv, float(record.redundancy), reproj_inv


def _anchor(values: List[float], low: float, high: float) -> Tuple[float, float]:
    if not values:
        return (0.0, 0.0)
    arr = np.asarray(values, dtype=float)
    return float(np.percentile(arr, low)), float(np.percentile(arr, high))


def percentile_anchors(records: Sequence[QualityRecord], low: float = PERCENTILE_LOW, high: float = PERCENTILE_HIGH,
                       floor: float = INVERSE_FLOOR) -> QualityAnchors:
    """Percentili low / high (default P5 / P95) sulle facce osservate (R >= 1) con componente nota."""
    g, r, e = [], [], []
    for rec in records:
        if rec.redundancy < 1:
            continue
        gi, ri, ei = _components(rec, floor)
        if gi is not None:
            g.append(gi)
        r.append(ri)
        if ei is not None:
            e.append(ei)
    return QualityAnchors(_anchor(g, low, high), _anchor(r, low, high), _anchor(e, low, high))


def normalize(x: Optional[float], anchor: Tuple[float, float]) -> float:
    if x is None:
        return 0.0
    lo, hi = anchor
    if not hi > lo:
        return 0.5
    return min(1.0, max(0.0, (x - lo) / (hi - lo)))


def fuse_quality(records: Sequence[QualityRecord], weights: Tuple[float, float, float] = (W_GSD, W_REDUNDANCY, W_REPROJ),
                 anchors: Optional[QualityAnchors] = None, percentiles: Tuple[float, float] = (PERCENTILE_LOW, PERCENTILE_HIGH),
                 floor: float = INVERSE_FLOOR) -> List[QualityRecord]:
    """Q_total = w_gsd N(GSD^-1) + w_r N(R) + w_e N(E^-1); None per le facce mai viste."""
    if any(w < 0 for w in weights) or not math.isclose(sum(weights), 1.0, abs_tol=1e-9):
        raise ConfigError(f"pesi di qualita' non validi: {weights}")
    if anchors is None:
        anchors = percentile_anchors(records, *percentiles, floor=floor)
    w_g, w_r, w_e = weights
    out = []
    for rec in records:
        if rec.redundancy < 1:
            out.append(replace(rec, q_total=None))
            continue
        gi, ri, ei = _components(rec, floor)
        q = w_g * normalize(gi, anchors.gsd_inv) + w_r * normalize(ri, anchors.redundancy) + w_e * normalize(ei, anchors.reproj_inv)
        out.append(replace(rec, q_total=min(1.0, max(0.0, q))))
    return out


def assess_quality(mesh: SurfaceMesh, views: Sequence[ViewPose], measurements: Measurements, scene_diagonal: float,
                   resolution_scale: float = RESOLUTION_SCALE, weights: Tuple[float, float, float] = (W_GSD, W_REDUNDANCY, W_REPROJ),
                   anchors: Optional[QualityAnchors] = None, workers: int = 1,
                   depth_tolerance_factor: float = DEPTH_TOLERANCE_FACTOR,
                   percentiles: Tuple[float, float] = (PERCENTILE_LOW, PERCENTILE_HIGH),
                   floor: float = INVERSE_FLOOR) -> Tuple[List[QualityRecord], VisibilityTable]:
    """Visibilita' + indicatori + fusione per tutta la mesh."""
    if len(mesh) == 0:
        return [], VisibilityTable(np.zeros((0, len(views)), dtype=bool), [v.view_id for v in views])
    table = build_visibility(mesh, views, resolution_scale, depth_tolerance_factor * scene_diagonal, workers=workers)
    records = fuse_quality(compute_indicators(mesh, views, table, measurements), weights, anchors, percentiles, floor)
    seen = sum(1 for r in records if r.redundancy > 0)
    logger.info("📋 qualita': %d/%d facce osservate", seen, len(records))
    return records, table


def mean_quality(records: Sequence[QualityRecord]) -> float:
    if not records:
        return 0.0
    return float(np.mean([effective_quality(r) for r in records]))
