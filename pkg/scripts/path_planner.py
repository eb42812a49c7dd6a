# -*- coding: utf-8 -*-
"""
Pianificazione predittiva: dalle facce di bassa qualita' alla traiettoria.

  1. F_low = facce con Q <= tau (default: 25-esimo percentile)
  2. piano di base RANSAC (fallback: centri camera, poi piano orizzontale);
     da F_low escono le facce rivolte verso il suolo
  3. DBSCAN sui baricentri (eps = max(0.008 * D_scene, 1.5 * lato mediano),
     N_min adattivo)
  4. OBB allineato al piano, ridotto di alpha = 0.8
  5. raggi dal baricentro del cluster lungo le normali -> uscita dall'OBB,
     candidati a 0.5 / 0.75 / 1.0 della distanza di uscita, solo sopra il piano
  6. sparsificazione greedy farthest-point con distanza minima
  7. tour aperto: nearest-neighbor, poi 2-opt e or-opt sul costo
     C = |a - b| + 0.3 |delta quota| (quota lungo la normale del piano)

Tutta la casualita' passa da numpy Generator con seed esplicito.
"""
from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from loop_config import LoopConfig
from quality_assessor import QualityRecord, effective_quality
from recon_utils import (
    ALTITUDE_WEIGHT, CLUSTER_EDGE_FACTOR, CLUSTER_EPS_FACTOR, CLUSTER_MIN_FRACTION, CLUSTER_MIN_SIZE,
    MAX_SAMPLES_PER_CLUSTER, MIN_CLEARANCE_FACTOR, MIN_SPACING_FACTOR, OBB_ALPHA, OBB_INFLATE_FACTOR,
    RANSAC_DIST_FACTOR, RANSAC_ITERATIONS, RANSAC_MIN_INLIER_RATIO, SAMPLE_FRACTIONS, SPARSIFY_CAP,
    TAU_QUALITY_PERCENTILE, TWO_OPT_MAX_PASSES, UNDERSIDE_COS, adaptive_target, min_cluster_size,
    percentile_threshold,
)
from surface_extractor import SurfaceMesh

logger = logging.getLogger(__name__)

MESH_RANSAC, CAMERA_FALLBACK, DEFAULT_HORIZONTAL = "mesh-ransac", "camera-fallback", "default-horizontal"
IMPROVE_EPS = 1e-12


# =============================
# Tipi
# =============================

@dataclass(frozen=True)
class PlannerSettings:
    """Parametri del pianificatore; default da recon_utils."""
    tau: Optional[float] = None              # None -> percentile tau_percentile
    tau_percentile: float = TAU_QUALITY_PERCENTILE
    eps_factor: float = CLUSTER_EPS_FACTOR
    edge_factor: float = CLUSTER_EDGE_FACTOR
    min_cluster_size: int = CLUSTER_MIN_SIZE
    min_cluster_fraction: float = CLUSTER_MIN_FRACTION
    underside_cos: float = UNDERSIDE_COS
    ransac_dist_factor: float = RANSAC_DIST_FACTOR
    ransac_iterations: int = RANSAC_ITERATIONS
    ransac_min_inlier_ratio: float = RANSAC_MIN_INLIER_RATIO
    alpha: float = OBB_ALPHA
    obb_inflate_factor: float = OBB_INFLATE_FACTOR
    include_cameras_in_obb: bool = True
    max_samples: int = MAX_SAMPLES_PER_CLUSTER
    sample_fractions: Tuple[float, ...] = SAMPLE_FRACTIONS
    min_clearance_factor: float = MIN_CLEARANCE_FACTOR
    cap: int = SPARSIFY_CAP
    min_spacing_factor: float = MIN_SPACING_FACTOR
    altitude_weight: float = ALTITUDE_WEIGHT
    two_opt_max_passes: int = TWO_OPT_MAX_PASSES

    @classmethod
    def from_config(cls, config: LoopConfig) -> "PlannerSettings":
        return cls(
            tau=config.tau_quality, tau_percentile=config.tau_percentile,
            eps_factor=config.cluster_eps_factor, edge_factor=config.cluster_edge_factor,
            min_cluster_size=config.cluster_min_size, min_cluster_fraction=config.cluster_min_fraction,
            underside_cos=config.underside_cos, ransac_dist_factor=config.ransac_dist_factor,
            ransac_iterations=config.ransac_iterations, ransac_min_inlier_ratio=config.ransac_min_inlier_ratio,
            alpha=config.obb_alpha, obb_inflate_factor=config.obb_inflate_factor,
            max_samples=config.max_samples_per_cluster, sample_fractions=config.sample_fractions,
            min_clearance_factor=config.min_clearance_factor, cap=config.sparsify_cap,
            min_spacing_factor=config.min_spacing_factor, altitude_weight=config.altitude_weight,
            two_opt_max_passes=config.two_opt_max_passes,
        )


@dataclass(frozen=True)
class LowQualityCluster:
    cluster_id: int
    members: Tuple[int, ...]
    centroid: np.ndarray
    weights: np.ndarray          # deficit max(0, tau - Q) per membro


@dataclass(frozen=True)
class BasePlane:
    normal: np.ndarray
    point: np.ndarray
    provenance: str
    inlier_ratio: float = 0.0

    def altitude(self, p) -> float:
        return float(np.dot(np.asarray(p, dtype=float) - self.point, self.normal))


@dataclass(frozen=True)
class OrientedBox:
    origin: np.ndarray
    frame: np.ndarray            # righe u, v, n
    lo: np.ndarray
    hi: np.ndarray

    @property
    def extents(self) -> np.ndarray:
        return self.hi - self.lo

    def to_local(self, p) -> np.ndarray:
        return (np.asarray(p, dtype=float) - self.origin) @ self.frame.T

    def to_world(self, q) -> np.ndarray:
        return self.origin + np.asarray(q, dtype=float) @ self.frame

    def contains(self, p, tol: float = 1e-9) -> bool:
        q = self.to_local(p)
        slack = tol * max(1.0, float(np.max(np.abs(self.extents))))
        return bool(np.all(q >= self.lo - slack) and np.all(q <= self.hi + slack))


@dataclass(frozen=True)
class Candidate:
    position: np.ndarray
    look_at: np.ndarray
    cluster_id: int = -1
    face_id: int = -1


@dataclass(frozen=True)
class Waypoint:
    position: Tuple[float, float, float]
    look_at: Tuple[float, float, float]


@dataclass(frozen=True)
class Trajectory:
    waypoints: Tuple[Waypoint, ...]
    cost: float

    def __len__(self) -> int:
        return len(self.waypoints)

    def length(self) -> float:
        pts = [np.asarray(w.position) for w in self.waypoints]
        return float(sum(np.linalg.norm(b - a) for a, b in zip(pts, pts[1:])))


@dataclass
class PlanResult:
    tau: float
    low_faces: List[int]
    clusters: List[LowQualityCluster]
    plane: BasePlane
    obb: Optional[OrientedBox]
    candidates: List[Candidate]
    selected: List[Candidate]
    trajectory: Trajectory
    generation_ms: float = 0.0
    stats: Dict[str, int] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return not self.selected


# =============================
# Facce di bassa qualita' + cluster
# =============================

def detect_low_quality(records: Sequence[QualityRecord], tau: Optional[float] = None,
                       percentile: float = TAU_QUALITY_PERCENTILE) -> Tuple[List[int], float]:
    """(facce con Q <= tau, tau usato). tau None -> percentile delle qualita'."""
    if not records:
        return [], 0.0 if tau is None else tau
    q = [effective_quality(r) for r in records]
    if tau is None:
        tau = percentile_threshold(q, percentile)
    return [r.face_id for r, v in zip(records, q) if v <= tau], tau


def dbscan(points: np.ndarray, eps: float, n_min: int) -> np.ndarray:
    """
    Etichette DBSCAN (-1 = rumore). Il vicinato include il punto stesso; i
    punti di bordo vanno al primo cluster che li raggiunge (ordine degli indici).
    """
    n = len(points)
    labels = np.full(n, -1, dtype=int)
    if n == 0:
        return labels
    neighbors = cKDTree(points).query_ball_point(points, eps)
    core = np.array([len(nb) >= n_min for nb in neighbors])
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster
        queue = deque(sorted(neighbors[i]))
        while queue:
            j = queue.popleft()
            if labels[j] != -1:
                continue
            labels[j] = cluster
            if core[j]:
                queue.extend(sorted(neighbors[j]))
        cluster += 1
    return labels


def cluster_faces(low_faces: Sequence[int], centroids: np.ndarray, d_scene: float,
                  records: Optional[Sequence[QualityRecord]] = None, tau: float = 0.0,
                  eps_factor: float = CLUSTER_EPS_FACTOR, eps_floor: float = 0.0,
                  min_size: int = CLUSTER_MIN_SIZE,
                  min_fraction: float = CLUSTER_MIN_FRACTION) -> List[LowQualityCluster]:
    """DBSCAN con eps = max(eps_factor * D_scene, eps_floor)."""
    ids = sorted(low_faces)
    n_min = min_cluster_size(len(ids), min_size, min_fraction)
    if len(ids) < n_min:
        return []
    pts = np.asarray(centroids, dtype=float)[ids]
    eps = max(eps_factor * d_scene, eps_floor)
    labels = dbscan(pts, eps, n_min)
    quality = {r.face_id: effective_quality(r) for r in records} if records else {}
    clusters = []
    for k in range(labels.max() + 1 if len(labels) else 0):
        idx = np.flatnonzero(labels == k)
        members = tuple(ids[i] for i in idx)
        w = np.array([max(0.0, tau - quality.get(f, 0.0)) for f in members])
        clusters.append(LowQualityCluster(k, members, pts[idx].mean(axis=0), w))
    logger.debug("📋 %d cluster da %d facce (eps=%.4g, n_min=%d)", len(clusters), len(ids), eps, n_min)
    return clusters


# =============================
# Piano di base + OBB
# =============================

def _orient_up(n: np.ndarray) -> np.ndarray:
    for c in (n[2], n[1], n[0]):
        if c != 0.0:
            return n if c > 0 else -n
    return n


def _lsq_plane(points: np.ndarray) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Piano ai minimi quadrati (normale, baricentro); None se i punti sono allineati."""
    if len(points) < 3:
        return None
    c = points.mean(axis=0)
    _, s, vt = np.linalg.svd(points - c)
    if s[0] == 0.0 or s[1] <= 1e-12 * s[0]:
        return None
    n = vt[2] / np.linalg.norm(vt[2])
    return _orient_up(n), c


def fit_base_plane(vertices: np.ndarray, cameras: np.ndarray, eps_dist: float,
                   n_iter: int = RANSAC_ITERATIONS, seed: int = 0,
                   min_inlier_ratio: float = RANSAC_MIN_INLIER_RATIO) -> BasePlane:
    verts = np.asarray(vertices, dtype=float).reshape(-1, 3)
    cams = np.asarray(cameras, dtype=float).reshape(-1, 3)
    if len(verts) >= 3:
        rng = np.random.default_rng(seed)
        best: Optional[np.ndarray] = None
        for _ in range(n_iter):
            a, b, c = verts[rng.choice(len(verts), size=3, replace=False)]
            n = np.cross(b - a, c - a)
            length = np.linalg.norm(n)
            if length == 0.0:
                continue
            inliers = np.abs((verts - a) @ (n / length)) <= eps_dist
            if best is None or inliers.sum() > best.sum():
                best = inliers
        if best is not None and best.sum() / len(verts) >= min_inlier_ratio:
            fit = _lsq_plane(verts[best])
            if fit is not None:
                return BasePlane(fit[0], fit[1], MESH_RANSAC, float(best.sum() / len(verts)))
    fit = _lsq_plane(cams)
    if fit is not None:
        logger.info("⚠️ piano di base dai centri camera")
        return BasePlane(fit[0], fit[1], CAMERA_FALLBACK)
    everything = np.vstack([verts, cams]) if len(verts) or len(cams) else np.zeros((1, 3))
    logger.info("⚠️ piano di base orizzontale di default")
    return BasePlane(np.array([0.0, 0.0, 1.0]), everything.mean(axis=0), DEFAULT_HORIZONTAL)


def build_obb(vertices: np.ndarray, plane: BasePlane, alpha: float = OBB_ALPHA,
              extra_points: Optional[np.ndarray] = None, d_scene: float = 0.0,
              inflate_factor: float = OBB_INFLATE_FACTOR) -> OrientedBox:
    pts = np.asarray(vertices, dtype=float).reshape(-1, 3)
    if extra_points is not None and len(extra_points):
        pts = np.vstack([pts, np.asarray(extra_points, dtype=float).reshape(-1, 3)])
    if len(pts) == 0:
        raise ValueError("build_obb senza punti")
    n = plane.normal / np.linalg.norm(plane.normal)
    center = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
    origin = center - np.dot(center - plane.point, n) * n
    axis = np.eye(3)[int(np.argmin(np.abs(n)))]
    u = np.cross(axis, n)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    frame = np.vstack([u, v, n])
    local = (pts - origin) @ frame.T
    lo, hi = local.min(axis=0), local.max(axis=0)
    mid, half = 0.5 * (lo + hi), 0.5 * alpha * (hi - lo)
    min_extent = inflate_factor * (d_scene if d_scene > 0 else 1.0)
    half = np.maximum(half, 0.5 * min_extent)
    return OrientedBox(origin=origin, frame=frame, lo=mid - half, hi=mid + half)


# =============================
# Viewpoint
# =============================

def ray_box_exit(obb: OrientedBox, origin, direction) -> Optional[float]:
    """Slab test: parametro di uscita t_far (> 0) oppure None se il raggio manca il box."""
    o = obb.to_local(origin)
    d = np.asarray(direction, dtype=float) @ obb.frame.T
    t_near, t_far = -math.inf, math.inf
    for k in range(3):
        if abs(d[k]) < 1e-15:
            if o[k] < obb.lo[k] or o[k] > obb.hi[k]:
                return None
            continue
        t1 = (obb.lo[k] - o[k]) / d[k]
        t2 = (obb.hi[k] - o[k]) / d[k]
        t_near = max(t_near, min(t1, t2))
        t_far = min(t_far, max(t1, t2))
    if t_near > t_far or t_far <= 0.0:
        return None
    return float(t_far)


def generate_viewpoints(clusters: Sequence[LowQualityCluster], mesh: SurfaceMesh, obb: OrientedBox,
                        seed: int = 0, max_samples: int = MAX_SAMPLES_PER_CLUSTER,
                        fractions: Sequence[float] = SAMPLE_FRACTIONS, plane: Optional[BasePlane] = None,
                        clearance: float = 0.0) -> List[Candidate]:
    """
    Candidati lungo le normali delle facce del cluster; con plane vengono
    scartati quelli a quota <= clearance sul piano di base.
    """
    normals = mesh.normals()
    out: List[Candidate] = []
    for cluster in clusters:
        members = np.asarray(cluster.members, dtype=int)
        if len(members) > max_samples:
            rng = np.random.default_rng([seed, cluster.cluster_id])
            w = np.asarray(cluster.weights, dtype=float)
            if np.count_nonzero(w) >= max_samples:
                members = rng.choice(members, size=max_samples, replace=False, p=w / w.sum())
            else:
                members = rng.choice(members, size=max_samples, replace=False)
            members = np.sort(members)
        before = len(out)
        for f in members:
            n = normals[f]
            if not np.any(n):
                continue
            t_hit = ray_box_exit(obb, cluster.centroid, n)
            if t_hit is None:
                continue
            for frac in fractions:
                pos = cluster.centroid + frac * t_hit * n
                if not obb.contains(pos):
                    continue
                if plane is not None and plane.altitude(pos) <= clearance:
                    continue
                out.append(Candidate(pos, cluster.centroid.copy(), cluster.cluster_id, int(f)))
        if len(out) == before:
            logger.info("⚠️ cluster %d: nessun candidato nell'OBB sopra il piano", cluster.cluster_id)
    return out


def sparsify(candidates: Sequence[Candidate], d_scene: float, cap: int = SPARSIFY_CAP,
             min_spacing_factor: float = MIN_SPACING_FACTOR) -> List[Candidate]:
    """Selezione greedy farthest-point dal candidato piu' vicino al baricentro."""
    if not candidates:
        return []
    pts = np.array([c.position for c in candidates], dtype=float)
    target = adaptive_target(len(pts), cap)
    d_min = min_spacing_factor * d_scene
    first = int(np.argmin(np.linalg.norm(pts - pts.mean(axis=0), axis=1)))
    chosen = [first]
    dist = np.linalg.norm(pts - pts[first], axis=1)
    dist[first] = -np.inf
    while len(chosen) < target:
        j = int(np.argmax(dist))
        if not np.isfinite(dist[j]) or dist[j] < d_min or (d_min <= 0.0 and dist[j] == 0.0):
            break
        chosen.append(j)
        dist = np.minimum(dist, np.linalg.norm(pts - pts[j], axis=1))
        dist[chosen] = -np.inf
    return [candidates[k] for k in chosen]


# =============================
# Traiettoria
# =============================

def travel_cost(a, b, normal, altitude_weight: float = ALTITUDE_WEIGHT) -> float:
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    return float(np.linalg.norm(d) + altitude_weight * abs(np.dot(d, normal)))


def path_cost(order: Sequence[int], cost: np.ndarray) -> float:
    return float(sum(cost[a, b] for a, b in zip(order, order[1:])))


def nearest_neighbor_order(cost: np.ndarray) -> List[int]:
    n = len(cost)
    order = [0]
    left = set(range(1, n))
    while left:
        last = order[-1]
        nxt = min(left, key=lambda j: (cost[last, j], j))
        order.append(nxt)
        left.remove(nxt)
    return order


def two_opt(order: List[int], cost: np.ndarray, max_passes: int = TWO_OPT_MAX_PASSES) -> Tuple[List[int], int]:
    """2-opt first-improvement su percorso aperto con partenza fissa (indice 0)."""
    order = list(order)
    n = len(order)
    passes = 0
    improved = True
    while improved and passes < max_passes:
        improved = False
        passes += 1
        for i in range(1, n - 1):
            for j in range(i + 1, n):
                a, b = order[i - 1], order[i]
                c = order[j]
                delta = cost[a, c] - cost[a, b]
                if j + 1 < n:
                    d = order[j + 1]
                    delta += cost[b, d] - cost[c, d]
                if delta < -IMPROVE_EPS:
                    order[i:j + 1] = order[i:j + 1][::-1]
                    improved = True
                    break
            if improved:
                break
    return order, passes


def or_opt(order: List[int], cost: np.ndarray, max_segment: int = 3) -> Tuple[List[int], bool]:
    """Spostamento (anche invertito) di un segmento di 1..3 nodi; primo miglioramento."""
    order = list(order)
    n = len(order)
    for seg in range(1, max_segment + 1):
        for i in range(1, n - seg + 1):
            s0, s1 = order[i], order[i + seg - 1]
            p = order[i - 1]
            q = order[i + seg] if i + seg < n else None
            removed = cost[p, s0] + (cost[s1, q] - cost[p, q] if q is not None else 0.0)
            rest = order[:i] + order[i + seg:]
            for k in range(1, len(rest) + 1):
                a = rest[k - 1]
                b = rest[k] if k < len(rest) else None
                for first, last, flip in ((s0, s1, False), (s1, s0, True)):
                    if k == i and not flip:
                        continue
                    added = cost[a, first] + (cost[last, b] - cost[a, b] if b is not None else 0.0)
                    if added - removed < -IMPROVE_EPS:
                        piece = order[i:i + seg]
                        return rest[:k] + (piece[::-1] if flip else piece) + rest[k:], True
    return order, False


def optimize_trajectory(selected: Sequence[Candidate], start, normal=(0.0, 0.0, 1.0),
                        max_passes: int = TWO_OPT_MAX_PASSES, refine: bool = True,
                        altitude_weight: float = ALTITUDE_WEIGHT) -> Trajectory:
    """
    Tour aperto da start su tutti i viewpoint: nearest-neighbor sul costo C,
    poi 2-opt (e or-opt se refine) fino a nessun miglioramento.
    """
    start = np.asarray(start, dtype=float)
    normal = np.asarray(normal, dtype=float)
    views = [c for c in selected if np.linalg.norm(np.asarray(c.position) - start) > 0.0]
    if not views:
        return Trajectory((), 0.0)
    pts = [start] + [np.asarray(c.position, dtype=float) for c in views]
    n = len(pts)
    cost = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            cost[i, j] = cost[j, i] = travel_cost(pts[i], pts[j], normal, altitude_weight)

    order = nearest_neighbor_order(cost)
    passes = 0
    while True:
        order, used = two_opt(order, cost, max_passes - passes)
        passes += used
        if not refine or passes >= max_passes:
            break
        order, moved = or_opt(order, cost)
        if not moved:
            break

    first_look = tuple(float(x) for x in views[order[1] - 1].look_at)
    waypoints = [Waypoint(tuple(float(x) for x in start), first_look)]
    for k in order[1:]:
        c = views[k - 1]
        waypoints.append(Waypoint(tuple(float(x) for x in c.position), tuple(float(x) for x in c.look_at)))
    return Trajectory(tuple(waypoints), path_cost(order, cost))


# =============================
# Piano completo
# =============================

def drop_undersides(faces: Sequence[int], normals: np.ndarray, plane: BasePlane,
                    cos_limit: float = UNDERSIDE_COS) -> List[int]:
    """Facce la cui normale non guarda il piano di base (n . n_piano >= -cos_limit)."""
    up = plane.normal / np.linalg.norm(plane.normal)
    return [f for f in faces if float(np.dot(normals[f], up)) >= -cos_limit]


def plan(mesh: SurfaceMesh, records: Sequence[QualityRecord], cameras: np.ndarray, start, d_scene: float,
         settings: PlannerSettings = PlannerSettings(), seed: int = 0) -> PlanResult:
    s = settings
    t0 = time.perf_counter()
    low, tau_used = detect_low_quality(records, s.tau, s.tau_percentile)
    used = mesh.used_vertices()
    verts = mesh.points[used] if used else np.zeros((0, 3))
    cams = np.asarray(cameras, dtype=float).reshape(-1, 3)
    plane = fit_base_plane(verts, cams, s.ransac_dist_factor * d_scene, s.ransac_iterations, seed,
                           s.ransac_min_inlier_ratio)
    # il lato inferiore dell'inviluppo non si riprende dall'alto
    targets = drop_undersides(low, mesh.normals(), plane, s.underside_cos) if low else []
    clusters = cluster_faces(targets, mesh.centroids(), d_scene, records, tau_used, s.eps_factor,
                             s.edge_factor * mesh.median_edge_length(), s.min_cluster_size, s.min_cluster_fraction)

    obb = None
    candidates: List[Candidate] = []
    selected: List[Candidate] = []
    if clusters and (len(verts) or len(cams)):
        base = verts if len(verts) else cams
        obb = build_obb(base, plane, s.alpha, cams if s.include_cameras_in_obb else None, d_scene,
                        s.obb_inflate_factor)
        candidates = generate_viewpoints(clusters, mesh, obb, seed, s.max_samples, s.sample_fractions,
                                         plane, s.min_clearance_factor * d_scene)
        selected = sparsify(candidates, d_scene, s.cap, s.min_spacing_factor)
    trajectory = optimize_trajectory(selected, start, plane.normal, s.two_opt_max_passes,
                                     altitude_weight=s.altitude_weight)
    ms = (time.perf_counter() - t0) * 1000.0
    logger.info("✅ piano: %d facce basse (%d verso il suolo), %d cluster, %d candidati, %d viewpoint (%.1f ms)",
                len(low), len(low) - len(targets), len(clusters), len(candidates), len(selected), ms)
    return PlanResult(
        tau=tau_used, low_faces=low, clusters=clusters, plane=plane, obb=obb,
        candidates=candidates, selected=selected, trajectory=trajectory, generation_ms=ms,
        stats={"low_faces": len(low), "undersides": len(low) - len(targets), "clusters": len(clusters),
               "candidates": len(candidates)},
    )


def trajectory_summary(result: PlanResult, include_timing: bool = True) -> dict:
    """JSON della traiettoria: waypoint + riepilogo (viewpoint_count, total_length, generation_ms)."""
    summary = {
        "viewpoint_count": len(result.selected),
        "total_length": result.trajectory.length(),
        "total_cost": result.trajectory.cost,
        "generation_ms": result.generation_ms if include_timing else None,
    }
    return {
        "waypoints": [{"position": list(w.position), "look_at": list(w.look_at)} for w in result.trajectory.waypoints],
        "summary": summary,
    }
