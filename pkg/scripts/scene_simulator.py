# -*- coding: utf-8 -*-
"""
Simulatore della parte SfM: scena sintetica (edifici su terreno), voli lungo
traiettorie e generazione dei batch (pose + tracce sparse rumorose).

- Scena deterministica dal seed: terreno a griglia con rilievo sinusoidale,
  edifici di tre tipi (blocco, sbalzo, corte interna) per avere occlusioni.
- Landmark campionati una volta sola sulla superficie visibile con densita'
  FEATURE_DENSITY; l'associazione tra viste avviene per id del landmark.
- Le osservazioni di un landmark visto da una sola vista restano in attesa
  finche' non arriva la seconda (ogni traccia emessa ha >= 2 viste).
- Misure 2D = proiezione esatta + N(0, sigma_px^2); posizione 3D = verita'
  (+ rumore opzionale sigma_3d fissato alla creazione del landmark).
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from batch_io import Observation, ObservationBatch, SparseTrack
from geometry_core import Intrinsics, Point3, ViewPose, look_at, project_points
from mesh_io import write_ply
from path_planner import Trajectory, Waypoint, travel_cost
from raster import point_visibility, render_depth
from recon_errors import ConfigError, GeometryError
from recon_utils import (
    BUILDING_COUNT, CIRCLE_HEIGHTS, CIRCLE_RADIUS, CIRCLE_STEP_DEG, FEATURE_DENSITY, FOCAL_PX,
    GROUND_CELLS, GROUND_RELIEF, GT_SAMPLE_DENSITY, IMAGE_HEIGHT, IMAGE_WIDTH, NADIR_ALTITUDE,
    NADIR_COVERAGE, NADIR_SPACING, SCENE_EXTENT, SIGMA_3D, SIGMA_PX, SIM_DEPTH_TOLERANCE_FACTOR,
    SIM_RESOLUTION_SCALE,
)

logger = logging.getLogger(__name__)

# quadrilateri del box (angolo i = bx + 2 by + 4 bz), antiorari visti da fuori
_BOX_QUADS = ((0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5))
HIDDEN_TOL = 1e-7


@dataclass(frozen=True)
class Ground:
    """
    Terreno a griglia: quote dei nodi da a sin(2 pi fx x / L + px) cos(2 pi fy y / L + py),
    superficie lineare a tratti sui due triangoli di ogni cella.
    """

    extent: float
    amplitude: float
    fx: int
    fy: int
    px: float
    py: float
    cells: int = GROUND_CELLS

    def relief(self, x, y):
        k = 2.0 * math.pi / self.extent
        return self.amplitude * np.sin(k * self.fx * np.asarray(x) + self.px) * np.cos(k * self.fy * np.asarray(y) + self.py)

    def nodes(self) -> np.ndarray:
        return np.linspace(-0.5 * self.extent, 0.5 * self.extent, self.cells + 1)

    def height(self, x, y):
        """Quota della mesh del terreno (fuori dall'estensione: cella di bordo)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        step = self.extent / self.cells
        i = np.clip(np.floor((x + 0.5 * self.extent) / step).astype(int), 0, self.cells - 1)
        j = np.clip(np.floor((y + 0.5 * self.extent) / step).astype(int), 0, self.cells - 1)
        nodes = self.nodes()
        s = (x - nodes[i]) / step
        t = (y - nodes[j]) / step
        z00 = self.relief(nodes[i], nodes[j])
        z10 = self.relief(nodes[i + 1], nodes[j])
        z01 = self.relief(nodes[i], nodes[j + 1])
        z11 = self.relief(nodes[i + 1], nodes[j + 1])
        lower = z00 + s * (z10 - z00) + t * (z11 - z10)
        upper = z00 + t * (z01 - z00) + s * (z11 - z01)
        return np.where(s >= t, lower, upper)


@dataclass
class SyntheticScene:
    seed: int
    ground: Ground
    boxes: List[Tuple[np.ndarray, np.ndarray]]
    vertices: np.ndarray
    triangles: np.ndarray
    truth_points: np.ndarray
    landmarks: np.ndarray
    landmark_normals: np.ndarray
    diagonal: float
    building_kinds: List[str] = field(default_factory=list)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.vertices.min(axis=0) + self.vertices.max(axis=0))

    @property
    def radius(self) -> float:
        return 0.5 * self.diagonal

    def hidden(self, points: np.ndarray) -> np.ndarray:
        """Punti sotto il terreno o dentro un edificio."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        out = pts[:, 2] < self.ground.height(pts[:, 0], pts[:, 1]) - HIDDEN_TOL
        for lo, hi in self.boxes:
            out |= np.all((pts > lo + HIDDEN_TOL) & (pts < hi - HIDDEN_TOL), axis=1)
        return out

    def below_surface(self, p: Sequence[float]) -> bool:
        return bool(self.hidden(np.asarray(p, dtype=float))[0])


# =============================
# Generazione
# =============================

def _box_mesh(lo: np.ndarray, hi: np.ndarray, offset: int) -> Tuple[np.ndarray, List[Tuple[int, int, int]]]:
    corners = np.array([[(hi if (i >> k) & 1 else lo)[k] for k in range(3)] for i in range(8)], dtype=float)
    tris = []
    for a, b, c, d in _BOX_QUADS:
        tris.append((offset + a, offset + b, offset + c))
        tris.append((offset + a, offset + c, offset + d))
    return corners, tris


def _ground_mesh(ground: Ground) -> Tuple[np.ndarray, List[Tuple[int, int, int]]]:
    cells = ground.cells
    xs = ground.nodes()
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    verts = np.stack([gx.ravel(), gy.ravel(), ground.relief(gx, gy).ravel()], axis=1)
    tris = []
    for i in range(cells):
        for j in range(cells):
            v00, v10 = i * (cells + 1) + j, (i + 1) * (cells + 1) + j
            v01, v11 = v00 + 1, v10 + 1
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return verts, tris


def _building_boxes(kind: str, cx: float, cy: float, size: float, height: float, base: float):
    h = 0.5 * size
    if kind == "overhang":
        p = 0.25 * size
        return [
            (np.array([cx - p, cy - p, base]), np.array([cx + p, cy + p, base + 0.65 * height])),
            (np.array([cx - h, cy - h, base + 0.6 * height]), np.array([cx + h, cy + h, base + height])),
        ]
    if kind == "courtyard":
        # quattro angoli + quattro lati: le facce di contatto coincidono per intero
        t = 0.2 * size
        xs = (cx - h, cx - h + t, cx + h - t, cx + h)
        ys = (cy - h, cy - h + t, cy + h - t, cy + h)
        return [
            (np.array([xs[i], ys[j], base]), np.array([xs[i + 1], ys[j + 1], base + height]))
            for i in range(3) for j in range(3) if (i, j) != (1, 1)
        ]
    return [(np.array([cx - h, cy - h, base]), np.array([cx + h, cy + h, base + height]))]


def _shared_face(corners: np.ndarray, boxes: Sequence[Tuple[np.ndarray, np.ndarray]], owner: int,
                 eps: float) -> bool:
    """Triangolo interamente coperto da un altro box: spostato appena fuori, tutti i vertici restano dentro."""
    normal = np.cross(corners[1] - corners[0], corners[2] - corners[0])
    outside = corners + eps * normal / np.linalg.norm(normal)
    return any(
        k != owner and bool(np.all((outside >= lo - HIDDEN_TOL) & (outside <= hi + HIDDEN_TOL)))
        for k, (lo, hi) in enumerate(boxes)
    )


def sample_surface(vertices: np.ndarray, triangles: np.ndarray, density: float,
                   rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Campionamento uniforme in area: ceil(density * area) punti, (punti, indice faccia)."""
    tris = np.asarray(triangles, dtype=int).reshape(-1, 3)
    if len(tris) == 0 or density <= 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=int)
    c = np.asarray(vertices, dtype=float)[tris]
    areas = 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)
    total = float(areas.sum())
    if total <= 0.0:
        return np.zeros((0, 3)), np.zeros(0, dtype=int)
    n = int(math.ceil(density * total))
    faces = rng.choice(len(tris), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, cc = c[faces, 0], c[faces, 1], c[faces, 2]
    pts = (1.0 - r1)[:, None] * a + (r1 * (1.0 - r2))[:, None] * b + (r1 * r2)[:, None] * cc
    return pts, faces


def generate_scene(seed: int = 0, extent: float = SCENE_EXTENT, building_count: int = BUILDING_COUNT,
                   feature_density: float = FEATURE_DENSITY, gt_density: float = GT_SAMPLE_DENSITY,
                   sigma_3d: float = SIGMA_3D, ground_cells: int = GROUND_CELLS) -> SyntheticScene:
    if not extent > 0:
        raise ConfigError(f"extent della scena non positivo: {extent}")
    if building_count < 0:
        raise ConfigError(f"numero di edifici negativo: {building_count}")
    rng = np.random.default_rng(seed)
    ground = Ground(
        extent=extent, amplitude=GROUND_RELIEF * extent,
        fx=int(rng.integers(1, 3)), fy=int(rng.integers(1, 3)),
        px=float(rng.uniform(0, 2 * math.pi)), py=float(rng.uniform(0, 2 * math.pi)), cells=ground_cells,
    )
    base = -ground.amplitude - 0.01 * extent

    placed: List[Tuple[float, float, float]] = []
    kinds: List[str] = []
    boxes: List[Tuple[np.ndarray, np.ndarray]] = []
    for b in range(building_count):
        kind = ("block", "overhang", "courtyard")[b % 3]
        for _ in range(200):
            size = float(rng.uniform(0.12, 0.2)) * extent
            cx, cy = (float(v) for v in rng.uniform(-0.22, 0.22, size=2) * extent)
            gap = 0.02 * extent
            if all(abs(cx - x) >= 0.5 * (size + s) + gap or abs(cy - y) >= 0.5 * (size + s) + gap for x, y, s in placed):
                break
        else:
            logger.warning("⚠️ edificio %d non posizionabile: scena con %d edifici", b, len(placed))
            break
        height = float(rng.uniform(0.1, 0.25)) * extent
        placed.append((cx, cy, size))
        kinds.append(kind)
        boxes.extend(_building_boxes(kind, cx, cy, size, height, base))

    verts, tris = _ground_mesh(ground)
    all_verts, all_tris = [verts], list(tris)
    offset = len(verts)
    shared = 0
    for k, (lo, hi) in enumerate(boxes):
        corners, bt = _box_mesh(lo, hi, offset)
        all_verts.append(corners)
        for tri in bt:
            if _shared_face(corners[[v - offset for v in tri]], boxes, k, 1e-6 * extent):
                shared += 1
                continue
            all_tris.append(tri)
        offset += 8
    if shared:
        logger.debug("📋 %d triangoli di contatto tra box esclusi", shared)
    vertices = np.vstack(all_verts)
    triangles = np.array(all_tris, dtype=int)
    scene = SyntheticScene(
        seed=seed, ground=ground, boxes=boxes, vertices=vertices, triangles=triangles,
        truth_points=np.zeros((0, 3)), landmarks=np.zeros((0, 3)), landmark_normals=np.zeros((0, 3)),
        diagonal=float(np.linalg.norm(vertices.max(axis=0) - vertices.min(axis=0))), building_kinds=kinds,
    )

    truth, _ = sample_surface(vertices, triangles, gt_density, rng)
    scene.truth_points = truth[~scene.hidden(truth)]

    lm, lm_faces = sample_surface(vertices, triangles, feature_density, rng)
    keep = ~scene.hidden(lm)
    c = vertices[triangles[lm_faces[keep]]]
    normals = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    landmarks = lm[keep]
    if sigma_3d > 0:
        landmarks = landmarks + rng.normal(0.0, sigma_3d, size=landmarks.shape)
    scene.landmarks, scene.landmark_normals = landmarks, normals
    logger.info("✅ scena seed=%d: %d edifici, %d triangoli, %d landmark, %d punti GT",
                seed, len(kinds), len(triangles), len(landmarks), len(scene.truth_points))
    return scene


def write_scene_ply(path: Path, scene: SyntheticScene) -> None:
    write_ply(path, scene.vertices, scene.triangles)


# =============================
# Cattura
# =============================

def default_intrinsics() -> Intrinsics:
    return Intrinsics(focal=FOCAL_PX, cx=0.5 * IMAGE_WIDTH, cy=0.5 * IMAGE_HEIGHT, width=IMAGE_WIDTH, height=IMAGE_HEIGHT)


class SceneCapture:
    """Stato della cattura tra un batch e l'altro: id delle viste e osservazioni in attesa."""

    def __init__(self, scene: SyntheticScene, sigma_px: float = SIGMA_PX, seed: int = 0,
                 intrinsics: Optional[Intrinsics] = None, resolution_scale: float = SIM_RESOLUTION_SCALE,
                 eps_z: Optional[float] = None, workers: int = 1):
        if sigma_px < 0:
            raise ConfigError(f"sigma_px negativo: {sigma_px}")
        self.scene = scene
        self.sigma_px = sigma_px
        self.rng = np.random.default_rng(seed)
        self.intrinsics = intrinsics or default_intrinsics()
        self.resolution_scale = resolution_scale
        self.eps_z = SIM_DEPTH_TOLERANCE_FACTOR * scene.diagonal if eps_z is None else eps_z
        self.workers = workers
        self.corners = scene.vertices[scene.triangles]
        self.next_view_id = 0
        self.next_batch_id = 0
        self.pending: Dict[int, List[Observation]] = {}
        self.emitted: Set[int] = set()

    def visible_landmarks(self, view: ViewPose) -> np.ndarray:
        render = render_depth(view, self.corners, self.resolution_scale)
        mask = point_visibility(view, self.scene.landmarks, self.scene.landmark_normals, render, self.eps_z)
        return np.flatnonzero(mask)

    def _poses(self, waypoints: Sequence[Waypoint]) -> List[ViewPose]:
        views = []
        for w in waypoints:
            if self.scene.below_surface(w.position):
                logger.warning("⚠️ waypoint %s sotto la superficie: vista saltata", w.position)
                continue
            try:
                view = look_at(self.next_view_id, w.position, w.look_at, self.intrinsics)
            except GeometryError as e:
                logger.warning("⚠️ waypoint %s: %s", w.position, e)
                continue
            views.append(view)
            self.next_view_id += 1
        return views

    def capture(self, waypoints: Sequence[Waypoint]) -> ObservationBatch:
        views = self._poses(waypoints)
        if self.workers > 1 and len(views) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as executor:
                seen = list(executor.map(self.visible_landmarks, views))
        else:
            seen = [self.visible_landmarks(v) for v in views]

        for view, ids in zip(views, seen):
            uv, _ = project_points(view, self.scene.landmarks[ids])
            noise = self.rng.normal(0.0, self.sigma_px, size=uv.shape) if self.sigma_px > 0 else 0.0
            uv = uv + noise
            for lid, (u, v) in zip(ids, uv):
                self.pending.setdefault(int(lid), []).append((view.view_id, float(u), float(v)))

        tracks = []
        for lid in sorted(self.pending):
            obs = self.pending[lid]
            if lid not in self.emitted and len(obs) < 2:
                continue
            p = self.scene.landmarks[lid]
            tracks.append(SparseTrack(lid, Point3(float(p[0]), float(p[1]), float(p[2])), tuple(obs)))
            self.emitted.add(lid)
        for t in tracks:
            del self.pending[t.track_id]

        batch = ObservationBatch(batch_id=self.next_batch_id, views=tuple(views), tracks=tuple(tracks))
        self.next_batch_id += 1
        logger.info("📋 batch %d: %d viste, %d tracce (%d in attesa)",
                    batch.batch_id, len(views), len(tracks), len(self.pending))
        return batch


def capture(scene: SyntheticScene, waypoints: Sequence[Waypoint], sigma_px: float = SIGMA_PX,
            seed: int = 0) -> ObservationBatch:
    """Cattura singola (senza stato tra batch)."""
    return SceneCapture(scene, sigma_px, seed).capture(waypoints)


# =============================
# Traiettorie di riferimento
# =============================

def _trajectory(points: Sequence[np.ndarray], targets: Sequence[np.ndarray]) -> Trajectory:
    up = np.array([0.0, 0.0, 1.0])
    wps = tuple(
        Waypoint(tuple(float(x) for x in p), tuple(float(x) for x in t))
        for p, t in zip(points, targets)
    )
    cost = sum(travel_cost(a, b, up) for a, b in zip(points, points[1:]))
    return Trajectory(wps, float(cost))


def nadir_trajectory(scene: SyntheticScene) -> Trajectory:
    """Griglia a quota costante h = 0.5 R, passo 0.2 R, entro +-0.8 R, percorsa a serpentina."""
    r, c = scene.radius, scene.center
    steps = int(round(NADIR_COVERAGE / NADIR_SPACING))
    offsets = np.arange(-steps, steps + 1) * NADIR_SPACING * r
    z = NADIR_ALTITUDE * r
    points, targets = [], []
    for row, dy in enumerate(offsets):
        xs = offsets if row % 2 == 0 else offsets[::-1]
        for dx in xs:
            points.append(np.array([c[0] + dx, c[1] + dy, z]))
            targets.append(np.array([c[0] + dx, c[1] + dy, 0.0]))
    return _trajectory(points, targets)


def circle_trajectory(scene: SyntheticScene) -> Trajectory:
    """3 strati a r = 0.7 R, quote 0.2 R .. 1.2 R, passo angolare 20 gradi, sguardo al centro."""
    r, c = scene.radius, scene.center
    n = int(round(360.0 / CIRCLE_STEP_DEG))
    points, targets = [], []
    for h in CIRCLE_HEIGHTS:
        for k in range(n):
            a = math.radians(k * CIRCLE_STEP_DEG)
            points.append(np.array([c[0] + CIRCLE_RADIUS * r * math.cos(a), c[1] + CIRCLE_RADIUS * r * math.sin(a), h * r]))
            targets.append(c.copy())
    return _trajectory(points, targets)


def preset_trajectory(kind: str, scene: SyntheticScene) -> Trajectory:
    if kind == "nadir":
        return nadir_trajectory(scene)
    if kind == "circle":
        return circle_trajectory(scene)
    raise ConfigError(f"preset di traiettoria sconosciuto: {kind!r} (nadir | circle)")
