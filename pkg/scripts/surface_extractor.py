# -*- coding: utf-8 -*-
"""
Energia di visibilita' + smoothness sul complesso tetraedrico, taglio minimo
dinamico ed estrazione della superficie.

Elementi dell'energia (chiavi dei contributi):
  ("src", cella)         link sorgente (spazio libero)
  ("sink", cella)        link pozzo (spazio occupato)
  ("edge", a, b)         arco orientato a -> b attraverso la faccetta condivisa

I pesi sono interi in virgola fissa (CAPACITY_SCALE) cosi' l'accumulo
incrementale e il ricalcolo completo coincidono bit a bit.

Flusso per batch: raggi sporchi (indice cella -> raggi) -> sottrazione dei
contributi in cache -> aggiornamento smoothness sulle faccette distrutte/create
-> ritracciamento (parallelo) -> somma dei nuovi contributi -> delta al solver.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from delaunay_engine import INFINITE, TetComplex
from dynamic_maxflow import DynamicMaxFlow
from geometry_core import Point3, dot, norm, sub, triangle_normal
from recon_errors import GeometryError, NumericalError
from recon_utils import (
    ALPHA_CON, ALPHA_FREE, ALPHA_OCC, CAPACITY_SCALE, FILTER_ITERATIONS, FILTER_K,
    INFINITE_CAPACITY, SMOOTH_LAMBDA,
)

logger = logging.getLogger(__name__)

ACTIVE, DIRTY, RETIRED = "active", "dirty", "retired"

# faccetta i della cella (v0, v1, v2, v3) orientata verso l'esterno (lontano da v_i)
FACET_OUT = ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1))

Element = tuple
RayId = Tuple[int, int]


@dataclass(frozen=True)
class EnergyParams:
    alpha_free: float = ALPHA_FREE
    alpha_occ: float = ALPHA_OCC
    alpha_con: float = ALPHA_CON
    smooth_lambda: float = SMOOTH_LAMBDA
    scale: int = CAPACITY_SCALE

    def fixed(self, w: float) -> int:
        return int(round(w * self.scale))


@dataclass
class SightRay:
    ray_id: RayId
    camera: Point3
    vertex: int
    target: Point3
    status: str = DIRTY
    traversal: List[Tuple[int, int]] = field(default_factory=list)
    behind_facet: Optional[Tuple[int, int]] = None
    sink_cell: Optional[int] = None
    watch_cell: Optional[int] = None      # cella oltre f*, anche se infinita
    contributions: List[Tuple[Element, int]] = field(default_factory=list)

    def cells(self) -> Set[int]:
        out = {c for c, _ in self.traversal}
        for c in (self.sink_cell, self.watch_cell):
            if c is not None:
                out.add(c)
        return out


@dataclass(frozen=True)
class RayTrace:
    traversal: List[Tuple[int, int]]
    behind_facet: Optional[Tuple[int, int]]
    sink_cell: int
    watch_cell: Optional[int]


def trace_ray(ray: SightRay, complex: TetComplex) -> Optional[RayTrace]:
    """Percorso camera -> punto e cella dietro il punto; None se il cammino fallisce."""
    try:
        traversal = complex.trace_sight_ray(ray.camera, ray.vertex)
        last = traversal[-1][0]
        if ray.vertex not in complex.cells[last]:
            return None
        behind, sink, watch = complex.cell_behind(last, ray.camera, ray.vertex)
    except GeometryError as e:
        logger.debug("walk fallito per il raggio %s: %s", ray.ray_id, e)
        return None
    return RayTrace(traversal, behind, sink, watch)


def free_cell(ray: SightRay, complex: TetComplex) -> int:
    """
    T0: prima cella finita della traversata. Una camera fuori dall'inviluppo
    parte da celle infinite, gia' vincolate outside; se il raggio non entra mai
    nell'inviluppo resta la prima cella.
    """
    for cell, _ in ray.traversal:
        if not complex.is_infinite(cell):
            return cell
    return ray.traversal[0][0]


def ray_energy(ray: SightRay, complex: TetComplex, params: EnergyParams = EnergyParams()) -> List[Tuple[Element, int]]:
    """
    Contributi di un raggio: alpha_free su T0, alpha_con su ogni faccetta
    attraversata (nel verso di propagazione) e su f*, alpha_occ su T_S.
    """
    if ray.status == DIRTY or not ray.traversal:
        raise NumericalError(f"raggio {ray.ray_id} senza traversata valida")
    out: List[Tuple[Element, int]] = [(("src", free_cell(ray, complex)), params.fixed(params.alpha_free))]
    con = params.fixed(params.alpha_con)
    for (a, _), (b, _) in zip(ray.traversal, ray.traversal[1:]):
        out.append((("edge", a, b), con))
    if ray.behind_facet is not None:
        cell, _ = ray.behind_facet
        out.append((("edge", cell, ray.sink_cell), con))
    out.append((("sink", ray.sink_cell), params.fixed(params.alpha_occ)))
    return out


def smoothness_weight(complex: TetComplex, cell: int, i: int, alpha_con: float = ALPHA_CON) -> float:
    """alpha_con * |v . n_f| / |v|, v tra i vertici opposti alla faccetta i di cell."""
    nb = complex.nbrs[cell][i]
    if complex.is_infinite(cell) or complex.is_infinite(nb):
        return 0.0
    verts = complex.cells[cell]
    a = complex.vertices[verts[i]]
    j = complex.nbrs[nb].index(cell)
    b = complex.vertices[complex.cells[nb][j]]
    tri = [complex.vertices[verts[k]] for k in range(4) if k != i]
    n = triangle_normal(*tri)
    n_len = norm(n)
    v = sub(b, a)
    v_len = norm(v)
    if n_len == 0.0 or v_len == 0.0:
        return 0.0
    return alpha_con * abs(dot(v, n)) / (n_len * v_len)


class RayStore:
    """Registro dei raggi con indice inverso cella -> raggi."""

    def __init__(self):
        self.rays: Dict[RayId, SightRay] = {}
        self._index: Dict[int, Set[RayId]] = defaultdict(set)
        self.failed_walks = 0

    def __len__(self) -> int:
        return len(self.rays)

    def active_count(self) -> int:
        return sum(1 for r in self.rays.values() if r.status == ACTIVE)

    def rays_touching(self, cells: Iterable[int]) -> List[RayId]:
        hit: Set[RayId] = set()
        for c in cells:
            hit |= self._index.get(c, set())
        return sorted(hit)

    def pending(self) -> List[RayId]:
        return sorted(rid for rid, r in self.rays.items() if r.status == DIRTY)

    def index(self, ray: SightRay) -> None:
        for c in ray.cells():
            self._index[c].add(ray.ray_id)

    def unindex(self, ray: SightRay) -> None:
        for c in ray.cells():
            bucket = self._index.get(c)
            if bucket is not None:
                bucket.discard(ray.ray_id)
                if not bucket:
                    del self._index[c]


@dataclass
class EnergyUpdate:
    modified: List[RayId]
    deltas: Dict[Element, int]
    failed: int = 0


@dataclass(frozen=True)
class CutResult:
    labels: Dict[int, bool]   # True = inside
    cut_value: int

    def inside_cells(self) -> List[int]:
        return sorted(c for c, v in self.labels.items() if v)


class EnergyGraph:
    def __init__(self, params: EnergyParams = EnergyParams()):
        self.params = params
        self.caps: Dict[Element, int] = {}
        self.smooth: Dict[FrozenSet[int], int] = {}
        self.infinite: Set[int] = set()
        self._cell_facets: Dict[int, Set[FrozenSet[int]]] = defaultdict(set)
        self.solver = DynamicMaxFlow()

    def capacity(self, element: Element) -> int:
        return self.caps.get(element, 0)

    # -------- termini strutturali --------

    def structural_deltas(self, complex: TetComplex, destroyed: Iterable[int], created: Iterable[int]) -> Dict[Element, int]:
        """Smoothness e link infiniti da togliere / aggiungere per le celle distrutte / create."""
        deltas: Dict[Element, int] = defaultdict(int)
        for c in sorted(destroyed):
            for key in sorted(self._cell_facets.pop(c, ()), key=sorted):
                w = self.smooth.pop(key)
                a, b = sorted(key)
                deltas[("edge", a, b)] -= w
                deltas[("edge", b, a)] -= w
                other = b if a == c else a
                self._cell_facets.get(other, set()).discard(key)
            if c in self.infinite:
                self.infinite.discard(c)
                deltas[("src", c)] -= INFINITE_CAPACITY
        for c in sorted(created):
            if complex.is_infinite(c):
                self.infinite.add(c)
                deltas[("src", c)] += INFINITE_CAPACITY
                continue
            for i, nb in enumerate(complex.nbrs[c]):
                key = frozenset((c, nb))
                if key in self.smooth or complex.is_infinite(nb):
                    continue
                w = self.params.fixed(self.params.smooth_lambda * smoothness_weight(complex, c, i, self.params.alpha_con))
                self.smooth[key] = w
                self._cell_facets[c].add(key)
                self._cell_facets[nb].add(key)
                deltas[("edge", c, nb)] += w
                deltas[("edge", nb, c)] += w
        return deltas

    # -------- applicazione --------

    def apply(self, deltas: Dict[Element, int]) -> None:
        for element in sorted(deltas, key=_element_order):
            d = deltas[element]
            if d == 0:
                continue
            value = self.caps.get(element, 0) + d
            if value < 0:
                raise NumericalError(f"capacita' negativa su {element}")
            if value:
                self.caps[element] = value
            else:
                self.caps.pop(element, None)
            kind = element[0]
            if kind == "src":
                self.solver.add_terminal(element[1], d, 0)
            elif kind == "sink":
                self.solver.add_terminal(element[1], 0, d)
            else:
                self.solver.add_edge(element[1], element[2], d)

    def drop_cells(self, cells: Iterable[int]) -> None:
        for c in cells:
            self.solver.remove_node(c)

    @classmethod
    def from_scratch(cls, complex: TetComplex, rays: Iterable[SightRay],
                     params: EnergyParams = EnergyParams()) -> "EnergyGraph":
        """Accumulo completo (oracolo): ogni raggio ritracciato sul complesso corrente."""
        graph = cls(params)
        deltas = graph.structural_deltas(complex, (), complex.cells.keys())
        for ray in sorted(rays, key=lambda r: r.ray_id):
            if ray.status == RETIRED:
                continue
            fresh = SightRay(ray.ray_id, ray.camera, ray.vertex, ray.target)
            trace = trace_ray(fresh, complex)
            if trace is None:
                continue
            _adopt_trace(fresh, trace)
            for element, w in ray_energy(fresh, complex, params):
                deltas[element] += w
        graph.apply(deltas)
        return graph


def _element_order(element: Element):
    return (element[0],) + tuple(element[1:])


def _adopt_trace(ray: SightRay, trace: RayTrace) -> None:
    ray.traversal = trace.traversal
    ray.behind_facet = trace.behind_facet
    ray.sink_cell = trace.sink_cell
    ray.watch_cell = trace.watch_cell
    ray.status = ACTIVE


def _retire(ray: SightRay, store: RayStore, deltas: Dict[Element, int]) -> None:
    for element, w in ray.contributions:
        deltas[element] -= w
    store.unindex(ray)
    ray.contributions = []


def update_energy(complex: TetComplex, delta, new_rays: Sequence[SightRay], store: RayStore,
                  graph: EnergyGraph, workers: int = 1) -> EnergyUpdate:
    """
    Aggiornamento incrementale dell'energia per un batch (delta cumulato).
    Ritorna i raggi modificati e le variazioni nette di capacita' gia' applicate al grafo.
    """
    deltas: Dict[Element, int] = defaultdict(int)

    dirty_ids = set(store.rays_touching(delta.destroyed)) | set(store.pending())
    for rid in sorted(dirty_ids):
        ray = store.rays[rid]
        _retire(ray, store, deltas)
        ray.status = DIRTY

    for ray in new_rays:
        old = store.rays.get(ray.ray_id)
        if old is not None and old is not ray:
            _retire(old, store, deltas)
            old.status = RETIRED
        store.rays[ray.ray_id] = ray
        ray.status = DIRTY
        dirty_ids.add(ray.ray_id)

    for element, w in graph.structural_deltas(complex, delta.destroyed, delta.created).items():
        deltas[element] += w

    modified = sorted(dirty_ids)
    todo = [store.rays[rid] for rid in modified]
    if workers > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            traces = list(executor.map(lambda r: trace_ray(r, complex), todo))
    else:
        traces = [trace_ray(r, complex) for r in todo]

    failed = 0
    for ray, trace in zip(todo, traces):
        if trace is None:
            failed += 1
            ray.traversal, ray.behind_facet, ray.sink_cell, ray.watch_cell = [], None, None, None
            continue
        _adopt_trace(ray, trace)
        ray.contributions = ray_energy(ray, complex, graph.params)
        for element, w in ray.contributions:
            deltas[element] += w
        store.index(ray)
    store.failed_walks += failed
    if failed:
        logger.warning("⚠️ %d raggi senza traversata valida (esclusi)", failed)

    net = {k: v for k, v in deltas.items() if v}
    graph.apply(net)
    for c in delta.created:
        graph.solver.add_node(c)
    graph.drop_cells(delta.destroyed)
    return EnergyUpdate(modified=modified, deltas=net, failed=failed)


def solve_cut(graph: EnergyGraph, complex: Optional[TetComplex] = None) -> CutResult:
    """Taglio minimo sul residuo corrente; celle senza capacita' restano outside."""
    labels = graph.solver.solve()
    if complex is not None:
        labels = {c: labels.get(c, False) for c in complex.cells}
    return CutResult(labels=labels, cut_value=graph.solver.cut_value)


# =============================
# Mesh
# =============================

@dataclass
class SurfaceMesh:
    points: np.ndarray                       # (n_vertici + 1, 3), riga 0 = infinito (NaN)
    triangles: List[Tuple[int, int, int]] = field(default_factory=list)
    provenance: List[Tuple[int, int]] = field(default_factory=list)   # (cella inside, cella outside)

    def __len__(self) -> int:
        return len(self.triangles)

    def corners(self) -> np.ndarray:
        """(m, 3, 3) coordinate dei vertici di ogni triangolo."""
        if not self.triangles:
            return np.zeros((0, 3, 3))
        return self.points[np.asarray(self.triangles, dtype=int)]

    def areas(self) -> np.ndarray:
        c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    def normals(self) -> np.ndarray:
        """Normali unitarie (zero per triangoli degeneri)."""
        c = self.corners()
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        length = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, length, out=np.zeros_like(n), where=length > 0)

    def centroids(self) -> np.ndarray:
        return self.corners().mean(axis=1) if self.triangles else np.zeros((0, 3))

    def used_vertices(self) -> List[int]:
        return sorted({v for tri in self.triangles for v in tri})

    def subset(self, keep: Sequence[int]) -> "SurfaceMesh":
        return SurfaceMesh(
            points=self.points,
            triangles=[self.triangles[k] for k in keep],
            provenance=[self.provenance[k] for k in keep] if self.provenance else [],
        )

    def edge_counts(self) -> Dict[Tuple[int, int], int]:
        counts: Dict[Tuple[int, int], int] = defaultdict(int)
        for a, b, c in self.triangles:
            for u, v in ((a, b), (b, c), (c, a)):
                counts[(u, v) if u < v else (v, u)] += 1
        return counts

    def median_edge_length(self) -> float:
        """Mediana della lunghezza dei lati (ogni lato contato una volta); 0.0 senza triangoli."""
        edges = sorted(self.edge_counts())
        if not edges:
            return 0.0
        e = np.asarray(edges, dtype=int)
        return float(np.median(np.linalg.norm(self.points[e[:, 1]] - self.points[e[:, 0]], axis=1)))


def complex_points(complex: TetComplex) -> np.ndarray:
    pts = np.full((len(complex.vertices), 3), np.nan)
    if len(complex.vertices) > 1:
        pts[1:] = np.asarray(complex.vertices[1:], dtype=float)
    return pts


def extract_surface(complex: TetComplex, labels: Dict[int, bool]) -> SurfaceMesh:
    """Un triangolo per ogni faccetta tra cella inside e outside, orientato verso l'esterno."""
    mesh = SurfaceMesh(points=complex_points(complex))
    for cid in sorted(c for c, inside in labels.items() if inside and c in complex.cells):
        cell = complex.cells[cid]
        if INFINITE in cell:
            logger.warning("⚠️ cella infinita %d etichettata inside: ignorata", cid)
            continue
        for i, nb in enumerate(complex.nbrs[cid]):
            if labels.get(nb, False):
                continue
            mesh.triangles.append(tuple(cell[k] for k in FACET_OUT[i]))
            mesh.provenance.append((cid, nb))
    return mesh


# =============================
# Filtro outlier
# =============================

@dataclass(frozen=True)
class FilterStats:
    iteration: int
    boundary: int
    mean: float
    std: float
    threshold: float
    removed: int


def _max_edge_lengths(mesh: SurfaceMesh, idx: Sequence[int]) -> np.ndarray:
    c = mesh.points[np.asarray([mesh.triangles[k] for k in idx], dtype=int)]
    e = np.stack([
        np.linalg.norm(c[:, 1] - c[:, 0], axis=1),
        np.linalg.norm(c[:, 2] - c[:, 1], axis=1),
        np.linalg.norm(c[:, 0] - c[:, 2], axis=1),
    ], axis=1)
    return e.max(axis=1)


def filter_outliers(mesh: SurfaceMesh, k: float = FILTER_K, n_it: int = FILTER_ITERATIONS,
                    stats: Optional[List[FilterStats]] = None) -> SurfaceMesh:
    """
    Rimozione iterativa dei triangoli di bordo con lato massimo oltre mu + k * sigma.
    Ogni iterazione usa una sola soglia per tutti i triangoli di bordo; stop
    anticipato quando non c'e' nulla da rimuovere.
    """
    current = mesh
    for it in range(1, n_it + 1):
        counts = current.edge_counts()
        boundary = [
            t for t, (a, b, c) in enumerate(current.triangles)
            if any(counts[(u, v) if u < v else (v, u)] == 1 for u, v in ((a, b), (b, c), (c, a)))
        ]
        if not boundary:
            if stats is not None:
                stats.append(FilterStats(it, 0, 0.0, 0.0, 0.0, 0))
            break
        lengths = _max_edge_lengths(current, boundary)
        mu = float(lengths.mean())
        sigma = float(lengths.std())
        tau = mu + k * sigma
        drop = {t for t, l in zip(boundary, lengths) if l > tau}
        if stats is not None:
            stats.append(FilterStats(it, len(boundary), mu, sigma, tau, len(drop)))
        if not drop:
            break
        current = current.subset([t for t in range(len(current)) if t not in drop])
        logger.debug("🔄 filtro iterazione %d: rimossi %d triangoli di bordo", it, len(drop))
    return current
