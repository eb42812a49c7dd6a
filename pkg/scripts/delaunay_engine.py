# -*- coding: utf-8 -*-
"""
Triangolazione di Delaunay 3D incrementale (inserimento Bowyer-Watson).

Modello dati:
  - vertices[0] e' il vertice all'infinito; i vertici finiti partono da 1.
  - ogni cella e' una 4-upla di indici vertice; nbrs[c][i] e' la cella
    opposta al vertice i (condivide la faccetta senza il vertice i).
  - celle finite: orient3d = +1. Celle infinite: sostituendo il vertice
    infinito con un punto oltre la faccetta di bordo l'orientazione e' +1.
  - gli id cella non vengono mai riutilizzati, cosi' un InsertionDelta
    resta valido anche dopo inserimenti successivi.

Ogni inserimento ritorna l'InsertionDelta (celle distrutte / create) che il
surface_extractor usa per trovare i raggi modificati.
"""
from __future__ import annotations

import logging
import math
import random
from collections import deque
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from geometry_core import (
    Point3, Ray3, cross, insphere, insphere_sos, norm, orient3d, sub, tet_volume,
)
from recon_errors import DegenerateInputError, DuplicatePointError, GeometryError
from recon_utils import DUP_TOLERANCE_FACTOR, WALK_MAX_STEPS, scene_diagonal

logger = logging.getLogger(__name__)

INFINITE = 0

Cell = Tuple[int, int, int, int]


@dataclass(frozen=True)
class InsertionDelta:
    new_point_index: int
    destroyed: FrozenSet[int]
    created: FrozenSet[int]


@dataclass(frozen=True)
class BatchDelta:
    """Delta cumulato di un batch: le celle nate e morte nel batch spariscono da entrambi i set."""

    new_point_indices: Tuple[int, ...] = ()
    destroyed: FrozenSet[int] = frozenset()
    created: FrozenSet[int] = frozenset()


def merge_deltas(deltas: Iterable[InsertionDelta]) -> BatchDelta:
    points: List[int] = []
    destroyed: set = set()
    created: set = set()
    for d in deltas:
        points.append(d.new_point_index)
        destroyed |= d.destroyed
        created |= d.created
    transient = destroyed & created
    return BatchDelta(
        new_point_indices=tuple(points),
        destroyed=frozenset(destroyed - transient),
        created=frozenset(created - transient),
    )


def _segment_crosses_triangle(o, e, a, b, c) -> bool:
    """La retta o-e attraversa il triangolo chiuso (a, b, c)."""
    s1 = orient3d(o, e, a, b)
    s2 = orient3d(o, e, b, c)
    s3 = orient3d(o, e, c, a)
    if s1 == 0 and s2 == 0 and s3 == 0:
        return False
    return (s1 >= 0 and s2 >= 0 and s3 >= 0) or (s1 <= 0 and s2 <= 0 and s3 <= 0)


class TetComplex:
    def __init__(self, eps_dup: float = 0.0, seed: int = 0):
        self.vertices: List[Optional[Point3]] = [None]
        self.cells: Dict[int, Cell] = {}
        self.nbrs: Dict[int, List[int]] = {}
        self.generation: Dict[int, int] = {}
        self.eps_dup = float(eps_dup)
        self.insertions = 0
        self._next_cell = 0
        self._vertex_cell: Dict[int, int] = {}
        self._last_cell: Optional[int] = None
        self._grid: Dict[tuple, List[int]] = {}
        self._rng = random.Random(seed)

    # -------- accesso --------

    @property
    def n_vertices(self) -> int:
        """Vertici finiti."""
        return len(self.vertices) - 1

    def is_infinite(self, cid: int) -> bool:
        return INFINITE in self.cells[cid]

    def finite_cells(self) -> List[int]:
        return sorted(c for c, v in self.cells.items() if INFINITE not in v)

    def infinite_cells(self) -> List[int]:
        return sorted(c for c, v in self.cells.items() if INFINITE in v)

    def cell_points(self, cid: int) -> List[Point3]:
        return [self.vertices[v] for v in self.cells[cid]]

    def incident_cells(self, v: int) -> List[int]:
        """Stella del vertice v (celle che lo contengono), in ordine di id."""
        start = self._vertex_cell.get(v)
        if start is None:
            return []
        seen = {start}
        queue = deque([start])
        while queue:
            cid = queue.popleft()
            for nb in self.nbrs[cid]:
                if nb not in seen and v in self.cells[nb]:
                    seen.add(nb)
                    queue.append(nb)
        return sorted(seen)

    def finite_volume(self) -> float:
        return sum(tet_volume(*self.cell_points(c)) for c in self.finite_cells())

    # -------- duplicati --------

    def _grid_key(self, p: Sequence[float]) -> tuple:
        if self.eps_dup <= 0.0:
            return (p[0], p[1], p[2])
        return tuple(int(math.floor(c / self.eps_dup)) for c in p)

    def lookup(self, p: Sequence[float]) -> Optional[int]:
        """Indice del vertice entro eps_dup da p, se esiste."""
        key = self._grid_key(p)
        if self.eps_dup <= 0.0:
            hits = self._grid.get(key)
            return hits[0] if hits else None
        kx, ky, kz = key
        best = None
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    for v in self._grid.get((kx + dx, ky + dy, kz + dz), ()):
                        if norm(sub(self.vertices[v], p)) <= self.eps_dup and (best is None or v < best):
                            best = v
        return best

    def _add_vertex(self, p: Point3) -> int:
        self.vertices.append(p)
        v = len(self.vertices) - 1
        self._grid.setdefault(self._grid_key(p), []).append(v)
        return v

    # -------- celle --------

    def _new_cell(self, verts: Sequence[int]) -> int:
        cid = self._next_cell
        self._next_cell += 1
        self.cells[cid] = tuple(verts)
        self.nbrs[cid] = [-1, -1, -1, -1]
        self.generation[cid] = self.insertions
        for v in verts:
            self._vertex_cell[v] = cid
        return cid

    def _replaced(self, cid: int, i: int, p: Sequence[float]) -> List:
        pts = [self.vertices[v] for v in self.cells[cid]]
        pts[i] = p
        return pts

    def _hull_orient(self, cid: int, p: Sequence[float]) -> int:
        """orient3d della cella infinita con il vertice infinito sostituito da p (>0: p oltre il bordo)."""
        cell = self.cells[cid]
        return orient3d(*self._replaced(cid, cell.index(INFINITE), p))

    def contains(self, cid: int, p: Sequence[float]) -> bool:
        """p nella chiusura della cella (per celle infinite: oltre o sul piano di bordo, lato esterno)."""
        cell = self.cells[cid]
        if INFINITE in cell:
            return self._hull_orient(cid, p) > 0
        return all(orient3d(*self._replaced(cid, i, p)) >= 0 for i in range(4))

    def _link(self, cid: int, i: int, other: int, j: int) -> None:
        self.nbrs[cid][i] = other
        self.nbrs[other][j] = cid

    # -------- conflitto --------

    def _finite_conflict(self, cid: int, p: Sequence[float]) -> bool:
        return insphere_sos(*self.cell_points(cid), p) > 0

    def in_conflict(self, cid: int, p: Sequence[float]) -> bool:
        cell = self.cells[cid]
        if INFINITE in cell:
            o = self._hull_orient(cid, p)
            if o != 0:
                return o > 0
            # p sul piano di bordo: decide la sfera della cella finita adiacente
            return self._finite_conflict(self.nbrs[cid][cell.index(INFINITE)], p)
        return self._finite_conflict(cid, p)

    # -------- localizzazione --------

    def locate(self, p: Sequence[float], hint: Optional[int] = None) -> int:
        """
        Cammino stocastico con memoria a partire dall'ultima cella usata.
        Ritorna una cella la cui chiusura contiene p (infinita se p e' fuori dal bordo).
        """
        if not self.cells:
            raise GeometryError("locate su complesso vuoto")
        cid = hint if hint in self.cells else self._last_cell
        if cid not in self.cells:
            cid = next(iter(self.cells))
        prev = -1
        for _ in range(WALK_MAX_STEPS):
            cell = self.cells[cid]
            if INFINITE in cell:
                i = cell.index(INFINITE)
                o = orient3d(*self._replaced(cid, i, p))
                if o > 0:
                    self._last_cell = cid
                    return cid
                finite = self.nbrs[cid][i]
                if o < 0:
                    prev, cid = cid, finite
                    continue
                if self.contains(finite, p):
                    self._last_cell = finite
                    return finite
                return self._scan_hull(p)
            start = self._rng.randrange(4)
            moved = False
            for k in range(4):
                j = (start + k) & 3
                nb = self.nbrs[cid][j]
                if nb == prev:
                    continue
                if orient3d(*self._replaced(cid, j, p)) < 0:
                    prev, cid = cid, nb
                    moved = True
                    break
            if not moved:
                self._last_cell = cid
                return cid
        logger.warning("⚠️ walk oltre %d passi, ricerca esaustiva", WALK_MAX_STEPS)
        return self._locate_brute(p)

    def _scan_hull(self, p) -> int:
        for cid in self.infinite_cells():
            if self._hull_orient(cid, p) > 0:
                return cid
        return self._locate_brute(p)

    def _locate_brute(self, p) -> int:
        for cid in self.finite_cells():
            if self.contains(cid, p):
                return cid
        for cid in self.infinite_cells():
            if self._hull_orient(cid, p) > 0:
                return cid
        raise GeometryError(f"nessuna cella contiene {tuple(p)}")

    # -------- inserimento --------

    def insert(self, p: Sequence[float]) -> InsertionDelta:
        if not all(math.isfinite(c) for c in p):
            raise GeometryError(f"punto non finito: {tuple(p)}")
        p = Point3(float(p[0]), float(p[1]), float(p[2]))
        existing = self.lookup(p)
        if existing is not None:
            raise DuplicatePointError(existing)

        start = self.locate(p)
        conflict = {start}
        outside: set = set()
        boundary: List[Tuple[int, int]] = []
        stack = [start]
        while stack:
            cid = stack.pop()
            for i, nb in enumerate(self.nbrs[cid]):
                if nb in conflict:
                    continue
                if nb in outside or not self.in_conflict(nb, p):
                    outside.add(nb)
                    boundary.append((cid, i))
                    continue
                conflict.add(nb)
                stack.append(nb)

        self.insertions += 1
        v = self._add_vertex(p)
        created: List[int] = []
        edges: Dict[FrozenSet[int], Tuple[int, int]] = {}
        for cid, i in boundary:
            verts = list(self.cells[cid])
            verts[i] = v
            new = self._new_cell(verts)
            created.append(new)
            outer = self.nbrs[cid][i]
            self._link(new, i, outer, self.nbrs[outer].index(cid))
            for j in range(4):
                if j == i:
                    continue
                key = frozenset(verts[k] for k in range(4) if k != i and k != j)
                mate = edges.pop(key, None)
                if mate is None:
                    edges[key] = (new, j)
                else:
                    self._link(new, j, mate[0], mate[1])
        if edges:
            raise GeometryError("cavita' non chiusa durante l'inserimento")

        for cid in conflict:
            del self.cells[cid]
            del self.nbrs[cid]
            del self.generation[cid]
        self._last_cell = created[0]
        return InsertionDelta(v, frozenset(conflict), frozenset(created))

    # -------- cammino lungo un segmento --------

    def _walk_segment(self, start: int, origin, end, came: int = -1) -> List[int]:
        """Celle attraversate da origin verso end, partendo da start; si ferma se esce dal bordo."""
        path = [start]
        seen = {start}
        cid = start
        for _ in range(len(self.cells) + 1):
            cell = self.cells[cid]
            if INFINITE in cell:
                break
            pts = [self.vertices[v] for v in cell]
            best = None
            for j in range(4):
                if j == came:
                    continue
                q = list(pts)
                q[j] = end
                if orient3d(*q) >= 0:
                    continue
                tri = [pts[k] for k in range(4) if k != j]
                if not _segment_crosses_triangle(origin, end, *tri):
                    continue
                nb = self.nbrs[cid][j]
                if nb in seen:
                    continue
                if best is None or nb < best:
                    best = nb
            if best is None:
                break
            came = self.nbrs[best].index(cid)
            path.append(best)
            seen.add(best)
            cid = best
        return path

    def with_entries(self, path: Sequence[int]) -> List[Tuple[int, int]]:
        """(cella, faccetta d'ingresso) per un cammino di celle adiacenti; -1 per la prima."""
        out = [(path[0], -1)] if path else []
        for k in range(1, len(path)):
            out.append((path[k], self.nbrs[path[k]].index(path[k - 1])))
        return out

    def walk_ray(self, ray: Ray3, t_max: float) -> List[Tuple[int, int]]:
        origin = ray.origin
        end = ray.at(t_max)
        c0 = self.locate(origin)
        if not self.is_infinite(c0):
            return self.with_entries(self._walk_segment(c0, origin, end))
        ce = self.locate(end)
        if not self.is_infinite(ce):
            back = self._walk_segment(ce, end, origin)
            return self.with_entries(back[::-1])
        # entrambi fuori dal bordo: cerca la faccetta di bordo d'ingresso
        for cid in self.infinite_cells():
            i = self.cells[cid].index(INFINITE)
            if self._hull_orient(cid, origin) <= 0 or self._hull_orient(cid, end) > 0:
                continue
            tri = [self.vertices[v] for v in self.cells[cid] if v != INFINITE]
            if _segment_crosses_triangle(origin, end, *tri):
                finite = self.nbrs[cid][i]
                inner = self._walk_segment(finite, origin, end, self.nbrs[finite].index(cid))
                return self.with_entries([cid] + inner)
        return [(c0, -1)]

    # -------- raggi camera -> vertice --------

    def _cone_contains(self, cid: int, t_pos: int, c) -> bool:
        return all(
            orient3d(*self._replaced(cid, j, c)) >= 0
            for j in range(4) if j != t_pos
        )

    def trace_sight_ray(self, camera: Sequence[float], vertex: int) -> List[Tuple[int, int]]:
        """
        Celle attraversate dal segmento camera -> vertice, in ordine dalla camera;
        l'ultima cella contiene il vertice. Il cammino parte dal vertice verso la
        camera (nella cella della stella il cui cono contiene la camera) e viene invertito.
        """
        target = self.vertices[vertex]
        star = self.incident_cells(vertex)
        if not star:
            raise GeometryError(f"vertice {vertex} assente dal complesso")
        if tuple(camera) == tuple(target):
            raise GeometryError("camera coincidente con il punto osservato")
        for cid in star:
            cell = self.cells[cid]
            if INFINITE in cell:
                continue
            if self._cone_contains(cid, cell.index(vertex), camera):
                back = self._walk_segment(cid, target, camera)
                return self.with_entries(back[::-1])
        # il segmento lascia subito il bordo dal vertice
        infinite = [c for c in star if INFINITE in self.cells[c]]
        for cid in infinite:
            if self._hull_orient(cid, camera) > 0:
                return [(cid, -1)]
        return [(infinite[0], -1)]

    def cell_behind(self, last: int, camera: Sequence[float], vertex: int) -> Tuple[Optional[Tuple[int, int]], int, Optional[int]]:
        """
        Estende il raggio oltre il vertice: ritorna (f*, T_S, oltre) con f* = (cella,
        indice faccetta) condivisa tra last e T_S e "oltre" la cella al di la' della
        faccetta scelta. Se dietro c'e' solo spazio infinito ritorna (None, last, oltre):
        il pozzo va sulla cella del punto.
        """
        cell = self.cells[last]
        if INFINITE in cell:
            i = cell.index(INFINITE)
            return (last, i), self.nbrs[last][i], self.nbrs[last][i]
        target = self.vertices[vertex]
        beyond = (2.0 * target[0] - camera[0], 2.0 * target[1] - camera[1], 2.0 * target[2] - camera[2])
        pts = self.cell_points(last)
        best, best_dist = None, 0.0
        for j in range(4):
            if cell[j] == vertex:
                continue
            q = list(pts)
            q[j] = beyond
            if orient3d(*q) >= 0:
                continue
            tri = [pts[k] for k in range(4) if k != j]
            area2 = norm(cross(sub(tri[1], tri[0]), sub(tri[2], tri[0])))
            dist = abs(tet_volume(*q)) / area2 if area2 > 0 else 0.0
            if best is None or dist > best_dist:
                best, best_dist = j, dist
        if best is None:
            return None, last, None
        nb = self.nbrs[last][best]
        if INFINITE in self.cells[nb]:
            return None, last, nb
        return (last, best), nb, nb

    # -------- verifica --------

    def check_delaunay(self, exhaustive: bool = True) -> List[str]:
        """Lista di violazioni (vuota se il complesso e' valido)."""
        problems: List[str] = []
        for cid, cell in self.cells.items():
            for i, nb in enumerate(self.nbrs[cid]):
                if nb not in self.cells or cid not in self.nbrs[nb]:
                    problems.append(f"adiacenza non simmetrica {cid}/{nb}")
                    continue
                j = self.nbrs[nb].index(cid)
                if set(cell) - {cell[i]} != set(self.cells[nb]) - {self.cells[nb][j]}:
                    problems.append(f"faccetta non condivisa {cid}/{nb}")
            if INFINITE not in cell and orient3d(*self.cell_points(cid)) <= 0:
                problems.append(f"cella {cid} non orientata positivamente")
        if exhaustive:
            for cid in self.finite_cells():
                pts = self.cell_points(cid)
                cell = set(self.cells[cid])
                for v in range(1, len(self.vertices)):
                    if v not in cell and insphere(*pts, self.vertices[v]) > 0:
                        problems.append(f"vertice {v} dentro la sfera della cella {cid}")
        return problems


def _first_tetrahedron(points: Sequence[Point3]) -> Tuple[int, int, int, int]:
    a = points[0]
    i1 = next((i for i in range(1, len(points)) if tuple(points[i]) != tuple(a)), None)
    if i1 is None:
        raise DegenerateInputError("tutti i punti coincidono")
    for i2 in range(1, len(points)):
        if i2 == i1 or tuple(points[i2]) in (tuple(a), tuple(points[i1])):
            continue
        for i3 in range(1, len(points)):
            if i3 in (i1, i2):
                continue
            if orient3d(a, points[i1], points[i2], points[i3]) != 0:
                return 0, i1, i2, i3
    raise DegenerateInputError("punti tutti complanari")


def bootstrap(points: Sequence[Sequence[float]], eps_dup: Optional[float] = None, seed: int = 0) -> TetComplex:
    """
    Complesso iniziale: primo tetraedro non degenere + 4 celle infinite,
    poi inserimento incrementale dei punti restanti (i duplicati vengono fusi).
    """
    pts: List[Point3] = []
    for p in points:
        if not all(math.isfinite(c) for c in p):
            raise GeometryError(f"punto non finito: {tuple(p)}")
        pts.append(Point3(float(p[0]), float(p[1]), float(p[2])))
    if len(pts) < 4:
        raise DegenerateInputError(f"servono almeno 4 punti, ricevuti {len(pts)}")
    if eps_dup is None:
        eps_dup = DUP_TOLERANCE_FACTOR * scene_diagonal(pts)
    first = _first_tetrahedron(pts)

    tc = TetComplex(eps_dup=eps_dup, seed=seed)
    ids = [tc._add_vertex(pts[i]) for i in first]
    if orient3d(*(tc.vertices[v] for v in ids)) < 0:
        ids[2], ids[3] = ids[3], ids[2]
    tc.insertions = 1
    root = tc._new_cell(ids)
    new_cells = [root]
    for i in range(4):
        verts = list(ids)
        verts[i] = INFINITE
        others = [k for k in range(4) if k != i]
        verts[others[0]], verts[others[1]] = verts[others[1]], verts[others[0]]
        new_cells.append(tc._new_cell(verts))
    facets: Dict[FrozenSet[int], Tuple[int, int]] = {}
    for cid in new_cells:
        cell = tc.cells[cid]
        for i in range(4):
            key = frozenset(cell) - {cell[i]}
            mate = facets.pop(key, None)
            if mate is None:
                facets[key] = (cid, i)
            else:
                tc._link(cid, i, mate[0], mate[1])
    tc._last_cell = root

    used = set(first)
    skipped = 0
    for k, p in enumerate(pts):
        if k in used:
            continue
        try:
            tc.insert(p)
        except DuplicatePointError:
            skipped += 1
    if skipped:
        logger.info("📋 bootstrap: %d duplicati fusi", skipped)
    logger.debug("✅ bootstrap: %d vertici, %d celle finite", tc.n_vertices, len(tc.finite_cells()))
    return tc
