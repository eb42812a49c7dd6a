# -*- coding: utf-8 -*-
"""
Primitive geometriche 3D condivise da tutti i moduli.

Predicati esatti orient3d / insphere: filtro floating-point con il bound
d'errore di Shewchuk e, se il filtro non decide, valutazione esatta con
fractions.Fraction (ogni float e' un razionale esatto). Sugli zeri esatti
di insphere si applica una simulation-of-simplicity deterministica.

Unita' in metri ovunque; la scala la decide il simulatore.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from recon_errors import GeometryError

# =============================
# Bound d'errore (Shewchuk)
# =============================
EPS = 2.0 ** -53
O3D_ERRBOUND = (7.0 + 56.0 * EPS) * EPS
# bound volutamente largo: sotto soglia si passa al calcolo esatto
ISP_ERRBOUND = 1e-13

ORTHONORMAL_TOL = 1e-9
UNIT_TOL = 1e-9


class Point3(NamedTuple):
    x: float
    y: float
    z: float


def point3(x: float, y: float, z: float) -> Point3:
    """Costruisce un Point3 validando che le coordinate siano finite."""
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
        raise GeometryError(f"coordinate non finite: {(x, y, z)}")
    return Point3(float(x), float(y), float(z))


@dataclass(frozen=True)
class Ray3:
    origin: Point3
    direction: Tuple[float, float, float]

    def __post_init__(self):
        n = math.sqrt(sum(c * c for c in self.direction))
        if abs(n - 1.0) > UNIT_TOL:
            raise GeometryError(f"direzione non unitaria (|d| = {n})")

    def at(self, t: float) -> Point3:
        o, d = self.origin, self.direction
        return Point3(o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2])


def ray_between(origin: Sequence[float], target: Sequence[float]) -> Tuple[Ray3, float]:
    """Raggio da origin verso target e lunghezza del segmento."""
    d = sub(target, origin)
    length = norm(d)
    if length == 0.0:
        raise GeometryError("raggio di lunghezza nulla")
    return Ray3(Point3(*origin), (d[0] / length, d[1] / length, d[2] / length)), length


@dataclass(frozen=True)
class Intrinsics:
    focal: float      # px
    cx: float         # px
    cy: float         # px
    width: int        # px
    height: int       # px

    def __post_init__(self):
        if not self.focal > 0:
            raise GeometryError(f"focale non positiva: {self.focal}")
        if self.width <= 0 or self.height <= 0:
            raise GeometryError(f"dimensioni immagine non valide: {self.width}x{self.height}")


@dataclass(frozen=True, eq=False)
class ViewPose:
    """Posa di una camera: centro, rotazione world->camera, intrinseci pinhole."""

    view_id: int
    center: Point3
    rotation: np.ndarray
    intrinsics: Intrinsics

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        if r.shape != (3, 3):
            raise GeometryError("rotazione non 3x3")
        if not np.allclose(r.T @ r, np.eye(3), atol=ORTHONORMAL_TOL, rtol=0.0):
            raise GeometryError(f"rotazione non ortonormale (view {self.view_id})")
        object.__setattr__(self, "rotation", r)

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[2]

    def same_as(self, other: "ViewPose") -> bool:
        return (
            self.view_id == other.view_id
            and tuple(self.center) == tuple(other.center)
            and np.array_equal(self.rotation, other.rotation)
            and self.intrinsics == other.intrinsics
        )


# -------- Utils vettoriali (puro python, usati nei kernel) --------

def sub(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float, float]:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def dot(a: Sequence[float], b: Sequence[float]) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def cross(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float, float]:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def norm(a: Sequence[float]) -> float:
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


def triangle_normal(a, b, c) -> Tuple[float, float, float]:
    """Normale (non normalizzata) con verso dato dall'ordine a, b, c."""
    return cross(sub(b, a), sub(c, a))


def triangle_area(a, b, c) -> float:
    return 0.5 * norm(triangle_normal(a, b, c))


def tet_volume(a, b, c, d) -> float:
    """Volume con segno: positivo se orient3d(a, b, c, d) = +1."""
    return dot(sub(b, a), cross(sub(c, a), sub(d, a))) / 6.0


# =============================
# Predicati
# =============================

def _fractions(*points):
    try:
        return [tuple(Fraction(v) for v in p) for p in points]
    except (ValueError, OverflowError, TypeError) as e:
        raise GeometryError(f"input non finito nei predicati: {e}") from e


def _det3(a, b, c):
    return (
        a[0] * (b[1] * c[2] - b[2] * c[1])
        + a[1] * (b[2] * c[0] - b[0] * c[2])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
    )


def _sign(x) -> int:
    return (x > 0) - (x < 0)


def _orient3d_exact(a, b, c, d) -> int:
    fa, fb, fc, fd = _fractions(a, b, c, d)
    return _sign(_det3(
        (fb[0] - fa[0], fb[1] - fa[1], fb[2] - fa[2]),
        (fc[0] - fa[0], fc[1] - fa[1], fc[2] - fa[2]),
        (fd[0] - fa[0], fd[1] - fa[1], fd[2] - fa[2]),
    ))


def orient3d(a, b, c, d) -> int:
    """
    Segno di det(b - a, c - a, d - a): +1 se d sta dal lato positivo del
    piano (a, b, c) orientato con la regola della mano destra.
    """
    bax = b[0] - a[0]
    bay = b[1] - a[1]
    baz = b[2] - a[2]
    cax = c[0] - a[0]
    cay = c[1] - a[1]
    caz = c[2] - a[2]
    dax = d[0] - a[0]
    day = d[1] - a[1]
    daz = d[2] - a[2]

    p1 = cay * daz
    p2 = caz * day
    p3 = caz * dax
    p4 = cax * daz
    p5 = cax * day
    p6 = cay * dax
    det = bax * (p1 - p2) + bay * (p3 - p4) + baz * (p5 - p6)
    permanent = (
        abs(bax) * (abs(p1) + abs(p2))
        + abs(bay) * (abs(p3) + abs(p4))
        + abs(baz) * (abs(p5) + abs(p6))
    )
    errbound = O3D_ERRBOUND * permanent
    if det > errbound:
        return 1
    if -det > errbound:
        return -1
    return _orient3d_exact(a, b, c, d)


def _insphere_rows(a, rows):
    out = []
    for q in rows:
        x, y, z = q[0] - a[0], q[1] - a[1], q[2] - a[2]
        out.append((x, y, z, x * x + y * y + z * z))
    return out


def _lifted_det(r1, r2, r3, r4):
    # sviluppo lungo la colonna del lift
    return (
        -r1[3] * _det3(r2, r3, r4)
        + r2[3] * _det3(r1, r3, r4)
        - r3[3] * _det3(r1, r2, r4)
        + r4[3] * _det3(r1, r2, r3)
    )


def _abs_det3(a, b, c):
    return (
        abs(a[0]) * (abs(b[1] * c[2]) + abs(b[2] * c[1]))
        + abs(a[1]) * (abs(b[2] * c[0]) + abs(b[0] * c[2]))
        + abs(a[2]) * (abs(b[0] * c[1]) + abs(b[1] * c[0]))
    )


def _insphere_raw(a, b, c, d, p) -> int:
    """Segno di -det(lift): +1 dentro la sfera per tetraedro orientato positivamente."""
    r1, r2, r3, r4 = _insphere_rows(a, (b, c, d, p))
    det = _lifted_det(r1, r2, r3, r4)
    permanent = (
        r1[3] * _abs_det3(r2, r3, r4)
        + r2[3] * _abs_det3(r1, r3, r4)
        + r3[3] * _abs_det3(r1, r2, r4)
        + r4[3] * _abs_det3(r1, r2, r3)
    )
    errbound = ISP_ERRBOUND * permanent
    if det > errbound:
        return -1
    if -det > errbound:
        return 1
    fa, fb, fc, fd, fp = _fractions(a, b, c, d, p)
    return -_sign(_lifted_det(*_insphere_rows(fa, (fb, fc, fd, fp))))


def insphere(a, b, c, d, p) -> int:
    """
    +1 se p e' strettamente dentro la sfera circoscritta del tetraedro
    (a, b, c, d) orientato positivamente, -1 fuori, 0 sulla sfera.
    Antisimmetrico rispetto alle permutazioni dispari dei primi quattro punti.
    """
    if orient3d(a, b, c, d) == 0:
        raise GeometryError("insphere su tetraedro degenere")
    return _insphere_raw(a, b, c, d, p)


def insphere_sos(a, b, c, d, p) -> int:
    """
    Come insphere, ma mai zero: sugli zeri esatti perturba simbolicamente il
    lift di ogni punto (perturbazione dominante sul punto lessicograficamente
    maggiore) e decide con il primo cofattore non nullo.
    """
    s = insphere(a, b, c, d, p)
    if s != 0:
        return s
    # cofattori della colonna del lift nel determinante 5x5 (righe a, b, c, d, p)
    cofactors = [
        (tuple(a), lambda: orient3d(b, c, d, p)),
        (tuple(b), lambda: -orient3d(a, c, d, p)),
        (tuple(c), lambda: orient3d(a, b, d, p)),
        (tuple(d), lambda: -orient3d(a, b, c, p)),
        (tuple(p), lambda: orient3d(a, b, c, d)),
    ]
    cofactors.sort(key=lambda item: item[0], reverse=True)
    for _, cof in cofactors:
        value = cof()
        if value != 0:
            return -value
    raise GeometryError("simulation of simplicity senza cofattori non nulli")


# =============================
# Proiezione pinhole
# =============================

def project(view: ViewPose, p: Sequence[float]) -> Optional[Tuple[float, float]]:
    """Pixel (u, v) di p, oppure None (dietro la camera) se la profondita' e' <= 0."""
    r = view.rotation
    dx, dy, dz = p[0] - view.center[0], p[1] - view.center[1], p[2] - view.center[2]
    xc = r[0, 0] * dx + r[0, 1] * dy + r[0, 2] * dz
    yc = r[1, 0] * dx + r[1, 1] * dy + r[1, 2] * dz
    zc = r[2, 0] * dx + r[2, 1] * dy + r[2, 2] * dz
    if not zc > 0.0:
        return None
    k = view.intrinsics
    return (k.focal * xc / zc + k.cx, k.focal * yc / zc + k.cy)


def project_points(view: ViewPose, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Versione vettoriale: ritorna (uv Nx2, depth N). uv e' NaN dove depth <= 0.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    cam = (pts - np.asarray(view.center)) @ view.rotation.T
    depth = cam[:, 2]
    k = view.intrinsics
    uv = np.full((len(pts), 2), np.nan)
    front = depth > 0.0
    uv[front, 0] = k.focal * cam[front, 0] / depth[front] + k.cx
    uv[front, 1] = k.focal * cam[front, 1] / depth[front] + k.cy
    return uv, depth


def unproject(view: ViewPose, u: float, v: float, depth: float) -> Point3:
    """Punto mondo sul raggio del pixel (u, v) alla profondita' camera depth."""
    k = view.intrinsics
    cam = np.array([(u - k.cx) / k.focal * depth, (v - k.cy) / k.focal * depth, depth])
    w = np.asarray(view.center) + view.rotation.T @ cam
    return Point3(float(w[0]), float(w[1]), float(w[2]))


def look_at(view_id: int, center: Sequence[float], target: Sequence[float],
            intrinsics: Intrinsics, up: Sequence[float] = (0.0, 0.0, 1.0)) -> ViewPose:
    """
    Posa che guarda target da center: asse z camera in avanti, x a destra,
    y verso il basso dell'immagine.
    """
    forward = np.asarray(target, dtype=float) - np.asarray(center, dtype=float)
    n = np.linalg.norm(forward)
    if n == 0.0:
        raise GeometryError("look_at con target coincidente col centro")
    forward /= n
    up_v = np.asarray(up, dtype=float)
    right = np.cross(forward, up_v)
    if np.linalg.norm(right) < 1e-9:
        # vista perfettamente verticale: up alternativo
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.vstack([right, down, forward])
    c = Point3(float(center[0]), float(center[1]), float(center[2]))
    return ViewPose(view_id=view_id, center=c, rotation=rotation, intrinsics=intrinsics)
