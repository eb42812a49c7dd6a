# -*- coding: utf-8 -*-
"""
Rasterizzazione software per il test di visibilita' (depth buffer).

Il buffer ha risoluzione scalata (RESOLUTION_SCALE della risoluzione
immagine); i campioni sono i centri dei pixel scalati. La profondita' e'
interpolata in 1/z (corretta in prospettiva). I triangoli con un vertice
dietro la camera vengono ignorati, anche come occlusori.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from geometry_core import ViewPose, project_points


def buffer_shape(view: ViewPose, scale: float) -> Tuple[int, int]:
    k = view.intrinsics
    return max(1, int(round(k.height * scale))), max(1, int(round(k.width * scale)))


def _coverage(xs: np.ndarray, ys: np.ndarray, zs: np.ndarray, width: int, height: int
              ) -> Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """(righe, colonne, profondita') dei campioni coperti dal triangolo in coordinate buffer."""
    i0 = max(0, int(math.ceil(xs.min() - 0.5)))
    i1 = min(width - 1, int(math.floor(xs.max() - 0.5)))
    j0 = max(0, int(math.ceil(ys.min() - 0.5)))
    j1 = min(height - 1, int(math.floor(ys.max() - 0.5)))
    if i0 > i1 or j0 > j1:
        return None
    x0, x1, x2 = xs
    y0, y1, y2 = ys
    area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    if area == 0.0:
        return None
    px, py = np.meshgrid(np.arange(i0, i1 + 1) + 0.5, np.arange(j0, j1 + 1) + 0.5)
    w0 = ((x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)) / area
    w1 = ((x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)) / area
    w2 = 1.0 - w0 - w1
    inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
    if not inside.any():
        return None
    inv_z = w0[inside] / zs[0] + w1[inside] / zs[1] + w2[inside] / zs[2]
    rows = (py[inside] - 0.5).astype(int)
    cols = (px[inside] - 0.5).astype(int)
    return rows, cols, 1.0 / inv_z


@dataclass
class DepthRender:
    """Depth buffer di una vista + proiezioni dei triangoli (coordinate buffer)."""

    zbuf: np.ndarray
    uv: np.ndarray               # (m, 3, 2) pixel immagine, NaN dietro la camera
    depth: np.ndarray            # (m, 3)
    sx: float
    sy: float
    covers: Dict[int, Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]]]

    @property
    def front(self) -> np.ndarray:
        return (self.depth > 0.0).all(axis=1)


def render_depth(view: ViewPose, corners: np.ndarray, scale: float) -> DepthRender:
    """z-buffer di tutti i triangoli interamente davanti alla camera."""
    m = len(corners)
    k = view.intrinsics
    height, width = buffer_shape(view, scale)
    sx, sy = width / k.width, height / k.height
    uv, depth = project_points(view, corners.reshape(-1, 3))
    uv = uv.reshape(m, 3, 2)
    depth = depth.reshape(m, 3)
    zbuf = np.full((height, width), np.inf)
    render = DepthRender(zbuf, uv, depth, sx, sy, {})
    for f in np.flatnonzero(render.front):
        cov = _coverage(uv[f, :, 0] * sx, uv[f, :, 1] * sy, depth[f], width, height)
        render.covers[f] = cov
        if cov is not None:
            rows, cols, z = cov
            zbuf[rows, cols] = np.minimum(zbuf[rows, cols], z)
    return render


def _in_image(view: ViewPose, uv: np.ndarray) -> np.ndarray:
    k = view.intrinsics
    with np.errstate(invalid="ignore"):
        return (uv[..., 0] >= 0.0) & (uv[..., 0] <= k.width) & (uv[..., 1] >= 0.0) & (uv[..., 1] <= k.height)


def face_visibility(view: ViewPose, corners: np.ndarray, scale: float, eps_z: float,
                    render: Optional[DepthRender] = None) -> np.ndarray:
    """
    Maschera (m,) delle facce visibili dalla vista: vertici proiettati dentro
    l'immagine con profondita' positiva, faccia rivolta alla camera e almeno un
    campione coperto che vince il test di profondita' entro eps_z. Le facce che
    non coprono campioni vengono testate sul campione del baricentro proiettato.
    """
    m = len(corners)
    if m == 0:
        return np.zeros(0, dtype=bool)
    if render is None:
        render = render_depth(view, corners, scale)
    zbuf, depth, covers = render.zbuf, render.depth, render.covers
    height, width = zbuf.shape
    xs = render.uv[..., 0] * render.sx
    ys = render.uv[..., 1] * render.sy

    in_bounds = _in_image(view, render.uv).all(axis=1)
    normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    to_cam = np.asarray(view.center) - corners.mean(axis=1)
    facing = np.einsum("ij,ij->i", normals, to_cam) > 0.0
    candidates = render.front & in_bounds & facing

    visible = np.zeros(m, dtype=bool)
    for f in np.flatnonzero(candidates):
        cov = covers.get(f)
        if cov is not None:
            rows, cols, z = cov
            visible[f] = bool((z <= zbuf[rows, cols] + eps_z).any())
            continue
        col = min(width - 1, max(0, int(math.floor(xs[f].mean()))))
        row = min(height - 1, max(0, int(math.floor(ys[f].mean()))))
        z_c = 3.0 / float((1.0 / depth[f]).sum())
        visible[f] = z_c <= zbuf[row, col] + eps_z
    return visible


def clipped_polygon_area(uv: Sequence[Sequence[float]], width: float, height: float) -> float:
    """Area (px^2) del poligono proiettato ritagliato sull'immagine (Sutherland-Hodgman + shoelace)."""
    poly = [tuple(p) for p in uv]
    edges = (
        (lambda p: p[0] >= 0.0, lambda a, b: _cut_x(a, b, 0.0)),
        (lambda p: p[0] <= width, lambda a, b: _cut_x(a, b, width)),
        (lambda p: p[1] >= 0.0, lambda a, b: _cut_y(a, b, 0.0)),
        (lambda p: p[1] <= height, lambda a, b: _cut_y(a, b, height)),
    )
    for inside, cut in edges:
        if not poly:
            return 0.0
        out = []
        prev = poly[-1]
        for cur in poly:
            if inside(cur):
                if not inside(prev):
                    out.append(cut(prev, cur))
                out.append(cur)
            elif inside(prev):
                out.append(cut(prev, cur))
            prev = cur
        poly = out
    if len(poly) < 3:
        return 0.0
    s = 0.0
    for (x0, y0), (x1, y1) in zip(poly, poly[1:] + poly[:1]):
        s += x0 * y1 - x1 * y0
    return abs(s) * 0.5


def _cut_x(a, b, x):
    t = (x - a[0]) / (b[0] - a[0])
    return (x, a[1] + t * (b[1] - a[1]))


def _cut_y(a, b, y):
    t = (y - a[1]) / (b[1] - a[1])
    return (a[0] + t * (b[0] - a[0]), y)


def point_visibility(view: ViewPose, points: np.ndarray, normals: np.ndarray, render: DepthRender,
                     eps_z: float) -> np.ndarray:
    """Punti visibili: dentro l'immagine, superficie rivolta alla camera, non occlusi nel z-buffer."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        return np.zeros(0, dtype=bool)
    uv, depth = project_points(view, points)
    ok = (depth > 0.0) & _in_image(view, uv)
    ok &= np.einsum("ij,ij->i", normals, np.asarray(view.center) - points) > 0.0
    height, width = render.zbuf.shape
    idx = np.flatnonzero(ok)
    cols = np.clip(np.floor(uv[idx, 0] * render.sx).astype(int), 0, width - 1)
    rows = np.clip(np.floor(uv[idx, 1] * render.sy).astype(int), 0, height - 1)
    ok[idx] = depth[idx] <= render.zbuf[rows, cols] + eps_z
    return ok
