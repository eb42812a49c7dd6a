# -*- coding: utf-8 -*-
"""
I/O deterministico: PLY ASCII (mesh con colore per faccia, nuvole di punti)
e OBJ tramite trimesh, CSV di qualita'. I vertici della mesh sono scritti in
ordine di indice Delaunay, solo quelli usati.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import trimesh

from quality_assessor import QualityRecord
from recon_errors import IngestionError
from surface_extractor import SurfaceMesh

UNKNOWN_COLOR = (128, 128, 128)
# rampa blu -> ciano -> verde -> giallo -> rosso
_RAMP_STOPS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
_RAMP_RGB = np.array([
    [0, 0, 255],
    [0, 255, 255],
    [0, 255, 0],
    [255, 255, 0],
    [255, 0, 0],
], dtype=float)


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def quality_color(q: Optional[float]) -> Tuple[int, int, int]:
    """Colore per un valore in [0, 1]: blu basso, rosso alto; grigio se sconosciuto."""
    if q is None:
        return UNKNOWN_COLOR
    t = min(1.0, max(0.0, float(q)))
    return tuple(int(round(np.interp(t, _RAMP_STOPS, _RAMP_RGB[:, c]))) for c in range(3))


def compact(mesh: SurfaceMesh) -> Tuple[np.ndarray, np.ndarray]:
    """(punti usati, triangoli reindicizzati) in ordine di indice Delaunay."""
    used = mesh.used_vertices()
    remap = {v: k for k, v in enumerate(used)}
    pts = mesh.points[used] if used else np.zeros((0, 3))
    tris = np.array([[remap[v] for v in t] for t in mesh.triangles], dtype=int).reshape(-1, 3)
    return pts, tris


_EMPTY_PLY = "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nend_header\n"


def _export(path: Path, geometry, file_type: str, **kwargs) -> None:
    data = geometry.export(file_type=file_type, **kwargs)
    Path(path).write_bytes(data.encode("utf-8") if isinstance(data, str) else data)


def write_ply(path: Path, points: np.ndarray, triangles: Optional[np.ndarray] = None,
              face_colors: Optional[Sequence[Tuple[int, int, int]]] = None,
              vertex_colors: Optional[Sequence[Tuple[int, int, int]]] = None) -> None:
    """PLY ASCII: mesh se `triangles` e' dato, altrimenti nuvola di punti."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(points) == 0:
        Path(path).write_text(_EMPTY_PLY, encoding="utf-8")
        return
    if triangles is None:
        cloud = trimesh.PointCloud(points, colors=None if vertex_colors is None else np.asarray(vertex_colors))
        _export(path, cloud, "ply", encoding="ascii")
        return
    tris = np.asarray(triangles, dtype=int).reshape(-1, 3)
    colors = np.asarray(face_colors, dtype=np.uint8) if face_colors is not None and len(tris) else None
    mesh = trimesh.Trimesh(vertices=points, faces=tris, face_colors=colors, process=False, validate=False)
    _export(path, mesh, "ply", encoding="ascii")


def write_mesh_ply(path: Path, mesh: SurfaceMesh, face_colors: Optional[Sequence[Tuple[int, int, int]]] = None) -> None:
    pts, tris = compact(mesh)
    write_ply(path, pts, tris, face_colors=face_colors)


def write_quality_ply(path: Path, mesh: SurfaceMesh, records: Sequence[QualityRecord]) -> None:
    write_mesh_ply(path, mesh, [quality_color(r.q_total) for r in records])


def write_obj(path: Path, mesh: SurfaceMesh) -> None:
    pts, tris = compact(mesh)
    out = trimesh.Trimesh(vertices=pts, faces=tris, process=False, validate=False)
    _export(path, out, "obj", include_normals=False, include_color=False, include_texture=False)


def _has_header(path: Path) -> bool:
    # trimesh non rileva un header PLY senza end_header
    with Path(path).open("rb") as f:
        if f.readline().strip() != b"ply":
            return False
        for line in f:
            if line.strip() == b"end_header":
                return True
    return False


def read_ply(path: Path) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """(punti, triangoli, colori per faccia o None) da un PLY."""
    if not Path(path).exists():
        raise IngestionError(f"file PLY non trovato: {path}")
    if not _has_header(path):
        raise IngestionError(f"{path}: non e' un file PLY valido")
    try:
        loaded = trimesh.load(str(path), file_type="ply", process=False)
    except Exception as e:
        raise IngestionError(f"{path}: corpo PLY non valido ({e})") from e
    if isinstance(loaded, trimesh.Scene):
        parts = [g for g in loaded.geometry.values() if isinstance(g, (trimesh.Trimesh, trimesh.PointCloud))]
        if not parts:
            return np.zeros((0, 3)), np.zeros((0, 3), dtype=int), None
        loaded = parts[0]
    points = np.asarray(loaded.vertices, dtype=float).reshape(-1, 3)
    if isinstance(loaded, trimesh.PointCloud):
        return points, np.zeros((0, 3), dtype=int), None
    tris = np.asarray(loaded.faces, dtype=int).reshape(-1, 3)
    colors = None
    if loaded.visual.kind == "face":
        colors = np.asarray(loaded.visual.face_colors, dtype=int)[:, :3]
    return points, tris, colors



def mesh_from_arrays(points: np.ndarray, triangles: np.ndarray) -> SurfaceMesh:
    """SurfaceMesh da array letti da file (indice 0 riservato all'infinito)."""
    pts = np.full((len(points) + 1, 3), np.nan)
    pts[1:] = points
    return SurfaceMesh(points=pts, triangles=[tuple(int(v) + 1 for v in t) for t in triangles])


QUALITY_HEADER = ["face_id", "gsd", "redundancy", "reproj_error", "q_total"]


def _opt(x: Optional[float]) -> str:
    return "" if x is None else _fmt(x)


def write_quality_csv(path: Path, records: Sequence[QualityRecord]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(QUALITY_HEADER)
        for r in records:
            writer.writerow([r.face_id, _opt(r.gsd), r.redundancy, _opt(r.reproj_error), _opt(r.q_total)])


def read_quality_csv(path: Path) -> List[QualityRecord]:
    def opt(s: str) -> Optional[float]:
        return None if s == "" else float(s)

    records = []
    if not Path(path).exists():
        raise IngestionError(f"file CSV non trovato: {path}")
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != QUALITY_HEADER:
            raise IngestionError(f"{path}: intestazione CSV inattesa {reader.fieldnames}")
        try:
            for row in reader:
                records.append(QualityRecord(
                    face_id=int(row["face_id"]),
                    gsd=opt(row["gsd"]),
                    redundancy=int(row["redundancy"]),
                    reproj_error=opt(row["reproj_error"]),
                    q_total=opt(row["q_total"]),
                ))
        except ValueError as e:
            raise IngestionError(f"{path}: riga CSV non valida ({e})") from e
    return records


_CLUSTER_PALETTE = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
)


def write_cluster_ply(path: Path, mesh: SurfaceMesh, face_cluster: Dict[int, int]) -> None:
    """Mesh con le facce colorate per cluster (grigio fuori dai cluster)."""
    colors = [UNKNOWN_COLOR] * len(mesh)
    for face, k in face_cluster.items():
        colors[face] = _CLUSTER_PALETTE[k % len(_CLUSTER_PALETTE)]
    write_mesh_ply(path, mesh, colors)
