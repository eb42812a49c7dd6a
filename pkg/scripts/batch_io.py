# -*- coding: utf-8 -*-
"""
Formato testuale dei batch (pose + tracce), scambiato tra simulatore,
pipeline e replay:

    ONTHEFLY-BATCH 1
    BATCH <id>
    VIEW id cx cy cz r00 r01 r02 r10 r11 r12 r20 r21 r22 f px py w h
    TRACK id x y z [view_id u v]...

Righe vuote e commenti (#) ignorati. Float con 17 cifre significative,
quindi scrittura + lettura restituiscono esattamente gli stessi valori.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from geometry_core import Intrinsics, Point3, ViewPose
from recon_errors import GeometryError, IngestionError

FORMAT_HEADER = "ONTHEFLY-BATCH"
FORMAT_VERSION = 1

Observation = Tuple[int, float, float]   # (view_id, u, v)


@dataclass(frozen=True)
class SparseTrack:
    track_id: int
    point: Point3
    observations: Tuple[Observation, ...]

    def view_ids(self) -> List[int]:
        return [o[0] for o in self.observations]


@dataclass(frozen=True)
class ObservationBatch:
    batch_id: int
    views: Tuple[ViewPose, ...]
    tracks: Tuple[SparseTrack, ...]

    def is_empty(self) -> bool:
        return not self.views and not self.tracks


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def format_batch(batch: ObservationBatch) -> str:
    lines = [f"{FORMAT_HEADER} {FORMAT_VERSION}", f"BATCH {batch.batch_id}"]
    for v in batch.views:
        k = v.intrinsics
        vals = list(v.center) + list(np.asarray(v.rotation, dtype=float).ravel()) + [k.focal, k.cx, k.cy]
        lines.append(f"VIEW {v.view_id} " + " ".join(_fmt(x) for x in vals) + f" {k.width} {k.height}")
    for t in batch.tracks:
        row = f"TRACK {t.track_id} " + " ".join(_fmt(x) for x in t.point)
        for view_id, u, w in t.observations:
            row += f" {view_id} {_fmt(u)} {_fmt(w)}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def write_batch(path: Path, batch: ObservationBatch) -> None:
    Path(path).write_text(format_batch(batch), encoding="utf-8")


def _parse_view(fields: Sequence[str], where: str) -> ViewPose:
    if len(fields) != 18:
        raise IngestionError(f"{where}: VIEW richiede 18 campi, trovati {len(fields)}")
    vals = [float(x) for x in fields[1:16]]
    intrinsics = Intrinsics(focal=vals[12], cx=vals[13], cy=vals[14], width=int(fields[16]), height=int(fields[17]))
    return ViewPose(
        view_id=int(fields[0]),
        center=Point3(*vals[0:3]),
        rotation=np.array(vals[3:12], dtype=float).reshape(3, 3),
        intrinsics=intrinsics,
    )


def _parse_track(fields: Sequence[str], where: str) -> SparseTrack:
    if len(fields) < 4 or (len(fields) - 4) % 3 != 0:
        raise IngestionError(f"{where}: TRACK malformata ({len(fields)} campi)")
    obs = tuple(
        (int(fields[k]), float(fields[k + 1]), float(fields[k + 2]))
        for k in range(4, len(fields), 3)
    )
    point = Point3(float(fields[1]), float(fields[2]), float(fields[3]))
    if not all(np.isfinite(point)):
        raise IngestionError(f"{where}: coordinate non finite")
    return SparseTrack(track_id=int(fields[0]), point=point, observations=obs)


def parse_batch(text: str, source: str = "<batch>") -> ObservationBatch:
    lines = [(n, l.strip()) for n, l in enumerate(text.splitlines(), start=1)]
    lines = [(n, l) for n, l in lines if l and not l.startswith("#")]
    if not lines:
        raise IngestionError(f"{source}: file vuoto")
    head = lines[0][1].split()
    if len(head) != 2 or head[0] != FORMAT_HEADER:
        raise IngestionError(f"{source}: header mancante ({FORMAT_HEADER} <versione>)")
    if head[1] != str(FORMAT_VERSION):
        raise IngestionError(f"{source}: versione {head[1]} non supportata")

    batch_id = 0
    views: List[ViewPose] = []
    tracks: List[SparseTrack] = []
    for n, line in lines[1:]:
        kind, *fields = line.split()
        where = f"{source}:{n}"
        try:
            if kind == "BATCH":
                batch_id = int(fields[0])
            elif kind == "VIEW":
                views.append(_parse_view(fields, where))
            elif kind == "TRACK":
                tracks.append(_parse_track(fields, where))
            else:
                raise IngestionError(f"{where}: record sconosciuto {kind!r}")
        except (ValueError, IndexError, GeometryError) as e:
            raise IngestionError(f"{where}: {e}") from e
    return ObservationBatch(batch_id=batch_id, views=tuple(views), tracks=tuple(tracks))


def read_batch(path: Path) -> ObservationBatch:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"file batch non trovato: {path}")
    return parse_batch(path.read_text(encoding="utf-8"), str(path))


def batch_files(directory: Path) -> List[Path]:
    """batch_*.txt della cartella in ordine di nome."""
    directory = Path(directory)
    if not directory.is_dir():
        raise IngestionError(f"cartella batch non trovata: {directory}")
    return sorted(directory.glob("batch_*.txt"))
