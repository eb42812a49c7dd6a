# -*- coding: utf-8 -*-
"""
Loop explore-and-exploit: per ogni batch di immagini

  ingestione pose/tracce -> inserimenti Delaunay -> aggiornamento energia
  (solo raggi modificati) -> taglio dinamico -> estrazione superficie ->
  filtro outlier -> visibilita' + qualita' -> piano della traiettoria

La traiettoria prodotta viene volata (simulatore) prima del batch successivo.
Ogni iterazione lavora su una copia dello stato: in caso di errore lo stato
del chiamante resta quello precedente al batch.

CLI:
  pipeline.py run --config <path> --scene-seed N --out <dir>
  pipeline.py replay --batches <dir> [--out <dir>]
  pipeline.py eval --mesh <ply> --truth <ply> --d <metri>
  pipeline.py plan --mesh <ply> --quality <csv>
Exit code: 0 successo, 2 configurazione, 3 ingestione, 4 errore numerico.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Collection, Dict, List, Optional, Sequence, Tuple

import numpy as np

from batch_io import ObservationBatch, SparseTrack, batch_files, read_batch, write_batch
from delaunay_engine import BatchDelta, TetComplex, bootstrap, merge_deltas
from eval_metrics import EvalReport, evaluate, evaluate_mesh, sample_mesh, write_report
from geometry_core import Point3, ViewPose
from loop_config import LoopConfig, format_config, load_config
from mesh_io import (
    mesh_from_arrays, read_ply, read_quality_csv, write_cluster_ply, write_quality_csv,
    write_quality_ply,
)
from path_planner import PlannerSettings, PlanResult, plan, trajectory_summary
from quality_assessor import (
    Measurements, QualityAnchors, QualityRecord, assess_quality, mean_quality, percentile_anchors,
)
from recon_errors import DegenerateInputError, DuplicatePointError, IngestionError, NumericalError, ReconError
from recon_utils import scene_diagonal
from scene_simulator import SceneCapture, SyntheticScene, generate_scene, preset_trajectory, write_scene_ply
from surface_extractor import (
    EnergyGraph, EnergyParams, EnergyUpdate, FilterStats, RayStore, SightRay, SurfaceMesh,
    extract_surface, filter_outliers, solve_cut, update_energy,
)

logger = logging.getLogger(__name__)

DEFAULT_OUTPUT = Path(__file__).resolve().parent.parent / "data" / "output"
TIMING_HEADER = [
    "batch_id", "images", "per_image_s", "snapshot_ms", "insert_ms", "energy_ms", "modified_rays",
    "total_rays", "cut_ms", "quality_ms", "trajectory_ms",
]


# =============================
# Stato
# =============================

@dataclass(frozen=True)
class TimingRow:
    batch_id: int
    images: int
    per_image_s: float
    snapshot_ms: float          # copia dello stato per il ripristino
    insert_ms: float
    energy_ms: float
    modified_rays: int
    total_rays: int
    cut_ms: float
    quality_ms: float
    trajectory_ms: float


@dataclass
class LoopState:
    config: LoopConfig
    complex: Optional[TetComplex] = None
    graph: Optional[EnergyGraph] = None
    store: RayStore = field(default_factory=RayStore)
    views: Dict[int, ViewPose] = field(default_factory=dict)
    track_vertex: Dict[int, int] = field(default_factory=dict)
    waiting: Dict[int, SparseTrack] = field(default_factory=dict)   # tracce prima del bootstrap
    measurements: Measurements = field(default_factory=dict)
    mesh: SurfaceMesh = field(default_factory=lambda: SurfaceMesh(points=np.full((1, 3), np.nan)))
    records: List[QualityRecord] = field(default_factory=list)
    anchors: Optional[QualityAnchors] = None
    plan: Optional[PlanResult] = None
    timings: List[TimingRow] = field(default_factory=list)
    batches: int = 0

    @classmethod
    def initial(cls, config: LoopConfig) -> "LoopState":
        params = EnergyParams(config.alpha_free, config.alpha_occ, config.alpha_con, config.smooth_lambda)
        return cls(config=config, graph=EnergyGraph(params))

    def scene_diagonal(self) -> float:
        if self.complex is None:
            return 0.0
        return scene_diagonal(self.complex.vertices[1:])

    def ordered_views(self) -> List[ViewPose]:
        return [self.views[k] for k in sorted(self.views)]


@dataclass
class BatchArtifacts:
    batch_id: int
    mesh: SurfaceMesh
    records: List[QualityRecord]
    plan: Optional[PlanResult]
    update: Optional[EnergyUpdate]
    cut_value: int
    filter_stats: List[FilterStats]
    timing: TimingRow


# =============================
# Iterazione
# =============================

def _ingest_views(state: LoopState, batch: ObservationBatch) -> None:
    for view in batch.views:
        if view.view_id in state.views:
            raise IngestionError(f"vista {view.view_id} gia' registrata")
        state.views[view.view_id] = view
    for track in batch.tracks:
        for view_id, _, _ in track.observations:
            if view_id not in state.views:
                raise IngestionError(f"traccia {track.track_id}: vista {view_id} sconosciuta")


def _insert_tracks(state: LoopState, tracks: Sequence[SparseTrack]) -> Tuple[Optional[BatchDelta], List[SparseTrack]]:
    """Nuovi vertici per le tracce mai viste; ritorna il delta cumulato e le tracce pronte per i raggi."""
    cfg = state.config
    if state.complex is None:
        for t in tracks:
            old = state.waiting.get(t.track_id)
            state.waiting[t.track_id] = t if old is None else SparseTrack(t.track_id, old.point, old.observations + t.observations)
        pts = [state.waiting[k].point for k in sorted(state.waiting)]
        if len(pts) < 4:
            return None, []
        try:
            state.complex = bootstrap(pts, cfg.dup_tolerance_factor * scene_diagonal(pts), seed=cfg.seed)
        except DegenerateInputError as e:
            logger.warning("⚠️ bootstrap rimandato: %s", e)
            return None, []
        ready = [state.waiting[k] for k in sorted(state.waiting)]
        state.waiting.clear()
        for t in ready:
            v = state.complex.lookup(t.point)
            if v is None:
                raise NumericalError(f"traccia {t.track_id} non presente dopo il bootstrap")
            state.track_vertex[t.track_id] = v
        created = frozenset(state.complex.cells)
        delta = BatchDelta(tuple(range(1, len(state.complex.vertices))), frozenset(), created)
        return delta, ready

    deltas = []
    for t in tracks:
        if t.track_id in state.track_vertex:
            continue
        try:
            d = state.complex.insert(t.point)
            deltas.append(d)
            state.track_vertex[t.track_id] = d.new_point_index
        except DuplicatePointError as e:
            state.track_vertex[t.track_id] = e.existing_index
    return merge_deltas(deltas), list(tracks)


def _sight_rays(state: LoopState, tracks: Sequence[SparseTrack]) -> List[SightRay]:
    rays = []
    for t in tracks:
        v = state.track_vertex[t.track_id]
        target = state.complex.vertices[v]
        obs = state.measurements.setdefault(v, {})
        for view_id, u, w in t.observations:
            obs[view_id] = (u, w)
            center = state.views[view_id].center
            rays.append(SightRay(ray_id=(t.track_id, view_id), camera=Point3(*center), vertex=v, target=target))
    return rays


def _process(state: LoopState, batch: ObservationBatch, replan: bool = True, snapshot_ms: float = 0.0) -> BatchArtifacts:
    cfg = state.config
    t0 = time.perf_counter()
    _ingest_views(state, batch)
    delta, ready = _insert_tracks(state, batch.tracks)
    t_insert = time.perf_counter()

    update = None
    if delta is not None:
        update = update_energy(state.complex, delta, _sight_rays(state, ready), state.store, state.graph, cfg.workers)
    t_energy = time.perf_counter()

    cut_value = 0
    stats: List[FilterStats] = []
    if state.complex is not None:
        cut = solve_cut(state.graph, state.complex)
        cut_value = cut.cut_value
        raw = extract_surface(state.complex, cut.labels)
        state.mesh = filter_outliers(raw, cfg.filter_k, cfg.filter_iterations, stats)
    t_cut = time.perf_counter()

    d_scene = state.scene_diagonal()
    state.records, _ = assess_quality(
        state.mesh, state.ordered_views(), state.measurements, d_scene,
        resolution_scale=cfg.resolution_scale, weights=cfg.quality_weights, anchors=state.anchors,
        workers=cfg.workers, depth_tolerance_factor=cfg.depth_tolerance_factor,
        percentiles=(cfg.percentile_low, cfg.percentile_high), floor=cfg.inverse_floor,
    )
    if state.anchors is None and any(r.redundancy > 0 for r in state.records):
        state.anchors = percentile_anchors(state.records, cfg.percentile_low, cfg.percentile_high, cfg.inverse_floor)
    t_quality = time.perf_counter()

    # un solo piano per iterazione: i batch intermedi non pianificano
    state.plan = None
    if replan and len(state.mesh) and state.views:
        cams = np.array([v.center for v in state.ordered_views()], dtype=float)
        start = batch.views[-1].center if batch.views else cams[-1]
        state.plan = plan(state.mesh, state.records, cams, start, d_scene, PlannerSettings.from_config(cfg), cfg.seed)
    t_plan = time.perf_counter()

    def ms(a: float, b: float) -> float:
        return (b - a) * 1000.0

    timing = TimingRow(
        batch_id=batch.batch_id,
        images=len(batch.views),
        per_image_s=(t_plan - t0 + snapshot_ms / 1000.0) / max(1, len(batch.views)),
        snapshot_ms=snapshot_ms,
        insert_ms=ms(t0, t_insert),
        energy_ms=ms(t_insert, t_energy),
        modified_rays=len(update.modified) if update else 0,
        total_rays=state.store.active_count(),
        cut_ms=ms(t_energy, t_cut),
        quality_ms=ms(t_cut, t_quality),
        trajectory_ms=ms(t_quality, t_plan),
    )
    state.timings.append(timing)
    state.batches += 1
    return BatchArtifacts(batch.batch_id, state.mesh, state.records, state.plan, update, cut_value, stats, timing)


def run_iteration(state: LoopState, batch: ObservationBatch, replan: bool = True) -> Tuple[LoopState, BatchArtifacts]:
    """
    Un ciclo completo su un batch; lo stato in ingresso non viene mai modificato.
    replan=False salta la pianificazione (batch intermedi di un'iterazione).
    """
    if batch.is_empty():
        raise IngestionError(f"batch {batch.batch_id} vuoto")
    t0 = time.perf_counter()
    work = copy.deepcopy(state)
    snapshot_ms = (time.perf_counter() - t0) * 1000.0
    try:
        artifacts = _process(work, batch, replan, snapshot_ms)
    except ReconError:
        logger.error("❌ batch %d annullato: stato ripristinato", batch.batch_id)
        raise
    except (ValueError, ArithmeticError) as e:
        logger.error("❌ batch %d annullato: stato ripristinato", batch.batch_id)
        raise NumericalError(f"batch {batch.batch_id}: {e}") from e
    logger.info("✅ batch %d: %d facce, %d raggi attivi, %.3f s/immagine",
                batch.batch_id, len(artifacts.mesh), artifacts.timing.total_rays, artifacts.timing.per_image_s)
    return work, artifacts


# =============================
# Artefatti
# =============================

def write_artifacts(out_dir: Path, artifacts: BatchArtifacts, stable: bool = True) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tag = f"{artifacts.batch_id:03d}"
    write_quality_ply(out_dir / f"mesh_{tag}.ply", artifacts.mesh, artifacts.records)
    write_quality_csv(out_dir / f"quality_{tag}.csv", artifacts.records)
    if artifacts.plan is not None:
        summary = trajectory_summary(artifacts.plan, include_timing=not stable)
        (out_dir / f"trajectory_{tag}.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
        face_cluster = {f: c.cluster_id for c in artifacts.plan.clusters for f in c.members}
        if face_cluster:
            write_cluster_ply(out_dir / f"clusters_{tag}.ply", artifacts.mesh, face_cluster)
    _append_timing(out_dir / "timings.csv", artifacts.timing)


def _append_timing(path: Path, row: TimingRow) -> None:
    new = not path.exists()
    with path.open("a", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        if new:
            writer.writerow(TIMING_HEADER)
        writer.writerow([getattr(row, k) for k in TIMING_HEADER])


def timing_stability(rows: Sequence[TimingRow]) -> float:
    """max / mediana del tempo per immagine (batch con immagini)."""
    values = [r.per_image_s for r in rows if r.images > 0]
    if not values:
        return 0.0
    med = statistics.median(values)
    return max(values) / med if med > 0 else 0.0


# =============================
# Loop chiuso
# =============================

@dataclass(frozen=True)
class IterationReport:
    iteration: int
    batches: int
    views: int
    faces: int
    mean_quality: float
    viewpoint_count: int
    trajectory_length: float
    evaluation: EvalReport
    plan_batch: Optional[int] = None    # batch dopo cui e' stato prodotto il piano


@dataclass
class LoopReport:
    scene_seed: int
    iterations: List[IterationReport] = field(default_factory=list)
    converged: bool = False
    timing: Optional[Dict[str, float]] = None

    def to_dict(self) -> dict:
        return {
            "scene_seed": self.scene_seed,
            "converged": self.converged,
            "iterations": [asdict(it) for it in self.iterations],
            "timing": self.timing,
        }


def _chunks(items: Sequence, size: int) -> List[Sequence]:
    return [items[k:k + size] for k in range(0, len(items), size)]


def run_closed_loop(config: LoopConfig, scene_seed: Optional[int] = None, out_dir: Optional[Path] = None,
                    scene: Optional[SyntheticScene] = None) -> LoopReport:
    """
    Volo della traiettoria preset, poi delle traiettorie pianificate, fino al
    limite di iterazioni o finche' il pianificatore non seleziona piu' viewpoint.
    """
    seed = config.scene_seed if scene_seed is None else scene_seed
    if scene is None:
        scene = generate_scene(seed, config.scene_extent, config.building_count, config.feature_density,
                               config.gt_sample_density, config.sigma_3d)
    capture = SceneCapture(scene, config.sigma_px, seed=config.seed, workers=config.workers)
    state = LoopState.initial(config)
    report = LoopReport(scene_seed=seed)
    if out_dir is not None:
        out_dir = Path(out_dir)
        (out_dir / "batches").mkdir(parents=True, exist_ok=True)
        (out_dir / "timings.csv").unlink(missing_ok=True)
        write_scene_ply(out_dir / "scene.ply", scene)
        (out_dir / "config.conf").write_text(format_config(config), encoding="utf-8")

    waypoints = list(preset_trajectory(config.initial_preset, scene).waypoints)
    for iteration in range(1, config.iteration_cap + 1):
        captured = [capture.capture(chunk) for chunk in _chunks(waypoints, config.batch_size)]
        captured = [b for b in captured if not b.is_empty()]
        if not captured:
            logger.warning("⚠️ iterazione %d senza osservazioni: loop interrotto", iteration)
            break
        for k, batch in enumerate(captured):
            state, artifacts = run_iteration(state, batch, replan=k == len(captured) - 1)
            if out_dir is not None:
                write_batch(out_dir / "batches" / f"batch_{batch.batch_id:03d}.txt", batch)
                write_artifacts(out_dir, artifacts, config.stable_artifacts)

        evaluation = evaluate_mesh(state.mesh, scene.truth_points, scene.diagonal,
                                   config.eval_threshold_factor * scene.diagonal, config.eval_sample_density, config.seed)
        selected = len(state.plan.selected) if state.plan else 0
        report.iterations.append(IterationReport(
            iteration=iteration, batches=len(captured), views=len(state.views), faces=len(state.mesh),
            mean_quality=mean_quality(state.records), viewpoint_count=selected,
            trajectory_length=state.plan.trajectory.length() if state.plan else 0.0,
            evaluation=evaluation, plan_batch=captured[-1].batch_id if state.plan else None,
        ))
        print(f"🔄 Iterazione {iteration}: {len(state.mesh)} facce, Q medio {mean_quality(state.records):.4f}, "
              f"F-score {evaluation.f_score:.2f}, {selected} viewpoint")
        if state.plan is None:
            logger.warning("⚠️ nessuna superficie ricostruita: loop interrotto")
            break
        if state.plan.converged:
            report.converged = True
            break
        # il primo waypoint e' la posizione attuale
        waypoints = list(state.plan.trajectory.waypoints[1:])

    if not config.stable_artifacts:
        planned = [r.trajectory_ms for r in state.timings if r.trajectory_ms > 0.0]
        report.timing = {
            "median_per_image_s": statistics.median([r.per_image_s for r in state.timings]) if state.timings else 0.0,
            "stability_ratio": timing_stability(state.timings),
            "mean_trajectory_ms": float(np.mean(planned)) if planned else 0.0,
        }
    if out_dir is not None:
        (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return report


def replay(batch_dir: Path, config: LoopConfig, out_dir: Optional[Path] = None,
           plan_batches: Optional[Collection[int]] = None) -> LoopState:
    """
    Riesegue i batch registrati (senza simulatore), scrivendo gli stessi artefatti.
    plan_batches: batch dopo cui pianificare (None = dopo ogni batch).
    """
    files = batch_files(batch_dir)
    if not files:
        raise IngestionError(f"nessun batch_*.txt in {batch_dir}")
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "timings.csv").unlink(missing_ok=True)
    state = LoopState.initial(config)
    for path in files:
        batch = read_batch(path)
        replan = plan_batches is None or batch.batch_id in plan_batches
        state, artifacts = run_iteration(state, batch, replan)
        if out_dir is not None:
            write_artifacts(out_dir, artifacts, config.stable_artifacts)
    return state


# =============================
# CLI
# =============================

def _cmd_run(args) -> int:
    config = load_config(args.config, scene_seed=args.scene_seed, workers=args.workers)
    out_dir = Path(args.out)
    print(f"📋 Scena seed {config.scene_seed}, preset {config.initial_preset}, batch {config.batch_size}")
    report = run_closed_loop(config, out_dir=out_dir)
    status = "convergenza" if report.converged else "limite iterazioni"
    print(f"✅ Loop terminato ({status}) dopo {len(report.iterations)} iterazioni: {out_dir / 'report.json'}")
    return 0


def _plan_batches(report_path: Path) -> Optional[List[int]]:
    """Batch pianificati secondo il report.json della corsa; None se il report manca."""
    if not report_path.exists():
        return None
    try:
        data = json.loads(report_path.read_text(encoding="utf-8"))
        return [it["plan_batch"] for it in data["iterations"] if it.get("plan_batch") is not None]
    except (ValueError, KeyError, TypeError) as e:
        raise IngestionError(f"{report_path}: report non leggibile: {e}") from e


def _cmd_replay(args) -> int:
    config_path = args.config
    if config_path is None and (Path(args.batches).parent / "config.conf").exists():
        config_path = Path(args.batches).parent / "config.conf"
    config = load_config(config_path)
    out_dir = Path(args.out) if args.out else Path(args.batches).parent / "replay"
    state = replay(Path(args.batches), config, out_dir, _plan_batches(Path(args.batches).parent / "report.json"))
    print(f"✅ Replay di {state.batches} batch: {len(state.mesh)} facce, artefatti in {out_dir}")
    return 0


def _load_points(path: Path, density: float, seed: int) -> np.ndarray:
    pts, tris, _ = read_ply(path)
    if len(tris):
        return sample_mesh(mesh_from_arrays(pts, tris), density, seed)
    return pts


def _cmd_eval(args) -> int:
    config = load_config(args.config)
    rec = _load_points(Path(args.mesh), config.eval_sample_density, config.seed)
    truth = _load_points(Path(args.truth), config.gt_sample_density, config.seed)
    report = evaluate(rec, truth, args.d)
    print(f"📋 d={report.d:g}  P={report.precision:.2f}%  R={report.recall:.2f}%  F={report.f_score:.2f}%")
    if args.out:
        write_report(Path(args.out), report)
    return 0


def _cmd_plan(args) -> int:
    config = load_config(args.config)
    pts, tris, _ = read_ply(Path(args.mesh))
    mesh = mesh_from_arrays(pts, tris)
    records = read_quality_csv(Path(args.quality))
    if len(records) != len(mesh):
        raise IngestionError(f"{len(records)} record di qualita' per {len(mesh)} facce")
    d_scene = scene_diagonal(pts)
    if args.start:
        start = np.array(args.start, dtype=float)
    else:
        top = pts.max(axis=0) if len(pts) else np.zeros(3)
        start = np.array([pts[:, 0].mean(), pts[:, 1].mean(), top[2] + 0.25 * d_scene]) if len(pts) else top
    result = plan(mesh, records, np.zeros((0, 3)), start, d_scene, PlannerSettings.from_config(config), config.seed)
    summary = trajectory_summary(result, include_timing=not config.stable_artifacts)
    out = Path(args.out) if args.out else Path(args.mesh).with_suffix(".trajectory.json")
    out.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    print(f"✅ {len(result.selected)} viewpoint, lunghezza {result.trajectory.length():.2f} m -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Ricostruzione incrementale con feedback di qualita' per UAV")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Loop chiuso sul simulatore")
    p.add_argument("--config", type=Path, default=None, help="File key=value")
    p.add_argument("--scene-seed", type=int, default=None, help="Seed della scena sintetica")
    p.add_argument("--workers", type=int, default=None, help="Thread per le fasi parallele")
    p.add_argument("--out", type=Path, default=DEFAULT_OUTPUT / "run", help="Cartella degli artefatti")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("replay", help="Riesegue una corsa registrata")
    p.add_argument("--batches", type=Path, required=True, help="Cartella con batch_*.txt")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("eval", help="Precisione / recall / F-score contro il ground truth")
    p.add_argument("--mesh", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--d", type=float, required=True, help="Soglia in metri")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None, help="Report JSON")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("plan", help="Solo pianificazione da mesh + qualita'")
    p.add_argument("--mesh", type=Path, required=True)
    p.add_argument("--quality", type=Path, required=True)
    p.add_argument("--start", type=float, nargs=3, default=None, metavar=("X", "Y", "Z"))
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=_cmd_plan)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ReconError as e:
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
