# -*- coding: utf-8 -*-
"""
Configurazione del loop: file piatto key=value, commenti con '#'.

Ogni chiave corrisponde a un campo di LoopConfig; chiavi sconosciute,
valori non convertibili o fuori intervallo -> ConfigError (exit code 2).
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

from recon_errors import ConfigError
from recon_utils import (
    ALPHA_CON, ALPHA_FREE, ALPHA_OCC, ALTITUDE_WEIGHT, BATCH_SIZE, BUILDING_COUNT, CLUSTER_EDGE_FACTOR,
    CLUSTER_EPS_FACTOR, CLUSTER_MIN_FRACTION, CLUSTER_MIN_SIZE, DEPTH_TOLERANCE_FACTOR, DUP_TOLERANCE_FACTOR,
    EVAL_SAMPLE_DENSITY, EVAL_THRESHOLD_FACTOR, FEATURE_DENSITY, FILTER_ITERATIONS, FILTER_K, GT_SAMPLE_DENSITY,
    INVERSE_FLOOR, ITERATION_CAP, MAX_SAMPLES_PER_CLUSTER, MIN_CLEARANCE_FACTOR, MIN_SPACING_FACTOR, OBB_ALPHA,
    OBB_INFLATE_FACTOR, PERCENTILE_HIGH, PERCENTILE_LOW, RANSAC_DIST_FACTOR, RANSAC_ITERATIONS,
    RANSAC_MIN_INLIER_RATIO, RESOLUTION_SCALE, SAMPLE_FRACTIONS, SCENE_EXTENT, SIGMA_3D, SIGMA_PX, SMOOTH_LAMBDA,
    SPARSIFY_CAP, TAU_QUALITY_PERCENTILE, TWO_OPT_MAX_PASSES, UNDERSIDE_COS, W_GSD, W_REDUNDANCY, W_REPROJ,
)

logger = logging.getLogger(__name__)

PRESETS = ("nadir", "circle")


@dataclass(frozen=True)
class LoopConfig:
    # loop
    batch_size: int = BATCH_SIZE
    iteration_cap: int = ITERATION_CAP
    initial_preset: str = "nadir"
    workers: int = 1
    stable_artifacts: bool = True
    seed: int = 0
    # simulatore
    scene_seed: int = 0
    scene_extent: float = SCENE_EXTENT
    building_count: int = BUILDING_COUNT
    feature_density: float = FEATURE_DENSITY
    sigma_px: float = SIGMA_PX
    sigma_3d: float = SIGMA_3D
    # ricostruzione
    dup_tolerance_factor: float = DUP_TOLERANCE_FACTOR
    alpha_free: float = ALPHA_FREE
    alpha_occ: float = ALPHA_OCC
    alpha_con: float = ALPHA_CON
    smooth_lambda: float = SMOOTH_LAMBDA
    filter_k: float = FILTER_K
    filter_iterations: int = FILTER_ITERATIONS
    # qualita'
    resolution_scale: float = RESOLUTION_SCALE
    depth_tolerance_factor: float = DEPTH_TOLERANCE_FACTOR
    w_gsd: float = W_GSD
    w_redundancy: float = W_REDUNDANCY
    w_reproj: float = W_REPROJ
    percentile_low: float = PERCENTILE_LOW
    percentile_high: float = PERCENTILE_HIGH
    inverse_floor: float = INVERSE_FLOOR
    # pianificazione (tau_quality None = percentile tau_percentile)
    tau_quality: Optional[float] = None
    tau_percentile: float = TAU_QUALITY_PERCENTILE
    cluster_eps_factor: float = CLUSTER_EPS_FACTOR
    cluster_edge_factor: float = CLUSTER_EDGE_FACTOR
    cluster_min_size: int = CLUSTER_MIN_SIZE
    cluster_min_fraction: float = CLUSTER_MIN_FRACTION
    underside_cos: float = UNDERSIDE_COS
    ransac_dist_factor: float = RANSAC_DIST_FACTOR
    ransac_iterations: int = RANSAC_ITERATIONS
    ransac_min_inlier_ratio: float = RANSAC_MIN_INLIER_RATIO
    obb_alpha: float = OBB_ALPHA
    obb_inflate_factor: float = OBB_INFLATE_FACTOR
    max_samples_per_cluster: int = MAX_SAMPLES_PER_CLUSTER
    sample_fractions: Tuple[float, ...] = SAMPLE_FRACTIONS
    min_clearance_factor: float = MIN_CLEARANCE_FACTOR
    sparsify_cap: int = SPARSIFY_CAP
    min_spacing_factor: float = MIN_SPACING_FACTOR
    altitude_weight: float = ALTITUDE_WEIGHT
    two_opt_max_passes: int = TWO_OPT_MAX_PASSES
    # valutazione
    eval_threshold_factor: float = EVAL_THRESHOLD_FACTOR
    eval_sample_density: float = EVAL_SAMPLE_DENSITY
    gt_sample_density: float = GT_SAMPLE_DENSITY

    @property
    def quality_weights(self) -> Tuple[float, float, float]:
        return (self.w_gsd, self.w_redundancy, self.w_reproj)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _positive(x) -> bool:
    return x > 0


def _non_negative(x) -> bool:
    return x >= 0


def _unit(x) -> bool:
    return 0 <= x <= 1


def _percent(x) -> bool:
    return 0 <= x <= 100


# campo -> (controllo, descrizione dell'intervallo)
_RANGES: Dict[str, Tuple[Callable[[Any], bool], str]] = {
    "batch_size": (_positive, ">= 1"),
    "iteration_cap": (_positive, ">= 1"),
    "initial_preset": (lambda v: v in PRESETS, " | ".join(PRESETS)),
    "workers": (_positive, ">= 1"),
    "seed": (_non_negative, ">= 0"),
    "scene_seed": (_non_negative, ">= 0"),
    "scene_extent": (_positive, "> 0"),
    "building_count": (_non_negative, ">= 0"),
    "feature_density": (_positive, "> 0"),
    "sigma_px": (_non_negative, ">= 0"),
    "sigma_3d": (_non_negative, ">= 0"),
    "dup_tolerance_factor": (_non_negative, ">= 0"),
    "alpha_free": (_non_negative, ">= 0"),
    "alpha_occ": (_non_negative, ">= 0"),
    "alpha_con": (_non_negative, ">= 0"),
    "smooth_lambda": (_non_negative, ">= 0"),
    "filter_k": (_non_negative, ">= 0"),
    "filter_iterations": (_non_negative, ">= 0"),
    "resolution_scale": (lambda v: 0 < v <= 1, "(0, 1]"),
    "depth_tolerance_factor": (_non_negative, ">= 0"),
    "w_gsd": (_unit, "[0, 1]"),
    "w_redundancy": (_unit, "[0, 1]"),
    "w_reproj": (_unit, "[0, 1]"),
    "percentile_low": (_percent, "[0, 100]"),
    "percentile_high": (_percent, "[0, 100]"),
    "inverse_floor": (_positive, "> 0"),
    "tau_quality": (lambda v: v is None or 0 <= v <= 1, "auto | [0, 1]"),
    "tau_percentile": (_percent, "[0, 100]"),
    "cluster_eps_factor": (_positive, "> 0"),
    "cluster_edge_factor": (_non_negative, ">= 0"),
    "cluster_min_size": (_positive, ">= 1"),
    "cluster_min_fraction": (_unit, "[0, 1]"),
    "underside_cos": (_unit, "[0, 1]"),
    "ransac_dist_factor": (_positive, "> 0"),
    "ransac_iterations": (_positive, ">= 1"),
    "ransac_min_inlier_ratio": (_unit, "[0, 1]"),
    "obb_alpha": (lambda v: 0 < v <= 1, "(0, 1]"),
    "obb_inflate_factor": (_positive, "> 0"),
    "max_samples_per_cluster": (_positive, ">= 1"),
    "sample_fractions": (lambda v: len(v) > 0 and all(0 < x <= 1 for x in v), "lista non vuota in (0, 1]"),
    "min_clearance_factor": (_non_negative, ">= 0"),
    "sparsify_cap": (_positive, ">= 1"),
    "min_spacing_factor": (_non_negative, ">= 0"),
    "altitude_weight": (_non_negative, ">= 0"),
    "two_opt_max_passes": (_positive, ">= 1"),
    "eval_threshold_factor": (_positive, "> 0"),
    "eval_sample_density": (_positive, "> 0"),
    "gt_sample_density": (_positive, "> 0"),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, raw: str, default: Any) -> Any:
    if name == "tau_quality":
        return None if raw.lower() in ("", "auto", "none") else float(raw)
    if isinstance(default, tuple):
        return tuple(_coerce(name, part.strip(), default[0]) for part in raw.split(",") if part.strip())
    if isinstance(default, bool):
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"booleano non valido {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError(f"valore non finito {raw!r}")
        return value
    return raw


def validate(config: LoopConfig) -> LoopConfig:
    for name, (check, expected) in _RANGES.items():
        value = getattr(config, name)
        if not check(value):
            raise ConfigError(f"{name} = {value!r} fuori intervallo (atteso {expected})")
    if not math.isclose(sum(config.quality_weights), 1.0, abs_tol=1e-9):
        raise ConfigError(f"w_gsd + w_redundancy + w_reproj deve valere 1, trovato {sum(config.quality_weights)}")
    if not config.percentile_low < config.percentile_high:
        raise ConfigError(f"percentile_low = {config.percentile_low} deve essere minore di percentile_high = {config.percentile_high}")
    if not 5 <= config.batch_size <= 20:
        logger.warning("⚠️ batch_size=%d fuori dall'intervallo consigliato 5-20", config.batch_size)
    return config


def parse_config(text: str, source: str = "<config>", **overrides: Any) -> LoopConfig:
    defaults = {f.name: f.default for f in fields(LoopConfig)}
    values: Dict[str, Any] = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: riga senza '=': {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"{source}:{n}: chiave sconosciuta {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{n}: chiave {key!r} ripetuta")
        try:
            values[key] = _coerce(key, raw, defaults[key])
        except ValueError as e:
            raise ConfigError(f"{source}:{n}: {key}: {e}") from e
    for key, value in overrides.items():
        if key not in defaults:
            raise ConfigError(f"override sconosciuto {key!r}")
        if value is not None:
            values[key] = value
    return validate(LoopConfig(**values))


def load_config(path: Optional[Path] = None, **overrides: Any) -> LoopConfig:
    """Config da file (None -> solo default), con override da riga di comando."""
    if path is None:
        return parse_config("", **overrides)
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file di configurazione non trovato: {path}")
    return parse_config(path.read_text(encoding="utf-8"), str(path), **overrides)


def format_config(config: LoopConfig) -> str:
    """Serializzazione key=value (stesso formato di load_config)."""
    lines = []
    for name, value in config.to_dict().items():
        if value is None:
            value = "auto"
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = "%.17g" % value
        elif isinstance(value, tuple):
            value = ", ".join("%.17g" % x for x in value)
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"
