# -*- coding: utf-8 -*-
"""
Costanti e helper comuni per delaunay_engine, surface_extractor,
quality_assessor, path_planner, scene_simulator e pipeline.
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

# --- COSTANTI GLOBALI TUNABILI ---

# Energia di visibilita' (pesi per singolo raggio)
ALPHA_FREE = 1000.0          # link sorgente sulla prima cella attraversata (T0)
ALPHA_OCC = 1000.0           # link pozzo sulla cella dietro il punto (T_S)
ALPHA_CON = 100.0            # peso per ogni faccetta attraversata (e per f*)
SMOOTH_LAMBDA = 1.0          # lambda dell'energia: il termine smooth porta gia' alpha_con
CAPACITY_SCALE = 1000        # capacita' in virgola fissa (interi), tagli esatti
INFINITE_CAPACITY = 10 ** 15  # link sorgente delle celle infinite (sempre outside)

# Delaunay
DUP_TOLERANCE_FACTOR = 1e-7  # eps_dup = fattore * diagonale scena
WALK_MAX_STEPS = 100000      # oltre: fallback a ricerca esaustiva

# Filtro triangoli outlier
FILTER_K = 2.0               # tau = mu + k * sigma
FILTER_ITERATIONS = 5        # n_it

# Qualita'
RESOLUTION_SCALE = 0.25      # depth buffer a 1/4 della risoluzione immagine
DEPTH_TOLERANCE_FACTOR = 1e-3  # eps_z = fattore * diagonale scena
W_GSD = 0.1
W_REDUNDANCY = 0.8
W_REPROJ = 0.1
PERCENTILE_LOW = 5.0
PERCENTILE_HIGH = 95.0
INVERSE_FLOOR = 1e-12        # pavimento per GSD^-1 ed E^-1

# Pianificazione
TAU_QUALITY_PERCENTILE = 25.0
CLUSTER_EPS_FACTOR = 0.008   # eps_spatial = fattore * D_scene
CLUSTER_EDGE_FACTOR = 1.5    # eps_spatial >= fattore * lato mediano della mesh
UNDERSIDE_COS = 0.5          # facce con n . n_piano < -0.5 guardano il suolo: escluse
CLUSTER_MIN_SIZE = 5         # N_min = max(5, ceil(0.001 * |F_low|))
CLUSTER_MIN_FRACTION = 0.001
RANSAC_DIST_FACTOR = 0.01    # eps_dist = fattore * D_scene
RANSAC_ITERATIONS = 100
RANSAC_MIN_INLIER_RATIO = 0.10
OBB_ALPHA = 0.8
OBB_INFLATE_FACTOR = 1e-6    # box degeneri gonfiati a fattore * D_scene
MAX_SAMPLES_PER_CLUSTER = 200
SAMPLE_FRACTIONS = (0.5, 0.75, 1.0)   # multi-scala lungo il raggio
MIN_CLEARANCE_FACTOR = 0.01  # quota minima dei viewpoint sul piano = fattore * D_scene
MIN_SPACING_FACTOR = 0.02    # d_min = fattore * D_scene
SPARSIFY_CAP = 60
ALTITUDE_WEIGHT = 0.3        # C = |vi - vj| + 0.3 |zj - zi|
TWO_OPT_MAX_PASSES = 1000

# Valutazione
EVAL_THRESHOLD_FACTOR = 0.01  # d = fattore * D_scene
EVAL_SAMPLE_DENSITY = 10.0    # punti / m^2 campionati sulla mesh
GT_SAMPLE_DENSITY = 100.0     # punti / m^2 sul ground truth

# Simulatore
SCENE_EXTENT = 20.0          # lato del terreno (m)
BUILDING_COUNT = 4
GROUND_CELLS = 12            # griglia del terreno per lato
GROUND_RELIEF = 0.01         # ampiezza del rilievo = fattore * extent
FEATURE_DENSITY = 1.0        # landmark / m^2 di superficie
SIGMA_PX = 1.0               # rumore delle misure 2D (px)
SIGMA_3D = 0.0               # rumore opzionale sulle posizioni 3D (m)
IMAGE_WIDTH = 640
IMAGE_HEIGHT = 480
FOCAL_PX = 500.0
SIM_RESOLUTION_SCALE = 0.5
SIM_DEPTH_TOLERANCE_FACTOR = 5e-3
NADIR_ALTITUDE = 0.5         # h = 0.5 R
NADIR_SPACING = 0.2          # d = 0.2 R
NADIR_COVERAGE = 0.8         # griglia entro +-0.8 R
CIRCLE_RADIUS = 0.7          # r = 0.7 R
CIRCLE_HEIGHTS = (0.2, 0.7, 1.2)   # 3 strati tra 0.2 R e 1.2 R
CIRCLE_STEP_DEG = 20.0

# Loop
BATCH_SIZE = 10
ITERATION_CAP = 5


# --- HELPER SCENA ---

def scene_diagonal(points: Iterable[Sequence[float]]) -> float:
    """
    Diagonale del bounding box dei punti (D_scene).
    Ritorna 0.0 per insiemi vuoti o degeneri.
    """
    arr = np.asarray(list(points), dtype=float)
    if arr.size == 0:
        return 0.0
    arr = arr.reshape(-1, 3)
    return float(np.linalg.norm(arr.max(axis=0) - arr.min(axis=0)))


def percentile_threshold(values: Sequence[float], q: float) -> float:
    """Percentile lineare (numpy) usato per tau_quality e per la normalizzazione."""
    if len(values) == 0:
        return 0.0
    return float(np.percentile(np.asarray(values, dtype=float), q))


def min_cluster_size(n_low: int, min_size: int = CLUSTER_MIN_SIZE, fraction: float = CLUSTER_MIN_FRACTION) -> int:
    return max(min_size, int(math.ceil(fraction * n_low)))


def adaptive_target(n_candidates: int, cap: int) -> int:
    """Numero di viewpoint da selezionare: min(cap, max(10, ceil(0.3 * sqrt(n) * 10)))."""
    return min(cap, max(10, int(math.ceil(0.3 * math.sqrt(n_candidates) * 10))))
