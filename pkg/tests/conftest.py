# -*- coding: utf-8 -*-
from __future__ import annotations

import numpy as np
import pytest

from geometry_core import Intrinsics, look_at


@pytest.fixture
def intrinsics() -> Intrinsics:
    return Intrinsics(focal=500.0, cx=320.0, cy=240.0, width=640, height=480)


@pytest.fixture
def unit_tet():
    return (0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)


def ring_views(intrinsics: Intrinsics, n: int = 8, radius: float = 6.0, height: float = 4.0,
               target=(0.0, 0.0, 0.0), first_id: int = 0):
    """n camere su una circonferenza che guardano target."""
    views = []
    for k in range(n):
        a = 2.0 * np.pi * k / n
        center = (radius * np.cos(a), radius * np.sin(a), height)
        views.append(look_at(first_id + k, center, target, intrinsics))
    return views


def sphere_points(n: int, radius: float = 1.0, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, 3))
    return radius * v / np.linalg.norm(v, axis=1, keepdims=True)
