# -*- coding: utf-8 -*-
"""
Eccezioni della pipeline. Ogni errore porta il proprio exit code CLI:
0 successo, 2 configurazione, 3 ingestione, 4 errore numerico.
"""
from __future__ import annotations


class ReconError(Exception):
    exit_code = 1


class ConfigError(ReconError):
    exit_code = 2


class IngestionError(ReconError):
    exit_code = 3


class NumericalError(ReconError):
    exit_code = 4


class GeometryError(NumericalError, ValueError):
    """Input non finito o simplesso degenere."""


class DegenerateInputError(GeometryError):
    """Bootstrap su punti tutti coplanari (o meno di 4 punti distinti)."""


class DuplicatePointError(ReconError):
    """Punto gia' presente entro eps_dup: viene saltato e fuso col vertice esistente."""

    exit_code = 3

    def __init__(self, existing_index: int):
        super().__init__(f"punto duplicato del vertice {existing_index}")
        self.existing_index = existing_index
