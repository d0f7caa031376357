"""Solution verification and surrogate validation metrics.

Iterative convergence by coefficient of variation, three-mesh Richardson
extrapolation with observed order, discretization error and grid convergence
index, and percentage prediction errors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRefinementError, DomainError, NonMonotoneConvergenceError

GCI_SAFETY_FACTOR = 1.25
COV_TOLERANCE = 1e-5
COV_WINDOW = 25


def coefficient_of_variation(window) -> float:
    """Sample standard deviation (``ddof=1``) over the mean."""
    w = np.asarray(window, dtype=float).ravel()
    if w.size < 2:
        raise DomainError("window needs at least 2 values")
    mean = float(np.mean(w))
    if mean == 0.0:
        raise ZeroDivisionError("coefficient of variation undefined for zero mean")
    return float(np.std(w, ddof=1)) / mean


def is_converged(history, window: int = COV_WINDOW, tol: float = COV_TOLERANCE) -> bool:
    """True when the CoV over the last ``window`` values is below ``tol``."""
    h = np.asarray(history, dtype=float).ravel()
    if h.size < window:
        return False
    return abs(coefficient_of_variation(h[-window:])) < tol


@dataclass(frozen=True)
class MeshStudy:
    """Three systematically refined meshes, coarse to fine.

    ``refinement_factors`` are ``(r2, r3)`` with ``r_i = (N_i / N_{i-1})**(1/3)``
    unless given explicitly.
    """

    cell_counts: tuple
    solutions: tuple
    refinement_factors: tuple = None

    def __post_init__(self):
        cells = tuple(int(c) for c in self.cell_counts)
        sols = tuple(float(s) for s in self.solutions)
        if len(cells) != 3 or len(sols) != 3:
            raise DomainError("a mesh study needs exactly three meshes")
        if not all(c > 0 for c in cells) or not cells[0] < cells[1] < cells[2]:
            raise DomainError("cell counts must be positive and increasing")
        if not all(math.isfinite(s) for s in sols):
            raise DomainError("solutions must be finite")
        r = self.refinement_factors
        if r is None:
            r = ((cells[1] / cells[0]) ** (1 / 3), (cells[2] / cells[1]) ** (1 / 3))
        r = tuple(float(v) for v in r)
        if len(r) != 2 or not all(v > 1 for v in r):
            raise DomainError("refinement factors must exceed 1")
        object.__setattr__(self, "cell_counts", cells)
        object.__setattr__(self, "solutions", sols)
        object.__setattr__(self, "refinement_factors", r)

    @classmethod
    def from_csv(cls, path, refinement_factors=None) -> "MeshStudy":
        """Read rows of ``cells,solution`` (a header row is skipped)."""
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or not rec[0].strip():
                    continue
                try:
                    rows.append((int(float(rec[0])), float(rec[1])))
                except ValueError:
                    continue  # header
        rows.sort()
        if len(rows) != 3:
            raise DomainError(f"expected 3 mesh rows, found {len(rows)}")
        return cls(tuple(r[0] for r in rows), tuple(r[1] for r in rows), refinement_factors)


def _differences(study: MeshStudy):
    e1, e2, e3 = study.solutions
    d21, d32 = e2 - e1, e3 - e2
    return d21, d32


def observed_order(study: MeshStudy) -> float:
    """``p = ln((eta2 - eta1) / (eta3 - eta2)) / ln(r3)``."""
    d21, d32 = _differences(study)
    if d21 == 0.0 or d32 == 0.0 or (d21 > 0) != (d32 > 0):
        raise NonMonotoneConvergenceError(
            "solution differences must be nonzero and of equal sign"
        )
    return math.log(d21 / d32) / math.log(study.refinement_factors[1])


def _check(r, p):
    if not p > 0:
        raise DomainError("order p must be positive")
    denom = r**p - 1.0
    if denom == 0.0:
        raise DegenerateRefinementError("r**p equals 1")
    return denom


def richardson_extrapolate(study: MeshStudy, p: float) -> float:
    """``eta_ex = eta3 + (eta3 - eta2) / (r3**p - 1)``."""
    r3 = study.refinement_factors[1]
    denom = _check(r3, p)
    e1, e2, e3 = study.solutions
    return e3 + (e3 - e2) / denom


def discretization_errors(study: MeshStudy, p: float):
    """Relative errors ``(e1, e2, e3)`` as fractions and ``GCI_i = 1.25 e_i``.

    ``e_i = (eta_i - eta_{i-1}) / (eta_i (r_i**p - 1))`` for the two finer
    meshes; the coarse mesh uses ``e1 = r2**p e2``.
    """
    r2, r3 = study.refinement_factors
    d2, d3 = _check(r2, p), _check(r3, p)
    eta1, eta2, eta3 = study.solutions
    if eta2 == 0.0 or eta3 == 0.0:
        raise ZeroDivisionError("relative error undefined for zero solution")
    e2 = (eta2 - eta1) / (eta2 * d2)
    e3 = (eta3 - eta2) / (eta3 * d3)
    e1 = r2**p * e2
    errs = (e1, e2, e3)
    return errs + tuple(GCI_SAFETY_FACTOR * e for e in errs)


def mesh_study_table(study: MeshStudy, p: float | None = None) -> list[dict]:
    """Per-mesh rows with errors in percent, for printing."""
    p = observed_order(study) if p is None else p
    errs = discretization_errors(study, p)
    r = (float("nan"),) + study.refinement_factors
    return [
        {
            "mesh": i + 1,
            "cells": study.cell_counts[i],
            "r": r[i],
            "eta": study.solutions[i],
            "e_percent": 100.0 * errs[i],
            "gci_percent": 100.0 * errs[3 + i],
        }
        for i in range(3)
    ]


def _pair(actual, predicted):
    y = np.asarray(actual, dtype=float).ravel()
    yp = np.asarray(predicted, dtype=float).ravel()
    if y.size != yp.size or y.size == 0:
        raise DomainError("actual and predicted need equal nonzero length")
    if np.any(y == 0.0):
        raise ZeroDivisionError("percentage error undefined for zero actual value")
    return np.abs((y - yp) / y)


def mape(actual, predicted) -> float:
    """Mean absolute percentage error."""
    return 100.0 * float(np.mean(_pair(actual, predicted)))


def max_ape(actual, predicted) -> float:
    """Maximum absolute percentage error."""
    return 100.0 * float(np.max(_pair(actual, predicted)))
