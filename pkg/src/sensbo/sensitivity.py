"""Variance-based sensitivity: Sobol' indices from PCE coefficients or Monte Carlo."""

from __future__ import annotations

import io
import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import DegenerateDataError, SelectionError
from .pce import PceModel


@dataclass
class SobolResult:
    first_order: np.ndarray
    total_order: np.ndarray
    variance: float
    source_scheme: str
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.first_order = np.asarray(self.first_order, dtype=float)
        self.total_order = np.asarray(self.total_order, dtype=float)

    @property
    def dims(self) -> int:
        return self.first_order.size

    def labels(self):
        return self.names or [f"x{n + 1}" for n in range(self.dims)]

    def to_dict(self) -> dict:
        return {
            "scheme": self.source_scheme,
            "variance": self.variance,
            "names": self.labels(),
            "firstOrder": self.first_order.tolist(),
            "totalOrder": self.total_order.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d) -> "SobolResult":
        return cls(d["firstOrder"], d["totalOrder"], d["variance"], d["scheme"], list(d["names"]))

    def csv_rows(self):
        for n, name in enumerate(self.labels()):
            yield (n + 1, name, repr(float(self.first_order[n])),
                   repr(float(self.total_order[n])), self.source_scheme)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("dim,name,S_F,S_T,scheme\n")
        for row in self.csv_rows():
            buf.write(",".join(str(v) for v in row) + "\n")
        return buf.getvalue()


def pce_variance(model: PceModel) -> float:
    """Sum of squared non-constant coefficients."""
    A = model.basis.as_array()
    nonconst = A.sum(axis=1) > 0
    return float(np.sum(model.coefficients[nonconst] ** 2))


def sobol_from_pce(model: PceModel, names: Sequence[str] = ()) -> SobolResult:
    """First- and total-order indices by grouping squared coefficients."""
    A = model.basis.as_array()
    c2 = model.coefficients**2
    V = pce_variance(model)
    if not V > 0:
        raise DegenerateDataError("PCE has zero variance; Sobol' indices undefined")
    N = A.shape[1]
    nz = A > 0
    n_active = nz.sum(axis=1)
    first = np.array([np.sum(c2[nz[:, n] & (n_active == 1)]) for n in range(N)]) / V
    total = np.array([np.sum(c2[nz[:, n]]) for n in range(N)]) / V
    return SobolResult(first, total, V, model.basis.scheme, list(names))


def sobol_monte_carlo(
    objective: Callable[[np.ndarray], np.ndarray],
    input_model=None,
    n_base: int = 2**14,
    seed: int = 0,
    dims: int | None = None,
    names: Sequence[str] = (),
) -> SobolResult:
    """Pick-freeze estimates with ``(N + 2) * n_base`` objective evaluations.

    First order uses the Saltelli (2010) estimator, total order the Jansen
    one. The two base matrices come from one scrambled Sobol' sequence in
    ``2N`` dimensions. Estimates are clipped to ``0 <= S_F <= S_T <= 1``.

    Parameters
    ----------
    objective : callable
        Maps an ``(n, N)`` array of physical points to ``n`` responses.
    input_model : InputModel, optional
        Marginals used to map unit samples to physical space. If omitted
        the objective receives unit-hypercube points and ``dims`` is required.
    """
    N = input_model.dims if input_model is not None else int(dims)
    names = list(names) or (list(input_model.names) if input_model is not None else [])
    sampler = qmc.Sobol(d=2 * N, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        base = sampler.random(n_base)
    A, B = base[:, :N], base[:, N:]
    # keep away from the closed boundary for inverse CDFs
    A = np.clip(A, 1e-12, 1 - 1e-12)
    B = np.clip(B, 1e-12, 1 - 1e-12)
    stacked = [A, B] + [np.where(np.arange(N) == n, B, A) for n in range(N)]
    U = np.vstack(stacked)
    X = input_model.to_physical(U) if input_model is not None else U
    f = np.asarray(objective(X), dtype=float).reshape(N + 2, n_base)
    fA, fB, fAB = f[0], f[1], f[2:]
    var = float(np.var(np.concatenate([fA, fB])))
    if not var > 0:
        raise DegenerateDataError("objective has zero variance")
    first = np.mean(fB * (fAB - fA), axis=1) / var
    total = 0.5 * np.mean((fA - fAB) ** 2, axis=1) / var
    total = np.clip(total, 0.0, 1.0)
    first = np.minimum(np.clip(first, 0.0, 1.0), total)
    return SobolResult(first, total, var, "MonteCarlo", names)


def select_influential_subspace(
    results: SobolResult | Iterable[SobolResult],
    threshold: float = 0.05,
    mandatory: Iterable[int] = (),
    margin: float = 0.2,
) -> np.ndarray:
    """Boolean mask of dimensions to keep active.

    A dimension is kept if its total-order index exceeds
    ``threshold * (1 - margin)`` in any of the results (values at or above the
    threshold always qualify; the margin retains borderline ones), or if it
    is listed in ``mandatory``.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    if isinstance(results, SobolResult):
        results = [results]
    results = list(results)
    if not results:
        raise SelectionError("no sensitivity results supplied")
    N = results[0].dims
    cut = threshold * (1.0 - margin)
    keep = np.zeros(N, dtype=bool)
    for r in results:
        keep |= (r.total_order >= threshold) | (r.total_order > cut)
    for n in mandatory:
        keep[int(n)] = True
    if not keep.any():
        raise SelectionError(
            f"no dimension reaches the {threshold:g} threshold; lower the threshold"
        )
    return keep
