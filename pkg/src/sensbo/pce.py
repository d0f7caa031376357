"""Polynomial chaos expansions on the CDF-normalized input space.

All inputs are uniform on (0, 1) after normalization, so the orthonormal
family is the shifted Legendre one, ``sqrt(2k + 1) * P_k(2u - 1)``.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import ConditioningError, DomainError, RankError, SizeError

TD1 = "TD1"
TD2 = "TD2"
TD = "TD"
LAR = "LAR"
SAPCE = "SAPCE"

# regression matrices above this condition number are rejected
MAX_CONDITION = 1e12


class OversamplingWarning(UserWarning):
    """Fewer than two samples per basis term."""


MultiIndex = tuple  # tuple[int, ...]


@dataclass(frozen=True)
class BasisSet:
    indices: tuple
    scheme: str

    def __post_init__(self):
        idx = tuple(tuple(int(a) for a in alpha) for alpha in self.indices)
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate multi-indices in basis")
        if idx and tuple(0 for _ in idx[0]) not in idx:
            raise ValueError("basis must contain the constant term")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    @property
    def dims(self) -> int:
        return len(self.indices[0])

    @property
    def max_degree(self) -> int:
        return max(sum(a) for a in self.indices)

    def as_array(self) -> np.ndarray:
        return np.array(self.indices, dtype=int)


def orthonormal_poly_1d(degree: int, u):
    """Normalized shifted Legendre polynomial of the given degree."""
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    u = np.asarray(u, dtype=float)
    table = legendre_table(u.reshape(-1), degree)
    out = table[:, degree]
    return float(out[0]) if u.ndim == 0 else out.reshape(u.shape)


def legendre_table(u, max_degree):
    """Orthonormal shifted Legendre values for degrees ``0..max_degree``.

    Returns an array of shape ``(len(u), max_degree + 1)``.
    """
    t = 2.0 * np.asarray(u, dtype=float) - 1.0
    P = np.empty((t.size, max_degree + 1))
    P[:, 0] = 1.0
    if max_degree >= 1:
        P[:, 1] = t
    for k in range(1, max_degree):
        P[:, k + 1] = ((2 * k + 1) * t * P[:, k] - k * P[:, k - 1]) / (k + 1)
    return P * np.sqrt(2.0 * np.arange(max_degree + 1) + 1.0)


def _compositions(total, N):
    """All N-tuples of nonnegative ints summing to ``total``, first axis fastest-decreasing."""
    if N == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, N - 1):
            yield (first,) + rest


def total_degree_basis(N: int, max_degree: int) -> BasisSet:
    """Every multi-index with total degree at most ``max_degree``, graded order."""
    if max_degree < 0 or N < 1:
        raise ValueError("need N >= 1 and max_degree >= 0")
    idx = [a for d in range(max_degree + 1) for a in _compositions(d, N)]
    scheme = {1: TD1, 2: TD2}.get(max_degree, TD)
    return BasisSet(tuple(idx), scheme)


def design_matrix(basis: BasisSet, U) -> np.ndarray:
    U = np.atleast_2d(np.asarray(U, dtype=float))
    A = basis.as_array()
    if U.shape[1] != A.shape[1]:
        raise ValueError(f"inputs have {U.shape[1]} dims, basis has {A.shape[1]}")
    deg = int(A.max()) if A.size else 0
    tables = [legendre_table(U[:, n], deg) for n in range(U.shape[1])]
    Psi = np.ones((U.shape[0], len(basis)))
    for n, tab in enumerate(tables):
        Psi *= tab[:, A[:, n]]
    return Psi


@dataclass
class PceModel:
    basis: BasisSet
    coefficients: np.ndarray
    input_model: object = None
    diagnostics: dict = field(default_factory=dict)

    def evaluate(self, U) -> np.ndarray:
        return design_matrix(self.basis, U) @ self.coefficients

    def coefficient(self, alpha) -> float:
        alpha = tuple(alpha)
        try:
            return float(self.coefficients[self.basis.indices.index(alpha)])
        except ValueError:
            return 0.0

    def to_dict(self) -> dict:
        return {
            "scheme": self.basis.scheme,
            "indices": [list(a) for a in self.basis.indices],
            "coefficients": self.coefficients.tolist(),
            "inputModel": (
                self.input_model.to_dict() if hasattr(self.input_model, "to_dict") else None
            ),
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d) -> "PceModel":
        basis = BasisSet(tuple(tuple(a) for a in d["indices"]), d["scheme"])
        return cls(basis, np.asarray(d["coefficients"], dtype=float), None, d.get("diagnostics", {}))


def evaluate_pce(model: PceModel, u):
    u = np.asarray(u, dtype=float)
    out = model.evaluate(np.atleast_2d(u))
    return float(out[0]) if u.ndim == 1 else out


# ---------------------------------------------------------------------------
# least squares


def _qr_solve(Psi, z):
    """Least squares by QR; returns coefficients, hat diagonal, condition estimate."""
    Qm, R = linalg.qr(Psi, mode="economic", check_finite=False)
    sv = linalg.svdvals(R, check_finite=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if cond > MAX_CONDITION:
        raise ConditioningError("rank-deficient regression matrix", cond)
    coef = linalg.solve_triangular(R, Qm.T @ z, check_finite=False)
    hat = np.sum(Qm * Qm, axis=1)
    return coef, hat, cond, R


def corrected_loo_error(Psi, z, coef=None, hat=None, R=None) -> float:
    """Relative leave-one-out error from the hat matrix, with the small-sample correction.

    ``eps = mean((r_i / (1 - h_i))**2) / var(z) * T`` where
    ``T = Q/(Q-P) * (1 + tr((Psi'Psi/Q)^-1)/Q)``.
    """
    Q, P = Psi.shape
    if coef is None:
        coef, hat, _, R = _qr_solve(Psi, z)
    if Q <= P:
        return float("inf")
    resid = z - Psi @ coef
    h = np.minimum(hat, 1.0 - 1e-12)
    loo = np.mean((resid / (1.0 - h)) ** 2)
    var = np.var(z)
    if var == 0.0:
        return 0.0 if loo == 0.0 else float("inf")
    Rinv = linalg.solve_triangular(R, np.eye(P), check_finite=False)
    trace = Q * float(np.sum(Rinv * Rinv))
    T = Q / (Q - P) * (1.0 + trace / Q)
    return float(loo / var * T)


def fit_pce_least_squares(U, z, basis: BasisSet, input_model=None) -> PceModel:
    """Least-squares PCE coefficients via an orthogonal factorization.

    Raises
    ------
    RankError
        Fewer samples than basis terms.
    ConditioningError
        Regression matrix numerically rank deficient.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    Q, P = U.shape[0], len(basis)
    if Q < P:
        raise RankError(f"{Q} samples for {P} basis terms")
    if Q < 2 * P:
        warnings.warn(
            f"{Q} samples for {P} terms; at least {2 * P} recommended",
            OversamplingWarning,
            stacklevel=2,
        )
    Psi = design_matrix(basis, U)
    coef, hat, cond, R = _qr_solve(Psi, z)
    resid = z - Psi @ coef
    loo = corrected_loo_error(Psi, z, coef, hat, R) if Q > P else float("inf")
    diag = {
        "residualNorm": float(np.linalg.norm(resid)),
        "looError": loo,
        "conditionEstimate": cond,
        "trainingSize": int(Q),
        "basisSize": int(P),
    }
    return PceModel(basis, coef, input_model, diag)


def _improves(err, best) -> bool:
    """Strict improvement beyond rounding noise; exact fits cannot be beaten."""
    if best < 1e-16:
        return False
    return err < best * (1.0 - 1e-6)


# ---------------------------------------------------------------------------
# least angle regression


def lar_path(Psi, z, max_steps):
    """Order in which LAR activates the columns of ``Psi`` (constant excluded).

    Columns and response are centered and scaled, so the path does not
    depend on column norms.
    """
    from sklearn.linear_model import lars_path

    Xc = Psi - Psi.mean(axis=0)
    norms = np.linalg.norm(Xc, axis=0)
    norms[norms == 0.0] = 1.0
    zc = z - z.mean()
    _, active, _ = lars_path(Xc / norms, zc, method="lar", max_iter=max_steps)
    return [int(a) for a in active]


def build_lar_basis(
    U, z, candidate: BasisSet, max_terms: int | None = None, return_path=False
):
    """Sparse basis from the LAR path, truncated at the minimal corrected LOO error.

    ``max_terms`` counts the constant term, so ``max_terms=1`` yields the
    constant-only basis. Ties in LOO error favour the shorter basis.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    Q = U.shape[0]
    const = tuple(0 for _ in range(candidate.dims))
    others = [a for a in candidate.indices if a != const]
    limit = len(candidate) if max_terms is None else max_terms
    limit = min(limit, Q - 2)
    if limit <= 1:
        basis = BasisSet((const,), LAR)
        return (basis, [basis]) if return_path else basis
    Psi = design_matrix(BasisSet(tuple([const] + others), LAR), U)[:, 1:]
    order = lar_path(Psi, z, limit - 1)

    path = []
    best, best_err = None, float("inf")
    for k in range(0, len(order) + 1):
        basis = BasisSet(tuple([const] + [others[j] for j in order[:k]]), LAR)
        try:
            Pk = design_matrix(basis, U)
            err = corrected_loo_error(Pk, z)
        except ConditioningError:
            break
        path.append(basis)
        if _improves(err, best_err):
            best, best_err = basis, err
    if best is None:
        best = BasisSet((const,), LAR)
    return (best, path) if return_path else best


# ---------------------------------------------------------------------------
# sensitivity-adaptive growth


def _partial_variances(basis: BasisSet, coef: np.ndarray) -> np.ndarray:
    A = basis.as_array()
    c2 = coef**2
    nonconst = A.sum(axis=1) > 0
    return np.array([np.sum(c2[(A[:, n] > 0) & nonconst]) for n in range(A.shape[1])])


def _admissible_neighbors(active: set, N: int, cap: int):
    """Forward neighbours whose backward neighbours are all active."""
    out = set()
    for alpha in active:
        for n in range(N):
            cand = tuple(a + (1 if m == n else 0) for m, a in enumerate(alpha))
            if cand in active or sum(cand) > cap:
                continue
            if all(
                tuple(a - (1 if m == k else 0) for m, a in enumerate(cand)) in active
                for k in range(N)
                if cand[k] > 0
            ):
                out.add(cand)
    return out


def build_sapce_basis(
    U,
    z,
    max_degree: int,
    budget_terms: int,
    per_iteration: int = 3,
    relative_floor: float = 0.05,
    patience: int = 3,
) -> BasisSet:
    """Grow a basis from TD1 towards the dimensions carrying the most variance.

    Each candidate forward neighbour is scored by the smallest total partial
    variance among the dimensions it involves, so an interaction is only
    promoted when all of its dimensions matter. Up to ``per_iteration``
    candidates scoring at least ``relative_floor`` times the best score are
    admitted per step. Growth stops at ``budget_terms``, when no candidate
    remains, or after ``patience`` consecutive steps without a lower corrected
    LOO error; the basis with the lowest LOO error seen is returned.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    Q, N = U.shape
    if Q < N + 2:
        raise SizeError(f"need at least N + 2 = {N + 2} samples")
    current = total_degree_basis(N, 1)
    current = BasisSet(current.indices, SAPCE)
    limit = min(budget_terms, Q - 2)
    if len(current) >= limit:
        return current

    Psi = design_matrix(current, U)
    coef, hat, _, R = _qr_solve(Psi, z)
    err = corrected_loo_error(Psi, z, coef, hat, R)
    best, best_err, stale = current, err, 0
    while len(current) < limit and stale < patience:
        V = _partial_variances(current, coef)
        cands = _admissible_neighbors(set(current.indices), N, max_degree)
        if not cands:
            break
        scored = []
        for c in cands:
            support = [n for n in range(N) if c[n] > 0]
            scored.append((min(V[n] for n in support), c))
        top = max(s for s, _ in scored)
        if top <= 0.0:
            break
        # highest score first, graded order for ties
        scored.sort(key=lambda t: (-t[0], sum(t[1]), tuple(-a for a in t[1])))
        room = limit - len(current)
        chosen = [c for s, c in scored if s >= relative_floor * top][: min(per_iteration, room)]
        trial = BasisSet(current.indices + tuple(chosen), SAPCE)
        try:
            Pt = design_matrix(trial, U)
            coef, that, _, tR = _qr_solve(Pt, z)
            err = corrected_loo_error(Pt, z, coef, that, tR)
        except ConditioningError:
            break
        current = trial
        if _improves(err, best_err):
            best, best_err, stale = trial, err, 0
        else:
            stale += 1
    return best


def fit_scheme(U, z, scheme: str, *, lar_degree=2, sapce_degree=3, sapce_budget=None,
               td_degree=3, input_model=None) -> PceModel:
    """Fit one of the named truncation schemes on ``(U, z)``.

    ``TD`` is a total-degree basis of order ``td_degree``.
    """
    N = np.atleast_2d(U).shape[1]
    if scheme == TD1:
        basis = total_degree_basis(N, 1)
    elif scheme == TD2:
        basis = total_degree_basis(N, 2)
    elif scheme == TD:
        basis = total_degree_basis(N, td_degree)
    elif scheme == LAR:
        basis = build_lar_basis(U, z, total_degree_basis(N, lar_degree))
    elif scheme == SAPCE:
        budget = sapce_budget or len(total_degree_basis(N, 2))
        basis = build_sapce_basis(U, z, sapce_degree, budget)
    else:
        raise DomainError(f"unknown scheme {scheme!r}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OversamplingWarning)
        model = fit_pce_least_squares(U, z, basis, input_model)
    model.diagnostics["scheme"] = scheme
    return model


def gauss_legendre_gram(basis: BasisSet, points_per_dim: int) -> np.ndarray:
    """Exact Gram matrix of the basis under the uniform measure (tensor quadrature)."""
    x, w = np.polynomial.legendre.leggauss(points_per_dim)
    u, w = (x + 1.0) / 2.0, w / 2.0
    N = basis.dims
    grid = np.array(list(itertools.product(u, repeat=N)))
    wts = np.prod(np.array(list(itertools.product(w, repeat=N))), axis=1)
    Psi = design_matrix(basis, grid)
    return Psi.T @ (Psi * wts[:, None])


def basis_size_td(N: int, max_degree: int) -> int:
    return math.comb(N + max_degree, max_degree)
