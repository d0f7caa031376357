"""Batch upper-confidence-bound Bayesian optimization on the unit hypercube."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import BudgetError, DomainError, SizeError
from .gp import RBF, GpModel, fit_gp
from .probability import ClampWarning
from .state import ADAPTIVE, BoRecord, Dataset, SubspaceMask, WorkflowState

EXPLORATION = "Exploration"
BALANCED = "Balanced"
EXPLOITATION = "Exploitation"
PHASE_BETA = {EXPLORATION: 2.0, BALANCED: 1.0, EXPLOITATION: 0.5}

POOL_SIZE = 4096
N_REFINE = 8
REFINE_ITERATIONS = 200
UNIT_MARGIN = 1e-9

# roles for seed derivation
ROLE_GP = 1
ROLE_ACQ = 2


def derive_seed(*parts: int) -> int:
    """A 32-bit seed determined by the integer tuple ``parts``."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def ucb(mean, std, beta):
    """``mean + beta * std``; vectorized."""
    std_arr = np.asarray(std, dtype=float)
    if np.any(std_arr < 0):
        raise DomainError("standard deviation must be nonnegative")
    if np.any(np.asarray(beta) < 0):
        raise DomainError("beta must be nonnegative")
    out = np.asarray(mean, dtype=float) + beta * std_arr
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AcquisitionSpec:
    """UCB weight and the phase it belongs to.

    ``beta`` defaults to the phase value (Exploration 2, Balanced 1,
    Exploitation 0.5) but may be overridden; ``beta = 0`` gives pure
    exploitation of the posterior mean.
    """

    phase: str = BALANCED
    beta: float | None = None

    def __post_init__(self):
        if self.phase not in PHASE_BETA:
            raise DomainError(f"unknown phase {self.phase!r}")
        beta = PHASE_BETA[self.phase] if self.beta is None else float(self.beta)
        if not (beta >= 0 and math.isfinite(beta)):
            raise DomainError("beta must be a finite nonnegative number")
        object.__setattr__(self, "beta", beta)

    @classmethod
    def for_phase(cls, phase: str) -> "AcquisitionSpec":
        return cls(phase)


def _acquisition(model: GpModel, U, beta):
    mean, var = model.predict(U)
    return mean + beta * np.sqrt(var)


def _pattern_search(f, v0, f0, lo, hi, iterations, step0=0.1, min_step=1e-7):
    """Compass search: try +-step along each coordinate, halve on failure."""
    v, fv, step = v0.copy(), f0, step0
    n = v.size
    eye = np.eye(n)
    for _ in range(iterations):
        cand = np.vstack([v + step * eye, v - step * eye])
        cand = np.clip(cand, lo, hi)
        vals = f(cand)
        k = int(np.argmax(vals))
        if vals[k] > fv:
            v, fv = cand[k], float(vals[k])
        else:
            step *= 0.5
            if step < min_step:
                break
    return v, fv


def maximize_acquisition(
    model: GpModel,
    spec: AcquisitionSpec,
    mask: SubspaceMask | None = None,
    seed: int = 0,
    pool_size: int = POOL_SIZE,
    n_refine: int = N_REFINE,
    iterations: int = REFINE_ITERATIONS,
    return_value: bool = False,
):
    """Maximize UCB over the active coordinates of ``mask``.

    A scrambled Sobol' pool is scored first; the best ``n_refine`` pool points
    are then improved by compass search within ``[1e-9, 1 - 1e-9]``. The
    result is never worse than the best pool point and inactive coordinates
    equal ``mask.fixed_values`` exactly.
    """
    N = model.X.shape[1]
    mask = mask or SubspaceMask.full(N)
    if mask.dims != N:
        raise DomainError("mask and model dimensions differ")
    d = mask.n_active
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # non power-of-two pool
        pool = qmc.Sobol(d=d, scramble=True, seed=seed).random(pool_size)
    pool = np.clip(pool, UNIT_MARGIN, 1 - UNIT_MARGIN)

    def f(V):
        return _acquisition(model, mask.embed(V), spec.beta)

    vals = f(pool)
    order = np.argsort(-vals, kind="stable")[:n_refine]
    best_v, best_f = pool[order[0]], float(vals[order[0]])
    for k in order:
        v, fv = _pattern_search(f, pool[k], float(vals[k]), UNIT_MARGIN, 1 - UNIT_MARGIN, iterations)
        if fv > best_f:
            best_v, best_f = v, fv
    x = mask.embed(best_v)[0]
    return (x, best_f) if return_value else x


def propose_batch(
    model: GpModel,
    spec: AcquisitionSpec,
    mask: SubspaceMask | None = None,
    batch_size: int = 1,
    seed: int = 0,
    return_values: bool = False,
):
    """Constant-liar batch: after each pick the GP is conditioned on its own
    mean at that point (same hyperparameters) before the next pick."""
    if batch_size < 1:
        raise SizeError("batch size must be at least 1")
    current = model
    points, acq = [], []
    for b in range(batch_size):
        x, a = maximize_acquisition(current, spec, mask, seed, return_value=True)
        points.append(x)
        acq.append(a)
        if b + 1 < batch_size:
            mu, _ = current.predict_one(x)
            current = current.condition_on(x, mu)
    points = np.array(points)
    return (points, np.array(acq)) if return_values else points


def _evaluate(objective, U, input_model):
    """Call ``objective`` on unit points; it may return ``(y, realized_physical)``."""
    out = objective(U)
    realized = None
    if isinstance(out, tuple):
        out, realized = out
    y = np.asarray(out, dtype=float).ravel()
    if y.size != U.shape[0]:
        raise DomainError(f"objective returned {y.size} values for {U.shape[0]} points")
    phys = input_model.to_physical(U)
    if realized is not None:
        phys = np.atleast_2d(np.asarray(realized, dtype=float))
        U = input_model.to_unit(phys)
    return U, phys, y


def training_targets(state: WorkflowState):
    """Training inputs and GP targets (transformed when a transform is set)."""
    data = state.data
    tm = data.training_mask()
    U = data.unit[tm]
    y = data.response[tm]
    if state.output_transform is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ClampWarning)
            z = np.asarray(state.output_transform.forward(y), dtype=float)
        return U, z
    sd = float(np.std(y))
    return U, (y - np.mean(y)) / (sd if sd > 0 else 1.0)


def bo_step(
    state: WorkflowState,
    objective,
    spec: AcquisitionSpec,
    batch_size: int,
    kernel: str = RBF,
    n_starts: int = 8,
    project: bool = True,
):
    """Refit the GP, propose a batch, evaluate it and update ``state`` in place.

    With ``project`` and a reduced mask the GP is trained on the active
    coordinates only; otherwise on all coordinates. Returns ``(state, record)``.
    """
    if batch_size < 1:
        raise SizeError("batch size must be at least 1")
    if state.remaining < batch_size:
        raise BudgetError(
            f"batch of {batch_size} exceeds remaining budget {state.remaining}"
        )
    it = state.iteration
    mask = state.mask
    U, z = training_targets(state)
    reduce = project and not mask.active.all()
    if reduce:
        U = U[:, mask.active]
    model = fit_gp(U, z, kernel, n_starts=n_starts, seed=derive_seed(state.seed, ROLE_GP, it))
    batch, acq = propose_batch(
        model, spec, None if reduce else mask, batch_size,
        derive_seed(state.seed, ROLE_ACQ, it), return_values=True,
    )
    if reduce:
        batch = mask.embed(batch)
    Ub, phys, y = _evaluate(objective, batch, state.input_model)
    state.data.append(Ub, phys, y, ADAPTIVE, state.stage)
    state.budget_used += batch_size
    state.iteration += 1
    record = BoRecord(it, Ub, acq, y, state.best_value, spec.phase, spec.beta, state.stage, phys)
    state.log.append(record)
    return state, record


def fix_non_influential(data: Dataset, mask: SubspaceMask, top_k: int) -> SubspaceMask:
    """Fix inactive coordinates at their mean over the ``top_k`` best designs."""
    if top_k < 1 or top_k > len(data):
        raise SizeError(f"top_k={top_k} must lie in [1, {len(data)}]")
    idx = data.top_k(top_k)
    means = np.mean(data.unit[idx], axis=0)
    fixed = np.where(mask.active, mask.fixed_values, means)
    return SubspaceMask(mask.active, fixed)


def run_log_entry(record: BoRecord) -> dict:
    """One JSON-ready run-log object with a wall-clock timestamp."""
    d = record.to_dict()
    d["timestamp"] = time.time()
    return d
