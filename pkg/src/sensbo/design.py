"""Space-filling designs on the unit hypercube.

Latin hypercube initialization, the maximin and phi_p distance criteria, and
maximum-projection (MaxPro) designs obtained by simulated annealing.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np

from .errors import InfiniteCriterionError, SizeError

MAXPRO = "MaxPro"
MAXIMIN = "Maximin"
PHIP = "PhiP"
LHS_ONLY = "LhsOnly"

# coordinate gaps below this are treated as coincident
GAP_GUARD = 1e-12


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric cooling ``T_k = t0 * alpha**k``.

    ``proposals_factor * Q * N`` single-coordinate moves are tried at every
    temperature level. The Gaussian move width is ``step_scale * T / t0``.
    """

    t0: float = 1.0
    alpha: float = 0.95
    levels: int = 200
    proposals_factor: int = 50
    step_scale: float = 1.0

    def to_dict(self):
        return asdict(self)


@dataclass
class DesignMatrix:
    points: np.ndarray
    criterion: str
    criterion_value: float
    seed: int | None = None
    schedule: AnnealSchedule | None = None
    names: list[str] = field(default_factory=list)

    @property
    def Q(self) -> int:
        return self.points.shape[0]

    @property
    def N(self) -> int:
        return self.points.shape[1]

    def column_names(self):
        return self.names or [f"x{n + 1}" for n in range(self.N)]

    def save(self, csv_path):
        """Write the points as CSV plus a ``.json`` sidecar with metadata."""
        csv_path = Path(csv_path)
        with open(csv_path, "w") as fh:
            fh.write(",".join(self.column_names()) + "\n")
            for row in self.points:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        meta = {
            "criterion": self.criterion,
            "criterionValue": self.criterion_value,
            "seed": self.seed,
            "Q": self.Q,
            "N": self.N,
            "schedule": self.schedule.to_dict() if self.schedule else None,
        }
        csv_path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, csv_path) -> "DesignMatrix":
        csv_path = Path(csv_path)
        with open(csv_path) as fh:
            names = fh.readline().strip().split(",")
            pts = np.array(
                [[float(v) for v in line.split(",")] for line in fh if line.strip()]
            )
        meta = json.loads(csv_path.with_suffix(".json").read_text())
        sched = AnnealSchedule(**meta["schedule"]) if meta.get("schedule") else None
        return cls(pts, meta["criterion"], meta["criterionValue"], meta["seed"], sched, names)


def _as_points(X) -> np.ndarray:
    if isinstance(X, DesignMatrix):
        X = X.points
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _pairwise_distances(X):
    i, j = np.triu_indices(X.shape[0], k=1)
    return np.sqrt(np.sum((X[i] - X[j]) ** 2, axis=1))


def lhs_design(Q: int, N: int, seed: int) -> DesignMatrix:
    """Latin hypercube with uniform jitter inside each stratum."""
    if Q < 2:
        raise SizeError("a design needs at least 2 points")
    if N < 1:
        raise SizeError("a design needs at least 1 dimension")
    rng = np.random.default_rng(seed)
    cells = np.column_stack([rng.permutation(Q) for _ in range(N)])
    jitter = rng.random((Q, N))
    jitter[jitter == 0.0] = 0.5
    pts = (cells + jitter) / Q
    return DesignMatrix(pts, LHS_ONLY, maxpro_value(pts), seed)


def maximin_value(X) -> float:
    """Smallest pairwise Euclidean distance."""
    X = _as_points(X)
    if X.shape[0] < 2:
        raise SizeError("need at least 2 points")
    return float(np.min(_pairwise_distances(X)))


def phip_value(X, p: float) -> float:
    """Morris-Mitchell ``(sum d_ij^-p)^(1/p)``; smaller is better."""
    X = _as_points(X)
    if X.shape[0] < 2:
        raise SizeError("need at least 2 points")
    if not p > 0:
        raise ValueError("p must be positive")
    d = _pairwise_distances(X)
    if np.any(d == 0.0):
        raise InfiniteCriterionError("coincident design points")
    # factor out the smallest distance to avoid overflow for large p
    dmin = np.min(d)
    return float((np.sum((dmin / d) ** p)) ** (1.0 / p) / dmin)


def _log_maxpro_sum(X):
    """log of sum_{i<j} prod_n (x_in - x_jn)^-2, computed in log space."""
    i, j = np.triu_indices(X.shape[0], k=1)
    gaps = np.abs(X[i] - X[j])
    if np.any(gaps < GAP_GUARD):
        raise InfiniteCriterionError("coordinate coincidence in MaxPro criterion")
    logterms = -2.0 * np.sum(np.log(gaps), axis=1)
    top = np.max(logterms)
    return top + math.log(np.sum(np.exp(logterms - top)))


def maxpro_value(X) -> float:
    """MaxPro criterion; smaller values mean better projections."""
    X = _as_points(X)
    Q, N = X.shape
    if Q < 2:
        raise SizeError("need at least 2 points")
    npairs = Q * (Q - 1) / 2
    return float(math.exp((_log_maxpro_sum(X) - math.log(npairs)) / N))


def projection_quality(X, subset_size: int) -> dict[tuple[int, ...], float]:
    """MaxPro criterion of every coordinate subset of the given size."""
    X = _as_points(X)
    N = X.shape[1]
    if not 1 <= subset_size <= N:
        raise SizeError(f"subset size must lie in [1, {N}]")
    return {
        sub: maxpro_value(X[:, list(sub)])
        for sub in itertools.combinations(range(N), subset_size)
    }


# ---------------------------------------------------------------------------
# simulated annealing


@numba.njit(cache=True)
def _pair_products(X):
    Q, N = X.shape
    P = np.zeros((Q, Q))
    for i in range(Q):
        for j in range(i + 1, Q):
            prod = 1.0
            for n in range(N):
                d = X[i, n] - X[j, n]
                prod *= d * d
            P[i, j] = 1.0 / prod
            P[j, i] = P[i, j]
    return P


@numba.njit(cache=True, fastmath=True)
def _anneal(X, t0, alpha, levels, per_level, step_scale, seed, guard):
    np.random.seed(seed)
    Q, N = X.shape
    P = _pair_products(X)
    S = 0.0
    for i in range(Q):
        for j in range(i + 1, Q):
            S += P[i, j]
    best = X.copy()
    best_S = S
    trace = np.empty(levels + 1)
    trace[0] = best_S
    newrow = np.empty(Q)
    XT = X.T.copy()
    guard2 = guard * guard
    T = t0
    for _level in range(levels):
        sigma = step_scale * T / t0
        for _ in range(per_level):
            i = np.random.randint(Q)
            n = np.random.randint(N)
            v = X[i, n] + sigma * np.random.standard_normal()
            # reflect into (0, 1)
            while v < 0.0 or v > 1.0:
                if v < 0.0:
                    v = -v
                if v > 1.0:
                    v = 2.0 - v
            if v <= 0.0 or v >= 1.0:
                continue
            old = X[i, n]
            if abs(v - old) < guard:
                continue
            dS = 0.0
            mind2 = 1.0
            col = XT[n]
            Pi = P[i]
            for j in range(Q):
                dn = v - col[j]
                dn2 = dn * dn
                do = old - col[j]
                r = Pi[j] * (do * do) / dn2
                newrow[j] = r
                dS += r - Pi[j]
                mind2 = min(mind2, dn2)
            if mind2 < guard2:
                continue
            S_new = S + dS
            if S_new <= 0.0:
                continue
            delta = (math.log(S_new) - math.log(S)) / N
            if delta <= 0.0 or np.random.random() < math.exp(-delta / T):
                X[i, n] = v
                XT[n, i] = v
                for j in range(Q):
                    P[i, j] = newrow[j]
                    P[j, i] = newrow[j]
                S = S_new
        # resynchronize to shed accumulated rounding
        P = _pair_products(X)
        S = 0.0
        for i in range(Q):
            for j in range(i + 1, Q):
                S += P[i, j]
        if S < best_S:
            best_S = S
            best[:, :] = X
        trace[_level + 1] = best_S
        T *= alpha
    return best, trace


def maxpro_design(
    Q: int,
    N: int,
    seed: int,
    schedule: AnnealSchedule | None = None,
    return_trace: bool = False,
):
    """Anneal an LHS start towards a minimal MaxPro criterion.

    The returned design is the best one seen at the end of any temperature
    level, so its criterion never exceeds that of the LHS start.

    Parameters
    ----------
    Q, N : int
        Number of points and dimensions.
    seed : int
        Seeds both the LHS start and the annealing moves.
    schedule : AnnealSchedule, optional
    return_trace : bool
        Also return the best-so-far criterion after each level.
    """
    schedule = schedule or AnnealSchedule()
    start = lhs_design(Q, N, seed)
    per_level = int(schedule.proposals_factor * Q * N)
    # numba's generator takes a 32-bit seed; derive one from the user seed
    anneal_seed = int(np.random.SeedSequence([int(seed), 7]).generate_state(1)[0] % (2**31 - 1))
    best, trace = _anneal(
        start.points.copy(),
        float(schedule.t0),
        float(schedule.alpha),
        int(schedule.levels),
        per_level,
        float(schedule.step_scale),
        anneal_seed,
        GAP_GUARD,
    )
    npairs = Q * (Q - 1) / 2
    trace = (trace / npairs) ** (1.0 / N)
    value = maxpro_value(best)
    design = DesignMatrix(best, MAXPRO, value, seed, schedule)
    if return_trace:
        return design, trace
    return design


def best_of_runs(designs) -> DesignMatrix:
    """Pick the design with the smallest criterion, ties broken by seed."""
    return min(designs, key=lambda d: (d.criterion_value, d.seed))
