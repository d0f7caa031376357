"""Marginal distributions, CDF normalization and the bounded-output transform.

Inputs are modelled as independent marginals. Each marginal maps its
physical support onto the unit interval through its CDF; the optimizer and
all surrogates operate on those unit coordinates. The scalar response is
mapped to the real line by ``z = logit(F(eta))`` (see :class:`OutputTransform`).

Distribution descriptors serialize to ``{"family": ..., "params": {...}}``
with the field names listed in :data:`PARAM_NAMES`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import optimize, special, stats

from .errors import (
    DegenerateDataError,
    DomainError,
    InsufficientDataError,
    ParameterDomainError,
)

UNIFORM = "Uniform"
NORMAL = "Normal"
BETA = "Beta"
GAMMA = "Gamma"
DISCRETE_UNIFORM = "DiscreteUniform"

FAMILIES = (UNIFORM, NORMAL, BETA, GAMMA, DISCRETE_UNIFORM)
CONTINUOUS_CANDIDATES = (NORMAL, UNIFORM, BETA, GAMMA)

PARAM_NAMES = {
    UNIFORM: ("lo", "hi"),
    NORMAL: ("mean", "std"),
    BETA: ("alpha", "beta", "lo", "hi"),
    GAMMA: ("shape", "rate", "loc"),
    DISCRETE_UNIFORM: ("lo", "hi"),
}

# free parameters counted by BIC
N_FREE_PARAMS = {UNIFORM: 2, NORMAL: 2, BETA: 4, GAMMA: 3}

CLAMP_EPS = 1e-12


class ClampWarning(RuntimeWarning):
    """Emitted when a response at or beyond the fitted support is clamped."""


@dataclass(frozen=True)
class MarginalDistribution:
    """A univariate distribution from one of the supported families.

    ``DiscreteUniform`` is handled through a continuous relaxation: its CDF
    is the uniform CDF over ``[lo - 1/2, hi + 1/2]`` so that rounding an
    inverse-CDF draw gives every integer equal probability.
    """

    family: str
    params: Mapping[str, float]
    _frozen: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterDomainError(f"unknown family {self.family!r}")
        names = PARAM_NAMES[self.family]
        missing = [n for n in names if n not in self.params]
        if missing:
            raise ParameterDomainError(f"{self.family} missing parameters {missing}")
        p = {n: float(self.params[n]) for n in names}
        if not all(math.isfinite(v) for v in p.values()):
            raise ParameterDomainError(f"non-finite parameters {p}")
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "_frozen", _build_scipy(self.family, p))

    # -- constructors -----------------------------------------------------
    @classmethod
    def uniform(cls, lo, hi):
        return cls(UNIFORM, {"lo": lo, "hi": hi})

    @classmethod
    def normal(cls, mean, std):
        return cls(NORMAL, {"mean": mean, "std": std})

    @classmethod
    def beta(cls, alpha, beta, lo=0.0, hi=1.0):
        return cls(BETA, {"alpha": alpha, "beta": beta, "lo": lo, "hi": hi})

    @classmethod
    def gamma(cls, shape, rate, loc=0.0):
        return cls(GAMMA, {"shape": shape, "rate": rate, "loc": loc})

    @classmethod
    def discrete_uniform(cls, lo, hi):
        return cls(DISCRETE_UNIFORM, {"lo": int(lo), "hi": int(hi)})

    # -- queries ----------------------------------------------------------
    @property
    def is_discrete(self) -> bool:
        return self.family == DISCRETE_UNIFORM

    @property
    def support(self) -> tuple[float, float]:
        lo, hi = self._frozen.support()
        return float(lo), float(hi)

    def cdf(self, x):
        """CDF, 0 below the support and 1 above it."""
        x = _finite(x, "x")
        return _maybe_scalar(self._frozen.cdf(x), x)

    def sf(self, x):
        x = _finite(x, "x")
        return _maybe_scalar(self._frozen.sf(x), x)

    def logcdf(self, x):
        return self._frozen.logcdf(x)

    def logsf(self, x):
        return self._frozen.logsf(x)

    def pdf(self, x):
        return _maybe_scalar(self._frozen.pdf(x), x)

    def logpdf(self, x):
        return self._frozen.logpdf(x)

    def inverse_cdf(self, u):
        u_arr = np.asarray(u, dtype=float)
        if np.any(~(u_arr > 0.0) | ~(u_arr < 1.0)):
            raise DomainError("inverse_cdf requires 0 < u < 1")
        return _maybe_scalar(self._frozen.ppf(u_arr), u)

    def inverse_sf(self, s):
        s_arr = np.asarray(s, dtype=float)
        if np.any(~(s_arr > 0.0) | ~(s_arr < 1.0)):
            raise DomainError("inverse_sf requires 0 < s < 1")
        return _maybe_scalar(self._frozen.isf(s_arr), s)

    def to_physical(self, u):
        """Inverse CDF followed by rounding for discrete families."""
        x = self.inverse_cdf(u)
        if self.is_discrete:
            lo, hi = self.params["lo"], self.params["hi"]
            x = np.clip(np.rint(x), lo, hi)
            return _maybe_scalar(x, u)
        return x

    def mean(self) -> float:
        return float(self._frozen.mean())

    def loglikelihood(self, samples) -> float:
        """Log-likelihood with boundary samples moved just inside the support."""
        x = np.asarray(samples, dtype=float)
        lo, hi = self.support
        scale = (hi - lo) if math.isfinite(hi - lo) else 1.0
        pad = CLAMP_EPS * scale
        if math.isfinite(lo):
            x = np.maximum(x, lo + pad)
        if math.isfinite(hi):
            x = np.minimum(x, hi - pad)
        return float(np.sum(self._frozen.logpdf(x)))

    def to_dict(self) -> dict:
        params = dict(self.params)
        if self.is_discrete:
            params = {k: int(v) for k, v in params.items()}
        return {"family": self.family, "params": params}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MarginalDistribution":
        return cls(d["family"], dict(d["params"]))


def _finite(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _maybe_scalar(values, like):
    if np.ndim(like) == 0:
        return float(np.asarray(values).reshape(()))
    return np.asarray(values, dtype=float)


def _build_scipy(family, p):
    if family == UNIFORM:
        if not p["hi"] > p["lo"]:
            raise ParameterDomainError("Uniform requires hi > lo")
        return stats.uniform(loc=p["lo"], scale=p["hi"] - p["lo"])
    if family == DISCRETE_UNIFORM:
        if not (p["lo"] == int(p["lo"]) and p["hi"] == int(p["hi"])):
            raise ParameterDomainError("DiscreteUniform requires integer endpoints")
        if not p["hi"] >= p["lo"]:
            raise ParameterDomainError("DiscreteUniform requires hi >= lo")
        return stats.uniform(loc=p["lo"] - 0.5, scale=p["hi"] - p["lo"] + 1.0)
    if family == NORMAL:
        if not p["std"] > 0:
            raise ParameterDomainError("Normal requires std > 0")
        return stats.norm(loc=p["mean"], scale=p["std"])
    if family == BETA:
        if not (p["alpha"] > 0 and p["beta"] > 0 and p["hi"] > p["lo"]):
            raise ParameterDomainError("Beta requires alpha, beta > 0 and hi > lo")
        return stats.beta(p["alpha"], p["beta"], loc=p["lo"], scale=p["hi"] - p["lo"])
    if family == GAMMA:
        if not (p["shape"] > 0 and p["rate"] > 0):
            raise ParameterDomainError("Gamma requires shape, rate > 0")
        return stats.gamma(p["shape"], loc=p["loc"], scale=1.0 / p["rate"])
    raise ParameterDomainError(family)  # pragma: no cover


# ---------------------------------------------------------------------------
# joint input model


@dataclass(frozen=True)
class InputModel:
    """Independent marginals with labels; joint CDF is the product."""

    marginals: tuple[MarginalDistribution, ...]
    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.marginals) != len(self.names):
            raise ParameterDomainError("one name per marginal required")

    @property
    def dims(self) -> int:
        return len(self.marginals)

    @property
    def discrete_mask(self) -> np.ndarray:
        return np.array([m.is_discrete for m in self.marginals])

    def to_unit(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.column_stack([m.cdf(x[:, n]) for n, m in enumerate(self.marginals)])

    def to_physical(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return np.column_stack(
            [m.to_physical(u[:, n]) for n, m in enumerate(self.marginals)]
        )

    def joint_cdf(self, x) -> np.ndarray:
        return np.prod(self.to_unit(x), axis=1)

    def replace(self, index: int, marginal: MarginalDistribution) -> "InputModel":
        ms = list(self.marginals)
        ms[index] = marginal
        return InputModel(tuple(ms), self.names)

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "marginals": [m.to_dict() for m in self.marginals],
        }

    @classmethod
    def from_dict(cls, d) -> "InputModel":
        return cls(
            tuple(MarginalDistribution.from_dict(m) for m in d["marginals"]),
            tuple(d["names"]),
        )


# ---------------------------------------------------------------------------
# output transform


@dataclass(frozen=True)
class OutputTransform:
    """``z = logit(F(eta))`` and its inverse ``eta = F^-1(sigmoid(z))``.

    The logit is evaluated as ``log F(eta) - log S(eta)`` with ``S`` the
    survival function, so both tails keep full relative precision.
    """

    dist: MarginalDistribution

    def forward_flagged(self, eta):
        """Return ``(z, clamped)`` where ``clamped`` marks saturated inputs."""
        eta_arr = _finite(eta, "eta")
        with np.errstate(divide="ignore"):
            logu = np.asarray(self.dist.logcdf(eta_arr), dtype=float)
            logs = np.asarray(self.dist.logsf(eta_arr), dtype=float)
        lim = math.log(CLAMP_EPS) - math.log1p(-CLAMP_EPS)
        z = logu - logs
        lo, hi = self.dist.support
        # only responses at or beyond the support bounds are clamped
        clamped = ~np.isfinite(z) | (eta_arr <= lo) | (eta_arr >= hi)
        above = eta_arr > self.dist.mean()
        z = np.where(clamped, np.where(above, -lim, lim), z)
        return _maybe_scalar(z, eta), (
            bool(clamped) if np.ndim(eta) == 0 else clamped
        )

    def forward(self, eta):
        z, clamped = self.forward_flagged(eta)
        if np.any(clamped):
            warnings.warn(
                f"{int(np.sum(clamped))} response(s) outside the fitted support "
                "were clamped",
                ClampWarning,
                stacklevel=2,
            )
        return z

    def inverse(self, z):
        z_arr = _finite(z, "z")
        lower = z_arr <= 0
        # expit(-|z|) lies in (0, 1/2]; saturate away from 0 for huge |z|
        tail = np.maximum(special.expit(-np.abs(z_arr)), np.finfo(float).tiny)
        eta = np.where(
            lower,
            self.dist._frozen.ppf(tail),
            self.dist._frozen.isf(tail),
        )
        return _maybe_scalar(eta, z)

    def to_dict(self) -> dict:
        return {"dist": self.dist.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "OutputTransform":
        return cls(MarginalDistribution.from_dict(d["dist"]))


def logit(u):
    return special.logit(u)


def sigmoid(z):
    return special.expit(z)


# ---------------------------------------------------------------------------
# BIC-based fitting


def _validate_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 10:
        raise InsufficientDataError(f"need at least 10 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DomainError("samples must be finite")
    if np.ptp(x) == 0.0:
        raise DegenerateDataError("samples have zero variance")
    return x


def fit_uniform(x) -> MarginalDistribution:
    return MarginalDistribution.uniform(float(np.min(x)), float(np.max(x)))


def fit_normal(x) -> MarginalDistribution:
    return MarginalDistribution.normal(float(np.mean(x)), float(np.std(x)))


def _multistart(nll, starts, bounds):
    best = None
    for x0 in starts:
        x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
        res = optimize.minimize(nll, x0, method="L-BFGS-B", bounds=bounds)
        if best is None or res.fun < best.fun:
            best = res
    return best.x


# endpoint offsets below this fraction of the sample range are not allowed;
# otherwise shapes < 1 make the likelihood unbounded at the extremes
_MIN_GAP = 1e-4


def fit_beta(x, min_gap: float = _MIN_GAP) -> MarginalDistribution:
    """Four-parameter beta by maximum likelihood.

    Parameterized as ``lo = min - range * exp(a)``, ``hi = max + range * exp(b)``
    so the fitted support always contains the samples; both gaps are at least
    ``min_gap`` times the sample range.
    """
    xmin, xmax = float(np.min(x)), float(np.max(x))
    rng = xmax - xmin

    def unpack(theta):
        la, lb, ga, gb = theta
        return math.exp(la), math.exp(lb), xmin - rng * math.exp(ga), xmax + rng * math.exp(gb)

    def nll(theta):
        a, b, lo, hi = unpack(theta)
        val = -np.sum(stats.beta.logpdf(x, a, b, loc=lo, scale=hi - lo))
        return val if np.isfinite(val) else 1e300

    # method-of-moments starts on a few candidate supports
    starts = []
    for gap in (0.01, 0.1, 0.5):
        gap = max(gap, min_gap)
        lo, hi = xmin - rng * gap, xmax + rng * gap
        y = (x - lo) / (hi - lo)
        m, v = float(np.mean(y)), float(np.var(y))
        common = max(m * (1 - m) / v - 1.0, 1e-2)
        starts.append(
            np.array([math.log(m * common), math.log((1 - m) * common), math.log(gap), math.log(gap)])
        )
    bounds = [(math.log(1e-2), math.log(1e3))] * 2 + [(math.log(min_gap), math.log(10.0))] * 2
    a, b, lo, hi = unpack(_multistart(nll, starts, bounds))
    return MarginalDistribution.beta(a, b, lo, hi)


def fit_gamma(x) -> MarginalDistribution:
    """Three-parameter gamma (shape, rate, location shift) by maximum likelihood."""
    xmin, xmax = float(np.min(x)), float(np.max(x))
    rng = xmax - xmin

    def unpack(theta):
        lk, lr, g = theta
        return math.exp(lk), math.exp(lr), xmin - rng * math.exp(g)

    def nll(theta):
        k, r, loc = unpack(theta)
        val = -np.sum(stats.gamma.logpdf(x, k, loc=loc, scale=1.0 / r))
        return val if np.isfinite(val) else 1e300

    mean, var = float(np.mean(x)), float(np.var(x))
    skew = float(stats.skew(x))
    starts = []
    # moments: skew = 2/sqrt(k); loc = mean - k/r
    k_mom = (2.0 / skew) ** 2 if skew > 0.05 else 400.0
    for k0 in (k_mom, 2.0, 20.0):
        k0 = min(max(k0, 0.05), 900.0)
        r0 = math.sqrt(k0 / var)
        loc0 = min(mean - k0 / r0, xmin - rng * 0.01)
        starts.append(np.array([math.log(k0), math.log(r0), math.log(max((xmin - loc0) / rng, _MIN_GAP))]))
    bounds = [
        (math.log(1e-2), math.log(1e3)),
        (math.log(1e-3 / rng), math.log(1e6 / rng)),
        (math.log(_MIN_GAP), math.log(1e3)),
    ]
    k, r, loc = unpack(_multistart(nll, starts, bounds))
    return MarginalDistribution.gamma(k, r, loc)


_FITTERS = {UNIFORM: fit_uniform, NORMAL: fit_normal, BETA: fit_beta, GAMMA: fit_gamma}


def bic(dist: MarginalDistribution, samples) -> float:
    x = np.asarray(samples, dtype=float)
    k = N_FREE_PARAMS[dist.family]
    return k * math.log(x.size) - 2.0 * dist.loglikelihood(x)


def fit_distribution_bic(
    samples: Sequence[float], candidates: Iterable[str] = CONTINUOUS_CANDIDATES
) -> tuple[MarginalDistribution, dict[str, float]]:
    """Fit every candidate family by maximum likelihood and keep the lowest BIC.

    Parameters
    ----------
    samples : sequence of float
        At least ten finite, non-constant observations.
    candidates : iterable of str
        Subset of ``Normal``, ``Uniform``, ``Beta``, ``Gamma``.

    Returns
    -------
    dist : MarginalDistribution
        The selected fitted distribution.
    scores : dict
        BIC per candidate family.
    """
    x = _validate_samples(samples)
    candidates = list(candidates)
    unknown = [c for c in candidates if c not in _FITTERS]
    if unknown or not candidates:
        raise ParameterDomainError(f"unsupported candidate families {unknown}")
    fits = {c: _FITTERS[c](x) for c in candidates}
    scores = {c: bic(d, x) for c, d in fits.items()}
    # ties resolved by candidate order, which is deterministic
    best = min(candidates, key=lambda c: (scores[c], candidates.index(c)))
    return fits[best], scores


def pad_bounded_support(dist: MarginalDistribution, samples, factor: float = 1.0) -> MarginalDistribution:
    """Widen a fitted bounded support by ``factor`` sample spacings on each side.

    Uniform endpoints then follow the unbiased estimator
    ``min - range/(n-1)``, ``max + range/(n-1)`` (for ``factor = 1``). A Beta
    whose support is too tight is refitted by maximum likelihood with the
    gaps constrained to at least one spacing, so its shape adapts to the
    wider support. Unbounded families are returned unchanged. Used by the
    workflow so new responses slightly above the observed maximum do not
    saturate the logit.
    """
    x = np.asarray(samples, dtype=float)
    gap = factor * float(np.ptp(x)) / max(x.size - 1, 1)
    if gap <= 0:
        return dist
    p = dict(dist.params)
    if dist.family == UNIFORM:
        return MarginalDistribution.uniform(p["lo"] - gap, p["hi"] + gap)
    if dist.family == BETA:
        if p["lo"] <= float(np.min(x)) - gap and p["hi"] >= float(np.max(x)) + gap:
            return dist
        return fit_beta(x, min_gap=gap / float(np.ptp(x)))
    return dist
