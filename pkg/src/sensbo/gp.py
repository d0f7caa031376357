"""Exact Gaussian-process regression with stationary ARD kernels.

Zero prior mean, near-interpolating Gaussian likelihood (noise variance
``1e-10`` by default), hyperparameters by multi-start maximization of the log
marginal likelihood with analytic gradients.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize

from .errors import ConditioningError, DomainError, ParameterDomainError, SizeError

RBF = "RBF"
MATERN32 = "Matern32"
MATERN52 = "Matern52"
KERNEL_FAMILIES = (RBF, MATERN32, MATERN52)

DEFAULT_NOISE = 1e-10
JITTER_LADDER = (1e-10, 1e-8, 1e-6)

LOG_LENGTHSCALE_BOUNDS = (math.log(1e-2), math.log(1e2))
LOG_OUTPUTSCALE_BOUNDS = (math.log(1e-3), math.log(1e3))

_SQRT3 = math.sqrt(3.0)
_SQRT5 = math.sqrt(5.0)


@dataclass(frozen=True)
class KernelSpec:
    family: str
    lengthscales: np.ndarray
    output_scale: float = 1.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ParameterDomainError(f"unknown kernel family {self.family!r}")
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if np.any(~(ls > 0)) or not self.output_scale > 0:
            raise ParameterDomainError("lengthscales and output scale must be positive")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "output_scale", float(self.output_scale))

    @property
    def dims(self) -> int:
        return self.lengthscales.size

    def to_dict(self):
        return {
            "family": self.family,
            "lengthscales": self.lengthscales.tolist(),
            "outputScale": self.output_scale,
        }


def _profile(family, r):
    """Correlation as a function of the scaled distance ``r``."""
    if family == RBF:
        return np.exp(-0.5 * r * r)
    if family == MATERN32:
        a = _SQRT3 * r
        return (1.0 + a) * np.exp(-a)
    a = _SQRT5 * r
    return (1.0 + a + a * a / 3.0) * np.exp(-a)


def _dprofile_dr2(family, r):
    """Derivative of the correlation with respect to ``r**2``."""
    if family == RBF:
        return -0.5 * np.exp(-0.5 * r * r)
    if family == MATERN32:
        return -1.5 * np.exp(-_SQRT3 * r)
    return -(5.0 / 6.0) * (1.0 + _SQRT5 * r) * np.exp(-_SQRT5 * r)


def _scaled_sqdist(A, B, lengthscales):
    A = A / lengthscales
    B = B / lengthscales
    d2 = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    return np.maximum(d2, 0.0)


def kernel_matrix(spec: KernelSpec, A, B=None) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != spec.dims or B.shape[1] != spec.dims:
        raise DomainError(
            f"inputs have {A.shape[1]}/{B.shape[1]} dims, kernel has {spec.dims}"
        )
    r = np.sqrt(_scaled_sqdist(A, B, spec.lengthscales))
    return spec.output_scale * _profile(spec.family, r)


def kernel_eval(spec: KernelSpec, x, x_prime) -> float:
    """Kernel value for a single pair of points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.size != spec.dims or x_prime.size != spec.dims:
        raise DomainError("dimension mismatch between points and lengthscales")
    r = math.sqrt(float(np.sum(((x - x_prime) / spec.lengthscales) ** 2)))
    return float(spec.output_scale * _profile(spec.family, np.float64(r)))


def _cholesky(K, noise_ladder):
    """Cholesky of ``K + noise*I`` walking up the jitter ladder."""
    n = K.shape[0]
    for noise in noise_ladder:
        try:
            L = linalg.cholesky(K + noise * np.eye(n), lower=True, check_finite=False)
            return L, noise
        except linalg.LinAlgError:
            continue
    cond = float(np.linalg.cond(K + noise_ladder[-1] * np.eye(n)))
    raise ConditioningError("Cholesky failed after jitter escalation", cond)


def _ladder_from(noise):
    return tuple(v for v in JITTER_LADDER if v >= noise) or (noise,)


@dataclass
class GpModel:
    """A fitted GP. Immutable once built; use :meth:`condition_on` to extend."""

    kernel: KernelSpec
    X: np.ndarray
    y: np.ndarray
    noise_variance: float = DEFAULT_NOISE
    chol: np.ndarray = field(default=None, repr=False)
    alpha: np.ndarray = field(default=None, repr=False)
    log_marginal_likelihood: float = float("nan")
    jitter_escalated: bool = False

    @classmethod
    def build(cls, kernel: KernelSpec, X, y, noise_variance=DEFAULT_NOISE):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        K = kernel_matrix(kernel, X)
        L, used = _cholesky(K, _ladder_from(noise_variance))
        alpha = linalg.cho_solve((L, True), y, check_finite=False)
        lml = (
            -0.5 * float(y @ alpha)
            - float(np.sum(np.log(np.diag(L))))
            - 0.5 * y.size * math.log(2 * math.pi)
        )
        return cls(kernel, X, y, used, L, alpha, lml, used > noise_variance)

    def predict(self, Xs):
        """Predictive mean and variance (clamped at zero) at each row of ``Xs``."""
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        Ks = kernel_matrix(self.kernel, Xs, self.X)
        mean = Ks @ self.alpha
        v = linalg.solve_triangular(self.chol, Ks.T, lower=True, check_finite=False)
        var = self.kernel.output_scale - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)

    def predict_one(self, x):
        m, v = self.predict(np.atleast_2d(x))
        return float(m[0]), float(v[0])

    def condition_on(self, x, y_value) -> "GpModel":
        """Same hyperparameters, one more observation (used by constant liar)."""
        X = np.vstack([self.X, np.atleast_2d(x)])
        y = np.append(self.y, float(y_value))
        return GpModel.build(self.kernel, X, y, self.noise_variance)

    def summary(self) -> dict:
        return {
            "family": self.kernel.family,
            "lengthscales": self.kernel.lengthscales.tolist(),
            "outputScale": self.kernel.output_scale,
            "noiseVariance": self.noise_variance,
            "logMarginalLikelihood": self.log_marginal_likelihood,
            "trainingSize": int(self.y.size),
            "jitterEscalated": self.jitter_escalated,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


# ---------------------------------------------------------------------------
# marginal likelihood


def log_marginal_likelihood(theta, X, y, family, noise=DEFAULT_NOISE, grad=True):
    """Log marginal likelihood and its gradient in ``theta = (log l_1..N, log s)``.

    Returns ``(lml, grad)``; ``grad`` is ``None`` when not requested.
    """
    theta = np.asarray(theta, dtype=float)
    ls = np.exp(theta[:-1])
    s = math.exp(theta[-1])
    Xs = X / ls
    r2 = _scaled_sqdist(X, X, ls)
    r = np.sqrt(r2)
    K = s * _profile(family, r)
    L, _ = _cholesky(K, _ladder_from(noise))
    alpha = linalg.cho_solve((L, True), y, check_finite=False)
    n = y.size
    lml = -0.5 * float(y @ alpha) - float(np.sum(np.log(np.diag(L)))) - 0.5 * n * math.log(2 * math.pi)
    if not grad:
        return lml, None
    Kinv = linalg.cho_solve((L, True), np.eye(n), check_finite=False)
    W = np.outer(alpha, alpha) - Kinv
    # dK/dlog l_n = -2 s g'(r2) * (dx_n / l_n)^2
    base = -2.0 * s * _dprofile_dr2(family, r) * W
    g = np.empty_like(theta)
    for d in range(ls.size):
        diff = Xs[:, d][:, None] - Xs[:, d][None, :]
        g[d] = 0.5 * float(np.sum(base * diff * diff))
    g[-1] = 0.5 * float(np.sum(W * K))
    return lml, g


def fit_gp(
    X,
    y,
    family: str = RBF,
    n_starts: int = 8,
    seed: int = 0,
    noise_variance: float = DEFAULT_NOISE,
    maxiter: int = 200,
) -> GpModel:
    """Fit ARD hyperparameters by multi-start L-BFGS-B on the log marginal likelihood.

    Parameters
    ----------
    X : (Q, N) array
        Training inputs, normally in the unit hypercube.
    y : (Q,) array
        Training outputs, normally logit-transformed.
    family : {"RBF", "Matern32", "Matern52"}
    n_starts : int
        The first start is ``l = 0.5``, ``s = var(y)``; the rest are drawn from
        a generator seeded with ``seed``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 2:
        raise SizeError("need at least 2 training points")
    if family not in KERNEL_FAMILIES:
        raise ParameterDomainError(f"unknown kernel family {family!r}")
    N = X.shape[1]
    bounds = [LOG_LENGTHSCALE_BOUNDS] * N + [LOG_OUTPUTSCALE_BOUNDS]
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    var_y = float(np.mean(y * y)) or 1.0
    rng = np.random.default_rng(seed)
    starts = [np.append(np.full(N, math.log(0.5)), math.log(var_y))]
    for _ in range(n_starts - 1):
        starts.append(
            np.append(
                rng.uniform(math.log(0.05), math.log(5.0), N),
                math.log(var_y) + rng.uniform(-1.5, 1.5),
            )
        )

    def objective(theta):
        try:
            lml, g = log_marginal_likelihood(theta, X, y, family, noise_variance)
        except ConditioningError:
            return 1e25, np.zeros_like(theta)
        return -lml, -g

    best = None
    for x0 in starts:
        x0 = np.clip(x0, lo, hi)
        res = optimize.minimize(
            objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": maxiter},
        )
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    theta = best.x
    spec = KernelSpec(family, np.exp(theta[:-1]), math.exp(theta[-1]))
    return GpModel.build(spec, X, y, noise_variance)


def with_hyperparameters(model: GpModel, X, y) -> GpModel:
    """Rebuild ``model``'s kernel on new data without refitting."""
    return GpModel.build(model.kernel, X, y, model.noise_variance)


def refit_like(model: GpModel, **changes) -> GpModel:
    kernel = replace(model.kernel, **changes)
    return GpModel.build(kernel, model.X, model.y, model.noise_variance)
