"""Analytic objectives standing in for the CFD turbine model, plus the
preliminary-design geometry relations.

Every benchmark exposes an :class:`~sensbo.probability.InputModel` for its
native inputs; ``evaluate(u)`` maps unit-hypercube points through the inverse
CDFs (rounding discrete inputs) before evaluating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError
from .probability import InputModel, MarginalDistribution

# ---------------------------------------------------------------------------
# operating point and geometry


@dataclass(frozen=True)
class OperatingPoint:
    pressure_ratio: float = 4.42
    inlet_total_pressure: float = 2.08  # bar
    inlet_total_temperature: float = 358.15  # K
    mass_flow: float = 0.411  # kg/s
    inlet_relative_humidity: float = 0.6

    def __post_init__(self):
        vals = (self.pressure_ratio, self.inlet_total_pressure,
                self.inlet_total_temperature, self.mass_flow)
        if any(not v > 0 for v in vals):
            raise DomainError("operating point values must be positive")
        if not 0.0 <= self.inlet_relative_humidity <= 1.0:
            raise DomainError("relative humidity must lie in [0, 1]")


def _positive(**kw):
    for name, v in kw.items():
        if not v > 0:
            raise DomainError(f"{name} must be positive, got {v}")


def rotor_radius(ivr, ss, mass_flow, rho5, dh_is):
    """Rotor inlet radius ``(4 mdot^2 / (rho5^2 dh))^(1/4) / (IVR * SS)``."""
    _positive(ivr=ivr, ss=ss, mass_flow=mass_flow, rho5=rho5, dh_is=dh_is)
    return (4.0 * mass_flow**2 / (rho5**2 * dh_is)) ** 0.25 / (ivr * ss)


def outflow_velocity(ivr, fc, dh_is):
    """Rotor outflow velocity ``sqrt(2 dh) / (IVR * FC)``."""
    _positive(ivr=ivr, fc=fc, dh_is=dh_is)
    return math.sqrt(2.0 * dh_is) / (ivr * fc)


def derived_geometry(x, mass_flow, rho5, dh_is):
    """``(r4, c5, r_s5, L_ax)`` for a design vector ordered as in :data:`TURBINE_NAMES`."""
    ivr, ss, fc, srr, alr = (float(v) for v in x[:5])
    _positive(srr=srr, alr=alr)
    r4 = rotor_radius(ivr, ss, mass_flow, rho5, dh_is)
    c5 = outflow_velocity(ivr, fc, dh_is)
    return r4, c5, r4 * srr, 2.0 * r4 * alr


def efficiency(power, mass_flow, dh_is):
    """Total-to-static isentropic efficiency ``P / (mdot * dh)``."""
    _positive(mass_flow=mass_flow, dh_is=dh_is)
    return power / (mass_flow * dh_is)


# ---------------------------------------------------------------------------
# benchmark registry


@dataclass
class Benchmark:
    name: str
    input_model: InputModel
    function: Callable[[np.ndarray], np.ndarray]
    known_optimum: tuple | None = None  # (physical point, value), maximization sense
    analytic_sobol: dict | None = None  # {"first": [...], "total": [...]}
    description: str = ""

    @property
    def dims(self) -> int:
        return self.input_model.dims

    def evaluate_physical(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dims:
            raise DomainError(f"{self.name} takes {self.dims} inputs, got {X.shape[1]}")
        return np.asarray(self.function(X), dtype=float)

    def evaluate(self, u) -> np.ndarray | float:
        u_arr = np.asarray(u, dtype=float)
        U = np.atleast_2d(u_arr)
        if U.shape[1] != self.dims:
            raise DomainError(f"{self.name} takes {self.dims} inputs, got {U.shape[1]}")
        out = self.evaluate_physical(self.input_model.to_physical(U))
        return float(out[0]) if u_arr.ndim == 1 else out

    __call__ = evaluate_physical


def _uniform_model(bounds, names):
    return InputModel(
        tuple(MarginalDistribution.uniform(lo, hi) for lo, hi in bounds), tuple(names)
    )


# Ishigami --------------------------------------------------------------------

ISHIGAMI_A = 7.0
ISHIGAMI_B = 0.1


def ishigami(X, a=ISHIGAMI_A, b=ISHIGAMI_B):
    X = np.atleast_2d(X)
    return np.sin(X[:, 0]) + a * np.sin(X[:, 1]) ** 2 + b * X[:, 2] ** 4 * np.sin(X[:, 0])


def ishigami_sobol(a=ISHIGAMI_A, b=ISHIGAMI_B):
    pi4, pi8 = math.pi**4, math.pi**8
    v1 = 0.5 * (1 + b * pi4 / 5) ** 2
    v2 = a**2 / 8
    v13 = b**2 * pi8 * (1 / 18 - 1 / 50)
    V = v1 + v2 + v13
    return {"first": [v1 / V, v2 / V, 0.0], "total": [(v1 + v13) / V, v2 / V, v13 / V]}


# Sobol' G ----------------------------------------------------------------------

SOBOL_G_A = (0.0, 1.0, 4.5, 9.0, 99.0, 99.0, 99.0, 99.0)


def sobol_g(U, a=SOBOL_G_A):
    U = np.atleast_2d(U)
    a = np.asarray(a, dtype=float)
    return np.prod((np.abs(4.0 * U - 2.0) + a) / (1.0 + a), axis=1)


def sobol_g_sobol(a=SOBOL_G_A):
    a = np.asarray(a, dtype=float)
    vi = 1.0 / (3.0 * (1.0 + a) ** 2)
    V = np.prod(1.0 + vi) - 1.0
    total = np.array([vi[n] * np.prod(np.delete(1.0 + vi, n)) for n in range(a.size)]) / V
    return {"first": (vi / V).tolist(), "total": total.tolist()}


# Borehole ----------------------------------------------------------------------

BOREHOLE_BOUNDS = (
    (0.05, 0.15),  # rw
    (100.0, 50000.0),  # r
    (63070.0, 115600.0),  # Tu
    (990.0, 1110.0),  # Hu
    (63.1, 116.0),  # Tl
    (700.0, 820.0),  # Hl
    (1120.0, 1680.0),  # L
    (9855.0, 12045.0),  # Kw
)


def borehole(X):
    X = np.atleast_2d(X)
    rw, r, Tu, Hu, Tl, Hl, L, Kw = X.T
    lnr = np.log(r / rw)
    return 2 * np.pi * Tu * (Hu - Hl) / (lnr * (1 + 2 * L * Tu / (lnr * rw**2 * Kw) + Tu / Tl))


# Sphere and Branin ----------------------------------------------------------------

SPHERE_CENTER = 0.35


def sphere(U, center=SPHERE_CENTER):
    U = np.atleast_2d(U)
    return np.sum((U - center) ** 2, axis=1)


def branin(X):
    X = np.atleast_2d(X)
    x1, x2 = X[:, 0], X[:, 1]
    b, c = 5.1 / (4 * math.pi**2), 5 / math.pi
    return (x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - 1 / (8 * math.pi)) * np.cos(x1) + 10


BRANIN_MIN = 0.397887357729738


# Turbine efficiency proxy ----------------------------------------------------------

TURBINE_NAMES = ("IVR", "SS", "FC", "SRR", "ALR", "BN", "CAD", "MT", "HCS", "SCS")
# indices of the dimensions built to carry the variance
TURBINE_INFLUENTIAL = (0, 1, 2, 5, 8)


def turbine_input_model() -> InputModel:
    """Nominal input model; IVR/SS/FC start uniform over admissible ranges."""
    M = MarginalDistribution
    return InputModel(
        (
            M.uniform(0.60, 0.80),  # IVR
            M.uniform(0.40, 0.80),  # SS
            M.uniform(0.15, 0.35),  # FC
            M.uniform(0.60, 0.85),  # SRR
            M.uniform(0.30, 0.50),  # ALR
            M.discrete_uniform(12, 16),  # BN
            M.uniform(-120.0, 120.0),  # CAD
            M.uniform(3.0, 5.0),  # MT
            M.uniform(0.60, 1.00),  # HCS
            M.uniform(0.10, 0.30),  # SCS
        ),
        TURBINE_NAMES,
    )


_TURBINE_LO = np.array([0.60, 0.40, 0.15, 0.60, 0.30, 12.0, -120.0, 3.0, 0.60, 0.10])
_TURBINE_SPAN = np.array([0.20, 0.40, 0.20, 0.25, 0.20, 4.0, 240.0, 2.0, 0.40, 0.20])

# latent-score coefficients
TURBINE_BOWL = ((0, 0.80, 2.0), (1, 0.25, 2.0), (2, 0.75, 2.0))  # (dim, optimum, curvature)
TURBINE_INTERACTION = 1.0  # IVR x SS
TURBINE_BN_AMPLITUDE = 0.50  # cos(pi (BN - 15) / 4)
TURBINE_HCS_AMPLITUDE = 0.45  # cos(pi (s_HCS - 0.85))
TURBINE_MINOR = {3: (0.45, 0.05), 4: (0.55, 0.05), 6: (0.5, 0.04), 7: (0.4, 0.04), 9: (0.6, 0.05)}  # dim: (optimum, curvature)
TURBINE_OFFSET = 1.90


def turbine_efficiency_proxy(X) -> np.ndarray:
    """Smooth bounded efficiency surrogate over the ten turbine design inputs.

    ``eta = sigmoid(offset + g(s))`` with ``s`` the inputs scaled to [0, 1] by
    their ranges and ``g`` the sum of

    * a quadratic bowl in IVR, SS and FC with optima at 0.80, 0.25, 0.75
      (curvature 2 each);
    * an IVR x SS interaction ``(s1 - 1/2)(s2 - 1/2)``;
    * ``0.50 cos(pi (BN - 15) / 4)`` (blade number, integer) and
      ``0.45 cos(pi (s_HCS - 0.85))``;
    * shallow bowls (curvature at most 0.05) in the remaining five inputs.

    The five minor inputs each have a total Sobol' index below 1e-4. The
    maximum is about 0.942 at BN = 15.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    s = (X - _TURBINE_LO) / _TURBINE_SPAN
    g = np.zeros(X.shape[0])
    for dim, opt, curv in TURBINE_BOWL:
        g -= curv * (s[:, dim] - opt) ** 2
    g += TURBINE_INTERACTION * (s[:, 0] - 0.5) * (s[:, 1] - 0.5)
    g += TURBINE_BN_AMPLITUDE * np.cos(np.pi * (X[:, 5] - 15.0) / 4.0)
    g += TURBINE_HCS_AMPLITUDE * np.cos(np.pi * (s[:, 8] - 0.85))
    for dim, (opt, curv) in TURBINE_MINOR.items():
        g -= curv * (s[:, dim] - opt) ** 2
    return 1.0 / (1.0 + np.exp(-(TURBINE_OFFSET + g)))


REGISTRY: dict[str, Callable[[], Benchmark]] = {}


def _register(factory):
    REGISTRY[factory.__name__.removeprefix("_make_")] = factory
    return factory


@_register
def _make_Ishigami():
    im = _uniform_model([(-math.pi, math.pi)] * 3, ("x1", "x2", "x3"))
    return Benchmark("Ishigami", im, ishigami, analytic_sobol=ishigami_sobol(),
                     description="sin x1 + a sin^2 x2 + b x3^4 sin x1, a=7, b=0.1")


@_register
def _make_SobolG():
    im = _uniform_model([(0.0, 1.0)] * len(SOBOL_G_A), tuple(f"x{i + 1}" for i in range(len(SOBOL_G_A))))
    return Benchmark("SobolG", im, sobol_g, analytic_sobol=sobol_g_sobol(),
                     description="product of (|4u-2|+a)/(1+a)")


@_register
def _make_Borehole():
    names = ("rw", "r", "Tu", "Hu", "Tl", "Hl", "L", "Kw")
    return Benchmark("Borehole", _uniform_model(BOREHOLE_BOUNDS, names), borehole,
                     description="water flow through a borehole")


@_register
def _make_Sphere():
    im = _uniform_model([(0.0, 1.0)] * 2, ("x1", "x2"))
    return Benchmark("Sphere", im, lambda U: -sphere(U),
                     known_optimum=(np.full(2, SPHERE_CENTER), 0.0),
                     description="negated squared distance to (0.35, 0.35)")


@_register
def _make_Branin():
    im = _uniform_model([(-5.0, 10.0), (0.0, 15.0)], ("x1", "x2"))
    return Benchmark("Branin", im, lambda X: -branin(X),
                     known_optimum=(np.array([math.pi, 2.275]), -BRANIN_MIN),
                     description="negated Branin-Hoo")


@_register
def _make_TurbineEfficiencyProxy():
    return Benchmark("TurbineEfficiencyProxy", turbine_input_model(), turbine_efficiency_proxy,
                     description=turbine_efficiency_proxy.__doc__.splitlines()[0])


def get_benchmark(name: str) -> Benchmark:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise DomainError(f"unknown objective {name!r}; known: {sorted(REGISTRY)}") from None


def evaluate_benchmark(obj: Benchmark | str, u):
    if isinstance(obj, str):
        obj = get_benchmark(obj)
    return obj.evaluate(u)


# ---------------------------------------------------------------------------
# external simulators


class ExternalProcessObjective:
    """Objective backed by a child process.

    The command receives a CSV of unit-hypercube points on stdin (header
    ``u1,...,uN``, one point per row) and must print one line per point:
    either the response alone or the response followed by the realized
    physical inputs, comma separated. Realized inputs, when present, replace
    the targets in the stored dataset.
    """

    def __init__(self, command, dims: int, timeout: float | None = None):
        import shlex

        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.dims = int(dims)
        self.timeout = timeout
        self.reports_realized = False

    def __call__(self, U):
        import subprocess

        U = np.atleast_2d(np.asarray(U, dtype=float))
        if U.shape[1] != self.dims:
            raise DomainError(f"expected {self.dims} columns, got {U.shape[1]}")
        lines = [",".join(f"u{n + 1}" for n in range(self.dims))]
        lines += [",".join(repr(float(v)) for v in row) for row in U]
        proc = subprocess.run(
            self.command, input="\n".join(lines) + "\n", capture_output=True,
            text=True, timeout=self.timeout, check=False,
        )
        if proc.returncode != 0:
            raise RuntimeError(
                f"objective process exited with {proc.returncode}: {proc.stderr.strip()}"
            )
        rows = [ln.strip() for ln in proc.stdout.splitlines() if ln.strip()]
        if len(rows) != U.shape[0]:
            raise DomainError(f"objective process returned {len(rows)} lines for {U.shape[0]} points")
        parsed = [[float(v) for v in r.split(",")] for r in rows]
        y = np.array([p[0] for p in parsed])
        widths = {len(p) for p in parsed}
        if widths == {1}:
            return y
        if widths != {1 + self.dims}:
            raise DomainError("each line must hold the response, optionally followed by all inputs")
        self.reports_realized = True
        return y, np.array([p[1:] for p in parsed])
