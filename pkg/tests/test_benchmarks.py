import math
import sys

import numpy as np
import pytest

from sensbo.benchmarks import (
    REGISTRY,
    TURBINE_INFLUENTIAL,
    ExternalProcessObjective,
    OperatingPoint,
    derived_geometry,
    efficiency,
    evaluate_benchmark,
    get_benchmark,
    outflow_velocity,
    rotor_radius,
)
from sensbo.errors import DomainError
from sensbo.pce import TD, fit_scheme
from sensbo.sensitivity import sobol_from_pce, sobol_monte_carlo


def test_operating_point_defaults_and_validation():
    op = OperatingPoint()
    assert (op.pressure_ratio, op.inlet_total_pressure, op.inlet_total_temperature) == (4.42, 2.08, 358.15)
    assert (op.mass_flow, op.inlet_relative_humidity) == (0.411, 0.6)
    with pytest.raises(DomainError):
        OperatingPoint(mass_flow=0.0)
    with pytest.raises(DomainError):
        OperatingPoint(inlet_relative_humidity=1.2)


def test_rotor_radius_identities():
    assert rotor_radius(1, 1, 1, 1, 1) == pytest.approx(math.sqrt(2), abs=1e-12)
    base = rotor_radius(0.7, 0.6, 0.411, 1.2, 4e4)
    assert rotor_radius(1.4, 0.6, 0.411, 1.2, 4e4) == pytest.approx(base / 2, rel=1e-12)
    # r4 grows with the square root of the mass flow
    assert rotor_radius(0.7, 0.6, 2 * 0.411, 1.2, 4e4) == pytest.approx(base * math.sqrt(2), rel=1e-12)
    assert rotor_radius(0.7, 0.6, 4 * 0.411, 1.2, 4e4) == pytest.approx(base * 2, rel=1e-12)
    with pytest.raises(DomainError):
        rotor_radius(0.7, 0.0, 0.411, 1.2, 4e4)


def test_outflow_velocity_identities():
    assert outflow_velocity(1, 1, 0.5) == pytest.approx(1.0, abs=1e-12)
    assert outflow_velocity(1, 1, 1) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert outflow_velocity(1, 2, 1) == pytest.approx(math.sqrt(2) / 2, abs=1e-12)
    with pytest.raises(DomainError):
        outflow_velocity(-1, 1, 1)


def test_derived_geometry():
    x = [1.0, 1.0, 1.0, 0.7, 0.4]
    r4, c5, rs5, lax = derived_geometry(x, 1, 1, 1)
    assert r4 == pytest.approx(math.sqrt(2), abs=1e-12)
    assert c5 == pytest.approx(math.sqrt(2), abs=1e-12)
    assert rs5 == pytest.approx(0.98995, abs=1e-5)
    assert lax == pytest.approx(1.13137, abs=1e-5)
    assert derived_geometry([1, 1, 1, 1.0, 0.4], 1, 1, 1)[2] == r4


def test_efficiency_examples():
    assert efficiency(0.4, 1, 0.5) == pytest.approx(0.8)
    assert efficiency(0.0, 1, 0.5) == 0.0
    assert efficiency(0.411 * 5e4, 0.411, 5e4) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        efficiency(1.0, 0.0, 1.0)


def test_registry_contents():
    assert {"Ishigami", "SobolG", "Borehole", "TurbineEfficiencyProxy", "Sphere"} <= set(REGISTRY)
    with pytest.raises(DomainError):
        get_benchmark("Rosenbrock")


def test_ishigami_at_center_is_zero():
    assert evaluate_benchmark("Ishigami", np.full(3, 0.5)) == pytest.approx(0.0, abs=1e-15)


def test_sobol_g_matches_direct_product():
    a = (0.0, 1.0, 4.5, 9.0, 99.0, 99.0, 99.0, 99.0)
    U = np.random.default_rng(1).random((50, 8))
    got = evaluate_benchmark("SobolG", U)
    for u, g in zip(U, got):
        direct = 1.0
        for un, an in zip(u, a):
            direct *= (abs(4 * un - 2) + an) / (1 + an)
        assert g == pytest.approx(direct, rel=1e-12)


def test_borehole_reference_value():
    # standard literature nominal point
    b = get_benchmark("Borehole")
    x = np.array([[0.10, 25050, 89335, 1050, 89.55, 760, 1400, 10950]])
    lnr = math.log(25050 / 0.10)
    ref = 2 * math.pi * 89335 * 290 / (lnr * (1 + 2 * 1400 * 89335 / (lnr * 0.01 * 10950) + 89335 / 89.55))
    assert b(x)[0] == pytest.approx(ref, rel=1e-12)


def test_dimension_mismatch():
    with pytest.raises(DomainError):
        evaluate_benchmark("Ishigami", np.full(4, 0.5))


def test_proxy_output_strictly_inside_unit_interval():
    y = evaluate_benchmark("TurbineEfficiencyProxy", np.random.default_rng(0).random((100_000, 10)))
    assert np.all((y > 0) & (y < 1))
    assert np.array_equal(y[:10], evaluate_benchmark("TurbineEfficiencyProxy", np.random.default_rng(0).random((10, 10))))


def test_proxy_blade_number_is_integer():
    b = get_benchmark("TurbineEfficiencyProxy")
    X = b.input_model.to_physical(np.random.default_rng(1).random((200, 10)))
    assert np.array_equal(X[:, 5], np.round(X[:, 5]))
    assert set(np.unique(X[:, 5])) <= set(range(12, 17))


def test_proxy_inactive_dims_have_small_total_index():
    b = get_benchmark("TurbineEfficiencyProxy")
    r = sobol_monte_carlo(b.function, b.input_model, n_base=2**14, seed=11)
    inactive = [n for n in range(10) if n not in TURBINE_INFLUENTIAL]
    assert np.all(r.total_order[inactive] < 0.05)
    assert np.all(r.total_order[list(TURBINE_INFLUENTIAL)] > 0.05)


def test_ishigami_pce_recovers_analytic_indices():
    b = get_benchmark("Ishigami")
    U = np.random.default_rng(7).random((2000, 3))
    r = sobol_from_pce(fit_scheme(U, b.evaluate(U), TD, td_degree=9))
    assert np.max(np.abs(r.first_order - b.analytic_sobol["first"])) < 0.02
    assert np.max(np.abs(r.total_order - b.analytic_sobol["total"])) < 0.02


def test_sobol_g_pce_recovers_analytic_indices():
    b = get_benchmark("SobolG")
    U = np.random.default_rng(8).random((2000, 8))
    r = sobol_from_pce(fit_scheme(U, b.evaluate(U), TD, td_degree=4))
    assert np.max(np.abs(r.first_order - b.analytic_sobol["first"])) < 0.02
    assert np.max(np.abs(r.total_order - b.analytic_sobol["total"])) < 0.02


def test_sobol_g_analytic_values_against_monte_carlo():
    b = get_benchmark("SobolG")
    r = sobol_monte_carlo(b.function, n_base=2**14, seed=2, dims=8)
    assert np.max(np.abs(r.total_order - b.analytic_sobol["total"])) < 0.02


SCRIPT = (
    "import sys\n"
    "next(sys.stdin)\n"
    "for line in sys.stdin:\n"
    "    u = [float(v) for v in line.split(',')]\n"
    "    print(sum(u))\n"
)

SCRIPT_REALIZED = (
    "import sys\n"
    "next(sys.stdin)\n"
    "for line in sys.stdin:\n"
    "    u = [round(float(v), 1) for v in line.split(',')]\n"
    "    print(','.join(str(v) for v in [sum(u)] + u))\n"
)


def test_external_process_objective():
    f = ExternalProcessObjective([sys.executable, "-c", SCRIPT], dims=2)
    U = np.array([[0.1, 0.2], [0.5, 0.25]])
    assert np.allclose(f(U), [0.3, 0.75])
    g = ExternalProcessObjective([sys.executable, "-c", SCRIPT_REALIZED], dims=2)
    y, X = g(np.array([[0.12, 0.26]]))
    assert g.reports_realized
    assert np.allclose(X, [[0.1, 0.3]]) and y[0] == pytest.approx(0.4)


def test_external_process_failures():
    bad = ExternalProcessObjective([sys.executable, "-c", "import sys; sys.exit(3)"], dims=1)
    with pytest.raises(RuntimeError):
        bad(np.array([[0.5]]))
    short = ExternalProcessObjective([sys.executable, "-c", "print(1)"], dims=1)
    with pytest.raises(DomainError):
        short(np.array([[0.5], [0.6]]))
