"""Shared, expensive fixtures: desk-scale workflow runs on the turbine proxy."""

import time
import warnings

import pytest

from sensbo.workflow import WorkflowConfig, run_workflow

ENSEMBLE_SEEDS = tuple(range(10))
# wall-clock seconds spent building the session fixtures
TIMINGS = {}


def _run(seed, out_dir=None, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run_workflow(WorkflowConfig(seed=seed), out_dir, resume=False, **kw)


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """Seed-0 desk run with the full report (CSVs and figures)."""
    out = tmp_path_factory.mktemp("desk_seed0")
    t0 = time.perf_counter()
    state = _run(0, out, report=True, figures=True)
    TIMINGS["desk_run"] = time.perf_counter() - t0
    return state, out


@pytest.fixture(scope="session")
def desk_ensemble(desk_run):
    """Final states of the ten-seed desk ensemble, reusing the seed-0 run."""
    states = {0: desk_run[0]}
    t0 = time.perf_counter()
    for seed in ENSEMBLE_SEEDS[1:]:
        states[seed] = _run(seed, report=False)
    TIMINGS["desk_ensemble"] = TIMINGS["desk_run"] + time.perf_counter() - t0
    return states


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def pytest_collection_modifyitems(items):
    for item in items:
        if {"desk_run", "desk_ensemble"} & set(getattr(item, "fixturenames", ())):
            item.add_marker(pytest.mark.slow)
