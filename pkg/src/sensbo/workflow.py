"""Four-stage optimization workflow.

1. BO in the full space with a held-out random validation set, logging the
   validation error of every surrogate variant after each batch.
2. Validation points join the training data; BO continues in the full space.
3. PCE-based Sobol' indices of the transformed response select the
   influential inputs; the others are fixed at their mean over the best
   designs.
4. BO in the reduced space until the budget is spent.
"""

from __future__ import annotations

import copy
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import bayes_opt as bo
from .benchmarks import REGISTRY, ExternalProcessObjective, get_benchmark
from .design import AnnealSchedule, maxpro_design
from .errors import (
    BudgetError,
    ConditioningError,
    ConfigurationError,
    SelectionError,
    SizeError,
)
from .gp import KERNEL_FAMILIES, fit_gp
from .pce import LAR, SAPCE, TD1, TD2, fit_scheme
from .probability import (
    CONTINUOUS_CANDIDATES,
    ClampWarning,
    InputModel,
    MarginalDistribution,
    OutputTransform,
    fit_distribution_bic,
    pad_bounded_support,
)
from .sensitivity import SobolResult, select_influential_subspace, sobol_from_pce
from .state import (
    DONE,
    S1,
    S2,
    S3,
    S4,
    TRAINING,
    VALIDATION,
    Dataset,
    SubspaceMask,
    WorkflowState,
)
from .verification import mape, max_ape

PCE_SCHEMES = (TD1, TD2, LAR, SAPCE)

ROLE_DESIGN = 10
ROLE_VALIDATION = 11
ROLE_SURROGATE = 12


@dataclass(frozen=True)
class ScheduleEntry:
    """``batches`` rounds of ``batch_size`` points at one UCB phase."""

    phase: str
    batches: int
    batch_size: int
    beta: float | None = None

    def __post_init__(self):
        spec = bo.AcquisitionSpec(self.phase, self.beta)  # validates phase and beta
        if spec.beta <= 0:
            raise ConfigurationError("schedule phases need a positive beta")
        if self.batches < 0 or self.batch_size < 1:
            raise ConfigurationError("batches must be >= 0 and batch_size >= 1")
        object.__setattr__(self, "beta", spec.beta)

    @property
    def evaluations(self) -> int:
        return self.batches * self.batch_size

    @property
    def spec(self) -> bo.AcquisitionSpec:
        return bo.AcquisitionSpec(self.phase, self.beta)


def _entries(rows):
    out = []
    for r in rows:
        if isinstance(r, ScheduleEntry):
            out.append(r)
        elif isinstance(r, dict):
            out.append(ScheduleEntry(r["phase"], int(r["batches"]), int(r["batch_size"]), r.get("beta")))
        else:
            out.append(ScheduleEntry(r[0], int(r[1]), int(r[2]), *(r[3:4] or [None])))
    return tuple(out)


_E, _B, _X = bo.EXPLORATION, bo.BALANCED, bo.EXPLOITATION

# batch layout of the full-scale run: 200 initial + 32 validation, 330 in total
FULL_SCALE_SCHEDULE = {
    "stage1": ((_E, 1, 15), (_E, 5, 5), (_B, 3, 5), (_X, 3, 5)),
    "stage2": ((_E, 1, 5), (_E, 3, 4)),
    "stage4": ((_E, 3, 3), (_E, 1, 2)),
}

# same row structure scaled to 50 initial + 8 validation, 110 in total
DESK_SCHEDULE = {
    "stage1": ((_E, 1, 5), (_E, 2, 4), (_B, 3, 4), (_X, 3, 4)),
    "stage2": ((_E, 1, 3), (_E, 2, 3)),
    "stage4": ((_E, 2, 2), (_E, 1, 2)),
}


@dataclass
class WorkflowConfig:
    objective: str = "TurbineEfficiencyProxy"
    q0: int = 50
    validation_size: int = 8
    budget: int = 110
    stage1: tuple = DESK_SCHEDULE["stage1"]
    stage2: tuple = DESK_SCHEDULE["stage2"]
    stage4: tuple = DESK_SCHEDULE["stage4"]
    threshold: float = 0.05
    margin: float = 0.2
    top_k: int = 10
    mandatory_dims: tuple = ()
    reduction_schemes: tuple = (TD2, SAPCE)
    report_schemes: tuple = (TD2, SAPCE, LAR)
    seed: int = 0
    seeds: dict = field(default_factory=dict)
    anneal: dict = field(default_factory=dict)
    output_candidates: tuple = CONTINUOUS_CANDIDATES
    output_padding: float = 0.25  # support widening in sample spacings; 0 disables
    output_refit: str = "stage"  # stage | on_clamp | batch
    surrogate_kernels: tuple = KERNEL_FAMILIES
    surrogate_schemes: tuple = PCE_SCHEMES
    log_surrogates: bool = True
    gp_kernel: str = "RBF"
    gp_starts: int = 8
    project_reduced_gp: bool = False
    refit_inputs: str = "auto"  # auto | yes | no
    refit_input_dims: tuple = ("IVR", "SS", "FC")
    inputs: list | None = None  # optional marginal overrides
    command: str | None = None  # external objective command

    def __post_init__(self):
        self.stage1 = _entries(self.stage1)
        self.stage2 = _entries(self.stage2)
        self.stage4 = _entries(self.stage4)
        self.mandatory_dims = tuple(self.mandatory_dims)
        self.reduction_schemes = tuple(self.reduction_schemes)
        self.report_schemes = tuple(self.report_schemes)
        self.output_candidates = tuple(self.output_candidates)
        self.surrogate_kernels = tuple(self.surrogate_kernels)
        self.surrogate_schemes = tuple(self.surrogate_schemes)
        self.refit_input_dims = tuple(self.refit_input_dims)
        self.validate()

    def validate(self):
        if self.objective not in REGISTRY and self.objective != "external":
            raise ConfigurationError(
                f"unknown objective {self.objective!r}; choose from {sorted(REGISTRY)} or 'external'"
            )
        if self.objective == "external" and not self.command:
            raise ConfigurationError("objective 'external' needs a command")
        if self.q0 < 2 or self.validation_size < 0:
            raise ConfigurationError("q0 must be >= 2 and validation_size >= 0")
        if self.budget < self.q0 + self.validation_size:
            raise ConfigurationError("budget must cover the initial and validation designs")
        if not 0 <= self.threshold < 1:
            raise ConfigurationError("threshold must lie in [0, 1)")
        if self.top_k < 1:
            raise ConfigurationError("top_k must be positive")
        if self.output_refit not in ("stage", "on_clamp", "batch"):
            raise ConfigurationError("output_refit must be stage, on_clamp or batch")
        if self.output_padding < 0:
            raise ConfigurationError("output_padding must be nonnegative")
        if self.refit_inputs not in ("auto", "yes", "no"):
            raise ConfigurationError("refit_inputs must be auto, yes or no")
        for s in self.reduction_schemes + self.report_schemes:
            if s not in PCE_SCHEMES:
                raise ConfigurationError(f"unknown PCE scheme {s!r}")
        if self.gp_kernel not in KERNEL_FAMILIES:
            raise ConfigurationError(f"unknown kernel {self.gp_kernel!r}")
        unknown = set(self.seeds) - {"design", "validation", "bo"}
        if unknown:
            raise ConfigurationError(f"unknown seed roles {sorted(unknown)}")

    # seeds ---------------------------------------------------------------

    def seed_for(self, role: str) -> int:
        if role in self.seeds:
            return int(self.seeds[role])
        code = {"design": ROLE_DESIGN, "validation": ROLE_VALIDATION, "bo": 0}[role]
        return self.seed if code == 0 else bo.derive_seed(self.seed, code)

    def anneal_schedule(self) -> AnnealSchedule:
        return AnnealSchedule(**self.anneal)

    def scheduled_evaluations(self) -> int:
        return self.q0 + self.validation_size + sum(
            e.evaluations for e in self.stage1 + self.stage2 + self.stage4
        )

    # io ------------------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("stage1", "stage2", "stage4"):
            d[k] = [
                {"phase": e.phase, "batches": e.batches, "batch_size": e.batch_size, "beta": e.beta}
                for e in getattr(self, k)
            ]
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WorkflowConfig":
        d = dict(d or {})
        preset = d.pop("preset", None)
        if preset is not None:
            base = preset_config(preset).to_dict()
            base.update(d)
            d = base
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown configuration keys {sorted(extra)}")
        try:
            return cls(**d)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigurationError(f"invalid configuration: {exc}") from exc

    @classmethod
    def load(cls, path) -> "WorkflowConfig":
        try:
            d = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"cannot read configuration {path}: {exc}") from exc
        if d is not None and not isinstance(d, dict):
            raise ConfigurationError("configuration file must hold a mapping")
        return cls.from_dict(d or {})

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    # derived objects ---------------------------------------------------

    def input_model(self) -> InputModel:
        if self.inputs:
            margs, names = [], []
            for spec in self.inputs:
                margs.append(MarginalDistribution.from_dict(spec))
                names.append(spec.get("name", f"x{len(names) + 1}"))
            return InputModel(tuple(margs), tuple(names))
        if self.objective == "external":
            raise ConfigurationError("an external objective needs an 'inputs' list")
        return get_benchmark(self.objective).input_model

    def make_objective(self):
        """Callable on unit-hypercube points."""
        if self.objective == "external":
            return ExternalProcessObjective(self.command, self.input_model().dims)
        bench = get_benchmark(self.objective)
        im = self.input_model()
        if self.inputs:
            return lambda U: bench.evaluate_physical(im.to_physical(U))
        return bench.evaluate


def preset_config(name: str, **overrides) -> WorkflowConfig:
    """``desk`` (110 evaluations) or ``full`` (330 evaluations)."""
    if name == "desk":
        base = {}
    elif name == "full":
        base = dict(q0=200, validation_size=32, budget=330, **FULL_SCALE_SCHEDULE)
    else:
        raise ConfigurationError(f"unknown preset {name!r}")
    base.update(overrides)
    return WorkflowConfig(**base)


# ---------------------------------------------------------------------------
# helpers


def _fit_transform(state: WorkflowState, config: WorkflowConfig) -> None:
    """Refit the output distribution on the current training responses."""
    y = state.data.response[state.data.training_mask()]
    dist, _ = fit_distribution_bic(y, config.output_candidates)
    dist = pad_bounded_support(dist, y, config.output_padding)
    state.output_transform = OutputTransform(dist)


def _after_batch(state: WorkflowState, config: WorkflowConfig, record) -> None:
    """Refit the output distribution per the configured policy."""
    if config.output_refit == "batch":
        _fit_transform(state, config)
    elif config.output_refit == "on_clamp":
        _, clamped = state.output_transform.forward_flagged(np.asarray(record.objective_values))
        if np.any(clamped):
            _fit_transform(state, config)


def _transformed(state: WorkflowState, y):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClampWarning)
        return np.asarray(state.output_transform.forward(y), dtype=float)


def _maybe_refit_inputs(state: WorkflowState, config: WorkflowConfig, objective) -> None:
    """Refit drifting inputs on realized values and remap unit coordinates."""
    realized = getattr(objective, "reports_realized", False)
    if config.refit_inputs == "no" or (config.refit_inputs == "auto" and not realized):
        return
    im = state.input_model
    phys = state.data.physical[state.data.training_mask()]
    for name in config.refit_input_dims:
        if name not in im.names:
            continue
        n = im.names.index(name)
        if im.marginals[n].is_discrete:
            continue
        dist, _ = fit_distribution_bic(phys[:, n], config.output_candidates)
        im = im.replace(n, pad_bounded_support(dist, phys[:, n]))
    state.input_model = im
    state.data.unit = np.clip(im.to_unit(state.data.physical), 1e-12, 1 - 1e-12)


def _log_surrogate_errors(state: WorkflowState, config: WorkflowConfig, step: int) -> None:
    """Validation MAPE/MaxAPE of every GP kernel and PCE scheme."""
    data = state.data
    val = data.mask_of(VALIDATION) & ~data.merged
    if not config.log_surrogates or not val.any():
        return
    U, z = bo.training_targets(state)
    Uv, yv = data.unit[val], data.response[val]
    seed = bo.derive_seed(state.seed, ROLE_SURROGATE, step)
    rows = []
    for kernel in config.surrogate_kernels:
        try:
            gp = fit_gp(U, z, kernel, n_starts=config.gp_starts, seed=seed)
            pred = gp.predict(Uv)[0]
        except (ConditioningError, SizeError):
            pred = None
        rows.append((f"GP-{kernel}", pred))
    for scheme in config.surrogate_schemes:
        try:
            pred = fit_scheme(U, z, scheme).evaluate(Uv)
        except (ConditioningError, SizeError):
            pred = None  # e.g. TD2 with fewer samples than terms
        rows.append((f"PCE-{scheme}", pred))
    for model, pred in rows:
        if pred is None:
            m = mx = float("nan")
        else:
            eta = state.output_transform.inverse(pred)
            m, mx = mape(yv, eta), max_ape(yv, eta)
        state.surrogate_errors.append(
            {"step": step, "trainingSize": int(U.shape[0]), "model": model, "MAPE": m, "MaxAPE": mx}
        )


def _step(state, config, objective, spec, size):
    _, record = bo.bo_step(state, objective, spec, size, config.gp_kernel,
                           config.gp_starts, config.project_reduced_gp)
    _after_batch(state, config, record)


def _run_schedule(state, config, objective, entries, after_batch=None):
    for entry in entries:
        for _ in range(entry.batches):
            if state.remaining < entry.batch_size:
                raise BudgetError(
                    f"{state.stage}: batch of {entry.batch_size} exceeds remaining "
                    f"budget {state.remaining}"
                )
            _step(state, config, objective, entry.spec, entry.batch_size)
            if after_batch:
                after_batch()


def _require(state: WorkflowState, stage: str):
    if state.stage != stage:
        raise ConfigurationError(f"expected a state ready for {stage}, found {state.stage}")


# ---------------------------------------------------------------------------
# stages


def initial_state(config: WorkflowConfig, objective=None) -> WorkflowState:
    """Evaluate the MaxPro design and the random validation set."""
    objective = objective or config.make_objective()
    im = config.input_model()
    N = im.dims
    state = WorkflowState(im, Dataset.empty(N), config.budget, seed=config.seed_for("bo"))
    design = maxpro_design(config.q0, N, config.seed_for("design"), config.anneal_schedule())
    U, phys, y = bo._evaluate(objective, design.points, im)
    state.data.append(U, phys, y, TRAINING, S1)
    if config.validation_size:
        rng = np.random.default_rng(config.seed_for("validation"))
        Uv = np.clip(rng.random((config.validation_size, N)), 1e-12, 1 - 1e-12)
        Uv, pv, yv = bo._evaluate(objective, Uv, im)
        state.data.append(Uv, pv, yv, VALIDATION, S1)
    state.budget_used = len(state.data)
    return state


def run_stage1(config: WorkflowConfig, objective=None, state: WorkflowState | None = None):
    """Initial design, validation set and full-space BO with surrogate logging."""
    objective = objective or config.make_objective()
    if state is None:
        state = initial_state(config, objective)
    _require(state, S1)
    _maybe_refit_inputs(state, config, objective)
    _fit_transform(state, config)
    step = [0]
    _log_surrogate_errors(state, config, 0)

    def log():
        step[0] += 1
        _log_surrogate_errors(state, config, step[0])

    _run_schedule(state, config, objective, config.stage1, log)
    state.advance(S2)
    return state


def run_stage2(state: WorkflowState, config: WorkflowConfig, objective=None):
    """Release the validation set into training and continue full-space BO."""
    objective = objective or config.make_objective()
    _require(state, S2)
    state.data.merge_validation()
    _maybe_refit_inputs(state, config, objective)
    _fit_transform(state, config)
    _run_schedule(state, config, objective, config.stage2)
    state.advance(S3)
    return state


def run_stage3(state: WorkflowState, config: WorkflowConfig, objective=None):
    """Sobol'-based selection of the influential inputs."""
    _require(state, S3)
    objective = objective or config.make_objective()
    _maybe_refit_inputs(state, config, objective)
    _fit_transform(state, config)
    U, z = bo.training_targets(state)
    names = list(state.input_model.names)
    results = {}
    for scheme in dict.fromkeys(config.report_schemes + config.reduction_schemes):
        try:
            model = fit_scheme(U, z, scheme)
            results[scheme] = sobol_from_pce(model, names)
        except (ConditioningError, SizeError) as exc:
            warnings.warn(f"{scheme} sensitivity skipped: {exc}", RuntimeWarning, stacklevel=2)
    state.sobol = {k: v.to_dict() for k, v in results.items()}
    N = state.input_model.dims
    mandatory = [names.index(m) if isinstance(m, str) else int(m) for m in config.mandatory_dims]
    if config.threshold <= 0:
        active = np.ones(N, dtype=bool)
    else:
        used = [results[s] for s in config.reduction_schemes if s in results]
        if not used:
            raise SelectionError("no sensitivity result available for the reduction")
        active = select_influential_subspace(used, config.threshold, mandatory, config.margin)
    mask = SubspaceMask(active, np.full(N, 0.5))
    if not active.all():
        mask = bo.fix_non_influential(state.data, mask, config.top_k)
    state.mask = mask
    state.advance(S4)
    return state


def run_stage4(state: WorkflowState, config: WorkflowConfig, objective=None):
    """BO in the reduced space until the budget is used up."""
    objective = objective or config.make_objective()
    _require(state, S4)
    entries = list(config.stage4)
    for entry in entries:
        for _ in range(entry.batches):
            size = min(entry.batch_size, state.remaining)
            if size < 1:
                break
            _step(state, config, objective, entry.spec, size)
    # keep going with the last phase until nothing is left
    last = entries[-1] if entries else ScheduleEntry(bo.EXPLORATION, 1, 1)
    while state.remaining > 0:
        size = min(last.batch_size, state.remaining)
        _step(state, config, objective, last.spec, size)
    state.advance(DONE)
    return state


STAGE_RUNNERS = {S2: run_stage2, S3: run_stage3, S4: run_stage4}


def run_next_stage(state: WorkflowState | None, config: WorkflowConfig, objective=None):
    if state is None or state.stage == S1:
        return run_stage1(config, objective, state)
    if state.stage == DONE:
        return state
    return STAGE_RUNNERS[state.stage](state, config, objective)


def state_filename(stage: str) -> str:
    return f"state_{stage}.json"


def run_workflow(config: WorkflowConfig, out_dir=None, objective=None, resume=True,
                 report=True, figures=True, stop_after: str | None = None):
    """Run every remaining stage, snapshotting the state after each boundary.

    With ``resume`` the latest snapshot in ``out_dir`` is picked up.
    ``stop_after`` names a stage after which to return early.
    """
    objective = objective or config.make_objective()
    out = Path(out_dir) if out_dir is not None else None
    state = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        config.dump(out / "config.yaml")
        if resume and (out / "state.json").exists():
            state = WorkflowState.load(out / "state.json")
    while state is None or state.stage != DONE:
        ran = S1 if state is None else state.stage
        n_log = 0 if state is None else len(state.log)
        state = run_next_stage(state, config, objective)
        if out is not None:
            state.save(out / state_filename(state.stage))
            state.save(out / "state.json")
            with open(out / "runlog.jsonl", "a") as fh:
                for rec in state.log[n_log:]:
                    fh.write(json.dumps(bo.run_log_entry(rec)) + "\n")
        if stop_after == ran:
            break
    if report and out is not None:
        from .report import emit_report

        emit_report(state, out, figures=figures)
    return state


def copy_state(state: WorkflowState) -> WorkflowState:
    return copy.deepcopy(state)


def sobol_results(state: WorkflowState) -> dict[str, SobolResult]:
    return {k: SobolResult.from_dict(v) for k, v in state.sobol.items()}
