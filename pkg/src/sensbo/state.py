"""Evaluated-design bookkeeping shared by the optimizer and the workflow."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError
from .probability import InputModel, OutputTransform

TRAINING = "training"  # initial space-filling design
VALIDATION = "validation"  # random hold-out set
ADAPTIVE = "adaptive"  # points chosen by the optimizer
LABELS = (TRAINING, VALIDATION, ADAPTIVE)

S1 = "S1_BOWithValidation"
S2 = "S2_BOFull"
S3 = "S3_Reduction"
S4 = "S4_BOReduced"
DONE = "Done"
STAGES = (S1, S2, S3, S4, DONE)


@dataclass
class Dataset:
    """Append-only table of evaluated designs.

    ``merged`` marks validation rows that have been released into training.
    """

    unit: np.ndarray
    physical: np.ndarray
    response: np.ndarray
    labels: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    merged: np.ndarray = None

    def __post_init__(self):
        self.unit = np.atleast_2d(np.asarray(self.unit, dtype=float))
        self.physical = np.atleast_2d(np.asarray(self.physical, dtype=float))
        self.response = np.asarray(self.response, dtype=float).ravel()
        if self.merged is None:
            self.merged = np.zeros(self.response.size, dtype=bool)
        self.merged = np.asarray(self.merged, dtype=bool)

    @classmethod
    def empty(cls, dims: int) -> "Dataset":
        return cls(np.empty((0, dims)), np.empty((0, dims)), np.empty(0))

    def __len__(self) -> int:
        return self.response.size

    @property
    def dims(self) -> int:
        return self.unit.shape[1]

    def append(self, unit, physical, response, label: str, stage: str) -> None:
        if label not in LABELS:
            raise DomainError(f"unknown partition label {label!r}")
        unit = np.atleast_2d(np.asarray(unit, dtype=float))
        physical = np.atleast_2d(np.asarray(physical, dtype=float))
        response = np.asarray(response, dtype=float).ravel()
        if not (unit.shape[0] == physical.shape[0] == response.size):
            raise DomainError("unit, physical and response row counts differ")
        if not np.all(np.isfinite(response)):
            raise DomainError("objective returned a non-finite response")
        self.unit = np.vstack([self.unit, unit])
        self.physical = np.vstack([self.physical, physical])
        self.response = np.concatenate([self.response, response])
        self.labels.extend([label] * response.size)
        self.stages.extend([stage] * response.size)
        self.merged = np.concatenate([self.merged, np.zeros(response.size, dtype=bool)])

    def mask_of(self, label: str) -> np.ndarray:
        return np.array([lab == label for lab in self.labels], dtype=bool)

    def training_mask(self) -> np.ndarray:
        """Rows available to surrogates: everything except unreleased validation."""
        return ~self.mask_of(VALIDATION) | self.merged

    def merge_validation(self) -> int:
        val = self.mask_of(VALIDATION)
        added = int(np.sum(val & ~self.merged))
        self.merged = self.merged | val
        return added

    def top_k(self, k: int) -> np.ndarray:
        """Indices of the ``k`` largest responses, earlier rows first on ties."""
        order = np.argsort(-self.response, kind="stable")
        return order[:k]

    def best(self):
        if len(self) == 0:
            return None, -np.inf
        i = int(self.top_k(1)[0])
        return i, float(self.response[i])

    # persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "unit": self.unit.tolist(),
            "physical": self.physical.tolist(),
            "response": self.response.tolist(),
            "labels": list(self.labels),
            "stages": list(self.stages),
            "merged": self.merged.tolist(),
        }

    @classmethod
    def from_dict(cls, d, dims: int | None = None) -> "Dataset":
        unit = np.asarray(d["unit"], dtype=float)
        if unit.size == 0 and dims is not None:
            unit = np.empty((0, dims))
            phys = np.empty((0, dims))
        else:
            phys = np.asarray(d["physical"], dtype=float)
        return cls(unit, phys, d["response"], list(d["labels"]), list(d["stages"]),
                   np.asarray(d["merged"], dtype=bool))

    def write_csv(self, path, names, transform: OutputTransform | None = None) -> None:
        """One row per sample: unit and physical coordinates, raw and transformed
        response, partition label, stage tag and merge flag."""
        z = None
        if transform is not None and len(self):
            z, _ = transform.forward_flagged(self.response)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(
                ["index"] + [f"u_{n}" for n in names] + list(names)
                + ["response", "transformed", "label", "stage", "merged"]
            )
            for i in range(len(self)):
                w.writerow(
                    [i]
                    + [repr(float(v)) for v in self.unit[i]]
                    + [repr(float(v)) for v in self.physical[i]]
                    + [repr(float(self.response[i])),
                       repr(float(z[i])) if z is not None else "",
                       self.labels[i], self.stages[i], int(self.merged[i])]
                )


@dataclass(frozen=True, eq=False)
class SubspaceMask:
    """Active dimensions vary; inactive ones sit at ``fixed_values`` (unit space)."""

    active: np.ndarray
    fixed_values: np.ndarray

    def __post_init__(self):
        active = np.asarray(self.active, dtype=bool).ravel()
        fixed = np.asarray(self.fixed_values, dtype=float).ravel()
        if fixed.size != active.size:
            raise DomainError("fixed_values must have one entry per dimension")
        if not active.any():
            raise DomainError("a subspace mask needs at least one active dimension")
        inact = fixed[~active]
        if np.any(~((inact > 0) & (inact < 1))):
            raise DomainError("fixed values of inactive dimensions must lie in (0, 1)")
        object.__setattr__(self, "active", active)
        object.__setattr__(self, "fixed_values", fixed)

    def __eq__(self, other):
        if not isinstance(other, SubspaceMask):
            return NotImplemented
        return (np.array_equal(self.active, other.active)
                and np.array_equal(self.fixed_values, other.fixed_values))

    __hash__ = None

    @classmethod
    def full(cls, dims: int) -> "SubspaceMask":
        return cls(np.ones(dims, dtype=bool), np.full(dims, 0.5))

    @property
    def dims(self) -> int:
        return self.active.size

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def embed(self, V) -> np.ndarray:
        """Place active-coordinate rows ``V`` into full points."""
        V = np.atleast_2d(np.asarray(V, dtype=float))
        out = np.tile(self.fixed_values, (V.shape[0], 1))
        out[:, self.active] = V
        return out

    def apply(self, U) -> np.ndarray:
        """Overwrite inactive coordinates of full points with the fixed values."""
        U = np.array(np.atleast_2d(U), dtype=float)
        U[:, ~self.active] = self.fixed_values[~self.active]
        return U

    def to_dict(self) -> dict:
        return {"active": self.active.tolist(), "fixedValues": self.fixed_values.tolist()}

    @classmethod
    def from_dict(cls, d) -> "SubspaceMask":
        return cls(d["active"], d["fixedValues"])


@dataclass
class BoRecord:
    iteration: int
    batch: np.ndarray
    acquisition_values: np.ndarray
    objective_values: np.ndarray
    best_so_far: float
    phase: str = ""
    beta: float = float("nan")
    stage: str = ""
    physical: np.ndarray = None

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "stage": self.stage,
            "phase": self.phase,
            "beta": self.beta,
            "batch": np.asarray(self.batch).tolist(),
            "physical": None if self.physical is None else np.asarray(self.physical).tolist(),
            "acquisitionValues": np.asarray(self.acquisition_values).tolist(),
            "objectiveValues": np.asarray(self.objective_values).tolist(),
            "bestSoFar": self.best_so_far,
        }

    @classmethod
    def from_dict(cls, d) -> "BoRecord":
        phys = d.get("physical")
        return cls(d["iteration"], np.asarray(d["batch"]), np.asarray(d["acquisitionValues"]),
                   np.asarray(d["objectiveValues"]), d["bestSoFar"], d.get("phase", ""),
                   d.get("beta", float("nan")), d.get("stage", ""),
                   None if phys is None else np.asarray(phys))


@dataclass
class WorkflowState:
    """Everything needed to continue a run from a stage boundary."""

    input_model: InputModel
    data: Dataset
    budget: int
    mask: SubspaceMask = None
    stage: str = S1
    budget_used: int = 0
    output_transform: OutputTransform | None = None
    log: list = field(default_factory=list)
    iteration: int = 0
    seed: int = 0
    surrogate_errors: list = field(default_factory=list)  # dict rows
    sobol: dict = field(default_factory=dict)  # scheme -> SobolResult dict
    stage_history: list = field(default_factory=list)  # completed stages

    def __post_init__(self):
        if self.mask is None:
            self.mask = SubspaceMask.full(self.input_model.dims)

    @property
    def remaining(self) -> int:
        return self.budget - self.budget_used

    @property
    def best(self):
        """``(unit point, physical point, value)`` of the best evaluated design."""
        i, v = self.data.best()
        if i is None:
            return None, None, v
        return self.data.unit[i], self.data.physical[i], v

    @property
    def best_value(self) -> float:
        return self.data.best()[1]

    def advance(self, stage: str) -> None:
        if STAGES.index(stage) < STAGES.index(self.stage):
            raise ConfigurationError(f"cannot move from {self.stage} back to {stage}")
        if stage != self.stage:
            self.stage_history.append(self.stage)
        self.stage = stage

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "budget": self.budget,
            "budgetUsed": self.budget_used,
            "iteration": self.iteration,
            "seed": self.seed,
            "inputModel": self.input_model.to_dict(),
            "mask": self.mask.to_dict(),
            "outputTransform": None if self.output_transform is None
            else self.output_transform.to_dict(),
            "data": self.data.to_dict(),
            "log": [r.to_dict() for r in self.log],
            "surrogateErrors": self.surrogate_errors,
            "sobol": self.sobol,
            "stageHistory": self.stage_history,
        }

    @classmethod
    def from_dict(cls, d) -> "WorkflowState":
        im = InputModel.from_dict(d["inputModel"])
        ot = d.get("outputTransform")
        return cls(
            input_model=im,
            data=Dataset.from_dict(d["data"], im.dims),
            budget=int(d["budget"]),
            mask=SubspaceMask.from_dict(d["mask"]),
            stage=d["stage"],
            budget_used=int(d["budgetUsed"]),
            output_transform=None if ot is None else OutputTransform.from_dict(ot),
            log=[BoRecord.from_dict(r) for r in d["log"]],
            iteration=int(d["iteration"]),
            seed=int(d["seed"]),
            surrogate_errors=list(d.get("surrogateErrors", [])),
            sobol=dict(d.get("sobol", {})),
            stage_history=list(d.get("stageHistory", [])),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "WorkflowState":
        return cls.from_dict(json.loads(Path(path).read_text()))
