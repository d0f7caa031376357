"""Report files: delimited data for every figure plus rendered PNGs."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .state import ADAPTIVE, TRAINING, VALIDATION, WorkflowState

HIST_BINS = 20

SURROGATE_CSV = "surrogate_errors.csv"
SOBOL_CSV = "sobol.csv"
HISTOGRAM_CSV = "histograms.csv"
TRAJECTORY_CSV = "trajectory.csv"
DATASET_CSV = "dataset.csv"
BEST_CSV = "best_design.csv"
REPORT_CSVS = (SURROGATE_CSV, SOBOL_CSV, HISTOGRAM_CSV, TRAJECTORY_CSV, DATASET_CSV, BEST_CSV)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def partition_names(state: WorkflowState) -> list[str]:
    """Histogram partition of each sample: initial, validation or the BO stage."""
    out = []
    for lab, stage in zip(state.data.labels, state.data.stages):
        if lab == TRAINING:
            out.append("initial")
        elif lab == VALIDATION:
            out.append("validation")
        else:
            out.append(stage)
    return out


def histogram_rows(state: WorkflowState, bins: int = HIST_BINS):
    y = state.data.response
    if y.size == 0:
        return []
    lo, hi = float(np.min(y)), float(np.max(y))
    edges = np.linspace(lo, hi, bins + 1) if hi > lo else np.array([lo, lo + 1.0])
    parts = np.array(partition_names(state))
    rows = []
    for name in dict.fromkeys(parts):
        counts, _ = np.histogram(y[parts == name], bins=edges)
        for k, c in enumerate(counts):
            rows.append((name, float(edges[k]), float(edges[k + 1]), int(c)))
    return rows


def trajectory_rows(state: WorkflowState):
    """Best-so-far and running mean over the non-random samples in evaluation order."""
    data = state.data
    idx = [i for i, lab in enumerate(data.labels) if lab in (TRAINING, ADAPTIVE)]
    rows, best, total, prev_stage = [], -np.inf, 0.0, None
    for k, i in enumerate(idx, start=1):
        y = float(data.response[i])
        best = max(best, y)
        total += y
        stage = data.stages[i] if data.labels[i] == ADAPTIVE else "initial"
        rows.append((k, i, data.labels[i], stage, y, best, total / k, int(stage != prev_stage)))
        prev_stage = stage
    return rows


def emit_report(state: WorkflowState, out_dir, figures: bool = True) -> list[Path]:
    """Write the report CSVs (and PNG figures) into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(state.input_model.names)
    written = []

    p = out / SURROGATE_CSV
    _write(p, ["step", "training_size", "model", "MAPE", "MaxAPE"],
           [(r["step"], r["trainingSize"], r["model"], r["MAPE"], r["MaxAPE"])
            for r in state.surrogate_errors])
    written.append(p)

    p = out / SOBOL_CSV
    rows = []
    for scheme, res in state.sobol.items():
        for n, name in enumerate(res["names"]):
            rows.append((scheme, n + 1, name, float(res["firstOrder"][n]), float(res["totalOrder"][n]),
                         int(state.mask.active[n])))
    _write(p, ["scheme", "dim", "name", "S_F", "S_T", "selected"], rows)
    written.append(p)

    p = out / HISTOGRAM_CSV
    _write(p, ["partition", "bin_lo", "bin_hi", "count"], histogram_rows(state))
    written.append(p)

    p = out / TRAJECTORY_CSV
    _write(p, ["step", "index", "label", "stage", "response", "best_so_far", "running_mean",
               "stage_start"], trajectory_rows(state))
    written.append(p)

    p = out / DATASET_CSV
    state.data.write_csv(p, names, state.output_transform)
    written.append(p)

    p = out / BEST_CSV
    u, x, v = state.best
    rows = [] if u is None else [(n, float(u[k]), float(x[k])) for k, n in enumerate(names)]
    if u is not None:
        rows.append(("response", float(v), float(v)))
    _write(p, ["name", "unit", "physical"], rows)
    written.append(p)

    summary = {
        "stage": state.stage,
        "budget": state.budget,
        "budgetUsed": state.budget_used,
        "bestValue": None if u is None else float(v),
        "bestPhysical": None if u is None else dict(zip(names, map(float, x))),
        "activeDims": [n for n, a in zip(names, state.mask.active) if a],
        "fixedValues": {n: float(f) for n, f, a in
                        zip(names, state.mask.fixed_values, state.mask.active) if not a},
        "outputDistribution": None if state.output_transform is None
        else state.output_transform.dist.to_dict(),
    }
    p = out / "summary.json"
    p.write_text(json.dumps(summary, indent=2) + "\n")
    written.append(p)

    if figures:
        written.extend(render_figures(state, out))
    return written


def render_figures(state: WorkflowState, out: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    meta = {"Software": None}

    if state.surrogate_errors:
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        models = list(dict.fromkeys(r["model"] for r in state.surrogate_errors))
        for m in models:
            rows = [r for r in state.surrogate_errors if r["model"] == m]
            q = [r["trainingSize"] for r in rows]
            axes[0].plot(q, [r["MAPE"] for r in rows], marker="o", label=m)
            axes[1].plot(q, [r["MaxAPE"] for r in rows], marker="o", label=m)
        axes[0].set_ylabel("MAPE [%]")
        axes[1].set_ylabel("MaxAPE [%]")
        for ax in axes:
            ax.set_xlabel("training size")
        axes[1].legend(fontsize=7)
        fig.tight_layout()
        p = out / "surrogate_errors.png"
        fig.savefig(p, dpi=100, metadata=meta)
        plt.close(fig)
        paths.append(p)

    if state.sobol:
        names = list(state.input_model.names)
        fig, axes = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
        width = 0.8 / len(state.sobol)
        pos = np.arange(len(names))
        for k, (scheme, res) in enumerate(state.sobol.items()):
            axes[0].bar(pos + k * width, res["firstOrder"], width, label=scheme)
            axes[1].bar(pos + k * width, res["totalOrder"], width, label=scheme)
        axes[0].set_ylabel("first order")
        axes[1].set_ylabel("total order")
        axes[1].axhline(0.05, color="k", lw=0.8, ls="--")
        axes[1].set_xticks(pos + 0.4 - width / 2, names)
        axes[0].legend(fontsize=8)
        fig.tight_layout()
        p = out / "sobol.png"
        fig.savefig(p, dpi=100, metadata=meta)
        plt.close(fig)
        paths.append(p)

    if len(state.data):
        rows = histogram_rows(state)
        parts = list(dict.fromkeys(r[0] for r in rows))
        fig, ax = plt.subplots(figsize=(7, 4))
        for name in parts:
            sel = [r for r in rows if r[0] == name]
            ax.stairs([r[3] for r in sel], [sel[0][1]] + [r[2] for r in sel], label=name)
        ax.set_xlabel("response")
        ax.set_ylabel("count")
        ax.legend(fontsize=8)
        fig.tight_layout()
        p = out / "histograms.png"
        fig.savefig(p, dpi=100, metadata=meta)
        plt.close(fig)
        paths.append(p)

        traj = trajectory_rows(state)
        fig, ax = plt.subplots(figsize=(8, 4))
        steps = [r[0] for r in traj]
        ax.plot(steps, [r[4] for r in traj], ".", color="0.6", label="sample")
        ax.plot(steps, [r[5] for r in traj], label="best so far")
        ax.plot(steps, [r[6] for r in traj], label="running mean")
        for r in traj:
            if r[7] and r[0] > 1:
                ax.axvline(r[0] - 0.5, color="k", lw=0.6, ls=":")
        ax.set_xlabel("non-random sample")
        ax.set_ylabel("response")
        ax.legend(fontsize=8)
        fig.tight_layout()
        p = out / "trajectory.png"
        fig.savefig(p, dpi=100, metadata=meta)
        plt.close(fig)
        paths.append(p)
    return paths
