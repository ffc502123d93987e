"""Render convergence and scaling figures next to the CSV output of a run.

Figures are a reporting convenience layered on the delimited output; every
number they show comes from the CSV files, which remain the primary
artifact.
"""

from __future__ import annotations

import os
import re

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .oracle import read_trace_csv

_TRACE_RE = re.compile(r"trace_(?P<solver>[a-z]+)_seed(?P<seed>\d+)\.csv$")


def _collect_traces(rundir):
    found = {}
    for name in sorted(os.listdir(rundir)):
        match = _TRACE_RE.match(name)
        if match:
            key = (match.group("solver"), int(match.group("seed")))
            found[key] = read_trace_csv(os.path.join(rundir, name))
    return found


def render_run(rundir, metric="auto", out=None):
    """Convergence curves (one line per solver/seed) against IFO count.

    ``metric`` "auto" plots suboptimality when every trace carries it and
    the objective value otherwise.  Returns the written figure paths.
    """
    traces = _collect_traces(rundir)
    if not traces:
        raise FileNotFoundError(f"no trace CSVs found under {rundir!r}")
    have_subopt = all(
        all(rec.suboptimality is not None for rec in recs) for recs in traces.values()
    )
    if metric == "auto":
        metric = "subopt" if have_subopt else "objective"

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    colors = {}
    palette = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for (solver, seed), records in sorted(traces.items()):
        xs = [rec.ifo_total for rec in records]
        if metric == "subopt":
            ys = [max(rec.suboptimality, 1e-16) for rec in records]
        else:
            ys = [rec.objective for rec in records]
        colors.setdefault(solver, palette[len(colors) % len(palette)])
        ax.plot(
            xs,
            ys,
            color=colors[solver],
            alpha=0.9,
            label=solver if seed == min(s for a, s in traces if a == solver) else None,
        )
    ax.set_xlabel("IFO evaluations")
    ax.set_ylabel("suboptimality" if metric == "subopt" else "objective")
    if metric == "subopt":
        ax.set_yscale("log")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = out or os.path.join(rundir, f"convergence_{metric}.png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return [out]


def render_scaling(rundir, out=None):
    """Log-log IFO-to-target vs n with the fitted slopes from scaling_fit.csv."""
    scaling_path = os.path.join(rundir, "scaling.csv")
    fit_path = os.path.join(rundir, "scaling_fit.csv")
    if not os.path.exists(scaling_path):
        raise FileNotFoundError(f"{scaling_path} not found")
    per_solver = {}
    with open(scaling_path) as handle:
        handle.readline()
        for line in handle:
            solver, n, _seed, ifo, censored = line.rstrip("\n").split(",")
            if censored == "0" and ifo:
                per_solver.setdefault(solver, {}).setdefault(int(n), []).append(
                    float(ifo)
                )
    fits = {}
    if os.path.exists(fit_path):
        with open(fit_path) as handle:
            handle.readline()
            for line in handle:
                solver, slope, intercept, _pts, _cens = line.rstrip("\n").split(",")
                if slope:
                    fits[solver] = (float(slope), float(intercept))

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for solver, by_n in sorted(per_solver.items()):
        ns = sorted(by_n)
        medians = [np.median(by_n[n]) for n in ns]
        label = solver
        if solver in fits:
            label += f" (slope {fits[solver][0]:.2f})"
        line = ax.plot(ns, medians, "o-", label=label)[0]
        if solver in fits:
            slope, intercept = fits[solver]
            xs = np.array([ns[0], ns[-1]], dtype=float)
            ax.plot(
                xs,
                np.exp(intercept) * xs**slope,
                "--",
                color=line.get_color(),
                alpha=0.5,
            )
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("dataset size n")
    ax.set_ylabel("median IFO to target")
    ax.legend()
    ax.grid(True, alpha=0.3, which="both")
    fig.tight_layout()
    out = out or os.path.join(rundir, "scaling.png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return [out]
