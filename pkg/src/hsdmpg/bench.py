"""Benchmark harness: experiment specs, solver dispatch, trace/summary emission.

Experiment specs are flat key = value text files (``#`` starts a comment).
Keys::

    dataset = synthetic | libsvm:<path>
    synthetic.n / .d / .duplication / .noise / .seed
    expected_dim          (libsvm only, optional)
    loss = quadratic | logistic | softmax
    classes = <k>         (softmax on continuous labels: quantile binning)
    mu = <float>
    normalize = true|false    (max-row-norm scaling to r = 1; default false)
    solvers = hsdmpg,svrg,sgd,scsg,fgd
    seeds = 0,1,2
    target = epochs:<E> | ifo:<N> | subopt:<eps>
    output = <dir>
    workers = <int>
    plot = true|false
    ref.crossover_dim = 2000   (dense closed form below, FGD above)
    ref.fgd_tol = 1e-10
    <solver>.<option> = ...    (per-solver knobs, see _build_*_config)

Named presets ``fig1``, ``fig2`` and ``fig3`` carry the experiment defaults
(anchor size about n^0.75, initial minibatch 50, gamma sqrt(log(d)/s),
mu presets 0.01 / 1e-4 / 0.01, inner epoch budgets 3 / 3 / 10).

Per (solver, seed) cell the runner writes ``trace_<solver>_seed<seed>.csv``
and one ``summary.csv`` row; the reference optimum per (dataset, mu) is
cached on disk keyed by a content hash and always round-tripped through the
cache file so warm and cold runs emit identical numbers.  Output files are
written atomically (write-temp-then-rename).
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import (
    BaselineConfig,
    fgd_reference,
    fgd_solve,
    scsg_solve,
    sgd_solve,
    svrg_full_solve,
)
from .data import Dataset, load_libsvm, synthesize_redundant
from .generic import GenericConfig, hsdmpg_generic_solve
from .losses import ErmProblem, make_loss
from .oracle import IfoCounter
from .quadratic import HsdmpgConfig, hsdmpg_quadratic_solve
from .targets import IfoBudget, SuboptTarget

SUMMARY_HEADER = "solver,seed,final_subopt,ifo_to_target,wall_ms"
KNOWN_SOLVERS = ("hsdmpg", "svrg", "sgd", "scsg", "fgd")


class SpecError(ValueError):
    """Malformed experiment spec or overrides."""


PRESETS = {
    # single-epoch, well-conditioned quadratic problems
    "fig1": {
        "dataset": "synthetic",
        "synthetic.n": "10000",
        "synthetic.d": "50",
        "synthetic.duplication": "10",
        "synthetic.noise": "0.01",
        "synthetic.seed": "1",
        "normalize": "true",
        "loss": "quadratic",
        "mu": "0.01",
        "solvers": "hsdmpg,svrg,sgd,scsg,fgd",
        "seeds": "0",
        "target": "epochs:1",
        "hsdmpg.s": "auto",
        "hsdmpg.gamma": "experimental",
        "hsdmpg.schedule": "practical",
        "hsdmpg.initial_batch": "50",
        "hsdmpg.growth_rate": "1.0",
        "hsdmpg.inner": "epochs:3",
    },
    # multi-epoch, badly conditioned quadratic problems
    "fig2": {
        "dataset": "synthetic",
        "synthetic.n": "10000",
        "synthetic.d": "50",
        "synthetic.duplication": "10",
        "synthetic.noise": "0.01",
        "synthetic.seed": "2",
        "normalize": "true",
        "loss": "quadratic",
        "mu": "1e-4",
        "solvers": "hsdmpg,svrg,sgd,scsg,fgd",
        "seeds": "0",
        "target": "epochs:10",
        "hsdmpg.s": "auto",
        "hsdmpg.gamma": "experimental",
        "hsdmpg.schedule": "practical",
        "hsdmpg.initial_batch": "50",
        "hsdmpg.growth_rate": "1.0",
        "hsdmpg.inner": "epochs:3",
    },
    # multi-epoch classification (logistic by default; override loss/classes)
    "fig3": {
        "dataset": "synthetic",
        "synthetic.n": "10000",
        "synthetic.d": "50",
        "synthetic.duplication": "10",
        "synthetic.noise": "0.01",
        "synthetic.seed": "3",
        "normalize": "true",
        "loss": "logistic",
        "mu": "0.01",
        "solvers": "hsdmpg,svrg,sgd,scsg,fgd",
        "seeds": "0",
        "target": "epochs:8",
        "hsdmpg.gamma": "experimental",
        "hsdmpg.schedule": "practical",
        "hsdmpg.initial_batch": "50",
        "hsdmpg.growth_rate": "1.0",
        "hsdmpg.inner": "epochs:10",
        "hsdmpg.generic_budget": "3",
    },
}


@dataclass
class ExperimentSpec:
    dataset: dict
    loss: str
    mu: float
    normalize: bool
    solvers: list
    seeds: list
    target: tuple
    output: str
    workers: int = 1
    plot: bool = False
    classes: int = 3
    ref_crossover_dim: int = 2000
    ref_fgd_tol: float = 1e-10
    solver_options: dict = field(default_factory=dict)

    def resolved_items(self):
        """Flat key/value echo of the spec (rerun input for determinism checks)."""
        items = {
            "dataset": self.dataset.get("spec", "synthetic"),
            "loss": self.loss,
            "mu": f"{self.mu:.17g}",
            "normalize": str(self.normalize).lower(),
            "solvers": ",".join(self.solvers),
            "seeds": ",".join(str(s) for s in self.seeds),
            "target": f"{self.target[0]}:{self.target[1]:.17g}",
            "workers": str(self.workers),
            "plot": str(self.plot).lower(),
            "classes": str(self.classes),
            "ref.crossover_dim": str(self.ref_crossover_dim),
            "ref.fgd_tol": f"{self.ref_fgd_tol:.17g}",
        }
        if self.dataset.get("kind") == "synthetic":
            for key in ("n", "d", "duplication", "noise", "seed"):
                items[f"synthetic.{key}"] = f"{self.dataset[key]:.17g}"
        for solver, opts in sorted(self.solver_options.items()):
            for key, value in sorted(opts.items()):
                items[f"{solver}.{key}"] = value
        return items


def parse_spec_text(text) -> dict:
    """Parse the flat key = value grammar into a string mapping."""
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        mapping[key.strip()] = value.strip()
    return mapping


def load_spec(source, overrides=()) -> ExperimentSpec:
    """Resolve a preset name or spec file plus ``key=value`` overrides."""
    if source in PRESETS:
        mapping = dict(PRESETS[source])
    else:
        if not os.path.exists(source):
            raise SpecError(f"spec {source!r} is neither a preset nor a file")
        with open(source) as handle:
            mapping = parse_spec_text(handle.read())
    for item in overrides:
        if "=" not in item:
            raise SpecError(f"override {item!r} must be key=value")
        key, _, value = item.partition("=")
        mapping[key.strip()] = value.strip()
    return build_spec(mapping)


def _parse_target(text) -> tuple:
    kind, _, value = text.partition(":")
    if kind == "epochs":
        return ("epochs", float(value))
    if kind == "ifo":
        return ("ifo", float(value))
    if kind == "subopt":
        return ("subopt", float(value))
    raise SpecError(f"unknown target {text!r} (epochs:<E> | ifo:<N> | subopt:<eps>)")


def _parse_bool(text) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise SpecError(f"expected a boolean, got {text!r}")


def build_spec(mapping) -> ExperimentSpec:
    mapping = dict(mapping)

    def pop(key, default=None, required=False):
        if key in mapping:
            return mapping.pop(key)
        if required:
            raise SpecError(f"missing required key {key!r}")
        return default

    dataset_field = pop("dataset", required=True)
    # both families' keys are always consumed so a preset's dataset can be
    # overridden without its leftover keys tripping validation
    synthetic_keys = {
        "n": int(pop("synthetic.n", "1000")),
        "d": int(pop("synthetic.d", "20")),
        "duplication": int(pop("synthetic.duplication", "1")),
        "noise": float(pop("synthetic.noise", "0.1")),
        "seed": int(pop("synthetic.seed", "0")),
    }
    expected = pop("expected_dim", None)
    if dataset_field == "synthetic":
        dataset = {"kind": "synthetic", "spec": "synthetic", **synthetic_keys}
    elif dataset_field.startswith("libsvm:"):
        dataset = {
            "kind": "libsvm",
            "spec": dataset_field,
            "path": dataset_field.split(":", 1)[1],
            "expected_dim": int(expected) if expected else None,
        }
    else:
        raise SpecError(f"dataset must be 'synthetic' or 'libsvm:<path>', got {dataset_field!r}")

    loss = pop("loss", "quadratic")
    if loss not in ("quadratic", "logistic", "softmax"):
        raise SpecError(f"unknown loss {loss!r}")
    mu = float(pop("mu", required=True))
    if mu <= 0:
        raise SpecError("mu must be positive")
    solvers = [s.strip() for s in pop("solvers", required=True).split(",") if s.strip()]
    if not solvers:
        raise SpecError("at least one solver is required")
    for solver in solvers:
        if solver not in KNOWN_SOLVERS:
            raise SpecError(f"unknown solver {solver!r} (known: {KNOWN_SOLVERS})")
    seeds = [int(s) for s in pop("seeds", required=True).split(",") if s.strip()]
    if not seeds:
        raise SpecError("seeds must be nonempty")

    spec = ExperimentSpec(
        dataset=dataset,
        loss=loss,
        mu=mu,
        normalize=_parse_bool(pop("normalize", "false")),
        solvers=solvers,
        seeds=seeds,
        target=_parse_target(pop("target", "epochs:5")),
        output=pop("output", "bench_runs"),
        workers=int(pop("workers", "1")),
        plot=_parse_bool(pop("plot", "false")),
        classes=int(pop("classes", "3")),
        ref_crossover_dim=int(pop("ref.crossover_dim", "2000")),
        ref_fgd_tol=float(pop("ref.fgd_tol", "1e-10")),
    )
    for key, value in mapping.items():
        prefix, _, option = key.partition(".")
        if prefix in KNOWN_SOLVERS and option:
            spec.solver_options.setdefault(prefix, {})[option] = value
        else:
            raise SpecError(f"unknown spec key {key!r}")
    return spec


# ----------------------------------------------------------------------
# dataset / problem assembly


def load_dataset(spec_dataset, normalize=False) -> Dataset:
    if spec_dataset["kind"] == "synthetic":
        data = synthesize_redundant(
            spec_dataset["n"],
            spec_dataset["d"],
            duplication=spec_dataset["duplication"],
            noise=spec_dataset["noise"],
            seed=spec_dataset["seed"],
        )
    else:
        path = spec_dataset["path"]
        if not os.path.exists(path):
            raise FileNotFoundError(f"dataset file {path!r} not found")
        data = load_libsvm(path, expected_dim=spec_dataset.get("expected_dim"))
    if normalize:
        data = data.scaled_to_unit_norm()
    return data


def adapt_labels(data: Dataset, loss_kind, classes=3) -> Dataset:
    """Threshold continuous labels into classes for classification losses.

    Logistic: sign around the median; softmax: ``classes`` quantile bins.
    Datasets that already carry class labels pass through unchanged.
    """
    if loss_kind == "quadratic" or data.k > 1:
        return data
    labels = data.labels
    if loss_kind == "logistic":
        cut = np.median(labels)
        new = np.where(labels > cut, 1.0, -1.0)
    elif loss_kind == "softmax":
        edges = np.quantile(labels, np.linspace(0, 1, classes + 1)[1:-1])
        new = np.searchsorted(edges, labels).astype(np.float64)
    else:
        raise SpecError(f"unknown loss {loss_kind!r}")
    return Dataset(data.rows, new)


def build_problem(data: Dataset, loss_kind, mu, classes=3) -> ErmProblem:
    data = adapt_labels(data, loss_kind, classes)
    k = data.k if loss_kind == "softmax" else 1
    return ErmProblem(data, make_loss(loss_kind, k), mu)


# ----------------------------------------------------------------------
# reference optimum with on-disk cache


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def closed_form_reference(problem) -> np.ndarray:
    """Dense normal-equations solution for the quadratic loss."""
    X = problem.data.matrix.toarray()
    A = X.T @ X / problem.n + problem.mu * np.eye(problem.d)
    b = X.T @ problem.labels / problem.n
    return np.linalg.solve(A, b)


def compute_reference(problem, crossover_dim=2000, fgd_tol=1e-10):
    """Reference optimum: dense closed form for small quadratic problems,
    full gradient descent otherwise.  Returns (theta, objective, method,
    reached)."""
    if problem.is_quadratic and problem.dim <= crossover_dim:
        theta = closed_form_reference(problem)
        return theta, problem.objective(theta), "closed_form", True
    result = fgd_reference(problem, IfoCounter(), tol=fgd_tol)
    return result.theta, result.objective, "fgd", result.reached


def reference_cache_key(problem, spec) -> str:
    import hashlib

    h = hashlib.sha256()
    h.update(problem.data.content_hash().encode())
    h.update(
        f"|{spec.loss}|{spec.mu:.17g}|{spec.normalize}|{spec.ref_crossover_dim}"
        f"|{spec.ref_fgd_tol:.17g}".encode()
    )
    return h.hexdigest()[:32]


def get_reference(problem, spec, cache_dir):
    """Reference objective for suboptimality columns, cached on disk.

    The value in use is always the one read back from the cache file, so a
    warm cache cannot change any downstream number.  Returns (objective,
    metadata) or (None, metadata) when the reference could not be computed.
    """
    key = reference_cache_key(problem, spec)
    path = os.path.join(cache_dir, f"{key}.json")
    if not os.path.exists(path):
        try:
            theta, objective, method, reached = compute_reference(
                problem, spec.ref_crossover_dim, spec.ref_fgd_tol
            )
        except Exception as exc:  # reference failure: run without subopt column
            return None, {"reference": "failed", "error": str(exc)}
        payload = {
            "objective": objective,
            "method": method,
            "reached": reached,
            "theta": [float(v) for v in theta],
        }
        _atomic_write(path, json.dumps(payload))
    with open(path) as handle:
        stored = json.load(handle)
    if not stored.get("reached", True):
        return None, {"reference": "failed", "method": stored.get("method")}
    return float(stored["objective"]), {
        "reference": "ok",
        "method": stored["method"],
        "cache_key": key,
    }


# ----------------------------------------------------------------------
# solver dispatch


def _opt(options, key, default=None):
    return options.get(key, default)


def build_hsdmpg_config(options, seed) -> HsdmpgConfig:
    config = HsdmpgConfig(seed=seed)
    if "s" in options:
        config.s = options["s"] if options["s"] in ("auto", "corollary2") else int(options["s"])
    gamma = _opt(options, "gamma")
    if gamma is not None:
        config.gamma = gamma if gamma in ("theory", "experimental") else float(gamma)
    nu = _opt(options, "nu")
    if nu is not None:
        config.nu = "plugin" if nu == "plugin" else float(nu)
    if "schedule" in options:
        config.schedule = options["schedule"]
    if "schedule_exponent" in options:
        config.schedule_exponent = options["schedule_exponent"]
    if "initial_batch" in options:
        config.initial_batch = int(options["initial_batch"])
    if "growth_rate" in options:
        config.growth_rate = float(options["growth_rate"])
    inner = _opt(options, "inner", "epochs:3")
    if inner == "theory":
        config.inner_epochs = None
    elif inner.startswith("epochs:"):
        config.inner_epochs = int(inner.split(":", 1)[1])
    else:
        raise SpecError(f"hsdmpg.inner must be 'theory' or 'epochs:<E>', got {inner!r}")
    if "max_outer" in options:
        config.max_outer = int(options["max_outer"])
    if "epoch_length" in options:
        config.epoch_length = int(options["epoch_length"])
    if "step_size" in options:
        config.step_size = float(options["step_size"])
    if "validate" in options:
        config.validate = _parse_bool(options["validate"])
    return config


def build_generic_config(options, seed) -> GenericConfig:
    inner = build_hsdmpg_config(options, seed)
    config = GenericConfig(inner=inner, seed=seed)
    config.outer_mode = _opt(options, "generic_mode", "fixed")
    config.budget_outer_iters = int(_opt(options, "generic_budget", "6"))
    if "sigma_eff" in options:
        config.sigma_eff = float(options["sigma_eff"])
    if "generic_max_outer" in options:
        config.max_outer = int(options["generic_max_outer"])
    return config


def _parse_step(text):
    if text is None:
        return None
    kind, _, value = text.partition(":")
    if kind not in ("constant", "inv_t") or not value:
        raise SpecError(f"step must be constant:<v> or inv_t:<v>, got {text!r}")
    return (kind, float(value))


def build_baseline_config(solver, options, seed) -> BaselineConfig:
    config = BaselineConfig(seed=seed)
    config.step = _parse_step(_opt(options, "step"))
    if "batch" in options:
        if solver == "scsg":
            config.snapshot_batch = int(options["batch"])
        else:
            config.minibatch = int(options["batch"])
    if "epoch_length" in options:
        config.epoch_length = int(options["epoch_length"])
    if "max_epochs" in options:
        config.max_epochs = int(options["max_epochs"])
    return config


def _resolve_target(spec, problem, reference):
    kind, value = spec.target
    if kind == "epochs":
        return IfoBudget(int(round(value * problem.n)))
    if kind == "ifo":
        return IfoBudget(int(value))
    if kind == "subopt":
        if reference is None:
            raise SpecError("subopt target needs a reference optimum; none available")
        return SuboptTarget(value, reference)
    raise SpecError(f"unknown target kind {kind!r}")


def run_cell(problem, solver, options, seed, target, reference):
    """One (solver, seed) run; returns (theta, trace, counter)."""
    counter = IfoCounter()
    if solver == "hsdmpg":
        if problem.is_quadratic:
            config = build_hsdmpg_config(options, seed)
            config.max_outer = int(_opt(options, "max_outer", "10000"))
            theta, trace = hsdmpg_quadratic_solve(
                problem, config, target, counter,
                trace=_fresh_trace("hsdmpg", seed, reference),
            )
        else:
            config = build_generic_config(options, seed)
            config.max_outer = int(_opt(options, "generic_max_outer", "10000"))
            theta, trace = hsdmpg_generic_solve(
                problem, config, target, counter, reference=reference
            )
    else:
        config = build_baseline_config(solver, options, seed)
        solve = {
            "sgd": sgd_solve,
            "svrg": svrg_full_solve,
            "scsg": scsg_solve,
            "fgd": fgd_solve,
        }[solver]
        theta, trace = solve(problem, config, target, counter, reference=reference)
    return theta, trace, counter


def _fresh_trace(solver, seed, reference):
    from .oracle import SolverTrace

    return SolverTrace(solver=solver, seed=seed, reference=reference)


def trace_filename(solver, seed):
    return f"trace_{solver}_seed{seed}.csv"


def run_experiment(spec: ExperimentSpec):
    """Run all (solver, seed) cells; emit trace CSVs, summary.csv, figures.

    Returns a dict with the output paths and the summary rows.
    """
    os.makedirs(spec.output, exist_ok=True)
    data = load_dataset(spec.dataset, spec.normalize)
    problem = build_problem(data, spec.loss, spec.mu, spec.classes)
    reference, ref_meta = get_reference(
        problem, spec, os.path.join(spec.output, "ref_cache")
    )
    target = _resolve_target(spec, problem, reference)

    cells = [(solver, seed) for solver in spec.solvers for seed in spec.seeds]

    def run_one(cell):
        solver, seed = cell
        options = spec.solver_options.get(solver, {})
        return cell, run_cell(problem, solver, options, seed, target, reference)

    results = {}
    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            for cell, payload in pool.map(run_one, cells):
                results[cell] = payload
    else:
        for cell in cells:
            results[cell] = run_one(cell)[1]

    trace_paths = {}
    summary_rows = []
    for solver, seed in cells:
        theta, trace, counter = results[(solver, seed)]
        path = os.path.join(spec.output, trace_filename(solver, seed))
        _atomic_write_trace(trace, path)
        trace_paths[(solver, seed)] = path
        final = trace.final
        if spec.target[0] == "subopt":
            ifo_to_target = trace.ifo_to_suboptimality(spec.target[1])
        else:
            ifo_to_target = final.ifo_total
        summary_rows.append(
            (
                solver,
                seed,
                "" if final.suboptimality is None else f"{final.suboptimality:.17g}",
                "" if ifo_to_target is None else str(ifo_to_target),
                f"{final.wall_ms:.17g}",
            )
        )

    summary_path = os.path.join(spec.output, "summary.csv")
    lines = [SUMMARY_HEADER] + [",".join(str(v) for v in row) for row in summary_rows]
    _atomic_write(summary_path, "\n".join(lines) + "\n")

    spec_echo = "\n".join(f"{k} = {v}" for k, v in spec.resolved_items().items())
    _atomic_write(os.path.join(spec.output, "spec_resolved.txt"), spec_echo + "\n")

    figures = []
    if spec.plot:
        from .plots import render_run

        figures = render_run(spec.output)
    return {
        "traces": trace_paths,
        "summary": summary_path,
        "summary_rows": summary_rows,
        "reference": ref_meta,
        "figures": figures,
    }


def _atomic_write_trace(trace, path):
    import io

    buf = io.StringIO()
    from .oracle import CSV_HEADER

    buf.write(CSV_HEADER + "\n")
    for rec in trace.records:
        subopt = "" if rec.suboptimality is None else f"{rec.suboptimality:.17g}"
        buf.write(
            f"{rec.outer_iter},{rec.ifo_total},{rec.wall_ms:.17g},"
            f"{rec.objective:.17g},{subopt},{rec.grad_norm:.17g}\n"
        )
    _atomic_write(path, buf.getvalue())


# ----------------------------------------------------------------------
# scaling study


def scaling_study(spec: ExperimentSpec, sizes, ifo_cap_epochs=60):
    """Median IFO-to-target across dataset sizes with eps(n) = mu(n) = 1/sqrt(n).

    Requires a synthetic dataset family and at least 4 sizes.  Runs every
    (solver, size, seed) cell to suboptimality 1/sqrt(n) under a hard IFO
    cap of ``ifo_cap_epochs * n``; capped runs are censored and excluded
    from the least-squares log-log fit (with a warning flag in the output).
    Emits scaling.csv and scaling_fit.csv in the output directory and
    returns the fit per solver.
    """
    if spec.dataset["kind"] != "synthetic":
        raise SpecError("scaling studies need a synthetic dataset family")
    sizes = sorted(int(n) for n in sizes)
    if len(sizes) < 4:
        raise SpecError("scaling studies need at least 4 sizes")

    os.makedirs(spec.output, exist_ok=True)
    rows = []  # solver, n, seed, ifo (or None)
    medians = {}
    for n in sizes:
        dataset_spec = dict(spec.dataset, n=n)
        data = load_dataset(dataset_spec, spec.normalize)
        mu_n = 1.0 / math.sqrt(n)
        eps_n = 1.0 / math.sqrt(n)
        problem = build_problem(data, spec.loss, mu_n, spec.classes)
        theta_ref = closed_form_reference(problem) if problem.is_quadratic else None
        if theta_ref is not None:
            reference = problem.objective(theta_ref)
        else:
            reference = fgd_reference(problem, IfoCounter(), tol=spec.ref_fgd_tol).objective
        cap = int(ifo_cap_epochs * n)
        target = SuboptTarget(eps_n, reference)
        for solver in spec.solvers:
            options = dict(spec.solver_options.get(solver, {}))
            per_seed = []
            for seed in spec.seeds:
                options_cap = dict(options)
                _, trace, counter = _run_capped(
                    problem, solver, options_cap, seed, target, reference, cap
                )
                ifo = trace.ifo_to_suboptimality(eps_n)
                rows.append((solver, n, seed, ifo))
                if ifo is not None:
                    per_seed.append(ifo)
            if per_seed:
                medians[(solver, n)] = float(np.median(per_seed))

    fits = {}
    for solver in spec.solvers:
        points = [(n, medians[(solver, n)]) for n in sizes if (solver, n) in medians]
        censored = len(sizes) - len(points)
        if len(points) >= 2:
            log_n = np.log([p[0] for p in points])
            log_ifo = np.log([p[1] for p in points])
            slope, intercept = np.polyfit(log_n, log_ifo, 1)
            fits[solver] = {
                "slope": float(slope),
                "intercept": float(intercept),
                "points": len(points),
                "censored_sizes": censored,
            }
        else:
            fits[solver] = {
                "slope": None,
                "intercept": None,
                "points": len(points),
                "censored_sizes": censored,
            }

    lines = ["solver,n,seed,ifo_to_target,censored"]
    for solver, n, seed, ifo in rows:
        lines.append(
            f"{solver},{n},{seed},{'' if ifo is None else ifo},{int(ifo is None)}"
        )
    _atomic_write(os.path.join(spec.output, "scaling.csv"), "\n".join(lines) + "\n")
    fit_lines = ["solver,slope,intercept,points,censored_sizes"]
    for solver, fit in fits.items():
        slope = "" if fit["slope"] is None else f"{fit['slope']:.17g}"
        intercept = "" if fit["intercept"] is None else f"{fit['intercept']:.17g}"
        fit_lines.append(
            f"{solver},{slope},{intercept},{fit['points']},{fit['censored_sizes']}"
        )
    _atomic_write(os.path.join(spec.output, "scaling_fit.csv"), "\n".join(fit_lines) + "\n")
    if spec.plot:
        from .plots import render_scaling

        render_scaling(spec.output)
    return {"rows": rows, "medians": medians, "fits": fits}


def _run_capped(problem, solver, options, seed, target, reference, cap):
    counter = IfoCounter()
    if solver == "hsdmpg":
        if problem.is_quadratic:
            config = build_hsdmpg_config(options, seed)
            config.max_outer = int(_opt(options, "max_outer", "10000"))
            config.ifo_cap = cap
            theta, trace = hsdmpg_quadratic_solve(
                problem, config, target, counter,
                trace=_fresh_trace("hsdmpg", seed, reference),
            )
        else:
            config = build_generic_config(options, seed)
            config.ifo_cap = cap
            theta, trace = hsdmpg_generic_solve(
                problem, config, target, counter, reference=reference
            )
    else:
        config = build_baseline_config(solver, options, seed)
        config.ifo_cap = cap
        solve = {
            "sgd": sgd_solve,
            "svrg": svrg_full_solve,
            "scsg": scsg_solve,
            "fgd": fgd_solve,
        }[solver]
        theta, trace = solve(problem, config, target, counter, reference=reference)
    return theta, trace, counter
