"""Command-line benchmark harness.

    bench run <spec> [--override k=v ...]
    bench scale <spec> --sizes 1024,2048,4096,8192 [--override k=v ...]
    bench ref <dataset> --mu MU [--loss KIND] [--normalize]
    bench plot <rundir> [--metric subopt|objective|auto]

``<spec>`` is a spec file path or one of the named presets (fig1, fig2,
fig3).  ``<dataset>`` is ``synthetic:k=v,...`` or a LibSVM file path.

Exit codes: 0 success; 2 bad usage or spec; 3 dataset/file problem;
4 solver or runtime failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bench
from .bench import SpecError
from .data import LibsvmFormatError
from .svrg import DivergenceError, StoppingCapError

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _parse_dataset_arg(text):
    if text.startswith("synthetic:"):
        params = {"kind": "synthetic", "spec": text}
        defaults = {"n": 1000, "d": 20, "duplication": 1, "noise": 0.1, "seed": 0}
        for item in text.split(":", 1)[1].split(","):
            if not item:
                continue
            key, _, value = item.partition("=")
            if key not in defaults:
                raise SpecError(f"unknown synthetic parameter {key!r}")
            defaults[key] = float(value) if key == "noise" else int(value)
        params.update(defaults)
        return params
    return {"kind": "libsvm", "spec": f"libsvm:{text}", "path": text, "expected_dim": None}


def cmd_run(args):
    spec = bench.load_spec(args.spec, args.override)
    if args.output:
        spec.output = args.output
    result = bench.run_experiment(spec)
    print(f"reference: {result['reference']}")
    for row in result["summary_rows"]:
        print("  " + ",".join(str(v) for v in row))
    print(f"summary: {result['summary']}")
    for fig in result["figures"]:
        print(f"figure: {fig}")
    return EXIT_OK


def cmd_scale(args):
    spec = bench.load_spec(args.spec, args.override)
    if args.output:
        spec.output = args.output
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    result = bench.scaling_study(spec, sizes, ifo_cap_epochs=args.cap_epochs)
    for solver, fit in result["fits"].items():
        if fit["slope"] is None:
            print(f"{solver}: insufficient uncensored points ({fit['points']})")
        else:
            flag = (
                f" [{fit['censored_sizes']} size(s) censored]"
                if fit["censored_sizes"]
                else ""
            )
            print(f"{solver}: slope {fit['slope']:.4f} over {fit['points']} sizes{flag}")
    return EXIT_OK


def cmd_ref(args):
    dataset = _parse_dataset_arg(args.dataset)
    data = bench.load_dataset(dataset, args.normalize)
    problem = bench.build_problem(data, args.loss, args.mu, args.classes)
    theta, objective, method, reached = bench.compute_reference(
        problem, args.crossover_dim, args.tol
    )
    grad = problem.gradient_uncounted(theta)
    print(f"method: {method}")
    print(f"objective: {objective:.17g}")
    print(f"grad_norm: {float(np.linalg.norm(grad)):.3e}")
    print(f"reached: {reached}")
    return EXIT_OK if reached else EXIT_RUNTIME


def cmd_plot(args):
    from . import plots

    paths = plots.render_run(args.rundir, metric=args.metric)
    for path in paths:
        print(f"figure: {path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bench", description="ERM solver benchmark harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment spec or preset")
    p_run.add_argument("spec", help="spec file path or preset name (fig1/fig2/fig3)")
    p_run.add_argument("--override", action="append", default=[], metavar="K=V")
    p_run.add_argument("--output", help="output directory override")
    p_run.set_defaults(func=cmd_run)

    p_scale = sub.add_parser("scale", help="scaling study over dataset sizes")
    p_scale.add_argument("spec")
    p_scale.add_argument("--sizes", required=True, help="comma-separated n values")
    p_scale.add_argument("--override", action="append", default=[], metavar="K=V")
    p_scale.add_argument("--output")
    p_scale.add_argument("--cap-epochs", type=float, default=60.0,
                         help="hard IFO cap, in epochs (multiples of n)")
    p_scale.set_defaults(func=cmd_scale)

    p_ref = sub.add_parser("ref", help="compute a reference optimum")
    p_ref.add_argument("dataset", help="synthetic:k=v,... or LibSVM file path")
    p_ref.add_argument("--mu", type=float, required=True)
    p_ref.add_argument("--loss", default="quadratic",
                       choices=("quadratic", "logistic", "softmax"))
    p_ref.add_argument("--classes", type=int, default=3)
    p_ref.add_argument("--normalize", action="store_true")
    p_ref.add_argument("--tol", type=float, default=1e-10)
    p_ref.add_argument("--crossover-dim", type=int, default=2000)
    p_ref.set_defaults(func=cmd_ref)

    p_plot = sub.add_parser("plot", help="render figures for a finished run")
    p_plot.add_argument("rundir")
    p_plot.add_argument("--metric", default="auto",
                        choices=("auto", "subopt", "objective"))
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (FileNotFoundError, LibsvmFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, StoppingCapError, FloatingPointError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
