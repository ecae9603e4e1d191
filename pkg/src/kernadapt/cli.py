"""Command-line entry point.

Exit codes: 0 on success, 1 for input or usage errors, 2 when a numerical
step fails.  Commands write only below ``--out``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from kernadapt.errors import InputError, NumericalError
from kernadapt.files import (
    load_dataset,
    load_model,
    save_model,
    write_csv,
    write_trace,
)
from kernadapt.harness import (
    DEFAULT_LAMBDA,
    ExperimentConfig,
    run_adaptive_experiment,
    run_nw_experiment,
)
from kernadapt.kernels import l2_inner, l2_inner_quadrature
from kernadapt.modelsel import default_lambda_grid, fit_method, lambda_sweep
from kernadapt.optim import SigmaOptConfig

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2
ALPHA_MODES = {"exact": "exact", "paper": "paper_literal"}
FIT_METHODS = ("nw", "rkhs", "adaptive_common", "adaptive_per_point")


class UsageError(InputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def parse_lambda_grid(text: str) -> np.ndarray:
    """``lo:hi:count`` (log-spaced) or a comma-separated list."""
    try:
        if ":" in text:
            lo, hi, count = text.split(":")
            lo, hi, n = float(lo), float(hi), int(count)
            if lo <= 0 or hi <= lo or n < 1:
                raise ValueError
            return np.logspace(np.log10(lo), np.log10(hi), n)
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise UsageError(f"bad lambda grid {text!r}") from None


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=_positive_int, default=1)
    common.add_argument("--out", type=Path)
    common.add_argument("-v", "--verbose", action="store_true")

    fitting = _Parser(add_help=False)
    fitting.add_argument("--lambda", dest="lam", type=_positive_float)
    fitting.add_argument("--iters", type=_nonneg_int, default=15)
    fitting.add_argument("--k", type=_positive_int, nargs="+")
    fitting.add_argument("--width", type=_positive_float,
                         help="fixed common width for nw and rkhs (default: mean k-NN distance)")
    fitting.add_argument("--width-init-k", type=_positive_int, default=4)
    fitting.add_argument("--alpha-mode", choices=sorted(ALPHA_MODES))
    fitting.add_argument("--sigma-data", choices=("train", "holdout"))
    fitting.add_argument("--holdout", type=Path, help="CSV used for width tuning")

    p = _Parser(prog="kernadapt", description="Kernel regression surrogates.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("fit", parents=[common, fitting], help="fit a model on a CSV dataset")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--method", choices=FIT_METHODS[1:], default="rkhs")

    s = sub.add_parser("predict", parents=[common], help="predict at query points")
    s.add_argument("--model", type=Path, required=True)
    s.add_argument("--query", type=Path, required=True, help="CSV with columns x1..xn")

    s = sub.add_parser("adapt", parents=[common, fitting], help="alternating width adaptation")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--test", type=Path)
    s.add_argument("--method", choices=FIT_METHODS[2:], default="adaptive_per_point")

    s = sub.add_parser("sweep", parents=[common, fitting], help="lambda selection")
    s.add_argument("--data", type=Path, required=True)
    s.add_argument("--test", type=Path, required=True)
    s.add_argument("--method", choices=FIT_METHODS[1:], default="rkhs")
    s.add_argument("--lambda-grid", type=parse_lambda_grid)

    s = sub.add_parser("demo-quadratic", parents=[common, fitting],
                       help="surrogates for the roots of x^2 + a x + b")
    s.add_argument("--m", type=_positive_int, default=100)
    s.add_argument("--method", choices=FIT_METHODS, default="nw")
    s.add_argument("--branch", choices=("plus", "minus"), default="plus")
    s.add_argument("--grid-res", type=_positive_int, default=101)
    s.add_argument("--lambda-grid", type=parse_lambda_grid)

    s = sub.add_parser("gram-check", parents=[common],
                       help="closed-form Gram entries against quadrature")
    s.add_argument("--n", type=int, choices=(1, 2), default=1)
    s.add_argument("--trials", type=_positive_int, default=50)
    s.add_argument("--tol", type=_positive_float, default=1e-6)
    return p


def _out_dir(args) -> Path:
    if args.out is None:
        raise UsageError(f"{args.command} needs --out")
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def _sigma_data(args):
    if args.sigma_data == "holdout":
        if args.holdout is None:
            raise UsageError("--sigma-data holdout needs --holdout PATH")
        return load_dataset(args.holdout)
    if args.holdout is not None:
        return load_dataset(args.holdout)
    return None


def _opt(method: str):
    if method == "adaptive_common":
        return SigmaOptConfig(method="golden_section_common", refit_alpha=True)
    return SigmaOptConfig(method="simplex_per_point")


def _fit_kwargs(args):
    return dict(sigma_data=_sigma_data(args), alpha_mode=ALPHA_MODES[args.alpha_mode or "exact"],
                init_k=args.width_init_k, width=args.width)


def cmd_fit(args) -> int:
    out = _out_dir(args)
    train = load_dataset(args.data)
    lam = DEFAULT_LAMBDA[args.method] if args.lam is None else args.lam
    model, trace = fit_method(args.method, train, lam, _opt(args.method), args.iters,
                              **_fit_kwargs(args))
    save_model(model, out / "model.json")
    if trace is not None:
        write_trace(out / "trace.csv", trace)
    print(f"model written to {out / 'model.json'}")
    return EXIT_OK


def cmd_adapt(args) -> int:
    out = _out_dir(args)
    train = load_dataset(args.data)
    test = load_dataset(args.test, train.n_targets) if args.test else None
    lam = DEFAULT_LAMBDA[args.method] if args.lam is None else args.lam
    model, trace = fit_method(args.method, train, lam, _opt(args.method), args.iters,
                              test=test, **_fit_kwargs(args))
    save_model(model, out / "model.json")
    write_trace(out / "trace.csv", trace)
    obj = trace.objectives
    print(f"objective {obj[0]:.6g} -> {obj[-1]:.6g} over {len(obj) - 1} iterations")
    if trace.failed:
        print(f"stopped early: {trace.message}", file=sys.stderr)
    return EXIT_OK


def cmd_predict(args) -> int:
    out = _out_dir(args)
    model = load_model(args.model)
    try:
        X = np.loadtxt(args.query, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read query file {args.query}: {exc}") from exc
    if X.shape[1] != model.spec.dimension:
        raise InputError(f"query has {X.shape[1]} columns, model expects {model.spec.dimension}")
    Y = model.predict(X)
    header = [f"x{i + 1}" for i in range(X.shape[1])] + [f"y{j + 1}" for j in range(Y.shape[1])]
    write_csv(out / "predictions.csv", header,
              ([float(v) for v in x] + [float(v) for v in y] for x, y in zip(X, Y)))
    print(f"{len(X)} predictions written to {out / 'predictions.csv'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    train = load_dataset(args.data)
    test = load_dataset(args.test, train.n_targets)
    grid = default_lambda_grid() if args.lambda_grid is None else args.lambda_grid
    report = lambda_sweep(train, test, grid, args.method, opt=_opt(args.method),
                          iterations=args.iters, threads=args.threads, seed=args.seed,
                          **_fit_kwargs(args))
    (out / "sweep.csv").write_text(report.to_csv(), encoding="utf-8", newline="\n")
    print(f"selected lambda {report.selected_lambda!r}")
    return EXIT_OK


def cmd_demo(args) -> int:
    out = _out_dir(args)
    cfg = ExperimentConfig(
        method=args.method, branch=args.branch, m=args.m, seed=args.seed,
        grid_resolution=args.grid_res, k_values=tuple(args.k or (3, 10)), nw_width=args.width,
        lam=args.lam,
        lambda_grid=None if args.lambda_grid is None else tuple(args.lambda_grid),
        iterations=args.iters, width_init_k=args.width_init_k,
        alpha_mode=None if args.alpha_mode is None else ALPHA_MODES[args.alpha_mode],
        sigma_data=args.sigma_data, threads=args.threads,
    )
    if cfg.method == "nw":
        report = run_nw_experiment(cfg, out)
        for k, delta in report.rows:
            print(f"k={k} width={report.width:.6g} sup_error={delta:.6g}")
    else:
        report = run_adaptive_experiment(cfg, out)
        print(f"lambda={report.lam:.6g} sup_error {report.delta_before:.6g} -> "
              f"{report.delta_after:.6g}")
    return EXIT_OK


def cmd_gram_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    rows = []
    for t in range(args.trials):
        ci, cj = rng.uniform(-2, 2, args.n), rng.uniform(-2, 2, args.n)
        wi, wj = rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0)
        exact = l2_inner(ci, wi, cj, wj)
        quad = l2_inner_quadrature(ci, wi, cj, wj)
        rel = abs(exact - quad) / abs(quad)
        worst = max(worst, rel)
        rows.append([t, exact, quad, rel])
    if args.out is not None:
        write_csv(_out_dir(args) / "gram_check.csv", ["trial", "closed_form", "quadrature",
                                                      "rel_error"], rows)
    ok = worst <= args.tol
    print(f"{args.trials} trials, n={args.n}, max relative error {worst:.3e}: "
          f"{'ok' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_NUMERICAL


COMMANDS = {
    "fit": cmd_fit, "predict": cmd_predict, "adapt": cmd_adapt, "sweep": cmd_sweep,
    "demo-quadratic": cmd_demo, "gram-check": cmd_gram_check,
}


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("kernadapt: error: a command is required", file=sys.stderr)
            return EXIT_INPUT
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)
