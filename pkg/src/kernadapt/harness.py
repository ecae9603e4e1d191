"""The quadratic-roots toy problem and end-to-end experiment protocols.

The parametric model is ``x^2 + a x + b = 0`` with ``(a, b) in [-2, 2]^2``;
its roots ``x+(a, b) >= x-(a, b)`` exist on the feasible set
``a^2 - 4b >= 0``.  Surrogates are learned from random feasible samples and
scored by their sup-error on a feasible evaluation lattice.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from kernadapt.adaptive import AdaptTrace
from kernadapt.data import Dataset
from kernadapt.errors import InputError
from kernadapt.kernels import KernelSpec
from kernadapt.modelsel import (
    SweepReport,
    common_width_init,
    error_metrics,
    fit_method,
    lambda_sweep,
    sup_error_grid,
)
from kernadapt.nadaraya import NwEstimator
from kernadapt.optim import SigmaOptConfig

Branch = Literal["plus", "minus"]

BOX = (-2.0, 2.0)
DISCRIMINANT_SLACK = 1e-12


@dataclass(frozen=True)
class QuadraticParams:
    a: float
    b: float

    @property
    def discriminant(self) -> float:
        return self.a * self.a - 4.0 * self.b

    @property
    def feasible(self) -> bool:
        return self.discriminant >= -DISCRIMINANT_SLACK


def quadratic_roots(a: float, b: float) -> tuple[float, float]:
    """Roots ``(x+, x-)`` of ``x^2 + a x + b``.

    Discriminants in ``[-1e-12, 0)`` are rounding noise and count as a
    double root; anything more negative is infeasible.
    """
    disc = a * a - 4.0 * b
    if disc < -DISCRIMINANT_SLACK:
        raise InputError(f"infeasible parameters (a={a}, b={b}): discriminant {disc}")
    if disc <= 0.0:
        return -a / 2.0, -a / 2.0
    r = math.sqrt(disc)
    # cancellation-free pair; Vieta gives the smaller-magnitude root
    if a >= 0:
        big = (-a - r) / 2.0
        other = b / big if big != 0 else 0.0
        return max(big, other), min(big, other)
    big = (-a + r) / 2.0
    other = b / big if big != 0 else 0.0
    return max(big, other), min(big, other)


def root(branch: Branch):
    """Truth oracle ``(a, b) -> x_branch(a, b)``."""
    if branch not in ("plus", "minus"):
        raise InputError(f"unknown branch {branch!r}")
    pick = 0 if branch == "plus" else 1

    def f(x):
        return quadratic_roots(float(x[0]), float(x[1]))[pick]

    return f


def sample_feasible(m: int, seed) -> list[QuadraticParams]:
    """``m`` i.i.d. uniform draws from the feasible part of ``[-2, 2]^2`` (rejection).

    ``seed`` is anything ``numpy.random.default_rng`` accepts.
    """
    if m < 1:
        raise InputError("m must be positive")
    rng = np.random.default_rng(seed)
    out: list[QuadraticParams] = []
    while len(out) < m:
        a, b = rng.uniform(BOX[0], BOX[1], size=2)
        if a * a - 4.0 * b >= 0.0:
            out.append(QuadraticParams(float(a), float(b)))
    return out


def make_dataset(params, branch: Branch = "plus") -> Dataset:
    f = root(branch)
    pts = np.array([[p.a, p.b] for p in params], dtype=float).reshape(-1, 2)
    return Dataset(pts, np.array([f(x) for x in pts]))


def eval_grid(resolution: int = 101) -> np.ndarray:
    """Feasible nodes of the ``r x r`` lattice on ``[-2, 2]^2`` as rows ``(a, b)``."""
    if resolution < 2:
        raise InputError("grid resolution must be at least 2")
    axis = np.linspace(BOX[0], BOX[1], resolution)
    A, B = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([A.ravel(), B.ravel()])
    keep = pts[:, 0] ** 2 - 4.0 * pts[:, 1] >= -DISCRIMINANT_SLACK
    return pts[keep]


def derived_seed(seed: int, stream: int) -> np.random.SeedSequence:
    """Independent RNG stream ``stream`` of a run seeded with ``seed``."""
    return np.random.SeedSequence([int(seed) & (2**64 - 1), stream])


Method = Literal["nw", "rkhs", "adaptive_common", "adaptive_per_point"]

# protocol defaults per method: (alpha_mode, sigma_data, width optimizer)
PROTOCOL_DEFAULTS = {
    "rkhs": ("exact", "train", None),
    "adaptive_common": ("exact", "holdout",
                        SigmaOptConfig(method="golden_section_common", refit_alpha=True)),
    "adaptive_per_point": ("paper_literal", "train", SigmaOptConfig(method="simplex_per_point")),
}

DEFAULT_LAMBDA = {"rkhs": 1e-4, "adaptive_common": 1e-4, "adaptive_per_point": 0.005}


@dataclass
class ExperimentConfig:
    """One run of the toy-problem protocol.

    ``alpha_mode``, ``sigma_data`` and ``opt`` default per method (see
    ``PROTOCOL_DEFAULTS``).  ``test_mode="indices"`` draws ``2m`` points in
    one stream and tests on the second half; ``independent_sample`` draws the
    test points from a separate stream.
    """

    method: Method = "nw"
    branch: Branch = "plus"
    m: int = 100
    seed: int = 0
    test_mode: Literal["independent_sample", "indices"] = "independent_sample"
    grid_resolution: int = 101
    k_values: tuple[int, ...] = (3, 10)
    nw_width: float | None = None
    lam: float | None = None
    lambda_grid: tuple[float, ...] | None = None
    iterations: int = 15
    width_init_k: int = 4
    alpha_mode: Literal["exact", "paper_literal"] | None = None
    sigma_data: Literal["train", "holdout"] | None = None
    opt: SigmaOptConfig | None = None
    threads: int = 1

    def __post_init__(self):
        if self.method not in ("nw", "rkhs", "adaptive_common", "adaptive_per_point"):
            raise InputError(f"unknown method {self.method!r}")
        if self.branch not in ("plus", "minus"):
            raise InputError(f"unknown branch {self.branch!r}")
        if self.m < 2:
            raise InputError("m must be at least 2")
        if self.grid_resolution < 2:
            raise InputError("grid resolution must be at least 2")
        if self.test_mode not in ("independent_sample", "indices"):
            raise InputError(f"unknown test mode {self.test_mode!r}")
        if self.iterations < 0:
            raise InputError("iterations must be nonnegative")

    def resolved(self):
        mode, sdata, opt = PROTOCOL_DEFAULTS.get(self.method, ("exact", "train", None))
        return (self.alpha_mode or mode, self.sigma_data or sdata, self.opt or opt)


def build_samples(cfg: ExperimentConfig):
    """Training, test and width-tuning samples for a run."""
    if cfg.test_mode == "indices":
        params = sample_feasible(2 * cfg.m, cfg.seed)
        train_p, test_p = params[: cfg.m], params[cfg.m:]
    else:
        train_p = sample_feasible(cfg.m, cfg.seed)
        test_p = sample_feasible(cfg.m, derived_seed(cfg.seed, 1))
    holdout_p = sample_feasible(cfg.m, derived_seed(cfg.seed, 2))
    return (make_dataset(train_p, cfg.branch), make_dataset(test_p, cfg.branch),
            make_dataset(holdout_p, cfg.branch))


def _grid_truth(grid, branch):
    f = root(branch)
    return np.array([f(x) for x in grid])


@dataclass
class NwReport:
    width: float
    rows: list[tuple[int, float]]  # (k, sup error on the grid)
    files: list[str] = field(default_factory=list)


def run_nw_experiment(cfg: ExperimentConfig, out_dir=None) -> NwReport:
    """k-nearest Nadaraya-Watson surrogates, one per ``cfg.k_values``."""
    from kernadapt.files import save_dataset, write_csv, write_grid_values

    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    train, _, _ = build_samples(cfg)
    width = common_width_init(train.points, cfg.width_init_k) if cfg.nw_width is None else cfg.nw_width
    spec = KernelSpec.common(width, train.dimension)
    grid = eval_grid(cfg.grid_resolution)
    truth_vals = _grid_truth(grid, cfg.branch)
    truth = root(cfg.branch)
    report = NwReport(width, [])
    for k in cfg.k_values:
        est = NwEstimator(train, spec, k=min(k, train.size))
        pred = est.predict(grid)
        delta = float(np.max(np.abs(truth_vals - pred[:, 0])))
        assert delta == sup_error_grid(est, truth, grid)
        report.rows.append((int(k), delta))
        if out_dir is not None:
            name = f"grid_k{k}.csv"
            write_grid_values(Path(out_dir) / name, grid, truth_vals, pred)
            report.files.append(name)
    if out_dir is not None:
        out = Path(out_dir)
        save_dataset(train, out / "train.csv")
        write_csv(out / "nw_summary.csv", ["k", "width", "delta"],
                  ([k, float(width), d] for k, d in report.rows))
        report.files += ["train.csv", "nw_summary.csv"]
    return report


@dataclass
class AdaptiveReport:
    method: str
    lam: float
    delta_before: float
    delta_after: float
    test_sup_before: float
    test_sup_after: float
    trace: AdaptTrace | None
    model_before: object = field(repr=False)
    model_after: object = field(repr=False)
    sweep: SweepReport | None = None
    files: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        doc = {
            "method": self.method,
            "lambda": self.lam,
            "delta_before": self.delta_before,
            "delta_after": self.delta_after,
            "test_sup_before": self.test_sup_before,
            "test_sup_after": self.test_sup_after,
            "iterations": 0 if self.trace is None else len(self.trace.records) - 1,
            "trace_failed": False if self.trace is None else self.trace.failed,
        }
        if self.sweep is not None:
            doc["selected_lambda"] = self.sweep.selected_lambda
            doc["sweep_mean_width"] = [
                None if m is None else float(np.mean(m.spec.widths)) for m in self.sweep.models
            ]
        return doc


def run_adaptive_experiment(cfg: ExperimentConfig, out_dir=None) -> AdaptiveReport:
    """Fixed-lambda or swept kernel fit, before and after width adaptation.

    With a lambda grid, every lambda gets a full run and the reported
    before/after pair is taken at the lambda with the smallest test
    sup-error.
    """
    from kernadapt.files import save_model, write_grid_values, write_trace

    if cfg.method == "nw":
        raise InputError("use run_nw_experiment for Nadaraya-Watson")
    alpha_mode, sigma_choice, opt = cfg.resolved()
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    train, test, holdout = build_samples(cfg)
    sigma_data = holdout if sigma_choice == "holdout" else None
    grid = eval_grid(cfg.grid_resolution)
    truth = root(cfg.branch)
    fit_kwargs = dict(sigma_data=sigma_data, alpha_mode=alpha_mode, init_k=cfg.width_init_k)

    sweep = None
    if cfg.lambda_grid is not None:
        sweep = lambda_sweep(train, test, cfg.lambda_grid, cfg.method, truth=truth, grid=grid,
                             opt=opt, iterations=cfg.iterations, threads=cfg.threads,
                             seed=cfg.seed, **fit_kwargs)
        lam = sweep.selected_lambda
        i = [r.lam for r in sweep.rows].index(lam)
        after, trace = sweep.models[i], sweep.traces[i]
    else:
        lam = DEFAULT_LAMBDA[cfg.method] if cfg.lam is None else cfg.lam
        after, trace = fit_method(cfg.method, train, lam, opt, cfg.iterations, test=test,
                                  **fit_kwargs)
    if cfg.method == "rkhs":
        before = after
    else:
        before, _ = fit_method(cfg.method, train, lam, opt, 0, **fit_kwargs)

    report = AdaptiveReport(
        cfg.method, float(lam),
        sup_error_grid(before, truth, grid), sup_error_grid(after, truth, grid),
        error_metrics(before, test).sup, error_metrics(after, test).sup,
        trace, before, after, sweep,
    )
    if out_dir is not None:
        out = Path(out_dir)
        truth_vals = _grid_truth(grid, cfg.branch)
        write_grid_values(out / "grid_before.csv", grid, truth_vals, before.predict(grid))
        write_grid_values(out / "grid_after.csv", grid, truth_vals, after.predict(grid))
        save_model(before, out / "model_before.json")
        save_model(after, out / "model_after.json")
        report.files += ["grid_before.csv", "grid_after.csv", "model_before.json",
                         "model_after.json"]
        if trace is not None:
            write_trace(out / "trace.csv", trace)
            report.files.append("trace.csv")
        if sweep is not None:
            (out / "sweep.csv").write_text(sweep.to_csv(), encoding="utf-8", newline="\n")
            report.files.append("sweep.csv")
        (out / "summary.json").write_text(json.dumps(report.summary(), indent=1) + "\n",
                                          encoding="utf-8", newline="\n")
        report.files.append("summary.json")
    return report
