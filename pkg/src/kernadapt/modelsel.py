"""Error metrics, regularization sweeps and lambda selection."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np

from kernadapt.adaptive import alternate, init_widths_knn, knn_distances
from kernadapt.data import Dataset
from kernadapt.errors import InputError, NumericalError
from kernadapt.kernels import KernelSpec
from kernadapt.optim import SigmaOptConfig
from kernadapt.ridge import FitConfig, fit_rkhs

SweepMethod = Literal["rkhs", "adaptive_common", "adaptive_per_point"]

CSV_HEADER = ["lambda", "train_sup", "train_mae", "test_sup", "test_mae", "true_sup", "selected"]


@dataclass(frozen=True)
class ErrorMetrics:
    sup: float
    mean_abs: float
    rmse: float


def error_metrics(model, labeled: Dataset) -> ErrorMetrics:
    """Sup-norm, mean absolute and RMS error of ``model.predict`` on ``labeled``."""
    if labeled.size == 0:
        raise InputError("labeled sample is empty")
    resid = np.abs(np.asarray(model.predict(labeled.points)) - labeled.targets)
    sup = float(np.max(resid))
    # scaling by the sup keeps tiny residuals from underflowing when squared
    rmse = sup * float(np.sqrt(np.mean((resid / sup) ** 2))) if sup > 0 else 0.0
    return ErrorMetrics(sup, float(np.mean(resid)), rmse)


def sup_error_grid(model, truth: Callable, grid) -> float:
    """``max |truth(x) - model(x)|`` over the grid points."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    if grid.shape[0] == 0:
        raise InputError("evaluation grid is empty")
    values = np.empty((grid.shape[0], 1))
    for i, x in enumerate(grid):
        try:
            values[i] = truth(x)
        except Exception as exc:
            point = tuple(float(v) for v in x)
            raise InputError(f"truth oracle failed at grid point {point}: {exc}") from exc
    pred = np.asarray(model.predict(grid))
    return float(np.max(np.abs(values - pred)))


@dataclass(frozen=True)
class SweepRow:
    lam: float
    train_sup: float | None = None
    train_mae: float | None = None
    test_sup: float | None = None
    test_mae: float | None = None
    true_sup: float | None = None
    selected: bool = False
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.test_sup is None


@dataclass
class SweepReport:
    rows: list[SweepRow]
    selected_lambda: float | None = None
    metadata: dict = field(default_factory=dict)
    models: list = field(default_factory=list, repr=False)
    traces: list = field(default_factory=list, repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([_fmt(r.lam), _fmt(r.train_sup), _fmt(r.train_mae), _fmt(r.test_sup),
                             _fmt(r.test_mae), _fmt(r.true_sup), "1" if r.selected else "0"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> SweepReport:
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != CSV_HEADER:
            raise InputError(f"unexpected sweep header {header}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(CSV_HEADER):
                raise InputError(f"line {lineno}: expected {len(CSV_HEADER)} fields, got {len(rec)}")
            vals = [_parse(v, lineno) for v in rec[:6]]
            if vals[0] is None:
                raise InputError(f"line {lineno}: missing lambda")
            rows.append(SweepRow(*vals, selected=rec[6] == "1"))
        chosen = [r.lam for r in rows if r.selected]
        return cls(rows, chosen[0] if chosen else None)


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def _parse(v: str, lineno: int) -> float | None:
    if v == "":
        return None
    try:
        return float(v)
    except ValueError:
        raise InputError(f"line {lineno}: not a number: {v!r}") from None


def select_lambda(report: SweepReport) -> float:
    """Lambda of the row with the smallest test sup-error; ties go to the smaller lambda."""
    ok = [r for r in report.rows if not r.failed]
    if not ok:
        raise InputError("every sweep row failed; nothing to select")
    return min(ok, key=lambda r: (r.test_sup, r.lam)).lam


def default_lambda_grid() -> np.ndarray:
    return np.logspace(-4, -1, 13)


def common_width_init(points, k: int = 4) -> float:
    """Mean distance to the ``k``-th nearest neighbor, used as the starting common width."""
    return float(np.mean(knn_distances(points, k)))


def fit_method(method: SweepMethod, train: Dataset, lam: float, opt: SigmaOptConfig | None = None,
               iterations: int = 15, sigma_data: Dataset | None = None, alpha_mode="exact",
               test: Dataset | None = None, init_k: int = 4, width: float | None = None):
    """One fit of ``method`` at ``lam``; returns ``(model, trace_or_None)``."""
    if method == "rkhs":
        sigma = common_width_init(train.points, init_k) if width is None else width
        spec = KernelSpec.common(sigma, train.dimension)
        return fit_rkhs(train, spec, FitConfig(lam=lam)), None
    if method == "adaptive_common":
        base = init_widths_knn(train.points, init_k)
        sigma = common_width_init(train.points, init_k) if width is None else width
        spec = KernelSpec.common(np.clip(sigma, base.sigma_min, base.sigma_max), train.dimension,
                                 base.sigma_min, base.sigma_max)
        opt = opt or SigmaOptConfig(method="golden_section_common")
    elif method == "adaptive_per_point":
        spec = init_widths_knn(train.points, init_k)
        opt = opt or SigmaOptConfig(method="simplex_per_point")
    else:
        raise InputError(f"unknown sweep method {method!r}")
    return alternate(train, lam, iterations, opt, init_spec=spec, sigma_data=sigma_data,
                     alpha_mode=alpha_mode, test=test)


def lambda_sweep(train: Dataset, test: Dataset, lambda_grid, method: SweepMethod = "rkhs",
                 truth: Callable | None = None, grid=None, opt: SigmaOptConfig | None = None,
                 iterations: int = 15, threads: int = 1, seed: int | None = None,
                 **fit_kwargs) -> SweepReport:
    """Fit once per lambda and select the lambda with the smallest test sup-error.

    A fit that fails numerically leaves its row empty; the sweep only fails
    when every row does.
    """
    lams = np.asarray(lambda_grid, dtype=float).ravel()
    if lams.size == 0:
        raise InputError("lambda grid is empty")
    if np.any(lams <= 0) or np.any(np.diff(lams) <= 0):
        raise InputError("lambda grid must be positive and strictly increasing")
    if truth is not None and grid is None:
        raise InputError("a truth oracle needs an evaluation grid")

    def one(lam):
        try:
            model, trace = fit_method(method, train, float(lam), opt, iterations, test=test,
                                      **fit_kwargs)
        except NumericalError as exc:
            return SweepRow(float(lam), error=str(exc)), None, None
        tr = error_metrics(model, train)
        te = error_metrics(model, test)
        true_sup = sup_error_grid(model, truth, grid) if truth is not None else None
        row = SweepRow(float(lam), tr.sup, tr.mean_abs, te.sup, te.mean_abs, true_sup)
        return row, model, trace

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, lams))
    else:
        results = [one(lam) for lam in lams]

    report = SweepReport([r[0] for r in results],
                         metadata={"seed": seed, "m": train.size, "method": method,
                                   "iterations": iterations},
                         models=[r[1] for r in results], traces=[r[2] for r in results])
    chosen = select_lambda(report)
    report.rows = [replace(r, selected=(r.lam == chosen)) for r in report.rows]
    report.selected_lambda = chosen
    return report
