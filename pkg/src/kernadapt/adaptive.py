"""Kernel regression in L2 with per-point Gaussian widths.

The model ``f(x) = sum_j alpha_j k_{s_j}(c_j, x)`` is fitted by minimizing

    R(alpha, s) = sum_i (y_i - f(x_i))^2 + lam * alpha^T K(s) alpha

where ``K(s)`` is the L2 Gram matrix of the kernels.  For fixed widths the
problem is a quadratic in ``alpha``; for fixed weights the widths are tuned
by direct search.  :func:`alternate` runs the two steps in turn.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from kernadapt.data import Dataset
from kernadapt.errors import InputError, NumericalError
from kernadapt.kernels import LOG_2PI, KernelSpec, eval_matrix, gram_l2
from kernadapt.optim import SigmaOptConfig, SigmaResult, minimize_widths
from kernadapt.ridge import KernelModel, solve_spd

log = logging.getLogger(__name__)

AlphaMode = Literal["exact", "paper_literal"]


def default_bounds(points) -> tuple[float, float]:
    """``(1e-3 * diam, diam)`` of a point cloud."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    diam = float(np.max(np.sqrt(np.sum((points[:, None] - points[None]) ** 2, axis=2))))
    if diam <= 0:
        raise InputError("all points coincide; width bounds are undefined")
    return 1e-3 * diam, diam


def knn_distances(points, k: int = 4) -> np.ndarray:
    """Distance from each point to its ``k``-th nearest other point."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    m = points.shape[0]
    if not 1 <= k < m:
        raise InputError(f"k must be in [1, {m - 1}], got {k}")
    d = np.sqrt(np.sum((points[:, None] - points[None]) ** 2, axis=2))
    np.fill_diagonal(d, np.inf)
    return np.sort(d, axis=1)[:, k - 1]


def init_widths_knn(points, k: int = 4, sigma_min: float | None = None,
                    sigma_max: float | None = None) -> KernelSpec:
    """Per-point widths set to the distance to the ``k``-th nearest other point.

    Raw distances are clamped into the bounds, which default to
    :func:`default_bounds`.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    raw = knn_distances(points, k)
    if sigma_min is None or sigma_max is None:
        lo, hi = default_bounds(points)
        sigma_min = lo if sigma_min is None else sigma_min
        sigma_max = hi if sigma_max is None else sigma_max
    return KernelSpec.per_point(np.clip(raw, sigma_min, sigma_max), points.shape[1],
                                sigma_min, sigma_max)


def _check_spec(data: Dataset, spec: KernelSpec):
    if spec.dimension != data.dimension:
        raise InputError("kernel dimension does not match the data")
    if spec.mode != "common" and spec.n_centers != data.size:
        raise InputError(f"spec has {spec.n_centers} widths for {data.size} centers")


def alpha_step(data: Dataset, spec: KernelSpec, lam: float,
               mode: AlphaMode = "exact") -> np.ndarray:
    """Weights ``(m, l)`` for fixed widths, kernels centered at the data.

    ``exact`` solves ``(E^T E + lam K) alpha = E^T y``, the stationarity
    condition of the objective with evaluation matrix ``E`` and L2 Gram
    matrix ``K``.  ``paper_literal`` solves ``(K + lam I) alpha = y``.
    """
    if not lam > 0:
        raise InputError(f"lambda must be positive, got {lam}")
    if mode not in ("exact", "paper_literal"):
        raise InputError(f"unknown alpha mode {mode!r}")
    _check_spec(data, spec)
    K = gram_l2(data.points, spec)
    if mode == "paper_literal":
        return solve_spd(K + lam * np.eye(data.size), data.targets)
    E = eval_matrix(data.points, spec, data.points)
    A = E.T @ E + lam * K
    A = 0.5 * (A + A.T)
    return solve_spd(A, E.T @ data.targets)


def objective_value(data: Dataset, alpha, spec: KernelSpec, lam: float,
                    centers=None) -> float:
    """Squared misfit on ``data`` plus ``lam * alpha^T K alpha``.

    Kernels sit at ``centers`` (default: the data points themselves), so the
    same function scores a separate evaluation sample.
    """
    if lam < 0:
        raise InputError("lambda must be nonnegative")
    centers = data.points if centers is None else np.asarray(centers, dtype=float)
    alpha = np.asarray(alpha, dtype=float).reshape(centers.shape[0], -1)
    if alpha.shape[1] != data.n_targets:
        raise InputError("weight columns do not match target columns")
    E = eval_matrix(centers, spec, data.points)
    misfit = float(np.sum((data.targets - E @ alpha) ** 2))
    if lam == 0:
        return misfit
    K = gram_l2(centers, spec)
    return misfit + lam * float(np.sum(alpha * (K @ alpha)))


class _WidthObjective:
    """Objective as a function of widths only, with distances cached.

    Agrees with :func:`objective_value` / :func:`alpha_step` up to rounding;
    the width searches call it tens of thousands of times.
    """

    def __init__(self, eval_data: Dataset, centers: np.ndarray, spec: KernelSpec, lam: float):
        self.data = eval_data
        self.spec = spec
        self.lam = lam
        self.m, self.n = centers.shape
        dq = (eval_data.points[:, None, :] - centers[None, :, :]) ** 2
        dc = (centers[:, None, :] - centers[None, :, :]) ** 2
        if spec.mode == "anisotropic":
            self.dq, self.dc = dq, dc
        else:
            self.dq, self.dc = dq.sum(axis=2), dc.sum(axis=2)
        self.log_2pi_half = 0.5 * self.n * LOG_2PI

    def matrices(self, widths) -> tuple[np.ndarray, np.ndarray]:
        n = self.n
        if self.spec.mode == "anisotropic":
            W2 = np.asarray(widths).reshape(self.m, n) ** 2
            E = np.exp(-0.5 * np.sum(np.log(W2), axis=1)[None, :] - self.log_2pi_half
                       - 0.5 * np.sum(self.dq / W2[None, :, :], axis=2))
            s2 = W2[:, None, :] + W2[None, :, :]
            K = np.exp(-self.log_2pi_half - 0.5 * np.sum(np.log(s2), axis=2)
                       - 0.5 * np.sum(self.dc / s2, axis=2))
            K = np.triu(K) + np.triu(K, 1).T
        else:
            w2 = np.broadcast_to(np.asarray(widths, float) ** 2, (self.m,))
            E = np.exp(-0.5 * self.dq / w2) * (2.0 * np.pi * w2) ** (-0.5 * n)
            s2 = w2[:, None] + w2[None, :]
            K = np.exp(-0.5 * self.dc / s2) * (2.0 * np.pi * s2) ** (-0.5 * n)
        return E, K

    def value(self, widths, alpha) -> float:
        E, K = self.matrices(widths)
        misfit = float(np.sum((self.data.targets - E @ alpha) ** 2))
        return misfit + self.lam * float(np.sum(alpha * (K @ alpha)))


def sigma_step(eval_data: Dataset, alpha, spec_init: KernelSpec, lam: float,
               opt: SigmaOptConfig, centers=None) -> SigmaResult:
    """Tune widths with the weights held fixed.

    ``golden_section_common`` searches one shared width; the other methods
    move every width of ``spec_init`` (per point, or per point and
    coordinate for anisotropic specs).
    """
    if not lam > 0:
        raise InputError(f"lambda must be positive, got {lam}")
    centers = eval_data.points if centers is None else np.asarray(centers, dtype=float)
    alpha = np.asarray(alpha, dtype=float).reshape(centers.shape[0], -1)
    if opt.method == "golden_section_common" and spec_init.mode != "common":
        raise InputError("golden_section_common needs a common-width spec")
    obj = _WidthObjective(eval_data, centers, spec_init, lam)
    return minimize_widths(lambda w: obj.value(w, alpha), spec_init, opt)


def sigma_step_profile(train: Dataset, eval_data: Dataset, spec_init: KernelSpec, lam: float,
                       opt: SigmaOptConfig, alpha_mode: AlphaMode = "exact") -> SigmaResult:
    """Tune widths with the weights re-solved on ``train`` for each candidate.

    The score is the regularized objective on ``eval_data`` of the model
    fitted at the candidate widths.
    """
    if not lam > 0:
        raise InputError(f"lambda must be positive, got {lam}")
    if opt.method == "golden_section_common" and spec_init.mode != "common":
        raise InputError("golden_section_common needs a common-width spec")
    fit = _WidthObjective(train, train.points, spec_init, lam)
    score = _WidthObjective(eval_data, train.points, spec_init, lam)
    eye = np.eye(train.size)

    def loss(widths):
        E, K = fit.matrices(widths)
        A = K + lam * eye if alpha_mode == "paper_literal" else E.T @ E + lam * K
        rhs = train.targets if alpha_mode == "paper_literal" else E.T @ train.targets
        try:
            alpha = solve_spd(0.5 * (A + A.T), rhs)
        except NumericalError:
            return np.inf
        return score.value(widths, alpha)

    return minimize_widths(loss, spec_init, opt)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    train_sup: float
    test_sup: float | None
    width_min: float
    width_mean: float
    width_max: float


@dataclass
class AdaptTrace:
    """Per-iteration history of an alternating run.

    Record ``s`` holds the training objective of ``(alpha^{s+1}, sigma^s)``:
    iteration 0 is the fit at the initial widths.
    """

    records: list[TraceRecord] = field(default_factory=list)
    failed: bool = False
    message: str = ""
    budget_exhausted: int = 0

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])


def _sup(model: KernelModel, data: Dataset | None) -> float | None:
    if data is None:
        return None
    return float(np.max(np.abs(model.predict(data.points) - data.targets)))


def alternate(train: Dataset, lam: float, iterations: int, opt: SigmaOptConfig,
              init_spec: KernelSpec | None = None, sigma_data: Dataset | None = None,
              alpha_mode: AlphaMode = "exact", test: Dataset | None = None,
              init_k: int = 4) -> tuple[KernelModel, AdaptTrace]:
    """Alternate weight and width steps ``iterations`` times.

    Weights are always fitted on ``train``; widths are tuned on
    ``sigma_data`` (default ``train``).  The weights are refitted after the
    last width step, so the returned model is consistent with its widths.
    A numerical failure after the first iteration ends the run early and
    returns the last good model with ``trace.failed`` set.
    """
    if iterations < 0:
        raise InputError("iterations must be nonnegative")
    if not lam > 0:
        raise InputError(f"lambda must be positive, got {lam}")
    spec = init_spec if init_spec is not None else init_widths_knn(train.points, init_k)
    _check_spec(train, spec)
    sigma_data = train if sigma_data is None else sigma_data
    if sigma_data.dimension != train.dimension or sigma_data.n_targets != train.n_targets:
        raise InputError("width-tuning sample does not match the training data")

    trace = AdaptTrace()

    def record(s, alpha, spec):
        model = KernelModel(train.points, spec, alpha, lam, "l2_adaptive")
        w = spec.widths
        trace.records.append(TraceRecord(
            s, objective_value(train, alpha, spec, lam), _sup(model, train), _sup(model, test),
            float(np.min(w)), float(np.mean(w)), float(np.max(w)),
        ))
        return model

    alpha = alpha_step(train, spec, lam, alpha_mode)
    model = record(0, alpha, spec)
    for s in range(1, iterations + 1):
        try:
            if opt.refit_alpha:
                res = sigma_step_profile(train, sigma_data, spec, lam, opt, alpha_mode)
            else:
                res = sigma_step(sigma_data, alpha, spec, lam, opt, centers=train.points)
            new_alpha = alpha_step(train, res.spec, lam, alpha_mode)
        except NumericalError as exc:
            trace.failed = True
            trace.message = f"iteration {s}: {exc}"
            log.warning("alternation stopped early: %s", trace.message)
            break
        if res.exhausted:
            trace.budget_exhausted += 1
        spec, alpha = res.spec, new_alpha
        model = record(s, alpha, spec)
    return model, trace
