"""Bounded minimization over kernel widths.

Width objectives are cheap, non-convex and defined only for positive
widths, so every method searches in log-width space by default and stays
inside ``[sigma_min, sigma_max]``.  Whatever happens, the returned widths are
never worse than the starting ones.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy import optimize

from kernadapt.errors import InputError
from kernadapt.kernels import KernelSpec

Method = Literal["golden_section_common", "simplex_per_point", "fd_gradient_descent"]

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SigmaOptConfig:
    """Settings for a width-optimization step.

    ``max_evaluations=None`` means 100 for golden section and
    ``200 * n_widths`` for the multivariate methods.  ``sigma_min`` /
    ``sigma_max`` default to the bounds carried by the kernel spec.
    With ``refit_alpha`` the weights are re-solved for every candidate width
    instead of being held fixed (a profile search).  ``scan_sweeps`` runs that
    many coordinate-wise scans over a ``grid_points`` log grid spanning the
    bounds before the local search, which lets it escape basins that end at a
    bound.
    """

    method: Method = "simplex_per_point"
    max_evaluations: int | None = None
    tolerance: float = 1e-8
    log_parametrization: bool = True
    sigma_min: float | None = None
    sigma_max: float | None = None
    grid_points: int = 25
    refit_alpha: bool = False
    scan_sweeps: int = 0

    def __post_init__(self):
        if self.method not in ("golden_section_common", "simplex_per_point", "fd_gradient_descent"):
            raise InputError(f"unknown width optimizer {self.method!r}")
        if self.tolerance <= 0:
            raise InputError("tolerance must be positive")
        if self.scan_sweeps < 0:
            raise InputError("scan_sweeps must be nonnegative")
        if self.grid_points < 3:
            raise InputError("grid_points must be at least 3")
        if self.max_evaluations is not None and self.max_evaluations < 0:
            raise InputError("max_evaluations must be nonnegative")
        if self.sigma_min is not None and self.sigma_min <= 0:
            raise InputError("sigma_min must be positive")
        if (self.sigma_min is not None and self.sigma_max is not None
                and self.sigma_min > self.sigma_max):
            raise InputError("sigma_min exceeds sigma_max")


@dataclass(frozen=True)
class SigmaResult:
    spec: KernelSpec
    objective: float
    initial_objective: float
    evaluations: int
    exhausted: bool  # budget ran out before the method's own stopping rule


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float,
                   max_evaluations: int = 200) -> tuple[float, float, int]:
    """Minimize a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x), evaluations)``."""
    a, b = min(a, b), max(a, b)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    evals = 2
    while b - a > tol and evals < max_evaluations:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
        evals += 1
    return (c, fc, evals) if fc <= fd else (d, fd, evals)


class _Counted:
    """Objective wrapper that counts calls and remembers the best point."""

    def __init__(self, f, to_widths):
        self.f = f
        self.to_widths = to_widths
        self.calls = 0
        self.best_x = None
        self.best_f = math.inf

    def __call__(self, theta):
        theta = np.atleast_1d(np.asarray(theta, float))
        self.calls += 1
        val = float(self.f(self.to_widths(theta)))
        if not math.isfinite(val):
            val = math.inf
        if val < self.best_f:
            self.best_f = val
            self.best_x = theta.copy()
        return val


def minimize_widths(loss: Callable[[np.ndarray], float], start: KernelSpec,
                    opt: SigmaOptConfig) -> SigmaResult:
    """Minimize ``loss(widths)`` starting from ``start.widths``.

    ``loss`` receives an array shaped like ``start.widths``.  For
    ``golden_section_common`` the start must be a common-width spec.
    """
    lo_sigma = opt.sigma_min if opt.sigma_min is not None else start.sigma_min
    hi_sigma = opt.sigma_max if opt.sigma_max is not None else start.sigma_max
    spec = start.with_bounds(lo_sigma, hi_sigma) if (lo_sigma, hi_sigma) != (
        start.sigma_min, start.sigma_max) else start
    shape = start.widths.shape
    w0 = spec.clipped_widths(start.widths).ravel()

    if opt.log_parametrization:
        def to_widths(theta):
            return np.clip(np.exp(theta), lo_sigma, hi_sigma).reshape(shape)
        theta0 = np.log(w0)
        bounds = (math.log(lo_sigma), math.log(hi_sigma))
    else:
        def to_widths(theta):
            return np.clip(theta, lo_sigma, hi_sigma).reshape(shape)
        theta0 = w0.copy()
        bounds = (lo_sigma, hi_sigma)

    f = _Counted(loss, to_widths)
    f0 = f(theta0)

    if opt.method == "golden_section_common":
        if start.mode != "common":
            raise InputError("golden_section_common needs a common-width spec")
        budget = 100 if opt.max_evaluations is None else opt.max_evaluations
        exhausted = _golden_search(f, bounds, opt, budget)
    else:
        budget = 200 * theta0.size if opt.max_evaluations is None else opt.max_evaluations
        theta = _coordinate_scan(f, theta0, f0, bounds, opt, budget)
        search = _simplex_search if opt.method == "simplex_per_point" else _gradient_search
        exhausted = search(f, theta, bounds, opt, budget)

    if f.best_f < f0:
        widths, best = to_widths(f.best_x), f.best_f
    else:
        widths, best = to_widths(theta0), f0
    return SigmaResult(spec.with_widths(widths), best, f0, f.calls, exhausted)


def _golden_search(f: _Counted, bounds, opt: SigmaOptConfig, budget: int) -> bool:
    # coarse scan brackets the best basin, golden section refines inside it
    if budget <= 1:
        return budget < 2
    lo, hi = bounds
    n_grid = max(3, min(opt.grid_points, budget // 2))
    grid = np.linspace(lo, hi, n_grid)
    vals = [f(t) for t in grid]
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]
    remaining = budget - n_grid
    if remaining < 2:
        return True
    _, _, used = golden_section(lambda t: f(t), a, b, opt.tolerance, remaining)
    return used >= remaining


def _coordinate_scan(f: _Counted, theta0, f0: float, bounds, opt: SigmaOptConfig,
                     budget: int) -> np.ndarray:
    # greedy sweeps: each coordinate moves to the best node of a log grid
    x, fx = theta0.copy(), f0
    grid = np.linspace(bounds[0], bounds[1], opt.grid_points)
    for _ in range(opt.scan_sweeps):
        moved = False
        for j in range(x.size):
            for t in grid:
                if f.calls >= budget:
                    return x
                trial = x.copy()
                trial[j] = t
                ft = f(trial)
                if ft < fx:
                    x, fx, moved = trial, ft, True
        if not moved:
            break
    return x


def _simplex_search(f: _Counted, theta0, bounds, opt: SigmaOptConfig, budget: int) -> bool:
    if budget <= 1:
        return budget < 1
    dim = theta0.size
    lo, hi = bounds
    step = 0.25 if opt.log_parametrization else 0.25 * max(float(np.mean(theta0)), lo)
    x = np.clip(theta0, lo, hi)
    for _ in range(4):
        remaining = budget - f.calls
        if remaining <= dim + 1:
            return True
        simplex = np.repeat(x[None, :], dim + 1, axis=0)
        for j in range(dim):
            simplex[j + 1, j] += step if x[j] + step <= hi else -step
        before = f.best_f
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = optimize.minimize(
                f, x, method="Nelder-Mead", bounds=[(lo, hi)] * dim,
                options={"maxfev": remaining, "xatol": 1e-6, "fatol": opt.tolerance,
                         "initial_simplex": simplex, "adaptive": dim > 4},
            )
        x = f.best_x if f.best_x is not None else x
        if f.calls >= budget:
            return True
        if before - f.best_f <= opt.tolerance * (1.0 + abs(before)) and res.success:
            return False
    return False


def _gradient_search(f: _Counted, theta0, bounds, opt: SigmaOptConfig, budget: int) -> bool:
    # projected gradient descent with forward differences and Armijo backtracking
    lo, hi = bounds
    x = np.clip(theta0, lo, hi)
    fx = f(x)
    h = 1e-6
    step = 1.0
    while f.calls + x.size + 1 <= budget:
        g = np.empty_like(x)
        for j in range(x.size):
            e = x.copy()
            e[j] += h if e[j] + h <= hi else -h
            g[j] = (f(e) - fx) / (e[j] - x[j])
        gnorm = float(np.linalg.norm(g))
        if gnorm <= opt.tolerance:
            return False
        d = -g / gnorm
        while f.calls < budget:
            trial = np.clip(x + step * d, lo, hi)
            ft = f(trial)
            if ft <= fx + 1e-4 * float(np.dot(g, trial - x)) and ft < fx:
                x, fx = trial, ft
                step = min(step * 2.0, 4.0)
                break
            step *= 0.5
            if step < 1e-10:
                return False
        else:
            return True
        if abs(fx) > 0 and step * gnorm < opt.tolerance * abs(fx):
            return False
    return True
