"""Fixed-kernel ridge regression, kernel expansions and the Monte-Carlo smoother."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy import integrate, linalg

from kernadapt.data import Dataset
from kernadapt.errors import InputError, NumericalError
from kernadapt.kernels import KernelSpec, eval_matrix, gram_l2

Flavor = Literal["rkhs_plain", "rkhs_mean_scaled", "l2_adaptive", "monte_carlo"]
FLAVORS = ("rkhs_plain", "rkhs_mean_scaled", "l2_adaptive", "monte_carlo")


@dataclass(frozen=True)
class KernelModel:
    """A frozen kernel expansion ``f(x) = scale * sum_i alpha_i k_i(x)``.

    ``scale`` is ``1/m`` for the ``rkhs_mean_scaled`` flavor and 1 otherwise;
    the Monte-Carlo flavor already carries its ``1/m`` inside the weights.
    """

    centers: np.ndarray
    spec: KernelSpec
    weights: np.ndarray
    lambda_used: float
    flavor: Flavor

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if centers.ndim == 1:
            centers = centers[:, None]
        if weights.ndim == 1:
            weights = weights[:, None]
        if centers.shape[0] != weights.shape[0]:
            raise InputError(f"{centers.shape[0]} centers but {weights.shape[0]} weight rows")
        if centers.shape[1] != self.spec.dimension:
            raise InputError("center dimension does not match the kernel spec")
        if self.spec.mode != "common" and self.spec.n_centers != centers.shape[0]:
            raise InputError("per-point widths must match the center count")
        if not (np.all(np.isfinite(centers)) and np.all(np.isfinite(weights))):
            raise InputError("model contains non-finite values")
        if not (self.lambda_used >= 0):
            raise InputError("lambda_used must be nonnegative")
        if self.flavor not in FLAVORS:
            raise InputError(f"unknown model flavor {self.flavor!r}")
        centers.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "lambda_used", float(self.lambda_used))

    @property
    def scale(self) -> float:
        return 1.0 / self.centers.shape[0] if self.flavor == "rkhs_mean_scaled" else 1.0

    def predict(self, X) -> np.ndarray:
        """Predictions ``(p, l)`` at the rows of ``X``."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :] if X.size == self.spec.dimension else X[:, None]
        E = eval_matrix(self.centers, self.spec, X)
        out = E @ self.weights
        return out * self.scale if self.flavor == "rkhs_mean_scaled" else out


@dataclass(frozen=True)
class FitConfig:
    """Ridge settings; jitter values are relative to ``trace(K) / m``."""

    lam: float = 0.0
    variant: Literal["plain", "mean_scaled"] = "plain"
    jitter_start: float = 1e-12
    jitter_factor: float = 10.0
    jitter_max: float = 1e-6

    def __post_init__(self):
        if not (self.lam >= 0):
            raise InputError(f"lambda must be nonnegative, got {self.lam}")
        if self.variant not in ("plain", "mean_scaled"):
            raise InputError(f"unknown ridge variant {self.variant!r}")
        if self.jitter_start <= 0 or self.jitter_factor <= 1 or self.jitter_max < self.jitter_start:
            raise InputError("jitter schedule must be positive and increasing")


def solve_spd(A: np.ndarray, B: np.ndarray, jitter_start=1e-12, jitter_factor=10.0,
              jitter_max=1e-6) -> np.ndarray:
    """Solve ``A X = B`` for symmetric positive (semi)definite ``A``.

    Tries a plain Cholesky factorization first, then adds diagonal jitter
    ``j * trace(A) / m`` for ``j`` from ``jitter_start`` up to ``jitter_max``.
    """
    m = A.shape[0]
    base = max(float(np.trace(A)) / m, np.finfo(float).tiny)
    jitter = 0.0
    while True:
        try:
            factor = linalg.cho_factor(A + jitter * np.eye(m) if jitter else A, lower=True)
            X = linalg.cho_solve(factor, B)
            if np.all(np.isfinite(X)):
                return X
        except linalg.LinAlgError:
            pass
        jitter = jitter_start * base if jitter == 0.0 else jitter * jitter_factor
        if jitter > jitter_max * base * (1 + 1e-12):
            cond = np.linalg.cond(A)
            raise NumericalError(
                f"Cholesky factorization failed after jitter {jitter_max:g}*trace/m; "
                f"condition estimate {cond:.3e}"
            )


def rkhs_matrix(data: Dataset, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix ``k(x_i, x_j)`` of a common-width Gaussian (symmetric)."""
    if spec.mode != "common":
        raise InputError("RKHS ridge needs a common-width kernel")
    return eval_matrix(data.points, spec, data.points)


def _system(K: np.ndarray, cfg: FitConfig) -> np.ndarray:
    m = K.shape[0]
    A = K / m if cfg.variant == "mean_scaled" else K
    return A + cfg.lam * np.eye(m)


def _solve(K, Y, cfg: FitConfig):
    return solve_spd(_system(K, cfg), Y, cfg.jitter_start, cfg.jitter_factor, cfg.jitter_max)


def fit_rkhs(data: Dataset, spec: KernelSpec, cfg: FitConfig = FitConfig()) -> KernelModel:
    """Closed-form kernel ridge weights for a fixed common-width Gaussian.

    ``plain`` solves ``(K + lam I) alpha = y``; ``mean_scaled`` solves
    ``(K/m + lam I) alpha = y`` and predicts with ``f = (1/m) sum alpha_i k_i``.
    """
    K = rkhs_matrix(data, spec)
    alpha = _solve(K, data.targets, cfg)
    flavor = "rkhs_mean_scaled" if cfg.variant == "mean_scaled" else "rkhs_plain"
    return KernelModel(data.points, spec, alpha, cfg.lam, flavor)


def rkhs_optimal_value(data: Dataset, K: np.ndarray, cfg: FitConfig = FitConfig()) -> float:
    """Optimal ridge objective ``lam * y^T (K + lam I)^-1 y`` (or its mean-scaled form).

    Vector targets contribute one term per column.
    """
    K = np.asarray(K, dtype=float)
    if K.shape != (data.size, data.size):
        raise InputError(f"K must be {data.size}x{data.size}, got {K.shape}")
    if cfg.lam == 0:
        return 0.0
    Y = data.targets
    value = cfg.lam * float(np.sum(Y * _solve(K, Y, cfg)))
    return value / data.size if cfg.variant == "mean_scaled" else value


def rkhs_objective(data: Dataset, K: np.ndarray, alpha, cfg: FitConfig = FitConfig()) -> float:
    """Ridge objective at given weights: data misfit plus ``lam * ||f||_H^2``."""
    K = np.asarray(K, dtype=float)
    alpha = np.asarray(alpha, dtype=float).reshape(data.size, -1)
    if cfg.variant == "mean_scaled":
        m = data.size
        fitted = K @ alpha / m
        return float(np.sum((data.targets - fitted) ** 2) / m
                     + cfg.lam * np.sum(alpha * (K @ alpha)) / m**2)
    fitted = K @ alpha
    return float(np.sum((data.targets - fitted) ** 2) + cfg.lam * np.sum(alpha * (K @ alpha)))


def predict_model(model: KernelModel, x) -> np.ndarray:
    """Model value at a single point (one entry per target column)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.spec.dimension,):
        raise InputError(f"query has dimension {x.size}, model has {model.spec.dimension}")
    return model.predict(x[None, :])[0]


def model_l2_norm(model: KernelModel) -> np.ndarray:
    """L2(R^n) norm of the model function, one value per target column."""
    K = gram_l2(model.centers, model.spec)
    A = model.weights
    sq = np.einsum("ik,ij,jk->k", A, K, A)
    return model.scale * np.sqrt(np.maximum(sq, 0.0))


def mc_estimate(data: Dataset, sigma: float) -> KernelModel:
    """Monte-Carlo kernel smoother: weights ``y_i / m`` on a common width."""
    if not sigma > 0:
        raise InputError("sigma must be positive")
    spec = KernelSpec.common(sigma, data.dimension, sigma_min=min(sigma, 1e-12),
                             sigma_max=max(sigma, 1e12))
    return KernelModel(data.points, spec, data.targets / data.size, 0.0, "monte_carlo")


def smoothed_value(f: Callable[[float], float], x: float, sigma: float,
                   support: tuple[float, float], tol: float = 1e-12) -> float:
    """Kernel-averaged value ``f_sigma(x) = E f(x + sigma Z)``, Z standard normal.

    ``f`` is taken as zero outside ``support``; one-dimensional only.
    """
    if not sigma > 0:
        raise InputError("sigma must be positive")
    lo, hi = support
    zlo, zhi = (lo - x) / sigma, (hi - x) / sigma
    inv_sqrt_2pi = 1.0 / math.sqrt(2.0 * math.pi)
    val, _ = integrate.quad(lambda z: f(x + sigma * z) * inv_sqrt_2pi * math.exp(-0.5 * z * z),
                            max(zlo, -40.0), min(zhi, 40.0), epsabs=tol, epsrel=tol, limit=200)
    return val
