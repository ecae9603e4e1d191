"""Gaussian kernels, their L2 inner products, and the matrices built from them.

All kernels are normalized Gaussian densities

    k_s(c, x) = (2 pi)^(-n/2) / prod_l s_l * exp(-sum_l (x_l - c_l)^2 / (2 s_l^2))

so a width is either one scalar (isotropic) or one scale per coordinate
(anisotropic).  Two such densities integrate against each other in closed
form, which gives the Gram matrix of the span of the kernels in L2(R^n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import integrate

from kernadapt.errors import InputError, NumericalError

WidthMode = Literal["common", "per_point", "anisotropic"]

LOG_2PI = math.log(2.0 * math.pi)

DEFAULT_SIGMA_MIN = 1e-12
DEFAULT_SIGMA_MAX = 1e12


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Gaussian kernel family with its width layout.

    ``widths`` has shape ``()`` for ``common``, ``(m,)`` for ``per_point``
    and ``(m, n)`` for ``anisotropic``.  Every width must lie in
    ``[sigma_min, sigma_max]``; nothing here clamps silently.
    """

    dimension: int
    mode: WidthMode
    widths: np.ndarray = field(repr=False)
    sigma_min: float = DEFAULT_SIGMA_MIN
    sigma_max: float = DEFAULT_SIGMA_MAX

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise InputError(f"dimension must be a positive integer, got {self.dimension}")
        if self.mode not in ("common", "per_point", "anisotropic"):
            raise InputError(f"unknown width mode {self.mode!r}")
        if not (0.0 < self.sigma_min <= self.sigma_max):
            raise InputError(
                f"need 0 < sigma_min <= sigma_max, got [{self.sigma_min}, {self.sigma_max}]"
            )
        widths = np.array(self.widths, dtype=float)
        expected_ndim = {"common": 0, "per_point": 1, "anisotropic": 2}[self.mode]
        if widths.ndim != expected_ndim:
            raise InputError(
                f"{self.mode} widths must be {expected_ndim}-D, got shape {widths.shape}"
            )
        if self.mode == "anisotropic" and widths.shape[1] != self.dimension:
            raise InputError(
                f"anisotropic widths need {self.dimension} columns, got {widths.shape[1]}"
            )
        if self.mode != "common" and widths.shape[0] == 0:
            raise InputError("per-point widths must not be empty")
        if not np.all(np.isfinite(widths)) or np.any(widths <= 0):
            raise InputError("widths must be finite and positive")
        if np.any(widths < self.sigma_min) or np.any(widths > self.sigma_max):
            raise InputError(
                f"widths outside [{self.sigma_min}, {self.sigma_max}]: "
                f"min {widths.min()}, max {widths.max()}"
            )
        widths.setflags(write=False)
        object.__setattr__(self, "dimension", int(self.dimension))
        object.__setattr__(self, "widths", widths)

    def __eq__(self, other):
        if not isinstance(other, KernelSpec):
            return NotImplemented
        return (self.dimension == other.dimension and self.mode == other.mode
                and self.sigma_min == other.sigma_min and self.sigma_max == other.sigma_max
                and np.array_equal(self.widths, other.widths))

    __hash__ = None

    @classmethod
    def common(cls, sigma, dimension, sigma_min=DEFAULT_SIGMA_MIN, sigma_max=DEFAULT_SIGMA_MAX):
        return cls(dimension, "common", np.float64(sigma), sigma_min, sigma_max)

    @classmethod
    def per_point(cls, sigmas, dimension, sigma_min=DEFAULT_SIGMA_MIN, sigma_max=DEFAULT_SIGMA_MAX):
        return cls(dimension, "per_point", np.asarray(sigmas, float), sigma_min, sigma_max)

    @classmethod
    def anisotropic(cls, sigmas, sigma_min=DEFAULT_SIGMA_MIN, sigma_max=DEFAULT_SIGMA_MAX):
        sigmas = np.atleast_2d(np.asarray(sigmas, float))
        return cls(sigmas.shape[1], "anisotropic", sigmas, sigma_min, sigma_max)

    @property
    def n_centers(self) -> int | None:
        """Number of centers the widths are tied to (``None`` for common)."""
        return None if self.mode == "common" else self.widths.shape[0]

    def width_matrix(self, m: int) -> np.ndarray:
        """Per-center, per-coordinate widths as an ``(m, n)`` array."""
        if self.mode == "common":
            return np.full((m, self.dimension), float(self.widths))
        if self.widths.shape[0] != m:
            raise InputError(f"spec carries {self.widths.shape[0]} widths for {m} centers")
        if self.mode == "per_point":
            return np.repeat(self.widths[:, None], self.dimension, axis=1)
        return np.array(self.widths)

    def with_widths(self, widths) -> KernelSpec:
        """Same mode and bounds, new widths (validated)."""
        return KernelSpec(self.dimension, self.mode, np.asarray(widths, float),
                          self.sigma_min, self.sigma_max)

    def with_bounds(self, sigma_min: float, sigma_max: float) -> KernelSpec:
        return KernelSpec(self.dimension, self.mode, self.widths, sigma_min, sigma_max)

    def clipped_widths(self, widths) -> np.ndarray:
        return np.clip(np.asarray(widths, float), self.sigma_min, self.sigma_max)


def _as_point(x, name: str) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise InputError(f"{name} must be a point (1-D), got shape {x.shape}")
    return x


def _as_points(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise InputError(f"{name} must be an (m, n) array, got shape {x.shape}")
    return x


def _width_vector(width, n: int) -> np.ndarray:
    w = np.atleast_1d(np.asarray(width, dtype=float))
    if w.ndim != 1 or w.size not in (1, n):
        raise InputError(f"width must be a scalar or have {n} components, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise InputError(f"width components must be positive, got {w}")
    return np.broadcast_to(w, (n,)) if w.size == 1 else w


def kernel_eval(center, width, x) -> float:
    """Gaussian density with the given center and width(s), evaluated at ``x``.

    ``width`` is a scalar (isotropic) or one value per coordinate.  Far tails
    underflow to exactly 0.
    """
    center = _as_point(center, "center")
    x = _as_point(x, "x")
    if center.shape != x.shape:
        raise InputError(f"dimension mismatch: center {center.size}, x {x.size}")
    w = _width_vector(width, center.size)
    z = (x - center) / w
    log_norm = -0.5 * center.size * LOG_2PI - np.sum(np.log(w))
    return float(np.exp(log_norm - 0.5 * np.dot(z, z)))


def l2_inner(center_i, width_i, center_j, width_j) -> float:
    """Closed-form ``<k_i, k_j>`` in L2(R^n) for two Gaussian kernels.

    The product of two Gaussians integrates to a Gaussian in the offset
    whose variance is the sum of both variances, per coordinate.
    """
    ci = _as_point(center_i, "center_i")
    cj = _as_point(center_j, "center_j")
    if ci.shape != cj.shape:
        raise InputError(f"dimension mismatch: {ci.size} vs {cj.size}")
    n = ci.size
    s2 = _width_vector(width_i, n) ** 2 + _width_vector(width_j, n) ** 2
    d = ci - cj
    exponent = -0.5 * np.sum(d * d / s2)
    log_norm = -0.5 * n * LOG_2PI - 0.5 * np.sum(np.log(s2))
    return float(np.exp(log_norm + exponent))


def l2_inner_quadrature(center_i, width_i, center_j, width_j, tol: float = 1e-8,
                        max_evaluations: int = 1_000_000) -> float:
    """Numerically integrate ``k_i(x) k_j(x)`` over R^n (n = 1 or 2).

    Test oracle for :func:`l2_inner`.  The integrand is evaluated straight
    from the density formula; the domain is a box of +-10 combined widths
    around the peak of the product, refined adaptively (QUADPACK) to
    relative accuracy ``tol``.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    ci = _as_point(center_i, "center_i")
    cj = _as_point(center_j, "center_j")
    if ci.shape != cj.shape:
        raise InputError(f"dimension mismatch: {ci.size} vs {cj.size}")
    n = ci.size
    if n not in (1, 2):
        raise InputError("quadrature oracle supports n in {1, 2}")
    wi = _width_vector(width_i, n)
    wj = _width_vector(width_j, n)
    s2 = wi**2 + wj**2
    peak = (wj**2 * ci + wi**2 * cj) / s2
    half = 10.0 * np.sqrt(s2)
    lo, hi = peak - half, peak + half

    norm = 1.0 / ((2.0 * math.pi) ** n * float(np.prod(wi)) * float(np.prod(wj)))
    count = [0]

    def integrand(*xs):
        count[0] += 1
        q = 0.0
        for l, xl in enumerate(xs):
            q += (xl - ci[l]) ** 2 / (2.0 * wi[l] ** 2) + (xl - cj[l]) ** 2 / (2.0 * wj[l] ** 2)
        return norm * math.exp(-q)

    def checked_quad(f, a, b, eps):
        out = integrate.quad(f, a, b, epsabs=0.0, epsrel=eps, limit=500, full_output=1)
        if len(out) > 3:
            raise NumericalError(f"quadrature did not converge: {out[3]}")
        if count[0] > max_evaluations:
            raise NumericalError(f"quadrature exceeded {max_evaluations} evaluations")
        return out[0]

    if n == 1:
        return checked_quad(integrand, lo[0], hi[0], tol)
    inner_tol = tol * 1e-2
    return checked_quad(
        lambda x0: checked_quad(lambda x1: integrand(x0, x1), lo[1], hi[1], inner_tol),
        lo[0], hi[0], tol,
    )


def _check_centers(centers, spec: KernelSpec) -> np.ndarray:
    centers = _as_points(centers, "centers")
    if centers.shape[0] < 1:
        raise InputError("need at least one center")
    if centers.shape[1] != spec.dimension:
        raise InputError(
            f"centers have dimension {centers.shape[1]}, spec expects {spec.dimension}"
        )
    return centers


def gram_l2(centers, spec: KernelSpec) -> np.ndarray:
    """L2 Gram matrix ``K_ij = <k_i, k_j>`` of the kernels sitting at ``centers``.

    The upper triangle is mirrored so the result is exactly symmetric.
    """
    centers = _check_centers(centers, spec)
    m, n = centers.shape
    W2 = spec.width_matrix(m) ** 2
    s2 = W2[:, None, :] + W2[None, :, :]
    d = centers[:, None, :] - centers[None, :, :]
    exponent = -0.5 * np.sum(d * d / s2, axis=2)
    log_norm = -0.5 * n * LOG_2PI - 0.5 * np.sum(np.log(s2), axis=2)
    K = np.exp(log_norm + exponent)
    upper = np.triu(K)
    return upper + np.triu(K, 1).T


def eval_matrix(centers, spec: KernelSpec, query_points) -> np.ndarray:
    """Kernel values ``E_ij = k_j(query_i)`` as a ``(p, m)`` matrix."""
    centers = _check_centers(centers, spec)
    query = _as_points(query_points, "query_points")
    if query.shape[1] != centers.shape[1]:
        raise InputError(
            f"query dimension {query.shape[1]} != center dimension {centers.shape[1]}"
        )
    m, n = centers.shape
    W = spec.width_matrix(m)
    z = (query[:, None, :] - centers[None, :, :]) / W[None, :, :]
    log_norm = -0.5 * n * LOG_2PI - np.sum(np.log(W), axis=1)
    return np.exp(log_norm[None, :] - 0.5 * np.sum(z * z, axis=2))
