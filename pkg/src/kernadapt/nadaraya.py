"""Nadaraya-Watson regression with full, k-nearest and self-scaled weighting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from kernadapt.data import Dataset
from kernadapt.errors import InputError
from kernadapt.kernels import KernelSpec, eval_matrix
from kernadapt.optim import SigmaOptConfig, minimize_widths

# Below this total weight the ratio is numerically 0/0.
UNDERFLOW_FLOOR = 1e-300


def knn_indices(points, x, k: int) -> np.ndarray:
    """Indices of the ``k`` points nearest to ``x`` (Euclidean), nearest first.

    Equal distances are ordered by ascending index.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    m = points.shape[0]
    if not 1 <= k <= m:
        raise InputError(f"k must be in [1, {m}], got {k}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (points.shape[1],):
        raise InputError(f"query has dimension {x.size}, points have {points.shape[1]}")
    dist = np.sqrt(np.sum((points - x) ** 2, axis=1))
    return np.argsort(dist, kind="stable")[:k]


@dataclass(frozen=True)
class NwEstimator:
    """A Nadaraya-Watson predictor over a fixed training sample.

    Parameters
    ----------
    data : Dataset
        Training sample; vector targets are averaged componentwise.
    spec : KernelSpec
        Kernel widths.  Ignored in ``self_scaled`` mode.
    k : int or None
        Number of nearest neighbors entering the average; ``None`` uses all.
    scaling : {"fixed_width", "self_scaled"}
        ``self_scaled`` sets each width to the neighbor's own distance, which
        reduces the estimate to the plain mean of the ``k`` nearest targets.
    """

    data: Dataset
    spec: KernelSpec
    k: int | None = None
    scaling: Literal["fixed_width", "self_scaled"] = "fixed_width"

    def __post_init__(self):
        m = self.data.size
        if self.k is not None and not 1 <= self.k <= m:
            raise InputError(f"k must be in [1, {m}], got {self.k}")
        if self.scaling not in ("fixed_width", "self_scaled"):
            raise InputError(f"unknown scaling mode {self.scaling!r}")
        if self.scaling == "self_scaled" and self.k is None:
            raise InputError("self_scaled mode needs a neighbor count k")
        if self.spec.dimension != self.data.dimension:
            raise InputError("kernel dimension does not match the data")
        if self.spec.mode != "common" and self.spec.n_centers != m:
            raise InputError("per-point widths must match the training size")

    def predict(self, X) -> np.ndarray:
        """Predictions ``(p, l)`` at the rows of ``X``."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :] if X.size == self.data.dimension else X[:, None]
        if X.shape[1] != self.data.dimension:
            raise InputError(f"query dimension {X.shape[1]} != {self.data.dimension}")
        if self.k is None:
            W = _weights(self.data.points, self.spec, X)
            return _ratio(W, self.data, X)
        return np.vstack([nw_knn_predict(self, x) for x in X])


def _weights(points, spec: KernelSpec, X) -> np.ndarray:
    if spec.mode == "common":
        # normalization cancels in the ratio for a shared width
        sigma = float(spec.widths)
        d2 = np.sum((X[:, None, :] - points[None, :, :]) ** 2, axis=2)
        return np.exp(-0.5 * d2 / sigma**2)
    return eval_matrix(points, spec, X)


def _ratio(W: np.ndarray, data: Dataset, X: np.ndarray, subset=None) -> np.ndarray:
    Y = data.targets if subset is None else data.targets[subset]
    total = W.sum(axis=1)
    out = np.empty((W.shape[0], data.n_targets))
    ok = total >= UNDERFLOW_FLOOR
    # averaging offsets from the smallest target keeps constant targets exact
    base = Y.min(axis=0)
    out[ok] = base + (W[ok] @ (Y - base)) / total[ok, None]
    for i in np.flatnonzero(~ok):
        nearest = knn_indices(data.points, X[i], 1)[0]
        out[i] = data.targets[nearest]
    return out


def nw_predict(est: NwEstimator, x) -> np.ndarray:
    """Full-sample Nadaraya-Watson estimate at one point (``k`` is ignored)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (est.data.dimension,):
        raise InputError(f"query has dimension {x.size}, data has {est.data.dimension}")
    X = x[None, :]
    return _ratio(_weights(est.data.points, est.spec, X), est.data, X)[0]


def nw_knn_predict(est: NwEstimator, x) -> np.ndarray:
    """k-nearest-neighbor Nadaraya-Watson estimate at one point."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (est.data.dimension,):
        raise InputError(f"query has dimension {x.size}, data has {est.data.dimension}")
    k = est.data.size if est.k is None else est.k
    idx = knn_indices(est.data.points, x, k)
    if est.scaling == "self_scaled":
        return est.data.targets[idx].mean(axis=0)
    # summing in index order makes k == m identical to nw_predict
    idx = np.sort(idx)
    X = x[None, :]
    points = est.data.points[idx]
    if est.spec.mode == "common":
        W = _weights(points, est.spec, X)
    else:
        W = _weights(points, est.spec.with_widths(est.spec.widths[idx]), X)
    return _ratio(W, est.data, X, subset=idx)[0]


def validation_loss(train: Dataset, validation: Dataset, spec: KernelSpec) -> float:
    """Sum of squared validation errors of the full-sample estimator."""
    W = _weights(train.points, spec, validation.points)
    pred = _ratio(W, train, validation.points)
    return float(np.sum((validation.targets - pred) ** 2))


def nw_fit_widths(train: Dataset, validation: Dataset, init: KernelSpec,
                  opt: SigmaOptConfig | None = None):
    """Tune per-point, per-coordinate widths on a validation sample.

    Minimizes the summed squared validation error of the generalized
    estimator over log-widths inside the bounds of ``init``: one
    coordinate-wise grid scan, then restarted Nelder-Mead.  Returns a :class:`~kernadapt.optim.SigmaResult` whose spec is
    anisotropic; the objective never ends above its starting value.
    """
    if validation.size == 0:
        raise InputError("validation sample is empty")
    m, n = train.size, train.dimension
    start = KernelSpec.anisotropic(init.width_matrix(m), init.sigma_min, init.sigma_max)

    def loss(widths):
        return validation_loss(train, validation, start.with_widths(widths.reshape(m, n)))

    opt = opt or SigmaOptConfig(method="simplex_per_point", scan_sweeps=1)
    return minimize_widths(loss, start, opt)
