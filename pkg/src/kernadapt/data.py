"""Labeled sample container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kernadapt.errors import InputError


@dataclass(frozen=True)
class Dataset:
    """Sample points ``(m, n)`` with targets ``(m, l)``.

    Scalar regression is ``l == 1``; the targets are always stored 2-D.
    """

    points: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if targets.ndim == 1:
            targets = targets[:, None]
        if points.ndim != 2 or targets.ndim != 2:
            raise InputError("points and targets must be at most 2-D")
        if points.shape[0] == 0:
            raise InputError("empty dataset")
        if points.shape[1] == 0 or targets.shape[1] == 0:
            raise InputError("points and targets need at least one column")
        if points.shape[0] != targets.shape[0]:
            raise InputError(
                f"{points.shape[0]} points but {targets.shape[0]} target rows"
            )
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(targets))):
            raise InputError("dataset contains non-finite values")
        points.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "targets", targets)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def n_targets(self) -> int:
        return self.targets.shape[1]

    def __len__(self) -> int:
        return self.size

    def subset(self, indices) -> Dataset:
        indices = np.asarray(indices)
        return Dataset(self.points[indices], self.targets[indices])
