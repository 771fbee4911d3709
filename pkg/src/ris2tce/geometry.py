"""Uniform linear array geometry and Euclidean distance fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ArrayGeometry:
    """Element coordinates of one array, in metres.

    positions has shape (count, 3). spacing records the nominal pitch so the
    aperture can be reported without re-deriving it from coordinates.
    """

    positions: np.ndarray
    spacing: float

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("positions must have shape (count, 3)")
        object.__setattr__(self, "positions", pos)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def aperture(self) -> float:
        """End-to-end array length (count - 1) * spacing."""
        return (self.count - 1) * self.spacing


def ula(center, count: int, spacing: float, axis: int = 1) -> ArrayGeometry:
    """Half-wavelength-style ULA centred on ``center`` along one axis.

    axis=1 places elements along y, the orientation used throughout.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    center = np.asarray(center, dtype=float)
    if center.shape != (3,):
        raise ValueError("center must be a 3-vector")
    offsets = (np.arange(count) - (count - 1) / 2.0) * spacing
    positions = np.tile(center, (count, 1))
    positions[:, axis] += offsets
    return ArrayGeometry(positions=positions, spacing=spacing)


def pairwise_distances(rx: ArrayGeometry, tx: ArrayGeometry) -> np.ndarray:
    """(rx.count, tx.count) matrix of element-to-element distances."""
    diff = rx.positions[:, None, :] - tx.positions[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


def distances_to_point(geom: ArrayGeometry, point) -> np.ndarray:
    """Per-element distance from the array to a single point."""
    point = np.asarray(point, dtype=float)
    if point.shape != (3,):
        raise ValueError("point must be a 3-vector")
    return np.sqrt(np.sum((geom.positions - point[None, :]) ** 2, axis=-1))
