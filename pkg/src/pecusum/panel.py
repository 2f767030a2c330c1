"""Discretized functional data: grids, quadrature and panels of curves.

Curves are stored as plain numpy vectors of values on a shared :class:`Grid`.
Integrals over the curve domain use trapezoid weights, which are exact for
piecewise-linear interpolants of the grid values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ShapeError

__all__ = [
    "Grid",
    "FunctionalPanel",
    "make_uniform_grid",
    "make_grid",
    "trapezoid_weights",
    "l2_norm_sq",
    "inner",
    "cross_sectional_mean",
    "interpolate_panel",
]


def trapezoid_weights(points: NDArray[np.float64]) -> NDArray[np.float64]:
    """Trapezoid quadrature weights for arbitrary ordered points."""
    h = np.diff(points)
    w = np.zeros_like(points)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered evaluation points in [0, 1] with quadrature weights."""

    points: NDArray[np.float64]
    weights: NDArray[np.float64]

    def __post_init__(self) -> None:
        p = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("a grid needs at least 2 points")
        if w.shape != p.shape:
            raise ShapeError("weights and points must have equal length")
        if not np.all(np.diff(p) > 0):
            raise ValueError("grid points must be strictly increasing")
        if p[0] < 0.0 or p[-1] > 1.0:
            raise ValueError("grid points must lie in [0, 1]")
        if not np.all(w > 0):
            raise ValueError("quadrature weights must be positive")
        if abs(w.sum() - (p[-1] - p[0])) > 1e-12:
            raise ValueError("weights must sum to the covered interval length")
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.weights, other.weights
        )

    __hash__ = None  # type: ignore[assignment]

    def integrate(self, values: ArrayLike, axis: int = -1) -> NDArray[np.float64] | float:
        """Integrate grid values along ``axis`` with the stored weights."""
        v = np.asarray(values, dtype=float)
        if v.shape[axis] != len(self):
            raise ShapeError(
                f"values have {v.shape[axis]} grid entries, grid has {len(self)}"
            )
        return np.tensordot(v, self.weights, axes=([axis], [0]))


def make_grid(points: ArrayLike) -> Grid:
    """Grid on the given points with trapezoid weights."""
    p = np.asarray(points, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ValueError("a grid needs at least 2 points")
    return Grid(p, trapezoid_weights(p))


def make_uniform_grid(g: int) -> Grid:
    """``g`` equally spaced points on [0, 1], endpoints included."""
    if int(g) != g or g < 2:
        raise ValueError(f"grid size must be an integer >= 2, got {g!r}")
    return make_grid(np.linspace(0.0, 1.0, int(g)))


def _check_curve(c: NDArray[np.float64], grid: Grid) -> None:
    if c.shape[-1] != len(grid):
        raise ShapeError(f"curve has {c.shape[-1]} values, grid has {len(grid)}")


def l2_norm_sq(c: ArrayLike, grid: Grid) -> float:
    """Squared L2 norm of a curve under the grid quadrature."""
    v = np.asarray(c, dtype=float)
    _check_curve(v, grid)
    return float(np.dot(grid.weights, v * v))


def inner(c1: ArrayLike, c2: ArrayLike, grid: Grid) -> float:
    """L2 inner product of two curves under the grid quadrature."""
    a = np.asarray(c1, dtype=float)
    b = np.asarray(c2, dtype=float)
    _check_curve(a, grid)
    _check_curve(b, grid)
    return float(np.dot(grid.weights, a * b))


@dataclass(frozen=True, eq=False)
class FunctionalPanel:
    """N subjects observed at T times, each observation a curve on ``grid``.

    ``data`` is a dense ``(N, T, G)`` float array; it is made read-only on
    construction so statistics can share it without copying.
    """

    data: NDArray[np.float64]
    grid: Grid
    subject_labels: tuple[str, ...] | None = None
    time_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        d = np.asarray(self.data, dtype=float)
        if d.ndim != 3:
            raise ShapeError(f"panel data must be 3-d (N, T, G), got shape {d.shape}")
        n, t, g = d.shape
        if n < 1:
            raise ValueError("panel needs at least one subject")
        if t < 2:
            raise ValueError("panel needs at least two time points")
        if g != len(self.grid):
            raise ShapeError(f"panel has {g} grid values per curve, grid has {len(self.grid)}")
        if not np.all(np.isfinite(d)):
            raise ValueError("panel contains non-finite values")
        if d is self.data and d.flags.writeable:
            d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "data", d)
        if self.subject_labels is not None and len(self.subject_labels) != n:
            raise ValueError("subject_labels length must equal N")
        if self.time_labels is not None and len(self.time_labels) != t:
            raise ValueError("time_labels length must equal T")

    @property
    def n_subjects(self) -> int:
        return self.data.shape[0]

    @property
    def n_times(self) -> int:
        return self.data.shape[1]

    def subject(self, i: int) -> NDArray[np.float64]:
        """(T, G) series of subject ``i`` (0-based)."""
        if not 0 <= i < self.n_subjects:
            raise IndexError(f"subject index {i} out of range for N={self.n_subjects}")
        return self.data[i]

    def subset(self, indices: ArrayLike) -> FunctionalPanel:
        idx = np.asarray(indices, dtype=int)
        labels = None
        if self.subject_labels is not None:
            labels = tuple(self.subject_labels[k] for k in idx)
        return FunctionalPanel(self.data[idx], self.grid, labels, self.time_labels)


def cross_sectional_mean(panel: FunctionalPanel) -> NDArray[np.float64]:
    """(T, G) array of pointwise averages over subjects."""
    # explicit left-to-right accumulation keeps the reduction order fixed
    acc = np.zeros(panel.data.shape[1:])
    for i in range(panel.n_subjects):
        acc += panel.data[i]
    return acc / panel.n_subjects


def interpolate_panel(panel: FunctionalPanel, grid: Grid) -> FunctionalPanel:
    """Linearly resample every curve of ``panel`` onto ``grid``."""
    src = panel.grid.points
    n, t, _ = panel.data.shape
    flat = panel.data.reshape(n * t, -1)
    out = np.empty((n * t, len(grid)))
    for k in range(n * t):
        out[k] = np.interp(grid.points, src, flat[k])
    return FunctionalPanel(out.reshape(n, t, -1), grid, panel.subject_labels, panel.time_labels)
