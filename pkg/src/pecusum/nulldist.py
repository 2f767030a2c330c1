"""Null distribution of the (PE-)CUSUM statistic.

Under no breaks the statistic converges to ``sup_x sum_i lambda_i B_i(x)^2``
with ``B_i`` independent standard Brownian bridges and ``lambda_i`` the
eigenvalues of the long-run covariance operator of the ``sqrt(N)``-scaled
cross-sectional mean curves. This module estimates that operator with a
lag-window estimator, extracts its spectrum and simulates the limit law.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DegenerateDistributionError, InsufficientDataError
from .panel import FunctionalPanel, Grid, cross_sectional_mean

__all__ = [
    "LongRunCovariance",
    "NullSpec",
    "estimate_lrc",
    "eigenvalues_of",
    "truncate_spectrum",
    "fit_null",
    "simulate_null",
    "critical_value",
    "p_value",
    "quantile_table",
]

KernelName = Literal["bartlett", "flat_top"]

SCHEMA_VERSION = 1
# draws simulated per independently seeded block; fixed so results do not
# depend on how blocks are scheduled
_BLOCK = 256


@dataclass(frozen=True, eq=False)
class LongRunCovariance:
    kernel: NDArray[np.float64]
    bandwidth: int
    kernel_name: KernelName


def _taper(name: str, x: NDArray[np.float64]) -> NDArray[np.float64]:
    ax = np.abs(x)
    if name == "bartlett":
        return np.clip(1.0 - ax, 0.0, None)
    if name == "flat_top":
        return np.where(ax <= 0.5, 1.0, np.clip(2.0 * (1.0 - ax), 0.0, None))
    raise ValueError(f"unknown kernel {name!r}")


def auto_bandwidth(t: int) -> int:
    # integer cube root, robust to float error in t ** (1/3)
    b = int(round(t ** (1.0 / 3.0)))
    while b**3 > t:
        b -= 1
    while (b + 1) ** 3 <= t:
        b += 1
    return b


def estimate_lrc(
    series: ArrayLike,
    bandwidth: int | Literal["auto"] = "auto",
    kernel_name: KernelName = "bartlett",
) -> LongRunCovariance:
    """Lag-window estimate of the long-run covariance kernel on the grid.

    ``series`` is a ``(T, G)`` array of curves. The time-average curve is
    removed first. Lag ``h`` autocovariances are weighted by ``w(h / bw)``;
    with the Bartlett taper the weight reaches zero at lag ``bw``, so
    ``bandwidth=0`` returns the sample covariance. ``"auto"`` uses
    ``floor(T ** (1/3))``.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    t = x.shape[0]
    if t < 4:
        raise InsufficientDataError(f"long-run covariance needs T >= 4, got {t}")
    bw = auto_bandwidth(t) if bandwidth == "auto" else int(bandwidth)
    if bw < 0 or bw >= t:
        raise ValueError(f"bandwidth must be in [0, T), got {bw} for T={t}")
    e = x - x.mean(axis=0)
    kernel = e.T @ e / t
    if bw > 0:
        weights = _taper(kernel_name, np.arange(1, bw + 1) / bw)
        for h, w in enumerate(weights, start=1):
            if w == 0.0:
                continue
            gamma = e[h:].T @ e[:-h] / t
            kernel += w * (gamma + gamma.T)
    kernel = 0.5 * (kernel + kernel.T)
    return LongRunCovariance(kernel, bw, kernel_name)


def eigenvalues_of(lrc: LongRunCovariance | ArrayLike, grid: Grid) -> NDArray[np.float64]:
    """Spectrum of the integral operator with the estimated kernel.

    Solves the symmetric eigenproblem of ``W^(1/2) K W^(1/2)`` with ``W`` the
    quadrature weights. Negative eigenvalues are clipped to zero; the result
    is sorted in non-increasing order.
    """
    k = np.asarray(lrc.kernel if isinstance(lrc, LongRunCovariance) else lrc, dtype=float)
    if k.shape != (len(grid), len(grid)):
        raise ValueError(f"kernel shape {k.shape} does not match grid size {len(grid)}")
    if not np.all(np.isfinite(k)):
        raise ValueError("kernel contains non-finite entries")
    sw = np.sqrt(grid.weights)
    op = sw[:, None] * k * sw[None, :]
    op = 0.5 * (op + op.T)
    vals = np.linalg.eigvalsh(op)
    return np.clip(vals, 0.0, None)[::-1].copy()


def truncate_spectrum(eigenvalues: ArrayLike, coverage: float = 0.99) -> int:
    """Smallest count of leading eigenvalues whose sum reaches ``coverage`` of the total."""
    lam = np.asarray(eigenvalues, dtype=float)
    total = lam.sum()
    if total <= 0:
        return 1
    csum = np.cumsum(lam)
    n = int(np.searchsorted(csum, coverage * total - 1e-15 * total) + 1)
    return min(n, lam.size)


@dataclass(frozen=True, eq=False)
class NullSpec:
    """Eigenvalues of the long-run covariance operator plus simulation controls."""

    eigenvalues: NDArray[np.float64]
    n_bridges: int
    bridge_grid: int = 1000
    n_draws: int = 5000
    seed: int = 0

    def __post_init__(self) -> None:
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("eigenvalues must be a non-empty vector")
        if np.any(lam < 0) or np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be non-negative and non-increasing")
        if not 1 <= self.n_bridges <= lam.size:
            raise ValueError(f"n_bridges must be in [1, {lam.size}], got {self.n_bridges}")
        if self.bridge_grid < 1 or self.n_draws < 1:
            raise ValueError("bridge_grid and n_draws must be positive")
        object.__setattr__(self, "eigenvalues", lam)

    @classmethod
    def from_eigenvalues(
        cls,
        eigenvalues: ArrayLike,
        coverage: float = 0.99,
        max_bridges: int | None = None,
        **controls,
    ) -> NullSpec:
        lam = np.asarray(eigenvalues, dtype=float)
        n = truncate_spectrum(lam, coverage)
        if max_bridges is not None:
            n = min(n, max_bridges)
        return cls(lam, n, **controls)

    def scaled(self, c: float) -> NullSpec:
        return NullSpec(self.eigenvalues * c, self.n_bridges, self.bridge_grid, self.n_draws, self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eigenvalues"] = [float(v) for v in self.eigenvalues]
        d["schema_version"] = SCHEMA_VERSION
        return d

    @classmethod
    def from_dict(cls, d: dict) -> NullSpec:
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported NullSpec schema_version {version}")
        d.pop("quantiles", None)
        return cls(np.asarray(d.pop("eigenvalues"), dtype=float), **d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> NullSpec:
        return cls.from_dict(json.loads(text))


def null_series(panel: FunctionalPanel, residuals: bool = False) -> NDArray[np.float64]:
    """``sqrt(N)``-scaled cross-sectional mean series used for the null law.

    With ``residuals=True`` each subject first has its own estimated
    single-break step mean removed, so that breaks do not leak into the
    covariance estimate.
    """
    if residuals:
        from .breaks import step_residuals

        data = step_residuals(panel)
        mean = data.mean(axis=0)
    else:
        mean = cross_sectional_mean(panel)
    return math.sqrt(panel.n_subjects) * mean


def fit_null(
    panel: FunctionalPanel,
    *,
    bandwidth: int | Literal["auto"] = "auto",
    kernel_name: KernelName = "bartlett",
    residuals: bool = False,
    coverage: float = 0.99,
    bridge_grid: int = 1000,
    n_draws: int = 5000,
    seed: int = 0,
) -> NullSpec:
    """Estimate the null law's eigenvalues from a panel."""
    lrc = estimate_lrc(null_series(panel, residuals), bandwidth, kernel_name)
    lam = eigenvalues_of(lrc, panel.grid)
    return NullSpec.from_eigenvalues(
        lam, coverage, bridge_grid=bridge_grid, n_draws=n_draws, seed=seed
    )


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, block]))


def simulate_bridges(
    rng: np.random.Generator, n_paths: int, steps: int
) -> NDArray[np.float64]:
    """Standard Brownian bridges on ``k / steps``, ``k = 0..steps``.

    Built as the Gaussian random walk minus its linear drift to the end
    point; column 0 and column ``steps`` are exactly zero.
    """
    inc = rng.standard_normal((n_paths, steps)) * math.sqrt(1.0 / steps)
    w = np.cumsum(inc, axis=1)
    frac = np.arange(1, steps + 1) / steps
    b = w - frac * w[:, -1:]
    b[:, -1] = 0.0
    return np.concatenate([np.zeros((n_paths, 1)), b], axis=1)


def simulate_null(spec: NullSpec) -> NDArray[np.float64]:
    """Sorted draws of ``max_k sum_i lambda_i B_i(k / m)^2``.

    Draws are produced in fixed-size blocks, each with its own generator
    keyed by ``(seed, block index)``, so the output is a pure function of
    ``spec``.
    """
    lam = spec.eigenvalues[: spec.n_bridges]
    if not np.any(lam > 0):
        raise DegenerateDistributionError("all eigenvalues are zero; the null law is degenerate")
    out = np.empty(spec.n_draws)
    m = spec.bridge_grid
    for block, start in enumerate(range(0, spec.n_draws, _BLOCK)):
        size = min(_BLOCK, spec.n_draws - start)
        rng = _block_rng(spec.seed, block)
        acc = np.zeros((size, m + 1))
        for val in lam:
            b = simulate_bridges(rng, size, m)
            acc += val * (b * b)
        out[start : start + size] = acc.max(axis=1)
    out.sort()
    return out


def critical_value(draws: ArrayLike, alpha: float) -> float:
    """Upper-``alpha`` empirical quantile: order statistic ``ceil((1 - alpha) n)``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    d = np.asarray(draws, dtype=float)
    if d.size == 0:
        raise ValueError("no null draws")
    # guard against (1 - alpha) * n landing a hair above an integer
    k = math.ceil(round((1.0 - alpha) * d.size, 9))
    k = min(max(k, 1), d.size)
    return float(np.sort(d)[k - 1])


def p_value(draws: ArrayLike, observed: float) -> float:
    """Add-one Monte-Carlo p-value ``(1 + #{draws >= observed}) / (n + 1)``."""
    d = np.asarray(draws, dtype=float)
    if d.size == 0:
        raise ValueError("no null draws")
    return (1 + int(np.count_nonzero(d >= observed))) / (d.size + 1)


def quantile_table(draws: ArrayLike, alphas=(0.01, 0.05, 0.10)) -> dict[str, float]:
    return {str(a): critical_value(draws, a) for a in alphas}
