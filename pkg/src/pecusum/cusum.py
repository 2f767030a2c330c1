"""Functional CUSUM statistics and the power-enhanced (PE-CUSUM) test.

Two CUSUM processes are built from the same partial-sum construction:

* the pooled process of the cross-sectional mean curves, scaled by
  ``sqrt(N / T)``;
* one process per subject, scaled by ``1 / sqrt(T)``.

The sup over ``x`` in [0, 1] is evaluated as a max over ``t = 1..T``. The
power-enhancement component counts subjects whose sup statistic exceeds a
high-criticism threshold and inflates the count by ``sqrt(max(N, T))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .panel import FunctionalPanel, Grid, cross_sectional_mean

if TYPE_CHECKING:
    from .nulldist import NullSpec

__all__ = [
    "CusumField",
    "PeConfig",
    "TestResult",
    "cusum_process",
    "pooled_cusum",
    "subject_cusum",
    "cusum_statistic",
    "subject_objectives",
    "subject_sup_stats",
    "threshold",
    "pe_component",
    "pe_cusum_test",
    "DEFAULT_ALPHAS",
]

Variant = Literal["xi1", "xi2"]
DEFAULT_ALPHAS = (0.01, 0.05, 0.10)


@dataclass(frozen=True, eq=False)
class CusumField:
    """CUSUM process on the (time, grid) lattice.

    Row ``t - 1`` holds ``Z(t / T; u)`` for ``t = 1..T``; the last row is
    identically zero.
    """

    values: NDArray[np.float64]
    grid: Grid
    scale: Literal["pooled", "subject"]

    @property
    def n_times(self) -> int:
        return self.values.shape[0]


def cusum_process(series: ArrayLike, scale: float) -> NDArray[np.float64]:
    """Scaled CUSUM of a ``(..., T, G)`` array along the time axis.

    Entry ``t - 1`` is ``scale * (S_t - (t / T) * S_T)`` with ``S_t`` the
    partial sum of the first ``t`` curves. The final row is set to exactly
    zero.
    """
    x = np.asarray(series, dtype=float)
    t_len = x.shape[-2]
    partial = np.cumsum(x, axis=-2)
    frac = (np.arange(1, t_len + 1) / t_len)[:, None]
    z = partial - frac * partial[..., -1:, :]
    z *= scale
    z[..., -1, :] = 0.0
    return z


def _require_times(panel: FunctionalPanel) -> None:
    if panel.n_times < 2:
        raise ValueError(f"CUSUM needs T >= 2, got T={panel.n_times}")


def pooled_cusum(panel: FunctionalPanel) -> CusumField:
    """CUSUM of the cross-sectional mean curves with ``sqrt(N/T)`` scaling."""
    _require_times(panel)
    n, t = panel.n_subjects, panel.n_times
    z = cusum_process(cross_sectional_mean(panel), math.sqrt(n / t))
    return CusumField(z, panel.grid, "pooled")


def subject_cusum(panel: FunctionalPanel, i: int) -> CusumField:
    """CUSUM of subject ``i`` (0-based) with ``1/sqrt(T)`` scaling."""
    _require_times(panel)
    series = panel.subject(i)
    z = cusum_process(series, 1.0 / math.sqrt(panel.n_times))
    return CusumField(z, panel.grid, "subject")


def _objective(z: NDArray[np.float64], grid: Grid) -> NDArray[np.float64]:
    # integral over the grid of the squared process, for every leading index
    return (z * z) @ grid.weights


def cusum_statistic(field: CusumField) -> float:
    """``max_t`` of the integrated squared CUSUM process."""
    return float(np.max(_objective(field.values, field.grid)))


def subject_objectives(panel: FunctionalPanel, chunk: int = 32) -> NDArray[np.float64]:
    """``(N, T)`` array of integrated squared subject CUSUMs.

    Entry ``(i, t - 1)`` is the integral of ``Z_iT(t/T; u)^2``. Subjects are
    processed in chunks to bound memory.
    """
    _require_times(panel)
    n, t = panel.n_subjects, panel.n_times
    out = np.empty((n, t))
    scale = 1.0 / math.sqrt(t)
    for start in range(0, n, chunk):
        z = cusum_process(panel.data[start : start + chunk], scale)
        out[start : start + chunk] = _objective(z, panel.grid)
    return out


def subject_sup_stats(panel: FunctionalPanel) -> NDArray[np.float64]:
    """Sup-CUSUM value of every subject."""
    return subject_objectives(panel).max(axis=1)


@dataclass(frozen=True)
class PeConfig:
    """High-criticism threshold settings.

    ``c_xi=None`` selects the data-driven constant: the square root of the
    leading long-run covariance eigenvalue carried by a fitted null law.
    """

    c_xi: float | None = None
    variant: Variant = "xi2"

    def __post_init__(self) -> None:
        if self.c_xi is not None and not self.c_xi > 0:
            raise ValueError(f"c_xi must be positive, got {self.c_xi}")
        if self.variant not in ("xi1", "xi2"):
            raise ValueError(f"unknown threshold variant {self.variant!r}")

    def resolve(self, null: NullSpec | None) -> float:
        if self.c_xi is not None:
            return self.c_xi
        if null is None:
            raise ValueError("data-driven c_xi requires a fitted NullSpec")
        return math.sqrt(null.eigenvalues[0])


def threshold(cfg: PeConfig, n: int, t: int, c_xi: float | None = None) -> float:
    """High-criticism threshold ``c * ln(a) * ln(ln(a))``.

    ``a`` is ``N * T`` for variant ``xi1`` and ``max(N, T)`` for ``xi2``.
    ``c_xi`` overrides ``cfg.c_xi`` (used when the constant is data-driven).
    """
    c = cfg.c_xi if c_xi is None else c_xi
    if c is None or not c > 0:
        raise ValueError("threshold needs a positive c_xi")
    arg = n * t if cfg.variant == "xi1" else max(n, t)
    if arg < 3:
        raise ValueError(f"ln ln({arg}) is not positive; need argument >= 3")
    la = math.log(arg)
    return c * la * math.log(la)


def pe_component(sups: ArrayLike, xi: float, n: int, t: int) -> float:
    """``sqrt(max(N, T))`` times the number of sups strictly above ``xi``."""
    if not xi > 0:
        raise ValueError(f"threshold must be positive, got {xi}")
    count = int(np.count_nonzero(np.asarray(sups, dtype=float) > xi))
    return count * math.sqrt(max(n, t))


@dataclass
class TestResult:
    """Outcome of a PE-CUSUM test on one panel."""

    __test__ = False  # keep pytest from collecting this class

    z_nt: float
    z_pe: float
    z_hat: float
    subject_sups: NDArray[np.float64]
    threshold: float
    c_xi: float
    variant: Variant
    p_value: float | None = None
    critical_values: dict[float, float] = field(default_factory=dict)

    def rejects(self, alpha: float) -> bool:
        return self.z_hat >= self.critical_values[alpha]

    def to_dict(self) -> dict:
        return {
            "z_nt": self.z_nt,
            "z_pe": self.z_pe,
            "z_hat": self.z_hat,
            "threshold": self.threshold,
            "c_xi": self.c_xi,
            "variant": self.variant,
            "p_value": self.p_value,
            "critical_values": {str(a): v for a, v in self.critical_values.items()},
            "n_exceedances": int(np.count_nonzero(self.subject_sups > self.threshold)),
            "subject_sups": self.subject_sups.tolist(),
        }


def pe_cusum_test(
    panel: FunctionalPanel,
    cfg: PeConfig,
    null: NullSpec | None = None,
    *,
    draws: NDArray[np.float64] | None = None,
    alphas: tuple[float, ...] = DEFAULT_ALPHAS,
    objectives: NDArray[np.float64] | None = None,
) -> TestResult:
    """Pooled CUSUM plus power enhancement, optionally with null-law p-value.

    Parameters
    ----------
    panel
        Data to test.
    cfg
        Threshold variant and constant.
    null
        Fitted null law. Required when ``cfg.c_xi`` is ``None``; when given,
        the p-value and critical values at ``alphas`` are filled in.
    draws
        Pre-simulated sorted null draws for ``null``; simulated on demand
        otherwise.
    objectives
        Precomputed :func:`subject_objectives` output, to avoid recomputing
        subject CUSUMs when several tests share a panel.
    """
    from . import nulldist

    if null is not None and not np.any(np.asarray(null.eigenvalues) > 0):
        raise ValueError("null specification carries no positive eigenvalue")
    n, t = panel.n_subjects, panel.n_times
    z_nt = cusum_statistic(pooled_cusum(panel))
    if objectives is None:
        objectives = subject_objectives(panel)
    sups = objectives.max(axis=1)
    c = cfg.resolve(null)
    xi = threshold(cfg, n, t, c_xi=c)
    z_pe = pe_component(sups, xi, n, t)
    result = TestResult(
        z_nt=z_nt,
        z_pe=z_pe,
        z_hat=z_nt + z_pe,
        subject_sups=sups,
        threshold=xi,
        c_xi=c,
        variant=cfg.variant,
    )
    if null is not None:
        if draws is None:
            draws = nulldist.simulate_null(null)
        result.p_value = nulldist.p_value(draws, result.z_hat)
        result.critical_values = {a: nulldist.critical_value(draws, a) for a in alphas}
    return result
