"""Monte-Carlo data generator and evaluation metrics.

Error curves are expansions in a randomly ordered Fourier system whose
coefficients are a banded VAR(1) across subjects plus independent noise with
variance ``1/j`` on coordinate ``j``. Breaks are injected along the leading
``m`` basis directions with magnitude calibrated to a target signal-to-noise
ratio.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import CalibrationError, ConditionalMetricUndefined
from .panel import FunctionalPanel, Grid, l2_norm_sq, make_uniform_grid

__all__ = [
    "DgpConfig",
    "GroundTruth",
    "Replication",
    "fourier_system",
    "fourier_basis",
    "draw_var_matrix",
    "gen_errors",
    "break_function",
    "long_run_traces",
    "calibrate_c_star",
    "simulate_replication",
    "gen_panel",
    "realized_snr",
    "metrics_tp_f1",
    "metrics_clustering",
    "metric_msd",
]

MAX_BASIS = 21
BURN_IN = 100
MAX_VAR_DRAWS = 100


@dataclass(frozen=True)
class DgpConfig:
    """Simulation design.

    ``k0_design`` lists break locations as fractions of ``t``; when set, the
    last ``floor(sdr * n)`` subjects carry breaks and are split into
    contiguous, near-equal groups, one per location. Otherwise break subjects
    are drawn at random and break times uniformly from ``break_window``.
    Setting ``var_coef_range=(0, 0)`` switches the VAR part to white noise.
    """

    n: int = 200
    t: int = 200
    grid_size: int = 101
    j_basis: int = 21
    var_band: int = 3
    var_coef_range: tuple[float, float] = (-0.3, 0.3)
    sdr: float = 0.0
    snr: float = 0.1
    m: int = 1
    break_window: tuple[float, float] = (0.25, 0.75)
    seed: int = 0
    k0_design: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        for name in ("var_coef_range", "break_window"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.k0_design is not None:
            object.__setattr__(self, "k0_design", tuple(float(v) for v in self.k0_design))
        if self.n < 1 or self.t < 2:
            raise ValueError("need n >= 1 and t >= 2")
        if not 0.0 <= self.sdr <= 1.0:
            raise ValueError(f"sdr must lie in [0, 1], got {self.sdr}")
        if self.snr < 0:
            raise ValueError(f"snr must be non-negative, got {self.snr}")
        if not 1 <= self.j_basis <= MAX_BASIS:
            raise ValueError(f"j_basis must be in [1, {MAX_BASIS}]")
        if not 1 <= self.m <= self.j_basis:
            raise ValueError(f"m must be in [1, j_basis={self.j_basis}]")
        lo, hi = self.break_window
        if not 0.0 < lo <= hi < 1.0:
            raise ValueError("break_window fractions must satisfy 0 < lo <= hi < 1")
        if self.k0_design is not None and not all(0.0 < f < 1.0 for f in self.k0_design):
            raise ValueError("k0_design fractions must lie strictly inside (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> DgpConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown DGP fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["var_coef_range"] = list(self.var_coef_range)
        d["break_window"] = list(self.break_window)
        if self.k0_design is not None:
            d["k0_design"] = list(self.k0_design)
        return d


@dataclass(eq=False)
class GroundTruth:
    break_set: tuple[int, ...]
    tau: dict[int, int]
    delta: dict[int, NDArray[np.float64]]
    clusters: list[tuple[int, tuple[int, ...]]] | None = None
    basis_order: tuple[int, ...] = ()
    c_star: dict[int, float] = field(default_factory=dict)
    trace_omega: NDArray[np.float64] | None = None


@dataclass(eq=False)
class Replication:
    """Everything one draw of the design produces."""

    panel: FunctionalPanel
    truth: GroundTruth
    errors: NDArray[np.float64]
    a_matrix: NDArray[np.float64]
    basis: NDArray[np.float64]


def fourier_system(grid: Grid) -> NDArray[np.float64]:
    """The 21 orthonormal Fourier functions on [0, 1], evaluated on ``grid``.

    Order: constant, then ``sqrt(2) cos(2 pi k u)``, ``sqrt(2) sin(2 pi k u)``
    for ``k = 1..10``.
    """
    u = grid.points
    rows = [np.ones_like(u)]
    for k in range(1, (MAX_BASIS - 1) // 2 + 1):
        rows.append(math.sqrt(2.0) * np.cos(2 * math.pi * k * u))
        rows.append(math.sqrt(2.0) * np.sin(2 * math.pi * k * u))
    return np.vstack(rows)


def fourier_basis(
    j_basis: int, grid: Grid, rng: np.random.Generator | None = None
) -> tuple[NDArray[np.float64], tuple[int, ...]]:
    """``j_basis`` Fourier functions sampled without replacement.

    Returns the ``(j_basis, G)`` evaluations and the indices drawn from the
    standard ordering. Without ``rng`` the standard order is kept.
    """
    if not 1 <= j_basis <= MAX_BASIS:
        raise ValueError(f"j_basis must be in [1, {MAX_BASIS}], got {j_basis}")
    order = np.arange(MAX_BASIS) if rng is None else rng.permutation(MAX_BASIS)
    order = order[:j_basis]
    return fourier_system(grid)[order], tuple(int(k) for k in order)


def draw_var_matrix(
    n: int,
    band: int,
    coef_range: tuple[float, float],
    rng: np.random.Generator,
    max_draws: int = MAX_VAR_DRAWS,
) -> NDArray[np.float64]:
    """Banded transition matrix with uniform entries, redrawn until stable."""
    lo, hi = coef_range
    i, j = np.indices((n, n))
    mask = np.abs(i - j) <= band
    for _ in range(max_draws):
        a = np.where(mask, rng.uniform(lo, hi, size=(n, n)), 0.0)
        if n == 0 or np.max(np.abs(np.linalg.eigvals(a))) < 1.0:
            return a
    raise CalibrationError(f"no stable VAR matrix in {max_draws} draws")


def gen_errors(
    cfg: DgpConfig,
    rng: np.random.Generator,
    a_matrix: NDArray[np.float64] | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Error basis coefficients ``(N, T, J)`` and the transition matrix used.

    Coordinate ``j`` (1-based) is ``beta_j + eta_j`` with ``beta_j`` the VAR(1)
    across subjects (identity innovation covariance, burn-in from zero) and
    ``eta_j ~ N(0, 1/j)``. Coordinates are independent of each other.
    """
    n, t, jb = cfg.n, cfg.t, cfg.j_basis
    if a_matrix is None:
        a_matrix = draw_var_matrix(n, cfg.var_band, cfg.var_coef_range, rng)
    beta = np.zeros((n, jb))
    coefs = np.empty((n, t, jb))
    a_zero = not np.any(a_matrix)
    for step in range(BURN_IN + t):
        shock = rng.standard_normal((n, jb))
        beta = shock if a_zero else a_matrix @ beta + shock
        if step >= BURN_IN:
            coefs[:, step - BURN_IN, :] = beta
    eta_sd = 1.0 / np.sqrt(np.arange(1, jb + 1))
    coefs += rng.standard_normal((n, t, jb)) * eta_sd
    return coefs, a_matrix


def break_function(m: int, c_star: float, basis: NDArray[np.float64]) -> NDArray[np.float64]:
    """``sqrt(c_star / m)`` times the sum of the first ``m`` basis curves."""
    if not 1 <= m <= basis.shape[0]:
        raise ValueError(f"m must be in [1, {basis.shape[0]}], got {m}")
    if c_star < 0:
        raise ValueError("c_star must be non-negative")
    return math.sqrt(c_star) * basis[:m].sum(axis=0) / math.sqrt(m)


def long_run_traces(a_matrix: NDArray[np.float64], j_basis: int) -> NDArray[np.float64]:
    """Trace of each subject's long-run covariance of the error coefficients.

    ``j_basis * [(I - A)^-1 (I - A')^-1]_ii`` from the VAR part plus the
    harmonic sum ``sum_j 1/j`` from the independent noise.
    """
    n = a_matrix.shape[0]
    try:
        inv = np.linalg.inv(np.eye(n) - a_matrix)
    except np.linalg.LinAlgError as exc:
        raise CalibrationError("I - A is singular") from exc
    diag = np.einsum("ik,ik->i", inv, inv)
    harmonic = float(np.sum(1.0 / np.arange(1, j_basis + 1)))
    return j_basis * diag + harmonic


def calibrate_c_star(
    snr: float,
    tau_i: int,
    t: int,
    a_matrix: NDArray[np.float64],
    i: int,
    j_basis: int,
    traces: NDArray[np.float64] | None = None,
) -> float:
    """Break scale ``c*`` giving subject ``i`` the requested SNR."""
    if not 0 < tau_i < t:
        raise ValueError(f"break time must lie strictly inside (0, {t}), got {tau_i}")
    if traces is None:
        traces = long_run_traces(a_matrix, j_basis)
    x = tau_i / t
    return snr * float(traces[i]) / (x * (1.0 - x))


def _break_layout(
    cfg: DgpConfig, rng: np.random.Generator
) -> tuple[NDArray[np.int64], dict[int, int], list[tuple[int, tuple[int, ...]]] | None]:
    n_break = int(math.floor(cfg.sdr * cfg.n + 1e-9))
    if cfg.k0_design is None:
        subjects = np.sort(rng.choice(cfg.n, size=n_break, replace=False))
        lo = math.ceil(cfg.break_window[0] * cfg.t)
        hi = math.floor(cfg.break_window[1] * cfg.t)
        times = rng.integers(lo, hi + 1, size=n_break)
        return subjects, {int(i): int(s) for i, s in zip(subjects, times)}, None
    subjects = np.arange(cfg.n - n_break, cfg.n)
    groups = np.array_split(subjects, len(cfg.k0_design))
    tau: dict[int, int] = {}
    clusters = []
    for frac, members in zip(cfg.k0_design, groups):
        b = int(round(frac * cfg.t))
        b = min(max(b, 1), cfg.t - 1)
        tau.update({int(i): b for i in members})
        clusters.append((b, tuple(int(i) for i in members)))
    return subjects, tau, clusters


def simulate_replication(cfg: DgpConfig, rng: np.random.Generator | int | None = None) -> Replication:
    """One panel from the design together with its errors and ground truth."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(cfg.seed if rng is None else rng)
    grid = make_uniform_grid(cfg.grid_size)
    basis, order = fourier_basis(cfg.j_basis, grid, rng)
    coefs, a = gen_errors(cfg, rng)
    errors = coefs @ basis
    del coefs
    subjects, tau, clusters = _break_layout(cfg, rng)
    traces = long_run_traces(a, cfg.j_basis)
    data = errors.copy()
    delta: dict[int, NDArray[np.float64]] = {}
    c_stars: dict[int, float] = {}
    for i in subjects:
        i = int(i)
        c = calibrate_c_star(cfg.snr, tau[i], cfg.t, a, i, cfg.j_basis, traces)
        d = break_function(cfg.m, c, basis)
        delta[i] = d
        c_stars[i] = c
        data[i, tau[i] :, :] = errors[i, tau[i] :, :] + d
    truth = GroundTruth(
        break_set=tuple(int(i) for i in subjects),
        tau=tau,
        delta=delta,
        clusters=clusters,
        basis_order=order,
        c_star=c_stars,
        trace_omega=traces,
    )
    panel = FunctionalPanel(data, grid)
    return Replication(panel, truth, errors, a, basis)


def gen_panel(cfg: DgpConfig, rng: np.random.Generator | int | None = None) -> tuple[FunctionalPanel, GroundTruth]:
    rep = simulate_replication(cfg, rng)
    return rep.panel, rep.truth


def realized_snr(
    truth: GroundTruth, grid: Grid, t: int, traces: ArrayLike | None = None
) -> dict[int, float]:
    """Per-subject SNR computed back from the injected break curves."""
    tr = truth.trace_omega if traces is None else np.asarray(traces, dtype=float)
    out = {}
    for i in truth.break_set:
        x = truth.tau[i] / t
        out[i] = x * (1 - x) * l2_norm_sq(truth.delta[i], grid) / float(tr[i])
    return out


def metrics_tp_f1(estimated: Iterable[int], truth: Iterable[int], n: int) -> dict[str, float]:
    """Classification accuracy and F1 of the estimated break set.

    ``tp_rate`` is the share of the ``n`` subjects classified correctly
    (break or no break). F1 is 1 when both sets are empty.
    """
    est, tru = set(estimated), set(truth)
    tp = len(est & tru)
    fp = len(est - tru)
    fn = len(tru - est)
    tn = n - tp - fp - fn
    denom = tp + (fp + fn) / 2
    f1 = 1.0 if denom == 0 else tp / denom
    return {"tp_rate": (tp + tn) / n, "f1": f1, "tp": tp, "fp": fp, "fn": fn}


def _labels(partition: Sequence[Iterable[int]]) -> dict[int, int]:
    lab: dict[int, int] = {}
    for k, members in enumerate(partition):
        for i in members:
            if i in lab:
                raise ValueError(f"subject {i} appears in two clusters")
            lab[i] = k
    return lab


def metrics_clustering(
    estimated: Sequence[Iterable[int]],
    truth: Sequence[Iterable[int]],
    n: int | None = None,
) -> dict[str, float]:
    """Purity and normalised mutual information (base-2 logs).

    Both partitions must cover the same subject set; ``n`` defaults to its
    size.
    """
    est, tru = _labels(estimated), _labels(truth)
    if not est or not tru:
        raise ValueError("partitions must be non-empty")
    if set(est) != set(tru):
        raise ValueError("partitions do not cover the same subjects")
    n = len(est) if n is None else n
    ke = max(est.values()) + 1
    kt = max(tru.values()) + 1
    table = np.zeros((ke, kt))
    for i, k in est.items():
        table[k, tru[i]] += 1
    purity = float(table.max(axis=1).sum() / n)
    p = table / n
    pe = p.sum(axis=1)
    pt = p.sum(axis=0)
    nz = p > 0
    mi = float(np.sum(p[nz] * np.log2(p[nz] / np.outer(pe, pt)[nz])))
    he = -float(np.sum(pe[pe > 0] * np.log2(pe[pe > 0])))
    ht = -float(np.sum(pt[pt > 0] * np.log2(pt[pt > 0])))
    if he + ht == 0:
        nmi = 1.0
    else:
        nmi = 2.0 * mi / (he + ht)
    return {"purity": purity, "nmi": min(max(nmi, 0.0), 1.0)}


def metric_msd(estimated: ArrayLike, truth: ArrayLike) -> float:
    """Mean squared distance between matched break locations."""
    e = np.asarray(estimated, dtype=float)
    t = np.asarray(truth, dtype=float)
    if e.shape != t.shape:
        raise ConditionalMetricUndefined(
            f"{e.size} estimated groups vs {t.size} true groups"
        )
    if e.size == 0:
        raise ConditionalMetricUndefined("no groups to compare")
    return float(np.mean((e - t) ** 2))
