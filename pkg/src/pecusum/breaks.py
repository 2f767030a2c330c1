"""Break-set classification, break-time estimation and latent-group clustering.

After a rejection, subjects whose sup-CUSUM reaches the high-criticism
threshold are taken to carry a break, located at the argmax of their CUSUM
objective. Estimated break times are clustered by cutting the sorted times
at their largest gaps; the number of clusters minimises a penalised
log-residual criterion. Within each cluster the common break is re-estimated
from the summed subject objectives.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .cusum import subject_objectives
from .errors import DegenerateSplitError, NothingToClusterError
from .panel import FunctionalPanel

__all__ = [
    "BreakReport",
    "ClusterModel",
    "GroupFit",
    "classify_subjects",
    "estimate_breakpoint",
    "break_report",
    "cluster_given_k",
    "group_parameters",
    "information_criterion",
    "default_rho",
    "select_k",
    "pooled_breakpoint",
    "fit_clusters",
    "step_residuals",
]

# V(K) at or below this fraction of the mean squared curve norm counts as an
# exact fit
_EXACT_FIT_RTOL = 1e-20


@dataclass(eq=False)
class BreakReport:
    with_breaks: tuple[int, ...]
    without_breaks: tuple[int, ...]
    tau_hat: dict[int, int]
    sup_stats: NDArray[np.float64]
    threshold: float

    def to_dict(self, labels: Sequence[str] | None = None) -> dict:
        """JSON-ready form with 1-based subject indices."""
        d = {
            "threshold": self.threshold,
            "with_breaks": [i + 1 for i in self.with_breaks],
            "without_breaks": [i + 1 for i in self.without_breaks],
            "tau_hat": {str(i + 1): int(t) for i, t in sorted(self.tau_hat.items())},
            "sup_stats": [float(v) for v in self.sup_stats],
        }
        if labels is not None:
            d["subject_labels"] = list(labels)
        return d


@dataclass(eq=False)
class ClusterModel:
    k: int
    members: list[tuple[int, ...]]
    group_tau: list[float]
    ic_values: dict[int, float]
    rho: float
    pooled_b: list[int] | None = None
    degenerate_k: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "members": [[i + 1 for i in m] for m in self.members],
            "group_tau": [float(v) for v in self.group_tau],
            "pooled_b": None if self.pooled_b is None else [int(b) for b in self.pooled_b],
            "ic_values": {
                str(k): (None if math.isinf(v) else float(v)) for k, v in self.ic_values.items()
            },
            "degenerate_k": list(self.degenerate_k),
            "rho": self.rho,
        }


def classify_subjects(sups: ArrayLike, xi: float) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split subjects into ``sup >= xi`` (break) and ``sup < xi`` (no break)."""
    if not xi > 0:
        raise ValueError(f"threshold must be positive, got {xi}")
    s = np.asarray(sups, dtype=float)
    hit = s >= xi
    return tuple(int(i) for i in np.flatnonzero(hit)), tuple(int(i) for i in np.flatnonzero(~hit))


def _argmax_time(objective: NDArray[np.float64]) -> int:
    # t = T is excluded (objective is zero there); np.argmax keeps the first maximiser
    return int(np.argmax(objective[..., :-1], axis=-1)) + 1


def estimate_breakpoint(
    panel: FunctionalPanel, i: int, objectives: NDArray[np.float64] | None = None
) -> int:
    """Break time in ``1..T-1`` maximising subject ``i``'s CUSUM objective."""
    if objectives is None:
        obj = subject_objectives(panel.subset([i]))[0]
    else:
        if not 0 <= i < panel.n_subjects:
            raise IndexError(f"subject index {i} out of range for N={panel.n_subjects}")
        obj = objectives[i]
    return _argmax_time(obj)


def break_report(
    panel: FunctionalPanel, xi: float, objectives: NDArray[np.float64] | None = None
) -> BreakReport:
    """Classify subjects and estimate break times for those with breaks."""
    if objectives is None:
        objectives = subject_objectives(panel)
    sups = objectives.max(axis=1)
    hit, miss = classify_subjects(sups, xi)
    tau_hat = {i: _argmax_time(objectives[i]) for i in hit}
    return BreakReport(hit, miss, tau_hat, sups, xi)


def cluster_given_k(tau_hat: Mapping[int, int], k: int, t_max: int) -> list[tuple[int, ...]]:
    """Cut the sorted break times at their ``k - 1`` largest gaps.

    Cut points are the right ends of the chosen gaps; equal gaps prefer the
    earlier one. Cluster ``j`` holds subjects with break time in
    ``[cut_{j-1}, cut_j)`` with ``cut_0 = 1`` and the last cluster closed at
    ``t_max``. A cluster can be empty when ``k`` exceeds the number of
    distinct break times.
    """
    n = len(tau_hat)
    if n < 1:
        raise NothingToClusterError("no break times to cluster")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    order = sorted(tau_hat, key=lambda i: (tau_hat[i], i))
    times = np.array([tau_hat[i] for i in order])
    gaps = np.diff(times)
    chosen = sorted(range(n - 1), key=lambda g: (-gaps[g], g))[: k - 1]
    cuts = sorted(int(times[g + 1]) for g in chosen)
    bounds = [1, *cuts, t_max]
    clusters: list[list[int]] = [[] for _ in range(k)]
    for i in order:
        t = tau_hat[i]
        for j in range(k):
            last = j == k - 1
            if bounds[j] <= t < bounds[j + 1] or (last and t >= bounds[j]):
                clusters[j].append(i)
                break
        else:  # break times below 1 only arise from malformed input
            clusters[0].append(i)
    return [tuple(c) for c in clusters]


@dataclass(eq=False)
class GroupFit:
    tau_bar: float
    split: int
    mu: NDArray[np.float64]
    delta: NDArray[np.float64]
    members: tuple[int, ...]


def group_parameters(
    panel: FunctionalPanel, cluster: Iterable[int], tau_hat: Mapping[int, int]
) -> GroupFit:
    """Group-average break time and per-subject pre-break mean and jump.

    The sample is split after ``floor(tau_bar)``.
    """
    members = tuple(cluster)
    if not members:
        raise ValueError("cluster is empty")
    tau_bar = float(np.mean([tau_hat[i] for i in members]))
    split = int(math.floor(tau_bar))
    t = panel.n_times
    if not 1 <= split <= t - 1:
        raise DegenerateSplitError(f"split index {split} outside 1..{t - 1}")
    x = panel.data[list(members)]
    mu = x[:, :split].mean(axis=1)
    post = x[:, split:].mean(axis=1)
    return GroupFit(tau_bar, split, mu, post - mu, members)


def _group_sse(panel: FunctionalPanel, fit: GroupFit) -> float:
    x = panel.data[list(fit.members)]
    pre = x[:, : fit.split] - fit.mu[:, None, :]
    post = x[:, fit.split :] - (fit.mu + fit.delta)[:, None, :]
    w = panel.grid.weights
    return float(np.sum((pre * pre) @ w) + np.sum((post * post) @ w))


def _fit_k(panel: FunctionalPanel, report: BreakReport, k: int):
    clusters = cluster_given_k(report.tau_hat, k, panel.n_times)
    fits = [group_parameters(panel, c, report.tau_hat) for c in clusters if c]
    sse = sum(_group_sse(panel, f) for f in fits)
    v = sse / (len(report.with_breaks) * panel.n_times)
    return clusters, fits, v


def _exact_fit_scale(panel: FunctionalPanel, report: BreakReport) -> float:
    x = panel.data[list(report.with_breaks)]
    return float(np.mean((x * x) @ panel.grid.weights))


def information_criterion(
    panel: FunctionalPanel, report: BreakReport, k: int, rho: float
) -> float:
    """``ln V(K) + K * rho`` for the ``K``-cluster fit.

    ``V(K)`` is the mean over break subjects and times of the squared
    residual norm about the fitted step means. An exact fit returns
    ``-inf``.
    """
    if not report.with_breaks:
        raise NothingToClusterError("no subject classified as carrying a break")
    _, _, v = _fit_k(panel, report, k)
    if v <= _EXACT_FIT_RTOL * _exact_fit_scale(panel, report):
        return -math.inf
    return math.log(v) + k * rho


def default_rho(n: int, t: int) -> float:
    """Penalty ``ln(max(N, T)) / sqrt(max(N, T))``."""
    a = max(n, t)
    return math.log(a) / math.sqrt(a)


def select_k(
    panel: FunctionalPanel,
    report: BreakReport,
    k_bar: int | None = None,
    rho: float | None = None,
) -> ClusterModel:
    """Pick the cluster count minimising the information criterion."""
    n_hit = len(report.with_breaks)
    if n_hit == 0:
        raise NothingToClusterError("no subject classified as carrying a break")
    if k_bar is None:
        k_bar = min(10, n_hit)
    if not 1 <= k_bar <= n_hit:
        raise ValueError(f"k_bar must be in [1, {n_hit}], got {k_bar}")
    if rho is None:
        rho = default_rho(panel.n_subjects, panel.n_times)
    if not rho > 0:
        raise ValueError("rho must be positive")
    scale = _exact_fit_scale(panel, report)
    ic: dict[int, float] = {}
    fitted = {}
    degenerate = []
    for k in range(1, k_bar + 1):
        clusters, fits, v = _fit_k(panel, report, k)
        fitted[k] = (clusters, fits)
        if v <= _EXACT_FIT_RTOL * scale:
            ic[k] = -math.inf
            degenerate.append(k)
        else:
            ic[k] = math.log(v) + k * rho
    best = min(ic, key=lambda k: (ic[k], k))
    clusters, fits = fitted[best]
    members = [c for c in clusters if c]
    return ClusterModel(
        k=len(members),
        members=members,
        group_tau=[f.tau_bar for f in fits],
        ic_values=ic,
        rho=rho,
        degenerate_k=degenerate,
    )


def pooled_breakpoint(
    panel: FunctionalPanel,
    cluster: Iterable[int],
    objectives: NDArray[np.float64] | None = None,
) -> int:
    """Common break time maximising the summed subject objectives of a cluster."""
    members = list(cluster)
    if not members:
        raise ValueError("cluster is empty")
    if objectives is None:
        obj = subject_objectives(panel.subset(members))
    else:
        obj = objectives[members]
    total = np.zeros(panel.n_times)
    for row in obj:
        total += row
    return _argmax_time(total)


def fit_clusters(
    panel: FunctionalPanel,
    report: BreakReport,
    k_bar: int | None = None,
    rho: float | None = None,
    objectives: NDArray[np.float64] | None = None,
) -> ClusterModel:
    """:func:`select_k` followed by pooled break estimation in every cluster."""
    model = select_k(panel, report, k_bar, rho)
    if objectives is None:
        objectives = subject_objectives(panel)
    model.pooled_b = [pooled_breakpoint(panel, m, objectives) for m in model.members]
    return model


def step_residuals(panel: FunctionalPanel) -> NDArray[np.float64]:
    """Panel data minus each subject's fitted single-break step mean."""
    obj = subject_objectives(panel)
    out = np.empty_like(panel.data)
    for i in range(panel.n_subjects):
        tau = _argmax_time(obj[i])
        x = panel.data[i]
        out[i, :tau] = x[:tau] - x[:tau].mean(axis=0)
        out[i, tau:] = x[tau:] - x[tau:].mean(axis=0)
    return out
