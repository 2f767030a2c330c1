"""Replicated Monte-Carlo experiments over the simulation design.

Every replication draws a panel, fits the null law, runs the CUSUM and both
PE-CUSUM variants, classifies subjects, and (for grouped designs) selects
the cluster count and pooled break times. Results come back as one flat
record per replication.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from . import nulldist
from .breaks import break_report, default_rho, fit_clusters
from .cusum import DEFAULT_ALPHAS, PeConfig, pe_cusum_test, subject_objectives
from .errors import PecusumError
from .simulate import (
    DgpConfig,
    metric_msd,
    metrics_clustering,
    metrics_tp_f1,
    realized_snr,
    simulate_replication,
)

__all__ = ["ExperimentOptions", "run_replication", "run_experiment", "summarize"]

log = logging.getLogger(__name__)

VARIANTS = ("xi1", "xi2")


@dataclass(frozen=True)
class ExperimentOptions:
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    n_draws: int = 5000
    bridge_grid: int = 1000
    bandwidth: int | str = "auto"
    kernel_name: str = "bartlett"
    coverage: float = 0.99
    residual_null: bool = False
    share_null: bool = False
    c_xi: float | None = None
    cluster: bool | None = None
    k_bar: int = 10
    rho: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))


def _alpha_key(a: float) -> str:
    return f"{a:g}"


def run_replication(
    cfg: DgpConfig,
    rep: int,
    opts: ExperimentOptions,
    shared_null: tuple[nulldist.NullSpec, np.ndarray] | None = None,
) -> dict:
    """Run the full pipeline on replication ``rep`` and return its record."""
    rng = np.random.default_rng([cfg.seed, rep])
    sim = simulate_replication(cfg, rng)
    panel, truth = sim.panel, sim.truth
    n, t = cfg.n, cfg.t
    rec: dict = {"rep": rep, "n": n, "t": t, "sdr": cfg.sdr, "snr": cfg.snr}

    if shared_null is None:
        null = nulldist.fit_null(
            panel,
            bandwidth=opts.bandwidth,
            kernel_name=opts.kernel_name,
            residuals=opts.residual_null,
            coverage=opts.coverage,
            bridge_grid=opts.bridge_grid,
            n_draws=opts.n_draws,
            seed=int(rng.integers(0, 2**63 - 1)),
        )
        draws = nulldist.simulate_null(null)
    else:
        null, draws = shared_null
    rec["lambda1"] = float(null.eigenvalues[0])
    rec["n_bridges"] = null.n_bridges

    objectives = subject_objectives(panel)
    results = {
        v: pe_cusum_test(
            panel, PeConfig(opts.c_xi, v), null, draws=draws, alphas=opts.alphas, objectives=objectives
        )
        for v in VARIANTS
    }
    z_nt = results["xi2"].z_nt
    rec["z_nt"] = z_nt
    for a in opts.alphas:
        crit = results["xi2"].critical_values[a]
        rec[f"crit_{_alpha_key(a)}"] = crit
        rec[f"reject_cusum_{_alpha_key(a)}"] = int(z_nt >= crit)

    do_cluster = opts.cluster if opts.cluster is not None else truth.clusters is not None
    true_set = truth.break_set
    for v, res in results.items():
        rec[f"threshold_{v}"] = res.threshold
        rec[f"z_pe_{v}"] = res.z_pe
        rec[f"z_hat_{v}"] = res.z_hat
        rec[f"p_value_{v}"] = res.p_value
        for a in opts.alphas:
            rec[f"reject_pe_{v}_{_alpha_key(a)}"] = int(res.rejects(a))
        report = break_report(panel, res.threshold, objectives)
        cls = metrics_tp_f1(report.with_breaks, true_set, n)
        for key, val in cls.items():
            rec[f"{key}_{v}"] = val
        if do_cluster:
            rec.update(_cluster_record(panel, report, truth, objectives, opts, v))

    if true_set:
        snr_map = realized_snr(truth, panel.grid, t)
        rec["snr_realized"] = float(np.mean(list(snr_map.values())))
        # simulation-side check of the long-run trace: T * ||mean error curve||^2
        # has expectation close to tr(Omega_i)
        w = panel.grid.weights
        signal = 0.0
        noise = 0.0
        for i in true_set:
            x = truth.tau[i] / t
            signal += x * (1 - x) * float(truth.delta[i] ** 2 @ w)
            ebar = sim.errors[i].mean(axis=0)
            noise += t * float(ebar**2 @ w)
        rec["snr_signal_sum"] = signal
        rec["snr_noise_sum"] = noise
        rec["snr_trace_sum"] = float(sum(truth.trace_omega[i] for i in true_set))
    return rec


def _cluster_record(panel, report, truth, objectives, opts, v) -> dict:
    out: dict = {}
    hit = report.with_breaks
    if not hit:
        out[f"khat_{v}"] = 0
        return out
    k_bar = min(opts.k_bar, len(hit))
    rho = opts.rho if opts.rho is not None else default_rho(panel.n_subjects, panel.n_times)
    model = fit_clusters(panel, report, k_bar, rho, objectives)
    out[f"khat_{v}"] = model.k
    if truth.clusters is None:
        return out
    true_groups = [m for _, m in truth.clusters]
    common = set(hit) & set(truth.break_set)
    if common:
        est = [tuple(i for i in m if i in common) for m in model.members]
        tru = [tuple(i for i in m if i in common) for m in true_groups]
        met = metrics_clustering([m for m in est if m], [m for m in tru if m])
        out[f"purity_{v}"] = met["purity"]
        out[f"nmi_{v}"] = met["nmi"]
        pre = [(report.tau_hat[i] - truth.tau[i]) ** 2 for i in common]
        out[f"msd_pre_{v}"] = float(np.mean(pre))
    if model.k == len(true_groups):
        true_b = [b for b, _ in truth.clusters]
        out[f"msd_post_{v}"] = metric_msd(model.pooled_b, true_b)
    return out


def run_experiment(
    cfg: DgpConfig,
    reps: int,
    opts: ExperimentOptions | None = None,
    progress: bool = False,
) -> list[dict]:
    """Run ``reps`` replications; failures are recorded with their message."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    opts = opts or ExperimentOptions()
    shared = None
    if opts.share_null:
        rng = np.random.default_rng([cfg.seed, reps, 0x5EED])
        panel = simulate_replication(cfg, rng).panel
        null = nulldist.fit_null(
            panel,
            bandwidth=opts.bandwidth,
            kernel_name=opts.kernel_name,
            residuals=opts.residual_null,
            coverage=opts.coverage,
            bridge_grid=opts.bridge_grid,
            n_draws=opts.n_draws,
            seed=cfg.seed,
        )
        shared = (null, nulldist.simulate_null(null))
    records = []
    for r in range(reps):
        try:
            rec = run_replication(cfg, r, opts, shared)
            rec["status"] = "ok"
            rec["error"] = ""
        except (PecusumError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("replication %d failed: %s", r, exc)
            rec = {"rep": r, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}
        records.append(rec)
        if progress:
            log.info("replication %d/%d done", r + 1, reps)
    return records


def _mean(records: Sequence[dict], key: str) -> float | None:
    vals = [r[key] for r in records if key in r and r[key] is not None and not _isnan(r[key])]
    return float(np.mean(vals)) if vals else None


def _isnan(v) -> bool:
    return isinstance(v, float) and math.isnan(v)


def summarize(records: Sequence[dict], cfg: DgpConfig, opts: ExperimentOptions | None = None) -> dict:
    """Aggregate records into rates keyed like the published result tables."""
    opts = opts or ExperimentOptions()
    ok = [r for r in records if r.get("status") == "ok"]
    base = {"snr": cfg.snr, "sdr": cfg.sdr, "n": cfg.n, "t": cfg.t}
    rows = []
    for a in opts.alphas:
        ak = _alpha_key(a)
        rows.append({**base, "test": "cusum", "alpha": a, "rejection": _mean(ok, f"reject_cusum_{ak}")})
        for v in VARIANTS:
            rows.append(
                {**base, "test": f"pe_cusum_{v}", "alpha": a, "rejection": _mean(ok, f"reject_pe_{v}_{ak}")}
            )
    per_variant = {}
    for v in VARIANTS:
        entry = {
            "tp_rate": _mean(ok, f"tp_rate_{v}"),
            "f1": _mean(ok, f"f1_{v}"),
        }
        khat = [r[f"khat_{v}"] for r in ok if f"khat_{v}" in r]
        if khat and cfg.k0_design is not None:
            k0 = len(cfg.k0_design)
            entry["p_khat_correct"] = float(np.mean([k == k0 for k in khat]))
            entry["purity"] = _mean(ok, f"purity_{v}")
            entry["nmi"] = _mean(ok, f"nmi_{v}")
            cond = [r for r in ok if r.get(f"khat_{v}") == k0]
            entry["msd_post"] = _mean(cond, f"msd_post_{v}")
            entry["msd_pre"] = _mean(cond, f"msd_pre_{v}")
        per_variant[v] = entry
    return {
        "schema_version": 1,
        "config": cfg.to_dict(),
        "replications": len(records),
        "failed": len(records) - len(ok),
        "rejection": rows,
        "estimation": per_variant,
    }
