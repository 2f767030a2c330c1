"""Command-line front end.

Every command prints a JSON document (or writes files) and exits 0 on
success; failures print ``{"error": ..., "type": ...}`` to stderr and exit 2.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, nulldist
from .breaks import break_report, fit_clusters
from .cusum import PeConfig, pe_cusum_test, subject_objectives, threshold
from .errors import PecusumError
from .experiment import ExperimentOptions, run_experiment, summarize
from .io import (
    RunConfig,
    cidr_transform,
    dumps,
    load_panel,
    load_toml,
    save_panel,
    write_records_csv,
    write_text_atomic,
)
from .panel import FunctionalPanel, make_grid
from .simulate import DgpConfig

log = logging.getLogger("pecusum")

SCHEMA_VERSION = 1


def _run_config(args: argparse.Namespace) -> RunConfig:
    base = {}
    if getattr(args, "config", None):
        base = dict(load_toml(args.config).get("run", {}))
    overrides = {
        "variant": args.variant,
        "c_xi": args.c_xi,
        "alphas": tuple(args.alpha) if args.alpha else None,
        "n_draws": args.draws,
        "bridge_grid": args.bridge_grid,
        "bandwidth": args.bandwidth,
        "kernel_name": args.kernel,
        "residual_null": True if args.residual_null else None,
        "seed": args.seed,
    }
    for opt in ("rho", "kbar"):
        if hasattr(args, opt):
            overrides["k_bar" if opt == "kbar" else opt] = getattr(args, opt)
    base.update({k: v for k, v in overrides.items() if v is not None})
    if isinstance(base.get("bandwidth"), str) and base["bandwidth"] != "auto":
        base["bandwidth"] = int(base["bandwidth"])
    return RunConfig.from_dict(base)


def _fit(panel: FunctionalPanel, rc: RunConfig) -> tuple[nulldist.NullSpec, np.ndarray]:
    null = nulldist.fit_null(
        panel,
        bandwidth=rc.bandwidth,
        kernel_name=rc.kernel_name,
        residuals=rc.residual_null,
        coverage=rc.coverage,
        bridge_grid=rc.bridge_grid,
        n_draws=rc.n_draws,
        seed=rc.seed,
    )
    return null, nulldist.simulate_null(null)


def _emit(doc: dict, out: str | None) -> None:
    text = dumps({"schema_version": SCHEMA_VERSION, **doc})
    if out:
        write_text_atomic(out, text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _panel_meta(panel: FunctionalPanel) -> dict:
    return {"n_subjects": panel.n_subjects, "n_times": panel.n_times, "grid_size": len(panel.grid)}


def cmd_test(args: argparse.Namespace) -> None:
    rc = _run_config(args)
    panel = load_panel(args.data, args.layout)
    null, draws = _fit(panel, rc)
    res = pe_cusum_test(panel, PeConfig(rc.c_xi, rc.variant), null, draws=draws, alphas=rc.alphas)
    doc = {
        "command": "test",
        "panel": _panel_meta(panel),
        "config": rc.to_dict(),
        "result": res.to_dict(),
        "reject": {str(a): res.rejects(a) for a in rc.alphas},
        "null": {"lambda1": float(null.eigenvalues[0]), "n_bridges": null.n_bridges},
    }
    _emit(doc, args.out)


def _threshold(panel: FunctionalPanel, rc: RunConfig) -> tuple[float, float]:
    null = None
    if rc.c_xi is None:
        # the data-driven constant needs only the fitted spectrum, no draws
        null = nulldist.fit_null(
            panel,
            bandwidth=rc.bandwidth,
            kernel_name=rc.kernel_name,
            residuals=rc.residual_null,
            coverage=rc.coverage,
        )
    c = PeConfig(rc.c_xi, rc.variant).resolve(null)
    return threshold(PeConfig(c, rc.variant), panel.n_subjects, panel.n_times), c


def cmd_breaks(args: argparse.Namespace) -> None:
    rc = _run_config(args)
    panel = load_panel(args.data, args.layout)
    obj = subject_objectives(panel)
    xi, c = _threshold(panel, rc)
    report = break_report(panel, xi, obj)
    doc = {
        "command": "breaks",
        "panel": _panel_meta(panel),
        "config": rc.to_dict(),
        "c_xi": c,
        "report": report.to_dict(panel.subject_labels),
    }
    if panel.time_labels is not None:
        doc["tau_hat_labels"] = {
            str(i + 1): panel.time_labels[t - 1] for i, t in sorted(report.tau_hat.items())
        }
    _emit(doc, args.out)


def cmd_cluster(args: argparse.Namespace) -> None:
    rc = _run_config(args)
    panel = load_panel(args.data, args.layout)
    obj = subject_objectives(panel)
    xi, c = _threshold(panel, rc)
    report = break_report(panel, xi, obj)
    k_bar = min(rc.k_bar, len(report.with_breaks)) if report.with_breaks else rc.k_bar
    model = fit_clusters(panel, report, k_bar, rc.rho, obj)
    doc = {
        "command": "cluster",
        "panel": _panel_meta(panel),
        "config": rc.to_dict(),
        "c_xi": c,
        "report": report.to_dict(panel.subject_labels),
        "model": model.to_dict(),
    }
    if panel.time_labels is not None:
        doc["pooled_b_labels"] = [panel.time_labels[b - 1] for b in model.pooled_b]
    _emit(doc, args.out)


def cmd_null(args: argparse.Namespace) -> None:
    rc = _run_config(args)
    panel = load_panel(args.data, args.layout)
    null, draws = _fit(panel, rc)
    doc = {**null.to_dict(), "quantiles": nulldist.quantile_table(draws, rc.alphas)}
    doc.pop("schema_version")
    _emit({"command": "null", "config": rc.to_dict(), **doc}, args.out)


def cmd_cidr(args: argparse.Namespace) -> None:
    prices = load_panel(args.prices, args.layout)
    out = cidr_transform(prices.data, drop_first=args.drop_first)
    grid = prices.grid
    if args.drop_first:
        grid = make_grid(grid.points[1:])
    panel = FunctionalPanel(out, grid, prices.subject_labels, prices.time_labels)
    save_panel(panel, args.out, args.out_layout)


def cmd_simulate(args: argparse.Namespace) -> None:
    conf = load_toml(args.config) if args.config else {}
    dgp = dict(conf.get("dgp", {}))
    if args.seed is not None:
        dgp["seed"] = args.seed
    cfg = DgpConfig.from_dict(dgp)
    opts = ExperimentOptions(**conf.get("experiment", {}))
    records = run_experiment(cfg, args.reps, opts, progress=args.verbose)
    out = Path(args.out)
    write_records_csv(records, out / "replications.csv")
    summary = summarize(records, cfg, opts)
    summary["options"] = {
        k: (list(v) if isinstance(v, tuple) else v) for k, v in opts.__dict__.items()
    }
    write_text_atomic(out / "summary.json", dumps(summary) + "\n")
    sys.stdout.write(dumps({"schema_version": SCHEMA_VERSION, "command": "simulate",
                            "out": str(out), "replications": len(records),
                            "failed": summary["failed"]}) + "\n")


def _analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="panel CSV (long or wide layout)")
    p.add_argument("--layout", choices=["long", "wide"], default=None)
    p.add_argument("--config", help="TOML file with a [run] table")
    p.add_argument("--variant", choices=["xi1", "xi2"], default=None)
    p.add_argument("--c-xi", type=float, default=None, help="fixed threshold constant")
    p.add_argument("--alpha", type=float, action="append", help="repeatable")
    p.add_argument("--draws", type=int, default=None)
    p.add_argument("--bridge-grid", type=int, default=None)
    p.add_argument("--bandwidth", default=None, help="'auto' or an integer lag")
    p.add_argument("--kernel", choices=["bartlett", "flat_top"], default=None)
    p.add_argument("--residual-null", action="store_true",
                   help="estimate the null law from break-adjusted residuals")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="write JSON here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pecusum", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="PE-CUSUM test report")
    _analysis_flags(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("breaks", help="break-set classification and break times")
    _analysis_flags(p)
    p.set_defaults(func=cmd_breaks)

    p = sub.add_parser("cluster", help="latent break groups and pooled break times")
    _analysis_flags(p)
    p.add_argument("--kbar", type=int, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("null", help="fitted null law and its quantiles")
    _analysis_flags(p)
    p.set_defaults(func=cmd_null)

    p = sub.add_parser("cidr", help="cumulative intraday return curves from prices")
    p.add_argument("--prices", required=True)
    p.add_argument("--layout", choices=["long", "wide"], default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--out-layout", choices=["long", "wide"], default="wide")
    p.add_argument("--drop-first", action="store_true",
                   help="drop the identically-zero first intraday point")
    p.set_defaults(func=cmd_cidr)

    p = sub.add_parser("simulate", help="replicated Monte-Carlo experiment")
    p.add_argument("--config", help="TOML with [dgp] and [experiment] tables")
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except (PecusumError, ValueError, OSError, TypeError) as exc:
        sys.stderr.write(dumps({"error": str(exc), "type": type(exc).__name__}) + "\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
