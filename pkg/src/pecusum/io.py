"""File formats: panel CSV layouts, CIDR transform, JSON/CSV reports, TOML config.

Two CSV layouts are accepted for panels:

``long``
    columns ``subject, time, gridpoint, value``; one row per grid value.
``wide``
    columns ``subject, time`` followed by one column per grid point.

Grid coordinates are taken from the ``gridpoint`` values (long) or the
value-column headers (wide) when they are numbers inside [0, 1]; otherwise a
uniform grid on [0, 1] is used. Subjects and times are ordered by their
labels (numerically when every label is a number).
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import CompletenessError, ParseError
from .panel import FunctionalPanel, Grid, make_grid, make_uniform_grid

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "PanelSource",
    "RunConfig",
    "load_panel",
    "save_panel",
    "cidr_transform",
    "dumps",
    "write_text_atomic",
    "write_records_csv",
    "read_records_csv",
    "load_toml",
]

Layout = Literal["long", "wide"]
LONG_COLUMNS = ("subject", "time", "gridpoint", "value")


@dataclass(frozen=True)
class PanelSource:
    path: Path
    layout: Layout | None = None
    grid: Grid | None = None


def _natural_order(labels: Iterable[str]) -> list[str]:
    uniq = list(dict.fromkeys(labels))
    try:
        return sorted(uniq, key=float)
    except ValueError:
        return sorted(uniq)


def _grid_from_labels(labels: Sequence[str]) -> tuple[Grid, list[str]]:
    """Grid and column order from grid-point labels."""
    try:
        vals = [float(s) for s in labels]
    except ValueError:
        return make_uniform_grid(len(labels)), list(labels)
    order = sorted(range(len(labels)), key=lambda k: vals[k])
    pts = np.array([vals[k] for k in order])
    if pts[0] >= 0.0 and pts[-1] <= 1.0 and np.all(np.diff(pts) > 0):
        return make_grid(pts), [labels[k] for k in order]
    return make_uniform_grid(len(labels)), [labels[k] for k in order]


def _detect_layout(header: Sequence[str]) -> Layout:
    cols = [h.strip().lower() for h in header]
    return "long" if tuple(cols) == LONG_COLUMNS else "wide"


def _float(text: str, row: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"row {row}: column {col!r} value {text!r} is not a number") from None
    if not math.isfinite(v):
        raise ParseError(f"row {row}: column {col!r} value {text!r} is not finite")
    return v


def load_panel(
    src: PanelSource | str | os.PathLike,
    layout: Layout | None = None,
    grid: Grid | None = None,
) -> FunctionalPanel:
    """Read a panel CSV in long or wide layout (auto-detected from the header)."""
    if not isinstance(src, PanelSource):
        src = PanelSource(Path(src), layout, grid)
    with open(src.path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{src.path} is empty") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    lay = src.layout or _detect_layout(header)
    if lay == "long":
        return _load_long(header, rows, src.grid)
    return _load_wide(header, rows, src.grid)


def _assemble(
    cells: dict[tuple[str, str], dict[str, float]],
    grid_labels: list[str],
    grid: Grid,
) -> FunctionalPanel:
    subjects = _natural_order(s for s, _ in cells)
    times = _natural_order(t for _, t in cells)
    missing = []
    data = np.empty((len(subjects), len(times), len(grid_labels)))
    for a, s in enumerate(subjects):
        for b, t in enumerate(times):
            curve = cells.get((s, t))
            for c, g in enumerate(grid_labels):
                if curve is None or g not in curve:
                    missing.append((s, t, g))
                else:
                    data[a, b, c] = curve[g]
    if missing:
        shown = ", ".join(f"(subject={s}, time={t}, gridpoint={g})" for s, t, g in missing[:10])
        raise CompletenessError(f"{len(missing)} missing cells; first: {shown}")
    return FunctionalPanel(data, grid, tuple(subjects), tuple(times))


def _load_long(header, rows, grid: Grid | None) -> FunctionalPanel:
    if len(header) < 4:
        raise ParseError("long layout needs columns subject, time, gridpoint, value")
    cells: dict[tuple[str, str], dict[str, float]] = {}
    gridpoints: dict[str, None] = {}
    for k, r in enumerate(rows, start=2):
        if len(r) < 4:
            raise ParseError(f"row {k}: expected 4 columns, got {len(r)}")
        s, t, g, v = (c.strip() for c in r[:4])
        cells.setdefault((s, t), {})[g] = _float(v, k, "value")
        gridpoints[g] = None
    inferred, labels = _grid_from_labels(list(gridpoints))
    return _assemble(cells, labels, grid or inferred)


def _load_wide(header, rows, grid: Grid | None) -> FunctionalPanel:
    if len(header) < 4:
        raise ParseError("wide layout needs subject, time and at least two value columns")
    value_cols = [h.strip() for h in header[2:]]
    cells: dict[tuple[str, str], dict[str, float]] = {}
    for k, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise ParseError(f"row {k}: expected {len(header)} columns, got {len(r)}")
        key = (r[0].strip(), r[1].strip())
        if key in cells:
            raise ParseError(f"row {k}: duplicate (subject, time) = {key}")
        cells[key] = {g: _float(v, k, g) for g, v in zip(value_cols, r[2:])}
    inferred, labels = _grid_from_labels(value_cols)
    return _assemble(cells, labels, grid or inferred)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_text_atomic(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_panel(panel: FunctionalPanel, path: str | os.PathLike, layout: Layout = "wide") -> None:
    """Write a panel CSV; values use 17 significant digits so reloads are exact."""
    subj = panel.subject_labels or tuple(str(i + 1) for i in range(panel.n_subjects))
    times = panel.time_labels or tuple(str(t + 1) for t in range(panel.n_times))
    gl = [_fmt(u) for u in panel.grid.points]
    lines = []
    if layout == "wide":
        lines.append(",".join(["subject", "time", *gl]))
        for a, s in enumerate(subj):
            for b, t in enumerate(times):
                lines.append(",".join([s, t, *(_fmt(v) for v in panel.data[a, b])]))
    elif layout == "long":
        lines.append(",".join(LONG_COLUMNS))
        for a, s in enumerate(subj):
            for b, t in enumerate(times):
                for c, g in enumerate(gl):
                    lines.append(f"{s},{t},{g},{_fmt(panel.data[a, b, c])}")
    else:
        raise ValueError(f"unknown layout {layout!r}")
    write_text_atomic(path, "\n".join(lines) + "\n")


def cidr_transform(prices: ArrayLike, drop_first: bool = False) -> NDArray[np.float64]:
    """Cumulative intraday returns ``100 * (ln P(u_j) - ln P(u_1))``.

    Works on any array whose last axis is the intraday grid. By default the
    first grid point is kept and is identically zero; ``drop_first`` removes
    it.
    """
    p = np.asarray(prices, dtype=float)
    bad = np.argwhere(~(p > 0))
    if bad.size:
        loc = tuple(int(v) for v in bad[0])
        raise ValueError(f"non-positive or missing price {p[loc]} at index {loc}")
    if drop_first and p.shape[-1] < 3:
        raise ValueError("dropping the first point needs at least 3 intraday prices")
    logp = np.log(p)
    out = 100.0 * (logp - logp[..., :1])
    out[..., 0] = 0.0
    return out[..., 1:] if drop_first else out


def _encode(obj: Any) -> str:
    if obj is None or obj is True or obj is False:
        return {None: "null", True: "true", False: "false"}[obj]
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return _fmt(v) if math.isfinite(v) else "null"
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    if isinstance(obj, Mapping):
        return "{" + ", ".join(f"{_encode(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj: Any) -> str:
    """JSON text with every float written to 17 significant digits.

    Non-finite floats become ``null``.
    """
    return _encode(obj)


def write_records_csv(records: Sequence[Mapping[str, Any]], path: str | os.PathLike) -> None:
    keys: dict[str, None] = {}
    for r in records:
        keys.update(dict.fromkeys(r))
    cols = list(keys)
    lines = [",".join(cols)]
    for r in records:
        cells = []
        for c in cols:
            v = r.get(c, "")
            if isinstance(v, (float, np.floating)):
                cells.append(_fmt(v) if math.isfinite(v) else "nan")
            elif v is None:
                cells.append("")
            else:
                s = str(v)
                cells.append('"' + s.replace('"', '""') + '"' if ("," in s or '"' in s) else s)
        lines.append(",".join(cells))
    write_text_atomic(path, "\n".join(lines) + "\n")


def read_records_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def load_toml(path: str | os.PathLike) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


@dataclass
class RunConfig:
    """Settings shared by the analysis commands; every field lands in reports."""

    variant: Literal["xi1", "xi2"] = "xi2"
    c_xi: float | None = None
    alphas: tuple[float, ...] = (0.01, 0.05, 0.10)
    n_draws: int = 5000
    bridge_grid: int = 1000
    bandwidth: int | str = "auto"
    kernel_name: str = "bartlett"
    coverage: float = 0.99
    residual_null: bool = False
    rho: float | None = None
    k_bar: int = 10
    seed: int = 0
    outputs: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.alphas = tuple(float(a) for a in self.alphas)
        if not all(0.0 < a < 1.0 for a in self.alphas):
            raise ValueError(f"alpha levels must lie in (0, 1), got {self.alphas}")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.c_xi is not None and not self.c_xi > 0:
            raise ValueError("c_xi must be positive")
        if self.variant not in ("xi1", "xi2"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.k_bar < 1:
            raise ValueError("k_bar must be >= 1")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown run settings: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
