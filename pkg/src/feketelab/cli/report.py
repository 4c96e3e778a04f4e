"""Reports, checks, plot data and file emission."""

from __future__ import annotations

import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class CheckFailed(RuntimeError):
    """Raised after a report with at least one failing check has been written."""

    def __init__(self, report):
        failed = [c.name for c in report.checks if not c.passed]
        super().__init__(f"{report.command}: failed checks {failed}")
        self.report = report


@dataclass
class Check:
    name: str
    value: float
    tolerance: float | list
    relation: str
    passed: bool

    def to_dict(self):
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance, "relation": self.relation,
                "pass": self.passed}


def check(name, value, tolerance, relation="<="):
    """Compare a measured value with its tolerance.

    ``relation`` is one of '<=', '>=' or 'in' (tolerance = [lo, hi]).
    """
    v = float(value)
    if relation == "<=":
        ok = v <= tolerance
    elif relation == ">=":
        ok = v >= tolerance
    elif relation == "in":
        ok = tolerance[0] <= v <= tolerance[1]
    else:
        raise ValueError(relation)
    return Check(name, v, tolerance, relation, bool(ok and not math.isnan(v)))


def flag(name, ok):
    """Boolean check (value 1 for true)."""
    return Check(name, 1.0 if ok else 0.0, 1.0, ">=", bool(ok))


@dataclass
class Plot:
    """Line or scatter data; written as CSV (x, y, series) and rendered as PNG."""

    name: str
    xlabel: str
    ylabel: str
    series: list = field(default_factory=list)
    kind: str = "line"
    logx: bool = False
    logy: bool = False
    hlines: dict = field(default_factory=dict)

    def add(self, label, x, y):
        self.series.append((label, np.asarray(x, float), np.asarray(y, float)))
        return self

    def csv(self):
        lines = ["x,y,series"]
        for label, x, y in self.series:
            lines += [f"{a:.17g},{b:.17g},{label}" for a, b in zip(x, y)]
        for label, y in sorted(self.hlines.items()):
            lines.append(f"nan,{y:.17g},{label}")
        return "\n".join(lines) + "\n"


@dataclass
class Report:
    command: str
    config: dict
    config_hash: str
    result: dict
    checks: list
    versions: dict

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {
            "command": self.command,
            "config": self.config,
            "config_hash": self.config_hash,
            "result": self.result,
            "checks": [c.to_dict() for c in self.checks],
            "passed": self.passed,
            "versions": self.versions,
        }

    def to_json(self):
        return dumps(self.to_dict())


def versions():
    import matplotlib
    import scipy

    from .. import __version__

    return {"feketelab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__, "python": platform.python_version()}


def plain(obj):
    """JSON-ready copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj):
    return json.dumps(plain(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def render(plot: Plot, path: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for label, x, y in plot.series:
        if plot.kind == "scatter":
            ax.scatter(x, y, s=8, label=label)
        else:
            ax.plot(x, y, marker="o", ms=3, label=label)
    for label, y in sorted(plot.hlines.items()):
        ax.axhline(y, ls="--", lw=0.8, color="gray", label=label)
    if plot.logx:
        ax.set_xscale("log")
    if plot.logy:
        ax.set_yscale("log")
    ax.set_xlabel(plot.xlabel)
    ax.set_ylabel(plot.ylabel)
    ax.set_title(plot.name)
    if len(plot.series) + len(plot.hlines) > 1:
        ax.legend(fontsize=7)
    fig.tight_layout()
    # no timestamps or version strings, so reruns give identical bytes
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)


def write_outputs(directory, report: Report, files: dict, plots: list, figures=True, wall_time=None):
    """Write report.json, extra files, plot-data CSVs and (optionally) PNG figures."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "report.json").write_text(report.to_json())
    for name, text in files.items():
        (d / name).write_text(text)
    if plots:
        (d / "plots").mkdir(exist_ok=True)
        for p in plots:
            (d / "plots" / f"{p.name}.csv").write_text(p.csv())
            if figures:
                render(p, d / "plots" / f"{p.name}.png")
    if wall_time is not None:
        (d / "timing.json").write_text(dumps({"wall_time_s": round(wall_time, 3)}))
