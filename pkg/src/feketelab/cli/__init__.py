"""Command line entry point.

Usage: ``feketelab <command> [--config path] [overrides]``. Exit codes: 0 when
every check passes, 2 for configuration errors, 3 when a check fails (the
report is written anyway).
"""

from __future__ import annotations

import argparse
import shutil
import sys
import time
import traceback
from pathlib import Path

from .commands import COMMANDS, Context, cmd_full
from .config import ConfigInvalid, ExperimentConfig, load_config, make_config
from .report import CheckFailed, Report, versions, write_outputs

__all__ = ["CheckFailed", "ConfigInvalid", "ExperimentConfig", "Report", "main", "make_config", "run"]

ALL_COMMANDS = tuple(COMMANDS) + ("full-report",)


def _swap_in(tmp: Path, final: Path):
    if final.exists():
        old = final.with_name(final.name + ".old")
        shutil.rmtree(old, ignore_errors=True)
        final.rename(old)
        tmp.rename(final)
        shutil.rmtree(old, ignore_errors=True)
    else:
        tmp.rename(final)


def run(command: str, cfg: ExperimentConfig, out=None) -> Report:
    """Run one command, write its outputs under ``out/<command>`` and return the report.

    Outputs are assembled in a scratch directory and moved into place only
    when complete. If the computation raises, the scratch directory is kept
    as ``<command>.stale`` with a STALE marker and the previous outputs stay
    untouched. Raises CheckFailed (after writing) when a check fails.
    """
    if command not in ALL_COMMANDS:
        raise ConfigInvalid(f"unknown command {command!r}")
    root = Path(out if out is not None else cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    final = root / command
    tmp = root / f".{command}.partial"
    stale = root / f"{command}.stale"
    shutil.rmtree(tmp, ignore_errors=True)
    tmp.mkdir()
    ctx = Context(cfg)
    meta = {"config": cfg.echo(), "config_hash": cfg.hash(), "versions": versions()}
    t0 = time.perf_counter()
    try:
        if command == "full-report":
            stage_reports = []

            def stage(name, result, checks, files, plots):
                rep = Report(f"{command}/{name}", meta["config"], meta["config_hash"], result, checks,
                             meta["versions"])
                write_outputs(tmp / name, rep, files, plots, cfg.figures)
                stage_reports.append(rep)

            result, checks, files, plots = cmd_full(ctx, stage)
            checks = [c for rep in stage_reports for c in rep.checks]
            result = {"summary": result, "stages": {r.command.split("/")[1]: r.passed for r in stage_reports}}
        else:
            result, checks, files, plots = COMMANDS[command](ctx)
        report = Report(command, meta["config"], meta["config_hash"], result, checks, meta["versions"])
        write_outputs(tmp, report, files, plots, cfg.figures, wall_time=time.perf_counter() - t0)
    except ConfigInvalid:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    except BaseException:
        shutil.rmtree(stale, ignore_errors=True)
        (tmp / "STALE").write_text("incomplete run; artifacts in this directory are not valid\n"
                                   + traceback.format_exc())
        tmp.rename(stale)
        raise
    shutil.rmtree(stale, ignore_errors=True)
    _swap_in(tmp, final)
    if not report.passed:
        raise CheckFailed(report)
    return report


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="feketelab", description="Fekete points, Bergman kernels and sampling arrays.")
    p.add_argument("command", choices=ALL_COMMANDS)
    p.add_argument("--config", help="JSON experiment configuration")
    p.add_argument("--weight", help="'fubini-study', 'perturbed' or a path to a weight JSON file")
    p.add_argument("--dimension", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--k-range", type=_ints, help="comma separated levels")
    p.add_argument("--seed", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--out")
    p.add_argument("--cache-dir", help="directory for cached Fekete solves")
    p.add_argument("--family", choices=["fekete", "perturbed-fekete", "spiral"])
    p.add_argument("--eps", type=float)
    p.add_argument("--sign", type=int)
    p.add_argument("--density-factor", type=float)
    p.add_argument("--density-normalization", choices=["k", "dimension"])
    p.add_argument("--density-min-k", type=int)
    p.add_argument("--R-grid", type=_floats, dest="R_grid", help="comma separated R values")
    p.add_argument("--quad-degree", type=int)
    p.add_argument("--radius", type=float, help="Landau ball radius (radians)")
    p.add_argument("--no-figures", action="store_true")
    return p


def _config_from_args(args) -> ExperimentConfig:
    import json

    base = load_config(args.config).data if args.config else {}
    data = {key: val for key, val in base.items()}
    for key in ("dimension", "k", "k_range", "seed", "restarts", "out", "cache_dir", "family", "eps", "sign",
                "density_factor", "density_normalization", "density_min_k", "R_grid", "quad_degree"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    if args.weight is not None:
        if args.weight in ("fubini-study", "perturbed"):
            data["weight"] = args.weight
        else:
            try:
                data["weight"] = json.loads(Path(args.weight).read_text())
            except (OSError, ValueError) as exc:
                raise ConfigInvalid(f"weight file {args.weight}: {exc}") from None
    if args.radius is not None:
        data["landau"] = {**data.get("landau", {}), "radius": args.radius}
    if args.no_figures:
        data["figures"] = False
    return make_config(data)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        report = run(args.command, cfg)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CheckFailed as exc:
        _summary(exc.report, cfg)
        return 3
    _summary(report, cfg)
    return 0


def _summary(report: Report, cfg):
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.6g} {c.relation} {c.tolerance}")
    print(f"{report.command}: {'ok' if report.passed else 'checks failed'} -> {Path(cfg.out) / report.command}")


if __name__ == "__main__":
    sys.exit(main())
