"""Command-line front end for the Monte Carlo experiments.

Subcommands::

    bistatic-ducm static-bias  [--preset fig2]  [--config FILE] ...
    bistatic-ducm static-nees  [--preset fig3a|fig3b|fig3c|fig3d] ...
    bistatic-ducm track        [--preset fig4] ...
    bistatic-ducm bounds RUNS DOF [CONFIDENCE]

Config files are flat ``key = value`` text (no sections). Lists are comma
separated. Angles are given in degrees through keys ending in ``_deg``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import simulation as sim
from .conversion import METHODS
from .metrics import MetricsError, chi2_mean_bounds

logger = logging.getLogger(__name__)

OUT_ENV = "BISTATIC_DUCM_OUT"
CONFIDENCE = 0.99


class ConfigError(ValueError):
    pass


def _fmt(v) -> str:
    # repr-style formatting is locale independent.
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".10g")


def _floats(text: str) -> tuple[float, ...]:
    vals = tuple(float(t) for t in text.split(",") if t.strip())
    if not vals:
        raise ConfigError("empty list")
    return vals


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def read_config(path: str | os.PathLike) -> dict[str, str]:
    """Parse a flat ``key = value`` file into a dict of strings."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if parser.sections() != ["config"]:
        raise ConfigError(f"{path}: sections are not allowed")
    return dict(parser["config"])


def _check_keys(cfg: dict, allowed: set[str]) -> None:
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")


BIAS_KEYS = {"baseline", "b", "sigma_b", "sigma_alpha_deg", "bearings_deg", "runs", "bins", "seed"}


def bias_config(raw: dict[str, str], base: sim.StaticBiasConfig = sim.FIG2) -> sim.StaticBiasConfig:
    _check_keys(raw, BIAS_KEYS)
    kw = {}
    try:
        for key in ("baseline", "b", "sigma_b"):
            if key in raw:
                kw[key] = float(raw[key])
        if "sigma_alpha_deg" in raw:
            kw["sigma_alpha"] = float(np.radians(float(raw["sigma_alpha_deg"])))
        if "bearings_deg" in raw:
            kw["bearings"] = tuple(np.radians(_floats(raw["bearings_deg"])))
        for key in ("runs", "bins", "seed"):
            if key in raw:
                kw[key] = int(raw[key])
        return replace(base, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


NEES_KEYS = {
    "name", "sweep", "grid", "grid_deg", "b", "alpha_deg", "sigma_b", "sigma_alpha_deg",
    "baseline", "bisector", "runs", "seed",
}


def nees_config(raw: dict[str, str]) -> sim.StaticSweepConfig:
    """Build a sweep config. ``sweep`` is ``b``, ``sigma_b`` (grid in m, key
    ``grid``) or ``alpha``, ``sigma_alpha`` (grid in degrees, key ``grid_deg``)."""
    _check_keys(raw, NEES_KEYS)
    try:
        sweep = raw["sweep"].strip()
    except KeyError as exc:
        raise ConfigError("static-nees config needs 'sweep'") from exc
    angular = sweep in ("alpha", "sigma_alpha")
    grid_key = "grid_deg" if angular else "grid"
    if grid_key not in raw:
        raise ConfigError(f"sweep {sweep!r} needs key {grid_key!r}")
    try:
        grid = _floats(raw[grid_key])
        kw = {"sweep": sweep, "grid": tuple(np.radians(grid)) if angular else grid}
        for key in ("b", "sigma_b", "baseline"):
            if key in raw:
                kw[key] = float(raw[key])
        for key in ("alpha", "sigma_alpha"):
            if key + "_deg" in raw:
                kw[key] = float(np.radians(float(raw[key + "_deg"])))
        for key in ("runs", "seed"):
            if key in raw:
                kw[key] = int(raw[key])
        if "bisector" in raw:
            kw["bisector"] = _bool(raw["bisector"])
        kw["name"] = raw.get("name", sweep)
        return sim.StaticSweepConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


TRACK_KEYS = {
    "baseline", "sigma_b", "sigma_alpha_deg", "period", "scans", "runs", "start_x", "start_y",
    "speed", "heading_deg", "process_noise", "accel_variance", "seed",
}


def track_config(raw: dict[str, str], base: sim.ScenarioConfig = sim.FIG4) -> sim.ScenarioConfig:
    """``heading_deg = random`` (the default) draws a uniform heading per run."""
    _check_keys(raw, TRACK_KEYS)
    kw = {}
    try:
        for key in ("baseline", "sigma_b", "period", "speed", "accel_variance"):
            if key in raw:
                kw[key] = float(raw[key])
        for key in ("scans", "runs", "seed"):
            if key in raw:
                kw[key] = int(raw[key])
        if "sigma_alpha_deg" in raw:
            kw["sigma_alpha"] = float(np.radians(float(raw["sigma_alpha_deg"])))
        if "start_x" in raw or "start_y" in raw:
            kw["start"] = (
                float(raw.get("start_x", base.start[0])),
                float(raw.get("start_y", base.start[1])),
            )
        if "heading_deg" in raw:
            h = raw["heading_deg"].strip().lower()
            kw["heading"] = None if h == "random" else float(np.radians(float(h)))
        if "process_noise" in raw:
            kw["process_noise"] = _bool(raw["process_noise"])
        return replace(base, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


class _Outputs:
    """Tracks written files so a failed command can remove them."""

    def __init__(self, directory: Path):
        self.dir = directory
        self.written: list[Path] = []

    def write_csv(self, name: str, header: list[str], rows) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        self.written.append(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
        return path

    def rollback(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)


def cmd_static_bias(args, out: _Outputs) -> None:
    cfg = bias_config(read_config(args.config)) if args.config else sim.FIG2
    cfg = sim.with_runs(cfg, args.runs, args.seed)
    stats = sim.run_static_bias_campaign(cfg)
    rows = []
    for alpha in cfg.bearings:
        deg = float(np.degrees(alpha))
        for method in METHODS:
            e = stats.bias[method][float(alpha)]
            rows.append([deg, method, *e["mean"], *e["truth"], *e["se"], e["n"]])
        counts, xe, ye = stats.bias["conventional"][float(alpha)]["hist"]
        xc, yc = 0.5 * (xe[1:] + xe[:-1]), 0.5 * (ye[1:] + ye[:-1])
        out.write_csv(
            f"bias_hist_{_fmt(round(deg, 6))}.csv",
            ["bin_center_x", "bin_center_y", "count"],
            ([xc[i], yc[j], int(counts[i, j])] for i in range(len(xc)) for j in range(len(yc))),
        )
    out.write_csv(
        "bias_summary.csv",
        ["bearing_deg", "method", "mean_x", "mean_y", "truth_x", "truth_y", "se_x", "se_y", "n"],
        rows,
    )
    _log_events(stats.events)


FIG3_PRESETS = {f"fig3{k}": v for k, v in sim.FIG3.items()}


def _sweep_value_out(cfg: sim.StaticSweepConfig, v: float) -> float:
    return float(np.degrees(v)) if cfg.sweep in ("alpha", "sigma_alpha") else v


def cmd_static_nees(args, out: _Outputs) -> None:
    if args.config:
        configs = [nees_config(read_config(args.config))]
    elif args.preset:
        configs = [FIG3_PRESETS[args.preset]]
    else:
        configs = list(FIG3_PRESETS.values())
    for cfg in configs:
        cfg = sim.with_runs(cfg, args.runs, args.seed)
        stats = sim.run_static_nees_campaign(cfg, threads=args.threads)
        lo, hi = chi2_mean_bounds(cfg.runs, 2, CONFIDENCE)
        rows = [
            [_sweep_value_out(cfg, v), m, stats.static_nees[m][float(v)], lo, hi, cfg.runs]
            for v in cfg.grid
            for m in METHODS
        ]
        out.write_csv(
            f"nees_{cfg.name or cfg.sweep}.csv",
            ["swept_value", "method", "nees", "bound_low", "bound_high", "n"],
            rows,
        )
        _log_events(stats.events)


def cmd_track(args, out: _Outputs) -> None:
    cfg = track_config(read_config(args.config)) if args.config else sim.FIG4
    cfg = sim.with_runs(cfg, args.runs, args.seed)
    stats = sim.run_tracking_campaign(cfg, METHODS, threads=args.threads)
    lo, hi = chi2_mean_bounds(cfg.runs, 4, CONFIDENCE)
    scans = range(1, cfg.scans + 1)
    out.write_csv(
        "track_rmse.csv",
        ["scan", "method", "rmse_pos", "rmse_vel"],
        (
            [k, m, stats.scans[m].rmse_pos[k - 1], stats.scans[m].rmse_vel[k - 1]]
            for k in scans
            for m in METHODS
        ),
    )
    out.write_csv(
        "track_nees.csv",
        ["scan", "method", "nees", "bound_low", "bound_high"],
        ([k, m, stats.scans[m].mean_nees[k - 1], lo, hi] for k in scans for m in METHODS),
    )
    _log_events(stats.events)


def _log_events(events: dict) -> None:
    for k, v in sorted(events.items()):
        if v:
            logger.warning("%s events: %d", k, v)


PRESETS = {
    "static-bias": ("fig2",),
    "static-nees": tuple(FIG3_PRESETS),
    "track": ("fig4",),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bistatic-ducm", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, presets in PRESETS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--preset", choices=presets, help="published scenario parameters")
        p.add_argument("--seed", type=int)
        p.add_argument("--runs", type=int, help="override the Monte Carlo run count")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
        p.add_argument("--threads", type=int, default=1)
    b = sub.add_parser("bounds", help="chi-square bounds on a mean NEES")
    b.add_argument("runs", type=int)
    b.add_argument("dof", type=int)
    b.add_argument("confidence", type=float, nargs="?", default=CONFIDENCE)
    b.add_argument("--exact", action="store_true", help="invert the incomplete gamma function")
    return parser


COMMANDS = {"static-bias": cmd_static_bias, "static-nees": cmd_static_nees, "track": cmd_track}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "bounds":
        try:
            lo, hi = chi2_mean_bounds(
                args.runs, args.dof, args.confidence, "exact" if args.exact else "wilson-hilferty"
            )
        except MetricsError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"{lo:.4f} {hi:.4f}")
        return 0

    if args.config and args.preset:
        parser.error("--config and --preset are mutually exclusive")
    out_dir = Path(args.out or os.environ.get(OUT_ENV) or "results")
    out = _Outputs(out_dir)
    try:
        COMMANDS[args.command](args, out)
    except (ConfigError, OSError, ValueError) as exc:
        out.rollback()
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in out.written:
        logger.info("wrote %s", p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
