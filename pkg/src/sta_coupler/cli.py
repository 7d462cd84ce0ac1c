"""Command-line front end.

    sta-coupler propagate --delta0 1 --kappa0 1 --length 4 --mode sta-gauss --out trace.csv

Lengths on the command line are total device lengths ``2L`` in mm; rates are
in mm^-1.  Data go to ``--out`` (or stdout with ``--stdout``), a JSON
metadata record to ``<out stem>.meta.json``, progress to stderr.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from sta_coupler import __version__
from sta_coupler.errors import CouplerError, NotReached
from sta_coupler.experiments import (
    DEFAULT_MAX_HALF_LENGTH,
    DEFAULT_SCAN_STEP,
    DEFAULT_THRESHOLD,
    CdOverrides,
    CouplerMode,
    SweepGrid,
    counterdiabatic_for,
    efficiency_curve,
    efficiency_table,
    minimum_switch_length,
    mode_ordering_violations,
    power_trace,
    profile_report,
    profile_table,
    steps_for,
    sweep_kappa_length,
    sweep_table,
    trajectory_table,
)
from sta_coupler.profiles import BOUNDARY_SUPPRESSION, AllenEberlyScheme
from sta_coupler.propagation import ZGrid

log = logging.getLogger("sta_coupler")

EXPERIMENTS = ("profile", "propagate", "sweep", "efficiency", "minlength")
MULTI_MODE = ("sweep", "efficiency", "minlength")


class UsageError(Exception):
    """Invalid, unknown or missing parameter; maps to exit code 2."""


@dataclass
class RunConfig:
    experiment: str
    delta0: float = 1.0
    kappa0: float = 1.0
    length: float = 4.0
    mode: list[str] = field(default_factory=lambda: [CouplerMode.STA_GAUSS.value])
    cd_amplitude: float | None = None
    z0: float | None = None
    step: float | None = None
    threshold: float = DEFAULT_THRESHOLD
    samples: int = 401
    stride: int = 16
    representation: str = "density"
    kappa_min: float = 0.2
    kappa_max: float = 3.0
    kappa_points: int = 25
    length_min: float = 1.0
    length_max: float = 24.0
    length_points: int = 25
    lmax: float = 2 * DEFAULT_MAX_HALF_LENGTH
    scan_step: float = 2 * DEFAULT_SCAN_STEP
    out: str | None = None
    stdout: bool = False
    format: str = "csv"
    jobs: int = 1
    no_timestamp: bool = False

    @property
    def modes(self) -> list[CouplerMode]:
        return [CouplerMode(m) for m in self.mode]

    @property
    def overrides(self) -> CdOverrides:
        return CdOverrides(self.cd_amplitude, self.z0)

    def scheme(self) -> AllenEberlyScheme:
        return AllenEberlyScheme.from_total_length(self.delta0, self.kappa0, self.length)


CONFIG_KEYS = {f.name for f in dataclasses.fields(RunConfig)} - {"experiment"}
_POSITIVE = ("delta0", "kappa0", "length", "cd_amplitude", "z0", "step", "kappa_min", "kappa_max",
             "length_min", "length_max", "lmax", "scan_step")  # fmt: skip
_COUNTS = ("samples", "stride", "kappa_points", "length_points", "jobs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sta-coupler",
        description="Allen-Eberly directional coupler: adiabatic vs shortcut power transfer.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", metavar="{" + ",".join(EXPERIMENTS) + "}")

    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file of parameters; flags override it")
    common.add_argument("--delta0", type=float, help="mismatch amplitude, mm^-1 (default 1)")
    common.add_argument("--kappa0", type=float, help="coupling amplitude, mm^-1 (default 1)")
    common.add_argument("--length", type=float, help="total device length 2L, mm (default 4)")
    common.add_argument("--mode", action="append", choices=[m.value for m in CouplerMode],
                        help="coupler mode; repeatable for sweep/efficiency/minlength")
    common.add_argument("--cd-amplitude", type=float, help="Gaussian shortcut amplitude, mm^-1 (default kappa0)")
    common.add_argument("--z0", type=float, help="Gaussian shortcut width, mm (default L/sqrt(ln 1000))")
    common.add_argument("--step", type=float, help="maximum integrator step, mm (default 2L/4096)")
    common.add_argument("--threshold", type=float, help="switching threshold for minlength (default 0.99)")
    common.add_argument("--out", help="data file path")
    common.add_argument("--stdout", action="store_true", help="write data to standard output")
    common.add_argument("--format", choices=["csv", "tsv"], help="table format (default csv)")
    common.add_argument("--jobs", type=int, help="worker processes for sweeps (default 1)")
    common.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from metadata")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = sub.add_parser("profile", parents=[common], argument_default=argparse.SUPPRESS, help="field profiles across the device")
    p.add_argument("--samples", type=int, help="number of z samples (default 401)")

    p = sub.add_parser("propagate", parents=[common], argument_default=argparse.SUPPRESS, help="fractional power along z")
    p.add_argument("--stride", type=int, help="record every N-th step (default 16)")
    p.add_argument("--representation", choices=["density", "amplitudes"],
                   help="integrate the master equation or the amplitudes (default density)")

    p = sub.add_parser("sweep", parents=[common], argument_default=argparse.SUPPRESS, help="final transfer over kappa0 x 2L")
    for name, helptext in (
        ("--kappa-min", "lowest kappa0 (default 0.2)"),
        ("--kappa-max", "highest kappa0 (default 3)"),
        ("--length-min", "shortest 2L (default 1)"),
        ("--length-max", "longest 2L (default 24)"),
    ):
        p.add_argument(name, type=float, help=helptext)
    p.add_argument("--kappa-points", type=int, help="kappa0 grid points (default 25)")
    p.add_argument("--length-points", type=int, help="length grid points (default 25)")

    p = sub.add_parser("efficiency", parents=[common], argument_default=argparse.SUPPRESS, help="final transfer against 2L")
    p.add_argument("--length-min", type=float, help="shortest 2L (default 1)")
    p.add_argument("--length-max", type=float, help="longest 2L (default 24)")
    p.add_argument("--length-points", type=int, help="number of lengths (default 25)")

    p = sub.add_parser("minlength", parents=[common], argument_default=argparse.SUPPRESS, help="shortest 2L reaching the threshold")
    p.add_argument("--lmax", type=float, help="longest total length searched, mm (default 100)")
    p.add_argument("--scan-step", type=float, help="coarse scan increment in 2L, mm (default 0.1)")
    return parser


def _load_config_file(path: str) -> dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"config: cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config: {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config: top level must be an object")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - CONFIG_KEYS - {"experiment"})
    if unknown:
        raise UsageError(f"config: unknown key {unknown[0]!r}")
    return data


def _validate(cfg: RunConfig) -> None:
    for key in _POSITIVE:
        value = getattr(cfg, key)
        if value is None:
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise UsageError(f"{key} must be a number, got {value!r}")
        if not (math.isfinite(value) and value > 0):
            raise UsageError(f"{key} must be positive, got {value!r}")
    for key in _COUNTS:
        value = getattr(cfg, key)
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise UsageError(f"{key} must be a positive integer, got {value!r}")
    if cfg.samples < 2:
        raise UsageError("samples must be at least 2")
    if isinstance(cfg.threshold, bool) or not isinstance(cfg.threshold, (int, float)):
        raise UsageError(f"threshold must be a number, got {cfg.threshold!r}")
    if not 0 < cfg.threshold < 1:
        raise UsageError(f"threshold must lie in (0, 1), got {cfg.threshold!r}")
    if isinstance(cfg.mode, str):
        cfg.mode = [cfg.mode]
    valid_modes = {m.value for m in CouplerMode}
    for m in cfg.mode:
        if m not in valid_modes:
            raise UsageError(f"mode must be one of {sorted(valid_modes)}, got {m!r}")
    if len(set(cfg.mode)) != len(cfg.mode):
        raise UsageError("mode given more than once")
    if cfg.experiment not in MULTI_MODE and len(cfg.mode) != 1:
        raise UsageError(f"mode: {cfg.experiment} takes exactly one mode")
    if cfg.representation not in ("density", "amplitudes"):
        raise UsageError(f"representation must be density or amplitudes, got {cfg.representation!r}")
    if cfg.format not in ("csv", "tsv"):
        raise UsageError(f"format must be csv or tsv, got {cfg.format!r}")
    if cfg.experiment in ("sweep", "efficiency") and cfg.length_min >= cfg.length_max and cfg.length_points > 1:
        raise UsageError("length_min must be below length_max")
    if cfg.experiment == "sweep" and cfg.kappa_min >= cfg.kappa_max and cfg.kappa_points > 1:
        raise UsageError("kappa_min must be below kappa_max")
    if cfg.z0 is not None and cfg.experiment in ("profile", "propagate"):
        ratio = math.exp(-((cfg.length / 2 / cfg.z0) ** 2))
        if ratio > BOUNDARY_SUPPRESSION * (1 + 1e-9):
            raise UsageError(f"z0 too wide: kappa_a(+-L)/kappa_a(0) = {ratio:.3e} exceeds {BOUNDARY_SUPPRESSION:g}")


def parse_config(argv: Sequence[str]) -> RunConfig:
    """Resolve flags over config-file values over built-in defaults.

    Raises
    ------
    UsageError
        On unknown, invalid or missing parameters.
    """
    parser = build_parser()
    try:
        ns = parser.parse_args(list(argv))
    except SystemExit as exc:
        if exc.code == 0:
            raise
        raise UsageError("invalid command line (see usage above)") from None
    flags = vars(ns)
    flags.pop("verbose", None)
    experiment = flags.pop("experiment", None)
    values: dict[str, Any] = {}
    if "config" in flags:
        values.update(_load_config_file(flags.pop("config")))
    file_experiment = values.pop("experiment", None)
    experiment = experiment or file_experiment
    if experiment is None:
        raise UsageError(parser.format_usage().strip() + "\nan experiment subcommand is required")
    if file_experiment is not None and file_experiment != experiment:
        raise UsageError(f"experiment: config says {file_experiment!r} but command is {experiment!r}")
    values.update(flags)
    if experiment in ("sweep", "efficiency") and "mode" not in values:
        values["mode"] = [CouplerMode.ADIABATIC.value, CouplerMode.STA_GAUSS.value]
    cfg = RunConfig(experiment=experiment, **values)
    _validate(cfg)
    return cfg


def _metadata(cfg: RunConfig, extra: dict[str, Any]) -> dict[str, Any]:
    meta: dict[str, Any] = {
        "artifact": "sta_coupler",
        "version": __version__,
        "config": dataclasses.asdict(cfg),
        "units": {"length": "mm", "rate": "mm^-1"},
        "initial_amplitudes": [1.0, 0.0],
    }
    meta.update(extra)
    if not cfg.no_timestamp:
        meta["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    return meta


def _gauss_record(cfg: RunConfig, scheme: AllenEberlyScheme | None) -> dict[str, Any]:
    if CouplerMode.STA_GAUSS not in cfg.modes:
        return {}
    if scheme is None:
        return {
            "cd_amplitude_used": cfg.cd_amplitude if cfg.cd_amplitude is not None else "kappa0 per cell",
            "z0_used": cfg.z0 if cfg.z0 is not None else "L/sqrt(ln 1000) per cell",
        }
    spec = counterdiabatic_for(CouplerMode.STA_GAUSS, scheme, cfg.overrides)
    return {"cd_amplitude_used": spec.amplitude, "z0_used": spec.width}


def _step_record(cfg: RunConfig, scheme: AllenEberlyScheme | None) -> dict[str, Any]:
    if scheme is None:
        return {"step_rule": f"2L/n with n = {'4096' if cfg.step is None else f'ceil(2L/{cfg.step})'} per cell"}
    n = steps_for(scheme, cfg.step)
    return {"n_steps": n, "step_mm": scheme.total_length / n}


def _execute(cfg: RunConfig) -> tuple[str, dict[str, Any], int]:
    """Run the experiment; return table text, metadata extras and exit code."""
    modes = cfg.modes
    if cfg.experiment == "profile":
        scheme = cfg.scheme()
        spec = counterdiabatic_for(modes[0], scheme, cfg.overrides)
        table = profile_table(profile_report(scheme, spec, cfg.samples))
        return table, _gauss_record(cfg, scheme), 0

    if cfg.experiment == "propagate":
        scheme = cfg.scheme()
        grid = ZGrid.across(scheme, steps_for(scheme, cfg.step), cfg.stride)
        traj = power_trace(scheme, modes[0], grid, overrides=cfg.overrides, representation=cfg.representation)
        log.info("final fractional power P2(+L) = %.12f", traj.final_p2)
        extra = {
            **_step_record(cfg, scheme),
            **_gauss_record(cfg, scheme),
            "final_P2": traj.final_p2,
            "max_norm_or_trace_drift": traj.max_norm_drift,
            "max_purity_drift": traj.max_purity_drift,
        }
        return trajectory_table(traj), extra, 0

    if cfg.experiment == "sweep":
        grid = SweepGrid(
            np.linspace(cfg.kappa_min, cfg.kappa_max, cfg.kappa_points),
            np.linspace(cfg.length_min, cfg.length_max, cfg.length_points) / 2.0,
            cfg.delta0,
        )
        log.info("sweeping %d cells x %d modes", grid.kappa0_values.size * grid.half_lengths.size, len(modes))
        sweep_kappa_length(grid, modes, jobs=cfg.jobs, overrides=cfg.overrides, max_step=cfg.step)
        extra: dict[str, Any] = {**_step_record(cfg, None), **_gauss_record(cfg, None)}
        extra["missing_cells"] = {m.value: int(grid.missing[m].sum()) for m in grid.missing}
        if CouplerMode.ADIABATIC in grid.results and CouplerMode.STA_GAUSS in grid.results:
            violations = mode_ordering_violations(grid)
            extra["mode_ordering_violations"] = [
                dict(zip(("kappa0_per_mm", "two_L_mm", "transfer_adiabatic", "transfer_sta_gauss"), v))
                for v in violations
            ]
            if violations:
                log.warning("%d cells where sta-gauss trails adiabatic by more than 1e-3", len(violations))
        code = 1 if any(m.any() for m in grid.missing.values()) else 0
        return sweep_table(grid), extra, code

    if cfg.experiment == "efficiency":
        lengths = np.linspace(cfg.length_min, cfg.length_max, cfg.length_points)
        curves = efficiency_curve(
            cfg.delta0, cfg.kappa0, lengths, modes, jobs=cfg.jobs, overrides=cfg.overrides, max_step=cfg.step
        )
        extra = {**_step_record(cfg, None), **_gauss_record(cfg, None)}
        code = 1 if any(c.missing.any() for c in curves.values()) else 0
        return efficiency_table(curves), extra, code

    # minlength
    rows = []
    code = 0
    failures = {}
    for mode in modes:
        try:
            value = minimum_switch_length(
                cfg.delta0,
                cfg.kappa0,
                mode,
                cfg.threshold,
                max_half_length=cfg.lmax / 2.0,
                scan_step=cfg.scan_step / 2.0,
                overrides=cfg.overrides,
                max_step=cfg.step,
            )
        except NotReached as exc:
            log.error("%s", exc)
            failures[mode.value] = str(exc)
            value = None
            code = 1
        rows.append((mode.value, cfg.kappa0, cfg.threshold, value))
    extra = {**_step_record(cfg, None), **_gauss_record(cfg, None), "not_reached": failures}
    table = "mode,kappa0_per_mm,threshold,min_two_L_mm\n" + "".join(
        f"{m},{format(k, '.15g')},{format(t, '.15g')},{'missing' if v is None else format(v, '.15g')}\n"
        for m, k, t, v in rows
    )
    return table, extra, code


def _meta_path(out: Path) -> Path:
    return out.with_name(out.stem + ".meta.json")


def run(cfg: RunConfig) -> int:
    """Execute ``cfg`` and write its outputs; return the process exit code."""
    try:
        table, extra, code = _execute(cfg)
    except ValueError as exc:
        print(f"sta-coupler: usage error: {exc}", file=sys.stderr)
        return 2
    except CouplerError as exc:
        print(f"sta-coupler: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if cfg.format == "tsv":
        table = table.replace(",", "\t")
    meta = json.dumps(_metadata(cfg, extra), indent=2, sort_keys=True, default=str) + "\n"
    if cfg.stdout:
        sys.stdout.write(table)
    out = Path(cfg.out) if cfg.out else (None if cfg.stdout else Path(f"{cfg.experiment}.{cfg.format}"))
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(table, encoding="utf-8")
        _meta_path(out).write_text(meta, encoding="utf-8")
        log.info("wrote %s and %s", out, _meta_path(out))
    else:
        sys.stderr.write(meta)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(
        level=logging.INFO if ("-v" in argv or "--verbose" in argv) else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(f"sta-coupler: usage error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
