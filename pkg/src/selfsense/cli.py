"""Command-line front end.

Exit codes:
    0  success
    1  scenario failure (including failed selftest checks)
    2  usage or configuration error
    3  output directory or file I/O error
    4  touchdown (rotor reached the stator bore)
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, dump_config, load_config
from .selftest import run_checks
from .signal_chain import CalibrationError
from .sim import (
    Config,
    calibrate,
    format_summary,
    run_closed_loop,
    run_static_sweep,
    with_calibration,
    write_trace_csv,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO, EXIT_TOUCHDOWN = 0, 1, 2, 3, 4
SEED_ENV = "SELFSENSE_SEED"


class OutputError(OSError):
    pass


def _common(p: argparse.ArgumentParser, needs_out: bool = True) -> None:
    p.add_argument("-c", "--config", action="append", default=[], metavar="PATH",
                   help="INI file layered over the defaults (repeatable)")
    p.add_argument("-o", "--out", required=needs_out, type=Path, metavar="DIR",
                   help="output directory")
    p.add_argument("--seed", type=int, help=f"RNG seed (fallback: ${SEED_ENV}, then config)")
    p.add_argument("-s", "--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   dest="overrides", help="override one config value (repeatable)")
    p.add_argument("--force", action="store_true", help="write into an existing output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selfsense",
        description="Self-sensing bearingless motor simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="static position sweep of the demodulator outputs")
    _common(p)
    p.add_argument("--axis", choices=("x", "y"), default="x")

    p = sub.add_parser("levitate", help="closed-loop levitation from the initial offset")
    _common(p)
    p.add_argument("--feedback", choices=("estimated", "true"))
    p.add_argument("--open-loop", action="store_true",
                   help="controllers off (open_loop_injection scenario)")

    p = sub.add_parser("disturb", help="closed-loop disturbance rejection")
    _common(p)
    p.add_argument("--feedback", choices=("estimated", "true"))

    p = sub.add_parser("calibrate", help="fit estimator gain/offset from x and y sweeps")
    _common(p)

    p = sub.add_parser("selftest", help="run the built-in invariant checks")
    _common(p, needs_out=False)
    return parser


def resolve_seed(cli_seed: int | None, env=os.environ) -> int | None:
    if cli_seed is not None:
        return cli_seed
    raw = env.get(SEED_ENV)
    if raw:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError([f"{SEED_ENV}={raw!r} is not an integer"]) from None
    return None


def _config_for(args) -> Config:
    overrides = list(args.overrides)
    seed = resolve_seed(args.seed)
    if seed is not None:
        overrides.append(f"scenario.seed={seed}")
    kind = {
        "sweep": "static_sweep",
        "calibrate": "static_sweep",
        "disturb": "disturbance_rejection",
        "levitate": "open_loop_injection" if getattr(args, "open_loop", False)
        else "closed_loop_levitation",
    }.get(args.command)
    if kind:
        overrides.append(f"scenario.kind={kind}")
    if getattr(args, "feedback", None):
        overrides.append(f"scenario.feedback={args.feedback}")
    return load_config(args.config, overrides)


def _prepare_out(out: Path, force: bool) -> None:
    if out.exists():
        if not out.is_dir():
            raise OutputError(f"{out} exists and is not a directory")
        if any(out.iterdir()) and not force:
            raise OutputError(f"{out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text)


def _write_trace(out: Path, trace) -> None:
    with open(out / "trace.csv", "w", newline="") as fh:
        write_trace_csv(trace, fh)


def _write_sweep(out: Path, points, axis: str) -> None:
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{axis}_true", "x_hat_raw", "y_hat_raw"])
        for pt in points:
            w.writerow([f"{pt.position:.9g}", f"{pt.x_hat_raw:.9g}", f"{pt.y_hat_raw:.9g}"])


def sweep_summary(result, cfg: Config) -> dict:
    table = result.table()
    d, on, off = table[:, 0], table[:, 1 if result.axis == "x" else 2], table[:, 2 if result.axis == "x" else 1]
    span = float(on.max() - on.min())
    steps = np.diff(on)
    monotonic = bool(np.all(steps > 0) or np.all(steps < 0))
    # linear interpolation of the zero crossing
    k = int(np.argmin(np.abs(on)))
    if 0 < k < len(d) and np.sign(on[k - 1]) != np.sign(on[k]):
        k0 = k - 1
    else:
        k0 = min(k, len(d) - 2)
    zero = float(d[k0] - on[k0] * (d[k0 + 1] - d[k0]) / (on[k0 + 1] - on[k0]))
    odd = []
    for i, di in enumerate(d):
        j = int(np.argmin(np.abs(d + di)))
        if di > 0 and abs(d[j] + di) < 1e-12 * cfg.motor.nominal_gap_g0 + 1e-15:
            odd.append(abs(on[i] + on[j]) / max(abs(on[i]), 1e-300))
    cal = calibrate(zip(d, on))
    return {
        "kind": "static_sweep",
        "axis": result.axis,
        "points": len(d),
        "monotonic": monotonic,
        "on_axis_span": span,
        "zero_crossing": zero,
        "odd_symmetry_error": max(odd) if odd else float("nan"),
        "cross_axis_ratio": float(np.abs(off).max() / span) if span else float("nan"),
        "sensitivity": 1.0 / cal.gain,
        "fit_gain": cal.gain,
        "fit_offset": cal.offset,
        "fit_residual_rms": cal.residual_rms,
    }


def dispatch(args) -> int:
    if args.command == "selftest":
        cfg = _config_for(args)
        results = run_checks(cfg, seed=cfg.scenario.seed)
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        failed = sum(not ok for _, ok, _ in results)
        print(f"{len(results) - failed}/{len(results)} checks passed")
        return EXIT_OK if not failed else EXIT_FAIL

    cfg = _config_for(args)
    out: Path = args.out
    _prepare_out(out, args.force)
    _write(out, "config.ini", dump_config(cfg))

    if args.command == "sweep":
        result = run_static_sweep(cfg, args.axis)
        _write_sweep(out, result.points, args.axis)
        _write_trace(out, result.trace)
        _write(out, "summary.txt", format_summary(sweep_summary(result, cfg)))
        return EXIT_OK

    if args.command == "calibrate":
        sx = run_static_sweep(cfg, "x")
        sy = run_static_sweep(cfg, "y")
        cal_x = calibrate((p.position, p.x_hat_raw) for p in sx.points)
        cal_y = calibrate((p.position, p.y_hat_raw) for p in sy.points)
        calibrated = with_calibration(cfg, cal_x, cal_y)
        _write(out, "calibration.ini", dump_config(calibrated, ["estimator"]))
        _write_sweep(out, sx.points, "x")
        _write_trace(out, sx.trace + sy.trace)
        summary = sweep_summary(sx, cfg)
        summary.update(
            kind="calibrate",
            calibration_gain_x=cal_x.gain, calibration_offset_x=cal_x.offset,
            residual_rms_x=cal_x.residual_rms,
            calibration_gain_y=cal_y.gain, calibration_offset_y=cal_y.offset,
            residual_rms_y=cal_y.residual_rms,
        )
        _write(out, "summary.txt", format_summary(summary))
        return EXIT_OK

    result = run_closed_loop(cfg)
    _write_trace(out, result.trace)
    _write(out, "summary.txt", format_summary(result.summary))
    return EXIT_TOUCHDOWN if result.touchdown else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except ConfigError as exc:
        problems = "; ".join(exc.problems)
        print(f"selfsense: config error: {problems}", file=sys.stderr)
        return EXIT_CONFIG
    except (OutputError, OSError) as exc:
        print(f"selfsense: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CalibrationError, ValueError) as exc:
        print(f"selfsense: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
