"""Fixed-step scenario runner tying the motor model, estimator and controllers together.

The plant (coil currents, estimator sampling, rotor RK4) advances every
``dt``; the controllers update once per ``control_period`` and their
commands are held in between.  One trace record is emitted per control
period.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .control import (
    ControllerConfig,
    PIDState,
    SuspensionConfig,
    control_command,
    superpose_coil_currents,
)
from .motor import (
    N_TEETH,
    MotorParams,
    RotorState,
    Touchdown,
    bank_from_currents,
    current_drive_step,
    mechanical_step,
    radial_force,
    tooth_gaps,
)
from .signal_chain import (
    Calibration,
    EstimatorState,
    InjectionConfig,
    calibrate,
    estimate_position,
    injection_current,
    samples_per_period,
)

KINDS = ("static_sweep", "open_loop_injection", "closed_loop_levitation", "disturbance_rejection")
FEEDBACK = ("estimated", "true")
DISTURBANCES = ("none", "step", "sine")


@dataclass(frozen=True)
class EstimatorConfig:
    window_periods: int = 4
    # None means: calibrate from a static sweep before the run
    calibration_gain_x: float | None = None
    calibration_gain_y: float | None = None
    calibration_offset_x: float = 0.0
    calibration_offset_y: float = 0.0

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if self.window_periods < 1:
            out.append(f"window_periods must be >= 1, got {self.window_periods}")
        for name in ("calibration_gain_x", "calibration_gain_y"):
            g = getattr(self, name)
            if g is not None and (g == 0 or not math.isfinite(g)):
                out.append(f"{name} must be finite and nonzero, got {g}")
        if (self.calibration_gain_x is None) != (self.calibration_gain_y is None):
            out.append("calibration_gain_x and calibration_gain_y must both be set or both be auto")
        return out

    @property
    def calibrated(self) -> bool:
        return self.calibration_gain_x is not None


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = "closed_loop_levitation"
    dt: float = 5e-6
    duration: float = 0.5
    control_period: float = 1e-4
    sweep_start: float = -1e-4
    sweep_stop: float = 1e-4
    sweep_step: float = 1e-5
    settle_periods: int = 10
    initial_x: float = 1e-4
    initial_y: float = 0.0
    initial_vx: float = 0.0
    initial_vy: float = 0.0
    disturbance: str = "step"
    disturbance_x: float = 0.005
    disturbance_y: float = 0.0
    disturbance_start: float = 0.25
    disturbance_frequency: float = 20.0
    feedback: str = "estimated"
    sensor_noise: float = 0.0
    seed: int = 0
    settle_band: float = 5e-6

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if self.kind not in KINDS:
            out.append(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.feedback not in FEEDBACK:
            out.append(f"feedback must be one of {FEEDBACK}, got {self.feedback!r}")
        if self.disturbance not in DISTURBANCES:
            out.append(f"disturbance must be one of {DISTURBANCES}, got {self.disturbance!r}")
        if not self.dt > 0:
            out.append(f"dt must be > 0, got {self.dt}")
        if not self.duration > 0:
            out.append(f"duration must be > 0, got {self.duration}")
        if not self.control_period > 0:
            out.append(f"control_period must be > 0, got {self.control_period}")
        elif self.dt > 0:
            ratio = self.control_period / self.dt
            if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9 * ratio:
                out.append(
                    f"control_period ({self.control_period}) must be an integer multiple "
                    f"of dt ({self.dt})"
                )
        if not self.sweep_step > 0:
            out.append(f"sweep_step must be > 0, got {self.sweep_step}")
        if not self.sweep_stop >= self.sweep_start:
            out.append("sweep_stop must be >= sweep_start")
        if self.settle_periods < 1:
            out.append(f"settle_periods must be >= 1, got {self.settle_periods}")
        if not self.sensor_noise >= 0:
            out.append(f"sensor_noise must be >= 0, got {self.sensor_noise}")
        if not self.settle_band > 0:
            out.append(f"settle_band must be > 0, got {self.settle_band}")
        return out

    @property
    def steps_per_control(self) -> int:
        return round(self.control_period / self.dt)

    def sweep_grid(self) -> np.ndarray:
        n = int(round((self.sweep_stop - self.sweep_start) / self.sweep_step)) + 1
        return np.linspace(self.sweep_start, self.sweep_start + (n - 1) * self.sweep_step, n)


@dataclass(frozen=True)
class Config:
    motor: MotorParams = field(default_factory=MotorParams)
    injection: InjectionConfig = field(default_factory=InjectionConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    suspension: SuspensionConfig = field(default_factory=SuspensionConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    def cross_violations(self) -> list[str]:
        """Invariants spanning more than one section."""
        out = []
        sc, p = self.scenario, self.motor
        lim = p.touchdown_radius
        if max(abs(sc.sweep_start), abs(sc.sweep_stop)) >= lim:
            out.append(
                f"scenario sweep range exceeds max_displacement_fraction*g0 = {lim:.6g} m"
            )
        if math.hypot(sc.initial_x, sc.initial_y) >= lim:
            out.append(f"scenario initial position is beyond the touchdown radius {lim:.6g} m")
        if not math.isclose(self.controller.dt, sc.control_period, rel_tol=1e-12):
            out.append("controller dt must equal scenario control_period")
        if sc.dt > 0:
            try:
                samples_per_period(sc.dt, self.injection)
            except ValueError as exc:
                out.append(str(exc))
        return out


# ---------------------------------------------------------------------------
# records


@dataclass
class TraceRecord:
    t: float
    x: float
    y: float
    x_hat: float
    y_hat: float
    x_hat_raw: float
    y_hat_raw: float
    currents: np.ndarray
    voltages: np.ndarray
    fx: float
    fy: float
    u_x: float
    u_y: float
    saturated: bool = False
    touchdown: bool = False
    gap_clamped: bool = False


TRACE_COLUMNS = (
    ["t", "x", "y", "x_hat", "y_hat", "x_hat_raw", "y_hat_raw"]
    + [f"i_{k}" for k in range(1, N_TEETH + 1)]
    + [f"v_{k}" for k in range(1, N_TEETH + 1)]
    + ["fx", "fy", "u_x", "u_y", "saturated", "touchdown", "gap_clamped"]
)


def _g9(v: float) -> str:
    return f"{v:.9g}"


def trace_rows(trace: Iterable[TraceRecord]):
    for r in trace:
        yield (
            [_g9(v) for v in (r.t, r.x, r.y, r.x_hat, r.y_hat, r.x_hat_raw, r.y_hat_raw)]
            + [_g9(v) for v in r.currents]
            + [_g9(v) for v in r.voltages]
            + [_g9(v) for v in (r.fx, r.fy, r.u_x, r.u_y)]
            + [str(int(r.saturated)), str(int(r.touchdown)), str(int(r.gap_clamped))]
        )


def write_trace_csv(trace: Iterable[TraceRecord], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    w.writerows(trace_rows(trace))


def trace_csv_text(trace: Iterable[TraceRecord]) -> str:
    buf = io.StringIO()
    write_trace_csv(trace, buf)
    return buf.getvalue()


def format_summary(summary: dict) -> str:
    """Flat ``key = value`` block, one pair per line, in insertion order."""
    lines = []
    for k, v in summary.items():
        if isinstance(v, bool):
            v = str(v).lower()
        elif isinstance(v, float):
            v = _g9(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# static sweep


@dataclass(frozen=True)
class SweepPoint:
    position: float
    x_hat_raw: float
    y_hat_raw: float


@dataclass
class SweepResult:
    axis: str
    points: list[SweepPoint]
    trace: list[TraceRecord]

    def table(self) -> np.ndarray:
        return np.array([(p.position, p.x_hat_raw, p.y_hat_raw) for p in self.points])


def _hold_position(x: float, y: float, cfg: Config) -> TraceRecord:
    """Run injection + demodulation with the rotor pinned at (x, y) until steady."""
    p, inj, sc = cfg.motor, cfg.injection, cfg.scenario
    dt = sc.dt
    est = EstimatorState.create(dt, inj, cfg.estimator.window_periods)
    pattern = inj.pattern()
    bias = cfg.suspension.bias_amplitude
    zero = (0.0, 0.0, 0.0)

    def cmd(t):
        return superpose_coil_currents(zero, bias, injection_current(t, inj), cfg.suspension, pattern)

    rotor = RotorState(x, y)
    bank = bank_from_currents(cmd(-dt), rotor, p)
    n = est.window_samples + sc.settle_periods * samples_per_period(dt, inj)
    for k in range(n):
        t = k * dt
        bank = current_drive_step(bank, cmd(t), rotor, dt, p)
        estimate_position(bank.terminal_voltage, t, inj, est)
    _, clamped = tooth_gaps(x, y, p)
    fx, fy = radial_force(rotor, bank.current, p)
    rec = TraceRecord(
        t=(n - 1) * dt, x=x, y=y, x_hat=est.x_hat, y_hat=est.y_hat,
        x_hat_raw=est.x_hat_raw, y_hat_raw=est.y_hat_raw,
        currents=bank.current, voltages=bank.terminal_voltage,
        fx=fx, fy=fy, u_x=0.0, u_y=0.0, gap_clamped=clamped,
    )
    return rec


def run_static_sweep(cfg: Config, axis: str = "x") -> SweepResult:
    """Sweep the pinned rotor along ``axis`` and record steady demodulator outputs.

    Mechanical dynamics are frozen; each grid point is simulated from a
    fresh estimator for one filter window plus ``settle_periods`` carrier
    periods, and the final raw outputs are kept.
    """
    if axis not in ("x", "y"):
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    points, trace = [], []
    for d in cfg.scenario.sweep_grid():
        d = float(d)
        x, y = (d, 0.0) if axis == "x" else (0.0, d)
        rec = _hold_position(x, y, cfg)
        points.append(SweepPoint(d, rec.x_hat_raw, rec.y_hat_raw))
        trace.append(rec)
    return SweepResult(axis, points, trace)


def calibrate_estimator(cfg: Config) -> tuple[Calibration, Calibration]:
    """Per-axis affine calibration from x and y static sweeps."""
    sx = run_static_sweep(cfg, "x")
    sy = run_static_sweep(cfg, "y")
    cal_x = calibrate((p.position, p.x_hat_raw) for p in sx.points)
    cal_y = calibrate((p.position, p.y_hat_raw) for p in sy.points)
    return cal_x, cal_y


def with_calibration(cfg: Config, cal_x: Calibration, cal_y: Calibration) -> Config:
    est = replace(
        cfg.estimator,
        calibration_gain_x=cal_x.gain,
        calibration_gain_y=cal_y.gain,
        calibration_offset_x=cal_x.offset,
        calibration_offset_y=cal_y.offset,
    )
    return replace(cfg, estimator=est)


# ---------------------------------------------------------------------------
# stiffness


def linearized_stiffness(params: MotorParams, currents, step: float | None = None) -> float:
    """dFx/dx at the centered rotor by central differences (N/m)."""
    h = 1e-6 * params.nominal_gap_g0 if step is None else step
    fp, _ = radial_force(RotorState(x=h), currents, params)
    fm, _ = radial_force(RotorState(x=-h), currents, params)
    return (fp - fm) / (2.0 * h)


def bias_currents(cfg: Config) -> np.ndarray:
    """Coil currents with only the 4-pole bias active."""
    return superpose_coil_currents(
        (0.0, 0.0, 0.0), cfg.suspension.bias_amplitude, 0.0, cfg.suspension,
        cfg.injection.pattern(),
    )


# ---------------------------------------------------------------------------
# closed loop


@dataclass
class RunResult:
    trace: list[TraceRecord]
    summary: dict
    touchdown: bool
    config: Config


def _disturbance(t: float, sc: ScenarioConfig) -> tuple[float, float]:
    if sc.kind != "disturbance_rejection" or sc.disturbance == "none" or t < sc.disturbance_start:
        return 0.0, 0.0
    if sc.disturbance == "step":
        return sc.disturbance_x, sc.disturbance_y
    s = math.sin(2.0 * math.pi * sc.disturbance_frequency * (t - sc.disturbance_start))
    return sc.disturbance_x * s, sc.disturbance_y * s


def settling_time(trace: list[TraceRecord], band: float) -> float | None:
    """First time after which the radial displacement stays inside ``band``.

    None if the last record is still outside.
    """
    last_out = None
    for k, r in enumerate(trace):
        if math.hypot(r.x, r.y) >= band:
            last_out = k
    if last_out is None:
        return trace[0].t if trace else None
    if last_out == len(trace) - 1:
        return None
    return trace[last_out + 1].t


def summarize(trace: list[TraceRecord], cfg: Config, touchdown: bool, fill_time: float) -> dict:
    sc = cfg.scenario
    x = np.array([r.x for r in trace])
    y = np.array([r.y for r in trace])
    r = np.hypot(x, y)
    x0, y0 = sc.initial_x, sc.initial_y
    r0 = math.hypot(x0, y0)
    if r0 > 0:
        # excursion past center, measured along the initial offset direction
        along = (x * x0 + y * y0) / r0
        overshoot = float(max(0.0, -along.min()))
    else:
        overshoot = float(r.max())

    after = [rec for rec in trace if rec.t >= fill_time]
    if after:
        ex = np.array([rec.x_hat - rec.x for rec in after])
        ey = np.array([rec.y_hat - rec.y for rec in after])
        est_rms = float(np.sqrt(np.mean(ex**2 + ey**2)))
    else:
        est_rms = float("nan")

    ts = settling_time(trace, sc.settle_band)
    out = {
        "kind": sc.kind,
        "feedback": sc.feedback,
        "seed": sc.seed,
        "records": len(trace),
        "t_end": trace[-1].t,
        "touchdown": touchdown,
        "settled": ts is not None,
        "settling_time": ts if ts is not None else float("nan"),
        "settle_band": sc.settle_band,
        "overshoot": overshoot,
        "max_displacement": float(r.max()),
        "final_x": float(x[-1]),
        "final_y": float(y[-1]),
        "estimation_error_rms": est_rms,
        "saturated_records": sum(rec.saturated for rec in trace),
        "gap_clamped_records": sum(rec.gap_clamped for rec in trace),
        "calibration_gain_x": cfg.estimator.calibration_gain_x,
        "calibration_gain_y": cfg.estimator.calibration_gain_y,
        "calibration_offset_x": cfg.estimator.calibration_offset_x,
        "calibration_offset_y": cfg.estimator.calibration_offset_y,
    }
    if sc.kind == "disturbance_rejection" and sc.disturbance != "none":
        post = r[np.array([rec.t for rec in trace]) >= sc.disturbance_start]
        out["peak_after_disturbance"] = float(post.max()) if post.size else float("nan")
    return out


def _record(rotor, est, bank, cmd, pid_x, pid_y, p) -> TraceRecord:
    fx, fy = radial_force(rotor, bank.current, p)
    return TraceRecord(
        t=rotor.t, x=rotor.x, y=rotor.y, x_hat=est.x_hat, y_hat=est.y_hat,
        x_hat_raw=est.x_hat_raw, y_hat_raw=est.y_hat_raw,
        currents=bank.current, voltages=bank.terminal_voltage,
        fx=fx, fy=fy, u_x=cmd.u_x, u_y=cmd.u_y,
        saturated=pid_x.saturated or pid_y.saturated,
        gap_clamped=tooth_gaps(rotor.x, rotor.y, p)[1],
    )


def run_closed_loop(cfg: Config) -> RunResult:
    """Simulate the full suspension loop (or the uncontrolled plant for ``open_loop_injection``).

    An uncalibrated estimator is calibrated first from static sweeps.  A
    touchdown ends the run early; the partial trace is returned with the
    last record flagged.
    """
    if not cfg.estimator.calibrated:
        cfg = with_calibration(cfg, *calibrate_estimator(cfg))
    p, inj, sc, susp, ctl = cfg.motor, cfg.injection, cfg.scenario, cfg.suspension, cfg.controller
    dt = sc.dt
    est_cfg = cfg.estimator
    est = EstimatorState.create(
        dt, inj, est_cfg.window_periods,
        (est_cfg.calibration_gain_x, est_cfg.calibration_gain_y),
        (est_cfg.calibration_offset_x, est_cfg.calibration_offset_y),
    )
    fill_time = est.window_samples * dt
    controlled = sc.kind != "open_loop_injection"
    rng = np.random.default_rng(sc.seed)
    pattern = inj.pattern()
    bias = susp.bias_amplitude
    pid_x, pid_y = PIDState(), PIDState()

    rotor = RotorState(sc.initial_x, sc.initial_y, sc.initial_vx, sc.initial_vy, 0.0)
    bank = bank_from_currents(
        superpose_coil_currents((0.0, 0.0, 0.0), bias, injection_current(-dt, inj), susp, pattern),
        rotor, p,
    )

    n_ctl = int(round(sc.duration / sc.control_period))
    spc = sc.steps_per_control
    trace: list[TraceRecord] = []
    touchdown = False

    for n in range(n_ctl):
        ready = controlled
        e_x = e_y = 0.0
        if controlled:
            if sc.feedback == "true":
                mx, my = rotor.x, rotor.y
                if sc.sensor_noise > 0:
                    mx += rng.normal(0.0, sc.sensor_noise)
                    my += rng.normal(0.0, sc.sensor_noise)
            else:
                mx, my = est.x_hat, est.y_hat
                ready = est.filled
            if ready:
                e_x, e_y = -mx, -my
        cmd = control_command(e_x, e_y, pid_x, pid_y, ctl, susp, pattern, enabled=ready)

        for j in range(spc):
            t = (n * spc + j) * dt
            i_cmd = cmd.coil_current_cmd + injection_current(t, inj) * pattern
            bank = current_drive_step(bank, i_cmd, rotor, dt, p)
            estimate_position(bank.terminal_voltage, t, inj, est)
            if j == 0:
                trace.append(_record(rotor, est, bank, cmd, pid_x, pid_y, p))
            try:
                rotor = mechanical_step(
                    rotor, lambda s, i=i_cmd: radial_force(s, i, p), dt, p, _disturbance(t, sc)
                )
            except Touchdown as td:
                touchdown = True
                rotor = td.rotor
                break
        if touchdown:
            rec = _record(rotor, est, bank, cmd, pid_x, pid_y, p)
            rec.touchdown = True
            trace.append(rec)
            break

    return RunResult(trace, summarize(trace, cfg, touchdown, fill_time), touchdown, cfg)


def run_scenario(cfg: Config):
    """Dispatch on ``cfg.scenario.kind``."""
    if cfg.scenario.kind == "static_sweep":
        return run_static_sweep(cfg)
    return run_closed_loop(cfg)
