"""Quick invariant checks run by ``selfsense selftest``."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .control import dq_to_three_phase, dq_to_xy, superpose_coil_currents, xy_to_dq
from .motor import (
    RotorState,
    coenergy,
    coil_inductance,
    coil_voltage,
    radial_force,
)
from .signal_chain import EstimatorState, InjectionConfig, demodulate
from .sim import Config, bias_currents, linearized_stiffness, run_static_sweep


def _inductance(cfg: Config, rng) -> str | None:
    p = cfg.motor
    g = p.nominal_gap_g0
    direct = p.turns_N**2 * p.mu0 * p.tooth_area_A / (2 * g)
    if not math.isclose(coil_inductance(g, p), direct, rel_tol=1e-14):
        return "L(g0) disagrees with N^2 mu0 A / 2g"
    if not math.isclose(coil_inductance(2 * g, p), direct / 2, rel_tol=1e-14):
        return "L(2g) != L(g)/2"
    return None


def _force(cfg: Config, rng) -> str | None:
    p = cfg.motor
    g0 = p.nominal_gap_g0
    worst = 0.0
    for _ in range(20):
        r = 0.3 * g0 * math.sqrt(rng.uniform())
        a = rng.uniform(0, 2 * math.pi)
        x, y = r * math.cos(a), r * math.sin(a)
        i = rng.uniform(-2, 2, 12)
        fx, fy = radial_force(RotorState(x, y), i, p)
        h = 1e-6 * g0
        nx = (coenergy(x + h, y, i, p) - coenergy(x - h, y, i, p)) / (2 * h)
        ny = (coenergy(x, y + h, i, p) - coenergy(x, y - h, i, p)) / (2 * h)
        worst = max(worst, math.hypot(fx - nx, fy - ny) / math.hypot(nx, ny))
    return None if worst < 1e-6 else f"force vs coenergy gradient rel err {worst:.2e}"


def _voltage(cfg: Config, rng) -> str | None:
    p = cfg.motor
    for _ in range(50):
        i, di, e = rng.normal(size=3)
        g = p.nominal_gap_g0 * rng.uniform(0.2, 1.8)
        L = coil_inductance(g, p)
        if coil_voltage(i, di, g, 0.0, p, e) != p.coil_resistance_R * i + L * di + e:
            return "coil voltage with fixed gap is not R i + L di/dt + E_b"
    return None


def _demod(cfg: Config, rng) -> str | None:
    inj = cfg.injection
    dt = cfg.scenario.dt
    est = EstimatorState.create(dt, inj, 1)
    n = est.window_samples
    t = np.arange(3 * n) * dt
    u = rng.normal(size=t.size)
    for k in range(t.size):
        demodulate(u[k], t[k], inj, est)
    tail = t[-n:]
    ref = np.mean(u[-n:] * np.sin(inj.omega * tail + inj.demod_phase_offset))
    err = abs(est.x_hat_raw - ref) / max(abs(ref), 1e-300)
    return None if err < 1e-9 else f"demodulator deviates from projection by {err:.2e}"


def _transforms(cfg: Config, rng) -> str | None:
    for _ in range(50):
        ux, uy, ang = rng.normal(), rng.normal(), rng.uniform(-10, 10)
        bx, by = dq_to_xy(*xy_to_dq(ux, uy, ang), ang)
        if abs(bx - ux) > 1e-12 or abs(by - uy) > 1e-12:
            return "xy -> dq -> xy round trip failed"
        if abs(sum(dq_to_three_phase(ux, uy))) > 1e-12:
            return "three-phase set has a zero-sequence component"
    return None


def _pattern(cfg: Config, rng) -> str | None:
    susp, pattern = cfg.suspension, cfg.injection.pattern()
    s = superpose_coil_currents(dq_to_three_phase(0.7, -0.3), 0.0, 0.0, susp, pattern)
    spec = np.abs(np.fft.fft(s))
    if susp.pattern == "sinusoidal" and np.delete(spec, [1, 11]).max() > 1e-12 * spec.max():
        return "suspension pattern is not a pure 2-pole distribution"
    if spec[2] > 1e-12 * spec.max():
        return "suspension pattern has 4-pole content"
    return None


def _stiffness(cfg: Config, rng) -> str | None:
    k = linearized_stiffness(cfg.motor, bias_currents(cfg))
    if cfg.suspension.bias_amplitude != 0 and not k > 0:
        return f"bias stiffness should be destabilizing, got {k:.4g} N/m"
    return None


def _sweep(cfg: Config, rng) -> str | None:
    g0 = cfg.motor.nominal_gap_g0
    sc = replace(cfg.scenario, sweep_start=-0.2 * g0, sweep_stop=0.2 * g0, sweep_step=0.1 * g0)
    table = run_static_sweep(replace(cfg, scenario=sc)).table()
    if not np.all(np.diff(table[:, 1]) > 0):
        return "x_hat_raw is not increasing along the x sweep"
    return None


CHECKS = (
    ("inductance law", _inductance),
    ("force = coenergy gradient", _force),
    ("fixed-gap coil voltage", _voltage),
    ("demodulator = Fourier projection", _demod),
    ("dq / three-phase transforms", _transforms),
    ("suspension winding pattern", _pattern),
    ("negative bias stiffness", _stiffness),
    ("static sweep monotonic", _sweep),
)


def run_checks(cfg: Config | None = None, seed: int = 0) -> list[tuple[str, bool, str]]:
    cfg = cfg or Config()
    rng = np.random.default_rng(seed)
    results = []
    for name, check in CHECKS:
        try:
            problem = check(cfg, rng)
        except Exception as exc:  # a crashing check is a failed check
            problem = f"{type(exc).__name__}: {exc}"
        results.append((name, problem is None, problem or ""))
    return results
