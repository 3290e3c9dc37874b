"""Acceptance criteria, each checked at its stated tolerance.

Every test records a one-line verdict; the lines are printed in the
"acceptance criteria" section at the end of the pytest run.  Run this file
directly (``python3 tests/test_acceptance.py``) to get only these checks.
"""

import math
import sys
import time

import numpy as np
import pytest

from selfsense.cli import EXIT_OK, main
from selfsense.control import SuspensionConfig
from selfsense.motor import (
    N_TEETH,
    MotorParams,
    RotorState,
    bank_from_currents,
    coenergy,
    coil_inductance,
    coil_voltage,
    electrical_step,
    mechanical_step,
    radial_force,
)
from selfsense.signal_chain import EstimatorState, InjectionConfig, demodulate
from selfsense.sim import (
    Config,
    ScenarioConfig,
    bias_currents,
    linearized_stiffness,
    run_closed_loop,
    run_static_sweep,
)

P = MotorParams()
G0 = P.nominal_gap_g0
DTS = (20e-6, 10e-6, 5e-6, 2.5e-6)


def verdict(book, n, ok, detail):
    book[n] = (bool(ok), detail)
    assert ok, detail


def read_summary(path):
    return dict(line.split(" = ", 1) for line in path.read_text().splitlines() if " = " in line)


# ---------------------------------------------------------------------------
# 1. static sweep shape


def test_criterion_1_static_sweep(acceptance):
    inj = InjectionConfig()
    assert (inj.amplitude_Is, inj.frequency_fs) == (0.1, 2000)
    sc = ScenarioConfig(
        kind="static_sweep", sweep_start=-0.2 * G0, sweep_stop=0.2 * G0, sweep_step=0.02 * G0
    )
    start = time.perf_counter()
    table = run_static_sweep(Config(scenario=sc), "x").table()
    elapsed = time.perf_counter() - start
    d, xr, yr = table.T

    monotonic = bool(np.all(np.diff(xr) > 0) or np.all(np.diff(xr) < 0))
    pos = d > 0
    mirror = np.array([xr[np.argmin(np.abs(d + di))] for di in d[pos]])
    odd_err = float(np.max(np.abs(xr[pos] + mirror) / np.abs(xr[pos])))
    exact = np.flatnonzero(xr == 0)
    if exact.size:
        zero = float(d[exact[0]])
    else:
        k = int(np.flatnonzero(np.diff(np.sign(xr)) != 0)[0])
        zero = float(d[k] - xr[k] * (d[k + 1] - d[k]) / (xr[k + 1] - xr[k]))
    span = float(xr.max() - xr.min())
    cross = float(np.abs(yr).max() / span)

    ok = (
        len(d) == 21
        and monotonic
        and odd_err <= 0.02
        and abs(zero) < 1e-3 * G0
        and cross < 0.10
        and elapsed < 60
    )
    verdict(
        acceptance, 1, ok,
        f"21-pt sweep monotonic={monotonic} odd_err={odd_err:.2e} zero={zero:.2e} m "
        f"cross={cross:.2e} runtime={elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 2. demodulator vs single-bin Fourier projection


def test_criterion_2_demodulator_oracle(acceptance):
    rng = np.random.default_rng(20240602)
    worst = 0.0
    for _ in range(100):
        fs = float(rng.choice([500.0, 1000.0, 2000.0, 4000.0]))
        inj = InjectionConfig(frequency_fs=fs, demod_phase_offset=float(rng.uniform(0, 2 * np.pi)))
        dt = 5e-6
        periods = int(rng.integers(1, 5))
        state = EstimatorState.create(dt, inj, periods)
        n = state.window_samples
        total = n + int(rng.integers(0, 3 * n))
        t = np.arange(total) * dt
        u = (
            rng.normal(0, 2) * np.cos(inj.omega * t + rng.uniform(0, 2 * np.pi))
            + rng.normal(0, 0.5) * np.cos(3 * inj.omega * t)
            + rng.normal(0, 0.3, total)
            + rng.normal()
        )
        for k in range(total):
            demodulate(u[k], t[k], inj, state)
        n0 = total - n
        X = np.fft.fft(u[n0:])[periods]
        c = inj.demod_phase_offset + inj.omega * n0 * dt
        ref = float(np.imag(np.conj(X) * np.exp(1j * c))) / n
        worst = max(worst, abs(state.x_hat_raw - ref) / abs(ref))
    verdict(acceptance, 2, worst < 1e-9, f"100 random inputs, worst relative error {worst:.2e}")


# ---------------------------------------------------------------------------
# 3. force vs coenergy finite differences


def test_criterion_3_force_oracle(acceptance):
    rng = np.random.default_rng(3)
    h = 1e-6 * G0
    worst = 0.0
    for _ in range(1000):
        r = 0.3 * G0 * math.sqrt(rng.uniform())
        a = rng.uniform(0, 2 * math.pi)
        x, y = r * math.cos(a), r * math.sin(a)
        i = rng.uniform(-2, 2, N_TEETH)
        fx, fy = radial_force(RotorState(x, y), i, P)
        nx = (coenergy(x + h, y, i, P) - coenergy(x - h, y, i, P)) / (2 * h)
        ny = (coenergy(x, y + h, i, P) - coenergy(x, y - h, i, P)) / (2 * h)
        worst = max(worst, math.hypot(fx - nx, fy - ny) / math.hypot(nx, ny))
    verdict(acceptance, 3, worst < 1e-6, f"1000 random states, worst relative error {worst:.2e}")


# ---------------------------------------------------------------------------
# 4. quasi-static voltage equation recovered bitwise


def test_criterion_4_voltage_recovery(acceptance):
    rng = np.random.default_rng(4)
    mismatches = 0
    n = 10000
    for _ in range(n):
        p = MotorParams(
            turns_N=int(rng.integers(1, 500)),
            tooth_area_A=float(rng.uniform(1e-6, 1e-3)),
            coil_resistance_R=float(rng.uniform(0, 10)),
        )
        i, di, emf = rng.normal(0, [2, 1e4, 1])
        g = float(rng.uniform(0.05, 2) * G0)
        L = coil_inductance(g, p)
        if coil_voltage(i, di, g, 0.0, p, emf) != p.coil_resistance_R * i + L * di + emf:
            mismatches += 1
    verdict(acceptance, 4, mismatches == 0, f"{n} random inputs, {mismatches} bitwise mismatches")


# ---------------------------------------------------------------------------
# 5. integrator convergence order


def _slopes(errors):
    e = np.log(errors)
    h = np.log(DTS)
    return np.diff(e) / np.diff(h), float(np.polyfit(h, e, 1)[0])


def release_error(dt, omega=2000.0, T=5e-3, x0=1e-9):
    """Rotor released next to a negative-stiffness spring: x = x0 cosh(w t)."""
    k = P.rotor_mass * omega**2
    r = RotorState(x0, 0.0)
    for _ in range(round(T / dt)):
        r = mechanical_step(r, lambda s: (k * s.x, k * s.y), dt, P)
    exact = x0 * math.cosh(omega * T)
    return abs(r.x - exact) / exact


def rl_step_error(dt, T=5e-4, V=1.0):
    p = MotorParams(coil_resistance_R=10.0)
    rotor = RotorState()
    bank = bank_from_currents(np.zeros(N_TEETH), rotor, p)
    v = np.zeros(N_TEETH)
    v[0] = V
    for _ in range(round(T / dt)):
        bank = electrical_step(bank, v, rotor, dt, p)
    L = coil_inductance(G0, p)
    exact = V / p.coil_resistance_R * (1 - math.exp(-p.coil_resistance_R * T / L))
    return abs(bank.current[0] - exact) / exact


def test_criterion_5_convergence_order(acceptance):
    # A constant force is integrated exactly by RK4, so the ballistic case
    # has no truncation error to measure; check that, then measure order on
    # the state-dependent release.
    r = RotorState()
    for _ in range(50):
        r = mechanical_step(r, (0.3, 0.0), 20e-6, P)
    t = 50 * 20e-6
    exact_const = abs(r.x - 0.3 * t * t / (2 * P.rotor_mass)) <= 1e-12 * r.x

    mech, mech_fit = _slopes([release_error(dt) for dt in DTS])
    elec, elec_fit = _slopes([rl_step_error(dt) for dt in DTS])
    ok = (
        exact_const
        and np.all((mech >= 3.7) & (mech <= 4.3)) and 3.7 <= mech_fit <= 4.3
        and np.all((elec >= 1.8) & (elec <= 4.3)) and 1.8 <= elec_fit <= 4.3
    )
    verdict(
        acceptance, 5, ok,
        f"mechanical slope {mech_fit:.3f} (pairwise {np.round(mech, 3).tolist()}), "
        f"RL slope {elec_fit:.3f} (pairwise {np.round(elec, 3).tolist()}), "
        f"constant-force exact={exact_const}",
    )


# ---------------------------------------------------------------------------
# 6. negative stiffness


def test_criterion_6_negative_stiffness(acceptance):
    ib = 0.1
    k1 = linearized_stiffness(P, bias_currents(Config(suspension=SuspensionConfig(bias_amplitude=ib))))
    k2 = linearized_stiffness(
        P, bias_currents(Config(suspension=SuspensionConfig(bias_amplitude=2 * ib)))
    )
    ratio = k2 / k1
    res = run_closed_loop(Config(scenario=ScenarioConfig(kind="open_loop_injection")))
    ok = k1 > 0 and abs(ratio / 4 - 1) <= 0.01 and res.touchdown
    verdict(
        acceptance, 6, ok,
        f"k(Ib)={k1:.4g} N/m, k(2Ib)/k(Ib)={ratio:.6f}, open-loop touchdown={res.touchdown} "
        f"at t={res.trace[-1].t:.4f}s",
    )


# ---------------------------------------------------------------------------
# 7 and 8 use the command line with the shipped defaults


@pytest.fixture(scope="module")
def levitation_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("levitate")
    runs = {}
    for name, fb in (("estimated", "estimated"), ("estimated_again", "estimated"), ("true", "true")):
        out = base / name
        runs[name] = (main(["levitate", f"--feedback={fb}", "--out", str(out)]), out)
    return runs


def test_criterion_7_closed_loop(acceptance, levitation_runs):
    code_e, out_e = levitation_runs["estimated"]
    code_t, out_t = levitation_runs["true"]
    se, st = read_summary(out_e / "summary.txt"), read_summary(out_t / "summary.txt")
    ts_e, ts_t = float(se["settling_time"]), float(st["settling_time"])
    rms = float(se["estimation_error_rms"])
    agree = abs(ts_e - ts_t) / ts_t
    ok = (
        code_e == EXIT_OK
        and se["touchdown"] == "false"
        and se["settled"] == "true"
        and float(se["settle_band"]) <= 5e-6
        and ts_e <= 0.5
        and rms < 0.05 * G0
        and st["settled"] == "true"
        and agree <= 0.20
    )
    verdict(
        acceptance, 7, ok,
        f"estimated settles at {ts_e:.4f}s, true at {ts_t:.4f}s (diff {agree:.1%}), "
        f"estimation RMS {rms:.3g} m = {rms / G0:.2%} of g0, touchdown={se['touchdown']}",
    )


def test_criterion_8_determinism(acceptance, levitation_runs):
    a = (levitation_runs["estimated"][1] / "trace.csv").read_bytes()
    b = (levitation_runs["estimated_again"][1] / "trace.csv").read_bytes()
    verdict(acceptance, 8, a == b, f"two default runs, trace.csv {len(a)} bytes, identical={a == b}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
