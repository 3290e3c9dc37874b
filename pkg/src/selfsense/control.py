"""Suspension control path: per-axis PID, xy -> dq -> uvw, and coil current superposition."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .motor import N_TEETH, TOOTH_ANGLES

SQRT3_2 = math.sqrt(3.0) / 2.0
PHASE_ANGLES = (0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0)
PHASES = "uvw"

# One phase per tooth, two consecutive teeth per phase and polarity, sign
# flipped six teeth later.  Phases advance clockwise (see suspension_matrix).
DEFAULT_TABLE_PHASES = ("u", "u", "v", "v", "w", "w", "u", "u", "v", "v", "w", "w")
DEFAULT_TABLE_SIGNS = (1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0)


@dataclass(frozen=True)
class ControllerConfig:
    kp: float = 650.0
    ki: float = 200.0
    kd: float = 15.0
    output_limit: float = 2.0
    dt: float = 1e-4
    derivative_filter_tau: float = 1e-2

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if not self.dt > 0:
            out.append(f"dt must be > 0, got {self.dt}")
        if not self.output_limit > 0:
            out.append(f"output_limit must be > 0, got {self.output_limit}")
        for name in ("kp", "ki", "kd", "derivative_filter_tau"):
            value = getattr(self, name)
            if not value >= 0:
                out.append(f"{name} must be >= 0, got {value}")
        return out


@dataclass
class PIDState:
    integral: float = 0.0
    derivative: float = 0.0
    prev_error: float | None = None
    saturated: bool = False


def pid_step(error: float, state: PIDState, cfg: ControllerConfig) -> float:
    """One sample of a discrete PID with filtered derivative and clamping anti-windup.

    The integral uses the trapezoidal rule with a zero error before the
    first sample.  The derivative is the backward difference passed through
    a first-order lag of time constant ``derivative_filter_tau``; it starts
    from rest so the first sample does not kick.  The integral term is held
    within +-output_limit, and stops accumulating while the output is
    saturated in the direction the error pushes.
    """
    dt = cfg.dt
    prev = 0.0 if state.prev_error is None else state.prev_error
    increment = 0.5 * (error + prev) * dt
    integral = state.integral + increment
    if cfg.ki > 0:
        bound = cfg.output_limit / cfg.ki
        integral = min(max(integral, -bound), bound)

    if state.prev_error is not None:
        tau = cfg.derivative_filter_tau
        state.derivative = (tau * state.derivative + (error - state.prev_error)) / (tau + dt)

    pd = cfg.kp * error + cfg.kd * state.derivative
    u = pd + cfg.ki * integral
    if abs(u) > cfg.output_limit and u * increment > 0:
        integral = state.integral
        u = pd + cfg.ki * integral

    state.integral = integral
    state.prev_error = error
    state.saturated = abs(u) > cfg.output_limit
    return min(max(u, -cfg.output_limit), cfg.output_limit)


# ---------------------------------------------------------------------------
# transforms


def xy_to_dq(u_x: float, u_y: float, angle: float = 0.0) -> tuple[float, float]:
    c, s = math.cos(angle), math.sin(angle)
    return u_x * c + u_y * s, -u_x * s + u_y * c


def dq_to_xy(u_d: float, u_q: float, angle: float = 0.0) -> tuple[float, float]:
    c, s = math.cos(angle), math.sin(angle)
    return u_d * c - u_q * s, u_d * s + u_q * c


def dq_to_three_phase(u_d: float, u_q: float) -> tuple[float, float, float]:
    """Amplitude-invariant inverse Clarke transform (phase axes at 0, 120, 240 deg)."""
    i_u = u_d
    i_v = -0.5 * u_d + SQRT3_2 * u_q
    i_w = -0.5 * u_d - SQRT3_2 * u_q
    return i_u, i_v, i_w


# ---------------------------------------------------------------------------
# winding patterns


@dataclass(frozen=True)
class SuspensionConfig:
    """How the 3-phase suspension set and the 4-pole bias map onto the 12 coils.

    ``pattern = "sinusoidal"`` weights every coil by the projection of its
    tooth axis on each phase axis, giving a pure one-pole-pair MMF.
    ``pattern = "table"`` drives each coil from a single phase with a sign,
    as listed in ``table_phases`` / ``table_signs``.
    """

    pattern: str = "sinusoidal"
    table_phases: tuple[str, ...] = DEFAULT_TABLE_PHASES
    table_signs: tuple[float, ...] = DEFAULT_TABLE_SIGNS
    bias_amplitude: float = 0.1
    bias_phase: float = 0.0
    dq_angle: float = 0.0

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if self.pattern not in ("sinusoidal", "table"):
            out.append(f"pattern must be 'sinusoidal' or 'table', got {self.pattern!r}")
        if len(self.table_phases) != N_TEETH or any(p not in PHASES for p in self.table_phases):
            out.append(f"table_phases needs {N_TEETH} entries from u/v/w")
        if len(self.table_signs) != N_TEETH:
            out.append(f"table_signs needs {N_TEETH} entries")
        for name in ("bias_amplitude", "bias_phase", "dq_angle"):
            if not math.isfinite(getattr(self, name)):
                out.append(f"{name} must be finite")
        return out

    @cached_property
    def suspension_matrix(self) -> np.ndarray:
        """12x3 map from (i_u, i_v, i_w) to the per-coil suspension currents.

        Phase p sits at -120p degrees mechanical, so a positive d command
        puts the MMF peak on coil 1 and a positive q command puts it on
        coil 10 (-y).  Against a 4-pole bias with its peak on coil 1 this
        yields force along +x and +y respectively.
        """
        if self.pattern == "sinusoidal":
            alpha = np.asarray(PHASE_ANGLES)
            return (2.0 / 3.0) * np.cos(TOOTH_ANGLES[:, None] + alpha[None, :])
        W = np.zeros((N_TEETH, 3))
        for k, (p, s) in enumerate(zip(self.table_phases, self.table_signs)):
            W[k, PHASES.index(p)] = s
        return W

    @cached_property
    def bias_pattern(self) -> np.ndarray:
        return np.cos(2.0 * TOOTH_ANGLES - self.bias_phase)


def superpose_coil_currents(
    suspension: tuple[float, float, float],
    torque_amplitude: float,
    injection: float,
    cfg: SuspensionConfig,
    injection_pattern: np.ndarray,
) -> np.ndarray:
    """Per-coil current commands: 2-pole suspension + 4-pole torque/bias + HF injection."""
    s = cfg.suspension_matrix @ np.asarray(suspension, dtype=float)
    return s + torque_amplitude * cfg.bias_pattern + injection * injection_pattern


@dataclass
class ControlCommand:
    e_x: float = 0.0
    e_y: float = 0.0
    u_x: float = 0.0
    u_y: float = 0.0
    u_d: float = 0.0
    u_q: float = 0.0
    i_u_star: float = 0.0
    i_v_star: float = 0.0
    i_w_star: float = 0.0
    coil_current_cmd: np.ndarray = field(default_factory=lambda: np.zeros(N_TEETH))


def control_command(
    e_x: float,
    e_y: float,
    pid_x: PIDState,
    pid_y: PIDState,
    ctl: ControllerConfig,
    susp: SuspensionConfig,
    injection_pattern: np.ndarray,
    enabled: bool = True,
) -> ControlCommand:
    """Run the errors through the controllers and every transform stage.

    ``coil_current_cmd`` excludes the HF injection, which the caller adds
    at the plant rate.  With ``enabled=False`` the controllers are not
    stepped and all efforts are zero (bias still applied).
    """
    u_x = pid_step(e_x, pid_x, ctl) if enabled else 0.0
    u_y = pid_step(e_y, pid_y, ctl) if enabled else 0.0
    u_d, u_q = xy_to_dq(u_x, u_y, susp.dq_angle)
    i_u, i_v, i_w = dq_to_three_phase(u_d, u_q)
    coils = superpose_coil_currents((i_u, i_v, i_w), susp.bias_amplitude, 0.0, susp, injection_pattern)
    return ControlCommand(e_x, e_y, u_x, u_y, u_d, u_q, i_u, i_v, i_w, coils)
