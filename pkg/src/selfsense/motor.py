"""Lumped-parameter model of the 12-tooth bearingless hysteresis motor.

Every stator coil is treated as an independent lumped inductor whose
inductance depends only on the air gap under its tooth.  Coils are
magnetically uncoupled (diagonal inductance matrix).  The rotor is a point
mass moving in the radial plane.

Coil indices are 1-based in docs and config files (coil 1 on +x, coil 4 on
+y, coil 7 on -x, coil 10 on -y) and 0-based in arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple, Union

import numpy as np

MU0 = 4e-7 * math.pi
N_TEETH = 12

TOOTH_ANGLES = 2.0 * np.pi * np.arange(N_TEETH) / N_TEETH
_COS = np.cos(TOOTH_ANGLES)
_SIN = np.sin(TOOTH_ANGLES)
# exact zeros on the axes keep the x/y channels free of 1e-17 crosstalk
_COS[[3, 9]] = 0.0
_SIN[[0, 6]] = 0.0


def tooth_angle(k: int) -> float:
    """Mechanical angle of coil ``k`` (1-based)."""
    if not 1 <= k <= N_TEETH:
        raise ValueError(f"coil index must be in 1..{N_TEETH}, got {k}")
    return float(TOOTH_ANGLES[k - 1])


class Touchdown(RuntimeError):
    """The rotor reached the stator bore."""

    def __init__(self, rotor: "RotorState"):
        super().__init__(
            f"touchdown at t={rotor.t:.6g} s, r={math.hypot(rotor.x, rotor.y):.6g} m"
        )
        self.rotor = rotor


@dataclass(frozen=True)
class MotorParams:
    turns_N: float = 100.0
    tooth_area_A: float = 8e-5
    mu0: float = MU0
    nominal_gap_g0: float = 0.5e-3
    coil_resistance_R: float = 1.0
    rotor_mass: float = 0.15
    rotor_weight_bias: float = 0.0
    max_displacement_fraction: float = 0.9
    n_teeth: int = N_TEETH

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if self.n_teeth != N_TEETH:
            out.append(f"n_teeth must be {N_TEETH}, got {self.n_teeth}")
        for name in ("turns_N", "tooth_area_A", "mu0", "nominal_gap_g0", "rotor_mass"):
            value = getattr(self, name)
            if not value > 0:
                out.append(f"{name} must be > 0, got {value}")
        if not self.coil_resistance_R >= 0:
            out.append(f"coil_resistance_R must be >= 0, got {self.coil_resistance_R}")
        if not 0 < self.max_displacement_fraction < 1:
            out.append(
                "max_displacement_fraction must be in (0, 1), "
                f"got {self.max_displacement_fraction}"
            )
        if not math.isfinite(self.rotor_weight_bias):
            out.append(f"rotor_weight_bias must be finite, got {self.rotor_weight_bias}")
        return out

    @cached_property
    def inductance_constant(self) -> float:
        """N^2 mu0 A / 2, so that L(g) = inductance_constant / g."""
        return self.turns_N**2 * self.mu0 * self.tooth_area_A / 2.0

    @property
    def min_gap(self) -> float:
        return (1.0 - self.max_displacement_fraction) * self.nominal_gap_g0

    @property
    def touchdown_radius(self) -> float:
        return self.max_displacement_fraction * self.nominal_gap_g0


class RotorState(NamedTuple):
    x: float = 0.0
    y: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    t: float = 0.0


def _zeros() -> np.ndarray:
    return np.zeros(N_TEETH)


@dataclass(frozen=True)
class CoilBank:
    """Per-coil electrical state at one instant."""

    current: np.ndarray = field(default_factory=_zeros)
    flux_linkage: np.ndarray = field(default_factory=_zeros)
    terminal_voltage: np.ndarray = field(default_factory=_zeros)
    back_emf: np.ndarray = field(default_factory=_zeros)


def bank_from_currents(currents, rotor: "RotorState", params: MotorParams) -> CoilBank:
    """Coil bank carrying ``currents`` with flux linkages consistent with the rotor position."""
    i = np.array(currents, dtype=float)
    g, _ = tooth_gaps(rotor.x, rotor.y, params)
    return CoilBank(current=i, flux_linkage=coil_inductance(g, params) * i)


# ---------------------------------------------------------------------------
# geometry and inductance


def gap_at_tooth(x: float, y: float, theta_k: float, params: MotorParams) -> float:
    """First-order air gap under the tooth at angle ``theta_k``.

    Clamped below at ``params.min_gap``; use :func:`tooth_gaps` to learn
    whether the clamp was hit.
    """
    g = params.nominal_gap_g0 - x * math.cos(theta_k) - y * math.sin(theta_k)
    return max(g, params.min_gap)


def tooth_gaps(x: float, y: float, params: MotorParams) -> tuple[np.ndarray, bool]:
    """Gaps under all 12 teeth and whether any of them was clamped."""
    g = params.nominal_gap_g0 - x * _COS - y * _SIN
    lo = params.min_gap
    clamped = bool((g < lo).any())
    if clamped:
        g = np.maximum(g, lo)
    return g, clamped


def _gaps(x: float, y: float, params: MotorParams) -> np.ndarray:
    return np.maximum(params.nominal_gap_g0 - x * _COS - y * _SIN, params.min_gap)


def coil_inductance(g, params: MotorParams):
    """L = N^2 mu0 A / (2 g).  Accepts a scalar or an array of gaps."""
    if np.any(np.asarray(g) <= 0):
        raise ValueError(f"air gap must be positive, got {g}")
    return params.inductance_constant / g


def coil_voltage(i, di_dt, g, dg_dt, params: MotorParams, back_emf=0.0):
    """Terminal voltage of a coil with a time-varying gap.

    v = R i + L di/dt + i dL/dg dg/dt + E_b with dL/dg = -L/g.  With
    ``dg_dt == 0`` the motional term vanishes and this is the plain
    quasi-static coil equation.
    """
    L = coil_inductance(g, params)
    dL_dg = -L / g
    return params.coil_resistance_R * i + L * di_dt + i * dL_dg * dg_dt + back_emf


# ---------------------------------------------------------------------------
# force


def coenergy(x: float, y: float, currents, params: MotorParams) -> float:
    """W = sum_k L_k(g_k) i_k^2 / 2 at fixed currents."""
    g, _ = tooth_gaps(x, y, params)
    i = np.asarray(currents, dtype=float)
    return float(0.5 * np.sum(params.inductance_constant / g * i * i))


def radial_force(rotor: RotorState, currents, params: MotorParams) -> tuple[float, float]:
    """Radial force on the rotor from the gradient of the coil coenergy.

    dL_k/dx = (L_k / g_k) cos(theta_k), and likewise with sin for y, so
    F = sum_k i_k^2 L_k / (2 g_k) (cos theta_k, sin theta_k).
    """
    g = _gaps(rotor[0], rotor[1], params)
    i = np.asarray(currents, dtype=float)
    w = (0.5 * params.inductance_constant) * (i * i) / (g * g)
    return float(w @ _COS), float(w @ _SIN)


# ---------------------------------------------------------------------------
# integration


def _rk4(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def electrical_step(
    bank: CoilBank,
    applied_voltage,
    rotor: RotorState,
    dt: float,
    params: MotorParams,
) -> CoilBank:
    """Advance all coils one step under voltage drive.

    States are flux linkages, d(lambda)/dt = v - R i - E_b with
    i = lambda / L(g).  The gaps are held at the rotor position passed in.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    g, _ = tooth_gaps(rotor.x, rotor.y, params)
    L = coil_inductance(g, params)
    v = np.asarray(applied_voltage, dtype=float)
    R = params.coil_resistance_R
    emf = bank.back_emf

    lam = _rk4(lambda _, lam: v - R * lam / L - emf, 0.0, bank.flux_linkage, dt)
    return CoilBank(lam / L, lam, v.copy(), emf)


def current_drive_step(
    bank: CoilBank,
    current_cmd,
    rotor: RotorState,
    dt: float,
    params: MotorParams,
) -> CoilBank:
    """Impose commanded currents (ideal current sources) and report voltages.

    di/dt is the backward difference against the previous bank currents;
    dg/dt comes from the rotor velocity.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    i = np.array(current_cmd, dtype=float)
    g = _gaps(rotor.x, rotor.y, params)
    L = params.inductance_constant / g
    di_dt = (i - bank.current) / dt
    dg_dt = -(rotor.vx * _COS + rotor.vy * _SIN)
    # same composition as coil_voltage, with L computed once
    v = params.coil_resistance_R * i + L * di_dt + i * (-L / g) * dg_dt + bank.back_emf
    return CoilBank(i, L * i, v, bank.back_emf)


ForceLike = Union[tuple[float, float], Callable[[RotorState], tuple[float, float]]]


def mechanical_step(
    rotor: RotorState,
    force: ForceLike,
    dt: float,
    params: MotorParams,
    disturbance: tuple[float, float] = (0.0, 0.0),
) -> RotorState:
    """One classical RK4 step of the point-mass rotor.

    ``force`` is either a constant ``(Fx, Fy)`` or a callable evaluated on
    the intermediate RK stages (stage time in ``RotorState.t``).  The
    weight bias acts along -y.  Raises :class:`Touchdown` when the new
    position reaches the bore.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    m = params.rotor_mass
    dx, dy = disturbance
    dy = dy - params.rotor_weight_bias
    x, y, vx, vy, t = rotor

    if callable(force):

        def acc(t, x, y, vx, vy):
            fx, fy = force(RotorState(x, y, vx, vy, t))
            return (fx + dx) / m, (fy + dy) / m

    else:
        const = ((force[0] + dx) / m, (force[1] + dy) / m)

        def acc(t, x, y, vx, vy):
            return const

    h = 0.5 * dt
    a1x, a1y = acc(t, x, y, vx, vy)
    a2x, a2y = acc(t + h, x + h * vx, y + h * vy, vx + h * a1x, vy + h * a1y)
    v2x, v2y = vx + h * a1x, vy + h * a1y
    a3x, a3y = acc(t + h, x + h * v2x, y + h * v2y, vx + h * a2x, vy + h * a2y)
    v3x, v3y = vx + h * a2x, vy + h * a2y
    a4x, a4y = acc(t + dt, x + dt * v3x, y + dt * v3y, vx + dt * a3x, vy + dt * a3y)
    v4x, v4y = vx + dt * a3x, vy + dt * a3y
    k = dt / 6.0
    new = RotorState(
        x + k * (vx + 2.0 * v2x + 2.0 * v3x + v4x),
        y + k * (vy + 2.0 * v2y + 2.0 * v3y + v4y),
        vx + k * (a1x + 2.0 * a2x + 2.0 * a3x + a4x),
        vy + k * (a1y + 2.0 * a2y + 2.0 * a3y + a4y),
        t + dt,
    )
    if math.hypot(new.x, new.y) >= params.touchdown_radius:
        raise Touchdown(new)
    return new
