"""High-frequency injection and synchronous demodulation.

The x estimate comes from the differential voltage of coils 1 and 7, the y
estimate from coils 4 and 10.  Each difference is multiplied by a carrier
at the injection frequency and averaged over a whole number of carrier
periods, which cancels the 2*fs mixing image exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .motor import N_TEETH

# 0-based array positions of the sensing coils
COIL_POS_X, COIL_POS_Y, COIL_NEG_X, COIL_NEG_Y = 0, 3, 6, 9


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class InjectionConfig:
    amplitude_Is: float = 0.1
    frequency_fs: float = 2000.0
    injected_coils: tuple[int, ...] = (1, 4, 7, 10)
    polarity: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    demod_phase_offset: float = math.pi / 2

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if not self.amplitude_Is > 0:
            out.append(f"amplitude_Is must be > 0, got {self.amplitude_Is}")
        if not self.frequency_fs > 0:
            out.append(f"frequency_fs must be > 0, got {self.frequency_fs}")
        bad = [k for k in self.injected_coils if not 1 <= k <= N_TEETH]
        if bad:
            out.append(f"injected_coils must be within 1..{N_TEETH}, got {bad}")
        if len(set(self.injected_coils)) != len(self.injected_coils):
            out.append("injected_coils must not repeat")
        if len(self.polarity) != len(self.injected_coils):
            out.append(
                f"polarity needs one entry per injected coil "
                f"({len(self.injected_coils)}), got {len(self.polarity)}"
            )
        return out

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.frequency_fs

    def pattern(self) -> np.ndarray:
        """Per-coil multiplier of the injection current (zero off the sensing coils)."""
        out = np.zeros(N_TEETH)
        for k, sign in zip(self.injected_coils, self.polarity):
            out[k - 1] = sign
        return out


def injection_current(t: float, cfg: InjectionConfig) -> float:
    return cfg.amplitude_Is * math.sin(cfg.omega * t)


def carrier(t: float, cfg: InjectionConfig) -> float:
    return math.sin(cfg.omega * t + cfg.demod_phase_offset)


def samples_per_period(dt: float, cfg: InjectionConfig) -> int:
    """Samples in one carrier period; raises unless the period is a whole number of dt."""
    n = 1.0 / (cfg.frequency_fs * dt)
    k = round(n)
    if k < 2 or abs(n - k) > 1e-9 * n:
        raise ValueError(
            f"carrier period 1/{cfg.frequency_fs} Hz is not an integer multiple of dt={dt}"
        )
    return k


@dataclass
class EstimatorState:
    """Moving-average demodulator buffers and the calibrated outputs.

    Mutated in place by :func:`demodulate` / :func:`estimate_position`;
    one owner advances it in sample order.
    """

    window_samples: int
    buffer_x: np.ndarray
    buffer_y: np.ndarray
    calibration_gain: tuple[float, float] = (1.0, 1.0)
    calibration_offset: tuple[float, float] = (0.0, 0.0)
    x_hat_raw: float = 0.0
    y_hat_raw: float = 0.0
    x_hat: float = 0.0
    y_hat: float = 0.0
    count: int = 0
    _pos: int = field(default=0, repr=False)

    @classmethod
    def create(
        cls,
        dt: float,
        cfg: InjectionConfig,
        window_periods: int = 1,
        calibration_gain=(1.0, 1.0),
        calibration_offset=(0.0, 0.0),
    ) -> "EstimatorState":
        if window_periods < 1:
            raise ValueError(f"window_periods must be >= 1, got {window_periods}")
        n = window_periods * samples_per_period(dt, cfg)
        return cls(
            window_samples=n,
            buffer_x=np.zeros(n),
            buffer_y=np.zeros(n),
            calibration_gain=tuple(calibration_gain),
            calibration_offset=tuple(calibration_offset),
        )

    @property
    def filled(self) -> bool:
        return self.count >= self.window_samples

    def _push(self, mixed_x: float, mixed_y: float | None) -> None:
        self.buffer_x[self._pos] = mixed_x
        if mixed_y is not None:
            self.buffer_y[self._pos] = mixed_y
        self._pos = (self._pos + 1) % self.window_samples
        self.count += 1

    def _mean(self, buf: np.ndarray) -> float:
        if self.count >= self.window_samples:
            return float(buf.sum()) / self.window_samples
        return float(buf[: self.count].sum()) / self.count


def demodulate(
    sample_diff: float, t: float, cfg: InjectionConfig, state: EstimatorState
) -> EstimatorState:
    """Single-channel demodulation into the x buffer of ``state``."""
    state._push(sample_diff * carrier(t, cfg), None)
    state.x_hat_raw = state._mean(state.buffer_x)
    return state


def estimate_position(v, t: float, cfg: InjectionConfig, state: EstimatorState) -> EstimatorState:
    """Demodulate the coil 1/7 and 4/10 voltage differences and calibrate."""
    c = carrier(t, cfg)
    state._push(
        (v[COIL_POS_X] - v[COIL_NEG_X]) * c,
        (v[COIL_POS_Y] - v[COIL_NEG_Y]) * c,
    )
    state.x_hat_raw = state._mean(state.buffer_x)
    state.y_hat_raw = state._mean(state.buffer_y)
    gx, gy = state.calibration_gain
    ox, oy = state.calibration_offset
    state.x_hat = gx * (state.x_hat_raw - ox)
    state.y_hat = gy * (state.y_hat_raw - oy)
    return state


@dataclass(frozen=True)
class Calibration:
    gain: float
    offset: float
    residual_rms: float


def calibrate(sweep) -> Calibration:
    """Affine least-squares fit of raw demodulator output against true displacement.

    ``sweep`` is an iterable of ``(displacement_m, raw_V)`` pairs.  Returns
    the inverse slope as the gain (m/V) and the intercept as the offset (V).
    """
    pts = np.asarray(list(sweep), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise CalibrationError("calibration needs at least two (displacement, raw) points")
    d, raw = pts[:, 0], pts[:, 1]
    if np.ptp(d) == 0:
        raise CalibrationError("calibration sweep has no displacement variation")
    A = np.column_stack([d, np.ones_like(d)])
    (slope, intercept), *_ = np.linalg.lstsq(A, raw, rcond=None)
    # a slope lost in roundoff of the raw values is no slope at all
    if not math.isfinite(slope) or abs(slope) * np.ptp(d) <= 1e-12 * np.abs(raw).max():
        raise CalibrationError("raw output does not vary with displacement")
    resid = raw - (slope * d + intercept)
    return Calibration(
        gain=float(1.0 / slope),
        offset=float(intercept),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
    )
