"""Spike encoders for normalized sEMG.

Delta coding fires when the absolute change between adjacent samples reaches
a threshold. The multi-delta encoder runs N delta coders on an increasing
threshold ladder whose base is calibrated on action-state data so that the
pooled spike rate stays under a cap. Rate coding is kept for ablations.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateCalibrationWarning, InputError, ShapeError, StateError
from .signal import CalibrationProfile, SignalBuffer


@dataclass
class SpikeTensor:
    """Binary spikes indexed ``(channel, train, step)``."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 3:
            raise ShapeError(f"spike tensor must be 3-D (C, N, T), got shape {b.shape}")
        if b.dtype != np.uint8:
            if np.any((b != 0) & (b != 1)):
                raise InputError("spike tensor entries must be 0 or 1")
            b = b.astype(np.uint8)
        self.bits = b

    @property
    def channels(self) -> int:
        return self.bits.shape[0]

    @property
    def trains(self) -> int:
        return self.bits.shape[1]

    @property
    def steps(self) -> int:
        return self.bits.shape[2]

    def column_counts(self) -> np.ndarray:
        """Total spikes over all channels and trains at each step."""
        return self.bits.sum(axis=(0, 1), dtype=np.int64)

    def slice(self, start: int, stop: int) -> "SpikeTensor":
        return SpikeTensor(self.bits[:, :, start:stop])


@dataclass
class EncoderConfig:
    theta_min: float = 0.05
    r_max: float = 0.3
    delta: float | None = None  # None -> theta_min / 2
    n_trains: int = 10
    per_channel: bool = False

    def __post_init__(self):
        if self.delta is None:
            self.delta = self.theta_min / 2
        self.validate()

    def validate(self) -> None:
        if not self.theta_min > 0:
            raise ConfigError(f"encode.theta_min must be > 0, got {self.theta_min}")
        if not 0 < self.r_max <= 1:
            raise ConfigError(f"encode.r_max must be in (0, 1], got {self.r_max}")
        if not self.delta > 0:
            raise ConfigError(f"encode.delta must be > 0, got {self.delta}")
        if int(self.n_trains) != self.n_trains or self.n_trains < 1:
            raise ConfigError(f"encode.n_trains must be an integer >= 1, got {self.n_trains}")


def _as_2d(signal) -> np.ndarray:
    if isinstance(signal, SignalBuffer):
        return signal.samples
    x = np.asarray(signal, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def abs_diff(signal) -> np.ndarray:
    """|d(t) - d(t-1)| along the last axis, with 0 at t = 0."""
    x = _as_2d(signal)
    out = np.zeros_like(x)
    out[:, 1:] = np.abs(np.diff(x, axis=1))
    return out


def delta_encode(signal, theta: float) -> np.ndarray:
    """Delta coding of one channel (or each row of a 2-D array).

    s(t) = 1 iff |d(t) - d(t-1)| >= theta for t >= 1; s(0) = 0.
    """
    x = np.asarray(signal.samples if isinstance(signal, SignalBuffer) else signal, dtype=float)
    d = abs_diff(x)
    s = (d >= theta).astype(np.uint8)
    s[:, 0] = 0
    return s[0] if x.ndim == 1 else s


def spike_rate(train) -> float:
    t = np.asarray(train)
    if t.size == 0:
        raise InputError("spike rate of an empty train is undefined")
    return float(np.count_nonzero(t)) / t.size


def calibrate_theta(action_signal, cfg: EncoderConfig,
                    profile: CalibrationProfile | None = None):
    """Raise the base threshold on a ``delta`` grid until the rate cap holds.

    Returns ``(theta, degenerate)``. The candidate grid is
    ``theta_min + k * delta``; the smallest candidate whose pooled spike rate
    over all channels is at most ``r_max`` wins. Normalized input has
    ``|diff| <= 1``, so once a candidate passes 1.0 the search stops and
    returns ``1.0 + delta`` (all-zero trains) with a
    :class:`DegenerateCalibrationWarning`. With ``cfg.per_channel`` the search
    runs per channel and ``theta`` is an array.

    When ``profile`` is given its ``theta_min`` is updated in place.
    """
    x = _as_2d(action_signal)
    if x.size == 0 or x.shape[1] == 0:
        raise InputError("action calibration segment is empty")
    diffs = abs_diff(x)
    diffs[:, 0] = -1.0  # t = 0 never spikes

    def search(d: np.ndarray):
        k = 0
        while True:
            theta = cfg.theta_min + k * cfg.delta
            if theta > 1.0:
                return 1.0 + cfg.delta, True
            if np.count_nonzero(d >= theta) / d.size <= cfg.r_max:
                return theta, False
            k += 1

    if cfg.per_channel:
        found = [search(row) for row in diffs]
        theta = np.array([f[0] for f in found])
        degenerate = any(f[1] for f in found)
    else:
        theta, degenerate = search(diffs)
    if degenerate:
        warnings.warn("threshold search exceeded the normalized range without meeting "
                      f"r_max={cfg.r_max}; encoder will emit no spikes",
                      DegenerateCalibrationWarning, stacklevel=2)
    if profile is not None:
        profile.theta_min = theta
    return theta, degenerate


def threshold_ladder(theta_min, cfg: EncoderConfig) -> np.ndarray:
    """Thresholds ``theta_min + i * delta`` shaped ``(C or 1, N)``."""
    base = np.atleast_1d(np.asarray(theta_min, dtype=float))[:, None]
    return base + np.arange(cfg.n_trains)[None, :] * cfg.delta


def multi_delta_encode(signal, profile: CalibrationProfile, cfg: EncoderConfig) -> SpikeTensor:
    if profile.theta_min is None:
        raise StateError("profile has no theta_min; run threshold calibration first")
    x = _as_2d(signal)
    d = abs_diff(x)
    ladder = threshold_ladder(profile.theta_min, cfg)
    bits = d[:, None, :] >= ladder[:, :, None]
    bits[:, :, 0] = False
    return SpikeTensor(bits.astype(np.uint8))


def rate_encode(signal, n_trains: int, seed: int) -> SpikeTensor:
    """Bernoulli rate coding: P(spike at c, n, t) = signal[c, t]."""
    x = _as_2d(signal)
    if np.any((x < 0) | (x > 1)) or np.any(np.isnan(x)):
        raise InputError("rate coding needs signal values in [0, 1]")
    rng = np.random.Generator(np.random.Philox(seed))
    draws = rng.random((x.shape[0], n_trains, x.shape[1]))
    return SpikeTensor((draws < x[:, None, :]).astype(np.uint8))
