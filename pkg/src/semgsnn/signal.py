"""Streaming sEMG preprocessing: band-pass filtering, rectification and
adaptive normalization against a neutral-state median.

Signals are held as ``(channels, samples)`` float arrays inside a
:class:`SignalBuffer`. The band-pass filter is causal and keeps per-channel
state so a stream can be processed chunk by chunk with the same result as
processing it in one call.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import sosfilt

from .errors import CalibrationError, ConfigError, InputError

DEFAULT_RATE_HZ = 2000.0
DEFAULT_ALPHA = 16.0
DEFAULT_MEDIAN_FLOOR = 1e-6


@dataclass
class SignalBuffer:
    """Multichannel sampled signal, shape ``(channels, samples)``."""

    samples: np.ndarray
    rate_hz: float = DEFAULT_RATE_HZ

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2:
            raise InputError(f"signal must be 2-D (channels, samples), got {x.ndim}-D")
        if not self.rate_hz > 0:
            raise ConfigError(f"rate_hz must be positive, got {self.rate_hz}")
        self.samples = x

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]

    def slice(self, start: int, stop: int) -> "SignalBuffer":
        return SignalBuffer(self.samples[:, start:stop], self.rate_hz)


@dataclass
class FilterConfig:
    low_hz: float = 20.0
    high_hz: float = 500.0
    order: int = 4

    def validate(self, rate_hz: float) -> None:
        if not 0 < self.low_hz < self.high_hz:
            raise ConfigError(
                f"filter cutoffs must satisfy 0 < low_hz < high_hz, got {self.low_hz}, {self.high_hz}")
        if self.high_hz >= rate_hz / 2:
            raise ConfigError(
                f"filter.high_hz={self.high_hz} must be below Nyquist ({rate_hz / 2})")
        if int(self.order) != self.order or self.order < 1:
            raise ConfigError(f"filter.order must be a positive integer, got {self.order}")


@dataclass
class CalibrationProfile:
    median_per_channel: np.ndarray
    alpha: float = DEFAULT_ALPHA
    # scalar, or one value per channel in per-channel calibration mode
    theta_min: float | np.ndarray | None = None

    def __post_init__(self):
        self.median_per_channel = np.asarray(self.median_per_channel, dtype=float).ravel()
        if np.any(self.median_per_channel < 0):
            raise CalibrationError("channel medians must be non-negative")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.theta_min is not None:
            t = np.asarray(self.theta_min, dtype=float)
            if np.any(t <= 0):
                raise CalibrationError("theta_min must be positive once calibrated")
            self.theta_min = float(t) if t.ndim == 0 else t

    @property
    def channels(self) -> int:
        return self.median_per_channel.size


def butter_bandpass_sos(low_hz: float, high_hz: float, rate_hz: float, order: int = 4) -> np.ndarray:
    """Digital Butterworth band-pass as second-order sections.

    ``order`` is the order of the analog low-pass prototype, so the band-pass
    has ``2 * order`` poles packed into ``order`` sections. Each row is
    ``[b0, b1, b2, 1, a1, a2]``.
    """
    FilterConfig(low_hz, high_hz, order).validate(rate_hz)
    fs2 = 2.0 * rate_hz
    # pre-warped analog band edges (rad/s)
    w1 = fs2 * np.tan(np.pi * low_hz / rate_hz)
    w2 = fs2 * np.tan(np.pi * high_hz / rate_hz)
    bw = w2 - w1
    w0sq = w1 * w2

    k = np.arange(1, order + 1)
    proto = np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))

    # low-pass -> band-pass: each prototype pole p gives the roots of
    # s^2 - p*bw*s + w0^2
    pb = proto * bw / 2.0
    disc = np.sqrt(pb * pb - w0sq)
    poles_s = np.concatenate([pb + disc, pb - disc])

    poles_z = (fs2 + poles_s) / (fs2 - poles_s)
    # `order` zeros at s=0 map to z=+1, `order` zeros at infinity map to z=-1
    gain = np.real(bw ** order * fs2 ** order / np.prod(fs2 - poles_s))

    # conjugate pairs give one section each; real poles (odd orders with a
    # wide band) are paired with each other
    tol = 1e-9
    upper = poles_z[np.imag(poles_z) > tol]
    real = np.sort(np.real(poles_z[np.abs(np.imag(poles_z)) <= tol]))
    a1 = list(-2.0 * upper.real) + list(-(real[0::2] + real[1::2]))
    a2 = list(np.abs(upper) ** 2) + list(real[0::2] * real[1::2])
    if len(a1) != order:
        raise ConfigError("band-pass design produced an unpaired real pole")

    sos = np.zeros((order, 6))
    sos[:, 0] = 1.0
    sos[:, 2] = -1.0
    sos[:, 3] = 1.0
    sos[:, 4] = a1
    sos[:, 5] = a2
    sos[0, :3] *= gain
    return sos


def sos_response(sos: np.ndarray, freqs_hz, rate_hz: float) -> np.ndarray:
    """Complex frequency response of cascaded sections at ``freqs_hz``."""
    z1 = np.exp(-2j * np.pi * np.asarray(freqs_hz, dtype=float) / rate_hz)
    h = np.ones_like(z1)
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 * z1 + b2 * z1 * z1) / (a0 + a1 * z1 + a2 * z1 * z1)
    return h


class BandpassFilter:
    """Causal band-pass with per-channel state, owned by one stream."""

    def __init__(self, cfg: FilterConfig, rate_hz: float, channels: int):
        cfg.validate(rate_hz)
        self.cfg = cfg
        self.rate_hz = rate_hz
        self.sos = butter_bandpass_sos(cfg.low_hz, cfg.high_hz, rate_hz, cfg.order)
        self.zi = np.zeros((self.sos.shape[0], channels, 2))

    def reset(self) -> None:
        self.zi[:] = 0.0

    def process(self, chunk: np.ndarray) -> np.ndarray:
        x = np.asarray(chunk, dtype=float)
        if x.ndim != 2 or x.shape[0] != self.zi.shape[1]:
            raise InputError(f"expected ({self.zi.shape[1]}, n) chunk, got {x.shape}")
        y, self.zi = sosfilt(self.sos, x, axis=-1, zi=self.zi)
        return y


def bandpass_filter(raw: SignalBuffer, cfg: FilterConfig | None = None) -> SignalBuffer:
    """Filter a whole buffer from a zero initial state."""
    cfg = cfg or FilterConfig()
    if raw.length == 0:
        raise InputError("cannot filter an empty signal")
    filt = BandpassFilter(cfg, raw.rate_hz, raw.channels)
    return SignalBuffer(filt.process(raw.samples), raw.rate_hz)


def rectify(x: SignalBuffer) -> SignalBuffer:
    return SignalBuffer(np.abs(x.samples), x.rate_hz)


def compute_calibration(neutral_rectified: SignalBuffer, alpha: float = DEFAULT_ALPHA) -> CalibrationProfile:
    """Per-channel median of a rectified neutral-state segment."""
    if neutral_rectified.length == 0:
        raise CalibrationError("neutral calibration segment is empty")
    medians = np.median(neutral_rectified.samples, axis=1)
    return CalibrationProfile(medians, alpha=alpha)


def adaptive_normalize(rect: SignalBuffer, profile: CalibrationProfile,
                       median_floor: float | None = None) -> SignalBuffer:
    """Map rectified amplitudes into [0, 1] relative to the neutral median.

    ``min(1, max(0, (x - M) / (alpha * M)))`` per channel. A zero median is an
    error unless ``median_floor`` is given, in which case the floor is used
    for those channels.
    """
    if profile.channels != rect.channels:
        raise CalibrationError(
            f"profile has {profile.channels} channel medians, signal has {rect.channels} channels")
    m = profile.median_per_channel.copy()
    dead = m <= 0
    if np.any(dead):
        if median_floor is None:
            raise CalibrationError(
                f"zero neutral median on channel(s) {np.flatnonzero(dead).tolist()}; "
                "recalibrate or enable the median floor")
        m[dead] = median_floor
    m = m[:, None]
    out = np.clip((rect.samples - m) / (profile.alpha * m), 0.0, 1.0)
    return SignalBuffer(out, rect.rate_hz)


@dataclass
class Preprocessor:
    """Filter -> rectify -> normalize, carrying filter state across chunks."""

    profile: CalibrationProfile
    filter_cfg: FilterConfig = field(default_factory=FilterConfig)
    rate_hz: float = DEFAULT_RATE_HZ
    median_floor: float | None = None

    def __post_init__(self):
        self._filter = BandpassFilter(self.filter_cfg, self.rate_hz, self.profile.channels)

    def process(self, chunk: np.ndarray) -> np.ndarray:
        rect = np.abs(self._filter.process(chunk))
        return adaptive_normalize(SignalBuffer(rect, self.rate_hz), self.profile,
                                  self.median_floor).samples
