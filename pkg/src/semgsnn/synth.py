"""Seeded synthetic sEMG: neutral-action-neutral streams with ground truth.

Each channel is band-limited Gaussian noise (the electrode baseline) plus,
inside every scheduled action, band-limited burst noise multiplied by a
smooth class envelope. Envelopes are sums of raised-cosine bumps with a
class-specific gain per channel, which is what makes classes separable.
Steady-state distractors are long flat contractions with random channel
gains; they are recorded separately from the labels.

All randomness comes from numpy's Philox4x64 counter-based generator keyed
by ``SeedSequence([seed, stream_index])``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import sosfilt

from .errors import ConfigError
from .signal import SignalBuffer, butter_bandpass_sos, sos_response

# Per class: gain on each of up to 8 channels, and (center, half-width, weight)
# bumps in fractions of the action duration. Edit freely; gains are relative
# to the action amplitude implied by snr_db.
DEFAULT_TEMPLATES = {
    0: {"gains": [1.00, 0.35, 0.30, 0.80, 0.40, 0.90, 0.30, 0.60],
        "bumps": [(0.5, 0.5, 1.0)]},
    1: {"gains": [0.30, 1.00, 0.85, 0.30, 0.90, 0.35, 0.60, 0.40],
        "bumps": [(0.3, 0.3, 1.0), (0.7, 0.3, 0.8)]},
    2: {"gains": [0.85, 0.30, 1.00, 0.35, 0.30, 0.60, 0.95, 0.35],
        "bumps": [(0.35, 0.35, 0.9), (0.7, 0.3, 1.0)]},
    3: {"gains": [0.35, 0.85, 0.30, 1.00, 0.60, 0.30, 0.40, 0.95],
        "bumps": [(0.25, 0.25, 1.0), (0.5, 0.25, 0.7), (0.75, 0.25, 0.9)]},
    4: {"gains": [0.60, 0.60, 0.30, 0.30, 1.00, 0.90, 0.35, 0.30],
        "bumps": [(0.4, 0.4, 1.0), (0.8, 0.2, 0.6)]},
    5: {"gains": [0.30, 0.30, 0.65, 0.65, 0.35, 0.30, 1.00, 0.90],
        "bumps": [(0.2, 0.2, 0.7), (0.55, 0.45, 1.0)]},
}


@dataclass
class SynthConfig:
    channels: int = 4
    rate_hz: float = 2000.0
    classes: int = 4
    actions_per_class: int = 25
    action_ms: tuple = (150.0, 600.0)
    gap_ms: tuple = (400.0, 1000.0)
    snr_db: float = 10.0
    lead_in_ms: float = 2000.0
    distractors: int = 0
    distractor_ms: tuple = (1200.0, 2000.0)
    amplitude_jitter: float = 0.15
    gain_jitter: float = 0.3  # per-channel, per-repetition relative gain spread
    band_hz: tuple = (20.0, 500.0)
    templates: dict = field(default_factory=lambda: DEFAULT_TEMPLATES)
    max_retries: int = 100
    duration_s: float | None = None  # fixed stream length; None -> as long as needed

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.channels < 1:
            raise ConfigError(f"synth.channels must be >= 1, got {self.channels}")
        if not self.rate_hz > 0:
            raise ConfigError(f"synth.rate_hz must be > 0, got {self.rate_hz}")
        if not 0 < self.band_hz[0] < self.band_hz[1] < self.rate_hz / 2:
            raise ConfigError(f"synth.band_hz must satisfy 0 < low < high < rate_hz/2, got {self.band_hz}")
        if self.classes < 1:
            raise ConfigError(f"synth.classes must be >= 1, got {self.classes}")
        if self.classes > len(self.templates):
            raise ConfigError(f"synth.classes={self.classes} exceeds the {len(self.templates)} envelope templates")
        if any(len(self.templates[c]["gains"]) < self.channels for c in range(self.classes)):
            raise ConfigError(f"templates define fewer gains than synth.channels={self.channels}")
        if self.actions_per_class < 0 or self.distractors < 0:
            raise ConfigError("synth.actions_per_class and synth.distractors must be >= 0")
        for key in ("action_ms", "gap_ms", "distractor_ms"):
            lo, hi = getattr(self, key)
            if not 0 < lo <= hi:
                raise ConfigError(f"synth.{key} must be an increasing positive range, got {(lo, hi)}")
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ConfigError("synth.snr_db must be finite or +inf")
        if not 0 <= self.amplitude_jitter < 1:
            raise ConfigError("synth.amplitude_jitter must be in [0, 1)")
        if not 0 <= self.gain_jitter < 1:
            raise ConfigError("synth.gain_jitter must be in [0, 1)")

    def samples(self, ms: float) -> int:
        return int(round(ms * self.rate_hz / 1000.0))


@dataclass
class LabeledStream:
    signal: SignalBuffer
    labels: list  # (onset, offset, class_id), half-open, sorted
    distractors: list = field(default_factory=list)  # (onset, offset)


def stream_rng(seed: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def raised_cosine(u: np.ndarray, center: float, half_width: float) -> np.ndarray:
    z = (u - center) / half_width
    return np.where(np.abs(z) < 1, 0.5 * (1 + np.cos(np.pi * z)), 0.0)


def class_envelope(template: dict, n: int) -> np.ndarray:
    """Normalized (peak 1) bump envelope over an action of ``n`` samples."""
    u = (np.arange(n) + 0.5) / n
    env = np.zeros(n)
    for center, half_width, weight in template["bumps"]:
        env += weight * raised_cosine(u, center, half_width)
    peak = env.max()
    return env / peak if peak > 0 else env


def plateau_envelope(n: int, ramp: int) -> np.ndarray:
    env = np.ones(n)
    ramp = min(ramp, n // 2)
    if ramp > 0:
        r = 0.5 * (1 - np.cos(np.pi * (np.arange(ramp) + 0.5) / ramp))
        env[:ramp] = r
        env[n - ramp:] = r[::-1]
    return env


class _BandNoise:
    """Unit-RMS band-limited Gaussian noise."""

    def __init__(self, cfg: SynthConfig):
        self.sos = butter_bandpass_sos(cfg.band_hz[0], cfg.band_hz[1], cfg.rate_hz, 4)
        f = np.linspace(0, cfg.rate_hz / 2, 8193)
        power = np.abs(sos_response(self.sos, f, cfg.rate_hz)) ** 2
        # discrete white noise spreads unit power evenly over [0, fs/2]
        self.scale = 1.0 / math.sqrt(trapezoid(power, f) / (cfg.rate_hz / 2))

    def __call__(self, rng: np.random.Generator, shape) -> np.ndarray:
        w = rng.standard_normal(shape)
        return sosfilt(self.sos, w, axis=-1) * self.scale


def _schedule(cfg: SynthConfig, rng: np.random.Generator):
    """Ordered events (kind, class_id, duration) and the gaps before them."""
    events = [("action", c) for c in range(cfg.classes) for _ in range(cfg.actions_per_class)]
    events += [("distractor", -1)] * cfg.distractors
    order = rng.permutation(len(events))
    events = [events[i] for i in order]
    a_lo, a_hi = cfg.samples(cfg.action_ms[0]), cfg.samples(cfg.action_ms[1])
    d_lo, d_hi = cfg.samples(cfg.distractor_ms[0]), cfg.samples(cfg.distractor_ms[1])
    g_lo, g_hi = cfg.samples(cfg.gap_ms[0]), cfg.samples(cfg.gap_ms[1])
    durations = [int(rng.integers(a_lo, a_hi + 1)) if kind == "action" else int(rng.integers(d_lo, d_hi + 1))
                 for kind, _ in events]
    lead = cfg.samples(cfg.lead_in_ms)
    total = None if cfg.duration_s is None else int(round(cfg.duration_s * cfg.rate_hz))
    for _ in range(cfg.max_retries):
        gaps = rng.integers(g_lo, g_hi + 1, size=len(events) + 1)
        need = lead + int(gaps.sum()) + sum(durations)
        if total is None or need <= total:
            return events, durations, gaps, lead, (need if total is None else total)
    raise ConfigError(
        f"could not place {len(events)} events in {cfg.duration_s} s after {cfg.max_retries} attempts")


def generate_stream(cfg: SynthConfig, seed: int, index: int = 0) -> LabeledStream:
    cfg.validate()
    rng = stream_rng(seed, index)
    noise = _BandNoise(cfg)
    events, durations, gaps, lead, total = _schedule(cfg, rng)

    x = np.zeros((cfg.channels, total))
    if math.isfinite(cfg.snr_db):
        x += noise(rng, (cfg.channels, total))
        amp = 10.0 ** (cfg.snr_db / 20.0)
    else:
        amp = 1.0
    labels, distractors = [], []
    t = lead + int(gaps[0])
    for k, ((kind, cls), n) in enumerate(zip(events, durations)):
        scale = amp * (1.0 + cfg.amplitude_jitter * (2 * rng.random() - 1))
        burst = noise(rng, (cfg.channels, n))
        if kind == "action":
            tpl = cfg.templates[cls]
            env = class_envelope(tpl, n)
            gains = np.asarray(tpl["gains"][:cfg.channels], dtype=float)
            gains = gains * (1.0 + cfg.gain_jitter * (2 * rng.random(cfg.channels) - 1))
            labels.append((t, t + n, cls))
        else:
            env = plateau_envelope(n, cfg.samples(50.0))
            gains = rng.uniform(0.5, 1.0, size=cfg.channels)
            distractors.append((t, t + n))
        shape = gains[:, None] * env[None, :]
        # snr_db fixes the mean power of the action component over its interval
        shape /= math.sqrt(np.mean(shape * shape))
        x[:, t:t + n] += scale * shape * burst
        t += n + int(gaps[k + 1])
    return LabeledStream(SignalBuffer(x, cfg.rate_hz), labels, distractors)


@dataclass
class SynthDataset:
    """A labeled stream plus a stratified split of its actions.

    ``train`` and ``test`` hold ``(onset, offset, class_id)`` triples into
    ``stream``; segments are cut at the true boundaries.
    """

    stream: LabeledStream
    train: list
    test: list

    def __iter__(self):
        return iter((self.train, self.test))


def generate_dataset(cfg: SynthConfig, seed: int, split: float = 0.8) -> SynthDataset:
    if not 0 < split < 1:
        raise ConfigError(f"split must be in (0, 1), got {split}")
    n_train = int(round(cfg.actions_per_class * split))
    if n_train < 1 or cfg.actions_per_class - n_train < 1:
        raise ConfigError(
            f"actions_per_class={cfg.actions_per_class} with split={split} leaves a class with no "
            "train or no test samples")
    stream = generate_stream(cfg, seed)
    train, test = stratified_split(stream.labels, split, seed)
    return SynthDataset(stream, train, test)


def stratified_split(labels, split: float, seed: int):
    """Per class, a seeded ``round(split * count)`` go to train, the rest to test."""
    rng = stream_rng(seed, 1 << 20)
    train, test = [], []
    for c in sorted({lab[2] for lab in labels}):
        mine = [lab for lab in labels if lab[2] == c]
        n_train = int(round(len(mine) * split))
        if n_train < 1 or n_train == len(mine):
            raise ConfigError(f"class {c} has {len(mine)} actions; split={split} leaves one side empty")
        order = rng.permutation(len(mine))
        train += [mine[i] for i in order[:n_train]]
        test += [mine[i] for i in order[n_train:]]
    return sorted(train), sorted(test)
