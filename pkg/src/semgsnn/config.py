"""Flat run configuration with dotted keys.

Values are merged as defaults < config file < command-line flags. Defaults
are read off the owning modules' config dataclasses, so the CLI never
carries a second copy of a number. A config file holds ``key = value``
lines; ``#`` starts a comment.
"""
from __future__ import annotations

import dataclasses
import inspect
import math
from pathlib import Path

from .detect import (DEFAULT_AMP_FACTOR, DEFAULT_COUNT_THRESHOLD, TadConfig, amp_threshold_detect,
                     evaluate_detection)
from .encode import EncoderConfig
from .errors import ConfigError, SemgError
from .pipeline import EncodingSpec, SolverShape
from .signal import DEFAULT_ALPHA, FilterConfig
from .snn import DEFAULT_HIDDEN, SnnModel
from .synth import SynthConfig
from .train import TrainConfig

CODINGS = ("multi-delta", "delta", "rate")


class Key:
    def __init__(self, default, kind, help_text="", nullable=False):
        self.default = default
        self.kind = kind  # int, float, bool, str or tuple (of floats)
        self.help = help_text
        self.nullable = nullable

    def parse(self, name: str, raw):
        if not isinstance(raw, str):
            return raw
        text = raw.strip()
        if self.nullable and text.lower() in ("none", "null", ""):
            return None
        try:
            if self.kind is bool:
                low = text.lower()
                if low in ("1", "true", "yes", "on"):
                    return True
                if low in ("0", "false", "no", "off"):
                    return False
                raise ValueError(text)
            if self.kind is int:
                return int(text)
            if self.kind is float:
                return float(text)
            if self.kind is tuple:
                return tuple(float(v) for v in text.split(","))
            return text
        except ValueError:
            raise ConfigError(f"{name}: cannot parse {raw!r} as {self.kind.__name__}") from None

    def show(self) -> str:
        v = self.default
        if v is None:
            return "none"
        if isinstance(v, tuple):
            return ",".join(_num(x) for x in v)
        if isinstance(v, bool):
            return str(v).lower()
        return _num(v) if isinstance(v, (int, float)) else str(v)


def _num(v) -> str:
    if isinstance(v, float) and v.is_integer() and math.isfinite(v):
        return str(int(v))
    return str(v)


def _fields(cls, section: str, skip=(), **overrides) -> dict:
    out = {}
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        default = f.default
        if default is dataclasses.MISSING:
            continue
        if f.name in overrides:
            out[f"{section}.{f.name}"] = overrides[f.name]
            continue
        kind = tuple if isinstance(default, tuple) else type(default)
        out[f"{section}.{f.name}"] = Key(default, kind)
    return out


def _arg_default(fn, name):
    return inspect.signature(fn).parameters[name].default


KEYS: dict[str, Key] = {
    "run.seed": Key(0, int, "seed for every random stream"),
    "run.threads": Key(1, int, "worker threads; results do not depend on it"),
}
KEYS.update(_fields(SynthConfig, "synth", skip=("templates",),
                    duration_s=Key(None, float, "fixed stream length in seconds", nullable=True)))
KEYS["synth.split"] = Key(0.8, float, "train fraction per class")
KEYS.update(_fields(FilterConfig, "filter"))
KEYS["norm.alpha"] = Key(DEFAULT_ALPHA, float, "normalization scale")
KEYS["norm.median_floor"] = Key(None, float, "substitute for a zero neutral median", nullable=True)
KEYS.update(_fields(EncoderConfig, "encode",
                    delta=Key(None, float, "threshold step; none means theta_min/2", nullable=True)))
KEYS["encode.coding"] = Key(EncodingSpec.coding, str, "multi-delta, delta or rate")
KEYS.update(_fields(TadConfig, "tad",
                    channel_weights=Key(None, tuple, "per-channel omega", nullable=True)))
KEYS["baseline.count_threshold"] = Key(DEFAULT_COUNT_THRESHOLD, float, "spike-threshold window count")
KEYS["baseline.amp_factor"] = Key(DEFAULT_AMP_FACTOR, float, "amp-threshold level in neutral medians")
KEYS["baseline.window_ms"] = Key(_arg_default(amp_threshold_detect, "window_ms"), float)
KEYS["baseline.overlap"] = Key(_arg_default(amp_threshold_detect, "overlap"), float)
KEYS["eval.min_overlap"] = Key(_arg_default(evaluate_detection, "min_overlap"), float,
                               "overlap fraction of a truth interval to count a match")
KEYS["snn.hidden"] = Key(DEFAULT_HIDDEN, int, "hidden LIF width")
KEYS.update(_fields(SnnModel, "snn"))
KEYS.update(_fields(TrainConfig, "train", skip=("seed", "threads")))
KEYS["bench.detect_actions_per_class"] = Key(25, int)
KEYS["bench.distractors"] = Key(50, int)
KEYS["bench.train_per_class"] = Key(50, int)
KEYS["bench.test_per_class"] = Key(25, int)


class RunConfig:
    """Resolved configuration; every key has a value."""

    def __init__(self, values: dict | None = None):
        self.values = {k: key.default for k, key in KEYS.items()}
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, name: str, raw) -> None:
        if name not in KEYS:
            raise ConfigError(f"unknown config key {name!r}")
        self.values[name] = KEYS[name].parse(name, raw)

    def __getitem__(self, name: str):
        return self.values[name]

    def section(self, prefix: str) -> dict:
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.values.items()}

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        cfg = cls()
        if path is not None:
            for k, v in read_config_file(path).items():
                cfg.set(k, v)
        for k, v in (overrides or {}).items():
            cfg.set(k, v)
        return cfg

    # typed views, validated by the owning dataclasses

    def synth(self, **changes) -> SynthConfig:
        d = self.section("synth")
        d.pop("split")
        return _build(SynthConfig, {**d, **changes})

    def filter(self) -> FilterConfig:
        cfg = _build(FilterConfig, self.section("filter"))
        try:
            cfg.validate(self["synth.rate_hz"])
        except SemgError as e:
            raise ConfigError(str(e)) from None
        return cfg

    def encoder(self) -> EncoderConfig:
        d = self.section("encode")
        coding = d.pop("coding")
        if coding not in CODINGS:
            raise ConfigError(f"encode.coding must be one of {', '.join(CODINGS)}, got {coding!r}")
        return _build(EncoderConfig, d)

    def encoding(self) -> EncodingSpec:
        return EncodingSpec(self.encoder(), self["encode.coding"], self["run.seed"])

    def tad(self) -> TadConfig:
        return _build(TadConfig, self.section("tad"))

    def solver(self) -> SolverShape:
        return SolverShape(self["snn.t_fix"], self["snn.bin_len"], self["snn.bypass_solvers"])

    def model_kwargs(self) -> dict:
        return {"beta": self["snn.beta"], "u_th": self["snn.u_th"], "t_sim": self["snn.t_sim"],
                "t_fix": self["snn.t_fix"], "bin_len": self["snn.bin_len"],
                "bypass_solvers": self["snn.bypass_solvers"]}

    def train(self) -> TrainConfig:
        return _build(TrainConfig, {**self.section("train"), "seed": self["run.seed"],
                                    "threads": self["run.threads"]})

    def validate(self) -> None:
        """Run every owning module's invariants."""
        self.synth()
        self.filter()
        self.encoder()
        self.tad()
        self.train()
        for key in ("snn.hidden", "snn.population", "snn.t_sim", "run.threads"):
            if self[key] < 1:
                raise ConfigError(f"{key} must be >= 1, got {self[key]}")
        if not 0 < self["synth.split"] < 1:
            raise ConfigError(f"synth.split must be in (0, 1), got {self['synth.split']}")
        if not self["norm.alpha"] > 0:
            raise ConfigError(f"norm.alpha must be > 0, got {self['norm.alpha']}")
        if self["snn.bin_len"] < 1 or self["snn.t_fix"] % self["snn.bin_len"]:
            raise ConfigError("snn.t_fix must be a positive multiple of snn.bin_len")


def _build(cls, kwargs):
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{cls.__name__}: {e}") from None


def read_config_file(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise OSError(f"cannot read config file {path}: {e.strerror}") from e
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{n}: expected key = value")
        out[key.strip()] = value.strip()
    return out
