"""Spiking classifier: additive solvers, FC + LIF layers, population readout
and AC/MAC energy accounting.

A detected action ``(C, N, T)`` is summed over its N trains, padded or cut
to ``t_fix`` steps, binned in windows of ``bin_len`` and flattened into a
feature vector of length ``H = C * t_fix / bin_len``. The feature vector
drives a hidden LIF layer as a constant current for ``t_sim`` steps; hidden
spikes drive ``classes * population`` output LIF neurons, and the class with
the most output spikes (over its population and over time) wins.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import sparse

from .encode import SpikeTensor
from .errors import ConfigError, ShapeError

AC_PJ = Fraction("0.1")
MAC_PJ = Fraction("3.2")
DEFAULT_HIDDEN = 128


@dataclass
class SnnModel:
    weights_in: np.ndarray  # (H, hidden)
    weights_out: np.ndarray  # (hidden, classes * population)
    classes: int
    population: int = 100
    beta: float = 0.9
    u_th: float = 1.0
    t_sim: int = 30
    t_fix: int = 2000
    bin_len: int = 20
    bypass_solvers: bool = False  # raw C*N*T flatten instead of the two solvers

    def __post_init__(self):
        self.weights_in = np.asarray(self.weights_in, dtype=float)
        self.weights_out = np.asarray(self.weights_out, dtype=float)
        if self.weights_in.ndim != 2 or self.weights_out.ndim != 2:
            raise ShapeError("weight matrices must be 2-D")
        if self.weights_in.shape[1] != self.weights_out.shape[0]:
            raise ShapeError(
                f"hidden width mismatch: weights_in {self.weights_in.shape}, weights_out {self.weights_out.shape}")
        if self.classes < 1 or self.population < 1 or self.t_sim < 1:
            raise ConfigError("classes, population and t_sim must be >= 1")
        if self.weights_out.shape[1] != self.classes * self.population:
            raise ShapeError(
                f"weights_out has {self.weights_out.shape[1]} columns, expected classes*population="
                f"{self.classes * self.population}")
        if not 0 < self.beta < 1:
            raise ConfigError(f"snn.beta must be in (0, 1), got {self.beta}")
        if not self.u_th > 0:
            raise ConfigError(f"snn.u_th must be > 0, got {self.u_th}")
        if self.bin_len < 1 or self.t_fix % self.bin_len:
            raise ConfigError(f"snn.t_fix={self.t_fix} must be a positive multiple of snn.bin_len={self.bin_len}")

    @property
    def input_dim(self) -> int:
        return self.weights_in.shape[0]

    @property
    def hidden(self) -> int:
        return self.weights_in.shape[1]

    @property
    def outputs(self) -> int:
        return self.classes * self.population

    def copy(self) -> "SnnModel":
        return SnnModel(**{**self.__dict__, "weights_in": self.weights_in.copy(),
                           "weights_out": self.weights_out.copy()})


def input_dim(channels: int, trains: int, t_fix: int, bin_len: int, bypass_solvers: bool = False) -> int:
    return channels * trains * t_fix if bypass_solvers else channels * (t_fix // bin_len)


def init_model(input_dim: int, hidden: int = DEFAULT_HIDDEN, classes: int = 4, population: int = 100, seed: int = 0,
               **kwargs) -> SnnModel:
    """Weights uniform in +-1/sqrt(fan_in) from a Philox stream."""
    rng = np.random.Generator(np.random.Philox(seed))
    b_in = 1.0 / np.sqrt(input_dim)
    b_out = 1.0 / np.sqrt(hidden)
    w_in = rng.uniform(-b_in, b_in, size=(input_dim, hidden))
    w_out = rng.uniform(-b_out, b_out, size=(hidden, classes * population))
    return SnnModel(w_in, w_out, classes, population, **kwargs)


# -- additive solvers -------------------------------------------------------

def multi_train_sum(x: SpikeTensor | np.ndarray) -> np.ndarray:
    bits = x.bits if isinstance(x, SpikeTensor) else np.asarray(x)
    return bits.sum(axis=1, dtype=np.int64)


def fit_length(x: np.ndarray, t_fix: int) -> np.ndarray:
    """Right-pad with zeros or cut the tail so the last axis is ``t_fix``."""
    t = x.shape[-1]
    if t >= t_fix:
        return x[..., :t_fix]
    pad = [(0, 0)] * (x.ndim - 1) + [(0, t_fix - t)]
    return np.pad(x, pad)


def multi_step_sum(x: np.ndarray, bin_len: int, t_fix: int) -> np.ndarray:
    if bin_len < 1 or t_fix % bin_len:
        raise ConfigError(f"t_fix={t_fix} must be a positive multiple of bin_len={bin_len}")
    x = fit_length(np.asarray(x), t_fix)
    return x.reshape(x.shape[0], t_fix // bin_len, bin_len).sum(axis=2)


def flatten(x: np.ndarray) -> np.ndarray:
    """Channel-major concatenation of a ``(C, bins)`` array."""
    return np.asarray(x).reshape(-1)


def unflatten(f: np.ndarray, channels: int) -> np.ndarray:
    return np.asarray(f).reshape(channels, -1)


def features(spikes: SpikeTensor, model: SnnModel) -> np.ndarray:
    """Feature vector for one action under the model's solver settings."""
    if model.bypass_solvers:
        return fit_length(spikes.bits, model.t_fix).reshape(-1).astype(np.int64)
    return flatten(multi_step_sum(multi_train_sum(spikes), model.bin_len, model.t_fix))


# -- dynamics ---------------------------------------------------------------

def lif_step(u, s_prev, i_in, beta: float, u_th: float):
    """One LIF update with subtractive reset; spikes where u' > u_th."""
    u_new = beta * np.asarray(u, dtype=float) + i_in - np.asarray(s_prev, dtype=float) * u_th
    return u_new, (u_new > u_th).astype(float)


@dataclass
class SpikeRecord:
    """Per-step traces of one or more inferences.

    Arrays are ``(t_sim, batch, width)``; ``i_hidden`` is the static input
    current ``(batch, hidden)``.
    """

    i_hidden: np.ndarray
    u_hidden: np.ndarray
    s_hidden: np.ndarray
    u_out: np.ndarray
    s_out: np.ndarray
    spike_fn: str = "hard"
    k_slope: float = 25.0

    @property
    def hidden_spike_events(self) -> int:
        return int(self.s_hidden.sum())


def simulate(model: SnnModel, feats: np.ndarray, spike_fn: str = "hard", k_slope: float = 25.0):
    """Batched forward pass. Returns ``(class_sums (B, classes), record)``.

    ``spike_fn="relaxed"`` replaces the Heaviside with the fast sigmoid
    ``x / (1 + k|x|)`` so the whole forward is differentiable; it exists for
    gradient checking.
    """
    f = feats if sparse.issparse(feats) else np.atleast_2d(np.asarray(feats, dtype=float))
    if f.shape[1] != model.input_dim:
        raise ShapeError(f"feature length {f.shape[1]} != model input dim {model.input_dim}")
    b, t_sim = f.shape[0], model.t_sim
    i_hid = np.asarray(f @ model.weights_in)
    shape_h, shape_o = (t_sim, b, model.hidden), (t_sim, b, model.outputs)
    u_h, s_h = np.empty(shape_h), np.empty(shape_h)
    u_o, s_o = np.empty(shape_o), np.empty(shape_o)
    uh, sh = np.zeros((b, model.hidden)), np.zeros((b, model.hidden))
    uo, so = np.zeros((b, model.outputs)), np.zeros((b, model.outputs))
    for t in range(t_sim):
        uh = model.beta * uh + i_hid - sh * model.u_th
        sh = _spike(uh - model.u_th, spike_fn, k_slope)
        uo = model.beta * uo + sh @ model.weights_out - so * model.u_th
        so = _spike(uo - model.u_th, spike_fn, k_slope)
        u_h[t], s_h[t], u_o[t], s_o[t] = uh, sh, uo, so
    sums = s_o.sum(axis=0).reshape(b, model.classes, model.population).sum(axis=2)
    return sums, SpikeRecord(i_hid, u_h, s_h, u_o, s_o, spike_fn, k_slope)


def _spike(x: np.ndarray, spike_fn: str, k: float) -> np.ndarray:
    if spike_fn == "hard":
        return (x > 0).astype(float)
    if spike_fn == "relaxed":
        return x / (1.0 + k * np.abs(x))
    raise ConfigError(f"unknown spike function {spike_fn!r}")


def forward(model: SnnModel, f: np.ndarray):
    """Single-sample inference: ``(class_sums (classes,), record)``."""
    f = np.asarray(f)
    if f.ndim != 1:
        raise ShapeError("forward takes one feature vector; use simulate() for batches")
    sums, rec = simulate(model, f[None, :])
    return sums[0], rec


def decode_population(class_sums) -> int:
    """Argmax over class totals; ties go to the lowest class index."""
    return int(np.argmax(np.asarray(class_sums)))


def predict(model: SnnModel, feats: np.ndarray) -> np.ndarray:
    sums, _ = simulate(model, feats)
    return np.argmax(sums, axis=1)


# -- energy -----------------------------------------------------------------

STAGES = ("encode", "detect", "fc_in", "lif_hidden", "fc_out", "lif_out")


@dataclass
class EnergyReport:
    stages: dict = field(default_factory=lambda: {s: {"ac": 0, "mac": 0} for s in STAGES})

    @property
    def ac_count(self) -> int:
        return sum(v["ac"] for v in self.stages.values())

    @property
    def mac_count(self) -> int:
        return sum(v["mac"] for v in self.stages.values())

    @staticmethod
    def pj(ac: int, mac: int) -> float:
        return float(ac * AC_PJ + mac * MAC_PJ)

    @property
    def total_pj(self) -> float:
        return self.pj(self.ac_count, self.mac_count)

    def stage_pj(self, stage: str) -> float:
        return self.pj(self.stages[stage]["ac"], self.stages[stage]["mac"])

    def __add__(self, other: "EnergyReport") -> "EnergyReport":
        out = EnergyReport()
        for s in STAGES:
            for kind in ("ac", "mac"):
                out.stages[s][kind] = self.stages[s][kind] + other.stages[s][kind]
        return out

    def as_dict(self) -> dict:
        return {
            "ac_count": self.ac_count,
            "mac_count": self.mac_count,
            "total_pj": self.total_pj,
            "ac_pj": float(AC_PJ),
            "mac_pj": float(MAC_PJ),
            "stages": {s: {**v, "pj": self.stage_pj(s)} for s, v in self.stages.items()},
        }


def encode_ops(channels: int, samples: int, trains: int) -> EnergyReport:
    """One AC for the difference plus one per threshold compare, per sample per channel."""
    rep = EnergyReport()
    rep.stages["encode"]["ac"] = channels * samples * (1 + trains)
    return rep


def detect_ops(active_steps: int) -> EnergyReport:
    rep = EnergyReport()
    rep.stages["detect"]["mac"] = active_steps
    rep.stages["detect"]["ac"] = 2 * active_steps
    return rep


def count_ops(model: SnnModel, f=None, spike_record: SpikeRecord | None = None,
              extra: EnergyReport | None = None) -> EnergyReport:
    """Apply the AC/MAC rule table to one inference.

    fc_in is charged once (the static input is reused for every step); each
    LIF neuron costs 1 MAC + 2 AC per step; fc_out costs ``classes *
    population`` ACs per hidden spike. ``extra`` folds in encode/detect
    stage counts.
    """
    rep = EnergyReport()
    t = model.t_sim
    rep.stages["fc_in"]["mac"] = model.input_dim * model.hidden
    rep.stages["lif_hidden"]["mac"] = model.hidden * t
    rep.stages["lif_hidden"]["ac"] = 2 * model.hidden * t
    rep.stages["lif_out"]["mac"] = model.outputs * t
    rep.stages["lif_out"]["ac"] = 2 * model.outputs * t
    events = spike_record.hidden_spike_events if spike_record is not None else 0
    rep.stages["fc_out"]["ac"] = events * model.outputs
    return rep + extra if extra is not None else rep


def dense_fc_out_pj(model: SnnModel) -> float:
    """fc_out cost of a non-spiking equivalent: hidden x outputs MACs per step."""
    return EnergyReport.pj(0, model.hidden * model.outputs * model.t_sim)
