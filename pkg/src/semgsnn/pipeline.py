"""End-to-end wiring: raw stream -> spikes -> detections / features -> classes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import snn
from .detect import TadConfig, TadDetector, tad_detect_stream
from .encode import EncoderConfig, SpikeTensor, calibrate_theta, multi_delta_encode, rate_encode
from .errors import CalibrationError
from .signal import (DEFAULT_ALPHA, CalibrationProfile, FilterConfig, SignalBuffer, adaptive_normalize,
                     bandpass_filter, compute_calibration, rectify)

# filter start-up transient skipped before taking the neutral median
SETTLE_SAMPLES = 200


def rectified(raw: SignalBuffer, filter_cfg: FilterConfig | None = None) -> SignalBuffer:
    return rectify(bandpass_filter(raw, filter_cfg))


def calibrate(neutral_rect: SignalBuffer, action_rect: SignalBuffer, enc: EncoderConfig,
              alpha: float = DEFAULT_ALPHA, median_floor: float | None = None):
    """Neutral median then base threshold. Returns ``(profile, degenerate)``."""
    profile = compute_calibration(neutral_rect, alpha)
    action_norm = adaptive_normalize(action_rect, profile, median_floor)
    _, degenerate = calibrate_theta(action_norm, enc, profile)
    return profile, degenerate


def calibration_slices(rect: SignalBuffer, labels, busy=()) -> tuple[SignalBuffer, SignalBuffer]:
    """Neutral lead-in before the first label, and all labeled intervals joined.

    ``busy`` lists other non-neutral intervals (e.g. steady contractions)
    that must not fall inside the neutral slice.
    """
    if not labels:
        raise CalibrationError("calibration needs at least one labeled action")
    first = min(iv[0] for iv in list(labels) + list(busy))
    start = SETTLE_SAMPLES if first > 2 * SETTLE_SAMPLES else 0
    if first - start < 1:
        raise CalibrationError("no neutral samples before the first labeled action")
    neutral = rect.slice(start, first)
    action = np.concatenate([rect.samples[:, a:b] for a, b, *_ in labels], axis=1)
    return neutral, SignalBuffer(action, rect.rate_hz)


@dataclass
class EncodingSpec:
    """How a normalized stream becomes spikes (multi-delta or an ablation)."""

    enc: EncoderConfig = field(default_factory=EncoderConfig)
    coding: str = "multi-delta"  # "multi-delta", "delta" (N=1) or "rate"
    seed: int = 0

    def encode(self, norm: SignalBuffer, profile: CalibrationProfile) -> SpikeTensor:
        if self.coding == "rate":
            return rate_encode(norm, self.enc.n_trains, self.seed)
        if self.coding == "delta":
            single = EncoderConfig(self.enc.theta_min, self.enc.r_max, self.enc.delta, 1, self.enc.per_channel)
            return multi_delta_encode(norm, profile, single)
        return multi_delta_encode(norm, profile, self.enc)


def encode_stream(rect: SignalBuffer, profile: CalibrationProfile, spec: EncodingSpec,
                  median_floor: float | None = None) -> SpikeTensor:
    norm = adaptive_normalize(rect, profile, median_floor)
    return spec.encode(norm, profile)


def segment_features(spikes: SpikeTensor, intervals, model_like):
    """Stack feature vectors of ``spikes`` cut at each ``(onset, offset, ...)``.

    Raw-flatten features (solvers bypassed) are mostly zeros and come back
    as a CSR matrix; solver features are a dense array.
    """
    rows = [snn.features(spikes.slice(a, b), model_like) for a, b, *_ in intervals]
    width = snn.input_dim(spikes.channels, spikes.trains, model_like.t_fix, model_like.bin_len,
                          model_like.bypass_solvers)
    if model_like.bypass_solvers:
        return sparse.csr_matrix(np.array(rows, dtype=float).reshape(len(rows), width))
    return np.array(rows, dtype=float).reshape(len(rows), width)


@dataclass
class SolverShape:
    """Solver settings without weights, for building features before a model exists."""

    t_fix: int = 2000
    bin_len: int = 20
    bypass_solvers: bool = False


@dataclass
class Prediction:
    onset_sample: int
    offset_sample: int
    class_id: int
    class_sums: list
    energy: snn.EnergyReport


def infer_stream(spikes: SpikeTensor, model: snn.SnnModel, tad: TadConfig | None = None):
    """Detect actions then classify each one.

    Returns ``(predictions, stream_energy, detector)``. ``stream_energy``
    holds the encode and detect stages for the whole stream; each prediction
    carries its own classifier stages.
    """
    det = TadDetector(tad)
    segments = tad_detect_stream(spikes, detector=det)
    stream_energy = (snn.encode_ops(spikes.channels, spikes.steps, spikes.trains)
                     + snn.detect_ops(det.state.ops.active_steps))
    preds = []
    for seg in segments:
        f = snn.features(seg.spikes, model)
        sums, rec = snn.forward(model, f)
        preds.append(Prediction(seg.onset_sample, seg.offset_sample, snn.decode_population(sums),
                                sums.tolist(), snn.count_ops(model, f, rec)))
    return preds, stream_energy, det
