"""Synthetic benchmark: detection metrics, classification accuracy, energy.

The report is a plain dict written as JSON by the ``bench`` command; its
schema is documented in the README and carries ``version``.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from . import snn
from .config import RunConfig
from .detect import (TadDetector, amp_threshold_detect, evaluate_detection, spike_threshold_detect,
                     tad_detect_stream)
from .errors import ConfigError
from .pipeline import calibrate, calibration_slices, encode_stream, rectified, segment_features
from .signal import SignalBuffer
from .synth import LabeledStream, SynthDataset, generate_dataset, generate_stream
from .train import fit

BENCH_VERSION = 1
ABLATIONS = ("none", "normal-delta", "rate", "no-population", "no-solvers")


def ablated(cfg: RunConfig, ablate: str) -> RunConfig:
    """Copy of ``cfg`` with one component of the full pipeline removed."""
    if ablate not in ABLATIONS:
        raise ConfigError(f"--ablate must be one of {', '.join(ABLATIONS)}, got {ablate!r}")
    out = copy.deepcopy(cfg)
    change = {"normal-delta": ("encode.coding", "delta"), "rate": ("encode.coding", "rate"),
              "no-population": ("snn.population", 1), "no-solvers": ("snn.bypass_solvers", True)}
    if ablate in change:
        out.set(*change[ablate])
    return out


def overlaps(segment, intervals) -> bool:
    a, b = segment
    return any(min(b, e) - max(a, s) > 0 for s, e in intervals)


def detection_stream(cfg: RunConfig) -> LabeledStream:
    scfg = cfg.synth(actions_per_class=cfg["bench.detect_actions_per_class"],
                     distractors=cfg["bench.distractors"])
    return generate_stream(scfg, cfg["run.seed"])


def run_detection(cfg: RunConfig, stream: LabeledStream | None = None) -> dict:
    """All three detectors on one labeled stream with steady distractors."""
    stream = stream if stream is not None else detection_stream(cfg)
    floor = cfg["norm.median_floor"]
    rect = rectified(stream.signal, cfg.filter())
    neutral, action = calibration_slices(rect, stream.labels, stream.distractors)
    profile, degenerate = calibrate(neutral, action, cfg.encoder(), cfg["norm.alpha"], floor)
    spikes = encode_stream(rect, profile, cfg.encoding(), floor)
    truth = [lab[:2] for lab in stream.labels]
    min_overlap = cfg["eval.min_overlap"]
    rate = stream.signal.rate_hz

    det = TadDetector(cfg.tad())
    segs = [(s.onset_sample, s.offset_sample) for s in tad_detect_stream(spikes, detector=det)]
    tad = evaluate_detection(segs, truth, min_overlap, det.state.ops.as_dict()).as_dict()
    tad["distractor_emissions"] = sum(overlaps(s, stream.distractors) for s in segs)

    st_segs = spike_threshold_detect(spikes, cfg["tad.t_s"], cfg["baseline.count_threshold"], rate,
                                     cfg["baseline.window_ms"])
    st = evaluate_detection(st_segs, truth, min_overlap).as_dict()
    st["distractor_emissions"] = sum(overlaps(s, stream.distractors) for s in st_segs)

    level = cfg["baseline.amp_factor"] * float(np.mean(profile.median_per_channel))
    amp_segs = amp_threshold_detect(rect, level, rate, cfg["baseline.window_ms"], cfg["baseline.overlap"])
    amp = evaluate_detection(amp_segs, truth, min_overlap).as_dict()
    amp["distractor_emissions"] = sum(overlaps(s, stream.distractors) for s in amp_segs)

    energy = snn.encode_ops(spikes.channels, spikes.steps, spikes.trains) + snn.detect_ops(
        det.state.ops.active_steps)
    return {
        "stream": {"samples": stream.signal.length, "actions": len(stream.labels),
                   "distractors": len(stream.distractors)},
        "calibration": {"theta_min": _plain(profile.theta_min), "degenerate": degenerate},
        "methods": {"tad-lif": tad, "spike-threshold": st, "amp-threshold": amp},
        "energy": energy.as_dict(),
    }


@dataclass
class ClassificationData:
    dataset: SynthDataset
    rect: SignalBuffer
    profile: object
    degenerate: bool


def prepare_classification(cfg: RunConfig) -> ClassificationData:
    """Labeled stream split per class, calibrated on the training actions only."""
    n_tr, n_te = cfg["bench.train_per_class"], cfg["bench.test_per_class"]
    if n_tr < 1 or n_te < 1:
        raise ConfigError("bench.train_per_class and bench.test_per_class must be >= 1")
    scfg = cfg.synth(actions_per_class=n_tr + n_te, distractors=0)
    ds = generate_dataset(scfg, cfg["run.seed"], split=n_tr / (n_tr + n_te))
    rect = rectified(ds.stream.signal, cfg.filter())
    neutral, action = calibration_slices(rect, ds.train)
    profile, degenerate = calibrate(neutral, action, cfg.encoder(), cfg["norm.alpha"],
                                    cfg["norm.median_floor"])
    return ClassificationData(ds, rect, profile, degenerate)


def run_classification(cfg: RunConfig, data: ClassificationData | None = None,
                       model_seed: int | None = None, log_path=None) -> tuple[dict, snn.SnnModel]:
    """Train on oracle segments and score the held-out ones.

    Returns ``(report, model)``. Energy is the mean per test segment.
    """
    data = data if data is not None else prepare_classification(cfg)
    seed = cfg["run.seed"] if model_seed is None else model_seed
    spikes = encode_stream(data.rect, data.profile, cfg.encoding(), cfg["norm.median_floor"])
    shape = cfg.solver()
    train, test = data.dataset.train, data.dataset.test
    f_tr, f_te = segment_features(spikes, train, shape), segment_features(spikes, test, shape)
    y_tr = np.array([lab[2] for lab in train])
    y_te = np.array([lab[2] for lab in test])
    model = snn.init_model(f_tr.shape[1], cfg["snn.hidden"], cfg["synth.classes"], cfg["snn.population"],
                           seed=seed, **cfg.model_kwargs())
    tcfg = cfg.train()
    tcfg.seed = seed
    model, history = fit(model, (f_tr, y_tr), (f_te, y_te), tcfg, log_path)

    sums, rec = snn.simulate(model, f_te)
    per_seg = snn.count_ops(model)
    fc_out_ac = rec.hidden_spike_events * model.outputs / len(test)
    stages = per_seg.as_dict()["stages"]
    stages["fc_out"] = {"ac": fc_out_ac, "mac": 0, "pj": snn.EnergyReport.pj(1, 0) * fc_out_ac}
    energy = {
        "stages": stages,
        "total_pj": sum(v["pj"] for v in stages.values()),
        "fc_out_pj": stages["fc_out"]["pj"],
        "dense_fc_out_pj": snn.dense_fc_out_pj(model),
    }
    last = history[-1] if history else (None, float("nan"), float("nan"), float("nan"), seed)
    report = {
        "train_size": len(train),
        "test_size": len(test),
        "model_seed": seed,
        "variant": {"coding": cfg["encode.coding"], "n_trains": cfg["encode.n_trains"],
                    "population": model.population, "bypass_solvers": model.bypass_solvers,
                    "hidden": model.hidden, "t_sim": model.t_sim},
        "final_loss": last[1],
        "train_acc": last[2],
        "test_acc": float(np.mean(np.argmax(sums, axis=1) == y_te)),
        "calibration": {"theta_min": _plain(data.profile.theta_min), "degenerate": data.degenerate},
        "energy_per_segment": energy,
    }
    return report, model


def run_bench(cfg: RunConfig, ablate: str = "none") -> dict:
    variant = ablated(cfg, ablate)
    cls, _ = run_classification(variant)
    return {
        "version": BENCH_VERSION,
        "ablate": ablate,
        "seed": cfg["run.seed"],
        "detection": run_detection(cfg),
        "classification": cls,
    }


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v
