"""``semgsnn`` command line: synth, calibrate, encode, detect, train, infer, bench.

Every command writes its outputs plus a ``run.json`` manifest (resolved
config, seed, input and output hashes) into ``--out``. Exit codes: 0 ok,
1 validation error, 2 I/O error, 3 missing state or format version.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, io, snn
from .bench import ABLATIONS, run_bench
from .config import KEYS, RunConfig
from .detect import (TadDetector, amp_threshold_detect, evaluate_detection, spike_threshold_detect,
                     tad_detect_stream)
from .errors import SemgError, StateError
from .pipeline import calibrate, calibration_slices, encode_stream, infer_stream, rectified, segment_features
from .synth import generate_stream, stratified_split
from .train import fit

MANIFEST_VERSION = 1
METHODS = ("tad-lif", "spike-threshold", "amp-threshold")

# config sections that also get short flags (``--classes`` for ``synth.classes``)
SHORT_FLAGS = {
    "synth": ("synth",),
    "calibrate": ("norm", "encode", "filter"),
    "encode": ("encode", "norm", "filter"),
    "detect": ("tad", "baseline", "eval"),
    "train": ("train", "snn"),
    "infer": ("tad",),
    "bench": ("bench",),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser, command: str) -> None:
    taken = {a.lstrip("-") for act in p._actions for a in act.option_strings}
    sections = SHORT_FLAGS.get(command, ())
    leaves = [k.split(".", 1)[1] for k in KEYS if k.split(".", 1)[0] in sections]
    groups = {}
    for name, key in KEYS.items():
        section, leaf = name.split(".", 1)
        if section == "run":
            continue
        if section not in groups:
            groups[section] = p.add_argument_group(f"{section} settings")
        flags = [f"--{name}"]
        short = leaf.replace("_", "-")
        if section in sections and leaves.count(leaf) == 1 and short not in taken:
            flags.insert(0, f"--{short}")
        text = f"{key.help} (default: {key.show()})" if key.help else f"(default: {key.show()})"
        groups[section].add_argument(*flags, dest=f"cfg:{name}", metavar=key.kind.__name__.upper(),
                                     default=argparse.SUPPRESS, help=text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="semgsnn", description="Spike-based sEMG action detection and classification.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--out", required=True, help="output directory (created if missing)")
        p.add_argument("--config", help="file of key = value lines")
        p.add_argument("--seed", dest="cfg:run.seed", metavar="INT", default=argparse.SUPPRESS,
                       help=f"seed for every random stream (default: {KEYS['run.seed'].show()})")
        p.add_argument("--threads", dest="cfg:run.threads", metavar="INT", default=argparse.SUPPRESS,
                       help=f"worker threads; results do not depend on it (default: {KEYS['run.threads'].show()})")
        return p

    p = command("synth", "Generate a labeled synthetic sEMG stream.")
    _add_config_flags(p, "synth")

    p = command("calibrate", "Neutral median and base encoder threshold.")
    p.add_argument("--signal", help="stream whose lead-in is neutral (with --labels)")
    p.add_argument("--labels", help="label CSV marking the action intervals of --signal")
    p.add_argument("--neutral", help="neutral-state signal file")
    p.add_argument("--action", help="action-state signal file")
    _add_config_flags(p, "calibrate")

    p = command("encode", "Turn a raw signal into a spike file.")
    p.add_argument("--signal", required=True)
    p.add_argument("--profile", required=True, help="calibration profile JSON")
    _add_config_flags(p, "encode")

    p = command("detect", "Segment actions and optionally score against labels.")
    p.add_argument("--method", choices=METHODS, default="tad-lif")
    p.add_argument("--spikes", help="spike file (tad-lif, spike-threshold)")
    p.add_argument("--signal", help="raw signal file (amp-threshold)")
    p.add_argument("--profile", help="calibration profile JSON (amp-threshold)")
    p.add_argument("--labels", help="ground-truth label CSV")
    _add_config_flags(p, "detect")

    p = command("train", "Train the classifier on labeled segments of a spike file.")
    p.add_argument("--spikes", required=True)
    p.add_argument("--labels", required=True)
    _add_config_flags(p, "train")

    p = command("infer", "Detect then classify every action in a spike file.")
    p.add_argument("--spikes", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--labels", help="ground-truth label CSV for scoring")
    _add_config_flags(p, "infer")

    p = command("bench", "Detection, classification and energy on the synthetic benchmark.")
    p.add_argument("--ablate", choices=ABLATIONS, default="none")
    _add_config_flags(p, "bench")
    return parser


def _resolve(args) -> RunConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:")}
    cfg = RunConfig.load(args.config, overrides)
    cfg.validate()
    return cfg


class _Run:
    """Collects input/output hashes for the manifest."""

    def __init__(self, args, cfg: RunConfig):
        self.args, self.cfg = args, cfg
        self.out = Path(args.out)
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OSError(f"cannot create output directory {self.out}: {e.strerror}") from e
        self.inputs: dict = {}
        self.outputs: dict = {}
        self.extra: dict = {}

    def input(self, role: str, path, state: bool = False) -> Path:
        p = Path(path)
        if not p.is_file():
            if state:
                raise StateError(f"{role} file not found: {p}")
            raise FileNotFoundError(f"{role} file not found: {p}")
        self.inputs[role] = {"file": p.name, "sha256": io.file_sha256(p)}
        return p

    def output(self, name: str) -> Path:
        self.outputs[name] = None
        return self.out / name

    def finish(self) -> None:
        for name in self.outputs:
            self.outputs[name] = io.file_sha256(self.out / name)
        manifest = {
            "version": MANIFEST_VERSION,
            "command": self.args.command,
            "package_version": __version__,
            "seed": self.cfg["run.seed"],
            "config": self.cfg.as_dict(),
            "inputs": self.inputs,
            "outputs": self.outputs,
            **self.extra,
        }
        io.dump_json(self.out / "run.json", manifest)


def cmd_synth(run: _Run) -> None:
    cfg = run.cfg
    stream = generate_stream(cfg.synth(), cfg["run.seed"])
    io.write_signal(run.output("stream.semg"), stream.signal)
    io.write_labels(run.output("labels.csv"), stream.labels)
    run.extra["distractors"] = [list(d) for d in stream.distractors]


def cmd_calibrate(run: _Run) -> None:
    a, cfg = run.args, run.cfg
    fcfg = cfg.filter()
    if a.signal and a.labels:
        rect = rectified(io.read_signal(run.input("signal", a.signal)), fcfg)
        neutral, action = calibration_slices(rect, io.read_labels(run.input("labels", a.labels)))
    elif a.neutral and a.action:
        neutral = rectified(io.read_signal(run.input("neutral", a.neutral)), fcfg)
        action = rectified(io.read_signal(run.input("action", a.action)), fcfg)
    else:
        raise StateError("calibrate needs --signal with --labels, or --neutral with --action")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        profile, degenerate = calibrate(neutral, action, cfg.encoder(), cfg["norm.alpha"],
                                        cfg["norm.median_floor"])
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    io.write_profile(run.output("profile.json"), profile)
    run.extra["degenerate_calibration"] = degenerate


def cmd_encode(run: _Run) -> None:
    a, cfg = run.args, run.cfg
    raw = io.read_signal(run.input("signal", a.signal))
    profile = io.read_profile(run.input("profile", a.profile, state=True))
    spikes = encode_stream(rectified(raw, cfg.filter()), profile, cfg.encoding(), cfg["norm.median_floor"])
    io.write_spikes(run.output("spikes.txt"), spikes)


def _segments_csv(path, segments) -> None:
    io.write_labels(path, [(s, e, -1) for s, e in segments])


def cmd_detect(run: _Run) -> None:
    a, cfg = run.args, run.cfg
    ops: dict = {}
    if a.method == "amp-threshold":
        if not (a.signal and a.profile):
            raise StateError("amp-threshold needs --signal and --profile")
        raw = io.read_signal(run.input("signal", a.signal))
        profile = io.read_profile(run.input("profile", a.profile, state=True))
        rect = rectified(raw, cfg.filter())
        level = cfg["baseline.amp_factor"] * float(np.mean(profile.median_per_channel))
        segs = amp_threshold_detect(rect, level, raw.rate_hz, cfg["baseline.window_ms"], cfg["baseline.overlap"])
    else:
        if not a.spikes:
            raise StateError(f"{a.method} needs --spikes")
        spikes = io.read_spikes(run.input("spikes", a.spikes))
        if a.method == "tad-lif":
            det = TadDetector(cfg.tad())
            segs = [(s.onset_sample, s.offset_sample) for s in tad_detect_stream(spikes, detector=det)]
            ops = det.state.ops.as_dict()
        else:
            segs = spike_threshold_detect(spikes, cfg["tad.t_s"], cfg["baseline.count_threshold"],
                                          cfg["synth.rate_hz"], cfg["baseline.window_ms"])
    _segments_csv(run.output("detections.csv"), segs)
    if a.labels:
        truth = [lab[:2] for lab in io.read_labels(run.input("labels", a.labels))]
        report = evaluate_detection(segs, truth, cfg["eval.min_overlap"], ops).as_dict()
    else:
        report = {"recall": None, "precision": None, "matches": [], "n_detected": len(segs), "op_counts": ops}
    io.dump_json(run.output("report.json"), {"version": io.REPORT_VERSION, "method": a.method, **report})


def cmd_train(run: _Run) -> None:
    a, cfg = run.args, run.cfg
    spikes = io.read_spikes(run.input("spikes", a.spikes))
    labels = io.read_labels(run.input("labels", a.labels))
    if not labels:
        raise StateError("train needs at least one labeled action")
    train, test = stratified_split(labels, cfg["synth.split"], cfg["run.seed"])
    shape = cfg.solver()
    f_tr, f_te = segment_features(spikes, train, shape), segment_features(spikes, test, shape)
    y_tr = np.array([lab[2] for lab in train])
    y_te = np.array([lab[2] for lab in test])
    classes = max(lab[2] for lab in labels) + 1
    model = snn.init_model(f_tr.shape[1], cfg["snn.hidden"], classes, cfg["snn.population"],
                           seed=cfg["run.seed"], **cfg.model_kwargs())
    model, history = fit(model, (f_tr, y_tr), (f_te, y_te), cfg.train(), run.output("train_log.csv"))
    io.write_model(run.output("model.json"), model)
    if history:
        run.extra["final"] = {"mean_loss": history[-1][1], "train_acc": history[-1][2],
                              "test_acc": history[-1][3]}


def cmd_infer(run: _Run) -> None:
    a, cfg = run.args, run.cfg
    spikes = io.read_spikes(run.input("spikes", a.spikes))
    model = io.read_model(run.input("model", a.model, state=True))
    preds, stream_energy, det = infer_stream(spikes, model, cfg.tad())
    io.write_labels(run.output("predictions.csv"), [(p.onset_sample, p.offset_sample, p.class_id) for p in preds])
    total = stream_energy
    for p in preds:
        total = total + p.energy
    energy = {
        "version": io.REPORT_VERSION,
        "stream": stream_energy.as_dict(),
        "total": total.as_dict(),
        "predictions": [{"onset_sample": p.onset_sample, "offset_sample": p.offset_sample,
                         "class_id": p.class_id, "class_sums": p.class_sums, "energy": p.energy.as_dict()}
                        for p in preds],
    }
    io.dump_json(run.output("energy.json"), energy)
    if a.labels:
        truth = io.read_labels(run.input("labels", a.labels))
        rep = evaluate_detection([(p.onset_sample, p.offset_sample) for p in preds],
                                 [t[:2] for t in truth], cfg["eval.min_overlap"], det.state.ops.as_dict())
        correct = sum(preds[j].class_id == truth[i][2] for i, j in rep.matches)
        io.dump_json(run.output("report.json"), {
            "version": io.REPORT_VERSION, "method": "tad-lif", **rep.as_dict(),
            "classified_correct": correct,
            "accuracy_on_matched": correct / len(rep.matches) if rep.matches else None,
        })


def cmd_bench(run: _Run) -> None:
    io.dump_json(run.output("bench.json"), run_bench(run.cfg, run.args.ablate))


COMMANDS = {"synth": cmd_synth, "calibrate": cmd_calibrate, "encode": cmd_encode, "detect": cmd_detect,
            "train": cmd_train, "infer": cmd_infer, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        run = _Run(args, cfg)
        COMMANDS[args.command](run)
        run.finish()
    except SemgError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
