"""Readers and writers for the on-disk formats.

Text formats carry a one-line header ``<kind>,v<version>,key=value,...``;
JSON formats carry a top-level ``version``. A version this build does not
know raises :class:`~semgsnn.errors.VersionError`.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .encode import SpikeTensor
from .errors import InputError, VersionError
from .signal import CalibrationProfile, SignalBuffer
from .snn import SnnModel

SIGNAL_VERSION = 1
SPIKES_VERSION = 1
PROFILE_VERSION = 1
MODEL_VERSION = 1
REPORT_VERSION = 1


def _fmt(v: float) -> str:
    s = repr(float(v))
    if "e" in s or "n" in s:
        if not np.isfinite(v):
            raise InputError(f"cannot write non-finite sample {v}")
        s = np.format_float_positional(v, trim="-")
    return s


def _parse_header(line: str, kind: str, version: int) -> dict:
    parts = line.strip().split(",")
    if not parts or parts[0] != kind:
        raise InputError(f"not a {kind} file (header {line.strip()!r})")
    if len(parts) < 2 or parts[1] != f"v{version}":
        raise VersionError(f"{kind} file version {parts[1] if len(parts) > 1 else '?'} is not supported "
                           f"(expected v{version})")
    fields = {}
    for p in parts[2:]:
        key, _, value = p.partition("=")
        fields[key] = value
    return fields


def _rate_str(rate: float) -> str:
    return str(int(rate)) if float(rate).is_integer() else repr(float(rate))


def write_signal(path, buf: SignalBuffer) -> None:
    lines = [f"semg,v{SIGNAL_VERSION},channels={buf.channels},rate={_rate_str(buf.rate_hz)}"]
    lines += [",".join(_fmt(v) for v in row) for row in buf.samples.T.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_signal(path) -> SignalBuffer:
    with open(path) as fh:
        head = _parse_header(fh.readline(), "semg", SIGNAL_VERSION)
        c = int(head["channels"])
        data = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=float)
    if data.size == 0:
        data = np.zeros((0, c))
    if data.shape[1] != c:
        raise InputError(f"{path}: header says {c} channels, rows have {data.shape[1]}")
    return SignalBuffer(data.T.copy(), float(head["rate"]))


def write_spikes(path, spikes: SpikeTensor) -> None:
    c, n, t = spikes.bits.shape
    rows = spikes.bits.reshape(c * n, t).T + ord("0")
    body = b"\n".join(r.tobytes() for r in rows.astype(np.uint8))
    header = f"spikes,v{SPIKES_VERSION},channels={c},trains={n},steps={t}\n".encode()
    Path(path).write_bytes(header + body + (b"\n" if t else b""))


def read_spikes(path) -> SpikeTensor:
    raw = Path(path).read_bytes()
    first, _, rest = raw.partition(b"\n")
    head = _parse_header(first.decode(), "spikes", SPIKES_VERSION)
    c, n, t = int(head["channels"]), int(head["trains"]), int(head["steps"])
    flat = np.frombuffer(rest.replace(b"\n", b""), dtype=np.uint8)
    if flat.size != c * n * t:
        raise InputError(f"{path}: expected {t} rows of {c * n} bits")
    bits = flat - ord("0")
    if np.any(bits > 1):
        raise InputError(f"{path}: spike rows may only contain '0' and '1'")
    return SpikeTensor(bits.reshape(t, c, n).transpose(1, 2, 0).copy())


def write_labels(path, labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["onset_sample", "offset_sample", "class_id"])
        for onset, offset, cls in labels:
            w.writerow([int(onset), int(offset), int(cls)])


def read_labels(path) -> list[tuple[int, int, int]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows and rows[0] and rows[0][0] == "onset_sample":
        rows = rows[1:]
    return [(int(a), int(b), int(c)) for a, b, c in rows if (a, b, c)]


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path, kind: str, version: int) -> dict:
    obj = json.loads(Path(path).read_text())
    if not isinstance(obj, dict) or "version" not in obj:
        raise InputError(f"{path}: not a {kind} file (no version field)")
    if obj["version"] != version:
        raise VersionError(f"{path}: {kind} version {obj['version']} is not supported (expected {version})")
    return obj


def profile_to_dict(p: CalibrationProfile) -> dict:
    theta = p.theta_min
    if isinstance(theta, np.ndarray):
        theta = theta.tolist()
    return {"version": PROFILE_VERSION, "alpha": p.alpha,
            "median_per_channel": p.median_per_channel.tolist(), "theta_min": theta}


def write_profile(path, p: CalibrationProfile) -> None:
    dump_json(path, profile_to_dict(p))


def read_profile(path) -> CalibrationProfile:
    d = load_json(path, "calibration profile", PROFILE_VERSION)
    return CalibrationProfile(d["median_per_channel"], d["alpha"], d["theta_min"])


def model_to_dict(m: SnnModel) -> dict:
    return {
        "version": MODEL_VERSION,
        "dims": {"H": m.input_dim, "hidden": m.hidden, "classes": m.classes, "p": m.population},
        "lif": {"beta": m.beta, "u_th": m.u_th, "t_sim": m.t_sim},
        "solver": {"L": m.bin_len, "t_fix": m.t_fix, "bypass": m.bypass_solvers},
        "weights_in": m.weights_in.ravel().tolist(),
        "weights_out": m.weights_out.ravel().tolist(),
    }


def model_from_dict(d: dict) -> SnnModel:
    dims, lif, solver = d["dims"], d["lif"], d["solver"]
    h, hidden, k, p = dims["H"], dims["hidden"], dims["classes"], dims["p"]
    w_in = np.asarray(d["weights_in"], dtype=float)
    w_out = np.asarray(d["weights_out"], dtype=float)
    if w_in.size != h * hidden or w_out.size != hidden * k * p:
        raise InputError("model weight arrays do not match the declared dims")
    return SnnModel(w_in.reshape(h, hidden), w_out.reshape(hidden, k * p), k, p,
                    beta=lif["beta"], u_th=lif["u_th"], t_sim=lif["t_sim"],
                    t_fix=solver["t_fix"], bin_len=solver["L"], bypass_solvers=solver.get("bypass", False))


def write_model(path, m: SnnModel) -> None:
    Path(path).write_text(json.dumps(model_to_dict(m), sort_keys=True) + "\n")


def read_model(path) -> SnnModel:
    return model_from_dict(load_json(path, "model", MODEL_VERSION))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
