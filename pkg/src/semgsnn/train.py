"""Surrogate-gradient training for :class:`~semgsnn.snn.SnnModel`.

The Heaviside spike has a zero-almost-everywhere derivative, so backprop
through time substitutes the fast-sigmoid derivative ``1 / (k|u - u_th| + 1)^2``
wherever dS/dU appears. Reverse mode is written out by hand over the
``t_sim``-step unrolled dynamics of both layers.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConfigError, InputError, StateError
from .snn import SnnModel, SpikeRecord, simulate

CHUNK = 16  # gradient reduction granularity; fixed so --threads cannot change results


@dataclass
class TrainConfig:
    k_slope: float = 25.0
    learning_rate: float = 0.5
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    loss_kind: str = "ce"
    reset_detach: bool = True
    momentum: float = 0.0
    threads: int = 1

    def __post_init__(self):
        if not self.k_slope > 0:
            raise ConfigError(f"train.k_slope must be > 0, got {self.k_slope}")
        if not self.learning_rate >= 0:
            raise ConfigError(f"train.learning_rate must be >= 0, got {self.learning_rate}")
        if self.loss_kind not in ("ce", "mse"):
            raise ConfigError(f"train.loss_kind must be 'ce' or 'mse', got {self.loss_kind!r}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("train.batch_size must be >= 1 and train.epochs >= 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"train.momentum must be in [0, 1), got {self.momentum}")


def surrogate_spike(u, u_th: float, k: float, mode: str = "hard"):
    """Spike activation and its surrogate derivative.

    ``mode="hard"`` gives the Heaviside (strict ``u > u_th``);
    ``mode="relaxed"`` gives the fast sigmoid ``x / (1 + k|x|)``. The
    derivative factor is the same in both modes.
    """
    x = np.asarray(u, dtype=float) - u_th
    grad = 1.0 / (k * np.abs(x) + 1.0) ** 2
    if mode == "hard":
        act = (x > 0).astype(float)
    elif mode == "relaxed":
        act = x / (1.0 + k * np.abs(x))
    else:
        raise ConfigError(f"unknown surrogate mode {mode!r}")
    return act, grad


def loss_and_grad(class_sums, labels, kind: str = "ce", scale: float = 1.0):
    """Mean loss over a batch and its gradient w.r.t. ``class_sums``.

    ``scale`` is ``population * t_sim``: class sums are turned into rates
    before the softmax (``ce``) or the squared error against a one-hot
    target (``mse``).
    """
    s = np.atleast_2d(np.asarray(class_sums, dtype=float))
    y = np.atleast_1d(np.asarray(labels))
    k = s.shape[1]
    if y.shape[0] != s.shape[0]:
        raise InputError("one label per row of class sums is required")
    if np.any((y < 0) | (y >= k)) or not np.issubdtype(y.dtype, np.integer):
        raise InputError(f"labels must be integers in [0, {k})")
    b = s.shape[0]
    z = s / scale
    onehot = np.zeros_like(z)
    onehot[np.arange(b), y] = 1.0
    if kind == "ce":
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        value = -logp[np.arange(b), y].mean()
        dz = (np.exp(logp) - onehot) / b
    elif kind == "mse":
        diff = z - onehot
        value = (diff * diff).mean(axis=1).mean()
        dz = 2.0 * diff / (k * b)
    else:
        raise ConfigError(f"unknown loss kind {kind!r}")
    return float(value), dz / scale


def loss(class_sums, label: int, kind: str = "ce", scale: float = 1.0) -> float:
    return loss_and_grad(np.asarray(class_sums)[None, :], [label], kind, scale)[0]


def backward(model: SnnModel, feats: np.ndarray, record: SpikeRecord, d_sums: np.ndarray,
             reset_detach: bool = True):
    """Reverse-mode pass over a recorded forward.

    ``d_sums`` is dLoss/d(class_sums), shape ``(B, classes)``. Returns
    ``(grad_in, grad_out)`` summed over the batch.
    """
    if record is None or record.u_hidden is None:
        raise StateError("backward needs the membrane traces of a forward pass")
    f = _as_batch(feats)
    t_sim, b, _ = record.u_out.shape
    th, beta, k = model.u_th, model.beta, record.k_slope
    w_out = model.weights_out
    g_out_spk = np.repeat(np.asarray(d_sums, dtype=float), model.population, axis=1)

    g_w_out = np.zeros_like(w_out)
    g_i_hid = np.zeros((b, model.hidden))
    g_uo = np.zeros((b, model.outputs))
    g_uh = np.zeros((b, model.hidden))
    for t in range(t_sim - 1, -1, -1):
        g_so = g_out_spk if reset_detach else g_out_spk - th * g_uo
        g_uo = g_so / (k * np.abs(record.u_out[t] - th) + 1.0) ** 2 + beta * g_uo
        g_w_out += record.s_hidden[t].T @ g_uo
        g_sh = g_uo @ w_out.T
        if not reset_detach:
            g_sh -= th * g_uh
        g_uh = g_sh / (k * np.abs(record.u_hidden[t] - th) + 1.0) ** 2 + beta * g_uh
        g_i_hid += g_uh
    return np.asarray(f.T @ g_i_hid), g_w_out


def _as_batch(feats):
    if sparse.issparse(feats):
        return feats
    return np.atleast_2d(np.asarray(feats, dtype=float))


def batch_gradients(model: SnnModel, feats: np.ndarray, labels: np.ndarray, cfg: TrainConfig,
                    spike_fn: str = "hard"):
    """Mean loss, gradients and class sums for a batch."""
    sums, rec = simulate(model, feats, spike_fn, cfg.k_slope)
    value, d_sums = loss_and_grad(sums, labels, cfg.loss_kind, model.population * model.t_sim)
    g_in, g_out = backward(model, feats, rec, d_sums, cfg.reset_detach)
    return value, g_in, g_out, sums


def _chunked_gradients(model: SnnModel, feats, labels, cfg: TrainConfig, pool):
    """Batch gradients reduced over fixed-size chunks in index order."""
    b = len(labels)
    bounds = [(i, min(i + CHUNK, b)) for i in range(0, b, CHUNK)]

    def work(span):
        lo, hi = span
        sums, rec = simulate(model, feats[lo:hi], "hard", cfg.k_slope)
        return sums, rec

    results = list(pool.map(work, bounds)) if pool is not None else [work(s) for s in bounds]
    sums = np.concatenate([r[0] for r in results])
    value, d_sums = loss_and_grad(sums, labels, cfg.loss_kind, model.population * model.t_sim)
    g_in = g_out = None
    for (lo, hi), (_, rec) in zip(bounds, results):
        gi, go = backward(model, feats[lo:hi], rec, d_sums[lo:hi], cfg.reset_detach)
        if g_in is None:
            g_in, g_out = gi, go
        else:
            g_in += gi
            g_out += go
    return value, g_in, g_out, sums


class Trainer:
    """Plain SGD (optional momentum) with seeded shuffling."""

    def __init__(self, model: SnnModel, cfg: TrainConfig):
        self.model = model.copy()
        self.cfg = cfg
        self.v_in = np.zeros_like(model.weights_in) if cfg.momentum else None
        self.v_out = np.zeros_like(model.weights_out) if cfg.momentum else None
        self.epoch = 0

    def train_epoch(self, feats: np.ndarray, labels: np.ndarray) -> dict:
        feats = _as_batch(feats)
        labels = np.asarray(labels, dtype=np.int64)
        if len(labels) == 0:
            raise InputError("training set is empty")
        cfg, m = self.cfg, self.model
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, self.epoch])))
        order = rng.permutation(len(labels))
        losses, correct = [], 0
        pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
        try:
            for lo in range(0, len(order), cfg.batch_size):
                idx = order[lo:lo + cfg.batch_size]
                value, g_in, g_out, sums = _chunked_gradients(m, feats[idx], labels[idx], cfg, pool)
                losses.append(value * len(idx))
                correct += int(np.sum(np.argmax(sums, axis=1) == labels[idx]))
                if cfg.momentum:
                    self.v_in *= cfg.momentum
                    self.v_in += g_in
                    self.v_out *= cfg.momentum
                    self.v_out += g_out
                    g_in, g_out = self.v_in, self.v_out
                g_in *= cfg.learning_rate
                g_out *= cfg.learning_rate
                m.weights_in -= g_in
                m.weights_out -= g_out
        finally:
            if pool is not None:
                pool.shutdown()
        self.epoch += 1
        return {"mean_loss": float(sum(losses) / len(labels)), "train_acc": correct / len(labels)}


def train_epoch(model: SnnModel, dataset, cfg: TrainConfig, epoch: int = 0):
    """One epoch over ``dataset = (features, labels)``; returns ``(model', metrics)``."""
    trainer = Trainer(model, cfg)
    trainer.epoch = epoch
    metrics = trainer.train_epoch(*dataset)
    return trainer.model, metrics


def accuracy(model: SnnModel, feats: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return float("nan")
    sums, _ = simulate(model, feats)
    return float(np.mean(np.argmax(sums, axis=1) == np.asarray(labels)))


def fit(model: SnnModel, train, test, cfg: TrainConfig, log_path=None):
    """Train for ``cfg.epochs``; optionally write the per-epoch CSV log.

    Returns ``(model, history)`` where history rows are
    ``(epoch, mean_loss, train_acc, test_acc, seed)``.
    """
    trainer = Trainer(model, cfg)
    history = []
    for epoch in range(cfg.epochs):
        metrics = trainer.train_epoch(*train)
        test_acc = accuracy(trainer.model, *test) if test is not None else float("nan")
        history.append((epoch, metrics["mean_loss"], metrics["train_acc"], test_acc, cfg.seed))
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "mean_loss", "train_acc", "test_acc", "seed"])
            for row in history:
                w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3]), row[4]])
    return trainer.model, history


@dataclass
class GradCheckReport:
    max_rel_error: float
    errors: dict = field(default_factory=dict)  # parameter name -> max relative error
    epsilon: float = 1e-5
    checked: int = 0


def grad_check(model: SnnModel, sample, epsilon: float = 1e-5, max_params: int = 500,
               k_slope: float = 25.0, loss_kind: str = "ce", seed: int = 0) -> GradCheckReport:
    """Central differences of the relaxed-forward loss against :func:`backward`.

    The reset term is differentiated through (no detach) so the analytic
    gradient is the exact gradient of the relaxed forward. Models with more
    than ``max_params`` parameters are checked on a seeded subsample.
    """
    if not epsilon > 0:
        raise ConfigError("epsilon must be > 0")
    feats, label = sample
    feats = np.atleast_2d(np.asarray(feats, dtype=float))
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    cfg = TrainConfig(k_slope=k_slope, loss_kind=loss_kind, reset_detach=False)
    _, g_in, g_out, _ = batch_gradients(model, feats, labels, cfg, "relaxed")

    def relaxed_loss(m: SnnModel) -> float:
        sums, _ = simulate(m, feats, "relaxed", k_slope)
        return loss_and_grad(sums, labels, loss_kind, m.population * m.t_sim)[0]

    params = [("weights_in", idx) for idx in np.ndindex(model.weights_in.shape)]
    params += [("weights_out", idx) for idx in np.ndindex(model.weights_out.shape)]
    if len(params) > max_params:
        rng = np.random.Generator(np.random.Philox(seed))
        params = [params[i] for i in sorted(rng.choice(len(params), max_params, replace=False))]
    analytic = {"weights_in": g_in, "weights_out": g_out}
    errors: dict[str, float] = {}
    probe = model.copy()
    for name, idx in params:
        w = getattr(probe, name)
        orig = w[idx]
        w[idx] = orig + epsilon
        up = relaxed_loss(probe)
        w[idx] = orig - epsilon
        down = relaxed_loss(probe)
        w[idx] = orig
        numeric = (up - down) / (2 * epsilon)
        a = analytic[name][idx]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        errors[name] = max(errors.get(name, 0.0), rel)
    worst = max(errors.values()) if errors else 0.0
    return GradCheckReport(worst if math.isfinite(worst) else float("inf"), errors, epsilon, len(params))
