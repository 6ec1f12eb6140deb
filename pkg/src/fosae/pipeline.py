"""Training, evaluation and batch encoding."""

from __future__ import annotations

import csv
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .model import (
    FosaeConfig,
    FosaeModel,
    FosaeNoise,
    anneal_tau,
    count_parameters,
    encode,
    forward,
    reconstruct,
    save_checkpoint,
)

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """NaN loss during training; carries the last good model and history."""

    def __init__(self, message, model, history):
        super().__init__(message)
        self.model = model
        self.history = history


def reconstruction_metrics(model: FosaeModel, states):
    """Error of the deterministic decode(encode(x)) on a stack of object sets.

    ``mse`` is the per-element mean squared error, ``object_se`` the squared
    error summed over an object's features and averaged over objects, and
    ``block_accuracy`` the fraction of one-hot groups whose argmax survives.
    """
    states = np.asarray(states)
    recon = reconstruct(model, states).astype(np.float64)
    diff = recon - states
    mse = float(np.mean(diff * diff))
    return {
        "mse": mse,
        "object_se": mse * states.shape[-1],
        "block_accuracy": block_accuracy(recon, states),
    }


def block_accuracy(recon, states, groups=None):
    """Fraction of per-object one-hot groups reproduced by argmax.

    ``groups`` lists (start, stop) feature slices; defaults to the 8-puzzle
    layout (tile, x, y) when F == 15, else the whole row.
    """
    f = states.shape[-1]
    if groups is None:
        groups = [(0, 9), (9, 12), (12, 15)] if f == 15 else [(0, f)]
    hits = []
    for lo, hi in groups:
        hits.append(np.argmax(recon[..., lo:hi], -1) == np.argmax(states[..., lo:hi], -1))
    return float(np.mean(hits))


@dataclass
class History:
    """Per-epoch metrics; append-only."""

    rows: list = field(default_factory=list)

    def append(self, row):
        if self.rows and row["epoch"] <= self.rows[-1]["epoch"]:
            raise ValueError("epochs must increase")
        self.rows.append(dict(row))

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    def column(self, key):
        return [r.get(key) for r in self.rows]

    def write_csv(self, path):
        if not self.rows:
            return
        with open(path, "w", newline="") as fh:
            fields = list(dict.fromkeys(k for r in self.rows for k in r))
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(self.rows)


def train_states(dataset, split="train"):
    return dataset.states(split) if hasattr(dataset, "states") else np.asarray(dataset)


def train(config: FosaeConfig, data, test=None, checkpoint_dir=None, max_steps=None,
          eval_every=1, progress=None):
    """Minibatch Adam on the reconstruction loss.

    ``data`` is a :class:`~fosae.puzzle.Dataset` (train/test split taken from
    it) or an array of object sets (then ``test`` may be given separately).
    The temperature follows :func:`anneal_tau` per epoch.  The model with the
    best test MSE is returned (and checkpointed when ``checkpoint_dir`` is
    set).  ``max_steps`` caps the total number of updates.
    """
    x_train = train_states(data, "train").astype(config.dtype)
    if test is None and hasattr(data, "states"):
        test = data.states("test")
    x_test = None if test is None or len(test) == 0 else np.asarray(test)
    if x_train.shape[1:] != (config.num_objects, config.num_features):
        raise nn.DimensionError(f"data shape {x_train.shape[1:]} does not match config")

    rng = np.random.default_rng(config.seed)
    model = FosaeModel.initialize(config, rng)
    opt = nn.AdamState(learning_rate=config.learning_rate)
    params = model.parameters()
    history = History()
    best, best_mse, best_epoch = model.copy(), math.inf, -1
    last_good = model.copy()
    steps = 0
    n = len(x_train)
    bs = min(config.batch_size, n)
    started = time.perf_counter()

    for epoch in range(config.epochs):
        tau = anneal_tau(epoch, config)
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, bs):
            batch = x_train[order[lo:lo + bs]]
            noise = FosaeNoise.sample(config, len(batch), rng)
            model.zero_grad()
            result = forward(model, batch, noise, tau)
            loss = result.loss.item()
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at epoch {epoch}", last_good, history)
            result.loss.backward()
            try:
                nn.adam_step(params, opt)
            except nn.NumericError as exc:
                raise TrainingDiverged(str(exc), last_good, history) from exc
            losses.append(loss)
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break
        row = {"epoch": epoch, "tau": tau, "train_loss": float(np.mean(losses)), "steps": steps}
        last_epoch = epoch == config.epochs - 1 or (max_steps is not None and steps >= max_steps)
        if x_test is not None:
            if epoch % eval_every == 0 or last_epoch:
                metrics = reconstruction_metrics(model, x_test)
                row.update({f"test_{k}": v for k, v in metrics.items()})
                if metrics["mse"] < best_mse:
                    best, best_mse, best_epoch = model.copy(), metrics["mse"], epoch
        else:
            best, best_epoch = model, epoch
        row["seconds"] = time.perf_counter() - started
        history.append(row)
        last_good = model.copy()
        if progress is not None:
            progress(row)
        log.info("epoch %d tau %.3f loss %.5f test %s", epoch, tau, row["train_loss"], row.get("test_mse"))
        if max_steps is not None and steps >= max_steps:
            break

    best = best.copy() if best is model else best
    if checkpoint_dir is not None:
        metrics = {"best_epoch": best_epoch, "test_mse": None if best_mse is math.inf else best_mse}
        save_checkpoint(best, checkpoint_dir, epoch=best_epoch, metrics=metrics)
        history.write_csv(Path(checkpoint_dir) / "metrics.csv")
    return best, history


# ---------------------------------------------------------------------------


@dataclass
class TransitionLog:
    """Encoded transitions as int bitsets with multiplicities.

    Bit ``i`` of a state integer is proposition ``i`` (= u * P + p).
    """

    num_propositions: int
    counts: dict  # (pre, suc) -> multiplicity, first-seen order
    distinct_inputs: int = 0
    distinct_encoded: int = 0

    @property
    def pairs(self):
        return list(self.counts)

    @property
    def collisions(self):
        return self.distinct_inputs - self.distinct_encoded

    @property
    def collision_rate(self):
        return 0.0 if not self.distinct_inputs else self.collisions / self.distinct_inputs

    def states(self):
        seen = dict.fromkeys(s for pair in self.counts for s in pair)
        return list(seen)

    def __eq__(self, other):
        return (
            isinstance(other, TransitionLog)
            and self.num_propositions == other.num_propositions
            and list(self.counts.items()) == list(other.counts.items())
        )


def bits_to_int(bits):
    """Pack a boolean vector (bit i = entry i) into an int."""
    bits = np.asarray(bits, dtype=bool)
    packed = np.packbits(bits, bitorder="little")
    return int.from_bytes(packed.tobytes(), "little")


def bits_to_ints(states):
    states = np.asarray(states, dtype=bool)
    packed = np.packbits(states, axis=-1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def int_to_bits(value, width):
    return np.array([(value >> i) & 1 for i in range(width)], dtype=bool)


def encode_dataset(model: FosaeModel, pairs):
    """Encode (pre, suc) object-set pairs into a :class:`TransitionLog`.

    ``pairs`` is an array (M, 2, N, F) or a Dataset.  Also counts distinct
    input states against distinct encodings.
    """
    pairs = pairs.pairs if hasattr(pairs, "pairs") and not isinstance(pairs, np.ndarray) else np.asarray(pairs)
    m = pairs.shape[0]
    flat = pairs.reshape(m * 2, *pairs.shape[2:])
    codes = bits_to_ints(encode(model, flat))
    counts = Counter()
    for i in range(m):
        counts[(codes[2 * i], codes[2 * i + 1])] += 1
    inputs = {}
    for i in range(m * 2):
        inputs.setdefault(flat[i].tobytes(), codes[i])
    return TransitionLog(
        model.config.num_propositions,
        dict(counts),
        distinct_inputs=len(inputs),
        distinct_encoded=len(set(inputs.values())),
    )


# ---------------------------------------------------------------------------


GRID_FIELDS = ("arity", "units", "predicates", "propositions", "parameters", "test_mse",
               "test_object_se", "test_block_accuracy", "seconds", "error")


def eval_arity_grid(base: FosaeConfig, data, units, predicates, arities=(1, 2, 3),
                    csv_path=None, max_steps=None, progress=None):
    """Train every (A, U, P) combination and tabulate the test error.

    A failing run is recorded with its error message and the grid goes on.
    """
    rows = []
    writer = fh = None
    if csv_path is not None:
        fh = open(csv_path, "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=GRID_FIELDS)
        writer.writeheader()
    try:
        for a in arities:
            for u in units:
                for p in predicates:
                    row = {"arity": a, "units": u, "predicates": p, "propositions": u * p,
                           "parameters": None, "test_mse": None, "test_object_se": None,
                           "test_block_accuracy": None, "seconds": None, "error": ""}
                    started = time.perf_counter()
                    try:
                        cfg = base.replace(arity=a, num_units=u, num_predicates=p)
                        row["parameters"] = count_parameters(cfg)
                        model, history = train(cfg, data, max_steps=max_steps, eval_every=max(1, cfg.epochs))
                        metrics = reconstruction_metrics(model, train_states(data, "test"))
                        row.update({f"test_{k}": v for k, v in metrics.items()})
                    except Exception as exc:  # grid keeps going
                        log.warning("grid cell A=%d U=%d P=%d failed: %s", a, u, p, exc)
                        row["error"] = f"{type(exc).__name__}: {exc}"
                    row["seconds"] = time.perf_counter() - started
                    rows.append(row)
                    if writer is not None:
                        writer.writerow(row)
                        fh.flush()
                    if progress is not None:
                        progress(row)
    finally:
        if fh is not None:
            fh.close()
    return rows


def min_achieving_propositions(rows, arity, threshold=0.1, metric="test_mse"):
    """Smallest U*P whose run reached ``metric <= threshold`` (None if none did)."""
    ok = [r["propositions"] for r in rows
          if r["arity"] == arity and r.get(metric) is not None and r[metric] <= threshold]
    return min(ok) if ok else None
