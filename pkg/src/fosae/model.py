"""First-order state autoencoder.

``U`` predicate units each select ``A`` objects with their own attention
networks; ``P`` predicate networks, shared by every unit, turn each unit's
argument list into ``P`` booleans.  The ``U * P`` booleans feed a decoder
that reconstructs the object matrix.

Weights are held as stacks so one batched matmul evaluates every network of
a kind: attention stacks are indexed ``u * A + a``, predicate stacks by
``p``.  Stack slices are independent parameters; predicate weights are
shared by construction because every unit reads the same stack.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import nn
from .nn import DimensionError, Tensor

CHECKPOINT_VERSION = 1
_INFERENCE_CHUNK = 2048


class ConfigError(ValueError):
    pass


@dataclass
class FosaeConfig:
    num_objects: int = 9
    num_features: int = 15
    num_units: int = 9
    arity: int = 2
    num_predicates: int = 6
    attention_hidden: int = 128
    pn_hidden: int = 64
    decoder_hidden: int = 512
    tau_start: float = 5.0
    tau_min: float = 0.7
    # None: chosen so tau_min is reached at 80% of the epochs
    tau_decay: float | None = None
    epochs: int = 300
    batch_size: int = 100
    learning_rate: float = 1e-3
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("num_objects", "num_features", "num_units", "arity", "num_predicates",
                     "attention_hidden", "pn_hidden", "decoder_hidden", "epochs", "batch_size"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.arity > self.num_objects:
            raise ConfigError(f"arity must be in [1, {self.num_objects}], got {self.arity}")
        if not self.tau_start >= self.tau_min > 0:
            raise ConfigError(f"need tau_start >= tau_min > 0, got {self.tau_start}, {self.tau_min}")
        if self.tau_decay is not None and not 0 < self.tau_decay <= 1:
            raise ConfigError(f"tau_decay must be in (0, 1], got {self.tau_decay}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def num_propositions(self):
        return self.num_units * self.num_predicates

    @property
    def effective_tau_decay(self):
        if self.tau_decay is not None:
            return self.tau_decay
        return (self.tau_min / self.tau_start) ** (1.0 / max(1.0, 0.8 * self.epochs))

    def replace(self, **changes):
        data = asdict(self)
        data.update(changes)
        return FosaeConfig(**data)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self):
        return asdict(self)


def anneal_tau(epoch, config: FosaeConfig):
    """Exponential temperature decay clamped at ``tau_min``."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return max(config.tau_min, config.tau_start * config.effective_tau_decay**epoch)


def _glorot(rng, shape, dtype):
    fan_in, fan_out = shape[-2], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


# (name, stacked shape) for every parameter, in checkpoint order within a network
def _param_shapes(c: FosaeConfig):
    ua, nf, af, up = c.num_units * c.arity, c.num_objects * c.num_features, c.arity * c.num_features, c.num_propositions
    return {
        "att_w1": (ua, nf, c.attention_hidden),
        "att_b1": (ua, 1, c.attention_hidden),
        "att_w2": (ua, c.attention_hidden, c.num_objects),
        "att_b2": (ua, 1, c.num_objects),
        "pn_w1": (c.num_predicates, af, c.pn_hidden),
        "pn_b1": (c.num_predicates, 1, c.pn_hidden),
        "pn_w2": (c.num_predicates, c.pn_hidden, 2),
        "pn_b2": (c.num_predicates, 1, 2),
        "dec_w1": (up, c.decoder_hidden),
        "dec_b1": (c.decoder_hidden,),
        "dec_w2": (c.decoder_hidden, nf),
        "dec_b2": (nf,),
    }


@dataclass
class FosaeModel:
    config: FosaeConfig
    params: dict
    # attention network evaluations performed (one per network per sample)
    attention_evaluations: int = field(default=0, compare=False)

    @classmethod
    def initialize(cls, config: FosaeConfig, rng=None):
        rng = np.random.default_rng(config.seed) if rng is None else rng
        dtype = np.dtype(config.dtype)
        params = {}
        for name, shape in _param_shapes(config).items():
            data = np.zeros(shape, dtype) if "_b" in name else _glorot(rng, shape, dtype)
            params[name] = Tensor(data, requires_grad=True, name=name)
        return cls(config, params)

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def copy(self):
        params = {k: Tensor(v.data.copy(), requires_grad=True, name=k) for k, v in self.params.items()}
        return FosaeModel(self.config, params)

    def weights_equal(self, other):
        return all(np.array_equal(self.params[k].data, other.params[k].data) for k in self.params)


@dataclass
class FosaeNoise:
    """Gumbel noise for one forward pass.

    ``attention`` is shaped (B, U, A, N) and ``predicates`` (B, U, P, 2).
    """

    attention: np.ndarray
    predicates: np.ndarray

    @classmethod
    def sample(cls, config: FosaeConfig, batch, rng):
        dt = np.dtype(config.dtype)
        c = config
        return cls(
            nn.sample_gumbel((batch, c.num_units, c.arity, c.num_objects), rng, dt),
            nn.sample_gumbel((batch, c.num_units, c.num_predicates, 2), rng, dt),
        )

    @classmethod
    def zeros(cls, config: FosaeConfig, batch):
        dt = np.dtype(config.dtype)
        c = config
        return cls(
            np.zeros((batch, c.num_units, c.arity, c.num_objects), dt),
            np.zeros((batch, c.num_units, c.num_predicates, 2), dt),
        )


@dataclass
class ForwardResult:
    reconstruction: Tensor  # (B, N, F)
    state: np.ndarray  # (B, U*P) bool
    attention: np.ndarray  # (B, U, A) object indices
    loss: Tensor
    args: Tensor  # (B, U, A, F)
    att: Tensor  # (B, U, A, N)
    bits: Tensor  # (B, U, P, 2)


def _batched(x, config: FosaeConfig, dtype):
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    single = data.ndim == 2
    if single:
        data = data[None]
    if data.shape[1:] != (config.num_objects, config.num_features):
        raise DimensionError(
            f"object set shape {data.shape[-2:]} does not match (N, F) = "
            f"({config.num_objects}, {config.num_features})"
        )
    return data.astype(dtype, copy=False), single


def extract_arguments(att, x):
    """Dot product of attention rows with the object matrix.

    ``att`` (..., N) against ``x`` (N, F) gives (..., F): each output row
    is the attention-weighted sum of object rows.
    """
    att = np.asarray(att, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if att.shape[-1] != x.shape[0]:
        raise DimensionError(f"attention length {att.shape[-1]} != object count {x.shape[0]}")
    return att @ x


def attend(model: FosaeModel, x, noise=None, tau=1.0):
    """Select arguments for every unit.

    Returns ``(args, att)`` with ``args`` (B, U, A, F) and ``att`` (B, U, A, N)
    as Tensors (batch axis dropped for a single (N, F) input).  ``noise`` is
    shaped like ``att``; ``None`` means zero noise.
    """
    c = model.config
    data, single = _batched(x, c, model.dtype)
    b, n, f = data.shape
    ua = c.num_units * c.arity
    p = model.params
    hidden = nn.relu(nn.linear(data.reshape(1, b, n * f), p["att_w1"], p["att_b1"]))
    logits = nn.linear(hidden, p["att_w2"], p["att_b2"])  # (UA, B, N)
    if noise is None:
        noise_t = np.zeros(logits.shape, model.dtype)
    else:
        noise = np.asarray(noise, dtype=model.dtype).reshape(b, c.num_units, c.arity, n)
        noise_t = noise.reshape(b, ua, n).transpose(1, 0, 2)
    att = nn.gumbel_softmax(logits, noise_t, tau)
    att = nn.transpose(att, (1, 0, 2))  # (B, UA, N)
    args = nn.matmul(att, Tensor(data))  # (B, UA, F)
    model.attention_evaluations += ua * b
    args = args.reshape(b, c.num_units, c.arity, f)
    att = att.reshape(b, c.num_units, c.arity, n)
    if single:
        return args[0], att[0]
    return args, att


def evaluate_predicates(model: FosaeModel, args, noise=None, tau=1.0):
    """Apply the shared predicate networks to each unit's arguments.

    Returns ``(bits, state)``: ``bits`` (B, U, P, 2) Gumbel-Softmax outputs
    and ``state`` (B, U*P) booleans, true where the first cell wins
    (ties count as true).
    """
    c = model.config
    args = args if isinstance(args, Tensor) else Tensor(np.asarray(args, dtype=model.dtype))
    single = args.data.ndim == 3
    if single:
        args = args.reshape(1, *args.shape)
    b, u, a, f = args.shape
    if (u, a, f) != (c.num_units, c.arity, c.num_features):
        raise DimensionError(f"args shape {args.shape[1:]} != (U, A, F) = ({c.num_units}, {c.arity}, {c.num_features})")
    p = model.params
    flat = args.reshape(1, b * u, a * f)
    # rowwise products keep the shared networks bit-identical across units
    hidden = nn.relu(nn.linear(flat, p["pn_w1"], p["pn_b1"], rowwise=True))
    logits = nn.linear(hidden, p["pn_w2"], p["pn_b2"], rowwise=True)  # (P, B*U, 2)
    if noise is None:
        noise_t = np.zeros(logits.shape, model.dtype)
    else:
        noise = np.asarray(noise, dtype=model.dtype).reshape(b, u, c.num_predicates, 2)
        noise_t = noise.transpose(2, 0, 1, 3).reshape(c.num_predicates, b * u, 2)
    bits = nn.gumbel_softmax(logits, noise_t, tau)
    bits = nn.transpose(bits.reshape(c.num_predicates, b, u, 2), (1, 2, 0, 3))
    state = (bits.data[..., 0] >= bits.data[..., 1]).reshape(b, u * c.num_predicates)
    if single:
        return bits[0], state[0]
    return bits, state


def decode(model: FosaeModel, z):
    """Reconstruct object matrices from (B, U*P) truth values in [0, 1]."""
    c = model.config
    z = z if isinstance(z, Tensor) else Tensor(np.asarray(z, dtype=model.dtype))
    single = z.data.ndim == 1
    if single:
        z = z.reshape(1, z.shape[0])
    if z.shape[-1] != c.num_propositions:
        raise DimensionError(f"decoder input length {z.shape[-1]} != U*P = {c.num_propositions}")
    p = model.params
    hidden = nn.relu(nn.linear(z, p["dec_w1"], p["dec_b1"]))
    out = nn.sigmoid(nn.linear(hidden, p["dec_w2"], p["dec_b2"]))
    out = out.reshape(z.shape[0], c.num_objects, c.num_features)
    return out[0] if single else out


def forward(model: FosaeModel, x, noise: FosaeNoise | None = None, tau=1.0):
    """attend -> evaluate_predicates -> decode, with the MSE reconstruction loss."""
    c = model.config
    data, _ = _batched(x, c, model.dtype)
    b = data.shape[0]
    args, att = attend(model, data, None if noise is None else noise.attention, tau)
    bits, state = evaluate_predicates(model, args, None if noise is None else noise.predicates, tau)
    truth = bits[:, :, :, 0].reshape(b, c.num_propositions)
    recon = decode(model, truth)
    loss = nn.mse_loss(recon, data)
    return ForwardResult(recon, state, np.argmax(att.data, axis=-1), loss, args, att, bits)


# ---------------------------------------------------------------------------
# Deterministic inference (pure numpy, no graph, no noise)


def _mlp(x, w1, b1, w2, b2, rowwise=False):
    if rowwise:
        h = np.maximum(np.matmul(x[..., :, None, :], w1[..., None, :, :])[..., 0, :] + b1, 0)
        return np.matmul(h[..., :, None, :], w2[..., None, :, :])[..., 0, :] + b2
    return np.maximum(x @ w1 + b1, 0) @ w2 + b2


def _attention_logits(model, data):
    p = {k: v.data for k, v in model.params.items()}
    b = data.shape[0]
    flat = data.reshape(1, b, -1)
    logits = _mlp(flat, p["att_w1"], p["att_b1"], p["att_w2"], p["att_b2"])  # (UA, B, N)
    return logits.transpose(1, 0, 2)


def predicate_logits(model: FosaeModel, args):
    """Raw predicate logits (B, U, P, 2) for hard argument tensors (B, U, A, F)."""
    p = {k: v.data for k, v in model.params.items()}
    args = np.asarray(args, dtype=model.dtype)
    b, u = args.shape[:2]
    logits = _mlp(args.reshape(1, b * u, -1), p["pn_w1"], p["pn_b1"], p["pn_w2"], p["pn_b2"],
                  rowwise=True)
    return logits.reshape(-1, b, u, 2).transpose(1, 2, 0, 3)


def assign_attention(model: FosaeModel, x):
    """Object index chosen by every attention, (B, U, A) (or (U, A))."""
    c = model.config
    data, single = _batched(x, c, model.dtype)
    out = np.empty((data.shape[0], c.num_units, c.arity), dtype=np.int64)
    for lo in range(0, data.shape[0], _INFERENCE_CHUNK):
        chunk = data[lo:lo + _INFERENCE_CHUNK]
        idx = np.argmax(_attention_logits(model, chunk), axis=-1)
        out[lo:lo + len(chunk)] = idx.reshape(len(chunk), c.num_units, c.arity)
    model.attention_evaluations += c.num_units * c.arity * data.shape[0]
    return out[0] if single else out


def encode_with_attention(model: FosaeModel, x):
    """Hard encoding: argmax attentions, argmax predicates.  Returns (state, indices)."""
    c = model.config
    data, single = _batched(x, c, model.dtype)
    idx = assign_attention(model, data)
    states = np.empty((data.shape[0], c.num_propositions), dtype=bool)
    for lo in range(0, data.shape[0], _INFERENCE_CHUNK):
        chunk = data[lo:lo + _INFERENCE_CHUNK]
        ci = idx[lo:lo + len(chunk)]
        args = chunk[np.arange(len(chunk))[:, None, None], ci]  # (B, U, A, F)
        logits = predicate_logits(model, args)
        states[lo:lo + len(chunk)] = (logits[..., 0] >= logits[..., 1]).reshape(len(chunk), -1)
    if single:
        return states[0], idx[0]
    return states, idx


def encode(model: FosaeModel, x):
    """Deterministic propositional state(s): bool array (U*P,) or (B, U*P)."""
    return encode_with_attention(model, x)[0]


def decode_np(model: FosaeModel, states):
    """Decoder output as a plain array, chunked for large batches."""
    states = np.asarray(states, dtype=model.dtype)
    single = states.ndim == 1
    states = states[None] if single else states
    p = {k: v.data for k, v in model.params.items()}
    c = model.config
    out = np.empty((states.shape[0], c.num_objects, c.num_features), dtype=model.dtype)
    for lo in range(0, states.shape[0], _INFERENCE_CHUNK):
        z = states[lo:lo + _INFERENCE_CHUNK]
        logits = _mlp(z, p["dec_w1"], p["dec_b1"], p["dec_w2"], p["dec_b2"])
        out[lo:lo + len(z)] = (0.5 * (np.tanh(0.5 * logits) + 1.0)).reshape(len(z), c.num_objects, c.num_features)
    return out[0] if single else out


def reconstruct(model: FosaeModel, x):
    """decode(encode(x)) through the deterministic path."""
    return decode_np(model, encode(model, x))


def count_parameters(model_or_config):
    config = model_or_config.config if isinstance(model_or_config, FosaeModel) else model_or_config
    return int(sum(np.prod(shape) for shape in _param_shapes(config).values()))


# ---------------------------------------------------------------------------
# Checkpoints: <dir>/manifest.json + <dir>/weights.bin
#
# weights.bin is little-endian float64.  Order: every attention network
# (unit-major, then arity-major), each as W1, b1, W2, b2; then every
# predicate network by index as W1, b1, W2, b2; then the decoder W1, b1,
# W2, b2.  Matrices are row-major (input-major).

_NETWORK_KEYS = (("att_w1", "att_b1", "att_w2", "att_b2"), ("pn_w1", "pn_b1", "pn_w2", "pn_b2"))
_DECODER_KEYS = ("dec_w1", "dec_b1", "dec_w2", "dec_b2")


def _ordered_blocks(config: FosaeConfig):
    """(param name, stack index or None) in checkpoint order."""
    order = []
    for keys, count in zip(_NETWORK_KEYS, (config.num_units * config.arity, config.num_predicates)):
        for i in range(count):
            order.extend((k, i) for k in keys)
    order.extend((k, None) for k in _DECODER_KEYS)
    return order


def flatten_weights(model: FosaeModel):
    parts = []
    for name, i in _ordered_blocks(model.config):
        data = model.params[name].data
        parts.append((data if i is None else data[i]).reshape(-1))
    return np.concatenate(parts).astype("<f8")


def unflatten_weights(config: FosaeConfig, flat):
    shapes = _param_shapes(config)
    dtype = np.dtype(config.dtype)
    arrays = {k: np.zeros(s, dtype) for k, s in shapes.items()}
    pos = 0
    for name, i in _ordered_blocks(config):
        target = arrays[name] if i is None else arrays[name][i]
        n = target.size
        target[...] = flat[pos:pos + n].reshape(target.shape)
        pos += n
    if pos != flat.size:
        raise ValueError(f"weight blob holds {flat.size} values, config needs {pos}")
    return FosaeModel(config, {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()})


def save_checkpoint(model: FosaeModel, directory, epoch=None, metrics=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "seed": model.config.seed,
        "epoch": epoch,
        "metrics": metrics or {},
        "num_parameters": count_parameters(model),
        "weights": "weights.bin",
        "dtype": "<f8",
    }
    flatten_weights(model).tofile(directory / "weights.bin")
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def load_checkpoint(directory):
    """Return ``(model, manifest)``."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format {manifest.get('format_version')}")
    config = FosaeConfig.from_dict(manifest["config"])
    flat = np.fromfile(directory / manifest["weights"], dtype="<f8")
    return unflatten_weights(config, flat), manifest
