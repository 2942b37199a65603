"""Feed-forward networks (tanh hidden layers, affine output) and checkpoints."""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, ConfigError

CHECKPOINT_FORMAT = "hiddenterms-mlp"
CHECKPOINT_VERSION = 1


@dataclass
class Mlp:
    """A multilayer perceptron: affine -> tanh repeated, final layer affine.

    `widths` lists layer sizes including input and output; weights[l] has
    shape (widths[l], widths[l+1]). An optional fixed input normalization
    (x - input_shift) / input_scale is applied before the first layer; it is
    part of the network definition, not a trained parameter.
    """

    widths: list
    weights: list = field(repr=False)
    biases: list = field(repr=False)
    activation: str = "tanh"
    input_shift: np.ndarray = None
    input_scale: np.ndarray = None

    def __post_init__(self):
        if len(self.widths) < 2 or any(w <= 0 for w in self.widths):
            raise ConfigError(f"invalid layer widths {self.widths}")
        if self.activation != "tanh":
            raise ConfigError(f"unsupported activation {self.activation!r}")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.widths[l], self.widths[l + 1])
            if w.shape != expect or b.shape != (self.widths[l + 1],):
                raise ConfigError(
                    f"layer {l} has shapes {w.shape}/{b.shape}, expected {expect}")
        if (self.input_shift is None) != (self.input_scale is None):
            raise ConfigError("input_shift and input_scale must come together")
        if self.input_scale is not None:
            self.input_shift = np.asarray(self.input_shift, dtype=np.float64)
            self.input_scale = np.asarray(self.input_scale, dtype=np.float64)
            if self.input_shift.shape != (self.widths[0],) \
                    or self.input_scale.shape != (self.widths[0],):
                raise ConfigError("normalization vectors must match input width")
            if np.any(self.input_scale <= 0):
                raise ConfigError("input_scale entries must be positive")

    def normalize(self, x):
        if self.input_scale is None:
            return x
        return (x - self.input_shift) / self.input_scale

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flat_params(self):
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases)
                               for a in pair])

    def set_flat_params(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise ConfigError(
                f"parameter vector has {flat.size} entries, expected {self.n_params}")
        pos = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = flat[pos:pos + w.size].reshape(w.shape)
            pos += w.size
            b[...] = flat[pos:pos + b.size]
            pos += b.size

    def copy(self):
        return Mlp(list(self.widths), [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases], self.activation,
                   None if self.input_shift is None else self.input_shift.copy(),
                   None if self.input_scale is None else self.input_scale.copy())


def init_glorot(widths, seed, input_shift=None, input_scale=None):
    """Glorot-uniform weights (plus/minus sqrt(6/(fan_in+fan_out))), zero biases."""
    widths = [int(w) for w in widths]
    if len(widths) < 2 or any(w <= 0 for w in widths):
        raise ConfigError(f"invalid layer widths {widths}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(widths, weights, biases, input_shift=input_shift,
               input_scale=input_scale)


def forward(net, x):
    """Evaluate the network; accepts a single point (d,) or a batch (n, d)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.ndim != 2 or h.shape[1] != net.widths[0]:
        raise ConfigError(
            f"input shape {x.shape} does not match network input width {net.widths[0]}")
    h = net.normalize(h)
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if l != last:
            h = np.tanh(h)
    return h[0] if single else h


def save_checkpoint(net, path, init_seed=None, train_steps=0):
    """Write the architecture and parameters as versioned JSON.

    Format: a JSON object with keys `format`, `version`, `widths`,
    `activation`, `init_seed`, `train_steps`, and `params` (the flattened
    parameter vector, weights then bias per layer). Floats are serialized
    with full round-trip precision, so load_checkpoint restores every
    parameter bit.
    """
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "widths": list(net.widths),
        "activation": net.activation,
        "init_seed": init_seed,
        "train_steps": int(train_steps),
        "input_shift": None if net.input_shift is None
        else net.input_shift.tolist(),
        "input_scale": None if net.input_scale is None
        else net.input_scale.tolist(),
        "params": net.flat_params().tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    """Load a checkpoint written by save_checkpoint; returns (Mlp, metadata)."""
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a network checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload.get('version')} unsupported "
            f"(expected {CHECKPOINT_VERSION})")
    widths = payload["widths"]
    shift = payload.get("input_shift")
    scale = payload.get("input_scale")
    net = Mlp(widths,
              [np.zeros((widths[l], widths[l + 1])) for l in range(len(widths) - 1)],
              [np.zeros(widths[l + 1]) for l in range(len(widths) - 1)],
              payload.get("activation", "tanh"),
              input_shift=None if shift is None else np.asarray(shift),
              input_scale=None if scale is None else np.asarray(scale))
    try:
        net.set_flat_params(np.array(payload["params"], dtype=np.float64))
    except (KeyError, ConfigError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from exc
    meta = {"init_seed": payload.get("init_seed"),
            "train_steps": payload.get("train_steps", 0)}
    return net, meta
