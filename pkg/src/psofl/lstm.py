"""Stacked LSTM with a linear head, written directly in numpy.

All parameters of a model live in one flat float64 vector; the per-layer
matrices are views into it. That makes federated averaging a plain vector
operation and keeps ``flatten``/``unflatten`` exact.

Per layer ``l`` with input width ``in_l`` and hidden width ``N`` the weight
matrix has shape ``(in_l + N, 4N)`` (input rows first, then recurrent rows)
and the bias ``(4N,)``. Gate column order is input, forget, cell, output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .pso import MAXIMIZE, MINIMIZE, ConfigurationError, ModelConfig

REGRESSION = "regression"
CLASSIFICATION = "classification"


class NumericError(FloatingPointError):
    def __init__(self, message, layer=None, step=None):
        super().__init__(message)
        self.layer = layer
        self.step = step


class Samples(NamedTuple):
    """Windowed samples: ``X`` is (n, lookback, features), ``y`` is (n,)."""

    X: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.y)


@dataclass(frozen=True)
class Layout:
    n_layers: int
    hidden: int
    input_width: int
    output_width: int

    def layer_input(self, layer: int) -> int:
        return self.input_width if layer == 0 else self.hidden

    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        n = self.hidden
        out = []
        for layer in range(self.n_layers):
            out.append((f"lstm{layer}.W", (self.layer_input(layer) + n, 4 * n)))
            out.append((f"lstm{layer}.b", (4 * n,)))
        out.append(("head.W", (n, self.output_width)))
        out.append(("head.b", (self.output_width,)))
        return out

    def layer_size(self, layer: int) -> int:
        n = self.hidden
        return 4 * (n * (self.layer_input(layer) + n) + n)

    @property
    def size(self) -> int:
        head = self.hidden * self.output_width + self.output_width
        return sum(self.layer_size(l) for l in range(self.n_layers)) + head


@dataclass
class LstmModel:
    layout: Layout
    params: np.ndarray
    task: str = REGRESSION
    _views: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (self.layout.size,):
            raise ValueError(
                f"parameter vector has length {self.params.size}, layout expects {self.layout.size}"
            )
        if self.task not in (REGRESSION, CLASSIFICATION):
            raise ConfigurationError(f"unknown task {self.task!r}")
        self._views = {}
        offset = 0
        for name, shape in self.layout.shapes():
            size = int(np.prod(shape))
            self._views[name] = self.params[offset:offset + size].reshape(shape)
            offset += size

    def __getitem__(self, name) -> np.ndarray:
        return self._views[name]

    @property
    def n_params(self) -> int:
        return self.layout.size

    def copy(self) -> "LstmModel":
        return LstmModel(self.layout, self.params.copy(), self.task)


@dataclass(frozen=True)
class TrainSpec:
    epochs: int
    learning_rate: float = 0.01
    batch_size: int = 32
    shuffle_seed_base: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")


class EvalResult(NamedTuple):
    metric: float
    n_samples: int
    task: str

    @property
    def value(self) -> float:
        return self.metric

    @property
    def direction(self) -> str:
        return MAXIMIZE if self.task == CLASSIFICATION else MINIMIZE


def task_direction(task: str) -> str:
    return MAXIMIZE if task == CLASSIFICATION else MINIMIZE


def init_model(cfg: ModelConfig, input_width: int, output_width: int, seed, task: str = REGRESSION) -> LstmModel:
    """Glorot-uniform weights, zero biases except forget-gate biases of 1."""
    layers, neurons = int(cfg[0]), int(cfg[1])
    if min(layers, neurons, input_width, output_width) < 1:
        raise ConfigurationError(
            f"model widths must be positive: layers={layers}, neurons={neurons}, "
            f"input_width={input_width}, output_width={output_width}"
        )
    layout = Layout(layers, neurons, input_width, output_width)
    rng = np.random.default_rng(seed)
    model = LstmModel(layout, np.zeros(layout.size), task)
    for layer in range(layers):
        W = model[f"lstm{layer}.W"]
        fan_in = layout.layer_input(layer) + neurons
        limit = np.sqrt(6.0 / (fan_in + neurons))
        W[...] = rng.uniform(-limit, limit, size=W.shape)
        model[f"lstm{layer}.b"][neurons:2 * neurons] = 1.0
    limit = np.sqrt(6.0 / (neurons + output_width))
    head = model["head.W"]
    head[...] = rng.uniform(-limit, limit, size=head.shape)
    return model


def flatten(model: LstmModel) -> np.ndarray:
    return model.params.copy()


def unflatten(vector, layout: Layout, task: str = REGRESSION) -> LstmModel:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.ndim != 1 or vector.size != layout.size:
        raise ValueError(f"vector of length {vector.size} does not match layout size {layout.size}")
    return LstmModel(layout, vector.copy(), task)


def _sigmoid(z):
    # tanh form avoids overflow warnings for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _gate_scale(n):
    scale = np.ones(4 * n)
    scale[2 * n:3 * n] = 2.0
    return scale


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_finite(arr, layer, what="hidden state"):
    if np.isfinite(arr).all():
        return
    step = None
    if arr.ndim == 3:
        step = int(np.flatnonzero(~np.isfinite(arr).all(axis=(0, 2)))[0])
    raise NumericError(f"non-finite {what} in layer {layer} at step {step}", layer=layer, step=step)


def _as_batch(model: LstmModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != model.layout.input_width:
        raise ValueError(
            f"expected windows of shape (n, steps, {model.layout.input_width}), got {X.shape}"
        )
    return X


def _forward(model: LstmModel, X: np.ndarray, keep_cache: bool):
    layout = model.layout
    n = layout.hidden
    B, T, _ = X.shape
    seq = X
    caches = []
    for layer in range(layout.n_layers):
        W = model[f"lstm{layer}.W"]
        b = model[f"lstm{layer}.b"]
        in_w = layout.layer_input(layer)
        scale = _gate_scale(n)
        Wx, Wh = W[:in_w] * scale, W[in_w:] * scale
        zx = seq @ Wx + b * scale  # (B, T, 4N), input projection for all steps at once
        hs = np.empty((B, T, n))
        gates = np.empty((B, T, 4 * n)) if keep_cache else None
        tcs = np.empty((B, T, n)) if keep_cache else None
        cs = np.empty((B, T, n)) if keep_cache else None
        h = np.zeros((B, n))
        c = np.zeros((B, n))
        for t in range(T):
            a = _sigmoid(zx[:, t] + h @ Wh)
            g = 2.0 * a[:, 2 * n:3 * n] - 1.0  # tanh(x) from the sigmoid of 2x
            c = a[:, n:2 * n] * c + a[:, :n] * g
            tc = np.tanh(c)
            h = a[:, 3 * n:] * tc
            hs[:, t] = h
            if keep_cache:
                a[:, 2 * n:3 * n] = g
                gates[:, t] = a
                cs[:, t] = c
                tcs[:, t] = tc
        _check_finite(hs, layer)
        if keep_cache:
            caches.append((seq, hs, gates, cs, tcs))
        seq = hs
    logits = seq[:, -1] @ model["head.W"] + model["head.b"]
    _check_finite(logits, layout.n_layers, "head output")
    return logits, caches


def forward(model: LstmModel, window) -> np.ndarray:
    """Predict for one window (steps, features) or a batch (n, steps, features).

    Regression returns raw head outputs; classification returns class
    probabilities. A single window yields a 1-D result.
    """
    X = np.asarray(window, dtype=np.float64)
    single = X.ndim == 2
    logits, _ = _forward(model, _as_batch(model, X), keep_cache=False)
    out = _softmax(logits) if model.task == CLASSIFICATION else logits
    return out[0] if single else out


def predict(model: LstmModel, X) -> np.ndarray:
    """Batch prediction: regression -> (n,) values, classification -> (n,) labels."""
    out = forward(model, _as_batch(model, X))
    if model.task == CLASSIFICATION:
        return out.argmax(axis=1)
    return out[:, 0] if model.layout.output_width == 1 else out


def _loss_and_dlogits(model, logits, y):
    B = logits.shape[0]
    if model.task == CLASSIFICATION:
        y = np.asarray(y, dtype=np.int64)
        p = _softmax(logits)
        loss = -np.mean(np.log(np.clip(p[np.arange(B), y], 1e-300, None)))
        d = p
        d[np.arange(B), y] -= 1.0
        return loss, d / B
    y = np.asarray(y, dtype=np.float64).reshape(B, -1)
    diff = logits - y
    loss = np.mean(diff ** 2)
    return loss, 2.0 * diff / diff.size


def loss(model: LstmModel, batch: Samples) -> float:
    """Mean loss: squared error for regression, cross-entropy for classification."""
    X = _as_batch(model, batch[0])
    logits, _ = _forward(model, X, keep_cache=False)
    return float(_loss_and_dlogits(model, logits, batch[1])[0])


def loss_and_gradients(model: LstmModel, batch: Samples) -> tuple[float, np.ndarray]:
    X = _as_batch(model, batch[0])
    if X.shape[0] == 0:
        raise ValueError("gradient of an empty batch is undefined")
    layout = model.layout
    n = layout.hidden
    logits, caches = _forward(model, X, keep_cache=True)
    value, dlogits = _loss_and_dlogits(model, logits, batch[1])

    grad = LstmModel(layout, np.zeros(layout.size), model.task)
    top = caches[-1][1]
    grad["head.W"][...] = top[:, -1].T @ dlogits
    grad["head.b"][...] = dlogits.sum(axis=0)

    B, T, _ = X.shape
    dseq = np.zeros((B, T, n))
    dseq[:, -1] = dlogits @ model["head.W"].T
    for layer in reversed(range(layout.n_layers)):
        seq_in, hs, gates, cs, tcs = caches[layer]
        in_w = layout.layer_input(layer)
        W = model[f"lstm{layer}.W"]
        Wx, Wh = W[:in_w], W[in_w:]
        # local derivative of each gate activation w.r.t. its pre-activation
        deriv = gates * (1.0 - gates)
        deriv[..., 2 * n:3 * n] = 1.0 - gates[..., 2 * n:3 * n] ** 2
        c_prev = np.concatenate([np.zeros((B, 1, n)), cs[:, :-1]], axis=1)
        # d(gate) = [dc*g, dc*c_prev, dc*i, dh*tanh(c)]
        mult = np.concatenate(
            [gates[..., 2 * n:3 * n], c_prev, gates[..., :n]], axis=2
        )
        dz = np.empty((B, T, 4 * n))
        dh_next = np.zeros((B, n))
        dc_next = np.zeros((B, n))
        WhT = Wh.T
        for t in range(T - 1, -1, -1):
            dh = dseq[:, t] + dh_next
            tc = tcs[:, t]
            dc = dh * gates[:, t, 3 * n:] * (1.0 - tc * tc) + dc_next
            dzt = dz[:, t]
            np.multiply(np.tile(dc, 3), mult[:, t], out=dzt[:, :3 * n])
            np.multiply(dh, tc, out=dzt[:, 3 * n:])
            dzt *= deriv[:, t]
            dc_next = dc * gates[:, t, n:2 * n]
            dh_next = dzt @ WhT
        gW = grad[f"lstm{layer}.W"]
        dz2 = dz.reshape(B * T, 4 * n)
        gW[:in_w] = seq_in.reshape(B * T, in_w).T @ dz2
        h_prev = np.concatenate([np.zeros((B, 1, n)), hs[:, :-1]], axis=1)
        gW[in_w:] = h_prev.reshape(B * T, n).T @ dz2
        grad[f"lstm{layer}.b"][...] = dz2.sum(axis=0)
        if layer > 0:
            dseq = dz @ Wx.T
    g = grad.params
    if not np.isfinite(g).all():
        raise NumericError("non-finite gradient")
    return float(value), g


def gradients(model: LstmModel, batch: Samples) -> np.ndarray:
    """Gradient of the mean batch loss, laid out like ``flatten(model)``."""
    return loss_and_gradients(model, batch)[1]


def epoch_order(n: int, shuffle_seed_base: int, epoch_index: int) -> np.ndarray:
    """Permutation used for one epoch; keyed on (base seed, global epoch index)."""
    return np.random.default_rng([shuffle_seed_base, epoch_index]).permutation(n)


def train_local(model: LstmModel, shard, spec: TrainSpec, epoch_offset: int = 0, reader=None) -> LstmModel:
    """Run ``spec.epochs`` passes of mini-batch SGD and return a new model.

    ``shard`` is a ``Samples`` pair or a ``ClientShard``; in the latter case
    the read is logged under ``reader``. Epoch ``e`` is shuffled with
    ``epoch_order(n, spec.shuffle_seed_base, epoch_offset + e)``.
    """
    if hasattr(shard, "read"):
        X, y = shard.read(reader)
    else:
        X, y = shard
    if len(y) == 0:
        raise ValueError("cannot train on an empty shard")
    trained = model.copy()
    if spec.epochs == 0 or spec.learning_rate == 0:
        return trained
    n = len(y)
    for e in range(spec.epochs):
        order = epoch_order(n, spec.shuffle_seed_base, epoch_offset + e)
        for start in range(0, n, spec.batch_size):
            idx = order[start:start + spec.batch_size]
            _, g = loss_and_gradients(trained, Samples(X[idx], y[idx]))
            trained.params -= spec.learning_rate * g
    return trained


def evaluate(model: LstmModel, dataset, target_scale: float = 1.0, batch_size: int = 1024) -> EvalResult:
    """RMSE (regression, multiplied by ``target_scale``) or argmax accuracy."""
    X, y = dataset[0], dataset[1]
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    X = _as_batch(model, X)
    preds = np.concatenate([predict(model, X[s:s + batch_size]) for s in range(0, len(y), batch_size)])
    if model.task == CLASSIFICATION:
        metric = float(np.mean(preds == np.asarray(y)))
    else:
        diff = preds.reshape(len(y), -1) - np.asarray(y, dtype=float).reshape(len(y), -1)
        metric = float(np.sqrt(np.mean(diff ** 2)) * target_scale)
    return EvalResult(metric, len(y), model.task)
