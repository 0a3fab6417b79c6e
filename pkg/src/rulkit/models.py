"""From-scratch MLP and LSTM regressors with analytic gradients.

No autodiff: every backward pass is hand-derived and verified against
central finite differences in the test suite. Parameters live in plain
dicts of float64 arrays so the optimizer and checkpoint code can treat
both models uniformly.

LSTM cell (gate blocks ordered i, f, g, o inside the stacked tensors):

    z = W x_t + U h_prev + b          z splits into (z_i, z_f, z_g, z_o)
    i = sigmoid(z_i)   f = sigmoid(z_f)
    g = tanh(z_g)      o = sigmoid(z_o)
    c_t = f * c_prev + i * g
    h_t = o * tanh(c_t)

A linear head on the final hidden state produces the scalar prediction.
Hidden and cell state always start at zero, so consecutive calls on the
same window are identical (no state leaks between samples or batches).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError, ValidationError
from .numerics import SeededRng, sigmoid

GATE_ORDER = ("i", "f", "g", "o")

DEFAULT_MLP_HIDDEN = (64, 32)
DEFAULT_LSTM_HIDDEN = 64


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


@dataclass
class MlpParams:
    """Fully-connected stack: relu hidden layers, linear scalar output."""

    weights: list[np.ndarray]  # layer l: (out_l, in_l)
    biases: list[np.ndarray]  # layer l: (out_l,)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def input_size(self) -> int:
        return self.weights[0].shape[1]

    def to_dict(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{l}"] = w
            out[f"b{l}"] = b
        return out

    @classmethod
    def from_dict(cls, tensors: dict[str, np.ndarray]) -> "MlpParams":
        n_layers = sum(1 for k in tensors if k.startswith("w"))
        return cls(
            [np.asarray(tensors[f"w{l}"], dtype=np.float64) for l in range(n_layers)],
            [np.asarray(tensors[f"b{l}"], dtype=np.float64) for l in range(n_layers)],
        )


@dataclass
class LstmParams:
    """Single LSTM layer plus linear regression head.

    w_x: (4H, F) input weights, w_h: (4H, H) recurrent weights, b: (4H,),
    all stacked in GATE_ORDER blocks of H rows. w_head: (H,), b_head: (1,).
    """

    w_x: np.ndarray
    w_h: np.ndarray
    b: np.ndarray
    w_head: np.ndarray
    b_head: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_x.shape[1]

    def to_dict(self) -> dict[str, np.ndarray]:
        return {
            "w_x": self.w_x,
            "w_h": self.w_h,
            "b": self.b,
            "w_head": self.w_head,
            "b_head": self.b_head,
        }

    @classmethod
    def from_dict(cls, tensors: dict[str, np.ndarray]) -> "LstmParams":
        return cls(*(np.asarray(tensors[k], dtype=np.float64) for k in
                     ("w_x", "w_h", "b", "w_head", "b_head")))


def init_mlp(layer_sizes: tuple[int, ...], rng: SeededRng) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    if len(layer_sizes) < 2:
        raise ConfigError(f"need at least input and output sizes, got {layer_sizes}")
    if any(s < 1 for s in layer_sizes):
        raise ConfigError(f"layer sizes must be positive, got {layer_sizes}")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def init_lstm(input_size: int, hidden_size: int, rng: SeededRng) -> LstmParams:
    """Same uniform fan-in rule; forget-gate bias block starts at 1.0."""
    if input_size < 1 or hidden_size < 1:
        raise ConfigError(
            f"sizes must be positive, got input={input_size}, hidden={hidden_size}"
        )
    h = hidden_size
    w_x = rng.uniform(-1.0 / np.sqrt(input_size), 1.0 / np.sqrt(input_size), (4 * h, input_size))
    w_h = rng.uniform(-1.0 / np.sqrt(h), 1.0 / np.sqrt(h), (4 * h, h))
    b = np.zeros(4 * h)
    b[h : 2 * h] = 1.0  # forget gate: remember by default
    w_head = rng.uniform(-1.0 / np.sqrt(h), 1.0 / np.sqrt(h), (h,))
    return LstmParams(w_x, w_h, b, w_head, np.zeros(1))


# ---------------------------------------------------------------------------
# MLP forward / backward
# ---------------------------------------------------------------------------


@dataclass
class MlpCache:
    inputs: list[np.ndarray]  # input to each layer, (B, in_l)
    pre_acts: list[np.ndarray]  # z of each hidden layer, (B, out_l)


def mlp_forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
    """Batched forward over rows: x is (B, F), returns ((B,), cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"mlp_forward expects (batch, features), got {x.shape}")
    if x.shape[1] != params.input_size:
        raise ShapeError(
            f"feature count {x.shape[1]} does not match model input {params.input_size}"
        )
    inputs, pre_acts = [], []
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        inputs.append(h)
        z = h @ w.T + b
        pre_acts.append(z)
        h = np.maximum(z, 0.0)
    inputs.append(h)
    out = h @ params.weights[-1].T + params.biases[-1]
    return out[:, 0], MlpCache(inputs, pre_acts)


def mlp_backward(
    params: MlpParams, cache: MlpCache, dpred: np.ndarray
) -> dict[str, np.ndarray]:
    """Gradients of the loss w.r.t. every weight and bias.

    dpred is dLoss/dPrediction per sample, shape (B,).
    """
    if len(cache.inputs) != len(params.weights):
        raise ShapeError("cache does not match parameter stack depth")
    if cache.inputs[0].shape[1] != params.input_size:
        raise ShapeError(
            f"cache input width {cache.inputs[0].shape[1]} does not match "
            f"model input {params.input_size}"
        )
    grads: dict[str, np.ndarray] = {}
    last = len(params.weights) - 1
    delta = np.asarray(dpred, dtype=np.float64)[:, None]  # (B, 1)
    grads[f"w{last}"] = delta.T @ cache.inputs[last]
    grads[f"b{last}"] = delta.sum(axis=0)
    dh = delta @ params.weights[last]
    for l in range(last - 1, -1, -1):
        dz = dh * (cache.pre_acts[l] > 0.0)
        grads[f"w{l}"] = dz.T @ cache.inputs[l]
        grads[f"b{l}"] = dz.sum(axis=0)
        if l > 0:
            dh = dz @ params.weights[l]
    return grads


# ---------------------------------------------------------------------------
# LSTM forward / backward (BPTT)
# ---------------------------------------------------------------------------


@dataclass
class LstmStepCache:
    """Gate activations and states of a single cell step."""

    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray


@dataclass
class LstmCache:
    """Everything the backward pass needs, per timestep, time-major."""

    x: np.ndarray  # (T, B, F)
    i: np.ndarray  # (T, B, H)
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray  # (T, B, H)


def lstm_cell_forward(
    params: LstmParams,
    x_t: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, LstmStepCache]:
    """One cell step for a batch: returns (h_t, c_t, gate cache)."""
    x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    h_prev = np.atleast_2d(np.asarray(h_prev, dtype=np.float64))
    c_prev = np.atleast_2d(np.asarray(c_prev, dtype=np.float64))
    hsz = params.hidden_size
    if x_t.shape[1] != params.input_size:
        raise ShapeError(
            f"input width {x_t.shape[1]} does not match model input {params.input_size}"
        )
    if h_prev.shape[1] != hsz or c_prev.shape[1] != hsz:
        raise ShapeError(
            f"state width {h_prev.shape[1]}/{c_prev.shape[1]} does not match "
            f"hidden size {hsz}"
        )
    z = x_t @ params.w_x.T + h_prev @ params.w_h.T + params.b
    i = sigmoid(z[:, :hsz])
    f = sigmoid(z[:, hsz : 2 * hsz])
    g = np.tanh(z[:, 2 * hsz : 3 * hsz])
    o = sigmoid(z[:, 3 * hsz :])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, LstmStepCache(i, f, g, o, c, tanh_c, h)


def lstm_forward(params: LstmParams, x: np.ndarray) -> tuple[np.ndarray, LstmCache]:
    """Unroll over a batch of windows: x is (B, T, F), returns ((B,), cache).

    h_0 = c_0 = 0 for every call. The input projection for all timesteps
    is computed in one product; the loop carries only the recurrence.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"lstm_forward expects (batch, time, features), got {x.shape}")
    bsz, steps, feats = x.shape
    if steps < 1:
        raise ShapeError("window length must be >= 1")
    if feats != params.input_size:
        raise ShapeError(
            f"feature count {feats} does not match model input {params.input_size}"
        )
    hsz = params.hidden_size
    xt = np.ascontiguousarray(x.transpose(1, 0, 2))  # (T, B, F)
    zx = (xt.reshape(steps * bsz, feats) @ params.w_x.T).reshape(steps, bsz, 4 * hsz)

    gates_i = np.empty((steps, bsz, hsz))
    gates_f = np.empty_like(gates_i)
    gates_g = np.empty_like(gates_i)
    gates_o = np.empty_like(gates_i)
    cells = np.empty_like(gates_i)
    tanh_cells = np.empty_like(gates_i)
    hiddens = np.empty_like(gates_i)

    h = np.zeros((bsz, hsz))
    c = np.zeros((bsz, hsz))
    for t in range(steps):
        z = zx[t] + h @ params.w_h.T + params.b
        i = sigmoid(z[:, :hsz])
        f = sigmoid(z[:, hsz : 2 * hsz])
        g = np.tanh(z[:, 2 * hsz : 3 * hsz])
        o = sigmoid(z[:, 3 * hsz :])
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        gates_i[t], gates_f[t], gates_g[t], gates_o[t] = i, f, g, o
        cells[t], tanh_cells[t], hiddens[t] = c, tanh_c, h

    pred = h @ params.w_head + params.b_head[0]
    cache = LstmCache(xt, gates_i, gates_f, gates_g, gates_o, cells, tanh_cells, hiddens)
    return pred, cache


def lstm_backward(
    params: LstmParams, cache: LstmCache, dpred: np.ndarray
) -> dict[str, np.ndarray]:
    """Full backpropagation through time, accumulating into every tensor."""
    steps, bsz, hsz = cache.h.shape
    if hsz != params.hidden_size or cache.x.shape[2] != params.input_size:
        raise ShapeError("cache shapes do not match parameters")
    dpred = np.asarray(dpred, dtype=np.float64)
    if dpred.shape != (bsz,):
        raise ShapeError(f"dpred shape {dpred.shape} does not match batch {bsz}")

    h_last = cache.h[-1]
    grad_w_head = h_last.T @ dpred
    grad_b_head = np.array([dpred.sum()])

    dz_all = np.empty((steps, bsz, 4 * hsz))
    dh = dpred[:, None] * params.w_head[None, :]
    dc = np.zeros((bsz, hsz))
    for t in range(steps - 1, -1, -1):
        i, f, g, o = cache.i[t], cache.f[t], cache.g[t], cache.o[t]
        tanh_c = cache.tanh_c[t]
        c_prev = cache.c[t - 1] if t > 0 else np.zeros((bsz, hsz))

        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
        di = dc * g
        df = dc * c_prev
        dg = dc * i

        dz = dz_all[t]
        dz[:, :hsz] = di * i * (1.0 - i)
        dz[:, hsz : 2 * hsz] = df * f * (1.0 - f)
        dz[:, 2 * hsz : 3 * hsz] = dg * (1.0 - g * g)
        dz[:, 3 * hsz :] = do * o * (1.0 - o)

        dh = dz @ params.w_h
        dc = dc * f

    h_prev = np.concatenate([np.zeros((1, bsz, hsz)), cache.h[:-1]], axis=0)
    dz_flat = dz_all.reshape(steps * bsz, 4 * hsz)
    return {
        "w_x": dz_flat.T @ cache.x.reshape(steps * bsz, -1),
        "w_h": dz_flat.T @ h_prev.reshape(steps * bsz, hsz),
        "b": dz_flat.sum(axis=0),
        "w_head": grad_w_head,
        "b_head": grad_b_head,
    }


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def mse_loss(predictions: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient w.r.t. the predictions.

    L = (1/n) * sum((pred - target)^2); dL/dpred = (2/n) * (pred - target).
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape:
        raise ShapeError(
            f"prediction shape {predictions.shape} does not match targets {targets.shape}"
        )
    n = predictions.size
    if n == 0:
        raise ValidationError("mse_loss requires at least one sample")
    err = predictions - targets
    return float(np.mean(err * err)), (2.0 / n) * err
