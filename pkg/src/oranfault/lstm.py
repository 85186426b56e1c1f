"""Stacked LSTM forecaster trained with backpropagation through time.

Everything is plain numpy in float64. Gate blocks are stacked in the order
input, forget, cell candidate, output along the first axis of each weight
matrix, so a layer with ``h`` hidden units has ``4h``-row matrices.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .rng import derive

log = logging.getLogger(__name__)

GATES = ("input", "forget", "cell", "output")
GRADCHECK_FLOOR = 1e-7
WINDOW_STEPS = 61  # k + 1 with k = 60


class TrainingDivergedError(RuntimeError):
    pass


def _gate_affine(h):
    # sigmoid(x) = 0.5 * tanh(x / 2) + 0.5, so all four gates come from one tanh
    scale = np.full(4 * h, 0.5)
    scale[2 * h : 3 * h] = 1.0
    shift = np.full(4 * h, 0.5)
    shift[2 * h : 3 * h] = 0.0
    return scale, shift


class LstmParams:
    """Weights of an ``n_layers`` stacked LSTM plus a linear output head.

    Tensors are kept in a name -> array dict in a fixed order:
    ``lstm{l}.w_ih`` (4h x in), ``lstm{l}.w_hh`` (4h x h), ``lstm{l}.b`` (4h),
    then ``fc.w`` (out x h) and ``fc.b`` (out).
    """

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.tensors = {k: np.asarray(v, dtype=np.float64) for k, v in tensors.items()}
        self._check()

    @staticmethod
    def tensor_shapes(input_size=10, hidden_size=32, n_layers=2, output_size=10):
        shapes = {}
        for layer in range(1, n_layers + 1):
            n_in = input_size if layer == 1 else hidden_size
            shapes[f"lstm{layer}.w_ih"] = (4 * hidden_size, n_in)
            shapes[f"lstm{layer}.w_hh"] = (4 * hidden_size, hidden_size)
            shapes[f"lstm{layer}.b"] = (4 * hidden_size,)
        shapes["fc.w"] = (output_size, hidden_size)
        shapes["fc.b"] = (output_size,)
        return shapes

    @classmethod
    def initialize(cls, rng, input_size=10, hidden_size=32, n_layers=2, output_size=10):
        bound = 1.0 / math.sqrt(hidden_size)
        shapes = cls.tensor_shapes(input_size, hidden_size, n_layers, output_size)
        return cls({k: rng.uniform(-bound, bound, size=s) for k, s in shapes.items()})

    @classmethod
    def zeros(cls, input_size=10, hidden_size=32, n_layers=2, output_size=10):
        shapes = cls.tensor_shapes(input_size, hidden_size, n_layers, output_size)
        return cls({k: np.zeros(s) for k, s in shapes.items()})

    def _check(self):
        if "fc.w" not in self.tensors or "lstm1.w_ih" not in self.tensors:
            raise ValueError("parameter set is missing lstm1 or fc tensors")
        expected = self.tensor_shapes(
            self.input_size, self.hidden_size, self.n_layers, self.output_size
        )
        if list(expected) != list(self.tensors):
            raise ValueError(f"tensor names {list(self.tensors)} != {list(expected)}")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ValueError(f"{name}: shape {self.tensors[name].shape} != {shape}")
            if not np.all(np.isfinite(self.tensors[name])):
                raise ValueError(f"{name}: non-finite values")

    @property
    def input_size(self) -> int:
        return self.tensors["lstm1.w_ih"].shape[1]

    @property
    def hidden_size(self) -> int:
        return self.tensors["lstm1.w_hh"].shape[1]

    @property
    def n_layers(self) -> int:
        return sum(1 for k in self.tensors if k.endswith(".w_hh"))

    @property
    def output_size(self) -> int:
        return self.tensors["fc.w"].shape[0]

    def copy(self) -> "LstmParams":
        return LstmParams({k: v.copy() for k, v in self.tensors.items()})

    def __eq__(self, other):
        if not isinstance(other, LstmParams) or list(self.tensors) != list(other.tensors):
            return False
        return all(np.array_equal(v, other.tensors[k]) for k, v in self.tensors.items())

    def save(self, path):
        lines = []
        for name, arr in self.tensors.items():
            lines.append(f"[{name}] " + " ".join(str(s) for s in arr.shape))
            flat = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr.reshape(1, -1)
            for row in flat:
                lines.append(" ".join(repr(float(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "LstmParams":
        tensors: dict[str, np.ndarray] = {}
        name, shape, rows = None, None, []

        def flush():
            if name is not None:
                tensors[name] = np.array(rows, dtype=np.float64).reshape(shape)

        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            if line.startswith("["):
                flush()
                head, _, dims = line.partition("]")
                name, shape, rows = head[1:], tuple(int(d) for d in dims.split()), []
            else:
                rows.extend(float(v) for v in line.split())
        flush()
        return cls(tensors)


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    gradient_clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _as_time_major(windows, n_in):
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != n_in:
        raise ValueError(f"windows must have shape (batch, steps, {n_in}), got {x.shape}")
    return np.ascontiguousarray(x.transpose(1, 0, 2))


def _run(params: LstmParams, x_tm: np.ndarray, keep_cache: bool):
    """Forward pass over time-major input ``(T, B, in)``."""
    t_steps, batch, _ = x_tm.shape
    h = params.hidden_size
    scale, shift = _gate_affine(h)
    caches = []
    layer_in = x_tm
    for layer in range(1, params.n_layers + 1):
        # weights pre-scaled for the tanh form of the sigmoid
        w_ih_s = params.tensors[f"lstm{layer}.w_ih"].T * scale
        w_hh_s = params.tensors[f"lstm{layer}.w_hh"].T * scale
        b_s = params.tensors[f"lstm{layer}.b"] * scale
        # input contribution for all steps in one product
        zx = np.matmul(layer_in.reshape(-1, layer_in.shape[2]), w_ih_s)
        zx += b_s
        zx = zx.reshape(t_steps, batch, 4 * h)
        hs = np.zeros((t_steps + 1, batch, h))
        cs = np.zeros((t_steps + 1, batch, h))
        tcs = np.empty((t_steps, batch, h))
        acts = np.empty((t_steps, batch, 4 * h))
        tmp = np.empty((batch, h))
        for t in range(t_steps):
            a = acts[t]
            np.matmul(hs[t], w_hh_s, out=a)
            a += zx[t]
            np.tanh(a, out=a)
            a *= scale
            a += shift
            c = cs[t + 1]
            np.multiply(a[:, h : 2 * h], cs[t], out=c)
            np.multiply(a[:, :h], a[:, 2 * h : 3 * h], out=tmp)
            c += tmp
            np.tanh(c, out=tcs[t])
            np.multiply(a[:, 3 * h :], tcs[t], out=hs[t + 1])
        if keep_cache:
            caches.append((layer_in, hs, cs, tcs, acts))
        layer_in = hs[1:]
    top = layer_in[-1]
    out = top @ params.tensors["fc.w"].T + params.tensors["fc.b"]
    return out, caches


def predict_batch(params: LstmParams, windows) -> np.ndarray:
    """Forecast for each window in ``windows`` of shape (batch, steps, input_size)."""
    x_tm = _as_time_major(windows, params.input_size)
    out, _ = _run(params, x_tm, keep_cache=False)
    return out


def forward(params: LstmParams, window, steps: int | None = WINDOW_STEPS) -> np.ndarray:
    """Forecast for one ``(steps, input_size)`` window; ``steps=None`` accepts any length."""
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError(f"window must be 2-D (steps, features), got shape {w.shape}")
    if steps is not None and w.shape[0] != steps:
        raise ValueError(f"window must have {steps} rows, got {w.shape[0]}")
    return predict_batch(params, w[None])[0]


def mse(params: LstmParams, windows, targets) -> float:
    diff = predict_batch(params, windows) - np.asarray(targets, dtype=np.float64)
    return float(np.mean(diff * diff))


def loss_and_grad(params: LstmParams, windows, targets):
    """Mean squared error over all outputs and its gradient for every tensor."""
    loss, grads, _ = _loss_and_grad(params, windows, targets)
    return loss, grads


def _loss_and_grad(params, windows, targets):
    x_tm = _as_time_major(windows, params.input_size)
    y = np.asarray(targets, dtype=np.float64)
    out, caches = _run(params, x_tm, keep_cache=True)
    if y.shape != out.shape:
        raise ValueError(f"targets shape {y.shape} != predictions shape {out.shape}")
    diff = out - y
    per_sample = np.mean(diff * diff, axis=1)
    loss = float(np.mean(diff * diff))
    d_out = 2.0 * diff / diff.size

    grads: dict[str, np.ndarray] = {}
    h = params.hidden_size
    top_h = caches[-1][1][-1]
    grads["fc.w"] = d_out.T @ top_h
    grads["fc.b"] = d_out.sum(axis=0)

    t_steps, batch, _ = x_tm.shape
    dh_ext = np.zeros((t_steps, batch, h))
    dh_ext[-1] = d_out @ params.tensors["fc.w"]
    layer_grads = {}
    for layer in range(params.n_layers, 0, -1):
        layer_in, hs, cs, tcs, acts = caches[layer - 1]
        w_hh = params.tensors[f"lstm{layer}.w_hh"]
        gates = acts.reshape(t_steps, batch, 4, h)
        i, f, g, o = gates[:, :, 0], gates[:, :, 1], gates[:, :, 2], gates[:, :, 3]
        # time-independent local derivative factors, computed for all steps at once
        dc_from_h = o * (1.0 - tcs * tcs)
        dz_o_from_h = tcs * o * (1.0 - o)
        dz_from_c = np.empty((t_steps, batch, 3, h))
        dz_from_c[:, :, 0] = g * i * (1.0 - i)
        dz_from_c[:, :, 1] = cs[:-1] * f * (1.0 - f)
        dz_from_c[:, :, 2] = i * (1.0 - g * g)
        dz_all = np.empty((t_steps, batch, 4, h))
        dh = np.empty((batch, h))
        dc = np.zeros((batch, h))
        tmp = np.empty((batch, h))
        dh_next = np.zeros((batch, h))
        for t in range(t_steps - 1, -1, -1):
            np.add(dh_ext[t], dh_next, out=dh)
            np.multiply(dh, dc_from_h[t], out=tmp)
            dc += tmp
            dz = dz_all[t]
            np.multiply(dh, dz_o_from_h[t], out=dz[:, 3])
            np.multiply(dc[:, None, :], dz_from_c[t], out=dz[:, :3])
            dc *= f[t]
            np.matmul(dz.reshape(batch, 4 * h), w_hh, out=dh_next)
        dz_flat = dz_all.reshape(-1, 4 * h)
        layer_grads[f"lstm{layer}.w_ih"] = dz_flat.T @ layer_in.reshape(-1, layer_in.shape[2])
        layer_grads[f"lstm{layer}.w_hh"] = dz_flat.T @ hs[:-1].reshape(-1, h)
        layer_grads[f"lstm{layer}.b"] = dz_flat.sum(axis=0)
        if layer > 1:
            dh_ext = dz_all.reshape(t_steps, batch, 4 * h) @ params.tensors[f"lstm{layer}.w_ih"]
    ordered = {k: (layer_grads[k] if k in layer_grads else grads[k]) for k in params.tensors}
    return loss, ordered, per_sample


def _clip(grads, max_norm):
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def train(inputs, targets, config: TrainConfig, params: LstmParams | None = None,
          hidden_size=32, n_layers=2):
    """Mini-batch Adam training on (inputs, targets).

    ``inputs`` has shape (n, steps, features) and may be a strided view; batches
    are gathered on demand. Returns ``(params, history)`` with one mean training
    loss per epoch (losses measured on each batch before its update).
    """
    n = len(inputs)
    if n == 0:
        raise ValueError("training set is empty")
    targets = np.asarray(targets, dtype=np.float64)
    if params is None:
        params = LstmParams.initialize(
            derive(config.seed, "lstm-init"),
            input_size=inputs.shape[2], hidden_size=hidden_size,
            n_layers=n_layers, output_size=targets.shape[1],
        )
    else:
        params = params.copy()
    order_rng = derive(config.seed, "lstm-batches")
    m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    v = {k: np.zeros_like(val) for k, val in params.tensors.items()}
    step = 0
    history = []
    sample_loss = np.empty(n)
    for epoch in range(config.epochs):
        order = order_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = np.sort(order[start : start + config.batch_size])
            xb = np.asarray(inputs[idx], dtype=np.float64)
            yb = targets[idx]
            loss, grads, per_sample = _loss_and_grad(params, xb, yb)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at epoch {epoch + 1}, batch starting {start}"
                )
            # indexed by sample so the epoch mean does not depend on batch order
            sample_loss[idx] = per_sample
            _clip(grads, config.gradient_clip_norm)
            if config.learning_rate > 0:
                step += 1
                b1, b2 = config.beta1, config.beta2
                lr_t = config.learning_rate * math.sqrt(1 - b2**step) / (1 - b1**step)
                for k, g in grads.items():
                    m[k] = b1 * m[k] + (1 - b1) * g
                    v[k] = b2 * v[k] + (1 - b2) * g * g
                    params.tensors[k] -= lr_t * m[k] / (np.sqrt(v[k]) + config.eps)
        history.append(float(sample_loss.mean()))
        log.debug("epoch %d loss %.6g", epoch + 1, history[-1])
    return params, history


GradFn = Callable[[LstmParams, np.ndarray, np.ndarray], "tuple[float, dict[str, np.ndarray]]"]


def gradient_check(params: LstmParams, window, target, n_per_tensor=200, step=1e-5,
                   seed=0, grad_fn: GradFn | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Samples ``n_per_tensor`` coordinates from every tensor (all of them when a
    tensor is smaller). The relative error denominator is
    ``max(|analytic|, |numeric|, 1e-7)``: central differences at ``step=1e-5``
    carry about 1e-11 of float64 roundoff, which would swamp the ratio for
    gradients smaller than that floor.
    """
    grad_fn = grad_fn or loss_and_grad
    x = np.asarray(window, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if x.ndim == 2:
        x, y = x[None], y[None]
    _, analytic = grad_fn(params, x, y)
    rng = derive(seed, "gradcheck")
    probe = params.copy()
    worst = 0.0
    for name, arr in probe.tensors.items():
        flat = arr.reshape(-1)
        count = min(n_per_tensor, flat.size)
        coords = rng.choice(flat.size, size=count, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + step
            up = mse(probe, x, y)
            flat[c] = orig - step
            down = mse(probe, x, y)
            flat[c] = orig
            numeric = (up - down) / (2 * step)
            a = analytic[name].reshape(-1)[c]
            scale = max(abs(a), abs(numeric), GRADCHECK_FLOOR)
            worst = max(worst, abs(a - numeric) / scale)
    return worst
