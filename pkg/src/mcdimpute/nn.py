"""Minimal dense neural-network core.

Dense layers with relu/sigmoid/linear activations, inverted dropout,
mean-squared-error loss, exact reverse-mode gradients for the sequential
MLP graph, the Adam optimizer, and a seed-deterministic mini-batch
training loop. Everything is float64 and runs on numpy arrays (row-major,
batch as the leading axis).
"""

import base64
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DivergenceError, UsageError
from .rng import RngStream

ACTIVATIONS = ("relu", "sigmoid", "linear")

FORMAT_VERSION = 1


@dataclass
class DenseLayer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str
    dropout_p: float = 0.0

    @property
    def n_in(self):
        return self.W.shape[1]

    @property
    def n_out(self):
        return self.W.shape[0]


def init_dense(n_in, n_out, activation, rng, dropout_p=0.0):
    """Glorot-uniform weights in +/- sqrt(6/(fan_in+fan_out)), zero biases."""
    if activation not in ACTIVATIONS:
        raise UsageError(f"unknown activation {activation!r}")
    if not 0.0 <= dropout_p < 1.0:
        raise UsageError(f"dropout_p must be in [0, 1), got {dropout_p}")
    limit = np.sqrt(6.0 / (n_in + n_out))
    W = rng.generator.uniform(-limit, limit, size=(n_out, n_in))
    return DenseLayer(W=W, b=np.zeros(n_out), activation=activation, dropout_p=dropout_p)


def sigmoid(z):
    """Numerically stable logistic function."""
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return sigmoid(z)
    return z


def dense_forward(layer, x):
    """activation(x @ W.T + b). Dropout is a separate operation."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layer.n_in:
        raise UsageError(
            f"input has shape {x.shape}, layer expects (batch, {layer.n_in})"
        )
    return _activate(x @ layer.W.T + layer.b, layer.activation)


def dropout_apply(x, p, rng, training):
    """Inverted dropout: keep units with probability 1-p, scale kept by 1/(1-p).

    Returns (output, mask) where mask holds the multiplicative factors
    (all ones when inactive), suitable for the backward pass. With
    training=False or p=0 the output is exactly x.
    """
    if not 0.0 <= p < 1.0:
        raise UsageError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, np.ones_like(x)
    keep = rng.generator.random(np.shape(x)) >= p
    mask = keep / (1.0 - p)
    return x * mask, mask


def mse_loss(pred, target):
    """Mean over all entries of (pred - target)^2."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise UsageError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


@dataclass
class LayerCache:
    x: np.ndarray  # layer input
    z: np.ndarray  # pre-activation
    a: np.ndarray  # post-activation, before dropout
    mask: np.ndarray | None  # dropout multipliers, None when inactive


@dataclass
class ForwardTrace:
    caches: list
    output: np.ndarray


def forward_pass(layers, x, rng=None, training=False):
    """Run the net and record the activations and dropout masks backward() needs.

    Dropout masks are drawn from `rng` in layer order only when training is
    True and the layer has dropout_p > 0; otherwise the path is exactly the
    plain forward computation.
    """
    out = np.asarray(x, dtype=np.float64)
    caches = []
    for layer in layers:
        z = out @ layer.W.T + layer.b
        a = _activate(z, layer.activation)
        if training and layer.dropout_p > 0.0:
            y, mask = dropout_apply(a, layer.dropout_p, rng, training=True)
        else:
            y, mask = a, None
        caches.append(LayerCache(out, z, a, mask))
        out = y
    return ForwardTrace(caches, out)


def _activation_grad(layer, cache):
    if layer.activation == "relu":
        return cache.z > 0
    if layer.activation == "sigmoid":
        return cache.a * (1.0 - cache.a)
    return None  # linear


def dense_backward(layer, cache, grad_out):
    """Backprop grad wrt the layer's post-activation output (before dropout).

    Returns (grad_input, dW, db).
    """
    g = _activation_grad(layer, cache)
    grad_z = grad_out if g is None else grad_out * g
    dW = grad_z.T @ cache.x
    db = grad_z.sum(axis=0)
    return grad_z @ layer.W, dW, db


def backward(layers, trace, target):
    """MSE loss and exact gradients for a recorded forward pass.

    Dropout masks recorded in the trace are treated as constants. Returns
    (loss, grads) with grads a per-layer list of (dW, db).
    """
    if len(trace.caches) != len(layers):
        raise UsageError("trace does not match the network (missing recorded activations)")
    out = trace.output
    loss = mse_loss(out, target)
    grad = (2.0 / out.size) * (out - target)
    grads = [None] * len(layers)
    for i in reversed(range(len(layers))):
        cache = trace.caches[i]
        if cache.mask is not None:
            grad = grad * cache.mask
        grad, dW, db = dense_backward(layers[i], cache, grad)
        grads[i] = (dW, db)
    return loss, grads


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)  # per layer (mW, mb)
    v: list = field(default_factory=list)


def adam_init(layers, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, t=0)
    for layer in layers:
        state.m.append((np.zeros_like(layer.W), np.zeros_like(layer.b)))
        state.v.append((np.zeros_like(layer.W), np.zeros_like(layer.b)))
    return state


def adam_step(layers, grads, state):
    """Bias-corrected Adam update, applied in place. t counts completed steps."""
    for dW, db in grads:
        if not (np.isfinite(dW).all() and np.isfinite(db).all()):
            raise DivergenceError("divergence: non-finite gradient")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for layer, (dW, db), ms, vs in zip(layers, grads, state.m, state.v):
        for p, g, m, v in ((layer.W, dW, ms[0], vs[0]), (layer.b, db, ms[1], vs[1])):
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * (g * g)
            p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return layers, state


@dataclass
class TrainSpec:
    epochs: int
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    corrupt: object = None  # corrupt(batch, generator) -> batch, applied before forward


def train(layers, inputs, targets, spec, rng):
    """Mini-batch training with shuffled epochs; returns (layers, loss_history).

    loss_history holds the per-epoch mean training loss (weighted by batch
    size). Deterministic given (layers, data, spec, rng seed): the single
    stream drives shuffling, corruption, and dropout in a fixed order.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if spec.epochs < 1:
        raise UsageError(f"epochs must be >= 1, got {spec.epochs}")
    if spec.batch_size < 1:
        raise UsageError(f"batch_size must be >= 1, got {spec.batch_size}")
    if inputs.shape[0] != targets.shape[0]:
        raise UsageError("inputs and targets are not row-aligned")
    n = inputs.shape[0]
    gen = rng.generator
    state = adam_init(layers, lr=spec.lr, beta1=spec.beta1, beta2=spec.beta2, eps=spec.eps)
    history = []
    for epoch in range(spec.epochs):
        perm = gen.permutation(n)
        total = 0.0
        for start in range(0, n, spec.batch_size):
            idx = perm[start:start + spec.batch_size]
            xb = inputs[idx]
            if spec.corrupt is not None:
                xb = spec.corrupt(xb, gen)
            trace = forward_pass(layers, xb, rng, training=True)
            loss, grads = backward(layers, trace, targets[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"training diverged at epoch {epoch}")
            adam_step(layers, grads, state)
            total += loss * len(idx)
        history.append(total / n)
    return layers, history


def _encode_array(a):
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(d):
    a = np.frombuffer(base64.b64decode(d["data"]), dtype="<f8")
    return a.reshape(d["shape"]).astype(np.float64)


def layers_to_dict(layers):
    """JSON-safe description of a layer stack; round-trips bit-exactly."""
    return {
        "format_version": FORMAT_VERSION,
        "layers": [
            {
                "n_in": layer.n_in,
                "n_out": layer.n_out,
                "activation": layer.activation,
                "dropout_p": layer.dropout_p,
                "W": _encode_array(layer.W),
                "b": _encode_array(layer.b),
            }
            for layer in layers
        ],
    }


def layers_from_dict(d):
    if d.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported model format version {d.get('format_version')!r}")
    out = []
    for spec in d["layers"]:
        layer = DenseLayer(
            W=_decode_array(spec["W"]),
            b=_decode_array(spec["b"]),
            activation=spec["activation"],
            dropout_p=float(spec["dropout_p"]),
        )
        if layer.W.shape != (spec["n_out"], spec["n_in"]):
            raise DataError("layer dimensions do not match stored arrays")
        out.append(layer)
    return out
