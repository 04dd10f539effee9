"""Mini-batch SGD with weight decay, at desk scale.

Plain SGD, no momentum: with the seed fixed the whole update sequence is
deterministic, which the reproducibility tests rely on. Losses: "squared"
(mean of 0.5 * ||f(x) - y||^2) or "softmax_cross_entropy".
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DivergedLoss, ShapeMismatch
from .network import (
    Layer,
    Network,
    activation_grad,
    apply_activation,
    clone,
    forward,
    layer_preactivation,
    _im2col,
)

log = logging.getLogger(__name__)

LOSSES = ("squared", "softmax_cross_entropy")


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 100
    learning_rate: float = 0.1
    weight_decay: float = 0.0
    seed: int = 0
    loss: str = "squared"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate < 0:
            raise ValueError("epochs, batch_size, learning_rate must be nonnegative")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _loss_and_grad(out: np.ndarray, y: np.ndarray, kind: str):
    """Mean loss over the batch and its gradient w.r.t. the output."""
    n = out.shape[0]
    if kind == "squared":
        diff = out - y
        return 0.5 * float(np.sum(diff * diff)) / n, diff / n
    p = _softmax(out)
    eps = 1e-12
    loss = -float(np.sum(y * np.log(p + eps))) / n
    return loss, (p - y) / n


def evaluate_loss(net: Network, data: Dataset, loss: str = "squared",
                  clamp: float | None = None) -> float:
    """Mean loss over the dataset; `clamp` truncates outputs to [-M, M]
    first (the bound report's truncated estimator)."""
    out = forward(net, data.inputs)
    if clamp is not None and math.isfinite(clamp):
        out = np.clip(out, -clamp, clamp)
    value, _ = _loss_and_grad(out, data.targets, loss)
    return value


def accuracy(net: Network, data: Dataset) -> float:
    """Fraction of argmax matches; needs one-hot targets with >= 2 columns."""
    if data.targets.shape[1] < 2:
        raise ShapeMismatch("accuracy needs one-hot targets")
    out = forward(net, data.inputs)
    return float(np.mean(out.argmax(axis=1) == data.targets.argmax(axis=1)))


def _col2im(grad_cols: np.ndarray, layer: Layer, n: int) -> np.ndarray:
    """Adjoint of _im2col: (n, C*k*k, oh*ow) -> flat input gradient."""
    k, s, p = layer.kernel, layer.stride, layer.padding
    oh, ow = layer.out_h, layer.out_w
    gc = grad_cols.reshape(n, layer.in_channels, k, k, oh, ow)
    padded = np.zeros(
        (n, layer.in_channels, layer.in_h + 2 * p, layer.in_w + 2 * p)
    )
    for i in range(k):
        for j in range(k):
            padded[:, :, i : i + s * oh : s, j : j + s * ow : s] += gc[:, :, i, j]
    if p:
        padded = padded[:, :, p:-p, p:-p]
    return padded.reshape(n, layer.in_dim)


def _backward(net: Network, x: np.ndarray, y: np.ndarray, kind: str):
    """One forward/backward pass; returns (loss, [(dW, db) per layer])."""
    n = x.shape[0]
    acts = [x]
    pre = []
    h = x
    for lay in net.layers:
        z = layer_preactivation(lay, h)
        pre.append(z)
        h = apply_activation(z, lay.activation, lay.slope)
        acts.append(h)
    loss, delta = _loss_and_grad(acts[-1], y, kind)
    grads = [None] * net.depth
    for i in range(net.depth - 1, -1, -1):
        lay = net.layers[i]
        delta = delta * activation_grad(pre[i], lay.activation, lay.slope)
        a_in = acts[i]
        if lay.kind == "dense":
            grads[i] = (delta.T @ a_in, delta.sum(axis=0))
            if i > 0:
                delta = delta @ lay.weight
        else:
            d_maps = delta.reshape(n, lay.out_channels, lay.out_h * lay.out_w)
            maps = a_in.reshape(n, lay.in_channels, lay.in_h, lay.in_w)
            cols = _im2col(maps, lay)
            dw = np.einsum("nos,ncs->oc", d_maps, cols)
            db = d_maps.sum(axis=(0, 2))
            grads[i] = (dw, db)
            if i > 0:
                grad_cols = np.einsum("oc,nos->ncs", lay.weight, d_maps)
                delta = _col2im(grad_cols, lay, n)
    return loss, grads


def train(net: Network, data: Dataset, cfg: TrainConfig) -> Network:
    """Run SGD and return the trained network (the input is untouched).

    Batch order is drawn from a generator seeded by cfg.seed, so two runs
    with identical inputs produce identical weights.
    """
    if data.dim != net.input_dim or data.targets.shape[1] != net.output_dim:
        raise ShapeMismatch(
            f"data ({data.dim} -> {data.targets.shape[1]}) does not match "
            f"network ({net.input_dim} -> {net.output_dim})"
        )
    out = clone(net)
    rng = np.random.default_rng(cfg.seed)
    n = data.n
    last = math.nan
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = _backward(out, data.inputs[batch], data.targets[batch], cfg.loss)
            if not math.isfinite(loss):
                raise DivergedLoss(f"loss became {loss} at epoch {epoch}")
            for lay, (dw, db) in zip(out.layers, grads):
                step = dw + cfg.weight_decay * lay.weight
                lay.weight -= cfg.learning_rate * step
                lay.bias -= cfg.learning_rate * db
            last = loss
    final = evaluate_loss(out, data, cfg.loss)
    log.info("training done: %d epochs, last batch loss %.6g, full loss %.6g",
             cfg.epochs, last, final)
    return out


def make_dense_network(dims, activation: str = "relu", seed: int = 0,
                       slope: float = 0.01) -> Network:
    """He-initialized dense network over the width chain `dims`;
    the final layer is affine (activation "none")."""
    rng = np.random.default_rng(seed)
    layers = []
    for i, (d_in, d_out) in enumerate(zip(dims, dims[1:])):
        last = i == len(dims) - 2
        w = rng.standard_normal((d_out, d_in)) * np.sqrt(2.0 / d_in)
        b = np.zeros(d_out)
        layers.append(Layer(kind="dense", weight=w, bias=b,
                            activation="none" if last else activation,
                            slope=slope))
    return Network(layers=layers)


def make_conv_network(in_channels: int, in_h: int, in_w: int, channel_chain,
                      kernel: int = 3, stride: int = 1, padding: int = 1,
                      dense_out: int = 1, activation: str = "relu",
                      seed: int = 0) -> Network:
    """Small conv stack (each layer kernel x kernel) followed by one dense
    readout layer; used by the conv covariance and channel-pruning paths."""
    rng = np.random.default_rng(seed)
    layers = []
    c, h, w = in_channels, in_h, in_w
    for c_out in channel_chain:
        fan_in = c * kernel * kernel
        weight = rng.standard_normal((c_out, fan_in)) * np.sqrt(2.0 / fan_in)
        lay = Layer(kind="conv2d", weight=weight, bias=np.zeros(c_out),
                    activation=activation, kernel=kernel, stride=stride,
                    padding=padding, in_channels=c, in_h=h, in_w=w)
        layers.append(lay)
        c, h, w = c_out, lay.out_h, lay.out_w
    flat = c * h * w
    weight = rng.standard_normal((dense_out, flat)) * np.sqrt(2.0 / flat)
    layers.append(Layer(kind="dense", weight=weight, bias=np.zeros(dense_out),
                        activation="none"))
    return Network(layers=layers)
