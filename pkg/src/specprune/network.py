"""Feedforward dense / conv2d networks: evaluation and serialization.

A network is W^(L) eta(.) + b^(L) composed down to W^(1) x + b^(1); the
final layer is affine (no activation). Activations are restricted to
relu and leaky-relu with slope in (0, 1], which are scale invariant
(eta(a x) = a eta(x) for a > 0) and 1-Lipschitz.

Conv activations are stored flattened channel-major: index =
(channel * height + row) * width + col. All covariance code relies on
this single ordering.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import CorruptManifest, NonFiniteActivation, ShapeMismatch

ACTIVATIONS = ("relu", "leaky_relu", "none")


def apply_activation(z: np.ndarray, kind: str, slope: float = 0.01) -> np.ndarray:
    if kind == "none":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "leaky_relu":
        return np.where(z >= 0.0, z, slope * z)
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(z: np.ndarray, kind: str, slope: float = 0.01) -> np.ndarray:
    """Derivative of the activation at pre-activation z (subgradient 0 at 0-)."""
    if kind == "none":
        return np.ones_like(z)
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "leaky_relu":
        return np.where(z > 0.0, 1.0, slope)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class Layer:
    """One affine layer plus its activation.

    Dense weight is (out_dim, in_dim). Conv2d weight is
    (out_channels, in_channels * kernel * kernel), each row a flattened
    kernel in (channel, row, col) order; in_h / in_w give the spatial
    size of the incoming feature map.
    """

    kind: str  # "dense" | "conv2d"
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"
    slope: float = 0.01
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    in_channels: int = 0
    in_h: int = 0
    in_w: int = 0

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.kind not in ("dense", "conv2d"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == "leaky_relu" and not 0.0 < self.slope <= 1.0:
            raise ValueError("leaky_relu slope must lie in (0, 1]")
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ShapeMismatch("weight must be 2-d and bias 1-d")
        if self.bias.shape[0] != self.weight.shape[0]:
            raise ShapeMismatch("bias length must match weight rows")
        if self.kind == "conv2d":
            if self.kernel < 1:
                raise ValueError("conv2d layer needs kernel >= 1")
            expected = self.in_channels * self.kernel * self.kernel
            if self.weight.shape[1] != expected:
                raise ShapeMismatch(
                    f"conv weight has {self.weight.shape[1]} cols, expected "
                    f"{expected} (= in_channels * k * k)"
                )

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def out_h(self) -> int:
        return (self.in_h + 2 * self.padding - self.kernel) // self.stride + 1

    @property
    def out_w(self) -> int:
        return (self.in_w + 2 * self.padding - self.kernel) // self.stride + 1

    @property
    def in_dim(self) -> int:
        """Flat input length this layer consumes."""
        if self.kind == "dense":
            return self.weight.shape[1]
        return self.in_channels * self.in_h * self.in_w

    @property
    def out_dim(self) -> int:
        """Flat output length this layer produces."""
        if self.kind == "dense":
            return self.weight.shape[0]
        return self.out_channels * self.out_h * self.out_w


@dataclass
class Network:
    """Ordered layers with chained dimensions. Immutable by convention:
    training and pruning return new Network objects."""

    layers: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeMismatch(
                    f"layer chain broken: {a.out_dim} -> {b.in_dim}"
                )

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def width(self, layer: int) -> int:
        """Width m_l of the activation entering layer l (1-based).

        When the producing layer l-1 is convolutional the activation is a
        feature map and the width is its channel count, the granularity at
        which pruning operates; otherwise it is the flat input length.
        """
        if layer >= 2 and self.layers[layer - 2].kind == "conv2d":
            return self.layers[layer - 2].out_channels
        return self.layers[layer - 1].in_dim


def _im2col(x: np.ndarray, layer: Layer) -> np.ndarray:
    """(n, C, H, W) -> (n, C*k*k, out_h*out_w) patch matrix."""
    n = x.shape[0]
    k, s, p = layer.kernel, layer.stride, layer.padding
    if p:
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    oh, ow = layer.out_h, layer.out_w
    cols = np.empty((n, layer.in_channels, k, k, oh, ow), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j, :, :] = x[
                :, :, i : i + s * oh : s, j : j + s * ow : s
            ]
    return cols.reshape(n, layer.in_channels * k * k, oh * ow)


def layer_preactivation(layer: Layer, x: np.ndarray) -> np.ndarray:
    """Affine part of the layer on a batch (n, in_dim) -> (n, out_dim)."""
    if layer.kind == "dense":
        return x @ layer.weight.T + layer.bias
    maps = x.reshape(x.shape[0], layer.in_channels, layer.in_h, layer.in_w)
    cols = _im2col(maps, layer)
    out = np.einsum("oc,ncs->nos", layer.weight, cols)
    out += layer.bias[None, :, None]
    return out.reshape(x.shape[0], layer.out_dim)


def _run(net: Network, x: np.ndarray, upto: int) -> np.ndarray:
    """Propagate through layers 1..upto, applying each layer's declared
    activation (network builders give the final layer activation "none")."""
    h = x
    for i in range(upto):
        lay = net.layers[i]
        if h.shape[1] != lay.in_dim:
            raise ShapeMismatch(
                f"layer {i + 1} expects width {lay.in_dim}, got {h.shape[1]}"
            )
        z = layer_preactivation(lay, h)
        h = apply_activation(z, lay.activation, lay.slope)
    if not np.all(np.isfinite(h)):
        raise NonFiniteActivation("non-finite value during forward pass")
    return h


def _batchify(x) -> tuple[np.ndarray, bool]:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        return a[None, :], True
    if a.ndim == 2:
        return a, False
    raise ShapeMismatch(f"input must be 1-d or 2-d, got ndim={a.ndim}")


def forward(net: Network, x) -> np.ndarray:
    """Network output for one input vector or a batch of rows."""
    a, single = _batchify(x)
    out = _run(net, a, net.depth)
    return out[0] if single else out


def forward_capture(net: Network, x, layer: int) -> np.ndarray:
    """Post-activation input phi^(l) to layer l, for 2 <= l <= depth.

    Conv feature maps come back flattened channel-major (channel, row,
    col), matching the Layer storage convention.
    """
    if not 2 <= layer <= net.depth:
        raise ValueError(f"layer must be in [2, {net.depth}], got {layer}")
    a, single = _batchify(x)
    h = a
    for i in range(layer - 1):
        lay = net.layers[i]
        if h.shape[1] != lay.in_dim:
            raise ShapeMismatch(
                f"layer {i + 1} expects width {lay.in_dim}, got {h.shape[1]}"
            )
        z = layer_preactivation(lay, h)
        h = apply_activation(z, lay.activation, lay.slope)
    if not np.all(np.isfinite(h)):
        raise NonFiniteActivation("non-finite value during forward pass")
    return h[0] if single else h


def capture_maps(net: Network, x, layer: int) -> np.ndarray:
    """phi^(l) reshaped to (n, channels, h, w); layer l - 1 must be conv."""
    prod = net.layers[layer - 2]
    if prod.kind != "conv2d":
        raise ShapeMismatch(f"layer {layer - 1} is not conv2d")
    flat = forward_capture(net, x, layer)
    if flat.ndim == 1:
        flat = flat[None, :]
    return flat.reshape(flat.shape[0], prod.out_channels, prod.out_h, prod.out_w)


# ---------------------------------------------------------------------------
# serialization: a directory with manifest.json plus one raw little-endian
# float64 blob per weight / bias; round trips are bit exact.

FORMAT_VERSION = 1


def _layer_manifest(layer: Layer, idx: int) -> dict:
    entry = {
        "kind": layer.kind,
        "activation": layer.activation,
        "slope": layer.slope,
        "weight_blob": f"w{idx}.bin",
        "bias_blob": f"b{idx}.bin",
        "weight_shape": list(layer.weight.shape),
        "bias_shape": list(layer.bias.shape),
    }
    if layer.kind == "conv2d":
        entry["conv"] = {
            "kernel": layer.kernel,
            "stride": layer.stride,
            "padding": layer.padding,
            "in_channels": layer.in_channels,
            "in_h": layer.in_h,
            "in_w": layer.in_w,
        }
    return entry


def save(net: Network, path) -> None:
    """Write the network to a directory (created if needed)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "dtype": "f64",
        "endianness": "little",
        "layers": [_layer_manifest(l, i + 1) for i, l in enumerate(net.layers)],
    }
    for i, layer in enumerate(net.layers, start=1):
        np.ascontiguousarray(layer.weight, dtype="<f8").tofile(root / f"w{i}.bin")
        np.ascontiguousarray(layer.bias, dtype="<f8").tofile(root / f"b{i}.bin")
    with open(root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_blob(path: Path, shape) -> np.ndarray:
    data = np.fromfile(path, dtype="<f8")
    expected = int(np.prod(shape))
    if data.size != expected:
        raise CorruptManifest(
            f"blob {path.name} holds {data.size} values, manifest says {expected}"
        )
    return data.reshape(shape)


def load(path) -> Network:
    """Load a network saved by save(); validates blob sizes and dims."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise CorruptManifest(f"no manifest.json under {root}")
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorruptManifest(f"manifest.json unreadable: {exc}") from exc
    if manifest.get("dtype") != "f64" or manifest.get("endianness") != "little":
        raise CorruptManifest("unsupported dtype or endianness in manifest")
    layers = []
    for entry in manifest["layers"]:
        try:
            weight = _read_blob(root / entry["weight_blob"], entry["weight_shape"])
            bias = _read_blob(root / entry["bias_blob"], entry["bias_shape"])
            conv = entry.get("conv", {})
            layers.append(
                Layer(
                    kind=entry["kind"],
                    weight=weight,
                    bias=bias,
                    activation=entry["activation"],
                    slope=entry.get("slope", 0.01),
                    kernel=conv.get("kernel", 0),
                    stride=conv.get("stride", 1),
                    padding=conv.get("padding", 0),
                    in_channels=conv.get("in_channels", 0),
                    in_h=conv.get("in_h", 0),
                    in_w=conv.get("in_w", 0),
                )
            )
        except KeyError as exc:
            raise CorruptManifest(f"manifest missing field {exc}") from exc
    return Network(layers=layers)


def clone(net: Network) -> Network:
    return Network(layers=[replace(l, weight=l.weight.copy(), bias=l.bias.copy())
                           for l in net.layers])
