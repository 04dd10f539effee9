"""Noncentered covariances of layer activations.

For a dense layer the covariance is (1/n) sum_i phi(x_i) phi(x_i)^T over
the post-activation inputs phi^(l). For conv layers the covariance is
taken channel-wise, averaging products over spatial positions; the
output/input cross covariance additionally averages each input position
over the output positions whose receptive fields contain it.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import ShapeMismatch, ZeroMatrix
from .linalg import SymmetricSpectrum, sym_eig
from .network import Network, capture_maps, forward_capture

COV_BATCH = 512


@dataclass
class LayerCovariance:
    layer: int
    sigma: np.ndarray
    n: int
    _spectrum: SymmetricSpectrum | None = field(default=None, repr=False)

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.sigma.ndim != 2 or self.sigma.shape[0] != self.sigma.shape[1]:
            raise ShapeMismatch("covariance must be square")

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.sigma))

    @property
    def spectrum(self) -> SymmetricSpectrum:
        if self._spectrum is None:
            self._spectrum = sym_eig(self.sigma)
        return self._spectrum


@dataclass
class CrossCovariance:
    """Covariance between mapped outputs (rows) and input channels (cols)."""

    layer: int
    z_sigma: np.ndarray

    def __post_init__(self):
        self.z_sigma = np.asarray(self.z_sigma, dtype=np.float64)
        if not np.all(np.isfinite(self.z_sigma)):
            raise ShapeMismatch("cross covariance contains non-finite entries")


def _pairwise_sum(blocks: list) -> np.ndarray:
    """Fixed-shape binary reduction tree; bounds rounding drift when many
    outer-product blocks are accumulated."""
    while len(blocks) > 1:
        merged = [blocks[i] + blocks[i + 1] for i in range(0, len(blocks) - 1, 2)]
        if len(blocks) % 2:
            merged.append(blocks[-1])
        blocks = merged
    return blocks[0]


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2.0


def layer_cov(net: Network, data: Dataset, layer: int,
              batch: int = COV_BATCH) -> LayerCovariance:
    """Empirical covariance of phi^(layer) over the dataset, 2 <= layer <= L."""
    if not 2 <= layer <= net.depth:
        raise ValueError(f"layer must be in [2, {net.depth}], got {layer}")
    blocks = []
    for start in range(0, data.n, batch):
        phi = forward_capture(net, data.inputs[start : start + batch], layer)
        blocks.append(phi.T @ phi)
    sigma = _symmetrize(_pairwise_sum(blocks) / data.n)
    return LayerCovariance(layer=layer, sigma=sigma, n=data.n)


def channel_cov(net: Network, data: Dataset, layer: int,
                batch: int = COV_BATCH) -> LayerCovariance:
    """Channel-wise covariance of a conv feature map phi^(layer):
    products are averaged over the spatial grid, then over samples."""
    producer = net.layers[layer - 2]
    if producer.kind != "conv2d":
        raise ShapeMismatch(f"layer {layer - 1} is not conv2d")
    area = producer.out_h * producer.out_w
    blocks = []
    for start in range(0, data.n, batch):
        maps = capture_maps(net, data.inputs[start : start + batch], layer)
        flat = maps.reshape(maps.shape[0], maps.shape[1], area)
        blocks.append(np.einsum("ncs,nks->ck", flat, flat))
    sigma = _symmetrize(_pairwise_sum(blocks) / (data.n * area))
    return LayerCovariance(layer=layer, sigma=sigma, n=data.n)


def receptive_field_map(layer) -> np.ndarray:
    """Matrix M of shape (out_h*out_w, in_h*in_w) with
    M[(u',v'), (u,v)] = 1/I'(u,v) when input position (u,v) lies in the
    receptive field of output position (u',v'), else 0. Input positions
    covered by no output contribute nothing."""
    k, s, p = layer.kernel, layer.stride, layer.padding
    h, w = layer.in_h, layer.in_w
    oh, ow = layer.out_h, layer.out_w
    member = np.zeros((oh * ow, h * w))
    for up in range(oh):
        for vp in range(ow):
            for i in range(k):
                for j in range(k):
                    u, v = up * s + i - p, vp * s + j - p
                    if 0 <= u < h and 0 <= v < w:
                        member[up * ow + vp, u * w + v] = 1.0
    counts = member.sum(axis=0)
    weights = np.divide(1.0, counts, out=np.zeros_like(counts), where=counts > 0)
    return member * weights


def _conv_out_maps(layer, maps: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Apply kernels z (rows, C*k*k) to feature maps, no bias:
    (n, C, H, W) -> (n, rows, out_h*out_w)."""
    from .network import _im2col

    if z.shape[1] != layer.in_channels * layer.kernel ** 2:
        raise ShapeMismatch(
            f"z has {z.shape[1]} cols, expected {layer.in_channels * layer.kernel ** 2}"
        )
    cols = _im2col(maps, layer)
    return np.einsum("oc,ncs->nos", z, cols)


def output_channel_cov(net: Network, data: Dataset, layer: int,
                       z: np.ndarray | None = None,
                       batch: int = COV_BATCH) -> CrossCovariance:
    """Receptive-field-averaged cross covariance between the conv outputs
    under kernels z (default: the consuming layer's own weights) and the
    input channels of phi^(layer)."""
    consumer = net.layers[layer - 1]
    producer = net.layers[layer - 2]
    if consumer.kind != "conv2d" or producer.kind != "conv2d":
        raise ShapeMismatch("output_channel_cov needs conv producer and consumer")
    weights = consumer.weight if z is None else np.asarray(z, dtype=np.float64)
    rf = receptive_field_map(consumer)
    area = producer.out_h * producer.out_w
    blocks = []
    for start in range(0, data.n, batch):
        maps = capture_maps(net, data.inputs[start : start + batch], layer)
        flat = maps.reshape(maps.shape[0], maps.shape[1], area)
        out = _conv_out_maps(consumer, maps, weights)
        spread = np.einsum("nos,st->not", out, rf)
        blocks.append(np.einsum("not,nct->oc", spread, flat))
    z_sigma = _pairwise_sum(blocks) / (data.n * area)
    return CrossCovariance(layer=layer, z_sigma=z_sigma)


def output_channel_gram(net: Network, data: Dataset, layer: int,
                        z: np.ndarray | None = None,
                        batch: int = COV_BATCH) -> np.ndarray:
    """Channel covariance of the conv output under kernels z; plays the
    role of Tr[Z Sigma Z^T]'s Gram in the conv output loss."""
    consumer = net.layers[layer - 1]
    weights = consumer.weight if z is None else np.asarray(z, dtype=np.float64)
    out_area = consumer.out_h * consumer.out_w
    blocks = []
    for start in range(0, data.n, batch):
        maps = capture_maps(net, data.inputs[start : start + batch], layer)
        out = _conv_out_maps(consumer, maps, weights)
        blocks.append(np.einsum("nos,nks->ok", out, out))
    return _symmetrize(_pairwise_sum(blocks) / (data.n * out_area))


def eigen_report(cov: LayerCovariance) -> list[tuple[int, float, float]]:
    """Rows (rank, eigenvalue, eigenvalue / largest), descending."""
    mu = cov.spectrum.eigenvalues
    if mu.size == 0 or mu[0] <= 0.0:
        raise ZeroMatrix("covariance has no positive eigenvalue to normalize by")
    top = mu[0]
    return [(j + 1, float(v), float(v / top)) for j, v in enumerate(mu)]


def write_eigen_csv(rows_by_layer: dict, path) -> None:
    """Spectrum dump: layer, rank, eigenvalue, normalized."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "rank", "eigenvalue", "normalized"])
        for layer in sorted(rows_by_layer):
            for rank, value, normed in rows_by_layer[layer]:
                writer.writerow([layer, rank, repr(value), repr(normed)])


def save_cov(cov: LayerCovariance, prefix) -> None:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(cov.sigma, dtype="<f8").tofile(f"{prefix}.bin")
    meta = {"layer": cov.layer, "n": cov.n, "dim": cov.dim,
            "dtype": "f64", "endianness": "little"}
    with open(f"{prefix}.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_cov(prefix) -> LayerCovariance:
    with open(f"{prefix}.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    data = np.fromfile(f"{prefix}.bin", dtype="<f8")
    dim = meta["dim"]
    if data.size != dim * dim:
        from .errors import CorruptManifest

        raise CorruptManifest(f"covariance blob holds {data.size} values, expected {dim * dim}")
    return LayerCovariance(layer=meta["layer"], sigma=data.reshape(dim, dim), n=meta["n"])
