import numpy as np
import pytest

from specprune.data import (
    Dataset,
    load_idx,
    synth_spectrum,
    to_csv,
    write_idx,
)
from specprune.errors import BadMagic, TruncatedFile


def test_idx_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.random((12, 49))
    labels = rng.integers(0, 10, size=12)
    write_idx(images, labels, tmp_path / "img", tmp_path / "lab")
    ds = load_idx(tmp_path / "img", tmp_path / "lab")
    assert ds.inputs.shape == (12, 49)
    assert ds.inputs.min() >= 0.0 and ds.inputs.max() <= 1.0
    # uint8 quantization: recovered within half a pixel step
    assert np.max(np.abs(ds.inputs - images)) <= 0.5 / 255.0 + 1e-12
    assert np.array_equal(ds.targets.argmax(axis=1), labels)
    assert np.allclose(ds.targets.sum(axis=1), 1.0)


def test_idx_limit(tmp_path):
    rng = np.random.default_rng(1)
    write_idx(rng.random((20, 16)), rng.integers(0, 10, 20),
              tmp_path / "img", tmp_path / "lab")
    ds = load_idx(tmp_path / "img", tmp_path / "lab", limit=10)
    assert ds.n == 10
    with pytest.raises(ValueError):
        load_idx(tmp_path / "img", tmp_path / "lab", limit=0)


def test_idx_bad_magic(tmp_path):
    rng = np.random.default_rng(2)
    write_idx(rng.random((3, 4)), rng.integers(0, 10, 3),
              tmp_path / "img", tmp_path / "lab")
    raw = bytearray((tmp_path / "img").read_bytes())
    raw[3] = 0x99
    (tmp_path / "img").write_bytes(bytes(raw))
    with pytest.raises(BadMagic):
        load_idx(tmp_path / "img", tmp_path / "lab")


def test_idx_truncated(tmp_path):
    rng = np.random.default_rng(3)
    write_idx(rng.random((3, 4)), rng.integers(0, 10, 3),
              tmp_path / "img", tmp_path / "lab")
    raw = (tmp_path / "img").read_bytes()
    (tmp_path / "img").write_bytes(raw[:-2])
    with pytest.raises(TruncatedFile):
        load_idx(tmp_path / "img", tmp_path / "lab")


def test_synth_flat_spectrum():
    ds = synth_spectrum(n=4000, d=8, decay=0.0, seed=0)
    cov = ds.inputs.T @ ds.inputs / ds.n
    evals = np.linalg.eigvalsh(cov)
    assert evals.max() / evals.min() < 3.0


def test_synth_single_dim():
    ds = synth_spectrum(n=50, d=1, decay=2.0, seed=1)
    assert ds.inputs.shape == (50, 1)


def test_synth_decay_spectra_cross():
    fast = synth_spectrum(n=6000, d=12, decay=2.0, seed=2)
    slow = synth_spectrum(n=6000, d=12, decay=0.5, seed=2)
    ev_fast = np.sort(np.linalg.eigvalsh(fast.inputs.T @ fast.inputs / fast.n))[::-1]
    ev_slow = np.sort(np.linalg.eigvalsh(slow.inputs.T @ slow.inputs / slow.n))[::-1]
    # normalized: the p=2 spectrum starts at 1 like p=0.5 but dives below it
    nf, ns = ev_fast / ev_fast[0], ev_slow / ev_slow[0]
    assert nf[-1] < ns[-1]
    assert nf[1] < ns[1]


def test_synth_linear_teacher_is_affine():
    ds = synth_spectrum(n=200, d=6, decay=0.5, seed=3, teacher="linear")
    # affine in x: fit by least squares, residual is numerically zero
    design = np.hstack([ds.inputs, np.ones((200, 1))])
    coef, *_ = np.linalg.lstsq(design, ds.targets, rcond=None)
    assert np.max(np.abs(design @ coef - ds.targets)) < 1e-10


@pytest.mark.skipif("SPECPRUNE_MNIST_DIR" not in __import__("os").environ,
                    reason="real MNIST IDX files not available offline")
def test_real_mnist_limit_ten():
    import os
    from pathlib import Path

    root = Path(os.environ["SPECPRUNE_MNIST_DIR"])
    ds = load_idx(root / "train-images-idx3-ubyte",
                  root / "train-labels-idx1-ubyte", limit=10)
    assert ds.inputs.shape == (10, 784)
    assert ds.inputs.min() >= 0.0 and ds.inputs.max() <= 1.0


def test_synth_deterministic():
    a = synth_spectrum(n=100, d=5, decay=1.0, seed=9)
    b = synth_spectrum(n=100, d=5, decay=1.0, seed=9)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.targets, b.targets)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 3)), np.zeros((0, 1)))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.inf, 0.0]]), np.zeros((1, 1)))


def test_csv_export(tmp_path):
    ds = synth_spectrum(n=5, d=3, decay=1.0, seed=0)
    to_csv(ds, tmp_path / "out.csv")
    lines = (tmp_path / "out.csv").read_text().strip().splitlines()
    assert lines[0] == "x0,x1,x2,y0"
    assert len(lines) == 6
