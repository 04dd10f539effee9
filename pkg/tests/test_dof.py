import math

import numpy as np
import pytest

from specprune.covariance import LayerCovariance
from specprune.dof import (
    dof,
    dof_output,
    dof_profile,
    intrinsic_dim,
    lambda_for_width,
    leverage,
    width_for_lambda,
    width_requirement,
)
from specprune.errors import NegativeLambda
from specprune.linalg import psd_solve


def cov_from(sigma, layer=2, n=100):
    return LayerCovariance(layer=layer, sigma=np.asarray(sigma, dtype=float), n=n)


def random_cov(rng, m, rank=None):
    g = rng.standard_normal((rank or m, m))
    return cov_from(g.T @ g / (rank or m))


def test_dof_identity():
    assert dof(cov_from(np.eye(4)), 1.0) == pytest.approx(2.0)


def test_dof_diag_closed_form():
    assert dof(cov_from(np.diag([3.0, 1.0])), 1.0) == pytest.approx(1.25)


def test_dof_zero_lambda_returns_rank():
    assert dof(cov_from(np.diag([2.0, 1.0, 0.0])), 0.0) == 3 - 1


def test_dof_matches_solve_oracle():
    rng = np.random.default_rng(0)
    cov = random_cov(rng, 12)
    lam = 0.05
    x = psd_solve(cov.sigma, lam, cov.sigma)
    assert dof(cov, lam) == pytest.approx(np.trace(x), rel=1e-9)


def test_dof_rejects_negative_lambda():
    with pytest.raises(NegativeLambda):
        dof(cov_from(np.eye(2)), -1.0)


def test_dof_output_identity_reduces_to_dof():
    rng = np.random.default_rng(1)
    cov = random_cov(rng, 6)
    assert dof_output(cov, np.eye(6), 0.3) == pytest.approx(dof(cov, 0.3), rel=1e-12)


def test_dof_output_zero_is_zero():
    cov = cov_from(np.eye(3))
    assert dof_output(cov, np.zeros((2, 3)), 1.0) == 0.0


def test_dof_output_matches_solve_oracle():
    rng = np.random.default_rng(2)
    cov = random_cov(rng, 9)
    z = rng.standard_normal((4, 9))
    lam = 0.02
    inner = psd_solve(cov.sigma, lam, cov.sigma)  # (S + lam)^-1 S
    oracle = np.trace(z @ inner @ z.T)
    assert dof_output(cov, z, lam) == pytest.approx(oracle, rel=1e-9)


def test_leverage_uniform_for_identity():
    lev = leverage(cov_from(np.eye(5)), 0.7)
    assert np.allclose(lev.scores, 0.2)
    assert lev.scores.sum() == pytest.approx(1.0, abs=1e-10)


def test_leverage_zero_variance_node():
    lev = leverage(cov_from(np.diag([2.0, 0.0])), 0.1)
    assert np.allclose(lev.scores, [1.0, 0.0])


def test_leverage_matches_diagonal_oracle():
    rng = np.random.default_rng(3)
    cov = random_cov(rng, 10)
    lam = 0.04
    inner = psd_solve(cov.sigma, lam, cov.sigma)
    diag = np.diag(cov.sigma @ np.linalg.inv(cov.sigma + lam * np.eye(10)))
    lev = leverage(cov, lam)
    n_hat = dof(cov, lam)
    assert np.allclose(lev.scores, diag / n_hat, atol=1e-9)
    assert lev.scores.sum() == pytest.approx(1.0, abs=1e-10)


def test_dof_monotone_and_limits():
    rng = np.random.default_rng(4)
    cov = random_cov(rng, 8)
    grid = np.logspace(-6, 3, 20) * cov.trace
    values = [dof(cov, l) for l in grid]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[-1] < 0.05
    assert abs(values[0] - cov.spectrum.rank()) < 1e-3


def test_lambda_for_width_zero_when_rank_is_cheap():
    # rank 1: requirement 5 * 1 * log(80) ~ 21.9, so m_sharp = 25 is free
    sigma = np.zeros((30, 30))
    sigma[0, 0] = 2.0
    assert lambda_for_width(cov_from(sigma), 25) == 0.0


def test_lambda_for_width_grid_scan_oracle():
    cov = cov_from(np.eye(2))
    m_sharp = 1
    lam = lambda_for_width(cov, m_sharp)
    # grid-scan the boundary of 1 >= 5 N log(80 N)
    grid = np.logspace(-4, 2, 40000)
    req = np.array([width_requirement(dof(cov, l)) for l in grid])
    feasible = grid[req <= m_sharp]
    boundary = feasible.min()
    assert lam == pytest.approx(boundary, rel=1e-3)
    assert m_sharp >= width_requirement(dof(cov, lam))
    assert m_sharp < width_requirement(dof(cov, 0.99 * lam))


def test_lambda_for_width_monotone_in_width():
    rng = np.random.default_rng(5)
    for trial in range(5):
        cov = random_cov(rng, 12)
        lams = [lambda_for_width(cov, m) for m in range(1, 13)]
        assert all(a >= b - 1e-15 for a, b in zip(lams, lams[1:]))


def test_width_for_lambda_closed_form_and_clamp():
    cov = cov_from(np.eye(4))
    # N(1) = 2 -> ceil(10 log 160) = 51, clamped to the layer width 4
    assert width_requirement(2.0) == pytest.approx(10 * math.log(160.0))
    assert width_for_lambda(cov, 1.0) == 4
    # giant lambda -> N ~ 0 -> clamped to 1
    assert width_for_lambda(cov, 1e9) == 1
    with pytest.raises(NegativeLambda):
        width_for_lambda(cov, 0.0)


def test_width_lambda_round_trip():
    # only meaningful when the requirement is not clamped at the layer width
    rng = np.random.default_rng(6)
    checked = 0
    for trial in range(20):
        cov = random_cov(rng, 15)
        lam = 10.0 ** rng.uniform(-1, 1) * cov.trace
        if width_requirement(dof(cov, lam)) > cov.dim:
            continue
        width = width_for_lambda(cov, lam)
        back = lambda_for_width(cov, width)
        # the recovered lambda cannot exceed the one that produced the width
        assert back <= lam * (1 + 1e-6)
        checked += 1
    assert checked >= 5


def test_dof_profile_descending():
    rng = np.random.default_rng(7)
    cov = random_cov(rng, 6)
    prof = dof_profile(cov, [1e-3, 1e-1, 1e1])
    assert prof.lambda_grid[0] > prof.lambda_grid[-1]
    assert all(np.diff(prof.dof_values) >= 0)  # descending grid -> rising dof


def test_dof_profile_csv(tmp_path):
    from specprune.dof import write_dof_csv

    rng = np.random.default_rng(8)
    cov = random_cov(rng, 5)
    prof = dof_profile(cov, [1e-4, 1e-2, 1e0])
    write_dof_csv(prof, cov, tmp_path / "dof.csv")
    lines = (tmp_path / "dof.csv").read_text().strip().splitlines()
    assert lines[0] == "layer,lambda,dof,width_for_lambda"
    assert len(lines) == 4
    widths = [int(l.split(",")[3]) for l in lines[1:]]
    assert all(1 <= w <= 5 for w in widths)


def test_intrinsic_dim_dense_product():
    cov_a = cov_from(np.diag([1.0, 0.5]))
    cov_b = cov_from(np.diag([2.0, 1.0]))
    got = intrinsic_dim(cov_a, cov_b, kernel=1)
    lam_a, lam_b = 1e-3 * 1.5, 1e-3 * 3.0
    expect = (1 / (1 + lam_a) + 0.5 / (0.5 + lam_a)) * (
        2 / (2 + lam_b) + 1 / (1 + lam_b))
    assert got == pytest.approx(expect, rel=1e-12)


def test_intrinsic_dim_identity_frozen_value():
    cov = cov_from(np.eye(4))
    # lambda = 1e-3 * trace = 4e-3 each: (4 / 1.004)^2
    assert intrinsic_dim(cov, cov, kernel=1) == pytest.approx((4 / 1.004) ** 2, rel=1e-12)
    assert intrinsic_dim(cov, cov, kernel=3) == pytest.approx(9 * (4 / 1.004) ** 2, rel=1e-12)


def test_intrinsic_dim_conv_stack_below_parameter_count():
    # conv stack on fast-decay synthetic data: every per-layer intrinsic
    # dimensionality is positive and below the raw parameter count
    from specprune.covariance import channel_cov
    from specprune.data import synth_spectrum
    from specprune.training import make_conv_network

    net = make_conv_network(1, 8, 8, [6, 8, 6], kernel=3, padding=1,
                            dense_out=1, seed=42)
    data = synth_spectrum(n=400, d=64, decay=2.0, seed=7)
    covs = {l: channel_cov(net, data, l) for l in (2, 3, 4)}
    table = []
    for l in (2, 3):
        got = intrinsic_dim(covs[l], covs[l + 1], kernel=3)
        channels_in = net.layers[l - 1].in_channels
        channels_out = net.layers[l - 1].out_channels
        params = channels_in * channels_out * 9
        table.append((l, got, params))
        assert 0 < got <= params
    assert len(table) == 2
