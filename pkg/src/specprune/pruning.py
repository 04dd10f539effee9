"""Spectral pruning: information-loss objectives, greedy selection under a
leverage budget, and closed-form reconstruction of the compressed network.

Selecting an index set J of size m_sharp minimizes
theta * L_input(J) + (1 - theta) * L_output(J), where L_input is the
ridge-regression residual of reconstructing all nodes from the selected
ones and L_output the same residual seen through scaled next-layer weight
rows. Both collapse to trace formulas in the layer covariance, so greedy
steps only touch small solves. The kept nodes are then recombined by
A_hat = Sigma_{F,J} (Sigma_{J,J} + diag(tau))^-1, giving the compressed
weights W_sharp = W[J_next, :] @ A_hat and b_sharp = b[J_next].
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .covariance import (
    LayerCovariance,
    channel_cov,
    layer_cov,
    output_channel_cov,
    output_channel_gram,
)
from .data import Dataset
from .dof import LeverageScores, lambda_for_width, leverage_at, width_for_lambda
from .errors import AllZeroRows, ShapeMismatch, Singular, ZeroRowNorm
from .linalg import psd_solve, submatrix
from .network import Network, forward

log = logging.getLogger(__name__)

BUDGET_FACTOR = 5.0 / 3.0
# Schur complements at or below this relative size mark a candidate as
# linearly dependent on the current selection (tau = 0 regime only)
DEPENDENT_REL_TOL = 1e-12

PROCEDURES = ("backward", "simultaneous")


@dataclass(frozen=True)
class OutputMap:
    """Scaled next-layer rows Z used by the output information loss,
    plus the row distribution q over the full next layer."""

    layer: int
    z: np.ndarray      # (rows, m_l)
    q: np.ndarray      # (m_{l+1},), nonnegative, sums to 1 on its support
    rows: np.ndarray   # next-layer row index of each z row


@dataclass
class PruneConfig:
    """How to prune: either per-layer target widths, a lambda policy, or
    both (widths fixed and lambda fixed, the Sec. 5-style protocol). When
    only one is given the other follows from the width requirement
    m_sharp >= 5 N(lambda) log(80 N(lambda))."""

    theta: float = 0.5
    widths: dict | None = None          # layer -> m_sharp
    lambda_coef: float | None = None    # lambda_l = coef * trace(Sigma_l)
    lambdas: dict | None = None         # explicit per-layer lambda overrides
    procedure: str = "backward"
    budget_constraint: bool = True
    tau_override: float | None = None   # scalar tau for every entry (e.g. 0.0)
    layers: list | None = None          # layers to prune; default: all 2..L

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.procedure not in PROCEDURES:
            raise ValueError(f"procedure must be one of {PROCEDURES}")
        if self.widths is None and self.lambda_coef is None and self.lambdas is None:
            raise ValueError("need target widths or a lambda policy")


@dataclass
class SelectionResult:
    layer: int
    indices: np.ndarray          # sorted, |indices| = achieved width
    a_hat: np.ndarray            # (m_l, |indices|) reconstruction matrix
    loss_input: float
    loss_output: float
    loss_combined: float
    budget_used: float
    budget_limit: float
    feasible: bool
    lam: float
    theta: float
    tau: np.ndarray = field(repr=False)
    target_width: int = 0

    def to_json_dict(self) -> dict:
        return {
            "layer": self.layer,
            "indices": [int(i) for i in self.indices],
            "loss_input": self.loss_input,
            "loss_output": self.loss_output,
            "loss_combined": self.loss_combined,
            "budget_used": self.budget_used,
            "budget_limit": self.budget_limit,
            "feasible": self.feasible,
            "lambda": self.lam,
            "theta": self.theta,
            "target_width": self.target_width,
        }


# ---------------------------------------------------------------------------
# loss evaluation


def _tau_vector(tau, idx_count: int) -> np.ndarray:
    t = np.asarray(tau, dtype=np.float64)
    if t.ndim == 0:
        t = np.full(idx_count, float(t))
    if t.shape != (idx_count,):
        raise ShapeMismatch(f"tau has shape {t.shape}, expected ({idx_count},)")
    if np.any(t < 0):
        raise ValueError("tau entries must be >= 0")
    return t


def _pinv_solve(k: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(k)
    cutoff = max(evals.max(), 0.0) * 1e-12 if evals.size else 0.0
    inv = np.where(evals > cutoff, 1.0 / np.where(evals > cutoff, evals, 1.0), 0.0)
    return evecs @ (inv[:, None] * (evecs.T @ rhs))


def _solve_selected(sigma: np.ndarray, J: np.ndarray, tau_J: np.ndarray,
                    rhs: np.ndarray) -> np.ndarray:
    """(Sigma_{J,J} + diag(tau_J))^-1 rhs.

    tau = 0 (pure interpolation) and numerically singular shifted systems
    both go through an eigenvalue-thresholded pseudo-inverse, the limiting
    optimum of the ridge problem; identity compression stays exact."""
    k = submatrix(sigma, J, J)
    if tau_J.size and tau_J.max() > 0.0:
        try:
            return psd_solve(k, tau_J, rhs)
        except Singular:
            k = k + np.diag(tau_J)
    return _pinv_solve(k, rhs)


def reconstruction_matrix(cov: LayerCovariance, J, tau) -> np.ndarray:
    """A_hat = Sigma_{F,J} (Sigma_{J,J} + diag(tau))^-1, shape (m_l, |J|)."""
    J = np.asarray(J, dtype=np.int64)
    tau_J = _tau_vector(tau, J.size)
    rhs = cov.sigma[np.ix_(J, np.arange(cov.dim))]
    return _solve_selected(cov.sigma, J, tau_J, rhs).T


def input_loss(cov: LayerCovariance, J, tau) -> float:
    """Residual trace of ridge-reconstructing all nodes from phi_J.
    The empty selection returns the full trace."""
    J = np.asarray(J, dtype=np.int64)
    if J.size == 0:
        return cov.trace
    tau_J = _tau_vector(tau, J.size)
    rhs = cov.sigma[np.ix_(J, np.arange(cov.dim))]
    x = _solve_selected(cov.sigma, J, tau_J, rhs)
    value = cov.trace - float(np.sum(rhs * x))
    return max(value, 0.0)


def output_loss(cov: LayerCovariance, omap, J, tau) -> float:
    """Same residual measured through the scaled next-layer rows z."""
    z = omap.z if isinstance(omap, OutputMap) else np.asarray(omap, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != cov.dim:
        raise ShapeMismatch(f"z must have {cov.dim} columns")
    J = np.asarray(J, dtype=np.int64)
    zs = z @ cov.sigma
    total = float(np.sum(zs * z))
    if J.size == 0:
        return max(total, 0.0)
    tau_J = _tau_vector(tau, J.size)
    rhs = zs[:, J].T  # Sigma_{J,F} Z^T
    x = _solve_selected(cov.sigma, J, tau_J, rhs)
    value = total - float(np.sum(rhs * x))
    return max(value, 0.0)


# ---------------------------------------------------------------------------
# greedy selection


def _greedy_gain_state(sigma, h, tau_full):
    """Closure evaluating marginal gains of adding each candidate to the
    current selection, via Schur complements on a growing Cholesky core."""

    class State:
        def __init__(self):
            self.core: list = []
            self.chol: np.ndarray | None = None

        def gains(self, cand: np.ndarray):
            d = sigma[cand, cand] + tau_full[cand]
            if not self.core:
                s = d
                num = h[cand, cand]
            else:
                core = np.asarray(self.core)
                b = sigma[np.ix_(core, cand)]
                v = scipy.linalg.cho_solve((self.chol, True), b, check_finite=False)
                s = d - np.einsum("tc,tc->c", b, v)
                h_cc = h[np.ix_(core, core)]
                quad = np.einsum("tc,tc->c", v, h_cc @ v)
                cross = np.einsum("tc,tc->c", v, h[np.ix_(core, cand)])
                num = quad - 2.0 * cross + h[cand, cand]
            floor = DEPENDENT_REL_TOL * max(np.max(sigma.diagonal(), initial=0.0), 1e-300)
            ok = s > floor
            gains = np.zeros(cand.size)
            np.divide(np.maximum(num, 0.0), s, out=gains, where=ok)
            return gains, ok

        def accept(self, j: int, independent: bool):
            if not independent:
                return
            new_core = self.core + [j]
            k = sigma[np.ix_(new_core, new_core)].copy()
            k[np.arange(len(new_core)), np.arange(len(new_core))] += tau_full[new_core]
            try:
                self.chol = scipy.linalg.cholesky(k, lower=True, check_finite=False)
                self.core = new_core
            except scipy.linalg.LinAlgError as exc:
                raise Singular(f"selection core became singular: {exc}") from exc

    return State()


def greedy_select(cov: LayerCovariance, omap, theta: float, m_sharp: int,
                  tau, leverage: LeverageScores | None = None,
                  budget_constraint: bool = True,
                  cross: np.ndarray | None = None,
                  out_gram: np.ndarray | None = None,
                  lam: float = 0.0) -> SelectionResult:
    """Grow J from empty, each step adding the admissible index that most
    reduces theta * L_input + (1 - theta) * L_output; ties break toward
    the smallest index.

    Under the budget constraint, candidates whose inverse leverage would
    push sum_{j in J} 1/q_j past (5/3) m_l m_sharp are skipped; if no
    candidate remains before |J| = m_sharp the partial selection is
    returned flagged infeasible. `cross` / `out_gram` override the dense
    Z Sigma and Z Sigma Z^T terms (conv channel pruning passes the
    receptive-field versions).
    """
    m = cov.dim
    if not 1 <= m_sharp <= m:
        raise ValueError(f"m_sharp must be in [1, {m}], got {m_sharp}")
    if budget_constraint and leverage is None:
        raise ValueError("budget constraint needs leverage scores")
    z = omap.z if isinstance(omap, OutputMap) else np.asarray(omap, dtype=np.float64)
    sigma = cov.sigma
    tau_full = _tau_vector(tau, m)
    x = z @ sigma if cross is None else np.asarray(cross, dtype=np.float64)
    if x.shape[1] != m:
        raise ShapeMismatch("cross covariance column count must match cov dim")
    gram_out = (z @ sigma @ z.T if out_gram is None
                else np.asarray(out_gram, dtype=np.float64))
    h = theta * (sigma @ sigma) + (1.0 - theta) * (x.T @ x)
    h = (h + h.T) / 2.0

    budget_limit = BUDGET_FACTOR * m * m_sharp
    inv_lev = None
    admissible = np.ones(m, dtype=bool)
    if leverage is not None:
        scores = leverage.scores
        with np.errstate(divide="ignore"):
            inv_lev = np.where(scores > 0.0, 1.0 / np.where(scores > 0.0, scores, 1.0), np.inf)
        admissible &= scores > 0.0  # zero-leverage nodes are never candidates

    state = _greedy_gain_state(sigma, h, tau_full)
    selected: list[int] = []
    budget_used = 0.0
    feasible = True
    in_J = np.zeros(m, dtype=bool)
    while len(selected) < m_sharp:
        base_mask = admissible & ~in_J
        if not np.any(base_mask):
            # only neglected (zero-leverage) nodes remain; they carry no
            # signal, so stopping short is a complete selection
            log.info("layer %d: %d of %d nodes selected, rest have zero leverage",
                     cov.layer, len(selected), m_sharp)
            break
        cand_mask = base_mask
        if budget_constraint:
            cand_mask = base_mask & ((budget_used + inv_lev) <= budget_limit + 1e-9)
        cand = np.nonzero(cand_mask)[0]
        if cand.size == 0:
            feasible = False
            log.warning("layer %d: budget constraint exhausted at |J| = %d of %d",
                        cov.layer, len(selected), m_sharp)
            break
        gains, independent = state.gains(cand)
        best = int(np.argmax(gains))  # first max wins: smallest index
        j = int(cand[best])
        selected.append(j)
        in_J[j] = True
        if inv_lev is not None:
            budget_used += float(inv_lev[j])
        state.accept(j, bool(independent[best]))

    indices = np.array(sorted(selected), dtype=np.int64)
    tau_J = tau_full[indices]
    a_hat = reconstruction_matrix(cov, indices, tau_J)
    l_in = input_loss(cov, indices, tau_J)
    zs_term = float(np.trace(gram_out))
    rhs = x[:, indices].T
    xsol = _solve_selected(sigma, indices, tau_J, rhs) if indices.size else rhs
    l_out = max(zs_term - float(np.sum(rhs * xsol)), 0.0) if indices.size else zs_term
    combined = theta * l_in + (1.0 - theta) * l_out
    return SelectionResult(
        layer=cov.layer, indices=indices, a_hat=a_hat,
        loss_input=l_in, loss_output=l_out, loss_combined=combined,
        budget_used=budget_used if inv_lev is not None else math.nan,
        budget_limit=budget_limit, feasible=feasible, lam=lam, theta=theta,
        tau=tau_J, target_width=m_sharp,
    )


# ---------------------------------------------------------------------------
# output maps


def _consumer_weight(net: Network, layer: int) -> np.ndarray:
    return net.layers[layer - 1].weight


def backward_output_map(net: Network, layer: int, next_selected,
                        next_leverage: LeverageScores | None) -> OutputMap:
    """Z rows sqrt(m_l q_j) W_j / max_j' ||W_j'|| over the selected
    next-layer rows, with q_j inversely proportional to the next layer's
    leverage scores (uniform when next_leverage is None, the output-layer
    convention)."""
    w = _consumer_weight(net, layer)
    rows = np.asarray(next_selected, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("next-layer selection must be nonempty")
    norms = np.linalg.norm(w, axis=1)
    top = norms.max()
    if top == 0.0:
        raise ZeroRowNorm(f"all rows of layer {layer} weights have zero norm")
    m_next = w.shape[0]
    q = np.zeros(m_next)
    if next_leverage is None:
        q[rows] = 1.0 / rows.size
    else:
        scores = next_leverage.scores[rows]
        if np.any(scores <= 0.0):
            raise ValueError("next-layer leverage must be positive on the selection")
        inv = 1.0 / scores
        q[rows] = inv / inv.sum()
    m_l = net.width(layer)
    scale = np.sqrt(m_l * q[rows]) / top
    z = w[rows] * scale[:, None]
    return OutputMap(layer=layer, z=z, q=q, rows=rows)


def simultaneous_output_map(net: Network, layer: int,
                            next_leverage: LeverageScores | None) -> OutputMap:
    """Unit-normalized next-layer rows (all of them), q inversely
    proportional to the next layer's leverage over the full row set."""
    w = _consumer_weight(net, layer)
    norms = np.linalg.norm(w, axis=1)
    keep = np.nonzero(norms > 0.0)[0]
    if keep.size == 0:
        raise AllZeroRows(f"layer {layer} weights have no nonzero row")
    if keep.size < w.shape[0]:
        log.warning("layer %d: excluding %d zero-norm rows from the output map",
                    layer, w.shape[0] - keep.size)
    z = w[keep] / norms[keep, None]
    m_next = w.shape[0]
    if next_leverage is None:
        q = np.full(m_next, 1.0 / m_next)
    else:
        scores = next_leverage.scores
        with np.errstate(divide="ignore"):
            inv = np.where(scores > 0.0, 1.0 / np.where(scores > 0.0, scores, 1.0), 0.0)
        if inv.sum() == 0.0:
            raise ValueError("next-layer leverage is zero everywhere")
        q = inv / inv.sum()
    return OutputMap(layer=layer, z=z, q=q, rows=keep)


# ---------------------------------------------------------------------------
# whole-network pruning


def compression_error(net_a: Network, net_b: Network, data: Dataset) -> float:
    """Empirical L2 distance ||f_a - f_b||_n over the dataset inputs."""
    if (net_a.input_dim, net_a.output_dim) != (net_b.input_dim, net_b.output_dim):
        raise ShapeMismatch("networks disagree on input/output dims")
    diff = forward(net_a, data.inputs) - forward(net_b, data.inputs)
    return float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))


def output_norm(net: Network, data: Dataset) -> float:
    out = forward(net, data.inputs)
    return float(np.sqrt(np.mean(np.sum(out * out, axis=1))))


def _is_channel_layer(net: Network, layer: int) -> bool:
    return net.layers[layer - 2].kind == "conv2d"


def _layer_covariance(net: Network, data: Dataset, layer: int) -> LayerCovariance:
    if _is_channel_layer(net, layer):
        return channel_cov(net, data, layer)
    return layer_cov(net, data, layer)


def resolve_layer_plan(cov: LayerCovariance, cfg: PruneConfig, layer: int):
    """(m_sharp, lambda) for one layer: whichever of the two the config
    leaves open follows from the width requirement."""
    width = None if cfg.widths is None else cfg.widths.get(layer)
    lam = None
    if cfg.lambdas is not None and layer in cfg.lambdas:
        lam = float(cfg.lambdas[layer])
    elif cfg.lambda_coef is not None:
        lam = cfg.lambda_coef * cov.trace
    if width is None and lam is None:
        raise ValueError(f"layer {layer}: no width and no lambda policy")
    if width is None:
        width = width_for_lambda(cov, lam)
    if lam is None:
        lam = lambda_for_width(cov, width)
    if not 1 <= width <= cov.dim:
        raise ValueError(f"layer {layer}: width {width} outside [1, {cov.dim}]")
    return int(width), float(lam)


@dataclass
class PruneOutcome:
    network: Network
    selections: list
    feasible: bool


def _select_layer(net, data, cov, cfg, layer, m_sharp, lam, lev, next_sel, next_lev):
    tau = (np.full(cov.dim, float(cfg.tau_override))
           if cfg.tau_override is not None
           else m_sharp * lam * lev.scores)
    if cfg.tau_override is not None and cfg.tau_override == 0.0:
        lam = 0.0  # pure interpolation: no ridge ever applied, no bias term
    if cfg.procedure == "backward":
        omap = backward_output_map(net, layer, next_sel, next_lev)
    else:
        omap = simultaneous_output_map(net, layer, next_lev)
    cross = out_gram = None
    if _is_channel_layer(net, layer) and net.layers[layer - 1].kind == "conv2d":
        cross = output_channel_cov(net, data, layer, z=omap.z).z_sigma
        out_gram = output_channel_gram(net, data, layer, z=omap.z)
    elif _is_channel_layer(net, layer):
        # dense consumer reading a conv map: each (row, position) pair is
        # linear in the channel vector at that position, so expanding rows
        # per position makes the channel-covariance objective exact
        prod = net.layers[layer - 2]
        area = prod.out_h * prod.out_w
        z3 = omap.z.reshape(omap.z.shape[0], prod.out_channels, area)
        expanded = z3.transpose(0, 2, 1).reshape(-1, prod.out_channels)
        omap = replace(omap, z=expanded)
    return greedy_select(cov, omap, cfg.theta, m_sharp, tau, leverage=lev,
                         budget_constraint=cfg.budget_constraint,
                         cross=cross, out_gram=out_gram, lam=lam)


def _apply_selection(layers, layer_idx: int, a_hat: np.ndarray | None,
                     rows: np.ndarray | None):
    """Rewrite one layer in place: compose the input side with a_hat and
    keep only the selected output rows."""
    lay = layers[layer_idx]
    w, b = lay.weight, lay.bias
    if a_hat is not None:
        if lay.kind == "conv2d":
            k2 = lay.kernel ** 2
            w3 = w.reshape(w.shape[0], lay.in_channels, k2)
            w = np.einsum("ocs,cj->ojs", w3, a_hat).reshape(w.shape[0], -1)
            layers[layer_idx] = replace(lay, weight=w, bias=b,
                                        in_channels=a_hat.shape[1])
            lay = layers[layer_idx]
        else:
            prev = layers[layer_idx - 1] if layer_idx > 0 else None
            if prev is not None and prev.kind == "conv2d":
                area = prev.out_h * prev.out_w
                w3 = w.reshape(w.shape[0], prev.out_channels, area)
                w = np.einsum("ocs,cj->ojs", w3, a_hat).reshape(w.shape[0], -1)
            else:
                w = w @ a_hat
            layers[layer_idx] = replace(lay, weight=w, bias=b)
            lay = layers[layer_idx]
    if rows is not None:
        layers[layer_idx] = replace(lay, weight=lay.weight[rows], bias=lay.bias[rows])


def prune(net: Network, data: Dataset, cfg: PruneConfig) -> PruneOutcome:
    """Select nodes per layer and rebuild the compressed network.

    Backward procedure sweeps from the top layer down, feeding each
    layer's output map with the already-selected next-layer rows; the
    simultaneous procedure selects every layer from the original network
    at once. Input and output dims never change.
    """
    prunable = cfg.layers if cfg.layers is not None else list(range(2, net.depth + 1))
    prunable = sorted(set(prunable))
    for layer in prunable:
        if not 2 <= layer <= net.depth:
            raise ValueError(f"prunable layer {layer} outside [2, {net.depth}]")

    covs = {l: _layer_covariance(net, data, l) for l in prunable}
    plans = {l: resolve_layer_plan(covs[l], cfg, l) for l in prunable}
    levs = {l: leverage_at(covs[l], plans[l][1]) for l in prunable}

    lev_cache = dict(levs)

    def leverage_of(layer: int) -> LeverageScores | None:
        """Leverage of phi^(layer) for output-map weighting; None at the
        output layer (uniform convention). Untouched layers use the
        pure-interpolation jitter (operational lambda 0)."""
        if layer > net.depth:
            return None
        if layer not in lev_cache:
            cov = _layer_covariance(net, data, layer)
            lev_cache[layer] = leverage_at(cov, 0.0)
        return lev_cache[layer]

    selections: dict[int, SelectionResult] = {}
    order = sorted(prunable, reverse=True) if cfg.procedure == "backward" else prunable
    for layer in order:
        m_sharp, lam = plans[layer]
        if cfg.procedure == "backward":
            if layer == net.depth:
                next_sel = np.arange(net.output_dim)
                next_lev = None
            elif (layer + 1) in selections:
                next_sel = selections[layer + 1].indices
                next_lev = leverage_of(layer + 1)
            else:
                next_sel = np.arange(net.layers[layer - 1].weight.shape[0])
                next_lev = leverage_of(layer + 1)
                # an unpruned next layer may carry dead (zero-leverage)
                # nodes; neglect them instead of weighting by them
                alive = next_lev.scores[next_sel] > 0.0
                if np.any(alive) and not np.all(alive):
                    next_sel = next_sel[alive]
        else:
            next_sel = None
            next_lev = leverage_of(layer + 1) if layer < net.depth else None
        selections[layer] = _select_layer(
            net, data, covs[layer], cfg, layer, m_sharp, lam,
            levs[layer], next_sel, next_lev,
        )

    from .network import clone

    compressed = clone(net)
    layers = compressed.layers
    # compose every input side first (those reshapes need the producers'
    # original shapes), then cut the selected output rows
    for layer, sel in selections.items():
        _apply_selection(layers, layer - 1, sel.a_hat, None)
    for layer, sel in selections.items():
        _apply_selection(layers, layer - 2, None, sel.indices)
    result = Network(layers=layers)
    ordered = [selections[l] for l in sorted(selections)]
    return PruneOutcome(network=result, selections=ordered,
                        feasible=all(s.feasible for s in ordered))
