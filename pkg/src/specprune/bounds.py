"""Computable quantities behind the compression and generalization bounds.

Per layer, the error-propagation factor combines the mixed degrees of
freedom with an operator-norm ratio of the next layer's weights; the
aggregate report contrasts the bias term (driven by the per-layer lambda
scales) and the variance term (driven by the compressed widths) with the
measured compression error. Universal constants are not pinned down by
the theory, so reports default them to 1 and print the empirical ratio.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .covariance import LayerCovariance, layer_cov
from .data import Dataset
from .dof import dof, dof_output, leverage_at
from .errors import UnsupportedLayerKind, ZeroOperatorNorm
from .network import Network
from .pruning import (
    OutputMap,
    PruneConfig,
    backward_output_map,
    compression_error,
    simultaneous_output_map,
)
from .training import evaluate_loss


@dataclass
class NormBudget:
    """Tightest norm constants the trained network satisfies.

    R bounds every row norm as max_j ||W_j|| <= R / sqrt(m_out); R_b does
    the same for biases in sup norm. c1 stands in for the unnamed
    universal constant scaling both; rho is the loss Lipschitz constant
    and M the optional output truncation level.
    """

    R: float
    R_b: float
    D_x: float
    c1: float = 1.0
    M: float = math.inf
    rho: float = 1.0

    @property
    def r_bar(self) -> float:
        return math.sqrt(self.c1) * self.R

    @property
    def r_bar_b(self) -> float:
        return math.sqrt(self.c1) * self.R_b


def _require_dense(net: Network, what: str) -> None:
    if any(l.kind != "dense" for l in net.layers):
        raise UnsupportedLayerKind(
            f"{what} is defined for fully connected networks only"
        )


def loss_lipschitz(loss: str) -> float:
    """Default Lipschitz constants: 1 for absolute/hinge-style losses,
    sqrt(2) for softmax cross entropy (gradient in logits is p - y,
    ||p - y||_2 <= sqrt(2))."""
    return math.sqrt(2.0) if loss == "softmax_cross_entropy" else 1.0


def measure_norm_budget(net: Network, data: Dataset, c1: float = 1.0,
                        M: float = math.inf, rho: float | None = None,
                        loss: str = "squared") -> NormBudget:
    """Read R, R_b off the trained weights and D_x off the data."""
    _require_dense(net, "the norm budget")
    r = 0.0
    r_b = 0.0
    for lay in net.layers:
        m_out = lay.weight.shape[0]
        r = max(r, math.sqrt(m_out) * float(np.linalg.norm(lay.weight, axis=1).max()))
        if lay.bias.size:
            r_b = max(r_b, math.sqrt(m_out) * float(np.abs(lay.bias).max()))
    d_x = float(np.linalg.norm(data.inputs, axis=1).max())
    return NormBudget(R=r, R_b=r_b, D_x=d_x, c1=c1, M=M,
                      rho=loss_lipschitz(loss) if rho is None else rho)


def operator_norm(m: np.ndarray) -> float:
    """Largest absolute eigenvalue of a symmetric matrix."""
    evals = np.linalg.eigvalsh((m + m.T) / 2.0)
    if evals.size == 0:
        return 0.0
    return float(np.max(np.abs(evals)))


def c_scale(net: Network, layer: int, next_leverage) -> float:
    """Smallest c with ||W_j||^2 <= c R^2 q_{j} over the next layer's
    rows; the simultaneous-procedure scaling condition."""
    w = net.layers[layer - 1].weight
    norms2 = np.linalg.norm(w, axis=1) ** 2
    m_out = w.shape[0]
    r2 = m_out * norms2.max()  # tightest per-layer R^2
    if r2 == 0.0:
        raise ZeroOperatorNorm(f"layer {layer} weights are all zero")
    scores = (np.full(m_out, 1.0) if next_leverage is None
              else np.asarray(next_leverage.scores, dtype=np.float64))
    mask = scores > 0.0
    if not np.any(mask):
        raise ZeroOperatorNorm("next-layer leverage is zero everywhere")
    return float(np.max(norms2[mask] / (r2 * scores[mask])))


def propagation_factor(cov: LayerCovariance, omap: OutputMap, net: Network,
                       layer: int, theta: float, lam: float,
                       procedure: str = "backward",
                       m_sharp_next: int | None = None,
                       next_leverage=None) -> float:
    """Per-layer factor controlling how this layer's approximation error
    travels to the output.

    Backward: N_theta(lam) / (theta * max_j ||W_j||^2 / ||W^T I_q W||_op
    + (1 - theta) * m_l). The simultaneous variant additionally carries
    the row-scaling constant c (computed against the next layer's
    leverage) and uses the compressed next width in the denominator.
    """
    if lam <= 0:
        raise ValueError("propagation factor needs lam > 0")
    w = net.layers[layer - 1].weight
    n_in = dof(cov, lam)
    n_out = dof_output(cov, omap.z, lam)
    n_theta = theta * n_in + (1.0 - theta) * n_out
    weighted = w.T @ (omap.q[:, None] * w)
    opn = operator_norm(weighted)
    if opn == 0.0:
        raise ZeroOperatorNorm(f"layer {layer}: W^T I_q W has zero operator norm")
    max_row2 = float((np.linalg.norm(w, axis=1) ** 2).max())
    ratio = max_row2 / opn
    m_l = cov.dim
    if procedure == "backward":
        return n_theta / (theta * ratio + (1.0 - theta) * m_l)
    qnorm2 = omap.q * np.linalg.norm(w, axis=1) ** 2
    ratio_sim = float(qnorm2.max()) / opn
    m_next = m_sharp_next if m_sharp_next is not None else w.shape[0]
    c = c_scale(net, layer, next_leverage)
    return c * n_theta / (m_next * (theta * ratio_sim + (1.0 - theta)))


def bias_term(lambdas: list, zetas: list, budget: NormBudget) -> float:
    """sum over layers l of R_bar^(L - l + 1) sqrt(prod_{l' >= l} zeta)
    sqrt(lambda_l); entries are ordered for l = 2..L."""
    if len(lambdas) != len(zetas):
        raise ValueError("lambdas and zetas must align")
    count = len(lambdas)
    total = 0.0
    for i, lam in enumerate(lambdas):
        depth_left = count - i  # L - l + 1
        prod = 1.0
        for z in zetas[i:]:
            prod *= z
        total += budget.r_bar ** depth_left * math.sqrt(max(prod, 0.0)) * math.sqrt(max(lam, 0.0))
    return total


def log_plus(x: float) -> float:
    """max(1, log x)."""
    return max(1.0, math.log(x)) if x > 0 else 1.0


def sup_output_bound(budget: NormBudget, depth: int) -> float:
    """R_bar^L D_x + sum_l R_bar^(L-l) R_bar_b, truncated at M."""
    rb = budget.r_bar
    geo = sum(rb ** (depth - l) for l in range(1, depth + 1))
    return min(rb ** depth * budget.D_x + geo * budget.r_bar_b, budget.M)


def growth_factor(budget: NormBudget, depth: int) -> float:
    """L R_bar^(L-1) D_x + sum_l R_bar^(L-l)."""
    rb = budget.r_bar
    return depth * rb ** (depth - 1) * budget.D_x + sum(
        rb ** (depth - l) for l in range(1, depth + 1)
    )


def variance_term(widths_chain: list, n: int, budget: NormBudget) -> float:
    """sqrt of (1/n) sum_l m_l m_{l+1} log_plus(1 + 4 G max(R_bar, R_bar_b)
    / sup_bound), over the full width chain (input through output)."""
    depth = len(widths_chain) - 1
    r_inf = sup_output_bound(budget, depth)
    g = growth_factor(budget, depth)
    if r_inf <= 0:
        log_term = 1.0
    else:
        log_term = log_plus(1.0 + 4.0 * g * max(budget.r_bar, budget.r_bar_b) / r_inf)
    pairs = sum(a * b for a, b in zip(widths_chain, widths_chain[1:]))
    return math.sqrt(pairs / n * log_term)


def confidence_term(t: float, hidden_widths: list, n: int) -> float:
    """(t + sum_{l=2..L} log m_l) / n for t > 0."""
    if t <= 0:
        raise ValueError("t must be > 0")
    return (t + sum(math.log(m) for m in hidden_widths)) / n


@dataclass
class LayerBoundRow:
    layer: int
    lam: float
    dof_in: float
    dof_out: float
    dof_mixed: float
    zeta: float
    width: int
    target_width: int


@dataclass
class BoundReport:
    rows: list
    theta: float
    t: float
    n: int
    delta1: float
    delta2_compressed: float
    delta2_original: float
    sup_bound: float
    growth: float
    confidence: float
    train_loss: float
    measured_error: float
    bound_value: float
    empirical_c1_ratio: float
    rho: float
    C1: float
    budget: NormBudget = field(repr=False)
    zeta_warnings: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "layers": [
                {
                    "layer": r.layer, "lambda": r.lam, "dof_in": r.dof_in,
                    "dof_out": r.dof_out, "dof_mixed": r.dof_mixed,
                    "zeta": r.zeta, "width": r.width,
                    "target_width": r.target_width,
                }
                for r in self.rows
            ],
            "theta": self.theta,
            "t": self.t,
            "n": self.n,
            "delta1": self.delta1,
            "delta2_compressed": self.delta2_compressed,
            "delta2_original": self.delta2_original,
            "sup_bound": self.sup_bound,
            "growth": self.growth,
            "confidence": self.confidence,
            "train_loss": self.train_loss,
            "measured_error": self.measured_error,
            "bound_value": self.bound_value,
            "empirical_c1_ratio": self.empirical_c1_ratio,
            "rho": self.rho,
            "C1": self.C1,
            "R": self.budget.R,
            "R_b": self.budget.R_b,
            "D_x": self.budget.D_x,
            "zeta_warnings": self.zeta_warnings,
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["layer", "lambda", "dof_in", "dof_out",
                             "dof_mixed", "zeta", "width", "target_width"])
            for r in self.rows:
                writer.writerow([r.layer, repr(r.lam), repr(r.dof_in),
                                 repr(r.dof_out), repr(r.dof_mixed),
                                 repr(r.zeta), r.width, r.target_width])
            writer.writerow([])
            for key, value in sorted(self.to_json_dict().items()):
                if key in ("layers", "zeta_warnings"):
                    continue
                writer.writerow([key, repr(value)])


def bound_report(net: Network, compressed: Network, data: Dataset,
                 cfg: PruneConfig, t: float,
                 selections: list | None = None,
                 c1: float = 1.0, C1: float = 1.0,
                 loss: str = "squared", M: float = math.inf,
                 rho: float | None = None) -> BoundReport:
    """Assemble every computable bound quantity for a pruned network.

    Per-layer lambdas are the values the pruning run actually used
    (untouched layers contribute lambda = 0 and no bias term). The
    variance term is reported both at the compressed and the original
    widths; the VC-style gap between the two is the point of compressing.
    """
    _require_dense(net, "the bound report")
    budget = measure_norm_budget(net, data, c1=c1, M=M, rho=rho, loss=loss)
    by_layer = {s.layer: s for s in (selections or [])}
    depth = net.depth

    covs = {}
    levs = {}

    def cov_of(layer: int) -> LayerCovariance:
        if layer not in covs:
            covs[layer] = layer_cov(net, data, layer)
        return covs[layer]

    def lev_of(layer: int):
        if layer > depth:
            return None
        if layer not in levs:
            lam = by_layer[layer].lam if layer in by_layer else 0.0
            levs[layer] = leverage_at(cov_of(layer), lam)
        return levs[layer]

    rows = []
    lambdas = []
    zetas = []
    warnings = []
    for layer in range(2, depth + 1):
        cov = cov_of(layer)
        sel = by_layer.get(layer)
        lam = sel.lam if sel is not None else 0.0
        if cfg.procedure == "backward":
            if layer == depth:
                next_sel, next_lev = np.arange(net.output_dim), None
            else:
                nxt = by_layer.get(layer + 1)
                next_sel = (nxt.indices if nxt is not None
                            else np.arange(net.layers[layer - 1].weight.shape[0]))
                next_lev = lev_of(layer + 1)
                if nxt is None and next_lev is not None:
                    alive = next_lev.scores[next_sel] > 0.0
                    if np.any(alive) and not np.all(alive):
                        next_sel = next_sel[alive]
            omap = backward_output_map(net, layer, next_sel, next_lev)
        else:
            next_lev = lev_of(layer + 1) if layer < depth else None
            omap = simultaneous_output_map(net, layer, next_lev)
        eval_lam = lam if lam > 0 else 1e-12 * cov.trace
        if eval_lam <= 0.0:
            eval_lam = float(np.finfo(float).tiny)
        n_in = dof(cov, eval_lam)
        n_out = dof_output(cov, omap.z, eval_lam)
        n_mix = cfg.theta * n_in + (1.0 - cfg.theta) * n_out
        m_next_sharp = compressed.layers[layer - 1].weight.shape[0]
        zeta = propagation_factor(cov, omap, net, layer, cfg.theta, eval_lam,
                                  procedure=cfg.procedure,
                                  m_sharp_next=m_next_sharp,
                                  next_leverage=next_lev)
        if zeta > 1.0:
            warnings.append(
                f"layer {layer}: zeta = {zeta:.4g} > 1; the propagation "
                "assumption is not met at this theta"
            )
        width = compressed.width(layer)
        rows.append(LayerBoundRow(layer=layer, lam=lam, dof_in=n_in,
                                  dof_out=n_out, dof_mixed=n_mix, zeta=zeta,
                                  width=width,
                                  target_width=sel.target_width if sel else width))
        lambdas.append(lam)
        zetas.append(zeta)

    d1 = bias_term(lambdas, zetas, budget)
    chain_sharp = ([compressed.input_dim]
                   + [compressed.width(l) for l in range(2, depth + 1)]
                   + [compressed.output_dim])
    chain_orig = ([net.input_dim]
                  + [net.width(l) for l in range(2, depth + 1)]
                  + [net.output_dim])
    d2_sharp = variance_term(chain_sharp, data.n, budget)
    d2_orig = variance_term(chain_orig, data.n, budget)
    r_inf = sup_output_bound(budget, depth)
    g = growth_factor(budget, depth)
    conf = confidence_term(t, chain_orig[1:-1], data.n)
    train_loss = evaluate_loss(net, data, loss, clamp=M)
    measured = compression_error(net, compressed, data)
    bound_value = train_loss + budget.rho * (
        d1 + C1 * r_inf * (d2_sharp + d2_sharp ** 2 + math.sqrt(conf))
    )
    ratio = measured / d1 if d1 > 0 else 0.0
    return BoundReport(rows=rows, theta=cfg.theta, t=t, n=data.n, delta1=d1,
                       delta2_compressed=d2_sharp, delta2_original=d2_orig,
                       sup_bound=r_inf, growth=g, confidence=conf,
                       train_loss=train_loss, measured_error=measured,
                       bound_value=bound_value, empirical_c1_ratio=ratio,
                       rho=budget.rho, C1=C1, budget=budget,
                       zeta_warnings=warnings)
