"""One layer, step by step: leverage scores, the greedy pick, and the
closed-form reconstruction.

A hidden layer is built with two near-duplicate nodes. The walkthrough
shows how the leverage scores spread over the informative nodes, how the
greedy objective drops as nodes are added, and that the reconstruction
matrix recombines the kept nodes to stand in for the dropped ones.
"""

import numpy as np

from specprune import (
    Layer,
    Network,
    OutputMap,
    compression_error,
    greedy_select,
    input_loss,
    layer_cov,
    leverage,
    prune,
    PruneConfig,
    synth_spectrum,
)

rng = np.random.default_rng(0)
w1 = rng.standard_normal((8, 5))
w1[6] = w1[1] + 0.02 * rng.standard_normal(5)   # node 6 nearly copies node 1
b1 = rng.standard_normal(8)
b1[6] = b1[1]
w2 = rng.standard_normal((1, 8))
net = Network(layers=[
    Layer(kind="dense", weight=w1, bias=b1, activation="relu"),
    Layer(kind="dense", weight=w2, bias=np.zeros(1), activation="none"),
])
data = synth_spectrum(n=2000, d=5, decay=0.3, seed=1)

cov = layer_cov(net, data, layer=2)
lam = 1e-4 * cov.trace
lev = leverage(cov, lam)
print("leverage scores (sum to 1):")
for j, s in enumerate(lev.scores):
    tag = "  <- near-duplicate pair" if j in (1, 6) else ""
    print(f"  node {j}: {s:.4f}{tag}")

omap = OutputMap(layer=2, z=w2, q=np.ones(1), rows=np.array([0]))
tau = 7 * lam * lev.scores
print("\ngreedy objective as the selection grows (theta = 0.5):")
for m_sharp in range(1, 9):
    sel = greedy_select(cov, omap, 0.5, m_sharp, tau, leverage=lev,
                        budget_constraint=False)
    print(f"  |J| = {m_sharp}: J = {sel.indices.tolist()}  "
          f"combined loss = {sel.loss_combined:.5f}")

print("\nfull-covariance trace (loss at empty selection):", f"{cov.trace:.4f}")
print("note how one node of the pair {1, 6} joins late: once its twin is "
      "in, it adds almost nothing.")

cfg = PruneConfig(theta=0.5, widths={2: 7}, lambda_coef=1e-4,
                  budget_constraint=False)
outcome = prune(net, data, cfg)
sel = outcome.selections[0]
print(f"\npruning to 7 nodes keeps J = {sel.indices.tolist()}")
print(f"reconstruction matrix shape: {sel.a_hat.shape} (original x kept)")
err = compression_error(net, outcome.network, data)
print(f"empirical compression error ||f - f_sharp||_n = {err:.2e}")
