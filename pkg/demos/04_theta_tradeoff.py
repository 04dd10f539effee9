"""The input/output mixing weight theta.

theta = 1 selects nodes to explain the layer itself (input information
loss); theta = 0 selects them to preserve what the next layer reads off
(output information loss). The sweep shows both losses for selections
made at each theta: each objective is best at its own extreme, and the
measured compression error of the rebuilt network typically favors a
mixture.
"""

import numpy as np

from specprune import (
    PruneConfig,
    TrainConfig,
    compression_error,
    make_dense_network,
    prune,
    synth_spectrum,
    train,
)

data = synth_spectrum(n=4000, d=16, decay=1.0, seed=7)
net = make_dense_network([16, 28, 12, 1], seed=8)
net = train(net, data, TrainConfig(epochs=10, batch_size=100,
                                   learning_rate=0.05, seed=9))

print("pruning the 28-node layer to 10 nodes at each theta:")
print(f"{'theta':>6} {'L_input':>10} {'L_output':>10} {'combined':>10} {'error':>10}")
for theta in (0.0, 0.25, 0.5, 0.75, 1.0):
    cfg = PruneConfig(theta=theta, widths={2: 10}, lambda_coef=1e-6,
                      budget_constraint=False, layers=[2])
    outcome = prune(net, data, cfg)
    sel = outcome.selections[0]
    err = compression_error(net, outcome.network, data)
    print(f"{theta:6.2f} {sel.loss_input:10.5f} {sel.loss_output:10.5f} "
          f"{sel.loss_combined:10.5f} {err:10.5f}")

print("\nbackward vs simultaneous procedure on both hidden layers:")
for procedure in ("backward", "simultaneous"):
    cfg = PruneConfig(theta=0.5, widths={2: 10, 3: 6}, lambda_coef=1e-6,
                      procedure=procedure, budget_constraint=False)
    outcome = prune(net, data, cfg)
    err = compression_error(net, outcome.network, data)
    print(f"  {procedure:12s}: error = {err:.5f}")
