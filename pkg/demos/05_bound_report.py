"""Every desk-computable bound quantity for a pruned network.

After pruning, the report collects per layer the regularization scale,
degrees of freedom and the error-propagation factor, and aggregates the
bias term (scales with the per-layer lambdas), the variance term (scales
with the compressed widths over the sample count) and the confidence
term. The empirical compression error sits next to the bias term so the
effective universal constant is visible rather than assumed.
"""

import numpy as np

from specprune import (
    PruneConfig,
    TrainConfig,
    bound_report,
    make_dense_network,
    prune,
    synth_spectrum,
    train,
)

data = synth_spectrum(n=5000, d=12, decay=1.5, seed=10)
net = make_dense_network([12, 24, 16, 1], seed=11)
# mild weight decay tightens the measured row-norm budget a little
net = train(net, data, TrainConfig(epochs=10, batch_size=100,
                                   learning_rate=0.05, weight_decay=1e-3,
                                   seed=12))

cfg = PruneConfig(theta=0.5, widths={2: 8, 3: 6}, budget_constraint=True)
outcome = prune(net, data, cfg)
report = bound_report(net, outcome.network, data, cfg, t=1.0,
                      selections=outcome.selections)

print("per-layer quantities:")
print(f"{'layer':>6} {'lambda':>12} {'dof_in':>8} {'dof_out':>8} {'zeta':>8} {'width':>6}")
for row in report.rows:
    print(f"{row.layer:6d} {row.lam:12.4e} {row.dof_in:8.3f} "
          f"{row.dof_out:8.3f} {row.zeta:8.4f} {row.width:6d}")

print("\naggregates:")
print(f"  bias term (delta1)                  = {report.delta1:.5f}")
print(f"  measured ||f - f_sharp||_n          = {report.measured_error:.5f}")
print(f"  empirical constant (measured/delta1) = {report.empirical_c1_ratio:.3f}")
print(f"  variance term at compressed widths  = {report.delta2_compressed:.5f}")
print(f"  variance term at original widths    = {report.delta2_original:.5f}")
print(f"  sup-norm bound / growth factor      = {report.sup_bound:.3f} / {report.growth:.3f}")
print(f"  confidence term at t = {report.t:g}          = {report.confidence:.6f}")
print(f"  training loss                       = {report.train_loss:.5f}")
print(f"  overall bound value                 = {report.bound_value:.5f}")
if report.zeta_warnings:
    print("warnings:")
    for w in report.zeta_warnings:
        print(f"  {w}")
print("\nshrinking widths lowers the variance term (that gap to the "
      "original-width value is the point of compressing) but raises the "
      "per-layer lambdas and with them the bias term. The overall bound "
      "value is dominated by the sup-norm envelope: it is built from the "
      "measured row-norm budget, which at desk scale is nowhere near the "
      "R ~ 1 the theory's constants quietly assume — that is why the "
      "empirical constant is printed instead of asserted.")
