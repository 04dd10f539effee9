"""How the eigenvalue spectrum of a layer covariance reflects the data.

Trains the same small relu network on two synthetic datasets whose input
covariance eigenvalues decay at different rates, then prints the
normalized eigen-spectra of the hidden layer side by side. Fast-decaying
data concentrates the layer's information in a few directions, which is
exactly what makes the layer compressible later.
"""

import numpy as np

from specprune import (
    TrainConfig,
    dof,
    layer_cov,
    make_dense_network,
    synth_spectrum,
    train,
)

WIDTH = 24

for decay in (2.0, 0.5):
    data = synth_spectrum(n=4000, d=16, decay=decay, seed=1)
    net = make_dense_network([16, WIDTH, 1], seed=2)
    net = train(net, data, TrainConfig(epochs=8, batch_size=100,
                                       learning_rate=0.05, seed=3))
    cov = layer_cov(net, data, layer=2)
    mu = cov.spectrum.eigenvalues
    normed = mu / mu[0]
    print(f"\ninput eigendecay p = {decay}")
    print("rank:        " + "  ".join(f"{j:7d}" for j in (1, 2, 4, 8, 16, 24)))
    print("normalized:  " + "  ".join(f"{normed[j - 1]:7.1e}" for j in (1, 2, 4, 8, 16, 24)))
    for lam_coef in (1e-2, 1e-4, 1e-6):
        lam = lam_coef * cov.trace
        print(f"  degrees of freedom at lambda = {lam_coef:g} * trace: "
              f"{dof(cov, lam):6.2f}  (of {WIDTH} nodes)")

print("\nFaster input decay -> faster spectrum decay -> fewer degrees of "
      "freedom at every scale: the layer holds less independent signal.")
