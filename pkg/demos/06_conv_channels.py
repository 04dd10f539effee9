"""Channel-wise covariance and pruning for convolutional layers.

For conv feature maps the covariance is taken between channels,
averaging products over spatial positions; the output-side cross
covariance additionally spreads each output position back over its
receptive field. Selection then drops whole channels, and the kept
channels are recombined per spatial tap by the reconstruction matrix.
"""

import numpy as np

from specprune import (
    Dataset,
    PruneConfig,
    channel_cov,
    compression_error,
    intrinsic_dim,
    output_channel_cov,
    prune,
)
from specprune.training import make_conv_network

rng = np.random.default_rng(13)
net = make_conv_network(1, 8, 8, [6, 8, 6], kernel=3, padding=1,
                        dense_out=2, seed=14)
x = rng.standard_normal((500, 64)) * np.linspace(1.0, 0.05, 64)
data = Dataset(x, np.zeros((500, 2)))

print("channel covariance of the first feature map (6 channels):")
cov2 = channel_cov(net, data, layer=2)
print(np.array_str(cov2.sigma, precision=3, suppress_small=True))

cross = output_channel_cov(net, data, layer=2)
print(f"\nreceptive-field cross covariance shape: {cross.z_sigma.shape} "
      "(next-layer channels x input channels)")

print("\nintrinsic dimensionality per conv layer pair (k = 3):")
covs = {l: channel_cov(net, data, l) for l in (2, 3, 4)}
for l in (2, 3):
    dim = intrinsic_dim(covs[l], covs[l + 1], kernel=3)
    lay = net.layers[l - 1]
    params = lay.in_channels * lay.out_channels * 9
    print(f"  layers {l}/{l + 1}: {dim:8.2f}   (raw parameter count {params})")

cfg = PruneConfig(theta=0.5, widths={2: 4, 3: 5}, lambda_coef=1e-6,
                  budget_constraint=False)
outcome = prune(net, data, cfg)
print("\nchannel pruning 6 -> 4 and 8 -> 5:")
for lay_before, lay_after in zip(net.layers, outcome.network.layers):
    print(f"  {lay_before.kind:7s} weight {lay_before.weight.shape} -> "
          f"{lay_after.weight.shape}")
err = compression_error(net, outcome.network, data)
print(f"compression error on the data: {err:.4f}")
