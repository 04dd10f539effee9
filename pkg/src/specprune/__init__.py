"""Spectral pruning of small neural networks.

Train a dense or convolutional network, look at the eigenvalue spectrum
of its layer covariances, pick the most informative nodes per layer by
greedy minimization of input/output information losses, rebuild the
layer with a closed-form ridge reconstruction, and evaluate every
desk-computable quantity of the accompanying compression and
generalization bounds.
"""

__version__ = "0.1.0"

from .bounds import (
    BoundReport,
    NormBudget,
    bias_term,
    bound_report,
    confidence_term,
    measure_norm_budget,
    propagation_factor,
    variance_term,
)
from .covariance import (
    CrossCovariance,
    LayerCovariance,
    channel_cov,
    eigen_report,
    layer_cov,
    output_channel_cov,
    output_channel_gram,
)
from .data import Dataset, digits784, load_idx, synth_spectrum, write_idx
from .dof import (
    DofProfile,
    LeverageScores,
    dof,
    dof_output,
    intrinsic_dim,
    lambda_for_width,
    leverage,
    width_for_lambda,
)
from .linalg import SymmetricSpectrum, psd_solve, submatrix, sym_eig
from .network import Layer, Network, forward, forward_capture, load, save
from .pruning import (
    OutputMap,
    PruneConfig,
    PruneOutcome,
    SelectionResult,
    backward_output_map,
    compression_error,
    greedy_select,
    input_loss,
    output_loss,
    prune,
    simultaneous_output_map,
)
from .training import TrainConfig, accuracy, evaluate_loss, make_dense_network, train

__all__ = [name for name in dir() if not name.startswith("_")]
