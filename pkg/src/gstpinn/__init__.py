"""Gradient-enhanced self-training physics-informed networks for 1-D nonlinear PDEs."""

from .config import ConfigError, ExperimentConfig
from .diffnet import NetworkParams, init_params, input_jet, jet_batch, load_checkpoint, save_checkpoint
from .loss import LossWeights, total_loss
from .metrics import ErrorReport, evaluate
from .optimize import AdamState, TrainHistory, adam_step, train
from .problems import PdeProblem, bc_residuals, grad_residuals, ic_value, residual
from .reference import ReferenceSolution, read_solution, solve
from .sampling import SampleCounts, build_grid, sample_sets
from .selftrain import PseudoState, arg_partition, generate_pseudo, pseudo_round

__version__ = "0.1.0"
