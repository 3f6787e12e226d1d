"""DeepONet with Sobolev (PDE-residual) training on the periodic torus."""

from .model import BranchRegime, DeepONetModel, build_deeponet, classical_preset, eval_model, eval_model_jet
from .nn import Jet2, NetworkSpec, forward, forward_jet2, init_params
from .pde import OperatorSpec, solve_truth
from .spectral import FieldEnsemble, FourierField, GridSample, encode_D, reconstruct_P
from .train import TrainConfig, generalization_gap, loss_LD, loss_LM, loss_LS, train

__version__ = "0.1.0"
