"""Discovery of hidden differential-equation terms from sparse, noisy data.

A solution surrogate and a hidden-term network are trained jointly under a
physics-informed loss; the hidden-term network is then distilled into a
symbolic formula by sparse regression over a monomial basis. An unrolled
neural-ODE baseline is included for comparison.
"""

from .autodiff import JetSpec, Scalar2Jet, Tape, jet_eval, param_grad
from .dynamics import (ApoptosisParams, DifferentialSystem, DomainSpec,
                       LvParams, StateJets, build_system, cell_apoptosis,
                       lotka_volterra, viscous_burgers)
from .errors import (CheckpointError, ConditioningError, ConfigError,
                     NumericsError, UnsupportedOrderError)
from .neural import Mlp, forward, init_glorot, load_checkpoint, save_checkpoint
from .sampling import (CollocationSet, Dataset, ReferenceSolution, Schedule,
                       add_noise, burgers_reference, collocation_for,
                       latin_hypercube, rk4_integrate, sample_measurements)
from .symreg import (BasisLibrary, SymbolicModel, evaluate_network_on_data,
                     pareto_rank, polynomial_library, sparse_fit)
from .trainer import (TrainConfig, TrainReport, TrainResult,
                      evaluate_hidden_mse, evaluate_surrogate_mse,
                      loss_boundary, loss_measurement, loss_pinn, train)
from .ude import UdeConfig, ude_solve, ude_train

__version__ = "0.1.0"

__all__ = [
    "ApoptosisParams", "BasisLibrary", "CheckpointError", "CollocationSet",
    "ConditioningError", "ConfigError", "Dataset", "DifferentialSystem",
    "DomainSpec", "JetSpec", "LvParams", "Mlp", "NumericsError",
    "ReferenceSolution", "Scalar2Jet", "Schedule", "StateJets",
    "SymbolicModel", "Tape", "TrainConfig", "TrainReport", "TrainResult",
    "UdeConfig", "UnsupportedOrderError", "add_noise", "build_system",
    "burgers_reference", "cell_apoptosis", "collocation_for",
    "evaluate_hidden_mse", "evaluate_network_on_data",
    "evaluate_surrogate_mse", "forward", "init_glorot", "jet_eval",
    "latin_hypercube", "load_checkpoint", "loss_boundary",
    "loss_measurement", "loss_pinn", "lotka_volterra", "param_grad",
    "pareto_rank", "polynomial_library", "rk4_integrate",
    "sample_measurements", "save_checkpoint", "sparse_fit", "train",
    "ude_solve", "ude_train", "viscous_burgers",
]
