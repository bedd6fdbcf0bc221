"""State-constrained stochastic optimal control via deep FBSDEs.

Trains an LSTM value-gradient network by forward-integrating the coupled
state/value SDE system, with saturated controls, logistic or ReLU state
penalties, an adaptive penalty-steepness schedule, and a hybrid extension
for reset maps (five-link walker heel strike).
"""

from .autodiff import Parameter, Tape, Var, backend_name, ops
from .costs import CostSpec
from .engine import ValueNet, fbsde_loss, hybrid_loss, optimal_control, rollout
from .ensemble import EnsembleMember, WalkTrace
from .penalties import ConstraintSpec, PenaltySpec, ScheduleState
from .training import Metrics, TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "Parameter", "Tape", "Var", "ops", "backend_name",
    "CostSpec", "ConstraintSpec", "PenaltySpec", "ScheduleState",
    "ValueNet", "rollout", "fbsde_loss", "hybrid_loss", "optimal_control",
    "TrainConfig", "Metrics", "train", "evaluate",
    "EnsembleMember", "WalkTrace",
    "__version__",
]
