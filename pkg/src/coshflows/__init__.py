__version__ = "0.1.0"

from .cosh_core import (
    cell_N_dual,
    cell_N_explicit,
    cosh_dual,
    cosh_primal,
    eta,
    harm_log_mean,
    log_mean,
    parallel_combine,
    perspective,
    rate_density_L,
    relative_entropy,
    series_combine,
)
from .dissipation import EDPReport, edp_functional
from .errors import (
    BudgetExceededError,
    CoshflowsError,
    InvalidArgumentError,
    InvalidKernelError,
    InvalidTiltError,
    InvalidTrajectoryError,
    NumericalFailureError,
)
from .graph_system import MarkovGraph, Trajectory, evolve
from .network_reduction import TwoTerminalNetwork, capacity, reduce_to_capacity
from .reaction_networks import ReactionNetwork, evolve_rre
from .tilting import Tilt, tilt_kernel
