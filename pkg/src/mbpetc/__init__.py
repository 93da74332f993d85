"""Model-based periodic event-triggered control toolkit.

Certifies sampling-period bounds for nonlinear sampled-data loops, simulates
the event-triggered closed loop with pluggable prediction models, and
verifies the convergence and decrease conditions along every trace.
"""

from .analysis import (
    CheckReport,
    ReferenceDecay,
    check_convergence_criterion,
    check_nonmonotone_conditions,
    proposition1_check,
    reference_decay,
)
from .certificates import (
    CertifiedConstants,
    certify,
    compute_sigma_masp,
    corollary1_deviation_bound,
    estimate_L1,
    estimate_L2,
    estimate_M_max,
    estimate_gamma_rate,
    load_constants,
    save_constants,
    v_bound,
)
from .dynamics import (
    PENDULUM_X0,
    LevelSetSpec,
    SystemModel,
    get_model,
    lie_derivative,
    pendulum_model,
)
from .errors import (
    CertificationError,
    ConfigError,
    MbpetcError,
    PredictionDomainError,
    SimulationAbort,
)
from .prediction import PredictionModel, build_lookup_table, load_table, predict, save_table
from .simulator import SimConfig, SimTrace, compare, load_trace, run, run_time_triggered, save_trace
from .trigger import TriggerDecision, TriggerReason, TriggerState

__version__ = "0.1.0"
