"""Two-stage group-sequential estimation: marginal vs conditional MLE."""

from .errors import DegenerateStatisticError, DomainError, QuadratureError, SolverError
from .estimators import (
    PSI1,
    PSI2,
    Estimate,
    Method,
    ScoreTransform,
    conditional_loglik,
    conditional_mle,
    conditional_mle_generic,
    marginal_loglik,
    marginal_mle,
    score_eval,
    score_invert,
)
from .model import (
    INDICATOR,
    Stage,
    StoppingRule,
    TrialConfig,
    TrialOutcome,
    joint_density,
    simulate_trial,
    stage_probabilities,
    stop_probability,
)

__version__ = "0.1.0"
