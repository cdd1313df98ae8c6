"""Incentive-compatible online learning from strategic forecasters.

Full-information learners (WSU, MWU, Hedge, ELF-X, ELF), bandit learners
(WSU-UX, EXP3), the weighted-score wagering mechanism, an exact incentive
auditor, and an experiment harness.
"""

from .core import (
    QUADRATIC,
    ForecastPanel,
    LossFunction,
    RegretTrace,
    RngStream,
    WeightVector,
    check_simplex,
    cumulative_regret,
)
from .errors import (
    DataIntegrityError,
    DimensionError,
    EmptyPanelError,
    MechanismContractError,
    ParameterError,
    ParseError,
    SizeError,
    WagerlearnError,
)
from .full_info import Algorithm, PredictionMode, make_learner, run_full_info
from .bandit import BanditAlgorithm, BanditParams, run_bandit
from .wagering import WagerProfile, wswm_payoffs

__version__ = "0.1.0"
