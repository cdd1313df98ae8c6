"""Weighted Score Wagering Mechanism and the wagering-to-learner reduction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import QUADRATIC, LossFunction, WeightVector, as_probabilities, check_simplex
from .errors import DimensionError, MechanismContractError, ParameterError


@dataclass(frozen=True, eq=False)
class WagerProfile:
    """Reports, normalised wagers and the realised outcome for one event."""

    reports: np.ndarray
    wagers: WeightVector
    outcome: int

    def __post_init__(self):
        reports = as_probabilities(self.reports).reshape(-1)
        wagers = self.wagers if isinstance(self.wagers, WeightVector) else WeightVector(self.wagers)
        if reports.shape[0] != len(wagers):
            raise DimensionError(f"{reports.shape[0]} reports vs {len(wagers)} wagers")
        if self.outcome not in (0, 1):
            raise ParameterError(f"outcome must be 0 or 1, got {self.outcome!r}")
        object.__setattr__(self, "reports", reports)
        object.__setattr__(self, "wagers", wagers)
        object.__setattr__(self, "outcome", int(self.outcome))


def wswm_payoffs_array(reports, wagers, outcome, loss: LossFunction = QUADRATIC) -> np.ndarray:
    """Array form of :func:`wswm_payoffs`, broadcasting over leading axes.

    ``reports`` and ``wagers`` have shape ``(..., K)``; ``outcome`` broadcasts
    against the leading shape.
    """
    w = np.asarray(wagers, dtype=np.float64)
    ell = np.asarray(loss(reports, np.asarray(outcome, dtype=np.float64)[..., None]))
    avg = np.sum(w * ell, axis=-1, keepdims=True)
    return w * (1.0 - ell + avg)


def wswm_payoffs(profile: WagerProfile, loss: LossFunction = QUADRATIC) -> np.ndarray:
    """Payoff ``w_i (1 - l(p_i, r) + sum_j w_j l(p_j, r))`` for every agent.

    Non-negative and budget balanced: payoffs sum to the total wager.
    """
    return wswm_payoffs_array(profile.reports, profile.wagers.weights, profile.outcome, loss)


PayoffFunction = Callable[[WagerProfile, LossFunction], np.ndarray]


def reduce_to_learner(mechanism: PayoffFunction, pi: WeightVector, reports, outcome,
                      loss: LossFunction = QUADRATIC) -> WeightVector:
    """One step of the learner induced by a budget-balanced mechanism:
    current weights are wagered and the payoffs become the next weights."""
    payoff = np.asarray(mechanism(WagerProfile(reports, pi, outcome), loss), dtype=np.float64)
    if payoff.shape != (len(pi),) or not check_simplex(payoff):
        raise MechanismContractError(
            "mechanism payoffs must be non-negative and sum to the total wager"
        )
    return WeightVector(payoff)
