"""Partial-information learners: WSU-UX and the EXP3 baseline."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .core import (
    QUADRATIC,
    ForecastPanel,
    LossFunction,
    RegretTrace,
    RngStream,
    WeightVector,
    regret_from_losses,
)
from .errors import ParameterError
from .full_info import doubling_phases

log = logging.getLogger(__name__)

_GAMMA_CAP = float(np.nextafter(0.5, 0.0))
_PI_TILDE_FLOOR = 1e-15


class BanditAlgorithm(enum.Enum):
    WSU_UX = "WSU-UX"
    EXP3 = "EXP3"


@dataclass(frozen=True)
class BanditParams:
    """Step size and uniform-exploration rate for WSU-UX.

    Requires ``0 < eta, gamma < 1/2`` and ``eta * K / gamma <= 1/2``.
    ``clamped`` records that the values were adjusted from the tuned
    formulas to satisfy those constraints.
    """

    num_experts: int
    eta: float
    gamma: float
    clamped: bool = False

    def __post_init__(self):
        k, eta, gamma = self.num_experts, self.eta, self.gamma
        if k < 1:
            raise ParameterError("need at least one expert")
        if not (0.0 < eta < 0.5 and 0.0 < gamma < 0.5):
            raise ParameterError(f"need 0 < eta, gamma < 1/2; got eta={eta}, gamma={gamma}")
        if eta * k / gamma > 0.5 * (1 + 1e-12):
            raise ParameterError(f"eta*K/gamma = {eta * k / gamma:.6g} exceeds 1/2")

    @classmethod
    def tuned(cls, num_experts: int, horizon: int) -> "BanditParams":
        """Tuned values for a known horizon ``T >= K ln K``, clamped otherwise."""
        eta, gamma = tuned_values(num_experts, horizon)
        try:
            return cls(num_experts, eta, gamma)
        except ParameterError:
            return clamped_params(num_experts, horizon)


def tuned_values(k: int, horizon: int):
    """``eta = (ln K / (4 sqrt(K) T))^(2/3)``, ``gamma = (K ln K / (4T))^(1/3)``."""
    lnk = math.log(k)
    eta = (lnk / (4.0 * math.sqrt(k) * horizon)) ** (2.0 / 3.0)
    gamma = (k * lnk / (4.0 * horizon)) ** (1.0 / 3.0)
    return eta, gamma


def clamped_params(k: int, horizon: int) -> BanditParams:
    """Tuned values, with gamma raised to ``min(1/2, 2 eta K)`` when the
    exploration check fails; if gamma hits the cap, eta is lowered to
    ``gamma / (2K)``. Logged whenever an adjustment is made."""
    eta, gamma = tuned_values(k, horizon)
    if k == 1:
        gamma = 0.25
        eta = gamma / 2.0
        return BanditParams(k, eta, gamma, clamped=True)
    try:
        return BanditParams(k, eta, gamma)
    except ParameterError:
        pass
    gamma = min(max(gamma, 2.0 * eta * k), _GAMMA_CAP)
    if eta * k / gamma > 0.5:
        eta = gamma / (2.0 * k)
    log.info("clamped bandit parameters for K=%d, n=%d to eta=%.6g gamma=%.6g",
             k, horizon, eta, gamma)
    return BanditParams(k, eta, gamma, clamped=True)


def exp3_default_eta(k: int, horizon: int) -> float:
    """``sqrt(2 ln K / (K T))``."""
    if k == 1:
        return 0.5
    return math.sqrt(2.0 * math.log(k) / (k * horizon))


@dataclass(frozen=True, eq=False)
class BanditRound:
    chosen: int
    pi: WeightVector
    pi_tilde: WeightVector
    estimated_losses: np.ndarray


def sampling_distribution(pi, gamma: float) -> np.ndarray:
    """``(1 - gamma) pi + gamma / K``."""
    w = np.asarray(pi, dtype=np.float64)
    return (1.0 - gamma) * w + gamma / w.shape[-1]


def wsu_ux_update(pi: WeightVector, params: BanditParams, chosen: int,
                  observed_loss: float) -> tuple[BanditRound, WeightVector]:
    """Deterministic half of a WSU-UX round once ``chosen`` is known."""
    if not 0.0 <= observed_loss <= 1.0:
        raise ParameterError(f"loss must lie in [0, 1], got {observed_loss}")
    w = np.asarray(pi, dtype=np.float64)
    tilde = sampling_distribution(w, params.gamma)
    assert tilde[chosen] >= _PI_TILDE_FLOOR
    lhat = np.zeros_like(w)
    lhat[chosen] = observed_loss / tilde[chosen]
    nxt = w * (1.0 - params.eta * (lhat - w[chosen] * lhat[chosen]))
    rnd = BanditRound(int(chosen), pi if isinstance(pi, WeightVector) else WeightVector(w),
                      WeightVector(tilde), lhat)
    return rnd, WeightVector(np.maximum(nxt, 0.0))


def wsu_ux_step(pi: WeightVector, params: BanditParams, reveal: Callable[[int], float],
                gen: np.random.Generator) -> tuple[BanditRound, WeightVector]:
    """Draw ``I_t`` from the exploration mix, ask ``reveal`` for that one
    expert's loss, and update."""
    tilde = sampling_distribution(pi, params.gamma)
    chosen = int(kernels._inverse_cdf_np(np.cumsum(tilde), gen.random()))
    return wsu_ux_update(pi, params, chosen, float(reveal(chosen)))


def exp3_update(weights, chosen: int, observed_loss: float, eta: float) -> np.ndarray:
    """Scale the chosen expert's weight by ``exp(-eta * l / pi_chosen)``;
    other weights are untouched."""
    if not 0.0 <= observed_loss <= 1.0:
        raise ParameterError(f"loss must lie in [0, 1], got {observed_loss}")
    w = np.array(weights, dtype=np.float64, copy=True)
    p = w[chosen] / w.sum()
    w[chosen] *= math.exp(-eta * observed_loss / p)
    return w


def exp3_step(weights, eta: float, reveal: Callable[[int], float],
              gen: np.random.Generator):
    """One EXP3 round; returns ``(chosen, next weights)``."""
    w = np.asarray(weights, dtype=np.float64)
    chosen = int(kernels._inverse_cdf_np(np.cumsum(w / w.sum()), gen.random()))
    return chosen, exp3_update(w, chosen, float(reveal(chosen)), eta)


def estimator_moments_check(pi_tilde, losses):
    """Exact first and second moments of the importance-weighted loss
    estimate, taken over the draw of the chosen expert."""
    p = np.asarray(pi_tilde, dtype=np.float64)
    ell = np.asarray(losses, dtype=np.float64)
    # row j: the estimate vector when expert j is drawn
    values = np.diag(ell / p)
    return p @ values, p @ (values * values)


def sampled_estimator_moments(pi_tilde, losses, num_draws: int, gen: np.random.Generator,
                              chunk: int = 250_000):
    """Monte Carlo mean of the estimate and its standard error."""
    p = np.asarray(pi_tilde, dtype=np.float64)
    ell = np.asarray(losses, dtype=np.float64)
    k = p.shape[0]
    value = ell / p
    n_chosen = np.zeros(k, dtype=np.int64)
    done = 0
    cum = np.cumsum(p)
    while done < num_draws:
        m = min(chunk, num_draws - done)
        idx = kernels._inverse_cdf_np(cum[None, :], gen.random(m))
        n_chosen += np.bincount(idx, minlength=k)
        done += m
    freq = n_chosen / num_draws
    mean = freq * value
    var = freq * value ** 2 - mean ** 2
    return mean, np.sqrt(np.maximum(var, 0.0) / num_draws)


class BanditLearner:
    """Stepping interface: ``choose()`` then ``observe_loss(loss)``."""

    algorithm: BanditAlgorithm

    def __init__(self, num_experts: int, rng: RngStream | None = None):
        self.num_experts = num_experts
        self.rng = rng or RngStream(0)
        self._gen = self.rng.derive(0).generator()
        self.round = 1
        self.chosen = None

    def step(self, reveal: Callable[[int], float]) -> float:
        i = self.choose()
        loss = float(reveal(i))
        self.observe_loss(loss)
        return loss


class WSUUXLearner(BanditLearner):
    algorithm = BanditAlgorithm.WSU_UX

    def __init__(self, params: BanditParams, rng: RngStream | None = None):
        super().__init__(params.num_experts, rng)
        self.params = params
        self.pi = WeightVector.uniform(params.num_experts)
        self.last_round = None

    @property
    def pi_tilde(self) -> WeightVector:
        return WeightVector(sampling_distribution(self.pi, self.params.gamma))

    def choose(self) -> int:
        cum = np.cumsum(sampling_distribution(self.pi, self.params.gamma))
        self.chosen = int(kernels._inverse_cdf_np(cum, self._gen.random()))
        return self.chosen

    def observe_loss(self, loss: float):
        self.last_round, self.pi = wsu_ux_update(self.pi, self.params, self.chosen, loss)
        self.round += 1


class EXP3Learner(BanditLearner):
    algorithm = BanditAlgorithm.EXP3

    def __init__(self, num_experts: int, eta: float, rng: RngStream | None = None):
        if not eta > 0:
            raise ParameterError("EXP3 step size must be positive")
        super().__init__(num_experts, rng)
        self.eta = eta
        self.weights = np.ones(num_experts)

    @property
    def pi(self) -> WeightVector:
        return WeightVector(self.weights / self.weights.sum())

    pi_tilde = pi

    def choose(self) -> int:
        cum = np.cumsum(self.weights / self.weights.sum())
        self.chosen = int(kernels._inverse_cdf_np(cum, self._gen.random()))
        return self.chosen

    def observe_loss(self, loss: float):
        w = exp3_update(self.weights, self.chosen, loss, self.eta)
        s = w.sum()
        self.weights = w / s if s < kernels.RESCALE_BELOW else w
        self.round += 1


@dataclass(eq=False)
class BanditRun:
    trace: RegretTrace
    pis: np.ndarray
    pi_tildes: np.ndarray
    chosen: np.ndarray
    estimates: np.ndarray
    params: dict = field(default_factory=dict)


def run_bandit(panel: ForecastPanel, algorithm=BanditAlgorithm.WSU_UX, *,
               params: BanditParams | None = None, eta: float | None = None,
               rng: RngStream | None = None, loss: LossFunction = QUADRATIC) -> BanditRun:
    """Run a bandit learner over a panel with the batch kernel.

    The kernel reads only the chosen expert's loss each round; stepping a
    :class:`BanditLearner` with a one-entry ``reveal`` callback and the same
    ``rng`` gives the same draws.
    """
    algorithm = BanditAlgorithm(algorithm)
    rng = rng or RngStream(0)
    T, k = panel.horizon, panel.num_experts
    losses = panel.losses(loss)
    u = rng.derive(0).generator().random(T)
    if algorithm is BanditAlgorithm.WSU_UX:
        params = params or BanditParams.tuned(k, T)
        meta = {"eta": params.eta, "gamma": params.gamma, "clamped": params.clamped}
        out = kernels.bandit_path(losses, kernels.WSU_UX, params.eta, params.gamma, u)
    else:
        eta = exp3_default_eta(k, T) if eta is None else eta
        if not eta > 0:
            raise ParameterError("EXP3 step size must be positive")
        meta = {"eta": eta}
        out = kernels.bandit_path(losses, kernels.EXP3, eta, 0.0, u)
    pis, tildes, chosen, est = out
    learner_losses = losses[np.arange(T), chosen]
    meta = dict(meta, algorithm=algorithm.value, mode="bandit", K=k, T=T,
                seed=rng.seed, stream=rng.stream_id)
    trace = regret_from_losses(learner_losses, losses, meta)
    return BanditRun(trace, pis, tildes, chosen, est, meta)


def bandit_doubling_wrapper(panel: ForecastPanel, rng: RngStream | None = None,
                            loss: LossFunction = QUADRATIC) -> BanditRun:
    """Anytime WSU-UX: restart with tuned parameters for horizon ``n`` on
    rounds ``(n/2, n]``. Phase metadata records any clamping."""
    rng = rng or RngStream(0)
    k = panel.num_experts
    losses = panel.losses(loss)
    learner_losses, pis, tildes, chosen, est, phases = [], [], [], [], [], []
    for start, end, n in doubling_phases(panel.horizon):
        params = clamped_params(k, n)
        learner = WSUUXLearner(params, rng.derive(n))
        phases.append({"start": start, "end": end, "n": n, "eta": params.eta,
                       "gamma": params.gamma, "clamped": params.clamped})
        for t in range(start - 1, end):
            pis.append(learner.pi.weights.copy())
            tildes.append(learner.pi_tilde.weights.copy())
            learner_losses.append(learner.step(lambda i, t=t: losses[t, i]))
            chosen.append(learner.chosen)
            est.append(learner.last_round.estimated_losses[learner.chosen])
    pis.append(learner.pi.weights.copy())
    meta = {"algorithm": "WSU-UX-doubling", "phases": phases, "K": k, "T": panel.horizon}
    trace = regret_from_losses(np.array(learner_losses), losses, meta)
    return BanditRun(trace, np.array(pis), np.array(tildes), np.array(chosen),
                     np.array(est), meta)
