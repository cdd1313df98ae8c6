"""Full-information learners.

Every learner follows the same stepping protocol::

    learner.observe_reports(p_t)
    prediction = learner.predict()
    loss = learner.observe_outcome(r_t)
    learner.update()

:func:`run_full_info` produces the same numbers in batch through the
kernels in :mod:`wagerlearn.kernels`.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import kernels
from .core import (
    QUADRATIC,
    ForecastPanel,
    LossFunction,
    RegretTrace,
    RngStream,
    WeightVector,
    as_probabilities,
    regret_from_losses,
    relative_loss,
)
from .errors import DimensionError, ParameterError, SizeError
from .wagering import wswm_payoffs_array

log = logging.getLogger(__name__)

EXACT = "exact"
EXACT_BUDGET = 2 ** 20
DEFAULT_NUM_SAMPLES = 10_000
WSU_MAX_ETA = 0.5
HEDGE_AGGREGATE_ETA = 1.0
_SAMPLE_BLOCK = 32


class Algorithm(enum.Enum):
    WSU = "WSU"
    MWU = "MWU"
    HEDGE = "Hedge"
    ELFX = "ELF-X"
    ELF = "ELF"


class PredictionMode(enum.Enum):
    SELECT_ONE = "select"
    AGGREGATE = "aggregate"


# ------------------------------------------------------------------ updates

def _check_wsu_eta(eta):
    if not 0.0 < eta <= WSU_MAX_ETA:
        raise ParameterError(f"WSU step size must lie in (0, 0.5], got {eta}")


def wsu_update(pi, losses, eta: float) -> WeightVector:
    """Weighted-Score Update: ``pi_i (1 - eta (l_i - <pi, l>))``."""
    _check_wsu_eta(eta)
    w = np.asarray(pi, dtype=np.float64)
    ell = np.asarray(losses, dtype=np.float64)
    return WeightVector(w * (1.0 - eta * relative_loss(ell, w)))


def wsu_update_wagering(pi, reports, outcome, eta: float,
                        loss: LossFunction = QUADRATIC) -> WeightVector:
    """The same update written as a mix of a wagering payoff and the old
    weights: ``eta * WSWM(p, pi, r) + (1 - eta) * pi``."""
    _check_wsu_eta(eta)
    w = np.asarray(pi, dtype=np.float64)
    payoff = wswm_payoffs_array(as_probabilities(reports), w, outcome, loss)
    return WeightVector(eta * payoff + (1.0 - eta) * w)


def mwu_update(weights, losses, eta: float) -> np.ndarray:
    """``w_i (1 - eta l_i)`` on unnormalised weights."""
    if not 0.0 < eta < 1.0:
        raise ParameterError(f"MWU step size must lie in (0, 1), got {eta}")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w <= 0):
        raise ParameterError("MWU weights must be positive")
    return w * (1.0 - eta * np.asarray(losses, dtype=np.float64))


def hedge_update(weights, losses, eta: float) -> np.ndarray:
    """``w_i exp(-eta l_i)`` on unnormalised weights."""
    if not eta > 0.0:
        raise ParameterError(f"Hedge step size must be positive, got {eta}")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w <= 0):
        raise ParameterError("Hedge weights must be positive")
    return w * np.exp(-eta * np.asarray(losses, dtype=np.float64))


def normalize(weights) -> WeightVector:
    w = np.asarray(weights, dtype=np.float64)
    return WeightVector(w / w.sum())


def elfx_winner_matrix(losses) -> np.ndarray:
    """Row-wise ``(1/K)(1 - l_i + mean(l))`` for a (..., K) loss array."""
    ell = np.asarray(losses, dtype=np.float64)
    k = ell.shape[-1]
    return (1.0 - ell + ell.mean(axis=-1, keepdims=True)) / k


def elf_winner_matrix(losses) -> np.ndarray:
    """Row-wise ``(1/K)(1 - l_i + sum_{j != i} l_j / (K-1))``."""
    ell = np.asarray(losses, dtype=np.float64)
    k = ell.shape[-1]
    if k < 2:
        raise ParameterError("ELF needs at least two experts")
    others = (ell.sum(axis=-1, keepdims=True) - ell) / (k - 1)
    return (1.0 - ell + others) / k


def elfx_round_winner_probs(losses) -> WeightVector:
    return WeightVector(elfx_winner_matrix(losses))


def elf_round_winner_probs(losses) -> WeightVector:
    return WeightVector(elf_winner_matrix(losses))


def _check_exact_budget(k, t):
    if t * math.log(max(k, 1)) > math.log(EXACT_BUDGET) + 1e-12:
        raise SizeError(f"exact enumeration of {k}^{t} winner sequences exceeds 2^20")


def selection_from_winner_probs(probs, num_samples=EXACT, rng: RngStream | None = None,
                                ) -> WeightVector:
    """Most-wins selection distribution given per-round winner probabilities."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    t, k = probs.shape
    if t == 0:
        return WeightVector.uniform(k)
    if num_samples == EXACT:
        _check_exact_budget(k, t)
        return WeightVector(kernels.exact_selection(probs))
    if int(num_samples) < 1:
        raise ParameterError("num_samples must be a positive integer or 'exact'")
    s = int(num_samples)
    gen = (rng or RngStream(0)).generator()
    counts = np.zeros((s, k), dtype=np.int64)
    cum = np.cumsum(probs, axis=1)
    est = None
    for start in range(0, t, _SAMPLE_BLOCK):
        block = cum[start: start + _SAMPLE_BLOCK]
        est = kernels.sample_block(counts, block, gen.random((block.shape[0], s)))
    return WeightVector(est[-1])


def elfx_selection_distribution(history, num_samples=EXACT, rng: RngStream | None = None,
                                ) -> WeightVector:
    """ELF-X distribution over experts after the loss rows in ``history``.

    ``history`` is a (t, K) array; ``t = 0`` needs an explicit K, so pass an
    empty (0, K) array. Exact mode enumerates all ``K**t`` winner sequences;
    sampling mode averages ``num_samples`` independent sequences, sharing
    tied selections equally.
    """
    hist = np.asarray(history, dtype=np.float64)
    if hist.ndim != 2:
        raise DimensionError("history must be a (t, K) array")
    return selection_from_winner_probs(elfx_winner_matrix(hist), num_samples, rng)


def exact_count_distribution(probs):
    """Distribution of the win-count vector after the given rounds.

    Returns ``(count_vectors (M, K) int, probabilities (M,))`` by
    enumerating winner sequences and merging equal count vectors.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    t, k = probs.shape
    if t == 0:
        return np.zeros((1, k), dtype=np.int64), np.ones(1)
    _check_exact_budget(k, t)
    # merge round by round; the support stays polynomial in t
    counts = np.zeros((1, k), dtype=np.int64)
    mass = np.ones(1)
    for tau in range(t):
        new_counts = np.repeat(counts, k, axis=0)
        new_counts[np.arange(new_counts.shape[0]), np.tile(np.arange(k), counts.shape[0])] += 1
        new_mass = (mass[:, None] * probs[tau][None, :]).reshape(-1)
        counts, inverse = np.unique(new_counts, axis=0, return_inverse=True)
        mass = np.bincount(inverse.reshape(-1), weights=new_mass, minlength=counts.shape[0])
    return counts, mass


def tie_shared_selection(counts) -> np.ndarray:
    """Row-wise selection probabilities: equal share among experts at the max count."""
    counts = np.asarray(counts)
    at_max = counts == counts.max(axis=-1, keepdims=True)
    return at_max / at_max.sum(axis=-1, keepdims=True)


# ----------------------------------------------------------------- learners

def default_eta(algorithm: Algorithm, mode: PredictionMode, k: int, horizon: int) -> float:
    """Step size used when none is given.

    WSU and MWU use ``sqrt(ln K / T)`` capped at 0.5; Hedge uses
    ``sqrt(8 ln K / T)`` when selecting and 1.0 when aggregating.
    """
    if k == 1:
        return WSU_MAX_ETA
    if algorithm is Algorithm.HEDGE:
        if mode is PredictionMode.AGGREGATE:
            return HEDGE_AGGREGATE_ETA
        return math.sqrt(8.0 * math.log(k) / horizon)
    return min(math.sqrt(math.log(k) / horizon), WSU_MAX_ETA)


def _inverse_cdf(pi, u) -> int:
    return int(kernels._inverse_cdf_np(np.cumsum(np.asarray(pi, dtype=np.float64)), u))


class FullInfoLearner:
    """Shared stepping logic. Subclasses supply ``_select`` and ``_advance``."""

    algorithm: Algorithm

    def __init__(self, num_experts: int, mode: PredictionMode = PredictionMode.SELECT_ONE,
                 rng: RngStream | None = None, loss: LossFunction = QUADRATIC):
        if num_experts < 1:
            raise ParameterError("need at least one expert")
        self.num_experts = num_experts
        self.mode = PredictionMode(mode)
        self.loss = loss
        self.rng = rng or RngStream(0)
        self._select_gen = self.rng.derive(0).generator()
        self.round = 1
        self.chosen = None
        self._reports = None
        self._losses = None

    @property
    def pi(self) -> WeightVector:
        raise NotImplementedError

    def observe_reports(self, reports):
        reports = as_probabilities(reports).reshape(-1)
        if reports.shape[0] != self.num_experts:
            raise DimensionError(f"expected {self.num_experts} reports, got {reports.shape[0]}")
        self._reports = reports
        self._losses = None

    def predict(self) -> float:
        if self._reports is None:
            raise RuntimeError("observe_reports must precede predict")
        if self.mode is PredictionMode.AGGREGATE:
            self.chosen = None
            return float(np.dot(self.pi.weights, self._reports))
        self.chosen = self._select()
        return float(self._reports[self.chosen])

    def observe_outcome(self, outcome) -> float:
        """Record the outcome and return the learner's loss this round."""
        r = float(outcome)
        self._losses = np.asarray(self.loss(self._reports, r), dtype=np.float64)
        if self.mode is PredictionMode.AGGREGATE:
            return float(self.loss(float(np.dot(self.pi.weights, self._reports)), r))
        return float(self._losses[self.chosen])

    def update(self) -> WeightVector:
        if self._losses is None:
            raise RuntimeError("observe_outcome must precede update")
        self._advance(self._losses)
        self.round += 1
        self._reports = self._losses = None
        return self.pi

    def _select(self) -> int:
        return _inverse_cdf(self.pi.weights, self._select_gen.random())

    def _advance(self, losses):
        raise NotImplementedError


class WSULearner(FullInfoLearner):
    algorithm = Algorithm.WSU

    def __init__(self, num_experts, eta, mode=PredictionMode.SELECT_ONE, rng=None,
                 loss=QUADRATIC):
        _check_wsu_eta(eta)
        super().__init__(num_experts, mode, rng, loss)
        self.eta = eta
        self._pi = WeightVector.uniform(num_experts)

    @property
    def pi(self):
        return self._pi

    def _advance(self, losses):
        self._pi = wsu_update(self._pi, losses, self.eta)


class _WeightLearner(FullInfoLearner):
    def __init__(self, num_experts, eta, mode=PredictionMode.SELECT_ONE, rng=None,
                 loss=QUADRATIC):
        super().__init__(num_experts, mode, rng, loss)
        self.eta = eta
        self.weights = np.ones(num_experts)
        self._rule(self.weights, np.zeros(num_experts))  # validates eta

    @property
    def pi(self):
        return normalize(self.weights)

    def _advance(self, losses):
        w = self._rule(self.weights, losses)
        s = w.sum()
        self.weights = w / s if s < kernels.RESCALE_BELOW else w

    def _rule(self, weights, losses):
        raise NotImplementedError


class MWULearner(_WeightLearner):
    algorithm = Algorithm.MWU

    def _rule(self, weights, losses):
        return mwu_update(weights, losses, self.eta)


class HedgeLearner(_WeightLearner):
    algorithm = Algorithm.HEDGE

    def _rule(self, weights, losses):
        return hedge_update(weights, losses, self.eta)


class ELFXLearner(FullInfoLearner):
    """Event-lottery learner.

    In select-one mode each round runs a fresh winner lottery over the
    stored history. ``pi`` is the most-wins distribution, computed exactly
    or estimated from ``num_samples`` persistent winner sequences that grow
    by one draw per round.
    """

    algorithm = Algorithm.ELFX

    def __init__(self, num_experts, num_samples=DEFAULT_NUM_SAMPLES,
                 mode=PredictionMode.SELECT_ONE, rng=None, loss=QUADRATIC):
        super().__init__(num_experts, mode, rng, loss)
        self._winner_probs(np.zeros(num_experts))  # ELF rejects K = 1 here
        self.num_samples = num_samples
        self.history = []  # winner-probability rows
        self._pi = WeightVector.uniform(num_experts)
        if num_samples != EXACT:
            if int(num_samples) < 1:
                raise ParameterError("num_samples must be a positive integer or 'exact'")
            self._sample_gen = self.rng.derive(1).generator()
            self._counts = np.zeros((int(num_samples), num_experts), dtype=np.int64)

    def _winner_probs(self, losses):
        return elfx_winner_matrix(losses)

    @property
    def pi(self):
        return self._pi

    def _select(self):
        t = len(self.history)
        u = self._select_gen.random(t + 1)
        counts = np.zeros(self.num_experts, dtype=np.int64)
        for tau, row in enumerate(self.history):
            counts[_inverse_cdf(row, u[tau])] += 1
        tied = np.flatnonzero(counts == counts.max())
        return int(tied[min(int(u[t] * tied.size), tied.size - 1)])

    def _advance(self, losses):
        row = self._winner_probs(losses)
        self.history.append(row)
        if self.num_samples == EXACT:
            _check_exact_budget(self.num_experts, len(self.history))
            self._pi = WeightVector(kernels.exact_selection(np.array(self.history)))
        else:
            u = self._sample_gen.random((1, self._counts.shape[0]))
            est = kernels.sample_block(self._counts, np.cumsum(row)[None, :], u)
            self._pi = WeightVector(est[0])


class ELFLearner(ELFXLearner):
    algorithm = Algorithm.ELF

    def _winner_probs(self, losses):
        return elf_winner_matrix(losses)


def make_learner(algorithm, num_experts, mode=PredictionMode.SELECT_ONE, *, eta=None,
                 horizon=None, num_samples=DEFAULT_NUM_SAMPLES, rng=None,
                 loss=QUADRATIC) -> FullInfoLearner:
    algorithm = Algorithm(algorithm)
    mode = PredictionMode(mode)
    if algorithm in (Algorithm.ELFX, Algorithm.ELF):
        cls = ELFXLearner if algorithm is Algorithm.ELFX else ELFLearner
        return cls(num_experts, num_samples, mode, rng, loss)
    if eta is None:
        if horizon is None:
            raise ParameterError("give eta or the horizon to derive it from")
        eta = default_eta(algorithm, mode, num_experts, horizon)
    cls = {Algorithm.WSU: WSULearner, Algorithm.MWU: MWULearner, Algorithm.HEDGE: HedgeLearner}
    return cls[algorithm](num_experts, eta, mode, rng, loss)


# ------------------------------------------------------------------ batch

@dataclass(eq=False)
class FullInfoRun:
    trace: RegretTrace
    pis: np.ndarray            # (T+1, K): pi_1 .. pi_{T+1}
    learner_losses: np.ndarray
    predictions: np.ndarray
    chosen: np.ndarray | None  # select-one mode only
    params: dict = field(default_factory=dict)


_KERNEL_CODE = {Algorithm.WSU: kernels.WSU, Algorithm.MWU: kernels.MWU,
                Algorithm.HEDGE: kernels.HEDGE}


def _elf_pis(probs, num_samples, rng):
    T, k = probs.shape
    if num_samples == EXACT:
        _check_exact_budget(k, T)
        return np.array([kernels.exact_selection(probs[:t]) for t in range(T + 1)])
    s = int(num_samples)
    if s < 1:
        raise ParameterError("num_samples must be a positive integer or 'exact'")
    gen = rng.derive(1).generator()
    counts = np.zeros((s, k), dtype=np.int64)
    cum = np.cumsum(probs, axis=1)
    pis = np.empty((T + 1, k))
    pis[0] = 1.0 / k
    for start in range(0, T, _SAMPLE_BLOCK):
        block = cum[start: start + _SAMPLE_BLOCK]
        pis[start + 1: start + 1 + block.shape[0]] = kernels.sample_block(
            counts, block, gen.random((block.shape[0], s)))
    return pis


def run_full_info(panel: ForecastPanel, algorithm, mode=PredictionMode.SELECT_ONE, *,
                  eta: float | None = None, num_samples=DEFAULT_NUM_SAMPLES,
                  rng: RngStream | None = None, loss: LossFunction = QUADRATIC,
                  ) -> FullInfoRun:
    """Run a full-information learner over a whole panel.

    Select-one mode charges the learner the drawn expert's loss; aggregate
    mode charges the loss of the pi-weighted mean report. Draw-for-draw
    identical to stepping the corresponding :class:`FullInfoLearner` with
    the same ``rng``.
    """
    algorithm = Algorithm(algorithm)
    mode = PredictionMode(mode)
    rng = rng or RngStream(0)
    T, k = panel.horizon, panel.num_experts
    expert_losses = panel.losses(loss)
    params = {"algorithm": algorithm.value, "mode": mode.value}

    if algorithm in (Algorithm.ELFX, Algorithm.ELF):
        winner = elfx_winner_matrix if algorithm is Algorithm.ELFX else elf_winner_matrix
        probs = winner(expert_losses)
        pis = _elf_pis(probs, num_samples, rng)
        params["num_samples"] = num_samples
        if mode is PredictionMode.SELECT_ONE:
            u = rng.derive(0).generator().random(T * (T + 1) // 2)
            chosen = kernels.lottery_select(np.cumsum(probs, axis=1), u)
    else:
        if eta is None:
            eta = default_eta(algorithm, mode, k, T)
        make_learner(algorithm, k, mode, eta=eta)  # parameter validation
        params["eta"] = eta
        w0 = np.full(k, 1.0 / k) if algorithm is Algorithm.WSU else np.ones(k)
        pis = kernels.weight_path(expert_losses, _KERNEL_CODE[algorithm], eta, w0)
        if mode is PredictionMode.SELECT_ONE:
            u = rng.derive(0).generator().random(T)
            chosen = kernels._inverse_cdf_np(np.cumsum(pis[:-1], axis=1), u)

    if mode is PredictionMode.SELECT_ONE:
        predictions = panel.reports[np.arange(T), chosen]
        learner_losses = expert_losses[np.arange(T), chosen]
    else:
        chosen = None
        predictions = np.einsum("tk,tk->t", pis[:-1], panel.reports)
        learner_losses = np.asarray(loss(predictions, panel.outcomes.astype(np.float64)))
    meta = dict(params, K=k, T=T, seed=rng.seed, stream=rng.stream_id)
    trace = regret_from_losses(learner_losses, expert_losses, meta)
    return FullInfoRun(trace, pis, learner_losses, predictions, chosen, params)


# ---------------------------------------------------------- doubling trick

def doubling_phases(horizon: int):
    """Phases ``(start, end, n)`` covering rounds ``(n/2, n]`` for n = 1, 2, 4, ...

    Rounds are 1-based and inclusive; the last phase is cut at ``horizon``.
    """
    phases = []
    n = 1
    while True:
        start = n // 2 + 1
        if start > horizon:
            break
        phases.append((start, min(n, horizon), n))
        n *= 2
    return phases


def wsu_phase_eta(k: int, n: int) -> float:
    """``sqrt(ln K / n)`` capped to the valid WSU range."""
    if k == 1:
        return WSU_MAX_ETA
    return min(math.sqrt(math.log(k) / n), WSU_MAX_ETA)


@dataclass(eq=False)
class DoublingRun:
    learner_losses: np.ndarray
    pis: np.ndarray
    phases: list
    trace: RegretTrace | None = None


class DoublingLearner:
    """Anytime wrapper: restarts ``make(n)`` whenever the round passes the
    current horizon guess ``n``, then doubles ``n``. ``make`` receives the
    phase horizon and returns a fresh learner."""

    def __init__(self, make: Callable[[int], FullInfoLearner]):
        self.make = make
        self.n = 1
        self.round = 1
        self.learner = make(1)
        self.phases = [self._phase_record()]

    def _phase_record(self):
        return {"start": self.round, "n": self.n, "eta": getattr(self.learner, "eta", None)}

    def step(self, reports, outcome) -> float:
        self.learner.observe_reports(reports)
        self.learner.predict()
        loss = self.learner.observe_outcome(outcome)
        self.learner.update()
        self.round += 1
        if self.round > self.n:
            # restart now so ``pi`` is the distribution the next round uses
            self.n *= 2
            self.learner = self.make(self.n)
            self.phases.append(self._phase_record())
        return loss

    @property
    def pi(self) -> WeightVector:
        return self.learner.pi


def doubling_wrapper(make: Callable[[int], FullInfoLearner],
                     stream: Iterable, num_experts: int) -> DoublingRun:
    """Drive a :class:`DoublingLearner` over ``(reports, outcome)`` pairs."""
    wrapper = DoublingLearner(make)
    pis = [wrapper.pi.weights.copy()]
    losses = []
    for reports, outcome in stream:
        if len(reports) != num_experts:
            raise DimensionError("report width changed mid-stream")
        losses.append(wrapper.step(reports, outcome))
        pis.append(wrapper.pi.weights.copy())
    phases = [ph for ph in wrapper.phases if ph["start"] < wrapper.round]
    for i, ph in enumerate(phases):
        ph["end"] = phases[i + 1]["start"] - 1 if i + 1 < len(phases) else wrapper.round - 1
    return DoublingRun(np.array(losses), np.array(pis), phases)


def run_doubling(panel: ForecastPanel, algorithm=Algorithm.WSU,
                 mode=PredictionMode.SELECT_ONE, rng: RngStream | None = None,
                 loss: LossFunction = QUADRATIC) -> DoublingRun:
    """Anytime WSU/MWU/Hedge on a panel; phase ``n`` uses ``sqrt(ln K / n)``."""
    algorithm = Algorithm(algorithm)
    if algorithm in (Algorithm.ELFX, Algorithm.ELF):
        raise ParameterError("the doubling trick applies to step-size learners only")
    rng = rng or RngStream(0)
    k = panel.num_experts

    def make(n):
        if algorithm is Algorithm.HEDGE:
            eta = default_eta(algorithm, PredictionMode(mode), k, n)
        else:
            eta = wsu_phase_eta(k, n)
        return make_learner(algorithm, k, mode, eta=eta, rng=rng.derive(n), loss=loss)

    run = doubling_wrapper(make, zip(panel.reports, panel.outcomes), k)
    run.trace = regret_from_losses(run.learner_losses, panel.losses(loss),
                                   {"algorithm": f"{algorithm.value}-doubling",
                                    "phases": run.phases})
    return run
