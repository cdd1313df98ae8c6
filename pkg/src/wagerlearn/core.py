"""Domain types shared by every learner: probabilities, simplex weights,
bounded proper losses, forecast panels, regret traces and seeded streams."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, ParameterError

SIMPLEX_ENTRY_TOL = 1e-12
SIMPLEX_SUM_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Probability:
    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (0.0 <= v <= 1.0):  # NaN fails both comparisons
            raise ParameterError(f"probability must lie in [0, 1], got {self.value!r}")
        object.__setattr__(self, "value", v)

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class Outcome:
    value: int

    def __post_init__(self):
        if self.value not in (0, 1):
            raise ParameterError(f"outcome must be 0 or 1, got {self.value!r}")
        object.__setattr__(self, "value", int(self.value))

    def __int__(self):
        return self.value


def as_probabilities(values, name="reports") -> np.ndarray:
    """Return ``values`` as a float64 array, rejecting anything outside [0, 1]."""
    a = np.asarray(values, dtype=np.float64)
    if a.size and not (np.all(a >= 0.0) and np.all(a <= 1.0)):
        raise ParameterError(f"{name} must lie in [0, 1]")
    return a


def as_outcomes(values) -> np.ndarray:
    a = np.asarray(values)
    if a.size and not np.all((a == 0) | (a == 1)):
        raise ParameterError("outcomes must be 0 or 1")
    return a.astype(np.int8)


def check_simplex(pi, entry_tol=SIMPLEX_ENTRY_TOL, sum_tol=SIMPLEX_SUM_TOL) -> bool:
    """Vectorised simplex test along the last axis; True iff every row is valid."""
    pi = np.asarray(pi, dtype=np.float64)
    if not np.all(np.isfinite(pi)):
        return False
    if np.any(pi < -entry_tol) or np.any(pi > 1.0 + entry_tol):
        return False
    return bool(np.all(np.abs(pi.sum(axis=-1) - 1.0) <= sum_tol))


class WeightVector:
    """A probability distribution over K experts.

    Construction validates the simplex tolerances, clamps entries into
    [0, 1] and renormalises so downstream sums are 1 to rounding.
    Instances are immutable; ``weights`` is a read-only array.
    """

    __slots__ = ("_w",)

    def __init__(self, weights):
        w = np.array(weights, dtype=np.float64, copy=True).reshape(-1)
        if w.size == 0:
            raise DimensionError("weight vector needs at least one entry")
        if not check_simplex(w):
            raise ParameterError(f"not a probability vector: {w!r}")
        w = np.clip(w, 0.0, 1.0)
        w /= w.sum()
        self._w = _readonly(w)

    @classmethod
    def uniform(cls, k: int) -> "WeightVector":
        if k < 1:
            raise ParameterError("need at least one expert")
        return cls(np.full(k, 1.0 / k))

    @property
    def weights(self) -> np.ndarray:
        return self._w

    def __len__(self):
        return self._w.size

    def __getitem__(self, i):
        return self._w[i]

    def __array__(self, dtype=None, copy=None):
        return self._w if dtype is None else self._w.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, WeightVector):
            return NotImplemented
        return np.array_equal(self._w, other._w)

    def __hash__(self):
        return hash(self._w.tobytes())

    def __repr__(self):
        return f"WeightVector({np.array2string(self._w, precision=6)})"


class LossKind(enum.Enum):
    QUADRATIC = "quadratic"
    CUSTOM = "custom"


def _quadratic(report, outcome):
    d = np.asarray(report, dtype=np.float64) - outcome
    return d * d


@dataclass(frozen=True)
class LossFunction:
    """A bounded loss ``l: [0,1] x {0,1} -> [0,1]``.

    The evaluator must be vectorised (numpy broadcasting over reports and
    outcomes). Construction probes the range on a grid and rejects
    functions that leave [0, 1], which rules out unbounded losses such as
    the log loss. Callers must pre-scale other bounded losses.
    """

    kind: LossKind
    evaluator: Callable = field(repr=False)
    name: str = "quadratic"

    def __post_init__(self):
        grid = np.linspace(0.0, 1.0, 1001)
        with np.errstate(all="ignore"):
            vals = np.concatenate([self.evaluator(grid, 0), self.evaluator(grid, 1)])
        if not np.all(np.isfinite(vals)) or vals.min() < 0.0 or vals.max() > 1.0:
            raise ParameterError(f"loss {self.name!r} must map into [0, 1]")

    @classmethod
    def quadratic(cls) -> "LossFunction":
        return cls(LossKind.QUADRATIC, _quadratic, "quadratic")

    @classmethod
    def custom(cls, evaluator: Callable, name: str) -> "LossFunction":
        return cls(LossKind.CUSTOM, evaluator, name)

    def __call__(self, report, outcome):
        return self.evaluator(report, outcome)

    def expected(self, report, belief):
        """Expected loss of ``report`` when the outcome is Bern(``belief``)."""
        return belief * self.evaluator(report, 1) + (1.0 - belief) * self.evaluator(report, 0)

    def is_proper(self, num_beliefs=101, tol=1e-12) -> bool:
        """Check properness: on a belief grid, the truthful report minimises
        expected loss over the same grid."""
        g = np.linspace(0.0, 1.0, num_beliefs)
        exp_loss = self.expected(g[None, :], g[:, None])
        truthful = np.diag(exp_loss)
        return bool(np.all(truthful <= exp_loss.min(axis=1) + tol))


QUADRATIC = LossFunction.quadratic()


@dataclass(frozen=True, eq=False)
class ForecastPanel:
    """A complete T x K matrix of expert reports plus the outcome sequence."""

    reports: np.ndarray
    outcomes: np.ndarray
    expert_ids: tuple = ()

    def __post_init__(self):
        reports = as_probabilities(np.array(self.reports, dtype=np.float64, copy=True))
        if reports.ndim != 2 or reports.shape[0] < 1 or reports.shape[1] < 1:
            raise DimensionError("reports must be a non-empty T x K matrix")
        outcomes = as_outcomes(np.array(self.outcomes, copy=True)).reshape(-1)
        if outcomes.shape[0] != reports.shape[0]:
            raise DimensionError(
                f"{reports.shape[0]} report rows but {outcomes.shape[0]} outcomes"
            )
        ids = tuple(str(e) for e in self.expert_ids) or tuple(
            str(i) for i in range(reports.shape[1])
        )
        if len(ids) != reports.shape[1]:
            raise DimensionError("expert_ids length must equal the number of columns")
        object.__setattr__(self, "reports", _readonly(reports))
        object.__setattr__(self, "outcomes", _readonly(outcomes))
        object.__setattr__(self, "expert_ids", ids)

    @property
    def num_experts(self) -> int:
        return self.reports.shape[1]

    @property
    def horizon(self) -> int:
        return self.reports.shape[0]

    def losses(self, loss: LossFunction = QUADRATIC) -> np.ndarray:
        return np.asarray(loss(self.reports, self.outcomes[:, None].astype(np.float64)))

    def columns(self, idx: Sequence[int]) -> "ForecastPanel":
        idx = list(idx)
        return ForecastPanel(
            self.reports[:, idx], self.outcomes, tuple(self.expert_ids[i] for i in idx)
        )

    def rows(self, start: int, stop: int) -> "ForecastPanel":
        """Rows ``start..stop-1`` (0-based, half-open)."""
        return ForecastPanel(self.reports[start:stop], self.outcomes[start:stop], self.expert_ids)

    def __eq__(self, other):
        if not isinstance(other, ForecastPanel):
            return NotImplemented
        return (
            np.array_equal(self.reports, other.reports)
            and np.array_equal(self.outcomes, other.outcomes)
            and self.expert_ids == other.expert_ids
        )


_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Backed by numpy's Philox counter-based generator with the two 64-bit
    integers as its 128-bit key, so draws are identical on every platform.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def derive(self, *path: int) -> "RngStream":
        """Child stream for a cell index path; stable across runs."""
        sid = self.stream_id
        for p in path:
            sid = (sid * 1_000_003 + int(p) + 1) & _MASK64
        return RngStream(self.seed, sid)


def loss_row(panel: ForecastPanel, loss: LossFunction, t: int) -> np.ndarray:
    """Expert losses at round ``t`` (1-based)."""
    if not 1 <= t <= panel.horizon:
        raise IndexError(f"round {t} outside 1..{panel.horizon}")
    return np.asarray(loss(panel.reports[t - 1], float(panel.outcomes[t - 1])), dtype=np.float64)


def relative_loss(losses, pi) -> np.ndarray:
    """``L_i = l_i - <pi, l>``: each expert's loss relative to the pi-weighted mean."""
    losses = np.asarray(losses, dtype=np.float64)
    w = np.asarray(pi, dtype=np.float64)
    if losses.shape != w.shape:
        raise DimensionError(f"losses {losses.shape} vs weights {w.shape}")
    return losses - np.dot(w, losses)


@dataclass(frozen=True, eq=False)
class RegretTrace:
    """Per-round cumulative learner loss, best-expert loss and regret."""

    learner_cum: np.ndarray
    best_cum: np.ndarray
    regret: np.ndarray
    best_index: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return int(self.regret.shape[0])

    @property
    def final_regret(self) -> float:
        return float(self.regret[-1])


def cumulative_regret(learner_losses, panel: ForecastPanel, loss: LossFunction = QUADRATIC,
                      metadata=None) -> RegretTrace:
    """Prefix regret against the best fixed expert of each prefix.

    The best expert is reported with lowest-index tie-breaking.
    """
    learner_losses = np.asarray(learner_losses, dtype=np.float64).reshape(-1)
    if learner_losses.shape[0] != panel.horizon:
        raise DimensionError(f"{learner_losses.shape[0]} learner losses for T={panel.horizon}")
    return regret_from_losses(learner_losses, panel.losses(loss), metadata)


def regret_from_losses(learner_losses, expert_losses, metadata=None) -> RegretTrace:
    expert_cum = np.cumsum(expert_losses, axis=0)
    best_index = np.argmin(expert_cum, axis=1)
    best_cum = expert_cum[np.arange(expert_cum.shape[0]), best_index]
    learner_cum = np.cumsum(learner_losses)
    return RegretTrace(
        learner_cum=learner_cum,
        best_cum=best_cum,
        regret=learner_cum - best_cum,
        best_index=best_index,
        metadata=dict(metadata or {}),
    )


def default_eta(num_experts: int, horizon: int) -> float:
    """``sqrt(ln K / T)``, the tuned full-information step size."""
    return math.sqrt(math.log(num_experts) / horizon)
