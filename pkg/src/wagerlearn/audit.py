"""Exact-expectation incentive auditor.

A learner is audited through a *next-weight rule*: a function mapping a
batch of report profiles ``(G, K)`` and an outcome to the batch of next
distributions ``(G, K)``. Expectations over the outcome are two-point
Bernoulli sums, so every audit is exact and bit-reproducible. Verdicts
only certify the finite report grid that was searched.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bandit import BanditParams, sampling_distribution
from .core import QUADRATIC, LossFunction, as_probabilities
from .errors import DimensionError, ParameterError, SizeError
from .full_info import (
    EXACT_BUDGET,
    elfx_winner_matrix,
    exact_count_distribution,
    tie_shared_selection,
)

NextWeightRule = Callable[[np.ndarray, int], np.ndarray]


class Verdict(enum.Enum):
    IC_ON_GRID = "IC-on-grid"
    VIOLATION = "violation"


@dataclass(frozen=True)
class AuditConfig:
    report_grid_size: int = 1001
    belief_grid_size: int = 101
    tolerance: float = 1e-9
    horizon_depth: int = 2
    report_grid: tuple | None = None

    def __post_init__(self):
        for name in ("report_grid_size", "belief_grid_size"):
            n = getattr(self, name)
            if n < 3 or n % 2 == 0:
                raise ParameterError(f"{name} must be odd and at least 3, got {n}")
        if self.horizon_depth < 1:
            raise ParameterError("horizon_depth must be at least 1")

    def grid(self, include: Sequence[float] = ()) -> np.ndarray:
        """Report grid plus any extra points (such as the truthful report)."""
        base = (np.asarray(self.report_grid, dtype=np.float64) if self.report_grid is not None
                else np.linspace(0.0, 1.0, self.report_grid_size))
        return np.unique(np.concatenate([as_probabilities(base), np.asarray(include, float)]))

    def beliefs(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.belief_grid_size)


@dataclass(frozen=True)
class AuditReport:
    truthful_value: float
    best_deviation_value: float
    best_deviation_reports: tuple
    gap: float
    verdict: Verdict
    algorithm: str = ""
    details: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "algorithm": self.algorithm,
            "verdict": self.verdict.value,
            "truthful_value": self.truthful_value,
            "best_deviation_value": self.best_deviation_value,
            "best_deviation_reports": list(self.best_deviation_reports),
            "gap": self.gap,
            **self.details,
        }


def _report(values, truthful_idx, candidates, tol, name, details):
    best = int(np.argmax(values))
    truthful = float(values[truthful_idx])
    best_val = float(values[best])
    gap = best_val - truthful
    verdict = Verdict.VIOLATION if gap > tol else Verdict.IC_ON_GRID
    return AuditReport(truthful, best_val, tuple(float(x) for x in np.atleast_1d(candidates[best])),
                       gap, verdict, name, details)


# ------------------------------------------------------- next-weight rules

def wsu_rule(pi, eta: float, loss: LossFunction = QUADRATIC) -> NextWeightRule:
    w = np.asarray(pi, dtype=np.float64)

    def rule(reports, outcome):
        ell = loss(reports, float(outcome))
        avg = ell @ w
        return w * (1.0 - eta * (ell - avg[:, None]))

    return rule


def _normalised(rule_unnorm):
    def rule(reports, outcome):
        w = rule_unnorm(reports, outcome)
        return w / w.sum(axis=1, keepdims=True)

    return rule


def mwu_rule(weights, eta: float, loss: LossFunction = QUADRATIC) -> NextWeightRule:
    w = np.asarray(weights, dtype=np.float64)
    return _normalised(lambda reports, r: w * (1.0 - eta * loss(reports, float(r))))


def hedge_rule(weights, eta: float, loss: LossFunction = QUADRATIC) -> NextWeightRule:
    w = np.asarray(weights, dtype=np.float64)
    return _normalised(lambda reports, r: w * np.exp(-eta * loss(reports, float(r))))


def gd_rule(pi, eta: float) -> NextWeightRule:
    """Gradient step on the aggregate squared loss ``(r - <pi, p>)^2``,
    ``pi + 2 eta (r - <pi, p>) p``, renormalised by its sum (no projection)."""
    w = np.asarray(pi, dtype=np.float64)

    def rule(reports, outcome):
        resid = float(outcome) - reports @ w
        nxt = w + 2.0 * eta * resid[:, None] * reports
        total = nxt.sum(axis=1, keepdims=True)
        if np.any(total <= 0):
            raise ParameterError("gradient step left no positive mass to normalise")
        return nxt / total

    return rule


def wsu_ux_rule(pi, params: BanditParams, loss: LossFunction = QUADRATIC) -> NextWeightRule:
    """Next WSU-UX weights in expectation over the drawn expert."""
    w = np.asarray(pi, dtype=np.float64)
    tilde = sampling_distribution(w, params.gamma)

    def rule(reports, outcome):
        ell = loss(reports, float(outcome))
        out = np.zeros_like(ell)
        for j in range(w.shape[0]):
            est = ell[:, j] / tilde[j]
            shift = w[j] * est  # <pi, lhat> when j is drawn
            nxt = w[None, :] * (1.0 + params.eta * shift[:, None])
            nxt[:, j] = w[j] * (1.0 - params.eta * (est - shift))
            out += tilde[j] * nxt
        return out

    return rule


def _selection_table(prior_probs, k, new_rounds):
    """``F[x]``: selection distribution after the prior rounds plus one
    win for each index in the tuple ``x``, averaged over prior outcomes."""
    counts, mass = exact_count_distribution(prior_probs) if len(prior_probs) else (
        np.zeros((1, k), dtype=np.int64), np.ones(1))
    table = {}
    for combo in itertools.product(range(k), repeat=new_rounds):
        extra = np.bincount(np.array(combo, dtype=np.int64), minlength=k)
        table[combo] = mass @ tie_shared_selection(counts + extra)
    return table


def _prior_rows(history, k):
    hist = np.asarray(history, dtype=np.float64).reshape(-1, k)
    return elfx_winner_matrix(hist) if hist.shape[0] else np.zeros((0, k))


def elfx_rule(history, num_experts: int, loss: LossFunction = QUADRATIC) -> NextWeightRule:
    """Exact next ELF-X distribution given the prior loss rows ``history``."""
    k = num_experts
    prior = _prior_rows(history, k)
    if (prior.shape[0] + 1) * math.log(k) > math.log(EXACT_BUDGET) + 1e-12:
        raise SizeError("exact winner enumeration exceeds 2^20")
    table = _selection_table(prior, k, 1)
    f = np.array([table[(x,)] for x in range(k)])

    def rule(reports, outcome):
        q = elfx_winner_matrix(loss(reports, float(outcome)))
        return q @ f

    return rule


def expected_weight(rule: NextWeightRule, reports: np.ndarray, expert: int,
                    belief: float) -> np.ndarray:
    """``b * pi_next(r=1)_i + (1-b) * pi_next(r=0)_i`` for each row of ``reports``."""
    return belief * rule(reports, 1)[:, expert] + (1.0 - belief) * rule(reports, 0)[:, expert]


def myopic_audit(rule: NextWeightRule, reports, expert: int, belief: float,
                 config: AuditConfig = AuditConfig(), name: str = "") -> AuditReport:
    """Best response of ``expert`` over the report grid, others fixed."""
    base = as_probabilities(reports).reshape(-1)
    if not 0 <= expert < base.shape[0]:
        raise DimensionError(f"expert {expert} out of range")
    belief = float(as_probabilities(belief, "belief"))
    grid = config.grid(include=[belief])
    profiles = np.tile(base, (grid.size, 1))
    profiles[:, expert] = grid
    values = expected_weight(rule, profiles, expert, belief)
    truthful_idx = int(np.flatnonzero(grid == belief)[0])
    return _report(values, truthful_idx, grid, config.tolerance, name,
                   {"expert": expert, "belief": belief})


def myopic_audit_beliefs(rule, reports, expert, config: AuditConfig = AuditConfig(),
                         name: str = "") -> AuditReport:
    """Worst case of :func:`myopic_audit` across the belief grid."""
    worst = None
    for b in config.beliefs():
        rep = myopic_audit(rule, reports, expert, b, config, name)
        if worst is None or rep.gap > worst.gap:
            worst = rep
    return worst


# -------------------------------------------------- forward-looking audits

class ForwardModel:
    """Batch state machine for forward audits."""

    num_experts: int

    def initial(self, n):
        raise NotImplementedError

    def step(self, state, reports, outcome):
        raise NotImplementedError

    def weight(self, state, expert):
        raise NotImplementedError

    def check_budget(self, depth):
        pass


class WSUForward(ForwardModel):
    def __init__(self, pi, eta, loss: LossFunction = QUADRATIC):
        self.pi0 = np.asarray(pi, dtype=np.float64)
        self.num_experts = self.pi0.shape[0]
        self.eta = eta
        self.loss = loss

    def initial(self, n):
        return np.tile(self.pi0, (n, 1))

    def step(self, state, reports, outcome):
        ell = self.loss(reports, float(outcome))
        avg = np.sum(state * ell, axis=1, keepdims=True)
        return state * (1.0 - self.eta * (ell - avg))

    def weight(self, state, expert):
        return state[:, expert]


class MWUForward(ForwardModel):
    def __init__(self, weights, eta, loss: LossFunction = QUADRATIC):
        self.w0 = np.asarray(weights, dtype=np.float64)
        self.num_experts = self.w0.shape[0]
        self.eta = eta
        self.loss = loss

    def initial(self, n):
        return np.tile(self.w0, (n, 1))

    def step(self, state, reports, outcome):
        return state * (1.0 - self.eta * self.loss(reports, float(outcome)))

    def weight(self, state, expert):
        return state[:, expert] / state.sum(axis=1)


class ELFXForward(ForwardModel):
    """ELF-X with fixed prior history; the state is the list of winner
    probability rows for the audited rounds."""

    def __init__(self, history, num_experts, loss: LossFunction = QUADRATIC):
        self.num_experts = num_experts
        self.prior = _prior_rows(history, num_experts)
        self.loss = loss
        self._tables = {}

    def check_budget(self, depth):
        k = self.num_experts
        rounds = self.prior.shape[0] + depth
        if depth * math.log(2) + rounds * math.log(k) > math.log(EXACT_BUDGET) + 1e-12:
            raise SizeError(f"2^{depth} outcome paths x {k}^{rounds} sequences exceeds 2^20")

    def initial(self, n):
        return []

    def step(self, state, reports, outcome):
        return state + [elfx_winner_matrix(self.loss(reports, float(outcome)))]

    def weight(self, state, expert):
        d = len(state)
        if d not in self._tables:
            self._tables[d] = _selection_table(self.prior, self.num_experts, d)
        total = 0.0
        for combo, sel in self._tables[d].items():
            p = sel[expert]
            for tau, x in enumerate(combo):
                p = p * state[tau][:, x]
            total = total + p
        return total


def _forward_values(model, beliefs, opponents, expert, candidates):
    d = len(beliefs)
    k = model.num_experts
    n = candidates.shape[0]
    total = np.zeros(n)
    for path in itertools.product((0, 1), repeat=d):
        prob = 1.0
        state = model.initial(n)
        for tau, r in enumerate(path):
            prob *= beliefs[tau] if r == 1 else 1.0 - beliefs[tau]
            profile = np.tile(opponents[tau], (n, 1)).reshape(n, k)
            profile[:, expert] = candidates[:, tau]
            state = model.step(state, profile, r)
        if prob:
            total = total + prob * model.weight(state, expert)
    return total


def forward_expected_weight(model: ForwardModel, beliefs, opponents, expert: int,
                            expert_reports) -> float:
    """Expected weight of ``expert`` after the audited rounds for one
    sequence of own reports; outcomes follow the expert's beliefs."""
    beliefs = as_probabilities(beliefs, "beliefs").reshape(-1)
    opponents = as_probabilities(opponents).reshape(len(beliefs), model.num_experts)
    cand = as_probabilities(expert_reports).reshape(1, -1)
    return float(_forward_values(model, beliefs, opponents, expert, cand)[0])


def forward_audit(model: ForwardModel, beliefs, opponents, expert: int,
                  config: AuditConfig = AuditConfig(), name: str = "") -> AuditReport:
    """Best deviation over the audited rounds.

    ``beliefs`` holds the expert's belief for each audited round and
    ``opponents`` the (depth, K) report matrix whose column ``expert`` is
    ignored. Depth 1 and 2 search the joint report grid; deeper audits
    search single-round deviations with truthful reports elsewhere.
    """
    beliefs = as_probabilities(beliefs, "beliefs").reshape(-1)
    d = beliefs.shape[0]
    if d < 1:
        raise ParameterError("need at least one audited round")
    opponents = as_probabilities(opponents).reshape(d, model.num_experts)
    model.check_budget(d)
    truthful = beliefs.copy()
    if d <= 2:
        grids = [config.grid(include=[b]) for b in beliefs]
        mesh = np.meshgrid(*grids, indexing="ij")
        candidates = np.stack([m.reshape(-1) for m in mesh], axis=1)
        truthful_idx = int(np.flatnonzero(np.all(candidates == truthful, axis=1))[0])
    else:
        rows = [truthful]
        for tau in range(d):
            for p in config.grid(include=[beliefs[tau]]):
                c = truthful.copy()
                c[tau] = p
                rows.append(c)
        candidates = np.array(rows)
        truthful_idx = 0
    values = _forward_values(model, beliefs, opponents, expert, candidates)
    return _report(values, truthful_idx, candidates, config.tolerance, name,
                   {"expert": expert, "beliefs": beliefs.tolist(), "depth": d})


# ------------------------------------------------------------ manipulations

def expected_next_weight_mwu(p, num_experts: int, eta: float):
    """Closed form of expert 1's expected MWU weight after one round from
    unit weights, opponents reporting 0, belief 0.5, quadratic loss."""
    k = num_experts
    if k < 2 or not 0 < eta < 1:
        raise ParameterError("need K >= 2 and 0 < eta < 1")
    p = np.asarray(p, dtype=np.float64)
    up = (1 - eta * (1 - p) ** 2) / (k - eta * (1 - p) ** 2 - eta * (k - 1))
    down = (1 - eta * p ** 2) / (k - eta * p ** 2)
    return 0.5 * up + 0.5 * down


def gd_expected_weight(p, pi: float, belief: float, eta: float):
    """Closed-form expected next weight under the aggregate-loss gradient
    step when every other expert reports 0."""
    p = np.asarray(p, dtype=np.float64)
    up = (pi + 2 * eta * p * (1 - pi * p)) / (1 + 2 * eta * p * (1 - pi * p))
    down = (pi - 2 * eta * p ** 2 * pi) / (1 - 2 * eta * p ** 2 * pi)
    return belief * up + (1 - belief) * down


def central_difference(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


def mwu_manipulation(num_experts=3, horizon=100, belief=0.5,
                     config: AuditConfig = AuditConfig()) -> AuditReport:
    """MWU from unit weights with every opponent reporting 0."""
    eta = math.sqrt(math.log(num_experts) / horizon)
    reports = np.zeros(num_experts)
    rep = myopic_audit(mwu_rule(np.ones(num_experts), eta), reports, 0, belief, config, "MWU")
    deriv = central_difference(lambda x: expected_next_weight_mwu(x, num_experts, eta), 0.5)
    return AuditReport(rep.truthful_value, rep.best_deviation_value, rep.best_deviation_reports,
                       rep.gap, rep.verdict, rep.algorithm,
                       dict(rep.details, eta=eta, K=num_experts, derivative_at_half=float(deriv)))


def gd_manipulation(num_experts=10, pi=0.1, belief=0.6, eta=0.1,
                    config: AuditConfig = AuditConfig()) -> AuditReport:
    """Gradient descent on the aggregate loss; opponents report 0 and the
    remaining mass is spread evenly."""
    w = np.full(num_experts, (1.0 - pi) / (num_experts - 1))
    w[0] = pi
    rule = gd_rule(w, eta)
    rep = myopic_audit(rule, np.zeros(num_experts), 0, belief, config, "GD")
    prof = np.zeros((2, num_experts))
    prof[:, 0] = [belief, 0.61]
    v = expected_weight(rule, prof, 0, belief)
    return AuditReport(rep.truthful_value, rep.best_deviation_value, rep.best_deviation_reports,
                       rep.gap, rep.verdict, rep.algorithm,
                       dict(rep.details, eta=eta, pi=pi, value_at_0_61=float(v[1]),
                            gain_at_0_61=float(v[1] - v[0])))


WSU_FORWARD_BELIEFS = (0.7, 0.6)
WSU_FORWARD_OPPONENTS = ((0.0, 0.4), (0.0, 0.0))
WSU_FORWARD_DEVIATION = (0.699, 0.6)


def wsu_forward_values(eta: float):
    """(truthful, deviating) expected weight of expert 1 at round 3 in the
    two-expert, two-round WSU example."""
    model = WSUForward(np.full(2, 0.5), eta)
    t = forward_expected_weight(model, WSU_FORWARD_BELIEFS, WSU_FORWARD_OPPONENTS, 0,
                                WSU_FORWARD_BELIEFS)
    d = forward_expected_weight(model, WSU_FORWARD_BELIEFS, WSU_FORWARD_OPPONENTS, 0,
                                WSU_FORWARD_DEVIATION)
    return t, d


def wsu_forward_manipulation(eta=0.2, config: AuditConfig = AuditConfig()) -> AuditReport:
    model = WSUForward(np.full(2, 0.5), eta)
    return forward_audit(model, WSU_FORWARD_BELIEFS, WSU_FORWARD_OPPONENTS, 0, config,
                         "WSU (forward)")


# ------------------------------------------------------- context files

def rule_from_context(ctx: dict, loss: LossFunction = QUADRATIC) -> NextWeightRule:
    """Build a next-weight rule from a plain mapping (as read from YAML).

    Keys: ``algorithm`` (WSU, MWU, Hedge, GD, WSU-UX, ELF-X) plus ``pi`` or
    ``weights``, ``eta``, ``gamma`` and ``history`` as the algorithm needs.
    """
    alg = str(ctx["algorithm"]).upper()
    k = len(ctx["reports"])
    if alg == "WSU":
        return wsu_rule(ctx.get("pi", np.full(k, 1.0 / k)), float(ctx["eta"]), loss)
    if alg == "MWU":
        return mwu_rule(ctx.get("weights", np.ones(k)), float(ctx["eta"]), loss)
    if alg == "HEDGE":
        return hedge_rule(ctx.get("weights", np.ones(k)), float(ctx["eta"]), loss)
    if alg == "GD":
        return gd_rule(ctx.get("pi", np.full(k, 1.0 / k)), float(ctx["eta"]))
    if alg == "WSU-UX":
        params = BanditParams(k, float(ctx["eta"]), float(ctx["gamma"]))
        return wsu_ux_rule(ctx.get("pi", np.full(k, 1.0 / k)), params, loss)
    if alg == "ELF-X":
        return elfx_rule(np.asarray(ctx.get("history", []), float).reshape(-1, k), k, loss)
    raise ParameterError(f"unknown algorithm {ctx['algorithm']!r}")


def model_from_context(ctx: dict, loss: LossFunction = QUADRATIC) -> ForwardModel:
    """Forward model for WSU, MWU or ELF-X from a plain mapping."""
    alg = str(ctx["algorithm"]).upper()
    k = int(ctx.get("num_experts", len(ctx["opponents"][0])))
    if alg == "WSU":
        return WSUForward(ctx.get("pi", np.full(k, 1.0 / k)), float(ctx["eta"]), loss)
    if alg == "MWU":
        return MWUForward(ctx.get("weights", np.ones(k)), float(ctx["eta"]), loss)
    if alg == "ELF-X":
        return ELFXForward(np.asarray(ctx.get("history", []), float).reshape(-1, k), k, loss)
    raise ParameterError(f"no forward model for {ctx['algorithm']!r}")


def audit_context(ctx: dict, config: AuditConfig = AuditConfig()) -> AuditReport:
    """Myopic audit, or a forward audit when ``beliefs`` lists several rounds."""
    name = str(ctx["algorithm"])
    expert = int(ctx.get("expert", 0))
    if "beliefs" in ctx:
        model = model_from_context(ctx)
        return forward_audit(model, ctx["beliefs"], ctx["opponents"], expert, config,
                             f"{name} (forward)")
    rule = rule_from_context(ctx)
    return myopic_audit(rule, ctx["reports"], expert, float(ctx["belief"]), config, name)


def builtin_examples(config: AuditConfig = AuditConfig()) -> list[AuditReport]:
    """The three built-in manipulation examples."""
    return [mwu_manipulation(config=config), gd_manipulation(config=config),
            wsu_forward_manipulation(config=config)]
