"""Monte Carlo panels: grouped uniform beliefs and a piecewise Bernoulli outcome."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from ..core import QUADRATIC, ForecastPanel, LossFunction, RngStream
from ..errors import ParameterError
from .bench import Series, run_cells
from .ensemble import TraceEnsemble

DEFAULT_GROUP_LAWS = ((0.0, 0.7), (0.3, 1.0), (0.0, 1.0))


@dataclass(frozen=True)
class SimulationSpec:
    """Experts split into groups, each drawing a fresh Unif[lo, hi] belief
    every round and reporting it. Outcomes are Bern(rate_first_half) for
    0-based rounds ``t <= horizon / 2`` and Bern(rate_second_half) after.

    When ``num_experts`` is not a multiple of the group count, the extra
    experts join the last group (50 experts split 16/16/18). Set
    ``allow_remainder=False`` to demand equal groups instead.
    """

    num_experts: int = 50
    horizon: int = 2500
    repetitions: int = 50
    rate_first_half: float = 0.4
    rate_second_half: float = 0.6
    group_laws: tuple = DEFAULT_GROUP_LAWS
    allow_remainder: bool = True

    def __post_init__(self):
        laws = tuple(tuple(float(x) for x in law) for law in self.group_laws)
        object.__setattr__(self, "group_laws", laws)
        if self.num_experts < 1 or self.horizon < 1 or self.repetitions < 1:
            raise ParameterError("num_experts, horizon and repetitions must be positive")
        if not laws or any(len(l) != 2 or not 0 <= l[0] <= l[1] <= 1 for l in laws):
            raise ParameterError("group laws must be pairs 0 <= lo <= hi <= 1")
        for r in (self.rate_first_half, self.rate_second_half):
            if not 0 <= r <= 1:
                raise ParameterError("outcome rates must lie in [0, 1]")
        if self.num_experts < len(laws):
            raise ParameterError("need at least one expert per group")
        if self.num_experts % len(laws) and not self.allow_remainder:
            raise ParameterError(
                f"num_experts={self.num_experts} is not divisible by {len(laws)} groups; "
                "allow_remainder is off")

    @classmethod
    def from_mapping(cls, m: dict) -> "SimulationSpec":
        names = {f.name for f in fields(cls)}
        unknown = set(m) - names
        if unknown:
            raise ParameterError(f"unknown simulation keys {sorted(unknown)}")
        return cls(**m)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["group_laws"] = [list(l) for l in self.group_laws]
        return d

    def group_sizes(self) -> list[int]:
        g = len(self.group_laws)
        sizes = [self.num_experts // g] * g
        sizes[-1] += self.num_experts - sum(sizes)
        return sizes


def generate_panel(spec: SimulationSpec, rng: RngStream) -> ForecastPanel:
    """Draw one repetition: group partition, outcomes, then beliefs."""
    gen = rng.generator()
    k, T = spec.num_experts, spec.horizon
    perm = gen.permutation(k)
    lo = np.empty(k)
    hi = np.empty(k)
    start = 0
    for (a, b), size in zip(spec.group_laws, spec.group_sizes()):
        members = perm[start: start + size]
        lo[members], hi[members] = a, b
        start += size
    rates = np.where(np.arange(T) <= T / 2, spec.rate_first_half, spec.rate_second_half)
    outcomes = (gen.random(T) < rates).astype(np.int8)
    beliefs = lo + (hi - lo) * gen.random((T, k))
    return ForecastPanel(beliefs, outcomes)


@dataclass
class _SimPanels:
    spec: SimulationSpec

    def __call__(self, index, cell):
        return generate_panel(self.spec, cell.derive(0))


def run_monte_carlo(spec: SimulationSpec, series: Sequence[Series], rng: RngStream,
                    loss: LossFunction = QUADRATIC, validate: bool = True,
                    workers: int = 1) -> dict[str, TraceEnsemble]:
    """One fresh panel per repetition; every series runs on the same panel."""
    meta = {"kind": "monte_carlo", "spec": spec.as_dict(), "K": spec.num_experts,
            "T": spec.horizon, "repetitions": spec.repetitions}
    return run_cells(_SimPanels(spec), spec.repetitions, series, rng, loss, validate,
                     workers, meta)


def alternating_leader_panel(horizon: int) -> ForecastPanel:
    """Two experts stuck at 1 and 0 with outcomes 1, 0, 1, 0, ...

    The round winner is always the expert matching the outcome, so a
    win-count leader exists after every odd round and is then wrong.
    """
    if horizon < 1:
        raise ParameterError("horizon must be positive")
    reports = np.tile([1.0, 0.0], (horizon, 1))
    outcomes = (np.arange(horizon) % 2 == 0).astype(np.int8)
    return ForecastPanel(reports, outcomes)
