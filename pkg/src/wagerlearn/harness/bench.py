"""Experiment orchestration over (expert group x repetition) cells.

Every cell gets its own derived stream and every algorithm/mode pair a
fixed slot inside the cell, so results do not depend on which other
algorithms are run or on the number of worker processes.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..bandit import BanditAlgorithm, BanditParams, run_bandit
from ..core import QUADRATIC, ForecastPanel, LossFunction, RngStream, check_simplex
from ..errors import DimensionError, ParameterError, SimplexError
from ..full_info import Algorithm, PredictionMode, run_full_info
from .ensemble import TraceEnsemble

log = logging.getLogger(__name__)

FULL_INFO = tuple(a.value for a in Algorithm)
BANDIT = tuple(a.value for a in BanditAlgorithm)
ALGORITHMS = FULL_INFO + BANDIT
MODES = ("select", "aggregate", "bandit")
_SLOT = {name: i for i, name in enumerate(ALGORITHMS)}
_MODE_SLOT = {m: i for i, m in enumerate(MODES)}


@dataclass(frozen=True)
class Series:
    """One algorithm in one prediction mode, with optional parameter overrides."""

    algorithm: str
    mode: str
    params: tuple = ()

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ParameterError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        bandit = self.algorithm in BANDIT
        if bandit != (self.mode == "bandit") or self.mode not in MODES:
            raise ParameterError(f"mode {self.mode!r} does not fit {self.algorithm}")
        if isinstance(self.params, dict):
            object.__setattr__(self, "params", tuple(sorted(self.params.items())))

    @property
    def name(self) -> str:
        return f"{self.algorithm}/{self.mode}"

    @property
    def slot(self) -> int:
        return _SLOT[self.algorithm] * len(MODES) + _MODE_SLOT[self.mode]


def make_series(algorithms: Sequence[str], modes: Sequence[str] = ("select",),
                overrides: dict | None = None) -> list[Series]:
    """Cross algorithms with modes; bandit algorithms always run in bandit mode."""
    overrides = overrides or {}
    out = []
    for alg in algorithms:
        params = overrides.get(alg, {})
        if alg in BANDIT:
            out.append(Series(alg, "bandit", params))
        else:
            for m in modes:
                if m == "bandit":
                    continue
                out.append(Series(alg, m, params))
    seen = set()
    uniq = [s for s in out if not (s.name in seen or seen.add(s.name))]
    if not uniq:
        raise ParameterError("no algorithm/mode pairs selected")
    return uniq


def _validate(pis, what, series):
    if not check_simplex(pis):
        ok = np.array([check_simplex(row) for row in np.atleast_2d(pis)])
        bad = int(np.flatnonzero(~ok)[0]) + 1
        raise SimplexError(f"{series.name}: {what} at round {bad} is not a distribution")


def run_series(panel: ForecastPanel, series: Series, rng: RngStream,
               loss: LossFunction = QUADRATIC, validate: bool = True):
    """Run one series on one panel; returns the regret trace."""
    params = dict(series.params)
    if series.algorithm in BANDIT:
        alg = BanditAlgorithm(series.algorithm)
        bp = None
        if alg is BanditAlgorithm.WSU_UX and "eta" in params and "gamma" in params:
            bp = BanditParams(panel.num_experts, float(params["eta"]), float(params["gamma"]))
        run = run_bandit(panel, alg, params=bp, eta=params.get("eta"), rng=rng, loss=loss)
        if validate:
            _validate(run.pis, "pi", series)
            _validate(run.pi_tildes, "pi_tilde", series)
    else:
        kwargs = {k: params[k] for k in ("eta", "num_samples") if k in params}
        run = run_full_info(panel, Algorithm(series.algorithm), PredictionMode(series.mode),
                            rng=rng, loss=loss, **kwargs)
        if validate:
            _validate(run.pis, "pi", series)
    return run.trace


def run_cell(panel: ForecastPanel, series: Sequence[Series], cell: RngStream,
             loss: LossFunction = QUADRATIC, validate: bool = True) -> list[np.ndarray]:
    """All series on one panel with per-series streams derived from ``cell``."""
    return [run_series(panel, s, cell.derive(1, s.slot), loss, validate).regret for s in series]


def _cell_task(args):
    panel_fn, index, series, cell, loss, validate = args
    panel = panel_fn(index, cell)
    return run_cell(panel, series, cell, loss, validate)


@dataclass
class _FixedPanels:
    panels: tuple
    repetitions: int

    def __call__(self, index, cell):
        return self.panels[index // self.repetitions]


def run_cells(panel_fn: Callable, num_cells: int, series: Sequence[Series], rng: RngStream,
              loss: LossFunction = QUADRATIC, validate: bool = True, workers: int = 1,
              metadata: dict | None = None) -> dict[str, TraceEnsemble]:
    """Run every cell (optionally in worker processes) and reduce in cell order."""
    tasks = [(panel_fn, c, tuple(series), rng.derive(c), loss, validate)
             for c in range(num_cells)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_task, tasks))
    else:
        results = [_cell_task(t) for t in tasks]
    lengths = {r.shape[0] for res in results for r in res}
    if len(lengths) != 1:
        raise DimensionError(f"cells produced differing horizons {sorted(lengths)}")
    out = {}
    for j, s in enumerate(series):
        meta = dict(metadata or {}, algorithm=s.algorithm, mode=s.mode,
                    params={k: v for k, v in s.params}, seed=rng.seed, stream=rng.stream_id)
        out[s.name] = TraceEnsemble.from_regrets(np.stack([res[j] for res in results]), meta)
    return out


def run_benchmark(panels: Sequence[ForecastPanel], series: Sequence[Series], repetitions: int,
                  rng: RngStream, loss: LossFunction = QUADRATIC, validate: bool = True,
                  workers: int = 1) -> dict[str, TraceEnsemble]:
    """Each series on each panel ``repetitions`` times; one ensemble per series.

    Cell ``g * repetitions + r`` is group ``g``, repetition ``r``.
    """
    panels = tuple(panels)
    if not panels:
        raise ParameterError("no panels to benchmark")
    if repetitions < 1:
        raise ParameterError("repetitions must be positive")
    shapes = {(p.horizon, p.num_experts) for p in panels}
    if len({h for h, _ in shapes}) != 1:
        raise DimensionError("all panels must share a horizon")
    meta = {"kind": "benchmark", "num_groups": len(panels), "repetitions": repetitions,
            "K": panels[0].num_experts, "T": panels[0].horizon}
    return run_cells(_FixedPanels(panels, repetitions), len(panels) * repetitions, series,
                     rng, loss, validate, workers, meta)
