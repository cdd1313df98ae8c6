"""Aggregation of regret traces into mean and 20/80 percentile bands."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import RegretTrace
from ..errors import DimensionError, ParameterError

LOWER_PERCENTILE = 20.0
UPPER_PERCENTILE = 80.0


def jsonable(obj):
    """Plain JSON-native copy of nested metadata (tuples become lists)."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if obj is None or isinstance(obj, (str, bool, int, float)):
        return obj
    return str(obj)


def percentile_bands(regrets: np.ndarray):
    """Per-round mean, p20 and p80 of an ``(N, T)`` regret matrix.

    Percentiles interpolate linearly between order statistics.
    """
    regrets = np.asarray(regrets, dtype=np.float64)
    if regrets.ndim != 2 or regrets.shape[0] == 0:
        raise DimensionError("need a non-empty (traces, rounds) matrix")
    mean = regrets.mean(axis=0)
    p20, p80 = np.percentile(regrets, [LOWER_PERCENTILE, UPPER_PERCENTILE], axis=0,
                             method="linear")
    return mean, p20, p80


@dataclass(eq=False)
class TraceEnsemble:
    """Aggregated regret curves of one algorithm/mode series.

    ``regrets`` keeps the per-trace curves when available; an ensemble read
    back from JSON without per-trace data carries the aggregates only.
    """

    mean: np.ndarray
    p20: np.ndarray
    p80: np.ndarray
    metadata: dict = field(default_factory=dict)
    regrets: np.ndarray | None = None

    @classmethod
    def from_traces(cls, traces: Sequence[RegretTrace], metadata=None) -> "TraceEnsemble":
        if not traces:
            raise ParameterError("cannot aggregate an empty list of traces")
        lengths = {t.horizon for t in traces}
        if len(lengths) != 1:
            raise DimensionError(f"traces have differing horizons {sorted(lengths)}")
        regrets = np.stack([t.regret for t in traces])
        return cls.from_regrets(regrets, metadata)

    @classmethod
    def from_regrets(cls, regrets, metadata=None) -> "TraceEnsemble":
        regrets = np.asarray(regrets, dtype=np.float64)
        mean, p20, p80 = percentile_bands(regrets)
        meta = jsonable(dict(metadata or {}))
        meta.setdefault("num_traces", int(regrets.shape[0]))
        return cls(mean, p20, p80, meta, regrets)

    @property
    def horizon(self) -> int:
        return int(self.mean.shape[0])

    @property
    def num_traces(self) -> int:
        return int(self.metadata.get("num_traces", 0 if self.regrets is None
                                     else self.regrets.shape[0]))

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])

    def __len__(self):
        return self.horizon

    def __eq__(self, other):
        if not isinstance(other, TraceEnsemble):
            return NotImplemented
        same = (np.array_equal(self.mean, other.mean) and np.array_equal(self.p20, other.p20)
                and np.array_equal(self.p80, other.p80) and self.metadata == other.metadata)
        if self.regrets is None or other.regrets is None:
            return same and self.regrets is None and other.regrets is None
        return same and np.array_equal(self.regrets, other.regrets)
