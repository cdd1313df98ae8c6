"""Panel ingestion: normalized CSV reader and a thin raw-format importer."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import ForecastPanel, RngStream
from ..errors import DataIntegrityError, EmptyPanelError, ParameterError, ParseError

log = logging.getLogger(__name__)

SCHEMA = ("event_id", "expert_id", "report", "outcome")


@dataclass(frozen=True)
class PanelSource:
    path: Path
    complete_only: bool = True

    def __post_init__(self):
        object.__setattr__(self, "path", Path(self.path))


@dataclass(frozen=True)
class IngestReport:
    num_rows: int
    num_events: int
    num_experts_seen: int
    dropped_experts: tuple = ()

    @property
    def num_dropped(self) -> int:
        return len(self.dropped_experts)


def _parse_report(text, line):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"report {text!r} is not a number", line) from None
    if not math.isfinite(value) or not 0.0 <= value <= 1.0:
        raise ParseError(f"report {value} outside [0, 1]", line)
    return value


def _parse_outcome(text, line):
    text = text.strip()
    if text not in ("0", "1"):
        raise ParseError(f"outcome {text!r} is not 0 or 1", line)
    return int(text)


def read_rows(path: Path):
    """Yield ``(line, event, expert, report, outcome)`` from a normalized CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("file is empty", 1)
        header = [h.strip() for h in header]
        missing = [c for c in SCHEMA if c not in header]
        if missing:
            raise ParseError(f"header lacks columns {missing}", 1)
        col = {c: header.index(c) for c in SCHEMA}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            event = row[col["event_id"]].strip()
            expert = row[col["expert_id"]].strip()
            if not event or not expert:
                raise ParseError("empty event_id or expert_id", line)
            yield (line, event, expert, _parse_report(row[col["report"]], line),
                   _parse_outcome(row[col["outcome"]], line))


def ingest_panel(source: PanelSource | str | Path):
    """Read a normalized panel CSV and keep only experts present in every event.

    Events and experts keep their order of first appearance. Returns
    ``(panel, IngestReport)``.
    """
    if not isinstance(source, PanelSource):
        source = PanelSource(source)
    events: dict[str, int] = {}
    outcomes: list[int] = []
    experts: dict[str, int] = {}
    cells: dict[tuple[int, int], float] = {}
    num_rows = 0
    for line, event, expert, report, outcome in read_rows(source.path):
        num_rows += 1
        e = events.setdefault(event, len(events))
        if e == len(outcomes):
            outcomes.append(outcome)
        elif outcomes[e] != outcome:
            raise DataIntegrityError(
                f"line {line}: event {event!r} has outcome {outcome} but earlier {outcomes[e]}")
        x = experts.setdefault(expert, len(experts))
        if (e, x) in cells:
            raise DataIntegrityError(
                f"line {line}: duplicate report by {expert!r} for event {event!r}")
        cells[(e, x)] = report

    T = len(events)
    if T == 0:
        raise EmptyPanelError(f"{source.path}: no data rows")
    grid = np.full((T, len(experts)), np.nan)
    for (e, x), v in cells.items():
        grid[e, x] = v
    complete = ~np.isnan(grid).any(axis=0)
    names = list(experts)
    if not source.complete_only and not complete.all():
        raise DataIntegrityError("panel has gaps and complete-panel filtering is disabled")
    dropped = tuple(n for n, keep in zip(names, complete) if not keep)
    if not complete.any():
        raise EmptyPanelError(f"{source.path}: no expert reported on all {T} events")
    kept = tuple(n for n, keep in zip(names, complete) if keep)
    panel = ForecastPanel(grid[:, complete], np.array(outcomes), expert_ids=kept)
    report = IngestReport(num_rows, T, len(names), dropped)
    log.info("ingested %s: T=%d, K=%d, dropped %d experts", source.path, T, len(kept),
             report.num_dropped)
    return panel, report


def write_panel(panel: ForecastPanel, path: Path, event_ids: Sequence[str] | None = None):
    """Write a panel in the normalized schema."""
    path = Path(path)
    ids = list(panel.expert_ids) or [f"e{i}" for i in range(panel.num_experts)]
    events = list(event_ids) if event_ids is not None else [f"t{t + 1}" for t in range(panel.horizon)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCHEMA)
        for t in range(panel.horizon):
            for i, name in enumerate(ids):
                w.writerow([events[t], name, repr(float(panel.reports[t, i])),
                            int(panel.outcomes[t])])


# ------------------------------------------------------------- raw import

@dataclass(frozen=True)
class RawSchema:
    """Column mapping for an upstream forecast export.

    The upstream layout is not documented, so every name is configurable.
    Event ids are built by joining ``event_columns`` with ``|``.
    ``percent`` reports are divided by 100. ``outcome_column`` may hold
    0/1 or a boolean-like string.
    """

    event_columns: tuple = ("game_id",)
    expert_column: str = "user_id"
    report_column: str = "forecast"
    outcome_column: str = "outcome"
    percent: bool = False

    @classmethod
    def from_mapping(cls, m: dict) -> "RawSchema":
        m = dict(m)
        if "event_columns" in m:
            cols = m["event_columns"]
            m["event_columns"] = (cols,) if isinstance(cols, str) else tuple(cols)
        unknown = set(m) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown raw schema keys {sorted(unknown)}")
        return cls(**m)


_TRUE = {"1", "true", "t", "yes", "y", "win", "won"}
_FALSE = {"0", "false", "f", "no", "n", "loss", "lost"}


def import_raw(path: Path, out_path: Path, schema: RawSchema = RawSchema()) -> int:
    """Convert a raw export to the normalized schema; returns rows written."""
    n = 0
    with open(path, newline="", encoding="utf-8") as fh, \
            open(out_path, "w", newline="", encoding="utf-8") as out:
        reader = csv.DictReader(fh)
        needed = [*schema.event_columns, schema.expert_column, schema.report_column,
                  schema.outcome_column]
        missing = [c for c in needed if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(f"raw header lacks columns {missing}", 1)
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(SCHEMA)
        for row in reader:
            line = reader.line_num
            event = "|".join(row[c].strip() for c in schema.event_columns)
            try:
                report = float(row[schema.report_column])
            except (TypeError, ValueError):
                raise ParseError(f"report {row[schema.report_column]!r} is not a number",
                                 line) from None
            if schema.percent:
                report /= 100.0
            flag = str(row[schema.outcome_column]).strip().lower()
            if flag in _TRUE:
                outcome = 1
            elif flag in _FALSE:
                outcome = 0
            else:
                raise ParseError(f"outcome {row[schema.outcome_column]!r} not recognised", line)
            _parse_report(repr(report), line)
            writer.writerow([event, row[schema.expert_column].strip(), repr(report), outcome])
            n += 1
    return n


# ---------------------------------------------------------- group sampling

def sample_expert_groups(panel: ForecastPanel, group_size: int, num_groups: int,
                         rng: RngStream) -> list[ForecastPanel]:
    """Independent uniform samples of ``group_size`` expert columns."""
    if not 1 <= group_size <= panel.num_experts:
        raise ParameterError(f"group size {group_size} not in 1..{panel.num_experts}")
    if num_groups < 1:
        raise ParameterError("num_groups must be positive")
    groups = []
    for g in range(num_groups):
        gen = rng.derive(g).generator()
        idx = gen.choice(panel.num_experts, size=group_size, replace=False)
        groups.append(panel.columns(idx))
    return groups
