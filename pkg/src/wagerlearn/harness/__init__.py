"""Ingestion, experiment orchestration, aggregation and output."""

from .bench import ALGORITHMS, Series, make_series, run_benchmark, run_series
from .data import IngestReport, PanelSource, RawSchema, import_raw, ingest_panel, sample_expert_groups
from .ensemble import TraceEnsemble, percentile_bands
from .output import emit_outputs, read_json
from .simulate import SimulationSpec, alternating_leader_panel, generate_panel, run_monte_carlo

__all__ = [
    "ALGORITHMS", "Series", "make_series", "run_benchmark", "run_series",
    "IngestReport", "PanelSource", "RawSchema", "import_raw", "ingest_panel",
    "sample_expert_groups", "TraceEnsemble", "percentile_bands", "emit_outputs", "read_json",
    "SimulationSpec", "alternating_leader_panel", "generate_panel", "run_monte_carlo",
]
