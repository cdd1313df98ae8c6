"""Command line interface.

Subcommands: ``ingest``, ``simulate``, ``bench``, ``audit`` and ``plot``.
Settings come from an optional YAML file (``--config``); flags given on the
command line override it. ``WAGERLEARN_OUTPUT_DIR`` sets the default output
directory.

Exit codes: 0 success, 2 invalid parameters, 3 data integrity, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from ..audit import AuditConfig, audit_context, builtin_examples
from ..core import RngStream
from ..errors import DataIntegrityError, OutputError, WagerlearnError
from .bench import make_series, run_benchmark
from .data import PanelSource, RawSchema, import_raw, ingest_panel, sample_expert_groups
from .output import FORMATS, emit_outputs, read_json, svg_text, write_text
from .simulate import SimulationSpec, run_monte_carlo

log = logging.getLogger("wagerlearn")

OUTPUT_ENV = "WAGERLEARN_OUTPUT_DIR"
EXIT_OK, EXIT_PARAM, EXIT_DATA, EXIT_IO = 0, 2, 3, 4

_SPEC_FIELDS = set(SimulationSpec.__dataclass_fields__)


def bundled_path(name: str) -> Path:
    return Path(__file__).resolve().parent.parent / "data" / name


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        cfg = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise DataIntegrityError(f"{path}: invalid YAML ({exc})") from exc
    if not isinstance(cfg, dict):
        raise DataIntegrityError(f"{path}: top level must be a mapping")
    return cfg


def _merge(cfg: dict, args: argparse.Namespace, keys) -> dict:
    out = dict(cfg)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _out_dir(cfg):
    return Path(cfg.get("output_dir") or os.environ.get(OUTPUT_ENV) or "wagerlearn_out")


def _run_settings(cfg):
    algs = cfg.get("algorithms", ["WSU", "MWU"])
    modes = cfg.get("modes", ["select"])
    algs = _csv_list(algs) if isinstance(algs, str) else list(algs)
    modes = _csv_list(modes) if isinstance(modes, str) else list(modes)
    formats = cfg.get("formats", list(FORMATS))
    formats = _csv_list(formats) if isinstance(formats, str) else list(formats)
    series = make_series(algs, modes, cfg.get("params"))
    return series, formats


def _emit(ensembles, cfg, stem):
    _, formats = _run_settings(cfg)
    paths = emit_outputs(ensembles, formats, _out_dir(cfg), stem=stem,
                         per_trace=bool(cfg.get("per_trace", False)),
                         width=int(cfg.get("width", 800)), height=int(cfg.get("height", 500)))
    for name, ens in ensembles.items():
        print(f"{name:22s} final mean regret {ens.final_mean: .6f}  "
              f"(p20 {ens.p20[-1]: .6f}, p80 {ens.p80[-1]: .6f})")
    for p in paths:
        print(f"wrote {p}")


def cmd_ingest(args) -> int:
    cfg = _merge(load_config(args.config), args, ["schema"])
    if args.normalized:
        panel, report = ingest_panel(PanelSource(args.input))
    else:
        schema = RawSchema.from_mapping(cfg.get("schema") or {})
        out = Path(args.output) if args.output else _out_dir(cfg) / "panel.csv"
        out.parent.mkdir(parents=True, exist_ok=True)
        n = import_raw(Path(args.input), out, schema)
        print(f"wrote {n} rows to {out}")
        panel, report = ingest_panel(PanelSource(out))
    print(f"events T={panel.horizon}, complete experts K={panel.num_experts}, "
          f"dropped {report.num_dropped} of {report.num_experts_seen}")
    return EXIT_OK


_RUN_KEYS = ["algorithms", "modes", "formats", "seed", "workers", "output_dir", "per_trace",
             "width", "height"]


def cmd_simulate(args) -> int:
    cfg = _merge(load_config(args.config), args,
                 _RUN_KEYS + ["num_experts", "horizon", "repetitions", "allow_remainder"])
    spec = SimulationSpec.from_mapping({k: v for k, v in cfg.items() if k in _SPEC_FIELDS})
    series, _ = _run_settings(cfg)
    rng = RngStream(int(cfg.get("seed", 0)))
    ens = run_monte_carlo(spec, series, rng, workers=int(cfg.get("workers", 1)))
    _emit(ens, cfg, "simulate")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _merge(load_config(args.config), args,
                 _RUN_KEYS + ["panel", "group_size", "num_groups", "repetitions"])
    panel_path = cfg.get("panel") or bundled_path("synthetic_panel.csv")
    panel, report = ingest_panel(PanelSource(panel_path))
    rng = RngStream(int(cfg.get("seed", 0)))
    size = int(cfg.get("group_size", panel.num_experts))
    groups = sample_expert_groups(panel, size, int(cfg.get("num_groups", 1)), rng.derive(0))
    series, _ = _run_settings(cfg)
    ens = run_benchmark(groups, series, int(cfg.get("repetitions", 1)), rng.derive(1),
                        workers=int(cfg.get("workers", 1)))
    for e in ens.values():
        e.metadata.update(panel=str(panel_path), dropped_experts=report.num_dropped)
    _emit(ens, cfg, "bench")
    return EXIT_OK


def cmd_audit(args) -> int:
    cfg = _merge(load_config(args.context), args, ["report_grid_size", "tolerance"])
    conf_keys = {k: cfg[k] for k in ("report_grid_size", "belief_grid_size", "tolerance",
                                     "horizon_depth") if k in cfg}
    config = AuditConfig(**conf_keys)
    if args.context is None or args.examples:
        reports = builtin_examples(config)
    else:
        contexts = cfg.get("contexts", [cfg])
        reports = [audit_context(c, config) for c in contexts]
    print(f"{'algorithm':18s} {'verdict':11s} {'truthful':>14s} {'best':>14s} "
          f"{'gap':>11s}  best reports")
    for r in reports:
        rep = ", ".join(f"{x:.4g}" for x in r.best_deviation_reports)
        print(f"{r.algorithm:18s} {r.verdict.value:11s} {r.truthful_value:14.10f} "
              f"{r.best_deviation_value:14.10f} {r.gap:11.3e}  [{rep}]")
    if args.json:
        write_text(Path(args.json), json.dumps([r.as_dict() for r in reports], indent=1,
                                                sort_keys=True) + "\n")
        print(f"wrote {args.json}")
    return EXIT_OK


def cmd_plot(args) -> int:
    ensembles = {}
    for p in args.inputs:
        ens = read_json(p)
        name = "/".join(str(ens.metadata[k]) for k in ("algorithm", "mode")
                        if k in ens.metadata) or Path(p).stem
        ensembles[name] = ens
    out = Path(args.output) if args.output else _out_dir({}) / "plot.svg"
    write_text(out, svg_text(ensembles, args.width, args.height, args.title))
    print(f"wrote {out}")
    return EXIT_OK


def _run_flags(p):
    p.add_argument("--config", help="YAML settings file")
    p.add_argument("--algorithms", type=_csv_list, help="comma list, e.g. WSU,MWU,WSU-UX")
    p.add_argument("--modes", type=_csv_list, help="comma list of select,aggregate")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--formats", type=_csv_list, help="comma list of csv,json,svg")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--per-trace", dest="per_trace", action="store_const", const=True)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wagerlearn", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert a raw export to the normalized panel CSV")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--config", help="YAML file with a 'schema' column mapping")
    p.add_argument("--normalized", action="store_true",
                   help="input is already normalized; only validate and summarise")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("simulate", help="Monte Carlo regret experiment")
    _run_flags(p)
    p.add_argument("--num-experts", dest="num_experts", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--equal-groups", dest="allow_remainder", action="store_const",
                   const=False, help="reject expert counts not divisible by the group count")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="benchmark algorithms on a forecast panel")
    _run_flags(p)
    p.add_argument("--panel", help="normalized panel CSV (default: bundled synthetic panel)")
    p.add_argument("--group-size", dest="group_size", type=int)
    p.add_argument("--num-groups", dest="num_groups", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("audit", help="incentive audit of a context file or built-in examples")
    p.add_argument("context", nargs="?", help="YAML context file")
    p.add_argument("--examples", action="store_true", help="run the built-in examples")
    p.add_argument("--report-grid-size", dest="report_grid_size", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--json", help="also write the reports as JSON")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("plot", help="render ensemble JSON files to one SVG")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--output")
    p.add_argument("--width", type=int, default=800)
    p.add_argument("--height", type=int, default=500)
    p.add_argument("--title", default="Regret")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataIntegrityError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OutputError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (WagerlearnError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
