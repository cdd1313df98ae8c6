"""CSV, JSON and SVG emission for trace ensembles.

Floats are written with ``repr`` so JSON read back reproduces every value
bit for bit, and output bytes depend only on the ensembles.
"""

from __future__ import annotations

import csv
import io
import json
import re
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from ..errors import OutputError, ParameterError, ParseError
from .ensemble import TraceEnsemble, jsonable

FORMATS = ("csv", "json", "svg")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def safe_stem(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "series"


def _check(ensembles: Mapping[str, TraceEnsemble]):
    if not ensembles:
        raise ParameterError("nothing to emit: no ensembles")
    for name, ens in ensembles.items():
        if ens.horizon == 0:
            raise ParameterError(f"ensemble {name!r} has no rounds")


def write_text(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def csv_text(ensembles: Mapping[str, TraceEnsemble]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", "t", "statistic", "value"])
    for name, ens in ensembles.items():
        for t in range(ens.horizon):
            for stat, arr in (("mean", ens.mean), ("p20", ens.p20), ("p80", ens.p80)):
                w.writerow([name, t + 1, stat, repr(float(arr[t]))])
    return buf.getvalue()


def json_text(ens: TraceEnsemble, per_trace: bool = False) -> str:
    if per_trace and ens.regrets is None:
        raise ParameterError("ensemble carries no per-trace data")
    rounds = []
    for t in range(ens.horizon):
        row = {"t": t + 1, "mean": float(ens.mean[t]), "p20": float(ens.p20[t]),
               "p80": float(ens.p80[t])}
        if per_trace:
            row["per_trace"] = [float(x) for x in ens.regrets[:, t]]
        rounds.append(row)
    doc = {"metadata": jsonable(ens.metadata), "rounds": rounds}
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


def read_json(path) -> TraceEnsemble:
    """Inverse of :func:`json_text`."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from exc
    try:
        rounds = doc["rounds"]
        mean = np.array([r["mean"] for r in rounds], dtype=np.float64)
        p20 = np.array([r["p20"] for r in rounds], dtype=np.float64)
        p80 = np.array([r["p80"] for r in rounds], dtype=np.float64)
        regrets = None
        if rounds and "per_trace" in rounds[0]:
            regrets = np.array([r["per_trace"] for r in rounds], dtype=np.float64).T.copy()
        meta = doc["metadata"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: not an ensemble document ({exc})") from exc
    return TraceEnsemble(mean, p20, p80, meta, regrets)


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo, hi, n=5):
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def svg_text(ensembles: Mapping[str, TraceEnsemble], width: int = 800, height: int = 500,
             title: str = "Regret") -> str:
    """Regret-vs-round chart: mean line and shaded 20/80 band per series."""
    if width < 100 or height < 100:
        raise ParameterError("svg width and height must be at least 100")
    left, right, top, bottom = 70, 160, 40, 50
    pw, ph = width - left - right, height - top - bottom
    T = max(e.horizon for e in ensembles.values())
    ymin = min(0.0, *(float(e.p20.min()) for e in ensembles.values()),
               *(float(e.mean.min()) for e in ensembles.values()))
    ymax = max(0.0, *(float(e.p80.max()) for e in ensembles.values()),
               *(float(e.mean.max()) for e in ensembles.values()))
    if ymax - ymin < 1e-12:
        ymax = ymin + 1.0

    def sx(t):
        return left + (pw * (t - 1) / (T - 1) if T > 1 else pw / 2)

    def sy(v):
        return top + ph * (ymax - v) / (ymax - ymin)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
           f'{escape(title)}</text>']
    # axes and grid
    for v in _ticks(ymin, ymax):
        y = sy(v)
        out.append(f'<line x1="{left}" y1="{_fmt(y)}" x2="{left + pw}" y2="{_fmt(y)}" '
                   f'stroke="#e0e0e0"/>')
        out.append(f'<text x="{left - 6}" y="{_fmt(y + 4)}" text-anchor="end">{v:.3g}</text>')
    for v in _ticks(1, T):
        x = sx(v)
        out.append(f'<text x="{_fmt(x)}" y="{top + ph + 18}" text-anchor="middle">'
                   f'{int(round(v))}</text>')
    out.append(f'<line x1="{left}" y1="{_fmt(sy(0))}" x2="{left + pw}" y2="{_fmt(sy(0))}" '
               f'stroke="#999" stroke-dasharray="4 3"/>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" '
               f'stroke="black"/>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">'
               f'round t</text>')
    out.append(f'<text transform="translate(16 {top + ph / 2:.1f}) rotate(-90)" '
               f'text-anchor="middle">regret</text>')
    for n, (name, ens) in enumerate(ensembles.items()):
        color = PALETTE[n % len(PALETTE)]
        ts = np.arange(1, ens.horizon + 1)
        upper = " ".join(f"{_fmt(sx(t))},{_fmt(sy(v))}" for t, v in zip(ts, ens.p80))
        lower = " ".join(f"{_fmt(sx(t))},{_fmt(sy(v))}"
                         for t, v in zip(ts[::-1], ens.p20[::-1]))
        line = " ".join(f"{_fmt(sx(t))},{_fmt(sy(v))}" for t, v in zip(ts, ens.mean))
        out.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.18" '
                   f'stroke="none"/>')
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        ly = top + 14 + 18 * n
        lx = left + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="3"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_outputs(ensembles: Mapping[str, TraceEnsemble] | TraceEnsemble,
                 formats: Sequence[str], out_dir, stem: str = "ensemble",
                 per_trace: bool = False, width: int = 800, height: int = 500,
                 title: str = "Regret") -> list[Path]:
    """Write the requested formats; returns the paths written.

    CSV holds every series in one file, JSON is one file per series and
    the SVG overlays all series. Nothing is written if validation fails.
    """
    if isinstance(ensembles, TraceEnsemble):
        ensembles = {ensembles.metadata.get("algorithm", "series"): ensembles}
    _check(ensembles)
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise ParameterError(f"unknown output formats {bad}; choose from {FORMATS}")
    out_dir = Path(out_dir)
    docs = []
    if "csv" in formats:
        docs.append((out_dir / f"{stem}.csv", csv_text(ensembles)))
    if "json" in formats:
        for name, ens in ensembles.items():
            docs.append((out_dir / f"{stem}_{safe_stem(name)}.json", json_text(ens, per_trace)))
    if "svg" in formats:
        docs.append((out_dir / f"{stem}.svg", svg_text(ensembles, width, height, title)))
    for path, text in docs:
        write_text(path, text)
    return [p for p, _ in docs]
