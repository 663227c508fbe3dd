"""Result emission: summary/per-round CSVs, a JSON manifest, and SVG histograms."""

from __future__ import annotations

import csv
import io
import json
import math
import os

import numpy as np

from .. import __version__
from .config import RunConfig
from .runner import BenchmarkResult, CellFailure, ResultRow

__all__ = [
    "CSV_HEADER",
    "ROUNDS_HEADER",
    "MANIFEST_SCHEMA",
    "HIST_BINS",
    "HIST_RANGE",
    "format_float",
    "results_csv",
    "rounds_csv",
    "manifest_dict",
    "histogram_counts",
    "histogram_svg",
    "emit_report",
    "read_results_csv",
    "load_manifest",
]

CSV_HEADER = (
    "alpha", "lambda", "gsnr", "scheme", "method",
    "alpha_hat_mean", "gamma_g_hat_mean", "gamma_s_hat_mean", "seconds", "rounds",
)
ROUNDS_HEADER = (
    "alpha", "lambda", "gsnr", "scheme", "method", "round",
    "alpha_hat", "gamma_g_hat", "gamma_s_hat", "lambda_hat",
)
HIST_BINS = 30
HIST_RANGE = (0.5, 2.0)

_NUM_OR_NULL = {"type": ["number", "null"]}
MANIFEST_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "mixnoise benchmark manifest",
    "type": "object",
    "required": ["schema_version", "package_version", "config", "config_text", "rows", "failures"],
    "properties": {
        "schema_version": {"const": 1},
        "package_version": {"type": "string"},
        "config": {"type": "object", "required": ["seed", "rounds", "methods"]},
        "config_text": {"type": "string"},
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": [
                    "alpha", "lambda", "gsnr", "scheme", "method", "rounds", "seconds",
                    "alpha_hat_mean", "gamma_g_hat_mean", "gamma_s_hat_mean", "lambda_hat_mean",
                    "alpha_hats", "gamma_g_hats", "gamma_s_hats", "lambda_hats",
                ],
                "properties": {
                    "alpha": {"type": "number"},
                    "lambda": _NUM_OR_NULL,
                    "gsnr": _NUM_OR_NULL,
                    "scheme": {"enum": ["MSK", "QPSK", "QAM16"]},
                    "method": {"type": "string"},
                    "rounds": {"type": "integer", "minimum": 0},
                    "seconds": {"type": "number", "minimum": 0},
                    "alpha_hat_mean": _NUM_OR_NULL,
                    "gamma_g_hat_mean": _NUM_OR_NULL,
                    "gamma_s_hat_mean": _NUM_OR_NULL,
                    "lambda_hat_mean": _NUM_OR_NULL,
                    "alpha_hats": {"type": "array", "items": _NUM_OR_NULL},
                    "gamma_g_hats": {"type": "array", "items": _NUM_OR_NULL},
                    "gamma_s_hats": {"type": "array", "items": _NUM_OR_NULL},
                    "lambda_hats": {"type": "array", "items": _NUM_OR_NULL},
                },
            },
        },
        "failures": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["cell", "error"],
                "properties": {"cell": {"type": "array"}, "error": {"type": "string"}},
            },
        },
    },
}


def format_float(x) -> str:
    """Shortest round-trip text for a float (``inf``/``nan`` spelled out)."""
    return repr(float(x))


def _csv_text(header, records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(records)
    return buf.getvalue()


def results_csv(rows) -> str:
    return _csv_text(
        CSV_HEADER,
        [
            (
                format_float(r.alpha), format_float(r.lam), format_float(r.gsnr), r.scheme, r.method,
                format_float(r.alpha_hat_mean), format_float(r.gamma_g_hat_mean),
                format_float(r.gamma_s_hat_mean), format_float(r.seconds), r.rounds,
            )
            for r in rows
        ],
    )


def rounds_csv(rows) -> str:
    records = []
    for r in rows:
        for k in range(r.rounds):
            records.append(
                (
                    format_float(r.alpha), format_float(r.lam), format_float(r.gsnr), r.scheme,
                    r.method, k, format_float(r.alpha_hats[k]), format_float(r.gamma_g_hats[k]),
                    format_float(r.gamma_s_hats[k]), format_float(r.lambda_hats[k]),
                )
            )
    return _csv_text(ROUNDS_HEADER, records)


def _json_num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _sanitize(obj):
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float):
        return _json_num(obj)
    return obj


def manifest_dict(result: BenchmarkResult) -> dict:
    """JSON-ready manifest; non-finite numbers (e.g. ``lambda = inf``) become ``null``."""
    cfg = result.config
    config = _sanitize(cfg.as_dict())
    rows = []
    for r in result.rows:
        rows.append(
            {
                "alpha": r.alpha, "lambda": _json_num(r.lam), "gsnr": _json_num(r.gsnr),
                "scheme": r.scheme, "method": r.method, "rounds": r.rounds, "seconds": r.seconds,
                "alpha_hat_mean": _json_num(r.alpha_hat_mean),
                "gamma_g_hat_mean": _json_num(r.gamma_g_hat_mean),
                "gamma_s_hat_mean": _json_num(r.gamma_s_hat_mean),
                "lambda_hat_mean": _json_num(r.lambda_hat_mean),
                "alpha_hats": [_json_num(v) for v in r.alpha_hats],
                "gamma_g_hats": [_json_num(v) for v in r.gamma_g_hats],
                "gamma_s_hats": [_json_num(v) for v in r.gamma_s_hats],
                "lambda_hats": [_json_num(v) for v in r.lambda_hats],
            }
        )
    return {
        "schema_version": 1,
        "package_version": __version__,
        "config": config,
        "config_text": cfg.source_text,
        "rows": rows,
        "failures": [{"cell": list(f.cell), "error": f.error} for f in result.failures],
    }


def histogram_counts(values, bins=HIST_BINS, value_range=HIST_RANGE) -> np.ndarray:
    """Bin counts of finite values; values outside the range land in the edge bins."""
    v = np.asarray(values, dtype=np.float64)
    v = np.clip(v[np.isfinite(v)], *value_range)
    counts, _ = np.histogram(v, bins=bins, range=value_range)
    return counts


def histogram_svg(row: ResultRow, bins=HIST_BINS, value_range=HIST_RANGE) -> str:
    counts = histogram_counts(row.alpha_hats, bins, value_range)
    width, height, pad = 480, 240, 30
    bar_w = (width - 2 * pad) / bins
    top = max(int(counts.max()), 1)
    lo, hi = value_range
    truth_x = pad + (row.alpha - lo) / (hi - lo) * (width - 2 * pad)
    title = f"{row.scheme} alpha={row.alpha:g} lambda={row.lam:g} gsnr={row.gsnr:g} {row.method}"
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<title>{title}</title>',
        f'<text x="{pad}" y="16" font-size="12">{title}</text>',
    ]
    for i, c in enumerate(counts):
        h = (height - 2 * pad) * int(c) / top
        parts.append(
            f'<rect x="{pad + i * bar_w:.2f}" y="{height - pad - h:.2f}" width="{bar_w - 1:.2f}" '
            f'height="{h:.2f}" fill="#4a7ab0" data-count="{int(c)}"/>'
        )
    parts.append(
        f'<line x1="{truth_x:.2f}" y1="{pad}" x2="{truth_x:.2f}" y2="{height - pad}" '
        'stroke="#c03030" stroke-dasharray="4 2"/>'
    )
    parts.append(f'<text x="{pad}" y="{height - 8}" font-size="10">{lo:g}</text>')
    parts.append(f'<text x="{width - pad - 12}" y="{height - 8}" font-size="10">{hi:g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _hist_name(row: ResultRow) -> str:
    return f"hist_{row.scheme}_a{row.alpha:g}_l{row.lam:g}_g{row.gsnr:g}_{row.method}.svg"


def _write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def emit_report(result: BenchmarkResult, out_dir, formats=("csv", "json", "svg")) -> list:
    """Write the requested formats into ``out_dir`` and return the written paths."""
    if not result.rows:
        raise ValueError("nothing to report: the result has no rows")
    unknown = set(formats) - {"csv", "json", "svg"}
    if unknown:
        raise ValueError(f"unknown report formats {sorted(unknown)}")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "csv" in formats:
        for name, text in (("results.csv", results_csv(result.rows)), ("rounds.csv", rounds_csv(result.rows))):
            path = os.path.join(out_dir, name)
            _write(path, text)
            written.append(path)
    if "json" in formats:
        path = os.path.join(out_dir, "manifest.json")
        _write(path, json.dumps(manifest_dict(result), indent=2, sort_keys=True) + "\n")
        written.append(path)
    if "svg" in formats:
        hist_dir = os.path.join(out_dir, "histograms")
        os.makedirs(hist_dir, exist_ok=True)
        for row in result.rows:
            path = os.path.join(hist_dir, _hist_name(row))
            _write(path, histogram_svg(row))
            written.append(path)
    return written


def read_results_csv(path) -> list:
    """Parse a results CSV back into dicts with numeric fields converted."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        out = []
        for rec in reader:
            conv = {k: (v if k in ("scheme", "method") else float(v)) for k, v in rec.items()}
            conv["rounds"] = int(rec["rounds"])
            out.append(conv)
    return out


def _from_json(x):
    return math.nan if x is None else float(x)


def _config_from(config: dict, text: str) -> RunConfig:
    values = {}
    for key, value in config.items():
        if isinstance(value, list):
            value = tuple(math.inf if v is None else v for v in value)
        values[key] = value
    return RunConfig(**values, source_text=text)


def load_manifest(path) -> BenchmarkResult:
    """Rebuild a :class:`BenchmarkResult` from a manifest written by :func:`emit_report`."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("schema_version") != 1:
        raise ValueError(f"{path}: unsupported manifest schema")
    cfg = _config_from(data["config"], data["config_text"])
    rows = []
    for r in data["rows"]:
        lam = math.inf if r["lambda"] is None else r["lambda"]
        gsnr = math.inf if r["gsnr"] is None else r["gsnr"]
        rows.append(
            ResultRow(
                r["alpha"], lam, gsnr, r["scheme"], r["method"],
                [_from_json(v) for v in r["alpha_hats"]],
                [_from_json(v) for v in r["gamma_g_hats"]],
                [_from_json(v) for v in r["gamma_s_hats"]],
                [math.inf if v is None else float(v) for v in r["lambda_hats"]],
                r["seconds"],
            )
        )
    failures = [CellFailure(tuple(f["cell"]), f["error"]) for f in data["failures"]]
    return BenchmarkResult(cfg, rows, failures)
