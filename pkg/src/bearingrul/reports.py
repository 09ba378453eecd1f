"""CSV, JSON and SVG artifacts for experiment results.

Everything here is a pure function of the fold results, so reports
regenerated from a saved ``results.json`` match the originals byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .labels import linear_labels
from .metrics import MetricReport, score

SUMMARY_HEADER = ("method", "bearing", "seed", "rmse", "mae", "score", "mon", "tend", "mad", "mv")
SUMMARY_NAME = "summary.csv"
RESULTS_NAME = "results.json"
_REPORT_FIELDS = ("rmse", "mae", "score", "monotonicity", "trendiness", "mad", "mv")


def _fmt(x) -> str:
    return repr(float(x))


def summary_rows(results) -> list:
    """One row per (bearing, seed); failed seeds are marked in every metric column."""
    rows = []
    for r in results:
        for seed in sorted(set(r.per_seed) | set(r.failures)):
            if seed in r.per_seed:
                rep = r.per_seed[seed]
                vals = [_fmt(getattr(rep, f)) for f in _REPORT_FIELDS]
            else:
                vals = ["failed"] * len(_REPORT_FIELDS)
            rows.append([r.method, r.bearing, str(seed), *vals])
    return rows


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def curve_rows(result) -> list:
    label, pred = result.label_curve, result.prediction_curve
    ref = linear_labels(len(label)).values
    return [[str(i), _fmt(a), _fmt(b), _fmt(c)] for i, (a, b, c) in enumerate(zip(label, pred, ref))]


def render_svg(title, series, width=640, height=320, pad=40) -> str:
    """Minimal line plot: one polyline per ``(name, values, colour)`` plus axes and a legend."""
    n = max(len(v) for _, v, _ in series)
    lo = min(float(np.min(v)) for _, v, _ in series)
    hi = max(float(np.max(v)) for _, v, _ in series)
    span = hi - lo or 1.0

    def xy(i, v):
        x = pad + (width - 2 * pad) * i / max(n - 1, 1)
        y = height - pad - (height - 2 * pad) * (v - lo) / span
        return f"{x:.2f},{y:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{pad / 2:.0f}" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{pad - 4}" y="{pad + 4}" text-anchor="end" font-size="10">{hi:.2f}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" text-anchor="end" font-size="10">{lo:.2f}</text>',
        f'<text x="{width - pad}" y="{height - pad + 14}" text-anchor="end" font-size="10">{n - 1}</text>',
    ]
    for k, (name, values, colour) in enumerate(series):
        pts = " ".join(xy(i, v) for i, v in enumerate(values))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{pts}"/>')
        ly = pad + 14 * (k + 1)
        parts.append(f'<text x="{width - pad - 4}" y="{ly}" text-anchor="end" font-size="11" fill="{colour}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def results_payload(results, config=None, extra=None) -> dict:
    folds = []
    for r in results:
        per_seed = {}
        for s in r.seeds:
            d = {f: getattr(r.per_seed[s], f) for f in _REPORT_FIELDS}
            d["mv_window"] = r.per_seed[s].mv_window
            # errors expressed in percent of life, an interpretation for comparing with published scores
            d["score_x100"] = score(100 * r.predictions[s], 100 * r.labels[s])
            per_seed[str(s)] = d
        mean = r.mean_report
        folds.append(
            {
                "bearing": r.bearing,
                "method": r.method,
                "per_seed": per_seed,
                "mean": None if mean is None else mean.as_dict(),
                "failures": {str(k): v for k, v in sorted(r.failures.items())},
                "labels": {str(s): r.labels[s].tolist() for s in r.seeds},
                "predictions": {str(s): r.predictions[s].tolist() for s in r.seeds},
                "raw_hi": {str(s): None if r.raw_hi.get(s) is None else r.raw_hi[s].tolist() for s in r.seeds},
                "provenance": {str(s): r.provenance.get(s) for s in r.seeds},
            }
        )
    payload = {"folds": folds}
    if config is not None:
        payload["config"] = config.to_dict() if hasattr(config, "to_dict") else config
    if extra:
        payload["extra"] = {k: {str(a): b for a, b in v.items()} if isinstance(v, dict) else v for k, v in extra.items()}
    return payload


def emit_reports(results, out_dir, config=None, extra=None) -> list:
    """Write the summary CSV, one curve CSV and one SVG per bearing, and ``results.json``."""
    results = list(results)
    if not results:
        raise ValueError("no results to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / SUMMARY_NAME]
    _write_csv(written[0], SUMMARY_HEADER, summary_rows(results))
    for r in results:
        if not r.per_seed:
            continue
        stem = f"curves_{r.method}_{r.bearing}"
        _write_csv(out / f"{stem}.csv", ("record_index", "label", "prediction", "linear"), curve_rows(r))
        label = r.label_curve
        svg = render_svg(
            f"{r.bearing} ({r.method})",
            [
                ("label", label, "#1f77b4"),
                ("prediction", r.prediction_curve, "#ff7f0e"),
                ("linear", linear_labels(len(label)).values, "#7f7f7f"),
            ],
        )
        (out / f"{stem}.svg").write_text(svg)
        written += [out / f"{stem}.csv", out / f"{stem}.svg"]
    path = out / RESULTS_NAME
    path.write_text(json.dumps(results_payload(results, config, extra), indent=1, sort_keys=True) + "\n")
    written.append(path)
    return written


def load_results(path):
    """``(fold results, config dict or None, extra dict or None)`` from a ``results.json``."""
    from .harness import FoldResult

    data = json.loads(Path(path).read_text())
    results = []
    for f in data["folds"]:
        r = FoldResult(f["bearing"], f["method"])
        for s, d in f["per_seed"].items():
            seed = int(s)
            r.per_seed[seed] = MetricReport(**{k: d[k] for k in _REPORT_FIELDS}, mv_window=d["mv_window"])
            r.labels[seed] = np.asarray(f["labels"][s])
            r.predictions[seed] = np.asarray(f["predictions"][s])
            raw = f["raw_hi"][s]
            r.raw_hi[seed] = None if raw is None else np.asarray(raw)
            r.provenance[seed] = f["provenance"][s]
        r.failures = {int(k): v for k, v in f["failures"].items()}
        results.append(r)
    return results, data.get("config"), data.get("extra")
