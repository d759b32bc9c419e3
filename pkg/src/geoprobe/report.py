"""Static outputs for a sweep: results.csv, results.json, curves.csv and curves.svg."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .runner import CellResult, CurveResult

RESULTS_COLUMNS = (
    "scheme", "k_clusters", "featurizer", "n_requested", "n_train_effective", "seed",
    "lambda", "map", "ap_class0", "ap_class1", "ap_class2", "status", "reason",
)

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def result_row(r: CellResult) -> list[str]:
    ap = r.ap or [None, None, None]
    return [_fmt(v) for v in (
        r.scheme, r.k_clusters, r.featurizer, r.n_requested, r.n_train_effective, r.seed,
        r.lam, r.map, ap[0], ap[1], ap[2], r.status, r.reason,
    )]


def results_csv(result: CurveResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_COLUMNS)
    for r in result.rows:
        w.writerow(result_row(r))
    return buf.getvalue()


def curve_summary(result: CurveResult) -> list[dict]:
    """Median and min-max MAP across seeds for every (scheme, featurizer, n)."""
    out = []
    for fname in result.featurizers:
        for scheme in result.schemes:
            for n in result.sizes:
                vals = [r.map for r in result.ok_rows()
                        if r.scheme == scheme and r.featurizer == fname and r.n_requested == n]
                out.append({
                    "scheme": scheme, "featurizer": fname, "n": n, "n_seeds": len(vals),
                    "median": float(np.median(vals)) if vals else None,
                    "min": float(min(vals)) if vals else None,
                    "max": float(max(vals)) if vals else None,
                })
    return out


def class_summary(result: CurveResult) -> list[dict]:
    """Median per-class AP across seeds, for per-class bar charts."""
    out = []
    for fname in result.featurizers:
        for scheme in result.schemes:
            for n in result.sizes:
                aps = [r.ap for r in result.ok_rows()
                       if r.scheme == scheme and r.featurizer == fname and r.n_requested == n]
                if not aps:
                    continue
                med = np.median(np.array(aps), axis=0)
                out.append({"scheme": scheme, "featurizer": fname, "n": n,
                            "ap_class0": float(med[0]), "ap_class1": float(med[1]), "ap_class2": float(med[2])})
    return out


def curves_svg(result: CurveResult, panel_w: int = 360, panel_h: int = 260) -> str:
    """MAP vs n on a log axis: one panel per featurizer, one polyline per scheme.

    A scheme with infeasible sizes gets a shorter polyline. Min-max whiskers
    are drawn as vertical lines and the UAR reference as a dashed line.
    """
    summary = curve_summary(result)
    pad_l, pad_r, pad_t, pad_b = 48, 12, 28, 36
    width = panel_w * len(result.featurizers)
    legend_h = 18 * len(result.schemes) + 8
    height = panel_h + legend_h
    log_n = np.log10(np.array(result.sizes, dtype=float))
    lo, hi = float(log_n.min()), float(log_n.max())
    span = hi - lo or 1.0
    vals = [v for s in summary for v in (s["min"], s["max"]) if v is not None]
    if result.reference_map:
        vals += list(result.reference_map.values())
    y_lo = min(vals, default=0.0)
    y_hi = max(vals, default=1.0)
    if y_hi - y_lo < 1e-6:
        y_lo, y_hi = y_lo - 0.05, y_hi + 0.05

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">']
    for p, fname in enumerate(result.featurizers):
        x0 = p * panel_w
        pw, ph = panel_w - pad_l - pad_r, panel_h - pad_t - pad_b

        def sx(n, x0=x0, pw=pw):
            return x0 + pad_l + (np.log10(n) - lo) / span * pw

        def sy(v, ph=ph):
            return pad_t + (1 - (v - y_lo) / (y_hi - y_lo)) * ph

        parts.append(f'<g class="panel" data-featurizer="{escape(fname)}">')
        parts.append(f'<rect x="{x0 + pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="#999"/>')
        parts.append(f'<text x="{x0 + pad_l}" y="{pad_t - 10}">{escape(fname)}</text>')
        for n in result.sizes:
            parts.append(f'<text x="{sx(n):.1f}" y="{pad_t + ph + 14}" text-anchor="middle">{n}</text>')
        for frac in (0.0, 0.5, 1.0):
            v = y_lo + frac * (y_hi - y_lo)
            parts.append(f'<text x="{x0 + pad_l - 4}" y="{sy(v) + 4:.1f}" text-anchor="end">{v:.2f}</text>')
        parts.append(f'<text x="{x0 + pad_l + pw / 2}" y="{panel_h - 6}" text-anchor="middle">training samples</text>')
        for i, scheme in enumerate(result.schemes):
            color = _PALETTE[i % len(_PALETTE)]
            pts = [s for s in summary if s["featurizer"] == fname and s["scheme"] == scheme and s["median"] is not None]
            coords = " ".join(f"{sx(s['n']):.2f},{sy(s['median']):.2f}" for s in pts)
            parts.append(f'<polyline class="curve" data-scheme="{escape(scheme)}" data-featurizer="{escape(fname)}" '
                         f'fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
            for s in pts:
                parts.append(f'<line class="whisker" x1="{sx(s["n"]):.2f}" x2="{sx(s["n"]):.2f}" '
                             f'y1="{sy(s["min"]):.2f}" y2="{sy(s["max"]):.2f}" stroke="{color}"/>')
        if result.reference_map and fname in result.reference_map:
            yr = sy(result.reference_map[fname])
            parts.append(f'<line class="reference" x1="{x0 + pad_l}" x2="{x0 + pad_l + pw}" '
                         f'y1="{yr:.2f}" y2="{yr:.2f}" stroke="{_PALETTE[0]}" stroke-dasharray="6,4"/>')
        parts.append("</g>")
    for i, scheme in enumerate(result.schemes):
        y = panel_h + 14 + 18 * i
        color = _PALETTE[i % len(_PALETTE)]
        parts.append(f'<line x1="{pad_l}" x2="{pad_l + 24}" y1="{y - 4}" y2="{y - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{pad_l + 30}" y="{y}">{escape(scheme)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(result: CurveResult, out_dir: str | Path) -> dict[str, Path]:
    """Write every output file; returns their paths by name.

    Raises:
        ValueError: for an empty result.
        OSError: if the output directory cannot be written.
    """
    if not result.rows:
        raise ValueError("nothing to report: result has no rows")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out / "results.csv",
        "json": out / "results.json",
        "svg": out / "curves.svg",
        "curves": out / "curves.csv",
        "classes": out / "class_breakdown.csv",
    }
    paths["csv"].write_text(results_csv(result))
    paths["json"].write_text(json.dumps(result.to_dict(), indent=1))
    paths["svg"].write_text(curves_svg(result))
    for key, rows in (("curves", curve_summary(result)), ("classes", class_summary(result))):
        buf = io.StringIO()
        if rows:
            w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: _fmt(v) for k, v in row.items()})
        paths[key].write_text(buf.getvalue())
    return paths


def load_result(path: str | Path) -> CurveResult:
    return CurveResult.from_dict(json.loads(Path(path).read_text()))
