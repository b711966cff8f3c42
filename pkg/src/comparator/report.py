"""Evaluation reports: assembly from scores and CSV / SVG / text emitters.

A report directory contains::

    report.json          full EvalReport
    report.txt           human-readable summary
    metrics.csv          one row per metric (and per correlation channel)
    table.csv            single comparison row (Accuracy, AUC, F1, rho/p per channel)
    progression.csv      per-subject progression slopes
    distribution_<g>.csv / .svg   score distribution per class or subscore level
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset
from .metrics import (
    SIGNIFICANCE_LEVEL,
    UndefinedCorrelationError,
    auc,
    bimodality_dip,
    confusion_at_threshold,
    f1_at_threshold,
    oracle_threshold_accuracy,
    progression_slopes,
    score_distribution_summary,
    spearman,
)

REPORT_NAME = "report.json"
TABLE_FIXED = ("System", "Accuracy", "AUC", "F1")


@dataclass
class EvalReport:
    system: str
    split: str
    n_samples: int
    n_subjects: int
    accuracy: float
    auc: float
    f1: float
    oracle_threshold: float
    degenerate: bool
    f1_degenerate: bool
    correlations: dict[str, dict] = field(default_factory=dict)
    progression: dict = field(default_factory=dict)
    distributions: dict[str, dict] = field(default_factory=dict)
    bimodality_dip: float = 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["oracle_threshold"] = _json_float(self.oracle_threshold)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["oracle_threshold"] = float(d["oracle_threshold"])
        return cls(**d)

    def table_row(self) -> dict:
        row = {"System": self.system, "Accuracy": self.accuracy, "AUC": self.auc, "F1": self.f1}
        for name, c in self.correlations.items():
            row[f"rho_{name}"] = c["rho"]
            row[f"p_{name}"] = c["p_value"]
        return row


def _json_float(v: float):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def _correlation(scores, labels) -> dict:
    try:
        rho, p = spearman(scores, labels)
    except (UndefinedCorrelationError, ValueError) as exc:
        return {"rho": None, "p_value": None, "n": int(len(scores)), "significant": False,
                "undefined": str(exc)}
    return {"rho": rho, "p_value": p, "n": int(len(scores)),
            "significant": bool(p < SIGNIFICANCE_LEVEL)}


def evaluate_scores(scores, dataset: Dataset, latent=None, system: str = "system",
                    split: str = "test", bins: int = 20) -> EvalReport:
    """Compute the full metric suite for frozen ``scores`` on ``dataset``.

    Correlations are against the *raw* label values of every integer-scale
    ordering, so a subscale where low values mean severe shows agreement as
    a negative rho.  ``latent`` (ground-truth severity, synthetic data only)
    adds a ``latent`` correlation entry.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != (len(dataset),):
        raise ValueError("one score per dataset sample is required")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores contain non-finite values")
    y = dataset.diagnosis_array()
    oracle = oracle_threshold_accuracy(s, y)
    conf = confusion_at_threshold(s, y, oracle.threshold)
    rep = EvalReport(
        system=system, split=split, n_samples=len(dataset), n_subjects=len(dataset.subjects),
        accuracy=oracle.accuracy, auc=auc(s, y),
        f1=f1_at_threshold(s, y, oracle.threshold), oracle_threshold=oracle.threshold,
        degenerate=oracle.degenerate, f1_degenerate=conf.tp + conf.fp == 0,
    )
    for o in dataset.orderings:
        if o.kind != "integer_scale":
            continue
        raw = dataset.raw_labels(o.name)
        mask = np.array([v is not None for v in raw])
        vals = np.array([v for v in raw if v is not None], dtype=np.float64)
        rep.correlations[o.name] = _correlation(s[mask], vals)
        rep.correlations[o.name]["direction"] = o.direction
    if latent is not None:
        lat = np.asarray(latent, dtype=np.float64)
        rep.correlations["latent"] = _correlation(s, lat)
        rep.correlations["latent"]["direction"] = "higher_is_more_severe"

    prog = progression_slopes(dataset.subject_array(), dataset.time_array(), s)
    per_subject = {
        sid: {"diagnosis": dataset.subjects[sid].diagnosis,
              "n_assessments": dataset.subjects[sid].n_assessments, "slope": slope}
        for sid, slope in prog.slopes.items()
    }
    summary = {}
    for dx in ("HC", "MND"):
        v = np.array([r["slope"] for r in per_subject.values() if r["diagnosis"] == dx])
        summary[dx] = ({"n": int(v.size), "median": float(np.median(v)),
                        "mean": float(v.mean()), "p10": float(np.percentile(v, 10)),
                        "p90": float(np.percentile(v, 90))}
                       if v.size else {"n": 0})
    rep.progression = {"subjects": per_subject, "skipped": prog.skipped, "summary": summary}

    dx_names = np.where(y == 1, "MND", "HC")
    by_class = score_distribution_summary(s, dx_names, bins, expected_groups=("HC", "MND"))
    rep.distributions["class"] = asdict(by_class)
    for o in dataset.orderings:
        if o.kind != "integer_scale":
            continue
        raw = dataset.raw_labels(o.name)
        mask = np.array([v is not None for v in raw])
        if not mask.any():
            continue
        levels = [v for v in raw if v is not None]
        expected = list(range(min(levels), max(levels) + 1))
        summ = score_distribution_summary(s[mask], levels, bins, expected_groups=expected)
        rep.distributions[o.name] = asdict(summ)
    rep.bimodality_dip = bimodality_dip(s, y, bins)
    return rep


# --------------------------------------------------------------------------
# emitters


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def table_csv(rows: Sequence[dict]) -> str:
    columns = list(TABLE_FIXED)
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    return _csv_text(columns, ([row.get(c) for c in columns] for row in rows))


def report_text(rep: EvalReport) -> str:
    lines = [
        f"system: {rep.system}",
        f"split: {rep.split} ({rep.n_samples} samples, {rep.n_subjects} subjects)",
        "",
        "classification",
        f"  accuracy  {rep.accuracy:.4f}  (oracle threshold {rep.oracle_threshold:.6g}"
        f"{', degenerate' if rep.degenerate else ''})",
        f"  AUC       {rep.auc:.4f}",
        f"  F1        {rep.f1:.4f}{'  (no positive predictions)' if rep.f1_degenerate else ''}",
        "",
        f"correlation (Spearman; * marks p < {SIGNIFICANCE_LEVEL})",
    ]
    for name, c in rep.correlations.items():
        if c["rho"] is None:
            lines.append(f"  {name:<10} undefined ({c['undefined']})")
        else:
            star = "*" if c["significant"] else " "
            lines.append(f"  {name:<10} rho {c['rho']:+.4f}{star} p {c['p_value']:.3g}"
                         f"  n={c['n']}  [{c['direction']}]")
    lines += ["", "progression (score units per day, per-subject OLS of assessment means)"]
    for dx, summ in rep.progression["summary"].items():
        if summ["n"]:
            lines.append(f"  {dx:<4} n={summ['n']:<3} median {summ['median']:+.3e}"
                         f"  p10 {summ['p10']:+.3e}  p90 {summ['p90']:+.3e}")
        else:
            lines.append(f"  {dx:<4} n=0")
    lines.append(f"  skipped (single assessment): {len(rep.progression['skipped'])}")
    lines += ["", f"bimodality dip between class medians: {rep.bimodality_dip:.3f}"]
    for key, dist in rep.distributions.items():
        lines.append(f"distribution by {key}:")
        for g, d in dist["groups"].items():
            lines.append(f"  {g:<5} n={d['count']:<5} median {d['median']:+.4f}"
                         f"  IQR [{d['q1']:+.4f}, {d['q3']:+.4f}]")
        if dist["omitted"]:
            lines.append(f"  omitted (empty): {', '.join(dist['omitted'])}")
    return "\n".join(lines) + "\n"


def distribution_csv(dist: dict) -> str:
    n_bins = len(dist["bin_edges"]) - 1
    header = ["group", "count", "min", "q1", "median", "q3", "max", "mean"]
    header += [f"bin_{k:02d}" for k in range(n_bins)]
    rows = []
    for g, d in dist["groups"].items():
        rows.append([g, d["count"], d["min"], d["q1"], d["median"], d["q3"], d["max"],
                     d["mean"], *d["histogram"]])
    for g in dist["omitted"]:
        rows.append([g, 0, *([None] * (6 + n_bins))])
    edges = "bin_edges," + ",".join(repr(float(e)) for e in dist["bin_edges"]) + "\n"
    return _csv_text(header, rows) + edges


def distribution_svg(dist: dict, title: str) -> str:
    """One histogram row per group with an overlaid quartile box."""
    width, left, right, row_h, top = 640, 90, 20, 70, 36
    groups = list(dist["groups"].items())
    height = top + row_h * max(len(groups), 1) + 30
    edges = dist["bin_edges"]
    lo, hi = edges[0], edges[-1]
    span = (hi - lo) or 1.0
    plot_w = width - left - right

    def xpos(v):
        return left + (v - lo) / span * plot_w

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">'
           f'{_escape(title)}</text>']
    for r, (name, d) in enumerate(groups):
        y0 = top + r * row_h
        base = y0 + row_h - 14
        peak = max(d["histogram"]) or 1
        out.append(f'<text x="{left - 8}" y="{base - 16:.1f}" text-anchor="end">'
                   f'{_escape(name)} (n={d["count"]})</text>')
        for k, c in enumerate(d["histogram"]):
            if not c:
                continue
            x0, x1 = xpos(edges[k]), xpos(edges[k + 1])
            h = (row_h - 24) * c / peak
            out.append(f'<rect x="{x0:.2f}" y="{base - h:.2f}" width="{max(x1 - x0 - 1, 0.5):.2f}" '
                       f'height="{h:.2f}" fill="#7fa7d1"/>')
        q1, med, q3 = xpos(d["q1"]), xpos(d["median"]), xpos(d["q3"])
        out.append(f'<rect x="{q1:.2f}" y="{base + 2:.2f}" width="{max(q3 - q1, 0.5):.2f}" '
                   f'height="6" fill="none" stroke="#333"/>')
        out.append(f'<line x1="{med:.2f}" x2="{med:.2f}" y1="{base:.2f}" y2="{base + 10:.2f}" '
                   f'stroke="#c0392b" stroke-width="2"/>')
    axis_y = top + row_h * max(len(groups), 1) + 4
    out.append(f'<line x1="{left}" x2="{width - right}" y1="{axis_y}" y2="{axis_y}" stroke="#333"/>')
    for v in np.linspace(lo, hi, 5):
        out.append(f'<text x="{xpos(v):.2f}" y="{axis_y + 14}" text-anchor="middle">{v:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_report(rep: EvalReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_NAME).write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
    (out / "report.txt").write_text(report_text(rep))
    rows = [("accuracy", "", rep.accuracy), ("auc", "", rep.auc), ("f1", "", rep.f1),
            ("oracle_threshold", "", rep.oracle_threshold), ("bimodality_dip", "", rep.bimodality_dip)]
    for name, c in rep.correlations.items():
        rows.append(("spearman_rho", name, c["rho"]))
        rows.append(("spearman_p", name, c["p_value"]))
    for dx, summ in rep.progression["summary"].items():
        if summ["n"]:
            rows.append(("progression_median_slope", dx, summ["median"]))
    (out / "metrics.csv").write_text(_csv_text(["metric", "channel", "value"], rows))
    (out / "table.csv").write_text(table_csv([rep.table_row()]))
    prog_rows = [(sid, r["diagnosis"], r["n_assessments"], r["slope"])
                 for sid, r in rep.progression["subjects"].items()]
    (out / "progression.csv").write_text(
        _csv_text(["subject_id", "diagnosis", "n_assessments", "slope_per_day"], prog_rows))
    for key, dist in rep.distributions.items():
        (out / f"distribution_{key}.csv").write_text(distribution_csv(dist))
        (out / f"distribution_{key}.svg").write_text(
            distribution_svg(dist, f"{rep.system}: score by {key}"))
    return out


def load_report(path) -> EvalReport:
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_NAME
    return EvalReport.from_dict(json.loads(path.read_text()))


def merge_reports(reports: Sequence[EvalReport], out_dir) -> Path:
    """Write the comparison table for several systems plus their SVGs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [rep.table_row() for rep in reports]
    (out / "comparison.csv").write_text(table_csv(rows))
    lines = []
    for rep in reports:
        corr = "  ".join(
            f"{name}={c['rho']:+.3f}{'*' if c['significant'] else ''}"
            if c["rho"] is not None else f"{name}=n/a"
            for name, c in rep.correlations.items())
        lines.append(f"{rep.system:<16} acc {rep.accuracy:.3f}  auc {rep.auc:.3f}  "
                     f"f1 {rep.f1:.3f}  {corr}")
    (out / "comparison.txt").write_text("\n".join(lines) + "\n")
    for rep in reports:
        safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in rep.system)
        for key, dist in rep.distributions.items():
            (out / f"{safe}_distribution_{key}.svg").write_text(
                distribution_svg(dist, f"{rep.system}: score by {key}"))
    return out
