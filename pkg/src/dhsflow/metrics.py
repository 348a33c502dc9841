"""Heat-tracking errors and water/heat consumption of control traces."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty input")
    return a, b


def cumulative_error(qs, q_targets) -> float:
    """Sum of |Q - Q_target| over samples."""
    q, qt = _pair(qs, q_targets)
    return float(np.abs(q - qt).sum())


def average_reward(q1s, q2s, q_targets) -> float:
    """Mean two-sided absolute heat error per sample (lower is better)."""
    q1, qt = _pair(q1s, q_targets)
    q2, _ = _pair(q2s, q_targets)
    return float((np.abs(q1 - qt) + np.abs(q2 - qt)).sum() / (2 * q1.size))


def sample_hours(timestamps) -> np.ndarray:
    """Per-sample duration: the median spacing of the timestamps, in hours.

    The median ignores the gaps between non-adjacent test days.
    """
    ts = pd.DatetimeIndex(timestamps)
    if len(ts) < 2:
        return np.ones(len(ts))
    gaps = np.diff(ts.asi8) / 3.6e12
    gaps = gaps[gaps > 0]
    step = float(np.median(gaps)) if gaps.size else 1.0
    return np.full(len(ts), step)


def consumption_totals(trace: pd.DataFrame) -> dict:
    """Water (t) and heat (GJ) per side, summing rate x sample duration."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    dt = sample_hours(trace["timestamp"])
    return {
        "water_primary": float((trace["flow1"].to_numpy(float) * dt).sum()),
        "water_secondary": float((trace["flow2"].to_numpy(float) * dt).sum()),
        "heat_primary": float((trace["q1"].to_numpy(float) * dt).sum()),
        "heat_secondary": float((trace["q2"].to_numpy(float) * dt).sum()),
    }


def normalize_vs(trace: pd.DataFrame, baseline_trace: pd.DataFrame) -> dict:
    mine = consumption_totals(trace)
    base = consumption_totals(baseline_trace)
    out = {}
    for key, value in mine.items():
        if base[key] <= 0:
            raise ZeroDivisionError(f"baseline {key} is zero")
        out[key.replace("_", "_ratio_", 1)] = value / base[key]
    return out


def error_histogram(qs, q_targets, bins: int = 20):
    """Counts of signed errors Q - Q_target in ``bins`` equal bins over their range."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    q, qt = _pair(qs, q_targets)
    counts, edges = np.histogram(q - qt, bins=bins)
    return edges, counts


def mass_within(qs, q_targets, band: float) -> float:
    """Fraction of samples with |Q - Q_target| <= band."""
    q, qt = _pair(qs, q_targets)
    return float(np.mean(np.abs(q - qt) <= band))


@dataclass
class MetricsReport:
    controller: str
    n_samples: int
    ce_primary: float
    ce_secondary: float
    ar: float
    water_primary: float
    water_secondary: float
    heat_primary: float
    heat_secondary: float
    water_ratio_primary: float = 1.0
    water_ratio_secondary: float = 1.0
    heat_ratio_primary: float = 1.0
    heat_ratio_secondary: float = 1.0
    hist_edges_primary: list = field(default_factory=list)
    hist_counts_primary: list = field(default_factory=list)
    hist_edges_secondary: list = field(default_factory=list)
    hist_counts_secondary: list = field(default_factory=list)


def build_report(name: str, trace: pd.DataFrame, baseline: pd.DataFrame | None = None,
                 bins: int = 20) -> MetricsReport:
    q1, q2, qt = (trace[c].to_numpy(float) for c in ("q1", "q2", "q_target"))
    totals = consumption_totals(trace)
    ratios = normalize_vs(trace, baseline) if baseline is not None else {}
    e1, c1 = error_histogram(q1, qt, bins)
    e2, c2 = error_histogram(q2, qt, bins)
    return MetricsReport(
        controller=name, n_samples=len(trace),
        ce_primary=cumulative_error(q1, qt), ce_secondary=cumulative_error(q2, qt),
        ar=average_reward(q1, q2, qt), **totals, **ratios,
        hist_edges_primary=[float(v) for v in e1], hist_counts_primary=[int(v) for v in c1],
        hist_edges_secondary=[float(v) for v in e2],
        hist_counts_secondary=[int(v) for v in c2],
    )


_LIST_FIELDS = {"hist_edges_primary": float, "hist_counts_primary": int,
                "hist_edges_secondary": float, "hist_counts_secondary": int}


def write_reports(reports, path) -> None:
    names = [f.name for f in fields(MetricsReport)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in reports:
            row = []
            for n in names:
                v = getattr(r, n)
                if isinstance(v, list):
                    row.append(" ".join(repr(x) for x in v))
                elif isinstance(v, float):
                    row.append(repr(v))
                else:
                    row.append(str(v))
            w.writerow(row)


def read_reports(path) -> list:
    types = {f.name: f.type for f in fields(MetricsReport)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k, v in row.items():
                if k not in types:
                    raise KeyError(f"unknown report column {k!r}")
                if k in _LIST_FIELDS:
                    kw[k] = [_LIST_FIELDS[k](x) for x in v.split()]
                elif k == "controller":
                    kw[k] = v
                elif k == "n_samples":
                    kw[k] = int(v)
                else:
                    kw[k] = float(v)
            out.append(MetricsReport(**kw))
    return out


def write_histograms(reports, path) -> None:
    """Plot-ready long table: controller, side, bin_left, bin_right, count."""
    rows = []
    for r in reports:
        for side in ("primary", "secondary"):
            edges = getattr(r, f"hist_edges_{side}")
            counts = getattr(r, f"hist_counts_{side}")
            rows += [(r.controller, side, repr(edges[k]), repr(edges[k + 1]), counts[k])
                     for k in range(len(counts))]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["controller", "side", "bin_left", "bin_right", "count"])
        w.writerows(rows)
