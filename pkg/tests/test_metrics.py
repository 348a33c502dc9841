import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from dhsflow.metrics import (average_reward, build_report, consumption_totals, cumulative_error,
                             error_histogram, mass_within, normalize_vs, read_reports,
                             write_histograms, write_reports)

vals = st.lists(st.floats(-100, 100), min_size=1, max_size=30)


def trace(n=6, scale=1.0, gap_hours=0.5):
    ts = pd.Timestamp("2018-01-15") + pd.to_timedelta(np.arange(n) * gap_hours, unit="h")
    rng = np.random.default_rng(n)
    return pd.DataFrame({"timestamp": ts, "flow1": scale * rng.uniform(20, 80, n),
                         "pump_f": np.full(n, 35.0), "flow2": scale * rng.uniform(120, 280, n),
                         "q1": rng.uniform(2, 9, n), "q2": rng.uniform(2, 9, n),
                         "q_target": rng.uniform(2, 9, n)})


def test_ce_examples():
    assert cumulative_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert cumulative_error([1, 2, 3], [0, 0, 0]) == 6.0
    with pytest.raises(ValueError):
        cumulative_error([1, 2], [1])
    with pytest.raises(ValueError):
        cumulative_error([], [])


def test_ar_examples():
    assert average_reward([3], [3], [3]) == 0.0
    assert average_reward([4], [-6], [0]) == 5.0


@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50), st.floats(-50, 50)),
                min_size=1, max_size=30), st.floats(-100, 100))
def test_ar_identity_and_translation(rows, k):
    q1, q2, qt = (np.array(c) for c in zip(*rows))
    m = len(rows)
    ar = average_reward(q1, q2, qt)
    assert ar == pytest.approx((cumulative_error(q1, qt) + cumulative_error(q2, qt)) / (2 * m),
                               rel=1e-12, abs=1e-12)
    assert ar >= 0
    assert average_reward(q1 + k, q2 + k, qt + k) == pytest.approx(ar, rel=1e-9, abs=1e-9)


def test_totals_use_sampling_interval():
    t = trace(4)
    tot = consumption_totals(t)
    assert tot["water_primary"] == pytest.approx(t.flow1.sum() * 0.5)
    assert tot["heat_secondary"] == pytest.approx(t.q2.sum() * 0.5)
    split_days = pd.concat([t, t.assign(timestamp=t.timestamp + pd.Timedelta(days=8))])
    assert consumption_totals(split_days)["water_primary"] == pytest.approx(2 * tot["water_primary"])


def test_ratios():
    base = trace(8)
    same = normalize_vs(base, base)
    assert all(v == 1.0 for v in same.values())
    half = base.assign(flow1=base.flow1 / 2, flow2=base.flow2 / 2)
    ratios = normalize_vs(half, base)
    assert ratios["water_ratio_primary"] == pytest.approx(0.5)
    assert ratios["water_ratio_secondary"] == pytest.approx(0.5)
    with pytest.raises(ZeroDivisionError):
        normalize_vs(base, base.assign(flow1=0.0))


def test_histogram_cases():
    edges, counts = error_histogram([5, 5, 5], [5, 5, 5], bins=4)
    zero_bin = np.searchsorted(edges, 0.0, side="right") - 1
    assert counts[min(zero_bin, 3)] == 3
    e = np.array([-2.0, -1.0, 1.0, 2.0])
    edges, counts = error_histogram(e, np.zeros(4), bins=5)
    assert counts.tolist() == [1, 1, 0, 1, 1]
    assert counts.tolist() == counts[::-1].tolist()
    with pytest.raises(ValueError):
        error_histogram([1], [1], bins=0)


@given(vals, st.integers(1, 12))
def test_histogram_counts_everything(errors, bins):
    _, counts = error_histogram(np.array(errors), np.zeros(len(errors)), bins)
    assert counts.sum() == len(errors)


def test_mass_within():
    assert mass_within([0, 0.4, 2], [0, 0, 0], 0.5) == pytest.approx(2 / 3)


def test_report_fields_and_round_trip(tmp_path):
    base, other = trace(20), trace(20, scale=0.9)
    reports = [build_report("manual", base, base), build_report("ddpg", other, base, bins=7)]
    r = reports[1]
    assert r.ce_primary >= 0 and r.ar >= 0
    assert r.water_ratio_primary == pytest.approx(0.9)
    assert sum(r.hist_counts_primary) == 20 and len(r.hist_edges_primary) == 8
    path = tmp_path / "r.csv"
    write_reports(reports, path)
    assert read_reports(path) == reports
    write_reports(read_reports(path), tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()
    write_histograms(reports, tmp_path / "h.csv")
    hist = pd.read_csv(tmp_path / "h.csv")
    assert hist.groupby(["controller", "side"])["count"].sum().eq(20).all()


def test_report_rejects_unknown_column(tmp_path):
    path = tmp_path / "r.csv"
    write_reports([build_report("m", trace(), None)], path)
    df = pd.read_csv(path).assign(colour="red")
    df.to_csv(path, index=False)
    with pytest.raises(KeyError):
        read_reports(path)
