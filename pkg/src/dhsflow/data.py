"""Synthetic weather and operating records, interpolation, and day-based splits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.linalg import solve_banded

from .plant import (PlantParams, StandardParams, plant_steady_state, pump_flow,
                    supply_temp_schedule, target_heat)

START = pd.Timestamp("2018-01-15 00:00:00")
HOUR = pd.Timedelta(hours=1)
DAY = pd.Timedelta(days=1)

SAMPLE_COLUMNS = ["timestamp", "t_out", "t1_supply", "flow1", "flow2", "pump_f",
                  "tdp", "tds", "swts", "t2_return", "q1", "q2", "q_target"]


class InterpolationRangeError(ValueError):
    pass


@dataclass
class WeatherSeries:
    timestamps: pd.DatetimeIndex
    t_out: np.ndarray

    def __post_init__(self):
        if len(self.timestamps) != len(self.t_out):
            raise ValueError("timestamps and values differ in length")
        if len(self.timestamps) > 1 and not self.timestamps.is_monotonic_increasing:
            raise ValueError("timestamps must increase")

    @property
    def hours(self) -> np.ndarray:
        return (self.timestamps - self.timestamps[0]) / HOUR

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"timestamp": self.timestamps, "t_out": self.t_out})


def weather_trend(hours, days):
    """Seasonal drift from -18 degC to +5 degC over the span."""
    span = max(days * 24.0 - 1.0, 1.0)
    return -18.0 + 23.0 * np.asarray(hours, dtype=float) / span


def daily_cycle(hours):
    """Sinusoid of amplitude 4 degC with its minimum at 05:00."""
    return -4.0 * np.cos(2.0 * np.pi * (np.asarray(hours, dtype=float) - 5.0) / 24.0)


def gen_weather(days: int, seed=0, noise: bool = True, sigma: float = 1.5,
                rho: float = 0.9, start=START) -> WeatherSeries:
    if days < 1:
        raise ValueError("days must be >= 1")
    hours = np.arange(days * 24, dtype=float)
    values = weather_trend(hours, days) + daily_cycle(hours)
    if noise:
        rng = np.random.default_rng(seed)
        shocks = rng.normal(0.0, sigma * np.sqrt(1.0 - rho * rho), hours.size)
        ar = np.empty_like(shocks)
        ar[0] = rng.normal(0.0, sigma)
        for i in range(1, ar.size):
            ar[i] = rho * ar[i - 1] + shocks[i]
        values = values + ar
    values = np.clip(values, -35.0, 18.0)
    stamps = pd.DatetimeIndex(pd.Timestamp(start) + hours * HOUR)
    return WeatherSeries(stamps, values)


def _check_knots(xs, ys, min_knots):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise ValueError("xs and ys must be 1-D and of equal length")
    if xs.size < min_knots:
        raise ValueError(f"need at least {min_knots} knots")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("xs must be strictly increasing")
    return xs, ys


def _locate(xs, q):
    q = np.asarray(q, dtype=float)
    if np.any(q < xs[0]) or np.any(q > xs[-1]):
        raise InterpolationRangeError("query outside the knot range")
    idx = np.clip(np.searchsorted(xs, q, side="right") - 1, 0, xs.size - 2)
    return q, idx


def pchip_slopes(xs, ys):
    h = np.diff(xs)
    delta = np.diff(ys) / h
    n = xs.size
    d = np.zeros(n)
    if n == 2:
        d[:] = delta[0]
        return d
    w1 = 2.0 * h[1:] + h[:-1]
    w2 = h[1:] + 2.0 * h[:-1]
    same_sign = delta[:-1] * delta[1:] > 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        hm = (w1 + w2) / (w1 / delta[:-1] + w2 / delta[1:])
    d[1:-1] = np.where(same_sign, hm, 0.0)
    d[0] = _pchip_end(h[0], h[1], delta[0], delta[1])
    d[-1] = _pchip_end(h[-1], h[-2], delta[-1], delta[-2])
    return d


def _pchip_end(h0, h1, m0, m1):
    d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1)
    if np.sign(d) != np.sign(m0):
        return 0.0
    if np.sign(m0) != np.sign(m1) and abs(d) > abs(3.0 * m0):
        return 3.0 * m0
    return d


def _hermite(xs, ys, d, q, idx):
    h = xs[idx + 1] - xs[idx]
    t = (q - xs[idx]) / h
    t2, t3 = t * t, t * t * t
    return ((2 * t3 - 3 * t2 + 1) * ys[idx] + (t3 - 2 * t2 + t) * h * d[idx]
            + (-2 * t3 + 3 * t2) * ys[idx + 1] + (t3 - t2) * h * d[idx + 1])


def pchip(xs, ys, query_xs):
    """Shape-preserving piecewise cubic Hermite interpolation (harmonic-mean slopes)."""
    xs, ys = _check_knots(xs, ys, 2)
    q, idx = _locate(xs, query_xs)
    out = _hermite(xs, ys, pchip_slopes(xs, ys), q, idx)
    # each piece is monotone between its knots, so clipping only removes rounding
    out = np.clip(out, np.minimum(ys[idx], ys[idx + 1]), np.maximum(ys[idx], ys[idx + 1]))
    hit = xs[idx] == q
    out = np.where(hit, ys[idx], out)
    out = np.where(q == xs[-1], ys[-1], out)
    return out


def natural_spline_second_derivs(xs, ys):
    n = xs.size
    h = np.diff(xs)
    m = np.zeros(n)
    if n == 2:
        return m
    rhs = 6.0 * (np.diff(ys[1:]) / h[1:] - np.diff(ys[:-1]) / h[:-1])
    ab = np.zeros((3, n - 2))
    ab[0, 1:] = h[1:-1]
    ab[1, :] = 2.0 * (h[:-1] + h[1:])
    ab[2, :-1] = h[1:-1]
    m[1:-1] = solve_banded((1, 1), ab, rhs)
    return m


def cubic_spline(xs, ys, query_xs):
    """Natural cubic spline (zero second derivative at both ends)."""
    xs, ys = _check_knots(xs, ys, 3)
    q, idx = _locate(xs, query_xs)
    m = natural_spline_second_derivs(xs, ys)
    h = xs[idx + 1] - xs[idx]
    a = (xs[idx + 1] - q) / h
    b = (q - xs[idx]) / h
    out = (a * ys[idx] + b * ys[idx + 1]
           + ((a ** 3 - a) * m[idx] + (b ** 3 - b) * m[idx + 1]) * h * h / 6.0)
    hit = xs[idx] == q
    out = np.where(hit, ys[idx], out)
    out = np.where(q == xs[-1], ys[-1], out)
    return out


def sample_times(days: int, interval_minutes: float = 30.0, start=START, jitter: float = 0.0,
                 rng=None) -> pd.DatetimeIndex:
    """Regular sample times; ``jitter`` in [0, 1) delays each one by up to that fraction
    of the interval, which keeps the order and mimics uneven logging."""
    if not 0.0 <= jitter < 1.0:
        raise ValueError("jitter must lie in [0, 1)")
    n = int(round(days * 24 * 60 / interval_minutes))
    offsets = np.arange(n, dtype=float)
    if jitter > 0:
        offsets += np.random.default_rng(rng).uniform(0.0, jitter, n)
    return pd.DatetimeIndex(pd.Timestamp(start)
                            + pd.to_timedelta(offsets * interval_minutes * 60e9).round("s"))


def interpolate_weather(weather: WeatherSeries, times, method: str = "pchip") -> np.ndarray:
    """Outdoor temperature at ``times``; values past the last reading hold that reading."""
    knots = weather.hours.to_numpy(dtype=float)
    q = np.asarray((pd.DatetimeIndex(times) - weather.timestamps[0]) / HOUR, dtype=float)
    if np.any(q < knots[0]):
        raise InterpolationRangeError("sample time precedes the weather record")
    q = np.minimum(q, knots[-1])
    fn = pchip if method == "pchip" else cubic_spline
    return fn(knots, weather.t_out, q)


def gen_dataset(plant: PlantParams, std: StandardParams, weather: WeatherSeries,
                interval_minutes: float = 30.0, policy=None, seed=0,
                noise: bool = True, schedule_sigma: float = 2.0,
                interval_jitter: float = 0.0) -> pd.DataFrame:
    """Operating records for the span of ``weather``.

    ``policy(frame)`` receives a frame with ``timestamp``, ``t_out``, ``t1_supply``
    and ``q_target`` and returns ``(flow1, pump_f)`` arrays; by default it is the
    weekly manual operator with seeded jitter.  ``interval_jitter`` makes the
    sampling uneven (see :func:`sample_times`); the default keeps it fixed.
    """
    days = int(np.ceil(len(weather.t_out) / 24))
    rng = np.random.default_rng(seed)
    times = sample_times(days, interval_minutes, weather.timestamps[0], interval_jitter,
                         rng if interval_jitter > 0 else None)
    t_out = interpolate_weather(weather, times)
    t1s = supply_temp_schedule(t_out, rng if schedule_sigma > 0 else None, schedule_sigma)
    t1s = np.atleast_1d(t1s)
    ctx = pd.DataFrame({"timestamp": times, "t_out": t_out, "t1_supply": t1s,
                        "q_target": target_heat(std, t_out)})
    if policy is None:
        from .baselines import JitteredOperator
        policy = JitteredOperator(plant, std, seed=rng)
    flow1, pump_f = (np.asarray(v, dtype=float) for v in policy(ctx))
    flow2 = pump_flow(pump_f, plant.pump_poly)
    noisy = rng if noise else None
    rows = []
    guess = None
    for i in range(len(ctx)):
        s = plant_steady_state(plant, std, t1s[i], flow1[i], flow2[i], t_out[i],
                               rng=noisy, guess=guess)
        guess = s.t2_return
        rows.append((s.t1_supply, s.flow1, s.flow2, s.tdp, s.tds, s.t2_supply,
                     s.t2_return, s.q1, s.q2))
    arr = np.array(rows)
    df = pd.DataFrame({
        "timestamp": times, "t_out": t_out, "t1_supply": arr[:, 0],
        "flow1": arr[:, 1], "flow2": arr[:, 2], "pump_f": pump_f,
        "tdp": arr[:, 3], "tds": arr[:, 4], "swts": arr[:, 5], "t2_return": arr[:, 6],
        "q1": arr[:, 7], "q2": arr[:, 8], "q_target": target_heat(std, t_out),
    })
    return df[SAMPLE_COLUMNS]


def day_index(df: pd.DataFrame) -> np.ndarray:
    ts = pd.DatetimeIndex(df["timestamp"])
    origin = ts[0].normalize()
    return np.asarray((ts.normalize() - origin) // DAY, dtype=int)


def n_days(df: pd.DataFrame) -> int:
    return int(day_index(df).max()) + 1 if len(df) else 0


def split_7_1(df: pd.DataFrame, period: int = 8):
    """Seven training days then one test day, repeated."""
    if n_days(df) < period:
        raise ValueError(f"need at least {period} days for a 7+1 split")
    test = day_index(df) % period == period - 1
    return df.loc[~test].reset_index(drop=True), df.loc[test].reset_index(drop=True)


def rolling_windows(df: pd.DataFrame, window_days: int = 7):
    """Windows training on days [d, d+window-1] and testing on day d+window."""
    days = day_index(df)
    total = int(days.max()) + 1 if len(df) else 0
    if total < window_days + 1:
        raise ValueError(f"need at least {window_days + 1} days, got {total}")
    out = []
    for d in range(total - window_days):
        train = df.loc[(days >= d) & (days < d + window_days)].reset_index(drop=True)
        test = df.loc[days == d + window_days].reset_index(drop=True)
        out.append((train, test))
    return out


def write_dataset(df: pd.DataFrame, path) -> None:
    out = df.copy()
    out["timestamp"] = pd.DatetimeIndex(out["timestamp"]).strftime("%Y-%m-%dT%H:%M:%S")
    out.to_csv(path, index=False, float_format="%.17g")


def read_dataset(path) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in SAMPLE_COLUMNS if c not in df.columns]
    if missing:
        raise KeyError(f"{path}: missing columns {missing}")
    df["timestamp"] = pd.to_datetime(df["timestamp"])
    return df[SAMPLE_COLUMNS]


def write_weather(weather: WeatherSeries, path) -> None:
    write_dataset_like = weather.to_frame()
    write_dataset_like["timestamp"] = weather.timestamps.strftime("%Y-%m-%dT%H:%M:%S")
    write_dataset_like.to_csv(path, index=False, float_format="%.17g")
