"""Branch-flow imbalance in an apartment network and per-unit PID valve balancing."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .plant import WATER_C


class DeadNetworkError(ValueError):
    pass


@dataclass(frozen=True)
class UnitHydraulics:
    unit_id: str
    base_resistance: float
    radiator_ua: float
    t_indoor: float = 18.0

    def __post_init__(self):
        if self.base_resistance <= 0 or self.radiator_ua <= 0:
            raise ValueError("resistance and radiator_ua must be positive")


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.02
    ki: float = 0.01
    kd: float = 0.0
    out_min: float = 0.0
    out_max: float = 1.0
    sample_dt: float = 1.0

    def __post_init__(self):
        if self.out_min >= self.out_max:
            raise ValueError("output limits must be ordered")
        if self.sample_dt <= 0:
            raise ValueError("sample_dt must be positive")


@dataclass
class PidState:
    opening: float = 1.0
    integrator: float = 0.0
    e_prev: float = 0.0
    e_prev2: float = 0.0


@dataclass
class BalanceState:
    valve_openings: np.ndarray
    flows: np.ndarray
    return_temps: np.ndarray
    integrators: np.ndarray
    prev_errors: np.ndarray

    @property
    def spread(self) -> float:
        return float(self.return_temps.max() - self.return_temps.min())


def flow_split(valves, units, total_flow: float) -> np.ndarray:
    """Share ``total_flow`` in proportion to valve_i / sqrt(resistance_i)."""
    v = np.asarray(valves, dtype=float)
    r = np.array([u.base_resistance for u in units])
    g = v / np.sqrt(r)
    s = g.sum()
    if not s > 0:
        raise DeadNetworkError("all valves closed")
    return total_flow * g / s


def unit_return_temp(flow_i: float, t2_supply: float, unit: UnitHydraulics,
                     c: float = WATER_C) -> float:
    """Radiator outlet temperature where carried heat equals emitted heat."""
    if flow_i < 0:
        raise ValueError("flow must be non-negative")
    if flow_i == 0:
        return unit.t_indoor
    cf = c * flow_i
    half = 0.5 * unit.radiator_ua
    tr = (t2_supply * (cf - half) + unit.radiator_ua * unit.t_indoor) / (cf + half)
    return float(min(max(tr, unit.t_indoor), t2_supply))


def pid_step(gains: PidGains, setpoint: float, measured: float, state: PidState) -> PidState:
    """Velocity-form PID increment applied to the valve opening.

    The integral contribution is dropped whenever it would push a saturated
    output further into its limit.
    """
    dt = gains.sample_dt
    e = setpoint - measured
    p_term = gains.kp * (e - state.e_prev)
    i_term = gains.ki * e * dt
    d_term = gains.kd * (e - 2.0 * state.e_prev + state.e_prev2) / dt
    at_max = state.opening >= gains.out_max and i_term > 0
    at_min = state.opening <= gains.out_min and i_term < 0
    if at_max or at_min:
        i_term = 0.0
    opening = min(max(state.opening + p_term + i_term + d_term, gains.out_min), gains.out_max)
    return PidState(opening=opening, integrator=state.integrator + i_term,
                    e_prev=e, e_prev2=state.e_prev)


def valve_to_current(opening: float):
    """Actuator current (mA) for an opening fraction; returns ``(mA, clamped)``."""
    o = min(max(float(opening), 0.0), 1.0)
    return 4.0 + 16.0 * o, o != opening


def balance_sim(units, gains: PidGains, t2_supply: float, total_flow: float, steps: int,
                initial_opening: float = 1.0, c: float = WATER_C) -> list:
    """Closed-loop history; every unit tracks the current mean return temperature."""
    if len(units) < 2:
        raise ValueError("need at least two units")
    pids = [PidState(opening=initial_opening) for _ in units]
    history = []
    for _ in range(steps + 1):
        openings = np.array([s.opening for s in pids])
        flows = flow_split(openings, units, total_flow)
        temps = np.array([unit_return_temp(f, t2_supply, u, c) for f, u in zip(flows, units)])
        history.append(BalanceState(openings, flows, temps,
                                    np.array([s.integrator for s in pids]),
                                    np.array([s.e_prev for s in pids])))
        setpoint = float(temps.mean())
        pids = [pid_step(gains, setpoint, t, s) for t, s in zip(temps, pids)]
    return history


def history_frame(history, units) -> pd.DataFrame:
    rows = []
    for k, st in enumerate(history):
        row = {"step": k}
        for u, o, f, t in zip(units, st.valve_openings, st.flows, st.return_temps):
            row[f"opening_{u.unit_id}"] = o
            row[f"flow_{u.unit_id}"] = f
            row[f"return_{u.unit_id}"] = t
        row["spread"] = st.spread
        rows.append(row)
    return pd.DataFrame(rows)


def default_scenario(n_units: int = 8, radiator_ua: float = 0.03) -> list:
    """Units ordered from nearest to farthest, resistance 1 to 9."""
    res = np.linspace(1.0, 9.0, n_units)
    return [UnitHydraulics(f"u{i + 1}", float(r), radiator_ua) for i, r in enumerate(res)]


def read_scenario(path) -> list:
    """Whitespace table ``unit_id resistance radiator_ua [t_indoor]``; '#' starts a comment."""
    units = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        if line[0] == "unit_id":
            continue
        vals = [float(v) for v in line[1:]]
        units.append(UnitHydraulics(line[0], *vals))
    return units


def write_scenario(units, path) -> None:
    lines = ["unit_id resistance radiator_ua t_indoor"]
    lines += [f"{u.unit_id} {u.base_resistance!r} {u.radiator_ua!r} {u.t_indoor!r}"
              for u in units]
    Path(path).write_text("\n".join(lines) + "\n")
