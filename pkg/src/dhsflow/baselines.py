"""Comparison controllers: the weekly manual operator and the supervised flow regressors."""
from __future__ import annotations

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import day_index
from .env import action_to_controls, controls_to_action
from .plant import (PlantParams, StandardParams, pump_flow, pump_frequency,
                    steady_heat_batch, supply_temp_schedule, target_heat)
from .surrogate import MlpRegressor

_LEVELS = np.linspace(-1.0, 1.0, 401)


class SelectionError(ValueError):
    pass


def operator_level(plant: PlantParams, std: StandardParams, t_out: float) -> float:
    """Smallest common knob setting s (a0 = a1 = s) whose delivered heat meets the demand.

    The operator turns both knobs together and judges by the buildings' side (q2),
    with the primary supply read off the heat curve.  Returns 1.0 when even full
    flow falls short.
    """
    t1s = supply_temp_schedule(t_out)
    flow1, pump_f, _ = action_to_controls(np.column_stack([_LEVELS, _LEVELS]))
    q2 = steady_heat_batch(plant, t1s, flow1, pump_flow(pump_f, plant.pump_poly), t_out)[1]
    ok = np.nonzero(q2 >= target_heat(std, t_out))[0]
    return float(_LEVELS[ok[0]]) if ok.size else 1.0


def manual_baseline(dataset: pd.DataFrame, plant: PlantParams | None = None,
                    std: StandardParams | None = None) -> pd.DataFrame:
    """Piecewise-constant controls, re-set each 7-day week for that week's coldest reading."""
    plant = plant or PlantParams()
    std = std or StandardParams()
    week = day_index(dataset) // 7
    t_out = dataset["t_out"].to_numpy(float)
    level = np.empty(len(dataset))
    for w in np.unique(week):
        rows = week == w
        level[rows] = operator_level(plant, std, float(t_out[rows].min()))
    flow1, pump_f, _ = action_to_controls(np.column_stack([level, level]))
    return pd.DataFrame({"timestamp": dataset["timestamp"].to_numpy(),
                         "flow1": flow1, "pump_f": pump_f})


class ManualController(BaseEstimator):
    """Estimator face of :func:`manual_baseline`; nothing is learned."""

    def __init__(self, plant=None, std=None):
        self.plant = plant
        self.std = std

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def predict(self, X: pd.DataFrame) -> np.ndarray:
        trace = manual_baseline(X, self.plant, self.std)
        return trace[["flow1", "pump_f"]].to_numpy()


class JitteredOperator:
    """Manual controls plus Gaussian jitter in action space, for data collection.

    The jitter makes the records cover flows the operator rarely used.
    """

    def __init__(self, plant: PlantParams, std: StandardParams, sigma: float = 0.35, seed=0):
        self.plant = plant
        self.std = std
        self.sigma = sigma
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def __call__(self, frame: pd.DataFrame):
        base = manual_baseline(frame, self.plant, self.std)
        a = controls_to_action(base["flow1"].to_numpy(), base["pump_f"].to_numpy())
        a = np.clip(a + self.rng.normal(0.0, self.sigma, a.shape), -1.0, 1.0)
        flow1, pump_f, _ = action_to_controls(a)
        return flow1, pump_f


PRIMARY_INPUTS = ("t_out", "q_target", "t1_supply")
SECONDARY_INPUTS = ("t_out", "q_target", "swts", "flow1")


class SLController(BaseEstimator):
    """Flow regressors trained on the records whose heat was already close to demand.

    ``tol`` is the admissible |Q - Q_target| on both sides in GJ/h; ``None`` uses 5%
    of the mean demand.  At prediction time the secondary model reads the recorded
    secondary supply temperature of each row.
    """

    def __init__(self, tol=None, hidden_layers=(64, 64), steps=3000, min_samples=100,
                 plant=None, seed=0):
        self.tol = tol
        self.hidden_layers = hidden_layers
        self.steps = steps
        self.min_samples = min_samples
        self.plant = plant
        self.seed = seed

    def select(self, X: pd.DataFrame) -> pd.DataFrame:
        qt = X["q_target"].to_numpy(float)
        tol = 0.05 * qt.mean() if self.tol is None else self.tol
        near = (np.abs(X["q1"] - qt) <= tol) & (np.abs(X["q2"] - qt) <= tol)
        chosen = X.loc[near.to_numpy()]
        if len(chosen) < self.min_samples:
            raise SelectionError(f"only {len(chosen)} records within {tol:.3f} GJ/h of the "
                                 f"target (need {self.min_samples}); try a larger tol")
        return chosen

    def fit(self, X: pd.DataFrame, y=None):
        chosen = self.select(X)
        self.tol_ = 0.05 * X["q_target"].mean() if self.tol is None else self.tol
        self.n_selected_ = len(chosen)
        self.primary_ = MlpRegressor(self.hidden_layers, steps=self.steps, seed=self.seed)
        self.primary_.fit(chosen[list(PRIMARY_INPUTS)].to_numpy(float),
                          chosen["flow1"].to_numpy(float))
        self.secondary_ = MlpRegressor(self.hidden_layers, steps=self.steps,
                                       seed=self.seed + 1)
        self.secondary_.fit(chosen[list(SECONDARY_INPUTS)].to_numpy(float),
                            chosen["flow2"].to_numpy(float))
        return self

    def predict(self, X: pd.DataFrame) -> np.ndarray:
        check_is_fitted(self, "primary_")
        plant = self.plant or PlantParams()
        flow1 = np.clip(self.primary_.predict(X[list(PRIMARY_INPUTS)].to_numpy(float)),
                        10.0, 100.0)
        sec = X[list(SECONDARY_INPUTS)].to_numpy(float).copy()
        sec[:, 3] = flow1
        flow2 = self.secondary_.predict(sec)
        return np.column_stack([flow1, pump_frequency(flow2, plant.pump_poly)])

    def save(self, directory) -> None:
        from .surrogate import save_regressors

        check_is_fitted(self, "primary_")
        save_regressors({"primary": self.primary_, "secondary": self.secondary_}, directory,
                        "sl controller manifest v1",
                        {"algo": "sl", "tol": repr(float(self.tol_)),
                         "n_selected": str(self.n_selected_)})

    @classmethod
    def load(cls, directory, plant=None) -> "SLController":
        from .surrogate import load_regressors

        regs, kv = load_regressors(directory, ("primary", "secondary"))
        ctl = cls(tol=float(kv["tol"]), plant=plant)
        ctl.primary_, ctl.secondary_ = regs["primary"], regs["secondary"]
        ctl.tol_ = float(kv["tol"])
        ctl.n_selected_ = int(kv["n_selected"])
        return ctl


def fit_sl_controller(train_set: pd.DataFrame, tolerance=None, **kw):
    """Return ``(primary_net, secondary_net)`` regressors trained on near-target records."""
    ctl = SLController(tol=tolerance, **kw).fit(train_set)
    return ctl.primary_, ctl.secondary_
