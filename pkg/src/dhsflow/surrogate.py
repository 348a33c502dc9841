"""Neural regressors for the station's temperature responses and the pump curve fit."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import neural
from .data import split_7_1
from .plant import WATER_C, pump_flow

# output -> ordered inputs, one model per measured quantity
MODEL_INPUTS = {
    "tdp": ("flow1", "flow2", "t1_supply"),
    "swts": ("t1_supply", "flow1", "flow2"),
    "tds": ("swts", "flow2", "t_out"),
}


class SchemaError(KeyError):
    pass


class MlpRegressor(RegressorMixin, BaseEstimator):
    """Dense network regressor trained with Adam on mini-batches of z-scored data.

    Parameters
    ----------
    hidden_layers : tuple of int
        Width of each hidden layer.
    activation : {"relu", "tanh"}
    steps : int
        Number of optimizer steps.
    batch_size : int
        Rows per step; the whole set is used when it is smaller.
    learning_rate : float
        Initial Adam step size, decayed by cosine annealing to 5% of its value.
    standardize : bool
        Z-score inputs and targets with training statistics.
    seed : int
    """

    def __init__(self, hidden_layers=(64, 64), activation="relu", steps=2000,
                 batch_size=64, learning_rate=1e-3, standardize=True, seed=0):
        self.hidden_layers = hidden_layers
        self.activation = activation
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.standardize = standardize
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, multi_output=True, y_numeric=True)
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        y2 = y.reshape(len(y), -1)
        self.n_features_in_ = X.shape[1]
        self._single_output = y.ndim == 1
        if self.standardize:
            self.x_mean_, self.x_scale_ = _moments(X)
            self.y_mean_, self.y_scale_ = _moments(y2)
        else:
            self.x_mean_, self.x_scale_ = np.zeros(X.shape[1]), np.ones(X.shape[1])
            self.y_mean_, self.y_scale_ = np.zeros(y2.shape[1]), np.ones(y2.shape[1])
        self.x_min_, self.x_max_ = X.min(axis=0), X.max(axis=0)
        xs = (X - self.x_mean_) / self.x_scale_
        ys = (y2 - self.y_mean_) / self.y_scale_
        rng = np.random.default_rng(self.seed)
        sizes = [X.shape[1], *self.hidden_layers, y2.shape[1]]
        self.net_ = neural.mlp_init(sizes, self.activation, "identity", seed=rng)
        opt = neural.OptimState.for_net(self.net_, self.learning_rate)
        n = len(xs)
        bs = min(self.batch_size, n)
        self.loss_curve_ = []
        for step in range(self.steps):
            opt.learning_rate = self.learning_rate * (
                0.05 + 0.95 * 0.5 * (1.0 + np.cos(np.pi * step / self.steps)))
            idx = rng.integers(0, n, bs) if bs < n else slice(None)
            loss, grads = neural.backward_mse(self.net_, xs[idx], ys[idx])
            neural.optim_step(self.net_, grads, opt)
            self.loss_curve_.append(loss)
        self.loss_ = self.loss_curve_[-1]
        return self

    def predict(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        out = neural.forward(self.net_, (X - self.x_mean_) / self.x_scale_)
        out = out * self.y_scale_ + self.y_mean_
        return out[:, 0] if self._single_output else out

    def outside_range(self, X, margin: float = 0.2) -> np.ndarray:
        """Rows with any feature beyond the training range widened by ``margin`` of its span."""
        check_is_fitted(self, "net_")
        X = np.asarray(X, dtype=float)
        span = self.x_max_ - self.x_min_
        lo, hi = self.x_min_ - margin * span, self.x_max_ + margin * span
        return np.any((X < lo) | (X > hi), axis=1)


def _moments(a):
    mean = a.mean(axis=0)
    scale = a.std(axis=0)
    return mean, np.where(scale > 0, scale, 1.0)


def _columns(df: pd.DataFrame, which: str):
    if which not in MODEL_INPUTS:
        raise ValueError(f"unknown surrogate {which!r}")
    cols = [*MODEL_INPUTS[which], which]
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise SchemaError(f"dataset lacks columns {missing} needed by {which}")
    return df[list(MODEL_INPUTS[which])].to_numpy(float), df[which].to_numpy(float)


def fit_surrogate(dataset: pd.DataFrame, which: str, arch=(4, 64), steps: int = 2000,
                  seed: int = 0, test: pd.DataFrame | None = None, **kw):
    """Train one model on the 7+1 training days and score it on the test days.

    Returns ``(regressor, mse, mae)``; the regressor's ``net_`` is the trained network.
    """
    if test is None:
        train, test = split_7_1(dataset)
    else:
        train = dataset
    X, y = _columns(train, which)
    Xt, yt = _columns(test, which)
    layers, nodes = arch
    reg = MlpRegressor(hidden_layers=(nodes,) * layers, steps=steps, seed=seed, **kw)
    reg.fit(X, y)
    mse, mae = neural.mse_mae(reg.predict(Xt), yt)
    return reg, mse, mae


@dataclass
class ArchSweepResult:
    rows: list = field(default_factory=list)  # (layers, nodes, final_loss, wall_time)
    chosen: int = 0
    cost_column: str = "wall_time"

    @property
    def chosen_arch(self):
        layers, nodes = self.rows[self.chosen][:2]
        return layers, nodes

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.rows,
                          columns=["layers", "nodes", "final_loss", self.cost_column])
        df["chosen"] = np.arange(len(df)) == self.chosen
        return df


def select_architecture(rows, time_budget: float = 1.5) -> int:
    """Lowest loss among entries no slower than ``time_budget`` x the fastest.

    Ties go to fewer nodes, then fewer layers.
    """
    if not rows:
        raise ValueError("empty sweep")
    fastest = min(r[3] for r in rows)
    ok = [i for i, r in enumerate(rows) if r[3] <= time_budget * fastest]
    return min(ok, key=lambda i: (rows[i][2], rows[i][1], rows[i][0]))


DEFAULT_GRID = [(layers, nodes) for layers in (2, 3, 4, 5) for nodes in (50, 100, 200, 300)]


def training_flops(reg: MlpRegressor, n_rows: int) -> float:
    """Multiply-adds of one fit (forward plus backward, about 3x forward), a clock-free cost."""
    per_row = sum(w.size for w in reg.net_.weights)
    return 3.0 * per_row * min(reg.batch_size, n_rows) * reg.steps


def arch_sweep(dataset: pd.DataFrame, which: str, grid=None, steps_per_arch: int = 2000,
               seed: int = 0, clock=time.perf_counter, timing: str = "wall") -> ArchSweepResult:
    """Train every (layers, nodes) of ``grid`` and pick one with :func:`select_architecture`.

    ``timing="flops"`` replaces wall-clock seconds by :func:`training_flops`, which makes
    the sweep and its choice reproducible across runs.
    """
    if timing not in ("wall", "flops"):
        raise ValueError("timing must be 'wall' or 'flops'")
    grid = list(DEFAULT_GRID if grid is None else grid)
    if not grid:
        raise ValueError("empty architecture grid")
    train, _ = split_7_1(dataset)
    X, y = _columns(train, which)
    rows = []
    for layers, nodes in grid:
        reg = MlpRegressor(hidden_layers=(nodes,) * layers, steps=steps_per_arch, seed=seed)
        t0 = clock()
        reg.fit(X, y)
        elapsed = clock() - t0 if timing == "wall" else training_flops(reg, len(X))
        final = float(np.mean(reg.loss_curve_[-max(1, steps_per_arch // 20):]))
        rows.append((layers, nodes, final, elapsed))
    return ArchSweepResult(rows, select_architecture(rows),
                           "wall_time" if timing == "wall" else "train_flops")


def fit_pump_poly(samples):
    """Least-squares quadratic ``flow = a2 f^2 + a1 f + a0`` through (f, flow) pairs."""
    arr = np.asarray(samples, dtype=float).reshape(-1, 2)
    f, flow = arr[:, 0], arr[:, 1]
    if np.unique(f).size < 3:
        raise np.linalg.LinAlgError("need at least three distinct frequencies")
    # centre and scale f for a well-conditioned Vandermonde matrix
    mu, s = f.mean(), f.std()
    z = (f - mu) / s
    A = np.stack([z * z, z, np.ones_like(z)], axis=1)
    b2, b1, b0 = np.linalg.lstsq(A, flow, rcond=None)[0]
    a2 = b2 / s ** 2
    a1 = b1 / s - 2.0 * b2 * mu / s ** 2
    a0 = b0 - b1 * mu / s + b2 * mu ** 2 / s ** 2
    return float(a2), float(a1), float(a0)


@dataclass
class QPrediction:
    q1: np.ndarray
    q2: np.ndarray
    flow2: np.ndarray
    tdp: np.ndarray
    tds: np.ndarray
    swts: np.ndarray
    extrapolated: np.ndarray

    @property
    def any_extrapolated(self) -> bool:
        return bool(np.any(self.extrapolated))


@dataclass
class SurrogateSet:
    tdp: MlpRegressor
    swts: MlpRegressor
    tds: MlpRegressor
    pump_coeffs: tuple
    c: float = WATER_C

    def models(self):
        return {"tdp": self.tdp, "swts": self.swts, "tds": self.tds}


def fit_surrogate_set(train: pd.DataFrame, arch=(4, 64), steps: int = 4000, seed: int = 0,
                      **kw) -> SurrogateSet:
    """Fit all three response models and the pump curve on ``train``."""
    regs = {}
    for k, which in enumerate(MODEL_INPUTS):
        X, y = _columns(train, which)
        layers, nodes = arch
        regs[which] = MlpRegressor(hidden_layers=(nodes,) * layers, steps=steps,
                                   seed=seed + k, **kw).fit(X, y)
    coeffs = fit_pump_poly(train[["pump_f", "flow2"]].to_numpy(float))
    return SurrogateSet(regs["tdp"], regs["swts"], regs["tds"], coeffs)


def predict_q(surro: SurrogateSet, t1_supply, t_out, flow1, pump_f) -> QPrediction:
    """Chain the models: pump -> flow2, then SWTS and TDP, then TDS from predicted SWTS."""
    t1s, to, f1, pf = np.broadcast_arrays(*(np.atleast_1d(np.asarray(a, dtype=float))
                                            for a in (t1_supply, t_out, flow1, pump_f)))
    flow2 = np.polyval(surro.pump_coeffs, pf)
    x_swts = np.column_stack([t1s, f1, flow2])
    x_tdp = np.column_stack([f1, flow2, t1s])
    swts = surro.swts.predict(x_swts)
    tdp = np.maximum(surro.tdp.predict(x_tdp), 0.0)
    x_tds = np.column_stack([swts, flow2, to])
    tds = np.maximum(surro.tds.predict(x_tds), 0.0)
    extrap = (surro.swts.outside_range(x_swts) | surro.tdp.outside_range(x_tdp)
              | surro.tds.outside_range(x_tds))
    return QPrediction(q1=surro.c * f1 * tdp, q2=surro.c * flow2 * tds, flow2=flow2,
                       tdp=tdp, tds=tds, swts=swts, extrapolated=extrap)


def _stats_lines(name, reg):
    lines = []
    for attr in ("x_mean_", "x_scale_", "x_min_", "x_max_", "y_mean_", "y_scale_"):
        vals = " ".join(repr(float(v)) for v in getattr(reg, attr))
        lines.append(f"{name}.{attr.rstrip('_')} = {vals}")
    return lines


def save_regressors(regs: dict, directory, header: str, extra: dict | None = None) -> None:
    """Write each fitted regressor as ``<name>.mlp`` plus its scaling in ``manifest.txt``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = [f"# {header}"] + [f"{k} = {v}" for k, v in (extra or {}).items()]
    for name, reg in regs.items():
        check_is_fitted(reg, "net_")
        neural.save_mlp(reg.net_, d / f"{name}.mlp")
        lines.extend(_stats_lines(name, reg))
    (d / "manifest.txt").write_text("\n".join(lines) + "\n")


def load_regressors(directory, names):
    """Inverse of :func:`save_regressors`; returns ``(regressors, manifest)``."""
    from .config import read_kv

    d = Path(directory)
    kv = read_kv(d / "manifest.txt")
    regs = {}
    for name in names:
        net = neural.load_mlp(d / f"{name}.mlp")
        reg = MlpRegressor(hidden_layers=tuple(net.layer_sizes[1:-1]),
                           activation=net.hidden_activation)
        reg.net_ = net
        reg.n_features_in_ = net.n_inputs
        reg._single_output = net.n_outputs == 1
        for attr in ("x_mean", "x_scale", "x_min", "x_max", "y_mean", "y_scale"):
            setattr(reg, attr + "_", np.array([float(v) for v in kv[f"{name}.{attr}"].split()]))
        regs[name] = reg
    return regs, kv


def save_surrogates(surro: SurrogateSet, directory) -> None:
    extra = {"pump_coeffs": " ".join(repr(float(v)) for v in surro.pump_coeffs),
             "c": repr(surro.c)}
    save_regressors(surro.models(), directory, "surrogate manifest v1", extra)


def load_surrogates(directory) -> SurrogateSet:
    regs, kv = load_regressors(directory, MODEL_INPUTS)
    coeffs = tuple(float(v) for v in kv["pump_coeffs"].split())
    return SurrogateSet(regs["tdp"], regs["swts"], regs["tds"], coeffs, float(kv["c"]))


__all__ = ["MlpRegressor", "MODEL_INPUTS", "SchemaError", "fit_surrogate", "arch_sweep",
           "ArchSweepResult", "select_architecture", "fit_pump_poly", "SurrogateSet",
           "fit_surrogate_set", "predict_q", "QPrediction", "save_surrogates",
           "load_surrogates", "save_regressors", "load_regressors", "pump_flow"]
