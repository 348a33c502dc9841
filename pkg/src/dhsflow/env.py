"""Dataset-driven control environment for the heat-exchange station.

The state sequence comes from the records (outdoor temperature, primary supply
temperature, demand); an action only changes the heat delivered at that step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .plant import (PlantParams, StandardParams, plant_steady_state, pump_flow,
                    steady_heat_batch)

FLOW1_MID, FLOW1_HALF = 55.0, 45.0
PUMP_MID, PUMP_HALF = 35.0, 15.0
OBS_COLUMNS = ("t_out", "t1_supply", "q_target")
REWARD_KINDS = ("q1", "q2", "q1q2")


class EpisodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class Observation:
    t_out: float
    t1_supply: float
    q_target: float

    def as_array(self) -> np.ndarray:
        return np.array([self.t_out, self.t1_supply, self.q_target])


@dataclass(frozen=True)
class Action:
    a0: float
    a1: float

    def __post_init__(self):
        if not (-1.0 <= self.a0 <= 1.0 and -1.0 <= self.a1 <= 1.0):
            raise ValueError("action components must lie in [-1, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.a0, self.a1])


@dataclass
class EnvConfig:
    reward_kind: str = "q1q2"
    episode_len: int = 500
    backend: str = "plant"  # or "surrogate"
    normalize_obs: bool = True

    def __post_init__(self):
        if self.reward_kind not in REWARD_KINDS:
            raise ValueError(f"reward_kind must be one of {REWARD_KINDS}")
        if self.episode_len < 1:
            raise ValueError("episode_len must be >= 1")
        if self.backend not in ("plant", "surrogate"):
            raise ValueError("backend must be 'plant' or 'surrogate'")


@dataclass
class StepResult:
    next_obs: Observation | None
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


def action_to_controls(a):
    """Map an action in [-1, 1]^2 to (flow1 t/h, pump Hz); out-of-range input is clipped.

    Returns ``(flow1, pump_f, clipped)``.
    """
    arr = np.asarray(a.as_array() if isinstance(a, Action) else a, dtype=float)
    clipped_arr = np.clip(arr, -1.0, 1.0)
    clipped = bool(np.any(clipped_arr != arr))
    flow1 = FLOW1_MID + FLOW1_HALF * clipped_arr[..., 0]
    pump_f = PUMP_MID + PUMP_HALF * clipped_arr[..., 1]
    return flow1, pump_f, clipped


def controls_to_action(flow1, pump_f) -> np.ndarray:
    a0 = (np.asarray(flow1, dtype=float) - FLOW1_MID) / FLOW1_HALF
    a1 = (np.asarray(pump_f, dtype=float) - PUMP_MID) / PUMP_HALF
    return np.clip(np.stack([a0, a1], axis=-1), -1.0, 1.0)


def reward(kind: str, q1, q2, q_target):
    e1 = np.abs(np.asarray(q1) - q_target)
    e2 = np.abs(np.asarray(q2) - q_target)
    if kind == "q1":
        r = -e1
    elif kind == "q2":
        r = -e2
    elif kind == "q1q2":
        r = -(e1 + e2) / 2.0
    else:
        raise ValueError(f"unknown reward kind {kind!r}")
    return float(r) if np.ndim(r) == 0 else r


class HeatingEnv:
    """Episodes of ``episode_len`` consecutive records from ``dataset``.

    ``obs_stats`` fixes the (mean, scale) used by :meth:`encode`; by default the
    statistics of ``dataset`` itself, which should then be the training records.
    """

    def __init__(self, dataset: pd.DataFrame, config: EnvConfig | None = None,
                 plant: PlantParams | None = None, std: StandardParams | None = None,
                 surrogates=None, obs_stats=None):
        self.config = config or EnvConfig()
        self.dataset = dataset.reset_index(drop=True)
        self.plant = (plant or PlantParams()).without_noise()
        self.std = std or StandardParams()
        self.surrogates = surrogates
        if self.config.backend == "surrogate" and surrogates is None:
            raise ValueError("surrogate backend needs a SurrogateSet")
        self.obs = self.dataset[list(OBS_COLUMNS)].to_numpy(float)
        if obs_stats is None:
            mean, scale = self.obs.mean(axis=0), self.obs.std(axis=0)
            obs_stats = (mean, np.where(scale > 0, scale, 1.0))
        self.obs_mean, self.obs_scale = (np.asarray(v, dtype=float) for v in obs_stats)
        self._cursor = None
        self._t = 0
        self._end = 0

    def __len__(self):
        return len(self.obs)

    def encode(self, obs) -> np.ndarray:
        x = obs.as_array() if isinstance(obs, Observation) else np.asarray(obs, dtype=float)
        if not self.config.normalize_obs:
            return x
        return (x - self.obs_mean) / self.obs_scale

    def observation(self, index: int) -> Observation:
        return Observation(*(float(v) for v in self.obs[index]))

    def reset(self, episode_start: int = 0, seed=None) -> Observation:
        n = self.config.episode_len
        if episode_start < 0 or episode_start + n > len(self.obs):
            raise IndexError(f"episode [{episode_start}, {episode_start + n}) outside "
                             f"{len(self.obs)} records")
        self._cursor = episode_start
        self._t = 0
        return self.observation(episode_start)

    def heat(self, index: int, flow1: float, pump_f: float):
        t_out, t1s, _ = self.obs[index]
        if self.config.backend == "surrogate":
            from .surrogate import predict_q

            p = predict_q(self.surrogates, t1s, t_out, flow1, pump_f)
            return float(p.q1[0]), float(p.q2[0]), float(p.flow2[0])
        flow2 = pump_flow(pump_f, self.plant.pump_poly)
        s = plant_steady_state(self.plant, self.std, t1s, flow1, flow2, t_out)
        return s.q1, s.q2, flow2

    def step(self, a) -> StepResult:
        if self._cursor is None:
            raise EpisodeError("step() called outside an active episode")
        flow1, pump_f, clipped = action_to_controls(a)
        flow1, pump_f = float(flow1), float(pump_f)
        i = self._cursor
        q1, q2, flow2 = self.heat(i, flow1, pump_f)
        qt = float(self.obs[i, 2])
        r = reward(self.config.reward_kind, q1, q2, qt)
        self._t += 1
        done = self._t >= self.config.episode_len
        if done:
            self._cursor = None
            nxt = self.observation(i + 1) if i + 1 < len(self.obs) else None
        else:
            self._cursor = i + 1
            nxt = self.observation(i + 1)
        info = {"q1": q1, "q2": q2, "q_target": qt, "flow1": flow1, "flow2": flow2,
                "pump_f": pump_f, "clipped": clipped, "index": i}
        return StepResult(nxt, r, done, info)


def evaluate_controls(dataset: pd.DataFrame, flow1, pump_f, plant: PlantParams | None = None,
                      surrogates=None) -> pd.DataFrame:
    """Noise-free heat delivered for per-row controls, as a control trace frame."""
    plant = plant or PlantParams()
    flow1 = np.asarray(flow1, dtype=float)
    pump_f = np.asarray(pump_f, dtype=float)
    t1s = dataset["t1_supply"].to_numpy(float)
    t_out = dataset["t_out"].to_numpy(float)
    if surrogates is not None:
        from .surrogate import predict_q

        p = predict_q(surrogates, t1s, t_out, flow1, pump_f)
        q1, q2, flow2 = p.q1, p.q2, p.flow2
    else:
        flow2 = pump_flow(pump_f, plant.pump_poly)
        q1, q2, _, _ = steady_heat_batch(plant, t1s, flow1, flow2, t_out)
    return pd.DataFrame({
        "timestamp": dataset["timestamp"].to_numpy(), "flow1": flow1, "pump_f": pump_f,
        "flow2": flow2, "q1": q1, "q2": q2,
        "q_target": dataset["q_target"].to_numpy(float),
    })


def rollout_trace(env: HeatingEnv, policy, episode_start: int = 0) -> pd.DataFrame:
    """Run one episode with ``policy(obs) -> action`` and collect the per-step trace."""
    obs = env.reset(episode_start)
    rows = []
    for step in range(env.config.episode_len):
        a = np.asarray(policy(obs), dtype=float)
        res = env.step(a)
        i = res.info
        rows.append((step, a[0], a[1], i["flow1"], i["pump_f"], i["flow2"], i["q1"],
                     i["q2"], i["q_target"], res.reward))
        obs = res.next_obs
    return pd.DataFrame(rows, columns=["step", "a0", "a1", "flow1", "pump_f", "flow2",
                                       "q1", "q2", "q_target", "reward"])
