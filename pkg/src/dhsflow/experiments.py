"""Experiment orchestration over synthetic records: controller comparisons and rolling training."""
from __future__ import annotations

import numpy as np
import pandas as pd

from .agent import AgentConfig, DDPGAgent, DDPGController
from .baselines import SelectionError, SLController, manual_baseline
from .data import gen_dataset, gen_weather, rolling_windows, split_7_1
from .env import evaluate_controls
from .metrics import average_reward, build_report, consumption_totals, cumulative_error
from .plant import PlantParams, StandardParams


def synthetic_dataset(days: int = 96, seed: int = 0, interval_minutes: float = 30.0,
                      noise: bool = True, plant: PlantParams | None = None,
                      std: StandardParams | None = None) -> pd.DataFrame:
    plant = plant or PlantParams()
    std = std or StandardParams()
    weather = gen_weather(days, seed=seed, noise=noise)
    return gen_dataset(plant, std, weather, interval_minutes=interval_minutes, seed=seed,
                       noise=noise)


def controls_trace(dataset: pd.DataFrame, controls, plant: PlantParams | None = None,
                   surrogates=None) -> pd.DataFrame:
    controls = np.asarray(controls, dtype=float)
    return evaluate_controls(dataset, controls[:, 0], controls[:, 1], plant, surrogates)


def manual_trace(dataset: pd.DataFrame, plant=None, std=None) -> pd.DataFrame:
    m = manual_baseline(dataset, plant, std)
    return evaluate_controls(dataset, m["flow1"], m["pump_f"], plant)


def fit_sl_widening(train: pd.DataFrame, tol=None, widen: float = 1.5, tries: int = 8,
                    **kw) -> SLController:
    """Fit an SL controller, widening ``tol`` by ``widen`` until enough records qualify."""
    tol = 0.05 * float(train["q_target"].mean()) if tol is None else float(tol)
    for _ in range(tries):
        try:
            return SLController(tol=tol, **kw).fit(train)
        except SelectionError:
            tol *= widen
    raise SelectionError(f"no tolerance up to {tol:.3f} GJ/h selects enough records")


def untrained_controller(config: AgentConfig, obs_stats, seed: int = 0) -> DDPGController:
    """A controller holding a freshly initialised actor, for before/after comparisons."""
    ctl = DDPGController(seed=seed)
    ctl.agent_ = DDPGAgent(config, seed)
    ctl.obs_stats_ = obs_stats
    return ctl


def reward_kind_study(train: pd.DataFrame, test: pd.DataFrame, steps: int = 100_000,
                      seed: int = 0, plant: PlantParams | None = None, **agent_kw) -> pd.DataFrame:
    """Train one agent per reward kind and compare each side's CE with the untrained actor."""
    rows = []
    for kind in ("q1", "q2", "q1q2"):
        ctl = DDPGController(reward_kind=kind, train_steps=steps, plant=plant, seed=seed,
                             **agent_kw).fit(train)
        fresh = untrained_controller(ctl.agent_config(), ctl.obs_stats_, seed)
        before = controls_trace(test, fresh.predict(test), plant)
        after = controls_trace(test, ctl.predict(test), plant)
        ce = {}
        for tag, tr in (("untrained", before), ("trained", after)):
            ce[f"ce1_{tag}"] = cumulative_error(tr["q1"], tr["q_target"])
            ce[f"ce2_{tag}"] = cumulative_error(tr["q2"], tr["q_target"])
        rows.append({"reward_kind": kind, "episodes": len(ctl.learning_curve_), **ce,
                     "ratio1": ce["ce1_trained"] / ce["ce1_untrained"],
                     "ratio2": ce["ce2_trained"] / ce["ce2_untrained"]})
    return pd.DataFrame(rows)


def compare_controllers(train: pd.DataFrame, test: pd.DataFrame, steps: int = 20_000,
                        seed: int = 0, plant: PlantParams | None = None,
                        std: StandardParams | None = None, sl_tol=None, sl_steps: int = 3000,
                        bins: int = 20, **agent_kw):
    """DDPG, SL and manual control on the same test days.

    Returns ``(reports, traces)``; consumption ratios are relative to manual control.
    """
    base = manual_trace(test, plant, std)
    ddpg = DDPGController(train_steps=steps, plant=plant, seed=seed, **agent_kw).fit(train)
    sl = fit_sl_widening(train, sl_tol, steps=sl_steps, plant=plant, seed=seed)
    traces = {"manual": base,
              "ddpg": controls_trace(test, ddpg.predict(test), plant),
              "sl": controls_trace(test, sl.predict(test), plant)}
    reports = [build_report(name, tr, base, bins) for name, tr in traces.items()]
    return reports, traces


def baseline_study(seeds=(0, 1, 2, 3, 4), days: int = 96, steps: int = 20_000,
                   **kw) -> pd.DataFrame:
    """Per-seed AR and water ratios of DDPG vs. manual and SL control."""
    rows = []
    for seed in seeds:
        train, test = split_7_1(synthetic_dataset(days, seed))
        reports, _ = compare_controllers(train, test, steps=steps, seed=seed, **kw)
        by = {r.controller: r for r in reports}
        rows.append({"seed": seed, "ar_manual": by["manual"].ar, "ar_ddpg": by["ddpg"].ar,
                     "ar_sl": by["sl"].ar,
                     "water_ratio_primary": by["ddpg"].water_ratio_primary,
                     "water_ratio_secondary": by["ddpg"].water_ratio_secondary})
    df = pd.DataFrame(rows)
    df["holds"] = ((df["ar_ddpg"] <= 0.5 * df["ar_manual"])
                   & (df["water_ratio_primary"] <= 0.95)
                   & (df["water_ratio_secondary"] <= 0.95)
                   & (df["ar_sl"] > df["ar_ddpg"]))
    return df


def run_rolling(dataset: pd.DataFrame, agent_config: AgentConfig | None = None,
                steps_per_window: int = 20_000, warm_start: bool = True, seed: int = 0,
                max_windows: int | None = None, plant: PlantParams | None = None,
                episode_len: int = 500, log=None) -> pd.DataFrame:
    """Slide a 7-day training window one day at a time and score each following day.

    With ``warm_start`` every window continues from the previous window's agent;
    otherwise each window starts from a fresh agent with the same seed.
    """
    cfg = agent_config or AgentConfig()
    windows = rolling_windows(dataset)
    if max_windows is not None:
        windows = windows[:max_windows]
    if len(windows) < 2:
        raise ValueError("rolling training needs at least two windows")
    prev = None
    rows = []
    for k, (train, test) in enumerate(windows):
        ctl = DDPGController(episode_len=episode_len, train_steps=steps_per_window,
                             plant=plant, seed=seed, **_config_params(cfg))
        ctl.fit(train, warm_start=prev if warm_start else None)
        trace = controls_trace(test, ctl.predict(test), plant)
        ar = average_reward(trace["q1"], trace["q2"], trace["q_target"])
        rows.append({"window": k, "train_first_day": k, "test_day": k + 7, "ar": ar,
                     **consumption_totals(trace)})
        if log is not None:
            log(k, ar)
        prev = ctl
    return pd.DataFrame(rows)


def _config_params(cfg: AgentConfig) -> dict:
    return {"gamma": cfg.gamma, "tau": cfg.tau, "actor_lr": cfg.actor_lr,
            "critic_lr": cfg.critic_lr, "batch_size": cfg.batch_size,
            "buffer_capacity": cfg.buffer_capacity, "warmup_steps": cfg.warmup_steps,
            "ou_theta": cfg.ou_theta, "ou_sigma": cfg.ou_sigma,
            "actor_hidden": cfg.actor_hidden, "critic_hidden": cfg.critic_hidden}


def leading_trailing(series, n: int = 10):
    """Mean of the first ``n`` and last ``n`` values."""
    s = np.asarray(series, dtype=float)
    if s.size < n:
        raise ValueError(f"need at least {n} values")
    return float(s[:n].mean()), float(s[-n:].mean())
