"""Deep deterministic policy gradient for the two station controls."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import neural
from .env import (OBS_COLUMNS, Action, EnvConfig, HeatingEnv, Observation,
                  action_to_controls)

OBS_DIM, ACT_DIM = 3, 2


@dataclass
class AgentConfig:
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 64
    buffer_capacity: int = 100_000
    warmup_steps: int = 1000
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_mu: float = 0.0
    ou_dt: float = 1.0
    train_steps: int = 20_000
    actor_hidden: tuple = (64, 64)
    critic_hidden: tuple = (64, 64)

    def __post_init__(self):
        self.actor_hidden = tuple(int(v) for v in self.actor_hidden)
        self.critic_hidden = tuple(int(v) for v in self.critic_hidden)
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size > self.buffer_capacity:
            raise ValueError("batch_size exceeds buffer_capacity")
        if min(self.actor_lr, self.critic_lr) <= 0:
            raise ValueError("learning rates must be positive")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "AgentConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, value in mapping.items():
            if key not in types:
                raise KeyError(f"unknown agent key {key!r}")
            if key.endswith("_hidden"):
                kw[key] = tuple(int(v) for v in str(value).replace(",", " ").split())
            elif types[key] in ("int", int):
                kw[key] = int(float(value))
            else:
                kw[key] = float(value)
        return cls(**kw)

    def to_mapping(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = " ".join(str(x) for x in v) if isinstance(v, tuple) else repr(v)
        return out


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest entry is overwritten first."""

    def __init__(self, capacity: int, obs_dim: int = OBS_DIM, act_dim: int = ACT_DIM):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, act_dim))
        self.reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self._head = 0

    def __len__(self):
        return self.size

    def push(self, obs, action, reward, next_obs, done) -> None:
        i = self._head
        self.obs[i] = obs
        self.action[i] = np.clip(action, -1.0, 1.0)
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add(self, t: Transition) -> None:
        self.push(t.obs, t.action, t.reward, t.next_obs, t.done)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, batch_size)
        return (self.obs[idx], self.action[idx], self.reward[idx], self.next_obs[idx],
                self.done[idx])

    def transitions(self) -> list:
        """Stored transitions, oldest first."""
        order = [(self._head + k) % self.capacity for k in range(self.capacity)] \
            if self.size == self.capacity else range(self.size)
        return [Transition(self.obs[i].copy(), self.action[i].copy(), float(self.reward[i]),
                           self.next_obs[i].copy(), bool(self.done[i])) for i in order]


@dataclass
class OuState:
    x: np.ndarray
    theta: float = 0.15
    sigma: float = 0.2
    mu: float = 0.0
    dt: float = 1.0

    @classmethod
    def start(cls, dim=ACT_DIM, theta=0.15, sigma=0.2, mu=0.0, dt=1.0) -> "OuState":
        return cls(np.full(dim, float(mu)), theta, sigma, mu, dt)

    def reset(self) -> None:
        self.x = np.full_like(self.x, self.mu)


def ou_next(state: OuState, rng: np.random.Generator):
    """Euler step of the Ornstein-Uhlenbeck process; returns ``(noise, state)``."""
    xi = rng.standard_normal(state.x.shape)
    state.x = (state.x + state.theta * (state.mu - state.x) * state.dt
               + state.sigma * math.sqrt(state.dt) * xi)
    return state.x.copy(), state


def ou_stationary_std(theta, sigma, dt=1.0):
    """Stationary std of the discretised process x' = (1 - theta dt) x + sigma sqrt(dt) xi."""
    return sigma * math.sqrt(dt / (2.0 * theta * dt - theta * theta * dt * dt))


def select_action(actor: neural.Mlp, obs, explore: bool = False, ou: OuState | None = None,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    x = obs.as_array() if isinstance(obs, Observation) else np.asarray(obs, dtype=float)
    a = neural.forward(actor, x)[0]
    if explore:
        if ou is None or rng is None:
            raise ValueError("exploration needs an OU state and a generator")
        noise, _ = ou_next(ou, rng)
        a = a + noise
    return np.clip(a, -1.0, 1.0)


def _sa(obs, act):
    return np.concatenate([obs, act], axis=1)


def critic_update(critic, target_actor, target_critic, batch, gamma, opt) -> float:
    """One Adam step on the mean squared Bellman error; returns the pre-step loss."""
    obs, act, rew, next_obs, done = batch
    if len(obs) == 0:
        raise neural.EmptyBatchError("empty batch")
    y = np.asarray(rew, dtype=float)
    if gamma > 0:
        next_a = neural.forward(target_actor, next_obs)
        q_next = neural.forward(target_critic, _sa(next_obs, next_a))[:, 0]
        y = y + gamma * (1.0 - done) * q_next
    loss, grads = neural.backward_mse(critic, _sa(obs, act), y[:, None])
    neural.optim_step(critic, grads, opt)
    return loss


def policy_gradient(actor, critic, obs):
    """Mean Q(s, mu(s)) over the batch and its gradient w.r.t. the actor parameters."""
    obs = np.asarray(obs, dtype=float)
    n = len(obs)
    if n == 0:
        raise neural.EmptyBatchError("empty batch")
    act = neural.forward(actor, obs)
    sa = _sa(obs, act)
    q = neural.forward(critic, sa)
    dq_dsa, _ = neural.backward_scalar_head(critic, sa, np.full((n, 1), 1.0 / n))
    dq_da = dq_dsa[:, obs.shape[1]:]
    _, grads = neural.backward_scalar_head(actor, obs, dq_da)
    return float(q.mean()), grads


def actor_update(actor, critic, batch, opt) -> float:
    """One Adam ascent step on mean Q(s, mu(s)); returns the objective before the step."""
    obs = batch[0] if isinstance(batch, tuple) else batch
    objective, grads = policy_gradient(actor, critic, obs)
    ascent = neural.GradientSet([-g for g in grads.weights], [-g for g in grads.biases])
    neural.optim_step(actor, ascent, opt)
    return objective


class DDPGAgent:
    """Actor, critic, their target copies, optimizers, replay and exploration state."""

    def __init__(self, config: AgentConfig | None = None, seed: int = 0):
        self.config = cfg = config or AgentConfig()
        self.rng = np.random.default_rng(seed)
        self.actor = neural.mlp_init([OBS_DIM, *cfg.actor_hidden, ACT_DIM], "tanh", "tanh",
                                     seed=self.rng, out_scale=3e-3)
        self.critic = neural.mlp_init([OBS_DIM + ACT_DIM, *cfg.critic_hidden, 1], "relu",
                                      "identity", seed=self.rng, out_scale=3e-3)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = neural.OptimState.for_net(self.actor, cfg.actor_lr)
        self.critic_opt = neural.OptimState.for_net(self.critic, cfg.critic_lr)
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.ou = OuState.start(ACT_DIM, cfg.ou_theta, cfg.ou_sigma, cfg.ou_mu, cfg.ou_dt)
        self.steps_done = 0

    def act(self, x, explore=False) -> np.ndarray:
        return select_action(self.actor, x, explore, self.ou, self.rng)

    def act_batch(self, X) -> np.ndarray:
        return np.clip(neural.forward(self.actor, X), -1.0, 1.0)

    def update(self):
        cfg = self.config
        batch = self.buffer.sample(cfg.batch_size, self.rng)
        closs = critic_update(self.critic, self.target_actor, self.target_critic, batch,
                              cfg.gamma, self.critic_opt)
        obj = actor_update(self.actor, self.critic, batch, self.actor_opt)
        neural.soft_update(self.target_critic, self.critic, cfg.tau)
        neural.soft_update(self.target_actor, self.actor, cfg.tau)
        return closs, obj

    def train(self, env: HeatingEnv, steps: int | None = None, log=None) -> list:
        """Run episodes from random start offsets until ``steps`` environment steps.

        Returns the total reward of every completed episode.
        """
        cfg = self.config
        steps = cfg.train_steps if steps is None else steps
        n_ep = env.config.episode_len
        max_start = len(env) - n_ep
        if max_start < 0:
            raise ValueError(f"dataset of {len(env)} records is shorter than one episode")
        curve = []
        done_steps = 0
        while done_steps < steps:
            start = int(self.rng.integers(0, max_start + 1))
            obs = env.reset(start)
            x = env.encode(obs)
            self.ou.reset()
            total = 0.0
            for _ in range(n_ep):
                a = self.act(x, explore=True)
                res = env.step(a)
                x_next = env.encode(res.next_obs) if res.next_obs is not None else x
                self.buffer.push(x, a, res.reward, x_next, res.done)
                total += res.reward
                self.steps_done += 1
                done_steps += 1
                if self.buffer.size >= max(cfg.warmup_steps, cfg.batch_size):
                    closs, _ = self.update()
                    if not np.isfinite(closs):
                        raise FloatingPointError(
                            f"critic loss diverged at step {self.steps_done}")
                x = x_next
                if res.done:
                    break
            curve.append(total)
            if log is not None:
                log(len(curve), total)
        return curve

    def save(self, directory, extra: dict | None = None) -> None:
        from .config import write_kv

        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        neural.save_mlp(self.actor, d / "actor.mlp")
        neural.save_mlp(self.critic, d / "critic.mlp")
        manifest = self.config.to_mapping()
        manifest.update(extra or {})
        write_kv(manifest, d / "manifest.txt", header="ddpg agent manifest v1")

    @classmethod
    def load(cls, directory):
        from .config import read_kv

        d = Path(directory)
        kv = read_kv(d / "manifest.txt")
        cfg_keys = {f.name for f in fields(AgentConfig)}
        agent = cls(AgentConfig.from_mapping({k: v for k, v in kv.items() if k in cfg_keys}))
        agent.actor = neural.load_mlp(d / "actor.mlp")
        agent.critic = neural.load_mlp(d / "critic.mlp")
        agent.target_actor = agent.actor.copy()
        agent.target_critic = agent.critic.copy()
        return agent, {k: v for k, v in kv.items() if k not in cfg_keys}


def train_ddpg(env: HeatingEnv, config: AgentConfig | None = None, seed: int = 0,
               agent: DDPGAgent | None = None, steps: int | None = None):
    """Train (or continue training ``agent``) and return ``(actor, critic, curve, agent)``."""
    agent = agent or DDPGAgent(config, seed)
    curve = agent.train(env, steps)
    return agent.actor, agent.critic, curve, agent


class DDPGController(BaseEstimator):
    """Estimator wrapper: ``fit`` trains on records, ``predict`` returns (flow1, pump_f).

    Extra keyword parameters of :class:`AgentConfig` are exposed as estimator params.
    """

    def __init__(self, reward_kind="q1q2", episode_len=500, backend="plant", gamma=0.99,
                 tau=0.005, actor_lr=1e-4, critic_lr=1e-3, batch_size=64,
                 buffer_capacity=100_000, warmup_steps=1000, ou_theta=0.15, ou_sigma=0.2,
                 train_steps=20_000, actor_hidden=(64, 64), critic_hidden=(64, 64),
                 plant=None, surrogates=None, seed=0):
        self.reward_kind = reward_kind
        self.episode_len = episode_len
        self.backend = backend
        self.gamma = gamma
        self.tau = tau
        self.actor_lr = actor_lr
        self.critic_lr = critic_lr
        self.batch_size = batch_size
        self.buffer_capacity = buffer_capacity
        self.warmup_steps = warmup_steps
        self.ou_theta = ou_theta
        self.ou_sigma = ou_sigma
        self.train_steps = train_steps
        self.actor_hidden = actor_hidden
        self.critic_hidden = critic_hidden
        self.plant = plant
        self.surrogates = surrogates
        self.seed = seed

    def agent_config(self) -> AgentConfig:
        return AgentConfig(gamma=self.gamma, tau=self.tau, actor_lr=self.actor_lr,
                           critic_lr=self.critic_lr, batch_size=self.batch_size,
                           buffer_capacity=self.buffer_capacity,
                           warmup_steps=self.warmup_steps, ou_theta=self.ou_theta,
                           ou_sigma=self.ou_sigma, train_steps=self.train_steps,
                           actor_hidden=self.actor_hidden, critic_hidden=self.critic_hidden)

    def make_env(self, X: pd.DataFrame, obs_stats=None) -> HeatingEnv:
        cfg = EnvConfig(reward_kind=self.reward_kind,
                        episode_len=min(self.episode_len, len(X)), backend=self.backend)
        return HeatingEnv(X, cfg, plant=self.plant, surrogates=self.surrogates,
                          obs_stats=obs_stats)

    def fit(self, X: pd.DataFrame, y=None, warm_start=None):
        """Train on the records in ``X``; ``warm_start`` continues a fitted controller."""
        if warm_start is not None:
            check_is_fitted(warm_start, "agent_")
            self.agent_ = warm_start.agent_
            self.obs_stats_ = warm_start.obs_stats_
            env = self.make_env(X, self.obs_stats_)
        else:
            env = self.make_env(X)
            self.obs_stats_ = (env.obs_mean.copy(), env.obs_scale.copy())
            self.agent_ = DDPGAgent(self.agent_config(), self.seed)
        self.learning_curve_ = self.agent_.train(env, self.train_steps)
        return self

    def actions(self, X: pd.DataFrame) -> np.ndarray:
        check_is_fitted(self, "agent_")
        obs = X[list(OBS_COLUMNS)].to_numpy(float)
        mean, scale = self.obs_stats_
        return self.agent_.act_batch((obs - mean) / scale)

    def predict(self, X: pd.DataFrame) -> np.ndarray:
        """Controls per record as an (n, 2) array of (flow1 t/h, pump Hz)."""
        flow1, pump_f, _ = action_to_controls(self.actions(X))
        return np.column_stack([flow1, pump_f])

    def save(self, directory) -> None:
        check_is_fitted(self, "agent_")
        mean, scale = self.obs_stats_
        self.agent_.save(directory, {
            "algo": "ddpg", "reward_kind": self.reward_kind,
            "obs_mean": " ".join(repr(float(v)) for v in mean),
            "obs_scale": " ".join(repr(float(v)) for v in scale)})

    @classmethod
    def load(cls, directory, plant=None) -> "DDPGController":
        agent, extra = DDPGAgent.load(directory)
        ctl = cls(reward_kind=extra.get("reward_kind", "q1q2"), plant=plant)
        ctl.agent_ = agent
        ctl.obs_stats_ = tuple(np.array([float(v) for v in extra[k].split()])
                               for k in ("obs_mean", "obs_scale"))
        return ctl


__all__ = ["AgentConfig", "Transition", "ReplayBuffer", "OuState", "ou_next",
           "ou_stationary_std", "select_action", "critic_update", "actor_update",
           "policy_gradient", "DDPGAgent", "train_ddpg", "DDPGController", "Action"]
