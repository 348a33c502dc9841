"""Small dense feed-forward networks in numpy, with manual backpropagation.

Shared by the surrogate regressors and the actor/critic of the DDPG agent.
Everything is float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")


class ArchitectureError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class EmptyBatchError(ValueError):
    pass


@dataclass
class Mlp:
    layer_sizes: list
    weights: list
    biases: list
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list:
        """Parameter arrays in storage order (W0, b0, W1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "Mlp":
        return Mlp(list(self.layer_sizes), [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases], self.hidden_activation,
                   self.output_activation)

    def __call__(self, x):
        return forward(self, x)


@dataclass
class GradientSet:
    weights: list
    biases: list

    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


@dataclass
class OptimState:
    """Adam moments for one network."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0

    @classmethod
    def for_net(cls, net: Mlp, learning_rate: float = 1e-3, **kw) -> "OptimState":
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        return cls(learning_rate=learning_rate,
                   m=[np.zeros_like(p) for p in net.params()],
                   v=[np.zeros_like(p) for p in net.params()], **kw)


def mlp_init(layer_sizes, hidden_activation="relu", output_activation="identity",
             seed=0, out_scale=None) -> Mlp:
    """Network with weights uniform in +-sqrt(6/fan_in) and zero biases.

    ``out_scale`` overrides the bound for the last layer only (small output
    layers keep a tanh head out of saturation at start).
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ArchitectureError(f"invalid layer sizes {layer_sizes!r}")
    for act in (hidden_activation, output_activation):
        if act not in ACTIVATIONS:
            raise ArchitectureError(f"unknown activation {act!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = np.sqrt(6.0 / fan_in)
        if out_scale is not None and k == len(sizes) - 2:
            bound = out_scale
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes, weights, biases, hidden_activation, output_activation)


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name, z, a):
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def _as_batch(net, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.n_inputs:
        raise ShapeError(f"expected (rows, {net.n_inputs}) input, got {x.shape}")
    return x


def _forward_trace(net, x):
    pre, post = [], [x]
    a = x
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        a = _act(net.output_activation if k == last else net.hidden_activation, z)
        pre.append(z)
        post.append(a)
    return pre, post


def forward(net: Mlp, batch) -> np.ndarray:
    x = _as_batch(net, batch)
    return _forward_trace(net, x)[1][-1]


def _backprop(net, pre, post, grad_out):
    n_layers = len(net.weights)
    gw, gb = [None] * n_layers, [None] * n_layers
    delta = grad_out
    for k in range(n_layers - 1, -1, -1):
        act = net.output_activation if k == n_layers - 1 else net.hidden_activation
        delta = delta * _act_grad(act, pre[k], post[k + 1])
        gw[k] = delta.T @ post[k]
        gb[k] = delta.sum(axis=0)
        delta = delta @ net.weights[k]
    return delta, GradientSet(gw, gb)


def backward_mse(net: Mlp, inputs, targets):
    """Mean squared error over rows and outputs, and its parameter gradient."""
    x = _as_batch(net, inputs)
    y = np.asarray(targets, dtype=float)
    if len(x) == 0 or y.size == 0:
        raise EmptyBatchError("empty batch")
    if y.ndim == 1 and net.n_outputs == 1:
        y = y[:, None]
    if y.shape != (len(x), net.n_outputs):
        raise ShapeError(f"targets shape {y.shape} does not match {(len(x), net.n_outputs)}")
    pre, post = _forward_trace(net, x)
    err = post[-1] - y
    loss = float(np.mean(err * err))
    _, grads = _backprop(net, pre, post, 2.0 * err / err.size)
    return loss, grads


def backward_scalar_head(net: Mlp, inputs, head_grad):
    """Vector-Jacobian product of the outputs with ``head_grad``.

    Returns ``(input_grads, param_grads)`` where ``input_grads[i] = J_i^T head_grad[i]``
    and the parameter gradient is summed over rows.
    """
    x = _as_batch(net, inputs)
    g = np.asarray(head_grad, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != (len(x), net.n_outputs):
        raise ShapeError(f"head_grad shape {g.shape} does not match {(len(x), net.n_outputs)}")
    pre, post = _forward_trace(net, x)
    return _backprop(net, pre, post, g)


def _check_congruent(a_params, b_params):
    if len(a_params) != len(b_params) or any(p.shape != q.shape
                                             for p, q in zip(a_params, b_params)):
        raise ShapeError("parameter arrays are not congruent")


def optim_step(net: Mlp, grads: GradientSet, state: OptimState):
    """One Adam update of ``net`` in place; returns ``(net, state)``."""
    params, gparams = net.params(), grads.params()
    _check_congruent(params, gparams)
    for g in gparams:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.step
    corr2 = 1.0 - b2 ** state.step
    lr = state.learning_rate * np.sqrt(corr2) / corr1
    eps_hat = state.eps * np.sqrt(corr2)
    for p, g, m, v in zip(params, gparams, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * m / (np.sqrt(v) + eps_hat)
    return net, state


def soft_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """Blend ``online`` into ``target`` in place: p' <- tau*p + (1-tau)*p'."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if list(target.layer_sizes) != list(online.layer_sizes):
        raise ShapeError("architectures differ")
    for p_t, p in zip(target.params(), online.params()):
        p_t *= 1.0 - tau
        p_t += tau * p
    return target


def mse_mae(pred, truth):
    p = np.asarray(pred, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape:
        raise ShapeError(f"shape mismatch {p.shape} vs {t.shape}")
    if p.size == 0:
        raise EmptyBatchError("empty input")
    d = p - t
    return float(np.mean(d * d)), float(np.mean(np.abs(d)))


def save_mlp(net: Mlp, path) -> None:
    lines = ["mlp v1 %d %s %s %s" % (len(net.layer_sizes),
                                     " ".join(str(s) for s in net.layer_sizes),
                                     net.hidden_activation, net.output_activation)]
    for p in net.params():
        lines.append(" ".join(repr(float(v)) for v in p.ravel()))
    Path(path).write_text("\n".join(lines) + "\n")


def load_mlp(path) -> Mlp:
    text = Path(path).read_text().splitlines()
    head = text[0].split()
    if head[:2] != ["mlp", "v1"]:
        raise ValueError(f"{path}: not an mlp v1 file")
    n = int(head[2])
    sizes = [int(s) for s in head[3:3 + n]]
    hidden, out = head[3 + n], head[4 + n]
    net = mlp_init(sizes, hidden, out, seed=0)
    params = net.params()
    if len(text) - 1 != len(params):
        raise ValueError(f"{path}: expected {len(params)} parameter lines")
    for p, line in zip(params, text[1:]):
        vals = np.array([float(v) for v in line.split()]) if line.strip() else np.zeros(0)
        if vals.size != p.size:
            raise ValueError(f"{path}: parameter size mismatch")
        p[...] = vals.reshape(p.shape)
    return net
