"""Acceptance gate: one PASS/FAIL line per criterion, each at its stated tolerance.

The long-running criteria (3 to 6) train real models and take several minutes
each on one CPU.  Runtime limits are part of every criterion.
"""
import filecmp
import time

import numpy as np
import pytest

from dhsflow import neural
from dhsflow.agent import AgentConfig
from dhsflow.balance import PidGains, balance_sim, default_scenario
from dhsflow.data import cubic_spline, pchip, split_7_1
from dhsflow.experiments import (baseline_study, leading_trailing, reward_kind_study,
                                 run_rolling, synthetic_dataset)
from dhsflow.plant import (PUMP_COEFFS, PlantParams, StandardParams, plant_steady_state,
                           pump_flow, target_heat)
from dhsflow.surrogate import fit_surrogate_set, predict_q
from oracles import close_rel, fd_input_grads, fd_param_grads, mse_loss
from pipeline import run_pipeline

RESULTS = []


def verdict(n, ok, detail, elapsed, limit=None):
    within = limit is None or elapsed < limit
    status = "PASS" if ok and within else "FAIL"
    budget = f" (limit {limit:.0f} s)" if limit is not None else ""
    line = f"{status} criterion {n}: {detail}; {elapsed:.1f} s{budget}"
    RESULTS.append(line)
    print(line)
    assert ok, line
    assert within, f"{line}: runtime limit exceeded"


def r2(pred, truth):
    truth = np.asarray(truth, dtype=float)
    return 1.0 - np.sum((pred - truth) ** 2) / np.sum((truth - truth.mean()) ** 2)


def _random_net(rng, kind, seed):
    width = lambda: int(rng.integers(1, 9))  # noqa: E731
    hidden = [width() for _ in range(int(rng.integers(1, 4)))]
    if kind == "actor":
        net = neural.mlp_init([int(rng.integers(1, 6)), *hidden, 2], "tanh", "tanh", seed=seed)
    elif kind == "critic":
        net = neural.mlp_init([int(rng.integers(2, 6)), *hidden, 1], "tanh", "identity",
                              seed=seed)
    else:
        net = neural.mlp_init([int(rng.integers(1, 5)), *hidden, int(rng.integers(1, 3))],
                              "relu", "identity", seed=seed)
    for b in net.biases:
        b[...] = rng.normal(0, 0.3, b.shape)
    return net


def test_criterion_1_gradients():
    t0 = time.perf_counter()
    checked, bad = 0, []
    for seed in range(24):
        rng = np.random.default_rng(1000 + seed)
        kind = ("regressor", "actor", "critic")[seed % 3]
        net = _random_net(rng, kind, seed)
        x = rng.normal(size=(4, net.n_inputs))
        if kind == "regressor":
            y = rng.normal(size=(4, net.n_outputs))
            _, grads = neural.backward_mse(net, x, y)
            numeric = fd_param_grads(net, mse_loss(x, y))
            ok = all(close_rel(a, n) for a, n in zip(grads.params(), numeric))
        else:
            head = rng.normal(size=(4, net.n_outputs))
            gx, grads = neural.backward_scalar_head(net, x, head)

            def objective(n_or_x, fixed_net=net):
                if isinstance(n_or_x, neural.Mlp):
                    return float(np.sum(neural.forward(n_or_x, x) * head))
                return float(np.sum(neural.forward(fixed_net, n_or_x) * head))

            numeric = fd_param_grads(net, objective)
            ok = all(close_rel(a, n) for a, n in zip(grads.params(), numeric))
            ok = ok and close_rel(gx, fd_input_grads(objective, x))
        checked += 1
        if not ok:
            bad.append((seed, kind))
    verdict(1, not bad, f"{checked} random nets, {len(bad)} outside 1e-4 relative",
            time.perf_counter() - t0, 10)


def test_criterion_2_physics():
    t0 = time.perf_counter()
    lossless = PlantParams(ua_pipe=0.0).without_noise()
    std = StandardParams()
    worst = 0.0
    for t1s, f1, f2, t_out in [(60, 30, 140, -5), (75, 60, 170, -20), (90, 90, 280, -25),
                               (55, 20, 130, 5)]:
        st = plant_steady_state(lossless, std, t1s, f1, f2, t_out)
        worst = max(worst, abs(st.q1 - st.q2) / abs(st.q1))
    anchor = target_heat(std, -22.4)
    a2, a1, a0 = PUMP_COEFFS
    pump_err = max(abs(pump_flow(f) - (a2 * f * f + a1 * f + a0)) for f in (20.0, 35.0, 50.0))
    ok = worst < 1e-9 and abs(anchor - 9.5753) < 5e-5 and pump_err <= 1e-12
    verdict(2, ok, f"max |Q1-Q2|/Q1 {worst:.1e}, anchor {anchor:.4f} GJ/h, "
                   f"pump error {pump_err:.1e}", time.perf_counter() - t0, 1)


def test_criterion_3_surrogate_fidelity():
    t0 = time.perf_counter()
    data = synthetic_dataset(8, seed=0, noise=False)
    train, test = split_7_1(data)
    surro = fit_surrogate_set(train)
    pred = predict_q(surro, test.t1_supply, test.t_out, test.flow1, test.pump_f)
    r1, r2_ = r2(pred.q1, test.q1), r2(pred.q2, test.q2)
    elapsed = time.perf_counter() - t0
    # diagnostic only: hold out an interior day instead of the final, warmest one
    day = (data.timestamp.dt.normalize() - data.timestamp.dt.normalize().min()).dt.days
    inner = fit_surrogate_set(data[day != 3])
    held = data[day == 3]
    ip = predict_q(inner, held.t1_supply, held.t_out, held.flow1, held.pump_f)
    print(f"diagnostic: interior held-out day R2 q1 {r2(ip.q1, held.q1):.4f}, "
          f"q2 {r2(ip.q2, held.q2):.4f}; test-day t_out max {test.t_out.max():.1f} "
          f"vs train max {train.t_out.max():.1f}")
    verdict(3, r1 >= 0.98 and r2_ >= 0.98, f"test-day R2 q1 {r1:.4f}, q2 {r2_:.4f} "
            f"(need >= 0.98)", elapsed, 300)


def test_criterion_4_reward_kinds():
    t0 = time.perf_counter()
    train, test = split_7_1(synthetic_dataset(96, seed=0))
    df = reward_kind_study(train, test, steps=100_000, seed=0)
    print(df.to_string(index=False))
    by = df.set_index("reward_kind")
    ok = (by.loc["q1q2", "ratio1"] < 0.8 and by.loc["q1q2", "ratio2"] < 0.8
          and by.loc["q1", "ratio2"] >= 0.95 and by.loc["q2", "ratio1"] >= 0.95
          and df.episodes.min() >= 200)
    verdict(4, ok, f"{df.episodes.min()} episodes; q1q2 ratios "
                   f"{by.loc['q1q2', 'ratio1']:.2f}/{by.loc['q1q2', 'ratio2']:.2f} (< 0.8), "
                   f"q1 kind side-2 ratio {by.loc['q1', 'ratio2']:.2f} and q2 kind side-1 "
                   f"ratio {by.loc['q2', 'ratio1']:.2f} (>= 0.95)",
            time.perf_counter() - t0, 1200)


def test_criterion_5_baselines():
    t0 = time.perf_counter()
    df = baseline_study(seeds=(0, 1, 2, 3, 4))
    print(df.to_string(index=False))
    n = int(df.holds.sum())
    verdict(5, n >= 4, f"holds on {n} of 5 seeds (need 4)", time.perf_counter() - t0, 1800)


def test_criterion_6_rolling():
    t0 = time.perf_counter()
    cfg = AgentConfig(actor_hidden=(32, 32), critic_hidden=(32, 32))
    res = run_rolling(synthetic_dataset(30, seed=0), cfg, steps_per_window=20_000, seed=0)
    print(res[["window", "test_day", "ar"]].to_string(index=False))
    lead, trail = leading_trailing(res.ar, 10)
    verdict(6, len(res) >= 20 and trail < lead,
            f"{len(res)} windows; leading-10 AR {lead:.4f}, trailing-10 AR {trail:.4f}",
            time.perf_counter() - t0, 2400)


def test_criterion_7_interpolation():
    t0 = time.perf_counter()
    xs = np.arange(12.0)
    ys = np.array([0, 0, 0, 0, 10, 10, 10, 10, 0, 0, 0, 0], dtype=float)
    q = np.linspace(0, 11, 2201)
    p, s = pchip(xs, ys, q), cubic_spline(xs, ys, q)
    span = ys.max() - ys.min()
    overshoot = max(s.max() - ys.max(), ys.min() - s.min()) / span
    inside = ys.min() <= p.min() and p.max() <= ys.max()
    knots = max(np.max(np.abs(pchip(xs, ys, xs) - ys)),
                np.max(np.abs(cubic_spline(xs, ys, xs) - ys)))
    verdict(7, inside and overshoot >= 0.05 and knots <= 1e-12,
            f"pchip range [{p.min():.3g}, {p.max():.3g}], spline overshoot "
            f"{100 * overshoot:.1f}% of range, knot error {knots:.1e}",
            time.perf_counter() - t0, 1)


def test_criterion_8_balance():
    t0 = time.perf_counter()
    units = default_scenario()
    hist = balance_sim(units, PidGains(), 50.0, 180.0, 400)
    spreads = np.array([h.spread for h in hist])
    conservation = max(abs(h.flows.sum() - 180.0) for h in hist)
    reached = np.flatnonzero(spreads < 0.2)
    first = int(reached[0]) if reached.size else None
    ok = first is not None and first <= 400 and conservation <= 1e-9
    verdict(8, ok, f"{len(units)} units, resistance {units[0].base_resistance:g}-"
                   f"{units[-1].base_resistance:g}; spread {spreads[0]:.2f} -> below 0.2 at "
                   f"step {first}, final {spreads[-1]:.4f}; flow error {conservation:.1e}",
            time.perf_counter() - t0, 5)


def test_criterion_9_determinism(tmp_path):
    t0 = time.perf_counter()
    first = run_pipeline(tmp_path / "a")
    second = run_pipeline(tmp_path / "b")
    rel_a = [p.relative_to(tmp_path / "a") for p in first]
    rel_b = [p.relative_to(tmp_path / "b") for p in second]
    differing = [str(r) for r in rel_a if not filecmp.cmp(tmp_path / "a" / r,
                                                         tmp_path / "b" / r, shallow=False)]
    ok = rel_a == rel_b and not differing and len(rel_a) > 0
    verdict(9, ok, f"{len(rel_a)} CSVs from every subcommand, {len(differing)} differ "
                   f"byte-wise {differing}", time.perf_counter() - t0)
