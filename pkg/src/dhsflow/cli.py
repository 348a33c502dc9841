"""Command-line entry point: ``dhsflow <subcommand> [flags]``.

Every subcommand takes an optional ``--config`` file of ``section.key = value``
lines; explicit flags win over the file.  Exit status is 0 on success, 2 for
usage or configuration mistakes and 1 when a pipeline stage fails.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import pandas as pd

from .config import ConfigError, read_kv, split_sections

CONFIG_SECTIONS = {
    "plant": {"c", "ua_hx", "ua_building", "ua_pipe", "t_indoor", "noise_sigma_temp",
              "noise_sigma_flow", "pump_poly"},
    "standard": {"k_loss", "area", "t0", "t_design", "seconds"},
    "data": {"days", "seed", "interval_minutes", "interval_jitter", "noise"},
    "env": {"reward_kind", "episode_len", "backend"},
    "agent": set(),
    "surrogate": {"layers", "nodes", "steps", "seed"},
    "balance": {"kp", "ki", "kd", "t2_supply", "total_flow", "steps", "units",
                "radiator_ua"},
    "run": {"seed", "steps"},
}


def _known_sections():
    from .agent import AgentConfig
    from .plant import PlantParams, StandardParams

    known = {k: set(v) for k, v in CONFIG_SECTIONS.items()}
    known["plant"] = {f.name for f in fields(PlantParams)}
    known["standard"] = {f.name for f in fields(StandardParams)}
    known["agent"] = {f.name for f in fields(AgentConfig)}
    return known


def load_config(path) -> dict:
    if path is None:
        return {s: {} for s in _known_sections()}
    try:
        raw = read_kv(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return split_sections(raw, _known_sections())


def _pick(flag, section: dict, key: str, default, cast=float):
    if flag is not None:
        return flag
    if key in section:
        try:
            return cast(section[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {section[key]!r}") from exc
    return default


def _as_bool(text) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _plant(cfg):
    from .plant import params_from_mapping

    mapping = {f"plant.{k}": v for k, v in cfg["plant"].items()}
    mapping.update({f"standard.{k}": v for k, v in cfg["standard"].items()})
    try:
        return params_from_mapping(mapping)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _agent_config(cfg, steps=None):
    from .agent import AgentConfig

    try:
        ac = AgentConfig.from_mapping(cfg["agent"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if steps is not None:
        ac.train_steps = steps
    return ac


def _controller_params(ac) -> dict:
    from .experiments import _config_params

    return {**_config_params(ac), "train_steps": ac.train_steps}


def _write_csv(df: pd.DataFrame, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


# subcommands -------------------------------------------------------------

def cmd_gen_data(args, cfg) -> None:
    from .data import gen_dataset, gen_weather, write_dataset, write_weather

    plant, std = _plant(cfg)
    d = cfg["data"]
    days = _pick(args.days, d, "days", 96, int)
    seed = _pick(args.seed, d, "seed", 0, int)
    interval = 7.5 if args.dense else _pick(args.interval, d, "interval_minutes", 30.0)
    noise = not args.no_noise and _pick(None, d, "noise", True, _as_bool)
    jitter = _pick(args.jitter, d, "interval_jitter", 0.0)
    weather = gen_weather(days, seed=seed, noise=noise)
    df = gen_dataset(plant, std, weather, interval_minutes=interval, seed=seed, noise=noise,
                     interval_jitter=jitter)
    write_dataset(df, args.out)
    if args.weather_out:
        write_weather(weather, args.weather_out)
    print(f"wrote {len(df)} samples over {days} days to {args.out}")


def cmd_fit_surrogate(args, cfg) -> None:
    from .data import read_dataset, split_7_1
    from .neural import mse_mae
    from .surrogate import MODEL_INPUTS, fit_surrogate_set, save_surrogates

    s = cfg["surrogate"]
    layers = _pick(args.layers, s, "layers", 4, int)
    nodes = _pick(args.nodes, s, "nodes", 64, int)
    steps = _pick(args.steps, s, "steps", 4000, int)
    seed = _pick(args.seed, s, "seed", 0, int)
    train, test = split_7_1(read_dataset(args.data))
    surro = fit_surrogate_set(train, (layers, nodes), steps, seed)
    save_surrogates(surro, args.out)
    rows = []
    for which, reg in surro.models().items():
        pred = reg.predict(test[list(MODEL_INPUTS[which])].to_numpy(float))
        mse, mae = mse_mae(pred, test[which].to_numpy(float))
        rows.append({"model": which, "layers": layers, "nodes": nodes, "mse": mse, "mae": mae})
    _write_csv(pd.DataFrame(rows), Path(args.out) / "metrics.csv")
    print(pd.DataFrame(rows).to_string(index=False))


def _parse_grid(text):
    grid = []
    for item in text.split(","):
        layers, _, nodes = item.strip().partition("x")
        grid.append((int(layers), int(nodes)))
    return grid


def cmd_sweep_arch(args, cfg) -> None:
    from .data import read_dataset
    from .surrogate import arch_sweep

    grid = _parse_grid(args.grid) if args.grid else None
    res = arch_sweep(read_dataset(args.data), args.which, grid, args.steps,
                     _pick(args.seed, cfg["run"], "seed", 0, int), timing=args.timing)
    _write_csv(res.to_frame(), args.out)
    layers, nodes = res.chosen_arch
    print(f"chosen: {layers} layers x {nodes} nodes")


def cmd_train(args, cfg) -> None:
    from .agent import DDPGController
    from .data import read_dataset, split_7_1

    plant, _ = _plant(cfg)
    train, _ = split_7_1(read_dataset(args.data))
    seed = _pick(args.seed, cfg["run"], "seed", 0, int)
    out = Path(args.out)
    if args.algo == "sl":
        from .experiments import fit_sl_widening

        ctl = fit_sl_widening(train, args.tol, plant=plant, seed=seed)
        ctl.save(out)
        print(f"SL controller on {ctl.n_selected_} records (tol {ctl.tol_:.4f} GJ/h)")
        return
    e = cfg["env"]
    ac = _agent_config(cfg, _pick(args.steps, cfg["run"], "steps", None, int))
    surrogates = None
    backend = _pick(args.backend, e, "backend", "plant", str)
    if backend == "surrogate":
        from .surrogate import load_surrogates

        if not args.surrogates:
            raise ConfigError("--backend surrogate needs --surrogates DIR")
        surrogates = load_surrogates(args.surrogates)
    ctl = DDPGController(reward_kind=_pick(args.reward, e, "reward_kind", "q1q2", str),
                         episode_len=_pick(None, e, "episode_len", 500, int), backend=backend,
                         plant=plant, surrogates=surrogates, seed=seed,
                         **_controller_params(ac))
    ctl.fit(train)
    ctl.save(out)
    curve = pd.DataFrame({"episode": np.arange(1, len(ctl.learning_curve_) + 1),
                          "total_reward": ctl.learning_curve_})
    _write_csv(curve, out / "learning_curve.csv")
    print(f"trained {len(curve)} episodes; last total reward {curve.total_reward.iloc[-1]:.4f}")


def load_controller(directory, plant):
    from .agent import DDPGController
    from .baselines import SLController

    algo = read_kv(Path(directory) / "manifest.txt").get("algo", "ddpg")
    return (SLController if algo == "sl" else DDPGController).load(directory, plant=plant)


def cmd_eval(args, cfg) -> None:
    from .data import read_dataset, split_7_1
    from .experiments import controls_trace, manual_trace
    from .metrics import build_report, write_histograms, write_reports

    plant, std = _plant(cfg)
    data = read_dataset(args.data)
    test = data if args.split == "all" else split_7_1(data)[1]
    base = manual_trace(test, plant, std)
    traces = {}
    if args.baseline == "manual":
        traces["manual"] = base
    for directory in args.agent:
        ctl = load_controller(directory, plant)
        traces[Path(directory).name or "agent"] = controls_trace(test, ctl.predict(test), plant)
    if not traces:
        raise ConfigError("nothing to evaluate: give --agent and/or --baseline manual")
    reports = [build_report(name, tr, base, args.bins) for name, tr in traces.items()]
    write_reports(reports, args.report)
    if args.histogram:
        write_histograms(reports, args.histogram)
    if args.trace_dir:
        for name, tr in traces.items():
            t = tr.copy()
            t["timestamp"] = pd.DatetimeIndex(t["timestamp"]).strftime("%Y-%m-%dT%H:%M:%S")
            _write_csv(t, Path(args.trace_dir) / f"trace_{name}.csv")
    for r in reports:
        print(f"{r.controller}: AR {r.ar:.4f} GJ/h, CE1 {r.ce_primary:.2f}, "
              f"CE2 {r.ce_secondary:.2f}, water ratio {r.water_ratio_primary:.3f}/"
              f"{r.water_ratio_secondary:.3f}")


def cmd_rolling(args, cfg) -> None:
    from .data import read_dataset
    from .experiments import run_rolling

    plant, _ = _plant(cfg)
    ac = _agent_config(cfg)
    steps = _pick(args.steps, cfg["run"], "steps", 20_000, int)
    res = run_rolling(read_dataset(args.data), ac, steps, warm_start=not args.fresh,
                      seed=_pick(args.seed, cfg["run"], "seed", 0, int),
                      max_windows=args.windows, plant=plant,
                      episode_len=_pick(None, cfg["env"], "episode_len", 500, int),
                      log=lambda k, ar: print(f"window {k}: AR {ar:.4f}", flush=True))
    _write_csv(res, args.out)


def cmd_balance_sim(args, cfg) -> None:
    from .balance import (PidGains, balance_sim, default_scenario, history_frame,
                          read_scenario)

    b = cfg["balance"]
    if args.scenario:
        units = read_scenario(args.scenario)
    else:
        units = default_scenario(_pick(None, b, "units", 8, int),
                                 _pick(None, b, "radiator_ua", 0.03))
    gains = PidGains(kp=_pick(args.kp, b, "kp", 0.02), ki=_pick(args.ki, b, "ki", 0.01),
                     kd=_pick(args.kd, b, "kd", 0.0))
    hist = balance_sim(units, gains, _pick(args.t2_supply, b, "t2_supply", 50.0),
                       _pick(args.total_flow, b, "total_flow", 180.0),
                       _pick(args.steps, b, "steps", 400, int))
    _write_csv(history_frame(hist, units), args.out)
    print(f"final spread {hist[-1].spread:.4f} degC after {len(hist) - 1} steps")


def cmd_report(args, cfg) -> None:
    from .metrics import read_reports, write_histograms

    reports = [r for path in args.reports for r in read_reports(path)]
    cols = ["controller", "n_samples", "ce_primary", "ce_secondary", "ar", "water_primary",
            "water_secondary", "heat_primary", "heat_secondary", "water_ratio_primary",
            "water_ratio_secondary", "heat_ratio_primary", "heat_ratio_secondary"]
    summary = pd.DataFrame([{c: getattr(r, c) for c in cols} for r in reports])
    _write_csv(summary, args.out)
    if args.histogram:
        write_histograms(reports, args.histogram)
    print(summary[["controller", "ar", "water_ratio_primary",
                   "water_ratio_secondary"]].to_string(index=False))


# parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dhsflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="key = value file; flags override it")
        sp.set_defaults(func=func)
        return sp

    sp = add("gen-data", cmd_gen_data, "generate synthetic operating records")
    sp.add_argument("--days", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--interval", type=float, help="sampling interval in minutes")
    sp.add_argument("--dense", action="store_true", help="7.5-minute sampling")
    sp.add_argument("--jitter", type=float,
                    help="uneven sampling: delay each sample by up to this fraction of the interval")
    sp.add_argument("--no-noise", action="store_true")
    sp.add_argument("--out", required=True)
    sp.add_argument("--weather-out")

    sp = add("fit-surrogate", cmd_fit_surrogate, "fit the three response models")
    sp.add_argument("--data", required=True)
    sp.add_argument("--layers", type=int)
    sp.add_argument("--nodes", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)

    sp = add("sweep-arch", cmd_sweep_arch, "architecture sweep for one response model")
    sp.add_argument("--data", required=True)
    sp.add_argument("--which", choices=["tdp", "swts", "tds"], default="tds")
    sp.add_argument("--grid", help="comma list like 2x50,3x100")
    sp.add_argument("--steps", type=int, default=2000)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--timing", choices=["flops", "wall"], default="flops")
    sp.add_argument("--out", required=True)

    sp = add("train", cmd_train, "train a DDPG or SL controller")
    sp.add_argument("--algo", choices=["ddpg", "sl"], default="ddpg")
    sp.add_argument("--reward", choices=["q1", "q2", "q1q2"])
    sp.add_argument("--backend", choices=["plant", "surrogate"])
    sp.add_argument("--surrogates")
    sp.add_argument("--data", required=True)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--tol", type=float, help="SL selection tolerance in GJ/h")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)

    sp = add("eval", cmd_eval, "score controllers on the test days")
    sp.add_argument("--agent", action="append", default=[])
    sp.add_argument("--baseline", choices=["manual", "none"], default="manual")
    sp.add_argument("--data", required=True)
    sp.add_argument("--split", choices=["test", "all"], default="test")
    sp.add_argument("--bins", type=int, default=20)
    sp.add_argument("--report", required=True)
    sp.add_argument("--histogram")
    sp.add_argument("--trace-dir")

    sp = add("rolling", cmd_rolling, "rolling 7-day training with daily tests")
    sp.add_argument("--data", required=True)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--windows", type=int)
    sp.add_argument("--fresh", action="store_true", help="new agent for every window")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)

    sp = add("balance-sim", cmd_balance_sim, "PID valve balancing of apartment units")
    sp.add_argument("--scenario")
    sp.add_argument("--kp", type=float)
    sp.add_argument("--ki", type=float)
    sp.add_argument("--kd", type=float)
    sp.add_argument("--t2-supply", type=float)
    sp.add_argument("--total-flow", type=float)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--out", required=True)

    sp = add("report", cmd_report, "merge report CSVs into a summary table")
    sp.add_argument("reports", nargs="+")
    sp.add_argument("--out", required=True)
    sp.add_argument("--histogram")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        args.func(args, cfg)
    except ConfigError as exc:
        print(f"dhsflow: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report any stage failure as status 1
        print(f"dhsflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
