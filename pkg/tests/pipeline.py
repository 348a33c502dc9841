"""Small end-to-end CLI pipeline shared by the CLI tests and the determinism check."""
from pathlib import Path

from dhsflow.cli import main

SMALL_CONFIG = """\
# tiny settings so the whole pipeline runs in seconds
agent.warmup_steps = 100
agent.batch_size = 16
agent.actor_hidden = 16 16
agent.critic_hidden = 16 16
env.episode_len = 100
balance.steps = 150
"""


def run(argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"{argv[0]} exited with {code}"


def run_pipeline(root: Path) -> list:
    """Run every subcommand once under ``root``; return the CSV files written."""
    root.mkdir(parents=True, exist_ok=True)
    cfg = root / "small.cfg"
    cfg.write_text(SMALL_CONFIG)
    data = root / "data.csv"
    run(["gen-data", "--days", 16, "--seed", 4, "--out", data, "--weather-out",
         root / "weather.csv"])
    run(["fit-surrogate", "--data", data, "--layers", 2, "--nodes", 12, "--steps", 200,
         "--out", root / "surro"])
    run(["sweep-arch", "--data", data, "--grid", "1x8,2x8", "--steps", 100, "--out",
         root / "sweep.csv"])
    run(["train", "--config", cfg, "--data", data, "--steps", 600, "--seed", 1,
         "--out", root / "ddpg"])
    run(["train", "--config", cfg, "--data", data, "--backend", "surrogate", "--surrogates",
         root / "surro", "--steps", 300, "--out", root / "ddpg_surro"])
    run(["train", "--algo", "sl", "--data", data, "--steps", 300, "--out", root / "sl"])
    run(["eval", "--data", data, "--agent", root / "ddpg", "--agent", root / "sl",
         "--bins", 8, "--report", root / "report.csv", "--histogram", root / "hist.csv",
         "--trace-dir", root / "traces"])
    run(["rolling", "--config", cfg, "--data", data, "--steps", 300, "--windows", 2,
         "--out", root / "rolling.csv"])
    run(["balance-sim", "--config", cfg, "--out", root / "balance.csv"])
    run(["report", root / "report.csv", "--out", root / "summary.csv", "--histogram",
         root / "summary_hist.csv"])
    return sorted(p for p in root.rglob("*.csv"))
