"""Regenerate the reduced-trial regression baselines in results/golden/.

Run from the repository root:  python results/make_golden.py
"""

from pathlib import Path

from contagion_sim.cli import main

GOLDEN_TRIALS = 1000
CONFIGS = [
    ("truncation.yaml", "simulate-limit"),
    ("contagion_sweep.yaml", "simulate-limit"),
    ("systematic_sweep.yaml", "simulate-limit"),
    ("spearman_trend.yaml", "simulate-limit"),
    ("time_evolution.yaml", "simulate-limit"),
    ("finite_vs_limit.yaml", "simulate-finite"),
    ("finite_vs_limit_strong_risk.yaml", "simulate-finite"),
    ("small_pool_var.yaml", "simulate-finite"),
]

root = Path(__file__).resolve().parent.parent
golden = root / "results" / "golden"
golden.mkdir(parents=True, exist_ok=True)

for config, command in CONFIGS:
    out = golden / config.replace(".yaml", ".csv")
    code = main([
        command, str(root / "configs" / config),
        "--trials", str(GOLDEN_TRIALS), "--threads", "1", "--out", str(out),
    ])
    if code != 0:
        raise SystemExit(f"{config}: exit code {code}")
    print(f"{out.name} written")
