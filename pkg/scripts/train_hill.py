"""Train one constrained policy on the hill world, evaluate it, and render
the learning curve plus a handful of driven paths.

Usage:
    python3 scripts/train_hill.py --seed 0 --out runs/hill_demo
"""

import argparse
import dataclasses
import sys

from qnav.cpo import ALGOS, TrainConfig, train
from qnav.envs import NavEnv, ScenarioConfig
from qnav.harness import curve_from_rows, evaluate, emit_report, learning_curves


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="hill", choices=("undulating", "hill", "directional"))
    ap.add_argument("--algo", default="qcpo", choices=ALGOS)
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--episodes", type=int, default=20)
    ap.add_argument("--out", default="runs/hill_demo")
    args = ap.parse_args(argv)

    scfg = ScenarioConfig.defaults(args.scenario)
    tcfg = dataclasses.replace(TrainConfig(), algo=args.algo, total_steps=args.steps)
    result = train(scfg, tcfg, seed=args.seed, out_dir=args.out, tag=args.algo)

    env = NavEnv.from_seed(scfg, seed=args.seed)
    record, logs = evaluate(result.policy, env, n_episodes=args.episodes, keep_logs=True)
    summary = learning_curves([curve_from_rows(result.rows)])
    files = emit_report(
        args.out,
        {"scenario": args.scenario, "algo": args.algo, "seed": args.seed},
        records=[record],
        curve_summaries={args.algo: summary},
        episode_logs=logs,
        env=env,
    )

    print(f"success={record.success_rate:.2f} path_eff={record.path_efficiency:.3f} "
          f"energy={record.energy_per_m:.1f} J/m violations={record.violation_rate:.4f} "
          f"delta_final={result.delta_final:.4f}")
    for f in files:
        print("wrote", f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
