"""Compare the full method against its two ablations (no quasimetric shaping,
no constraint tightening) across seeds with shared terrain/init streams.

Usage:
    python3 scripts/run_ablation.py --seeds 0..4 --out runs/ablation
"""

import argparse
import dataclasses
import sys

from qnav.config import parse_seed_range
from qnav.cpo import TrainConfig
from qnav.envs import ScenarioConfig
from qnav.harness import emit_report, run_ablation


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="hill", choices=("undulating", "hill", "directional"))
    ap.add_argument("--seeds", default="0..4", help="e.g. 0..4 or 0,2,5")
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--episodes", type=int, default=20)
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args(argv)

    seeds = parse_seed_range(args.seeds)
    scfg = ScenarioConfig.defaults(args.scenario)
    tcfg = dataclasses.replace(TrainConfig(), total_steps=args.steps)
    rows = run_ablation(scfg, tcfg, seeds, args.out, eval_episodes=args.episodes)
    files = emit_report(args.out, {"scenario": args.scenario, "seeds": list(seeds)}, ablation=rows)

    print(f"{'variant':8s} {'success':>16s} {'violation':>16s} {'energy J/m':>12s}")
    for r in rows:
        f = r.formatted()
        flag = "  (diverged)" if r.diverged else ""
        print(f"{r.variant:8s} {f['success']:>16s} {f['violation']:>16s} "
              f"{r.record.energy_per_m:12.1f}{flag}")
    for f in files:
        print("wrote", f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
