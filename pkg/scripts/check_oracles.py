"""Exercise the exact discrete solvers and the cost calibration pipeline:
value iteration vs asymmetric Dijkstra on random grid worlds, then an
embedding calibrated against true traversal costs on a discretized hill.

Usage:
    python3 scripts/check_oracles.py --grids 10 --transitions 2500
"""

import argparse
import sys

import numpy as np

from qnav.envs import EMBED_IN_DIM, NavEnv, ScenarioConfig
from qnav.oracle import (
    check_quasimetric_axioms,
    discretize_env,
    random_grid_cmdp,
    rollout_dataset,
    tiny_example,
    verify_prop1,
)
from qnav.quasimetric import QuasimetricModel, calibrate_to_cost
from qnav.rng import substream


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grids", type=int, default=10)
    ap.add_argument("--size", type=int, default=8)
    ap.add_argument("--transitions", type=int, default=2500)
    ap.add_argument("--epochs", type=int, default=120)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rep = verify_prop1(tiny_example())
    print(f"four-state example: ok={rep.ok} max|-V - dijkstra|={rep.max_abs_diff:.2e}")
    failures = 0
    for i in range(args.grids):
        cmdp = random_grid_cmdp(args.size, np.random.default_rng(args.seed * 1000 + i))
        rep = verify_prop1(cmdp)
        ax = check_quasimetric_axioms(cmdp)
        failures += (not rep.ok) + (ax.nonzero_self + ax.triangle_violations > 0)
        print(f"grid {i}: equivalence={'ok' if rep.ok else 'MISMATCH'} "
              f"states={rep.n_checked} unreachable={rep.n_unreachable} "
              f"asymmetric_pairs={ax.asymmetric_pairs}")
    if failures:
        print(f"{failures} checks FAILED")
        return 1

    env = NavEnv.from_seed(ScenarioConfig.defaults("hill"), seed=args.seed)
    disc = discretize_env(env, resolution=1.0, heading_bins=8, speed=1.0)
    ds = rollout_dataset(disc, args.transitions, substream(args.seed, "verify"))
    model = QuasimetricModel.create(EMBED_IN_DIM, substream(args.seed, "embed-init"))
    res = calibrate_to_cost(ds, model, epochs=args.epochs, rng=substream(args.seed, "negatives"))
    print(f"hill calibration: n={len(ds)} spearman={res.spearman:.3f} "
          f"scale={res.scale:.3f} d_uphill={res.mean_d_uphill:.3f} "
          f"d_downhill={res.mean_d_downhill:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
