"""`qnav` command line: one entry point for terrain generation, training,
evaluation, ablations, oracle verification, embedding fits, and plots.

Exit codes: 0 success, 1 domain error (bad config values, numeric failures,
missing files), 2 usage error (unknown flags, malformed invocations).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import envs as envmod
from . import oracle as oraclemod
from . import terrain as terra
from .config import (
    RunConfig,
    apply_overrides,
    load_run_config,
    parse_seed_range,
    run_config_to_dict,
    save_run_config,
)
from .cpo import TrainConfig, load_policy, train
from .errors import QnavError
from .harness import (
    curve_from_rows,
    emit_report,
    evaluate,
    learning_curves,
    plot_learning_curves,
    plot_paths,
    run_ablation,
    write_ablation_csv,
)
from .io_utils import read_csv
from .quasimetric import read_replay_csv, save_embedding, train_embedding, QuasimetricModel, fit_scale
from .rng import substream

_OVERRIDE_KEYS = (
    ("--scenario", "scenario.scenario"),
    ("--algo", "train.algo"),
    ("--steps", "train.total_steps"),
    ("--seed", "seed"),
    ("--tag", "tag"),
    ("--out", "out_dir"),
)


def _base_config(args: argparse.Namespace) -> tuple[RunConfig, list[str]]:
    """Config file (if given) + flag overrides, with the override log."""
    if getattr(args, "config", None):
        cfg = load_run_config(args.config)
    else:
        cfg = RunConfig()
    overrides: dict[str, object] = {}
    for flag, key in _OVERRIDE_KEYS:
        name = flag.lstrip("-").replace("-", "_")
        value = getattr(args, name, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "set", None):
        for item in args.set:
            if "=" not in item:
                raise QnavError(f"--set expects key=value, got {item!r}")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v.strip()
    if getattr(args, "no_qe", False):
        overrides["no_qe"] = True
    if getattr(args, "no_act", False):
        overrides["no_act"] = True
    # scenario name switches in the scenario-level defaults before other keys
    if "scenario.scenario" in overrides and not getattr(args, "config", None):
        cfg = dataclasses.replace(
            cfg, scenario=envmod.ScenarioConfig.defaults(str(overrides.pop("scenario.scenario")))
        )
    cfg, log = apply_overrides(cfg, overrides)
    return cfg, log


def _emit_override_log(log: list[str]) -> None:
    for line in log:
        print(line)


def _resolved_path(out_dir: str, tag: str) -> str:
    return os.path.join(out_dir, f"{tag}_config.json")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_terrain(args: argparse.Namespace) -> int:
    cfg, log = _base_config(args)
    _emit_override_log(log)
    grid = envmod.build_terrain(cfg.scenario, cfg.seed)
    out = cfg.resolved_out_dir()
    os.makedirs(out, exist_ok=True)
    terra.export_grid(grid, os.path.join(out, f"{cfg.tag}_terrain"))
    save_run_config(_resolved_path(out, cfg.tag), cfg)
    print(f"terrain {cfg.scenario.scenario} {grid.shape[0]}x{grid.shape[1]} "
          f"max_slope={terra.max_cell_slope_deg(grid.elevation, grid.cell_size):.2f}deg -> {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg, log = _base_config(args)
    _emit_override_log(log)
    out = cfg.resolved_out_dir()
    os.makedirs(out, exist_ok=True)
    save_run_config(_resolved_path(out, cfg.tag), cfg)
    result = train(cfg.scenario, cfg.resolved_train(), cfg.seed, out, tag=cfg.tag)
    last = result.rows[-1] if result.rows else None
    print(f"trained {result.total_steps} steps; delta_final={result.delta_final:.4f}; "
          f"curve={result.learning_csv}")
    if last is not None:
        print(f"final batch: return={last[2]:.2f} success={last[3]:.2f} violations={last[4]:.4f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg, log = _base_config(args)
    _emit_override_log(log)
    policy, _value_net, _meta = load_policy(args.ckpt)
    env = envmod.NavEnv.from_seed(cfg.scenario, cfg.seed)
    seeds = parse_seed_range(args.seeds) if args.seeds else cfg.eval_seeds
    episodes = args.episodes or cfg.episodes
    record, logs = evaluate(policy, env, n_episodes=episodes, seeds=seeds, keep_logs=True)
    out = cfg.resolved_out_dir()
    os.makedirs(out, exist_ok=True)
    cfg = dataclasses.replace(cfg, episodes=episodes, eval_seeds=tuple(seeds))
    save_run_config(_resolved_path(out, cfg.tag), cfg)
    meta = {"config": run_config_to_dict(cfg), "ckpt": args.ckpt}
    emit_report(out, meta, records=[record], episode_logs=logs, env=env)
    print(f"success_rate={record.success_rate:.3f} violation_rate={record.violation_rate:.4f} "
          f"energy_per_m={record.energy_per_m:.2f} path_efficiency={record.path_efficiency:.3f} "
          f"episodes={record.episodes}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg, log = _base_config(args)
    _emit_override_log(log)
    seeds = parse_seed_range(args.seeds) if args.seeds else tuple(range(cfg.seed, cfg.seed + 5))
    out = cfg.resolved_out_dir()
    os.makedirs(out, exist_ok=True)
    save_run_config(_resolved_path(out, cfg.tag), cfg)
    rows = run_ablation(cfg.scenario, cfg.train, seeds, out, eval_episodes=cfg.episodes)
    meta = {"config": run_config_to_dict(cfg), "seeds": list(seeds)}
    write_ablation_csv(os.path.join(out, "ablation.csv"), rows, meta)
    for row in rows:
        f = row.formatted()
        star = " [diverged]" if row.diverged else ""
        print(f"{f['variant']:7s} success={f['success']:16s} violation={f['violation']}{star}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    tol = args.tol
    if args.cmdp:
        cmdp = oraclemod.load_cmdp(args.cmdp)
        report = oraclemod.verify_prop1(cmdp, tol=tol)
        status = "OK" if report.ok else f"FAILED (max diff {report.max_abs_diff:.3e})"
        print(f"prop1: 1/1 {status}" if report.ok else f"prop1: 0/1 {status}")
        return 0 if report.ok else 1
    n = args.random
    rng = substream(args.seed, "verify")
    n_ok = 0
    worst = 0.0
    for _ in range(n):
        cmdp = oraclemod.random_grid_cmdp(args.size, rng)
        report = oraclemod.verify_prop1(cmdp, tol=tol)
        n_ok += report.ok
        worst = max(worst, report.max_abs_diff)
    print(f"prop1: {n_ok}/{n} OK (max |V*+dijkstra| diff {worst:.3e})"
          if n_ok == n else f"prop1: {n_ok}/{n} FAILED")
    return 0 if n_ok == n else 1


def cmd_embed_train(args: argparse.Namespace) -> int:
    ds = read_replay_csv(args.replay)
    rng = substream(args.seed, "negatives")
    model = QuasimetricModel.create(ds.x.shape[1], substream(args.seed, "embed-init"),
                                    embed_dim=args.embed_dim)
    loss = train_embedding(model, ds, args.epochs, rng, margin=args.margin)
    d = np.asarray(model.distance(ds.x, ds.y))
    model.scale = fit_scale(d, ds.cost)
    save_embedding(args.out, model, {"replay": args.replay, "epochs": args.epochs})
    print(f"embedding trained on {len(ds.cost)} transitions; "
          f"final loss={loss:.4f} scale={model.scale:.4f} -> {args.out}")
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    curves = []
    for path in args.curves:
        _header, rows, _comments = read_csv(path)
        if not len(rows):
            raise QnavError(f"learning-curve file {path} has no data rows")
        curves.append(curve_from_rows(list(rows)))
    summary = learning_curves(curves, window=args.window)
    plot_learning_curves(args.out, {args.label: summary})
    print(f"plotted {len(curves)} curve(s); sample_efficiency={summary.sample_efficiency:.0f} "
          f"-> {args.out}")
    return 0


# ---------------------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser, train_flags: bool = False) -> None:
    p.add_argument("--config", help="JSON run-config file; flags override its values")
    p.add_argument("--scenario", help="scenario name: undulating | hill | directional")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tag", default=None, help="output filename prefix")
    p.add_argument("--out", default=None, help="output directory (under QNAV_OUT_DIR)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key, e.g. --set train.qe_coef=0.2")
    if train_flags:
        p.add_argument("--algo", choices=("qcpo", "cpo", "lagrangian"), default=None)
        p.add_argument("--steps", type=int, default=None, help="total environment steps")
        p.add_argument("--no-qe", action="store_true", help="disable the embedding advantage")
        p.add_argument("--no-act", action="store_true", help="disable constraint tightening")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qnav",
        description="asymmetric-cost navigation: training, evaluation and oracles",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-terrain", help="generate and export a scenario terrain")
    _add_config_flags(p)
    p.set_defaults(func=cmd_gen_terrain)

    p = sub.add_parser("train", help="train a policy on a scenario")
    _add_config_flags(p, train_flags=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint with the mean action")
    _add_config_flags(p)
    p.add_argument("--ckpt", required=True, help="policy checkpoint path")
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--seeds", default=None, help="evaluation seeds, e.g. 1..10")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare full / no_qe / no_act")
    _add_config_flags(p, train_flags=True)
    p.add_argument("--seeds", default=None, help="training seeds, e.g. 0..4")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("verify", help="cross-check value iteration against Dijkstra")
    p.add_argument("--cmdp", default=None, help="saved CMDP file to verify")
    p.add_argument("--random", type=int, default=20, help="number of random grid CMDPs")
    p.add_argument("--size", type=int, default=8, help="random grid side length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("embed-train", help="fit a quasimetric embedding to a replay CSV")
    p.add_argument("--replay", required=True)
    p.add_argument("--out", required=True, help="embedding checkpoint path")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--embed-dim", type=int, default=16)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_embed_train)

    p = sub.add_parser("plot", help="render learning-curve CSVs to SVG")
    p.add_argument("curves", nargs="+", help="learning-curve CSV files")
    p.add_argument("--out", required=True, help="output SVG path")
    p.add_argument("--label", default="train")
    p.add_argument("--window", type=int, default=1, help="smoothing window (iterations)")
    p.set_defaults(func=cmd_plot)
    return ap


def parse_and_dispatch(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage errors; pass both through
        return int(exc.code or 0)
    try:
        return args.func(args)
    except QnavError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(parse_and_dispatch())


if __name__ == "__main__":
    main()
