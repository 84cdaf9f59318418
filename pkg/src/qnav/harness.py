"""Benchmark runner: metric suite, ablation orchestration, curve aggregation,
and report files (CSV + built-in SVG plots).

Evaluation is deterministic given the seed list and always uses the policy
mean action. Path efficiency compares each successful episode against the
best known feasible path: the string-pulled shortest safe route of the
discretized terrain graph, or the episode's own path if the policy beat it,
so the ratio is ≥ 1 by construction.
"""

from __future__ import annotations

import dataclasses
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import envs as envmod
from . import oracle as oraclemod
from . import terrain as terra
from .cpo import GaussianPolicy, TrainConfig, TrainResult, train, variant_config
from .errors import InputError, NumericError
from .io_utils import write_csv
from .rng import substream

EVAL_EPISODES_DEFAULT = 20
EVAL_SEEDS_DEFAULT = tuple(range(1, 11))

METRICS_COLUMNS = [
    "success_rate", "path_efficiency", "energy_per_m", "violation_rate",
    "sample_efficiency", "episodes",
]

ABLATION_VARIANTS = ("full", "no_qe", "no_act")


@dataclass
class MetricsRecord:
    """Aggregate evaluation metrics; see the module docstring for definitions."""

    success_rate: float
    path_efficiency: float  # nan when no episode succeeded
    energy_per_m: float
    violation_rate: float
    sample_efficiency: float  # nan unless filled from learning curves
    episodes: int
    seeds: tuple[int, ...]

    def row(self) -> list:
        return [
            self.success_rate, self.path_efficiency, self.energy_per_m,
            self.violation_rate, self.sample_efficiency, self.episodes,
        ]


@dataclass
class EpisodeLog:
    transitions: list[envmod.Transition]
    reason: str
    seed: int
    oracle_len: float = float("nan")  # best known feasible path length, successful episodes only

    @property
    def reached_goal(self) -> bool:
        return self.reason == "goal"

    @property
    def length_m(self) -> float:
        return sum(
            math.hypot(tr.next_state.x - tr.state.x, tr.next_state.y - tr.state.y)
            for tr in self.transitions
        )


# ---------------------------------------------------------------------------
# oracle path lengths


class _OraclePaths:
    """Meters-shortest safe routes to the goal from every discrete state.

    One backward Dijkstra over the reversed feasible graph serves every
    episode start; paths are then string-pulled (greedy straight-segment
    shortcutting through safe terrain) to remove grid-connectivity overhang.
    """

    def __init__(self, env: envmod.NavEnv, resolution: float | None = None):
        self.env = env
        disc = oraclemod.discretize_env(env, resolution=resolution)
        self.disc = disc
        cmdp = disc.cmdp
        mask = cmdp.feasible_mask()
        n = cmdp.n_states
        # reversed edges weighted by planar meters
        rev_adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for e in np.where(mask)[0]:
            rev_adj[cmdp.edge_dst[e]].append((int(cmdp.edge_src[e]), float(disc.edge_length[e])))
        import heapq

        dist = np.full(n, np.inf)
        parent = np.full(n, -1, dtype=np.int64)
        dist[cmdp.goal] = 0.0
        heap = [(0.0, cmdp.goal)]
        done = np.zeros(n, dtype=bool)
        while heap:
            d, s = heapq.heappop(heap)
            if done[s]:
                continue
            done[s] = True
            for t, wl in rev_adj[s]:
                nd = d + wl
                if nd < dist[t]:
                    dist[t] = nd
                    parent[t] = s
                    heapq.heappush(heap, (nd, t))
        self.dist = dist
        self.parent = parent

    def length_from(self, x: float, y: float) -> float:
        """Best known feasible path length from (x, y) to the goal in meters."""
        best = np.inf
        hb = self.disc.cmdp.meta["heading_bins"]
        start_ids = [self.disc.state_id(x, y, 2.0 * math.pi * k / hb) for k in range(hb)]
        start_ids = [s for s in set(start_ids) if np.isfinite(self.dist[s])]
        if not start_ids:
            return np.inf
        for sid in start_ids:
            waypoints = [(x, y)]
            s = sid
            while s >= 0:
                waypoints.append(tuple(self.disc.positions[s]))
                if s == self.disc.cmdp.goal:
                    break
                s = int(self.parent[s])
            pulled = _string_pull(waypoints, self.env)
            best = min(best, _polyline_length(pulled))
        return best


def _polyline_length(pts: list[tuple[float, float]]) -> float:
    return sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(pts, pts[1:]))


def _segment_safe(env: envmod.NavEnv, a: tuple[float, float], b: tuple[float, float],
                  step_m: float = 0.25) -> bool:
    """Sampled safety of a straight segment traversed at its own heading."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    length = math.hypot(dx, dy)
    if length < 1e-9:
        return True
    heading = math.atan2(dy, dx)
    n = max(2, int(length / step_m) + 1)
    cfg = env.cfg
    margin = env.grid.cell_size
    for i in range(n + 1):
        t = i / n
        x, y = a[0] + t * dx, a[1] + t * dy
        if not (margin <= x <= env.grid.size_x - margin and margin <= y <= env.grid.size_y - margin):
            return False
        f = terra.sample_features(env.grid, x, y, env.goal, 0.0)
        violated, _ = envmod.safety_indicator(f, heading, cfg)
        if violated:
            return False
    return True


def _string_pull(waypoints: list[tuple[float, float]], env: envmod.NavEnv) -> list[tuple[float, float]]:
    """Greedy shortcutting: from each anchor jump to the farthest waypoint
    reachable by a safe straight segment."""
    if len(waypoints) <= 2:
        return waypoints
    out = [waypoints[0]]
    i = 0
    while i < len(waypoints) - 1:
        j = len(waypoints) - 1
        while j > i + 1 and not _segment_safe(env, waypoints[i], waypoints[j]):
            j -= 1
        out.append(waypoints[j])
        i = j
    return out


# ---------------------------------------------------------------------------
# evaluation


def run_episode(env: envmod.NavEnv, policy: GaussianPolicy,
                rng: np.random.Generator | None) -> EpisodeLog:
    """One mean-action episode; rng only jitters the start pose."""
    cfg = env.cfg
    state = env.reset(rng)
    transitions: list[envmod.Transition] = []
    reason = "step_limit"
    for _ in range(cfg.max_steps):
        feats = env.features_at(state)
        a = policy.mean(envmod.encode_state(cfg, state, feats))
        tr = env.step(envmod.ActionCmd.clamped(float(a[0]), float(a[1]), cfg))
        transitions.append(tr)
        state = tr.next_state
        if tr.terminal:
            reason = tr.reason
            break
    return EpisodeLog(transitions=transitions, reason=reason, seed=-1)


def metrics_from_logs(logs: list[EpisodeLog], seeds: tuple[int, ...]) -> MetricsRecord:
    """Pure aggregation: the record is fully determined by the episode logs."""
    n_steps = sum(len(ep.transitions) for ep in logs)
    n_violated = sum(sum(tr.violated for tr in ep.transitions) for ep in logs)
    energy = sum(sum(tr.energy_j for tr in ep.transitions) for ep in logs)
    meters = sum(ep.length_m for ep in logs)
    effs = [
        ep.length_m / ep.oracle_len
        for ep in logs
        if ep.reached_goal and np.isfinite(ep.oracle_len) and ep.oracle_len > 1e-9
    ]
    succ = sum(ep.reached_goal for ep in logs)
    return MetricsRecord(
        success_rate=succ / len(logs) if logs else 0.0,
        path_efficiency=float(np.mean(effs)) if effs else float("nan"),
        energy_per_m=energy / meters if meters > 1e-9 else float("nan"),
        violation_rate=n_violated / n_steps if n_steps else 0.0,
        sample_efficiency=float("nan"),
        episodes=len(logs),
        seeds=tuple(seeds),
    )


def evaluate(
    policy: GaussianPolicy,
    env: envmod.NavEnv,
    n_episodes: int = EVAL_EPISODES_DEFAULT,
    seeds: tuple[int, ...] = EVAL_SEEDS_DEFAULT,
    oracle_resolution: float | None = 1.0,
    keep_logs: bool = False,
) -> tuple[MetricsRecord, list[EpisodeLog]]:
    """Mean-action evaluation over len(seeds) x n_episodes episodes.

    keep_logs only controls whether the logs are returned; the metrics are
    always computed from them via metrics_from_logs.
    """
    if n_episodes < 1 or not seeds:
        raise InputError("need at least one episode and one seed")
    paths = _OraclePaths(env, resolution=oracle_resolution)
    logs: list[EpisodeLog] = []
    for seed in seeds:
        rng = substream(seed, "eval")
        for _ in range(n_episodes):
            ep = run_episode(env, policy, rng)
            ep.seed = seed
            if ep.reached_goal and ep.transitions:
                start = ep.transitions[0].state
                # the realized route is itself feasible: best-known lower bound
                ep.oracle_len = min(paths.length_from(start.x, start.y), ep.length_m)
            logs.append(ep)
    record = metrics_from_logs(logs, tuple(seeds))
    return record, logs if keep_logs else []


# ---------------------------------------------------------------------------
# learning-curve aggregation


@dataclass
class CurveSummary:
    steps: np.ndarray
    mean_return: np.ndarray
    std_return: np.ndarray
    mean_violation: np.ndarray
    std_violation: np.ndarray
    sample_efficiency: float
    n_seeds: int


def _smooth(x: np.ndarray, window: int) -> np.ndarray:
    if window <= 1:
        return x.astype(np.float64)
    kernel = np.ones(window) / window
    pad = np.concatenate([np.repeat(x[0], window - 1), x])
    return np.convolve(pad, kernel, mode="valid")


def sample_efficiency_from_curve(steps: np.ndarray, returns: np.ndarray, window: int = 1) -> float:
    """First step count where the smoothed return reaches 95% of its final value.

    The 95% line is interpreted in the span from the curve minimum to the
    final value, so negative-return curves behave the same as positive ones.
    """
    sm = _smooth(np.asarray(returns, dtype=np.float64), window)
    final = sm[-1]
    lo = float(np.min(sm))
    thresh = lo + 0.95 * (final - lo)
    idx = np.where(sm >= thresh)[0]
    return float(steps[idx[0]]) if len(idx) else float("nan")


def learning_curves(
    logs: list[tuple[np.ndarray, np.ndarray, np.ndarray]],
    window: int = 1,
) -> CurveSummary:
    """Aggregate per-seed (steps, return, violation) series to mean +- std.

    Unequal lengths truncate to the shortest with a warning.
    """
    if not logs:
        raise InputError("no learning logs to aggregate")
    lengths = [len(s[0]) for s in logs]
    n = min(lengths)
    if max(lengths) != n:
        warnings.warn(
            f"learning logs have unequal lengths {lengths}; truncating to {n}", stacklevel=2
        )
    steps = np.asarray(logs[0][0][:n], dtype=np.float64)
    rets = np.stack([np.asarray(lg[1][:n], dtype=np.float64) for lg in logs])
    viol = np.stack([np.asarray(lg[2][:n], dtype=np.float64) for lg in logs])
    mean_ret = rets.mean(axis=0)
    return CurveSummary(
        steps=steps,
        mean_return=mean_ret,
        std_return=rets.std(axis=0),
        mean_violation=viol.mean(axis=0),
        std_violation=viol.std(axis=0),
        sample_efficiency=sample_efficiency_from_curve(steps, mean_ret, window),
        n_seeds=len(logs),
    )


def curve_from_rows(rows: list[list]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(steps, mean_return, violation_rate) arrays from train() log rows."""
    arr = np.asarray([[r[1], r[2], r[4]] for r in rows], dtype=np.float64)
    ret = arr[:, 1]
    # iterations whose batch finished no episode log nan returns; carry forward
    for i in range(len(ret)):
        if not np.isfinite(ret[i]):
            ret[i] = ret[i - 1] if i else 0.0
    return arr[:, 0], ret, arr[:, 2]


# ---------------------------------------------------------------------------
# ablations


@dataclass
class AblationRow:
    variant: str
    record: MetricsRecord
    delta_success_pct: float
    delta_violation_pct: float
    diverged: bool = False

    def formatted(self) -> dict[str, str]:
        """Paper-style strings like '85.3 (-9.9%)'."""

        def fmt(value: float, delta: float, scale: float = 100.0) -> str:
            base = f"{value * scale:.1f}"
            if self.variant == "full" or not np.isfinite(delta):
                return base
            return f"{base} ({delta:+.1f}%)"

        return {
            "variant": self.variant,
            "success": fmt(self.record.success_rate, self.delta_success_pct),
            "violation": fmt(self.record.violation_rate, self.delta_violation_pct),
        }


def _pct_delta(value: float, base: float) -> float:
    if not np.isfinite(base) or abs(base) < 1e-12:
        return float("nan")
    return (value - base) / base * 100.0


def run_ablation(
    scenario_cfg: envmod.ScenarioConfig,
    base_train: TrainConfig,
    seeds: tuple[int, ...],
    out_dir: str,
    eval_episodes: int = EVAL_EPISODES_DEFAULT,
) -> list[AblationRow]:
    """Train full / no_qe / no_act under shared seed streams and compare.

    Every variant at a given seed shares terrain and initialization because
    all randomness is drawn from named substreams of the same seed.
    """
    if len(seeds) < 5:
        raise InputError("ablation requires at least 5 seeds")
    os.makedirs(out_dir, exist_ok=True)
    per_variant: dict[str, list[MetricsRecord]] = {v: [] for v in ABLATION_VARIANTS}
    diverged: dict[str, bool] = {v: False for v in ABLATION_VARIANTS}
    for variant in ABLATION_VARIANTS:
        tcfg = variant_config(base_train, variant)
        for seed in seeds:
            tag = f"{variant}_s{seed}"
            try:
                result = train(scenario_cfg, tcfg, seed, out_dir, tag=tag)
            except NumericError:
                diverged[variant] = True
                continue
            env = envmod.NavEnv.from_seed(scenario_cfg, seed)
            record, _ = evaluate(result.policy, env, n_episodes=eval_episodes,
                                 seeds=(seed + 1000,))
            per_variant[variant].append(record)

    def mean_record(records: list[MetricsRecord]) -> MetricsRecord:
        if not records:
            return MetricsRecord(*(float("nan"),) * 5, episodes=0, seeds=())
        effs = [r.path_efficiency for r in records if np.isfinite(r.path_efficiency)]
        return MetricsRecord(
            success_rate=float(np.mean([r.success_rate for r in records])),
            path_efficiency=float(np.mean(effs)) if effs else float("nan"),
            energy_per_m=float(np.nanmean([r.energy_per_m for r in records])),
            violation_rate=float(np.mean([r.violation_rate for r in records])),
            sample_efficiency=float("nan"),
            episodes=sum(r.episodes for r in records),
            seeds=tuple(seeds),
        )

    full = mean_record(per_variant["full"])
    rows = []
    for variant in ABLATION_VARIANTS:
        rec = mean_record(per_variant[variant])
        rows.append(
            AblationRow(
                variant=variant,
                record=rec,
                delta_success_pct=_pct_delta(rec.success_rate, full.success_rate),
                delta_violation_pct=_pct_delta(rec.violation_rate, full.violation_rate),
                diverged=diverged[variant],
            )
        )
    return rows


# ---------------------------------------------------------------------------
# reports


def write_metrics_csv(path: str, records: list[MetricsRecord], meta: dict) -> None:
    write_csv(path, METRICS_COLUMNS, [r.row() for r in records], meta)


ABLATION_COLUMNS = [
    "variant", "success_rate", "path_efficiency", "energy_per_m",
    "violation_rate", "delta_success_pct", "delta_violation_pct", "diverged",
]


def write_ablation_csv(path: str, rows: list[AblationRow], meta: dict) -> None:
    table = []
    for row in rows:
        r = row.record
        table.append([
            ABLATION_VARIANTS.index(row.variant),
            r.success_rate, r.path_efficiency, r.energy_per_m, r.violation_rate,
            row.delta_success_pct, row.delta_violation_pct, int(row.diverged),
        ])
    write_csv(path, ABLATION_COLUMNS, table, dict(meta, variant_order=list(ABLATION_VARIANTS)))


def write_episode_logs(out_dir: str, logs: list[EpisodeLog], meta: dict) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for i, ep in enumerate(logs):
        p = os.path.join(out_dir, f"episode_{ep.seed}_{i:03d}.csv")
        envmod.write_trajectory_csv(
            p, ep.transitions,
            dict(meta, reason=ep.reason, seed=ep.seed, oracle_len=ep.oracle_len),
        )
        written.append(p)
    return written


# ---------------------------------------------------------------------------
# minimal SVG plotting (no external renderer in the test path)


def _svg_header(w: int, h: int) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
    ]


def _fmt_pts(pts: list[tuple[float, float]]) -> str:
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)


class SvgCanvas:
    """Tiny deterministic SVG builder: polylines, polygons, text, circles."""

    def __init__(self, width: int = 640, height: int = 480):
        self.width = width
        self.height = height
        self.parts = _svg_header(width, height)

    def polyline(self, pts: list[tuple[float, float]], color: str, width: float = 1.5,
                 opacity: float = 1.0) -> None:
        if len(pts) < 2:
            return
        self.parts.append(
            f'<polyline points="{_fmt_pts(pts)}" fill="none" stroke="{color}" '
            f'stroke-width="{width}" stroke-opacity="{opacity}"/>'
        )

    def polygon(self, pts: list[tuple[float, float]], color: str, opacity: float = 0.25) -> None:
        if len(pts) < 3:
            return
        self.parts.append(
            f'<polygon points="{_fmt_pts(pts)}" fill="{color}" fill-opacity="{opacity}" stroke="none"/>'
        )

    def circle(self, x: float, y: float, r: float, color: str) -> None:
        self.parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r:.2f}" fill="{color}"/>')

    def text(self, x: float, y: float, s: str, size: int = 12, color: str = "#222") -> None:
        self.parts.append(
            f'<text x="{x:.2f}" y="{y:.2f}" font-size="{size}" '
            f'font-family="sans-serif" fill="{color}">{s}</text>'
        )

    def line(self, a: tuple[float, float], b: tuple[float, float], color: str = "#999",
             width: float = 1.0) -> None:
        self.parts.append(
            f'<line x1="{a[0]:.2f}" y1="{a[1]:.2f}" x2="{b[0]:.2f}" y2="{b[1]:.2f}" '
            f'stroke="{color}" stroke-width="{width}"/>'
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.parts) + "\n</svg>\n")


_CURVE_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]


def plot_learning_curves(
    path: str,
    summaries: dict[str, CurveSummary],
    title: str = "learning curves",
) -> None:
    """Mean return vs steps with +-1 std bands, one series per label."""
    W, H = 640, 480
    ml, mr, mt, mb = 60, 20, 30, 45
    canvas = SvgCanvas(W, H)
    finite_vals = []
    xmax = 1.0
    for s in summaries.values():
        finite_vals.extend((s.mean_return - s.std_return).tolist())
        finite_vals.extend((s.mean_return + s.std_return).tolist())
        xmax = max(xmax, float(s.steps[-1]))
    finite_vals = [v for v in finite_vals if np.isfinite(v)]
    ymin, ymax = (min(finite_vals), max(finite_vals)) if finite_vals else (0.0, 1.0)
    if ymax - ymin < 1e-9:
        ymax = ymin + 1.0

    def sx(x: float) -> float:
        return ml + (x / xmax) * (W - ml - mr)

    def sy(y: float) -> float:
        return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb)

    canvas.line((ml, H - mb), (W - mr, H - mb))
    canvas.line((ml, mt), (ml, H - mb))
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = frac * xmax
        canvas.line((sx(xv), H - mb), (sx(xv), H - mb + 4))
        canvas.text(sx(xv) - 12, H - mb + 18, f"{xv:.0f}", size=10)
        yv = ymin + frac * (ymax - ymin)
        canvas.line((ml - 4, sy(yv)), (ml, sy(yv)))
        canvas.text(8, sy(yv) + 4, f"{yv:.0f}", size=10)
    canvas.text(W // 2 - 30, H - 10, "steps", size=12)
    canvas.text(10, 20, title, size=13)

    for i, (label, s) in enumerate(sorted(summaries.items())):
        color = _CURVE_COLORS[i % len(_CURVE_COLORS)]
        upper = [(sx(x), sy(y)) for x, y in zip(s.steps, s.mean_return + s.std_return)]
        lower = [(sx(x), sy(y)) for x, y in zip(s.steps, s.mean_return - s.std_return)]
        canvas.polygon(upper + lower[::-1], color)
        canvas.polyline([(sx(x), sy(y)) for x, y in zip(s.steps, s.mean_return)], color, 2.0)
        canvas.text(W - mr - 150, mt + 16 * (i + 1), label, size=11, color=color)
    canvas.save(path)


def _marching_squares(z: np.ndarray, level: float, cell: float) -> list[list[tuple[float, float]]]:
    """Isoline segments of a cell-centered raster at one level (world coords)."""
    ny, nx = z.shape
    segs = []
    for iy in range(ny - 1):
        for ix in range(nx - 1):
            corners = [z[iy, ix], z[iy, ix + 1], z[iy + 1, ix + 1], z[iy + 1, ix]]
            idx = sum(1 << i for i, c in enumerate(corners) if c > level)
            if idx in (0, 15):
                continue
            x0, y0 = (ix + 0.5) * cell, (iy + 0.5) * cell

            def interp(c1: float, c2: float) -> float:
                return 0.5 if c2 == c1 else (level - c1) / (c2 - c1)

            pts = {
                "b": (x0 + interp(corners[0], corners[1]) * cell, y0),
                "r": (x0 + cell, y0 + interp(corners[1], corners[2]) * cell),
                "t": (x0 + interp(corners[3], corners[2]) * cell, y0 + cell),
                "l": (x0, y0 + interp(corners[0], corners[3]) * cell),
            }
            edges_for = {
                1: ("l", "b"), 2: ("b", "r"), 3: ("l", "r"), 4: ("t", "r"),
                5: ("l", "t", "b", "r"), 6: ("b", "t"), 7: ("l", "t"),
                8: ("t", "l"), 9: ("b", "t"), 10: ("b", "l", "t", "r"),
                11: ("t", "r"), 12: ("l", "r"), 13: ("b", "r"), 14: ("l", "b"),
            }[idx]
            for k in range(0, len(edges_for), 2):
                segs.append([pts[edges_for[k]], pts[edges_for[k + 1]]])
    return segs


def plot_paths(
    path: str,
    env: envmod.NavEnv,
    episode_paths: list[list[tuple[float, float]]],
    labels: list[str] | None = None,
    n_levels: int = 8,
) -> None:
    """Terrain contour map with episode paths, start and goal markers."""
    W = H = 560
    margin = 30
    grid = env.grid
    scale = (W - 2 * margin) / max(grid.size_x, grid.size_y)

    def sx(x: float) -> float:
        return margin + x * scale

    def sy(y: float) -> float:
        return H - margin - y * scale  # world y up

    canvas = SvgCanvas(W, H)
    z = grid.elevation
    lo, hi = float(z.min()), float(z.max())
    if hi - lo > 1e-9:
        for i in range(1, n_levels + 1):
            level = lo + i * (hi - lo) / (n_levels + 1)
            for seg in _marching_squares(z, level, grid.cell_size):
                canvas.polyline([(sx(px), sy(py)) for px, py in seg], "#b0a080", 0.8)
    for i, pts in enumerate(episode_paths):
        color = _CURVE_COLORS[i % len(_CURVE_COLORS)]
        canvas.polyline([(sx(px), sy(py)) for px, py in pts], color, 1.6, opacity=0.85)
        if labels and i < len(labels):
            canvas.text(W - 150, 20 + 14 * i, labels[i], size=10, color=color)
    sx0, sy0 = env.cfg.start_xy
    gx0, gy0 = env.cfg.goal_xy
    canvas.circle(sx(sx0), sy(sy0), 5, "#2ca02c")
    canvas.circle(sx(gx0), sy(gy0), 5, "#d62728")
    canvas.text(sx(sx0) + 7, sy(sy0) + 4, "start", size=10)
    canvas.text(sx(gx0) + 7, sy(gy0) + 4, "goal", size=10)
    canvas.save(path)


def emit_report(
    out_dir: str,
    meta: dict,
    records: list[MetricsRecord] | None = None,
    ablation: list[AblationRow] | None = None,
    curve_summaries: dict[str, CurveSummary] | None = None,
    episode_logs: list[EpisodeLog] | None = None,
    env: envmod.NavEnv | None = None,
) -> list[str]:
    """Write whichever artifacts were provided; returns the file list."""
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []
    if records is not None:
        p = os.path.join(out_dir, "metrics.csv")
        write_metrics_csv(p, records, meta)
        written.append(p)
    if ablation is not None:
        p = os.path.join(out_dir, "ablation.csv")
        write_ablation_csv(p, ablation, meta)
        written.append(p)
    if curve_summaries:
        p = os.path.join(out_dir, "learning_curves.svg")
        plot_learning_curves(p, curve_summaries)
        written.append(p)
    if episode_logs:
        written.extend(write_episode_logs(os.path.join(out_dir, "episodes"), episode_logs, meta))
        if env is not None:
            p = os.path.join(out_dir, "paths.svg")
            paths = [
                [(tr.state.x, tr.state.y) for tr in ep.transitions]
                + [(ep.transitions[-1].next_state.x, ep.transitions[-1].next_state.y)]
                for ep in episode_logs[:6]
                if ep.transitions
            ]
            plot_paths(p, env, paths, labels=[ep.reason or "running" for ep in episode_logs[:6]])
            written.append(p)
    return written
