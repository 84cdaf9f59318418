"""Exact solvers over small discrete navigation problems.

These are the ground-truth references the learned components are checked
against: value iteration with a per-step constraint filter, an asymmetric-cost
Dijkstra with deterministic lexicographic tie-breaking, closure-based
quasimetric axiom counting, and a discretizer that turns a continuous
scenario into a (cell, heading) graph with exact edge costs.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import envs as envmod
from . import terrain as terra
from .errors import ConfigError, InputError
from .quasimetric import TransitionDataset

VI_TOL = 1e-12


@dataclass
class DiscreteCMDP:
    """Deterministic goal-reaching problem with edge costs and a safety mask.

    Edges are parallel flat arrays; solvers ignore edges whose cost exceeds
    `delta_step` or that touch an unsafe state.
    """

    n_states: int
    goal: int
    edge_src: np.ndarray
    edge_action: np.ndarray
    edge_dst: np.ndarray
    edge_cost: np.ndarray
    safe: np.ndarray = field(default=None)  # type: ignore[assignment]
    delta_step: float = math.inf
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.edge_src = np.asarray(self.edge_src, dtype=np.int64)
        self.edge_action = np.asarray(self.edge_action, dtype=np.int64)
        self.edge_dst = np.asarray(self.edge_dst, dtype=np.int64)
        self.edge_cost = np.asarray(self.edge_cost, dtype=np.float64)
        if not (len(self.edge_src) == len(self.edge_action) == len(self.edge_dst) == len(self.edge_cost)):
            raise InputError("edge arrays must have equal length")
        if self.n_states < 1:
            raise InputError("need at least one state")
        if not (0 <= self.goal < self.n_states):
            raise InputError(f"goal {self.goal} out of range")
        for arr, name in ((self.edge_src, "src"), (self.edge_dst, "dst")):
            if len(arr) and (arr.min() < 0 or arr.max() >= self.n_states):
                raise InputError(f"edge {name} index out of range")
        if np.any(self.edge_cost < 0.0) or not np.all(np.isfinite(self.edge_cost)):
            raise InputError("edge costs must be finite and non-negative")
        if self.safe is None:
            self.safe = np.ones(self.n_states, dtype=bool)
        else:
            self.safe = np.asarray(self.safe, dtype=bool)
            if self.safe.shape != (self.n_states,):
                raise InputError("safe mask must have one entry per state")

    @property
    def n_edges(self) -> int:
        return len(self.edge_src)

    def feasible_mask(self) -> np.ndarray:
        """Edges usable under the safety mask and per-step cost bound."""
        return (
            (self.edge_cost <= self.delta_step)
            & self.safe[self.edge_src]
            & self.safe[self.edge_dst]
        )

    def adjacency(self, feasible_only: bool = True) -> list[list[tuple[int, int, float]]]:
        """Per-state [(action, dst, cost)] lists, sorted for determinism."""
        adj: list[list[tuple[int, int, float]]] = [[] for _ in range(self.n_states)]
        mask = self.feasible_mask() if feasible_only else np.ones(self.n_edges, dtype=bool)
        for e in range(self.n_edges):
            if mask[e]:
                adj[self.edge_src[e]].append(
                    (int(self.edge_action[e]), int(self.edge_dst[e]), float(self.edge_cost[e]))
                )
        for lst in adj:
            lst.sort()
        return adj


def tiny_example() -> DiscreteCMDP:
    """Three-state instance whose asymmetric shortest paths are easy to hand-check.

    0 -> 1 costs 2 but 1 -> 0 costs 3; the detour 0 -> 2 -> 1 costs 4 + 1.
    With goal 1 the optimal values are V(0) = -2, V(2) = -1.
    """
    return DiscreteCMDP(
        n_states=3,
        goal=1,
        edge_src=[0, 1, 0, 2],
        edge_action=[0, 0, 1, 0],
        edge_dst=[1, 0, 2, 1],
        edge_cost=[2.0, 3.0, 4.0, 1.0],
    )


# ---------------------------------------------------------------------------
# solvers


@dataclass
class ValueIterationInfo:
    iterations: int
    converged: bool
    dead_end_states: np.ndarray  # safe non-goal states with no feasible action


def value_iteration(cmdp: DiscreteCMDP, gamma: float = 1.0) -> tuple[np.ndarray, ValueIterationInfo]:
    """Exact optimal values V(s) = max_a [-cost + V(dst)] with V(goal) = 0.

    States that cannot reach the goal through feasible edges keep -inf.
    Only the undiscounted case is supported.
    """
    if gamma != 1.0:
        raise ConfigError("value_iteration is exact only for gamma=1")
    if not cmdp.safe[cmdp.goal]:
        raise InputError("goal state is marked unsafe; the instance is vacuous")
    mask = cmdp.feasible_mask()
    src = cmdp.edge_src[mask]
    dst = cmdp.edge_dst[mask]
    cost = cmdp.edge_cost[mask]
    v = np.full(cmdp.n_states, -np.inf)
    v[cmdp.goal] = 0.0
    iterations = 0
    converged = False
    for _ in range(cmdp.n_states + 1):
        iterations += 1
        new_v = np.full(cmdp.n_states, -np.inf)
        if len(src):
            np.maximum.at(new_v, src, v[dst] - cost)
        new_v[cmdp.goal] = 0.0
        settled = np.isneginf(new_v) & np.isneginf(v)
        diff = np.zeros(cmdp.n_states)
        live = ~settled
        diff[live] = np.abs(new_v[live] - v[live])  # one-sided -inf gives inf: not converged
        v = new_v
        if diff.max() <= VI_TOL:
            converged = True
            break
    has_edge = np.zeros(cmdp.n_states, dtype=bool)
    if len(src):
        has_edge[np.unique(src)] = True
    dead = np.where(cmdp.safe & ~has_edge & (np.arange(cmdp.n_states) != cmdp.goal))[0]
    return v, ValueIterationInfo(iterations=iterations, converged=converged, dead_end_states=dead)


@dataclass
class PathResult:
    reachable: bool
    cost: float
    path: list[int]


def asym_dijkstra(cmdp: DiscreteCMDP, start: int, goal: int | None = None) -> PathResult:
    """Cheapest feasible path start -> goal under asymmetric edge costs.

    Cost ties resolve to the lexicographically smallest state-index sequence,
    which makes the result fully deterministic.
    """
    if goal is None:
        goal = cmdp.goal
    if not (0 <= start < cmdp.n_states):
        raise InputError(f"start {start} out of range")
    if not (cmdp.safe[start] and cmdp.safe[goal]):
        return PathResult(False, math.inf, [])
    adj = cmdp.adjacency()
    # heap of (cost, path); tuple comparison gives the lexicographic tie-break
    heap: list[tuple[float, tuple[int, ...]]] = [(0.0, (start,))]
    done = np.zeros(cmdp.n_states, dtype=bool)
    while heap:
        cost, path = heapq.heappop(heap)
        node = path[-1]
        if done[node]:
            continue
        done[node] = True
        if node == goal:
            return PathResult(True, cost, list(path))
        for _act, dst, c in adj[node]:
            if not done[dst]:
                heapq.heappush(heap, (cost + c, path + (dst,)))
    return PathResult(False, math.inf, [])


def dijkstra_all(
    n_states: int,
    edge_src: np.ndarray,
    edge_dst: np.ndarray,
    edge_weight: np.ndarray,
    start: int,
) -> np.ndarray:
    """Plain single-source distances (no paths); used for bulk queries."""
    adj: list[list[tuple[int, float]]] = [[] for _ in range(n_states)]
    for s, d, w in zip(edge_src, edge_dst, edge_weight):
        adj[int(s)].append((int(d), float(w)))
    dist = np.full(n_states, np.inf)
    dist[start] = 0.0
    heap = [(0.0, start)]
    while heap:
        c, node = heapq.heappop(heap)
        if c > dist[node]:
            continue
        for dst, w in adj[node]:
            nc = c + w
            if nc < dist[dst]:
                dist[dst] = nc
                heapq.heappush(heap, (nc, dst))
    return dist


def greedy_path(cmdp: DiscreteCMDP, v: np.ndarray, start: int) -> PathResult:
    """Walk argmax(-cost + V[dst]) edges from start; ties pick the smallest dst."""
    adj = cmdp.adjacency()
    path = [start]
    total = 0.0
    node = start
    for _ in range(cmdp.n_states + 1):
        if node == cmdp.goal:
            return PathResult(True, total, path)
        best: tuple[float, int, float] | None = None  # (-value, dst, cost)
        for _act, dst, c in adj[node]:
            val = -c + v[dst]
            if not np.isfinite(val):
                continue
            key = (-val, dst, c)
            if best is None or key < best:
                best = key
        if best is None:
            return PathResult(False, math.inf, path)
        node = best[1]
        total += best[2]
        path.append(node)
    return PathResult(False, math.inf, path)  # cycled without reaching the goal


# ---------------------------------------------------------------------------
# verification


@dataclass
class EquivalenceReport:
    ok: bool
    n_checked: int
    n_unreachable: int
    max_abs_diff: float
    mismatches: list[str]


def verify_prop1(cmdp: DiscreteCMDP, tol: float = 1e-9) -> EquivalenceReport:
    """Cross-check the two exact solvers state by state.

    For every state, -V*(s) must equal the Dijkstra cost to the goal within
    `tol`, unreachable states must agree, and the greedy walk on V* must
    realize the same path cost.
    """
    v, _info = value_iteration(cmdp)
    mismatches: list[str] = []
    max_diff = 0.0
    n_checked = n_unreachable = 0
    for s in range(cmdp.n_states):
        res = asym_dijkstra(cmdp, s)
        finite = np.isfinite(v[s])
        if finite != res.reachable:
            mismatches.append(
                f"state {s}: value iteration {'finite' if finite else '-inf'} "
                f"but dijkstra {'reachable' if res.reachable else 'unreachable'}"
            )
            continue
        if not finite:
            n_unreachable += 1
            continue
        n_checked += 1
        diff = abs(-v[s] - res.cost)
        max_diff = max(max_diff, diff)
        if diff > tol:
            mismatches.append(f"state {s}: -V={-v[s]!r} vs dijkstra={res.cost!r}")
            continue
        walk = greedy_path(cmdp, v, s)
        if not walk.reachable or abs(walk.cost - res.cost) > tol:
            mismatches.append(
                f"state {s}: greedy walk cost {walk.cost!r} differs from optimal {res.cost!r}"
            )
    return EquivalenceReport(
        ok=not mismatches,
        n_checked=n_checked,
        n_unreachable=n_unreachable,
        max_abs_diff=max_diff,
        mismatches=mismatches,
    )


@dataclass
class AxiomReport:
    n_states: int
    n_finite_pairs: int
    nonzero_self: int
    triangle_violations: int
    asymmetric_pairs: int


def shortest_path_closure(cmdp: DiscreteCMDP) -> np.ndarray:
    """All-pairs cheapest costs over feasible edges (inf where unreachable)."""
    n = cmdp.n_states
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    mask = cmdp.feasible_mask()
    for s, t, c in zip(cmdp.edge_src[mask], cmdp.edge_dst[mask], cmdp.edge_cost[mask]):
        if c < d[s, t]:
            d[s, t] = c
    for k in range(n):
        d = np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :])
    return d


def check_quasimetric_axioms(cmdp: DiscreteCMDP, tol: float = 1e-9) -> AxiomReport:
    """Count axiom violations and asymmetric pairs in the path-cost closure."""
    d = shortest_path_closure(cmdp)
    n = cmdp.n_states
    nonzero_self = int(np.sum(np.abs(np.diagonal(d)) > tol))
    # d[i,k] <= min_j d[i,j] + d[j,k] must hold with equality options j=i, j=k
    best_via = np.full_like(d, np.inf)
    for j in range(n):
        best_via = np.minimum(best_via, d[:, j : j + 1] + d[j : j + 1, :])
    with np.errstate(invalid="ignore"):
        triangle = int(np.sum(d > best_via + tol))
    finite_both = np.isfinite(d) & np.isfinite(d.T)
    gap = np.zeros_like(d)
    gap[finite_both] = d[finite_both] - d.T[finite_both]
    asym = int(np.sum(np.abs(gap) > tol) // 2)
    n_finite = int(np.sum(np.isfinite(d)) - n)
    return AxiomReport(
        n_states=n,
        n_finite_pairs=n_finite,
        nonzero_self=nonzero_self,
        triangle_violations=triangle,
        asymmetric_pairs=asym,
    )


# ---------------------------------------------------------------------------
# random instances


def random_grid_cmdp(
    size: int,
    rng: np.random.Generator,
    alpha_up: float = 2.0,
    beta_down: float = 0.8,
    base_cost: float = 0.1,
    unsafe_frac: float = 0.08,
    delta_step: float = math.inf,
) -> DiscreteCMDP:
    """Random elevation grid with climb-heavy edge costs and a few unsafe cells.

    Costs are base + alpha_up * max(dz, 0) + beta_down * max(-dz, 0), so every
    inclined edge is asymmetric while the triangle structure stays intact.
    """
    if size < 2:
        raise ConfigError("grid size must be at least 2")
    if base_cost <= 0.0:
        raise ConfigError("base_cost must be positive to keep greedy walks finite")
    z = rng.normal(0.0, 1.0, size=(size, size))
    # mild smoothing keeps neighboring cells correlated
    z = (z + np.roll(z, 1, 0) + np.roll(z, 1, 1)) / 3.0
    n = size * size
    src, act, dst, cost = [], [], [], []
    moves = [(0, 1), (0, -1), (1, 0), (-1, 0)]
    for iy in range(size):
        for ix in range(size):
            for a, (dy, dx) in enumerate(moves):
                jy, jx = iy + dy, ix + dx
                if not (0 <= jy < size and 0 <= jx < size):
                    continue
                dz = z[jy, jx] - z[iy, ix]
                src.append(iy * size + ix)
                act.append(a)
                dst.append(jy * size + jx)
                cost.append(base_cost + alpha_up * max(dz, 0.0) + beta_down * max(-dz, 0.0))
    safe = np.ones(n, dtype=bool)
    n_unsafe = int(unsafe_frac * n)
    if n_unsafe:
        safe[rng.choice(n, size=n_unsafe, replace=False)] = False
    goal_choices = np.where(safe)[0]
    goal = int(goal_choices[rng.integers(len(goal_choices))])
    return DiscreteCMDP(
        n_states=n, goal=goal, edge_src=src, edge_action=act, edge_dst=dst,
        edge_cost=cost, safe=safe, delta_step=delta_step,
        meta={"kind": "random_grid", "size": size},
    )


# ---------------------------------------------------------------------------
# environment discretization


@dataclass
class DiscretizeResult:
    cmdp: DiscreteCMDP
    cfg: envmod.ScenarioConfig
    grid: terra.TerrainGrid
    positions: np.ndarray  # (n_states, 2) world xy
    headings: np.ndarray  # (n_states,)
    edge_length: np.ndarray  # planar meters, parallel to cmdp edges
    edge_dz: np.ndarray
    speed: float

    def state_id(self, x: float, y: float, heading: float) -> int:
        res = self.cmdp.meta["resolution"]
        hb = self.cmdp.meta["heading_bins"]
        nx = self.cmdp.meta["nx"]
        ny = self.cmdp.meta["ny"]
        ix = min(max(int(x / res), 0), nx - 1)
        iy = min(max(int(y / res), 0), ny - 1)
        k = int(round(heading / (2.0 * math.pi / hb))) % hb
        return (iy * nx + ix) * hb + k


def discretize_env(
    env: envmod.NavEnv,
    resolution: float | None = None,
    heading_bins: int = 8,
    speed: float = 1.0,
) -> DiscretizeResult:
    """Exact (cell, heading) graph over the environment's terrain.

    Actions are forward, left+forward, right+forward at a fixed speed; edge
    costs are the scenario traversal cost of the corresponding motion and the
    safety mask applies the same tilt bounds as the continuous simulator.
    """
    cfg = env.cfg
    grid = env.grid
    if resolution is None:
        resolution = grid.cell_size
    if resolution <= 0.0 or heading_bins < 4:
        raise ConfigError("need positive resolution and at least 4 heading bins")
    if not (0.0 < speed <= cfg.v_max):
        raise ConfigError("speed must lie in (0, v_max]")
    nx = int(grid.size_x / resolution)
    ny = int(grid.size_y / resolution)
    hb = heading_bins
    n = nx * ny * hb
    centers_x = (np.arange(nx) + 0.5) * resolution
    centers_y = (np.arange(ny) + 0.5) * resolution

    positions = np.zeros((n, 2))
    headings = np.zeros(n)
    safe = np.ones(n, dtype=bool)
    feats_cache: dict[tuple[int, int], terra.FeatureVec] = {}

    def feats(iy: int, ix: int) -> terra.FeatureVec:
        key = (iy, ix)
        if key not in feats_cache:
            feats_cache[key] = terra.sample_features(
                grid, centers_x[ix], centers_y[iy], env.goal, 0.0
            )
        return feats_cache[key]

    angles = 2.0 * math.pi * np.arange(hb) / hb
    for iy in range(ny):
        for ix in range(nx):
            f = feats(iy, ix)
            for k in range(hb):
                sid = (iy * nx + ix) * hb + k
                positions[sid] = (centers_x[ix], centers_y[iy])
                headings[sid] = angles[k]
                violated, _ = envmod.safety_indicator(f, angles[k], cfg)
                safe[sid] = not violated

    src, act, dst, cost, length, dzs = [], [], [], [], [], []
    for iy in range(ny):
        for ix in range(nx):
            f_src = feats(iy, ix)
            for k in range(hb):
                sid = (iy * nx + ix) * hb + k
                for a, turn in enumerate((0, 1, -1)):  # forward, left, right
                    k2 = (k + turn) % hb
                    ang = angles[k2]
                    ox = int(round(math.cos(ang)))
                    oy = int(round(math.sin(ang)))
                    jx, jy = ix + ox, iy + oy
                    if not (0 <= jx < nx and 0 <= jy < ny) or (ox == 0 and oy == 0):
                        continue
                    f_dst = feats(jy, jx)
                    dd = math.hypot(ox, oy) * resolution
                    dz = f_dst.elevation - f_src.elevation
                    c = envmod.traversal_cost(cfg, f_src, dd, dz, speed)
                    src.append(sid)
                    act.append(a)
                    dst.append((jy * nx + jx) * hb + k2)
                    cost.append(c)
                    length.append(dd)
                    dzs.append(dz)

    goal_ix = min(max(int(env.goal[0] / resolution), 0), nx - 1)
    goal_iy = min(max(int(env.goal[1] / resolution), 0), ny - 1)
    # the goal is heading-agnostic: represent it by heading bin 0 and add
    # zero-cost alias edges from the other headings at the goal cell
    goal_sid = (goal_iy * nx + goal_ix) * hb + 0
    for k in range(1, hb):
        src.append((goal_iy * nx + goal_ix) * hb + k)
        act.append(0)
        dst.append(goal_sid)
        cost.append(0.0)
        length.append(0.0)
        dzs.append(0.0)
    safe[goal_sid] = True

    cmdp = DiscreteCMDP(
        n_states=n,
        goal=goal_sid,
        edge_src=src,
        edge_action=act,
        edge_dst=dst,
        edge_cost=cost,
        safe=safe,
        meta={
            "kind": "discretized_env",
            "scenario": cfg.scenario,
            "resolution": resolution,
            "heading_bins": hb,
            "nx": nx,
            "ny": ny,
            "speed": speed,
        },
    )
    return DiscretizeResult(
        cmdp=cmdp,
        cfg=cfg,
        grid=grid,
        positions=positions,
        headings=headings,
        edge_length=np.asarray(length),
        edge_dz=np.asarray(dzs),
        speed=speed,
    )


def rollout_dataset(
    disc: DiscretizeResult,
    n_transitions: int,
    rng: np.random.Generator,
    max_walk_len: int = 12,
) -> TransitionDataset:
    """Random feasible walks over the discretized graph, encoded for embedding
    training with exact traversal costs.
    """
    cmdp = disc.cmdp
    cfg = disc.cfg
    mask = cmdp.feasible_mask()
    adj: list[list[int]] = [[] for _ in range(cmdp.n_states)]
    for e in np.where(mask)[0]:
        adj[cmdp.edge_src[e]].append(int(e))
    start_pool = np.where(cmdp.safe & np.array([len(a) > 0 for a in adj]))[0]
    if len(start_pool) == 0:
        raise InputError("no feasible states to start walks from")
    # bias walk starts toward states with graded outgoing costs so datasets on
    # mostly-flat maps still cover the expensive region densely; on uniform
    # maps the weights collapse to uniform
    out_cost = np.array([float(np.mean(cmdp.edge_cost[adj[s]])) for s in start_pool])
    weights = out_cost + max(1e-3, 0.1 * float(out_cost.mean()))
    weights /= weights.sum()

    hb = cmdp.meta["heading_bins"]

    def encode(sid: int, edge: int) -> np.ndarray:
        f = terra.sample_features(
            disc.grid, disc.positions[sid][0], disc.positions[sid][1],
            np.asarray(cfg.goal_xy), 0.0,
        )
        dd = disc.edge_length[edge]
        turn = (0.0, 2.0 * math.pi / hb, -2.0 * math.pi / hb)[int(cmdp.edge_action[edge])]
        omega = 0.0 if dd < 1e-9 else float(np.clip(turn * disc.speed / dd, -cfg.omega_max, cfg.omega_max))
        action = envmod.ActionCmd.clamped(disc.speed, omega, cfg)
        move_heading = float(disc.headings[cmdp.edge_dst[edge]])  # turn, then move
        return envmod.encode_pair(cfg, f, action, move_heading)

    xs, ys, costs, dzs, succ = [], [], [], [], []
    while len(xs) < n_transitions:
        sid = int(start_pool[rng.choice(len(start_pool), p=weights)])
        walk_edges: list[int] = []
        for _ in range(max_walk_len):
            if not adj[sid]:
                break
            e = adj[sid][rng.integers(len(adj[sid]))]
            walk_edges.append(e)
            sid = int(cmdp.edge_dst[e])
        # consecutive edges give (pair, successor pair) rows
        base = len(xs)
        for i, e in enumerate(walk_edges[:-1]):
            nxt = walk_edges[i + 1]
            xs.append(encode(int(cmdp.edge_src[e]), e))
            ys.append(encode(int(cmdp.edge_src[nxt]), nxt))
            costs.append(float(cmdp.edge_cost[e]))
            dzs.append(float(disc.edge_dz[e]))
            succ.append(base + i + 1 if i + 1 < len(walk_edges) - 1 else -1)
    return TransitionDataset(
        x=np.asarray(xs[:n_transitions]),
        y=np.asarray(ys[:n_transitions]),
        cost=np.asarray(costs[:n_transitions]),
        dz=np.asarray(dzs[:n_transitions]),
        succ_idx=np.asarray(succ[:n_transitions], dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# text format: "n_states n_edges goal" then "src action dst cost safe_flag"


def save_cmdp(path: str, cmdp: DiscreteCMDP) -> None:
    order = np.lexsort((cmdp.edge_action, cmdp.edge_src))
    lines = [f"{cmdp.n_states} {cmdp.n_edges} {cmdp.goal}"]
    for e in order:
        flag = 1 if cmdp.safe[cmdp.edge_dst[e]] else 0
        lines.append(
            f"{cmdp.edge_src[e]} {cmdp.edge_action[e]} {cmdp.edge_dst[e]} "
            f"{cmdp.edge_cost[e]:.17g} {flag}"
        )
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_cmdp(path: str) -> DiscreteCMDP:
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    if not raw:
        raise InputError(f"{path} is empty")
    head = raw[0].split()
    if len(head) != 3:
        raise InputError("header must be 'n_states n_edges goal'")
    try:
        n_states, n_edges, goal = (int(tok) for tok in head)
    except ValueError as exc:
        raise InputError(f"bad header {raw[0]!r}") from exc
    if len(raw) - 1 != n_edges:
        raise InputError(f"expected {n_edges} edge lines, found {len(raw) - 1}")
    src, act, dst, cost = [], [], [], []
    safe = np.ones(n_states, dtype=bool)
    for ln in raw[1:]:
        toks = ln.split()
        if len(toks) != 5:
            raise InputError(f"bad edge line {ln!r}")
        try:
            s, a, d = int(toks[0]), int(toks[1]), int(toks[2])
            c, flag = float(toks[3]), int(toks[4])
        except ValueError as exc:
            raise InputError(f"bad edge line {ln!r}") from exc
        if flag not in (0, 1):
            raise InputError(f"safe flag must be 0 or 1 in {ln!r}")
        src.append(s)
        act.append(a)
        dst.append(d)
        cost.append(c)
        if flag == 0:
            if not (0 <= d < n_states):
                raise InputError(f"edge dst {d} out of range")
            safe[d] = False
    return DiscreteCMDP(
        n_states=n_states, goal=goal, edge_src=src, edge_action=act,
        edge_dst=dst, edge_cost=cost, safe=safe,
    )
