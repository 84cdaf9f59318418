"""Unicycle navigation environments with direction-dependent traversal costs.

Three scenarios share the same kinematics and differ in terrain and cost
structure: `undulating` charges slope-weighted energy, `hill` charges climbs
much more than descents, and `directional` charges per-class rates that shift
with travel direction. Every transition settles its reward through exactly one
of three branches: goal bonus, unsafe penalty, or negative weighted cost plus
a time charge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import terrain as terra
from .errors import ConfigError, DegenerateMotionError, StateError
from .io_utils import write_csv
from .rng import substream

SCENARIOS = ("undulating", "hill", "directional")

# floors keeping costs non-negative when slope factors are pushed below zero
MIN_SLOPE_FACTOR = 0.05

TRAJECTORY_COLUMNS = [
    "t", "x", "y", "heading", "v", "omega",
    "reward", "traversal_cost", "constraint_cost", "violated", "energy_j",
]


@dataclass
class ScenarioConfig:
    """Full environment parameterization; all values land in emitted files."""

    scenario: str = "hill"
    size_m: float = 32.0
    cell_size: float = 0.5
    # 60 s episodes: at gamma=0.99 the effective horizon (~100 steps) then
    # covers the ~15 m a half-speed rover needs to reach the default goals,
    # and random exploration finds the goal often enough to bootstrap from.
    dt: float = 0.2
    v_max: float = 1.5
    omega_max: float = 1.5
    tau_v: float = 0.3
    tau_omega: float = 0.2
    max_steps: int = 300
    goal_tol: float = 2.0
    start_xy: tuple[float, float] = (6.0, 12.0)
    goal_xy: tuple[float, float] = (26.0, 12.0)
    start_jitter_m: float = 1.5
    heading_jitter_rad: float = 0.3

    r_goal: float = 50.0
    # Kept mild on purpose: safety is the constraint's job, and a penalty
    # large enough to do that job by itself swamps the goal signal (a policy
    # that never moves out-scores every early goal-reaching trajectory).
    r_unsafe: float = -1.0
    c_time: float = 0.05
    phi_max_deg: float = 25.0
    theta_max_deg: float = 25.0
    terminal_on_violation: bool = False
    constraint_form: str = "indicator"  # or "magnitude"

    # undulating: energy-style traversal cost
    alpha_energy: float = 1.0
    beta_slope: float = 1.0
    max_slope_deg: float = 30.0

    # hill: asymmetric climb/descent cost
    alpha_hill: float = 1.0
    k_up: float = 2.0
    k_down: float = 1.0
    alpha_speed: float = 0.5
    beta_speed: float = 0.2
    hill_slope_deg: float = 20.0
    hill_radius_m: float = 7.0

    # directional: per-class rates with direction-dependent factors
    alpha_dir: float = 1.0
    gamma_speed: float = 0.3
    wet: bool = True
    dir_max_slope_deg: float = 12.0
    k_terrain: dict = field(
        default_factory=lambda: {"grass": 0.5, "gravel": 0.8, "sand": 1.0, "wet_clay": 0.7}
    )
    dir_coeff_up: dict = field(
        default_factory=lambda: {"grass": 0.3, "gravel": 0.5, "sand": 0.6, "wet_clay": 0.4}
    )
    dir_coeff_down: dict = field(
        default_factory=lambda: {"grass": -0.1, "gravel": -0.2, "sand": -0.15, "wet_clay": 0.3}
    )

    # electrical power model (friction term available but off by default so
    # flat-ground cruise power is exactly p_base + c1*v)
    p_base: float = 20.0
    c1: float = 25.0
    c2: float = 10.0
    c3: float = 0.0
    c4: float = 40.0

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.dt <= 0.0 or self.v_max <= 0.0 or self.omega_max <= 0.0:
            raise ConfigError("dt, v_max and omega_max must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be at least 1")
        if self.goal_tol <= 0.0:
            raise ConfigError("goal_tol must be positive")
        if self.constraint_form not in ("indicator", "magnitude"):
            raise ConfigError("constraint_form must be 'indicator' or 'magnitude'")
        for name in ("r_goal",):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive")
        for dct in (self.k_terrain, self.dir_coeff_up, self.dir_coeff_down):
            missing = set(terra.TERRAIN_CLASSES) - set(dct)
            if missing:
                raise ConfigError(f"per-class table missing entries for {sorted(missing)}")

    @classmethod
    def defaults(cls, scenario: str) -> "ScenarioConfig":
        """Per-scenario geometry and safety bounds.

        The hill flank sits at 20 deg, so its tilt bounds default tighter
        (18 deg) to make a direct ascent unsafe while flat detours stay legal.
        The hill start/goal chord passes 4 m off the hill axis: the straight
        line then clips the flank (a short unsafe band) rather than summiting,
        so a small bow around the hill is both reachable by exploration and
        strictly safer -- the gap the constraint machinery is meant to close.
        """
        if scenario == "undulating":
            return cls(scenario=scenario, start_xy=(6.0, 6.0), goal_xy=(26.0, 26.0))
        if scenario == "hill":
            return cls(
                scenario=scenario, start_xy=(6.0, 12.0), goal_xy=(26.0, 12.0),
                phi_max_deg=18.0, theta_max_deg=18.0,
            )
        if scenario == "directional":
            return cls(scenario=scenario, start_xy=(6.0, 6.0), goal_xy=(26.0, 26.0))
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    heading: float
    v: float = 0.0
    omega: float = 0.0


@dataclass(frozen=True)
class ActionCmd:
    """Speed/turn-rate command; construction clamps into the actuator box."""

    v_cmd: float
    omega_cmd: float

    @classmethod
    def clamped(cls, v_cmd: float, omega_cmd: float, cfg: ScenarioConfig) -> "ActionCmd":
        return cls(
            float(np.clip(v_cmd, 0.0, cfg.v_max)),
            float(np.clip(omega_cmd, -cfg.omega_max, cfg.omega_max)),
        )


def null_action() -> ActionCmd:
    """Designated rest command used for state-only embedding queries."""
    return ActionCmd(0.0, 0.0)


@dataclass
class Transition:
    state: RobotState
    action: ActionCmd
    next_state: RobotState
    reward: float
    traversal_cost: float
    constraint_cost: float
    violated: bool
    energy_j: float
    dt: float
    terminal: bool = False
    reason: str = ""  # "", "goal", "unsafe", "step_limit"
    features: terra.FeatureVec | None = None
    next_features: terra.FeatureVec | None = None


def _wrap_angle(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))


# ---------------------------------------------------------------------------
# traversal costs


def cost_energy_undulating(
    features: terra.FeatureVec, dd_planar: float, dz: float, beta_slope: float = 1.0
) -> float:
    """Distance along the incline times terrain resistance times a slope factor.

    Uphill motion (dz > 0) is dearer than the reverse descent, so swapping the
    endpoints of an inclined move changes the cost.
    """
    if dd_planar < 1e-12:
        if abs(dz) > 1e-9:
            raise DegenerateMotionError(f"elevation change {dz} without planar displacement")
        return 0.0
    theta = math.atan2(dz, dd_planar)
    slope_factor = max(1.0 + beta_slope * dz, MIN_SLOPE_FACTOR)
    return (dd_planar / math.cos(theta)) * features.friction * slope_factor


def cost_hill(
    dz: float,
    v: float,
    k_up: float = 2.0,
    k_down: float = 1.0,
    alpha_speed: float = 0.5,
    beta_speed: float = 0.2,
) -> float:
    """Climb charges k_up per meter gained, descent k_down per meter lost."""
    if dz > 0.0:
        return k_up * dz * (1.0 + alpha_speed * v)
    if dz < 0.0:
        return k_down * (-dz) * (1.0 + beta_speed * v)
    return 0.0


def cost_directional(
    features: terra.FeatureVec,
    dd_planar: float,
    dz: float,
    v: float,
    cfg: ScenarioConfig,
) -> float:
    """Per-class rate scaled by a grade factor that depends on travel direction."""
    cls_name = terra.TERRAIN_CLASSES[features.terrain_class]
    k = cfg.k_terrain[cls_name]
    if dd_planar < 1e-12:
        if abs(dz) > 1e-9:
            raise DegenerateMotionError(f"elevation change {dz} without planar displacement")
        f_dir = 1.0
    elif dz == 0.0:
        f_dir = 1.0
    else:
        grade = abs(dz) / dd_planar
        coeff = cfg.dir_coeff_up[cls_name] if dz > 0.0 else cfg.dir_coeff_down[cls_name]
        f_dir = max(1.0 + coeff * grade, MIN_SLOPE_FACTOR)
    return k * f_dir * (1.0 + cfg.gamma_speed * v)


def traversal_cost(
    cfg: ScenarioConfig,
    features: terra.FeatureVec,
    dd_planar: float,
    dz: float,
    v: float,
) -> float:
    if cfg.scenario == "undulating":
        return cost_energy_undulating(features, dd_planar, dz, cfg.beta_slope)
    if cfg.scenario == "hill":
        return cost_hill(dz, v, cfg.k_up, cfg.k_down, cfg.alpha_speed, cfg.beta_speed)
    return cost_directional(features, dd_planar, dz, v, cfg)


def cost_weight(cfg: ScenarioConfig) -> float:
    return {"undulating": cfg.alpha_energy, "hill": cfg.alpha_hill, "directional": cfg.alpha_dir}[
        cfg.scenario
    ]


# ---------------------------------------------------------------------------
# power, energy, safety


def actuator_lag(state: RobotState, action: ActionCmd, cfg: ScenarioConfig) -> tuple[float, float]:
    """First-order response of the realized velocities toward the commands."""
    a_v = 1.0 - math.exp(-cfg.dt / cfg.tau_v)
    a_w = 1.0 - math.exp(-cfg.dt / cfg.tau_omega)
    v_next = float(np.clip(state.v + a_v * (action.v_cmd - state.v), 0.0, cfg.v_max))
    w_next = float(np.clip(state.omega + a_w * (action.omega_cmd - state.omega), -cfg.omega_max, cfg.omega_max))
    return v_next, w_next


def power(state: RobotState, action: ActionCmd, features: terra.FeatureVec, cfg: ScenarioConfig) -> float:
    """Instantaneous electrical draw; every term is non-negative."""
    v_next, _ = actuator_lag(state, action, cfg)
    accel = (v_next - state.v) / cfg.dt
    g = features.grad_z
    tan_theta = g[0] * math.cos(state.heading) + g[1] * math.sin(state.heading)
    return (
        cfg.p_base
        + cfg.c1 * v_next
        + cfg.c2 * abs(accel)
        + cfg.c3 * features.friction * v_next
        + cfg.c4 * max(0.0, tan_theta) * v_next
    )


def tilt_angles(features: terra.FeatureVec, heading: float) -> tuple[float, float]:
    """(roll, pitch) in radians of a ground-following robot at this heading."""
    g = features.grad_z
    u = np.array([math.cos(heading), math.sin(heading)])
    u_perp = np.array([-math.sin(heading), math.cos(heading)])
    pitch = math.atan(float(g @ u))
    roll = math.atan(float(g @ u_perp))
    return roll, pitch


def safety_indicator(
    features: terra.FeatureVec, heading: float, cfg: ScenarioConfig
) -> tuple[bool, float]:
    """Tilt-limit check; returns (violated, constraint_cost).

    The constraint cost is a 0/1 indicator by default, or the radian excess
    over the nearest bound when constraint_form == 'magnitude'.
    """
    roll, pitch = tilt_angles(features, heading)
    phi_max = math.radians(cfg.phi_max_deg)
    theta_max = math.radians(cfg.theta_max_deg)
    excess = max(0.0, abs(roll) - phi_max, abs(pitch) - theta_max)
    violated = excess > 0.0
    if cfg.constraint_form == "magnitude":
        return violated, excess
    return violated, 1.0 if violated else 0.0


# ---------------------------------------------------------------------------


def build_terrain(cfg: ScenarioConfig, seed: int) -> terra.TerrainGrid:
    """Scenario terrain from the run seed's dedicated stream."""
    noise_seed = int(substream(seed, "terrain").integers(0, 2**62))
    if cfg.scenario == "undulating":
        return terra.generate_undulating(
            cfg.size_m, cfg.cell_size, cfg.max_slope_deg, seed=noise_seed
        )
    if cfg.scenario == "hill":
        return terra.generate_hill(
            cfg.size_m, cfg.cell_size, cfg.hill_slope_deg, seed=noise_seed,
            radius_m=cfg.hill_radius_m,
        )
    return terra.generate_directional(
        cfg.size_m, cfg.cell_size, seed=noise_seed,
        max_slope_deg=cfg.dir_max_slope_deg, wet=cfg.wet,
    )


class NavEnv:
    """Episode-stateful wrapper around deterministic ground-following kinematics."""

    def __init__(self, cfg: ScenarioConfig, grid: terra.TerrainGrid):
        if grid.size_x < cfg.size_m - 1e-9 or grid.size_y < cfg.size_m - 1e-9:
            raise ConfigError("terrain grid smaller than configured world")
        self.cfg = cfg
        self.grid = grid
        self.goal = np.asarray(cfg.goal_xy, dtype=np.float64)
        self.state: RobotState | None = None
        self.steps = 0
        self._terminal = True
        self._kappa = 0.0

    @classmethod
    def from_seed(cls, cfg: ScenarioConfig, seed: int) -> "NavEnv":
        return cls(cfg, build_terrain(cfg, seed))

    # -- episode control -----------------------------------------------------

    def reset(self, rng: np.random.Generator | None = None) -> RobotState:
        """Start a fresh episode; with an RNG the start pose is jittered."""
        cfg = self.cfg
        x, y = cfg.start_xy
        if rng is not None and cfg.start_jitter_m > 0.0:
            ang = rng.uniform(0.0, 2.0 * math.pi)
            rad = cfg.start_jitter_m * math.sqrt(rng.uniform())
            x += rad * math.cos(ang)
            y += rad * math.sin(ang)
        margin = self.grid.cell_size
        x = float(np.clip(x, margin, self.grid.size_x - margin))
        y = float(np.clip(y, margin, self.grid.size_y - margin))
        heading = math.atan2(self.goal[1] - y, self.goal[0] - x)
        if rng is not None and cfg.heading_jitter_rad > 0.0:
            heading = _wrap_angle(heading + rng.normal(0.0, cfg.heading_jitter_rad))
        self.state = RobotState(x=x, y=y, heading=heading)
        self.steps = 0
        self._terminal = False
        self._kappa = 0.0
        return self.state

    @property
    def terminal(self) -> bool:
        return self._terminal

    def features_at(self, state: RobotState, curvature: float | None = None) -> terra.FeatureVec:
        kappa = self._kappa if curvature is None else curvature
        return terra.sample_features(self.grid, state.x, state.y, self.goal, kappa)

    def transition(self, state: RobotState, action: ActionCmd, kappa: float = 0.0) -> Transition:
        """Pure one-step dynamics: no episode bookkeeping, no terminal checks."""
        cfg = self.cfg
        v_next, w_next = actuator_lag(state, action, cfg)
        heading_next = _wrap_angle(state.heading + w_next * cfg.dt)
        margin = self.grid.cell_size
        x_next = float(np.clip(state.x + v_next * math.cos(state.heading) * cfg.dt,
                               margin, self.grid.size_x - margin))
        y_next = float(np.clip(state.y + v_next * math.sin(state.heading) * cfg.dt,
                               margin, self.grid.size_y - margin))
        next_state = RobotState(x_next, y_next, heading_next, v_next, w_next)

        feats = terra.sample_features(self.grid, state.x, state.y, self.goal, kappa)
        dd = math.hypot(x_next - state.x, y_next - state.y)
        kappa_next = _wrap_angle(heading_next - state.heading) / dd if dd > 1e-9 else 0.0
        feats_next = terra.sample_features(self.grid, x_next, y_next, self.goal, kappa_next)
        dz = feats_next.elevation - feats.elevation
        if dd < 1e-12:
            dz = 0.0

        cost = traversal_cost(cfg, feats, dd, dz, v_next)
        violated, ccost = safety_indicator(feats_next, heading_next, cfg)
        energy = power(state, action, feats, cfg) * cfg.dt

        at_goal = math.hypot(x_next - self.goal[0], y_next - self.goal[1]) < cfg.goal_tol
        if at_goal:
            reward, reason, terminal = cfg.r_goal, "goal", True
        elif violated:
            reward, reason = cfg.r_unsafe, "unsafe"
            terminal = cfg.terminal_on_violation
        else:
            reward, reason, terminal = -(cost_weight(cfg) * cost + cfg.c_time), "", False

        return Transition(
            state=state, action=action, next_state=next_state,
            reward=reward, traversal_cost=cost, constraint_cost=ccost,
            violated=violated, energy_j=energy, dt=cfg.dt,
            terminal=terminal, reason=reason,
            features=feats, next_features=feats_next,
        )

    def step(self, action: ActionCmd) -> Transition:
        if self._terminal or self.state is None:
            raise StateError("step called on a terminal episode; call reset first")
        tr = self.transition(self.state, action, kappa=self._kappa)
        self.steps += 1
        dd = math.hypot(tr.next_state.x - tr.state.x, tr.next_state.y - tr.state.y)
        self._kappa = (
            _wrap_angle(tr.next_state.heading - tr.state.heading) / dd if dd > 1e-9 else 0.0
        )
        self.state = tr.next_state
        if not tr.terminal and self.steps >= self.cfg.max_steps:
            tr = replace(tr, terminal=True, reason="step_limit")
        self._terminal = tr.terminal
        return tr


# ---------------------------------------------------------------------------
# observation encodings shared by the policy, value and embedding networks

OBS_DIM = 14
EMBED_IN_DIM = 11

_Z_SCALE = 4.0
_ROUGH_SCALE = 0.3
_MU_SCALE = 1.4
_CLASS_SCALE = 3.0
_KAPPA_CLIP = 2.0


def encode_local(features: terra.FeatureVec, heading: float) -> np.ndarray:
    """Body-frame terrain block: slopes along/across the heading plus surface
    scalars. Rotating into the body frame is what lets one policy generalize
    across headings; world-frame gradients are useless without a compass.
    """
    c, s = math.cos(heading), math.sin(heading)
    gx, gy = features.grad_z
    return np.array(
        [
            features.elevation / _Z_SCALE,
            gx * c + gy * s,  # slope along the heading
            -gx * s + gy * c,  # slope across it
            features.normal[2],
            features.terrain_class / _CLASS_SCALE,
            features.roughness / _ROUGH_SCALE,
            features.friction / _MU_SCALE,
            features.obstacle_density,
            np.clip(features.curvature, -_KAPPA_CLIP, _KAPPA_CLIP) / _KAPPA_CLIP,
        ]
    )


LOCAL_DIM = 9


def encode_state(cfg: ScenarioConfig, state: RobotState, features: terra.FeatureVec) -> np.ndarray:
    """Policy/value observation: body-frame terrain block, relative goal
    bearing (cos/sin), goal range, and body rates."""
    dx = cfg.goal_xy[0] - state.x
    dy = cfg.goal_xy[1] - state.y
    dist = math.hypot(dx, dy)
    if dist > 1e-9:
        bearing = math.atan2(dy, dx) - state.heading
        rel = (math.cos(bearing), math.sin(bearing))
    else:
        rel = (0.0, 0.0)
    return np.concatenate(
        [
            encode_local(features, state.heading),
            [rel[0], rel[1], dist / cfg.size_m,
             state.v / cfg.v_max, state.omega / cfg.omega_max],
        ]
    )


def encode_action(cfg: ScenarioConfig, action: ActionCmd) -> np.ndarray:
    return np.array([action.v_cmd / cfg.v_max, action.omega_cmd / cfg.omega_max])


def encode_pair(
    cfg: ScenarioConfig, features: terra.FeatureVec, action: ActionCmd, heading: float
) -> np.ndarray:
    """Embedding input for one (state, action) pair; traversal costs depend on
    the slope along the motion direction, hence the body frame here too."""
    return np.concatenate([encode_local(features, heading), encode_action(cfg, action)])


# ---------------------------------------------------------------------------


def write_trajectory_csv(path: str, transitions: list[Transition], meta: dict | None = None) -> None:
    """Standard per-step log; `t` is simulation time at the step start."""
    rows = []
    t = 0.0
    for tr in transitions:
        rows.append([
            t, tr.state.x, tr.state.y, tr.state.heading, tr.state.v, tr.state.omega,
            tr.reward, tr.traversal_cost, tr.constraint_cost, int(tr.violated), tr.energy_j,
        ])
        t += tr.dt
    write_csv(path, TRAJECTORY_COLUMNS, rows, meta)
