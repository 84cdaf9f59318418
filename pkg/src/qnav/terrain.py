"""Procedural terrain grids and continuous feature queries.

Grids are cell-centered float64 rasters over a rectangular world. Elevation,
friction, roughness and obstacle density are queried with bilinear
interpolation; the terrain class uses nearest-cell lookup. Three generators
cover the benchmark scenarios: multi-octave undulating ground, a radially
symmetric hill with split surface conditions, and a four-quadrant world whose
classes differ in direction-dependent traversal behavior.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, ConfigError, InputError

TERRAIN_CLASSES = ("grass", "gravel", "sand", "wet_clay")

# Dynamic friction-style resistance factors per class; wet clay is slick when
# dry and heavy when waterlogged.
FRICTION_DEFAULTS = {
    "grass": 0.6,
    "gravel": 0.9,
    "sand": 1.2,
    "wet_clay_dry": 0.5,
    "wet_clay_wet": 1.4,
}

ROUGHNESS_AMP = {"grass": 0.03, "gravel": 0.14, "sand": 0.08, "wet_clay": 0.04}

OBSTACLE_RADIUS_M = 2.0
ROUGHNESS_OBSTACLE_THRESHOLD = 0.1


# ---------------------------------------------------------------------------
# hash-lattice value noise (deterministic in the integer seed)

_M1 = np.uint64(0x9E3779B97F4A7C15)
_M2 = np.uint64(0xC2B2AE3D27D4EB4F)
_M3 = np.uint64(0xFF51AFD7ED558CCD)
_M4 = np.uint64(0xC4CEB9FE1A85EC53)


def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Uniform [0,1) per lattice point via a splitmix-style integer finalizer."""
    h = ix.astype(np.uint64) * _M1 + iy.astype(np.uint64) * _M2
    h ^= np.uint64((seed * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF)
    h ^= h >> np.uint64(33)
    h *= _M3
    h ^= h >> np.uint64(33)
    h *= _M4
    h ^= h >> np.uint64(33)
    return h.astype(np.float64) / 2.0**64


def _smoothstep(t: np.ndarray) -> np.ndarray:
    return t * t * (3.0 - 2.0 * t)


def value_noise(xs: np.ndarray, ys: np.ndarray, freq: float, seed: int) -> np.ndarray:
    """Smooth lattice noise in [0,1) sampled at world coordinates."""
    fx, fy = xs * freq, ys * freq
    ix, iy = np.floor(fx), np.floor(fy)
    tx, ty = _smoothstep(fx - ix), _smoothstep(fy - iy)
    ix, iy = ix.astype(np.int64), iy.astype(np.int64)
    c00 = _hash01(ix, iy, seed)
    c10 = _hash01(ix + 1, iy, seed)
    c01 = _hash01(ix, iy + 1, seed)
    c11 = _hash01(ix + 1, iy + 1, seed)
    top = c00 + (c10 - c00) * tx
    bot = c01 + (c11 - c01) * tx
    return top + (bot - top) * ty


def fbm_noise(xs: np.ndarray, ys: np.ndarray, base_freq: float, octaves: int, seed: int) -> np.ndarray:
    """Octave-summed value noise, normalized to [0,1)."""
    out = np.zeros_like(xs, dtype=np.float64)
    amp, total = 1.0, 0.0
    for k in range(octaves):
        out += amp * value_noise(xs, ys, base_freq * 2.0**k, seed + 7919 * k)
        total += amp
        amp *= 0.5
    return out / total


# ---------------------------------------------------------------------------


@dataclass
class FeatureVec:
    """Local terrain description at a pose: [z, grad_z, normal, t, r, mu, rho, kappa, goal_dir]."""

    elevation: float
    grad_z: np.ndarray  # (2,)
    normal: np.ndarray  # (3,) unit
    terrain_class: int
    roughness: float
    friction: float
    obstacle_density: float
    curvature: float
    goal_dir: np.ndarray  # (2,) unit toward goal, zero at the goal

    def as_array(self) -> np.ndarray:
        """Fixed 13-float layout; ordering is part of the file/API contract."""
        return np.concatenate(
            [
                [self.elevation],
                self.grad_z,
                self.normal,
                [float(self.terrain_class), self.roughness, self.friction,
                 self.obstacle_density, self.curvature],
                self.goal_dir,
            ]
        )


FEATURE_DIM = 13


@dataclass
class TerrainGrid:
    """Cell-centered rasters plus derived gradient and obstacle-density fields."""

    cell_size: float
    elevation: np.ndarray
    terrain_class: np.ndarray
    friction: np.ndarray
    roughness: np.ndarray
    wet: bool = False
    meta: dict = field(default_factory=dict)
    grad_x: np.ndarray = field(default=None)  # type: ignore[assignment]
    grad_y: np.ndarray = field(default=None)  # type: ignore[assignment]
    obstacle_density: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.cell_size <= 0.0:
            raise ConfigError("cell_size must be positive")
        self.elevation = np.asarray(self.elevation, dtype=np.float64)
        if self.elevation.ndim != 2 or min(self.elevation.shape) < 2:
            raise ConfigError("elevation must be a 2-D raster with at least 2 cells per side")
        for name in ("terrain_class", "friction", "roughness"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != self.elevation.shape:
                raise ConfigError(f"{name} raster shape {arr.shape} != elevation {self.elevation.shape}")
        self.terrain_class = np.asarray(self.terrain_class, dtype=np.int64)
        self.friction = np.asarray(self.friction, dtype=np.float64)
        self.roughness = np.asarray(self.roughness, dtype=np.float64)
        if not np.all(np.isfinite(self.elevation)):
            raise ConfigError("elevation contains non-finite values")
        if np.any(self.friction <= 0.0):
            raise ConfigError("friction must be strictly positive")
        if np.any(self.roughness < 0.0):
            raise ConfigError("roughness must be non-negative")
        if self.grad_x is None or self.grad_y is None:
            self.grad_x, self.grad_y = _gradient_rasters(self.elevation, self.cell_size)
        if self.obstacle_density is None:
            self.obstacle_density = _obstacle_density_raster(
                self.roughness, self.cell_size, OBSTACLE_RADIUS_M, ROUGHNESS_OBSTACLE_THRESHOLD
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.elevation.shape  # (ny, nx)

    @property
    def size_x(self) -> float:
        return self.shape[1] * self.cell_size

    @property
    def size_y(self) -> float:
        return self.shape[0] * self.cell_size

    def class_name(self, code: int) -> str:
        return TERRAIN_CLASSES[int(code)]

    def friction_for(self, code: int) -> float:
        name = TERRAIN_CLASSES[int(code)]
        if name == "wet_clay":
            return FRICTION_DEFAULTS["wet_clay_wet" if self.wet else "wet_clay_dry"]
        return FRICTION_DEFAULTS[name]


def _gradient_rasters(z: np.ndarray, cell: float) -> tuple[np.ndarray, np.ndarray]:
    # central differences inside, one-sided at the borders
    gy, gx = np.gradient(z, cell)
    return gx, gy


def _obstacle_density_raster(
    roughness: np.ndarray, cell: float, radius_m: float, threshold: float
) -> np.ndarray:
    """Fraction of cells within `radius_m` whose roughness exceeds the threshold."""
    mask = (roughness > threshold).astype(np.float64)
    r = max(1, int(round(radius_m / cell)))
    offsets = [
        (dy, dx)
        for dy in range(-r, r + 1)
        for dx in range(-r, r + 1)
        if dy * dy + dx * dx <= r * r
    ]
    ny, nx = mask.shape
    padded = np.pad(mask, r, mode="edge")
    acc = np.zeros_like(mask)
    for dy, dx in offsets:
        acc += padded[r + dy : r + dy + ny, r + dx : r + dx + nx]
    return acc / len(offsets)


def max_cell_slope_deg(elevation: np.ndarray, cell_size: float) -> float:
    """Steepest slope between axis-adjacent cells, in degrees."""
    dx = np.abs(np.diff(elevation, axis=1)) / cell_size
    dy = np.abs(np.diff(elevation, axis=0)) / cell_size
    steep = max(dx.max() if dx.size else 0.0, dy.max() if dy.size else 0.0)
    return float(np.degrees(np.arctan(steep)))


# ---------------------------------------------------------------------------
# generators


def _cell_centers(n_cells: int, cell: float) -> np.ndarray:
    return (np.arange(n_cells) + 0.5) * cell


def _grid_coords(n: int, cell: float) -> tuple[np.ndarray, np.ndarray]:
    c = _cell_centers(n, cell)
    return np.meshgrid(c, c, indexing="xy")  # xs[iy,ix], ys[iy,ix]


def _check_size(size_m: float, cell_size: float) -> int:
    if size_m <= 0.0 or cell_size <= 0.0:
        raise ConfigError("size_m and cell_size must be positive")
    n = int(round(size_m / cell_size))
    if n < 2:
        raise ConfigError("grid must be at least 2 cells per side")
    return n


def generate_undulating(
    size_m: float = 32.0,
    cell_size: float = 0.5,
    max_slope_deg: float = 30.0,
    seed: int = 0,
    octaves: int = 4,
    base_freq: float = 0.08,
) -> TerrainGrid:
    """Rolling multi-octave ground rescaled to a target steepest cell-to-cell slope.

    Classes (grass/gravel/sand) follow a second, independent noise field.
    """
    if max_slope_deg <= 0.0 or max_slope_deg > 45.0:
        raise ConfigError("max_slope_deg must be in (0, 45]")
    n = _check_size(size_m, cell_size)
    xs, ys = _grid_coords(n, cell_size)
    z = fbm_noise(xs, ys, base_freq, octaves, seed)
    z -= z.mean()
    steep = max(
        np.abs(np.diff(z, axis=1)).max(),
        np.abs(np.diff(z, axis=0)).max(),
    ) / cell_size
    if steep <= 0.0:
        raise ConfigError("degenerate noise field (constant elevation)")
    z *= np.tan(np.radians(max_slope_deg)) / steep

    class_field = fbm_noise(xs, ys, base_freq * 0.6, 3, seed + 104729)
    lo, hi = np.quantile(class_field, [1.0 / 3.0, 2.0 / 3.0])
    classes = np.full((n, n), 0, dtype=np.int64)  # grass
    classes[class_field >= lo] = 1  # gravel
    classes[class_field >= hi] = 2  # sand

    grid = _finalize_grid(
        cell_size, z, classes, seed, wet=False,
        meta={"generator": "undulating", "max_slope_deg": max_slope_deg, "seed": seed},
    )
    return grid


def generate_hill(
    size_m: float = 32.0,
    cell_size: float = 0.5,
    slope_deg: float = 20.0,
    seed: int = 0,
    radius_m: float = 7.0,
    cap_radius_m: float = 1.5,
) -> TerrainGrid:
    """Central cone-shaped hill with a smooth cap; grass west half, gravel east half."""
    if not (0.0 < slope_deg < 89.0):
        raise ConfigError("slope_deg must be in (0, 89)")
    if not (0.0 < cap_radius_m < radius_m):
        raise ConfigError("cap_radius_m must be in (0, radius_m)")
    n = _check_size(size_m, cell_size)
    xs, ys = _grid_coords(n, cell_size)
    cx = cy = size_m / 2.0
    dist = np.hypot(xs - cx, ys - cy)
    s = np.tan(np.radians(slope_deg))
    # cone z = s*(R - d) outside the cap, parabolic cap with matching slope inside
    height = s * (radius_m - cap_radius_m) + s * cap_radius_m / 2.0
    z = np.where(
        dist >= radius_m,
        0.0,
        np.where(
            dist >= cap_radius_m,
            s * (radius_m - dist),
            height - s * dist**2 / (2.0 * cap_radius_m),
        ),
    )
    classes = np.where(xs < cx, 0, 1).astype(np.int64)  # grass | gravel

    grid = _finalize_grid(
        cell_size, z, classes, seed, wet=False,
        meta={"generator": "hill", "slope_deg": slope_deg, "radius_m": radius_m, "seed": seed},
    )
    return grid


def generate_directional(
    size_m: float = 32.0,
    cell_size: float = 0.5,
    seed: int = 0,
    max_slope_deg: float = 12.0,
    wet: bool = True,
    base_freq: float = 0.07,
) -> TerrainGrid:
    """Four-quadrant world (grass, gravel, sand, wet clay) over mild undulation."""
    if max_slope_deg <= 0.0 or max_slope_deg > 45.0:
        raise ConfigError("max_slope_deg must be in (0, 45]")
    n = _check_size(size_m, cell_size)
    xs, ys = _grid_coords(n, cell_size)
    z = fbm_noise(xs, ys, base_freq, 4, seed)
    z -= z.mean()
    steep = max(
        np.abs(np.diff(z, axis=1)).max(),
        np.abs(np.diff(z, axis=0)).max(),
    ) / cell_size
    z *= np.tan(np.radians(max_slope_deg)) / steep

    half = size_m / 2.0
    classes = np.zeros((n, n), dtype=np.int64)  # SW grass
    classes[(xs >= half) & (ys < half)] = 1  # SE gravel
    classes[(xs < half) & (ys >= half)] = 2  # NW sand
    classes[(xs >= half) & (ys >= half)] = 3  # NE wet clay

    grid = _finalize_grid(
        cell_size, z, classes, seed, wet=wet,
        meta={"generator": "directional", "max_slope_deg": max_slope_deg, "wet": wet, "seed": seed},
    )
    return grid


def _finalize_grid(
    cell_size: float, z: np.ndarray, classes: np.ndarray, seed: int, wet: bool, meta: dict
) -> TerrainGrid:
    n = z.shape[0]
    xs, ys = _grid_coords(n, cell_size)
    rough_noise = fbm_noise(xs, ys, 0.9, 2, seed + 15485863)
    amp = np.array([ROUGHNESS_AMP[name] for name in TERRAIN_CLASSES])
    roughness = amp[classes] * rough_noise
    friction = np.empty_like(z)
    for code, name in enumerate(TERRAIN_CLASSES):
        if name == "wet_clay":
            mu = FRICTION_DEFAULTS["wet_clay_wet" if wet else "wet_clay_dry"]
        else:
            mu = FRICTION_DEFAULTS[name]
        friction[classes == code] = mu
    return TerrainGrid(
        cell_size=cell_size,
        elevation=z,
        terrain_class=classes,
        friction=friction,
        roughness=roughness,
        wet=wet,
        meta=meta,
    )


# ---------------------------------------------------------------------------
# continuous queries


def _bilinear(raster: np.ndarray, fx: np.ndarray | float, fy: np.ndarray | float) -> np.ndarray | float:
    """Interpolate a cell-centered raster at fractional cell coordinates."""
    ny, nx = raster.shape
    # cell-center coordinates: sample i sits at i + 0.5
    gx = np.clip(np.asarray(fx, dtype=np.float64) - 0.5, 0.0, nx - 1.0)
    gy = np.clip(np.asarray(fy, dtype=np.float64) - 0.5, 0.0, ny - 1.0)
    x0 = np.clip(np.floor(gx).astype(np.int64), 0, nx - 2)
    y0 = np.clip(np.floor(gy).astype(np.int64), 0, ny - 2)
    tx, ty = gx - x0, gy - y0
    v00 = raster[y0, x0]
    v10 = raster[y0, x0 + 1]
    v01 = raster[y0 + 1, x0]
    v11 = raster[y0 + 1, x0 + 1]
    top = v00 + (v10 - v00) * tx
    bot = v01 + (v11 - v01) * tx
    return top + (bot - top) * ty


def _check_inside(grid: TerrainGrid, x: float, y: float) -> None:
    if not (np.isfinite(x) and np.isfinite(y)):
        raise BoundsError(f"non-finite query position ({x}, {y})")
    if not (0.0 <= x <= grid.size_x and 0.0 <= y <= grid.size_y):
        raise BoundsError(
            f"query ({x:.3f}, {y:.3f}) outside grid [0, {grid.size_x}] x [0, {grid.size_y}]"
        )


def elevation_at(grid: TerrainGrid, x: float, y: float) -> float:
    _check_inside(grid, x, y)
    return float(_bilinear(grid.elevation, x / grid.cell_size, y / grid.cell_size))


def gradient_at(grid: TerrainGrid, x: float, y: float) -> np.ndarray:
    _check_inside(grid, x, y)
    fx, fy = x / grid.cell_size, y / grid.cell_size
    return np.array([
        _bilinear(grid.grad_x, fx, fy),
        _bilinear(grid.grad_y, fx, fy),
    ])


def class_at(grid: TerrainGrid, x: float, y: float) -> int:
    _check_inside(grid, x, y)
    ny, nx = grid.shape
    ix = min(int(x / grid.cell_size), nx - 1)
    iy = min(int(y / grid.cell_size), ny - 1)
    return int(grid.terrain_class[iy, ix])


def sample_features(
    grid: TerrainGrid,
    x: float,
    y: float,
    goal_xy: np.ndarray,
    curvature: float = 0.0,
) -> FeatureVec:
    """Interpolated local description at a world position.

    Curvature comes from the caller (it is a property of the path being
    followed, not of the ground), so open-loop probes pass 0.
    """
    _check_inside(grid, x, y)
    fx, fy = x / grid.cell_size, y / grid.cell_size
    z = float(_bilinear(grid.elevation, fx, fy))
    gx = float(_bilinear(grid.grad_x, fx, fy))
    gy = float(_bilinear(grid.grad_y, fx, fy))
    normal = np.array([-gx, -gy, 1.0])
    normal /= np.linalg.norm(normal)
    goal_xy = np.asarray(goal_xy, dtype=np.float64)
    to_goal = goal_xy - np.array([x, y])
    dist = np.linalg.norm(to_goal)
    goal_dir = to_goal / dist if dist > 1e-12 else np.zeros(2)
    return FeatureVec(
        elevation=z,
        grad_z=np.array([gx, gy]),
        normal=normal,
        terrain_class=class_at(grid, x, y),
        roughness=float(_bilinear(grid.roughness, fx, fy)),
        friction=float(_bilinear(grid.friction, fx, fy)),
        obstacle_density=float(_bilinear(grid.obstacle_density, fx, fy)),
        curvature=float(curvature),
        goal_dir=goal_dir,
    )


def slope_along(grid: TerrainGrid, x: float, y: float, heading: float) -> float:
    """Signed slope angle (radians) of the ground along a heading; uphill positive."""
    g = gradient_at(grid, x, y)
    rise = g[0] * np.cos(heading) + g[1] * np.sin(heading)
    return float(np.arctan(rise))


# ---------------------------------------------------------------------------
# persistence: one CSV per raster plus a JSON sidecar


_RASTER_FILES = {
    "elevation": "elevation.csv",
    "terrain_class": "terrain_class.csv",
    "friction": "friction.csv",
    "roughness": "roughness.csv",
}


def export_grid(grid: TerrainGrid, dir_path: str) -> None:
    os.makedirs(dir_path, exist_ok=True)
    for attr, fname in _RASTER_FILES.items():
        arr = getattr(grid, attr)
        fmt = "%d" if arr.dtype.kind == "i" else "%.17g"
        np.savetxt(os.path.join(dir_path, fname), arr, fmt=fmt, delimiter=",")
    sidecar = {
        "cell_size": grid.cell_size,
        "shape": list(grid.shape),
        "wet": grid.wet,
        "classes": list(TERRAIN_CLASSES),
        "meta": grid.meta,
    }
    with open(os.path.join(dir_path, "terrain.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def import_grid(dir_path: str) -> TerrainGrid:
    """Load a grid exported by export_grid; derived rasters are recomputed."""
    sidecar_path = os.path.join(dir_path, "terrain.json")
    if not os.path.exists(sidecar_path):
        raise InputError(f"no terrain.json under {dir_path}")
    with open(sidecar_path) as fh:
        sidecar = json.load(fh)
    rasters = {}
    for attr, fname in _RASTER_FILES.items():
        path = os.path.join(dir_path, fname)
        if not os.path.exists(path):
            raise InputError(f"missing raster file {fname}")
        rasters[attr] = np.loadtxt(path, delimiter=",", ndmin=2)
    grid = TerrainGrid(
        cell_size=float(sidecar["cell_size"]),
        elevation=rasters["elevation"],
        terrain_class=rasters["terrain_class"].astype(np.int64),
        friction=rasters["friction"],
        roughness=rasters["roughness"],
        wet=bool(sidecar.get("wet", False)),
        meta=sidecar.get("meta", {}),
    )
    if list(grid.shape) != list(sidecar["shape"]):
        raise InputError("raster shape does not match sidecar")
    return grid
