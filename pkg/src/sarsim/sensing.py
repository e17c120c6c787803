"""Perception fields, scan-certainty dynamics and victim bookkeeping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from ._accel import NUMBA_ENABLED
from .world import Cell, GridEnvironment

# Evidence reported by an imperfect sensor for a cell with no victim signal.
NO_SIGNAL_FLOOR = 0.02


@dataclass(frozen=True)
class SensorSpec:
    """``radius`` in cells (Euclidean, centre to centre); ``eta`` is the
    fraction of uncertainty a scan at distance zero leaves behind."""

    radius: float
    eta: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"perception radius must be > 0, got {self.radius}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")


@dataclass
class RobotState:
    id: int
    position: Cell
    sensor: SensorSpec


@lru_cache(maxsize=64)
def _disc_offsets(radius: float) -> tuple[tuple[int, int, float], ...]:
    r = int(math.ceil(radius))
    out = []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            d = math.sqrt(dx * dx + dy * dy)
            if d < radius:
                out.append((dx, dy, d))
    return tuple(out)


def field_cells(robot: RobotState, env: GridEnvironment) -> list[Cell]:
    """Perception field in row-major order."""
    x, y = robot.position
    return [
        (x + dx, y + dy)
        for dx, dy, _ in _disc_offsets(float(robot.sensor.radius))
        if env.contains((x + dx, y + dy))
    ]


def perception_field(robot: RobotState, env: GridEnvironment) -> frozenset[Cell]:
    """All in-grid cells strictly closer than the perception radius.

    Obstacles do not occlude the field.
    """
    return frozenset(field_cells(robot, env))


def _dist(a: Cell, b: Cell) -> float:
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    return math.sqrt(dx * dx + dy * dy)


def _sorted(robots):
    return sorted(robots, key=lambda r: r.id)


def ratio_factor(distance: float, sensor: SensorSpec) -> float:
    """One robot's share of the uncertainty ratio at ``distance``."""
    if distance < sensor.radius:
        return 1.0 - (1.0 - sensor.eta) * math.exp(-distance)
    return 1.0


def uncertainty_ratio(cell: Cell, robots) -> float:
    """Joint multiplicative factor applied to the cell's uncertainty this tick."""
    s = 1.0
    for robot in _sorted(robots):
        d = _dist(cell, robot.position)
        if d < robot.sensor.radius:
            s *= 1.0 - (1.0 - robot.sensor.eta) * math.exp(-d)
    return s


class ScanCertaintyMap:
    """Per-cell certainty in [0, 1] on a ``(height, width)`` array."""

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("certainty map must be two-dimensional")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("certainty values must lie in [0, 1]")
        self.values = values

    @classmethod
    def uniform(cls, env: GridEnvironment, value: float = 0.0) -> "ScanCertaintyMap":
        return cls(np.full((env.height, env.width), float(value)))

    @property
    def uncertainty(self) -> np.ndarray:
        return 1.0 - self.values

    def at(self, cell: Cell) -> float:
        return float(self.values[cell[1] - 1, cell[0] - 1])

    def total(self) -> float:
        return float(self.values.sum())

    def copy(self) -> "ScanCertaintyMap":
        return ScanCertaintyMap(self.values.copy())

    def __eq__(self, other):
        return isinstance(other, ScanCertaintyMap) and np.array_equal(self.values, other.values)


def _robot_arrays(robots):
    robots = _sorted(robots)
    xs = np.array([r.position[0] - 1 for r in robots], dtype=np.float64)
    ys = np.array([r.position[1] - 1 for r in robots], dtype=np.float64)
    radii = np.array([r.sensor.radius for r in robots], dtype=np.float64)
    etas = np.array([r.sensor.eta for r in robots], dtype=np.float64)
    return xs, ys, radii, etas


def scan_update_numpy(cert, width, height, xs, ys, radii, etas):
    """Vectorised twin of :func:`sarsim.kernels.scan_update` (in place)."""
    if xs.shape[0] == 0:
        return
    grid = cert.reshape(height, width)
    r = np.ceil(radii).astype(np.int64)
    x0 = max(int((xs - r).min()), 0)
    x1 = min(int((xs + r).max()), width - 1)
    y0 = max(int((ys - r).min()), 0)
    y1 = min(int((ys + r).max()), height - 1)
    gx = np.arange(x0, x1 + 1, dtype=np.float64)[None, :]
    gy = np.arange(y0, y1 + 1, dtype=np.float64)[:, None]
    sigma = np.ones((y1 - y0 + 1, x1 - x0 + 1))
    hit = np.zeros(sigma.shape, dtype=bool)
    for i in range(xs.shape[0]):
        dx = gx - xs[i]
        dy = gy - ys[i]
        d = np.sqrt(dx * dx + dy * dy)
        inside = d < radii[i]
        sigma = np.where(inside, sigma * (1.0 - (1.0 - etas[i]) * np.exp(-d)), sigma)
        hit |= inside
    block = grid[y0 : y1 + 1, x0 : x1 + 1]
    block[hit] = np.minimum(block[hit] + (1.0 - sigma[hit]) * (1.0 - block[hit]), 1.0)


def apply_scan(cert_flat: np.ndarray, width: int, height: int, robots) -> None:
    """In-place joint scan on a flat certainty array (backend dispatch)."""
    xs, ys, radii, etas = _robot_arrays(robots)
    if NUMBA_ENABLED:
        kernels.scan_update(cert_flat, width, height, xs, ys, radii, etas)
    else:
        scan_update_numpy(cert_flat, width, height, xs, ys, radii, etas)


def update_scan_certainty(cmap: ScanCertaintyMap, robots) -> ScanCertaintyMap:
    """New map after one joint scan by ``robots``: z' = sigma * z, c' = 1 - z'."""
    height, width = cmap.values.shape
    flat = cmap.values.ravel().copy()
    apply_scan(flat, width, height, list(robots))
    return ScanCertaintyMap(flat.reshape(height, width))


def victim_evidence(robot: RobotState, cell: Cell, signal_cells) -> float:
    """Probability that ``cell`` holds a victim, as estimated by ``robot``.

    A signal from an in-field cell is weighted with the same proximity kernel
    as the scan update; otherwise a perfect sensor reports 0 and an imperfect
    one a small floor.
    """
    d = _dist(cell, robot.position)
    if cell in signal_cells and d < robot.sensor.radius:
        return (1.0 - robot.sensor.eta) * math.exp(-d)
    return 0.0 if robot.sensor.eta == 1.0 else NO_SIGNAL_FLOOR


@dataclass(frozen=True)
class VictimObservation:
    victim: int
    position: Cell
    health: float
    tick: int
    observer: int


@dataclass
class LocalVictimMap:
    """What one robot remembers about victims.

    ``entries`` keeps the latest observation per victim; ``visited`` is the set
    of victims this robot has shared a cell with.
    """

    entries: dict[int, VictimObservation] = field(default_factory=dict)
    visited: set[int] = field(default_factory=set)

    def observe(self, obs: VictimObservation) -> None:
        self.entries[obs.victim] = obs

    def copy(self) -> "LocalVictimMap":
        return LocalVictimMap(dict(self.entries), set(self.visited))


def prune_local_victim_map(vmap: LocalVictimMap, current_target: int | None, field) -> LocalVictimMap:
    """Drop entries that are neither the current target, nor visited, nor in view."""
    keep = {
        vid: obs
        for vid, obs in vmap.entries.items()
        if vid == current_target or vid in vmap.visited or obs.position in field
    }
    return LocalVictimMap(keep, set(vmap.visited))


@dataclass
class GlobalVictimMap:
    """Every observation any robot has reported, grouped by victim."""

    records: dict[int, list[VictimObservation]] = field(default_factory=dict)

    def add(self, obs: VictimObservation) -> bool:
        recs = self.records.setdefault(obs.victim, [])
        if obs in recs:
            return False
        recs.append(obs)
        return True

    def latest(self, vid: int) -> VictimObservation:
        return max(self.records[vid], key=lambda o: (o.tick, -o.observer))

    def known_positions(self) -> dict[int, Cell]:
        return {vid: self.latest(vid).position for vid in sorted(self.records)}

    def copy(self) -> "GlobalVictimMap":
        return GlobalVictimMap({k: list(v) for k, v in self.records.items()})


def merge_into_global(
    cmap: ScanCertaintyMap,
    victims: GlobalVictimMap,
    robots,
    observations,
) -> tuple[ScanCertaintyMap, GlobalVictimMap]:
    """Fold one tick of local sensing into the supervisor's maps."""
    robots = list(robots)
    new_map = update_scan_certainty(cmap, robots) if robots else cmap.copy()
    new_victims = victims.copy()
    for obs in observations:
        new_victims.add(obs)
    return new_map, new_victims
