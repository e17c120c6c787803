"""Static environment, discovered obstacles and the victim population."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError

Cell = tuple[int, int]

# Row-major (y first, then x) Moore offsets.
MOORE = tuple((dx, dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dx, dy) != (0, 0))


@dataclass(frozen=True)
class GridEnvironment:
    """``width`` x ``height`` lattice of 1-based cells with static obstacles."""

    width: int
    height: int
    obstacles: frozenset[Cell] = frozenset()

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError("grid", f"dimensions must be positive, got {self.width}x{self.height}")
        object.__setattr__(self, "obstacles", frozenset(tuple(c) for c in self.obstacles))
        for cell in self.obstacles:
            if not self.contains(cell):
                raise ConfigError("grid.obstacles", f"obstacle {cell} outside the grid")

    @property
    def size(self) -> int:
        return self.width * self.height

    def contains(self, cell: Cell) -> bool:
        x, y = cell
        return 1 <= x <= self.width and 1 <= y <= self.height

    def index(self, cell: Cell) -> int:
        return (cell[1] - 1) * self.width + (cell[0] - 1)

    def cell(self, index: int) -> Cell:
        return (int(index) % self.width + 1, int(index) // self.width + 1)

    @cached_property
    def obstacle_mask(self) -> np.ndarray:
        """Boolean ``(height, width)`` array, ``True`` on obstacles."""
        mask = np.zeros((self.height, self.width), dtype=bool)
        for x, y in self.obstacles:
            mask[y - 1, x - 1] = True
        return mask

    def free_cells(self) -> list[Cell]:
        return [
            (x, y)
            for y in range(1, self.height + 1)
            for x in range(1, self.width + 1)
            if (x, y) not in self.obstacles
        ]


def free_neighbors(env: GridEnvironment, cell: Cell) -> list[Cell]:
    """In-grid, obstacle-free Moore neighbours of ``cell`` in row-major order."""
    if not env.contains(cell):
        raise ValueError(f"cell {cell} outside {env.width}x{env.height} grid")
    x, y = cell
    out = []
    for dx, dy in MOORE:
        nb = (x + dx, y + dy)
        if env.contains(nb) and nb not in env.obstacles:
            out.append(nb)
    return out


class OccupancyMap:
    """Obstacles discovered so far. Only true obstacles are ever registered."""

    def __init__(self, env: GridEnvironment):
        self.env = env
        self.known: set[Cell] = set()
        self._mask = np.zeros(env.size, dtype=bool)

    def register(self, cells) -> int:
        """Record every true obstacle among ``cells``; returns how many were new."""
        new = 0
        for cell in cells:
            if cell in self.env.obstacles and cell not in self.known:
                self.known.add(cell)
                self._mask[self.env.index(cell)] = True
                new += 1
        return new

    def is_blocked(self, cell: Cell) -> bool:
        return cell in self.known

    @property
    def blocked_flat(self) -> np.ndarray:
        """Flat row-major mask of known obstacles (read-only view)."""
        view = self._mask.view()
        view.flags.writeable = False
        return view

    def passable_flat(self) -> np.ndarray:
        return ~self._mask

    def copy(self) -> "OccupancyMap":
        other = OccupancyMap(self.env)
        other.known = set(self.known)
        other._mask = self._mask.copy()
        return other


class RngStream:
    """Seeded random stream keyed by ``(seed, *key)``.

    Each stochastic actor gets its own key so that adding or removing draws
    in one actor never shifts another's sequence.
    """

    def __init__(self, seed: int, *key: int):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def random(self) -> float:
        return float(self._gen.random())

    def integers(self, high: int) -> int:
        return int(self._gen.integers(high))

    def uniform(self, low: float, high: float) -> float:
        return float(self._gen.uniform(low, high))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen


@dataclass(frozen=True)
class DetectionRecord:
    robot: int
    tick: int
    health: float


@dataclass(frozen=True)
class Victim:
    id: int
    position: Cell
    health: float
    alive: bool = True
    detection: DetectionRecord | None = None
    visits: int = 0

    def __post_init__(self):
        if not 0.0 <= self.health <= 100.0:
            raise ValueError(f"victim {self.id}: health {self.health} outside [0, 100]")
        if self.alive != (self.health > 0.0):
            raise ValueError(f"victim {self.id}: alive flag inconsistent with health {self.health}")


def step_victim_motion(env: GridEnvironment, victim: Victim, p_stay: float, rng: RngStream) -> Victim:
    """Random walk step: stay with ``p_stay``, else a uniformly chosen free neighbour.

    One uniform draw is consumed per call (also when the victim is trapped),
    so a victim's stream advances identically whatever happens around it.
    Deceased victims do not move and consume nothing.
    """
    if not victim.alive:
        return victim
    u = rng.random()
    if u < p_stay:
        return victim
    options = free_neighbors(env, victim.position)
    if not options:
        return victim
    pick = int((u - p_stay) / (1.0 - p_stay) * len(options))
    pick = min(pick, len(options) - 1)
    return dataclasses.replace(victim, position=options[pick])


def check_health_params(alpha: float, beta: float, gamma: float, h_crit: float, prefix: str = "params"):
    for name, value in (("alpha", alpha), ("beta", beta), ("gamma", gamma)):
        if not value > 0:
            raise ConfigError(f"{prefix}.{name}", f"must be > 0, got {value}")
    if not 0 < h_crit <= 100:
        raise ConfigError(f"{prefix}.h_crit", f"must lie in (0, 100], got {h_crit}")
    if gamma < beta * h_crit:
        raise ConfigError(
            f"{prefix}.gamma",
            f"gamma={gamma} < beta*h_crit={beta * h_crit}; health could increase below h_crit",
        )


def health_delta(h: float, alpha: float, beta: float, gamma: float, h_crit: float) -> float:
    if h >= h_crit:
        return -alpha
    return beta * h - gamma


def step_health(victim: Victim, alpha: float, beta: float, gamma: float, h_crit: float) -> Victim:
    """One tick of health decay: constant above ``h_crit`` (inclusive), linear below."""
    check_health_params(alpha, beta, gamma, h_crit)
    if not victim.alive:
        return victim
    h = max(victim.health + health_delta(victim.health, alpha, beta, gamma, h_crit), 0.0)
    return dataclasses.replace(victim, health=h, alive=h > 0.0)


@dataclass
class VictimPopulation:
    """Mutable container the engine advances tick by tick."""

    victims: list[Victim]
    streams: dict[int, RngStream] = field(default_factory=dict)

    def by_id(self, vid: int) -> Victim:
        for v in self.victims:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def at(self, cell: Cell) -> list[Victim]:
        return [v for v in self.victims if v.position == cell]
