"""Candidate paths (A* and Yen's k-shortest) and their grading."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NoPathError
from .fuzzy import PriorityMap
from .sensing import RobotState
from .world import Cell, GridEnvironment, OccupancyMap

DEFAULT_K = 3


@dataclass(frozen=True)
class Path:
    cells: tuple[Cell, ...]

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(tuple(c) for c in self.cells))
        if not self.cells:
            raise ValueError("a path holds at least its origin")
        for a, b in zip(self.cells[:-1], self.cells[1:]):
            if max(abs(a[0] - b[0]), abs(a[1] - b[1])) != 1:
                raise ValueError(f"cells {a} and {b} are not adjacent")

    @property
    def length(self) -> int:
        return len(self.cells)

    @property
    def origin(self) -> Cell:
        return self.cells[0]

    @property
    def end(self) -> Cell:
        return self.cells[-1]

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    @classmethod
    def stay(cls, cell: Cell) -> "Path":
        return cls((tuple(cell),))


@dataclass(frozen=True)
class GradedPath:
    path: Path
    exploration: float
    grade: float


def passable_mask(occupancy: OccupancyMap, allowed=None) -> np.ndarray:
    """Flat mask of cells a planner may enter: not a known obstacle and, if
    ``allowed`` is given, inside that cell set."""
    env = occupancy.env
    mask = occupancy.passable_flat().copy()
    if allowed is not None:
        keep = np.zeros(env.size, dtype=bool)
        for cell in allowed:
            if env.contains(cell):
                keep[env.index(cell)] = True
        mask &= keep
    return mask


def _to_path(env: GridEnvironment, flat) -> Path:
    return Path(tuple(env.cell(i) for i in flat))


def _check_inside(env: GridEnvironment, *cells: Cell):
    for cell in cells:
        if not env.contains(cell):
            raise ValueError(f"cell {cell} outside {env.width}x{env.height} grid")


def astar_shortest(origin: Cell, goal: Cell, occupancy: OccupancyMap, env: GridEnvironment,
                   allowed=None) -> Path:
    """Minimum-step 8-connected path around known obstacles.

    Unknown cells are traversable. Raises :class:`NoPathError` when ``goal``
    cannot be reached.
    """
    _check_inside(env, origin, goal)
    if occupancy.is_blocked(origin):
        raise ValueError(f"origin {origin} is a known obstacle")
    passable = passable_mask(occupancy, allowed)
    none = np.zeros(env.size, dtype=bool)
    edges = np.empty(0, dtype=np.int64)
    flat = kernels.astar(passable, env.width, env.height, env.index(origin), env.index(goal),
                         none, edges, edges, 0)
    if flat.shape[0] == 0:
        raise NoPathError(f"no path from {origin} to {goal}")
    return _to_path(env, flat)


def yen_k_shortest(origin: Cell, goal: Cell, k: int, occupancy: OccupancyMap,
                   env: GridEnvironment, allowed=None) -> list[Path]:
    """Up to ``k`` loopless paths in non-decreasing length (empty if unreachable)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    _check_inside(env, origin, goal)
    passable = passable_mask(occupancy, allowed)
    cells, offs, lens = kernels.yen(passable, env.width, env.height, env.index(origin),
                                    env.index(goal), k)
    return [_to_path(env, cells[o : o + m]) for o, m in zip(offs, lens)]


def exploration_degree(path: Path, priorities: PriorityMap, lam: float, scale: float = 1.0) -> float:
    """Discounted priority sum along ``path``; the first cell has weight 1."""
    eps = 0.0
    w = 1.0
    for cell in path.cells:
        eps += w * (priorities.value(cell) * scale)
        w *= lam
    return eps


def grade(path: Path, eps: float, c1: float, c2: float) -> float:
    return -c1 * path.length + c2 * eps


@dataclass(frozen=True)
class PlannerParams:
    """Path-grading weights. ``priority_scale`` multiplies every fuzzy priority
    before it enters a grade."""

    lam: float = 0.6
    c1: float = 2.0
    c2: float = 5.0
    k: int = DEFAULT_K
    priority_scale: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("c1 and c2 must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.priority_scale > 0:
            raise ValueError("priority_scale must be positive")


def _goals(env: GridEnvironment, priorities: PriorityMap, occupancy: OccupancyMap) -> np.ndarray:
    cells = [c for c in priorities.cells if not occupancy.is_blocked(c)]
    return np.array([env.index(c) for c in cells], dtype=np.int64)


def local_candidates(robot: RobotState, priorities: PriorityMap, occupancy: OccupancyMap,
                     env: GridEnvironment, params: PlannerParams) -> list[GradedPath]:
    """Every graded candidate (up to ``k`` per field cell), in goal order."""
    out = []
    for goal in priorities.cells:
        if occupancy.is_blocked(goal):
            continue
        for p in yen_k_shortest(robot.position, goal, params.k, occupancy, env,
                                allowed=priorities.cells):
            eps = exploration_degree(p, priorities, params.lam, params.priority_scale)
            out.append(GradedPath(p, eps, grade(p, eps, params.c1, params.c2)))
    return out


def plan_local(robot: RobotState, priorities: PriorityMap, occupancy: OccupancyMap,
               env: GridEnvironment, params: PlannerParams, avoid: Cell | None = None) -> GradedPath:
    """Best-graded path inside the robot's field.

    Ties go to the shorter path, then to the goal earlier in row-major order.
    ``avoid`` excludes paths that enter that cell after their origin. With no
    candidate the robot stays put.
    """
    passable = passable_mask(occupancy, priorities.cells)
    origin = env.index(robot.position)
    passable[origin] = True
    prio = priorities.as_flat(env, params.priority_scale)
    flat, _ = kernels.best_local_path(
        passable, env.width, env.height, origin, _goals(env, priorities, occupancy), prio,
        params.k, params.lam, params.c1, params.c2, -1 if avoid is None else env.index(avoid),
    )
    path = _to_path(env, flat)
    eps = exploration_degree(path, priorities, params.lam, params.priority_scale)
    return GradedPath(path, eps, grade(path, eps, params.c1, params.c2))
