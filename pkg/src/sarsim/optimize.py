"""Compass pattern search over real-valued waypoint vectors, and the
projection that turns such vectors into valid cell paths."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .pathplan import Path
from .world import Cell, GridEnvironment, OccupancyMap


@dataclass(frozen=True)
class SearchBudget:
    max_evals: int = 2000
    initial_mesh: float = 2.0
    contraction: float = 0.5
    min_mesh: float = 0.5
    restarts: int = 1

    def __post_init__(self):
        if self.max_evals < 0:
            raise ValueError("max_evals must be >= 0")
        if not (self.initial_mesh > 0 and self.min_mesh > 0):
            raise ValueError("mesh sizes must be positive")
        if not 0 < self.contraction < 1:
            raise ValueError("contraction must lie in (0, 1)")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass(frozen=True)
class SearchResult:
    x: np.ndarray
    value: float
    initial_value: float
    evaluations: int


def round_half_away(v: float) -> int:
    return int(kernels.round_half_away(float(v)))


def encode_paths(paths, min_waypoints: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Decision vector of ``(x, y)`` waypoints after each path's origin.

    The origin is fixed by the robot's position and is not a decision. Paths
    with fewer than ``min_waypoints`` waypoints are padded by repeating their
    last cell; projection drops the repeats, so the padding changes nothing
    until the search moves it. Returns the vector and per-robot counts.
    """
    coords = []
    counts = []
    for p in paths:
        cells = p.cells[1:]
        cells = cells + (p.cells[-1],) * max(0, min_waypoints - len(cells))
        counts.append(len(cells))
        for x, y in cells:
            coords.extend((float(x), float(y)))
    return np.array(coords, dtype=np.float64), np.array(counts, dtype=np.int64)


def project_to_paths(x: np.ndarray, counts, starts, occupancy: OccupancyMap,
                     env: GridEnvironment) -> list[Path]:
    """Round waypoints to cells, clip to the grid, drop repeats and bridge gaps
    with A*. Unreachable or blocked waypoints are skipped, so a path may
    collapse to its start."""
    x = np.asarray(x, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.int64)
    if x.shape[0] != 2 * int(counts.sum()):
        raise ValueError("decision vector does not match the waypoint counts")
    passable = occupancy.passable_flat()
    out = []
    pos = 0
    for m, start in zip(counts, starts):
        seg = x[2 * pos : 2 * (pos + m)]
        flat = kernels.project_path(seg[0::2].copy(), seg[1::2].copy(), env.index(start),
                                    passable, env.width, env.height)
        out.append(Path(tuple(env.cell(i) for i in flat)))
        pos += m
    return out


def _compass(objective, x, fx, budget: SearchBudget, evals: int):
    mesh = budget.initial_mesh
    while mesh >= budget.min_mesh and evals < budget.max_evals:
        improved = False
        for i in range(x.shape[0]):
            for sign in (1.0, -1.0):
                if evals >= budget.max_evals:
                    break
                y = x.copy()
                y[i] += sign * mesh
                fy = objective(y)
                evals += 1
                if fy > fx:
                    x, fx, improved = y, fy, True
                    break
            if improved or evals >= budget.max_evals:
                break
        if not improved:
            mesh *= budget.contraction
    return x, fx, evals


def pattern_search(objective: Callable[[np.ndarray], float], x0, budget: SearchBudget,
                   restart_rng: np.random.Generator | None = None,
                   restart_spread: float = 2.0) -> SearchResult:
    """Maximise ``objective`` by compass polling.

    Polls ``+mesh`` then ``-mesh`` on each coordinate in order and moves to
    the first improving point; a full poll without improvement contracts the
    mesh. Stops when the mesh falls below ``min_mesh`` or the evaluation
    budget is spent, and never returns a point worse than ``x0``.

    With ``budget.restarts > 1`` and budget left after the first search,
    further searches start from ``x0`` plus uniform jitter of
    ``restart_spread`` drawn from ``restart_rng``; the best point wins.
    """
    x0 = np.asarray(x0, dtype=np.float64).copy()
    if budget.max_evals == 0:
        return SearchResult(x0, float("nan"), float("nan"), 0)
    f0 = float(objective(x0))
    best_x, best_f, evals = _compass(objective, x0, f0, budget, 1)
    for r in range(1, budget.restarts):
        if evals >= budget.max_evals or restart_rng is None or x0.shape[0] == 0:
            break
        start = x0 + restart_rng.uniform(-restart_spread, restart_spread, size=x0.shape)
        fs = float(objective(start))
        evals += 1
        x, fx, evals = _compass(objective, start, fs, budget, evals)
        if fx > best_f:
            best_x, best_f = x, fx
    return SearchResult(best_x, float(best_f), f0, evals)
