"""Controllers: selfish fuzzy planners, the cooperative hierarchy with a
supervisory MPC, pure MPC, ant-colony coverage and random search."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations

import numpy as np

from . import kernels
from .errors import NoPathError
from .fuzzy import PriorityMap, RuleBase, build_priority_map
from .optimize import SearchBudget, encode_paths, pattern_search
from .pathplan import GradedPath, Path, PlannerParams, exploration_degree, grade, plan_local
from .sensing import (
    LocalVictimMap,
    RobotState,
    ScanCertaintyMap,
    field_cells,
    perception_field,
    update_scan_certainty,
)
from .world import Cell, GridEnvironment, OccupancyMap, RngStream, free_neighbors

# Subtracted from the normalised objective of a plan that still shares a
# victim cell after repair.
INFEASIBLE_PENALTY = 1e3


class ControllerKind(str, Enum):
    COOPERATIVE = "cooperative"
    SELFISH = "selfish"
    PURE_MPC = "pure_mpc"
    ACS = "acs"
    EXHAUSTIVE = "exhaustive"

    @classmethod
    def parse(cls, name: str) -> "ControllerKind":
        try:
            return cls(str(name).strip().lower().replace("-", "_"))
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown controller {name!r} (expected one of {valid})") from None


@dataclass(frozen=True)
class ControlParams:
    planner: PlannerParams = PlannerParams()
    tau_int: int = 30
    w1: float = 1.0
    w2: float = 0.05
    budget: SearchBudget = SearchBudget()
    # Warm starts are padded to this many waypoints so a short local path
    # (or staying put) still leaves the optimizer room to move.
    horizon: int = 6
    penalty: float = INFEASIBLE_PENALTY


@dataclass(frozen=True)
class ConflictEvent:
    i: int
    j: int
    overlap: int
    tick: int = 0


@dataclass(frozen=True)
class JointPlan:
    paths: tuple[Path, ...]

    @property
    def horizon(self) -> int:
        return max(p.length for p in self.paths)

    def starts_at(self, positions) -> bool:
        return all(p.origin == tuple(c) for p, c in zip(self.paths, positions))

    def shared_victim_cells(self, victim_cells) -> list[Cell]:
        """Victim cells entered by more than one path (origins excluded)."""
        bad = []
        for cell in victim_cells:
            holders = sum(1 for p in self.paths if cell in p.cells[1:])
            if holders > 1:
                bad.append(tuple(cell))
        return bad


# --------------------------------------------------------------------------
# robot-side memory and the controller's view of the world


@dataclass
class RobotAgent:
    """A robot together with the maps its on-board controller keeps."""

    state: RobotState
    certainty: np.ndarray  # flat local scan-certainty map
    victims: LocalVictimMap = field(default_factory=LocalVictimMap)
    rng: RngStream | None = None
    plan: Path | None = None
    target: int | None = None

    @property
    def id(self) -> int:
        return self.state.id

    @property
    def position(self) -> Cell:
        return self.state.position


@dataclass
class WorldView:
    """Read-only snapshot a controller decides on."""

    env: GridEnvironment
    occupancy: OccupancyMap
    certainty: np.ndarray  # flat global scan certainty
    agents: list[RobotAgent]
    observed_victims: dict[int, Cell]  # last observed position per victim
    detected: frozenset[int]  # victims some robot has shared a cell with
    rules: RuleBase
    params: ControlParams
    tick: int = 0


@dataclass
class Decision:
    moves: list[Cell]
    paths: list[Path]
    conflicts: list[ConflictEvent] = field(default_factory=list)
    supervised: bool = False
    evaluations: int = 0
    j_in: float | None = None
    j_out: float | None = None


# --------------------------------------------------------------------------
# conflicts and the MPC objective


def detect_conflicts(robots, env: GridEnvironment, tau_int: int, tick: int = 0) -> list[ConflictEvent]:
    """Pairs whose perception fields share more than ``tau_int`` cells."""
    robots = sorted(robots, key=lambda r: r.id)
    fields = [perception_field(r, env) for r in robots]
    out = []
    for a, b in combinations(range(len(robots)), 2):
        overlap = len(fields[a] & fields[b])
        if overlap > tau_int:
            out.append(ConflictEvent(robots[a].id, robots[b].id, overlap, tick))
    return out


def predict_certainty(cmap: ScanCertaintyMap, plan: JointPlan, sensors) -> ScanCertaintyMap:
    """Certainty after every robot walks its path, one cell per step.

    ``sensors`` lists the robots (ids and sensors) in plan order. Robots whose
    path ends early keep scanning from their last cell.
    """
    robots = list(sensors)
    out = cmap.copy()
    for t in range(plan.horizon):
        at = [
            RobotState(r.id, p.cells[min(t, p.length - 1)], r.sensor)
            for r, p in zip(robots, plan.paths)
        ]
        out = update_scan_certainty(out, at)
    return out


def grade_norm(n_robots: int, c2: float, priority_scale: float, max_len: int) -> float:
    return n_robots * c2 * priority_scale * max_len


def mpc_objective(plan: JointPlan, priorities, cmap: ScanCertaintyMap, sensors,
                  params: ControlParams, g_norm: float, victim_cells=()) -> float:
    """Normalised supervisor objective of a joint plan (reference form)."""
    pp = params.planner
    gsum = 0.0
    for path, prio in zip(plan.paths, priorities):
        gsum += grade(path, exploration_degree(path, prio, pp.lam, pp.priority_scale), pp.c1, pp.c2)
    pred = predict_certainty(cmap, plan, sensors)
    height, width = cmap.values.shape
    j = params.w1 * gsum / g_norm + params.w2 * pred.values.ravel().sum() / (width * height)
    if plan.shared_victim_cells(victim_cells):
        j -= params.penalty
    return j


@dataclass(frozen=True)
class SupervisorResult:
    paths: list[Path]
    j_in: float
    j_out: float
    evaluations: int


class SupervisorProblem:
    """Joint-plan optimisation over waypoint vectors, scored by the compiled
    objective. Robots are taken in the order given (ascending id)."""

    def __init__(self, env: GridEnvironment, occupancy: OccupancyMap, certainty: np.ndarray,
                 robots, priorities, victim_cells, params: ControlParams, max_len: int):
        self.env = env
        self.params = params
        pp = params.planner
        self.robots = list(robots)
        self.starts = np.array([env.index(r.position) for r in self.robots], dtype=np.int64)
        self.passable = occupancy.passable_flat()
        self.prio = np.stack([p.as_flat(env, pp.priority_scale) for p in priorities])
        self.cert = np.ascontiguousarray(certainty, dtype=np.float64)
        self.radii = np.array([r.sensor.radius for r in self.robots], dtype=np.float64)
        self.etas = np.array([r.sensor.eta for r in self.robots], dtype=np.float64)
        self.victims = np.array(sorted({env.index(c) for c in victim_cells}), dtype=np.int64)
        self.g_norm = grade_norm(len(self.robots), pp.c2, pp.priority_scale, max_len)
        self.counts = np.zeros(len(self.robots), dtype=np.int64)

    def objective(self, x: np.ndarray) -> float:
        p = self.params
        pp = p.planner
        return kernels.evaluate_decision(
            x, self.counts, self.starts, self.passable, self.env.width, self.env.height,
            self.prio, self.cert, self.radii, self.etas, self.victims, p.w1, p.w2, pp.lam,
            pp.c1, pp.c2, self.g_norm, p.penalty,
        )

    def decode(self, x: np.ndarray) -> list[Path]:
        pp = self.params.planner
        flat, offsets, lens = kernels.project_plan(
            x, self.counts, self.starts, self.passable, self.env.width, self.env.height,
            self.prio, self.victims, pp.lam, pp.c1, pp.c2,
        )
        return [
            Path(tuple(self.env.cell(c) for c in flat[o : o + n]))
            for o, n in zip(offsets, lens)
        ]

    def solve(self, warm: list[Path], budget: SearchBudget, rng=None) -> SupervisorResult:
        x0, self.counts = encode_paths(warm, self.params.horizon)
        res = pattern_search(self.objective, x0, budget, restart_rng=rng)
        if res.evaluations == 0:
            return SupervisorResult(self.decode(x0), float("nan"), float("nan"), 0)
        return SupervisorResult(self.decode(res.x), res.initial_value, res.value, res.evaluations)


# --------------------------------------------------------------------------
# local (fuzzy) planning


def victim_signals(agent: RobotAgent, field: list[Cell]) -> dict[Cell, float]:
    """Cells in view that carry a victim signal for this robot, with the
    perceived health. Victims the robot has visited no longer attract it."""
    inside = set(field)
    sig: dict[Cell, float] = {}
    for vid in sorted(agent.victims.entries):
        obs = agent.victims.entries[vid]
        if vid in agent.victims.visited or obs.position not in inside:
            continue
        sig[obs.position] = min(sig.get(obs.position, 100.0), obs.health)
    return sig


def local_priorities(agent: RobotAgent, view: WorldView) -> PriorityMap:
    env = view.env
    cells = field_cells(agent.state, env)
    local = ScanCertaintyMap(agent.certainty.reshape(env.height, env.width))
    return build_priority_map(agent.state, cells, local, victim_signals(agent, cells),
                              view.occupancy, view.rules)


def _target_of(agent: RobotAgent, path: Path) -> int | None:
    for vid in sorted(agent.victims.entries):
        if agent.victims.entries[vid].position == path.end and vid not in agent.victims.visited:
            return vid
    return None


def _first_step(path: Path) -> Cell:
    return path.cells[1] if path.length > 1 else path.cells[0]


def plan_all_local(view: WorldView) -> tuple[list[PriorityMap], list[GradedPath]]:
    prios = [local_priorities(a, view) for a in view.agents]
    plans = [
        plan_local(a.state, pm, view.occupancy, view.env, view.params.planner)
        for a, pm in zip(view.agents, prios)
    ]
    return prios, plans


def repair_shared_victims(view: WorldView, prios, plans: list[GradedPath]) -> list[GradedPath]:
    """Reroute robots until no observed victim cell lies on two local paths.

    For each shared cell, the robot whose best path avoiding that cell costs
    the least grade is rerouted.
    """
    plans = list(plans)
    cells = sorted(set(view.observed_victims.values()), key=lambda c: (c[1], c[0]))
    for cell in cells:
        for _ in range(len(plans)):
            holders = [i for i, g in enumerate(plans) if cell in g.path.cells[1:]]
            if len(holders) < 2:
                break
            best = None
            for i in holders:
                alt = plan_local(view.agents[i].state, prios[i], view.occupancy, view.env,
                                 view.params.planner, avoid=cell)
                loss = plans[i].grade - alt.grade
                if best is None or loss < best[0]:
                    best = (loss, i, alt)
            plans[best[1]] = best[2]
    return plans


# --------------------------------------------------------------------------
# controllers


class Controller:
    kind: ControllerKind

    def decide(self, view: WorldView) -> Decision:  # pragma: no cover - interface
        raise NotImplementedError


def sync_from_supervisor(view: WorldView) -> None:
    """Tell every robot which victims have already been found, so no robot
    keeps heading for a victim another one has reached."""
    for agent in view.agents:
        agent.victims.visited |= set(view.detected)


class SelfishController(Controller):
    kind = ControllerKind.SELFISH

    def decide(self, view: WorldView) -> Decision:
        conflicts = detect_conflicts([a.state for a in view.agents], view.env,
                                     view.params.tau_int, view.tick)
        _, plans = plan_all_local(view)
        for a, g in zip(view.agents, plans):
            a.plan = g.path
            a.target = _target_of(a, g.path)
        paths = [g.path for g in plans]
        return Decision([_first_step(p) for p in paths], paths, conflicts)


class CooperativeController(Controller):
    kind = ControllerKind.COOPERATIVE

    def decide(self, view: WorldView) -> Decision:
        params = view.params
        conflicts = detect_conflicts([a.state for a in view.agents], view.env,
                                     params.tau_int, view.tick)
        if not conflicts:
            return SelfishController().decide(view)
        sync_from_supervisor(view)
        prios, plans = plan_all_local(view)
        plans = repair_shared_victims(view, prios, plans)
        warm = [g.path for g in plans]
        max_len = max(params.horizon, max(p.length - 1 for p in warm)) + 1
        problem = SupervisorProblem(view.env, view.occupancy, view.certainty,
                                    [a.state for a in view.agents], prios,
                                    view.observed_victims.values(), params, max_len)
        try:
            res = problem.solve(warm, params.budget)
            paths = res.paths
        except (NoPathError, ValueError):  # optimizer failure: act on the local plans
            res = None
            paths = [g.path for g in plans]
        for a, p in zip(view.agents, paths):
            a.plan = p
            a.target = _target_of(a, p)
        return Decision(
            [_first_step(p) for p in paths], paths, conflicts, supervised=True,
            evaluations=res.evaluations if res else 0,
            j_in=res.j_in if res and res.evaluations else None,
            j_out=res.j_out if res and res.evaluations else None,
        )


class PureMPCController(Controller):
    kind = ControllerKind.PURE_MPC

    def __init__(self, restart_rng: np.random.Generator | None = None):
        self.restart_rng = restart_rng

    def decide(self, view: WorldView) -> Decision:
        params = view.params
        conflicts = detect_conflicts([a.state for a in view.agents], view.env,
                                     params.tau_int, view.tick)
        sync_from_supervisor(view)
        prios = [local_priorities(a, view) for a in view.agents]
        warm = []
        for a in view.agents:
            prev = a.plan
            if prev is not None and a.position in prev.cells:
                cells = prev.cells[prev.cells.index(a.position):]
                cells = tuple(c for c in cells if not view.occupancy.is_blocked(c))
                try:
                    shifted = Path(cells)
                except ValueError:
                    shifted = Path.stay(a.position)
            else:
                shifted = Path.stay(a.position)
            warm.append(shifted)
        problem = SupervisorProblem(view.env, view.occupancy, view.certainty,
                                    [a.state for a in view.agents], prios,
                                    view.observed_victims.values(), params, params.horizon + 1)
        try:
            res = problem.solve(warm, params.budget, rng=self.restart_rng)
            paths = res.paths
        except (NoPathError, ValueError):  # optimizer failure: follow the warm start
            res = None
            paths = warm
        for a, p in zip(view.agents, paths):
            a.plan = p
            a.target = _target_of(a, p)
        return Decision(
            [_first_step(p) for p in paths], paths, conflicts, supervised=True,
            evaluations=res.evaluations if res else 0,
            j_in=res.j_in if res and res.evaluations else None,
            j_out=res.j_out if res and res.evaluations else None,
        )


def acs_move(env: GridEnvironment, position: Cell, certainty: np.ndarray, rng: RngStream) -> Cell:
    """Step to the free neighbour with the lowest global certainty; ties are
    broken uniformly with ``rng``."""
    options = free_neighbors(env, position)
    if not options:
        return position
    vals = [certainty[env.index(c)] for c in options]
    low = min(vals)
    best = [c for c, v in zip(options, vals) if v == low]
    return best[rng.integers(len(best))] if len(best) > 1 else best[0]


def random_move(env: GridEnvironment, position: Cell, rng: RngStream) -> Cell:
    options = free_neighbors(env, position)
    if not options:
        return position
    return options[rng.integers(len(options))]


class ACSController(Controller):
    kind = ControllerKind.ACS

    def decide(self, view: WorldView) -> Decision:
        conflicts = detect_conflicts([a.state for a in view.agents], view.env,
                                     view.params.tau_int, view.tick)
        moves = [acs_move(view.env, a.position, view.certainty, a.rng) for a in view.agents]
        paths = [Path((a.position, m)) if m != a.position else Path.stay(m)
                 for a, m in zip(view.agents, moves)]
        return Decision(moves, paths, conflicts)


class ExhaustiveController(Controller):
    kind = ControllerKind.EXHAUSTIVE

    def decide(self, view: WorldView) -> Decision:
        conflicts = detect_conflicts([a.state for a in view.agents], view.env,
                                     view.params.tau_int, view.tick)
        moves = [random_move(view.env, a.position, a.rng) for a in view.agents]
        paths = [Path((a.position, m)) if m != a.position else Path.stay(m)
                 for a, m in zip(view.agents, moves)]
        return Decision(moves, paths, conflicts)


def make_controller(kind, restart_rng: np.random.Generator | None = None) -> Controller:
    kind = ControllerKind.parse(kind) if not isinstance(kind, ControllerKind) else kind
    if kind is ControllerKind.SELFISH:
        return SelfishController()
    if kind is ControllerKind.COOPERATIVE:
        return CooperativeController()
    if kind is ControllerKind.PURE_MPC:
        return PureMPCController(restart_rng)
    if kind is ControllerKind.ACS:
        return ACSController()
    return ExhaustiveController()


def timed_decide(controller: Controller, view: WorldView) -> tuple[Decision, float]:
    t0 = time.perf_counter()
    d = controller.decide(view)
    return d, (time.perf_counter() - t0) * 1e3
