"""The tick loop: sense, decide, move, victim dynamics, detection, metrics."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .._accel import BACKEND
from ..control import (
    Controller,
    ControllerKind,
    RobotAgent,
    WorldView,
    make_controller,
    timed_decide,
)
from ..fuzzy import RuleBase, default_rule_base
from ..sensing import (
    GlobalVictimMap,
    RobotState,
    VictimObservation,
    apply_scan,
    field_cells,
    prune_local_victim_map,
)
from ..world import (
    DetectionRecord,
    GridEnvironment,
    OccupancyMap,
    RngStream,
    Victim,
    VictimPopulation,
    step_health,
    step_victim_motion,
)
from .records import RunRecord, SupervisorCall, TickRow, VictimRow
from .scenario import ScenarioConfig, build_layout

VICTIM_STREAM = 1
EXHAUSTIVE_STREAM = 2
ACS_STREAM = 3
RESTART_STREAM = 4


class MoveError(RuntimeError):
    """A controller proposed an illegal move."""


@dataclass
class SimState:
    env: GridEnvironment
    occupancy: OccupancyMap
    certainty: np.ndarray  # flat global scan certainty
    agents: list[RobotAgent]
    population: VictimPopulation
    global_victims: GlobalVictimMap = field(default_factory=GlobalVictimMap)
    visitors: dict[int, set[int]] = field(default_factory=dict)
    tick: int = 0

    @property
    def detected(self) -> frozenset[int]:
        return frozenset(v.id for v in self.population.victims if v.detection is not None)

    def coverage_pct(self) -> float:
        return 100.0 * float(self.certainty.sum()) / self.env.size


def initial_state(cfg: ScenarioConfig) -> SimState:
    layout = build_layout(cfg)
    env = layout.env
    flat = layout.certainty.ravel().copy()
    kind = cfg.controller
    agents = []
    for spec in cfg.robots:
        stream = None
        if kind is ControllerKind.EXHAUSTIVE:
            stream = RngStream(cfg.seed, EXHAUSTIVE_STREAM, spec.id)
        elif kind is ControllerKind.ACS:
            stream = RngStream(cfg.seed, ACS_STREAM, spec.id)
        agents.append(RobotAgent(RobotState(spec.id, spec.start, spec.sensor), flat.copy(), rng=stream))
    victims = [Victim(i + 1, v.position, v.health) for i, v in enumerate(layout.victims)]
    streams = {v.id: RngStream(cfg.seed, VICTIM_STREAM, v.id) for v in victims}
    return SimState(env, OccupancyMap(env), flat, agents, VictimPopulation(victims, streams))


def sense(state: SimState) -> None:
    """Scan, register obstacles, observe victims and prune local victim maps."""
    env = state.env
    apply_scan(state.certainty, env.width, env.height, [a.state for a in state.agents])
    for agent in state.agents:
        cells = field_cells(agent.state, env)
        state.occupancy.register(cells)
        apply_scan(agent.certainty, env.width, env.height, [agent.state])
        inside = set(cells)
        for v in state.population.victims:
            if v.position in inside:
                obs = VictimObservation(v.id, v.position, v.health, state.tick, agent.id)
                agent.victims.observe(obs)
                state.global_victims.add(obs)
        agent.victims = prune_local_victim_map(agent.victims, agent.target, inside)


def observed_positions(state: SimState) -> dict[int, tuple[int, int]]:
    return state.global_victims.known_positions()


def apply_moves(state: SimState, moves) -> None:
    env = state.env
    for agent, cell in zip(state.agents, moves):
        cell = tuple(int(c) for c in cell)
        x, y = agent.position
        if max(abs(cell[0] - x), abs(cell[1] - y)) > 1:
            raise MoveError(f"robot {agent.id}: {agent.position} -> {cell} is not a single step")
        if not env.contains(cell) or cell in env.obstacles:
            raise MoveError(f"robot {agent.id}: {cell} is not a free cell")
        agent.state.position = cell


def detect(state: SimState) -> None:
    """Register robot/victim co-locations."""
    victims = state.population.victims
    for agent in state.agents:
        for n, v in enumerate(victims):
            if v.position != agent.position:
                continue
            seen = state.visitors.setdefault(v.id, set())
            seen.add(agent.id)
            agent.victims.visited.add(v.id)
            det = v.detection or DetectionRecord(agent.id, state.tick, v.health)
            victims[n] = dataclasses.replace(v, detection=det, visits=len(seen))


def advance_victims(state: SimState, cfg: ScenarioConfig) -> None:
    p = cfg.params
    pop = state.population
    pop.victims = [
        step_health(
            step_victim_motion(state.env, v, p["p_stay"], pop.streams[v.id]),
            p["alpha"], p["beta"], p["gamma"], p["h_crit"],
        )
        for v in pop.victims
    ]


def _tick_row(state: SimState, conflicts: int, ms: float, evals: int) -> TickRow:
    vs = state.population.victims
    return TickRow(
        tick=state.tick,
        coverage_pct=state.coverage_pct(),
        victims_found=sum(1 for v in vs if v.detection is not None),
        victims_deceased=sum(1 for v in vs if not v.alive),
        conflicts=conflicts,
        decision_ms=ms,
        objective_evals=evals,
    )


def run_scenario(cfg: ScenarioConfig, rules: RuleBase | None = None,
                 controller: Controller | None = None, on_tick=None) -> RunRecord:
    """Simulate ``cfg.steps`` ticks and return the full record.

    ``on_tick(state, decision)`` is called after each tick (for tests and
    tracing).
    """
    rules = rules or default_rule_base()
    state = initial_state(cfg)
    params = cfg.control_params()
    if controller is None:
        restart = RngStream(cfg.seed, RESTART_STREAM).generator
        controller = make_controller(cfg.controller, restart_rng=restart)
    ticks = [_tick_row(state, 0, 0.0, 0)]
    events = []
    calls = []
    traj = {a.id: [a.position] for a in state.agents}
    for tick in range(1, cfg.steps + 1):
        state.tick = tick
        sense(state)
        view = WorldView(state.env, state.occupancy, state.certainty, state.agents,
                         observed_positions(state), state.detected, rules, params, tick)
        decision, ms = timed_decide(controller, view)
        apply_moves(state, decision.moves)
        detect(state)
        advance_victims(state, cfg)
        detect(state)
        for e in decision.conflicts:
            events.append((tick, e.i, e.j, e.overlap))
        if decision.supervised and decision.j_in is not None:
            calls.append(SupervisorCall(tick, decision.j_in, decision.j_out, decision.evaluations))
        for a in state.agents:
            traj[a.id].append(a.position)
        ticks.append(_tick_row(state, len(decision.conflicts), ms, decision.evaluations))
        if on_tick is not None:
            on_tick(state, decision)
    victims = [
        VictimRow(
            victim_id=v.id,
            detect_tick=v.detection.tick if v.detection else None,
            health_at_detect=v.detection.health if v.detection else None,
            detected_by=v.detection.robot if v.detection else None,
            visits=v.visits,
            final_health=v.health,
            alive=v.alive,
        )
        for v in state.population.victims
    ]
    h, w = state.env.height, state.env.width
    known = np.zeros(state.env.size, dtype=int)
    known[state.occupancy.blocked_flat] = 1
    return RunRecord(
        config=cfg.to_dict(),
        ticks=ticks,
        victims=victims,
        conflict_events=events,
        supervisor_calls=calls,
        trajectories=traj,
        final_certainty=state.certainty.reshape(h, w).tolist(),
        final_obstacles_known=known.reshape(h, w).tolist(),
        backend=BACKEND,
    )
