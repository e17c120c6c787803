"""Scenario files: loading, validation and seeded layout generation.

Scenarios are TOML. Top-level keys: ``name``, ``controller``, ``steps``,
``seed``. Tables:

``[grid]``
    ``width``, ``height``; obstacles as ``obstacles = [[x, y], ...]``,
    ``obstacle_rects = [[x0, y0, x1, y1], ...]`` (inclusive) and/or a seeded
    ``obstacle_density`` in [0, 0.5) that keeps the free space connected.
``[[robots]]``
    ``id``, ``start = [x, y]``, ``radius``, ``eta``.
``[victims]``
    either ``count`` plus ``health = [lo, hi]`` (seeded placement) or a list
    ``[[victims.list]]`` of ``position`` and ``health``.
``[certainty]``
    ``initial`` plus ``[[certainty.regions]]`` with ``rect`` and ``value``;
    later regions overwrite earlier ones.
``[params]``
    ``p_stay``, ``alpha``, ``beta``, ``gamma``, ``h_crit``, ``lam``, ``c1``,
    ``c2``, ``tau_int``, ``w1``, ``w2``, ``priority_scale``. Numbers may be
    written as fraction strings such as ``"1/60"``.
``[planner]``
    ``k``.
``[optimizer]``
    ``max_evals``, ``initial_mesh``, ``contraction``, ``min_mesh``,
    ``restarts``, ``horizon``.
"""
from __future__ import annotations

import copy
import sys
from collections import deque
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path as FilePath

import numpy as np

from ..control import ControlParams, ControllerKind
from ..errors import ConfigError
from ..optimize import SearchBudget
from ..pathplan import PlannerParams
from ..sensing import SensorSpec
from ..world import Cell, GridEnvironment, RngStream, check_health_params

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

LAYOUT_STREAM = 0

DEFAULT_PARAMS = {
    "p_stay": 0.6,
    "alpha": 0.25,
    "beta": 1.0 / 60.0,
    "gamma": 1.0,
    "h_crit": 30.0,
    "lam": 0.6,
    "c1": 2.0,
    "c2": 5.0,
    "tau_int": 30,
    "w1": 1.0,
    "w2": 0.05,
    "priority_scale": 60.0,
}
DEFAULT_OPTIMIZER = {
    "max_evals": 2000,
    "initial_mesh": 2.0,
    "contraction": 0.5,
    "min_mesh": 0.5,
    "restarts": 1,
    "horizon": 6,
}


@dataclass(frozen=True)
class RobotSpec:
    id: int
    start: Cell
    sensor: SensorSpec


@dataclass(frozen=True)
class VictimSpec:
    position: Cell
    health: float


@dataclass(frozen=True)
class Region:
    rect: tuple[int, int, int, int]
    value: float


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    width: int
    height: int
    robots: tuple[RobotSpec, ...]
    obstacles: frozenset[Cell] = frozenset()
    obstacle_density: float = 0.0
    victims: tuple[VictimSpec, ...] = ()
    victim_count: int = 0
    victim_health: tuple[float, float] = (20.0, 100.0)
    initial_certainty: float = 0.0
    regions: tuple[Region, ...] = ()
    params: dict = field(default_factory=lambda: dict(DEFAULT_PARAMS))
    k: int = 3
    optimizer: dict = field(default_factory=lambda: dict(DEFAULT_OPTIMIZER))
    controller: ControllerKind = ControllerKind.COOPERATIVE
    steps: int = 300
    seed: int = 0
    source: dict = field(default_factory=dict, compare=False)

    def with_overrides(self, controller=None, seed=None, steps=None) -> "ScenarioConfig":
        changes = {}
        if controller is not None:
            changes["controller"] = ControllerKind.parse(controller)
        if seed is not None:
            changes["seed"] = int(seed)
        if steps is not None:
            if int(steps) < 0:
                raise ConfigError("steps", "must be >= 0")
            changes["steps"] = int(steps)
        return replace(self, **changes)

    def control_params(self) -> ControlParams:
        p, o = self.params, self.optimizer
        planner = PlannerParams(lam=p["lam"], c1=p["c1"], c2=p["c2"], k=self.k,
                                priority_scale=p["priority_scale"])
        budget = SearchBudget(max_evals=o["max_evals"], initial_mesh=o["initial_mesh"],
                              contraction=o["contraction"], min_mesh=o["min_mesh"],
                              restarts=o["restarts"])
        return ControlParams(planner=planner, tau_int=p["tau_int"], w1=p["w1"], w2=p["w2"],
                             budget=budget, horizon=o["horizon"])

    def to_dict(self) -> dict:
        """Plain-data echo of the resolved configuration."""
        return {
            "name": self.name,
            "controller": self.controller.value,
            "steps": self.steps,
            "seed": self.seed,
            "grid": {
                "width": self.width,
                "height": self.height,
                "obstacles": sorted([list(c) for c in self.obstacles], key=lambda c: (c[1], c[0])),
                "obstacle_density": self.obstacle_density,
            },
            "robots": [
                {"id": r.id, "start": list(r.start), "radius": r.sensor.radius, "eta": r.sensor.eta}
                for r in self.robots
            ],
            "victims": {
                "list": [{"position": list(v.position), "health": v.health} for v in self.victims],
                "count": self.victim_count,
                "health": list(self.victim_health),
            },
            "certainty": {
                "initial": self.initial_certainty,
                "regions": [{"rect": list(r.rect), "value": r.value} for r in self.regions],
            },
            "params": dict(self.params),
            "planner": {"k": self.k},
            "optimizer": dict(self.optimizer),
        }


# --------------------------------------------------------------------------
# parsing helpers


def _num(value, where: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(where, "expected a number")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            pass
    raise ConfigError(where, f"expected a number, got {value!r}")


def _int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(where, f"expected an integer, got {value!r}")
    return value


def _cell(value, where: str) -> Cell:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(where, f"expected [x, y], got {value!r}")
    return (_int(value[0], f"{where}[0]"), _int(value[1], f"{where}[1]"))


def _rect(value, where: str) -> tuple[int, int, int, int]:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ConfigError(where, f"expected [x0, y0, x1, y1], got {value!r}")
    x0, y0, x1, y1 = (_int(v, f"{where}[{i}]") for i, v in enumerate(value))
    if x0 > x1 or y0 > y1:
        raise ConfigError(where, "rectangle corners out of order")
    return (x0, y0, x1, y1)


def _rect_cells(rect) -> list[Cell]:
    x0, y0, x1, y1 = rect
    return [(x, y) for y in range(y0, y1 + 1) for x in range(x0, x1 + 1)]


def _check_keys(table: dict, allowed: set, where: str):
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigError(f"{where}.{extra[0]}" if where else extra[0], "unknown key")


def _range(value: float, lo: float, hi: float, where: str, lo_open=False, hi_open=False):
    bad = value < lo or value > hi or (lo_open and value == lo) or (hi_open and value == hi)
    if bad:
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        raise ConfigError(where, f"{value} outside {lb}{lo}, {hi}{rb}")


def parse_scenario(data: dict) -> ScenarioConfig:
    """Validate a decoded scenario document."""
    _check_keys(data, {"name", "controller", "steps", "seed", "grid", "robots", "victims",
                       "certainty", "params", "planner", "optimizer"}, "")
    grid = data.get("grid")
    if not isinstance(grid, dict):
        raise ConfigError("grid", "missing [grid] table")
    _check_keys(grid, {"width", "height", "obstacles", "obstacle_rects", "obstacle_density"}, "grid")
    width = _int(grid.get("width"), "grid.width")
    height = _int(grid.get("height"), "grid.height")
    if width < 1 or height < 1:
        raise ConfigError("grid", "width and height must be >= 1")
    obstacles = set()
    for n, c in enumerate(grid.get("obstacles", [])):
        obstacles.add(_cell(c, f"grid.obstacles[{n}]"))
    for n, r in enumerate(grid.get("obstacle_rects", [])):
        obstacles.update(_rect_cells(_rect(r, f"grid.obstacle_rects[{n}]")))
    env = GridEnvironment(width, height, frozenset(obstacles))
    density = _num(grid.get("obstacle_density", 0.0), "grid.obstacle_density")
    _range(density, 0.0, 0.5, "grid.obstacle_density", hi_open=True)

    robots_raw = data.get("robots")
    if not isinstance(robots_raw, list) or not robots_raw:
        raise ConfigError("robots", "at least one [[robots]] entry is required")
    robots = []
    for n, r in enumerate(robots_raw):
        where = f"robots[{n}]"
        _check_keys(r, {"id", "start", "radius", "eta"}, where)
        start = _cell(r.get("start"), f"{where}.start")
        if not env.contains(start):
            raise ConfigError(f"{where}.start", f"{start} outside the grid")
        if start in env.obstacles:
            raise ConfigError(f"{where}.start", f"{start} is an obstacle")
        radius = _num(r.get("radius"), f"{where}.radius")
        eta = _num(r.get("eta"), f"{where}.eta")
        _range(radius, 0.0, float("inf"), f"{where}.radius", lo_open=True)
        _range(eta, 0.0, 1.0, f"{where}.eta", lo_open=True)
        robots.append(RobotSpec(_int(r.get("id", n + 1), f"{where}.id"), start, SensorSpec(radius, eta)))
    ids = [r.id for r in robots]
    if len(set(ids)) != len(ids):
        raise ConfigError("robots", "robot ids must be unique")
    robots.sort(key=lambda r: r.id)

    vic = data.get("victims", {})
    _check_keys(vic, {"count", "health", "list"}, "victims")
    victims = []
    for n, v in enumerate(vic.get("list", [])):
        where = f"victims.list[{n}]"
        _check_keys(v, {"position", "health"}, where)
        pos = _cell(v.get("position"), f"{where}.position")
        if not env.contains(pos) or pos in env.obstacles:
            raise ConfigError(f"{where}.position", f"{pos} is not a free cell")
        h = _num(v.get("health"), f"{where}.health")
        _range(h, 0.0, 100.0, f"{where}.health", lo_open=True)
        victims.append(VictimSpec(pos, h))
    if len({v.position for v in victims}) != len(victims):
        raise ConfigError("victims.list", "initial victim positions must be distinct")
    count = _int(vic.get("count", 0), "victims.count")
    if count < 0:
        raise ConfigError("victims.count", "must be >= 0")
    if victims and count:
        raise ConfigError("victims", "give either an explicit list or a count, not both")
    hr = vic.get("health", [20.0, 100.0])
    if not isinstance(hr, list) or len(hr) != 2:
        raise ConfigError("victims.health", "expected [lo, hi]")
    hlo, hhi = _num(hr[0], "victims.health[0]"), _num(hr[1], "victims.health[1]")
    _range(hlo, 0.0, 100.0, "victims.health[0]", lo_open=True)
    _range(hhi, hlo, 100.0, "victims.health[1]")

    cert = data.get("certainty", {})
    _check_keys(cert, {"initial", "regions"}, "certainty")
    c0 = _num(cert.get("initial", 0.0), "certainty.initial")
    _range(c0, 0.0, 1.0, "certainty.initial")
    regions = []
    for n, reg in enumerate(cert.get("regions", [])):
        where = f"certainty.regions[{n}]"
        _check_keys(reg, {"rect", "value"}, where)
        rect = _rect(reg.get("rect"), f"{where}.rect")
        if not (env.contains(rect[:2]) and env.contains(rect[2:])):
            raise ConfigError(f"{where}.rect", "rectangle leaves the grid")
        val = _num(reg.get("value"), f"{where}.value")
        _range(val, 0.0, 1.0, f"{where}.value")
        regions.append(Region(rect, val))

    params = dict(DEFAULT_PARAMS)
    raw = data.get("params", {})
    _check_keys(raw, set(DEFAULT_PARAMS), "params")
    for key, value in raw.items():
        params[key] = _num(value, f"params.{key}")
    params["tau_int"] = int(params["tau_int"])
    _range(params["p_stay"], 0.0, 1.0, "params.p_stay")
    check_health_params(params["alpha"], params["beta"], params["gamma"], params["h_crit"])
    _range(params["lam"], 0.0, 1.0, "params.lam")
    for key in ("c1", "c2", "priority_scale"):
        _range(params[key], 0.0, float("inf"), f"params.{key}", lo_open=True)
    for key in ("w1", "w2"):
        _range(params[key], 0.0, float("inf"), f"params.{key}")
    if params["tau_int"] < 0:
        raise ConfigError("params.tau_int", "must be >= 0")

    planner = data.get("planner", {})
    _check_keys(planner, {"k"}, "planner")
    k = _int(planner.get("k", 3), "planner.k")
    if k < 1:
        raise ConfigError("planner.k", "must be >= 1")

    opt = dict(DEFAULT_OPTIMIZER)
    raw = data.get("optimizer", {})
    _check_keys(raw, set(DEFAULT_OPTIMIZER), "optimizer")
    opt.update(raw)
    for key in ("max_evals", "restarts", "horizon"):
        opt[key] = _int(opt[key], f"optimizer.{key}")
    for key in ("initial_mesh", "contraction", "min_mesh"):
        opt[key] = _num(opt[key], f"optimizer.{key}")
    if opt["max_evals"] < 0:
        raise ConfigError("optimizer.max_evals", "must be >= 0")
    if opt["restarts"] < 1:
        raise ConfigError("optimizer.restarts", "must be >= 1")
    if opt["horizon"] < 1:
        raise ConfigError("optimizer.horizon", "must be >= 1")
    _range(opt["initial_mesh"], 0.0, float("inf"), "optimizer.initial_mesh", lo_open=True)
    _range(opt["min_mesh"], 0.0, float("inf"), "optimizer.min_mesh", lo_open=True)
    _range(opt["contraction"], 0.0, 1.0, "optimizer.contraction", lo_open=True, hi_open=True)

    try:
        controller = ControllerKind.parse(data.get("controller", "cooperative"))
    except ValueError as exc:
        raise ConfigError("controller", str(exc)) from None
    steps = _int(data.get("steps", 300), "steps")
    if steps < 0:
        raise ConfigError("steps", "must be >= 0")
    seed = _int(data.get("seed", 0), "seed")
    if not 0 <= seed < 2**63:
        raise ConfigError("seed", "must lie in [0, 2^63)")

    free = env.size - len(env.obstacles)
    needed = len(victims) + count
    if needed > free - len(robots):
        raise ConfigError("victims.count", "more victims than free cells")

    return ScenarioConfig(
        name=str(data.get("name", "scenario")),
        width=width,
        height=height,
        robots=tuple(robots),
        obstacles=env.obstacles,
        obstacle_density=density,
        victims=tuple(victims),
        victim_count=count,
        victim_health=(hlo, hhi),
        initial_certainty=c0,
        regions=tuple(regions),
        params=params,
        k=k,
        optimizer=opt,
        controller=controller,
        steps=steps,
        seed=seed,
        source=copy.deepcopy(data),
    )


def load_scenario(path: str | FilePath) -> ScenarioConfig:
    path = FilePath(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("file", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("file", f"{path}: {exc}") from None
    return parse_scenario(data)


def bundled_scenario(name: str) -> ScenarioConfig:
    """One of the scenarios shipped with the package (``general``, ``case1``...)."""
    ref = resources.files("sarsim").joinpath(f"scenarios/{name}.toml")
    if not ref.is_file():
        raise ConfigError("scenario", f"no bundled scenario named {name!r}")
    return parse_scenario(tomllib.loads(ref.read_text()))


def bundled_names() -> list[str]:
    root = resources.files("sarsim").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_scenario(name_or_path: str) -> ScenarioConfig:
    """A path to a TOML file, or the name of a bundled scenario."""
    p = FilePath(name_or_path)
    if p.suffix == ".toml" or p.exists():
        return load_scenario(p)
    return bundled_scenario(name_or_path)


# --------------------------------------------------------------------------
# seeded layout


@dataclass(frozen=True)
class Layout:
    env: GridEnvironment
    victims: tuple[VictimSpec, ...]
    certainty: np.ndarray  # (height, width)


def _connected(env: GridEnvironment, blocked: set) -> bool:
    free = [c for c in env.free_cells() if c not in blocked]
    if not free:
        return True
    seen = {free[0]}
    queue = deque([free[0]])
    while queue:
        x, y = queue.popleft()
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                nb = (x + dx, y + dy)
                if nb not in seen and env.contains(nb) and nb not in env.obstacles and nb not in blocked:
                    seen.add(nb)
                    queue.append(nb)
    return len(seen) == len(free)


def build_layout(cfg: ScenarioConfig) -> Layout:
    """Obstacles, victims and initial certainty for ``cfg.seed``.

    Random obstacles are drawn first, then random victims, all from the
    layout stream, so the layout does not depend on the controller.
    """
    rng = RngStream(cfg.seed, LAYOUT_STREAM).generator
    env = GridEnvironment(cfg.width, cfg.height, cfg.obstacles)
    reserved = {r.start for r in cfg.robots} | {v.position for v in cfg.victims}
    if cfg.obstacle_density > 0:
        target = int(round(cfg.obstacle_density * env.size)) - len(env.obstacles)
        extra: set[Cell] = set()
        candidates = [c for c in env.free_cells() if c not in reserved]
        order = rng.permutation(len(candidates))
        for idx in order:
            if len(extra) >= target:
                break
            cell = candidates[idx]
            extra.add(cell)
            if not _connected(env, extra):
                extra.discard(cell)
        env = GridEnvironment(cfg.width, cfg.height, env.obstacles | extra)
    victims = list(cfg.victims)
    if cfg.victim_count:
        taken = {r.start for r in cfg.robots} | {v.position for v in victims}
        pool = [c for c in env.free_cells() if c not in taken]
        picks = rng.choice(len(pool), size=cfg.victim_count, replace=False)
        lo, hi = cfg.victim_health
        for idx in picks:
            victims.append(VictimSpec(pool[int(idx)], float(rng.uniform(lo, hi))))
    cert = np.full((cfg.height, cfg.width), cfg.initial_certainty, dtype=np.float64)
    for reg in cfg.regions:
        x0, y0, x1, y1 = reg.rect
        cert[y0 - 1 : y1, x0 - 1 : x1] = reg.value
    return Layout(env, tuple(victims), cert)
