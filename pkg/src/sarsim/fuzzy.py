"""Mamdani inference of per-cell search priorities.

Inputs are victim evidence, victim health and scan certainty; the output is
a priority in [0, 1]. Conjunction is ``min``, each rule clips its consequent,
clipped sets are merged with ``max`` and the result is defuzzified by the
centroid over a uniform grid on the output universe.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from itertools import product
from pathlib import Path as FilePath

import numpy as np

from . import kernels
from ._accel import NUMBA_ENABLED
from .errors import ConfigError, FuzzyCoverageError
from .sensing import NO_SIGNAL_FLOOR, RobotState, ScanCertaintyMap, victim_evidence
from .world import Cell, GridEnvironment, OccupancyMap

INPUT_NAMES = ("evidence", "health", "certainty")
OUTPUT_NAME = "priority"
CENTROID_SAMPLES = 1001
# Health assumed for cells where no victim is seen.
NO_VICTIM_HEALTH = 100.0

# Reference rule table: (evidence, health, certainty) -> priority.
REFERENCE_RULES = (
    ("Low", "Stable", "Known", "Very Low"),
    ("Low", "Medium", "Known", "Very Low"),
    ("Low", "Stable", "Partial", "Very Low"),
    ("Low", "Medium", "Partial", "Low"),
    ("Low", "Critical", "Known", "Low"),
    ("Medium", "Medium", "Partial", "Low"),
    ("Medium", "Critical", "Known", "Low"),
    ("Low", "Stable", "Unknown", "Low"),
    ("Medium", "Stable", "Known", "Medium"),
    ("Medium", "Medium", "Known", "Medium"),
    ("Medium", "Stable", "Partial", "Medium"),
    ("High", "Stable", "Partial", "Medium"),
    ("High", "Medium", "Known", "Medium"),
    ("High", "Critical", "Known", "Medium"),
    ("Low", "Critical", "Partial", "Medium"),
    ("Low", "Medium", "Unknown", "Medium"),
    ("High", "Stable", "Known", "High"),
    ("Medium", "Stable", "Unknown", "High"),
    ("Medium", "Medium", "Unknown", "High"),
    ("High", "Stable", "Unknown", "High"),
    ("Low", "Critical", "Unknown", "High"),
    ("Medium", "Critical", "Partial", "Very High"),
    ("High", "Medium", "Partial", "Very High"),
    ("Medium", "Critical", "Unknown", "Very High"),
    ("High", "Medium", "Unknown", "Very High"),
    ("High", "Critical", "Partial", "Very High"),
    ("High", "Critical", "Unknown", "Very High"),
)


@dataclass(frozen=True)
class TrapezoidMF:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not self.a <= self.b <= self.c <= self.d:
            raise ValueError(f"trapezoid breakpoints out of order: {self.params}")

    @property
    def params(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    def __call__(self, x):
        return membership(self, x)

    def centroid(self, lo: float, hi: float) -> float:
        """Exact centroid of the trapezoid restricted to ``[lo, hi]``."""
        # piecewise-linear pieces: integrate x*mu and mu in closed form
        pts = [lo, hi] + [p for p in self.params if lo < p < hi]
        pts = sorted(set(pts))
        num = den = 0.0
        for x0, x1 in zip(pts[:-1], pts[1:]):
            m0, m1 = float(membership(self, x0)), float(membership(self, x1))
            slope = (m1 - m0) / (x1 - x0)
            area = 0.5 * (m0 + m1) * (x1 - x0)
            moment = m0 * (x1**2 - x0**2) / 2 + slope * (
                (x1**3 - x0**3) / 3 - x0 * (x1**2 - x0**2) / 2
            )
            num += moment
            den += area
        return num / den


def membership(mf: TrapezoidMF, x):
    """Degree of ``x`` (scalar or array); ``a == b`` or ``c == d`` give crisp edges."""
    scalar = np.isscalar(x)
    x = np.asarray(x, dtype=np.float64)
    a, b, c, d = mf.params
    with np.errstate(invalid="ignore", divide="ignore"):
        rise = np.ones_like(x) if math.isinf(a) else (x - a) / (b - a)
        fall = np.ones_like(x) if math.isinf(d) else (d - x) / (d - c)
    out = np.where(x < b, rise, np.where(x > c, fall, 1.0))
    out = np.where((x < a) | (x > d), 0.0, out)
    return float(out) if scalar else out


@dataclass(frozen=True)
class LinguisticVariable:
    name: str
    universe: tuple[float, float]
    terms: dict[str, TrapezoidMF]

    def term_names(self) -> list[str]:
        return list(self.terms)

    def degrees(self, x) -> np.ndarray:
        """Membership of ``x`` (clamped to the universe) in every term, last axis."""
        x = np.clip(np.asarray(x, dtype=np.float64), *self.universe)
        return np.stack([membership(mf, x) for mf in self.terms.values()], axis=-1)

    def check_coverage(self, samples: int = 2001) -> None:
        xs = np.linspace(*self.universe, samples)
        gaps = xs[self.degrees(xs).max(axis=-1) <= 0.0]
        if gaps.size:
            raise ConfigError(f"membership.{self.name}", f"terms leave {gaps[0]:g} uncovered")


@dataclass(frozen=True)
class FuzzyRule:
    evidence: str
    health: str
    certainty: str
    priority: str

    @property
    def antecedent(self) -> tuple[str, str, str]:
        return (self.evidence, self.health, self.certainty)


class RuleBase:
    """Three input variables, one output variable and a complete rule table."""

    def __init__(self, inputs, output: LinguisticVariable, rules):
        self.inputs = tuple(inputs)
        self.output = output
        self.rules = tuple(rules)
        self._validate()

    def _validate(self):
        if [v.name for v in self.inputs] != list(INPUT_NAMES):
            raise ConfigError("universe", f"inputs must be {INPUT_NAMES}")
        for var, pos in zip(self.inputs, range(3)):
            for rule in self.rules:
                if rule.antecedent[pos] not in var.terms:
                    raise ConfigError("rules", f"unknown {var.name} term {rule.antecedent[pos]!r}")
        for rule in self.rules:
            if rule.priority not in self.output.terms:
                raise ConfigError("rules", f"unknown priority term {rule.priority!r}")
        seen = [r.antecedent for r in self.rules]
        combos = set(product(*(v.term_names() for v in self.inputs)))
        if len(seen) != len(set(seen)):
            raise ConfigError("rules", "duplicate antecedent")
        if set(seen) != combos:
            missing = sorted(combos - set(seen))
            raise ConfigError("rules", f"rule base is not a complete cover; missing {missing[:3]}")
        for var in self.inputs:
            var.check_coverage()

    def matches_reference(self) -> bool:
        table = {r.antecedent: r.priority for r in self.rules}
        return len(table) == len(REFERENCE_RULES) and all(
            table.get(tuple(row[:3])) == row[3] for row in REFERENCE_RULES
        )

    @cached_property
    def output_grid(self) -> np.ndarray:
        return np.linspace(*self.output.universe, CENTROID_SAMPLES)

    @cached_property
    def _compiled(self):
        n_terms = max(len(v.terms) for v in self.inputs)
        in_mf = np.zeros((3, n_terms, 4))
        for v, var in enumerate(self.inputs):
            for t, mf in enumerate(var.terms.values()):
                in_mf[v, t] = mf.params
        in_lo = np.array([v.universe[0] for v in self.inputs], dtype=np.float64)
        in_hi = np.array([v.universe[1] for v in self.inputs], dtype=np.float64)
        names = [v.term_names() for v in self.inputs]
        out_names = self.output.term_names()
        rule_terms = np.array(
            [[names[i].index(r.antecedent[i]) for i in range(3)] for r in self.rules], dtype=np.int64
        )
        rule_out = np.array([out_names.index(r.priority) for r in self.rules], dtype=np.int64)
        out_mu = np.stack([membership(mf, self.output_grid) for mf in self.output.terms.values()])
        return in_mf, in_lo, in_hi, rule_terms, rule_out, out_mu

    def infer_many(self, evidence, health, certainty) -> np.ndarray:
        """Vectorised inference; raises if any triple fires no rule."""
        ev = np.atleast_1d(np.asarray(evidence, dtype=np.float64))
        hv = np.atleast_1d(np.asarray(health, dtype=np.float64))
        cv = np.atleast_1d(np.asarray(certainty, dtype=np.float64))
        ev, hv, cv = np.broadcast_arrays(ev, hv, cv)
        ev, hv, cv = (np.ascontiguousarray(a, dtype=np.float64).ravel() for a in (ev, hv, cv))
        for name, arr in zip(INPUT_NAMES, (ev, hv, cv)):
            if not np.isfinite(arr).all():
                raise ValueError(f"non-finite {name} input")
        if NUMBA_ENABLED:
            rho = kernels.infer_batch(ev, hv, cv, *self._compiled[:5], self.output_grid, self._compiled[5])
        else:
            rho = self._infer_numpy(ev, hv, cv)
        if np.isnan(rho).any():
            bad = int(np.flatnonzero(np.isnan(rho))[0])
            raise FuzzyCoverageError(f"no rule fired for input ({ev[bad]}, {hv[bad]}, {cv[bad]})")
        return rho

    def _infer_numpy(self, ev, hv, cv) -> np.ndarray:
        _, _, _, rule_terms, rule_out, out_mu = self._compiled
        mu = [var.degrees(x) for var, x in zip(self.inputs, (ev, hv, cv))]
        firing = np.minimum(
            np.minimum(mu[0][:, rule_terms[:, 0]], mu[1][:, rule_terms[:, 1]]), mu[2][:, rule_terms[:, 2]]
        )
        strength = np.zeros((ev.shape[0], out_mu.shape[0]))
        for t in range(out_mu.shape[0]):
            sel = rule_out == t
            if sel.any():
                strength[:, t] = firing[:, sel].max(axis=1)
        agg = np.minimum(strength[:, :, None], out_mu[None, :, :]).max(axis=1)
        den = agg.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(den > 0, (agg * self.output_grid).sum(axis=1) / den, np.nan)


def infer_priority(evidence: float, health: float, certainty: float, rules: RuleBase) -> float:
    """Search priority of one cell."""
    return float(rules.infer_many(evidence, health, certainty)[0])


# --------------------------------------------------------------------------
# rule file


_MF_LINE = re.compile(r"^(\w+)\.(.+?)\s*=\s*\(([^)]*)\)\s*$")


def _number(token: str, where: str) -> float:
    try:
        return float(token.strip())
    except ValueError as exc:
        raise ConfigError(where, f"not a number: {token!r}") from exc


def parse_rule_base(text: str, strict: bool = False) -> RuleBase:
    """Parse the sectioned rule-base format (see ``data/priority_rules.txt``).

    ``strict`` additionally requires the rule table to equal the reference one.
    """
    section = None
    universes: dict[str, tuple[float, float]] = {}
    terms: dict[str, dict[str, TrapezoidMF]] = {}
    rules: list[FuzzyRule] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"line {lineno}"
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            continue
        if section == "universe":
            name, _, rng = line.partition("=")
            parts = rng.split(",")
            if len(parts) != 2:
                raise ConfigError(where, "universe needs 'lo, hi'")
            universes[name.strip()] = (_number(parts[0], where), _number(parts[1], where))
        elif section == "membership":
            m = _MF_LINE.match(line)
            if not m:
                raise ConfigError(where, f"bad membership line {line!r}")
            var, term, params = m.group(1), m.group(2).strip(), m.group(3).split(",")
            if len(params) != 4:
                raise ConfigError(where, "membership needs four breakpoints")
            try:
                mf = TrapezoidMF(*(_number(p, where) for p in params))
            except ValueError as exc:
                raise ConfigError(where, str(exc)) from exc
            terms.setdefault(var, {})[term] = mf
        elif section == "rules":
            lhs, arrow, rhs = line.partition("->")
            parts = [p.strip() for p in lhs.split(",")]
            if not arrow or len(parts) != 3:
                raise ConfigError(where, "rule must read 'evidence, health, certainty -> priority'")
            rules.append(FuzzyRule(*parts, rhs.strip()))
        else:
            raise ConfigError(where, f"content outside a known section: {line!r}")
    for name in INPUT_NAMES + (OUTPUT_NAME,):
        if name not in universes:
            raise ConfigError(f"universe.{name}", "missing")
        if name not in terms:
            raise ConfigError(f"membership.{name}", "no terms")
    variables = {n: LinguisticVariable(n, universes[n], terms[n]) for n in universes}
    base = RuleBase([variables[n] for n in INPUT_NAMES], variables[OUTPUT_NAME], rules)
    if strict and not base.matches_reference():
        raise ConfigError("rules", "rule table differs from the reference table")
    return base


def load_rule_base(path: str | FilePath | None = None, strict: bool | None = None) -> RuleBase:
    """Load a rule file; with no path, the bundled reference rule base."""
    if path is None:
        text = resources.files("sarsim").joinpath("data/priority_rules.txt").read_text()
        return parse_rule_base(text, strict=True if strict is None else strict)
    return parse_rule_base(FilePath(path).read_text(), strict=bool(strict))


_DEFAULT: RuleBase | None = None


def default_rule_base() -> RuleBase:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_rule_base()
    return _DEFAULT


# --------------------------------------------------------------------------
# priority maps


class PriorityMap:
    """Priorities over a perception field; ``NaN`` marks known obstacles."""

    def __init__(self, cells: list[Cell], values: np.ndarray):
        self.cells = list(cells)
        self.values = np.asarray(values, dtype=np.float64)
        self._lookup = dict(zip(self.cells, self.values.tolist()))

    def __contains__(self, cell) -> bool:
        return cell in self._lookup

    def __len__(self) -> int:
        return len(self.cells)

    def get(self, cell: Cell, default: float | None = None) -> float | None:
        """Priority of ``cell``; ``None`` for obstacles, ``default`` off the field."""
        if cell not in self._lookup:
            return default
        v = self._lookup[cell]
        return None if math.isnan(v) else v

    def value(self, cell: Cell) -> float:
        """Priority used in path scoring: null and off-field count as 0."""
        v = self._lookup.get(cell)
        return 0.0 if v is None or math.isnan(v) else v

    def as_flat(self, env: GridEnvironment, scale: float = 1.0) -> np.ndarray:
        out = np.zeros(env.size, dtype=np.float64)
        for cell, v in zip(self.cells, self.values):
            if not math.isnan(v):
                out[env.index(cell)] = v * scale
        return out


def build_priority_map(
    robot: RobotState,
    field: list[Cell],
    certainty: ScanCertaintyMap,
    signals: dict[Cell, float],
    occupancy: OccupancyMap,
    rules: RuleBase,
) -> PriorityMap:
    """Priorities for every field cell.

    ``signals`` maps cells with a perceived victim to that victim's health;
    all other cells get the no-signal evidence and :data:`NO_VICTIM_HEALTH`.
    """
    cells = sorted(field, key=lambda c: (c[1], c[0]))
    open_cells = [c for c in cells if not occupancy.is_blocked(c)]
    floor = 0.0 if robot.sensor.eta == 1.0 else NO_SIGNAL_FLOOR
    ev = np.full(len(open_cells), floor)
    hv = np.full(len(open_cells), NO_VICTIM_HEALTH)
    for k, cell in enumerate(open_cells):
        if cell in signals:
            ev[k] = victim_evidence(robot, cell, signals)
            hv[k] = signals[cell]
    cv = np.array([certainty.at(c) for c in open_cells], dtype=np.float64)
    values = np.full(len(cells), np.nan)
    if open_cells:
        rho = rules.infer_many(ev, hv, cv)
        pos = {c: i for i, c in enumerate(cells)}
        for cell, r in zip(open_cells, rho):
            values[pos[cell]] = r
    return PriorityMap(cells, values)
