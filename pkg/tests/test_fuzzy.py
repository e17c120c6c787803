import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sarsim.errors import ConfigError
from sarsim.fuzzy import (
    NO_VICTIM_HEALTH,
    REFERENCE_RULES,
    TrapezoidMF,
    build_priority_map,
    default_rule_base,
    infer_priority,
    load_rule_base,
    membership,
    parse_rule_base,
)
from sarsim.sensing import NO_SIGNAL_FLOOR, RobotState, ScanCertaintyMap, SensorSpec
from sarsim.world import GridEnvironment, OccupancyMap

RULES = default_rule_base()
ORACLE_POINTS = 100_000

# plateau prototypes for every input term
PROTO = {
    "evidence": {"Low": 0.1, "Medium": 0.5, "High": 0.9},
    "health": {"Critical": 10.0, "Medium": 50.0, "Stable": 90.0},
    "certainty": {"Unknown": 0.1, "Partial": 0.5, "Known": 0.9},
}


def trap(x, a, b, c, d):
    x = np.asarray(x, dtype=float)
    up = np.ones_like(x) if math.isinf(a) else np.clip((x - a) / (b - a), 0, 1)
    down = np.ones_like(x) if math.isinf(d) else np.clip((d - x) / (d - c), 0, 1)
    return np.minimum(up, down)


def oracle(ev, h, c):
    """Mamdani by hand, integrated on a fine grid with the trapezoid rule."""
    xs = np.linspace(0.0, 1.0, ORACLE_POINTS)
    agg = np.zeros_like(xs)
    in_vars = RULES.inputs
    for rule in RULES.rules:
        mu = min(
            float(trap(np.clip(v, *var.universe), *var.terms[t].params))
            for v, var, t in zip((ev, h, c), in_vars, rule.antecedent)
        )
        agg = np.maximum(agg, np.minimum(mu, trap(xs, *RULES.output.terms[rule.priority].params)))
    return np.trapezoid(agg * xs, xs) / np.trapezoid(agg, xs)


def full_centroid(term):
    xs = np.linspace(0.0, 1.0, ORACLE_POINTS)
    mu = trap(xs, *RULES.output.terms[term].params)
    return np.trapezoid(mu * xs, xs) / np.trapezoid(mu, xs)


def test_membership_examples():
    mf = TrapezoidMF(0.2, 0.4, 0.6, 0.8)
    assert membership(mf, 0.5) == 1.0
    assert membership(mf, 0.4) == 1.0 and membership(mf, 0.6) == 1.0
    assert membership(mf, 0.1) == 0.0 and membership(mf, 0.9) == 0.0
    assert membership(mf, 0.3) == pytest.approx(0.5)
    crisp = TrapezoidMF(0.2, 0.2, 0.6, 0.6)
    assert membership(crisp, 0.2) == 1.0 and membership(crisp, 0.19) == 0.0
    shoulder = TrapezoidMF(-math.inf, 0.0, 0.2, 0.45)
    assert membership(shoulder, 0.0) == 1.0


def test_trapezoid_order_enforced():
    with pytest.raises(ValueError):
        TrapezoidMF(0.5, 0.4, 0.6, 0.7)


def test_default_rule_base_is_reference():
    assert len(RULES.rules) == 27
    assert RULES.matches_reference()
    assert {r.antecedent for r in RULES.rules} == {tuple(r[:3]) for r in REFERENCE_RULES}


@pytest.mark.parametrize("row", range(27))
def test_single_rule_prototypes(row):
    ev_t, h_t, c_t, out_t = REFERENCE_RULES[row]
    rho = infer_priority(PROTO["evidence"][ev_t], PROTO["health"][h_t], PROTO["certainty"][c_t], RULES)
    assert rho == pytest.approx(full_centroid(out_t), abs=1e-3)


def test_between_terms_bounded_by_single_rule_centroids():
    # evidence halfway between Low and Medium plateaus, health critical, certainty unknown
    rho = infer_priority(0.35, 10.0, 0.1, RULES)
    lo, hi = sorted((full_centroid("High"), full_centroid("Very High")))
    assert lo <= rho <= hi


def test_centroid_matches_integration_oracle():
    gen = np.random.default_rng(7)
    ev = gen.random(200)
    h = gen.uniform(0, 100, 200)
    c = gen.random(200)
    got = RULES.infer_many(ev, h, c)
    for k in range(200):
        assert got[k] == pytest.approx(oracle(ev[k], h[k], c[k]), abs=1e-3)


def test_inputs_are_clamped():
    assert infer_priority(1.7, 150.0, -0.3, RULES) == pytest.approx(infer_priority(1.0, 100.0, 0.0, RULES))


@given(st.floats(-0.5, 1.5), st.floats(-20, 120), st.floats(-0.5, 1.5))
def test_priority_in_unit_interval(ev, h, c):
    assert 0.0 <= infer_priority(ev, h, c, RULES) <= 1.0


OUT_ORDER = ["Very Low", "Low", "Medium", "High", "Very High"]
TABLE = {tuple(r[:3]): OUT_ORDER.index(r[3]) for r in REFERENCE_RULES}
C_ORDER = ("Known", "Partial", "Unknown")


def table_monotone(ev_t, h_t):
    ranks = [TABLE[(ev_t, h_t, c)] for c in C_ORDER]
    return ranks == sorted(ranks)


MONOTONE_PAIRS = [(e, h) for e in PROTO["evidence"] for h in PROTO["health"] if table_monotone(e, h)]
REVERSED_PAIRS = [(e, h) for e in PROTO["evidence"] for h in PROTO["health"] if not table_monotone(e, h)]


def test_rule_table_reversals_are_the_known_two():
    assert REVERSED_PAIRS == [("Medium", "Medium"), ("High", "Stable")]


@pytest.mark.parametrize("ev_t,h_t", MONOTONE_PAIRS)
def test_lower_certainty_never_lowers_priority(ev_t, h_t):
    ev, h = PROTO["evidence"][ev_t], PROTO["health"][h_t]
    cs = np.linspace(0.9, 0.1, 101)
    rho = RULES.infer_many(np.full(101, ev), np.full(101, h), cs)
    # clipping a consequent that runs past the universe edge moves its
    # centroid slightly; allow the centroid discretisation tolerance
    assert np.all(np.diff(rho) >= -1e-3)
    plateaus = [infer_priority(ev, h, PROTO["certainty"][c], RULES) for c in C_ORDER]
    assert plateaus == sorted(plateaus)


@pytest.mark.parametrize("ev_t,h_t", REVERSED_PAIRS)
def test_partial_certainty_dip_follows_rule_table(ev_t, h_t):
    ev, h = PROTO["evidence"][ev_t], PROTO["health"][h_t]
    known, partial, unknown = (infer_priority(ev, h, PROTO["certainty"][c], RULES) for c in C_ORDER)
    assert partial < known and partial < unknown


@given(st.floats(0, 1), st.floats(0, 100), st.floats(0, 1))
def test_some_rule_always_fires(ev, h, c):
    strengths = []
    for rule in RULES.rules:
        strengths.append(min(
            float(var.degrees(v)[var.term_names().index(t)])
            for v, var, t in zip((ev, h, c), RULES.inputs, rule.antecedent)
        ))
    assert max(strengths) > 0.0


def test_uncovered_input_raises():
    text = (pytest.importorskip("importlib.resources").files("sarsim")
            .joinpath("data/priority_rules.txt").read_text())
    gap = text.replace("evidence.Medium = (0.25, 0.45, 0.55, 0.75)", "evidence.Medium = (0.46, 0.5, 0.5, 0.54)")
    with pytest.raises(ConfigError):
        parse_rule_base(gap)


def test_incomplete_rule_base_rejected():
    text = (pytest.importorskip("importlib.resources").files("sarsim")
            .joinpath("data/priority_rules.txt").read_text())
    lines = [ln for ln in text.splitlines() if ln.strip() != "High, Critical, Unknown -> Very High"]
    with pytest.raises(ConfigError):
        parse_rule_base("\n".join(lines))


def test_altered_rule_table_rejected_in_strict_mode(tmp_path):
    text = (pytest.importorskip("importlib.resources").files("sarsim")
            .joinpath("data/priority_rules.txt").read_text())
    altered = text.replace("Low, Stable, Known -> Very Low", "Low, Stable, Known -> Low")
    path = tmp_path / "rules.txt"
    path.write_text(altered)
    assert not load_rule_base(path).matches_reference()
    with pytest.raises(ConfigError):
        load_rule_base(path, strict=True)


def test_non_finite_input_rejected():
    with pytest.raises(ValueError):
        RULES.infer_many([float("nan")], [50.0], [0.5])


def sensor_robot(pos):
    return RobotState(1, pos, SensorSpec(3.0, 0.1))


def test_priority_map_single_cell():
    env = GridEnvironment(1, 1)
    pm = build_priority_map(sensor_robot((1, 1)), [(1, 1)], ScanCertaintyMap.uniform(env),
                            {}, OccupancyMap(env), RULES)
    assert pm.get((1, 1)) == pytest.approx(infer_priority(NO_SIGNAL_FLOOR, NO_VICTIM_HEALTH, 0.0, RULES))


def test_priority_map_obstacle_is_null():
    env = GridEnvironment(3, 3, frozenset({(2, 1)}))
    occ = OccupancyMap(env)
    occ.register(env.obstacles)
    pm = build_priority_map(sensor_robot((1, 1)), [(1, 1), (2, 1)], ScanCertaintyMap.uniform(env),
                            {}, occ, RULES)
    assert pm.get((2, 1)) is None
    assert pm.value((2, 1)) == 0.0


def test_critical_victim_cell_dominates():
    env = GridEnvironment(7, 7)
    r = sensor_robot((4, 4))
    field = [(x, y) for x in range(1, 8) for y in range(1, 8) if math.hypot(x - 4, y - 4) < 3.0]
    pm = build_priority_map(r, field, ScanCertaintyMap.uniform(env, 0.3), {(4, 4): 10.0},
                            OccupancyMap(env), RULES)
    others = [pm.value(c) for c in field if c != (4, 4)]
    assert pm.value((4, 4)) > max(others)
