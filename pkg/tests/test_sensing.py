import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sarsim.sensing import (
    NO_SIGNAL_FLOOR,
    GlobalVictimMap,
    LocalVictimMap,
    RobotState,
    ScanCertaintyMap,
    SensorSpec,
    VictimObservation,
    field_cells,
    merge_into_global,
    perception_field,
    prune_local_victim_map,
    uncertainty_ratio,
    update_scan_certainty,
    victim_evidence,
)
from sarsim.world import GridEnvironment


def robot(pos, radius=6.0, eta=0.1, rid=1):
    return RobotState(rid, pos, SensorSpec(radius, eta))


def reference_update(values, robots):
    """Cell-by-cell loop: sigma as a product over robots, z' = sigma*z."""
    h, w = values.shape
    out = values.copy()
    for y in range(1, h + 1):
        for x in range(1, w + 1):
            sigma = 1.0
            for r in robots:
                d = math.hypot(x - r.position[0], y - r.position[1])
                if d < r.sensor.radius:
                    sigma *= 1.0 - (1.0 - r.sensor.eta) * math.exp(-d)
            z = 1.0 - values[y - 1, x - 1]
            out[y - 1, x - 1] = 1.0 - sigma * z
    return out


def test_field_sizes():
    env = GridEnvironment(20, 20)
    assert perception_field(robot((10, 10), 0.1), env) == {(10, 10)}
    # strict: the four cells at distance exactly 2 are outside
    assert len(perception_field(robot((10, 10), 2.0), env)) == 9
    assert len(perception_field(robot((10, 10), 2.01), env)) == 13
    assert len(perception_field(robot((3, 3), 50.0), env)) == env.size
    assert len(perception_field(robot((10, 10), 3.0), env)) == 25


def test_field_cells_row_major():
    cells = field_cells(robot((4, 4), 3.0), GridEnvironment(9, 9))
    assert cells == sorted(cells, key=lambda c: (c[1], c[0]))


def test_field_ignores_obstacles():
    env = GridEnvironment(9, 9, frozenset({(5, 4), (5, 5), (5, 6)}))
    assert (7, 5) in perception_field(robot((4, 5), 4.0), env)


def test_uncertainty_ratio_examples():
    assert uncertainty_ratio((5, 5), [robot((5, 5), 6.0, 0.1)]) == pytest.approx(0.1)
    assert uncertainty_ratio((5, 5), [robot((1, 1), 3.0, 0.1)]) == 1.0
    two = [robot((5, 5), 6.0, 0.1, 1), robot((5, 5), 4.0, 0.3, 2)]
    assert uncertainty_ratio((5, 5), two) == pytest.approx(0.03)
    assert uncertainty_ratio((6, 5), [robot((5, 5), 6.0, 0.1)]) == pytest.approx(0.668909, abs=1e-6)


def test_ratio_unity_at_radius():
    # boundary cell is outside the field
    assert uncertainty_ratio((8, 5), [robot((5, 5), 3.0, 0.1)]) == 1.0


def test_update_examples():
    env = GridEnvironment(5, 5)
    zero = ScanCertaintyMap.uniform(env, 0.0)
    out = update_scan_certainty(zero, [robot((3, 3), 1.5, 0.1)])
    assert out.at((3, 3)) == pytest.approx(0.9)
    assert out.at((5, 5)) == 0.0
    half = ScanCertaintyMap.uniform(env, 0.5)
    out = update_scan_certainty(half, [robot((3, 3), 3.0, 0.1)])
    assert out.at((4, 3)) == pytest.approx(1 - 0.668909 * 0.5, abs=1e-6)


def test_update_matches_reference_loop():
    gen = np.random.default_rng(1234)
    for _ in range(10_000):
        w, h = (int(v) for v in gen.integers(1, 9, size=2))
        vals = gen.random((h, w))
        vals[gen.random((h, w)) < 0.2] = 0.0
        robots = [
            robot((int(gen.integers(1, w + 1)), int(gen.integers(1, h + 1))),
                  float(gen.uniform(0.1, 6.0)), float(gen.uniform(0.01, 1.0)), rid=i)
            for i in range(int(gen.integers(0, 4)))
        ]
        got = update_scan_certainty(ScanCertaintyMap(vals), robots).values
        np.testing.assert_allclose(got, reference_update(vals, robots), rtol=0, atol=1e-12)


@st.composite
def scan_state(draw):
    w = draw(st.integers(1, 10))
    h = draw(st.integers(1, 10))
    vals = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=w * h, max_size=w * h))).reshape(h, w)
    n = draw(st.integers(0, 3))
    robots = [
        robot((draw(st.integers(1, w)), draw(st.integers(1, h))),
              draw(st.floats(0.05, 8.0)), draw(st.floats(0.001, 1.0)), rid=i)
        for i in range(n)
    ]
    return vals, robots


@given(scan_state())
def test_certainty_monotone_and_bounded(state):
    vals, robots = state
    out = update_scan_certainty(ScanCertaintyMap(vals), robots).values
    assert np.all(out >= vals)
    assert np.all((out >= 0.0) & (out <= 1.0))


@given(scan_state(), st.integers(1, 10), st.integers(1, 10))
def test_sigma_in_unit_interval(state, x, y):
    _, robots = state
    s = uncertainty_ratio((x, y), robots)
    assert 0.0 < s <= 1.0


@given(scan_state())
def test_update_order_independent(state):
    vals, robots = state
    a = update_scan_certainty(ScanCertaintyMap(vals), robots).values
    b = update_scan_certainty(ScanCertaintyMap(vals), list(reversed(robots))).values
    assert np.array_equal(a, b)


@given(st.floats(0.01, 0.99))
def test_stationary_robot_converges(eta):
    env = GridEnvironment(3, 3)
    cmap = ScanCertaintyMap.uniform(env, 0.0)
    r = robot((2, 2), 1.0, eta)
    for _ in range(math.ceil(math.log(1e-6) / math.log(eta))):
        cmap = update_scan_certainty(cmap, [r])
    assert 1.0 - cmap.at((2, 2)) < 1e-6 * (1 + 1e-9)


@given(st.integers(1, 9), st.integers(1, 7), st.floats(0.5, 5.0))
def test_field_reflection_symmetry(x, y, radius):
    env = GridEnvironment(9, 7)
    f = perception_field(robot((x, y), radius), env)
    mirrored = perception_field(robot((10 - x, y), radius), env)
    assert {(10 - cx, cy) for cx, cy in f} == mirrored
    flipped = perception_field(robot((x, 8 - y), radius), env)
    assert {(cx, 8 - cy) for cx, cy in f} == flipped


def test_victim_evidence():
    r = robot((4, 4), 3.0, 0.1)
    assert victim_evidence(r, (4, 4), {(4, 4)}) == pytest.approx(0.9)
    assert victim_evidence(r, (5, 4), {(5, 4)}) == pytest.approx(0.9 * math.exp(-1))
    assert victim_evidence(robot((4, 4), 3.0, 1.0), (5, 5), set()) == 0.0
    assert victim_evidence(r, (7, 4), {(7, 4)}) == NO_SIGNAL_FLOOR


def obs(vid, pos, tick=1, observer=1, health=50.0):
    return VictimObservation(vid, pos, health, tick, observer)


def test_prune_local_victim_map():
    assert prune_local_victim_map(LocalVictimMap(), None, set()).entries == {}
    m = LocalVictimMap({1: obs(1, (1, 1)), 2: obs(2, (5, 5)), 3: obs(3, (9, 9)), 4: obs(4, (2, 2))}, {3})
    out = prune_local_victim_map(m, 2, {(1, 1)})
    assert set(out.entries) == {1, 2, 3}
    assert out.visited == {3}


def test_merge_into_global():
    env = GridEnvironment(6, 6)
    cmap = ScanCertaintyMap.uniform(env, 0.2)
    gv = GlobalVictimMap()
    same, gv0 = merge_into_global(cmap, gv, [], [])
    assert same == cmap and gv0.records == {}
    r = robot((3, 3), 2.0, 0.1)
    one, _ = merge_into_global(cmap, gv, [r], [])
    assert one == update_scan_certainty(cmap, [r])
    a, b = obs(7, (4, 4), 3, 1), obs(7, (4, 4), 3, 2)
    _, merged = merge_into_global(cmap, gv, [], [a, b, a])
    assert list(merged.records) == [7]
    naive = list(dict.fromkeys([a, b, a]))
    assert merged.records[7] == naive
    assert merged.known_positions() == {7: (4, 4)}
