"""Small random scenarios shared by the invariant tests."""
from hypothesis import strategies as st

from sarsim.sim.scenario import parse_scenario

CONTROLLERS = ["cooperative", "selfish", "pure_mpc", "acs", "exhaustive"]


@st.composite
def small_scenarios(draw, controllers=CONTROLLERS, steps=(1, 4)):
    w = draw(st.integers(5, 9))
    h = draw(st.integers(5, 9))
    starts = draw(st.lists(st.tuples(st.integers(1, w), st.integers(1, h)), min_size=1, max_size=3))
    robots = [
        {"id": i + 1, "start": list(s), "radius": draw(st.sampled_from([2, 3, 4])),
         "eta": draw(st.sampled_from([0.1, 0.3, 0.7]))}
        for i, s in enumerate(starts)
    ]
    doc = {
        "name": "random",
        "controller": draw(st.sampled_from(controllers)),
        "steps": draw(st.integers(*steps)),
        "seed": draw(st.integers(0, 2**31 - 1)),
        "grid": {"width": w, "height": h, "obstacle_density": draw(st.sampled_from([0.0, 0.1, 0.2]))},
        "robots": robots,
        "victims": {"count": draw(st.integers(0, 3)), "health": [5, 100]},
        "certainty": {"initial": draw(st.sampled_from([0.0, 0.3, 0.8]))},
        "params": {"tau_int": draw(st.integers(0, 8)), "p_stay": draw(st.sampled_from([0.6, 1.0]))},
        "optimizer": {"max_evals": draw(st.integers(0, 120)), "horizon": draw(st.integers(1, 4))},
    }
    return parse_scenario(doc)
