"""The numpy fallback and the compiled kernels must agree."""
import json
import os
import subprocess
import sys

import pytest

from sarsim import _accel
from sarsim.sim import bundled_scenario, run_scenario

SNIPPET = """
import json, sys
from sarsim import BACKEND
from sarsim.sim import bundled_scenario, run_scenario
out = {}
for name, controller, steps in json.loads(sys.argv[1]):
    cfg = bundled_scenario(name).with_overrides(controller=controller, steps=steps)
    out[f"{name}/{controller}"] = json.loads(run_scenario(cfg).canonical_json())
print(json.dumps({"backend": BACKEND, "runs": out}))
"""

RUNS = [("case1", "cooperative", 9), ("case3", "selfish", 10), ("general", "pure_mpc", 6),
        ("general", "acs", 40), ("general", "cooperative", 40)]


def run_with(disable: bool):
    env = dict(os.environ)
    env.pop("SARSIM_DISABLE_NUMBA", None)
    if disable:
        env["SARSIM_DISABLE_NUMBA"] = "1"
    res = subprocess.run([sys.executable, "-c", SNIPPET, json.dumps(RUNS)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def test_flag_parsing():
    assert _accel.BACKEND in ("numba", "numpy")
    assert _accel.DISABLED_BY_ENV == (os.environ.get("SARSIM_DISABLE_NUMBA", "").strip().lower()
                                      not in ("", "0", "false", "no"))


@pytest.mark.skipif(not _accel.NUMBA_ENABLED, reason="numba unavailable or disabled")
def test_numpy_fallback_matches_numba():
    slow = run_with(disable=True)
    fast = run_with(disable=False)
    assert slow["backend"] == "numpy" and fast["backend"] == "numba"
    for key in fast["runs"]:
        a, b = fast["runs"][key], slow["runs"][key]
        assert a["trajectories"] == b["trajectories"], key
        assert a["victims"] == b["victims"], key
        for ta, tb in zip(a["ticks"], b["ticks"]):
            assert ta["coverage_pct"] == pytest.approx(tb["coverage_pct"], abs=1e-9), key


def test_record_notes_backend():
    rec = run_scenario(bundled_scenario("case1").with_overrides(steps=1))
    assert rec.backend == _accel.BACKEND
