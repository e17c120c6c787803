"""Acceptance checks, one test per criterion, each printing a PASS/FAIL line."""
import csv
import json
import time
from pathlib import Path

import pytest

import test_control
import test_fuzzy
import test_optimize
import test_pathplan
import test_sensing
import test_sim
import test_world
from sarsim.sim import bundled_scenario, run_batch, run_scenario, summarize
from sarsim.sim.cli import main
from sarsim.sim.metrics import SUMMARY_COLUMNS
from sarsim.sim.records import RUN_COLUMNS, VICTIM_COLUMNS

GOLDEN = Path(__file__).parent / "golden" / "case1_cooperative_s0.json"
CONTROLLERS = ["cooperative", "selfish", "pure_mpc", "acs", "exhaustive"]
STUDY_SEEDS = list(range(20))


@pytest.fixture
def report(capsys):
    def emit(number, checks, detail=""):
        failed = [name for name, ok in checks if not ok]
        status = "PASS" if not failed else "FAIL (" + ", ".join(failed) + ")"
        with capsys.disabled():
            print(f"\ncriterion {number}: {status} {detail}".rstrip())
        assert not failed, failed

    return emit


def _run_checks(funcs):
    out = []
    for name, fn in funcs:
        try:
            fn()
            out.append((name, True))
        except AssertionError:
            out.append((name, False))
    return out


def test_criterion_1_invariants(report):
    t0 = time.perf_counter()
    checks = _run_checks([
        ("scan certainty monotone", test_sensing.test_certainty_monotone_and_bounded),
        ("sigma in (0,1]", test_sensing.test_sigma_in_unit_interval),
        ("health monotone and clamped", test_world.test_health_monotone_and_clamped),
        ("executed moves valid", test_control.test_executed_moves_are_valid),
        ("supervisor J_out >= J_in", test_control.test_supervisor_never_worse_than_warm_start),
        ("supervisor J_out >= J_in in runs", test_control.test_supervisor_calls_improve_objective),
        ("optimizer incumbent monotone", test_optimize.test_incumbent_never_worsens),
        ("run determinism", test_sim.test_runs_are_deterministic),
    ])
    elapsed = time.perf_counter() - t0
    checks.append(("runtime < 5 min", elapsed < 300))
    report(1, checks, f"[{elapsed:.0f}s]")


def test_criterion_2_numeric_oracles(report):
    checks = _run_checks([
        ("sigma/z/c vs loop oracle, 1e4 states, 1e-12", test_sensing.test_update_matches_reference_loop),
        ("sigma examples", test_sensing.test_uncertainty_ratio_examples),
        ("epsilon and grade examples (g = 3.8)", test_pathplan.test_exploration_and_grade_examples),
        ("epsilon and grade vs direct sum", test_pathplan.test_grade_matches_direct_sum),
        ("centroid vs 1e5-point integration, 1e-3", test_fuzzy.test_centroid_matches_integration_oracle),
    ])
    checks += [
        (f"single-rule centroid row {row + 1}", _ok(lambda r=row: test_fuzzy.test_single_rule_prototypes(r)))
        for row in range(27)
    ]
    report(2, checks)


def _ok(fn):
    try:
        fn()
        return True
    except AssertionError:
        return False


def test_criterion_3_path_oracles(report):
    t0 = time.perf_counter()
    checks = []
    for seed in range(50):
        checks.append((f"A* = BFS map {seed}", _ok(lambda s=seed: test_pathplan.test_astar_matches_bfs(s))))
        checks.append((f"Yen vs enumeration map {seed}",
                       _ok(lambda s=seed: test_pathplan.test_yen_is_k_shortest_of_enumeration(s))))
        checks.append((f"plan_local vs brute force map {seed}",
                       _ok(lambda s=seed: test_pathplan.test_plan_local_matches_brute_force(s))))
    elapsed = time.perf_counter() - t0
    checks.append(("runtime < 2 min", elapsed < 120))
    report(3, checks, f"[150 oracle checks, {elapsed:.1f}s]")


def _case(name, controller):
    return run_scenario(bundled_scenario(name).with_overrides(controller=controller))


def _found(rec):
    return {v.victim_id for v in rec.victims if v.detect_tick is not None}


def test_criterion_4_structured_cases(report):
    t0 = time.perf_counter()
    runs = {(n, c): _case(n, c) for n in ("case1", "case2", "case3", "case4", "case5")
            for c in ("cooperative", "selfish")}
    coop = {n: runs[(n, "cooperative")] for n in ("case1", "case2", "case3", "case4", "case5")}
    self_ = {n: runs[(n, "selfish")] for n in ("case1", "case2", "case3", "case4", "case5")}

    def cov(rec):
        return rec.ticks[-1].coverage_pct

    def gain_ratio(name):
        start = coop[name].ticks[0].coverage_pct
        return (cov(coop[name]) - start) / (cov(self_[name]) - start)

    c5 = coop["case5"]
    unknown_e1 = {(x, y) for x in range(9, 16) for y in range(1, 6)}
    checks = [
        ("case 1 cooperative finds both within 9 ticks",
         _found(coop["case1"]) == {1, 2} and max(v.detect_tick for v in coop["case1"].victims) <= 9),
        ("case 1 selfish misses v2", _found(self_["case1"]) == {1}),
        ("case 2 cooperative coverage > selfish", cov(coop["case2"]) > cov(self_["case2"])),
        ("case 2 coverage-gain ratio >= 1.3", gain_ratio("case2") >= 1.3),
        ("case 3 cooperative finds both", _found(coop["case3"]) == {1, 2}),
        ("case 3 selfish finds only v1", _found(self_["case3"]) == {1}),
        ("case 4 eta=0.1 robot enters the unknown sub-area",
         any(c in unknown_e1 for c in coop["case4"].trajectories[1])),
        ("case 4 cooperative coverage > selfish", cov(coop["case4"]) > cov(self_["case4"])),
        ("case 4 coverage-gain ratio >= 1.10", gain_ratio("case4") >= 1.10),
        ("case 5 cooperative finds >= 5 of 6", len(_found(c5)) >= 5),
        ("case 5 cooperative none deceased", c5.ticks[-1].victims_deceased == 0),
        ("case 5 selfish finds <= 2", len(_found(self_["case5"])) <= 2),
    ]
    elapsed = time.perf_counter() - t0
    checks.append(("runtime < 1 min", elapsed < 60))
    detail = (f"[case2 total ratio {cov(coop['case2']) / cov(self_['case2']):.3f}, gain ratio "
              f"{gain_ratio('case2'):.2f}; case4 total ratio {cov(coop['case4']) / cov(self_['case4']):.3f}, "
              f"gain ratio {gain_ratio('case4'):.2f}; {elapsed:.1f}s]")
    report(4, checks, detail)


@pytest.mark.slow
def test_criterion_5_batch_study(report):
    t0 = time.perf_counter()
    rows, aggs = run_batch(bundled_scenario("general"), CONTROLLERS, STUDY_SEEDS)
    m = {a.controller: a for a in aggs}
    cov = {c: m[c].mean["final_coverage"] for c in CONTROLLERS}
    found = {c: m[c].mean["victims_found"] for c in CONTROLLERS}
    events = {c: m[c].mean["conflict_events"] for c in CONTROLLERS}
    evals = {c: m[c].mean["mean_objective_evals"] for c in CONTROLLERS}
    r80 = {c: [r.rise_times[80.0] for r in rows if r.controller == c] for c in ("cooperative", "selfish")}
    # runs that never reach 80% count as the full horizon
    horizon = bundled_scenario("general").steps
    mean80 = {c: sum(horizon if t is None else t for t in v) / len(v) for c, v in r80.items()}
    top = min(cov["selfish"], cov["cooperative"], cov["acs"])
    checks = [
        ("coverage exhaustive < pure MPC", cov["exhaustive"] < cov["pure_mpc"]),
        ("coverage pure MPC < selfish/cooperative/ACS", cov["pure_mpc"] < top),
        ("coverage ACS >= cooperative", cov["acs"] >= cov["cooperative"]),
        ("found cooperative >= pure MPC", found["cooperative"] >= found["pure_mpc"]),
        ("found selfish >= pure MPC", found["selfish"] >= found["pure_mpc"]),
        ("found pure MPC > ACS", found["pure_mpc"] > found["acs"]),
        ("found ACS >= exhaustive", found["acs"] >= found["exhaustive"]),
        ("80% rise cooperative < selfish", mean80["cooperative"] < mean80["selfish"]),
        ("conflict events cooperative < selfish", events["cooperative"] < events["selfish"]),
        ("objective evals/tick cooperative < pure MPC", evals["cooperative"] < evals["pure_mpc"]),
    ]
    elapsed = time.perf_counter() - t0
    detail = "[" + "; ".join(
        f"{c} cov {cov[c]:.2f} found {found[c]:.2f} conflicts {events[c]:.2f} evals {evals[c]:.1f}"
        for c in CONTROLLERS
    ) + f"; rise80 coop {mean80['cooperative']:.1f} selfish {mean80['selfish']:.1f}; {elapsed:.0f}s]"
    report(5, checks, detail)


def _close(a, b, tol=1e-9):
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_close(a[k], b[k], tol) for k in a)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(_close(x, y, tol) for x, y in zip(a, b))
    if isinstance(a, float) or isinstance(b, float):
        return isinstance(a, (int, float)) and isinstance(b, (int, float)) and abs(a - b) <= tol
    return a == b


def test_criterion_6_cli_and_formats(report, tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('[grid]\nwidth = 5\nheight = 5\n[[robots]]\nid = 1\nstart = [1, 1]\n'
                   'radius = 2\neta = 0.1\n[params]\nbeta = "1/60"\nh_crit = 30\ngamma = 0.4\n')
    code_bad = main(["validate", "--scenario", str(bad)])
    code_ok = main(["validate", "--scenario", "case1"])
    out = tmp_path / "run"
    code_run = main(["run", "--scenario", "case1", "--controller", "cooperative", "--seed", "0",
                     "--steps", "9", "--out", str(out)])
    with open(out / "case1_cooperative_s0_run.csv") as fh:
        run_header = next(csv.reader(fh))
    with open(out / "case1_cooperative_s0_victims.csv") as fh:
        victim_header = next(csv.reader(fh))
    bdir = tmp_path / "batch"
    main(["batch", "--scenario", "case1", "--controllers", "selfish", "--seeds", "0..1", "--out", str(bdir)])
    with open(bdir / "batch_summary.csv") as fh:
        summary_header = next(csv.reader(fh))
    capsys.readouterr()
    got = json.loads(run_scenario(bundled_scenario("case1")).canonical_json())
    want = json.loads(GOLDEN.read_text())
    checks = [
        ("validate rejects gamma < beta*h_crit with exit 2", code_bad == 2),
        ("validate accepts bundled case", code_ok == 0),
        ("run exits 0", code_run == 0),
        ("run CSV columns", run_header == ["tick", "coverage_pct", "victims_found", "victims_deceased",
                                           "conflicts", "decision_ms", "objective_evals"]),
        ("victim CSV columns", victim_header == ["victim_id", "detect_tick", "health_at_detect", "visits"]),
        ("column constants", list(RUN_COLUMNS) == run_header and list(VICTIM_COLUMNS) == victim_header),
        ("batch summary columns", summary_header == list(SUMMARY_COLUMNS)),
        ("golden case 1 record", _close(got, want)),
    ]
    report(6, checks)
