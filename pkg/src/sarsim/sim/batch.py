"""Independent runs over seeds and controllers, with aggregate statistics."""
from __future__ import annotations

import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path as FilePath

from .engine import run_scenario
from .metrics import RISE_THRESHOLDS, SUMMARY_COLUMNS, SummaryRow, summarize
from .records import write_csv
from .scenario import ScenarioConfig

AGGREGATE_FIELDS = ("final_coverage", "victims_found", "victims_deceased", "conflict_ticks",
                    "conflict_events", "mean_decision_ms", "mean_objective_evals")


def parse_seed_range(text: str) -> list[int]:
    """``"3"``, ``"0..19"`` (inclusive) or ``"1,4,9"``."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(s) for s in text.split(",") if s.strip()]


@dataclass(frozen=True)
class Aggregate:
    controller: str
    runs: int
    mean: dict[str, float]
    variance: dict[str, float]
    mean_rise: dict[float, float | None]

    def as_row(self) -> dict:
        row = {"controller": self.controller, "runs": self.runs}
        for f in AGGREGATE_FIELDS:
            row[f"mean_{f}"] = self.mean[f]
            row[f"var_{f}"] = self.variance[f]
        for th in RISE_THRESHOLDS:
            row[f"mean_rise_{int(th)}"] = self.mean_rise[th]
        return row


def aggregate(rows: list[SummaryRow]) -> list[Aggregate]:
    """Per-controller mean and sample variance (0 for a single run).

    Mean rise times average only the runs that reached the threshold and are
    ``None`` when none did.
    """
    out = []
    for ctrl in dict.fromkeys(r.controller for r in rows):
        sub = [r for r in rows if r.controller == ctrl]
        mean, var = {}, {}
        for f in AGGREGATE_FIELDS:
            vals = [float(getattr(r, f)) for r in sub]
            mean[f] = statistics.fmean(vals)
            var[f] = statistics.variance(vals) if len(vals) > 1 else 0.0
        rise = {}
        for th in RISE_THRESHOLDS:
            hit = [r.rise_times[th] for r in sub if r.rise_times[th] is not None]
            rise[th] = statistics.fmean(hit) if hit else None
        out.append(Aggregate(ctrl, len(sub), mean, var, rise))
    return out


def _run_one(cfg: ScenarioConfig) -> SummaryRow:
    return summarize(run_scenario(cfg))


def run_batch(base: ScenarioConfig, controllers, seeds, steps: int | None = None,
              workers: int = 1) -> tuple[list[SummaryRow], list[Aggregate]]:
    """Run every (controller, seed) pair. Results are ordered by controller,
    then seed, whatever the number of workers."""
    cfgs = [base.with_overrides(controller=c, seed=s, steps=steps) for c in controllers for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one, cfgs))
    else:
        rows = [_run_one(c) for c in cfgs]
    return rows, aggregate(rows)


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_batch(rows: list[SummaryRow], aggs: list[Aggregate], out_dir) -> dict[str, FilePath]:
    out = FilePath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"summary": out / "batch_summary.csv", "aggregate": out / "batch_aggregate.csv"}
    write_csv(paths["summary"], SUMMARY_COLUMNS,
              [[_fmt(r.as_row()[c]) for c in SUMMARY_COLUMNS] for r in rows])
    if aggs:
        cols = list(aggs[0].as_row())
        write_csv(paths["aggregate"], cols, [[_fmt(a.as_row()[c]) for c in cols] for a in aggs])
    return paths
