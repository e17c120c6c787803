"""Coverage, rise times and per-run summaries."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..sensing import ScanCertaintyMap
from .records import RunRecord, VictimRow

RISE_THRESHOLDS = (50.0, 70.0, 80.0, 85.0, 90.0)


def total_scan_certainty(cmap: ScanCertaintyMap) -> tuple[float, float]:
    """Sum of certainties and the same as a percentage of the cell count."""
    s = float(cmap.values.sum())
    return s, 100.0 * s / cmap.values.size


def rise_time(series, threshold: float) -> int | None:
    """First index whose value reaches ``threshold``; ``None`` if never."""
    for t, v in enumerate(series):
        if v >= threshold:
            return t
    return None


def victim_summary(record: RunRecord) -> list[VictimRow]:
    return sorted(record.victims, key=lambda v: v.victim_id)


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    controller: str
    seed: int
    final_coverage: float
    rise_times: dict[float, int | None]
    victims_found: int
    victims_deceased: int
    conflict_ticks: int
    conflict_events: int
    supervisor_calls: int
    mean_decision_ms: float
    mean_objective_evals: float

    def as_row(self) -> dict:
        row = {
            "scenario": self.scenario,
            "controller": self.controller,
            "seed": self.seed,
            "final_coverage": self.final_coverage,
        }
        for th in RISE_THRESHOLDS:
            row[f"rise_{int(th)}"] = self.rise_times.get(th)
        row.update(
            victims_found=self.victims_found,
            victims_deceased=self.victims_deceased,
            conflict_ticks=self.conflict_ticks,
            conflict_events=self.conflict_events,
            supervisor_calls=self.supervisor_calls,
            mean_decision_ms=self.mean_decision_ms,
            mean_objective_evals=self.mean_objective_evals,
        )
        return row


SUMMARY_COLUMNS = tuple(SummaryRow("", "", 0, 0.0, {}, 0, 0, 0, 0, 0, 0.0, 0.0).as_row())


def summarize(record: RunRecord) -> SummaryRow:
    cov = record.series("coverage_pct")
    steps = record.ticks[1:]
    last = record.ticks[-1]
    return SummaryRow(
        scenario=record.config["name"],
        controller=record.config["controller"],
        seed=record.config["seed"],
        final_coverage=cov[-1],
        rise_times={th: rise_time(cov, th) for th in RISE_THRESHOLDS},
        victims_found=last.victims_found,
        victims_deceased=last.victims_deceased,
        conflict_ticks=sum(1 for t in steps if t.conflicts > 0),
        conflict_events=sum(t.conflicts for t in steps),
        supervisor_calls=len(record.supervisor_calls),
        mean_decision_ms=float(np.mean([t.decision_ms for t in steps])) if steps else 0.0,
        mean_objective_evals=float(np.mean([t.objective_evals for t in steps])) if steps else 0.0,
    )
