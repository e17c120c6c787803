"""Run records and their CSV/JSON serialisation."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path as FilePath

RUN_COLUMNS = ("tick", "coverage_pct", "victims_found", "victims_deceased", "conflicts",
               "decision_ms", "objective_evals")
VICTIM_COLUMNS = ("victim_id", "detect_tick", "health_at_detect", "visits")
# Fields that depend on the machine rather than on the configuration.
WALL_TIME_FIELDS = ("decision_ms",)


@dataclass(frozen=True)
class TickRow:
    tick: int
    coverage_pct: float
    victims_found: int
    victims_deceased: int
    conflicts: int
    decision_ms: float
    objective_evals: int


@dataclass(frozen=True)
class VictimRow:
    victim_id: int
    detect_tick: int | None
    health_at_detect: float | None
    detected_by: int | None
    visits: int
    final_health: float
    alive: bool


@dataclass(frozen=True)
class SupervisorCall:
    tick: int
    j_in: float
    j_out: float
    evaluations: int


@dataclass
class RunRecord:
    """Everything a run produced. ``ticks[0]`` is the initial state; one more
    row follows per simulated step."""

    config: dict
    ticks: list[TickRow]
    victims: list[VictimRow]
    conflict_events: list[tuple[int, int, int, int]] = field(default_factory=list)
    supervisor_calls: list[SupervisorCall] = field(default_factory=list)
    trajectories: dict[int, list[tuple[int, int]]] = field(default_factory=dict)
    final_certainty: list[list[float]] = field(default_factory=list)
    final_obstacles_known: list[list[int]] = field(default_factory=list)
    backend: str = ""

    @property
    def steps(self) -> int:
        return len(self.ticks) - 1

    def series(self, name: str) -> list:
        return [getattr(t, name) for t in self.ticks]

    def to_dict(self, wall_time: bool = True) -> dict:
        ticks = [asdict(t) for t in self.ticks]
        if not wall_time:
            for t in ticks:
                for key in WALL_TIME_FIELDS:
                    t.pop(key)
        return {
            "config": self.config,
            "ticks": ticks,
            "victims": [asdict(v) for v in self.victims],
            "conflict_events": [list(e) for e in self.conflict_events],
            "supervisor_calls": [asdict(s) for s in self.supervisor_calls],
            "trajectories": {str(k): [list(c) for c in v] for k, v in sorted(self.trajectories.items())},
            "final_certainty": self.final_certainty,
            "final_obstacles_known": self.final_obstacles_known,
        }

    def canonical_json(self) -> str:
        """Machine-independent serialisation used for determinism checks."""
        return json.dumps(self.to_dict(wall_time=False), sort_keys=True, separators=(",", ":"))


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def run_csv_rows(record: RunRecord) -> list[list[str]]:
    return [[_fmt(getattr(t, c)) for c in RUN_COLUMNS] for t in record.ticks]


def victim_csv_rows(record: RunRecord) -> list[list[str]]:
    return [[_fmt(getattr(v, c)) for c in VICTIM_COLUMNS] for v in record.victims]


def write_csv(path: FilePath, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_run(record: RunRecord, out_dir: str | FilePath, stem: str | None = None) -> dict[str, FilePath]:
    """Write ``<stem>_run.csv``, ``<stem>_victims.csv`` and ``<stem>_record.json``."""
    out = FilePath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = record.config
    stem = stem or f"{cfg['name']}_{cfg['controller']}_s{cfg['seed']}"
    paths = {
        "run": out / f"{stem}_run.csv",
        "victims": out / f"{stem}_victims.csv",
        "record": out / f"{stem}_record.json",
    }
    write_csv(paths["run"], RUN_COLUMNS, run_csv_rows(record))
    write_csv(paths["victims"], VICTIM_COLUMNS, victim_csv_rows(record))
    with open(paths["record"], "w") as fh:
        json.dump(record.to_dict(), fh, indent=1, sort_keys=True)
    return paths
