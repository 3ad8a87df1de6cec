"""Work accounting shared by every solver pipeline.

Coordinate updates are the hardware-agnostic unit of work: one partial-gradient
evaluation (touching one row) costs 1, and any full-pass event (gradient
monitor, value evaluation over all rows) costs the current row count. All
pipelines charge through the same counter so their totals are comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class WorkCounter:
    coordinate_updates: float = 0.0
    sampled_rows: int = 0
    probe_solves: int = 0
    resample_rounds: int = 0
    clamp_flags: list = field(default_factory=list)

    def add_updates(self, n: float) -> None:
        self.coordinate_updates += float(n)

    def flag(self, name: str) -> None:
        if name not in self.clamp_flags:
            self.clamp_flags.append(name)
