"""Shared instrumentation counters.

Both evaluation engines and the spatial index report their work through one
Counters object so benchmark runs can compare paradigms by cost, not just by
wall time.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class Counters:
    index_probes: int = 0
    distance_evals: int = 0
    solutions: int = 0

    def reset(self) -> None:
        self.index_probes = 0
        self.distance_evals = 0
        self.solutions = 0

    def snapshot(self) -> dict[str, int]:
        return {
            "index_probes": self.index_probes,
            "distance_evals": self.distance_evals,
            "solutions": self.solutions,
        }
