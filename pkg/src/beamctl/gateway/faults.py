"""Random fault arrivals on the virtual clock.

Two independent Poisson processes (nonfatal: remote control lost until
reset; fatal: kernel halt) with day- and week-scale default rates.  The
processes run in virtual time, so week-scale behavior is testable in
milliseconds of wall time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..residents import rng_for

DAY = 86400.0
WEEK = 7 * DAY

KINDS = ("nonfatal", "fatal")


@dataclass(frozen=True)
class FaultModel:
    nonfatal_per_day: float = 1.0
    fatal_per_week: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.nonfatal_per_day < 0 or self.fatal_per_week < 0:
            raise ValueError("fault rates must be non-negative")

    def rate_per_second(self, kind: str) -> float:
        if kind == "nonfatal":
            return self.nonfatal_per_day / DAY
        if kind == "fatal":
            return self.fatal_per_week / WEEK
        raise ValueError(f"unknown fault kind {kind!r}")


class FaultProcess:
    """Stateful arrival streams; deterministic for a given model seed."""

    def __init__(self, model: FaultModel):
        self.model = model
        self._rngs = {k: rng_for(model.seed, "fault", k) for k in KINDS}
        self._next = {k: self._draw(k, 0.0) for k in KINDS}

    def _draw(self, kind: str, after: float) -> float:
        rate = self.model.rate_per_second(kind)
        if rate <= 0.0:
            return math.inf
        return after + self._rngs[kind].expovariate(rate)

    def next_time(self, kind: str) -> float:
        return self._next[kind]

    def consume(self, kind: str) -> float:
        """Acknowledge the pending arrival and draw the next one."""
        t = self._next[kind]
        self._next[kind] = self._draw(kind, t)
        return t

    def tick(self, now: float) -> list[str]:
        """All kinds with an arrival due at or before `now`, in time order.
        A kind may appear more than once."""
        due = []
        while True:
            kind = min(KINDS, key=lambda k: self._next[k])
            if self._next[kind] > now:
                return due
            self.consume(kind)
            due.append(kind)


def fault_tick(process: FaultProcess, now: float) -> list[str]:
    return process.tick(now)


class FaultDriver:
    """Arms the next arrivals as events on the supervisor's current sim,
    re-arming whenever a crash swaps the kernel out underneath."""

    def __init__(self, supervisor, model: FaultModel):
        self.supervisor = supervisor
        self.process = FaultProcess(model)
        self._armed_sim = None

    def ensure_armed(self) -> None:
        kernel = self.supervisor.kernel
        if kernel is None or kernel.sim is self._armed_sim:
            return
        self._armed_sim = kernel.sim
        for kind in KINDS:
            self._arm(kind)

    def _arm(self, kind: str) -> None:
        sim = self._armed_sim
        t = self.process.next_time(kind)
        if t == math.inf:
            return
        sim.call_at(max(t, sim.now), self._fire, kind, sim)

    def _fire(self, kind: str, sim) -> None:
        if sim is not self._armed_sim:
            return  # stale timer from a kernel that has been replaced
        self.process.consume(kind)
        self.supervisor.inject_fault(kind, after=0.0)
        self._arm(kind)
