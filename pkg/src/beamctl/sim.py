"""Deterministic discrete-event simulation core.

Everything in the kernel (residents, the script interpreter, the watchdog)
runs as cooperative tasks on one virtual clock.  Tasks are generators that
yield either a number of virtual seconds to sleep or a :class:`Waiter` to
park on until someone completes it.  Events at equal times fire in the
order they were scheduled, so a run is bit-reproducible.
"""

from __future__ import annotations

import heapq
import itertools
from typing import Any, Callable, Generator, Iterator


class SimError(Exception):
    pass


class Deadlock(SimError):
    """The event queue drained while a task was still being waited on."""


class Waiter:
    """One-shot wakeup handle.

    A task yields a Waiter to suspend; any other code (a timer, a database
    callback, another thread via the kernel lock) calls :meth:`complete`
    to resume it.  Only the first completion counts.
    """

    __slots__ = ("_sim", "_task", "done", "value")

    def __init__(self, sim: "Simulation"):
        self._sim = sim
        self._task: Task | None = None
        self.done = False
        self.value: Any = None

    def complete(self, value: Any = None) -> bool:
        if self.done:
            return False
        self.done = True
        self.value = value
        if self._task is not None:
            self._sim._schedule(self._sim.now, self._task._resume, value)
            self._task = None
        return True


class Task:
    """A running generator with its completion bookkeeping."""

    def __init__(self, sim: "Simulation", gen: Generator, name: str):
        self._sim = sim
        self._gen = gen
        self.name = name
        self.done = False
        self.result: Any = None
        self.error: BaseException | None = None

    def _resume(self, value: Any = None) -> None:
        if self.done:
            return
        try:
            yielded = self._gen.send(value)
        except StopIteration as stop:
            self.done = True
            self.result = stop.value
            return
        except BaseException as exc:  # noqa: BLE001 - stored and re-raised by the driver
            self.done = True
            self.error = exc
            return
        self._park(yielded)

    def _park(self, yielded: Any) -> None:
        sim = self._sim
        if isinstance(yielded, (int, float)):
            sim._schedule(sim.now + float(yielded), self._resume, None)
        elif isinstance(yielded, Waiter):
            if yielded.done:
                sim._schedule(sim.now, self._resume, yielded.value)
            else:
                yielded._task = self
        else:
            raise SimError(f"task {self.name!r} yielded {yielded!r}; "
                           "expected a delay or a Waiter")

    def cancel(self) -> None:
        if not self.done:
            self.done = True
            self._gen.close()


class Simulation:
    """Virtual clock plus an ordered event queue."""

    def __init__(self, start: float = 0.0):
        self.now = float(start)
        self._queue: list[tuple[float, int, Callable, tuple]] = []
        self._seq = itertools.count()
        self._tasks: list[Task] = []
        self._halt: BaseException | None = None

    # -- scheduling ------------------------------------------------------

    def _schedule(self, t: float, fn: Callable, *args: Any) -> None:
        heapq.heappush(self._queue, (t, next(self._seq), fn, args))

    def call_at(self, t: float, fn: Callable, *args: Any) -> None:
        if t < self.now:
            raise SimError(f"cannot schedule at {t} before now={self.now}")
        self._schedule(t, fn, *args)

    def call_after(self, delay: float, fn: Callable, *args: Any) -> None:
        self.call_at(self.now + delay, fn, *args)

    def waiter(self) -> Waiter:
        return Waiter(self)

    def timeout(self, delay: float, waiter: Waiter, value: Any = None) -> None:
        """Complete `waiter` with `value` after `delay` unless already done."""
        self.call_after(delay, waiter.complete, value)

    def spawn(self, gen: Generator, name: str = "task") -> Task:
        task = Task(self, gen, name)
        self._tasks.append(task)
        self._schedule(self.now, task._resume, None)
        return task

    # -- driving ---------------------------------------------------------

    def halt(self, exc: BaseException) -> None:
        """Abort the event loop: the next step raises `exc`."""
        self._halt = exc

    def step(self) -> bool:
        """Process one event.  Returns False when the queue is empty."""
        if self._halt is not None:
            exc, self._halt = self._halt, None
            raise exc
        if not self._queue:
            return False
        t, _, fn, args = heapq.heappop(self._queue)
        self.now = t
        fn(*args)
        return True

    def next_time(self) -> float | None:
        return self._queue[0][0] if self._queue else None

    def run_until_task(self, task: Task) -> Any:
        """Advance the simulation until `task` finishes; re-raise its error."""
        while not task.done:
            if not self.step():
                raise Deadlock(f"event queue drained while {task.name!r} pending")
        if task.error is not None:
            raise task.error
        return task.result

    def run_until_idle(self) -> None:
        while self.step():
            pass

    def advance_to(self, t: float) -> None:
        """Run all events up to time `t`, then set the clock to `t`."""
        while self._queue and self._queue[0][0] <= t:
            if not self.step():
                break
        if t < self.now:
            raise SimError("advance_to cannot move the clock backwards")
        self.now = t

    def drain_due(self) -> None:
        """Run events due at the current instant without advancing the clock."""
        while (self._halt is not None
               or (self._queue and self._queue[0][0] <= self.now)):
            self.step()

    # -- lifecycle -------------------------------------------------------

    def discard(self) -> None:
        """Drop every pending event and cancel every task (crash semantics)."""
        self._queue.clear()
        for task in self._tasks:
            task.cancel()
        self._tasks.clear()
        self._halt = None

    def rewind(self, t: float) -> None:
        """Set the clock, forwards or backwards.  Queue must be empty."""
        if self._queue:
            raise SimError("rewind with pending events")
        self.now = float(t)
