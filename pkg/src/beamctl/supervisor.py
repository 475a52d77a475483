"""Watchdog and crash recovery.

Detects a halted kernel via missed heartbeats, simulates the fixed reboot
delay, rebuilds a kernel from the recovery snapshot, and resumes the
measurement script from its most recent checkpoint.

Recovery model: every checkpoint completion stores an anchor inside the
database itself (/script/resume/image = full snapshot text, /index,
/time), and every completed statement persists the whole database to the
recovery slot.  Restart restores the slot, then restores the embedded
anchor image and rewinds the virtual clock to the anchor instant, so the
re-executed tail of the run is byte-identical to an uninterrupted one.

Files: recovery slot `state/recovery.snix` (snapshot format), event log
`state/supervisor.log` as `<iso8601>\t<event>` lines.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .kernel import Kernel, KernelConfig, KernelCrashed
from .rtdb import FormatError, Snapshot, iso_time
from .script import env_from_db, resume_point

RESTART_DELAY = 1.6  # simulated reboot time, seconds


class UnknownComponent(Exception):
    pass


class RestoreFailed(Exception):
    pass


class WatchdogState:
    """Heartbeat deadlines per component, in virtual time."""

    def __init__(self, timeout: float = 5.0, restart_delay: float = RESTART_DELAY):
        if timeout <= 0:
            raise ValueError("timeout must be positive")
        self.timeout = timeout
        self.restart_delay = restart_delay
        self.deadlines: dict[str, float] = {}
        self.crash_count = 0

    def register(self, component: str, now: float) -> None:
        self.deadlines[component] = now + self.timeout

    def heartbeat(self, component: str, now: float) -> None:
        if component not in self.deadlines:
            raise UnknownComponent(component)
        self.deadlines[component] = now + self.timeout

    def check(self, now: float) -> list[str]:
        """Names of hung components; empty means healthy."""
        return [c for c, d in sorted(self.deadlines.items()) if now > d]

    def next_deadline(self) -> float:
        return min(self.deadlines.values())

    def mark_crash(self) -> None:
        self.crash_count += 1


class RecoverySlot:
    """Single snapshot file, replaced atomically (write-new-then-rename)."""

    def __init__(self, path: Path):
        self.path = Path(path)

    def write(self, text: str) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_name(self.path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path)

    def read(self) -> str | None:
        try:
            return self.path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return None


@dataclass(frozen=True)
class RestartPlan:
    snapshot: Snapshot
    source_hash: str
    resume_index: int


class Supervisor:
    """Owns the kernel lifecycle: boot, crash handling, resume."""

    def __init__(self, workdir, config: KernelConfig | None = None,
                 restart_delay: float = RESTART_DELAY):
        self.workdir = Path(workdir)
        self.config = config or KernelConfig()
        self.watchdog = WatchdogState(self.config.watchdog_timeout, restart_delay)
        self.slot = RecoverySlot(self.workdir / "state" / "recovery.snix")
        self.log_path = self.workdir / "state" / "supervisor.log"
        self.kernel: Kernel | None = None
        self.source: str | None = None
        self.task = None
        self.restarts: list[RestartPlan] = []

    # -- logging --

    def log(self, time: float, event: str) -> None:
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(f"{iso_time(time)}\t{event}\n")

    # -- lifecycle --

    def boot(self, clock_start: float = 0.0) -> Kernel:
        self.kernel = Kernel(self.workdir, self.config, self.watchdog,
                             clock_start=clock_start)
        self.kernel.snapshot_sink = self.slot.write
        self.kernel.boot()
        self.log(self.kernel.sim.now, "boot")
        return self.kernel

    def inject_fault(self, kind: str, after: float = 0.0) -> None:
        """nonfatal: block gateway I/O only; fatal: halt the kernel."""
        if self.kernel is None:
            self.boot()
        kernel = self.kernel
        self.log(kernel.sim.now, f"fault_injected kind={kind} after={after!r}")
        if kind == "nonfatal":
            kernel.sim.call_after(after, self._block_gateway)
        elif kind == "fatal":
            kernel.sim.call_after(after, kernel.crash, "fatal")
        else:
            raise ValueError(f"unknown fault kind {kind!r}")

    def _block_gateway(self) -> None:
        self.kernel.gateway_blocked = True

    def clear_nonfatal(self) -> None:
        self.kernel.gateway_blocked = False

    # -- running scripts with crash recovery --

    def start_source(self, source: str):
        """Load a script and launch its run task without driving it."""
        if self.kernel is None:
            self.boot()
        self.source = source
        self.kernel.load_program(source)
        self.task = self.kernel.start_run(from_index=0, initial_anchor=True)
        # seed the recovery slot before the first statement completes, so a
        # crash at t=0 never replays a slot left over from an earlier run
        self.kernel.persist_state()
        return self.task

    def _finish_run(self) -> str:
        task, self.task = self.task, None
        if task.error is not None:
            raise task.error
        state = task.result
        self.kernel.persist_state()
        self.log(self.kernel.sim.now, f"run_{state.status}")
        return state.status

    def run_source(self, source: str) -> str:
        """Execute a script to a terminal state, recovering from any number
        of injected fatal faults along the way.  Returns the final status."""
        self.start_source(source)
        while True:
            try:
                self.kernel.sim.run_until_task(self.task)
                return self._finish_run()
            except KernelCrashed as crash:
                self.task = self._handle_crash(crash)
                if self.task is None:
                    return self.kernel.db.get_text("/script/status", "aborted")

    def pump(self, max_events: int = 500) -> str | None:
        """Advance an in-flight run a bounded amount; non-blocking.

        While the script waits on an operator (question pending or hold
        flag set) or no run is active, only events due at the current
        instant fire, so virtual time never races ahead of the operator.
        Returns the terminal status when the run just ended, else None.
        """
        if self.kernel is None:
            self.boot()
        sim = self.kernel.sim
        try:
            if self.task is None or self._operator_gated():
                sim.drain_due()
            else:
                for _ in range(max_events):
                    if self.task.done or self._operator_gated():
                        break
                    if not sim.step():
                        break
        except KernelCrashed as crash:
            self.task = self._handle_crash(crash)
            if self.task is None:
                return self.kernel.db.get_text("/script/status", "aborted")
            return None
        if self.task is not None and self.task.done:
            return self._finish_run()
        return None

    def _operator_gated(self) -> bool:
        db = self.kernel.db
        return (db.get_text("/script/status", "") == "waiting"
                or db.get_int("/script/hold", 0) == 1)

    def stop_run(self, reason: str = "operator stop") -> None:
        """Abort the in-flight run; residents keep running."""
        if self.task is None or self.task.done:
            return
        self.task.cancel()
        self.task = None
        interp = self.kernel.interpreter
        interp.state.status = "aborted"
        interp.state.abort_reason = reason
        interp.mirror_status()
        self.kernel.persist_state()
        self.log(self.kernel.sim.now, "run_aborted")

    def _handle_crash(self, crash: KernelCrashed):
        """Tear down, wait out the reboot, restore, resume.  Returns the new
        run task, or None when the restored state is already terminal."""
        kernel = self.kernel
        t_crash = kernel.sim.now
        t_detect = max(t_crash, self.watchdog.next_deadline())
        self.watchdog.mark_crash()
        self.log(t_detect, f"crash_detected kind={crash.kind} at={iso_time(t_crash)}")
        self.log(t_detect, "restart_begin")
        t_up = t_detect + self.watchdog.restart_delay
        self.log(t_up, f"restart_complete delay={self.watchdog.restart_delay!r}")
        kernel.shutdown()

        slot_text = self.slot.read()
        if slot_text is None:
            # crashed before the first statement ever completed: cold rerun
            self.log(t_up, "no_recovery_slot cold_start")
            self.boot(clock_start=t_up)
            if self.source is None:
                return None
            self.kernel.load_program(self.source)
            return self.kernel.start_run(from_index=0, initial_anchor=True)

        try:
            snapshot = Snapshot.from_text(slot_text)
        except FormatError as exc:
            self.log(t_up, f"restore_failed {exc}")
            self.boot(clock_start=t_up)
            self.kernel.db.set_var("/script/status", "aborted", "supervisor")
            self.kernel.db.set_var("/script/abort_reason",
                                   f"recovery snapshot unreadable: {exc}",
                                   "supervisor")
            return None

        # stage 1: restore the slot to find out where the run stood
        self.kernel = Kernel(self.workdir, self.config, self.watchdog,
                             clock_start=t_up)
        self.kernel.snapshot_sink = self.slot.write
        self.kernel.db.restore_snapshot(snapshot)
        status = self.kernel.db.get_text("/script/status", "idle")
        if status in ("finished", "aborted", "idle"):
            self.log(t_up, f"resume_skipped status={status}")
            self.kernel.boot()
            return None

        # stage 2: rewind to the embedded checkpoint anchor and re-execute
        image = self.kernel.db.get_text("/script/resume/image")
        index = self.kernel.db.get_int("/script/resume/index")
        t_anchor = self.kernel.db.get_real("/script/resume/time")
        last_completed = self.kernel.db.get_int("/script/last_completed")
        try:
            self.kernel.db.restore_snapshot(Snapshot.from_text(image))
        except FormatError as exc:
            raise RestoreFailed(str(exc)) from exc
        self.kernel.db.set_var("/script/resume/image", image, "supervisor")
        self.kernel.db.set_var("/script/resume/index", index, "supervisor")
        self.kernel.db.set_var("/script/resume/time", t_anchor, "supervisor")
        self.kernel.sim.rewind(t_anchor)
        self.kernel.boot()
        program = self.kernel.adopt_program()
        plan = RestartPlan(snapshot, program.source_hash, index)
        expected = resume_point(
            program, None if last_completed < 0 else last_completed)
        if plan.resume_index != expected:
            raise RestoreFailed(
                f"anchor index {plan.resume_index} != resume point {expected}")
        self.restarts.append(plan)
        self.log(t_anchor, f"resume index={index}")
        env = env_from_db(self.kernel.db)
        return self.kernel.start_run(from_index=index, env=env,
                                     initial_anchor=False)
