"""Measurement kernel: one simulation hosting the database, the residents,
and the script interpreter, glued together by the device-dispatch engine.

A kernel instance is disposable: a simulated fatal fault halts its event
loop mid-flight and the supervisor builds a fresh kernel from the recovery
snapshot.  All durable state lives in the database (and is mirrored there
by every component), never in kernel attributes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

from . import residents as res
from .rtdb import Rtdb
from .script import DispatchError, Interpreter, Program, parse
from .sim import Simulation


class KernelCrashed(Exception):
    """Simulated fatal fault: the kernel event loop halted."""

    def __init__(self, kind: str = "fatal"):
        super().__init__(kind)
        self.kind = kind


class EngineFailure(Exception):
    """A device reported an error status for a dispatched command."""


_TIMED_OUT = object()


@dataclass
class KernelConfig:
    seed: int = 0
    shutters: tuple = ("vanady1_1det", "vanady1_2det",
                       "vanady2_1det", "vanady2_2det")
    sample_table: int = 12
    motor_speed: float = 2.0
    shutter_travel: float = 0.5
    temp_tau: float = 5.0
    temp_initial: float = 20.0
    temp_timeout: float = 3600.0
    daq_channels: int = 1024
    daq_sweep: float = 0.1
    daq_monitor_rate: float = 1000.0
    daq_event_rate: float = 3000.0
    daq_peak_center: float = 256.0
    daq_peak_sigma: float = 24.0
    daq_bg_fraction: float = 0.15
    envmon_period: float = 1.0
    heartbeat_interval: float = 1.0
    watchdog_timeout: float = 5.0
    device_timeout: float = 7200.0
    extra: dict = field(default_factory=dict)

    def descriptors(self) -> list[res.DeviceDescriptor]:
        return [
            res.DeviceDescriptor("Motor", "motor", "/motor",
                                 {"speed": self.motor_speed}),
            res.DeviceDescriptor("Shut", "shutter", "/shutter",
                                 {"shutters": tuple(self.shutters),
                                  "travel": self.shutter_travel}),
            res.DeviceDescriptor("Temp", "temp", "/temp",
                                 {"tau": self.temp_tau,
                                  "initial": self.temp_initial,
                                  "timeout": self.temp_timeout}),
            res.DeviceDescriptor("Tofa", "daq", "/daq",
                                 {"channels": self.daq_channels,
                                  "sweep": self.daq_sweep,
                                  "monitor_rate": self.daq_monitor_rate,
                                  "event_rate": self.daq_event_rate,
                                  "peak_center": self.daq_peak_center,
                                  "peak_sigma": self.daq_peak_sigma,
                                  "bg_fraction": self.daq_bg_fraction}),
            res.DeviceDescriptor("Unipa", "envmon", "/unipa",
                                 {"period": self.envmon_period}),
        ]


class KernelEngine:
    """Dispatches device commands and macro calls for the interpreter."""

    def __init__(self, kernel: "Kernel"):
        self.kernel = kernel
        self._seq = itertools.count(1)

    @property
    def db(self):
        return self.kernel.db

    @property
    def sim(self):
        return self.kernel.sim

    @property
    def config(self):
        return self.kernel.config

    def resident_names(self) -> list[str]:
        return list(self.kernel.residents)

    def try_device(self, name: str, command: str, *args,
                   timeout: float | None = None):
        """Send one command; returns the status text, or None on timeout."""
        resident = self.kernel.residents.get(name)
        if resident is None:
            raise DispatchError(f"unknown device {name!r}")
        seq = next(self._seq)
        waiter = self.sim.waiter()

        def on_done(entry):
            if entry.value.data == seq:
                waiter.complete(None)

        cancel = self.db.watch(resident.ns + "/done", on_done)
        try:
            payload = res.ARG_SEP.join(str(a) for a in args)
            self.db.set_var(resident.ns + "/cmd",
                            f"{seq}|{command}|{payload}", "engine")
            if timeout is not None:
                self.sim.timeout(timeout, waiter, _TIMED_OUT)
            got = yield waiter
        finally:
            cancel()
        if got is _TIMED_OUT:
            return None
        return self.db.get_text(resident.ns + "/status")

    def device(self, name: str, command: str, *args):
        """Send one command; raise EngineFailure on an error status."""
        status = yield from self.try_device(
            name, command, *args, timeout=self.config.device_timeout)
        if status is None:
            raise EngineFailure(f"{name}: {command} timed out")
        if status.startswith("error"):
            raise EngineFailure(f"{name}: {status}")
        return status

    # interpreter-facing hooks

    def device_task(self, device: str, command: str, args: list[str]):
        yield from self.device(device, command, *args)

    def macro_task(self, name: str, args: list[str]):
        fn = res.MACROS.get(name)
        if fn is None:
            raise DispatchError(f"unknown macro {name!r}")
        yield from fn(self, args)


class Kernel:
    def __init__(self, workdir, config: KernelConfig | None = None,
                 watchdog=None, clock_start: float = 0.0):
        self.workdir = Path(workdir)
        self.config = config or KernelConfig()
        self.watchdog = watchdog
        self.sim = Simulation(clock_start)
        self.db = Rtdb(clock=lambda: self.sim.now)
        self.engine = KernelEngine(self)
        self.residents: dict[str, res.Resident] = {}
        self.interpreter: Interpreter | None = None
        self.program: Program | None = None
        self.gateway_blocked = False
        self.snapshot_sink = None  # callable(text) persisting recovery images
        self.statement_hook = None  # callable(index, stmt), test/UI tap

    # -- lifecycle --

    def boot(self) -> None:
        """Launch residents and the heartbeat from current database state."""
        self.workdir.mkdir(parents=True, exist_ok=True)
        if self.db.try_get("/run/seed") is None:
            self.db.set_var("/run/seed", self.config.seed, "kernel")
        for desc in self.config.descriptors():
            resident = res.build_resident(desc, self.sim, self.db, self.workdir)
            resident.launch()
            self.residents[desc.name] = resident
        if self.watchdog is not None:
            self.watchdog.register("kernel", self.sim.now)
            self.sim.spawn(self._heartbeat_task(), name="heartbeat")

    def _heartbeat_task(self):
        while True:
            self.watchdog.heartbeat("kernel", self.sim.now)
            yield self.config.heartbeat_interval

    def shutdown(self) -> None:
        for resident in self.residents.values():
            resident.shutdown()
        self.residents.clear()
        self.sim.discard()

    def crash(self, kind: str = "fatal") -> None:
        """Halt the event loop at the next step, as a hardware fault would."""
        self.sim.halt(KernelCrashed(kind))

    # -- programs --

    def load_program(self, source: str) -> Program:
        program = parse(source)
        self.program = program
        self.db.set_var("/script/source", source, "kernel")
        self.db.set_var("/script/source_hash", program.source_hash, "kernel")
        self.db.set_var("/script/status", "idle", "kernel")
        self.db.set_var("/script/last_completed", -1, "kernel")
        return program

    def adopt_program(self) -> Program:
        """Re-parse the script stored in the database (after a restore)."""
        source = self.db.get_text("/script/source")
        program = parse(source)
        stored = self.db.get_text("/script/source_hash", "")
        if stored and stored != program.source_hash:
            raise ValueError("script source does not match its stored digest")
        self.program = program
        return program

    def start_run(self, from_index: int = 0, env: dict | None = None,
                  initial_anchor: bool = True):
        """Spawn the interpreter task; returns the sim Task to drive."""
        if self.program is None:
            raise ValueError("no program loaded")
        self.interpreter = Interpreter(
            self.program, self.sim, self.db, self.engine, env=env,
            on_statement_done=self._on_statement_done,
            on_checkpoint=self._on_checkpoint)
        # mark the run live before the task's first step, so any state
        # persisted from here on is recognized as resumable
        self.interpreter.state.status = "running"
        self.interpreter.mirror_status()
        if initial_anchor:
            self._capture_anchor(from_index)
        return self.sim.spawn(self.interpreter.run_task(from_index),
                              name="script-run")

    # -- recovery anchors --

    def _capture_anchor(self, index: int) -> None:
        """Freeze the whole database (sans the anchor itself) plus the clock;
        restoring this image and rewinding to /script/resume/time replays
        the run bit-exactly from statement `index`."""
        image = self.db.save_snapshot(exclude_prefix="/script/resume").to_text()
        self.db.set_var("/script/resume/image", image, "kernel")
        self.db.set_var("/script/resume/index", index, "kernel")
        self.db.set_var("/script/resume/time", self.sim.now, "kernel")

    def _on_checkpoint(self, index: int, ordinal: int) -> None:
        self._capture_anchor(index)

    def _on_statement_done(self, index: int, stmt) -> None:
        if self.watchdog is not None:
            self.watchdog.heartbeat("kernel", self.sim.now)
        if self.snapshot_sink is not None:
            self.snapshot_sink(self.db.save_snapshot().to_text())
        if self.statement_hook is not None:
            self.statement_hook(index, stmt)

    def persist_state(self) -> None:
        if self.snapshot_sink is not None:
            self.snapshot_sink(self.db.save_snapshot().to_text())

    # -- operator conveniences --

    def answer(self, value: str) -> None:
        if self.interpreter is None:
            raise DispatchError("no run in progress")
        self.interpreter.answer(value)

    def spectrum(self):
        daq: res.DaqResident = self.residents["Tofa"]
        return daq.spectrum()
