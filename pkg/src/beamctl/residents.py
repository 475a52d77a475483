"""Simulated device daemons and the instrument macro-command library.

Each resident is one simulation task serving commands written to
`<namespace>/cmd` in the database and publishing results back as
variables.  Residents are constructed with a database handle, the
simulation, and a seeded RNG factory only; by construction they cannot
reach the gateway or any network.

Command wire form on `<ns>/cmd`:  `<seq>|<command>|<arg1>\\x1f<arg2>...`
The resident answers by setting `<ns>/status` (either "ok ..." or
"error: ...") and then `<ns>/done` = seq.

Protocol files are UTF-8 lines `<iso8601>\t<device>\t<event>`.
Spectrum files `<base>.dat`: line 1 `HIST1 <ndims> <d1> [d2 d3]`,
line 2 `monitor=<n> live_time=<s>`, then one count per line, row-major.
"""

from __future__ import annotations

import hashlib
import math
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rtdb import iso_time

ARG_SEP = "\x1f"


class ResidentError(Exception):
    pass


class IoError(ResidentError):
    pass


class UnknownShutter(ResidentError):
    pass


class Busy(ResidentError):
    pass


class NoFile(ResidentError):
    pass


class AlreadyRunning(ResidentError):
    pass


class Timeout(ResidentError):
    pass


# -- deterministic sampling ------------------------------------------------
# Own fixed samplers over Random.random() so that streams are reproducible
# regardless of interpreter version or platform.


def rng_for(seed: int, *parts: str) -> random.Random:
    """Independent named random stream, keyed by (seed, *parts)."""
    key = "|".join([str(seed), *parts]).encode("utf-8")
    return random.Random(int.from_bytes(hashlib.sha256(key).digest()[:8], "big"))


def poisson(rng: random.Random, lam: float) -> int:
    if lam <= 0.0:
        return 0
    n = 0
    while lam > 400.0:  # keep exp(-lam) well above underflow
        n += poisson(rng, 400.0)
        lam -= 400.0
    threshold = math.exp(-lam)
    k = 0
    p = 1.0
    while True:
        k += 1
        p *= rng.random()
        if p <= threshold:
            return n + k - 1


def gauss(rng: random.Random) -> float:
    u1 = 1.0 - rng.random()
    u2 = rng.random()
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


# -- histograms ------------------------------------------------------------


@dataclass
class Histogram:
    """n-dimensional detector counts, flat row-major uint64."""

    dims: tuple
    counts: np.ndarray
    monitor: int
    live_time: float

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.uint64).ravel()
        if self.counts.size != int(np.prod(self.dims, dtype=np.int64)):
            raise ValueError("counts length does not match dims")

    def total(self) -> int:
        return int(self.counts.sum())

    def to_dat_text(self) -> str:
        head = f"HIST1 {len(self.dims)} " + " ".join(str(d) for d in self.dims)
        meta = f"monitor={self.monitor} live_time={self.live_time!r}"
        body = "\n".join(str(int(c)) for c in self.counts)
        return head + "\n" + meta + ("\n" + body if self.counts.size else "") + "\n"

    @classmethod
    def from_dat_text(cls, text: str) -> "Histogram":
        lines = text.strip("\n").split("\n")
        head = lines[0].split()
        if head[0] != "HIST1":
            raise ValueError(f"bad spectrum header {lines[0]!r}")
        ndims = int(head[1])
        dims = tuple(int(d) for d in head[2:2 + ndims])
        meta = dict(kv.split("=", 1) for kv in lines[1].split())
        counts = np.array([int(x) for x in lines[2:]], dtype=np.uint64)
        return cls(dims, counts, int(meta["monitor"]), float(meta["live_time"]))


def synthetic_psd(seed: int, dims=(64, 64, 256), events: int = 200000) -> Histogram:
    """Deterministic PSD-like test pattern: one 3-d Gaussian blob on a
    flat background, Poisson-free (exactly `events` counts)."""
    rng = rng_for(seed, "psd", "x".join(str(d) for d in dims), str(events))
    counts = np.zeros(int(np.prod(dims, dtype=np.int64)), dtype=np.uint64)
    centers = [d / 2.0 for d in dims]
    sigmas = [max(d / 8.0, 1.0) for d in dims]
    for _ in range(events):
        if rng.random() < 0.1:
            idx = [int(rng.random() * d) for d in dims]
        else:
            idx = []
            for c, s, d in zip(centers, sigmas, dims):
                v = int(math.floor(c + s * gauss(rng)))
                idx.append(min(max(v, 0), d - 1))
        flat = 0
        for v, d in zip(idx, dims):
            flat = flat * d + v
        counts[flat] += 1
    return Histogram(tuple(dims), counts, monitor=max(events // 3, 1),
                     live_time=120.0)


# -- protocol files ----------------------------------------------------------


class ProtocolWriter:
    """Append-only, per-device measurement log with explicit open/truncate.

    The open path is mirrored to /prot/<device>/path so a relaunched
    resident reattaches (in append mode) from database state alone.
    """

    def __init__(self, device: str, workdir: Path, db, clock):
        self.device = device
        self.workdir = Path(workdir)
        self.db = db
        self.clock = clock
        self.path_var = f"/prot/{device.lower()}/path"
        self._fh = None

    def reattach(self) -> None:
        rel = self.db.get_text(self.path_var, "")
        if rel:
            full = self.workdir / rel
            full.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(full, "a", encoding="utf-8")

    def open(self, rel_path: str) -> None:
        full = self.workdir / rel_path
        try:
            full.parent.mkdir(parents=True, exist_ok=True)
            fh = open(full, "w", encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot open protocol {rel_path}: {exc}") from exc
        if self._fh:
            self._fh.close()
        self._fh = fh
        self.db.set_var(self.path_var, rel_path, self.device)
        self.record(f"protocol opened {rel_path}")

    def record(self, event: str) -> None:
        if self._fh is None:
            return
        self._fh.write(f"{iso_time(self.clock())}\t{self.device}\t{event}\n")
        self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


# -- residents ---------------------------------------------------------------


@dataclass(frozen=True)
class DeviceDescriptor:
    name: str
    kind: str  # motor | shutter | temp | daq | envmon
    namespace: str
    params: dict = field(default_factory=dict)


class Resident:
    """Base resident: command loop plus optional timed work."""

    def __init__(self, desc: DeviceDescriptor, sim, db, workdir: Path):
        self.desc = desc
        self.sim = sim
        self.db = db
        self.ns = desc.namespace
        self.params = desc.params
        self.prot = ProtocolWriter(desc.name, workdir, db, clock=lambda: sim.now)
        self.workdir = Path(workdir)
        self._queue = deque()
        self._wake = None
        self._unwatch = None
        self.task = None

    # lifecycle

    def launch(self) -> None:
        self.prot.reattach()
        self.restore_defaults()
        self._unwatch = self.db.watch(self.ns + "/cmd", self._on_cmd)
        self.task = self.sim.spawn(self._loop(), name=f"resident:{self.desc.name}")

    def shutdown(self) -> None:
        if self._unwatch:
            self._unwatch()
            self._unwatch = None
        if self.task:
            self.task.cancel()
            self.task = None
        self.prot.close()

    def restore_defaults(self) -> None:
        """Fill namespace variables that do not exist yet; never overwrite."""

    def _default(self, rel_path: str, value) -> None:
        if self.db.try_get(self.ns + rel_path) is None:
            self.db.set_var(self.ns + rel_path, value, self.desc.name)

    # command plumbing

    def _on_cmd(self, entry) -> None:
        raw = entry.value.data
        seq_text, _, rest = raw.partition("|")
        command, _, arg_text = rest.partition("|")
        args = arg_text.split(ARG_SEP) if arg_text else []
        self._queue.append((int(seq_text), command, args))
        if self._wake is not None:
            self._wake.complete(None)

    def _loop(self):
        put = lambda p, v: self.db.set_var(self.ns + p, v, self.desc.name)
        while True:
            # timed work first so that, on a tie, periodic records always
            # precede command records regardless of event arrival order
            yield from self.periodic_task()
            if self._queue:
                seq, command, args = self._queue.popleft()
                put("/busy", 1)
                try:
                    status = yield from self.dispatch(command, args)
                    status = status or "ok"
                except ResidentError as exc:
                    status = f"error: {exc}"
                put("/busy", 0)
                put("/status", status)
                put("/done", seq)
                continue
            self._wake = self.sim.waiter()
            deadline = self.next_deadline()
            if deadline is not None:
                self.sim.timeout(max(0.0, deadline - self.sim.now), self._wake)
            yield self._wake
            self._wake = None

    def periodic_task(self):
        yield from ()

    def next_deadline(self):
        return None

    # commands common to every device

    def dispatch(self, command: str, args: list[str]):
        if command == "ping":
            return "ok pong"
            yield  # pragma: no cover
        if command == "open_prot":
            rel = args[0] if args else f"prot/{self.desc.name.lower()}.txt"
            self.prot.open(rel)
            return "ok"
            yield  # pragma: no cover
        if command == "note":
            self.prot.record(" ".join(args))
            return "ok"
            yield  # pragma: no cover
        raise ResidentError(f"unknown command {command}")
        yield  # pragma: no cover


class MotorResident(Resident):
    """Sample changer axis: constant-speed moves, position in the db."""

    def restore_defaults(self):
        self._default("/pos/value", 0.0)
        self._default("/speed", float(self.params.get("speed", 2.0)))

    def dispatch(self, command, args):
        if command == "getpos":
            pos = self.db.get_real(self.ns + "/pos/value")
            self.db.set_var(self.ns + "/pos/value", pos, self.desc.name)
            self.db.set_var(self.ns + "/pos/at", iso_time(self.sim.now),
                            self.desc.name)
            self.prot.record(f"pos={pos!r}")
            return f"ok {pos!r}"
        if command == "move":
            if not args:
                raise ResidentError("usage: move <target>")
            target = float(args[0])
            pos = self.db.get_real(self.ns + "/pos/value")
            speed = self.db.get_real(self.ns + "/speed")
            travel = abs(target - pos) / speed
            if travel > 0.0:
                yield travel
            self.db.set_var(self.ns + "/pos/value", target, self.desc.name)
            self.prot.record(f"moved to {target!r}")
            return f"ok {target!r}"
        status = yield from super().dispatch(command, args)
        return status


class ShutterResident(Resident):
    """Bank of beam shutters; each is inbeam or outbeam, default outbeam."""

    def restore_defaults(self):
        for sid in self.params.get("shutters", ()):
            self._default(f"/{sid}/pos", "outbeam")

    def _known(self, sid: str) -> bool:
        return sid in self.params.get("shutters", ())

    def dispatch(self, command, args):
        if command == "set":
            if len(args) != 2:
                raise ResidentError("usage: set <id> <inbeam|outbeam>")
            sid, target = args
            if not self._known(sid):
                raise UnknownShutter(sid)
            if target not in ("inbeam", "outbeam"):
                raise ResidentError(f"bad position {target}")
            current = self.db.get_text(f"{self.ns}/{sid}/pos")
            if current == target:
                return f"ok {sid} already {target}"
            yield float(self.params.get("travel", 0.5))
            self.db.set_var(f"{self.ns}/{sid}/pos", target, self.desc.name)
            self.prot.record(f"{sid} -> {target}")
            return f"ok {sid} {target}"
        status = yield from super().dispatch(command, args)
        return status


class TempResident(Resident):
    """First-order-lag temperature controller.

    T(t) = setpoint + (anchor_value - setpoint) * exp(-(t - anchor_t)/tau).
    The anchor triple lives in the db, so the trajectory survives snapshot
    restore bit-exactly.
    """

    def restore_defaults(self):
        initial = float(self.params.get("initial", 20.0))
        self._default("/setpoint", initial)
        self._default("/anchor_value", initial)
        self._default("/anchor_t", self.sim.now)
        self._default("/value", initial)
        self._default("/stable", 0)
        self._default("/tau", float(self.params.get("tau", 5.0)))

    def temperature(self, at: float | None = None) -> float:
        now = self.sim.now if at is None else at
        sp = self.db.get_real(self.ns + "/setpoint")
        t0 = self.db.get_real(self.ns + "/anchor_t")
        v0 = self.db.get_real(self.ns + "/anchor_value")
        tau = self.db.get_real(self.ns + "/tau")
        return sp + (v0 - sp) * math.exp(-(now - t0) / tau)

    def _retarget(self, setpoint: float) -> None:
        current = self.temperature()
        name = self.desc.name
        self.db.set_var(self.ns + "/anchor_value", current, name)
        self.db.set_var(self.ns + "/anchor_t", self.sim.now, name)
        self.db.set_var(self.ns + "/setpoint", setpoint, name)
        self.db.set_var(self.ns + "/value", current, name)
        self.db.set_var(self.ns + "/stable", 0, name)

    def dispatch(self, command, args):
        if command == "set":
            if not args:
                raise ResidentError("usage: set <setpoint>")
            self._retarget(float(args[0]))
            return "ok"
        if command == "getval":
            value = self.temperature()
            self.db.set_var(self.ns + "/value", value, self.desc.name)
            return f"ok {value!r}"
        if command == "ist":
            if len(args) != 4:
                raise ResidentError("usage: ist <tol> <hold> <name> <setpoint>")
            tol, hold = float(args[0]), float(args[1])
            run_name, setpoint = args[2], float(args[3])
            if tol <= 0.0:
                raise ResidentError("tol must be positive")
            if hold < 0.0:
                raise ResidentError("hold must be non-negative")
            cap = float(self.params.get("timeout", 3600.0))
            self._retarget(setpoint)
            self.prot.record(f"ist {run_name} target={setpoint!r} tol={tol!r}")
            start = self.sim.now
            delta = abs(self.db.get_real(self.ns + "/anchor_value") - setpoint)
            tau = self.db.get_real(self.ns + "/tau")
            # first-order decay is monotone: once inside the band it stays,
            # so the settle instant has a closed form
            settle = 0.0 if delta <= tol else tau * math.log(delta / tol)
            if settle + hold > cap:
                yield cap
                raise Timeout(f"no convergence within {cap!r}s")
            if settle > 0.0:
                yield settle
            if hold > 0.0:
                yield hold
            value = self.temperature()
            self.db.set_var(self.ns + "/value", value, self.desc.name)
            self.db.set_var(self.ns + "/stable", 1, self.desc.name)
            self.prot.record(
                f"stable {run_name} at {value!r} after {self.sim.now - start!r}s")
            return f"ok {value!r}"
        status = yield from super().dispatch(command, args)
        return status


class DaqResident(Resident):
    """Time-of-flight histogramming detector acquisition.

    Synthetic events: flat background fraction plus one Gaussian peak over
    the channel axis, sampled sweep by sweep from named RNG streams keyed
    (run seed, device, file base, tag, sweep index).
    """

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.last_histogram: Histogram | None = None
        self.memory: np.ndarray | None = None  # live counts during a run

    def restore_defaults(self):
        self._default("/file", "")
        self._default("/tag", "")
        self._default("/state", "idle")
        self._default("/monitor", 0)
        self._default("/live_time", 0.0)
        self._default("/gate/temperature", 1)

    def _wait_gates(self):
        if self.db.get_int(self.ns + "/gate/temperature", 1) != 1:
            return
        waited = False
        while self.db.get_int("/temp/stable", 0) != 1:
            if not waited:
                self.prot.record("acquisition gated on temperature")
                waited = True
            waiter = self.sim.waiter()
            cancel = self.db.watch("/temp/stable", lambda e: waiter.complete(None))
            yield waiter
            cancel()

    def dispatch(self, command, args):
        name = self.desc.name
        if command == "file":
            if not args:
                raise ResidentError("usage: file <base>")
            self.db.set_var(self.ns + "/file", args[0], name)
            return "ok"
        if command == "tag":
            self.db.set_var(self.ns + "/tag", args[0] if args else "", name)
            return "ok"
        if command in ("flagoff", "flagon"):
            if not args:
                raise ResidentError(f"usage: {command} <flag>")
            self.db.set_var(f"{self.ns}/gate/{args[0]}",
                            1 if command == "flagon" else 0, name)
            return "ok"
        if command == "stop":
            self.db.set_var(self.ns + "/state", "idle", name)
            return "ok"
        if command == "start":
            if len(args) != 2:
                raise ResidentError("usage: start <count_limit> <time_limit>")
            count_limit, time_limit = int(float(args[0])), float(args[1])
            if self.db.get_text(self.ns + "/state") == "running":
                raise Busy("acquisition already running")
            base = self.db.get_text(self.ns + "/file")
            if not base:
                raise NoFile("no spectrum file set")
            yield from self._wait_gates()
            yield from self._acquire(base, count_limit, time_limit)
            return "ok"
        status = yield from super().dispatch(command, args)
        return status

    def _acquire(self, base: str, count_limit: int, time_limit: float):
        name = self.desc.name
        tag = self.db.get_text(self.ns + "/tag", "")
        seed = self.db.get_int("/run/seed", 0)
        channels = int(self.params.get("channels", 1024))
        sweep_dt = float(self.params.get("sweep", 0.1))
        monitor_rate = float(self.params.get("monitor_rate", 1000.0))
        event_rate = float(self.params.get("event_rate", 3000.0))
        center = float(self.params.get("peak_center", 256.0))
        sigma = float(self.params.get("peak_sigma", 24.0))
        bg = float(self.params.get("bg_fraction", 0.15))

        self.db.set_var(self.ns + "/state", "running", name)
        counts = np.zeros(channels, dtype=np.uint64)
        self.memory = counts
        monitor = 0
        live = 0.0
        events = 0
        sweep = 0
        while monitor < count_limit and live < time_limit:
            yield sweep_dt
            rng = rng_for(seed, "daq", name, base, tag, str(sweep))
            monitor += poisson(rng, monitor_rate * sweep_dt)
            for _ in range(poisson(rng, event_rate * sweep_dt)):
                if rng.random() < bg:
                    ch = int(rng.random() * channels)
                else:
                    ch = int(math.floor(center + sigma * gauss(rng)))
                    ch = min(max(ch, 0), channels - 1)
                counts[ch] += 1
                events += 1
            live += sweep_dt
            sweep += 1
            self.db.set_var(self.ns + "/monitor", monitor, name)
            self.db.set_var(self.ns + "/live_time", live, name)
        hist = Histogram((channels,), counts, monitor, live)
        out = self.workdir / f"{base}.dat"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(hist.to_dat_text(), encoding="utf-8")
        self.last_histogram = hist
        self.db.set_var(self.ns + "/state", "idle", name)
        self.db.set_var(self.ns + "/last_file", f"{base}.dat", name)
        self.prot.record(
            f"acq file={base} tag={tag} monitor={monitor} "
            f"live_time={live!r} events={events}")

    def spectrum(self) -> Histogram:
        if self.last_histogram is not None:
            return self.last_histogram
        rel = self.db.get_text(self.ns + "/last_file", "")
        if not rel:
            raise NoFile("no acquisition yet")
        text = (self.workdir / rel).read_text(encoding="utf-8")
        self.last_histogram = Histogram.from_dat_text(text)
        return self.last_histogram

    def sample(self) -> Histogram:
        """Point-in-time copy of the live histogram memory.

        Counts, monitor and live time are all updated inside a single event,
        so a copy taken between events is never torn.
        """
        if self.memory is None:
            channels = int(self.params.get("channels", 1024))
            mem = np.zeros(channels, dtype=np.uint64)
        else:
            mem = self.memory.copy()
        monitor = self.db.get_int(self.ns + "/monitor", 0)
        live = self.db.get_real(self.ns + "/live_time", 0.0)
        return Histogram((int(mem.size),), mem, monitor, live)


class EnvMonResident(Resident):
    """Environment parameter monitor: fixed-period samples to the protocol
    file while running.  The sampling grid (anchor + n*period) lives in the
    db, so a relaunch resumes the exact same grid."""

    def restore_defaults(self):
        self._default("/running", 0)
        self._default("/name", "")
        self._default("/count", 0)
        self._default("/anchor", 0.0)
        self._default("/period", float(self.params.get("period", 1.0)))

    def _next_sample_time(self):
        if self.db.get_int(self.ns + "/running") != 1:
            return None
        anchor = self.db.get_real(self.ns + "/anchor")
        count = self.db.get_int(self.ns + "/count")
        period = self.db.get_real(self.ns + "/period")
        return anchor + (count + 1) * period

    def next_deadline(self):
        return self._next_sample_time()

    def periodic_task(self):
        while True:
            due = self._next_sample_time()
            if due is None or due > self.sim.now:
                return
            name = self.db.get_text(self.ns + "/name")
            count = self.db.get_int(self.ns + "/count") + 1
            seed = self.db.get_int("/run/seed", 0)
            rng = rng_for(seed, "unipa", name, str(count))
            value = 50.0 + 2.0 * math.sin(count / 7.0) + (rng.random() - 0.5) * 0.2
            self.prot.record(f"sample {name} n={count} value={value:.4f}")
            self.db.set_var(self.ns + "/count", count, self.desc.name)
        yield  # pragma: no cover

    def dispatch(self, command, args):
        name = self.desc.name
        if command == "start":
            if self.db.get_int(self.ns + "/running") == 1:
                raise AlreadyRunning("monitor already running")
            run_name = args[0] if args else "default"
            self.db.set_var(self.ns + "/name", run_name, name)
            self.db.set_var(self.ns + "/count", 0, name)
            self.db.set_var(self.ns + "/anchor", self.sim.now, name)
            self.db.set_var(self.ns + "/running", 1, name)
            self.prot.record(f"monitor start {run_name}")
            return "ok"
            yield  # pragma: no cover
        if command == "stop":
            if self.db.get_int(self.ns + "/running") != 1:
                return "ok idle"
            self.db.set_var(self.ns + "/running", 0, name)
            self.prot.record(
                f"monitor stop {self.db.get_text(self.ns + '/name')}")
            return "ok"
            yield  # pragma: no cover
        status = yield from super().dispatch(command, args)
        return status


RESIDENT_KINDS = {
    "motor": MotorResident,
    "shutter": ShutterResident,
    "temp": TempResident,
    "daq": DaqResident,
    "envmon": EnvMonResident,
}


def build_resident(desc: DeviceDescriptor, sim, db, workdir) -> Resident:
    try:
        cls = RESIDENT_KINDS[desc.kind]
    except KeyError:
        raise ValueError(f"unknown resident kind {desc.kind!r}") from None
    return cls(desc, sim, db, workdir)


# -- macro-command library ---------------------------------------------------
# Each macro is a generator taking (engine, args); `engine` provides
# device(name, command, *args) and try_device(..., timeout=) plus db/config
# access.  Errors raised here abort the running script.


def macro_shut_set(engine, args):
    if len(args) != 2:
        raise ResidentError("shut_set(shutter, inbeam|outbeam)")
    yield from engine.device("Shut", "set", args[0], args[1])


def macro_temp_ist(engine, args):
    if len(args) != 4:
        raise ResidentError("temp_ist(tol, hold, name, setpoint)")
    yield from engine.device("Temp", "ist", *args)


def macro_usf_set(engine, args):
    if len(args) != 3:
        raise ResidentError("usf_set(user, sample, filebase)")
    engine.db.set_var("/meta/user", args[0], "macro")
    engine.db.set_var("/meta/sample", args[1], "macro")
    engine.db.set_var("/meta/filebase", args[2], "macro")
    yield from ()


def macro_auto_test(engine, args):
    for name in engine.resident_names():
        status = yield from engine.try_device(name, "ping", timeout=1.0)
        verdict = "pass" if status is not None and status.startswith("ok") else "fail"
        engine.db.set_var(f"/selftest/{name}", verdict, "macro")


def macro_uni_start(engine, args):
    yield from engine.device("Unipa", "start", *(args or ["default"]))


def macro_uni_stop(engine, args):
    yield from engine.device("Unipa", "stop")


def macro_meas_2sh(engine, args):
    """Two-shutter sample series.

    meas_2sh(detA, detB, count_limit, time_limit, repeats, start_sample, mode)
    measures every sample from start_sample to the configured table end,
    `repeats` times each, once per detector shutter; mode is accepted and
    ignored.
    """
    if len(args) != 7:
        raise ResidentError(
            "meas_2sh(detA, detB, count_limit, time_limit, repeats, start, mode)")
    det_a, det_b, count_limit, time_limit, repeats, start, _mode = args
    repeats = int(repeats)
    start = int(start)
    table_end = engine.config.sample_table
    if repeats <= 0:
        return
    if start > table_end:
        yield from engine.device(
            "Tofa", "note", f"meas_2sh: empty sample range {start}..{table_end}")
        return
    for sample in range(start, table_end + 1):
        yield from engine.device("Motor", "move", str(float(sample)))
        for rep in range(repeats):
            for det in (det_a, det_b):
                yield from engine.device("Tofa", "tag", f"s{sample}_{det}_r{rep}")
                yield from engine.device("Shut", "set", det, "inbeam")
                yield from engine.device("Tofa", "start", count_limit, time_limit)
                yield from engine.device("Shut", "set", det, "outbeam")
    yield from engine.device("Motor", "move", "0.0")


MACROS = {
    "shut_set": macro_shut_set,
    "temp_ist": macro_temp_ist,
    "usf_set": macro_usf_set,
    "auto_test": macro_auto_test,
    "uni_start": macro_uni_start,
    "uni_stop": macro_uni_stop,
    "meas_2sh": macro_meas_2sh,
}
