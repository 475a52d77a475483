"""Device resident behavior, macro library, histogram files, determinism."""

import math
import pathlib

import pytest

from beamctl.kernel import EngineFailure, Kernel, KernelConfig
from beamctl.residents import (
    Histogram,
    gauss,
    poisson,
    rng_for,
    synthetic_psd,
)
from beamctl.rtdb import parse_iso
from beamctl.script import DispatchError


def build_kernel(tmp_path, **cfg) -> Kernel:
    k = Kernel(tmp_path, KernelConfig(**cfg))
    k.boot()
    return k


def send(k: Kernel, device: str, command: str, *args, timeout=None):
    """Dispatch one command synchronously; returns status text or None."""
    out = {}

    def task():
        out["status"] = yield from k.engine.try_device(
            device, command, *args, timeout=timeout)

    t = k.sim.spawn(task(), name="send")
    k.sim.run_until_task(t)
    return out["status"]


def run_macro(k: Kernel, name: str, args):
    t = k.sim.spawn(k.engine.macro_task(name, list(args)), name="macro")
    k.sim.run_until_task(t)


# -- command plumbing ------------------------------------------------------


def test_ping_answers_instantly(tmp_path):
    k = build_kernel(tmp_path)
    assert send(k, "Motor", "ping") == "ok pong"
    assert k.sim.now == 0.0


def test_unknown_command_keeps_resident_alive(tmp_path):
    k = build_kernel(tmp_path)
    status = send(k, "Motor", "fly")
    assert status == "error: unknown command fly"
    assert k.db.get_int("/motor/busy") == 0
    assert send(k, "Motor", "ping") == "ok pong"


def test_unknown_device_raises(tmp_path):
    k = build_kernel(tmp_path)
    with pytest.raises(DispatchError):
        send(k, "Oven", "ping")


def test_resident_restart_resumes_from_db_state(tmp_path):
    k = build_kernel(tmp_path)
    assert send(k, "Motor", "move", "3.0").startswith("ok")
    k.residents["Motor"].shutdown()
    assert send(k, "Motor", "ping", timeout=1.0) is None  # nobody home
    desc = next(d for d in k.config.descriptors() if d.name == "Motor")
    from beamctl.residents import build_resident
    fresh = build_resident(desc, k.sim, k.db, k.workdir)
    fresh.launch()
    k.residents["Motor"] = fresh
    assert send(k, "Motor", "getpos") == "ok 3.0"


# -- protocol files ---------------------------------------------------------


def test_open_prot_writes_header(tmp_path):
    k = build_kernel(tmp_path)
    assert send(k, "Tofa", "open_prot", "txt/pb160502a.txt") == "ok"
    lines = (tmp_path / "txt/pb160502a.txt").read_text().splitlines()
    assert len(lines) == 1
    t, device, event = lines[0].split("\t")
    assert device == "Tofa"
    assert event == "protocol opened txt/pb160502a.txt"


def test_open_prot_default_path(tmp_path):
    k = build_kernel(tmp_path)
    assert send(k, "Motor", "open_prot") == "ok"
    assert (tmp_path / "prot/motor.txt").exists()


def test_open_prot_bad_path_surfaces_in_status(tmp_path):
    k = build_kernel(tmp_path)
    (tmp_path / "blocked").write_text("a file, not a directory")
    status = send(k, "Motor", "open_prot", "blocked/sub/p.txt")
    assert status.startswith("error:")
    assert send(k, "Motor", "ping") == "ok pong"


def test_protocol_records_are_time_ordered(tmp_path):
    k = build_kernel(tmp_path)
    send(k, "Motor", "open_prot")
    for target in ("2.0", "5.0", "1.0"):
        send(k, "Motor", "move", target)
        send(k, "Motor", "getpos")
    stamps = [parse_iso(line.split("\t")[0])
              for line in (tmp_path / "prot/motor.txt").read_text().splitlines()]
    assert stamps == sorted(stamps)


# -- motor -------------------------------------------------------------------


def test_motor_move_takes_distance_over_speed(tmp_path):
    k = build_kernel(tmp_path, motor_speed=2.0)
    t0 = k.sim.now
    send(k, "Motor", "move", "5.0")
    assert k.sim.now - t0 == pytest.approx(2.5)
    assert k.db.get_real("/motor/pos/value") == 5.0


def test_motor_getpos_publishes(tmp_path):
    k = build_kernel(tmp_path)
    send(k, "Motor", "getpos")
    assert k.db.get_real("/motor/pos/value") == 0.0
    assert k.db.get_text("/motor/pos/at").endswith("Z")


# -- shutters ----------------------------------------------------------------


def test_shut_set_moves_then_is_idempotent(tmp_path):
    k = build_kernel(tmp_path, shutter_travel=0.5)
    run_macro(k, "shut_set", ["vanady1_2det", "inbeam"])
    assert k.db.get_text("/shutter/vanady1_2det/pos") == "inbeam"
    assert k.sim.now == pytest.approx(0.5)
    run_macro(k, "shut_set", ["vanady1_2det", "inbeam"])  # no further travel
    assert k.sim.now == pytest.approx(0.5)


def test_shutters_default_outbeam(tmp_path):
    k = build_kernel(tmp_path)
    for sid in k.config.shutters:
        assert k.db.get_text(f"/shutter/{sid}/pos") == "outbeam"


def test_unknown_shutter(tmp_path):
    k = build_kernel(tmp_path)
    with pytest.raises(EngineFailure, match="nosuch"):
        run_macro(k, "shut_set", ["nosuch", "inbeam"])


# -- temperature --------------------------------------------------------------


def test_temp_ist_converges_within_tolerance(tmp_path):
    k = build_kernel(tmp_path, temp_tau=5.0, temp_initial=20.0)
    run_macro(k, "temp_ist", ["1.0", "2.0", "test", "25"])
    value = k.db.get_real("/temp/value")
    assert abs(value - 25.0) <= 1.0
    assert k.db.get_int("/temp/stable") == 1
    # settle time for first-order lag plus the hold window
    assert k.sim.now == pytest.approx(5.0 * math.log(5.0) + 2.0)


def test_temp_ist_already_at_setpoint_waits_exactly_hold(tmp_path):
    k = build_kernel(tmp_path, temp_initial=20.0)
    run_macro(k, "temp_ist", ["0.5", "3.0", "warm", "20"])
    assert k.sim.now == pytest.approx(3.0)


def test_temp_ist_rejects_nonpositive_tolerance(tmp_path):
    k = build_kernel(tmp_path)
    status = send(k, "Temp", "ist", "0.0", "1.0", "x", "25")
    assert status.startswith("error:")


def test_temp_ist_times_out(tmp_path):
    k = build_kernel(tmp_path, temp_timeout=1.0)
    status = send(k, "Temp", "ist", "0.001", "0.0", "x", "90")
    assert status.startswith("error:")
    assert "convergence" in status


def test_temp_set_retargets_model(tmp_path):
    k = build_kernel(tmp_path, temp_tau=5.0, temp_initial=20.0)
    send(k, "Temp", "set", "30")
    k.sim.advance_to(k.sim.now + 5.0)  # one time constant
    status = send(k, "Temp", "getval")
    value = float(status.split()[1])
    assert value == pytest.approx(30.0 - 10.0 * math.exp(-1.0))


# -- daq ----------------------------------------------------------------------


def test_daq_start_needs_file(tmp_path):
    k = build_kernel(tmp_path)
    status = send(k, "Tofa", "start", "100", "10")
    assert status.startswith("error:")
    assert "file" in status


def test_daq_stops_at_monitor_limit_and_writes_dat(tmp_path):
    k = build_kernel(tmp_path)
    send(k, "Tofa", "flagoff", "temperature")
    send(k, "Tofa", "file", "RUN1")
    assert send(k, "Tofa", "start", "2000", "1000") == "ok"
    hist = Histogram.from_dat_text((tmp_path / "RUN1.dat").read_text())
    assert hist.monitor >= 2000
    assert hist.live_time < 1000.0
    assert hist.dims == (1024,)


def test_daq_time_limit(tmp_path):
    k = build_kernel(tmp_path)
    send(k, "Tofa", "flagoff", "temperature")
    send(k, "Tofa", "file", "RUN2")
    send(k, "Tofa", "start", "1000000000", "0.5")
    hist = Histogram.from_dat_text((tmp_path / "RUN2.dat").read_text())
    assert hist.live_time == pytest.approx(0.5)


def test_daq_zero_count_limit_writes_empty_histogram(tmp_path):
    k = build_kernel(tmp_path)
    send(k, "Tofa", "flagoff", "temperature")
    send(k, "Tofa", "file", "EMPTY")
    t0 = k.sim.now
    assert send(k, "Tofa", "start", "0", "10") == "ok"
    assert k.sim.now == t0
    hist = Histogram.from_dat_text((tmp_path / "EMPTY.dat").read_text())
    assert hist.total() == 0
    assert hist.monitor == 0


def test_daq_event_sum_matches_recorded_events(tmp_path):
    k = build_kernel(tmp_path)
    send(k, "Tofa", "open_prot")
    send(k, "Tofa", "flagoff", "temperature")
    send(k, "Tofa", "file", "SUM")
    send(k, "Tofa", "start", "500", "100")
    hist = Histogram.from_dat_text((tmp_path / "SUM.dat").read_text())
    acq = [l for l in (tmp_path / "prot/tofa.txt").read_text().splitlines()
           if "acq " in l][-1]
    recorded = int(acq.rsplit("events=", 1)[1])
    assert hist.total() == recorded


def test_daq_monitor_and_live_time_never_decrease(tmp_path):
    k = build_kernel(tmp_path)
    send(k, "Tofa", "flagoff", "temperature")
    send(k, "Tofa", "file", "MONO")
    sub = k.db.subscribe("/daq/monitor")
    sub2 = k.db.subscribe("/daq/live_time")
    send(k, "Tofa", "start", "800", "100")
    monitors = [sub.pop(timeout=0.1).value.data for _ in range(sub.pending())]
    lives = [sub2.pop(timeout=0.1).value.data for _ in range(sub2.pending())]
    assert monitors == sorted(monitors) and len(monitors) > 2
    assert lives == sorted(lives)


def test_daq_identical_seeds_identical_bytes(tmp_path):
    outs = []
    for sub in ("a", "b"):
        k = build_kernel(tmp_path / sub, seed=5)
        send(k, "Tofa", "flagoff", "temperature")
        send(k, "Tofa", "file", "TWIN")
        send(k, "Tofa", "start", "1500", "100")
        outs.append((tmp_path / sub / "TWIN.dat").read_bytes())
    assert outs[0] == outs[1]


def test_daq_different_seeds_differ(tmp_path):
    outs = []
    for sub, seed in (("a", 1), ("b", 2)):
        k = build_kernel(tmp_path / sub, seed=seed)
        send(k, "Tofa", "flagoff", "temperature")
        send(k, "Tofa", "file", "TWIN")
        send(k, "Tofa", "start", "1500", "100")
        outs.append((tmp_path / sub / "TWIN.dat").read_bytes())
    assert outs[0] != outs[1]


def test_daq_busy_rejected(tmp_path):
    k = build_kernel(tmp_path)
    send(k, "Tofa", "file", "BUSY")
    k.db.set_var("/daq/state", "running", "test")
    status = send(k, "Tofa", "start", "10", "10")
    assert status.startswith("error:") and "running" in status


def test_daq_gates_on_temperature_stability(tmp_path):
    k = build_kernel(tmp_path)
    send(k, "Tofa", "open_prot")
    send(k, "Tofa", "file", "GATED")
    assert k.db.get_int("/daq/gate/temperature") == 1

    def stabilize():
        yield 3.0
        k.db.set_var("/temp/stable", 1, "test")

    k.sim.spawn(stabilize(), name="stabilize")
    t0 = k.sim.now
    assert send(k, "Tofa", "start", "100", "50") == "ok"
    assert k.sim.now - t0 >= 3.0
    prot = (tmp_path / "prot/tofa.txt").read_text()
    assert "acquisition gated on temperature" in prot


# -- environment monitor -------------------------------------------------------


def test_unipa_samples_at_poll_period(tmp_path):
    k = build_kernel(tmp_path)
    send(k, "Unipa", "open_prot")
    run_macro(k, "uni_start", ["test"])
    k.sim.advance_to(k.sim.now + 3.0)
    run_macro(k, "uni_stop", [])
    lines = (tmp_path / "prot/unipa.txt").read_text().splitlines()
    samples = [l for l in lines if "sample test" in l]
    assert len(samples) >= 3


def test_unipa_double_start_rejected(tmp_path):
    k = build_kernel(tmp_path)
    run_macro(k, "uni_start", ["one"])
    with pytest.raises(EngineFailure, match="already running"):
        run_macro(k, "uni_start", ["two"])


def test_unipa_stop_when_idle_is_noop(tmp_path):
    k = build_kernel(tmp_path)
    assert send(k, "Unipa", "stop") == "ok idle"


def test_unipa_resumes_grid_after_relaunch(tmp_path):
    k = build_kernel(tmp_path)
    send(k, "Unipa", "open_prot")
    run_macro(k, "uni_start", ["grid"])
    k.sim.advance_to(2.5)
    k.residents["Unipa"].shutdown()
    desc = next(d for d in k.config.descriptors() if d.name == "Unipa")
    from beamctl.residents import build_resident
    fresh = build_resident(desc, k.sim, k.db, k.workdir)
    fresh.launch()
    k.residents["Unipa"] = fresh
    k.sim.advance_to(5.5)
    lines = [l for l in (tmp_path / "prot/unipa.txt").read_text().splitlines()
             if "sample grid" in l]
    ns = [int(l.split("n=")[1].split()[0]) for l in lines]
    assert ns == [1, 2, 3, 4, 5]  # no gap, no duplicate across the relaunch


# -- macros ---------------------------------------------------------------------


def test_usf_set_writes_meta(tmp_path):
    k = build_kernel(tmp_path)
    run_macro(k, "usf_set", ["Balgavi", "Hexane", "PB160502a"])
    assert k.db.get_text("/meta/user") == "Balgavi"
    assert k.db.get_text("/meta/sample") == "Hexane"
    assert k.db.get_text("/meta/filebase") == "PB160502a"


def test_auto_test_all_pass(tmp_path):
    k = build_kernel(tmp_path)
    run_macro(k, "auto_test", [])
    for name in k.residents:
        assert k.db.get_text(f"/selftest/{name}") == "pass"


def test_auto_test_reports_stopped_resident(tmp_path):
    k = build_kernel(tmp_path)
    k.residents["Temp"].shutdown()
    run_macro(k, "auto_test", [])
    assert k.db.get_text("/selftest/Temp") == "fail"
    assert k.db.get_text("/selftest/Motor") == "pass"
    assert k.db.get_text("/selftest/Tofa") == "pass"


def test_meas_2sh_counts_samples_to_table_end(tmp_path):
    k = build_kernel(tmp_path, sample_table=12)
    send(k, "Tofa", "open_prot")
    send(k, "Tofa", "flagoff", "temperature")
    send(k, "Tofa", "file", "MEAS")
    run_macro(k, "meas_2sh",
              ["vanady1_1det", "vanady1_2det", "100", "50", "1", "11", "#.$09"])
    acq = [l for l in (tmp_path / "prot/tofa.txt").read_text().splitlines()
           if "acq " in l]
    assert len(acq) == 4  # samples 11..12, two shutter configs each
    tags = [l.split("tag=")[1].split()[0] for l in acq]
    assert tags == ["s11_vanady1_1det_r0", "s11_vanady1_2det_r0",
                    "s12_vanady1_1det_r0", "s12_vanady1_2det_r0"]
    assert k.db.get_real("/motor/pos/value") == 0.0  # parked


def test_meas_2sh_zero_repeats_is_immediate(tmp_path):
    k = build_kernel(tmp_path)
    t0 = k.sim.now
    run_macro(k, "meas_2sh",
              ["vanady1_1det", "vanady1_2det", "100", "50", "0", "11", "x"])
    assert k.sim.now == t0
    assert k.db.get_real("/motor/pos/value") == 0.0


def test_meas_2sh_empty_range_writes_warning(tmp_path):
    k = build_kernel(tmp_path, sample_table=12)
    send(k, "Tofa", "open_prot")
    run_macro(k, "meas_2sh",
              ["vanady1_1det", "vanady1_2det", "100", "50", "1", "13", "x"])
    prot = (tmp_path / "prot/tofa.txt").read_text()
    assert "empty sample range" in prot


# -- isolation -------------------------------------------------------------------


def test_residents_import_no_network_modules():
    import ast
    import beamctl.residents as mod
    tree = ast.parse(pathlib.Path(mod.__file__).read_text())
    imported = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            imported.update(alias.name for alias in node.names)
        elif isinstance(node, ast.ImportFrom):
            imported.add(node.module or "")
    for name in imported:
        root = name.split(".")[0]
        assert root not in ("socket", "http", "urllib", "asyncio", "requests")
        assert "gateway" not in name


# -- histograms and samplers -------------------------------------------------------


def test_histogram_dat_round_trip():
    h = Histogram((4,), [1, 0, 7, 2], monitor=55, live_time=1.25)
    again = Histogram.from_dat_text(h.to_dat_text())
    assert again.dims == h.dims
    assert list(again.counts) == [1, 0, 7, 2]
    assert again.monitor == 55 and again.live_time == 1.25


def test_histogram_rejects_bad_shape():
    with pytest.raises(ValueError):
        Histogram((4,), [1, 2, 3], monitor=0, live_time=0.0)


def test_synthetic_psd_is_deterministic():
    a = synthetic_psd(3, dims=(8, 8, 16), events=500)
    b = synthetic_psd(3, dims=(8, 8, 16), events=500)
    assert (a.counts == b.counts).all()
    assert a.total() == 500


def test_poisson_mean_is_roughly_lambda():
    rng = rng_for(0, "poisson-check")
    for lam in (0.5, 4.0, 120.0, 900.0):
        n = 400
        mean = sum(poisson(rng, lam) for _ in range(n)) / n
        assert abs(mean - lam) < max(1.0, lam * 0.15)


def test_gauss_is_centered():
    rng = rng_for(0, "gauss-check")
    xs = [gauss(rng) for _ in range(4000)]
    mean = sum(xs) / len(xs)
    var = sum((x - mean) ** 2 for x in xs) / len(xs)
    assert abs(mean) < 0.1
    assert abs(var - 1.0) < 0.15


def test_rng_for_streams_are_independent_and_stable():
    a1 = rng_for(1, "a").random()
    a2 = rng_for(1, "a").random()
    b = rng_for(1, "b").random()
    assert a1 == a2
    assert a1 != b
