"""Database semantics: typing, revisions, subscriptions, snapshot round-trips."""

import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from beamctl.rtdb import (
    FormatError,
    InvalidValue,
    NotFound,
    Rtdb,
    Snapshot,
    StreamClosed,
    TypeMismatch,
    Value,
    VarPath,
    iso_time,
    parse_iso,
)

# -- paths ---------------------------------------------------------------


def test_path_render_parse_round_trip():
    p = VarPath.parse("/daq/tofa/state")
    assert p.render() == "/daq/tofa/state"
    assert VarPath.parse(p.render()) == p
    assert VarPath.parse("daq/tofa/state") == p


def test_path_rejects_bad_segments():
    for bad in ["", "/", "/a//b", "/a b", "/a/b!", "/sp ace"]:
        with pytest.raises(InvalidValue):
            VarPath.parse(bad)


def test_path_allows_hyphen_and_digits():
    VarPath.parse("/dev-1/ch_02")


# -- values --------------------------------------------------------------


def test_value_validation():
    with pytest.raises(InvalidValue):
        Value.real(float("nan"))
    with pytest.raises(InvalidValue):
        Value.text("a\x00b")
    with pytest.raises(InvalidValue):
        Value.int(2 ** 63)
    with pytest.raises(InvalidValue):
        Value.array([1, 2 ** 63])
    Value.int(2 ** 63 - 1)
    Value.int(-(2 ** 63))


def test_text_encoding_escapes_control_bytes():
    v = Value.text("a\tb\nc%d")
    enc = v.encode()
    assert "\t" not in enc and "\n" not in enc
    assert Value.decode("T", enc) == v


@given(st.text(st.characters(codec="utf-8", exclude_characters="\x00"), max_size=60))
def test_text_round_trip(s):
    v = Value.text(s)
    assert Value.decode("T", v.encode()) == v


@given(st.floats(allow_nan=False))
def test_real_round_trip(x):
    v = Value.real(x)
    assert Value.decode("R", v.encode()) == v


@given(st.lists(st.integers(min_value=-(2 ** 63), max_value=2 ** 63 - 1), max_size=20))
def test_array_round_trip(xs):
    v = Value.array(xs)
    assert Value.decode("A", v.encode()) == v


# -- set/get/list --------------------------------------------------------


def test_set_then_get():
    db = Rtdb()
    db.set_var("/script/vars/filename", "PB160502a", writer="test")
    assert db.get_var("/script/vars/filename").value == Value.text("PB160502a")


def test_type_tag_is_stable():
    db = Rtdb()
    db.set_var("/motor/pos", 5)
    with pytest.raises(TypeMismatch):
        db.set_var("/motor/pos", "five")
    db.set_var("/motor/pos", 6)


def test_revisions_strictly_increase():
    db = Rtdb()
    r1 = db.set_var("/a", 1)
    r2 = db.set_var("/b/c", 2)
    r3 = db.set_var("/a", 3)
    assert r1 < r2 < r3
    assert db.get_var("/a").revision == r3


def test_get_missing_raises():
    db = Rtdb()
    with pytest.raises(NotFound):
        db.get_var("/never/written")


def test_list_vars_sorted_and_filtered():
    db = Rtdb()
    assert db.list_vars() == []
    for p in ["/motor/pos", "/daq/tofa/state", "/motor/speed", "/a"]:
        db.set_var(p, 0)
    assert [p.render() for p in db.list_vars()] == [
        "/a", "/daq/tofa/state", "/motor/pos", "/motor/speed"]
    assert [p.render() for p in db.list_vars("/motor")] == [
        "/motor/pos", "/motor/speed"]


def test_list_prefix_is_segmentwise():
    db = Rtdb()
    db.set_var("/motor/pos", 1)
    db.set_var("/motorx/pos", 1)
    assert [p.render() for p in db.list_vars("/motor")] == ["/motor/pos"]


# -- subscriptions -------------------------------------------------------


def test_subscribe_prefix_filter():
    db = Rtdb()
    sub = db.subscribe("/motor")
    db.set_var("/motor/pos", 10)
    db.set_var("/daq/state", "idle")
    assert sub.pending() == 1
    ev = sub.pop(timeout=0.1)
    assert ev.path.render() == "/motor/pos"
    assert ev.value == Value.int(10)


def test_subscription_sees_all_matching_in_revision_order():
    db = Rtdb()
    sub = db.subscribe("/w")
    revs = []
    for i in range(50):
        db.set_var("/w/a" if i % 2 else "/w/b", i)
        db.set_var("/other", i)
    got = [sub.pop(timeout=0.1) for _ in range(50)]
    revs = [e.revision for e in got]
    assert len(got) == 50
    assert revs == sorted(revs)
    assert len(set(revs)) == 50
    assert sub.pending() == 0


def test_closed_subscription_raises():
    db = Rtdb()
    sub = db.subscribe(None)
    db.set_var("/a", 1)
    sub.close()
    sub2 = db.subscribe(None)
    sub2.close()
    with pytest.raises(StreamClosed):
        sub2.pop(timeout=0.05)


def test_subscription_across_threads():
    db = Rtdb()
    sub = db.subscribe("/t")
    seen = []

    def consumer():
        try:
            while True:
                seen.append(sub.pop())
        except StreamClosed:
            pass

    th = threading.Thread(target=consumer)
    th.start()
    for i in range(200):
        db.set_var("/t/x", i)
    # drain, then close
    while sub.pending():
        pass
    sub.close()
    th.join(timeout=5)
    assert not th.is_alive()
    assert len(seen) == 200
    assert [e.revision for e in seen] == sorted(e.revision for e in seen)


def test_watch_fires_synchronously():
    db = Rtdb()
    hits = []
    cancel = db.watch("/daq", lambda e: hits.append(e.path.render()))
    db.set_var("/daq/done", 1)
    db.set_var("/motor/pos", 2)
    assert hits == ["/daq/done"]
    cancel()
    db.set_var("/daq/done", 3)
    assert hits == ["/daq/done"]


# -- snapshots -----------------------------------------------------------


def test_empty_snapshot():
    db = Rtdb()
    snap = db.save_snapshot()
    assert snap.records == ()
    db2 = Rtdb()
    db2.restore_snapshot(snap)
    assert db2.list_vars() == []


def test_snapshot_cardinality_and_sorting():
    db = Rtdb()
    for p in ["/z", "/a/b", "/m/n/o"]:
        db.set_var(p, p)
    snap = db.save_snapshot()
    assert len(snap.records) == 3
    assert [r[0] for r in snap.records] == ["/a/b", "/m/n/o", "/z"]


def test_snapshot_text_round_trip_bytes():
    db = Rtdb()
    db.set_var("/i", -42)
    db.set_var("/r", 0.1)
    db.set_var("/t", "line1\nline2\t%x")
    db.set_var("/arr", [1, -2, 3])
    snap = db.save_snapshot()
    text = snap.to_text()
    again = Snapshot.from_text(text)
    assert again.to_text() == text
    db2 = Rtdb()
    db2.restore_snapshot(again)
    assert db2.get_var("/t").value == Value.text("line1\nline2\t%x")
    assert db2.get_var("/r").value == Value.real(0.1)
    assert db2.save_snapshot().to_text() == text


def test_restore_resumes_revision_counter():
    db = Rtdb()
    db.set_var("/a", 1)
    db.set_var("/a", 2)
    snap = db.save_snapshot()
    db2 = Rtdb()
    r = db2.set_var("/junk", 0)
    assert r < snap.revision
    db2.restore_snapshot(snap)
    assert db2.try_get("/junk") is None
    assert db2.set_var("/b", 1) > snap.revision


def test_restore_exact_content():
    db = Rtdb()
    db.set_var("/x", 1.5)
    db.set_var("/y", "hey")
    snap = db.save_snapshot()
    db.set_var("/x", 9.0)
    db.set_var("/z", "extra")
    db.restore_snapshot(snap)
    assert db.get_var("/x").value == Value.real(1.5)
    assert db.try_get("/z") is None
    assert [p.render() for p in db.list_vars()] == ["/x", "/y"]


def test_snapshot_excluding_prefix():
    db = Rtdb()
    db.set_var("/keep/a", 1)
    db.set_var("/script/resume/image", "big")
    snap = db.save_snapshot(exclude_prefix="/script/resume")
    assert [r[0] for r in snap.records] == ["/keep/a"]


def test_bad_snapshot_text_rejected():
    for bad in ["", "SNIX9 0 x\n", "SNIX1 zero 2002-05-15T00:00:00.000000Z\n",
                "SNIX1 0 2002-05-15T00:00:00.000000Z\nonly two\tfields\n"]:
        with pytest.raises(FormatError):
            Snapshot.from_text(bad)


def test_snapshot_is_atomic_under_concurrent_writes():
    db = Rtdb()
    for i in range(20):
        db.set_var(f"/v/n{i:02d}", 0)
    stop = threading.Event()

    def writer():
        i = 0
        while not stop.is_set():
            db.set_var(f"/v/n{i % 20:02d}", i)
            i += 1

    th = threading.Thread(target=writer)
    th.start()
    try:
        for _ in range(50):
            snap = db.save_snapshot()
            assert all(rev <= snap.revision for _, _, rev in snap.records)
            assert len(snap.records) == 20
    finally:
        stop.set()
        th.join()


@given(st.dictionaries(
    st.from_regex(r"[a-z][a-z0-9_]{0,6}(/[a-z][a-z0-9_]{0,6}){0,3}", fullmatch=True),
    st.one_of(
        st.integers(min_value=-(2 ** 63), max_value=2 ** 63 - 1),
        st.floats(allow_nan=False),
        st.text(st.characters(codec="utf-8", exclude_characters="\x00"), max_size=20),
        st.lists(st.integers(min_value=-100, max_value=100), max_size=5),
    ),
    max_size=12,
))
def test_any_state_round_trips(state):
    db = Rtdb()
    for path, val in state.items():
        db.set_var("/" + path, val)
    text = db.save_snapshot().to_text()
    db2 = Rtdb()
    db2.restore_snapshot(Snapshot.from_text(text))
    assert db2.save_snapshot().to_text() == text
    assert [p.render() for p in db2.list_vars()] == [
        p.render() for p in db.list_vars()]


# -- time ----------------------------------------------------------------


def test_iso_time_round_trip():
    assert iso_time(0.0) == "2002-05-15T00:00:00.000000Z"
    assert parse_iso(iso_time(12345.678901)) == pytest.approx(12345.678901)


def test_db_clock_is_injected():
    t = [0.0]
    db = Rtdb(clock=lambda: t[0])
    db.set_var("/a", 1)
    t[0] = 5.0
    db.set_var("/a", 2)
    assert db.get_var("/a").wall_time == 5.0
