import pytest
from hypothesis import given, settings, strategies as st

from cybertwin.errors import LivelockGuard, OutsideHandler
from cybertwin.sim import Engine


def firing_times(engine):
    return [(r.time, r.detail["name"]) for r in engine.trace]


def mark(engine, name):
    return lambda: engine.emit("test", "fire", name=name)


def test_zero_delay_fires_now():
    e = Engine()
    e.schedule(0, mark(e, "x"))
    e.run_until(0)
    assert firing_times(e) == [(0, "x")]


def test_same_time_fires_in_insertion_order():
    e = Engine()
    e.schedule(7, mark(e, "a"))
    e.schedule(7, mark(e, "b"))
    e.run_until(10)
    assert firing_times(e) == [(7, "a"), (7, "b")]


def test_delay_is_added_to_now():
    e = Engine()
    e.run_until(5_000)
    e.schedule(10_000, mark(e, "x"))
    e.run_until(20_000)
    assert firing_times(e) == [(15_000, "x")]


def test_empty_queue_advances_clock():
    e = Engine()
    assert e.run_until(42) == []
    assert e.now == 42


def test_event_scheduled_for_same_instant_runs_after():
    e = Engine()

    def a():
        e.emit("test", "fire", name="a")
        e.schedule(0, mark(e, "b"))

    e.at(1, a)
    e.run_until(1)
    assert firing_times(e) == [(1, "a"), (1, "b")]


def test_three_event_chain():
    e = Engine()

    def c():
        e.emit("test", "fire", name="C")

    def b():
        e.emit("test", "fire", name="B")
        e.schedule(3, c)

    def a():
        e.emit("test", "fire", name="A")
        e.schedule(2, b)

    e.at(1, a)
    e.run()
    assert [t for t, _ in firing_times(e)] == [1, 3, 6]


def test_cancel_and_next_time():
    e = Engine()
    h = e.at(5, mark(e, "x"))
    e.at(9, mark(e, "y"))
    assert e.next_time == 5
    h.cancel()
    assert h.cancelled and e.next_time == 9 and e.pending == 1
    e.run()
    assert firing_times(e) == [(9, "y")]


def test_past_scheduling_rejected():
    e = Engine()
    e.run_until(10)
    with pytest.raises(ValueError):
        e.at(5, lambda: None)
    with pytest.raises(ValueError):
        e.schedule(-1, lambda: None)
    with pytest.raises(ValueError):
        e.run_until(3)


def test_strict_mode_rejects_emit_outside_handler():
    e = Engine(strict=True)
    with pytest.raises(OutsideHandler):
        e.emit("x", "y")
    e.at(0, lambda: e.emit("x", "y"))
    e.run()
    assert len(e.trace) == 1


def test_livelock_guard():
    e = Engine(max_events_per_instant=50)

    def again():
        e.schedule(0, again)

    e.at(0, again)
    with pytest.raises(LivelockGuard):
        e.run_until(0)


def test_call_returns_handler_result():
    e = Engine()
    assert e.call(lambda x: x * 2, 21) == 42
    assert e.fired == 1


@given(st.lists(st.integers(0, 1000), max_size=40))
@settings(max_examples=100)
def test_fire_order_is_time_then_insertion(times):
    e = Engine()
    for k, t in enumerate(times):
        e.at(t, mark(e, k))
    e.run()
    assert firing_times(e) == sorted((t, k) for k, t in enumerate(times))


def test_trace_hash_stable_and_content_sensitive():
    def build(value):
        e = Engine()
        e.at(3, lambda: e.emit("a", "b", x=value, y=[1, "z"]))
        e.run()
        return e

    assert build(1).trace_hash() == build(1).trace_hash()
    assert build(1).trace_hash() != build(2).trace_hash()
    assert build(1).trace_ndjson() == '[3,"a","b",{"x":1,"y":[1,"z"]}]\n'
