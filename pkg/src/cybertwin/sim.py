"""Deterministic discrete-event engine.

Virtual time is an integer count of microseconds. Events are ordered by
``(fire_at, seq)`` where ``seq`` is the global insertion counter, so events
scheduled for the same instant fire in the order they were scheduled.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from typing import Any, Callable, NamedTuple

from .errors import LivelockGuard, OutsideHandler
from .rng import Stream

DEFAULT_MAX_EVENTS_PER_INSTANT = 10**6



def _make_encoder():
    # emission order is deterministic, so keys need no sorting
    plain = json.JSONEncoder(separators=(",", ":")).encode
    c_make = getattr(json.encoder, "c_make_encoder", None)
    if c_make is None:
        return plain

    def default(o):
        raise TypeError(f"{type(o).__name__} is not JSON serializable")

    # one reusable C encoder; JSONEncoder.encode builds a new one per call
    c_enc = c_make(None, default, json.encoder.encode_basestring_ascii, None, ":", ",", False, False, True)
    return lambda o: "".join(c_enc(o, 0))


_encode = _make_encoder()


class TraceRecord(NamedTuple):
    time: int
    actor: str
    action: str
    detail: dict

    def to_json(self) -> str:
        """``[t, actor, action, {detail}]``; detail keys keep emission order."""
        return _encode(self)


class EventHandle:
    """Cancellation handle for one queued event."""

    __slots__ = ("_entry",)

    def __init__(self, entry):
        self._entry = entry  # [fire_at, seq, fn, args]; fn None once cancelled

    @property
    def fire_at(self) -> int:
        return self._entry[0]

    @property
    def seq(self) -> int:
        return self._entry[1]

    @property
    def cancelled(self) -> bool:
        return self._entry[2] is None

    def cancel(self):
        self._entry[2] = None

    def __repr__(self):
        fn = self._entry[2]
        name = "cancelled" if fn is None else getattr(fn, "__qualname__", repr(fn))
        return f"<EventHandle t={self.fire_at} seq={self.seq} {name}>"


class Engine:
    """Single-threaded event loop with a trace and seeded random streams.

    With ``strict=True`` every call to :meth:`emit` (and therefore every
    traced state mutation) must happen inside an event handler.
    """

    def __init__(self, seed: int = 0, *, max_events_per_instant: int = DEFAULT_MAX_EVENTS_PER_INSTANT,
                 strict: bool = False):
        self.seed = seed
        self.now = 0
        self.strict = strict
        self.max_events_per_instant = max_events_per_instant
        self.trace: list = []
        self.fired = 0
        self._queue: list = []
        self._seq = 0
        self._depth = 0
        self._instant = -1
        self._instant_count = 0

    # scheduling

    def schedule(self, after: int, fn: Callable, *args: Any) -> EventHandle:
        if after < 0:
            raise ValueError(f"cannot schedule {after} us in the past")
        return self.at(self.now + after, fn, *args)

    def at(self, fire_at: int, fn: Callable, *args: Any) -> EventHandle:
        if fire_at < self.now:
            raise ValueError(f"cannot schedule at {fire_at} < now {self.now}")
        entry = [fire_at, self._seq, fn, args]
        heapq.heappush(self._queue, entry)
        self._seq += 1
        return EventHandle(entry)

    def post(self, after: int, fn: Callable, *args: Any) -> None:
        """:meth:`schedule` without a handle; for hot paths that never cancel."""
        if after < 0:
            raise ValueError(f"cannot schedule {after} us in the past")
        heapq.heappush(self._queue, [self.now + after, self._seq, fn, args])
        self._seq += 1

    @property
    def next_time(self):
        """Fire time of the earliest live event, or None."""
        queue = self._queue
        while queue and queue[0][2] is None:
            heapq.heappop(queue)
        return queue[0][0] if queue else None

    @property
    def pending(self) -> int:
        return sum(1 for e in self._queue if e[2] is not None)

    @property
    def in_handler(self) -> bool:
        return self._depth > 0

    def run_until(self, t_end: int) -> list:
        """Fire every event with ``fire_at <= t_end``; returns the full trace."""
        if t_end < self.now:
            raise ValueError(f"t_end {t_end} is before now {self.now}")
        queue = self._queue
        pop = heapq.heappop
        limit = self.max_events_per_instant
        while queue and queue[0][0] <= t_end:
            fire_at, _, fn, args = pop(queue)
            if fn is None:
                continue
            if fire_at != self._instant:
                self._instant = fire_at
                self._instant_count = 0
            self._instant_count += 1
            if self._instant_count > limit:
                raise LivelockGuard(f"more than {limit} events at t={fire_at}")
            self.now = fire_at
            self.fired += 1
            self._depth += 1
            try:
                fn(*args)
            finally:
                self._depth -= 1
        self.now = t_end
        return self.trace

    def run(self) -> list:
        """Run until the queue is empty."""
        while self._queue:
            self.run_until(self._queue[0][0])
        return self.trace

    def call(self, fn: Callable, *args: Any):
        """Run ``fn`` as an event handler at the current instant and return its result.

        Events already queued for this instant fire first.
        """
        box = []
        self.at(self.now, lambda: box.append(fn(*args)))
        self.run_until(self.now)
        return box[0]

    # tracing

    def emit(self, actor: str, action: str, **detail: Any) -> None:
        if self.strict and not self._depth:
            raise OutsideHandler(f"{actor}/{action} emitted outside an event handler")
        self.trace.append(TraceRecord(self.now, actor, action, detail))

    def trace_ndjson(self) -> str:
        enc = _encode
        return "".join([enc(r) + "\n" for r in self.trace])

    def trace_hash(self) -> str:
        """sha256 of :meth:`trace_ndjson`."""
        return hashlib.sha256(self.trace_ndjson().encode()).hexdigest()

    # randomness

    def rng(self, stream_label: str) -> Stream:
        return Stream.from_seed(self.seed, stream_label)
