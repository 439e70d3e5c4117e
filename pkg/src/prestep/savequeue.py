"""Asynchronous save path: enqueue now, persist soon, retry with
stochastic exponential backoff.

The interaction path never waits on storage: `enqueue` accepts a record
and returns. A single drain worker per store attempts writes; a failed
write reschedules the record after a jittered exponential delay, which
spreads retries out instead of hammering a struggling store in lockstep.

Ordering: records are durable in enqueue order per session. A session's
next record is not attempted until its predecessor lands, so retries
cannot reorder one participant's stream (head-of-line blocking is per
session only; other sessions keep draining).

Records that exhaust their retry budget move to a dead-letter sink and
the session is flagged; they are quarantined, never silently dropped.

Time is injected: `pump(now_ms)` runs everything due at `now_ms` and
reports when to wake next. The asyncio driver feeds it the real clock;
tests feed it a virtual one.
"""

from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import PrestepError
from .logstore import RecordStore, StoreWriteError


class QueueFullError(PrestepError):
    """Backpressure: the caller must pause interaction (an explicit
    "saving" state) rather than drop the record."""


@dataclass(frozen=True, slots=True)
class BackoffPolicy:
    base_ms: float = 100.0
    jitter: float = 0.5
    cap_ms: float = 30000.0
    max_attempts: int = 8


def backoff_delay(
    attempt: int,
    base_ms: float,
    jitter: float,
    cap_ms: float = float("inf"),
    gen: np.random.Generator | None = None,
) -> float:
    """Delay before retry `attempt` (0-based): uniform in
    [base * 2^attempt * (1 - jitter), base * 2^attempt * (1 + jitter)],
    then capped at `cap_ms`."""
    if attempt < 0:
        raise ValueError("attempt must be >= 0")
    if not 0.0 <= jitter < 1.0:
        raise ValueError("jitter must be in [0, 1)")
    center = base_ms * (2.0 ** attempt)
    lo = center * (1.0 - jitter)
    hi = center * (1.0 + jitter)
    sample = lo if gen is None and jitter == 0.0 else (gen or np.random.default_rng()).uniform(lo, hi)
    return min(float(sample), cap_ms)


@dataclass(slots=True)
class SaveTask:
    payload: bytes
    session_id: str
    attempts: int = 0
    next_attempt_ms: float = 0.0


@dataclass(slots=True)
class _SessionLane:
    tasks: deque = field(default_factory=deque)
    next_attempt_ms: float = 0.0


class SaveQueue:
    """Per-session-ordered retry queue over a `RecordStore`."""

    def __init__(
        self,
        store: RecordStore,
        policy: BackoffPolicy = BackoffPolicy(),
        *,
        seed: int = 0,
        capacity: int = 100_000,
        on_dead_letter: Callable[[SaveTask], None] | None = None,
        on_saved: Callable[[SaveTask], None] | None = None,
    ):
        self.store = store
        self.policy = policy
        self.capacity = capacity
        self._lanes: "OrderedDict[str, _SessionLane]" = OrderedDict()
        self._pending = 0
        self._gen = np.random.Generator(np.random.Philox(key=seed))
        self._on_dead_letter = on_dead_letter
        self._on_saved = on_saved
        self.dead_letters: list[SaveTask] = []
        self.flagged_sessions: set[str] = set()
        self.sampled_delays: list[tuple[int, float]] = []  # (attempt, delay) audit trail

    @property
    def pending(self) -> int:
        return self._pending

    def is_idle(self) -> bool:
        return self._pending == 0

    def enqueue(self, payload: bytes, session_id: str, now_ms: float = 0.0) -> None:
        """Accept a record for eventual durability. Returns immediately;
        raises QueueFullError as backpressure when at capacity."""
        if self._pending >= self.capacity:
            raise QueueFullError(f"save queue at capacity ({self.capacity})")
        lane = self._lanes.get(session_id)
        if lane is None:
            lane = _SessionLane()
            self._lanes[session_id] = lane
        if not lane.tasks:
            lane.next_attempt_ms = now_ms
        lane.tasks.append(SaveTask(payload=payload, session_id=session_id, next_attempt_ms=now_ms))
        self._pending += 1

    def pump(self, now_ms: float) -> float | None:
        """Attempt every lane whose head is due. Returns the earliest
        next-attempt time still pending, or None when drained."""
        for session_id in list(self._lanes.keys()):
            lane = self._lanes[session_id]
            while lane.tasks and lane.next_attempt_ms <= now_ms:
                task: SaveTask = lane.tasks[0]
                try:
                    self.store.append(task.payload)
                except StoreWriteError:
                    task.attempts += 1
                    if task.attempts >= self.policy.max_attempts:
                        lane.tasks.popleft()
                        self._pending -= 1
                        self.dead_letters.append(task)
                        self.flagged_sessions.add(session_id)
                        if self._on_dead_letter:
                            self._on_dead_letter(task)
                        lane.next_attempt_ms = now_ms
                        continue
                    delay = backoff_delay(
                        task.attempts - 1,
                        self.policy.base_ms,
                        self.policy.jitter,
                        self.policy.cap_ms,
                        self._gen,
                    )
                    self.sampled_delays.append((task.attempts - 1, delay))
                    # next-attempt times strictly increase per task
                    task.next_attempt_ms = now_ms + delay
                    lane.next_attempt_ms = task.next_attempt_ms
                else:
                    task.attempts += 1
                    lane.tasks.popleft()
                    self._pending -= 1
                    if self._on_saved:
                        self._on_saved(task)
                    lane.next_attempt_ms = now_ms
            if not lane.tasks:
                del self._lanes[session_id]
        nexts = [lane.next_attempt_ms for lane in self._lanes.values() if lane.tasks]
        return min(nexts) if nexts else None

    def drain(self, start_ms: float = 0.0, deadline_ms: float = float("inf")) -> float:
        """Pump on virtual time until empty (tests, shutdown). Returns
        the virtual time at which the queue drained."""
        now = start_ms
        while True:
            nxt = self.pump(now)
            if nxt is None:
                self.store.flush()
                return now
            if nxt > deadline_ms:
                raise TimeoutError(f"queue not drained by {deadline_ms} ms ({self._pending} pending)")
            now = max(nxt, now)
