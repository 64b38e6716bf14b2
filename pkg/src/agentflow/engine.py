"""Deterministic discrete-event engine.

One global queue ordered by (tick, sequence number); sequence numbers are
assigned at schedule time, so identical schedules replay identically. All
randomness is drawn from named streams derived from the run seed with
sha256, never from ``hash()``, so runs are reproducible across processes.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from typing import Any, Callable, Iterator, NamedTuple

from .errors import EngineOverrun


def derive_seed(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{seed}/{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class Event(NamedTuple):
    """One line of the run's event log."""

    tick: int
    kind: str
    agent: str | None = None
    topic: str | None = None
    task: str | None = None
    rnd: str | None = None
    detail: dict[str, Any] | None = None


class EventLog:
    """Append-only structured log; serializes to stable line-delimited JSON."""

    __slots__ = ("records",)

    def __init__(self) -> None:
        self.records: list[Event] = []

    def emit(
        self,
        tick: int,
        kind: str,
        agent: str | None = None,
        topic: str | None = None,
        task: str | None = None,
        rnd: str | None = None,
        detail: dict[str, Any] | None = None,
    ) -> None:
        self.records.append(Event(tick, kind, agent, topic, task, rnd, detail))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.records)

    def jsonl_lines(self) -> Iterator[str]:
        for ev in self.records:
            rec: dict[str, Any] = {"tick": ev.tick, "kind": ev.kind}
            if ev.agent is not None:
                rec["agent"] = ev.agent
            if ev.topic is not None:
                rec["topic"] = ev.topic
            if ev.task is not None:
                rec["task"] = ev.task
            if ev.rnd is not None:
                rec["round"] = ev.rnd
            if ev.detail is not None:
                rec["detail"] = ev.detail
            yield json.dumps(rec, separators=(",", ":"), sort_keys=False)

    def to_jsonl(self) -> str:
        return "\n".join(self.jsonl_lines()) + ("\n" if self.records else "")

    @staticmethod
    def parse_jsonl(text: str) -> "EventLog":
        """Parse a log written by :meth:`to_jsonl`. Raises ValueError on corrupt input."""
        log = EventLog()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                log.records.append(
                    Event(
                        int(rec["tick"]),
                        str(rec["kind"]),
                        rec.get("agent"),
                        rec.get("topic"),
                        rec.get("task"),
                        rec.get("round"),
                        rec.get("detail"),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"corrupt event log at line {lineno}: {exc}") from exc
        return log


class Engine:
    """Event loop with a logical clock in ticks.

    ``horizon`` is the operational window: recurring behaviors consult it
    and stop re-arming at or past it, after which the queue drains to
    quiescence. ``safety_cap`` bounds runaway schedules.
    """

    def __init__(self, seed: int, horizon: int, log: EventLog | None = None, safety_cap: int | None = None):
        self.seed = seed
        self.horizon = horizon
        self.log = log if log is not None else EventLog()
        self.now = 0
        self.safety_cap = safety_cap if safety_cap is not None else horizon * 10 + 1_000_000
        self._heap: list[tuple[int, int, Callable[..., None], tuple]] = []
        self._seq = 0
        self._streams: dict[str, random.Random] = {}

    def stream(self, name: str) -> random.Random:
        """Named RNG stream, stable across runs and processes."""
        rng = self._streams.get(name)
        if rng is None:
            rng = random.Random(derive_seed(self.seed, name))
            self._streams[name] = rng
        return rng

    def schedule_at(self, tick: int, fn: Callable[..., None], *args: Any) -> None:
        if tick < self.now:
            tick = self.now
        self._seq += 1
        heapq.heappush(self._heap, (tick, self._seq, fn, args))

    def schedule_in(self, delay: int, fn: Callable[..., None], *args: Any) -> None:
        self.schedule_at(self.now + delay, fn, *args)

    def pending(self) -> int:
        return len(self._heap)

    def run(self) -> int:
        """Process events until the queue drains; returns the final tick."""
        heap = self._heap
        pop = heapq.heappop
        cap = self.safety_cap
        while heap:
            tick, _, fn, args = pop(heap)
            if tick > cap:
                raise EngineOverrun(f"event at tick {tick} beyond safety cap {cap}")
            self.now = tick
            fn(*args)
        return self.now
