"""Experiment metrics computed from the event log.

Every measurement reads the structured event log rather than live engine
state, so a persisted log replays to the identical report. Times are in
ticks internally and reported in the units the tables use (ms or seconds,
via ticks_per_second).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, fields
from typing import Iterable

from ..engine import Event, EventLog


def _first_by_key(log: Iterable[Event], kind: str, key: str) -> dict[str, int]:
    out: dict[str, int] = {}
    for ev in log:
        if ev.kind == kind:
            k = getattr(ev, key)
            if k is not None and k not in out:
                out[k] = ev.tick
    return out


def nearest_rank_percentile(values: list[float], pct: float) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return ordered[rank - 1]


@dataclass
class TaskLedger:
    """Per-task lifecycle extracted from the log, plus the terminal buckets.

    Terminal classification precedence: Completed, then Orphaned-unrecovered
    (ever orphaned, never completed), then TimedOut, then Pending-at-end.
    """

    created: dict[str, int] = field(default_factory=dict)
    assigned: dict[str, int] = field(default_factory=dict)
    completed: dict[str, int] = field(default_factory=dict)
    timed_out: set[str] = field(default_factory=set)
    unserviceable: set[str] = field(default_factory=set)
    orphaned: dict[str, list[tuple[int, str]]] = field(default_factory=dict)  # task -> [(tick, node)]
    reassigned: set[str] = field(default_factory=set)

    @staticmethod
    def from_log(log: Iterable[Event]) -> "TaskLedger":
        ledger = TaskLedger()
        for ev in log:
            kind = ev.kind
            if kind == "task_created":
                ledger.created.setdefault(ev.task, ev.tick)
            elif kind == "task_assigned":
                ledger.assigned.setdefault(ev.task, ev.tick)
            elif kind == "task_completed":
                ledger.completed.setdefault(ev.task, ev.tick)
            elif kind == "task_timed_out":
                ledger.timed_out.add(ev.task)
            elif kind == "task_unserviceable":
                ledger.unserviceable.add(ev.task)
            elif kind == "task_orphaned":
                node = (ev.detail or {}).get("node", "?")
                ledger.orphaned.setdefault(ev.task, []).append((ev.tick, node))
            elif kind == "task_reassigned":
                ledger.reassigned.add(ev.task)
        return ledger

    def buckets(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for task in self.created:
            if task in self.completed:
                out[task] = "completed"
            elif task in self.orphaned:
                out[task] = "orphaned"
            elif task in self.timed_out or task in self.unserviceable:
                out[task] = "timed_out"
            else:
                out[task] = "pending"
        return out


def measure_assignment_latency(ledger: TaskLedger, ticks_per_second: int) -> tuple[float, float, int]:
    """Mean and p95 of (first assignment - creation), in ms."""
    scale = 1000.0 / ticks_per_second
    samples = [
        (ledger.assigned[t] - ledger.created[t]) * scale
        for t in ledger.created
        if t in ledger.assigned
    ]
    if not samples:
        return 0.0, 0.0, 0
    return sum(samples) / len(samples), nearest_rank_percentile(samples, 95.0), len(samples)


def measure_election_convergence(log: Iterable[Event], ticks_per_second: int = 1000) -> tuple[float, int]:
    """Mean (decide - open) over replacement rounds (attempt >= 2), in ms.

    Returns (0.0, 0) when the log contains no re-elections.
    """
    opens = _first_by_key(log, "round_open", "rnd")
    decides = _first_by_key(log, "round_decided", "rnd")
    scale = 1000.0 / ticks_per_second
    samples = []
    for label, decided_at in decides.items():
        attempt = int(label.rsplit("#", 1)[-1])
        if attempt >= 2 and label in opens:
            samples.append((decided_at - opens[label]) * scale)
    if not samples:
        return 0.0, 0
    return sum(samples) / len(samples), len(samples)


def measure_mttr(
    log: Iterable[Event],
    ledger: TaskLedger,
    ticks_per_second: int,
    observation_end: int,
) -> tuple[float, int, int, int, int]:
    """Mean time from a node failure to the first completed task it orphaned.

    Failures whose orphans never complete contribute their observation
    window (flagged unrecovered); failures that orphaned nothing are
    excluded from the mean and counted separately.

    Returns (mttr_seconds, failures, recovered, unrecovered, without_orphans).
    """
    failures = [(ev.tick, ev.agent) for ev in log if ev.kind == "fault_injected"]
    orphans_by_node: dict[str, list[str]] = {}
    for task, events in ledger.orphaned.items():
        for _, node in events:
            orphans_by_node.setdefault(node, []).append(task)
    samples: list[float] = []
    recovered = unrecovered = without_orphans = 0
    for tick, node in failures:
        tasks = orphans_by_node.get(node, [])
        if not tasks:
            without_orphans += 1
            continue
        completions = [ledger.completed[t] for t in tasks if t in ledger.completed and ledger.completed[t] >= tick]
        if completions:
            recovered += 1
            samples.append((min(completions) - tick) / ticks_per_second)
        else:
            unrecovered += 1
            samples.append(max(0, observation_end - tick) / ticks_per_second)
    mttr = sum(samples) / len(samples) if samples else 0.0
    return mttr, len(failures), recovered, unrecovered, without_orphans


def measure_throughput_deviation(
    ledger: TaskLedger,
    pre_end: int,
    post_start: int,
    window_ticks: int,
    ticks_per_second: int,
) -> tuple[float, float, float]:
    """Relative completed-tasks-per-second change before vs after failures.

    Compares equal-length windows [pre_end - w, pre_end) — before the first
    failure — and [post_start, post_start + w) — after the last one.
    Returns (deviation_pct, pre_rate, post_rate); a zero pre-failure rate
    yields a zero deviation that callers must flag.
    """
    if window_ticks <= 0:
        return 0.0, 0.0, 0.0
    pre = post = 0
    lo, hi = pre_end - window_ticks, post_start + window_ticks
    for tick in ledger.completed.values():
        if lo <= tick < pre_end:
            pre += 1
        elif post_start <= tick < hi:
            post += 1
    seconds = window_ticks / ticks_per_second
    pre_rate, post_rate = pre / seconds, post / seconds
    if pre_rate == 0.0:
        return 0.0, pre_rate, post_rate
    return abs(pre_rate - post_rate) / pre_rate * 100.0, pre_rate, post_rate


def measure_overhead(log: Iterable[Event], duration_ticks: int, ticks_per_second: int) -> float:
    """Published messages per live-agent-second inside the operational window."""
    published = 0
    spawned: dict[str, int] = {}
    stopped: dict[str, int] = {}
    for ev in log:
        if ev.kind == "publish":
            if ev.tick <= duration_ticks:
                published += 1
        elif ev.kind == "spawn":
            spawned.setdefault(ev.agent, ev.tick)
        elif ev.kind == "agent_state":
            if (ev.detail or {}).get("state") in ("failed", "terminated") and ev.agent not in stopped:
                stopped[ev.agent] = ev.tick
    live_ticks = 0
    for agent, start in spawned.items():
        end = min(stopped.get(agent, duration_ticks), duration_ticks)
        live_ticks += max(0, end - min(start, duration_ticks))
    if live_ticks == 0:
        return 0.0
    return published / (live_ticks / ticks_per_second)


@dataclass
class MetricsReport:
    """Flat, serializable report; one row per run."""

    seed: int = 0
    duration_ticks: int = 0
    end_tick: int = 0
    tasks_generated: int = 0
    tasks_completed: int = 0
    tasks_timed_out: int = 0
    tasks_unserviceable: int = 0
    orphaned_task_count: int = 0
    tasks_pending_at_end: int = 0
    tasks_orphaned_total: int = 0
    tasks_reassigned: int = 0
    success_rate_pct: float = 0.0
    mean_assignment_latency_ms: float = 0.0
    p95_assignment_latency_ms: float = 0.0
    mean_election_convergence_ms: float = 0.0
    reelections: int = 0
    messages_per_agent_per_sec: float = 0.0
    mttr_seconds: float = 0.0
    failures_injected: int = 0
    failures_recovered: int = 0
    failures_unrecovered: int = 0
    failures_without_orphans: int = 0
    throughput_deviation_pct: float = 0.0
    reassignment_success_rate_pct: float = 0.0
    published_messages: int = 0
    delivered_messages: int = 0
    dropped_messages: int = 0
    discarded_deliveries: int = 0
    late_ranks: int = 0
    duplicate_responses: int = 0
    malformed_requests: int = 0
    flags: str = ""

    def validate(self) -> None:
        assert 0.0 <= self.success_rate_pct <= 100.0
        assert 0.0 <= self.reassignment_success_rate_pct <= 100.0
        assert self.mean_assignment_latency_ms >= 0.0 and self.mttr_seconds >= 0.0
        total = (
            self.tasks_completed
            + self.tasks_timed_out
            + self.orphaned_task_count
            + self.tasks_pending_at_end
        )
        assert total == self.tasks_generated, f"task buckets {total} != generated {self.tasks_generated}"

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @staticmethod
    def csv_header() -> list[str]:
        return [f.name for f in fields(MetricsReport)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.csv_header())
        writer.writerow([getattr(self, name) for name in self.csv_header()])
        return buf.getvalue()


def compute_metrics(log: EventLog, duration_ticks: int, ticks_per_second: int, seed: int) -> MetricsReport:
    ledger = TaskLedger.from_log(log)
    buckets = ledger.buckets()
    generated = len(ledger.created)
    completed = sum(1 for b in buckets.values() if b == "completed")
    timed_out = sum(1 for b in buckets.values() if b == "timed_out")
    orphaned_final = sum(1 for b in buckets.values() if b == "orphaned")
    pending = sum(1 for b in buckets.values() if b == "pending")
    end_tick = log.records[-1].tick if log.records else 0

    flags: list[str] = []
    if generated == 0:
        success = 100.0
        flags.append("success_rate_vacuous")
    else:
        success = completed / generated * 100.0

    mean_lat, p95_lat, assigned_count = measure_assignment_latency(ledger, ticks_per_second)
    if assigned_count == 0:
        flags.append("no_assignments")

    convergence, reelections = measure_election_convergence(log, ticks_per_second)
    if reelections == 0:
        flags.append("no_reelections")

    mttr, failures, recovered, unrecovered, no_orphans = measure_mttr(log, ledger, ticks_per_second, end_tick)
    if failures == 0:
        flags.append("no_failures")
    if unrecovered:
        flags.append("mttr_unrecovered")

    failure_ticks = [ev.tick for ev in log if ev.kind == "fault_injected"]
    if failure_ticks:
        first, last = min(failure_ticks), max(failure_ticks)
        window = min(first, duration_ticks - last)
        deviation, pre_rate, _ = measure_throughput_deviation(ledger, first, last, window, ticks_per_second)
        if pre_rate == 0.0:
            flags.append("deviation_undefined")
    else:
        deviation = 0.0
        flags.append("deviation_no_failures")

    orphaned_total = len(ledger.orphaned)
    if orphaned_total == 0:
        reassignment_success = 100.0
        flags.append("no_orphans")
    else:
        recovered_tasks = sum(1 for t in ledger.orphaned if t in ledger.completed)
        reassignment_success = recovered_tasks / orphaned_total * 100.0

    counts = {"deliver": 0, "drop": 0, "discard": 0, "late_rank": 0, "duplicate_response": 0, "malformed_request": 0, "publish": 0}
    for ev in log:
        if ev.kind in counts:
            counts[ev.kind] += 1

    report = MetricsReport(
        seed=seed,
        duration_ticks=duration_ticks,
        end_tick=end_tick,
        tasks_generated=generated,
        tasks_completed=completed,
        tasks_timed_out=timed_out,
        tasks_unserviceable=len(ledger.unserviceable),
        orphaned_task_count=orphaned_final,
        tasks_pending_at_end=pending,
        tasks_orphaned_total=orphaned_total,
        tasks_reassigned=len(ledger.reassigned),
        success_rate_pct=success,
        mean_assignment_latency_ms=mean_lat,
        p95_assignment_latency_ms=p95_lat,
        mean_election_convergence_ms=convergence,
        reelections=reelections,
        messages_per_agent_per_sec=measure_overhead(log, duration_ticks, ticks_per_second),
        mttr_seconds=mttr,
        failures_injected=failures,
        failures_recovered=recovered,
        failures_unrecovered=unrecovered,
        failures_without_orphans=no_orphans,
        throughput_deviation_pct=deviation,
        reassignment_success_rate_pct=reassignment_success,
        published_messages=counts["publish"],
        delivered_messages=counts["deliver"],
        dropped_messages=counts["drop"],
        discarded_deliveries=counts["discard"],
        late_ranks=counts["late_rank"],
        duplicate_responses=counts["duplicate_response"],
        malformed_requests=counts["malformed_request"],
        flags=";".join(flags),
    )
    report.validate()
    return report
