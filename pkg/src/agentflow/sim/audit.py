"""Invariant audits over a recorded event log.

Each audit returns a list of violation descriptions (empty = pass). They
run both as post-run self-checks and against persisted logs via the replay
command, so they rely only on log contents plus the network latency bounds.
"""

from __future__ import annotations

from ..engine import EventLog
from .metrics import TaskLedger

MAX_VIOLATIONS = 20


def _clip(violations: list[str]) -> list[str]:
    if len(violations) > MAX_VIOLATIONS:
        return violations[:MAX_VIOLATIONS] + [f"... {len(violations) - MAX_VIOLATIONS} more"]
    return violations


def audit_selectivity(log: EventLog) -> list[str]:
    """Deliveries require a subscription that matched when the message was sent,
    and reply topics must reach exactly their issuing client."""
    violations: list[str] = []
    open_subs: dict[int, tuple[str, str, int]] = {}  # sub id -> (agent, filter, since)
    issued: set[tuple[str, str]] = set()  # (client, correlation)
    exact: dict[tuple[str, str], list[tuple[int, int | None]]] = {}  # (agent, topic) -> spans
    prefixes: dict[str, list[tuple[str, int, int | None]]] = {}  # agent -> (prefix, since, until)

    def close(agent: str, filt: str, since: int, until: int | None) -> None:
        if filt.split("/")[-1] == "#":
            prefixes.setdefault(agent, []).append((filt[:-1], since, until))
        else:
            exact.setdefault((agent, filt), []).append((since, until))

    for ev in log:
        if ev.kind == "subscribe":
            sid = (ev.detail or {}).get("sub")
            if sid is not None:
                open_subs[sid] = (ev.agent, ev.topic, ev.tick)
        elif ev.kind == "unsubscribe":
            sid = (ev.detail or {}).get("sub")
            sub = open_subs.pop(sid, None)
            if sub is not None:
                close(sub[0], sub[1], sub[2], ev.tick)
        elif ev.kind == "request_attempt":
            corr = (ev.detail or {}).get("correlation")
            if corr:
                issued.add((ev.agent, corr))
    for agent, filt, since in open_subs.values():
        close(agent, filt, since, None)

    for ev in log:
        if ev.kind != "deliver":
            continue
        topic = ev.topic
        sent = (ev.detail or {}).get("sent", ev.tick)
        matched = any(
            since <= sent and (until is None or sent < until)
            for since, until in exact.get((ev.agent, topic), ())
        ) or any(
            since <= sent and (until is None or sent < until) and topic.startswith(prefix)
            for prefix, since, until in prefixes.get(ev.agent, ())
        )
        if not matched:
            violations.append(f"tick {ev.tick}: {ev.agent} received {topic} without a matching subscription")
        if topic.startswith("reply/"):
            parts = topic.split("/")
            if len(parts) == 3:
                client, correlation = parts[1], parts[2]
                if ev.agent != client:
                    violations.append(f"tick {ev.tick}: response for {client} delivered to {ev.agent}")
                elif (client, correlation) not in issued:
                    violations.append(f"tick {ev.tick}: response with unknown correlation {correlation}")
    return _clip(violations)


def audit_argmin(log: EventLog) -> list[str]:
    """Every recorded decision must equal the brute-force argmin of its
    collected ranks, ties broken by least agent id."""
    violations: list[str] = []
    for ev in log:
        if ev.kind != "round_decided":
            continue
        detail = ev.detail or {}
        collected = detail.get("collected") or {}
        winner = detail.get("winner")
        if not collected:
            violations.append(f"round {ev.rnd}: decision with no collected ranks")
            continue
        best = min(collected.items(), key=lambda kv: (kv[1], kv[0]))
        if winner != best[0]:
            violations.append(f"round {ev.rnd}: winner {winner} but argmin is {best[0]}")
        elif any(collected[winner] > v for v in collected.values()):
            violations.append(f"round {ev.rnd}: winner {winner} does not hold the minimum value")
    return _clip(violations)


def audit_single_decision(log: EventLog) -> list[str]:
    """Observers that decided on the full rank set must agree per round."""
    violations: list[str] = []
    winners: dict[str, str] = {}
    for ev in log:
        if ev.kind != "round_decided":
            continue
        detail = ev.detail or {}
        if not detail.get("full", False):
            continue
        winner = detail.get("winner")
        prev = winners.setdefault(ev.rnd, winner)
        if prev != winner:
            violations.append(f"round {ev.rnd}: full-set observers disagree ({prev} vs {winner})")
    return _clip(violations)


def audit_conservation(log: EventLog) -> list[str]:
    """Generated tasks reconcile exactly with the terminal buckets."""
    violations: list[str] = []
    ledger = TaskLedger.from_log(log)
    buckets = ledger.buckets()
    counts = {"completed": 0, "orphaned": 0, "timed_out": 0, "pending": 0}
    for bucket in buckets.values():
        counts[bucket] += 1
    if sum(counts.values()) != len(ledger.created):
        violations.append(f"buckets {counts} do not sum to generated {len(ledger.created)}")
    for name, tasks in (("completed", ledger.completed), ("assigned", ledger.assigned)):
        ghosts = [t for t in tasks if t not in ledger.created]
        if ghosts:
            violations.append(f"{name} tasks never created: {sorted(ghosts)[:5]}")
    return _clip(violations)


def audit_latency_bounds(log: EventLog, latency_lo: int, latency_hi: int) -> list[str]:
    """Every delivery happens sent_at + d with lo <= d <= hi."""
    violations: list[str] = []
    for ev in log:
        if ev.kind != "deliver":
            continue
        sent = (ev.detail or {}).get("sent")
        if sent is None:
            continue
        d = ev.tick - sent
        if not (latency_lo <= d <= latency_hi):
            violations.append(f"tick {ev.tick}: delivery delay {d} outside [{latency_lo}, {latency_hi}]")
    return _clip(violations)


def audit_serialized_handlers(log: EventLog) -> list[str]:
    """handler_start/handler_end strictly alternate per agent."""
    violations: list[str] = []
    running: dict[str, bool] = {}
    for ev in log:
        if ev.kind == "handler_start":
            if running.get(ev.agent, False):
                violations.append(f"tick {ev.tick}: {ev.agent} started a handler while one is running")
            running[ev.agent] = True
        elif ev.kind == "handler_end":
            if not running.get(ev.agent, False):
                violations.append(f"tick {ev.tick}: {ev.agent} ended a handler that never started")
            running[ev.agent] = False
    return _clip(violations)


def run_audits(log: EventLog, latency_lo: int = 0, latency_hi: int = 10**9) -> dict[str, list[str]]:
    return {
        "selectivity": audit_selectivity(log),
        "argmin": audit_argmin(log),
        "single_decision": audit_single_decision(log),
        "conservation": audit_conservation(log),
        "latency_bounds": audit_latency_bounds(log, latency_lo, latency_hi),
        "serialized_handlers": audit_serialized_handlers(log),
    }


def failed_audits(results: dict[str, list[str]]) -> list[str]:
    return [name for name, violations in results.items() if violations]
