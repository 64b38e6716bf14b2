"""Decentralized load-ranked service election.

Candidates are ranked by load (queued work divided by capacity); an
election round collects one rank per candidate inside a bounded window and
deterministically elects the minimum, breaking ties by least agent id. The
decision is a pure function of the collected rank set, so any observer
holding the same ranks computes the same winner without shared state.

Topic conventions (stable, auditable):
  election/<task-id>/rank     rank broadcasts
  election/<task-id>/result   the winning candidate
  election/<task-id>/open     re-election announcements carrying the task envelope
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import ElectionFailed, InvalidCapacity, NoServiceAvailable

RoundId = tuple[str, int]  # (task id, attempt number); ordered and unique


def rank_topic(task_id: str) -> str:
    return f"election/{task_id}/rank"


def result_topic(task_id: str) -> str:
    return f"election/{task_id}/result"


def open_topic(task_id: str) -> str:
    return f"election/{task_id}/open"


@dataclass(frozen=True)
class CandidateInfo:
    """A candidate's queued work and drain rate (work units per tick)."""

    agent: str
    pending_work: float
    capacity: float


@dataclass(frozen=True)
class LoadRank:
    candidate: str
    value: float
    rnd: Optional[RoundId] = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"load rank must be finite and non-negative, got {self.value}")


def compute_load(candidate: CandidateInfo, rnd: Optional[RoundId] = None) -> LoadRank:
    """Load rank = pending work / capacity."""
    if candidate.capacity <= 0:
        raise InvalidCapacity(f"candidate {candidate.agent} has capacity {candidate.capacity}")
    if candidate.pending_work < 0:
        raise ValueError(f"candidate {candidate.agent} has negative pending work")
    return LoadRank(candidate.agent, candidate.pending_work / candidate.capacity, rnd)


def select_least_loaded(candidates: list[CandidateInfo]) -> LoadRank:
    """Evaluate every candidate and pick the least loaded (ties: least id)."""
    if not candidates:
        raise NoServiceAvailable("no live candidates to evaluate")
    best: LoadRank | None = None
    for cand in candidates:
        rank = compute_load(cand)
        if best is None or (rank.value, rank.candidate) < (best.value, best.candidate):
            best = rank
    assert best is not None
    return best


@dataclass
class ElectionRound:
    """Bounded rank-collection window for one task attempt.

    Ranks are first-write-wins per candidate; anything arriving after the
    decision is counted as late. ``outcome`` never changes once set.
    """

    rnd: RoundId
    window_deadline: int
    expected_reporters: frozenset[str] = frozenset()
    opened_at: int = 0
    ranks: dict[str, LoadRank] = field(default_factory=dict)
    abstained: set[str] = field(default_factory=set)
    outcome: Optional[str] = None
    decided_at: Optional[int] = None
    late_ranks: int = 0

    @property
    def task_id(self) -> str:
        return self.rnd[0]

    @property
    def attempt(self) -> int:
        return self.rnd[1]

    @property
    def decided(self) -> bool:
        return self.outcome is not None

    def collect_rank(self, rank: LoadRank) -> bool:
        """Record a rank; returns False for duplicates or post-decision arrivals."""
        if self.decided:
            self.late_ranks += 1
            return False
        if rank.candidate in self.ranks:
            return False
        self.ranks[rank.candidate] = rank
        return True

    def collect_abstain(self, reporter: str) -> None:
        if not self.decided:
            self.abstained.add(reporter)

    def reporters_heard(self, reporter_of: dict[str, str]) -> set[str]:
        """Which expected reporters have spoken, given candidate->reporter ownership."""
        heard = set(self.abstained)
        for candidate in self.ranks:
            heard.add(reporter_of.get(candidate, candidate))
        return heard

    def complete(self, now: int, reporter_of: dict[str, str] | None = None) -> bool:
        """True when every expected reporter was heard or the window elapsed."""
        if now >= self.window_deadline:
            return True
        if not self.expected_reporters:
            return False
        return self.reporters_heard(reporter_of or {}) >= self.expected_reporters


def decide_leader(round_: ElectionRound, now: int) -> str:
    """Elect the minimum-rank candidate; ties go to the least agent id.

    Idempotent once decided. Raises ElectionFailed when the round closes
    with no ranks at all.
    """
    if round_.decided:
        assert round_.outcome is not None
        return round_.outcome
    if not round_.ranks:
        raise ElectionFailed(f"round {round_.rnd} closed with no ranks")
    winner = min(round_.ranks.values(), key=lambda r: (r.value, r.candidate))
    round_.outcome = winner.candidate
    round_.decided_at = now
    return winner.candidate


@dataclass
class HeartbeatState:
    """Missed-heartbeat failure detector.

    An agent is suspected iff ``now - last_seen > interval * misses_allowed``
    (strict inequality at the boundary).
    """

    interval_ticks: int = 5
    misses_allowed: int = 3
    last_seen: dict[str, int] = field(default_factory=dict)

    def record(self, agent: str, tick: int) -> None:
        prev = self.last_seen.get(agent)
        if prev is None or tick > prev:
            self.last_seen[agent] = tick

    def is_suspected(self, agent: str, now: int) -> bool:
        seen = self.last_seen.get(agent)
        if seen is None:
            return False
        return now - seen > self.interval_ticks * self.misses_allowed


def heartbeat_tick(state: HeartbeatState, now: int) -> list[str]:
    """All currently suspected agents, in id order."""
    limit = state.interval_ticks * state.misses_allowed
    return sorted(agent for agent, seen in state.last_seen.items() if now - seen > limit)
