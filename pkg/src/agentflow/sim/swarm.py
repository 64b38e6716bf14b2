"""Swarm agents: AMR clients, controller services, and loading coordinators.

Message flow for one task:

  1. the issuing AMR publishes a request on ``task/request`` through its
     request courier (unique reply topic embedded in the envelope);
  2. every coordinator opens the round locally and broadcasts the load rank
     of its cluster champion on ``election/<task>/rank`` (or an abstain when
     it has no live member);
  3. each coordinator decides once every cluster reported or the election
     window elapses; the coordinator owning the winning controller
     dispatches (``ctrl/<id>/task``) and publishes the result record;
  4. the controller executes (work / capacity ticks) and responds to the
     coordinator, which forwards the result to the AMR's reply topic.

Controllers heartbeat to their own coordinator with their queued work
piggybacked; missed heartbeats mark a controller suspected, orphan its
in-flight tasks, and open replacement rounds announced on
``election/<task>/open`` so any cluster can win the re-election.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Optional

from ..agents import AgentContext, Behavior
from ..election import (
    CandidateInfo,
    ElectionRound,
    LoadRank,
    RoundId,
    decide_leader,
    open_topic,
    rank_topic,
    result_topic,
    select_least_loaded,
)
from ..logistics import Envelope, RequestLogistic, ResponseLogistic, decode_envelope
from ..messaging.broker import Message

TASK_REQUEST_TOPIC = "task/request"


def _round_label(task_id: str, attempt: int) -> str:
    return f"{task_id}#{attempt}"


def _loads(payload: bytes) -> dict:
    return json.loads(payload.decode("utf-8"))


def _dumps(doc: dict) -> bytes:
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


class AmrBehavior(Behavior):
    """Client agent: one request per generated task, first response wins."""

    def __init__(self, agent_id: str, timeout_ticks: int, max_retries: int, backoff_ticks: int):
        self.courier = RequestLogistic(
            client=agent_id,
            service_topic=TASK_REQUEST_TOPIC,
            timeout_ticks=timeout_ticks,
            max_retries=max_retries,
            backoff_ticks=backoff_ticks,
        )
        self.task_of: dict[str, str] = {}  # correlation -> task id

    def on_timer(self, ctx: AgentContext, tag: str, data=None) -> None:
        if tag == "task":
            task_id, work = data
            ctx.log("task_created", task=task_id, detail={"work": work, "client": ctx.id})
            body = _dumps({"task": task_id, "work": work})
            req = self.courier.send_request(ctx, body)
            self.task_of[req.correlation] = task_id
            return
        if tag == "request-deadline":
            timed_out = self.courier.on_timer(ctx, tag, data)
            if timed_out is not None:
                task_id = self.task_of.get(timed_out.correlation, "?")
                ctx.log("task_timed_out", task=task_id, detail={"correlation": timed_out.correlation})

    def on_message(self, ctx: AgentContext, msg: Message) -> None:
        done = self.courier.handle_message(ctx, msg)
        if done is None:
            return
        task_id = self.task_of.get(done.correlation, "?")
        doc = _loads(done.response or b"{}")
        if doc.get("status") == "done":
            ctx.log("task_completed", task=task_id, detail={"attempts": done.attempts_used})
        else:
            ctx.log("task_unserviceable", task=task_id, detail={"status": doc.get("status")})


class ControllerBehavior(Behavior):
    """Service agent: FIFO task execution at a fixed capacity, heartbeats to its coordinator."""

    def __init__(
        self,
        agent_id: str,
        coordinator: str,
        capacity_per_tick: float,
        heartbeat_interval: int,
        heartbeat_offset: int,
    ):
        self.id = agent_id
        self.coordinator = coordinator
        self.capacity_per_tick = capacity_per_tick
        self.heartbeat_interval = heartbeat_interval
        self.heartbeat_offset = heartbeat_offset
        self.responder = ResponseLogistic(service=agent_id)
        self.queue: deque[tuple[str, int, Envelope, float]] = deque()
        self.pending_work = 0.0
        self.running = False

    def on_start(self, ctx: AgentContext) -> None:
        ctx.subscribe(f"ctrl/{self.id}/task")
        ctx.schedule(1 + self.heartbeat_offset, "hb")

    def on_timer(self, ctx: AgentContext, tag: str, data=None) -> None:
        if tag == "hb":
            # hot path: the piggybacked load rides as a bare decimal string
            ctx.publish(f"hb/{self.coordinator}/{self.id}", repr(self.pending_work).encode("ascii"))
            if ctx.now + self.heartbeat_interval <= ctx.horizon:
                ctx.schedule(self.heartbeat_interval, "hb")
            return
        if tag == "exec":
            task_id, attempt, envelope, work = data
            self.pending_work = max(0.0, self.pending_work - work)
            self.running = False
            ctx.log("task_executed", task=task_id, detail={"attempt": attempt})
            self.responder.respond(ctx, envelope, _dumps({"task": task_id, "status": "done"}))
            self._start_next(ctx)

    def on_message(self, ctx: AgentContext, msg: Message) -> None:
        # dispatches are enqueued and answered on completion, not inline
        try:
            env = decode_envelope(msg.payload)
        except Exception:
            self.responder.malformed_requests += 1
            ctx.log("malformed_request", topic=msg.topic)
            return
        doc = _loads(env.body)
        task_id = doc["task"]
        attempt = int(doc["attempt"])
        work = float(doc["work"])
        self.queue.append((task_id, attempt, env, work))
        self.pending_work += work
        ctx.log("task_assigned", task=task_id, detail={"attempt": attempt, "controller": self.id})
        self._start_next(ctx)

    def _start_next(self, ctx: AgentContext) -> None:
        if self.running or not self.queue:
            return
        task_id, attempt, envelope, work = self.queue.popleft()
        self.running = True
        exec_ticks = max(1, round(work / self.capacity_per_tick))
        ctx.log("task_started", task=task_id, detail={"attempt": attempt, "exec_ticks": exec_ticks})
        ctx.schedule(exec_ticks, "exec", (task_id, attempt, envelope, work))


@dataclass
class _RoundState:
    round: ElectionRound
    envelope: Optional[Envelope] = None
    work: float = 0.0
    rank_sent: bool = False
    dispatched: bool = False
    deadline_armed: bool = False


@dataclass
class _Assignment:
    task_id: str
    attempt: int
    controller: str
    client_envelope: Envelope
    work: float
    dispatched_at: int


class CoordinatorBehavior(Behavior):
    """Loading coordinator for one controller cluster.

    Tracks member liveness and load through heartbeats, represents the
    cluster in elections with its least-loaded member, dispatches tasks it
    wins, forwards responses to clients, and re-elects in-flight tasks of
    suspected members.
    """

    def __init__(
        self,
        agent_id: str,
        members: list[str],
        capacities_per_tick: dict[str, float],
        all_coordinators: list[str],
        owner_of: dict[str, str],
        election_window: int,
        heartbeat_interval: int,
        misses_allowed: int,
        dispatch_timeout: int,
        max_election_attempts: int,
        cost_ticks: int,
    ):
        self.id = agent_id
        self.members = list(members)
        self.capacities = capacities_per_tick
        self.all_coordinators = frozenset(all_coordinators)
        self.home_coordinator = min(all_coordinators)
        self.owner_of = owner_of  # controller id -> coordinator id
        self.election_window = election_window
        self.heartbeat_interval = heartbeat_interval
        self.suspect_after = heartbeat_interval * misses_allowed
        self.dispatch_timeout = dispatch_timeout
        self.max_election_attempts = max_election_attempts
        self.cost_ticks = cost_ticks
        self.last_seen: dict[str, int] = {}
        self.pending_view: dict[str, float] = {}
        self.alive: set[str] = set(members)
        self.rounds: dict[RoundId, _RoundState] = {}
        self.latest_attempt: dict[str, int] = {}
        self.assignments: dict[str, _Assignment] = {}
        self.dispatch_couriers: dict[str, RequestLogistic] = {}
        self.dispatch_index: dict[str, tuple[str, int, str]] = {}  # correlation -> (task, attempt, ctrl)
        self.responder = ResponseLogistic(service=agent_id)
        self.late_ranks = 0
        # couriers share this coordinator's identity, so correlations must be
        # allocated centrally to stay unique per client
        self._dispatch_counter = 0

    # -- lifecycle -----------------------------------------------------------

    def on_start(self, ctx: AgentContext) -> None:
        ctx.subscribe(TASK_REQUEST_TOPIC)
        ctx.subscribe("election/#")
        ctx.subscribe(f"hb/{self.id}/#")
        for member in self.members:
            self.last_seen[member] = 0
            self.pending_view[member] = 0.0
            self.dispatch_couriers[member] = RequestLogistic(
                client=self.id,
                service_topic=f"ctrl/{member}/task",
                timeout_ticks=self.dispatch_timeout,
                max_retries=0,
            )
        ctx.schedule(self.heartbeat_interval, "suspect-check")

    def processing_cost(self, msg: Message) -> int:
        if msg.topic.startswith("hb/") or msg.topic.startswith("reply/"):
            return 0
        return self.cost_ticks

    # -- message handling ------------------------------------------------------

    def on_message(self, ctx: AgentContext, msg: Message) -> None:
        topic = msg.topic
        if topic.startswith("hb/"):
            member = topic.rsplit("/", 1)[-1]
            self.last_seen[member] = msg.sent_at
            self.pending_view[member] = float(msg.payload)
            return
        if topic == TASK_REQUEST_TOPIC:
            self._on_task_request(ctx, msg)
            return
        if topic.startswith("election/"):
            kind = topic.rsplit("/", 1)[-1]
            if kind == "rank":
                self._on_rank(ctx, msg)
            elif kind == "open":
                self._on_open(ctx, msg)
            # result records are informational; every coordinator already
            # decided locally from the same rank set
            return
        if topic.startswith(f"reply/{self.id}/"):
            self._on_controller_response(ctx, msg)

    def on_timer(self, ctx: AgentContext, tag: str, data=None) -> None:
        if tag == "suspect-check":
            self._suspect_sweep(ctx)
            if ctx.now + self.heartbeat_interval <= ctx.horizon:
                ctx.schedule(self.heartbeat_interval, "suspect-check")
            return
        if tag == "round-deadline":
            state = self.rounds.get(tuple(data))
            if state is not None:
                self._maybe_decide(ctx, state)

    # -- election ---------------------------------------------------------------

    def _on_task_request(self, ctx: AgentContext, msg: Message) -> None:
        try:
            envelope = decode_envelope(msg.payload)
        except Exception as exc:
            self.responder.malformed_requests += 1
            ctx.log("malformed_request", topic=msg.topic, detail={"error": str(exc)})
            return
        doc = _loads(envelope.body)
        task_id = doc["task"]
        attempt = max(1, self.latest_attempt.get(task_id, 0))
        state = self._open_round(ctx, (task_id, attempt), envelope, float(doc.get("work", 1.0)))
        self._send_rank(ctx, state)
        self._after_update(ctx, state)

    def _on_open(self, ctx: AgentContext, msg: Message) -> None:
        doc = _loads(msg.payload)
        rnd: RoundId = (doc["task"], int(doc["attempt"]))
        envelope = Envelope(doc["reply_topic"], doc["correlation"], _dumps({"task": doc["task"], "work": doc["work"]}))
        state = self._open_round(ctx, rnd, envelope, float(doc["work"]))
        self._send_rank(ctx, state)
        self._after_update(ctx, state)

    def _on_rank(self, ctx: AgentContext, msg: Message) -> None:
        doc = _loads(msg.payload)
        rnd: RoundId = (doc["task"], int(doc["attempt"]))
        state = self._open_round(ctx, rnd, None, float(doc.get("work", 1.0)))
        if state.round.decided:
            self.late_ranks += 1
            ctx.log("late_rank", task=rnd[0], rnd=_round_label(*rnd), detail={"reporter": doc["reporter"]})
            return
        if doc.get("candidate") is None:
            state.round.collect_abstain(doc["reporter"])
        else:
            state.round.collect_rank(LoadRank(doc["candidate"], float(doc["value"]), rnd))
        self._after_update(ctx, state)

    def _after_update(self, ctx: AgentContext, state: _RoundState) -> None:
        """Drive the round forward; also covers an envelope arriving post-decision."""
        if not state.round.decided:
            self._maybe_decide(ctx, state)
            return
        winner = state.round.outcome
        if winner and not state.dispatched and self.owner_of.get(winner) == self.id:
            self._assign(ctx, state, winner)

    def _open_round(self, ctx: AgentContext, rnd: RoundId, envelope: Optional[Envelope], work: float) -> _RoundState:
        state = self.rounds.get(rnd)
        if state is None:
            state = _RoundState(
                round=ElectionRound(
                    rnd=rnd,
                    window_deadline=ctx.now + self.election_window,
                    expected_reporters=self.all_coordinators,
                    opened_at=ctx.now,
                )
            )
            self.rounds[rnd] = state
            ctx.log("round_open", task=rnd[0], rnd=_round_label(*rnd))
        if envelope is not None and state.envelope is None:
            state.envelope = envelope
            state.work = work
        if rnd[1] > self.latest_attempt.get(rnd[0], 0):
            self.latest_attempt[rnd[0]] = rnd[1]
        if not state.deadline_armed:
            state.deadline_armed = True
            ctx.schedule(self.election_window, "round-deadline", rnd)
        return state

    def _send_rank(self, ctx: AgentContext, state: _RoundState) -> None:
        # the publisher collects its own rank from the wire like everyone
        # else, so every observer sees the same arrival sequence
        if state.rank_sent or state.round.decided:
            return
        state.rank_sent = True
        task_id, attempt = state.round.rnd
        live = [
            CandidateInfo(m, self.pending_view[m], self.capacities[m])
            for m in self.members
            if m in self.alive
        ]
        doc: dict = {"task": task_id, "attempt": attempt, "reporter": self.id, "work": state.work}
        if live:
            champion = select_least_loaded(live)
            doc["candidate"] = champion.candidate
            doc["value"] = champion.value
        else:
            doc["candidate"] = None
        ctx.publish(rank_topic(task_id), _dumps(doc))

    def _maybe_decide(self, ctx: AgentContext, state: _RoundState) -> None:
        round_ = state.round
        if round_.decided or not round_.complete(ctx.now, self.owner_of):
            return
        task_id, attempt = round_.rnd
        label = _round_label(task_id, attempt)
        if not round_.ranks:
            round_.outcome = ""  # closed, no winner
            round_.decided_at = ctx.now
            heard_all = round_.reporters_heard(self.owner_of) >= round_.expected_reporters
            ctx.log("round_failed", task=task_id, rnd=label, detail={"reason": "no_candidates" if heard_all else "no_ranks"})
            if self.id != self.home_coordinator or state.envelope is None:
                return
            if heard_all or attempt >= self.max_election_attempts:
                self.responder.respond(ctx, state.envelope, _dumps({"task": task_id, "status": "no_service"}))
            else:
                self._reopen(ctx, task_id, attempt, state.envelope, state.work)
            return
        full = round_.reporters_heard(self.owner_of) >= round_.expected_reporters
        winner = decide_leader(round_, ctx.now)
        detail = {
            "winner": winner,
            "value": round_.ranks[winner].value,
            "observer": self.id,
            "full": full,
            "collected": {cand: rank.value for cand, rank in sorted(round_.ranks.items())},
        }
        ctx.log("round_decided", task=task_id, rnd=label, detail=detail)
        if self.owner_of.get(winner) == self.id and not state.dispatched:
            self._assign(ctx, state, winner)

    def _assign(self, ctx: AgentContext, state: _RoundState, winner: str) -> None:
        task_id, attempt = state.round.rnd
        if state.envelope is None:
            return
        if winner not in self.alive:
            # suspected between rank and decision: immediately re-elect
            state.dispatched = True
            self._reopen(ctx, task_id, attempt, state.envelope, state.work)
            return
        state.dispatched = True
        courier = self.dispatch_couriers[winner]
        body = _dumps({"task": task_id, "attempt": attempt, "work": state.work})
        self._dispatch_counter += 1
        req = courier.send_request(ctx, body, correlation=f"{self.id}-d{self._dispatch_counter:05d}")
        self.dispatch_index[req.correlation] = (task_id, attempt, winner)
        self.assignments[task_id] = _Assignment(task_id, attempt, winner, state.envelope, state.work, ctx.now)
        self.pending_view[winner] = self.pending_view.get(winner, 0.0) + state.work
        ctx.publish(result_topic(task_id), _dumps({"task": task_id, "attempt": attempt, "winner": winner}))
        ctx.log("task_dispatch", task=task_id, rnd=_round_label(task_id, attempt), detail={"controller": winner})
        if attempt > 1:
            ctx.log("task_reassigned", task=task_id, detail={"controller": winner, "attempt": attempt})

    def _reopen(self, ctx: AgentContext, task_id: str, prev_attempt: int, envelope: Envelope, work: float) -> None:
        attempt = max(prev_attempt, self.latest_attempt.get(task_id, 0)) + 1
        if attempt > self.max_election_attempts:
            self.responder.respond(ctx, envelope, _dumps({"task": task_id, "status": "no_service"}))
            return
        self.latest_attempt[task_id] = attempt
        doc = {
            "task": task_id,
            "attempt": attempt,
            "reply_topic": envelope.reply_topic,
            "correlation": envelope.correlation,
            "work": work,
        }
        ctx.publish(open_topic(task_id), _dumps(doc))
        state = self._open_round(ctx, (task_id, attempt), envelope, work)
        self._send_rank(ctx, state)

    # -- responses and failure detection ---------------------------------------

    def _on_controller_response(self, ctx: AgentContext, msg: Message) -> None:
        correlation = msg.topic.rsplit("/", 1)[-1]
        courier = None
        indexed = self.dispatch_index.get(correlation)
        if indexed is not None:
            courier = self.dispatch_couriers.get(indexed[2])
        if courier is None:
            return
        done = courier.handle_message(ctx, msg)
        if done is None:
            return
        task_id, attempt, controller = indexed
        current = self.assignments.get(task_id)
        if current is None or current.attempt != attempt or current.controller != controller:
            ctx.log("stale_response", task=task_id, detail={"attempt": attempt, "controller": controller})
            return
        del self.assignments[task_id]
        self.pending_view[controller] = max(0.0, self.pending_view.get(controller, 0.0) - current.work)
        self.responder.respond(ctx, current.client_envelope, _dumps({"task": task_id, "status": "done"}))

    def _suspect_sweep(self, ctx: AgentContext) -> None:
        now = ctx.now
        for member in self.members:
            if member not in self.alive:
                continue
            if now - self.last_seen.get(member, 0) > self.suspect_after:
                self.alive.discard(member)
                ctx.log("hb_suspect", detail={"node": member})
                self._reassign_orphans(ctx, member)

    def _reassign_orphans(self, ctx: AgentContext, member: str) -> None:
        orphans = sorted(
            (a for a in self.assignments.values() if a.controller == member),
            key=lambda a: a.task_id,
        )
        for orphan in orphans:
            ctx.log(
                "task_orphaned",
                task=orphan.task_id,
                detail={"node": member, "attempt": orphan.attempt},
            )
            del self.assignments[orphan.task_id]
            self._reopen(ctx, orphan.task_id, orphan.attempt, orphan.client_envelope, orphan.work)
