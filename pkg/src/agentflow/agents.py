"""Holonic agent runtime.

Agents form a forest of parent/child holons. Each agent owns subscriptions,
handles one message at a time, and may spawn or terminate child agents.
Failed agents model crashed nodes: their subscriptions stay registered and
arriving deliveries are silently discarded and counted, so peers cannot
tell a crash from slowness except through missed heartbeats.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from .engine import Engine
from .errors import ParentUnavailable, UnknownAgent
from .messaging.broker import Message, SimBroker


class AgentState(str, Enum):
    INITIALIZING = "initializing"
    ACTIVE = "active"
    TERMINATING = "terminating"
    TERMINATED = "terminated"
    FAILED = "failed"


@dataclass
class HolonNode:
    """An agent's position and lifecycle state in the holon forest."""

    id: str
    parent: Optional[str]
    children: list[str] = field(default_factory=list)
    state: AgentState = AgentState.INITIALIZING


class Behavior:
    """Hook surface for agent logic.

    Hooks receive an :class:`AgentContext` and must only touch engine state
    through it. ``processing_cost`` is the simulated handler occupancy in
    ticks for a message; while occupied the agent's later messages queue.
    """

    def on_start(self, ctx: "AgentContext") -> None:
        pass

    def on_message(self, ctx: "AgentContext", msg: Message) -> None:
        pass

    def on_timer(self, ctx: "AgentContext", tag: str, data: Any = None) -> None:
        pass

    def on_stop(self, ctx: "AgentContext") -> None:
        pass

    def processing_cost(self, msg: Message) -> int:
        return 0


class AgentContext:
    """Capability facade handed to behavior hooks."""

    __slots__ = ("_runtime", "id")

    def __init__(self, runtime: "AgentRuntime", agent_id: str):
        self._runtime = runtime
        self.id = agent_id

    @property
    def now(self) -> int:
        return self._runtime.engine.now

    @property
    def horizon(self) -> int:
        return self._runtime.engine.horizon

    def publish(self, topic: str, payload: bytes, correlation: str | None = None) -> None:
        self._runtime.broker.publish(topic, payload, self.id, correlation)

    def subscribe(self, filter_: str) -> int:
        return self._runtime.broker.subscribe(self.id, filter_)

    def unsubscribe(self, subscription_id: int) -> None:
        self._runtime.broker.unsubscribe(subscription_id)

    def spawn(self, behavior: Behavior, agent_id: str | None = None) -> str:
        return self._runtime.spawn_agent(behavior, parent=self.id, agent_id=agent_id)

    def terminate(self, agent_id: str) -> None:
        self._runtime.terminate(agent_id)

    def schedule(self, delay: int, tag: str, data: Any = None) -> int:
        return self._runtime.schedule_timer(self.id, delay, tag, data)

    def cancel(self, timer_id: int) -> None:
        self._runtime.cancel_timer(timer_id)

    def log(self, kind: str, **fields: Any) -> None:
        log = self._runtime.engine.log
        log.emit(
            self._runtime.engine.now,
            kind,
            agent=self.id,
            topic=fields.pop("topic", None),
            task=fields.pop("task", None),
            rnd=fields.pop("rnd", None),
            detail=fields.pop("detail", None),
        )


@dataclass
class _AgentRec:
    node: HolonNode
    behavior: Behavior
    ctx: AgentContext
    mailbox: deque = field(default_factory=deque)
    busy: bool = False


class AgentRuntime:
    """Owns the agent registry and drives serialized message handling."""

    def __init__(self, engine: Engine, broker: SimBroker, log_handlers: bool = True):
        self.engine = engine
        self.broker = broker
        broker.set_deliver(self.deliver)
        self.log_handlers = log_handlers
        self._agents: dict[str, _AgentRec] = {}
        self._auto_id = 0
        self._timer_seq = 0
        self._live_timers: set[int] = set()
        self.discarded = 0

    # -- lifecycle ---------------------------------------------------------------

    def spawn_agent(self, behavior: Behavior, parent: str | None = None, agent_id: str | None = None) -> str:
        if parent is not None:
            parent_rec = self._agents.get(parent)
            if parent_rec is None or parent_rec.node.state is not AgentState.ACTIVE:
                raise ParentUnavailable(f"parent {parent!r} is not an active agent")
        if agent_id is None:
            self._auto_id += 1
            agent_id = f"agent-{self._auto_id:05d}"
        if agent_id in self._agents:
            raise ValueError(f"agent id {agent_id!r} already exists")
        node = HolonNode(id=agent_id, parent=parent)
        rec = _AgentRec(node=node, behavior=behavior, ctx=AgentContext(self, agent_id))
        self._agents[agent_id] = rec
        if parent is not None:
            self._agents[parent].node.children.append(agent_id)
        self.engine.log.emit(self.engine.now, "spawn", agent=agent_id, detail={"parent": parent})
        behavior.on_start(rec.ctx)
        node.state = AgentState.ACTIVE
        self._log_state(agent_id, node.state)
        return agent_id

    def terminate(self, agent_id: str) -> None:
        """Depth-first termination: descendants stop before the node itself."""
        rec = self._agents.get(agent_id)
        if rec is None:
            raise UnknownAgent(f"no agent {agent_id!r}")
        if rec.node.state in (AgentState.TERMINATED, AgentState.TERMINATING):
            return
        rec.node.state = AgentState.TERMINATING
        self._log_state(agent_id, rec.node.state)
        for child in list(rec.node.children):
            self.terminate(child)
        rec.behavior.on_stop(rec.ctx)
        self.broker.drop_subscriber(agent_id)
        rec.mailbox.clear()
        rec.node.state = AgentState.TERMINATED
        self._log_state(agent_id, rec.node.state)

    def fail(self, agent_id: str) -> None:
        """Crash-stop: subscriptions stay registered, deliveries get discarded."""
        rec = self._agents.get(agent_id)
        if rec is None:
            raise UnknownAgent(f"no agent {agent_id!r}")
        if rec.node.state is not AgentState.ACTIVE:
            return
        rec.node.state = AgentState.FAILED
        self._log_state(agent_id, rec.node.state)
        for item in rec.mailbox:
            if item[0] == "msg":
                self.discarded += 1
                self.engine.log.emit(self.engine.now, "discard", agent=agent_id, topic=item[1].topic)
        rec.mailbox.clear()
        rec.busy = False

    def node(self, agent_id: str) -> HolonNode:
        rec = self._agents.get(agent_id)
        if rec is None:
            raise UnknownAgent(f"no agent {agent_id!r}")
        return rec.node

    def context(self, agent_id: str) -> AgentContext:
        return self._agents[agent_id].ctx

    def agents(self) -> list[str]:
        return list(self._agents)

    def state(self, agent_id: str) -> AgentState:
        return self.node(agent_id).state

    # -- message dispatch ----------------------------------------------------------

    def deliver(self, subscription_id: int, subscriber: str, msg: Message) -> None:
        """Broker delivery sink; runs at the scheduled delivery tick."""
        now = self.engine.now
        rec = self._agents.get(subscriber)
        self.engine.log.emit(
            now, "deliver", agent=subscriber, topic=msg.topic, detail={"sender": msg.sender, "sent": msg.sent_at}
        )
        if rec is None or rec.node.state is not AgentState.ACTIVE:
            self.discarded += 1
            self.engine.log.emit(now, "discard", agent=subscriber, topic=msg.topic)
            return
        rec.mailbox.append(("msg", msg))
        if not rec.busy:
            self._begin_next(subscriber, rec)

    def schedule_timer(self, agent_id: str, delay: int, tag: str, data: Any = None) -> int:
        """Arm a timer delivered through the agent's mailbox; returns a cancel handle."""
        self._timer_seq += 1
        timer_id = self._timer_seq
        self._live_timers.add(timer_id)
        self.engine.schedule_in(delay, self._timer_fire, timer_id, agent_id, tag, data)
        return timer_id

    def cancel_timer(self, timer_id: int) -> None:
        self._live_timers.discard(timer_id)

    def _timer_fire(self, timer_id: int, agent_id: str, tag: str, data: Any) -> None:
        if timer_id not in self._live_timers:
            return
        self._live_timers.discard(timer_id)
        rec = self._agents.get(agent_id)
        if rec is None or rec.node.state is not AgentState.ACTIVE:
            return
        rec.mailbox.append(("timer", tag, data))
        if not rec.busy:
            self._begin_next(agent_id, rec)

    def _begin_next(self, agent_id: str, rec: _AgentRec) -> None:
        item = rec.mailbox.popleft()
        rec.busy = True
        cost = rec.behavior.processing_cost(item[1]) if item[0] == "msg" else 0
        if self.log_handlers:
            self.engine.log.emit(self.engine.now, "handler_start", agent=agent_id)
        if cost <= 0:
            self._execute(agent_id, rec, item)
        else:
            self.engine.schedule_in(cost, self._execute, agent_id, rec, item)

    def _execute(self, agent_id: str, rec: _AgentRec, item: tuple) -> None:
        aborted = rec.node.state is not AgentState.ACTIVE
        if not aborted:
            if item[0] == "msg":
                rec.behavior.on_message(rec.ctx, item[1])
            else:
                rec.behavior.on_timer(rec.ctx, item[1], item[2])
        if self.log_handlers:
            self.engine.log.emit(
                self.engine.now, "handler_end", agent=agent_id, detail={"aborted": True} if aborted else None
            )
        rec.busy = False
        if rec.mailbox and rec.node.state is AgentState.ACTIVE:
            self._begin_next(agent_id, rec)

    def _log_state(self, agent_id: str, state: AgentState) -> None:
        self.engine.log.emit(self.engine.now, "agent_state", agent=agent_id, detail={"state": state.value})
