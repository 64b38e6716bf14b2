"""Topic-based publish-subscribe broker.

``MessageBroker`` is the abstract seam where a real transport would attach;
``SimBroker`` is the simulated transport driven by the event engine. The
broker provides at-most-once delivery: drops are allowed, retransmission is
a courier-layer concern.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Callable, NamedTuple

from ..engine import Engine
from ..errors import InvalidTopic, PayloadTooLarge, UnknownSubscription
from .network import NetworkModel
from .topic import WILDCARD, validate_filter, validate_topic

DEFAULT_MAX_PAYLOAD = 64 * 1024


class Message(NamedTuple):
    """One unit of pub-sub communication."""

    topic: str
    payload: bytes
    sender: str
    correlation: str | None
    sent_at: int


class Subscription(NamedTuple):
    id: int
    subscriber: str
    filter: str


DeliverFn = Callable[[int, str, Message], None]  # (subscription_id, subscriber, message)


class MessageBroker(ABC):
    """Minimal broker surface: subscribe, unsubscribe, publish."""

    @abstractmethod
    def subscribe(self, subscriber: str, filter_: str) -> int:
        ...

    @abstractmethod
    def unsubscribe(self, subscription_id: int) -> None:
        ...

    @abstractmethod
    def publish(self, topic: str, payload: bytes, sender: str, correlation: str | None = None) -> None:
        ...


class SimBroker(MessageBroker):
    """Engine-driven broker with configurable latency, loss, and partitions.

    Operations are atomic with respect to each other: the engine executes
    one event at a time, and every mutation happens synchronously inside
    the call. Deliveries scheduled before an unsubscribe still arrive.
    """

    def __init__(
        self,
        engine: Engine,
        network: NetworkModel | None = None,
        deliver: DeliverFn | None = None,
        max_payload: int = DEFAULT_MAX_PAYLOAD,
    ):
        self.engine = engine
        self.network = network if network is not None else NetworkModel()
        self.max_payload = max_payload
        self._deliver_fn: DeliverFn = deliver if deliver is not None else (lambda sid, agent, msg: None)
        self._rng = engine.stream("net")
        self._next_id = 1
        self._by_id: dict[int, Subscription] = {}
        self._by_key: dict[tuple[str, str], int] = {}  # (subscriber, filter) -> id
        self._exact: dict[str, list[Subscription]] = {}
        # wildcard entries keep the precomputed segment prefix ("a/b/" for
        # "a/b/#", "" for "#"); a topic matches iff it startswith the prefix,
        # which is equivalent to segment-prefix match with >= 1 extra segment
        self._wildcard: list[tuple[Subscription, str]] = []
        self.published = 0
        self.dropped = 0

    def set_deliver(self, deliver: DeliverFn) -> None:
        self._deliver_fn = deliver

    # -- subscription management -------------------------------------------------

    def subscribe(self, subscriber: str, filter_: str) -> int:
        validate_filter(filter_)
        key = (subscriber, filter_)
        existing = self._by_key.get(key)
        if existing is not None:
            return existing
        sub = Subscription(self._next_id, subscriber, filter_)
        self._next_id += 1
        self._by_id[sub.id] = sub
        self._by_key[key] = sub.id
        if filter_.split("/")[-1] == WILDCARD:
            self._wildcard.append((sub, filter_[:-1]))
        else:
            self._exact.setdefault(filter_, []).append(sub)
        self.engine.log.emit(self.engine.now, "subscribe", agent=subscriber, topic=filter_, detail={"sub": sub.id})
        return sub.id

    def unsubscribe(self, subscription_id: int) -> None:
        sub = self._by_id.pop(subscription_id, None)
        if sub is None:
            raise UnknownSubscription(f"subscription {subscription_id} is not registered")
        del self._by_key[(sub.subscriber, sub.filter)]
        if sub.filter.split("/")[-1] == WILDCARD:
            self._wildcard.remove((sub, sub.filter[:-1]))
        else:
            bucket = self._exact[sub.filter]
            bucket.remove(sub)
            if not bucket:
                del self._exact[sub.filter]
        self.engine.log.emit(self.engine.now, "unsubscribe", agent=sub.subscriber, topic=sub.filter, detail={"sub": sub.id})

    def subscriptions_of(self, subscriber: str) -> list[Subscription]:
        return [s for s in self._by_id.values() if s.subscriber == subscriber]

    def drop_subscriber(self, subscriber: str) -> None:
        """Remove every subscription held by one agent (termination cleanup)."""
        for sub in self.subscriptions_of(subscriber):
            self.unsubscribe(sub.id)

    # -- publishing ----------------------------------------------------------------

    def publish(self, topic: str, payload: bytes, sender: str, correlation: str | None = None) -> None:
        validate_topic(topic)
        if len(payload) > self.max_payload:
            raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds limit {self.max_payload}")
        now = self.engine.now
        msg = Message(topic, payload, sender, correlation, now)
        self.published += 1
        self.engine.log.emit(now, "publish", agent=sender, topic=topic)

        matches = list(self._exact.get(topic, ()))
        if self._wildcard:
            for sub, prefix in self._wildcard:
                if topic.startswith(prefix):
                    matches.append(sub)
        if len(matches) > 1:
            matches.sort(key=lambda s: s.id)

        network = self.network
        rng = self._rng
        for sub in matches:
            if not network.reachable(sender, sub.subscriber):
                self.engine.log.emit(now, "unreachable", agent=sub.subscriber, topic=topic)
                continue
            if network.drops(rng, topic, sender, sub.subscriber):
                self.dropped += 1
                self.engine.log.emit(now, "drop", agent=sub.subscriber, topic=topic)
                continue
            latency = network.sample_latency(rng)
            self.engine.schedule_at(now + latency, self._deliver_fn, sub.id, sub.subscriber, msg)
