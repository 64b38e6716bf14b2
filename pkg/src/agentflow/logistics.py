"""Programmable request/response couriers.

A request courier binds each outgoing request to a unique reply topic
(``reply/<client>/<correlation>``), subscribes the client to it, and applies
the configured timeout/retry policy. A response courier publishes results
to exactly that reply topic, so only the issuing client receives them.

Wire format (versioned, stable): the request payload is a UTF-8 JSON object
``{"v": 1, "reply_topic": str, "correlation": str, "body": base64}``.
Responses reuse the same envelope with ``reply_topic`` echoing the target.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple

from .agents import AgentContext
from .errors import MalformedRequest
from .messaging.broker import Message

ENVELOPE_VERSION = 1


def make_reply_topic(client: str, correlation: str) -> str:
    """Unique reply topic per (client, correlation); trivially injective."""
    return f"reply/{client}/{correlation}"


class Envelope(NamedTuple):
    reply_topic: str
    correlation: str
    body: bytes


def encode_envelope(reply_topic: str, correlation: str, body: bytes) -> bytes:
    doc = {
        "v": ENVELOPE_VERSION,
        "reply_topic": reply_topic,
        "correlation": correlation,
        "body": base64.b64encode(body).decode("ascii"),
    }
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def decode_envelope(payload: bytes) -> Envelope:
    """Parse a request/response envelope; raises MalformedRequest when unusable."""
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedRequest(f"undecodable envelope: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("v") != ENVELOPE_VERSION:
        raise MalformedRequest("unknown envelope version")
    reply_topic = doc.get("reply_topic")
    correlation = doc.get("correlation")
    if not reply_topic or not correlation:
        raise MalformedRequest("envelope missing reply_topic or correlation")
    try:
        body = base64.b64decode(doc.get("body", ""), validate=True)
    except Exception as exc:
        raise MalformedRequest(f"bad body encoding: {exc}") from exc
    return Envelope(str(reply_topic), str(correlation), body)


class RequestState(str, Enum):
    IN_FLIGHT = "in_flight"
    SUCCEEDED = "succeeded"
    TIMED_OUT = "timed_out"


@dataclass
class PendingRequest:
    correlation: str
    reply_topic: str
    service_topic: str
    body: bytes
    deadline: int
    attempts_used: int = 1
    state: RequestState = RequestState.IN_FLIGHT
    subscription_id: int = -1
    timer_id: int = -1
    response: bytes | None = None


@dataclass
class RequestLogistic:
    """Client-side courier: unique reply routing plus timeout/retry policy.

    ``timeout_ticks`` bounds each attempt; after ``max_retries`` re-publishes
    the request times out. The retry deadline grows by ``backoff_ticks``
    times the attempt number. Completion is idempotent: the first response
    for a correlation wins, duplicates are discarded and counted.
    """

    client: str
    service_topic: str
    timeout_ticks: int
    max_retries: int = 0
    backoff_ticks: int = 0
    pending: dict[str, PendingRequest] = field(default_factory=dict)
    duplicate_responses: int = 0
    _counter: int = 0

    def send_request(self, ctx: AgentContext, body: bytes, correlation: str | None = None) -> PendingRequest:
        if correlation is None:
            self._counter += 1
            correlation = f"{self.client}-r{self._counter:04d}"
        reply_topic = make_reply_topic(self.client, correlation)
        req = PendingRequest(
            correlation=correlation,
            reply_topic=reply_topic,
            service_topic=self.service_topic,
            body=body,
            deadline=ctx.now + self.timeout_ticks,
        )
        req.subscription_id = ctx.subscribe(reply_topic)
        self.pending[correlation] = req
        self._publish_attempt(ctx, req)
        req.timer_id = ctx.schedule(self.timeout_ticks, "request-deadline", correlation)
        return req

    def _publish_attempt(self, ctx: AgentContext, req: PendingRequest) -> None:
        payload = encode_envelope(req.reply_topic, req.correlation, req.body)
        ctx.publish(req.service_topic, payload, correlation=req.correlation)
        ctx.log(
            "request_attempt",
            topic=req.service_topic,
            detail={"correlation": req.correlation, "attempt": req.attempts_used},
        )

    def handle_message(self, ctx: AgentContext, msg: Message) -> PendingRequest | None:
        """Feed a delivery to the courier; returns the request iff it just completed."""
        if not msg.topic.startswith(f"reply/{self.client}/"):
            return None
        correlation = msg.topic.rsplit("/", 1)[-1]
        req = self.pending.get(correlation)
        if req is None or req.state is not RequestState.IN_FLIGHT:
            self.duplicate_responses += 1
            ctx.log("duplicate_response", topic=msg.topic, detail={"correlation": correlation})
            return None
        req.state = RequestState.SUCCEEDED
        try:
            req.response = decode_envelope(msg.payload).body
        except MalformedRequest:
            req.response = msg.payload
        ctx.cancel(req.timer_id)
        ctx.unsubscribe(req.subscription_id)
        ctx.log("request_succeeded", topic=msg.topic, detail={"correlation": correlation, "attempts": req.attempts_used})
        return req

    def on_timer(self, ctx: AgentContext, tag: str, data) -> PendingRequest | None:
        """Route the courier's deadline timers; returns the request iff it timed out."""
        if tag != "request-deadline":
            return None
        return self.sweep(ctx, str(data))

    def sweep(self, ctx: AgentContext, correlation: str) -> PendingRequest | None:
        """Deadline check for one request: retry while attempts remain, else time out."""
        req = self.pending.get(correlation)
        if req is None or req.state is not RequestState.IN_FLIGHT or ctx.now < req.deadline:
            return None
        if req.attempts_used <= self.max_retries:
            req.attempts_used += 1
            req.deadline = ctx.now + self.timeout_ticks + self.backoff_ticks * req.attempts_used
            self._publish_attempt(ctx, req)
            req.timer_id = ctx.schedule(req.deadline - ctx.now, "request-deadline", correlation)
            return None
        req.state = RequestState.TIMED_OUT
        ctx.unsubscribe(req.subscription_id)
        ctx.log("request_timeout", topic=req.service_topic, detail={"correlation": correlation, "attempts": req.attempts_used})
        return req


@dataclass
class ResponseLogistic:
    """Service-side courier: publish each result to its request's reply topic only."""

    service: str
    malformed_requests: int = 0

    def serve(
        self,
        ctx: AgentContext,
        request: Message,
        handler: Callable[[Envelope], bytes],
    ) -> Envelope | None:
        """Decode, run the handler, and respond on the embedded reply topic.

        Malformed requests (missing reply address or correlation) are
        dropped and counted, never answered.
        """
        try:
            envelope = decode_envelope(request.payload)
        except MalformedRequest as exc:
            self.malformed_requests += 1
            ctx.log("malformed_request", topic=request.topic, detail={"error": str(exc)})
            return None
        response_body = handler(envelope)
        self.respond(ctx, envelope, response_body)
        return envelope

    def respond(self, ctx: AgentContext, envelope: Envelope, body: bytes) -> None:
        payload = encode_envelope(envelope.reply_topic, envelope.correlation, body)
        ctx.publish(envelope.reply_topic, payload, correlation=envelope.correlation)
