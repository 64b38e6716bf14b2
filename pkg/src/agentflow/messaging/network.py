"""Simulated transport conditions: latency, loss, partitions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from ..errors import ConfigError


@dataclass
class NetworkModel:
    """Per-delivery network behavior for the simulated broker.

    Latency is sampled uniformly from the inclusive ``[latency_lo,
    latency_hi]`` tick range. ``drop_probability`` applies independently per
    matching subscription. ``partitions`` is a collection of disjoint
    node-id groups; a message crosses groups only if sender and receiver
    share one (nodes in no group share an implicit default group).

    ``drop_fn`` is a test seam: when set it decides drops instead of the
    probability draw (scripted loss schedules).
    """

    latency_lo: int = 1
    latency_hi: int = 10
    drop_probability: float = 0.0
    partitions: tuple[frozenset[str], ...] = ()
    drop_fn: Optional[Callable[[str, str, str], bool]] = None  # (topic, sender, receiver)
    _group: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not (0 <= self.latency_lo <= self.latency_hi):
            raise ConfigError("latency range requires 0 <= lo <= hi")
        if not (0.0 <= self.drop_probability <= 1.0):
            raise ConfigError("drop_probability must be within [0, 1]")
        seen: set[str] = set()
        for idx, group in enumerate(self.partitions):
            overlap = seen & set(group)
            if overlap:
                raise ConfigError(f"partition groups overlap on {sorted(overlap)}")
            seen |= set(group)
            for node in group:
                self._group[node] = idx

    def reachable(self, sender: str, receiver: str) -> bool:
        return self._group.get(sender, -1) == self._group.get(receiver, -1)

    def sample_latency(self, rng) -> int:
        if self.latency_lo == self.latency_hi:
            return self.latency_lo
        return rng.randint(self.latency_lo, self.latency_hi)

    def drops(self, rng, topic: str, sender: str, receiver: str) -> bool:
        if self.drop_fn is not None:
            return self.drop_fn(topic, sender, receiver)
        if self.drop_probability <= 0.0:
            return False
        if self.drop_probability >= 1.0:
            return True
        return rng.random() < self.drop_probability
