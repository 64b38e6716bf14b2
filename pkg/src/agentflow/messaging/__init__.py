from .broker import DEFAULT_MAX_PAYLOAD, Message, MessageBroker, SimBroker, Subscription
from .network import NetworkModel
from .topic import match_filter, validate_filter, validate_topic

__all__ = [
    "DEFAULT_MAX_PAYLOAD",
    "Message",
    "MessageBroker",
    "NetworkModel",
    "SimBroker",
    "Subscription",
    "match_filter",
    "validate_filter",
    "validate_topic",
]
