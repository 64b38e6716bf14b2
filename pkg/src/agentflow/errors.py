"""Exception taxonomy shared across the package."""


class AgentFlowError(Exception):
    """Base class for all package errors."""


class InvalidTopic(AgentFlowError):
    """Topic or filter string violates the topic grammar."""


class PayloadTooLarge(AgentFlowError):
    """Message payload exceeds the broker's configured limit."""


class UnknownSubscription(AgentFlowError):
    """Subscription id was never issued or is already removed."""


class UnknownAgent(AgentFlowError):
    """Agent id does not exist in the runtime."""


class ParentUnavailable(AgentFlowError):
    """Spawn requested under a parent that is not active."""


class InvalidCapacity(AgentFlowError):
    """Load evaluation requires a strictly positive capacity."""


class MalformedRequest(AgentFlowError):
    """Request envelope is missing the reply address or correlation id."""


class ElectionFailed(AgentFlowError):
    """An election round closed with no usable ranks."""


class NoServiceAvailable(AgentFlowError):
    """No live candidate exists to serve a request."""


class ConfigError(AgentFlowError):
    """Scenario or simulation configuration is invalid.

    ``details`` carries per-field diagnostics suitable for CLI output.
    """

    def __init__(self, message: str, details: list[str] | None = None):
        super().__init__(message)
        self.details = details or []


class InvariantViolation(AgentFlowError):
    """A post-run audit found the named invariant broken."""

    def __init__(self, invariant: str, detail: str):
        super().__init__(f"{invariant}: {detail}")
        self.invariant = invariant
        self.detail = detail


class EngineOverrun(AgentFlowError):
    """The event loop exceeded its safety horizon without draining."""
