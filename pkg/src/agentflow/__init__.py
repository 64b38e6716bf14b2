"""AgentFlow: pub-sub agent coordination with load-ranked service election,
programmable request/response couriers, and a deterministic swarm simulator."""

__version__ = "0.1.0"
