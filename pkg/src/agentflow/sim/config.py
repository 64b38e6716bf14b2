"""Scenario configuration: validation, overrides, derived deployment layout."""

from __future__ import annotations

import json
import math
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import ConfigError


class NetworkConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    latency_lo_ticks: int = Field(default=1, ge=0)
    latency_hi_ticks: int = Field(default=10, ge=0)
    drop_probability: float = Field(default=0.0, ge=0.0, le=1.0)
    partitions: list[list[str]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_range(self) -> "NetworkConfig":
        if self.latency_lo_ticks > self.latency_hi_ticks:
            raise ValueError("latency_lo_ticks must not exceed latency_hi_ticks")
        seen: set[str] = set()
        for group in self.partitions:
            for node in group:
                if node in seen:
                    raise ValueError(f"partition groups overlap on {node!r}")
                seen.add(node)
        return self


class FaultPlanConfig(BaseModel):
    """Crash-stop failure schedule, derived from the seed.

    Both fractions draw from the controller pool (edge hosts and controllers
    coincide at this scale); the failed set is the union of two seeded,
    nested samples, and failure times land uniformly inside the window
    fractions of the run. No recovery.
    """

    model_config = ConfigDict(extra="forbid")

    controller_failure_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    edge_failure_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    window_start_fraction: float = Field(default=0.2, ge=0.0, le=1.0)
    window_end_fraction: float = Field(default=0.8, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_window(self) -> "FaultPlanConfig":
        if self.window_start_fraction > self.window_end_fraction:
            raise ValueError("fault window start must not exceed end")
        return self


class SimConfig(BaseModel):
    """Complete, seedable description of one swarm run (1 tick = 1 ms by default)."""

    model_config = ConfigDict(extra="forbid")

    n_amrs: int = Field(default=300, ge=1)
    n_controllers: Optional[int] = Field(default=None, ge=1)
    cluster_size: int = Field(default=2, ge=1)
    task_rate_per_min: float = Field(default=600.0, ge=0.0)
    duration_ticks: int = Field(default=60_000, ge=1)
    ticks_per_second: int = Field(default=1000, ge=1)
    seed: int = 0
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    fault_plan: FaultPlanConfig = Field(default_factory=FaultPlanConfig)
    election_window_ticks: int = Field(default=20, ge=1)
    heartbeat_interval_ticks: int = Field(default=15, ge=1)
    heartbeat_misses_allowed: int = Field(default=3, ge=1)
    work_units_per_task: float = Field(default=1.0, gt=0.0)
    controller_capacities_per_sec: list[float] = Field(default_factory=lambda: [2.4, 2.8, 3.2, 3.6])
    request_timeout_ticks: int = Field(default=10_000, ge=1)
    request_max_retries: int = Field(default=0, ge=0)
    request_backoff_ticks: int = Field(default=0, ge=0)
    dispatch_timeout_ticks: int = Field(default=60_000, ge=1)
    coordinator_cost_ticks: int = Field(default=1, ge=0)
    max_election_attempts: int = Field(default=5, ge=1)
    max_payload_bytes: int = Field(default=64 * 1024, ge=1)
    log_handler_events: bool = True
    run_audits: bool = True

    @model_validator(mode="after")
    def _check(self) -> "SimConfig":
        if not self.controller_capacities_per_sec:
            raise ValueError("controller_capacities_per_sec must not be empty")
        if any(c <= 0 for c in self.controller_capacities_per_sec):
            raise ValueError("controller capacities must be positive")
        return self

    def resolved_controllers(self) -> int:
        if self.n_controllers is not None:
            return self.n_controllers
        return max(2, self.n_amrs // 25)

    def n_clusters(self) -> int:
        return math.ceil(self.resolved_controllers() / self.cluster_size)


class SweepSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    parameter: str = Field(min_length=1)
    values: list[Any] = Field(min_length=1)
    seeds: list[int] = Field(min_length=1)


class Scenario(SimConfig):
    """A scenario file is a SimConfig plus an optional sweep block."""

    model_config = ConfigDict(extra="forbid")

    sweep: Optional[SweepSpec] = None

    def base_config(self) -> SimConfig:
        return SimConfig.model_validate(self.model_dump(exclude={"sweep"}))


def _validation_details(exc: ValidationError) -> list[str]:
    details = []
    for err in exc.errors():
        loc = ".".join(str(part) for part in err["loc"]) or "<root>"
        details.append(f"{loc}: {err['msg']}")
    return details


def parse_scenario(doc: dict[str, Any]) -> Scenario:
    try:
        return Scenario.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError("invalid scenario", _validation_details(exc)) from exc


def load_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a JSON object")
    return parse_scenario(doc)


def _coerce_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(scenario: Scenario, overrides: list[str]) -> Scenario:
    """Apply ``key=value`` overrides; dotted keys reach nested blocks."""
    doc = scenario.model_dump(exclude_none=True)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        target = doc
        parts = key.split(".")
        for part in parts[:-1]:
            nxt = target.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                target[part] = nxt
            target = nxt
        target[parts[-1]] = _coerce_value(raw)
    return parse_scenario(doc)


def controller_ids(n: int) -> list[str]:
    return [f"ctrl-{i:03d}" for i in range(n)]


def amr_ids(n: int) -> list[str]:
    return [f"amr-{i:04d}" for i in range(n)]


def coordinator_ids(n: int) -> list[str]:
    return [f"coord-{i:02d}" for i in range(n)]


def cluster_layout(config: SimConfig) -> dict[str, list[str]]:
    """coordinator id -> ordered controller members."""
    ctrls = controller_ids(config.resolved_controllers())
    coords = coordinator_ids(config.n_clusters())
    layout: dict[str, list[str]] = {}
    for idx, coord in enumerate(coords):
        layout[coord] = ctrls[idx * config.cluster_size : (idx + 1) * config.cluster_size]
    return layout


def capacity_per_tick(config: SimConfig, controller_index: int) -> float:
    per_sec = config.controller_capacities_per_sec[controller_index % len(config.controller_capacities_per_sec)]
    return per_sec / config.ticks_per_second
