"""Run orchestration: build a swarm from a config, execute, measure, audit.

Sweeps fan points out to worker processes; every point is fully isolated
(own engine, own log) and results are collected in submission order so the
output CSVs are deterministic regardless of scheduling.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from ..agents import AgentRuntime
from ..engine import Engine, EventLog
from ..errors import ConfigError
from ..messaging.broker import SimBroker
from ..messaging.network import NetworkModel
from .config import (
    Scenario,
    SimConfig,
    amr_ids,
    apply_overrides,
    capacity_per_tick,
    cluster_layout,
    controller_ids,
    parse_scenario,
)
from .audit import failed_audits, run_audits
from .metrics import MetricsReport, compute_metrics
from .swarm import AmrBehavior, ControllerBehavior, CoordinatorBehavior
from .tasks import failure_schedule, generate_tasks


@dataclass
class RunResult:
    report: MetricsReport
    log: EventLog
    audits: dict[str, list[str]] = field(default_factory=dict)

    @property
    def violated(self) -> list[str]:
        return failed_audits(self.audits)


def build_network(config: SimConfig) -> NetworkModel:
    return NetworkModel(
        latency_lo=config.network.latency_lo_ticks,
        latency_hi=config.network.latency_hi_ticks,
        drop_probability=config.network.drop_probability,
        partitions=tuple(frozenset(group) for group in config.network.partitions),
    )


def run_config(config: SimConfig) -> RunResult:
    """Execute one seeded simulation to quiescence and report."""
    engine = Engine(seed=config.seed, horizon=config.duration_ticks)
    broker = SimBroker(engine, build_network(config), max_payload=config.max_payload_bytes)
    runtime = AgentRuntime(engine, broker, log_handlers=config.log_handler_events)

    layout = cluster_layout(config)
    coordinators = sorted(layout)
    ctrls = controller_ids(config.resolved_controllers())
    owner_of = {member: coord for coord, members in layout.items() for member in members}
    capacities = {ctrl: capacity_per_tick(config, idx) for idx, ctrl in enumerate(ctrls)}

    for coord in coordinators:
        runtime.spawn_agent(
            CoordinatorBehavior(
                agent_id=coord,
                members=layout[coord],
                capacities_per_tick=capacities,
                all_coordinators=coordinators,
                owner_of=owner_of,
                election_window=config.election_window_ticks,
                heartbeat_interval=config.heartbeat_interval_ticks,
                misses_allowed=config.heartbeat_misses_allowed,
                dispatch_timeout=config.dispatch_timeout_ticks,
                max_election_attempts=config.max_election_attempts,
                cost_ticks=config.coordinator_cost_ticks,
            ),
            agent_id=coord,
        )
    for idx, ctrl in enumerate(ctrls):
        runtime.spawn_agent(
            ControllerBehavior(
                agent_id=ctrl,
                coordinator=owner_of[ctrl],
                capacity_per_tick=capacities[ctrl],
                heartbeat_interval=config.heartbeat_interval_ticks,
                heartbeat_offset=idx % config.heartbeat_interval_ticks,
            ),
            parent=owner_of[ctrl],
            agent_id=ctrl,
        )
    amrs = amr_ids(config.n_amrs)
    for amr in amrs:
        runtime.spawn_agent(
            AmrBehavior(
                agent_id=amr,
                timeout_ticks=config.request_timeout_ticks,
                max_retries=config.request_max_retries,
                backoff_ticks=config.request_backoff_ticks,
            ),
            agent_id=amr,
        )

    for arrival in generate_tasks(
        config.task_rate_per_min,
        config.duration_ticks,
        config.ticks_per_second,
        config.seed,
        n_amrs=config.n_amrs,
    ):
        runtime.schedule_timer(
            amrs[arrival.amr_index],
            arrival.tick,
            "task",
            (arrival.task_id, config.work_units_per_task),
        )

    window_start = int(config.fault_plan.window_start_fraction * config.duration_ticks)
    window_end = int(config.fault_plan.window_end_fraction * config.duration_ticks)
    for tick, node in failure_schedule(
        ctrls,
        config.fault_plan.controller_failure_fraction,
        config.fault_plan.edge_failure_fraction,
        window_start,
        window_end,
        config.seed,
    ):
        engine.schedule_at(tick, _inject_fault, engine, runtime, node)

    engine.run()

    report = compute_metrics(engine.log, config.duration_ticks, config.ticks_per_second, config.seed)
    audits: dict[str, list[str]] = {}
    if config.run_audits:
        audits = run_audits(
            engine.log,
            latency_lo=config.network.latency_lo_ticks,
            latency_hi=config.network.latency_hi_ticks,
        )
    return RunResult(report=report, log=engine.log, audits=audits)


def _inject_fault(engine: Engine, runtime: AgentRuntime, node: str) -> None:
    engine.log.emit(engine.now, "fault_injected", agent=node)
    runtime.fail(node)


# -- sweeps --------------------------------------------------------------------


@dataclass
class SweepPointFailure:
    parameter: str
    value: object
    seed: int
    error: str


@dataclass
class SweepResult:
    parameter: str
    rows: list[dict] = field(default_factory=list)
    aggregate: list[dict] = field(default_factory=list)
    failures: list[SweepPointFailure] = field(default_factory=list)


def _sweep_point(args: tuple[dict, str, object, int]) -> tuple[dict | None, str | None]:
    doc, parameter, value, seed = args
    scenario = parse_scenario(doc)
    scenario = apply_overrides(scenario, [f"{parameter}={json.dumps(value)}", f"seed={seed}"])
    result = run_config(scenario.base_config())
    if result.violated:
        return None, f"invariant violation: {', '.join(result.violated)}"
    row = {"parameter": parameter, "value": value, "seed": seed}
    row.update(result.report.to_dict())
    return row, None


def sweep_workers() -> int:
    env = os.environ.get("AGENTFLOW_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_sweep(scenario: Scenario) -> SweepResult:
    if scenario.sweep is None:
        raise ConfigError("scenario has no sweep block")
    spec = scenario.sweep
    base_doc = scenario.model_dump(exclude={"sweep"}, exclude_none=True)
    points = [(base_doc, spec.parameter, value, seed) for value in spec.values for seed in spec.seeds]
    out = SweepResult(parameter=spec.parameter)

    workers = min(sweep_workers(), len(points))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, points, chunksize=1))
    else:
        results = [_sweep_point(p) for p in points]

    for (_, parameter, value, seed), (row, error) in zip(points, results):
        if error is not None:
            out.failures.append(SweepPointFailure(parameter, value, seed, error))
        else:
            out.rows.append(row)

    numeric = [
        name
        for name in MetricsReport.csv_header()
        if name not in ("flags",)
    ]
    for value in spec.values:
        rows = [r for r in out.rows if r["value"] == value]
        if not rows:
            continue
        agg: dict = {"parameter": spec.parameter, "value": value, "n_seeds": len(rows)}
        for name in numeric:
            agg[f"mean_{name}"] = sum(r[name] for r in rows) / len(rows)
        out.aggregate.append(agg)
    return out
