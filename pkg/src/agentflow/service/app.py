"""HTTP facade over the simulator: submit runs, sweeps, and log replays.

Domain failures map to structured JSON errors: invalid scenarios return
400 with per-field diagnostics, invariant violations return 409 with the
failed audit names. The CLI translates these into its exit codes.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..engine import EventLog
from ..errors import ConfigError
from ..sim.audit import (
    audit_argmin,
    audit_conservation,
    audit_latency_bounds,
    audit_selectivity,
    audit_serialized_handlers,
    audit_single_decision,
    failed_audits,
)
from ..sim.config import apply_overrides, parse_scenario
from ..sim.run import run_config, run_sweep
from .schemas import (
    ErrorResponse,
    HealthResponse,
    ReplayRequest,
    ReplayResponse,
    RunRequest,
    RunResponse,
    SweepFailure,
    SweepRequest,
    SweepResponse,
)

REPLAY_AUDITS = {
    "selectivity": audit_selectivity,
    "argmin": audit_argmin,
    "single_decision": audit_single_decision,
    "conservation": audit_conservation,
    "serialized_handlers": audit_serialized_handlers,
}


def _config_error(exc: ConfigError) -> JSONResponse:
    body = ErrorResponse(status="config_error", message=str(exc), details=exc.details)
    return JSONResponse(status_code=400, content=body.model_dump())


def create_app() -> FastAPI:
    app = FastAPI(title="agentflow", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(version=__version__)

    @app.post("/run", response_model=RunResponse)
    def run(request: RunRequest):
        try:
            scenario = parse_scenario(request.scenario)
            if request.overrides:
                scenario = apply_overrides(scenario, request.overrides)
            config = scenario.base_config()
        except ConfigError as exc:
            return _config_error(exc)
        result = run_config(config)
        violated = result.violated
        if violated:
            body = ErrorResponse(
                status="invariant_violation",
                message=f"invariants violated: {', '.join(violated)}",
                details=[v for name in violated for v in result.audits[name]],
            )
            return JSONResponse(status_code=409, content=body.model_dump())
        return RunResponse(
            metrics=result.report.to_dict(),
            audits=result.audits,
            log=result.log.to_jsonl() if request.include_log else None,
        )

    @app.post("/sweep", response_model=SweepResponse)
    def sweep(request: SweepRequest):
        try:
            scenario = parse_scenario(request.scenario)
            if scenario.sweep is None:
                raise ConfigError("scenario has no sweep block")
            result = run_sweep(scenario)
        except ConfigError as exc:
            return _config_error(exc)
        return SweepResponse(
            parameter=result.parameter,
            rows=result.rows,
            aggregate=result.aggregate,
            failures=[SweepFailure(parameter=f.parameter, value=f.value, seed=f.seed, error=f.error) for f in result.failures],
        )

    @app.post("/replay", response_model=ReplayResponse)
    def replay(request: ReplayRequest):
        try:
            log = EventLog.parse_jsonl(request.log)
        except ValueError as exc:
            return _config_error(ConfigError(str(exc)))
        names = request.assertions or sorted(REPLAY_AUDITS)
        unknown = [n for n in names if n not in REPLAY_AUDITS and n != "latency_bounds"]
        if unknown:
            return _config_error(ConfigError(f"unknown assertions: {', '.join(unknown)}"))
        results: dict[str, list[str]] = {}
        for name in names:
            if name == "latency_bounds":
                continue
            results[name] = REPLAY_AUDITS[name](log)
        if request.latency_lo_ticks is not None and request.latency_hi_ticks is not None:
            results["latency_bounds"] = audit_latency_bounds(log, request.latency_lo_ticks, request.latency_hi_ticks)
        return ReplayResponse(passed=not failed_audits(results), audits=results)

    return app


app = create_app()
