"""Request/response models for the HTTP service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class RunRequest(BaseModel):
    scenario: dict[str, Any]
    overrides: list[str] = Field(default_factory=list)
    include_log: bool = False


class RunResponse(BaseModel):
    status: str = "ok"
    metrics: dict[str, Any]
    audits: dict[str, list[str]] = Field(default_factory=dict)
    log: Optional[str] = None


class ErrorResponse(BaseModel):
    status: str
    message: str
    details: list[str] = Field(default_factory=list)


class SweepRequest(BaseModel):
    scenario: dict[str, Any]


class SweepFailure(BaseModel):
    parameter: str
    value: Any
    seed: int
    error: str


class SweepResponse(BaseModel):
    status: str = "ok"
    parameter: str
    rows: list[dict[str, Any]]
    aggregate: list[dict[str, Any]]
    failures: list[SweepFailure] = Field(default_factory=list)


class ReplayRequest(BaseModel):
    log: str
    assertions: list[str] = Field(default_factory=list)
    latency_lo_ticks: Optional[int] = None
    latency_hi_ticks: Optional[int] = None


class ReplayResponse(BaseModel):
    status: str = "ok"
    passed: bool
    audits: dict[str, list[str]]
