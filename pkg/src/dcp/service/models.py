"""Pydantic request/response models for the bridge service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class CallBody(BaseModel):
    intent: str
    args: dict[str, Any] = Field(default_factory=dict)
    dry_run: bool = False


class CallResult(BaseModel):
    ok: bool = True
    result: Any = None


class ErrorBody(BaseModel):
    ok: bool = False
    code: str
    detail: str
    param: Optional[str] = None


class ValidateBody(BaseModel):
    intent: str
    args: dict[str, Any] = Field(default_factory=dict)
    dry_run: bool = False
    caps: Optional[list[str]] = None  # used only when no bearer token is sent


class ValidateResult(BaseModel):
    ok: bool = True
    intent: str
    normalized_args: dict[str, Any]
    wire_args: dict[str, Any]
    dry_run: bool


class TokenIssueBody(BaseModel):
    caps: list[str]
    ttl_seconds: int = 3600


class TokenResult(BaseModel):
    token: str
    caps: list[str]
    iat: int
    exp: int


class EventRecord(BaseModel):
    event: str
    payload: dict[str, Any]
    received_at: float


class EventsResult(BaseModel):
    events: list[EventRecord]


class EmitBody(BaseModel):
    event: str
    payload: dict[str, Any] = Field(default_factory=dict)


class HealthResult(BaseModel):
    status: str
    device: str
    transport: str
    uptime_s: float


class StatsResult(BaseModel):
    transport: dict[str, int]
    framing: dict[str, int]
    link: dict[str, int]
