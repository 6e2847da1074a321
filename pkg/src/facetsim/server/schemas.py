"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class DiagnosticModel(BaseModel):
    code: str
    where: str | None = None
    message: str


class ReportModel(BaseModel):
    ok: bool
    errors: list[DiagnosticModel] = Field(default_factory=list)
    warnings: list[DiagnosticModel] = Field(default_factory=list)


class ActionModel(BaseModel):
    op: str
    variable: str
    operand: str | float | bool


class PolicyModel(BaseModel):
    name: str
    target_agent_type: str
    condition: str | float | bool
    action: ActionModel
    mode: str


class WriteResult(BaseModel):
    ok: bool = True
    warnings: list[DiagnosticModel] = Field(default_factory=list)


class RunRequest(BaseModel):
    scenario: str
    seed: int | None = None


class RunProgress(BaseModel):
    completed: int = 0
    total: int = 0


class RunStatusModel(BaseModel):
    id: str
    scenario: str
    seed: int | None = None
    state: Literal["queued", "running", "done", "failed"]
    progress: RunProgress
    error: str | None = None
    archive: str | None = None


class MetricsModel(BaseModel):
    id: str
    ticks: list[int]
    metrics: dict[str, list[float | None]]


class SummaryCell(BaseModel):
    final: float | None = None
    mean: float | None = None


class CompareModel(BaseModel):
    runs: list[str]
    metrics: list[str]
    ticks: list[int]
    values: dict[str, dict[str, list[float | None]]]
    summary: dict[str, dict[str, SummaryCell]]
