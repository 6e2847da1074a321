"""Exception types and the shared diagnostic/report shapes.

Every loader in the package reports problems the same way: a flat list of
:class:`Diagnostic` records (code, where, message) collected into a
:class:`ValidationReport`. Loaders that must reject their input raise
:class:`ValidationFailure` carrying the report, so the CLI and the HTTP API
can render identical diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class FacetSimError(Exception):
    """Base class for every error raised by this package."""


@dataclass(frozen=True)
class Diagnostic:
    code: str
    where: str | None
    message: str

    def format(self) -> str:
        if self.where:
            return f"{self.code} at {self.where}: {self.message}"
        return f"{self.code}: {self.message}"

    def to_dict(self) -> dict:
        return {"code": self.code, "where": self.where, "message": self.message}


@dataclass
class ValidationReport:
    errors: list[Diagnostic] = field(default_factory=list)
    warnings: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, code: str, where: str | None, message: str) -> None:
        self.errors.append(Diagnostic(code, where, message))

    def warn(self, code: str, where: str | None, message: str) -> None:
        self.warnings.append(Diagnostic(code, where, message))

    def merge(self, other: "ValidationReport") -> None:
        self.errors.extend(other.errors)
        self.warnings.extend(other.warnings)

    def error_codes(self) -> set[str]:
        return {d.code for d in self.errors}

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "errors": [d.to_dict() for d in self.errors],
            "warnings": [d.to_dict() for d in self.warnings],
        }

    def raise_if_failed(self, message: str) -> None:
        if not self.ok:
            raise ValidationFailure(message, self)


class ValidationFailure(FacetSimError):
    """An artifact was rejected; ``report`` holds every collected diagnostic."""

    def __init__(self, message: str, report: ValidationReport):
        lines = [message] + ["  " + d.format() for d in report.errors]
        super().__init__("\n".join(lines))
        self.report = report


class DependencyError(ValidationFailure):
    """Facet selection failed dependency resolution."""


class CompositionError(ValidationFailure):
    """Facet deltas conflict or reference unknown names."""


# --- expression language ---

class ExpressionError(FacetSimError):
    pass


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ExpressionTypeError(ExpressionError):
    pass


class EvaluationError(ExpressionError):
    """Runtime evaluation failure; ``code`` is a stable machine-readable tag."""

    def __init__(self, message: str, code: str):
        super().__init__(message)
        self.code = code


# --- flows ---

class FlowLoadError(FacetSimError):
    def __init__(self, message: str, code: str, node_id: str | None = None):
        where = f" (node {node_id})" if node_id else ""
        super().__init__(f"{code}: {message}{where}")
        self.code = code
        self.node_id = node_id


# --- engine ---

class EngineRuntimeError(FacetSimError):
    """A run aborted mid-tick; carries enough context to locate the failure."""

    def __init__(
        self,
        message: str,
        *,
        tick: int | None = None,
        agent_id: int | None = None,
        node_id: str | None = None,
        policy: str | None = None,
    ):
        ctx = []
        if tick is not None:
            ctx.append(f"tick={tick}")
        if agent_id is not None:
            ctx.append(f"agent={agent_id}")
        if node_id is not None:
            ctx.append(f"node={node_id}")
        if policy is not None:
            ctx.append(f"policy={policy}")
        suffix = f" [{', '.join(ctx)}]" if ctx else ""
        super().__init__(message + suffix)
        self.tick = tick
        self.agent_id = agent_id
        self.node_id = node_id
        self.policy = policy


# --- archives ---

class ArchiveError(FacetSimError):
    pass


class ArchiveIntegrityError(ArchiveError):
    """Content hash mismatch: the archive was modified after persisting."""


class NoSharedMetricsError(FacetSimError):
    code = "NO_SHARED_METRICS"
