"""End-user policy interventions: condition + action over a target agent type.

Policies are applied by the engine at the start of each tick, before the
activation order is drawn, so their effects are visible to every trigger
evaluated that tick. ``mode: once`` policies hit each agent at most once per
run; ``mode: continuous`` re-applies on every tick the condition holds
(note that a continuous multiply compounds — subsidy-style interventions
should be ``once``).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from .errors import (
    EvaluationError,
    ExpressionError,
    ValidationFailure,
    ValidationReport,
)
from .expr import (
    BOOLEAN,
    NUMBER,
    EvalContext,
    Expression,
    Scalar,
    evaluate,
    free_variables,
    infer_type,
    kind_of,
    parse_expression,
)
from .facets import CompositeModelSpec, VarDecl

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")

POLICY_OPS = ("set", "add", "multiply")
POLICY_MODES = ("once", "continuous")


@dataclass(frozen=True)
class PolicyAction:
    op: str  # set | add | multiply
    variable: str
    operand: Expression


@dataclass(frozen=True)
class Policy:
    name: str
    target_agent_type: str
    condition: Expression
    action: PolicyAction
    mode: str  # once | continuous


def parse_policy(document: str) -> Policy:
    """Parse policy JSON text into a validated Policy (schema level only;
    cross-checking against a composed model happens in validate_policy)."""
    report = ValidationReport()
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as exc:
        report.error("BAD_JSON", None, f"policy is not valid JSON: {exc}")
        raise ValidationFailure("policy rejected", report) from None
    policy = policy_from_obj(obj, report)
    report.raise_if_failed("policy rejected")
    assert policy is not None
    return policy


def policy_from_obj(obj: object, report: ValidationReport) -> Policy | None:
    if not isinstance(obj, dict):
        report.error("SCHEMA", None, "policy must be a JSON object")
        return None
    unknown = set(obj) - {"name", "target_agent_type", "condition", "action", "mode"}
    if unknown:
        report.error("SCHEMA", None, f"unknown policy keys: {sorted(unknown)}")
    name = obj.get("name")
    if not isinstance(name, str) or not _NAME.match(name):
        report.error("SCHEMA", "name", "policy needs a valid 'name'")
        return None
    target = obj.get("target_agent_type")
    if not isinstance(target, str):
        report.error("SCHEMA", "target_agent_type", "policy needs a 'target_agent_type'")
        return None
    condition = _expr(obj.get("condition"), "condition", report)
    mode = obj.get("mode")
    if mode not in POLICY_MODES:
        report.error("UNKNOWN_MODE", "mode", f"mode must be one of {POLICY_MODES}, got {mode!r}")
        return None
    raw_action = obj.get("action")
    if not isinstance(raw_action, dict):
        report.error("SCHEMA", "action", "policy needs an 'action' object")
        return None
    op = raw_action.get("op")
    if op not in POLICY_OPS:
        report.error("UNKNOWN_OP", "action.op", f"op must be one of {POLICY_OPS}, got {op!r}")
        return None
    variable = raw_action.get("variable")
    if not isinstance(variable, str):
        report.error("SCHEMA", "action.variable", "action needs a 'variable'")
        return None
    operand = _expr(raw_action.get("operand"), "action.operand", report)
    if condition is None or operand is None:
        return None
    return Policy(name, target, condition, PolicyAction(op, variable, operand), mode)


def _expr(raw: object, path: str, report: ValidationReport) -> Expression | None:
    if isinstance(raw, bool):
        return parse_expression("true" if raw else "false")
    if isinstance(raw, (int, float)):
        return parse_expression(repr(float(raw)))
    if isinstance(raw, str):
        try:
            return parse_expression(raw)
        except ExpressionError as exc:
            report.error("EXPRESSION", path, str(exc))
            return None
    report.error("SCHEMA", path, "expected an expression")
    return None


def policy_to_obj(policy: Policy) -> dict:
    return {
        "name": policy.name,
        "target_agent_type": policy.target_agent_type,
        "condition": policy.condition.source,
        "action": {
            "op": policy.action.op,
            "variable": policy.action.variable,
            "operand": policy.action.operand.source,
        },
        "mode": policy.mode,
    }


def validate_policy(policy: Policy, composite: CompositeModelSpec) -> ValidationReport:
    """Cross-check a policy against the composed model."""
    report = ValidationReport()
    where = f"policy:{policy.name}"
    spec = composite.agent_types.get(policy.target_agent_type)
    if spec is None:
        report.error(
            "UNKNOWN_AGENT_TYPE",
            where,
            f"target agent type {policy.target_agent_type!r} is not in the composed model",
        )
        return report

    kinds = composite.model_var_kinds()
    for var_name, decl in spec.vars.items():
        kinds[f"agent.{var_name}"] = decl.kind

    decl = spec.vars.get(policy.action.variable)
    if decl is None:
        report.error(
            "UNDECLARED_VARIABLE",
            where,
            f"action writes {policy.target_agent_type}.{policy.action.variable}, "
            "which is not declared",
        )

    for label, expr, want in (
        ("condition", policy.condition, BOOLEAN),
        ("operand", policy.action.operand, None),
    ):
        missing = sorted(free_variables(expr) - set(kinds))
        if missing:
            report.error(
                "UNBOUND_VARIABLE", where, f"{label} references: {', '.join(missing)}"
            )
            continue
        try:
            got = infer_type(expr, kinds)
        except ExpressionError as exc:
            report.error("TYPE_MISMATCH", where, f"{label}: {exc}")
            continue
        if want is not None and got != want:
            report.error("TYPE_MISMATCH", where, f"{label} must be {want}, got {got}")
        if label == "operand" and decl is not None:
            if policy.action.op == "set":
                if got != decl.kind:
                    report.error(
                        "TYPE_MISMATCH",
                        where,
                        f"set operand is {got}, variable is {decl.kind}",
                    )
            elif decl.kind != NUMBER or got != NUMBER:
                report.error(
                    "TYPE_MISMATCH",
                    where,
                    f"{policy.action.op} needs a number variable and operand",
                )
    return report


def applicable_agents(
    policy: Policy,
    population: Iterable,
    model_vars: Mapping[str, Scalar],
    applied: set[int] | None = None,
) -> list[int]:
    """Ids (ascending) of target-type agents whose condition holds this tick.

    ``applied`` carries the already-hit ids for ``mode: once`` policies.
    """
    exclude = applied if (applied is not None and policy.mode == "once") else frozenset()
    out = []
    for agent in population:
        if agent.agent_type != policy.target_agent_type or agent.id in exclude:
            continue
        verdict = evaluate(policy.condition, EvalContext(agent.vars, model_vars))
        if not isinstance(verdict, bool):
            raise EvaluationError(
                f"policy {policy.name!r} condition must be boolean", "TYPE_MISMATCH"
            )
        if verdict:
            out.append(agent.id)
    return sorted(out)


def apply_policy(
    policy: Policy,
    agent,
    model_vars: Mapping[str, Scalar],
    var_decl: VarDecl | None = None,
    on_range_clamp: Callable[[float], None] | None = None,
) -> tuple[Scalar, Scalar]:
    """Mutate the agent per the action; returns (old value, new value).

    The operand is evaluated against the agent's pre-application state.
    Number variables with a declared range are clamped, reporting through
    ``on_range_clamp``.
    """
    name = policy.action.variable
    if name not in agent.vars:
        raise EvaluationError(
            f"policy {policy.name!r} writes undeclared variable {name!r}",
            "UNDECLARED_VARIABLE",
        )
    old = agent.vars[name]
    operand = evaluate(policy.action.operand, EvalContext(agent.vars, model_vars))

    if policy.action.op == "set":
        if kind_of(operand) != kind_of(old):
            raise EvaluationError(
                f"policy {policy.name!r} sets {name!r} ({kind_of(old)}) "
                f"to a {kind_of(operand)}",
                "TYPE_MISMATCH",
            )
        new: Scalar = operand
    else:
        if isinstance(old, bool) or not isinstance(old, (int, float)):
            raise EvaluationError(
                f"policy {policy.name!r} cannot {policy.action.op} "
                f"non-number variable {name!r}",
                "TYPE_MISMATCH",
            )
        if isinstance(operand, bool) or not isinstance(operand, (int, float)):
            raise EvaluationError(
                f"policy {policy.name!r} operand must be a number", "TYPE_MISMATCH"
            )
        new = old + operand if policy.action.op == "add" else old * operand

    if var_decl is not None and var_decl.range is not None and isinstance(new, float):
        lo, hi = var_decl.range
        clamped = min(hi, max(lo, new))
        if clamped != new and on_range_clamp is not None:
            on_range_clamp(new)
        new = clamped

    agent.vars[name] = new
    return old, new
