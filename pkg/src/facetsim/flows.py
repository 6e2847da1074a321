"""Behaviour flows: per-agent-type DAGs of behaviour nodes with triggers.

A flow is traversed once per agent per tick by the engine. Each non-start
node names a behaviour of the agent type and carries a trigger: an ordered
rule list (all-of criteria -> value expression) plus a default, evaluating
to a probability in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .errors import EvaluationError, ExpressionError, ValidationReport
from .expr import (
    BOOLEAN,
    NUMBER,
    EvalContext,
    Expression,
    evaluate,
    free_variables,
    infer_type,
    parse_expression,
)

START_LABEL = "start"


@dataclass(frozen=True)
class TriggerRule:
    when: tuple[Expression, ...]
    value: Expression


@dataclass(frozen=True)
class TriggerSpec:
    """Ordered rules scanned first-match; ``default`` applies when none do."""

    rules: tuple[TriggerRule, ...] = ()
    default: Expression = field(default_factory=lambda: parse_expression("1"))

    @classmethod
    def constant_one(cls) -> "TriggerSpec":
        return cls((), parse_expression("1"))

    def to_json_obj(self) -> dict:
        return {
            "rules": [
                {"when": [c.source for c in rule.when], "value": rule.value.source}
                for rule in self.rules
            ],
            "default": self.default.source,
        }

    def expressions(self) -> Iterable[tuple[str, Expression]]:
        """(role, expression) pairs; role is 'criterion' or 'value'."""
        for rule in self.rules:
            for c in rule.when:
                yield "criterion", c
            yield "value", rule.value
        yield "value", self.default


def trigger_from_json_obj(obj: object) -> TriggerSpec:
    """Build a TriggerSpec from the documented JSON shape.

    Raises ValueError on structural problems and ExpressionSyntaxError on a
    bad embedded expression; callers attach the node id.
    """
    if not isinstance(obj, dict):
        raise ValueError("trigger data must be a JSON object")
    unknown = set(obj) - {"rules", "default"}
    if unknown:
        raise ValueError(f"unknown trigger keys: {sorted(unknown)}")
    if "default" not in obj:
        raise ValueError("trigger data needs a 'default' expression")
    rules_raw = obj.get("rules", [])
    if not isinstance(rules_raw, list):
        raise ValueError("'rules' must be a list")
    rules = []
    for i, rule in enumerate(rules_raw):
        if not isinstance(rule, dict) or "value" not in rule:
            raise ValueError(f"rules[{i}] must be an object with 'when' and 'value'")
        when_raw = rule.get("when", [])
        if not isinstance(when_raw, list):
            raise ValueError(f"rules[{i}].when must be a list")
        when = tuple(parse_expression(_expr_source(c)) for c in when_raw)
        value = parse_expression(_expr_source(rule["value"]))
        rules.append(TriggerRule(when, value))
    default = parse_expression(_expr_source(obj["default"]))
    return TriggerSpec(tuple(rules), default)


def _expr_source(value: object) -> str:
    # JSON authors are allowed to write bare numbers for constant triggers.
    if isinstance(value, bool):
        raise ValueError("criteria and values are expression strings")
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return value
    raise ValueError(f"expected an expression string, got {type(value).__name__}")


@dataclass(frozen=True)
class FlowNode:
    id: str
    label: str | None
    trigger: TriggerSpec

    @property
    def is_start(self) -> bool:
        return self.label is not None and self.label.strip().lower() == START_LABEL

    @property
    def behaviour(self) -> str | None:
        return None if self.is_start else self.label


@dataclass
class BehaviourFlow:
    nodes: list[FlowNode]
    edges: list[tuple[str, str]]  # (parent id, child id), document order
    agent_type: str | None = None
    start_trigger_ignored: bool = field(default=False, compare=False)

    @property
    def start_id(self) -> str | None:
        starts = [n.id for n in self.nodes if n.is_start]
        return starts[0] if len(starts) == 1 else None

    def node(self, node_id: str) -> FlowNode:
        return self._by_id()[node_id]

    def _by_id(self) -> dict[str, FlowNode]:
        return {n.id: n for n in self.nodes}

    def children(self) -> dict[str, list[str]]:
        """Out-neighbours per node, preserving document edge order."""
        out: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        for parent, child in self.edges:
            out[parent].append(child)
        return out

    def parents(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        for parent, child in self.edges:
            out[child].append(parent)
        return out


@dataclass(frozen=True)
class AgentSchema:
    """What a flow may reference: the composed type's behaviours and vars.

    ``var_kinds`` maps qualified names (``agent.income``, ``model.tick``)
    to kinds.
    """

    agent_type: str
    behaviours: frozenset[str]
    var_kinds: Mapping[str, str]


def evaluate_trigger(
    spec: TriggerSpec,
    ctx: EvalContext,
    on_clamp: Callable[[float], None] | None = None,
) -> float:
    """First rule whose criteria all hold wins; otherwise the default.

    The result is clamped to [0, 1]; ``on_clamp`` fires with the raw value
    when clamping actually changed it.
    """
    chosen = spec.default
    for rule in spec.rules:
        if all(_criterion(c, ctx) for c in rule.when):
            chosen = rule.value
            break
    raw = evaluate(chosen, ctx)
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise EvaluationError("trigger value must be a number", "TYPE_MISMATCH")
    value = float(raw)
    if value < 0.0 or value > 1.0:
        if on_clamp is not None:
            on_clamp(value)
        value = min(1.0, max(0.0, value))
    return value


def _criterion(expr: Expression, ctx: EvalContext) -> bool:
    out = evaluate(expr, ctx)
    if not isinstance(out, bool):
        raise EvaluationError("trigger criterion must be boolean", "TYPE_MISMATCH")
    return out


def validate_flow(flow: BehaviourFlow, schema: AgentSchema | None = None) -> ValidationReport:
    """Structural checks always; behaviour/variable checks when a schema is given.

    Errors reject the flow at load time; unreachable nodes are warnings only.
    """
    report = ValidationReport()
    starts = [n for n in flow.nodes if n.is_start]
    if not starts:
        report.error("MISSING_START", None, "flow has no node labelled 'start'")
    elif len(starts) > 1:
        report.error(
            "MULTIPLE_START",
            ", ".join(n.id for n in starts),
            "flow has more than one node labelled 'start'",
        )

    parents = flow.parents()
    if len(starts) == 1 and parents[starts[0].id]:
        report.error(
            "INVALID_START", starts[0].id, "start node must have no incoming edges"
        )
    if flow.start_trigger_ignored:
        report.warn(
            "START_TRIGGER_IGNORED",
            starts[0].id if starts else None,
            "trigger data on the start node is never evaluated",
        )

    for node in flow.nodes:
        if node.label is None and not node.is_start:
            report.error("MISSING_LABEL", node.id, "node has no label")

    cycle = _find_cycle(flow)
    if cycle:
        report.error("CYCLE", " -> ".join(cycle), "flow must be acyclic")

    if len(starts) == 1 and not cycle:
        reachable = _reachable_from(flow, starts[0].id)
        for node in flow.nodes:
            if node.id not in reachable:
                report.warn(
                    "UNREACHABLE_NODE", node.id, "node cannot be reached from start"
                )

    if schema is not None:
        for node in flow.nodes:
            if node.is_start:
                continue
            if node.behaviour is not None and node.behaviour not in schema.behaviours:
                report.error(
                    "UNKNOWN_BEHAVIOUR",
                    node.id,
                    f"behaviour {node.behaviour!r} is not defined on "
                    f"{schema.agent_type}",
                )
            _check_trigger(node, schema, report)
    return report


def _check_trigger(node: FlowNode, schema: AgentSchema, report: ValidationReport) -> None:
    for role, expr in node.trigger.expressions():
        missing = sorted(free_variables(expr) - set(schema.var_kinds))
        if missing:
            report.error(
                "UNBOUND_VARIABLE",
                node.id,
                f"trigger references unknown variable(s): {', '.join(missing)}",
            )
            continue
        try:
            kind = infer_type(expr, schema.var_kinds)
        except ExpressionError as exc:
            report.error("TYPE_MISMATCH", node.id, str(exc))
            continue
        want = BOOLEAN if role == "criterion" else NUMBER
        if kind != want:
            report.error(
                "TYPE_MISMATCH",
                node.id,
                f"trigger {role} must be {want}, got {kind}: {expr.source!r}",
            )


def _find_cycle(flow: BehaviourFlow) -> list[str] | None:
    children = flow.children()
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {n.id: WHITE for n in flow.nodes}
    stack_path: list[str] = []

    def visit(nid: str) -> list[str] | None:
        colour[nid] = GREY
        stack_path.append(nid)
        for child in children[nid]:
            if colour[child] == GREY:
                i = stack_path.index(child)
                return stack_path[i:] + [child]
            if colour[child] == WHITE:
                found = visit(child)
                if found:
                    return found
        stack_path.pop()
        colour[nid] = BLACK
        return None

    for node in flow.nodes:
        if colour[node.id] == WHITE:
            found = visit(node.id)
            if found:
                return found
    return None


def _reachable_from(flow: BehaviourFlow, start: str) -> set[str]:
    children = flow.children()
    seen = {start}
    frontier = [start]
    while frontier:
        nid = frontier.pop()
        for child in children[nid]:
            if child not in seen:
                seen.add(child)
                frontier.append(child)
    return seen
