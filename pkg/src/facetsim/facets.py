"""Facet manifests and composition into a runnable composite model.

A facet is a declarative JSON unit contributed by one expert: it can create
agent types, extend existing ones with state variables and behaviours, and
declare model-level variables. Selected facets are dependency-ordered and
folded over the base model; name collisions are hard errors naming both
facets, never silent overwrites.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Union

from .errors import (
    CompositionError,
    DependencyError,
    ExpressionError,
    ValidationFailure,
    ValidationReport,
)
from .expr import (
    BOOLEAN,
    KINDS,
    NUMBER,
    Expression,
    free_variables,
    infer_type,
    parse_expression,
)
from .flows import AgentSchema

RESERVED_MODEL_VARS = frozenset({"tick"})

_VAR_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_ENTITY_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")


@dataclass(frozen=True)
class VarDecl:
    name: str
    kind: str  # number | boolean | text
    init: Expression
    range: tuple[float, float] | None = None


@dataclass(frozen=True)
class SimpleAction:
    op: str  # set | add | multiply
    variable: str
    value: Expression


@dataclass(frozen=True)
class MatchAction:
    """Pair with one uniformly drawn agent of ``target_type`` passing the filter."""

    target_type: str
    target_filter: Expression
    self_actions: tuple[SimpleAction, ...]
    target_actions: tuple[SimpleAction, ...]


Action = Union[SimpleAction, MatchAction]


@dataclass(frozen=True)
class BehaviourDef:
    name: str
    actions: tuple[Action, ...]


@dataclass(frozen=True)
class AgentTypeDelta:
    name: str
    creates_type: bool
    state_vars: tuple[VarDecl, ...] = ()
    behaviours: tuple[BehaviourDef, ...] = ()


@dataclass(frozen=True)
class FacetManifest:
    name: str
    depends_on: tuple[str, ...] = ()
    agent_types: tuple[AgentTypeDelta, ...] = ()
    model_vars: tuple[VarDecl, ...] = ()


@dataclass
class TypeSpec:
    name: str
    vars: dict[str, VarDecl] = field(default_factory=dict)
    behaviours: dict[str, BehaviourDef] = field(default_factory=dict)


@dataclass
class CompositeModelSpec:
    """The merged model: agent types, model vars, and per-item provenance."""

    agent_types: dict[str, TypeSpec] = field(default_factory=dict)
    model_vars: dict[str, VarDecl] = field(default_factory=dict)
    provenance: dict[str, str] = field(default_factory=dict)

    @classmethod
    def empty(cls) -> "CompositeModelSpec":
        return cls()

    def model_var_kinds(self) -> dict[str, str]:
        kinds = {"model.tick": NUMBER}
        for name, decl in self.model_vars.items():
            kinds[f"model.{name}"] = decl.kind
        return kinds

    def schema_for(self, agent_type: str) -> AgentSchema:
        spec = self.agent_types[agent_type]
        kinds = self.model_var_kinds()
        for name, decl in spec.vars.items():
            kinds[f"agent.{name}"] = decl.kind
        return AgentSchema(
            agent_type=agent_type,
            behaviours=frozenset(spec.behaviours),
            var_kinds=kinds,
        )


# ---------------------------------------------------------------------------
# Manifest parsing (hand validators: diagnostics carry JSON paths)
# ---------------------------------------------------------------------------

def parse_manifest(document: str) -> FacetManifest:
    """Parse facet manifest JSON text; every expression is pre-parsed.

    Raises ValidationFailure whose report pinpoints each violation by JSON
    path (e.g. ``agent_types[0].state_vars[0].init``).
    """
    report = ValidationReport()
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as exc:
        report.error("BAD_JSON", None, f"manifest is not valid JSON: {exc}")
        raise ValidationFailure("facet manifest rejected", report) from None
    manifest = _manifest_from_obj(obj, report)
    report.raise_if_failed("facet manifest rejected")
    assert manifest is not None
    return manifest


def _manifest_from_obj(obj: object, report: ValidationReport) -> FacetManifest | None:
    if not isinstance(obj, dict):
        report.error("SCHEMA", None, "manifest must be a JSON object")
        return None
    unknown = set(obj) - {"name", "depends_on", "agent_types", "model_vars"}
    if unknown:
        report.error("SCHEMA", None, f"unknown manifest keys: {sorted(unknown)}")
    name = obj.get("name")
    if not isinstance(name, str) or not _ENTITY_NAME.match(name):
        report.error("SCHEMA", "name", "facet needs a valid 'name'")
        name = name if isinstance(name, str) else "<invalid>"

    depends_on = obj.get("depends_on", [])
    if not isinstance(depends_on, list) or not all(isinstance(d, str) for d in depends_on):
        report.error("SCHEMA", "depends_on", "'depends_on' must be a list of facet names")
        depends_on = []

    deltas = []
    raw_types = obj.get("agent_types", [])
    if not isinstance(raw_types, list):
        report.error("SCHEMA", "agent_types", "'agent_types' must be a list")
        raw_types = []
    for i, raw in enumerate(raw_types):
        delta = _delta_from_obj(raw, f"agent_types[{i}]", report)
        if delta is not None:
            deltas.append(delta)

    model_vars = _vars_from_obj(obj.get("model_vars", []), "model_vars", report)
    for decl in model_vars:
        if decl.name in RESERVED_MODEL_VARS:
            report.error(
                "RESERVED_NAME", "model_vars", f"model variable {decl.name!r} is built in"
            )

    if not report.ok:
        return None
    return FacetManifest(
        name=name,
        depends_on=tuple(depends_on),
        agent_types=tuple(deltas),
        model_vars=tuple(model_vars),
    )


def _delta_from_obj(raw: object, path: str, report: ValidationReport) -> AgentTypeDelta | None:
    if not isinstance(raw, dict):
        report.error("SCHEMA", path, "agent type delta must be an object")
        return None
    unknown = set(raw) - {"name", "creates_type", "state_vars", "behaviours"}
    if unknown:
        report.error("SCHEMA", path, f"unknown keys: {sorted(unknown)}")
    name = raw.get("name")
    if not isinstance(name, str) or not _ENTITY_NAME.match(name):
        report.error("SCHEMA", f"{path}.name", "agent type needs a valid 'name'")
        return None
    creates = raw.get("creates_type")
    if not isinstance(creates, bool):
        report.error(
            "SCHEMA", f"{path}.creates_type", "'creates_type' must be true or false"
        )
        return None
    state_vars = _vars_from_obj(raw.get("state_vars", []), f"{path}.state_vars", report)
    behaviours = []
    raw_behaviours = raw.get("behaviours", [])
    if not isinstance(raw_behaviours, list):
        report.error("SCHEMA", f"{path}.behaviours", "'behaviours' must be a list")
        raw_behaviours = []
    for i, rb in enumerate(raw_behaviours):
        b = _behaviour_from_obj(rb, f"{path}.behaviours[{i}]", report)
        if b is not None:
            behaviours.append(b)
    return AgentTypeDelta(name, creates, tuple(state_vars), tuple(behaviours))


def _vars_from_obj(raw: object, path: str, report: ValidationReport) -> list[VarDecl]:
    if not isinstance(raw, list):
        report.error("SCHEMA", path, "variable list expected")
        return []
    out = []
    for i, rv in enumerate(raw):
        decl = _var_from_obj(rv, f"{path}[{i}]", report)
        if decl is not None:
            out.append(decl)
    return out


def _var_from_obj(raw: object, path: str, report: ValidationReport) -> VarDecl | None:
    if not isinstance(raw, dict):
        report.error("SCHEMA", path, "variable declaration must be an object")
        return None
    unknown = set(raw) - {"name", "kind", "init", "range"}
    if unknown:
        report.error("SCHEMA", path, f"unknown keys: {sorted(unknown)}")
    name = raw.get("name")
    if not isinstance(name, str) or not _VAR_NAME.match(name):
        report.error("SCHEMA", f"{path}.name", "variable needs a valid identifier name")
        return None
    kind = raw.get("kind")
    if kind not in KINDS:
        report.error("SCHEMA", f"{path}.kind", f"kind must be one of {', '.join(KINDS)}")
        return None
    if "init" not in raw:
        report.error("SCHEMA", f"{path}.init", "variable needs an 'init'")
        return None
    init = _expression_from_obj(raw["init"], f"{path}.init", report)
    if init is None:
        return None

    rng = raw.get("range")
    bounds: tuple[float, float] | None = None
    if rng is not None:
        if kind != NUMBER:
            report.error("SCHEMA", f"{path}.range", "only number variables take a range")
        elif (
            not isinstance(rng, list)
            or len(rng) != 2
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in rng)
            or rng[0] > rng[1]
        ):
            report.error("SCHEMA", f"{path}.range", "range must be [lo, hi] with lo <= hi")
        else:
            bounds = (float(rng[0]), float(rng[1]))
    return VarDecl(name, kind, init, bounds)


def _expression_from_obj(raw: object, path: str, report: ValidationReport) -> Expression | None:
    """JSON string = expression source; number/boolean = literal."""
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
    report.error("SCHEMA", path, "expected an expression string or literal")
    return None


def _behaviour_from_obj(raw: object, path: str, report: ValidationReport) -> BehaviourDef | None:
    if not isinstance(raw, dict):
        report.error("SCHEMA", path, "behaviour must be an object")
        return None
    name = raw.get("name")
    if not isinstance(name, str) or not _ENTITY_NAME.match(name):
        report.error("SCHEMA", f"{path}.name", "behaviour needs a valid 'name'")
        return None
    raw_actions = raw.get("actions", [])
    if not isinstance(raw_actions, list):
        report.error("SCHEMA", f"{path}.actions", "'actions' must be a list")
        return None
    actions = []
    for i, ra in enumerate(raw_actions):
        action = _action_from_obj(ra, f"{path}.actions[{i}]", report, allow_match=True)
        if action is not None:
            actions.append(action)
    return BehaviourDef(name, tuple(actions))


def _action_from_obj(
    raw: object, path: str, report: ValidationReport, allow_match: bool
) -> Action | None:
    if not isinstance(raw, dict):
        report.error("SCHEMA", path, "action must be an object")
        return None
    op = raw.get("op")
    if op == "match":
        if not allow_match:
            report.error("MATCH_NESTED", path, "match actions cannot nest")
            return None
        unknown = set(raw) - {"op", "target_type", "target_filter", "self_actions", "target_actions"}
        if unknown:
            report.error("SCHEMA", path, f"unknown keys: {sorted(unknown)}")
        target_type = raw.get("target_type")
        if not isinstance(target_type, str) or not _ENTITY_NAME.match(target_type):
            report.error("SCHEMA", f"{path}.target_type", "match needs a 'target_type'")
            return None
        if "target_filter" not in raw:
            report.error("SCHEMA", f"{path}.target_filter", "match needs a 'target_filter'")
            return None
        target_filter = _expression_from_obj(raw["target_filter"], f"{path}.target_filter", report)
        if target_filter is None:
            return None
        self_actions = _simple_actions(raw.get("self_actions", []), f"{path}.self_actions", report)
        target_actions = _simple_actions(raw.get("target_actions", []), f"{path}.target_actions", report)
        return MatchAction(target_type, target_filter, tuple(self_actions), tuple(target_actions))

    if op not in ("set", "add", "multiply"):
        report.error("UNKNOWN_OP", f"{path}.op", f"op must be set, add, multiply or match, got {op!r}")
        return None
    unknown = set(raw) - {"op", "variable", "value"}
    if unknown:
        report.error("SCHEMA", path, f"unknown keys: {sorted(unknown)}")
    variable = raw.get("variable")
    if not isinstance(variable, str) or not _VAR_NAME.match(variable):
        report.error("SCHEMA", f"{path}.variable", "action needs a 'variable'")
        return None
    if "value" not in raw:
        report.error("SCHEMA", f"{path}.value", "action needs a 'value' expression")
        return None
    value = _expression_from_obj(raw["value"], f"{path}.value", report)
    if value is None:
        return None
    return SimpleAction(op, variable, value)


def _simple_actions(raw: object, path: str, report: ValidationReport) -> list[SimpleAction]:
    if not isinstance(raw, list):
        report.error("SCHEMA", path, "action list expected")
        return []
    out = []
    for i, ra in enumerate(raw):
        action = _action_from_obj(ra, f"{path}[{i}]", report, allow_match=False)
        if isinstance(action, SimpleAction):
            out.append(action)
    return out


# ---------------------------------------------------------------------------
# Dependency resolution
# ---------------------------------------------------------------------------

def resolve_dependencies(
    selected: list[str], available: dict[str, FacetManifest]
) -> list[FacetManifest]:
    """Order the selection so every facet follows all of its dependencies.

    The order is stable: independent facets keep their selection order.
    Dependencies are never pulled in implicitly; a dependency outside the
    selection is a MISSING_DEPENDENCY error listing the absent names.
    """
    report = ValidationReport()
    for name in selected:
        if name not in available:
            report.error("UNKNOWN_FACET", name, f"facet {name!r} is not available")
    seen: set[str] = set()
    for name in selected:
        if name in seen:
            report.error("DUPLICATE_SELECTION", name, f"facet {name!r} selected twice")
        seen.add(name)
    report.raise_if_failed("facet selection rejected")

    selected_set = set(selected)
    for name in selected:
        missing = [d for d in available[name].depends_on if d not in selected_set]
        if missing:
            report.error(
                "MISSING_DEPENDENCY",
                name,
                f"facet {name!r} requires unselected facet(s): {', '.join(sorted(missing))}",
            )
    if not report.ok:
        raise DependencyError("facet selection rejected", report)

    index = {name: i for i, name in enumerate(selected)}
    remaining_deps = {
        name: {d for d in available[name].depends_on if d in selected_set}
        for name in selected
    }
    ordered: list[str] = []
    ready = sorted((n for n, deps in remaining_deps.items() if not deps), key=index.get)
    while ready:
        name = ready.pop(0)
        ordered.append(name)
        newly = []
        for other, deps in remaining_deps.items():
            if name in deps:
                deps.discard(name)
                if not deps and other not in ordered:
                    newly.append(other)
        ready = sorted(set(ready) | set(newly), key=index.get)
    if len(ordered) != len(selected):
        stuck = sorted(set(selected) - set(ordered))
        report.error(
            "CYCLIC_DEPENDENCY", ", ".join(stuck), "facet dependencies form a cycle"
        )
        raise DependencyError("facet selection rejected", report)
    return [available[name] for name in ordered]


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------

def compose(base: CompositeModelSpec, facets: list[FacetManifest]) -> CompositeModelSpec:
    """Fold facet deltas over ``base``; conflicts and dangling references fail.

    The input order must already respect dependencies (see
    resolve_dependencies); non-conflicting facets compose to the same spec
    in any order.
    """
    report = ValidationReport()
    out = CompositeModelSpec(
        agent_types={
            name: TypeSpec(name, dict(t.vars), dict(t.behaviours))
            for name, t in base.agent_types.items()
        },
        model_vars=dict(base.model_vars),
        provenance=dict(base.provenance),
    )

    for facet in facets:
        _apply_facet(out, facet, report)
    if report.ok:
        _check_references(out, report)
    if not report.ok:
        raise CompositionError("facet composition rejected", report)
    return out


def _apply_facet(out: CompositeModelSpec, facet: FacetManifest, report: ValidationReport) -> None:
    for decl in facet.model_vars:
        key = f"model_var:{decl.name}"
        if decl.name in out.model_vars:
            report.error(
                "DUPLICATE_VAR",
                key,
                f"model variable {decl.name!r} declared by both "
                f"{out.provenance[key]!r} and {facet.name!r}",
            )
            continue
        out.model_vars[decl.name] = decl
        out.provenance[key] = facet.name

    for delta in facet.agent_types:
        type_key = f"type:{delta.name}"
        if delta.creates_type:
            if delta.name in out.agent_types:
                report.error(
                    "DUPLICATE_TYPE",
                    type_key,
                    f"agent type {delta.name!r} created by both "
                    f"{out.provenance[type_key]!r} and {facet.name!r}",
                )
                continue
            out.agent_types[delta.name] = TypeSpec(delta.name)
            out.provenance[type_key] = facet.name
        elif delta.name not in out.agent_types:
            report.error(
                "EXTENDS_UNKNOWN_TYPE",
                type_key,
                f"facet {facet.name!r} extends agent type {delta.name!r}, "
                "which no selected facet creates",
            )
            continue
        spec = out.agent_types[delta.name]

        for decl in delta.state_vars:
            key = f"var:{delta.name}.{decl.name}"
            if decl.name in spec.vars:
                report.error(
                    "DUPLICATE_VAR",
                    key,
                    f"variable {delta.name}.{decl.name} declared by both "
                    f"{out.provenance[key]!r} and {facet.name!r}",
                )
                continue
            spec.vars[decl.name] = decl
            out.provenance[key] = facet.name

        for behaviour in delta.behaviours:
            key = f"behaviour:{delta.name}.{behaviour.name}"
            if behaviour.name in spec.behaviours:
                report.error(
                    "DUPLICATE_BEHAVIOUR",
                    key,
                    f"behaviour {delta.name}.{behaviour.name} declared by both "
                    f"{out.provenance[key]!r} and {facet.name!r}",
                )
                continue
            spec.behaviours[behaviour.name] = behaviour
            out.provenance[key] = facet.name


def _check_references(out: CompositeModelSpec, report: ValidationReport) -> None:
    model_kinds = out.model_var_kinds()

    # model var initializers: earlier-declared model vars only
    seen: dict[str, str] = {"model.tick": NUMBER}
    for name, decl in out.model_vars.items():
        where = f"model_var:{name}"
        _check_init(decl, seen, where, report)
        seen[f"model.{name}"] = decl.kind

    for type_name, spec in out.agent_types.items():
        # agent var initializers: model vars + earlier vars of this agent
        kinds = dict(model_kinds)
        for var_name, decl in spec.vars.items():
            where = f"var:{type_name}.{var_name}"
            _check_init(decl, kinds, where, report)
            kinds[f"agent.{var_name}"] = decl.kind

        full = dict(model_kinds)
        for var_name, decl in spec.vars.items():
            full[f"agent.{var_name}"] = decl.kind
        for behaviour in spec.behaviours.values():
            where = f"behaviour:{type_name}.{behaviour.name}"
            for action in behaviour.actions:
                if isinstance(action, SimpleAction):
                    _check_simple_action(action, spec, full, where, report)
                else:
                    _check_match_action(action, out, spec, full, model_kinds, where, report)


def _check_init(decl: VarDecl, kinds: dict[str, str], where: str, report: ValidationReport) -> None:
    missing = sorted(free_variables(decl.init) - set(kinds))
    if missing:
        report.error(
            "UNBOUND_VARIABLE",
            where,
            f"init may only use model vars and earlier-declared vars: {', '.join(missing)}",
        )
        return
    try:
        got = infer_type(decl.init, kinds)
    except ExpressionError as exc:
        report.error("TYPE_MISMATCH", where, str(exc))
        return
    if got != decl.kind:
        report.error("TYPE_MISMATCH", where, f"init is {got}, variable is {decl.kind}")


def _check_simple_action(
    action: SimpleAction,
    spec: TypeSpec,
    kinds: dict[str, str],
    where: str,
    report: ValidationReport,
) -> None:
    decl = spec.vars.get(action.variable)
    if decl is None:
        report.error(
            "UNDECLARED_VARIABLE",
            where,
            f"action writes {spec.name}.{action.variable}, which is not declared",
        )
        return
    missing = sorted(free_variables(action.value) - set(kinds))
    if missing:
        report.error("UNBOUND_VARIABLE", where, f"action value references: {', '.join(missing)}")
        return
    try:
        got = infer_type(action.value, kinds)
    except ExpressionError as exc:
        report.error("TYPE_MISMATCH", where, str(exc))
        return
    if action.op == "set":
        if got != decl.kind:
            report.error(
                "TYPE_MISMATCH", where, f"set value is {got}, variable is {decl.kind}"
            )
    else:  # add / multiply
        if decl.kind != NUMBER or got != NUMBER:
            report.error(
                "TYPE_MISMATCH", where, f"{action.op} needs a number variable and value"
            )


def _check_match_action(
    action: MatchAction,
    out: CompositeModelSpec,
    spec: TypeSpec,
    self_kinds: dict[str, str],
    model_kinds: dict[str, str],
    where: str,
    report: ValidationReport,
) -> None:
    target = out.agent_types.get(action.target_type)
    if target is None:
        report.error(
            "UNKNOWN_TARGET_TYPE",
            where,
            f"match targets unknown agent type {action.target_type!r}",
        )
        return
    target_kinds = dict(model_kinds)
    for var_name, decl in target.vars.items():
        target_kinds[f"agent.{var_name}"] = decl.kind

    missing = sorted(free_variables(action.target_filter) - set(target_kinds))
    if missing:
        report.error(
            "UNBOUND_VARIABLE",
            where,
            f"target filter references: {', '.join(missing)} "
            f"(agent.* binds to the {action.target_type} candidate)",
        )
    else:
        try:
            if infer_type(action.target_filter, target_kinds) != BOOLEAN:
                report.error("TYPE_MISMATCH", where, "target filter must be boolean")
        except ExpressionError as exc:
            report.error("TYPE_MISMATCH", where, str(exc))

    for sub in action.self_actions:
        _check_simple_action(sub, spec, self_kinds, where, report)
    for sub in action.target_actions:
        _check_simple_action(sub, target, target_kinds, where, report)
