"""Deterministic run engine.

Tick phases, in order: (1) apply policies in scenario order to applicable
agents in ascending id; (2) draw a uniform activation permutation from the
run's single rng stream; (3) traverse each agent's behaviour flow in that
order; (4) collect metrics when due; (5) advance the clock.

All randomness comes from one seeded numpy Generator with a fully specified
draw order (init jitter, then per tick: permutation, per-agent traversal
draws), so identical (composite, scenario, seed) inputs replay byte-for-byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable, Mapping

import numpy as np

from .errors import (
    EngineRuntimeError,
    EvaluationError,
    FacetSimError,
    ValidationReport,
)
from .expr import (
    NUMBER,
    CompiledExpr,
    EvalContext,
    Expression,
    Scalar,
    compile_expression,
    evaluate,
    free_variables,
    infer_type,
    kind_of,
)
from .facets import CompositeModelSpec, MatchAction, SimpleAction, VarDecl
from .flows import BehaviourFlow, validate_flow
from .policies import Policy, apply_policy, validate_policy

if TYPE_CHECKING:  # pragma: no cover
    from .scenarios import Scenario

ENGINE_VERSION = "0.1.0"

REDUCERS = ("count", "sum", "mean", "min", "max", "value")


@dataclass
class AgentState:
    id: int
    agent_type: str
    vars: dict[str, Scalar]


@dataclass(frozen=True)
class MetricSpec:
    """What to record: a reduction over one agent type, or a raw model var.

    ``value`` is the degenerate reducer for model-var metrics (agent_type
    omitted); mean/min/max over an empty filtered set record a null cell.
    """

    name: str
    reducer: str
    agent_type: str | None = None
    variable: str | None = None
    filter: Expression | None = None


@dataclass
class MetricTable:
    columns: list[str]
    rows: list[tuple[int, list]]

    def to_csv(self) -> str:
        lines = [",".join(["tick"] + self.columns)]
        for tick, values in self.rows:
            lines.append(",".join([str(tick)] + [_csv_cell(v) for v in values]))
        return "\n".join(lines) + "\n"


def _csv_cell(value) -> str:
    if value is None:
        return ""
    f = float(value)
    return str(int(f)) if f.is_integer() else repr(f)


@dataclass
class RunResult:
    scenario: "Scenario"
    seed: int
    metrics: MetricTable
    warnings: list[str]
    engine_version: str = ENGINE_VERSION
    trace: list[tuple[int, int, str]] | None = None


@dataclass
class TickReport:
    tick: int
    policy_applications: list[int]
    executed_behaviours: int
    metrics_row: list | None


# ---------------------------------------------------------------------------
# Compiled runtime pieces
# ---------------------------------------------------------------------------

class _CompiledTrigger:
    __slots__ = ("rules", "default")

    def __init__(self, rules, default):
        self.rules = rules  # list of (tuple of criterion fns, value fn)
        self.default = default

    def evaluate(self, avars, mvars, on_clamp) -> float:
        chosen = self.default
        for when, value in self.rules:
            matched = True
            for criterion in when:
                verdict = criterion(avars, mvars)
                if verdict is not True and verdict is not False:
                    raise EvaluationError(
                        "trigger criterion must be boolean", "TYPE_MISMATCH"
                    )
                if not verdict:
                    matched = False
                    break
            if matched:
                chosen = value
                break
        raw = chosen(avars, mvars)
        if raw is True or raw is False or not isinstance(raw, (int, float)):
            raise EvaluationError("trigger value must be a number", "TYPE_MISMATCH")
        out = float(raw)
        if out < 0.0 or out > 1.0:
            if on_clamp is not None:
                on_clamp(out)
            out = min(1.0, max(0.0, out))
        return out


@dataclass
class _FlowRuntime:
    agent_type: str
    start: str
    children: dict[str, list[str]]
    behaviours: dict[str, str]  # node id -> behaviour name
    triggers: dict[str, _CompiledTrigger]


@dataclass
class _ActionRuntime:
    op: str
    decl: VarDecl
    value: CompiledExpr


@dataclass
class _MatchRuntime:
    target_type: str
    target_filter: CompiledExpr
    self_actions: list[_ActionRuntime]
    target_actions: list[_ActionRuntime]


@dataclass
class _BehaviourRuntime:
    name: str
    steps: list  # _ActionRuntime | _MatchRuntime


@dataclass
class _MetricRuntime:
    spec: MetricSpec
    filter: CompiledExpr | None


@dataclass
class ModelState:
    composite: CompositeModelSpec
    scenario: "Scenario"
    seed: int
    iterations: int
    collect_interval: int
    rng: np.random.Generator
    agents: list[AgentState]
    agents_by_type: dict[str, list[AgentState]]
    model_vars: dict[str, Scalar]
    flows: dict[str, _FlowRuntime]
    policies: list[Policy]
    metric_runtimes: list[_MetricRuntime]
    behaviour_runtimes: dict[tuple[str, str], _BehaviourRuntime]
    tick: int = 0
    applied: dict[int, set[int]] = field(default_factory=dict)  # policy idx -> agent ids
    warnings: list[str] = field(default_factory=list)
    metric_rows: list[tuple[int, list]] = field(default_factory=list)
    trace: list[tuple[int, int, str]] | None = None
    _warned: set = field(default_factory=set)

    def warn_once(self, key: tuple, message: str) -> None:
        if key not in self._warned:
            self._warned.add(key)
            self.warnings.append(message)

    def model_ctx(self) -> dict[str, Scalar]:
        ctx = dict(self.model_vars)
        ctx["tick"] = float(self.tick)
        return ctx


# ---------------------------------------------------------------------------
# Scenario validation (shared by the loader, the CLI and the API)
# ---------------------------------------------------------------------------

def validate_runnable(spec: CompositeModelSpec, scenario: "Scenario") -> ValidationReport:
    """Every check a scenario must pass before initialize_run will touch it."""
    report = ValidationReport()
    g = scenario.globals
    if not isinstance(g.iterations, int) or g.iterations < 1:
        report.error("BAD_ITERATIONS", "globals.iterations", "iterations must be >= 1")
    if not isinstance(g.data_collection_interval, int) or g.data_collection_interval < 1:
        report.error(
            "BAD_INTERVAL", "globals.data_collection_interval", "interval must be >= 1"
        )
    if not isinstance(g.seed, int) or isinstance(g.seed, bool):
        report.error("BAD_SEED", "globals.seed", "seed must be an integer")

    for type_name in spec.agent_types:
        if type_name not in g.populations:
            report.error(
                "MISSING_POPULATION",
                f"globals.populations.{type_name}",
                f"no population count for agent type {type_name!r}",
            )
    for type_name, count in g.populations.items():
        if type_name not in spec.agent_types:
            report.error(
                "UNKNOWN_AGENT_TYPE",
                f"globals.populations.{type_name}",
                f"population for unknown agent type {type_name!r}",
            )
        elif not isinstance(count, int) or isinstance(count, bool) or count < 0:
            report.error(
                "BAD_POPULATION",
                f"globals.populations.{type_name}",
                "population must be an integer >= 0",
            )

    for type_name in spec.agent_types:
        if type_name not in scenario.flows:
            report.error(
                "MISSING_FLOW",
                type_name,
                f"agent type {type_name!r} has no behaviour flow binding",
            )
    for type_name, flow in scenario.flows.items():
        if type_name not in spec.agent_types:
            report.error(
                "UNKNOWN_AGENT_TYPE",
                f"flow:{type_name}",
                f"flow bound for unknown agent type {type_name!r}",
            )
            continue
        sub = validate_flow(flow, spec.schema_for(type_name))
        for d in sub.errors:
            report.error(d.code, f"flow:{type_name}/{d.where}" if d.where else f"flow:{type_name}", d.message)
        for d in sub.warnings:
            report.warn(d.code, f"flow:{type_name}/{d.where}" if d.where else f"flow:{type_name}", d.message)

    for policy in scenario.policies:
        report.merge(validate_policy(policy, spec))

    seen_metrics: set[str] = set()
    for i, metric in enumerate(scenario.metrics):
        _validate_metric(metric, i, spec, seen_metrics, report)

    kinds = spec.model_var_kinds()
    for name, value in g.model_var_overrides.items():
        where = f"globals.model_var_overrides.{name}"
        if name == "tick":
            report.error("RESERVED_NAME", where, "the clock cannot be overridden")
        elif name not in spec.model_vars:
            report.error("UNKNOWN_MODEL_VAR", where, f"no model variable {name!r}")
        elif kind_of(value) != kinds[f"model.{name}"]:
            report.error(
                "TYPE_MISMATCH",
                where,
                f"override is {kind_of(value)}, variable is {kinds[f'model.{name}']}",
            )

    for entry in g.init_jitter:
        where = f"globals.init_jitter.{entry}"
        type_name, _, var_name = entry.partition(".")
        decl = spec.agent_types.get(type_name)
        decl = decl.vars.get(var_name) if decl else None
        if decl is None:
            report.error("BAD_JITTER", where, f"no variable {entry!r}")
        elif decl.kind != NUMBER or decl.range is None:
            report.error(
                "BAD_JITTER", where, "init_jitter needs a number variable with a range"
            )
    return report


def _validate_metric(
    metric: MetricSpec,
    index: int,
    spec: CompositeModelSpec,
    seen: set[str],
    report: ValidationReport,
) -> None:
    where = f"metrics[{index}]"
    if not metric.name or "," in metric.name or '"' in metric.name or "\n" in metric.name:
        report.error("BAD_METRIC", where, "metric name must be CSV-safe")
        return
    if metric.name in seen:
        report.error("DUPLICATE_METRIC", where, f"metric {metric.name!r} repeated")
    seen.add(metric.name)
    if metric.reducer not in REDUCERS:
        report.error("BAD_METRIC", where, f"unknown reducer {metric.reducer!r}")
        return

    if metric.agent_type is None:
        if metric.reducer != "value":
            report.error(
                "BAD_METRIC", where, "metrics without an agent_type use reducer 'value'"
            )
        elif metric.variable != "tick" and metric.variable not in spec.model_vars:
            report.error(
                "UNKNOWN_MODEL_VAR", where, f"no model variable {metric.variable!r}"
            )
        return

    if metric.reducer == "value":
        report.error("BAD_METRIC", where, "'value' metrics cannot name an agent_type")
        return
    type_spec = spec.agent_types.get(metric.agent_type)
    if type_spec is None:
        report.error(
            "UNKNOWN_AGENT_TYPE", where, f"no agent type {metric.agent_type!r}"
        )
        return
    if metric.reducer == "count":
        if metric.variable is not None:
            report.error("BAD_METRIC", where, "count metrics take no variable")
    else:
        decl = type_spec.vars.get(metric.variable or "")
        if decl is None:
            report.error(
                "UNDECLARED_VARIABLE",
                where,
                f"no variable {metric.agent_type}.{metric.variable}",
            )
        elif decl.kind != NUMBER:
            report.error("TYPE_MISMATCH", where, "metric variables must be numbers")
    if metric.filter is not None:
        kinds = spec.model_var_kinds()
        for var_name, decl in type_spec.vars.items():
            kinds[f"agent.{var_name}"] = decl.kind
        missing = sorted(free_variables(metric.filter) - set(kinds))
        if missing:
            report.error(
                "UNBOUND_VARIABLE", where, f"filter references: {', '.join(missing)}"
            )
            return
        try:
            if infer_type(metric.filter, kinds) != "boolean":
                report.error("TYPE_MISMATCH", where, "metric filter must be boolean")
        except FacetSimError as exc:
            report.error("TYPE_MISMATCH", where, str(exc))


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def initialize_run(
    spec: CompositeModelSpec,
    scenario: "Scenario",
    seed: int | None = None,
    trace: bool = False,
) -> ModelState:
    """Build the t=0 state: model vars, populations, compiled runtimes.

    Initializers are pure; stochastic initial conditions come only from the
    documented ``init_jitter`` option, drawn from the run's rng stream.
    """
    report = validate_runnable(spec, scenario)
    report.raise_if_failed("scenario rejected")

    g = scenario.globals
    effective_seed = g.seed if seed is None else seed
    rng = np.random.default_rng(effective_seed)

    model_vars: dict[str, Scalar] = {}
    ctx_model: dict[str, Scalar] = {"tick": 0.0}
    for name, decl in spec.model_vars.items():
        if name in g.model_var_overrides:
            value: Scalar = g.model_var_overrides[name]
            if isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
        else:
            value = evaluate(decl.init, EvalContext({}, ctx_model))
        model_vars[name] = value
        ctx_model[name] = value

    jitter = set(g.init_jitter)
    agents: list[AgentState] = []
    agents_by_type: dict[str, list[AgentState]] = {t: [] for t in spec.agent_types}
    next_id = 0
    for type_name, type_spec in spec.agent_types.items():
        init_fns = {name: compile_expression(d.init) for name, d in type_spec.vars.items()}
        for _ in range(g.populations.get(type_name, 0)):
            vars_so_far: dict[str, Scalar] = {}
            for var_name, decl in type_spec.vars.items():
                if f"{type_name}.{var_name}" in jitter:
                    lo, hi = decl.range  # validated: number var with a range
                    value = lo + float(rng.random()) * (hi - lo)
                else:
                    value = init_fns[var_name](vars_so_far, ctx_model)
                    if isinstance(value, int) and not isinstance(value, bool):
                        value = float(value)
                    if decl.range is not None and isinstance(value, float):
                        lo, hi = decl.range
                        clamped = min(hi, max(lo, value))
                        if clamped != value:
                            value = clamped
                vars_so_far[var_name] = value
            agent = AgentState(next_id, type_name, vars_so_far)
            agents.append(agent)
            agents_by_type[type_name].append(agent)
            next_id += 1

    flows = {
        type_name: _build_flow_runtime(type_name, flow)
        for type_name, flow in scenario.flows.items()
        if type_name in spec.agent_types
    }
    behaviour_runtimes = {}
    for type_name, type_spec in spec.agent_types.items():
        for b_name, b in type_spec.behaviours.items():
            behaviour_runtimes[(type_name, b_name)] = _build_behaviour_runtime(spec, type_name, b)

    metric_runtimes = [
        _MetricRuntime(m, compile_expression(m.filter) if m.filter is not None else None)
        for m in scenario.metrics
    ]

    return ModelState(
        composite=spec,
        scenario=scenario,
        seed=effective_seed,
        iterations=g.iterations,
        collect_interval=g.data_collection_interval,
        rng=rng,
        agents=agents,
        agents_by_type=agents_by_type,
        model_vars=model_vars,
        flows=flows,
        policies=list(scenario.policies),
        metric_runtimes=metric_runtimes,
        behaviour_runtimes=behaviour_runtimes,
        trace=[] if trace else None,
    )


def _build_flow_runtime(agent_type: str, flow: BehaviourFlow) -> _FlowRuntime:
    triggers = {}
    behaviours = {}
    for node in flow.nodes:
        if node.is_start:
            continue
        behaviours[node.id] = node.behaviour
        triggers[node.id] = _CompiledTrigger(
            [
                (tuple(compile_expression(c) for c in rule.when), compile_expression(rule.value))
                for rule in node.trigger.rules
            ],
            compile_expression(node.trigger.default),
        )
    start = flow.start_id
    if start is None:
        raise FacetSimError(f"flow for {agent_type!r} has no unique start node")
    return _FlowRuntime(agent_type, start, flow.children(), behaviours, triggers)


def _build_behaviour_runtime(spec, type_name, behaviour) -> _BehaviourRuntime:
    type_spec = spec.agent_types[type_name]
    steps = []
    for action in behaviour.actions:
        if isinstance(action, SimpleAction):
            steps.append(
                _ActionRuntime(action.op, type_spec.vars[action.variable], compile_expression(action.value))
            )
        else:
            target_spec = spec.agent_types[action.target_type]
            steps.append(
                _MatchRuntime(
                    action.target_type,
                    compile_expression(action.target_filter),
                    [
                        _ActionRuntime(a.op, type_spec.vars[a.variable], compile_expression(a.value))
                        for a in action.self_actions
                    ],
                    [
                        _ActionRuntime(a.op, target_spec.vars[a.variable], compile_expression(a.value))
                        for a in action.target_actions
                    ],
                )
            )
    return _BehaviourRuntime(behaviour.name, steps)


# ---------------------------------------------------------------------------
# Tick loop
# ---------------------------------------------------------------------------

def step(state: ModelState) -> TickReport:
    """Advance one tick; see the module docstring for phase order."""
    if state.tick >= state.iterations:
        raise EngineRuntimeError("run already finished", tick=state.tick)
    model_ctx = state.model_ctx()

    applications = []
    for idx, policy in enumerate(state.policies):
        applied = state.applied.setdefault(idx, set())
        targets = []
        for a in state.agents_by_type.get(policy.target_agent_type, []):
            if policy.mode == "once" and a.id in applied:
                continue
            try:
                verdict = evaluate(policy.condition, EvalContext(a.vars, model_ctx))
                if not isinstance(verdict, bool):
                    raise EvaluationError("policy condition must be boolean", "TYPE_MISMATCH")
            except EvaluationError as exc:
                raise EngineRuntimeError(
                    f"policy condition failed: {exc}",
                    tick=state.tick,
                    agent_id=a.id,
                    policy=policy.name,
                ) from exc
            if verdict:
                targets.append(a)
        count = 0
        for agent in targets:  # agents_by_type lists are ascending by id
            decl = state.composite.agent_types[policy.target_agent_type].vars.get(
                policy.action.variable
            )
            try:
                apply_policy(
                    policy,
                    agent,
                    model_ctx,
                    var_decl=decl,
                    on_range_clamp=lambda raw, a=agent: state.warn_once(
                        ("policy-clamp", policy.name, a.agent_type),
                        f"policy {policy.name!r}: {a.agent_type}.{policy.action.variable} "
                        f"clamped to its declared range",
                    ),
                )
            except EvaluationError as exc:
                raise EngineRuntimeError(
                    f"policy action failed: {exc}",
                    tick=state.tick,
                    agent_id=agent.id,
                    policy=policy.name,
                ) from exc
            if policy.mode == "once":
                applied.add(agent.id)
            count += 1
        applications.append(count)

    if state.agents:
        order = state.rng.permutation(len(state.agents))
    else:
        order = []

    executed_total = 0
    for raw_id in order:
        agent = state.agents[int(raw_id)]
        flow = state.flows[agent.agent_type]
        executed = traverse(flow, agent, state, model_ctx)
        executed_total += len(executed)

    metrics_row = None
    due = state.tick % state.collect_interval == 0 or state.tick == state.iterations - 1
    if due and state.metric_runtimes:
        metrics_row = _collect_compiled(state, model_ctx)
        state.metric_rows.append((state.tick, metrics_row))
    elif due:
        state.metric_rows.append((state.tick, []))

    report = TickReport(state.tick, applications, executed_total, metrics_row)
    state.tick += 1
    return report


def traverse(
    flow: _FlowRuntime,
    agent: AgentState,
    state: ModelState,
    model_ctx: Mapping[str, Scalar] | None = None,
) -> list[str]:
    """Walk the flow for one agent, executing gated/selected behaviours.

    Single child: its trigger gates execution and the cursor advances either
    way. Multiple children: one weighted draw picks a child (weights are the
    triggers, cumulative sum in document edge order) and its behaviour runs
    unconditionally; zero total weight ends the walk.
    """
    if model_ctx is None:
        model_ctx = state.model_ctx()
    executed: list[str] = []
    rng = state.rng
    children = flow.children
    cursor = flow.start
    while True:
        kids = children[cursor]
        if not kids:
            return executed
        if len(kids) == 1:
            child = kids[0]
            p = _trigger_value(flow, child, agent, state, model_ctx)
            if rng.random() < p:
                _run_behaviour(flow, child, agent, state, model_ctx, executed)
            cursor = child
        else:
            weights = [
                _trigger_value(flow, kid, agent, state, model_ctx) for kid in kids
            ]
            total = sum(weights)
            if total == 0.0:
                return executed
            r = rng.random() * total
            acc = 0.0
            selected = None
            for kid, w in zip(kids, weights):
                acc += w
                if r < acc:
                    selected = kid
                    break
            if selected is None:  # float round-off: fall back to last viable child
                selected = next(k for k, w in zip(reversed(kids), reversed(weights)) if w > 0)
            _run_behaviour(flow, selected, agent, state, model_ctx, executed)
            cursor = selected


def _trigger_value(flow, node_id, agent, state, model_ctx) -> float:
    trigger = flow.triggers[node_id]
    try:
        return trigger.evaluate(
            agent.vars,
            model_ctx,
            lambda raw: state.warn_once(
                ("trigger-clamp", flow.agent_type, node_id),
                f"trigger on flow {flow.agent_type!r} node {node_id!r} produced "
                f"{raw!r}; clamped to [0, 1]",
            ),
        )
    except EvaluationError as exc:
        raise EngineRuntimeError(
            f"trigger failed: {exc}",
            tick=state.tick,
            agent_id=agent.id,
            node_id=node_id,
        ) from exc


def _run_behaviour(flow, node_id, agent, state, model_ctx, executed: list[str]) -> None:
    name = flow.behaviours[node_id]
    runtime = state.behaviour_runtimes[(agent.agent_type, name)]
    try:
        execute_behaviour(runtime, agent, state, model_ctx)
    except EvaluationError as exc:
        raise EngineRuntimeError(
            f"behaviour {name!r} failed: {exc}",
            tick=state.tick,
            agent_id=agent.id,
            node_id=node_id,
        ) from exc
    executed.append(name)
    if state.trace is not None:
        state.trace.append((state.tick, agent.id, name))


def execute_behaviour(
    runtime: _BehaviourRuntime,
    agent: AgentState,
    state: ModelState,
    model_ctx: Mapping[str, Scalar] | None = None,
) -> None:
    """Apply the behaviour's actions in order against progressively updated state."""
    if model_ctx is None:
        model_ctx = state.model_ctx()
    for step_ in runtime.steps:
        if isinstance(step_, _ActionRuntime):
            _apply_action(step_, agent, state, model_ctx, runtime.name)
        else:
            eligible = [
                t
                for t in state.agents_by_type.get(step_.target_type, [])
                if step_.target_filter(t.vars, model_ctx) is True
            ]
            if not eligible:
                continue
            pick = int(state.rng.integers(0, len(eligible)))
            target = eligible[pick]
            for sub in step_.self_actions:
                _apply_action(sub, agent, state, model_ctx, runtime.name)
            for sub in step_.target_actions:
                _apply_action(sub, target, state, model_ctx, runtime.name)


def _apply_action(
    action: _ActionRuntime,
    agent: AgentState,
    state: ModelState,
    model_ctx: Mapping[str, Scalar],
    writer: str,
) -> None:
    decl = action.decl
    value = action.value(agent.vars, model_ctx)
    old = agent.vars[decl.name]
    if action.op == "set":
        if kind_of(value) != decl.kind:
            raise EvaluationError(
                f"set {decl.name!r}: value is {kind_of(value)}, variable is {decl.kind}",
                "TYPE_MISMATCH",
            )
        new = value
    else:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise EvaluationError(
                f"{action.op} {decl.name!r} needs a number value", "TYPE_MISMATCH"
            )
        assert isinstance(old, float)
        new = old + value if action.op == "add" else old * value
    if decl.range is not None and isinstance(new, float):
        lo, hi = decl.range
        clamped = min(hi, max(lo, new))
        if clamped != new:
            state.warn_once(
                ("range-clamp", agent.agent_type, decl.name, writer),
                f"{agent.agent_type}.{decl.name} clamped to [{_csv_cell(lo)}, "
                f"{_csv_cell(hi)}] (behaviour {writer!r})",
            )
            new = clamped
    agent.vars[decl.name] = new


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _reduce(reducer: str, values: list[float]):
    if reducer == "sum":
        return float(sum(values))
    if not values:
        return None
    if reducer == "mean":
        return float(sum(values)) / len(values)
    if reducer == "min":
        return min(values)
    if reducer == "max":
        return max(values)
    raise ValueError(reducer)


def _collect_compiled(state: ModelState, model_ctx) -> list:
    row = []
    for rt in state.metric_runtimes:
        spec = rt.spec
        if spec.agent_type is None:
            row.append(float(model_ctx[spec.variable]))
            continue
        population = state.agents_by_type.get(spec.agent_type, [])
        if rt.filter is not None:
            population = [a for a in population if rt.filter(a.vars, model_ctx) is True]
        if spec.reducer == "count":
            row.append(len(population))
        else:
            values = [float(a.vars[spec.variable]) for a in population]
            row.append(_reduce(spec.reducer, values))
    return row


def collect_metrics(
    specs: Iterable[MetricSpec],
    population: Iterable[AgentState],
    model_vars: Mapping[str, Scalar],
    tick: int,
) -> list:
    """One value per spec, filter applied before reduction (public form)."""
    ctx = dict(model_vars)
    ctx.setdefault("tick", float(tick))
    agents = list(population)
    row = []
    for spec in specs:
        if spec.agent_type is None:
            row.append(float(ctx[spec.variable]))
            continue
        selected = [a for a in agents if a.agent_type == spec.agent_type]
        if spec.filter is not None:
            selected = [
                a
                for a in selected
                if evaluate(spec.filter, EvalContext(a.vars, ctx)) is True
            ]
        if spec.reducer == "count":
            row.append(len(selected))
        else:
            row.append(_reduce(spec.reducer, [float(a.vars[spec.variable]) for a in selected]))
    return row


# ---------------------------------------------------------------------------
# Whole runs
# ---------------------------------------------------------------------------

def run_scenario(
    scenario: "Scenario",
    seed: int | None = None,
    on_tick: Callable[[int, int], None] | None = None,
    trace: bool = False,
) -> RunResult:
    """Run to completion and package the metric table and warnings."""
    state = initialize_run(scenario.composite, scenario, seed=seed, trace=trace)
    result = finish_run(state, on_tick=on_tick)
    result.trace = state.trace
    return result


def finish_run(
    state: ModelState, on_tick: Callable[[int, int], None] | None = None
) -> RunResult:
    while state.tick < state.iterations:
        step(state)
        if on_tick is not None:
            on_tick(state.tick, state.iterations)
    table = MetricTable(
        [m.spec.name for m in state.metric_runtimes],
        state.metric_rows,
    )
    return RunResult(
        scenario=state.scenario,
        seed=state.seed,
        metrics=table,
        warnings=list(state.warnings),
    )
