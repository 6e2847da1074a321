"""Builders for programmatic specs, flows and scenarios used across tests."""

from __future__ import annotations

from facetsim.engine import MetricSpec
from facetsim.expr import parse_expression
from facetsim.facets import (
    AgentTypeDelta,
    BehaviourDef,
    CompositeModelSpec,
    FacetManifest,
    MatchAction,
    SimpleAction,
    VarDecl,
    compose,
)
from facetsim.flows import BehaviourFlow, FlowNode, TriggerRule, TriggerSpec
from facetsim.scenarios import Scenario, ScenarioGlobals


def var(name, kind, init, bounds=None):
    source = init if isinstance(init, str) else (
        "true" if init is True else "false" if init is False else repr(float(init))
    )
    return VarDecl(name, kind, parse_expression(source), bounds)


def action(op, variable, value):
    return SimpleAction(op, variable, parse_expression(value) if isinstance(value, str) else value)


def match(target_type, target_filter, self_actions=(), target_actions=()):
    return MatchAction(
        target_type,
        parse_expression(target_filter),
        tuple(self_actions),
        tuple(target_actions),
    )


def behaviour(name, *actions):
    return BehaviourDef(name, tuple(actions))


def one_type_spec(type_name, vars_, behaviours, model_vars=()):
    facet = FacetManifest(
        f"{type_name}Facet",
        (),
        (AgentTypeDelta(type_name, True, tuple(vars_), tuple(behaviours)),),
        tuple(model_vars),
    )
    return compose(CompositeModelSpec.empty(), [facet])


def trigger(rules=(), default="1"):
    return TriggerSpec(
        tuple(
            TriggerRule(
                tuple(parse_expression(c) for c in when),
                parse_expression(value),
            )
            for when, value in rules
        ),
        parse_expression(default),
    )


def chain_flow(behaviours, triggers=None, agent_type=None):
    """start -> b1 -> b2 -> ... with per-node triggers (default constant 1)."""
    triggers = triggers or {}
    nodes = [FlowNode("n0", "start", TriggerSpec.constant_one())]
    edges = []
    for i, name in enumerate(behaviours, start=1):
        nodes.append(FlowNode(f"n{i}", name, triggers.get(name, TriggerSpec.constant_one())))
        edges.append((f"n{i-1}", f"n{i}"))
    return BehaviourFlow(nodes=nodes, edges=edges, agent_type=agent_type)


def branch_flow(behaviours, triggers=None, agent_type=None):
    """start with one child per behaviour (tournament branch)."""
    triggers = triggers or {}
    nodes = [FlowNode("n0", "start", TriggerSpec.constant_one())]
    edges = []
    for i, name in enumerate(behaviours, start=1):
        nodes.append(FlowNode(f"n{i}", name, triggers.get(name, TriggerSpec.constant_one())))
        edges.append(("n0", f"n{i}"))
    return BehaviourFlow(nodes=nodes, edges=edges, agent_type=agent_type)


def scenario_for(
    composite,
    flows,
    iterations=10,
    seed=42,
    populations=None,
    policies=(),
    metrics=(),
    interval=1,
    overrides=None,
    init_jitter=(),
    name="test-scenario",
):
    populations = populations if populations is not None else {
        t: 1 for t in composite.agent_types
    }
    return Scenario.assemble(
        name,
        composite,
        flows,
        ScenarioGlobals(
            iterations=iterations,
            data_collection_interval=interval,
            seed=seed,
            populations=populations,
            model_var_overrides=dict(overrides or {}),
            init_jitter=list(init_jitter),
        ),
        policies=list(policies),
        metrics=list(metrics),
    )


def metric(name, reducer, agent_type=None, variable=None, filter=None):
    return MetricSpec(
        name=name,
        reducer=reducer,
        agent_type=agent_type,
        variable=variable,
        filter=parse_expression(filter) if isinstance(filter, str) else filter,
    )
