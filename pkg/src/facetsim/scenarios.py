"""Scenario documents and workspace loading.

A workspace is a directory with the conventional layout::

    facets/<FacetName>.json      one manifest per file, filename = facet name
    flows/*.graphml              behaviour flows, referenced by scenarios
    policies/*.json              policy documents, referenced or inlined
    scenarios/*.json             scenario documents
    runs/                        archives written by the engine

A scenario selects facets, binds a flow to every composed agent type, lists
policies and metrics, and fixes the globals (iterations, collection
interval, seed, populations). Loading aggregates every validation problem
into one report instead of failing fast.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .engine import MetricSpec, validate_runnable
from .errors import (
    ExpressionError,
    FlowLoadError,
    ValidationFailure,
    ValidationReport,
)
from .expr import parse_expression
from .facets import CompositeModelSpec, FacetManifest, compose, parse_manifest, resolve_dependencies
from .flows import BehaviourFlow
from .graphml import load_flow
from .policies import Policy, policy_from_obj, policy_to_obj


@dataclass
class ScenarioGlobals:
    iterations: int
    data_collection_interval: int = 1
    seed: int = 0
    populations: dict[str, int] = field(default_factory=dict)
    model_var_overrides: dict = field(default_factory=dict)
    ui_params: dict = field(default_factory=dict)
    init_jitter: list[str] = field(default_factory=list)


@dataclass
class Scenario:
    """A fully resolved, validated, runnable bundle."""

    name: str
    facet_order: list[str]
    composite: CompositeModelSpec
    flow_bindings: dict[str, str]  # agent type -> path relative to workspace
    flows: dict[str, BehaviourFlow]
    policies: list[Policy]
    globals: ScenarioGlobals
    metrics: list[MetricSpec]
    facet_sources: dict[str, str] = field(default_factory=dict)
    flow_sources: dict[str, str] = field(default_factory=dict)
    load_warnings: list[str] = field(default_factory=list)

    @classmethod
    def assemble(
        cls,
        name: str,
        composite: CompositeModelSpec,
        flows: dict[str, BehaviourFlow],
        globals_: ScenarioGlobals,
        policies: list[Policy] | None = None,
        metrics: list[MetricSpec] | None = None,
    ) -> "Scenario":
        """Programmatic construction (tests, embedding); no files involved."""
        from .graphml import save_flow

        return cls(
            name=name,
            facet_order=[],
            composite=composite,
            flow_bindings={t: f"flows/{t}.graphml" for t in flows},
            flows=dict(flows),
            policies=list(policies or []),
            globals=globals_,
            metrics=list(metrics or []),
            flow_sources={t: save_flow(f) for t, f in flows.items()},
        )


def scan_facets(
    workspace: Path,
) -> tuple[dict[str, FacetManifest], dict[str, str], ValidationReport]:
    """Read every manifest under facets/; problems become diagnostics."""
    report = ValidationReport()
    manifests: dict[str, FacetManifest] = {}
    sources: dict[str, str] = {}
    facets_dir = Path(workspace) / "facets"
    if not facets_dir.is_dir():
        return manifests, sources, report
    for path in sorted(facets_dir.glob("*.json")):
        text = path.read_text(encoding="utf-8")
        try:
            manifest = parse_manifest(text)
        except ValidationFailure as exc:
            for d in exc.report.errors:
                report.error(d.code, f"facets/{path.name}" + (f":{d.where}" if d.where else ""), d.message)
            continue
        if manifest.name != path.stem:
            report.error(
                "NAME_MISMATCH",
                f"facets/{path.name}",
                f"file is named {path.stem!r} but declares facet {manifest.name!r}",
            )
            continue
        manifests[manifest.name] = manifest
        sources[manifest.name] = text
    return manifests, sources, report


def _parse_metric(raw: object, where: str, report: ValidationReport) -> MetricSpec | None:
    if not isinstance(raw, dict):
        report.error("SCHEMA", where, "metric must be an object")
        return None
    unknown = set(raw) - {"name", "reducer", "agent_type", "variable", "filter"}
    if unknown:
        report.error("SCHEMA", where, f"unknown metric keys: {sorted(unknown)}")
    name = raw.get("name")
    reducer = raw.get("reducer", "value" if "agent_type" not in raw else None)
    if not isinstance(name, str) or not name:
        report.error("SCHEMA", f"{where}.name", "metric needs a 'name'")
        return None
    if not isinstance(reducer, str):
        report.error("SCHEMA", f"{where}.reducer", "metric needs a 'reducer'")
        return None
    filter_expr = None
    if "filter" in raw:
        if not isinstance(raw["filter"], str):
            report.error("SCHEMA", f"{where}.filter", "filter must be an expression string")
            return None
        try:
            filter_expr = parse_expression(raw["filter"])
        except ExpressionError as exc:
            report.error("EXPRESSION", f"{where}.filter", str(exc))
            return None
    agent_type = raw.get("agent_type")
    variable = raw.get("variable")
    if agent_type is not None and not isinstance(agent_type, str):
        report.error("SCHEMA", f"{where}.agent_type", "agent_type must be a string")
        return None
    if variable is not None and not isinstance(variable, str):
        report.error("SCHEMA", f"{where}.variable", "variable must be a string")
        return None
    return MetricSpec(name=name, reducer=reducer, agent_type=agent_type, variable=variable, filter=filter_expr)


def metric_to_obj(metric: MetricSpec) -> dict:
    out: dict = {"name": metric.name, "reducer": metric.reducer}
    if metric.agent_type is not None:
        out["agent_type"] = metric.agent_type
    if metric.variable is not None:
        out["variable"] = metric.variable
    if metric.filter is not None:
        out["filter"] = metric.filter.source
    return out


def load_scenario(document: str | Path, workspace: str | Path) -> Scenario:
    """Load and fully validate a scenario against its workspace.

    ``document`` is JSON text or a path to it. Every problem found anywhere
    (manifests, dependency resolution, composition, flows, policies,
    metrics, globals) is aggregated into one ValidationFailure.
    """
    workspace = Path(workspace)
    if isinstance(document, Path) or (
        isinstance(document, str) and not document.lstrip().startswith("{")
    ):
        path = Path(document)
        if not path.is_file():
            report = ValidationReport()
            report.error("MISSING_FILE", str(path), "scenario file does not exist")
            raise ValidationFailure("scenario rejected", report)
        text = path.read_text(encoding="utf-8")
        default_name = path.stem
    else:
        text = document
        default_name = "scenario"

    report = ValidationReport()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        report.error("BAD_JSON", None, f"scenario is not valid JSON: {exc}")
        raise ValidationFailure("scenario rejected", report) from None
    if not isinstance(doc, dict):
        report.error("SCHEMA", None, "scenario must be a JSON object")
        raise ValidationFailure("scenario rejected", report)

    unknown = set(doc) - {"name", "facets", "flow_bindings", "policies", "globals", "metrics"}
    if unknown:
        report.error("SCHEMA", None, f"unknown scenario keys: {sorted(unknown)}")

    name = doc.get("name", default_name)
    if not isinstance(name, str) or not name:
        report.error("SCHEMA", "name", "scenario name must be a non-empty string")
        name = default_name

    selected = doc.get("facets", [])
    if not isinstance(selected, list) or not all(isinstance(f, str) for f in selected):
        report.error("SCHEMA", "facets", "'facets' must be a list of facet names")
        selected = []

    manifests, sources, facet_report = scan_facets(workspace)
    # only facet files the scenario actually selects can reject the load
    for sel in selected:
        if sel not in manifests:
            report.errors.extend(
                d
                for d in facet_report.errors
                if d.where and f"facets/{sel}.json" in d.where
            )

    composite = None
    facet_order: list[str] = []
    try:
        ordered = resolve_dependencies(selected, manifests)
        facet_order = [f.name for f in ordered]
        composite = compose(CompositeModelSpec.empty(), ordered)
    except ValidationFailure as exc:
        report.merge(exc.report)

    raw_bindings = doc.get("flow_bindings", {})
    if not isinstance(raw_bindings, dict):
        report.error("SCHEMA", "flow_bindings", "'flow_bindings' must be a map")
        raw_bindings = {}
    flows: dict[str, BehaviourFlow] = {}
    flow_sources: dict[str, str] = {}
    for agent_type, rel in raw_bindings.items():
        where = f"flow_bindings.{agent_type}"
        if not isinstance(rel, str):
            report.error("SCHEMA", where, "flow binding must be a path string")
            continue
        flow_path = workspace / rel
        if not flow_path.is_file():
            report.error("MISSING_FILE", where, f"flow file {rel!r} does not exist")
            continue
        flow_text = flow_path.read_text(encoding="utf-8")
        try:
            flows[agent_type] = load_flow(flow_text)
            flow_sources[agent_type] = flow_text
        except FlowLoadError as exc:
            report.error(exc.code, f"{where}/{exc.node_id}" if exc.node_id else where, str(exc))

    raw_policies = doc.get("policies", [])
    if not isinstance(raw_policies, list):
        report.error("SCHEMA", "policies", "'policies' must be a list")
        raw_policies = []
    policies: list[Policy] = []
    for i, entry in enumerate(raw_policies):
        where = f"policies[{i}]"
        if isinstance(entry, str):
            policy_path = workspace / entry
            if not policy_path.is_file():
                report.error("MISSING_FILE", where, f"policy file {entry!r} does not exist")
                continue
            try:
                obj = json.loads(policy_path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                report.error("BAD_JSON", where, f"policy file {entry!r}: {exc}")
                continue
        else:
            obj = entry
        sub = ValidationReport()
        policy = policy_from_obj(obj, sub)
        for d in sub.errors:
            report.error(d.code, f"{where}.{d.where}" if d.where else where, d.message)
        if policy is not None and sub.ok:
            policies.append(policy)

    raw_globals = doc.get("globals")
    globals_ = None
    if not isinstance(raw_globals, dict):
        report.error("SCHEMA", "globals", "scenario needs a 'globals' object")
    else:
        unknown = set(raw_globals) - {
            "iterations",
            "data_collection_interval",
            "seed",
            "populations",
            "model_var_overrides",
            "ui_params",
            "init_jitter",
        }
        if unknown:
            report.error("SCHEMA", "globals", f"unknown globals keys: {sorted(unknown)}")
        globals_ = ScenarioGlobals(
            iterations=raw_globals.get("iterations", 0),
            data_collection_interval=raw_globals.get("data_collection_interval", 1),
            seed=raw_globals.get("seed", 0),
            populations=raw_globals.get("populations", {}) or {},
            model_var_overrides=raw_globals.get("model_var_overrides", {}) or {},
            ui_params=raw_globals.get("ui_params", {}) or {},
            init_jitter=list(raw_globals.get("init_jitter", []) or []),
        )

    metrics: list[MetricSpec] = []
    raw_metrics = doc.get("metrics", [])
    if not isinstance(raw_metrics, list):
        report.error("SCHEMA", "metrics", "'metrics' must be a list")
        raw_metrics = []
    for i, raw in enumerate(raw_metrics):
        metric = _parse_metric(raw, f"metrics[{i}]", report)
        if metric is not None:
            metrics.append(metric)

    if composite is None or globals_ is None or not report.ok:
        raise ValidationFailure("scenario rejected", report)

    scenario = Scenario(
        name=name,
        facet_order=facet_order,
        composite=composite,
        flow_bindings=dict(raw_bindings),
        flows=flows,
        policies=policies,
        globals=globals_,
        metrics=metrics,
        facet_sources={n: sources[n] for n in facet_order if n in sources},
        flow_sources=flow_sources,
    )
    runnable = validate_runnable(composite, scenario)
    report.merge(runnable)
    if not report.ok:
        raise ValidationFailure("scenario rejected", report)
    scenario.load_warnings = [d.format() for d in report.warnings]
    return scenario


def scenario_to_doc(scenario: Scenario, seed: int | None = None) -> dict:
    """Normalized scenario document: policies inlined, defaults materialized."""
    g = scenario.globals
    doc = {
        "name": scenario.name,
        "facets": list(scenario.facet_order),
        "flow_bindings": dict(scenario.flow_bindings),
        "policies": [policy_to_obj(p) for p in scenario.policies],
        "globals": {
            "iterations": g.iterations,
            "data_collection_interval": g.data_collection_interval,
            "seed": g.seed if seed is None else seed,
            "populations": dict(g.populations),
            "model_var_overrides": dict(g.model_var_overrides),
            "ui_params": dict(g.ui_params),
            "init_jitter": list(g.init_jitter),
        },
        "metrics": [metric_to_obj(m) for m in scenario.metrics],
    }
    return doc


def save_scenario(scenario: Scenario, seed: int | None = None) -> str:
    return json.dumps(scenario_to_doc(scenario, seed), indent=2) + "\n"
