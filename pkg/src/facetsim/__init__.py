"""facetsim: a facet-composable agent-based simulation engine.

Model structure (facets), agent decision logic (behaviour flows with
probabilistic triggers), and interventions (policies) are all declarative
artifacts; three roles edit them independently and the engine replays any
combination deterministically from a seed.
"""

from .archive import RunArchive, compare_runs, open_archive, persist_run, rerun_archive
from .engine import (
    AgentState,
    MetricSpec,
    ModelState,
    RunResult,
    collect_metrics,
    execute_behaviour,
    initialize_run,
    run_scenario,
    step,
    traverse,
    validate_runnable,
)
from .errors import (
    ArchiveIntegrityError,
    CompositionError,
    DependencyError,
    EngineRuntimeError,
    EvaluationError,
    ExpressionSyntaxError,
    FacetSimError,
    ValidationFailure,
    ValidationReport,
)
from .expr import (
    EvalContext,
    Expression,
    evaluate,
    free_variables,
    parse_expression,
    unparse,
)
from .facets import (
    CompositeModelSpec,
    FacetManifest,
    compose,
    parse_manifest,
    resolve_dependencies,
)
from .flows import (
    AgentSchema,
    BehaviourFlow,
    TriggerSpec,
    evaluate_trigger,
    validate_flow,
)
from .graphml import emit_skeleton_flow, load_flow, save_flow
from .policies import Policy, applicable_agents, apply_policy, parse_policy, validate_policy
from .scenarios import Scenario, ScenarioGlobals, load_scenario, save_scenario, scan_facets

__version__ = "0.1.0"
