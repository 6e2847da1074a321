"""Command-line entry point: validate | run | new-flow | compare.

Exit codes: 0 success, 1 validation error (bad artifacts, bad arguments,
failed integrity checks), 2 runtime error (a run aborted mid-flight, I/O
trouble). ``--json`` switches diagnostics and results to machine-readable
JSON on stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .archive import compare_runs, open_archive, persist_run
from .engine import run_scenario
from .errors import (
    ArchiveError,
    FacetSimError,
    FlowLoadError,
    ValidationFailure,
    ValidationReport,
)
from .facets import CompositeModelSpec, compose, resolve_dependencies
from .graphml import emit_skeleton_flow, load_flow
from .flows import validate_flow
from .policies import policy_from_obj
from .scenarios import load_scenario, scan_facets


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ValidationFailure as exc:
        _emit_report(exc.report, args.json)
        return 1
    except ArchiveError as exc:
        _emit_error(str(exc), args.json)
        return 1
    except FacetSimError as exc:
        _emit_error(str(exc), args.json)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facetsim",
        description="Facet-composable agent-based simulation engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="validate every artifact in a workspace")
    p_validate.add_argument("--workspace", default=".", help="workspace directory")
    p_validate.add_argument("--json", action="store_true", help="JSON diagnostics")
    p_validate.set_defaults(handler=_cmd_validate)

    p_run = sub.add_parser("run", help="run a scenario and persist the archive")
    p_run.add_argument("--scenario", required=True, help="scenario JSON file")
    p_run.add_argument("--workspace", help="workspace directory (default: inferred)")
    p_run.add_argument("--out", help="directory for the run archive (default: <workspace>/runs)")
    p_run.add_argument("--seed", type=int, help="override the scenario seed (recorded in the archive)")
    p_run.add_argument("--json", action="store_true", help="JSON result")
    p_run.set_defaults(handler=_cmd_run)

    p_new = sub.add_parser("new-flow", help="emit a skeleton flow for an agent type")
    p_new.add_argument("--type", required=True, dest="agent_type", help="agent type name")
    p_new.add_argument("--workspace", default=".", help="workspace directory")
    p_new.add_argument("--facets", help="comma-separated facet selection (default: all)")
    p_new.add_argument("--out", help="output file (default: <workspace>/flows/<type>.graphml)")
    p_new.add_argument("--force", action="store_true", help="overwrite an existing file")
    p_new.add_argument("--json", action="store_true", help="JSON result")
    p_new.set_defaults(handler=_cmd_new_flow)

    p_cmp = sub.add_parser("compare", help="align archived runs on shared metrics")
    p_cmp.add_argument("archives", nargs="+", help="run archive directories")
    p_cmp.add_argument("--json", action="store_true", help="JSON table")
    p_cmp.set_defaults(handler=_cmd_compare)
    return parser


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def _cmd_validate(args) -> int:
    workspace = Path(args.workspace)
    if not workspace.is_dir():
        _emit_error(f"workspace {workspace} is not a directory", args.json)
        return 1
    report = ValidationReport()

    manifests, _, facet_report = scan_facets(workspace)
    report.merge(facet_report)

    flows_dir = workspace / "flows"
    if flows_dir.is_dir():
        for path in sorted(flows_dir.glob("*.graphml")):
            rel = f"flows/{path.name}"
            try:
                flow = load_flow(path.read_text(encoding="utf-8"))
            except FlowLoadError as exc:
                report.error(exc.code, f"{rel}/{exc.node_id}" if exc.node_id else rel, str(exc))
                continue
            sub = validate_flow(flow, None)
            _merge_prefixed(report, sub, rel)

    policies_dir = workspace / "policies"
    if policies_dir.is_dir():
        for path in sorted(policies_dir.glob("*.json")):
            rel = f"policies/{path.name}"
            try:
                obj = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                report.error("BAD_JSON", rel, str(exc))
                continue
            sub = ValidationReport()
            policy_from_obj(obj, sub)
            _merge_prefixed(report, sub, rel)

    scenarios_dir = workspace / "scenarios"
    scenario_count = 0
    if scenarios_dir.is_dir():
        for path in sorted(scenarios_dir.glob("*.json")):
            rel = f"scenarios/{path.name}"
            scenario_count += 1
            try:
                load_scenario(path, workspace)
            except ValidationFailure as exc:
                _merge_prefixed(report, exc.report, rel)

    _emit_report(
        report,
        args.json,
        extra={
            "facets": len(manifests),
            "scenarios": scenario_count,
        },
    )
    return 0 if report.ok else 1


def _merge_prefixed(report: ValidationReport, sub: ValidationReport, prefix: str) -> None:
    for d in sub.errors:
        report.error(d.code, f"{prefix}:{d.where}" if d.where else prefix, d.message)
    for d in sub.warnings:
        report.warn(d.code, f"{prefix}:{d.where}" if d.where else prefix, d.message)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _infer_workspace(scenario_path: Path) -> Path:
    parent = scenario_path.resolve().parent
    if parent.name == "scenarios":
        return parent.parent
    return parent


def _cmd_run(args) -> int:
    scenario_path = Path(args.scenario)
    workspace = Path(args.workspace) if args.workspace else _infer_workspace(scenario_path)
    scenario = load_scenario(scenario_path, workspace)
    result = run_scenario(scenario, seed=args.seed)
    archive = persist_run(result, workspace, out_dir=args.out)
    if args.json:
        print(
            json.dumps(
                {
                    "ok": True,
                    "archive": str(archive.path),
                    "run_id": archive.run_id,
                    "seed": result.seed,
                    "warnings": result.warnings,
                }
            )
        )
    else:
        for w in result.warnings:
            print(f"warning: {w}", file=sys.stderr)
        print(archive.path)
    return 0


# ---------------------------------------------------------------------------
# new-flow
# ---------------------------------------------------------------------------

def _cmd_new_flow(args) -> int:
    workspace = Path(args.workspace)
    manifests, _, facet_report = scan_facets(workspace)
    facet_report.raise_if_failed("workspace facets rejected")
    selected = (
        [s.strip() for s in args.facets.split(",") if s.strip()]
        if args.facets
        else sorted(manifests)
    )
    ordered = resolve_dependencies(selected, manifests)
    composite = compose(CompositeModelSpec.empty(), ordered)
    if args.agent_type not in composite.agent_types:
        report = ValidationReport()
        report.error(
            "UNKNOWN_AGENT_TYPE",
            args.agent_type,
            f"no composed agent type {args.agent_type!r} "
            f"(have: {', '.join(sorted(composite.agent_types)) or 'none'})",
        )
        raise ValidationFailure("cannot emit skeleton", report)

    out = Path(args.out) if args.out else workspace / "flows" / f"{args.agent_type}.graphml"
    if out.exists() and not args.force:
        _emit_error(f"{out} exists (use --force to overwrite)", args.json)
        return 1
    out.parent.mkdir(parents=True, exist_ok=True)
    document = emit_skeleton_flow(composite.schema_for(args.agent_type))
    out.write_text(document, encoding="utf-8")
    if args.json:
        print(json.dumps({"ok": True, "flow": str(out)}))
    else:
        print(out)
    return 0


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def _cmd_compare(args) -> int:
    if len(args.archives) < 2:
        _emit_error("compare needs at least two archives", args.json)
        return 1
    archives = [open_archive(path) for path in args.archives]
    comparison = compare_runs(archives)
    if args.json:
        print(json.dumps(comparison.to_dict()))
    else:
        sys.stdout.write(comparison.to_csv())
    return 0


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _emit_report(report: ValidationReport, json_mode: bool, extra: dict | None = None) -> None:
    if json_mode:
        payload = report.to_dict()
        if extra:
            payload.update(extra)
        print(json.dumps(payload))
        return
    for d in report.errors:
        print(f"error: {d.format()}", file=sys.stderr)
    for d in report.warnings:
        print(f"warning: {d.format()}", file=sys.stderr)
    if report.ok:
        print(f"ok ({len(report.warnings)} warning(s))")
    else:
        print(f"{len(report.errors)} error(s), {len(report.warnings)} warning(s)", file=sys.stderr)


def _emit_error(message: str, json_mode: bool) -> None:
    if json_mode:
        print(json.dumps({"ok": False, "errors": [{"code": "ERROR", "where": None, "message": message}]}))
    else:
        print(f"error: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
