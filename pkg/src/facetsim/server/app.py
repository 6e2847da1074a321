"""HTTP service exposing workspace artifacts and run execution.

Every write goes through the same validators as the CLI, so an artifact the
CLI rejects gets a 400 here with identical diagnostic codes. Flow documents
travel as ``application/xml``; everything else is JSON. Optimistic
concurrency on artifact writes: pass ``If-Match: <sha256 of the content you
read>`` and a stale write comes back 409.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import threading
from pathlib import Path

import uvicorn
from fastapi import FastAPI, Query, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .. import __version__
from ..archive import compare_runs, open_archive
from ..errors import (
    ArchiveError,
    FacetSimError,
    FlowLoadError,
    ValidationFailure,
    ValidationReport,
)
from ..facets import CompositeModelSpec, compose, resolve_dependencies
from ..flows import validate_flow
from ..graphml import load_flow
from ..policies import policy_from_obj, validate_policy
from ..scenarios import load_scenario, scan_facets
from .jobs import JobRegistry
from .schemas import (
    CompareModel,
    MetricsModel,
    ReportModel,
    RunRequest,
    RunStatusModel,
    WriteResult,
)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _report_response(report: ValidationReport, status: int = 400) -> JSONResponse:
    return JSONResponse(status_code=status, content=report.to_dict())


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    report = ValidationReport()
    report.error(code, None, message)
    return JSONResponse(status_code=status, content=report.to_dict())


def create_app(workspace: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    ws = Path(workspace)
    registry = JobRegistry(ws)
    write_lock = threading.Lock()

    app = FastAPI(title="facetsim", version=__version__)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["ETag"],
    )

    def compose_all() -> CompositeModelSpec | None:
        manifests, _, report = scan_facets(ws)
        if not report.ok:
            return None
        try:
            ordered = resolve_dependencies(sorted(manifests), manifests)
            return compose(CompositeModelSpec.empty(), ordered)
        except FacetSimError:
            return None

    def check_precondition(request: Request, path: Path) -> JSONResponse | None:
        expected = request.headers.get("if-match")
        if expected is None:
            return None
        current = _sha256(path.read_bytes()) if path.is_file() else ""
        if current != expected.strip('"'):
            return _error_response(
                409, "WRITE_CONFLICT", "content changed since it was read"
            )
        return None

    # -- facets -------------------------------------------------------------

    @app.get("/facets")
    def list_facets():
        manifests, sources, report = scan_facets(ws)
        if not report.ok:
            return _report_response(report)
        return [json.loads(sources[name]) for name in sorted(manifests)]

    # -- flows --------------------------------------------------------------

    def flow_path(name: str) -> Path:
        return ws / "flows" / f"{name}.graphml"

    @app.get("/flows/{agent_type}")
    def get_flow(agent_type: str):
        path = flow_path(agent_type)
        if not path.is_file():
            return _error_response(404, "NOT_FOUND", f"no flow {agent_type!r}")
        data = path.read_bytes()
        return Response(
            content=data,
            media_type="application/xml",
            headers={"ETag": _sha256(data)},
        )

    @app.put("/flows/{agent_type}")
    async def put_flow(agent_type: str, request: Request):
        body = (await request.body()).decode("utf-8")
        report = ValidationReport()
        try:
            flow = load_flow(body)
        except FlowLoadError as exc:
            report.error(exc.code, exc.node_id, str(exc))
            return _report_response(report)
        composite = compose_all()
        schema = None
        if composite is not None and agent_type in composite.agent_types:
            schema = composite.schema_for(agent_type)
        report = validate_flow(flow, schema)
        if not report.ok:
            return _report_response(report)
        path = flow_path(agent_type)
        with write_lock:
            conflict = check_precondition(request, path)
            if conflict is not None:
                return conflict
            created = not path.exists()
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(body, encoding="utf-8")
        result = WriteResult(warnings=[d.to_dict() for d in report.warnings])
        return JSONResponse(status_code=201 if created else 200, content=result.model_dump())

    # -- policies -----------------------------------------------------------

    def policy_path(name: str) -> Path:
        return ws / "policies" / f"{name}.json"

    def validate_policy_doc(obj) -> tuple[ValidationReport, object]:
        report = ValidationReport()
        policy = policy_from_obj(obj, report)
        if policy is not None and report.ok:
            composite = compose_all()
            if composite is not None and policy.target_agent_type in composite.agent_types:
                report.merge(validate_policy(policy, composite))
        return report, policy

    @app.get("/policies")
    def list_policies():
        out = []
        policies_dir = ws / "policies"
        if policies_dir.is_dir():
            for path in sorted(policies_dir.glob("*.json")):
                out.append(json.loads(path.read_text(encoding="utf-8")))
        return out

    @app.post("/policies", status_code=201)
    def create_policy(doc: dict):
        report, policy = validate_policy_doc(doc)
        if not report.ok:
            return _report_response(report)
        path = policy_path(policy.name)
        with write_lock:
            if path.exists():
                return _error_response(
                    409, "EXISTS", f"policy {policy.name!r} already exists (PUT to update)"
                )
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        return doc

    @app.put("/policies/{name}")
    def update_policy(name: str, doc: dict, request: Request):
        if doc.get("name") != name:
            return _error_response(400, "NAME_MISMATCH", "body name must match the URL")
        report, _ = validate_policy_doc(doc)
        if not report.ok:
            return _report_response(report)
        path = policy_path(name)
        with write_lock:
            conflict = check_precondition(request, path)
            if conflict is not None:
                return conflict
            created = not path.exists()
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        return JSONResponse(status_code=201 if created else 200, content=doc)

    @app.delete("/policies/{name}", status_code=204)
    def delete_policy(name: str):
        path = policy_path(name)
        if not path.is_file():
            return _error_response(404, "NOT_FOUND", f"no policy {name!r}")
        with write_lock:
            path.unlink()
        return Response(status_code=204)

    # -- scenarios ------------------------------------------------------------

    @app.get("/scenarios")
    def list_scenarios():
        out = []
        scenarios_dir = ws / "scenarios"
        if scenarios_dir.is_dir():
            for path in sorted(scenarios_dir.glob("*.json")):
                out.append(json.loads(path.read_text(encoding="utf-8")))
        return out

    @app.post("/scenarios", status_code=201)
    def create_scenario(doc: dict):
        name = doc.get("name")
        if not isinstance(name, str) or not name:
            return _error_response(400, "SCHEMA", "scenario needs a 'name'")
        try:
            load_scenario(json.dumps(doc), ws)
        except ValidationFailure as exc:
            return _report_response(exc.report)
        path = ws / "scenarios" / f"{name}.json"
        with write_lock:
            if path.exists():
                return _error_response(409, "EXISTS", f"scenario {name!r} already exists")
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        return doc

    # -- runs -----------------------------------------------------------------

    @app.post("/runs", status_code=202, response_model=RunStatusModel)
    def start_run(req: RunRequest):
        path = ws / "scenarios" / f"{req.scenario}.json"
        if not path.is_file():
            return _error_response(404, "NOT_FOUND", f"no scenario {req.scenario!r}")
        try:
            scenario = load_scenario(path, ws)
        except ValidationFailure as exc:
            return _report_response(exc.report)
        job = registry.start(scenario, req.seed)
        return RunStatusModel(**job.snapshot())

    @app.get("/runs/{job_id}", response_model=RunStatusModel)
    def get_run_status(job_id: str):
        job = registry.get(job_id)
        if job is None:
            return _error_response(404, "NOT_FOUND", f"no run {job_id!r}")
        return RunStatusModel(**job.snapshot())

    @app.get("/runs/{job_id}/metrics", response_model=MetricsModel)
    def get_run_metrics(job_id: str):
        job = registry.get(job_id)
        if job is None:
            return _error_response(404, "NOT_FOUND", f"no run {job_id!r}")
        snap = job.snapshot()
        if snap["state"] != "done":
            return _error_response(
                409, "NOT_DONE", f"run {job_id!r} is {snap['state']}"
            )
        archive = open_archive(Path(snap["archive"]))
        names, series = archive.metric_series()
        ticks = sorted(series)
        return MetricsModel(
            id=job_id,
            ticks=ticks,
            metrics={name: [series[t][name] for t in ticks] for name in names},
        )

    @app.get("/compare", response_model=CompareModel)
    def compare(runs: str = Query(..., description="comma-separated run ids")):
        ids = [r for r in runs.split(",") if r]
        if len(ids) < 2:
            return _error_response(400, "BAD_REQUEST", "compare needs at least two run ids")
        archives = []
        for run_id in ids:
            job = registry.get(run_id)
            if job is not None:
                snap = job.snapshot()
                if snap["state"] != "done":
                    return _error_response(409, "NOT_DONE", f"run {run_id!r} is {snap['state']}")
                archives.append(open_archive(Path(snap["archive"])))
                continue
            candidate = ws / "runs" / run_id
            if not candidate.is_dir():
                return _error_response(404, "NOT_FOUND", f"no run {run_id!r}")
            archives.append(open_archive(candidate))
        try:
            comparison = compare_runs(archives)
        except ArchiveError as exc:
            return _error_response(400, "BAD_REQUEST", str(exc))
        except FacetSimError as exc:
            return _error_response(400, "NO_SHARED_METRICS", str(exc))
        return CompareModel(**comparison.to_dict())

    @app.get("/health")
    def health():
        return {"ok": True, "version": __version__, "workspace": str(ws)}

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="facetsim-server")
    parser.add_argument("--workspace", required=True, help="workspace directory")
    parser.add_argument("--bind", default="127.0.0.1:8440", help="host:port")
    parser.add_argument("--ui", help="serve a built web UI from this directory")
    args = parser.parse_args(argv)
    host, _, port = args.bind.rpartition(":")
    app = create_app(args.workspace, ui_dir=args.ui)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


if __name__ == "__main__":
    main()
