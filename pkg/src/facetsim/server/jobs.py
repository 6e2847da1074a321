"""Background run jobs: one worker thread per job, polled via the status
endpoint. State moves only forward: queued -> running -> done | failed."""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from ..archive import persist_run
from ..engine import run_scenario
from ..scenarios import Scenario


@dataclass
class RunJob:
    id: str
    scenario_name: str
    seed: int | None
    state: str = "queued"
    completed: int = 0
    total: int = 0
    error: str | None = None
    archive_path: str | None = None
    effective_seed: int | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "id": self.id,
                "scenario": self.scenario_name,
                "seed": self.effective_seed if self.effective_seed is not None else self.seed,
                "state": self.state,
                "progress": {"completed": self.completed, "total": self.total},
                "error": self.error,
                "archive": self.archive_path,
            }


class JobRegistry:
    def __init__(self, workspace: Path):
        self.workspace = Path(workspace)
        self._jobs: dict[str, RunJob] = {}
        self._lock = threading.Lock()

    def get(self, job_id: str) -> RunJob | None:
        with self._lock:
            return self._jobs.get(job_id)

    def start(self, scenario: Scenario, seed: int | None) -> RunJob:
        job = RunJob(
            id=uuid.uuid4().hex[:12],
            scenario_name=scenario.name,
            seed=seed,
            total=scenario.globals.iterations,
        )
        with self._lock:
            self._jobs[job.id] = job
        worker = threading.Thread(target=self._run, args=(job, scenario), daemon=True)
        worker.start()
        return job

    def _run(self, job: RunJob, scenario: Scenario) -> None:
        with job._lock:
            job.state = "running"

        def on_tick(completed: int, total: int) -> None:
            with job._lock:
                job.completed = completed
                job.total = total

        try:
            result = run_scenario(scenario, seed=job.seed, on_tick=on_tick)
            archive = persist_run(result, self.workspace, run_id=job.id)
            with job._lock:
                job.effective_seed = result.seed
                job.archive_path = str(archive.path)
                job.state = "done"
        except Exception as exc:  # failures are job state, not server crashes
            with job._lock:
                job.error = str(exc)
                job.state = "failed"
