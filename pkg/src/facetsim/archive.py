"""Run archives: content-hashed snapshots enabling byte-exact re-runs.

Layout of one archive directory::

    scenario.json   normalized snapshot (policies inlined, effective seed)
    facets/         the selected manifests, verbatim
    flows/          the bound flow documents, verbatim, one per agent type
    metrics.csv     the metric table
    warnings.log    load + run warnings, one per line
    meta.json       run id, seed, engine version, sha256 per file

The archive doubles as a workspace: re-running ``scenario.json`` against the
archive directory reproduces ``metrics.csv`` byte for byte on the same
engine version.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import uuid
from dataclasses import dataclass
from pathlib import Path

from .engine import RunResult, run_scenario
from .errors import ArchiveError, ArchiveIntegrityError, NoSharedMetricsError
from .scenarios import Scenario, load_scenario, scenario_to_doc


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class RunArchive:
    path: Path
    meta: dict

    @property
    def run_id(self) -> str:
        return self.meta["run_id"]

    @property
    def seed(self) -> int:
        return self.meta["seed"]

    @property
    def scenario_name(self) -> str:
        return self.meta["scenario"]

    def read(self, rel: str) -> bytes:
        return (self.path / rel).read_bytes()

    def metrics_csv(self) -> str:
        return self.read("metrics.csv").decode("utf-8")

    def metric_series(self) -> tuple[list[str], dict[int, dict[str, float | None]]]:
        """Parse metrics.csv into (column names, tick -> name -> value)."""
        lines = self.metrics_csv().splitlines()
        header = lines[0].split(",")
        names = header[1:]
        series: dict[int, dict[str, float | None]] = {}
        for line in lines[1:]:
            if not line:
                continue
            cells = line.split(",")
            tick = int(cells[0])
            series[tick] = {
                name: (float(cell) if cell != "" else None)
                for name, cell in zip(names, cells[1:])
            }
        return names, series


def persist_run(
    result: RunResult,
    workspace: str | Path,
    out_dir: str | Path | None = None,
    run_id: str | None = None,
) -> RunArchive:
    """Write a self-contained, content-hashed archive for a finished run."""
    scenario = result.scenario
    missing = [n for n in scenario.facet_order if n not in scenario.facet_sources]
    if missing:
        raise ArchiveError(
            f"cannot archive: no manifest source for facet(s) {', '.join(missing)}"
        )
    base = Path(out_dir) if out_dir is not None else Path(workspace) / "runs"
    run_id = run_id or uuid.uuid4().hex[:12]
    root = base / run_id
    (root / "facets").mkdir(parents=True)
    (root / "flows").mkdir()

    doc = scenario_to_doc(scenario, seed=result.seed)
    doc["flow_bindings"] = {t: f"flows/{t}.graphml" for t in scenario.flows}
    files: dict[str, bytes] = {
        "scenario.json": (json.dumps(doc, indent=2) + "\n").encode("utf-8"),
        "metrics.csv": result.metrics.to_csv().encode("utf-8"),
        "warnings.log": ("".join(w + "\n" for w in result.warnings)).encode("utf-8"),
    }
    for name in scenario.facet_order:
        files[f"facets/{name}.json"] = scenario.facet_sources[name].encode("utf-8")
    for agent_type, text in scenario.flow_sources.items():
        files[f"flows/{agent_type}.graphml"] = text.encode("utf-8")

    for rel, data in files.items():
        (root / rel).write_bytes(data)

    meta = {
        "run_id": run_id,
        "scenario": scenario.name,
        "seed": result.seed,
        "engine_version": result.engine_version,
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "hashes": {rel: _sha256(data) for rel, data in sorted(files.items())},
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return RunArchive(root, meta)


def open_archive(path: str | Path) -> RunArchive:
    """Open and verify an archive; any content drift fails loudly."""
    root = Path(path)
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise ArchiveError(f"{root} is not a run archive (no meta.json)")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    for rel, expected in meta.get("hashes", {}).items():
        target = root / rel
        if not target.is_file():
            raise ArchiveIntegrityError(f"archived file missing: {rel}")
        actual = _sha256(target.read_bytes())
        if actual != expected:
            raise ArchiveIntegrityError(
                f"content hash mismatch for {rel}: archive was modified"
            )
    return RunArchive(root, meta)


def load_archived_scenario(archive: RunArchive) -> Scenario:
    return load_scenario(archive.path / "scenario.json", archive.path)


def rerun_archive(archive: RunArchive) -> RunResult:
    """Re-execute the archived snapshot (same seed, same inputs)."""
    scenario = load_archived_scenario(archive)
    return run_scenario(scenario)


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------

@dataclass
class RunComparison:
    run_ids: list[str]
    metrics: list[str]
    ticks: list[int]
    values: dict[str, dict[str, dict[int, float | None]]]  # metric -> run -> tick -> v
    summary: dict[str, dict[str, dict[str, float | None]]]  # metric -> run -> {final, mean}

    def column_labels(self) -> list[str]:
        return [f"{m}:{r}" for m in self.metrics for r in self.run_ids]

    def to_csv(self) -> str:
        lines = [",".join(["tick"] + self.column_labels())]
        for tick in self.ticks:
            cells = [str(tick)]
            for metric in self.metrics:
                for run in self.run_ids:
                    v = self.values[metric][run].get(tick)
                    cells.append(_cell(v))
            lines.append(",".join(cells))
        for stat in ("final", "mean"):
            cells = [stat]
            for metric in self.metrics:
                for run in self.run_ids:
                    cells.append(_cell(self.summary[metric][run][stat]))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "runs": self.run_ids,
            "metrics": self.metrics,
            "ticks": self.ticks,
            "values": {
                m: {r: [self.values[m][r].get(t) for t in self.ticks] for r in self.run_ids}
                for m in self.metrics
            },
            "summary": self.summary,
        }


def _cell(value) -> str:
    if value is None:
        return ""
    f = float(value)
    return str(int(f)) if f.is_integer() else repr(f)


def compare_runs(archives: list[RunArchive]) -> RunComparison:
    """Align >= 2 archives on their shared metrics, tick by tick."""
    if len(archives) < 2:
        raise ArchiveError("comparison needs at least two run archives")
    parsed = []
    for archive in archives:
        names, series = archive.metric_series()
        parsed.append((archive.run_id, names, series))

    first_names = parsed[0][1]
    shared = [
        name for name in first_names if all(name in names for _, names, _ in parsed)
    ]
    if not shared:
        raise NoSharedMetricsError("the archives share no metric names")

    ticks = sorted({t for _, _, series in parsed for t in series})
    values: dict[str, dict[str, dict[int, float | None]]] = {m: {} for m in shared}
    summary: dict[str, dict[str, dict[str, float | None]]] = {m: {} for m in shared}
    for run_id, _, series in parsed:
        collected = sorted(series)
        for metric in shared:
            per_tick = {t: series[t].get(metric) for t in collected}
            values[metric][run_id] = per_tick
            numeric = [v for v in per_tick.values() if v is not None]
            final = per_tick[collected[-1]] if collected else None
            summary[metric][run_id] = {
                "final": final,
                "mean": (sum(numeric) / len(numeric)) if numeric else None,
            }
    return RunComparison([p[0] for p in parsed], shared, ticks, values, summary)
