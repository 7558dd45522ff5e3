"""Project directory layout, persistence, and queue reconstruction.

Everything the pipeline knows lives in plain files under the project
root; there is no database, and the full review state is reconstructible
from the gate-state files plus the append-only decision log. That makes
a project portable, diffable, and crash-safe: replaying the log after an
abrupt termination yields exactly the pre-crash queue state.

Layout:
    project.json                    configuration (versioned)
    sample.json                     page sample, written by the sample command
    filter.json                     kept/dropped columns, written by filter
    columns/<col>/raw_<endpoint>.txt    byte-exact raw model output
    columns/<col>/image.<ext>           registered column image (optional)
    state/layer1_<system>_<col>.json    gate records + jury/verification tasks
    state/output_<system>_<col>.json    system output after jury decisions
    state/layer2_<col>.json             meta records + expert tasks
    gold/gold.tsv, gold/provenance.json exported dataset + sidecar
    decisions.log                       append-only JSONL decision log
    reports/<command>.json              machine-readable command reports
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .alignment import FieldKey
from .consensus import (
    ConsensusRecord,
    GateStatus,
    JuryTask,
    Provenance,
    ReviewDecision,
    SystemOutput,
    TaskKind,
    VerificationOverride,
)
from .errors import ConfigError, InputError, NotFoundError, UsageError
from .ingest import FieldSchema
from .validation import MetaRecord, MetaStatus

PROJECT_VERSION = 1
DECISION_LOG_NAME = "decisions.log"

QUEUE_VERIFICATION = "verification"
QUEUE_EXPERT = "expert"

_COLUMN_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")
_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".webp")

STAGE_PENDING = "pending"
STAGE_INGESTED = "ingested"
STAGE_LAYER1_GATED = "layer1-gated"
STAGE_LAYER1_RESOLVED = "layer1-resolved"
STAGE_LAYER2_GATED = "layer2-gated"
STAGE_GOLD = "gold"


def jury_queue_id(system_id: str) -> str:
    return f"jury-{system_id}"


def validate_column_id(column_id: str) -> str:
    if not _COLUMN_ID_RE.match(column_id):
        raise InputError(f"column id must be [A-Za-z0-9._-]+: {column_id!r}")
    return column_id


@dataclass
class ProjectConfig:
    schema: FieldSchema
    systems: dict  # system id -> (endpoint_id_1, endpoint_id_2)
    gap_penalty: float = 0.4
    min_match: float = 0.5
    name_field: str = "name"
    verification_per_column: int = 1

    def to_json(self) -> dict:
        return {
            "version": PROJECT_VERSION,
            "schema": list(self.schema.fields),
            "systems": {k: list(v) for k, v in self.systems.items()},
            "alignment": {"gap_penalty": self.gap_penalty, "min_match": self.min_match},
            "name_field": self.name_field,
            "verification_per_column": self.verification_per_column,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "ProjectConfig":
        try:
            schema = FieldSchema(tuple(doc["schema"]))
            systems = {k: tuple(v) for k, v in doc["systems"].items()}
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed project.json: {exc}") from exc
        if not systems:
            raise ConfigError("project must define at least one system")
        for sid, endpoints in systems.items():
            if len(endpoints) != 2:
                raise ConfigError(f"system {sid!r} must pair exactly two endpoints")
        alignment = doc.get("alignment", {})
        return cls(
            schema=schema,
            systems=systems,
            gap_penalty=alignment.get("gap_penalty", 0.4),
            min_match=alignment.get("min_match", 0.5),
            name_field=doc.get("name_field", "name"),
            verification_per_column=doc.get("verification_per_column", 1),
        )


class ProjectPaths:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def project_json(self) -> Path:
        return self.root / "project.json"

    @property
    def columns_dir(self) -> Path:
        return self.root / "columns"

    @property
    def state_dir(self) -> Path:
        return self.root / "state"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    @property
    def gold_dir(self) -> Path:
        return self.root / "gold"

    @property
    def gold_tsv(self) -> Path:
        return self.gold_dir / "gold.tsv"

    @property
    def gold_sidecar(self) -> Path:
        return self.gold_dir / "provenance.json"

    @property
    def decision_log(self) -> Path:
        return self.root / DECISION_LOG_NAME

    @property
    def sample_json(self) -> Path:
        return self.root / "sample.json"

    @property
    def filter_json(self) -> Path:
        return self.root / "filter.json"

    def layer1_state(self, system_id: str, column_id: str) -> Path:
        return self.state_dir / f"layer1_{system_id}_{column_id}.json"

    def output_state(self, system_id: str, column_id: str) -> Path:
        return self.state_dir / f"output_{system_id}_{column_id}.json"

    def layer2_state(self, column_id: str) -> Path:
        return self.state_dir / f"layer2_{column_id}.json"

    def column_dir(self, column_id: str) -> Path:
        return self.columns_dir / column_id

    def raw_output(self, column_id: str, endpoint_id: str) -> Path:
        return self.column_dir(column_id) / f"raw_{endpoint_id}.txt"

    def column_image(self, column_id: str) -> Path | None:
        for suffix in _IMAGE_SUFFIXES:
            candidate = self.column_dir(column_id) / f"image{suffix}"
            if candidate.exists():
                return candidate
        return None


def init_project(root: str | Path, config: ProjectConfig) -> ProjectPaths:
    paths = ProjectPaths(root)
    if paths.project_json.exists():
        raise UsageError(f"project already initialized at {paths.root}")
    for d in (paths.root, paths.columns_dir, paths.state_dir, paths.reports_dir, paths.gold_dir):
        d.mkdir(parents=True, exist_ok=True)
    paths.project_json.write_text(
        json.dumps(config.to_json(), indent=2, ensure_ascii=False), encoding="utf-8"
    )
    return paths


def load_config(root: str | Path) -> ProjectConfig:
    paths = ProjectPaths(root)
    if not paths.project_json.exists():
        raise ConfigError(f"not a project directory (no project.json): {paths.root}")
    return ProjectConfig.from_json(
        json.loads(paths.project_json.read_text(encoding="utf-8"))
    )


# --- JSON codecs for the state files -----------------------------------

def key_to_json(key: FieldKey) -> dict:
    return {"column": key.column, "ordinal": key.ordinal, "field": key.field}


def key_from_json(doc: Mapping) -> FieldKey:
    return FieldKey(doc["column"], int(doc["ordinal"]), doc["field"])


def record_to_json(rec: ConsensusRecord) -> dict:
    return {
        "key": key_to_json(rec.key),
        "value_a": rec.value_a,
        "value_b": rec.value_b,
        "normalized_a": rec.normalized_a,
        "normalized_b": rec.normalized_b,
        "status": rec.status.value,
        "resolved": rec.resolved,
        "source": rec.source.value if rec.source else None,
    }


def record_from_json(doc: Mapping) -> ConsensusRecord:
    return ConsensusRecord(
        key=key_from_json(doc["key"]),
        value_a=doc["value_a"],
        value_b=doc["value_b"],
        normalized_a=doc["normalized_a"],
        normalized_b=doc["normalized_b"],
        status=GateStatus(doc["status"]),
        resolved=doc["resolved"],
        source=Provenance(doc["source"]) if doc["source"] else None,
    )


def task_to_json(task: JuryTask) -> dict:
    return {
        "task_id": task.task_id,
        "key": key_to_json(task.key),
        "kind": task.kind.value,
        "value_a": task.value_a,
        "value_b": task.value_b,
        "spans_a": [list(s) for s in task.spans_a],
        "spans_b": [list(s) for s in task.spans_b],
        "image_ref": task.image_ref,
    }


def task_from_json(doc: Mapping) -> JuryTask:
    return JuryTask(
        task_id=doc["task_id"],
        key=key_from_json(doc["key"]),
        kind=TaskKind(doc["kind"]),
        value_a=doc["value_a"],
        value_b=doc["value_b"],
        spans_a=tuple((int(s), int(e)) for s, e in doc["spans_a"]),
        spans_b=tuple((int(s), int(e)) for s, e in doc["spans_b"]),
        image_ref=doc.get("image_ref"),
    )


def output_to_json(output: SystemOutput) -> dict:
    return {
        "system": output.system_id,
        "labels": [
            {"key": key_to_json(k), "label": label, "provenance": prov.value}
            for k, (label, prov) in output.labels.items()
        ],
        "verification_checked": output.verification_checked,
        "overrides": [
            {
                "key": key_to_json(o.key),
                "previous": o.previous,
                "corrected": o.corrected,
            }
            for o in output.overrides
        ],
    }


def output_from_json(doc: Mapping) -> SystemOutput:
    return SystemOutput(
        system_id=doc["system"],
        labels={
            key_from_json(e["key"]): (e["label"], Provenance(e["provenance"]))
            for e in doc["labels"]
        },
        verification_checked=doc.get("verification_checked", 0),
        overrides=tuple(
            VerificationOverride(key_from_json(o["key"]), o["previous"], o["corrected"])
            for o in doc.get("overrides", ())
        ),
    )


def meta_to_json(rec: MetaRecord) -> dict:
    return {
        "key": key_to_json(rec.key),
        "label_a": rec.label_a,
        "label_b": rec.label_b,
        "status": rec.status.value,
        "resolved": rec.resolved,
        "source_a": key_to_json(rec.source_a) if rec.source_a else None,
        "source_b": key_to_json(rec.source_b) if rec.source_b else None,
    }


def meta_from_json(doc: Mapping) -> MetaRecord:
    return MetaRecord(
        key=key_from_json(doc["key"]),
        label_a=doc["label_a"],
        label_b=doc["label_b"],
        status=MetaStatus(doc["status"]),
        resolved=doc["resolved"],
        source_a=key_from_json(doc["source_a"]) if doc.get("source_a") else None,
        source_b=key_from_json(doc["source_b"]) if doc.get("source_b") else None,
    )


def save_layer1_state(
    paths: ProjectPaths,
    system_id: str,
    column_id: str,
    records: Iterable[ConsensusRecord],
    tasks: Iterable[JuryTask],
) -> Path:
    doc = {
        "version": PROJECT_VERSION,
        "system": system_id,
        "column": column_id,
        "records": [record_to_json(r) for r in records],
        "tasks": [task_to_json(t) for t in tasks],
    }
    path = paths.layer1_state(system_id, column_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
    return path


def load_layer1_state(paths: ProjectPaths, system_id: str, column_id: str):
    doc = json.loads(paths.layer1_state(system_id, column_id).read_text(encoding="utf-8"))
    return (
        [record_from_json(r) for r in doc["records"]],
        [task_from_json(t) for t in doc["tasks"]],
    )


def save_layer2_state(
    paths: ProjectPaths,
    column_id: str,
    records: Iterable[MetaRecord],
    tasks: Iterable[JuryTask],
) -> Path:
    doc = {
        "version": PROJECT_VERSION,
        "column": column_id,
        "records": [meta_to_json(r) for r in records],
        "tasks": [task_to_json(t) for t in tasks],
    }
    path = paths.layer2_state(column_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
    return path


def load_layer2_state(paths: ProjectPaths, column_id: str):
    doc = json.loads(paths.layer2_state(column_id).read_text(encoding="utf-8"))
    return (
        [meta_from_json(r) for r in doc["records"]],
        [task_from_json(t) for t in doc["tasks"]],
    )


def save_output_state(paths: ProjectPaths, column_id: str, output: SystemOutput) -> Path:
    path = paths.output_state(output.system_id, column_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(output_to_json(output), ensure_ascii=False), encoding="utf-8")
    return path


def load_output_state(paths: ProjectPaths, system_id: str, column_id: str) -> SystemOutput:
    return output_from_json(
        json.loads(paths.output_state(system_id, column_id).read_text(encoding="utf-8"))
    )


# --- decision log -------------------------------------------------------

@dataclass(frozen=True)
class LogEntry:
    timestamp: float
    reviewer: str
    task_id: str
    queue_id: str
    value: str

    def to_decision(self) -> ReviewDecision:
        return ReviewDecision(
            task_id=self.task_id,
            reviewer_id=self.reviewer,
            value=self.value,
            timestamp=self.timestamp,
        )


def append_decision(log_path: Path, entry: LogEntry) -> None:
    """Append one self-delimiting JSON line, flushed and fsynced before
    returning so an acknowledged decision survives an abrupt kill."""
    line = json.dumps(
        {
            "ts": entry.timestamp,
            "reviewer": entry.reviewer,
            "task": entry.task_id,
            "queue": entry.queue_id,
            "value": entry.value,
        },
        ensure_ascii=False,
    )
    log_path.parent.mkdir(parents=True, exist_ok=True)
    with open(log_path, "a", encoding="utf-8", newline="") as fh:
        fh.write(line + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def read_decision_log(log_path: Path) -> list[LogEntry]:
    """Replay the log; a torn or corrupt line (crash artifact) is skipped."""
    if not log_path.exists():
        return []
    entries: list[LogEntry] = []
    raw = log_path.read_bytes().decode("utf-8", errors="replace")
    for line in raw.split("\n"):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            entries.append(
                LogEntry(
                    timestamp=float(doc["ts"]),
                    reviewer=str(doc["reviewer"]),
                    task_id=str(doc["task"]),
                    queue_id=str(doc["queue"]),
                    value=str(doc["value"]),
                )
            )
        except (json.JSONDecodeError, KeyError, ValueError):
            continue
    return entries


# --- full project state --------------------------------------------------

@dataclass
class QueueView:
    queue_id: str
    total: int
    completed: int

    @property
    def pending(self) -> int:
        return self.total - self.completed


@dataclass
class ProjectState:
    """In-memory snapshot reconstructed purely from files on disk."""

    paths: ProjectPaths
    config: ProjectConfig
    columns: list = field(default_factory=list)  # sorted column ids
    kept: set = field(default_factory=set)
    dropped: dict = field(default_factory=dict)  # column -> reasons
    queues: dict = field(default_factory=dict)  # queue id -> [JuryTask]
    task_index: dict = field(default_factory=dict)  # task id -> queue id
    log_entries: list = field(default_factory=list)
    effective: dict = field(default_factory=dict)  # task id -> LogEntry

    @classmethod
    def load(cls, root: str | Path) -> "ProjectState":
        paths = ProjectPaths(root)
        config = load_config(root)
        state = cls(paths=paths, config=config)

        if paths.columns_dir.exists():
            state.columns = sorted(
                p.name for p in paths.columns_dir.iterdir() if p.is_dir()
            )
        state.kept = set(state.columns)
        if paths.filter_json.exists():
            doc = json.loads(paths.filter_json.read_text(encoding="utf-8"))
            state.kept = set(doc.get("kept", []))
            state.dropped = {c: tuple(r) for c, r in doc.get("dropped", {}).items()}

        queues: dict[str, list[JuryTask]] = {
            jury_queue_id(sid): [] for sid in sorted(config.systems)
        }
        queues[QUEUE_VERIFICATION] = []
        queues[QUEUE_EXPERT] = []
        for column in state.columns:
            if column not in state.kept:
                continue
            for sid in sorted(config.systems):
                path = paths.layer1_state(sid, column)
                if not path.exists():
                    continue
                _, tasks = load_layer1_state(paths, sid, column)
                for task in tasks:
                    if task.kind is TaskKind.DIVERGENCE:
                        queues[jury_queue_id(sid)].append(task)
                    else:
                        queues[QUEUE_VERIFICATION].append(task)
            if paths.layer2_state(column).exists():
                _, tasks = load_layer2_state(paths, column)
                queues[QUEUE_EXPERT].extend(tasks)
        state.queues = queues
        state.task_index = {
            t.task_id: qid for qid, tasks in queues.items() for t in tasks
        }

        state.log_entries = read_decision_log(paths.decision_log)
        for entry in state.log_entries:
            if entry.task_id in state.task_index:
                state.effective[entry.task_id] = entry
        return state

    # -- queries ----------------------------------------------------------

    def queue_views(self) -> list[QueueView]:
        views = []
        for qid in sorted(self.queues):
            tasks = self.queues[qid]
            done = sum(1 for t in tasks if t.task_id in self.effective)
            views.append(QueueView(queue_id=qid, total=len(tasks), completed=done))
        return views

    def pending_tasks(self, queue_id: str) -> list[JuryTask]:
        if queue_id not in self.queues:
            raise NotFoundError(f"unknown queue: {queue_id!r}")
        return [t for t in self.queues[queue_id] if t.task_id not in self.effective]

    def decisions_for(self, task_ids: Iterable[str]) -> list[ReviewDecision]:
        """Full ordered decision history restricted to the given tasks."""
        wanted = set(task_ids)
        return [e.to_decision() for e in self.log_entries if e.task_id in wanted]

    def column_stage(self, column: str, gold_columns: set | None = None) -> str:
        paths, config = self.paths, self.config
        if gold_columns is None:
            gold_columns = self._gold_columns()
        if column in gold_columns:
            return STAGE_GOLD
        if paths.layer2_state(column).exists():
            return STAGE_LAYER2_GATED
        layer1_done = all(
            paths.layer1_state(sid, column).exists() for sid in config.systems
        )
        if layer1_done:
            pending_div = any(
                t.key.column == column and t.task_id not in self.effective
                for sid in config.systems
                for t in self.queues.get(jury_queue_id(sid), [])
            )
            # a dropped column never resolves; report it as gated
            if column in self.kept and not pending_div:
                return STAGE_LAYER1_RESOLVED
            return STAGE_LAYER1_GATED
        endpoints = [e for pair in config.systems.values() for e in pair]
        if endpoints and all(
            paths.raw_output(column, e).exists() for e in endpoints
        ):
            return STAGE_INGESTED
        return STAGE_PENDING

    def _gold_columns(self) -> set:
        if not self.paths.gold_sidecar.exists():
            return set()
        doc = json.loads(self.paths.gold_sidecar.read_text(encoding="utf-8"))
        return set(doc.get("columns", {}))

    def progress_doc(self) -> dict:
        gold_columns = self._gold_columns()
        return {
            "version": PROJECT_VERSION,
            "queues": {
                v.queue_id: {
                    "total": v.total,
                    "completed": v.completed,
                    "pending": v.pending,
                }
                for v in self.queue_views()
            },
            "stages": {c: self.column_stage(c, gold_columns) for c in self.columns},
            "dropped": sorted(self.dropped),
        }

    def render_progress(self) -> str:
        """Canonical progress report; byte-stable for identical state."""
        return json.dumps(self.progress_doc(), sort_keys=True, separators=(",", ":")) + "\n"

    # -- mutations (decision submission) ----------------------------------

    def submit(self, task_id: str, reviewer: str, value: str, timestamp: float | None = None) -> dict:
        """Record one decision: append to the log, update effective state.

        Identical resubmission is acknowledged idempotently; a differing
        resubmission supersedes the earlier decision while the log keeps
        the full history.
        """
        queue_id = self.task_index.get(task_id)
        if queue_id is None:
            raise NotFoundError(f"unknown task: {task_id!r}")
        current = self.effective.get(task_id)
        entry = LogEntry(
            timestamp=time.time() if timestamp is None else timestamp,
            reviewer=reviewer,
            task_id=task_id,
            queue_id=queue_id,
            value=value,
        )
        if current is not None and current.value == value and current.reviewer == reviewer:
            return {"status": "duplicate", "task_id": task_id, "queue_id": queue_id}
        append_decision(self.paths.decision_log, entry)
        self.log_entries.append(entry)
        self.effective[task_id] = entry
        return {"status": "accepted", "task_id": task_id, "queue_id": queue_id}
