"""Shared fixtures-in-code for building small on-disk projects."""

from __future__ import annotations

import json
import time
from pathlib import Path

from annogate.ingest import FieldSchema
from annogate.project import ProjectConfig, ProjectPaths, init_project

SYSTEMS = {"a": ("m1a", "m2a"), "b": ("m1b", "m2b")}
ENDPOINTS = [e for pair in SYSTEMS.values() for e in pair]


def tsv(rows) -> str:
    return "\n".join("\t".join(row) for row in rows) + ("\n" if rows else "")


def make_project(
    root: Path,
    columns: dict,
    *,
    schema: FieldSchema | None = None,
    verification_per_column: int = 1,
) -> ProjectPaths:
    """columns: {column_id: {endpoint_id: raw_text}}."""
    config = ProjectConfig(
        schema=schema or FieldSchema(),
        systems=dict(SYSTEMS),
        verification_per_column=verification_per_column,
    )
    paths = init_project(root, config)
    for column, texts in columns.items():
        for endpoint, text in texts.items():
            raw = paths.raw_output(column, endpoint)
            raw.parent.mkdir(parents=True, exist_ok=True)
            raw.write_bytes(text.encode("utf-8"))
    return paths


def bulk_decisions(log_path: Path, decisions) -> None:
    """Append many decision-log lines at once (documented JSONL format).

    decisions: iterable of (task_id, queue_id, reviewer, value).
    """
    with open(log_path, "a", encoding="utf-8", newline="") as fh:
        for task_id, queue_id, reviewer, value in decisions:
            fh.write(
                json.dumps(
                    {
                        "ts": time.time(),
                        "reviewer": reviewer,
                        "task": task_id,
                        "queue": queue_id,
                        "value": value,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
        fh.flush()

