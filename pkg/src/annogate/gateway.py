"""Dispatch of extraction prompts plus column images to remote endpoints.

All network interaction for the pipeline lives here so that every other
stage is testable offline against stored raw outputs. Endpoints are
described entirely by configuration (request template, response path,
auth header shape): the wire format is a generic chat-completion JSON
POST, and providers with incompatible APIs differ only in their
templates. Raw responses are persisted byte-exact before parsing.
"""

from __future__ import annotations

import base64
import json
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .errors import ConfigError, IngestError
from .ingest import AnnotationSet, FieldSchema, parse_model_output

DEFAULT_TEMPLATE: Mapping = {
    "model": "{model}",
    "messages": [
        {
            "role": "user",
            "content": [
                {"type": "text", "text": "{prompt}"},
                {
                    "type": "image_url",
                    "image_url": {"url": "data:{media_type};base64,{image_b64}"},
                },
            ],
        }
    ],
}

DEFAULT_RESPONSE_PATH = ("choices", 0, "message", "content")

_MEDIA_TYPES = {
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".webp": "image/webp",
}

BACKOFF_BASE_S = 0.5
BACKOFF_CAP_S = 30.0


class JobStatus(str, Enum):
    PENDING = "pending"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


@dataclass(frozen=True)
class EndpointConfig:
    endpoint_id: str
    base_url: str
    model_name: str
    credential_env: str
    timeout_s: float = 120.0
    max_retries: int = 2
    max_parallel: int = 2
    request_template: Mapping | None = None
    response_path: tuple = DEFAULT_RESPONSE_PATH
    auth_header: str = "Authorization"
    auth_format: str = "Bearer {key}"
    extra_headers: Mapping | None = None

    def __post_init__(self):
        if not self.endpoint_id or not all(
            c.isalnum() or c in "_-" for c in self.endpoint_id
        ):
            raise ConfigError(f"endpoint id must be [A-Za-z0-9_-]+: {self.endpoint_id!r}")
        if self.timeout_s <= 0:
            raise ConfigError("timeout must be positive")
        if self.max_retries < 0:
            raise ConfigError("max retries must be >= 0")
        if self.max_parallel < 1:
            raise ConfigError("max parallel requests must be >= 1")


def load_endpoint_configs(path: str | Path) -> dict:
    """Read the endpoint configuration file (JSON; layout in the README)."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read endpoint config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"endpoint config is not valid JSON: {exc}") from exc
    entries = doc.get("endpoints")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("endpoint config must list 'endpoints'")
    configs = {}
    for entry in entries:
        try:
            cfg = EndpointConfig(
                endpoint_id=entry["id"],
                base_url=entry["base_url"],
                model_name=entry["model"],
                credential_env=entry["credential_env"],
                timeout_s=entry.get("timeout_s", 120.0),
                max_retries=entry.get("max_retries", 2),
                max_parallel=entry.get("max_parallel", 2),
                request_template=entry.get("request_template"),
                response_path=tuple(entry.get("response_path", DEFAULT_RESPONSE_PATH)),
                auth_header=entry.get("auth_header", "Authorization"),
                auth_format=entry.get("auth_format", "Bearer {key}"),
                extra_headers=entry.get("extra_headers"),
            )
        except KeyError as exc:
            raise ConfigError(f"endpoint entry missing field {exc}") from exc
        if cfg.endpoint_id in configs:
            raise ConfigError(f"duplicate endpoint id {cfg.endpoint_id!r}")
        configs[cfg.endpoint_id] = cfg
    return configs


@dataclass(frozen=True)
class ExtractionJob:
    column_id: str
    image_path: Path | None
    prompt: str
    endpoint_id: str
    status: JobStatus = JobStatus.PENDING
    raw_output: str | None = None
    attempts: int = 0
    error: str | None = None


class TransportError(Exception):
    """Network-level failure; always considered transient."""


# transport: (url, headers, payload, timeout_s) -> (status_code, body_text)
Transport = Callable[[str, Mapping, Mapping, float], tuple[int, str]]


def _requests_transport(url, headers, payload, timeout_s):
    import requests

    try:
        resp = requests.post(url, headers=dict(headers), json=payload, timeout=timeout_s)
    except requests.RequestException as exc:
        raise TransportError(str(exc)) from exc
    return resp.status_code, resp.text


def _render_template(node, substitutions: Mapping):
    if isinstance(node, str):
        for token, value in substitutions.items():
            node = node.replace("{" + token + "}", value)
        return node
    if isinstance(node, Mapping):
        return {k: _render_template(v, substitutions) for k, v in node.items()}
    if isinstance(node, (list, tuple)):
        return [_render_template(v, substitutions) for v in node]
    return node


def _extract_text(body: str, path: Sequence) -> str:
    doc = json.loads(body)
    node = doc
    for step in path:
        node = node[step]
    if not isinstance(node, str):
        raise KeyError(f"response path {path!r} does not end at text")
    return node


def build_payload(job: ExtractionJob, config: EndpointConfig) -> Mapping:
    substitutions = {"model": config.model_name, "prompt": job.prompt}
    if job.image_path is not None:
        data = Path(job.image_path).read_bytes()
        substitutions["image_b64"] = base64.b64encode(data).decode("ascii")
        substitutions["media_type"] = _MEDIA_TYPES.get(
            Path(job.image_path).suffix.lower(), "application/octet-stream"
        )
    template = config.request_template or DEFAULT_TEMPLATE
    return _render_template(template, substitutions)


def dispatch(
    job: ExtractionJob,
    config: EndpointConfig,
    *,
    transport: Transport | None = None,
    sleeper: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> ExtractionJob:
    """Send one extraction request, retrying transient failures.

    Transient means connection errors, HTTP 429, or HTTP 5xx; those are
    retried with exponential backoff and jitter up to max_retries. Other
    HTTP errors and malformed response bodies fail immediately. A missing
    credential is a configuration error raised before any network call.
    The returned job records the verbatim response text and the attempt
    count (at most max_retries + 1).
    """
    key = os.environ.get(config.credential_env, "")
    if not key:
        raise ConfigError(
            f"credential env var {config.credential_env!r} is not set "
            f"(endpoint {config.endpoint_id})"
        )
    transport = transport or _requests_transport
    rng = rng or random.Random()
    headers = {config.auth_header: config.auth_format.replace("{key}", key)}
    if config.extra_headers:
        headers.update(config.extra_headers)
    payload = build_payload(job, config)

    attempts = 0
    last_error = "no attempts made"
    while attempts <= config.max_retries:
        attempts += 1
        try:
            status, body = transport(config.base_url, headers, payload, config.timeout_s)
        except TransportError as exc:
            last_error = f"transport: {exc}"
        else:
            if 200 <= status < 300:
                try:
                    text = _extract_text(body, config.response_path)
                except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
                    return replace(
                        job,
                        status=JobStatus.FAILED,
                        attempts=attempts,
                        error=f"malformed response: {exc}",
                    )
                return replace(
                    job,
                    status=JobStatus.SUCCEEDED,
                    raw_output=text,
                    attempts=attempts,
                    error=None,
                )
            if status == 429 or status >= 500:
                last_error = f"HTTP {status}"
            else:
                return replace(
                    job,
                    status=JobStatus.FAILED,
                    attempts=attempts,
                    error=f"HTTP {status}: {body[:200]}",
                )
        if attempts <= config.max_retries:
            delay = min(BACKOFF_CAP_S, BACKOFF_BASE_S * 2 ** (attempts - 1))
            sleeper(delay * (0.5 + rng.random() / 2))
    return replace(job, status=JobStatus.FAILED, attempts=attempts, error=last_error)


class RawOutputStore:
    """Byte-exact raw response storage: one file per (column, endpoint)."""

    def __init__(self, columns_dir: str | Path):
        self.columns_dir = Path(columns_dir)

    def path(self, column_id: str, endpoint_id: str) -> Path:
        return self.columns_dir / column_id / f"raw_{endpoint_id}.txt"

    def has(self, column_id: str, endpoint_id: str) -> bool:
        return self.path(column_id, endpoint_id).exists()

    def write(self, column_id: str, endpoint_id: str, text: str) -> Path:
        path = self.path(column_id, endpoint_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(text.encode("utf-8"))
        return path

    def read(self, column_id: str, endpoint_id: str) -> str:
        try:
            return self.path(column_id, endpoint_id).read_bytes().decode("utf-8")
        except OSError as exc:
            raise IngestError(f"missing raw output: {exc}") from exc

    def incomplete_marker(self, column_id: str) -> Path:
        return self.columns_dir / column_id / "INCOMPLETE.json"

    def mark_incomplete(self, column_id: str, failed: Mapping) -> None:
        marker = self.incomplete_marker(column_id)
        marker.parent.mkdir(parents=True, exist_ok=True)
        marker.write_text(json.dumps({"failed": dict(failed)}, indent=2), encoding="utf-8")

    def clear_incomplete(self, column_id: str) -> None:
        marker = self.incomplete_marker(column_id)
        if marker.exists():
            marker.unlink()


@dataclass
class PairResult:
    column_id: str
    jobs: dict  # endpoint_id -> ExtractionJob
    sets: dict  # endpoint_id -> AnnotationSet (only for succeeded sides)
    complete: bool


class _EndpointLimiter:
    """Per-endpoint concurrency caps shared across worker threads."""

    def __init__(self, configs: Sequence[EndpointConfig]):
        self._semaphores = {
            c.endpoint_id: threading.BoundedSemaphore(c.max_parallel) for c in configs
        }

    def run(self, config: EndpointConfig, fn, *args, **kwargs):
        with self._semaphores[config.endpoint_id]:
            return fn(*args, **kwargs)


def run_pair(
    column_id: str,
    image_path: str | Path | None,
    prompt: str,
    config_a: EndpointConfig,
    config_b: EndpointConfig,
    *,
    store: RawOutputStore,
    schema: FieldSchema,
    transport: Transport | None = None,
    sleeper: Callable[[float], None] = time.sleep,
    force: bool = False,
    limiter: _EndpointLimiter | None = None,
) -> PairResult:
    """Run both endpoints for one column concurrently and parse the outputs.

    Raw outputs are persisted before parsing. A column whose side already
    has stored raw output performs no network call for that side unless
    force is set; if either side fails, the column is marked incomplete
    (resumable) and only the failed side is retried on the next run.
    """
    configs = {c.endpoint_id: c for c in (config_a, config_b)}
    limiter = limiter or _EndpointLimiter(list(configs.values()))
    image = Path(image_path) if image_path is not None else None

    def one_side(config: EndpointConfig) -> ExtractionJob:
        job = ExtractionJob(
            column_id=column_id,
            image_path=image,
            prompt=prompt,
            endpoint_id=config.endpoint_id,
        )
        if not force and store.has(column_id, config.endpoint_id):
            return replace(
                job,
                status=JobStatus.SUCCEEDED,
                raw_output=store.read(column_id, config.endpoint_id),
                attempts=0,
            )
        done = limiter.run(
            config, dispatch, job, config, transport=transport, sleeper=sleeper
        )
        if done.status is JobStatus.SUCCEEDED:
            store.write(column_id, config.endpoint_id, done.raw_output or "")
        return done

    with ThreadPoolExecutor(max_workers=2) as pool:
        futures = {eid: pool.submit(one_side, cfg) for eid, cfg in configs.items()}
        jobs = {eid: f.result() for eid, f in futures.items()}

    sets = {}
    for eid, job in jobs.items():
        if job.status is JobStatus.SUCCEEDED:
            sets[eid] = parse_model_output(
                job.raw_output or "", schema, column_id=column_id, model_id=eid
            )
    complete = all(j.status is JobStatus.SUCCEEDED for j in jobs.values())
    failed = {
        eid: j.error or "failed" for eid, j in jobs.items() if j.status is JobStatus.FAILED
    }
    if failed:
        store.mark_incomplete(column_id, failed)
    else:
        store.clear_incomplete(column_id)
    return PairResult(column_id=column_id, jobs=jobs, sets=sets, complete=complete)


def extract_columns(
    columns: Sequence[tuple[str, str | Path | None]],
    prompt: str,
    configs: Sequence[EndpointConfig],
    *,
    store: RawOutputStore,
    schema: FieldSchema,
    transport: Transport | None = None,
    sleeper: Callable[[float], None] = time.sleep,
    force: bool = False,
    max_workers: int = 8,
) -> dict:
    """Dispatch every (column, image) to every endpoint, bounded per endpoint.

    Returns {column_id: {endpoint_id: ExtractionJob}}. Concurrency across
    columns is limited by max_workers and, per endpoint, by its
    max_parallel setting.
    """
    limiter = _EndpointLimiter(configs)
    results: dict[str, dict] = {c: {} for c, _ in columns}

    def one(column_id: str, image, config: EndpointConfig) -> tuple[str, str, ExtractionJob]:
        job = ExtractionJob(
            column_id=column_id,
            image_path=Path(image) if image is not None else None,
            prompt=prompt,
            endpoint_id=config.endpoint_id,
        )
        if not force and store.has(column_id, config.endpoint_id):
            return column_id, config.endpoint_id, replace(
                job,
                status=JobStatus.SUCCEEDED,
                raw_output=store.read(column_id, config.endpoint_id),
                attempts=0,
            )
        done = limiter.run(
            config, dispatch, job, config, transport=transport, sleeper=sleeper
        )
        if done.status is JobStatus.SUCCEEDED:
            store.write(column_id, config.endpoint_id, done.raw_output or "")
        return column_id, config.endpoint_id, done

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [
            pool.submit(one, column_id, image, config)
            for column_id, image in columns
            for config in configs
        ]
        for future in futures:
            column_id, endpoint_id, job = future.result()
            results[column_id][endpoint_id] = job

    for column_id, jobs in results.items():
        failed = {
            eid: j.error or "failed"
            for eid, j in jobs.items()
            if j.status is JobStatus.FAILED
        }
        if failed:
            store.mark_incomplete(column_id, failed)
        else:
            store.clear_incomplete(column_id)
    return results
