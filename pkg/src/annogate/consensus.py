"""Layer 1: normalization, the agreement gate, jury queues, and decisions.

The gate auto-accepts a field only on literal agreement of the two
models' normalized values; everything else (including one-sided
omissions) is routed to the human jury. A small random audit of
consensus-accepted fields monitors the silent error rate.
"""

from __future__ import annotations

import random
import re
import unicodedata
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Sequence
from urllib.parse import quote, unquote

from .alignment import FieldKey, FieldPair
from .errors import MissingDecisionsError, UsageError

_WS_RUN = re.compile(r"\s+")


def normalize_value(raw: str) -> str:
    """Canonical comparison form: NFC, trimmed, whitespace runs collapsed.

    Case, punctuation, and diacritics are preserved deliberately; a missing
    accent is a real disagreement and must reach the jury.
    """
    return _WS_RUN.sub(" ", unicodedata.normalize("NFC", raw)).strip()


class GateStatus(str, Enum):
    CONSENSUS = "consensus"
    DIVERGENCE = "divergence"


class Provenance(str, Enum):
    AUTO = "auto"
    JURY = "jury"
    VERIFICATION_OVERRIDE = "verification-override"


class TaskKind(str, Enum):
    DIVERGENCE = "divergence"
    VERIFICATION = "verification"
    CONFLICT = "conflict"  # layer-2 expert tasks reuse the same shape


_KIND_PREFIX = {
    TaskKind.DIVERGENCE: "div",
    TaskKind.VERIFICATION: "ver",
    TaskKind.CONFLICT: "exp",
}
_PREFIX_KIND = {v: k for k, v in _KIND_PREFIX.items()}


@dataclass(frozen=True)
class ConsensusRecord:
    """Per-field gate verdict with both raw and normalized values."""

    key: FieldKey
    value_a: str | None
    value_b: str | None
    normalized_a: str | None
    normalized_b: str | None
    status: GateStatus
    resolved: str | None  # set for consensus records and after jury decisions
    source: Provenance | None


@dataclass(frozen=True)
class JuryTask:
    task_id: str
    key: FieldKey
    kind: TaskKind
    value_a: str | None
    value_b: str | None
    spans_a: tuple[tuple[int, int], ...]
    spans_b: tuple[tuple[int, int], ...]
    image_ref: str | None = None


@dataclass(frozen=True)
class ReviewDecision:
    task_id: str
    reviewer_id: str
    value: str
    timestamp: float = 0.0


@dataclass(frozen=True)
class VerificationOverride:
    """A verification audit that changed an auto-accepted label."""

    key: FieldKey
    previous: str
    corrected: str


@dataclass
class SystemOutput:
    """Final labels of one Layer-1 system, with per-field provenance."""

    system_id: str
    labels: dict  # FieldKey -> (label, Provenance)
    verification_checked: int = 0
    overrides: tuple[VerificationOverride, ...] = ()


def task_id_for(kind: TaskKind, system_id: str | None, key: FieldKey) -> str:
    """Stable, collision-free task identifier (parts are percent-encoded)."""
    parts = [_KIND_PREFIX[kind], system_id or "", key.column, str(key.ordinal), key.field]
    return "|".join(quote(p, safe="") for p in parts)


def parse_task_id(task_id: str) -> tuple[TaskKind, str, FieldKey]:
    try:
        prefix, system, column, ordinal, field = (unquote(p) for p in task_id.split("|"))
        return _PREFIX_KIND[prefix], system, FieldKey(column, int(ordinal), field)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"malformed task id: {task_id!r}") from exc


def lcs_diff_spans(
    a: str | None, b: str | None
) -> tuple[tuple[tuple[int, int], ...], tuple[tuple[int, int], ...]]:
    """Character ranges of each string not on a longest common subsequence.

    Removing the spanned ranges from both strings leaves identical
    residues (the LCS itself), so the spans cover exactly the
    disagreement. An absent side spans the whole of the other string.
    Spans are half-open, non-overlapping, and sorted.
    """
    sa = a or ""
    sb = b or ""
    n, m = len(sa), len(sb)
    lcs = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            if sa[i - 1] == sb[j - 1]:
                lcs[i][j] = lcs[i - 1][j - 1] + 1
            else:
                lcs[i][j] = max(lcs[i - 1][j], lcs[i][j - 1])

    in_lcs_a = [False] * n
    in_lcs_b = [False] * m
    i, j = n, m
    while i > 0 and j > 0:
        if sa[i - 1] == sb[j - 1] and lcs[i][j] == lcs[i - 1][j - 1] + 1:
            in_lcs_a[i - 1] = True
            in_lcs_b[j - 1] = True
            i, j = i - 1, j - 1
        elif lcs[i - 1][j] >= lcs[i][j - 1]:
            i -= 1
        else:
            j -= 1

    def to_spans(mask: list[bool]) -> tuple[tuple[int, int], ...]:
        spans: list[tuple[int, int]] = []
        start = None
        for idx, keep in enumerate(mask):
            if not keep and start is None:
                start = idx
            elif keep and start is not None:
                spans.append((start, idx))
                start = None
        if start is not None:
            spans.append((start, len(mask)))
        return tuple(spans)

    return to_spans(in_lcs_a), to_spans(in_lcs_b)


def gate_field(
    pair: FieldPair, normalize: Callable[[str], str] = normalize_value
) -> ConsensusRecord:
    """Apply the agreement gate to one field pair.

    Consensus requires both sides present and equal after normalization;
    a single absent side is a divergence (omissions are always reviewed).
    Both sides absent is consensus on the empty value.
    """
    va, vb = pair.value_a, pair.value_b
    na = normalize(va) if va is not None else None
    nb = normalize(vb) if vb is not None else None
    if va is None and vb is None:
        return ConsensusRecord(
            pair.key, None, None, None, None, GateStatus.CONSENSUS, "", Provenance.AUTO
        )
    if va is None or vb is None or na != nb:
        return ConsensusRecord(
            pair.key, va, vb, na, nb, GateStatus.DIVERGENCE, None, None
        )
    return ConsensusRecord(
        pair.key, va, vb, na, nb, GateStatus.CONSENSUS, na, Provenance.AUTO
    )


def run_layer1(
    pairs: Sequence[FieldPair],
    *,
    system_id: str | None = None,
    normalize: Callable[[str], str] = normalize_value,
    image_ref: str | None = None,
) -> tuple[list[ConsensusRecord], list[JuryTask]]:
    """Gate every pair; queue the divergences for the jury, in input order.

    The record list partitions the input exactly: one record per pair,
    consensus records resolved with Auto provenance.
    """
    records = [gate_field(p, normalize) for p in pairs]
    queue: list[JuryTask] = []
    for rec in records:
        if rec.status is GateStatus.DIVERGENCE:
            spans_a, spans_b = lcs_diff_spans(rec.value_a, rec.value_b)
            queue.append(
                JuryTask(
                    task_id=task_id_for(TaskKind.DIVERGENCE, system_id, rec.key),
                    key=rec.key,
                    kind=TaskKind.DIVERGENCE,
                    value_a=rec.value_a,
                    value_b=rec.value_b,
                    spans_a=spans_a,
                    spans_b=spans_b,
                    image_ref=image_ref,
                )
            )
    assert len(records) == len(pairs)
    return records, queue


def sample_verification(
    records: Sequence[ConsensusRecord],
    per_column: int = 1,
    seed: int = 0,
    *,
    system_id: str | None = None,
    image_ref: str | None = None,
) -> list[JuryTask]:
    """Draw a random audit of consensus-accepted fields for one column.

    Returns exactly min(per_column, #consensus) Verification tasks, drawn
    uniformly without replacement from a generator seeded by
    (seed, column id), so identical inputs reproduce the identical sample.
    """
    if not records:
        return []
    columns = {r.key.column for r in records}
    if len(columns) != 1:
        raise UsageError(f"records span multiple columns: {sorted(columns)}")
    column = columns.pop()
    eligible = [r for r in records if r.status is GateStatus.CONSENSUS]
    if not eligible:
        return []
    rng = random.Random(f"{seed}:{column}")
    chosen = rng.sample(eligible, min(per_column, len(eligible)))
    chosen.sort(key=lambda r: (r.key.ordinal, r.key.field))
    return [
        JuryTask(
            task_id=task_id_for(TaskKind.VERIFICATION, system_id, rec.key),
            key=rec.key,
            kind=TaskKind.VERIFICATION,
            value_a=rec.value_a,
            value_b=rec.value_b,
            spans_a=(),
            spans_b=(),
            image_ref=image_ref,
        )
        for rec in chosen
    ]


def apply_decisions(
    records: Sequence[ConsensusRecord],
    decisions: Iterable[ReviewDecision],
    *,
    system_id: str | None = None,
    normalize: Callable[[str], str] = normalize_value,
) -> SystemOutput:
    """Fold jury decisions into the final per-field labels of one system.

    Every divergence needs a decision (Jury provenance). Verification
    decisions are optional; one that disagrees with the auto-accepted
    value overrides it with VerificationOverride provenance and is
    reported for silent-error monitoring. Later decisions for the same
    task supersede earlier ones; identical resubmissions are idempotent.
    """
    div_ids = {
        task_id_for(TaskKind.DIVERGENCE, system_id, r.key): r
        for r in records
        if r.status is GateStatus.DIVERGENCE
    }
    ver_ids = {
        task_id_for(TaskKind.VERIFICATION, system_id, r.key): r
        for r in records
        if r.status is GateStatus.CONSENSUS
    }

    effective: dict[str, ReviewDecision] = {}
    for d in decisions:
        if d.task_id not in div_ids and d.task_id not in ver_ids:
            raise UsageError(f"decision for unknown task: {d.task_id!r}")
        effective[d.task_id] = d  # last submission wins, earlier kept in logs

    missing = [
        r.key for tid, r in div_ids.items() if tid not in effective
    ]
    if missing:
        raise MissingDecisionsError(sorted(missing))

    labels: dict = {}
    overrides: list[VerificationOverride] = []
    checked = 0
    for rec in records:
        if rec.status is GateStatus.DIVERGENCE:
            d = effective[task_id_for(TaskKind.DIVERGENCE, system_id, rec.key)]
            labels[rec.key] = (normalize(d.value), Provenance.JURY)
            continue
        label, prov = rec.resolved or "", Provenance.AUTO
        ver_id = task_id_for(TaskKind.VERIFICATION, system_id, rec.key)
        if ver_id in effective:
            checked += 1
            corrected = normalize(effective[ver_id].value)
            if corrected != label:
                overrides.append(VerificationOverride(rec.key, label, corrected))
                label, prov = corrected, Provenance.VERIFICATION_OVERRIDE
        labels[rec.key] = (label, prov)

    return SystemOutput(
        system_id=system_id or "",
        labels=labels,
        verification_checked=checked,
        overrides=tuple(overrides),
    )


def with_image_ref(task: JuryTask, image_ref: str | None) -> JuryTask:
    return replace(task, image_ref=image_ref)
