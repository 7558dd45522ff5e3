"""Error-rate metrics, agreement statistics, and the column quality filter.

Word and character error rates are the usual edit-distance rates against
a reference: (substitutions + deletions + insertions) / reference length.
Deletions consume reference tokens, insertions consume hypothesis tokens.
When the minimal distance admits several decompositions, the one with the
most substitutions is reported (a substitution is preferred over an
insert+delete pair), which makes the breakdown deterministic; the rate
itself never depends on the choice.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .alignment import FieldPair, name_similarity
from .consensus import GateStatus, gate_field, normalize_value
from .errors import UndefinedMetricError, UsageError
from .ingest import AnnotationSet, FieldSchema


@dataclass(frozen=True)
class EditBreakdown:
    substitutions: int
    deletions: int
    insertions: int
    reference_length: int

    @property
    def total(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def rate(self) -> float:
        if self.reference_length == 0:
            raise UndefinedMetricError("error rate undefined for empty reference")
        return self.total / self.reference_length


def edit_breakdown(hyp: Sequence, ref: Sequence) -> EditBreakdown:
    """Minimal-edit counts between token sequences, substitutions preferred.

    Dynamic program over cost pairs (total, -substitutions) compared
    lexicographically: the minimum total always wins, and among minimal
    alignments the one with the most substitutions is chosen. Given the
    total, the substitution count fixes deletions and insertions too
    (deletions - insertions always equals the length difference), so the
    full breakdown is deterministic.
    """
    n_h, n_r = len(hyp), len(ref)
    # prev[j] = (total, -subs) for hyp[:i] vs ref[:j]
    prev = [(j, 0) for j in range(n_r + 1)]
    for i in range(1, n_h + 1):
        cur = [(i, 0)]
        h = hyp[i - 1]
        for j in range(1, n_r + 1):
            if h == ref[j - 1]:
                diag = prev[j - 1]
            else:
                diag = (prev[j - 1][0] + 1, prev[j - 1][1] - 1)
            dele = (cur[j - 1][0] + 1, cur[j - 1][1])
            ins = (prev[j][0] + 1, prev[j][1])
            cur.append(min(diag, dele, ins))
        prev = cur
    total, neg_subs = prev[n_r]
    subs = -neg_subs
    deletions = (total - subs + (n_r - n_h)) // 2
    insertions = total - subs - deletions
    return EditBreakdown(subs, deletions, insertions, n_r)


def word_error_rate(
    hypothesis: str,
    reference: str,
    *,
    normalize: Callable[[str], str] = normalize_value,
) -> tuple[float, EditBreakdown]:
    """WER between two texts; tokens are whitespace-split after normalization."""
    hyp_tokens = normalize(hypothesis).split()
    ref_tokens = normalize(reference).split()
    if not ref_tokens:
        raise UndefinedMetricError("WER undefined for an empty reference")
    breakdown = edit_breakdown(hyp_tokens, ref_tokens)
    return breakdown.rate, breakdown


def char_error_rate(
    hypothesis: str,
    reference: str,
    *,
    normalize: Callable[[str], str] = normalize_value,
) -> tuple[float, EditBreakdown]:
    """CER over the normalized texts; inter-token whitespace is one character."""
    hyp_chars = normalize(hypothesis)
    ref_chars = normalize(reference)
    if not ref_chars:
        raise UndefinedMetricError("CER undefined for an empty reference")
    breakdown = edit_breakdown(hyp_chars, ref_chars)
    return breakdown.rate, breakdown


def annotation_text(
    aset: AnnotationSet,
    schema: FieldSchema,
    *,
    normalize: Callable[[str], str] = normalize_value,
) -> str:
    """Canonical column serialization of a raw annotation set.

    Entries in order, fields in schema order, empty fields skipped,
    values joined by single spaces. Fixed here so WER over structured
    data is reproducible.
    """
    tokens = []
    for entry in aset.entries:
        for f in schema.fields:
            value = normalize(entry.get(f, ""))
            if value:
                tokens.append(value)
    return " ".join(tokens)


def labels_text(labels: Mapping, schema: FieldSchema) -> str:
    """Canonical serialization of {FieldKey: label} maps (one column)."""
    field_order = {f: i for i, f in enumerate(schema.fields)}
    keys = sorted(
        labels,
        key=lambda k: (k.column, k.ordinal, field_order.get(k.field, len(field_order))),
    )
    return " ".join(labels[k] for k in keys if labels[k])


def fields_to_correct(pre_labels: Mapping, post_labels: Mapping) -> int:
    """Count keys whose value changed between two label maps."""
    if set(pre_labels) != set(post_labels):
        raise UsageError("pre and post label maps must cover the same keys")
    return sum(1 for k, v in pre_labels.items() if post_labels[k] != v)


def effort_ratio(n_correct: int, n_fields: int) -> float:
    """Manual-correction percentage: corrected / total * 100."""
    if n_fields <= 0:
        raise UndefinedMetricError("effort ratio undefined for zero fields")
    return n_correct / n_fields * 100.0


@dataclass(frozen=True)
class AgreementStats:
    """Field- and character-level agreement over one column's field pairs.

    total_fields counts field instances (entry x schema slot) on the pair,
    present_*/nonempty_* expose the per-side tallies since the two sides
    can disagree on entry count; distinct_field_count is the larger side.
    """

    matched_fields: int
    total_fields: int
    field_rate: float | None  # None when there are no pairs
    char_rate: float | None
    distinct_field_count: int
    present_a: int
    present_b: int
    nonempty_a: int
    nonempty_b: int


def agreement_stats(
    pairs: Sequence[FieldPair],
    *,
    normalize: Callable[[str], str] = normalize_value,
) -> AgreementStats:
    """Gate-agreement rate plus mean per-field character similarity.

    The character rate is the mean over pairs of (1 - normalized edit
    distance) between the normalized values, an absent side counting as
    empty text.
    """
    total = len(pairs)
    matched = 0
    char_sum = 0.0
    present_a = present_b = nonempty_a = nonempty_b = 0
    for p in pairs:
        if gate_field(p, normalize).status is GateStatus.CONSENSUS:
            matched += 1
        na = normalize(p.value_a) if p.value_a is not None else ""
        nb = normalize(p.value_b) if p.value_b is not None else ""
        char_sum += name_similarity(na, nb)
        if p.value_a is not None:
            present_a += 1
            nonempty_a += bool(na)
        if p.value_b is not None:
            present_b += 1
            nonempty_b += bool(nb)
    return AgreementStats(
        matched_fields=matched,
        total_fields=total,
        field_rate=matched / total if total else None,
        char_rate=char_sum / total if total else None,
        distinct_field_count=max(present_a, present_b),
        present_a=present_a,
        present_b=present_b,
        nonempty_a=nonempty_a,
        nonempty_b=nonempty_b,
    )


@dataclass(frozen=True)
class FilterThresholds:
    """Keep a column only if every model pair stays under max_fields and
    strictly above both rate floors."""

    max_fields: int = 70
    min_field_rate: float = 0.7
    min_char_rate: float = 0.6


@dataclass(frozen=True)
class FilterResult:
    kept: tuple[str, ...]
    dropped: dict  # column -> tuple of violated threshold names


def filter_columns(
    stats_by_column: Mapping[str, Mapping[str, AgreementStats]],
    thresholds: FilterThresholds = FilterThresholds(),
) -> FilterResult:
    """Drop columns whose agreement stats violate any threshold.

    stats_by_column maps column -> {model pair id -> AgreementStats}; a
    column is kept only if every pair passes all three thresholds.
    Dropped columns carry the sorted set of violated threshold names.
    """
    kept: list[str] = []
    dropped: dict[str, tuple[str, ...]] = {}
    for column in sorted(stats_by_column):
        violations: set[str] = set()
        for stats in stats_by_column[column].values():
            if stats.distinct_field_count >= thresholds.max_fields:
                violations.add("max_fields")
            if stats.field_rate is None or stats.field_rate <= thresholds.min_field_rate:
                violations.add("min_field_rate")
            if stats.char_rate is None or stats.char_rate <= thresholds.min_char_rate:
                violations.add("min_char_rate")
        if violations:
            dropped[column] = tuple(sorted(violations))
        else:
            kept.append(column)
    return FilterResult(kept=tuple(kept), dropped=dropped)
