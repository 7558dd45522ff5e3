"""Entry alignment between two annotation sets for the same column.

Models occasionally drop or invent whole entries, so fields cannot be
compared by row position alone. Entries are aligned by global monotone
sequence alignment keyed on the name field, with gaps where one side has
no counterpart.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UsageError
from .ingest import AnnotationSet, FieldSchema

DEFAULT_GAP_PENALTY = 0.4
DEFAULT_MIN_MATCH = 0.5


@dataclass(frozen=True, order=True)
class FieldKey:
    """Identity of one atomic field: (column, aligned-entry ordinal, field)."""

    column: str
    ordinal: int
    field: str

    def __str__(self) -> str:
        return f"{self.column}:{self.ordinal}:{self.field}"


@dataclass(frozen=True)
class AlignedPair:
    """One alignment row: entry indices per side (None = gap) + similarity."""

    index_a: int | None
    index_b: int | None
    similarity: float


@dataclass(frozen=True)
class EntryAlignment:
    column_id: str
    pairs: tuple[AlignedPair, ...]

    @property
    def matched(self) -> int:
        return sum(1 for p in self.pairs if p.index_a is not None and p.index_b is not None)

    @property
    def gaps_a(self) -> int:
        return sum(1 for p in self.pairs if p.index_b is None)

    @property
    def gaps_b(self) -> int:
        return sum(1 for p in self.pairs if p.index_a is None)


@dataclass(frozen=True)
class FieldPair:
    """One field compared across the two sides; None marks an alignment gap."""

    key: FieldKey
    value_a: str | None
    value_b: str | None


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance, two-row DP."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j - 1] + (ca != cb), prev[j] + 1, cur[-1] + 1))
        prev = cur
    return prev[-1]


def name_similarity(a: str, b: str) -> float:
    """1 - edit distance / max length; 1.0 when both strings are empty.

    Normalizing by the longer string keeps the score a metric-like bound
    in [0, 1].
    """
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def align_entries(
    a: AnnotationSet,
    b: AnnotationSet,
    gap_penalty: float = DEFAULT_GAP_PENALTY,
    min_match: float = DEFAULT_MIN_MATCH,
    name_field: str = "name",
) -> EntryAlignment:
    """Global monotone alignment maximizing name similarity minus gap cost.

    Classic global sequence alignment over entry name fields: a matched
    pair scores its similarity, each gap costs gap_penalty. After the
    optimum is found, matched pairs below min_match are split into two
    gaps so that wholly dissimilar entries are never forced together.
    Backtrace prefers match over an A-side gap over a B-side gap, which
    makes the result deterministic when the optimum is not unique.
    """
    if a.column_id != b.column_id:
        raise UsageError(
            f"cannot align different columns: {a.column_id!r} vs {b.column_id!r}"
        )

    def name_of(aset: AnnotationSet, i: int) -> str:
        entry = aset.entries[i]
        if name_field not in entry:
            raise UsageError(f"entries lack the alignment field {name_field!r}")
        return entry[name_field]

    n, m = len(a.entries), len(b.entries)
    sim = [[name_similarity(name_of(a, i), name_of(b, j)) for j in range(m)] for i in range(n)]

    # score[i][j]: best score aligning a[:i] with b[:j]. Boundary cells are
    # filled by the same repeated subtraction the recurrence uses so the
    # backtrace equality checks below are bit-exact.
    score = [[0.0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        score[i][0] = score[i - 1][0] - gap_penalty
    for j in range(1, m + 1):
        score[0][j] = score[0][j - 1] - gap_penalty
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            score[i][j] = max(
                score[i - 1][j - 1] + sim[i - 1][j - 1],
                score[i - 1][j] - gap_penalty,
                score[i][j - 1] - gap_penalty,
            )

    pairs: list[AlignedPair] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and score[i][j] == score[i - 1][j - 1] + sim[i - 1][j - 1]:
            pairs.append(AlignedPair(i - 1, j - 1, sim[i - 1][j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and (j == 0 or score[i][j] == score[i - 1][j] - gap_penalty):
            pairs.append(AlignedPair(i - 1, None, 0.0))
            i -= 1
        else:
            assert j > 0
            pairs.append(AlignedPair(None, j - 1, 0.0))
            j -= 1
    pairs.reverse()

    split: list[AlignedPair] = []
    for p in pairs:
        if p.index_a is not None and p.index_b is not None and p.similarity < min_match:
            split.append(AlignedPair(p.index_a, None, 0.0))
            split.append(AlignedPair(None, p.index_b, 0.0))
        else:
            split.append(p)
    return EntryAlignment(column_id=a.column_id, pairs=tuple(split))


def alignment_score(alignment: EntryAlignment, gap_penalty: float = DEFAULT_GAP_PENALTY) -> float:
    """Objective value of an alignment (pre-split pairs score similarity)."""
    total = 0.0
    for p in alignment.pairs:
        if p.index_a is not None and p.index_b is not None:
            total += p.similarity
        else:
            total -= gap_penalty
    return total


def field_pairs(
    alignment: EntryAlignment,
    a: AnnotationSet,
    b: AnnotationSet,
    schema: FieldSchema,
) -> list[FieldPair]:
    """Expand an entry alignment into per-field comparison pairs.

    One FieldPair per (alignment row x schema field), keyed by the row
    ordinal; the iteration order (ordinal-major, schema field order) is
    the canonical field-key order used by queues downstream.
    """
    out: list[FieldPair] = []
    for ordinal, p in enumerate(alignment.pairs):
        entry_a = a.entries[p.index_a] if p.index_a is not None else None
        entry_b = b.entries[p.index_b] if p.index_b is not None else None
        for f in schema.fields:
            out.append(
                FieldPair(
                    key=FieldKey(alignment.column_id, ordinal, f),
                    value_a=entry_a.get(f, "") if entry_a is not None else None,
                    value_b=entry_b.get(f, "") if entry_b is not None else None,
                )
            )
    return out
