"""Layer 2: cross-system comparison, expert resolution, gold export.

Two independently produced label sets for the same column are compared
field by field. Identical labels become gold automatically; anything
else, including structural disagreements where the systems ended up with
different entry sets, is escalated to the final reviewer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

from .alignment import (
    AlignedPair,
    EntryAlignment,
    FieldKey,
    align_entries,
    DEFAULT_GAP_PENALTY,
    DEFAULT_MIN_MATCH,
)
from .consensus import (
    JuryTask,
    Provenance,
    ReviewDecision,
    SystemOutput,
    TaskKind,
    lcs_diff_spans,
    normalize_value,
    task_id_for,
)
from .errors import IncompleteExportError, MissingDecisionsError, UsageError
from .ingest import AnnotationSet, FieldSchema

GOLD_FORMAT_VERSION = 1


class MetaStatus(str, Enum):
    GOLDEN = "golden"
    CONFLICT = "conflict"


class GoldProvenance(str, Enum):
    GOLDEN_CONSENSUS = "golden-consensus"
    EXPERT_RESOLVED = "expert-resolved"


@dataclass(frozen=True)
class MetaRecord:
    """Cross-system verdict for one field (keys are re-aligned ordinals)."""

    key: FieldKey
    label_a: str | None
    label_b: str | None
    status: MetaStatus
    resolved: str | None
    source_a: FieldKey | None = None  # original layer-1 key on each side,
    source_b: FieldKey | None = None  # None where that side had no entry


@dataclass(frozen=True)
class GoldRecord:
    key: FieldKey
    label: str
    provenance: GoldProvenance


@dataclass(frozen=True)
class GoldExport:
    dataset: str  # tab-separated records, one field per line
    sidecar: dict  # provenance summary, JSON-serializable


def _entries_from_output(
    output: SystemOutput, column: str, schema: FieldSchema
) -> tuple[list[int], list[dict]]:
    """Group a system's labels for one column into per-ordinal entries."""
    grouped: dict[int, dict] = {}
    for key, (label, _prov) in output.labels.items():
        if key.column != column:
            continue
        grouped.setdefault(key.ordinal, {})[key.field] = label
    ordinals = sorted(grouped)
    return ordinals, [grouped[o] for o in ordinals]


def meta_compare(
    la: SystemOutput,
    lb: SystemOutput,
    *,
    schema: FieldSchema,
    name_field: str = "name",
    gap_penalty: float = DEFAULT_GAP_PENALTY,
    min_match: float = DEFAULT_MIN_MATCH,
    normalize: Callable[[str], str] = normalize_value,
    strict_raw: bool = False,
) -> tuple[list[MetaRecord], list[JuryTask]]:
    """Compare two systems' outputs; golden consensus vs. conflict.

    Entry structures may differ after the juries (an entry resolved on one
    side only), so the two outputs are re-aligned on the name field before
    field-wise comparison; rows aligned to a gap surface as conflicts with
    the absent side marked. Equality uses the layer-1 normalization
    predicate unless strict_raw is set, in which case labels must match
    byte for byte.
    """
    columns = sorted(
        {k.column for k in la.labels} | {k.column for k in lb.labels}
    )
    records: list[MetaRecord] = []
    conflicts: list[JuryTask] = []
    for column in columns:
        ords_a, entries_a = _entries_from_output(la, column, schema)
        ords_b, entries_b = _entries_from_output(lb, column, schema)
        set_a = AnnotationSet(column, la.system_id, tuple(entries_a))
        set_b = AnnotationSet(column, lb.system_id, tuple(entries_b))
        if [e.get(name_field) for e in entries_a] == [e.get(name_field) for e in entries_b]:
            # identical structure: identity alignment, keeps original ordinals
            alignment = EntryAlignment(
                column,
                tuple(AlignedPair(i, i, 1.0) for i in range(len(entries_a))),
            )
        else:
            alignment = align_entries(
                set_a, set_b, gap_penalty, min_match, name_field=name_field
            )
        for ordinal, pair in enumerate(alignment.pairs):
            ent_a = entries_a[pair.index_a] if pair.index_a is not None else None
            ent_b = entries_b[pair.index_b] if pair.index_b is not None else None
            ord_a = ords_a[pair.index_a] if pair.index_a is not None else None
            ord_b = ords_b[pair.index_b] if pair.index_b is not None else None
            for f in schema.fields:
                key = FieldKey(column, ordinal, f)
                val_a = ent_a.get(f, "") if ent_a is not None else None
                val_b = ent_b.get(f, "") if ent_b is not None else None
                if val_a is not None and val_b is not None:
                    equal = val_a == val_b if strict_raw else normalize(val_a) == normalize(val_b)
                else:
                    equal = False
                ka = FieldKey(column, ord_a, f) if ord_a is not None else None
                kb = FieldKey(column, ord_b, f) if ord_b is not None else None
                if equal:
                    records.append(
                        MetaRecord(key, val_a, val_b, MetaStatus.GOLDEN, val_a, ka, kb)
                    )
                else:
                    records.append(
                        MetaRecord(key, val_a, val_b, MetaStatus.CONFLICT, None, ka, kb)
                    )
                    spans_a, spans_b = lcs_diff_spans(val_a, val_b)
                    conflicts.append(
                        JuryTask(
                            task_id=task_id_for(TaskKind.CONFLICT, None, key),
                            key=key,
                            kind=TaskKind.CONFLICT,
                            value_a=val_a,
                            value_b=val_b,
                            spans_a=spans_a,
                            spans_b=spans_b,
                        )
                    )
    return records, conflicts


def apply_expert(
    records: Sequence[MetaRecord],
    decisions: Iterable[ReviewDecision],
    *,
    normalize: Callable[[str], str] = normalize_value,
) -> list[GoldRecord]:
    """Resolve conflicts with expert decisions and assemble gold records."""
    conflict_ids = {
        task_id_for(TaskKind.CONFLICT, None, r.key): r
        for r in records
        if r.status is MetaStatus.CONFLICT
    }
    effective: dict[str, ReviewDecision] = {}
    for d in decisions:
        if d.task_id not in conflict_ids:
            raise UsageError(f"decision for unknown expert task: {d.task_id!r}")
        effective[d.task_id] = d

    missing = [r.key for tid, r in conflict_ids.items() if tid not in effective]
    if missing:
        raise MissingDecisionsError(sorted(missing))

    gold: list[GoldRecord] = []
    for rec in records:
        if rec.status is MetaStatus.GOLDEN:
            gold.append(GoldRecord(rec.key, rec.resolved or "", GoldProvenance.GOLDEN_CONSENSUS))
        else:
            d = effective[task_id_for(TaskKind.CONFLICT, None, rec.key)]
            gold.append(GoldRecord(rec.key, normalize(d.value), GoldProvenance.EXPERT_RESOLVED))
    return gold


def export_gold(
    gold: Sequence[GoldRecord],
    schema: FieldSchema,
    *,
    expected_keys: Iterable[FieldKey] | None = None,
    layer1_provenance: Mapping[str, Mapping[FieldKey, Provenance]] | None = None,
) -> GoldExport:
    """Serialize the gold dataset plus its provenance sidecar.

    Dataset lines are "column<TAB>ordinal<TAB>field<TAB>label", sorted by
    column, ordinal, then schema field order. The sidecar counts
    golden-consensus vs expert-resolved fields per column and overall,
    plus per-system layer-1 provenance tallies when supplied. Export
    refuses if any expected key has no gold record.
    """
    by_key: dict[FieldKey, GoldRecord] = {}
    for rec in gold:
        if rec.key in by_key:
            raise UsageError(f"duplicate gold record for {rec.key}")
        by_key[rec.key] = rec
    if expected_keys is not None:
        missing = sorted(set(expected_keys) - set(by_key))
        if missing:
            raise IncompleteExportError(missing)

    field_order = {f: i for i, f in enumerate(schema.fields)}
    ordered = sorted(
        by_key.values(),
        key=lambda r: (r.key.column, r.key.ordinal, field_order.get(r.key.field, len(field_order))),
    )
    lines = [
        f"{r.key.column}\t{r.key.ordinal}\t{r.key.field}\t{r.label}" for r in ordered
    ]
    dataset = "\n".join(lines) + ("\n" if lines else "")

    columns: dict[str, dict] = {}
    totals = {"fields": 0, "golden-consensus": 0, "expert-resolved": 0}
    for r in ordered:
        col = columns.setdefault(
            r.key.column, {"fields": 0, "golden-consensus": 0, "expert-resolved": 0}
        )
        col["fields"] += 1
        col[r.provenance.value] += 1
        totals["fields"] += 1
        totals[r.provenance.value] += 1

    if layer1_provenance:
        for system_id, prov_map in sorted(layer1_provenance.items()):
            sys_totals = {p.value: 0 for p in Provenance}
            for key, prov in prov_map.items():
                col = columns.setdefault(
                    key.column, {"fields": 0, "golden-consensus": 0, "expert-resolved": 0}
                )
                per_sys = col.setdefault(f"layer1-{system_id}", {p.value: 0 for p in Provenance})
                per_sys[prov.value] += 1
                sys_totals[prov.value] += 1
            totals[f"layer1-{system_id}"] = sys_totals

    sidecar = {
        "version": GOLD_FORMAT_VERSION,
        "totals": totals,
        "columns": columns,
    }
    return GoldExport(dataset=dataset, sidecar=sidecar)


def parse_gold_dataset(text: str) -> dict:
    """Read the exported TSV back into {FieldKey: label}."""
    labels: dict[FieldKey, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise UsageError(f"gold dataset line {line_no} has {len(parts)} fields, expected 4")
        column, ordinal, field, label = parts
        labels[FieldKey(column, int(ordinal), field)] = label
    return labels


def sidecar_to_json(export: GoldExport) -> str:
    return json.dumps(export.sidecar, indent=2, sort_keys=True, ensure_ascii=False)
