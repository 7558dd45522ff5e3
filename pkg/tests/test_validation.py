import pytest

from annogate.alignment import FieldKey
from annogate.consensus import (
    Provenance,
    ReviewDecision,
    SystemOutput,
    TaskKind,
    task_id_for,
)
from annogate.errors import IncompleteExportError, MissingDecisionsError, UsageError
from annogate.ingest import FieldSchema
from annogate.validation import (
    GoldProvenance,
    GoldRecord,
    MetaStatus,
    apply_expert,
    export_gold,
    meta_compare,
    parse_gold_dataset,
)

SCHEMA = FieldSchema()


def _output(system_id, column, entries):
    """entries: list of dicts field->label; ordinals are the positions."""
    labels = {}
    for ordinal, entry in enumerate(entries):
        for f in SCHEMA.fields:
            labels[FieldKey(column, ordinal, f)] = (entry.get(f, ""), Provenance.AUTO)
    return SystemOutput(system_id=system_id, labels=labels)


def _entries(names, **field_values):
    out = []
    for i, name in enumerate(names):
        entry = {"name": name, "year": "", "notes": "", "address": "", "hours": ""}
        for f, values in field_values.items():
            entry[f] = values[i]
        out.append(entry)
    return out


def test_meta_compare_identical_outputs_all_golden():
    entries = _entries(["Durand", "Petit"], year=["1880", "1890"])
    la = _output("a", "c1", entries)
    lb = _output("b", "c1", entries)
    records, conflicts = meta_compare(la, lb, schema=SCHEMA)
    assert conflicts == []
    assert len(records) == 10
    assert all(r.status is MetaStatus.GOLDEN and r.resolved == r.label_a for r in records)


def test_meta_compare_380_keys_16_mismatches():
    names = [f"Nom{i}" for i in range(76)]
    entries_a = _entries(names, year=[f"18{i % 90:02d}" for i in range(76)])
    entries_b = [dict(e) for e in entries_a]
    for i in range(16):  # plant 16 label mismatches across distinct entries
        entries_b[i]["address"] = f"rue {i} bis"
        entries_a[i]["address"] = f"rue {i}"
    la = _output("a", "c1", entries_a)
    lb = _output("b", "c1", entries_b)
    records, conflicts = meta_compare(la, lb, schema=SCHEMA)
    assert len(records) == 380
    golden = [r for r in records if r.status is MetaStatus.GOLDEN]
    assert len(golden) == 364
    assert len(conflicts) == 16
    assert all(t.kind is TaskKind.CONFLICT for t in conflicts)


def test_meta_compare_key_only_in_one_output_is_conflict():
    la = _output("a", "c1", _entries(["Durand", "Seul"]))
    lb = _output("b", "c1", _entries(["Durand"]))
    records, conflicts = meta_compare(la, lb, schema=SCHEMA)
    absent = [r for r in records if r.label_b is None]
    assert len(absent) == len(SCHEMA)
    assert all(r.status is MetaStatus.CONFLICT for r in absent)
    assert {t.key for t in conflicts} >= {r.key for r in absent}
    # the matched entry stays golden
    golden = [r for r in records if r.status is MetaStatus.GOLDEN]
    assert len(golden) == len(SCHEMA)


def test_meta_compare_realigns_shifted_entries():
    # system b resolved an extra entry at the top; names re-anchor the rest
    names = ["Durand", "Petit", "Moreau"]
    la = _output("a", "c1", _entries(names))
    lb = _output("b", "c1", _entries(["Inséré"] + names))
    records, conflicts = meta_compare(la, lb, schema=SCHEMA)
    assert len(records) == 4 * len(SCHEMA)
    conflict_rows = {r.key.ordinal for r in records if r.status is MetaStatus.CONFLICT}
    assert conflict_rows == {0}  # only the inserted row conflicts
    golden = [r for r in records if r.status is MetaStatus.GOLDEN]
    assert len(golden) == 3 * len(SCHEMA)
    # source keys keep each side's original ordinals
    shifted = [r for r in records if r.key.ordinal == 1 and r.key.field == "name"][0]
    assert shifted.source_a == FieldKey("c1", 0, "name")
    assert shifted.source_b == FieldKey("c1", 1, "name")


def test_meta_compare_idempotent():
    la = _output("a", "c1", _entries(["Durand", "Petit"]))
    lb = _output("b", "c1", _entries(["Durand", "Petit"], year=["1880", ""]))
    first = meta_compare(la, lb, schema=SCHEMA)
    second = meta_compare(la, lb, schema=SCHEMA)
    assert first == second


def test_meta_compare_strict_raw_predicate():
    la = _output("a", "c1", [{"name": "a  b", "year": "", "notes": "", "address": "", "hours": ""}])
    lb = _output("b", "c1", [{"name": "a b", "year": "", "notes": "", "address": "", "hours": ""}])
    relaxed, _ = meta_compare(la, lb, schema=SCHEMA)
    strict, _ = meta_compare(la, lb, schema=SCHEMA, strict_raw=True)
    name_relaxed = [r for r in relaxed if r.key.field == "name"][0]
    name_strict = [r for r in strict if r.key.field == "name"][0]
    assert name_relaxed.status is MetaStatus.GOLDEN
    assert name_strict.status is MetaStatus.CONFLICT


def _decided(records):
    return [
        ReviewDecision(task_id_for(TaskKind.CONFLICT, None, r.key), "expert", f"fixed{r.key.ordinal}")
        for r in records
        if r.status is MetaStatus.CONFLICT
    ]


def test_apply_expert_merges_golden_and_decided():
    names = [f"N{i}" for i in range(10)]
    la = _output("a", "c1", _entries(names))
    entries_b = _entries(names)
    entries_b[3]["year"] = "1901"
    lb = _output("b", "c1", entries_b)
    records, conflicts = meta_compare(la, lb, schema=SCHEMA)
    gold = apply_expert(records, _decided(records))
    assert len(gold) == len(records)
    by_prov = {}
    for g in gold:
        by_prov.setdefault(g.provenance, []).append(g)
    assert len(by_prov[GoldProvenance.EXPERT_RESOLVED]) == len(conflicts) == 1
    assert len(by_prov[GoldProvenance.GOLDEN_CONSENSUS]) == len(records) - 1


def test_apply_expert_passthrough_no_conflicts():
    la = _output("a", "c1", _entries(["X"]))
    records, _ = meta_compare(la, _output("b", "c1", _entries(["X"])), schema=SCHEMA)
    gold = apply_expert(records, [])
    assert all(g.provenance is GoldProvenance.GOLDEN_CONSENSUS for g in gold)


def test_apply_expert_missing_decision_names_key():
    la = _output("a", "c1", _entries(["X"]))
    lb = _output("b", "c1", _entries(["Y"]))
    records, conflicts = meta_compare(la, lb, schema=SCHEMA)
    with pytest.raises(MissingDecisionsError) as exc_info:
        apply_expert(records, [])
    assert set(exc_info.value.keys) == {t.key for t in conflicts}


def test_apply_expert_unknown_decision_rejected():
    la = _output("a", "c1", _entries(["X"]))
    records, _ = meta_compare(la, _output("b", "c1", _entries(["X"])), schema=SCHEMA)
    with pytest.raises(UsageError):
        apply_expert(records, [ReviewDecision("exp||zz|0|name", "expert", "v")])


def test_provenance_conservation_property():
    names = [f"N{i}" for i in range(20)]
    entries_b = _entries(names)
    for i in (2, 5, 11):
        entries_b[i]["hours"] = "9h"
    la = _output("a", "c1", _entries(names))
    lb = _output("b", "c1", entries_b)
    records, _ = meta_compare(la, lb, schema=SCHEMA)
    gold = apply_expert(records, _decided(records))
    golden = sum(1 for g in gold if g.provenance is GoldProvenance.GOLDEN_CONSENSUS)
    expert = sum(1 for g in gold if g.provenance is GoldProvenance.EXPERT_RESOLVED)
    assert golden + expert == len({r.key for r in records})


def test_export_gold_roundtrip_and_sidecar():
    gold = [
        GoldRecord(FieldKey("c1", 0, "name"), "Durand", GoldProvenance.GOLDEN_CONSENSUS),
        GoldRecord(FieldKey("c1", 0, "year"), "1880", GoldProvenance.EXPERT_RESOLVED),
        GoldRecord(FieldKey("c2", 0, "name"), "Petit", GoldProvenance.GOLDEN_CONSENSUS),
    ]
    export = export_gold(gold, SCHEMA)
    parsed = parse_gold_dataset(export.dataset)
    assert parsed == {g.key: g.label for g in gold}
    assert export.sidecar["totals"] == {
        "fields": 3,
        "golden-consensus": 2,
        "expert-resolved": 1,
    }
    assert export.sidecar["columns"]["c1"]["expert-resolved"] == 1


def test_export_gold_empty_project():
    export = export_gold([], SCHEMA)
    assert export.dataset == ""
    assert export.sidecar["totals"]["fields"] == 0


def test_export_gold_counts_match_per_column_sum():
    gold = []
    per_column = {"c1": 7, "c2": 4}
    for column, n in per_column.items():
        for i in range(n):
            gold.append(
                GoldRecord(FieldKey(column, i, "name"), f"v{i}", GoldProvenance.GOLDEN_CONSENSUS)
            )
    export = export_gold(gold, SCHEMA)
    assert export.sidecar["totals"]["fields"] == sum(per_column.values())
    for column, n in per_column.items():
        assert export.sidecar["columns"][column]["fields"] == n
    assert len(export.dataset.splitlines()) == sum(per_column.values())


def test_export_gold_refuses_incomplete():
    gold = [GoldRecord(FieldKey("c1", 0, "name"), "x", GoldProvenance.GOLDEN_CONSENSUS)]
    expected = [FieldKey("c1", 0, "name"), FieldKey("c1", 0, "year")]
    with pytest.raises(IncompleteExportError) as exc_info:
        export_gold(gold, SCHEMA, expected_keys=expected)
    assert exc_info.value.missing_keys == (FieldKey("c1", 0, "year"),)


def test_export_gold_rejects_duplicates():
    rec = GoldRecord(FieldKey("c1", 0, "name"), "x", GoldProvenance.GOLDEN_CONSENSUS)
    with pytest.raises(UsageError):
        export_gold([rec, rec], SCHEMA)


def test_export_gold_layer1_provenance_tallies():
    gold = [GoldRecord(FieldKey("c1", 0, "name"), "x", GoldProvenance.GOLDEN_CONSENSUS)]
    prov = {
        "a": {FieldKey("c1", 0, "name"): Provenance.AUTO},
        "b": {FieldKey("c1", 0, "name"): Provenance.JURY},
    }
    export = export_gold(gold, SCHEMA, layer1_provenance=prov)
    assert export.sidecar["totals"]["layer1-a"]["auto"] == 1
    assert export.sidecar["totals"]["layer1-b"]["jury"] == 1
    assert export.sidecar["columns"]["c1"]["layer1-b"]["jury"] == 1
