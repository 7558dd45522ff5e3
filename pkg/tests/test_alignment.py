import random

import pytest

from annogate.alignment import (
    AlignedPair,
    FieldKey,
    align_entries,
    alignment_score,
    field_pairs,
    name_similarity,
)
from annogate.errors import UsageError
from annogate.ingest import AnnotationSet, FieldSchema

from oracles import best_alignment_score

SCHEMA = FieldSchema()


def _aset(names, column="col1", model="m"):
    entries = tuple(
        {"name": n, "year": "", "notes": "", "address": "", "hours": ""} for n in names
    )
    return AnnotationSet(column, model, entries)


def test_name_similarity_identity():
    assert name_similarity("Durand", "Durand") == 1.0


def test_name_similarity_one_edit():
    assert name_similarity("Durand", "Durant") == pytest.approx(1 - 1 / 6)


def test_name_similarity_empty_cases():
    assert name_similarity("", "Durand") == 0.0
    assert name_similarity("", "") == 1.0


def test_name_similarity_symmetric_and_bounded():
    rng = random.Random(4)
    for _ in range(200):
        a = "".join(rng.choice("abcd") for _ in range(rng.randrange(0, 8)))
        b = "".join(rng.choice("abcd") for _ in range(rng.randrange(0, 8)))
        s = name_similarity(a, b)
        assert 0.0 <= s <= 1.0
        assert s == name_similarity(b, a)


def test_align_identical_sets():
    names = [f"Nom{i}" for i in range(10)]
    alignment = align_entries(_aset(names), _aset(names))
    assert alignment.matched == 10
    assert alignment.gaps_a == alignment.gaps_b == 0
    assert all(p.similarity == 1.0 for p in alignment.pairs)


def test_align_missing_entry_becomes_gap():
    names = [f"Maison{i}x" for i in range(10)]
    b_names = names[:4] + names[5:]  # entry 5 (index 4) removed on side B
    a, b = _aset(names), _aset(b_names)
    alignment = align_entries(a, b)
    gap_rows = [p for p in alignment.pairs if p.index_b is None]
    assert [p.index_a for p in gap_rows] == [4]
    matched = [(p.index_a, p.index_b) for p in alignment.pairs if p.index_b is not None]
    assert matched == [(i, j) for j, i in enumerate([0, 1, 2, 3, 5, 6, 7, 8, 9])]
    # optimal per brute force
    sim = [[name_similarity(x, y) for y in b_names] for x in names]
    best, _ = best_alignment_score(sim, len(names), len(b_names), 0.4)
    assert alignment_score(alignment) == pytest.approx(best)


def test_align_all_dissimilar_names_all_gapped():
    a = _aset(["aaaa", "bbbb", "cccc"])
    b = _aset(["dddd", "eeee", "ffff"])
    alignment = align_entries(a, b)
    assert alignment.matched == 0
    assert alignment.gaps_a == 3 and alignment.gaps_b == 3
    # brute force agrees the raw optimum is matching (sim 0 beats two gaps),
    # the min_match split is what produces the gaps
    sim = [[0.0] * 3 for _ in range(3)]
    best, _ = best_alignment_score(sim, 3, 3, 0.4)
    assert best == pytest.approx(0.0)


def test_align_column_mismatch_rejected():
    with pytest.raises(UsageError):
        align_entries(_aset(["x"], column="c1"), _aset(["x"], column="c2"))


def _random_names(rng, n):
    return [
        "".join(rng.choice("abcdef") for _ in range(rng.randrange(3, 8))) for _ in range(n)
    ]


def test_align_matches_brute_force_on_small_instances():
    rng = random.Random(7)
    for trial in range(40):
        n, m = rng.randrange(0, 7), rng.randrange(0, 7)
        names_a, names_b = _random_names(rng, n), _random_names(rng, m)
        a, b = _aset(names_a), _aset(names_b)
        alignment = align_entries(a, b, min_match=0.0)  # no split: raw optimum
        sim = [[name_similarity(x, y) for y in names_b] for x in names_a]
        best, _ = best_alignment_score(sim, n, m, 0.4)
        assert alignment_score(alignment) == pytest.approx(best), (names_a, names_b)


def test_align_matches_brute_force_at_eight_entries():
    rng = random.Random(13)
    for _ in range(3):
        names_a, names_b = _random_names(rng, 8), _random_names(rng, 8)
        alignment = align_entries(_aset(names_a), _aset(names_b), min_match=0.0)
        sim = [[name_similarity(x, y) for y in names_b] for x in names_a]
        best, _ = best_alignment_score(sim, 8, 8, 0.4)
        assert alignment_score(alignment) == pytest.approx(best)


def test_align_indices_each_used_exactly_once():
    rng = random.Random(21)
    for _ in range(30):
        names_a = _random_names(rng, rng.randrange(0, 9))
        names_b = _random_names(rng, rng.randrange(0, 9))
        alignment = align_entries(_aset(names_a), _aset(names_b))
        used_a = [p.index_a for p in alignment.pairs if p.index_a is not None]
        used_b = [p.index_b for p in alignment.pairs if p.index_b is not None]
        assert used_a == sorted(used_a) and len(set(used_a)) == len(used_a)
        assert used_b == sorted(used_b) and len(set(used_b)) == len(used_b)
        assert set(used_a) == set(range(len(names_a)))
        assert set(used_b) == set(range(len(names_b)))


def test_align_symmetry_when_tie_free():
    rng = random.Random(42)
    checked = 0
    for _ in range(60):
        names_a = _random_names(rng, rng.randrange(1, 6))
        names_b = _random_names(rng, rng.randrange(1, 6))
        sim = [[name_similarity(x, y) for y in names_b] for x in names_a]
        _, count = best_alignment_score(sim, len(names_a), len(names_b), 0.4)
        if count != 1:
            continue  # symmetry only guaranteed for a unique optimum
        checked += 1
        fwd = align_entries(_aset(names_a), _aset(names_b), min_match=0.0)
        rev = align_entries(_aset(names_b), _aset(names_a), min_match=0.0)
        swapped = tuple(AlignedPair(p.index_b, p.index_a, p.similarity) for p in rev.pairs)
        assert fwd.pairs == swapped
    assert checked >= 10


def test_field_pairs_full_match_counts():
    names = [f"Nom{i}" for i in range(10)]
    a, b = _aset(names), _aset(names)
    alignment = align_entries(a, b)
    pairs = field_pairs(alignment, a, b, SCHEMA)
    assert len(pairs) == 50
    assert all(p.value_a is not None and p.value_b is not None for p in pairs)


def test_field_pairs_gap_marks_absent_side():
    names = [f"Docteur{i}" for i in range(10)]
    a, b = _aset(names), _aset(names[:4] + names[5:])
    alignment = align_entries(a, b)
    pairs = field_pairs(alignment, a, b, SCHEMA)
    assert len(pairs) == 50
    absent_b = [p for p in pairs if p.value_b is None]
    assert len(absent_b) == 5
    assert {p.key.field for p in absent_b} == set(SCHEMA.fields)
    assert all(p.value_a is not None for p in absent_b)


def test_field_pairs_empty_inputs():
    a, b = _aset([]), _aset([])
    alignment = align_entries(a, b)
    assert field_pairs(alignment, a, b, SCHEMA) == []


def test_field_pairs_accounting_identity():
    rng = random.Random(3)
    names_a = _random_names(rng, 6)
    names_b = _random_names(rng, 4)
    a, b = _aset(names_a), _aset(names_b)
    alignment = align_entries(a, b)
    pairs = field_pairs(alignment, a, b, SCHEMA)
    rows = alignment.matched + alignment.gaps_a + alignment.gaps_b
    assert len(alignment.pairs) == rows
    assert len(pairs) == rows * len(SCHEMA)


def test_field_keys_ordered_and_unique():
    names = ["Un", "Deux"]
    a, b = _aset(names), _aset(names)
    pairs = field_pairs(align_entries(a, b), a, b, SCHEMA)
    keys = [p.key for p in pairs]
    assert len(set(keys)) == len(keys)
    assert keys[0] == FieldKey("col1", 0, "name")
    assert [k.field for k in keys[:5]] == list(SCHEMA.fields)
