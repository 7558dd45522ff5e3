"""Parsing of raw model output, corpus manifests, and page sampling.

Model output is the tab-separated, one-entry-per-line format produced by
the extraction prompt. Values are stored raw here; all normalization is
deferred to the consensus stage so pre-normalization text stays
inspectable in the review UI.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping

from .errors import ConfigError, IngestError, InputError

DEFAULT_FIELDS = ("name", "year", "notes", "address", "hours")

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class FieldSchema:
    """Ordered, fixed set of field names extracted per entry."""

    fields: tuple[str, ...] = DEFAULT_FIELDS

    def __post_init__(self):
        if not self.fields:
            raise ConfigError("schema must declare at least one field")
        if len(set(self.fields)) != len(self.fields):
            raise ConfigError(f"schema fields must be unique: {self.fields}")

    def __len__(self) -> int:
        return len(self.fields)

    def index(self, name: str) -> int:
        try:
            return self.fields.index(name)
        except ValueError:
            raise ConfigError(f"unknown schema field: {name!r}") from None


@dataclass(frozen=True)
class ParseWarning:
    line_no: int  # 1-based
    kind: str  # "padded" | "truncated" | "blank-skipped"
    detail: str


@dataclass(frozen=True)
class AnnotationSet:
    """One model's structured output for one document column."""

    column_id: str
    model_id: str
    entries: tuple[dict, ...]
    warnings: tuple[ParseWarning, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)


def parse_model_output(
    raw: str | bytes,
    schema: FieldSchema,
    *,
    column_id: str = "",
    model_id: str = "",
) -> AnnotationSet:
    """Parse tab-separated model output into an AnnotationSet.

    One entry per line. Short rows are right-padded with empty values,
    long rows are truncated to the schema length; both are recorded as
    warnings. Blank lines are skipped (models emit separator lines;
    padding them into ghost entries would only damage alignment
    downstream) and recorded as warnings.
    """
    if len(schema) == 0:  # FieldSchema already refuses, kept for bytes path
        raise ConfigError("schema must declare at least one field")
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IngestError(f"model output is not valid UTF-8: {exc}") from exc

    entries: list[dict] = []
    warnings: list[ParseWarning] = []
    width = len(schema)
    for line_no, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            warnings.append(ParseWarning(line_no, "blank-skipped", "empty line"))
            continue
        values = line.split("\t")
        if len(values) < width:
            warnings.append(
                ParseWarning(
                    line_no,
                    "padded",
                    f"{len(values)} of {width} fields, padded with empties",
                )
            )
            values = values + [""] * (width - len(values))
        elif len(values) > width:
            warnings.append(
                ParseWarning(
                    line_no,
                    "truncated",
                    f"{len(values)} values for {width} fields, extras dropped",
                )
            )
            values = values[:width]
        entries.append(dict(zip(schema.fields, values)))
    return AnnotationSet(
        column_id=column_id,
        model_id=model_id,
        entries=tuple(entries),
        warnings=tuple(warnings),
    )


def annotation_to_text(aset: AnnotationSet, schema: FieldSchema) -> str:
    """Serialize back to the tab-separated wire format.

    Inverse of parse_model_output up to trailing-pad normalization:
    every row is emitted at full schema width.
    """
    lines = [
        "\t".join(entry.get(f, "") for f in schema.fields) for entry in aset.entries
    ]
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class CorpusManifest:
    """Stratified page inventory: ordered (stratum key, page ids) groups."""

    strata: tuple[tuple[str, tuple[str, ...]], ...]

    @property
    def total(self) -> int:
        return sum(len(pages) for _, pages in self.strata)

    @property
    def stratum_sizes(self) -> dict:
        return {key: len(pages) for key, pages in self.strata}


def load_manifest(source: str | Path | IO[str] | Mapping) -> CorpusManifest:
    """Load a corpus manifest (JSON, layout documented in the README).

    Page identifiers must be globally unique; if the document declares a
    "total" it must equal the sum of the stratum sizes.
    """
    if isinstance(source, Mapping):
        doc = source
    else:
        if isinstance(source, (str, Path)):
            try:
                text = Path(source).read_text(encoding="utf-8")
            except OSError as exc:
                raise IngestError(f"cannot read manifest: {exc}") from exc
        else:
            text = source.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise IngestError(f"manifest is not valid JSON: {exc}") from exc

    strata_doc = doc.get("strata")
    if not isinstance(strata_doc, Mapping) or not strata_doc:
        raise IngestError("manifest must map 'strata' to a non-empty object")
    seen: set[str] = set()
    strata: list[tuple[str, tuple[str, ...]]] = []
    for key, pages in strata_doc.items():
        if not isinstance(pages, list):
            raise IngestError(f"stratum {key!r} must list page identifiers")
        for page in pages:
            if page in seen:
                raise IngestError(f"duplicate page identifier: {page!r}")
            seen.add(page)
        strata.append((str(key), tuple(str(p) for p in pages)))
    manifest = CorpusManifest(strata=tuple(strata))
    declared = doc.get("total")
    if declared is not None and declared != manifest.total:
        raise IngestError(
            f"declared total {declared} != sum of strata {manifest.total}"
        )
    return manifest


@dataclass(frozen=True)
class PageSample:
    """Pages selected per stratum by stratified_sample."""

    by_stratum: tuple[tuple[str, tuple[str, ...]], ...]
    target: int
    seed: int

    @property
    def pages(self) -> tuple[str, ...]:
        return tuple(p for _, pages in self.by_stratum for p in pages)

    @property
    def allocations(self) -> dict:
        return {key: len(pages) for key, pages in self.by_stratum}


def stratified_sample(manifest: CorpusManifest, target: int, seed: int) -> PageSample:
    """Sample pages proportionally to stratum size (largest remainder).

    Each stratum receives floor(target * share); the leftover units go to
    the largest fractional remainders, ties broken by a generator seeded
    from (seed, "apportion"). Within a stratum, pages are drawn uniformly
    without replacement from a generator seeded from (seed, stratum key),
    so the result is fully deterministic in (manifest, target, seed).
    """
    total = manifest.total
    if target < 0:
        raise InputError("target must be non-negative")
    if target > total:
        raise InputError(f"target {target} exceeds total pages {total}")

    quotas = {key: target * len(pages) / total for key, pages in manifest.strata}
    base = {key: math.floor(q) for key, q in quotas.items()}
    leftover = target - sum(base.values())

    tie_rng = random.Random(f"{seed}:apportion")
    tiebreak = {key: tie_rng.random() for key, _ in manifest.strata}
    by_remainder = sorted(
        (key for key, _ in manifest.strata),
        key=lambda k: (-(quotas[k] - base[k]), tiebreak[k]),
    )
    alloc = dict(base)
    for key in by_remainder[:leftover]:
        alloc[key] += 1

    selected: list[tuple[str, tuple[str, ...]]] = []
    for key, pages in manifest.strata:
        k = alloc[key]
        assert k <= len(pages), "largest-remainder allocation exceeded stratum"
        rng = random.Random(f"{seed}:{key}")
        selected.append((key, tuple(rng.sample(list(pages), k))))
    sample = PageSample(by_stratum=tuple(selected), target=target, seed=seed)
    assert len(sample.pages) == target
    return sample


def sample_to_json(sample: PageSample) -> dict:
    return {
        "version": 1,
        "seed": sample.seed,
        "target": sample.target,
        "by_stratum": {key: list(pages) for key, pages in sample.by_stratum},
    }


def write_manifest(strata: Mapping[str, Iterable[str]], path: str | Path) -> None:
    """Write a manifest document in the versioned JSON layout."""
    doc = {
        "version": MANIFEST_VERSION,
        "strata": {k: list(v) for k, v in strata.items()},
    }
    doc["total"] = sum(len(v) for v in doc["strata"].values())
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False), encoding="utf-8")
