"""Consensus-gated annotation pipeline.

Two independent models annotate each document column; agreement is
auto-accepted and disagreement goes to a human jury. Two such systems
are then cross-checked against each other, residual conflicts going to
an expert, which drives the final error rate toward the product of the
per-system silent error rates. The package also ships the metric suite
(WER/CER, workload ratios, agreement statistics), the column quality
filter, a Monte-Carlo validator for the error bounds, the extraction
gateway, and the file-backed review service the browser UI talks to.
"""

from .alignment import (
    AlignedPair,
    EntryAlignment,
    FieldKey,
    FieldPair,
    align_entries,
    field_pairs,
    name_similarity,
)
from .consensus import (
    ConsensusRecord,
    GateStatus,
    JuryTask,
    Provenance,
    ReviewDecision,
    SystemOutput,
    TaskKind,
    VerificationOverride,
    apply_decisions,
    gate_field,
    lcs_diff_spans,
    normalize_value,
    run_layer1,
    sample_verification,
)
from .errors import (
    AnnogateError,
    ConfigError,
    IncompleteExportError,
    IngestError,
    InputError,
    MissingDecisionsError,
    NotFoundError,
    StageError,
    UndefinedMetricError,
    UsageError,
)
from .gateway import EndpointConfig, ExtractionJob, JobStatus, RawOutputStore, dispatch, run_pair
from .ingest import (
    AnnotationSet,
    CorpusManifest,
    FieldSchema,
    PageSample,
    ParseWarning,
    load_manifest,
    parse_model_output,
    stratified_sample,
)
from .metrics import (
    AgreementStats,
    EditBreakdown,
    FilterResult,
    FilterThresholds,
    agreement_stats,
    char_error_rate,
    edit_breakdown,
    effort_ratio,
    fields_to_correct,
    filter_columns,
    word_error_rate,
)
from .simulator import (
    CascadeSimResult,
    ErrorModel,
    SweepGrid,
    SystemSimResult,
    cascade_error_bound,
    consensus_error_bound,
    simulate_double_triangle,
    simulate_system,
    sweep,
)
from .validation import (
    GoldExport,
    GoldProvenance,
    GoldRecord,
    MetaRecord,
    MetaStatus,
    apply_expert,
    export_gold,
    meta_compare,
    parse_gold_dataset,
)

__version__ = "0.1.0"
