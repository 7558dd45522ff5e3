"""Command-line orchestration of the pipeline over a project directory.

Stage gating lives here, not in the library, so the library operations
stay pure and composable. Exit codes: 0 success, 1 validation error,
2 configuration error, 3 incomplete-stage refusal. Randomized commands
take an explicit --seed (no wall-clock default) so every run is
reproducible.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import alignment as al
from . import consensus as cs
from . import gateway as gw
from . import ingest as ig
from . import metrics as mt
from . import project as pj
from . import simulator as sim
from . import validation as vl
from .errors import AnnogateError, ConfigError, InputError, StageError

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CONFIG = 2
EXIT_STAGE = 3

PROMPT_ASSET = "extraction_prompt_fr_v1.txt"


@dataclass
class CommandOutcome:
    status: int
    summary: str
    report_path: Path | None = None


def _write_report(paths: pj.ProjectPaths, name: str, doc: dict) -> Path:
    paths.reports_dir.mkdir(parents=True, exist_ok=True)
    path = paths.reports_dir / f"{name}.json"
    path.write_text(json.dumps(doc, indent=2, ensure_ascii=False), encoding="utf-8")
    return path


def _columns_of(paths: pj.ProjectPaths) -> list[str]:
    if not paths.columns_dir.exists():
        return []
    return sorted(p.name for p in paths.columns_dir.iterdir() if p.is_dir())


def _kept_columns(paths: pj.ProjectPaths, columns: list[str]) -> list[str]:
    if paths.filter_json.exists():
        doc = json.loads(paths.filter_json.read_text(encoding="utf-8"))
        kept = set(doc.get("kept", []))
        return [c for c in columns if c in kept]
    return columns


def default_prompt() -> str:
    return (
        resources.files("annogate").joinpath(f"assets/{PROMPT_ASSET}").read_text("utf-8")
    )


# --- commands ------------------------------------------------------------

def cmd_init(args) -> CommandOutcome:
    systems = {}
    for spec_item in args.system:
        if "=" not in spec_item:
            raise ConfigError(f"--system expects id=endpoint1,endpoint2: {spec_item!r}")
        sid, endpoints = spec_item.split("=", 1)
        pair = tuple(e.strip() for e in endpoints.split(",") if e.strip())
        if len(pair) != 2:
            raise ConfigError(f"system {sid!r} must pair exactly two endpoints")
        systems[sid.strip()] = pair
    schema = ig.FieldSchema(tuple(f.strip() for f in args.schema.split(",") if f.strip()))
    config = pj.ProjectConfig(
        schema=schema,
        systems=systems,
        gap_penalty=args.gap_penalty,
        min_match=args.min_match,
        name_field=args.name_field,
        verification_per_column=args.verification_per_column,
    )
    if config.name_field not in schema.fields:
        raise ConfigError(f"name field {config.name_field!r} not in schema {schema.fields}")
    paths = pj.init_project(args.root, config)
    report = _write_report(paths, "init", {"config": config.to_json()})
    return CommandOutcome(EXIT_OK, f"initialized project at {paths.root}", report)


def cmd_sample(args) -> CommandOutcome:
    paths = pj.ProjectPaths(args.root)
    pj.load_config(args.root)
    if paths.sample_json.exists() and not args.force:
        return CommandOutcome(EXIT_OK, "sample up to date (use --force to redo)")
    manifest = ig.load_manifest(args.manifest)
    sample = ig.stratified_sample(manifest, args.target, args.seed)
    paths.sample_json.write_text(
        json.dumps(ig.sample_to_json(sample), indent=2, ensure_ascii=False),
        encoding="utf-8",
    )
    report = _write_report(
        paths,
        "sample",
        {
            "target": args.target,
            "seed": args.seed,
            "total_pages": manifest.total,
            "allocations": sample.allocations,
        },
    )
    return CommandOutcome(
        EXIT_OK,
        f"sampled {args.target} of {manifest.total} pages across "
        f"{len(manifest.strata)} strata (seed {args.seed})",
        report,
    )


def cmd_extract(args) -> CommandOutcome:
    paths = pj.ProjectPaths(args.root)
    config = pj.load_config(args.root)
    endpoint_configs = gw.load_endpoint_configs(args.endpoints)
    needed = [e for pair in config.systems.values() for e in pair]
    missing = [e for e in needed if e not in endpoint_configs]
    if missing:
        raise ConfigError(f"endpoints not configured: {missing}")

    if args.prompt:
        prompt_path = Path(args.prompt)
        if not prompt_path.exists():
            raise ConfigError(f"prompt file not found: {prompt_path}")
        prompt = prompt_path.read_text(encoding="utf-8")
    else:
        prompt = default_prompt()

    images_dir = Path(args.images)
    if not images_dir.is_dir():
        raise InputError(f"images directory not found: {images_dir}")
    columns: list[tuple[str, Path | None]] = []
    for path in sorted(images_dir.iterdir()):
        if path.suffix.lower() in (".png", ".jpg", ".jpeg", ".webp"):
            column_id = pj.validate_column_id(path.stem)
            target = paths.column_dir(column_id) / f"image{path.suffix.lower()}"
            target.parent.mkdir(parents=True, exist_ok=True)
            if not target.exists():
                shutil.copyfile(path, target)
            columns.append((column_id, target))
    if not columns:
        raise InputError(f"no column images found under {images_dir}")

    store = gw.RawOutputStore(paths.columns_dir)
    results = gw.extract_columns(
        columns,
        prompt,
        [endpoint_configs[e] for e in needed],
        store=store,
        schema=config.schema,
        force=args.force,
    )
    fetched = cached = failed = 0
    incomplete = []
    for column_id, jobs in sorted(results.items()):
        bad = [e for e, j in jobs.items() if j.status is not gw.JobStatus.SUCCEEDED]
        for job in jobs.values():
            if job.status is gw.JobStatus.SUCCEEDED and job.attempts == 0:
                cached += 1
            elif job.status is gw.JobStatus.SUCCEEDED:
                fetched += 1
            else:
                failed += 1
        if bad:
            incomplete.append(column_id)
    report = _write_report(
        paths,
        "extract",
        {
            "columns": len(columns),
            "fetched": fetched,
            "cached": cached,
            "failed": failed,
            "incomplete_columns": incomplete,
        },
    )
    if incomplete:
        return CommandOutcome(
            EXIT_INPUT,
            f"extraction incomplete for {len(incomplete)} column(s): "
            f"{', '.join(incomplete)} (re-run to retry failed sides)",
            report,
        )
    return CommandOutcome(
        EXIT_OK,
        f"extracted {len(columns)} columns ({fetched} fetched, {cached} cached)",
        report,
    )


def _parse_column_sets(paths, config, system_id, column):
    e1, e2 = config.systems[system_id]
    sets = []
    for endpoint in (e1, e2):
        raw = paths.raw_output(column, endpoint)
        sets.append(
            ig.parse_model_output(
                raw.read_bytes(), config.schema, column_id=column, model_id=endpoint
            )
        )
    return sets


def cmd_layer1(args) -> CommandOutcome:
    paths = pj.ProjectPaths(args.root)
    config = pj.load_config(args.root)
    systems = sorted(config.systems) if args.system == "all" else [args.system]
    for sid in systems:
        if sid not in config.systems:
            raise ConfigError(f"unknown system {sid!r}; configured: {sorted(config.systems)}")
    columns = _columns_of(paths)
    if not columns:
        raise StageError("no columns ingested; run extract (or place raw outputs) first")

    not_ingested = []
    for column in columns:
        for sid in systems:
            for endpoint in config.systems[sid]:
                if not paths.raw_output(column, endpoint).exists():
                    not_ingested.append(f"{column}:{endpoint}")
    if not_ingested:
        raise StageError(
            "missing stage 'ingested' for: " + ", ".join(sorted(set(not_ingested))[:20])
        )

    already = all(
        paths.layer1_state(sid, column).exists()
        for sid in systems
        for column in columns
    )
    if already and not args.force:
        return CommandOutcome(EXIT_OK, "layer1 up to date (use --force to regate)")

    auto_total = queued_total = sampled_total = 0
    warnings_total = 0
    per_system: dict[str, dict] = {}
    for sid in systems:
        auto = queued = sampled = 0
        for column in columns:
            set_a, set_b = _parse_column_sets(paths, config, sid, column)
            warnings_total += len(set_a.warnings) + len(set_b.warnings)
            entry_alignment = al.align_entries(
                set_a,
                set_b,
                config.gap_penalty,
                config.min_match,
                name_field=config.name_field,
            )
            pairs = al.field_pairs(entry_alignment, set_a, set_b, config.schema)
            image = paths.column_image(column)
            image_ref = f"columns/{column}/{image.name}" if image else None
            records, queue = cs.run_layer1(pairs, system_id=sid, image_ref=image_ref)
            verification = cs.sample_verification(
                records,
                config.verification_per_column,
                args.seed,
                system_id=sid,
                image_ref=image_ref,
            )
            pj.save_layer1_state(paths, sid, column, records, queue + verification)
            auto += sum(1 for r in records if r.status is cs.GateStatus.CONSENSUS)
            queued += len(queue)
            sampled += len(verification)
        per_system[sid] = {"auto_accepted": auto, "queued": queued, "verification": sampled}
        auto_total += auto
        queued_total += queued
        sampled_total += sampled

    report = _write_report(
        paths,
        f"layer1_{'_'.join(systems)}",
        {
            "systems": per_system,
            "columns": len(columns),
            "seed": args.seed,
            "parse_warnings": warnings_total,
        },
    )
    return CommandOutcome(
        EXIT_OK,
        f"{auto_total} auto-accepted, {queued_total} queued "
        f"({sampled_total} verification samples; systems: {', '.join(systems)})",
        report,
    )


def cmd_serve(args) -> CommandOutcome:
    from . import service as sv

    pj.load_config(args.root)
    sv.serve_forever(args.root, args.host, args.port, ui_dir=args.ui)
    return CommandOutcome(EXIT_OK, "service stopped")


def cmd_layer2(args) -> CommandOutcome:
    paths = pj.ProjectPaths(args.root)
    config = pj.load_config(args.root)
    if len(config.systems) != 2:
        raise ConfigError("layer2 requires exactly two configured systems")
    state = pj.ProjectState.load(args.root)
    columns = _kept_columns(paths, state.columns)
    if not columns:
        raise StageError("no columns to validate; run layer1 first")

    missing = [
        f"{sid}:{column}"
        for column in columns
        for sid in config.systems
        if not paths.layer1_state(sid, column).exists()
    ]
    if missing:
        raise StageError("missing stage 'layer1-gated' for: " + ", ".join(missing[:20]))

    unresolved = {
        v.queue_id: v.pending
        for v in state.queue_views()
        if v.queue_id.startswith("jury-") and v.pending > 0
    }
    if unresolved:
        detail = ", ".join(f"{qid}: {n} pending" for qid, n in sorted(unresolved.items()))
        raise StageError(f"layer1 not resolved; unresolved queues: {detail}")

    already = all(paths.layer2_state(column).exists() for column in columns)
    if already and not args.force:
        return CommandOutcome(EXIT_OK, "layer2 up to date (use --force to regate)")

    sys_a, sys_b = sorted(config.systems)
    golden_total = conflict_total = 0
    for column in columns:
        outputs = {}
        for sid in (sys_a, sys_b):
            records, tasks = pj.load_layer1_state(paths, sid, column)
            decisions = state.decisions_for([t.task_id for t in tasks])
            output = cs.apply_decisions(records, decisions, system_id=sid)
            pj.save_output_state(paths, column, output)
            outputs[sid] = output
        meta_records, conflicts = vl.meta_compare(
            outputs[sys_a],
            outputs[sys_b],
            schema=config.schema,
            name_field=config.name_field,
            gap_penalty=config.gap_penalty,
            min_match=config.min_match,
        )
        image = paths.column_image(column)
        image_ref = f"columns/{column}/{image.name}" if image else None
        conflicts = [cs.with_image_ref(t, image_ref) for t in conflicts]
        pj.save_layer2_state(paths, column, meta_records, conflicts)
        golden_total += sum(1 for r in meta_records if r.status is vl.MetaStatus.GOLDEN)
        conflict_total += len(conflicts)

    report = _write_report(
        paths,
        "layer2",
        {"columns": len(columns), "golden": golden_total, "conflicts": conflict_total},
    )
    return CommandOutcome(
        EXIT_OK,
        f"{golden_total} golden, {conflict_total} conflicts escalated to expert",
        report,
    )


def cmd_export(args) -> CommandOutcome:
    paths = pj.ProjectPaths(args.root)
    config = pj.load_config(args.root)
    state = pj.ProjectState.load(args.root)
    columns = _kept_columns(paths, state.columns)
    missing = [c for c in columns if not paths.layer2_state(c).exists()]
    if missing:
        raise StageError("missing stage 'layer2-gated' for: " + ", ".join(missing[:20]))

    pending = {v.queue_id: v.pending for v in state.queue_views() if v.pending > 0}
    if pending:
        detail = ", ".join(f"{qid}: {n} pending" for qid, n in sorted(pending.items()))
        raise StageError(f"export refused; queues not empty: {detail}")

    if paths.gold_tsv.exists() and not args.force:
        return CommandOutcome(EXIT_OK, "gold export up to date (use --force to redo)")

    gold: list[vl.GoldRecord] = []
    expected: list[al.FieldKey] = []
    layer1_prov: dict[str, dict] = {sid: {} for sid in config.systems}
    for column in columns:
        records, tasks = pj.load_layer2_state(paths, column)
        decisions = state.decisions_for([t.task_id for t in tasks])
        gold.extend(vl.apply_expert(records, decisions))
        expected.extend(r.key for r in records)
        for sid in config.systems:
            output = pj.load_output_state(paths, sid, column)
            for key, (_label, prov) in output.labels.items():
                layer1_prov[sid][key] = prov

    export = vl.export_gold(
        gold, config.schema, expected_keys=expected, layer1_provenance=layer1_prov
    )
    paths.gold_dir.mkdir(parents=True, exist_ok=True)
    paths.gold_tsv.write_bytes(export.dataset.encode("utf-8"))
    paths.gold_sidecar.write_text(vl.sidecar_to_json(export), encoding="utf-8")
    report = _write_report(
        paths,
        "export",
        {
            "records": export.sidecar["totals"]["fields"],
            "golden_consensus": export.sidecar["totals"]["golden-consensus"],
            "expert_resolved": export.sidecar["totals"]["expert-resolved"],
            "dataset": str(paths.gold_tsv),
            "sidecar": str(paths.gold_sidecar),
        },
    )
    return CommandOutcome(
        EXIT_OK,
        f"exported {export.sidecar['totals']['fields']} gold records "
        f"({export.sidecar['totals']['golden-consensus']} golden consensus, "
        f"{export.sidecar['totals']['expert-resolved']} expert resolved)",
        report,
    )


def _aggregate_error_rates(pairs: list[tuple[str, str]]):
    """Corpus-level WER/CER: edit counts summed over (hyp, ref) texts."""
    wer_edits = wer_len = cer_edits = cer_len = 0
    for hyp, ref in pairs:
        _, wb = mt.word_error_rate(hyp, ref)
        _, cb = mt.char_error_rate(hyp, ref)
        wer_edits += wb.total
        wer_len += wb.reference_length
        cer_edits += cb.total
        cer_len += cb.reference_length
    wer = wer_edits / wer_len if wer_len else None
    cer = cer_edits / cer_len if cer_len else None
    return wer, cer


def cmd_metrics(args) -> CommandOutcome:
    paths = pj.ProjectPaths(args.root)
    config = pj.load_config(args.root)
    state = pj.ProjectState.load(args.root)
    columns = _kept_columns(paths, state.columns)
    if not columns:
        raise StageError("no columns; run the pipeline first")

    rows: list[dict] = []
    doc: dict = {"columns": len(columns), "rows": rows}

    reference = None
    if args.reference:
        reference = vl.parse_gold_dataset(Path(args.reference).read_text(encoding="utf-8"))
        ref_columns = {k.column for k in reference}
        uncovered = [c for c in columns if c not in ref_columns]
        if uncovered:
            raise InputError(f"reference lacks columns: {', '.join(uncovered[:10])}")

    def ref_text(column: str) -> str:
        assert reference is not None
        per = {k: v for k, v in reference.items() if k.column == column}
        return mt.labels_text(per, config.schema)

    for sid in sorted(config.systems):
        div_tasks = state.queues.get(pj.jury_queue_id(sid), [])
        total_fields = 0
        outputs = {}
        for column in columns:
            if paths.layer1_state(sid, column).exists():
                records, _ = pj.load_layer1_state(paths, sid, column)
                total_fields += len(records)
            if paths.output_state(sid, column).exists():
                outputs[column] = pj.load_output_state(paths, sid, column)
        corrected = len(div_tasks)
        effort = mt.effort_ratio(corrected, total_fields) if total_fields else None

        after = None
        if reference and len(outputs) == len(columns):
            after = _aggregate_error_rates(
                [
                    (
                        mt.labels_text({k: l for k, (l, _p) in outputs[c].labels.items()}, config.schema),
                        ref_text(c),
                    )
                    for c in columns
                ]
            )
        for endpoint in config.systems[sid]:
            before = None
            if reference:
                texts = []
                for column in columns:
                    raw = paths.raw_output(column, endpoint)
                    if not raw.exists():
                        raise StageError(f"missing raw output {column}:{endpoint}")
                    aset = ig.parse_model_output(
                        raw.read_bytes(), config.schema, column_id=column, model_id=endpoint
                    )
                    texts.append((mt.annotation_text(aset, config.schema), ref_text(column)))
                before = _aggregate_error_rates(texts)
            rows.append(
                {
                    "layer": 1,
                    "reviewer": f"jury-{sid}",
                    "input": endpoint,
                    "wer_before": before[0] if before else None,
                    "cer_before": before[1] if before else None,
                    "wer_after": after[0] if after else None,
                    "cer_after": after[1] if after else None,
                    "fields_to_correct": corrected,
                    "total_fields": total_fields,
                    "effort_ratio": effort,
                }
            )

    expert_tasks = state.queues.get(pj.QUEUE_EXPERT, [])
    meta_total = 0
    have_layer2 = all(paths.layer2_state(c).exists() for c in columns)
    if have_layer2:
        for column in columns:
            records, _ = pj.load_layer2_state(paths, column)
            meta_total += len(records)
        gold_after = None
        if reference and paths.gold_tsv.exists():
            gold_labels = vl.parse_gold_dataset(paths.gold_tsv.read_text(encoding="utf-8"))
            gold_after = _aggregate_error_rates(
                [
                    (
                        mt.labels_text(
                            {k: v for k, v in gold_labels.items() if k.column == c},
                            config.schema,
                        ),
                        ref_text(c),
                    )
                    for c in columns
                ]
            )
        for sid in sorted(config.systems):
            before = None
            if reference:
                outs = [pj.load_output_state(paths, sid, c) for c in columns]
                before = _aggregate_error_rates(
                    [
                        (
                            mt.labels_text({k: l for k, (l, _p) in o.labels.items()}, config.schema),
                            ref_text(c),
                        )
                        for c, o in zip(columns, outs)
                    ]
                )
            rows.append(
                {
                    "layer": 2,
                    "reviewer": "expert",
                    "input": f"system-{sid}",
                    "wer_before": before[0] if before else None,
                    "cer_before": before[1] if before else None,
                    "wer_after": gold_after[0] if reference and gold_after else None,
                    "cer_after": gold_after[1] if reference and gold_after else None,
                    "fields_to_correct": len(expert_tasks),
                    "total_fields": meta_total,
                    "effort_ratio": mt.effort_ratio(len(expert_tasks), meta_total)
                    if meta_total
                    else None,
                }
            )

    report = _write_report(paths, "metrics", doc)
    print(render_metrics_table(rows))
    return CommandOutcome(EXIT_OK, f"metrics over {len(columns)} columns", report)


def render_metrics_table(rows: list[dict]) -> str:
    headers = (
        "reviewer", "input", "wer_before", "wer_after",
        "cer_before", "cer_after", "fields_to_correct", "effort_ratio",
    )

    def cell(row, h):
        v = row.get(h)
        if v is None:
            return "-"
        if h == "effort_ratio":
            return f"{v:.1f}%"
        if isinstance(v, float):
            return f"{v:.3f}"
        return str(v)

    widths = {
        h: max(len(h), *(len(cell(r, h)) for r in rows)) if rows else len(h)
        for h in headers
    }
    lines = ["  ".join(h.ljust(widths[h]) for h in headers)]
    lines.append("  ".join("-" * widths[h] for h in headers))
    for r in rows:
        lines.append("  ".join(cell(r, h).ljust(widths[h]) for h in headers))
    return "\n".join(lines)


def cmd_filter(args) -> CommandOutcome:
    paths = pj.ProjectPaths(args.root)
    config = pj.load_config(args.root)
    columns = _columns_of(paths)
    if not columns:
        raise StageError("no columns; run layer1 first")
    missing = [
        f"{sid}:{column}"
        for column in columns
        for sid in config.systems
        if not paths.layer1_state(sid, column).exists()
    ]
    if missing:
        raise StageError("missing stage 'layer1-gated' for: " + ", ".join(missing[:20]))
    if paths.filter_json.exists() and not args.force:
        return CommandOutcome(EXIT_OK, "filter up to date (use --force to redo)")

    thresholds = mt.FilterThresholds(
        max_fields=args.max_fields,
        min_field_rate=args.min_field_rate,
        min_char_rate=args.min_char_rate,
    )
    stats_by_column: dict[str, dict] = {}
    stats_doc: dict[str, dict] = {}
    for column in columns:
        per_pair = {}
        per_pair_doc = {}
        for sid in sorted(config.systems):
            records, _ = pj.load_layer1_state(paths, sid, column)
            pairs = [al.FieldPair(r.key, r.value_a, r.value_b) for r in records]
            stats = mt.agreement_stats(pairs)
            per_pair[sid] = stats
            per_pair_doc[sid] = {
                "matched": stats.matched_fields,
                "total": stats.total_fields,
                "field_rate": stats.field_rate,
                "char_rate": stats.char_rate,
                "distinct_fields": stats.distinct_field_count,
            }
        stats_by_column[column] = per_pair
        stats_doc[column] = per_pair_doc

    result = mt.filter_columns(stats_by_column, thresholds)
    paths.filter_json.write_text(
        json.dumps(
            {
                "version": 1,
                "thresholds": {
                    "max_fields": thresholds.max_fields,
                    "min_field_rate": thresholds.min_field_rate,
                    "min_char_rate": thresholds.min_char_rate,
                },
                "kept": list(result.kept),
                "dropped": {c: list(r) for c, r in result.dropped.items()},
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    report = _write_report(
        paths,
        "filter",
        {
            "kept": list(result.kept),
            "dropped": {c: list(r) for c, r in result.dropped.items()},
            "stats": stats_doc,
        },
    )
    dropped_note = "".join(
        f"\n  dropped {c}: {', '.join(reasons)}" for c, reasons in sorted(result.dropped.items())
    )
    return CommandOutcome(
        EXIT_OK,
        f"kept {len(result.kept)} of {len(columns)} columns{dropped_note}",
        report,
    )


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise InputError(f"expected comma-separated floats: {text!r}") from exc


def cmd_simulate(args) -> CommandOutcome:
    grid = sim.SweepGrid(
        eps1=_float_list(args.eps1),
        eps2=_float_list(args.eps2),
        kappa=_float_list(args.kappa),
        eta=_float_list(args.eta),
        cross_kappa=args.cross_kappa,
    )
    rows = sim.sweep(grid, args.n, args.seed)
    table = sim.render_sweep_table(rows)
    print(table)
    report_path = None
    if args.root:
        paths = pj.ProjectPaths(args.root)
        report_path = _write_report(
            paths,
            "simulate",
            {
                "n_fields": args.n,
                "seed": args.seed,
                "rows": [
                    {
                        "eps1": r.eps1,
                        "eps2": r.eps2,
                        "kappa": r.kappa,
                        "eta": r.eta,
                        "silent_rate": r.silent_rate,
                        "bound": r.bound,
                        "jury_load": r.jury_load,
                        "final_rate": r.final_rate,
                        "cascade_bound": r.cascade_bound,
                    }
                    for r in rows
                ],
            },
        )
    worst = max(rows, key=lambda r: r.silent_rate)
    return CommandOutcome(
        EXIT_OK,
        f"{len(rows)} cell(s); max silent rate {worst.silent_rate:.6f} "
        f"(bound {worst.bound:.6f})",
        report_path,
    )


# --- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="annogate",
        description="Consensus-gated annotation pipeline over a project directory.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a project directory")
    p.add_argument("--root", required=True)
    p.add_argument("--schema", default=",".join(ig.DEFAULT_FIELDS))
    p.add_argument(
        "--system",
        action="append",
        required=True,
        help="system spec id=endpoint1,endpoint2 (repeat per system)",
    )
    p.add_argument("--gap-penalty", type=float, default=al.DEFAULT_GAP_PENALTY)
    p.add_argument("--min-match", type=float, default=al.DEFAULT_MIN_MATCH)
    p.add_argument("--name-field", default="name")
    p.add_argument("--verification-per-column", type=int, default=1)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("sample", help="stratified page sampling from a manifest")
    p.add_argument("--root", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("extract", help="dispatch prompt+images to the endpoints")
    p.add_argument("--root", required=True)
    p.add_argument("--endpoints", required=True, help="endpoint config JSON")
    p.add_argument("--images", required=True, help="directory of <column>.<ext> images")
    p.add_argument("--prompt", help="prompt file (default: packaged prompt)")
    p.add_argument("--force", action="store_true", help="re-fetch cached outputs")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("layer1", help="run the consensus gate and build queues")
    p.add_argument("--root", required=True)
    p.add_argument("--system", default="all", help="system id or 'all'")
    p.add_argument("--seed", type=int, required=True, help="verification sampling seed")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_layer1)

    p = sub.add_parser("serve", help="run the review service")
    p.add_argument("--root", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--ui", help="directory with the built review UI")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("layer2", help="apply jury decisions and cross-compare systems")
    p.add_argument("--root", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_layer2)

    p = sub.add_parser("metrics", help="error-rate and workload report")
    p.add_argument("--root", required=True)
    p.add_argument("--reference", help="reference transcript (gold TSV format)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("filter", help="drop low-agreement columns")
    p.add_argument("--root", required=True)
    p.add_argument("--max-fields", type=int, default=70)
    p.add_argument("--min-field-rate", type=float, default=0.7)
    p.add_argument("--min-char-rate", type=float, default=0.6)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("simulate", help="Monte-Carlo error-bound validation")
    p.add_argument("--eps1", required=True, help="float or comma list")
    p.add_argument("--eps2", required=True, help="float or comma list")
    p.add_argument("--kappa", default="1.0", help="float or comma list")
    p.add_argument("--eta", default="0.0", help="float or comma list")
    p.add_argument("--cross-kappa", type=float, default=None)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--root", help="project root (report destination)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export", help="export the gold dataset + provenance")
    p.add_argument("--root", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        outcome: CommandOutcome = args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"stage refusal: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except AnnogateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(outcome.summary)
    if outcome.report_path is not None:
        print(f"report: {outcome.report_path}")
    return outcome.status


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
