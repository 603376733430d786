"""Command line driver for the batch pipeline and review service."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .annotate import annotations_from_jsonl, export_scatter, export_timeline, sort_annotations
from .artifacts import import_artifact_map
from .errors import RescribeError
from .evaluate import (
    classify_function_outcome,
    read_groundtruth,
    sample_listing_csv,
    stratified_sample,
    summarize_function_eval,
    write_groundtruth_template,
)
from .matching import FunctionMatch
from .ocr import OcrConfig, get_backend, run_ocr
from .pipeline import PipelineConfig, load_matches, run_pipeline
from .session import load_bundle


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


@click.group()
def main():
    """Session reconstruction and annotation toolkit."""


@main.command()
@click.argument("bundle_dir", type=click.Path(exists=True, file_okay=False))
def ingest(bundle_dir):
    """Validate a bundle and print a summary."""
    try:
        bundle = load_bundle(bundle_dir)
    except RescribeError as exc:
        _fail(exc)
    m = bundle.manifest
    click.echo(f"session     {m.session_id}")
    click.echo(f"subject     {m.subject_pseudonym}")
    click.echo(f"binary      {m.binary_id}")
    click.echo(f"frames      {m.frame_count}")
    click.echo(f"events      {len(bundle.events)}")
    click.echo(f"duration    {(m.end - m.start) / 1000.0:.1f}s")


def _ocr_config(path: str | None) -> OcrConfig:
    if path is None:
        return OcrConfig()
    obj = json.loads(Path(path).read_text("utf-8"))
    return OcrConfig(**obj)


@main.command()
@click.argument("session", type=click.Path(exists=True, file_okay=False))
@click.option("--backend", default="mock", show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="OcrConfig JSON file.")
def ocr(session, backend, config_path):
    """Run OCR over every frame, filling the cache."""
    try:
        bundle = load_bundle(session)
        engine = get_backend(backend)
        cfg = _ocr_config(config_path)
        total = 0
        for rec in bundle.frames:
            total += len(run_ocr(bundle, rec.index, engine, cfg).tokens)
    except RescribeError as exc:
        _fail(exc)
    click.echo(f"ocr: {len(bundle.frames)} frames, {total} tokens")


@main.command()
@click.argument("session", type=click.Path(exists=True, file_okay=False))
@click.option("--backend", default="mock", show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--threshold", default=85, show_default=True)
@click.option("--min-interval", default=5000, show_default=True, help="Minimum kept interval (ms).")
@click.option("--max-gap", default=10000, show_default=True, help="Bridged gap between equal labels (ms).")
@click.option("--artifact", "artifact_path", type=click.Path(exists=True), default=None)
@click.option("--blocks/--no-blocks", default=True, show_default=True)
@click.option("--parallelism", default=1, show_default=True)
def annotate(session, backend, config_path, threshold, min_interval, max_gap, artifact_path, blocks, parallelism):
    """Run the full pipeline and write annotations.jsonl."""
    from .annotate import ConsolidationConfig

    cfg = PipelineConfig(
        bundle_path=Path(session),
        artifact_path=Path(artifact_path) if artifact_path else None,
        backend_id=backend,
        ocr=_ocr_config(config_path),
        threshold=threshold,
        consolidation=ConsolidationConfig(min_interval_ms=min_interval, max_gap_ms=max_gap),
        detect_blocks=blocks,
        parallelism=parallelism,
    )
    try:
        result = run_pipeline(cfg)
    except RescribeError as exc:
        _fail(exc)
    for stage in result.stages:
        counts = " ".join(f"{k}={v}" for k, v in stage.counts.items())
        click.echo(f"{stage.name:<12} {stage.seconds:8.3f}s  {counts}")
    click.echo(f"wrote {len(result.annotations)} annotations to {Path(session) / 'annotations.jsonl'}")


@main.command()
@click.argument("session", type=click.Path(exists=True, file_okay=False))
@click.option("--groundtruth", "groundtruth_path", type=click.Path(exists=True), required=True)
@click.option("--dataset", default="session", show_default=True, help="Dataset name for the report row.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Also write the report as JSON.")
def evaluate(session, groundtruth_path, dataset, out_path):
    """Score cached matches against a ground truth CSV."""
    try:
        samples = {s.frame_index: s for s in load_matches(Path(session))}
        labels = read_groundtruth(groundtruth_path)
        pairs = []
        for label in labels:
            if label.frame_index not in samples:
                raise RescribeError(f"no match sample for frame {label.frame_index}; rerun annotate")
            s = samples[label.frame_index]
            pred = FunctionMatch(s.frame_index, s.entry, s.score, s.via_symbol)
            pairs.append((label, classify_function_outcome(pred, label)))
        report = summarize_function_eval({dataset: pairs})
    except RescribeError as exc:
        _fail(exc)
    click.echo(report.render_table())
    if out_path:
        Path(out_path).write_text(json.dumps(report.to_obj(), indent=2) + "\n", "utf-8")
        click.echo(f"wrote {out_path}")


@main.command()
@click.argument("session", type=click.Path(exists=True, file_okay=False))
@click.option("--timeline", "what", flag_value="timeline", default=True)
@click.option("--scatter", "what", flag_value="scatter")
@click.option("--format", "fmt", type=click.Choice(["jsonl", "csv"]), default="jsonl", show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def export(session, what, fmt, out_path):
    """Export the annotation timeline or the function scatter data."""
    root = Path(session)
    try:
        log_path = root / "annotations.jsonl"
        if not log_path.exists():
            raise RescribeError(f"{log_path} missing; run annotate first")
        annotations = sort_annotations(annotations_from_jsonl(log_path.read_text("utf-8")))
        if what == "timeline":
            text = export_timeline(annotations, fmt)
        else:
            bundle = load_bundle(root)
            amap = import_artifact_map(root / "artifacts" / f"{bundle.manifest.binary_id}.json")
            intervals = [a for a in annotations if a.kind == "FunctionView"]
            text = export_scatter(load_matches(root), intervals, amap)
    except RescribeError as exc:
        _fail(exc)
    if out_path:
        Path(out_path).write_text(text, "utf-8")
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--root", "root_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--n", "per_subject_n", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--exclusions", "exclusions_path", type=click.Path(exists=True), default=None,
              help="CSV of session_id,frame_index pairs excluded from sampling.")
@click.option("--out", "out_path", type=click.Path(), default=None)
def sample(root_dir, per_subject_n, seed, exclusions_path, out_path):
    """Stratified random frame sample across subjects under --root."""
    frames_by_subject: dict[str, list[tuple[str, int]]] = {}
    for child in sorted(Path(root_dir).iterdir()):
        if not (child / "manifest.json").exists():
            continue
        bundle = load_bundle(child)
        subject = bundle.manifest.subject_pseudonym
        frames_by_subject.setdefault(subject, []).extend(
            (bundle.manifest.session_id, rec.index) for rec in bundle.frames
        )
    exclusions = set()
    if exclusions_path:
        for line in Path(exclusions_path).read_text("utf-8").splitlines()[1:]:
            if line.strip():
                sid, idx = line.split(",")[:2]
                exclusions.add((sid.strip(), int(idx)))
    try:
        rows = stratified_sample(frames_by_subject, per_subject_n, seed, frozenset(exclusions))
    except RescribeError as exc:
        _fail(exc)
    text = sample_listing_csv(rows)
    if out_path:
        Path(out_path).write_text(text, "utf-8")
        click.echo(f"wrote {len(rows)} rows to {out_path}")
    else:
        click.echo(text, nl=False)


@main.command("groundtruth-template")
@click.argument("session", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", type=click.Path(), required=True)
def groundtruth_template(session, out_path):
    """Write an empty ground truth CSV listing every frame for labeling."""
    try:
        bundle = load_bundle(session)
    except RescribeError as exc:
        _fail(exc)
    write_groundtruth_template(out_path, [rec.index for rec in bundle.frames])
    click.echo(f"wrote template for {len(bundle.frames)} frames to {out_path}")


@main.command()
@click.option("--root", "root_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--bind", default="127.0.0.1:8077", show_default=True)
def serve(root_dir, bind):
    """Serve sessions, frames, events, and annotations over HTTP."""
    from .service import serve as run_service

    run_service(root_dir, bind)


if __name__ == "__main__":
    main()
