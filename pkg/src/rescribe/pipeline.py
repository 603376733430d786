"""Batch pipeline: ingest, OCR, rename pass, matching, annotation build.

Stage order follows the data dependencies: the rename pass is the only
sequential stage (renames are cross-frame state); final matching then
runs against time-indexed symbol views and may fan out over threads.
Reruns are idempotent: the OCR cache short-circuits recognition, auto
annotations regenerate with identical ids, and human records already in
the log are preserved untouched.
"""

from __future__ import annotations

import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .annotate import (
    Annotation,
    ConsolidationConfig,
    MatchSample,
    annotate_feature_use,
    annotate_navigation,
    annotations_from_jsonl,
    assign_ids,
    build_function_intervals,
    detect_renames,
)
from .artifacts import (
    BinaryArtifactMap,
    SymbolTimeline,
    import_artifact_map,
    load_default_stoplist,
    load_original_names,
    parse_stoplist,
)
from .errors import MissingFile
from .inputs import Keystroke, MouseClick, aggregate_keystrokes, load_patterns, resolve_clicks
from .matching import load_filters, match_function, detect_block_rects, match_blocks
from .ocr import OcrConfig, OcrFrame, get_backend, run_ocr
from .session import Comment, SessionBundle, load_bundle
from .util import format_address


@dataclass
class PipelineConfig:
    bundle_path: Path
    artifact_path: Path | None = None
    backend_id: str = "mock"
    ocr: OcrConfig = field(default_factory=OcrConfig)
    threshold: int = 85
    consolidation: ConsolidationConfig = field(default_factory=ConsolidationConfig)
    filters_path: Path | None = None
    patterns_path: Path | None = None
    stoplist_path: Path | None = None
    original_names_path: Path | None = None
    parallelism: int = 1
    detect_blocks: bool = True


@dataclass
class StageReport:
    name: str
    seconds: float
    counts: dict


@dataclass
class PipelineResult:
    bundle: SessionBundle
    amap: BinaryArtifactMap
    timeline: SymbolTimeline
    ocr_frames: dict[int, OcrFrame]
    samples: list[MatchSample]
    annotations: list[Annotation]
    stages: list[StageReport]

    def stage(self, name: str) -> StageReport:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)


class _Timer:
    def __init__(self):
        self.stages: list[StageReport] = []

    def run(self, name: str, fn):
        t0 = time.perf_counter()
        counts = fn() or {}
        self.stages.append(StageReport(name=name, seconds=time.perf_counter() - t0, counts=counts))


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    timer = _Timer()
    state: dict = {}

    def ingest():
        bundle = load_bundle(cfg.bundle_path)
        artifact_path = cfg.artifact_path or (
            bundle.root / "artifacts" / f"{bundle.manifest.binary_id}.json"
        )
        if not Path(artifact_path).exists():
            raise MissingFile(f"artifacts stage: no artifact map at {artifact_path}")
        amap = import_artifact_map(artifact_path)
        stoplist = (
            parse_stoplist(Path(cfg.stoplist_path).read_text("utf-8"))
            if cfg.stoplist_path
            else load_default_stoplist()
        )
        state["bundle"] = bundle
        state["amap"] = amap
        state["timeline"] = SymbolTimeline(amap, stoplist)
        state["original_names"] = (
            load_original_names(cfg.original_names_path) if cfg.original_names_path else None
        )
        return {"frames": len(bundle.frames), "events": len(bundle.events), "functions": len(amap.functions)}

    def ocr_stage():
        bundle: SessionBundle = state["bundle"]
        backend = get_backend(cfg.backend_id)
        indices = [rec.index for rec in bundle.frames]
        if cfg.parallelism > 1:
            # Each thread owns a bundle handle; reconstruction memoization
            # is never shared across threads.
            local_store = threading.local()

            def worker(index: int) -> tuple[int, OcrFrame]:
                if not hasattr(local_store, "bundle"):
                    local_store.bundle = load_bundle(bundle.root)
                return index, run_ocr(local_store.bundle, index, backend, cfg.ocr)

            with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
                frames = dict(pool.map(worker, indices))
        else:
            frames = {i: run_ocr(bundle, i, backend, cfg.ocr) for i in indices}
        state["ocr_frames"] = frames
        return {"frames": len(frames), "tokens": sum(len(f.tokens) for f in frames.values())}

    def rename_stage():
        bundle: SessionBundle = state["bundle"]
        frames = state["ocr_frames"]
        frame_times = [(rec.index, rec.t) for rec in bundle.frames]
        key_events = [e for e in bundle.events if isinstance(e, (Keystroke, MouseClick))]
        words = aggregate_keystrokes(key_events)
        clicks = resolve_clicks(
            [e for e in bundle.events if isinstance(e, MouseClick)], frame_times, frames
        )
        patterns = load_patterns(cfg.patterns_path, tool=bundle.manifest.tool_hint)
        result = detect_renames(
            frame_times,
            frames,
            words,
            clicks,
            state["timeline"],
            patterns,
            bundle.manifest.session_id,
            cfg.threshold,
        )
        state["words"] = words
        state["clicks"] = clicks
        state["rename_pass"] = result
        return {
            "typed_words": len(words),
            "clicks": len(clicks),
            "renames": len(result.annotations),
            "feature_spans": len(result.feature_spans),
        }

    def matching_stage():
        bundle: SessionBundle = state["bundle"]
        frames: dict[int, OcrFrame] = state["ocr_frames"]
        timeline: SymbolTimeline = state["timeline"]
        timeline.prewarm_views()  # views become read-only before the fan-out

        def match_one(rec) -> MatchSample:
            frame = frames.get(rec.index)
            if frame is None:
                return MatchSample(rec.index, rec.t, None)
            m = match_function(frame, timeline.index_at(rec.t), cfg.threshold)
            return MatchSample(rec.index, rec.t, m.entry, m.score, m.via_symbol)

        if cfg.parallelism > 1:
            with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
                samples = list(pool.map(match_one, bundle.frames))
        else:
            samples = [match_one(rec) for rec in bundle.frames]
        state["samples"] = samples

        block_annotations: list[Annotation] = []
        if cfg.detect_blocks:
            filters = load_filters(cfg.filters_path, tool=bundle.manifest.tool_hint)
            for sample in samples:
                if sample.entry is None:
                    continue
                fn = state["amap"].function_at(sample.entry)
                if fn is None:
                    continue
                rects = detect_block_rects(bundle.reconstruct_frame(sample.frame_index), filters)
                if not rects:
                    continue
                for bm in match_blocks(frames[sample.frame_index], rects, fn):
                    if bm.block is None:
                        continue
                    block_annotations.append(
                        Annotation(
                            id="",
                            session_id=bundle.manifest.session_id,
                            kind="BlockView",
                            t_start=sample.t,
                            t_end=None,
                            payload={
                                "entry": format_address(bm.entry),
                                "block": format_address(bm.block),
                                "rect": list(bm.rect.bbox),
                                "distance": bm.distance,
                                "ambiguous": bm.ambiguous,
                            },
                        )
                    )
        state["block_annotations"] = block_annotations
        matched = sum(1 for s in samples if s.entry is not None)
        return {"samples": len(samples), "matched": matched, "block_views": len(block_annotations)}

    def build_stage():
        bundle: SessionBundle = state["bundle"]
        timeline: SymbolTimeline = state["timeline"]
        rename_pass = state["rename_pass"]
        session_id = bundle.manifest.session_id

        intervals = build_function_intervals(
            state["samples"], cfg.consolidation, timeline, session_id, state["original_names"]
        )
        navigation = annotate_navigation(
            state["clicks"],
            intervals,
            state["amap"],
            rename_pass.feature_spans,
            timeline,
            state["ocr_frames"],
            session_id,
        )
        feature_use = annotate_feature_use(rename_pass.feature_spans, state["words"], session_id)
        comments = [
            Annotation(
                id="",
                session_id=session_id,
                kind="Comment",
                t_start=ev.t,
                t_end=None,
                payload={"text": ev.text},
            )
            for ev in bundle.events
            if isinstance(ev, Comment)
        ]
        auto = assign_ids(
            intervals
            + navigation
            + feature_use
            + comments
            + rename_pass.annotations
            + state["block_annotations"]
        )
        for a in auto:
            a.validate()
        state["annotations"] = auto
        return {"annotations": len(auto)}

    def export_stage():
        bundle: SessionBundle = state["bundle"]
        log_path = bundle.root / "annotations.jsonl"
        human: list[Annotation] = []
        if log_path.exists():
            human = [
                a for a in annotations_from_jsonl(log_path.read_text("utf-8"))
                if "human" in a.provenance
            ]
        lines = [a.to_json() + "\n" for a in state["annotations"]] + [
            a.to_json() + "\n" for a in human
        ]
        tmp = log_path.with_suffix(".jsonl.tmp")
        tmp.write_text("".join(lines), "utf-8")
        os.replace(tmp, log_path)

        derived = bundle.root / "derived"
        derived.mkdir(exist_ok=True)
        with open(derived / "matches.jsonl", "w", encoding="utf-8") as fh:
            for s in state["samples"]:
                fh.write(
                    json.dumps(
                        {
                            "frame_index": s.frame_index,
                            "t": s.t,
                            "entry": format_address(s.entry) if s.entry is not None else None,
                            "score": s.score,
                            "via": s.via_symbol,
                        },
                        separators=(",", ":"),
                    )
                    + "\n"
                )
        return {"annotation_log_records": len(lines), "preserved_human": len(human)}

    timer.run("ingest", ingest)
    timer.run("ocr", ocr_stage)
    timer.run("rename_pass", rename_stage)
    timer.run("matching", matching_stage)
    timer.run("build", build_stage)
    timer.run("export", export_stage)

    return PipelineResult(
        bundle=state["bundle"],
        amap=state["amap"],
        timeline=state["timeline"],
        ocr_frames=state["ocr_frames"],
        samples=state["samples"],
        annotations=state["annotations"],
        stages=timer.stages,
    )


def load_matches(bundle_root: Path) -> list[MatchSample]:
    """Read derived/matches.jsonl written by a previous pipeline run."""
    path = Path(bundle_root) / "derived" / "matches.jsonl"
    if not path.exists():
        raise MissingFile(f"{path} (run the annotate pipeline first)")
    samples = []
    for line in path.read_text("utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        entry = int(obj["entry"], 16) if obj["entry"] else None
        samples.append(
            MatchSample(obj["frame_index"], obj["t"], entry, obj.get("score", 0), obj.get("via", ""))
        )
    return samples
