"""Annotation stream construction from per-frame matches and input events.

Rename detection is the only stateful step and runs as one sequential
pass over the frames: each frame is matched under the symbol index view
for its timestamp, feature windows are consolidated into visibility
spans, and a rename-class span overlapping a typed word appends a rename
to the symbol timeline so later frames resolve under the new name.
Everything downstream (interval building, navigation, feature use,
exports) is pure over its time-sorted inputs.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field, replace

from .artifacts import BinaryArtifactMap, RenameEvent, SymbolTimeline
from .inputs import (
    FEATURE_SCOPES,
    RENAME_FEATURES,
    SEARCH_FEATURES,
    ClickedToken,
    FeatureSpan,
    PatternEntry,
    TypedWord,
    detect_feature_window,
)
from .matching import FunctionMatch, match_function
from .ocr import OcrFrame
from .session import Timestamp
from .util import format_address

TOOL_VERSION = "rescribe/0.1.0"

KINDS = ("TaskMark", "FunctionView", "BlockView", "Navigation", "Rename", "FeatureUse", "Comment")
_KIND_ORDER = {k: i for i, k in enumerate(KINDS)}

PAYLOAD_KEYS = {
    "TaskMark": {"label"},
    "FunctionView": {"entry", "display_name"},
    "BlockView": {"entry", "block", "rect", "distance", "ambiguous"},
    "Navigation": {"mechanism", "from", "to"},
    "Rename": {"scope", "old", "new"},
    "FeatureUse": {"feature", "text"},
    "Comment": {"text"},
}

STATUSES = ("suggested", "confirmed", "rejected", "manual")

DOUBLE_CLICK_CONFIRM_MS = 5000
XREF_CONFIRM_MS = 15000
SEARCH_CONFIRM_MS = 15000
RENAME_CLICK_LOOKBACK_MS = 60000


@dataclass(frozen=True)
class Annotation:
    id: str
    session_id: str
    kind: str
    t_start: Timestamp
    t_end: Timestamp | None
    payload: dict
    status: str = "suggested"
    provenance: dict = field(default_factory=lambda: {"auto": TOOL_VERSION})
    predecessor: str | None = None

    def validate(self) -> None:
        from .errors import SchemaViolation

        if self.kind not in KINDS:
            raise SchemaViolation(f"annotation kind {self.kind!r} not one of {KINDS}")
        if self.status not in STATUSES:
            raise SchemaViolation(f"annotation status {self.status!r} not one of {STATUSES}")
        if self.t_end is not None and self.t_end < self.t_start:
            raise SchemaViolation("annotation t_end must be >= t_start")
        expected = PAYLOAD_KEYS[self.kind]
        if set(self.payload) != expected:
            raise SchemaViolation(
                f"{self.kind} payload keys {sorted(self.payload)} != {sorted(expected)}"
            )
        if not ({"auto", "human"} & set(self.provenance)):
            raise SchemaViolation("provenance must carry 'auto' or 'human'")

    def to_json(self) -> str:
        obj = {
            "id": self.id,
            "session_id": self.session_id,
            "kind": self.kind,
            "t_start": self.t_start,
        }
        if self.t_end is not None:
            obj["t_end"] = self.t_end
        obj["payload"] = self.payload
        obj["status"] = self.status
        obj["provenance"] = self.provenance
        if self.predecessor is not None:
            obj["predecessor"] = self.predecessor
        return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_obj(cls, obj: dict) -> "Annotation":
        ann = cls(
            id=obj["id"],
            session_id=obj["session_id"],
            kind=obj["kind"],
            t_start=obj["t_start"],
            t_end=obj.get("t_end"),
            payload=obj["payload"],
            status=obj.get("status", "suggested"),
            provenance=obj.get("provenance", {"auto": TOOL_VERSION}),
            predecessor=obj.get("predecessor"),
        )
        ann.validate()
        return ann


def sort_annotations(annotations: list[Annotation]) -> list[Annotation]:
    return sorted(
        annotations,
        key=lambda a: (a.t_start, _KIND_ORDER.get(a.kind, 99), a.t_end or a.t_start, a.id),
    )


def assign_ids(annotations: list[Annotation], prefix: str = "a") -> list[Annotation]:
    """Deterministic sequential ids in sorted order."""
    out = []
    for n, ann in enumerate(sort_annotations(annotations), start=1):
        out.append(replace(ann, id=f"{prefix}-{n:06d}"))
    return out


@dataclass(frozen=True)
class ConsolidationConfig:
    min_interval_ms: int = 5000
    max_gap_ms: int = 10000

    def __post_init__(self):
        if self.min_interval_ms < 0 or self.max_gap_ms < 0:
            raise ValueError("consolidation thresholds must be non-negative")


@dataclass(frozen=True)
class MatchSample:
    """One per-frame function match with its capture time."""

    frame_index: int
    t: Timestamp
    entry: int | None
    score: int = 0
    via_symbol: str = ""


# ---------------------------------------------------------------------------
# Rename detection (sequential pass)
# ---------------------------------------------------------------------------


@dataclass
class RenamePassResult:
    annotations: list[Annotation]
    samples: list[MatchSample]
    feature_spans: list[FeatureSpan]


def _last_word_overlapping(words: list[TypedWord], t0: Timestamp, t1: Timestamp) -> TypedWord | None:
    hit = None
    for w in words:
        if w.t_start <= t1 and w.t_end >= t0:
            hit = w
    return hit


def _resolve_rename_target(
    scope: str,
    span: FeatureSpan,
    clicks: list[ClickedToken],
    timeline: SymbolTimeline,
    current_entry: int | None,
) -> tuple[str | None, int | None]:
    """(old display name, artifact key) for a rename, or (None, None)."""
    index = timeline.index_at(span.t_end)
    recent = [
        c for c in clicks if span.t_end - RENAME_CLICK_LOOKBACK_MS <= c.t <= span.t_end
    ]
    for click in reversed(recent):
        text = click.token.text
        if scope == "function":
            entry = index.resolve_function(text)
            if entry is not None:
                return index.display_name(entry), entry
        elif scope == "global":
            addr = index.resolve_global(text)
            if addr is not None:
                return index.global_display_names.get(addr, text), addr
        else:  # local: any clicked token names the variable
            return text, current_entry
    if scope == "function" and current_entry is not None:
        return index.display_name(current_entry), current_entry
    return None, None


def detect_renames(
    frame_times: list[tuple[int, Timestamp]],
    ocr_frames: dict[int, OcrFrame],
    typed_words: list[TypedWord],
    clicks: list[ClickedToken],
    timeline: SymbolTimeline,
    patterns: list[PatternEntry],
    session_id: str,
    threshold: int = 85,
) -> RenamePassResult:
    """Single sequential pass: match frames, track feature spans, emit renames.

    Appends a RenameEvent to `timeline` for every rename-class feature span
    that overlaps a typed word, so subsequent frames match under the new
    name. When no old name resolves the annotation is still emitted
    (status suggested) with an empty old name and no timeline event.
    """
    annotations: list[Annotation] = []
    samples: list[MatchSample] = []
    current_entry: int | None = None
    active: FeatureSpan | None = None
    spans: list[FeatureSpan] = []

    def close_span(span: FeatureSpan) -> None:
        spans.append(span)
        if span.feature not in RENAME_FEATURES:
            return
        word = _last_word_overlapping(typed_words, span.t_start, span.t_end)
        if word is None:
            return
        scope = FEATURE_SCOPES[span.feature]
        old, key = _resolve_rename_target(scope, span, clicks, timeline, current_entry)
        annotations.append(
            Annotation(
                id="",
                session_id=session_id,
                kind="Rename",
                t_start=span.t_start,
                t_end=span.t_end,
                payload={"scope": scope, "old": old or "", "new": word.text},
                status="suggested",
            )
        )
        if old:
            timeline.append_rename(
                RenameEvent(t=span.t_end, scope=scope, old_name=old, new_name=word.text, entry=key)
            )

    for index, t in frame_times:
        frame = ocr_frames.get(index)
        win = detect_feature_window(frame, patterns) if frame is not None else None
        if active is not None and (win is None or win.feature != active.feature):
            close_span(active)
            active = None
        if win is not None:
            if active is None:
                active = FeatureSpan(win.feature, t, t, index, index)
            else:
                active = FeatureSpan(active.feature, active.t_start, t, active.first_frame, index)

        view = timeline.index_at(t)
        if frame is not None:
            m = match_function(frame, view, threshold)
        else:
            m = FunctionMatch(index, None)
        samples.append(MatchSample(index, t, m.entry, m.score, m.via_symbol))
        if m.entry is not None:
            current_entry = m.entry
    if active is not None:
        close_span(active)

    return RenamePassResult(annotations=annotations, samples=samples, feature_spans=spans)


# ---------------------------------------------------------------------------
# Interval consolidation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionInterval:
    entry: int
    t_start: Timestamp
    t_end: Timestamp


def consolidate_intervals(
    samples: list[MatchSample], cfg: ConsolidationConfig
) -> list[FunctionInterval]:
    """Maximal equal-label runs, gap-bridged, short intervals dropped.

    Gaps (NoFunction samples or missing frames) of at most `max_gap_ms`
    between runs of the same function are treated as covered by that
    function. A run shorter than `min_interval_ms` is dropped unless the
    minimum is zero. Runs of NoFunction never produce intervals.
    """
    runs: list[FunctionInterval] = []
    prev_entry: int | None = None  # entry of the immediately preceding sample
    for s in samples:
        if s.entry is None:
            prev_entry = None
            continue
        if runs and prev_entry == s.entry:
            runs[-1] = FunctionInterval(s.entry, runs[-1].t_start, s.t)
        else:
            runs.append(FunctionInterval(s.entry, s.t, s.t))
        prev_entry = s.entry
    merged: list[FunctionInterval] = []
    for run in runs:
        if (
            merged
            and merged[-1].entry == run.entry
            and run.t_start - merged[-1].t_end <= cfg.max_gap_ms
        ):
            merged[-1] = FunctionInterval(run.entry, merged[-1].t_start, run.t_end)
        else:
            merged.append(run)
    if cfg.min_interval_ms == 0:
        return merged
    return [iv for iv in merged if iv.t_end - iv.t_start >= cfg.min_interval_ms]


def build_function_intervals(
    samples: list[MatchSample],
    cfg: ConsolidationConfig,
    timeline: SymbolTimeline,
    session_id: str,
    display_names: dict[int, str] | None = None,
) -> list[Annotation]:
    """FunctionView annotations from match samples.

    The displayed name is the artifact's name at the interval end (after
    any renames inside the interval).
    """
    out = []
    for iv in consolidate_intervals(samples, cfg):
        if display_names and iv.entry in display_names:
            name = display_names[iv.entry]
        else:
            name = timeline.index_at(iv.t_end).display_name(iv.entry)
        out.append(
            Annotation(
                id="",
                session_id=session_id,
                kind="FunctionView",
                t_start=iv.t_start,
                t_end=iv.t_end,
                payload={"entry": format_address(iv.entry), "display_name": name},
            )
        )
    return out


# ---------------------------------------------------------------------------
# Navigation
# ---------------------------------------------------------------------------

_XREF_LINE = re.compile(r"references\s+to\b")
_ADDR_TOKEN = re.compile(r"^(0x)?[0-9a-fA-F]{4,16}$")


def _click_line_text(click: ClickedToken, ocr_frames: dict[int, OcrFrame]) -> str:
    frame = ocr_frames.get(click.frame_index)
    if frame is None:
        return click.token.text
    cy = click.token.y + click.token.h / 2
    line = [
        t
        for t in frame.tokens
        if abs((t.y + t.h / 2) - cy) <= 0.7 * max(t.h, click.token.h)
    ]
    line.sort(key=lambda t: t.x)
    return " ".join(t.text for t in line)


def _is_xref_click(
    click: ClickedToken, ocr_frames: dict[int, OcrFrame], amap: BinaryArtifactMap
) -> bool:
    if _XREF_LINE.search(_click_line_text(click, ocr_frames).lower()):
        return True
    text = click.token.text
    if _ADDR_TOKEN.match(text):
        try:
            addr = int(text, 16)
        except ValueError:
            return False
        endpoints = {x.from_address for x in amap.xrefs} | {x.to_address for x in amap.xrefs}
        return addr in endpoints
    return False


def annotate_navigation(
    clicks: list[ClickedToken],
    intervals: list[Annotation],
    amap: BinaryArtifactMap,
    feature_spans: list[FeatureSpan],
    timeline: SymbolTimeline,
    ocr_frames: dict[int, OcrFrame],
    session_id: str,
) -> list[Annotation]:
    """One Navigation annotation per confirmed function entry.

    Each kept FunctionView start is attributed to its most specific cause:
    a double click on a symbol of that function (within 5s), else a click
    on a cross-reference line or address (within 15s), else a search-class
    feature window (within 15s). Unconfirmed clicks produce nothing.
    """
    ivs = [
        (int(a.payload["entry"], 16), a.t_start, a.t_end if a.t_end is not None else a.t_start)
        for a in intervals
        if a.kind == "FunctionView"
    ]

    def current_at(t: Timestamp, exclude_start: Timestamp) -> int | None:
        for entry, t0, t1 in ivs:
            if t0 <= t <= t1 and t0 != exclude_start:
                return entry
        return None

    out = []
    for entry, enter_t, _ in ivs:
        cause = None  # (mechanism, cause_t)
        for c in reversed(clicks):
            if c.t > enter_t or c.click_count != 2:
                continue
            if enter_t - c.t > DOUBLE_CLICK_CONFIRM_MS:
                break
            if timeline.index_at(c.t).resolve_function(c.token.text) == entry:
                cause = ("double_click", c.t)
                break
        if cause is None:
            for c in reversed(clicks):
                if c.t > enter_t:
                    continue
                if enter_t - c.t > XREF_CONFIRM_MS:
                    break
                if _is_xref_click(c, ocr_frames, amap):
                    cause = ("xref_click", c.t)
                    break
        if cause is None:
            for span in reversed(feature_spans):
                if span.feature not in SEARCH_FEATURES or span.t_end > enter_t:
                    continue
                if enter_t - span.t_end > SEARCH_CONFIRM_MS:
                    break
                cause = ("search", span.t_start)
                break
        if cause is None:
            continue
        mechanism, cause_t = cause
        from_entry = current_at(cause_t, exclude_start=enter_t)
        out.append(
            Annotation(
                id="",
                session_id=session_id,
                kind="Navigation",
                t_start=cause_t,
                t_end=None,
                payload={
                    "mechanism": mechanism,
                    "from": format_address(from_entry) if from_entry is not None else None,
                    "to": format_address(entry),
                },
            )
        )
    return out


# ---------------------------------------------------------------------------
# Feature use
# ---------------------------------------------------------------------------


def annotate_feature_use(
    feature_spans: list[FeatureSpan], typed_words: list[TypedWord], session_id: str
) -> list[Annotation]:
    """Pair every feature window span with its overlapping typed input."""
    out = []
    for span in feature_spans:
        word = _last_word_overlapping(typed_words, span.t_start, span.t_end)
        out.append(
            Annotation(
                id="",
                session_id=session_id,
                kind="FeatureUse",
                t_start=span.t_start,
                t_end=span.t_end,
                payload={"feature": span.feature, "text": word.text if word else ""},
            )
        )
    return out


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

CSV_HEADER = ["t_start", "t_end", "kind", "payload", "status"]


def export_timeline(annotations: list[Annotation], fmt: str = "jsonl") -> str:
    """Deterministic time-sorted export; jsonl round-trips losslessly."""
    ordered = sort_annotations(annotations)
    if fmt == "jsonl":
        return "".join(a.to_json() + "\n" for a in ordered)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for a in ordered:
            writer.writerow(
                [
                    a.t_start,
                    "" if a.t_end is None else a.t_end,
                    a.kind,
                    json.dumps(a.payload, separators=(",", ":"), ensure_ascii=False),
                    a.status,
                ]
            )
        return buf.getvalue()
    raise ValueError(f"unknown timeline format {fmt!r}")


def annotations_from_jsonl(text: str) -> list[Annotation]:
    out = []
    for line in text.splitlines():
        if line.strip():
            out.append(Annotation.from_obj(json.loads(line)))
    return out


def export_scatter(
    samples: list[MatchSample],
    intervals: list[Annotation],
    amap: BinaryArtifactMap,
) -> str:
    """CSV of (t, function ordinal) for samples inside kept intervals.

    The ordinal is the rank of the function's entry address among all
    functions of the binary, ascending from 0.
    """
    order = {fn.entry_address: i for i, fn in enumerate(sorted(amap.functions, key=lambda f: f.entry_address))}
    ivs = [
        (int(a.payload["entry"], 16), a.t_start, a.t_end if a.t_end is not None else a.t_start)
        for a in intervals
        if a.kind == "FunctionView"
    ]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "function_ordinal"])
    for s in samples:
        if s.entry is None or s.entry not in order:
            continue
        if any(entry == s.entry and t0 <= s.t <= t1 for entry, t0, t1 in ivs):
            writer.writerow([s.t, order[s.entry]])
    return buf.getvalue()
