"""Input interpretation: typed words, resolved clicks, feature windows.

Raw keystrokes become time-stamped words (modifier and navigation keys
dropped, Backspace edits the current word, gaps and Enter/Tab/Escape/click
events split words). Mouse clicks resolve against the most recent OCR
frame. Tool feature windows (Rename Function, Edit Label, ...) are spotted
by fuzzy phrase matching over OCR tokens, driven by an ordered pattern
table with optional per-tool entries.
"""

from __future__ import annotations

import json
import re
from bisect import bisect_right
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .artifacts import sanitize_symbol
from .matching import similarity_score
from .ocr import OcrFrame, OcrToken, token_at_point
from .session import EventRecord, Keystroke, MouseClick, Timestamp

DEFAULT_GAP_MS = 2000
DOUBLE_CLICK_WINDOW_MS = 400
OCR_STALENESS_MS = 2000
PHRASE_WORD_MIN_SCORE = 90

RENAME_FEATURES = {"RenameFunction", "RenameLocal", "EditLabel", "DefineName"}
SEARCH_FEATURES = {"FindReferences", "FindString", "SearchFunctions"}

# Feature class -> rename scope
FEATURE_SCOPES = {
    "RenameFunction": "function",
    "RenameLocal": "local",
    "EditLabel": "global",
    "DefineName": "global",
}


@dataclass(frozen=True)
class TypedWord:
    text: str
    t_start: Timestamp
    t_end: Timestamp


@dataclass(frozen=True)
class ClickedToken:
    t: Timestamp
    token: OcrToken
    click_count: int
    frame_index: int


@dataclass(frozen=True)
class FeatureWindow:
    frame_index: int
    feature: str
    title_token_bbox: tuple[int, int, int, int]


@dataclass(frozen=True)
class FeatureSpan:
    """Consecutive frames showing the same feature window."""

    feature: str
    t_start: Timestamp
    t_end: Timestamp
    first_frame: int
    last_frame: int


# ---------------------------------------------------------------------------
# Keystroke aggregation
# ---------------------------------------------------------------------------

_BOUNDARY_KEYS = {"enter", "return", "tab", "escape", "esc"}
_EDIT_KEYS = {"backspace", "delete", "del"}
_DROP_KEYS = {
    "shift", "ctrl", "control", "alt", "altgr", "meta", "cmd", "super", "win", "windows",
    "capslock", "numlock", "scrolllock", "insert", "printscreen", "pause", "menu", "fn",
    "left", "right", "up", "down", "arrowleft", "arrowright", "arrowup", "arrowdown",
    "home", "end", "pageup", "pagedown",
}
_FKEY = re.compile(r"^f([1-9]|1[0-9]|2[0-4])$")
_CHORD_MODIFIERS = {"ctrl", "control", "alt", "meta", "cmd", "super", "win"}


def _classify_key(ev: Keystroke) -> tuple[str, str]:
    """Return (action, payload): char | edit | boundary | drop."""
    key = ev.key
    name = key.lower()
    mods = {m.lower() for m in ev.modifiers}
    if name in ("space", "spacebar"):
        key, name = " ", " "
    if len(key) == 1 and key.isprintable():
        if mods & _CHORD_MODIFIERS:
            return ("drop", "")  # shortcut chord, not text input
        return ("char", key)
    if name in _EDIT_KEYS:
        return ("edit", "")
    if name in _BOUNDARY_KEYS:
        return ("boundary", "")
    if name in _DROP_KEYS or _FKEY.match(name):
        return ("drop", "")
    return ("drop", "")


def aggregate_keystrokes(events: list[EventRecord], gap_ms: int = DEFAULT_GAP_MS) -> list[TypedWord]:
    """Combine keystroke events into time-stamped words.

    `events` may include MouseClick records, which act as word boundaries.
    Backspace removes the previous retained character of the current word
    and has no effect on an empty word.
    """
    words: list[TypedWord] = []
    buf: list[tuple[str, Timestamp]] = []
    last_t: Timestamp | None = None

    def flush() -> None:
        while buf and buf[0][0] == " ":
            buf.pop(0)
        while buf and buf[-1][0] == " ":
            buf.pop()
        if buf:
            words.append(
                TypedWord(
                    text="".join(ch for ch, _ in buf),
                    t_start=buf[0][1],
                    t_end=buf[-1][1],
                )
            )
        buf.clear()

    for ev in events:
        if last_t is not None and ev.t - last_t > gap_ms:
            flush()
        if isinstance(ev, MouseClick):
            flush()
            last_t = ev.t
            continue
        if not isinstance(ev, Keystroke):
            continue
        action, payload = _classify_key(ev)
        if action == "char":
            buf.append((payload, ev.t))
        elif action == "edit":
            if buf:
                buf.pop()
        elif action == "boundary":
            flush()
        last_t = ev.t
    flush()
    return words


# ---------------------------------------------------------------------------
# Click resolution
# ---------------------------------------------------------------------------


def resolve_click(
    click: MouseClick,
    frame_times: list[tuple[int, Timestamp]],
    ocr_frames: dict[int, OcrFrame],
    staleness_ms: int = OCR_STALENESS_MS,
) -> ClickedToken | None:
    """Attribute a click to the token under it on the most recent OCR frame.

    Only frames captured at or before the click and at most `staleness_ms`
    earlier qualify; without one the click stays unresolved.
    """
    times = [t for _, t in frame_times]
    pos = bisect_right(times, click.t) - 1
    while pos >= 0:
        index, t = frame_times[pos]
        if click.t - t > staleness_ms:
            return None
        frame = ocr_frames.get(index)
        if frame is not None:
            token = token_at_point(frame, click.x, click.y)
            if token is None:
                return None
            return ClickedToken(
                t=click.t, token=token, click_count=min(click.click_count, 2), frame_index=index
            )
        pos -= 1
    return None


def resolve_clicks(
    clicks: list[MouseClick],
    frame_times: list[tuple[int, Timestamp]],
    ocr_frames: dict[int, OcrFrame],
    staleness_ms: int = OCR_STALENESS_MS,
    double_click_ms: int = DOUBLE_CLICK_WINDOW_MS,
) -> list[ClickedToken]:
    """Resolve a click sequence, folding rapid same-token pairs into doubles."""
    resolved = []
    for c in sorted(clicks, key=lambda c: c.t):
        ct = resolve_click(c, frame_times, ocr_frames, staleness_ms)
        if ct is not None:
            resolved.append(ct)
    out: list[ClickedToken] = []
    for ct in resolved:
        prev = out[-1] if out else None
        if (
            prev is not None
            and prev.click_count == 1
            and ct.click_count == 1
            and ct.t - prev.t <= double_click_ms
            and prev.token.text == ct.token.text
            and prev.token.bbox == ct.token.bbox
        ):
            out[-1] = ClickedToken(
                t=prev.t, token=prev.token, click_count=2, frame_index=prev.frame_index
            )
        else:
            out.append(ct)
    return out


# ---------------------------------------------------------------------------
# Feature windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PatternEntry:
    feature: str
    phrases: tuple[str, ...]
    tool_hint: str | None = None


def load_patterns(path: str | Path | None = None, tool: str | None = None) -> list[PatternEntry]:
    if path is None:
        text = resources.files("rescribe").joinpath("data/patterns.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    entries = [
        PatternEntry(
            feature=e["feature"], phrases=tuple(e["phrases"]), tool_hint=e.get("tool_hint")
        )
        for e in json.loads(text)
    ]
    return [e for e in entries if e.tool_hint is None or e.tool_hint == tool]


def _same_line(a: OcrToken, b: OcrToken) -> bool:
    ay, by = a.y + a.h / 2, b.y + b.h / 2
    return abs(ay - by) <= 0.7 * max(a.h, b.h)


def _phrase_at(tokens: tuple[OcrToken, ...], start: int, words: list[str]) -> list[OcrToken] | None:
    if start + len(words) > len(tokens):
        return None
    matched = []
    for offset, word in enumerate(words):
        tok = tokens[start + offset]
        if offset and not (_same_line(tokens[start + offset - 1], tok) and tok.x >= tokens[start + offset - 1].x):
            return None
        if similarity_score(sanitize_symbol(tok.text), sanitize_symbol(word)) < PHRASE_WORD_MIN_SCORE:
            return None
        matched.append(tok)
    return matched


def detect_feature_window(frame: OcrFrame, patterns: list[PatternEntry]) -> FeatureWindow | None:
    """First pattern (in table order) whose phrase appears on one line."""
    for entry in patterns:
        for phrase in entry.phrases:
            words = phrase.split()
            for start in range(len(frame.tokens)):
                matched = _phrase_at(frame.tokens, start, words)
                if matched:
                    x0 = min(t.x for t in matched)
                    y0 = min(t.y for t in matched)
                    x1 = max(t.x + t.w for t in matched)
                    y1 = max(t.y + t.h for t in matched)
                    return FeatureWindow(
                        frame_index=frame.frame_index,
                        feature=entry.feature,
                        title_token_bbox=(x0, y0, x1 - x0, y1 - y0),
                    )
    return None


def consolidate_feature_spans(
    windows: list[tuple[Timestamp, FeatureWindow | None]],
) -> list[FeatureSpan]:
    """Merge per-frame detections of the same feature on consecutive frames."""
    spans: list[FeatureSpan] = []
    active: FeatureSpan | None = None
    for t, win in windows:
        if win is None:
            if active:
                spans.append(active)
                active = None
            continue
        if active and active.feature == win.feature:
            active = FeatureSpan(
                feature=active.feature,
                t_start=active.t_start,
                t_end=t,
                first_frame=active.first_frame,
                last_frame=win.frame_index,
            )
        else:
            if active:
                spans.append(active)
            active = FeatureSpan(
                feature=win.feature,
                t_start=t,
                t_end=t,
                first_frame=win.frame_index,
                last_frame=win.frame_index,
            )
    if active:
        spans.append(active)
    return spans
