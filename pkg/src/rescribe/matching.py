"""Matching math: edit distance, symbol scoring, frame and block matching.

Function identification is two-staged: exact membership of a sanitized
screen token in the symbol index wins immediately with score 100;
otherwise the best fuzzy (token, symbol) pair above the threshold decides.
Fuzzy candidates are pruned to symbols within 3 characters of the token's
length that share its first character, which keeps per-frame cost roughly
linear in index size without changing top-1 results (checked against the
unpruned path in tests).
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

import cv2
import numpy as np

from .artifacts import FunctionRecord, SymbolIndex, sanitize_symbol
from .ocr import OcrFrame
from .session import Image
from .util import round_half_up

DEFAULT_THRESHOLD = 85
DEFAULT_BLOCK_ACCEPT_RATIO = 0.3
LENGTH_BAND = 3


def levenshtein(a: str, b: str) -> int:
    """Minimum number of unit-cost insertions, deletions, substitutions."""
    if a == b:
        return 0
    # Trim common prefix/suffix; it never changes the distance.
    lo = 0
    hi_a, hi_b = len(a), len(b)
    while lo < hi_a and lo < hi_b and a[lo] == b[lo]:
        lo += 1
    while hi_a > lo and hi_b > lo and a[hi_a - 1] == b[hi_b - 1]:
        hi_a -= 1
        hi_b -= 1
    a, b = a[lo:hi_a], b[lo:hi_b]
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def similarity_score(a: str, b: str) -> int:
    """Normalized similarity in 0..100; inputs are already sanitized.

    score = round(100 * (1 - lev(a, b) / max(len(a), len(b)))), half-up,
    with score("", "") = 100.
    """
    if a == b:
        return 100
    m = max(len(a), len(b))
    d = levenshtein(a, b)
    return int(round_half_up(Fraction(100 * (m - d), m)))


# ---------------------------------------------------------------------------
# Function matching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionMatch:
    frame_index: int
    entry: int | None  # None means no function identified
    score: int = 0
    via_symbol: str = ""

    @property
    def is_function(self) -> bool:
        return self.entry is not None


def _frame_keys(frame: OcrFrame) -> list[str]:
    keys = {sanitize_symbol(t.text) for t in frame.tokens}
    keys.discard("")
    return sorted(keys)


def match_function(
    frame: OcrFrame,
    index: SymbolIndex,
    threshold: int = DEFAULT_THRESHOLD,
    *,
    prune: bool = True,
) -> FunctionMatch:
    """Identify the single function displayed in a frame, if any.

    Ties break on (higher score, more distinct matching tokens for the
    function, lowest entry address); token order never matters.
    """
    if not 0 <= threshold <= 100:
        raise ValueError("threshold must be within [0, 100]")
    keys = _frame_keys(frame)
    if not keys:
        return FunctionMatch(frame.frame_index, None)

    exact: dict[int, list[str]] = {}
    for key in keys:
        entry = index.symbol_to_function.get(key)
        if entry is not None:
            exact.setdefault(entry, []).append(key)
    if exact:
        entry = min(exact, key=lambda e: (-len(exact[e]), e))
        return FunctionMatch(frame.frame_index, entry, 100, min(exact[entry]))

    by_first: dict[str, list[str]] = {}
    for sym in index.symbol_to_function:
        if sym:
            by_first.setdefault(sym[0], []).append(sym)

    best_score = -1
    # entry -> (set of tokens achieving best_score, smallest matching symbol)
    best_hits: dict[int, tuple[set[str], str]] = {}
    for key in keys:
        if prune:
            candidates = [
                s for s in by_first.get(key[0], []) if abs(len(s) - len(key)) <= LENGTH_BAND
            ]
        else:
            candidates = list(index.symbol_to_function)
        for sym in candidates:
            score = similarity_score(key, sym)
            if score < best_score:
                continue
            entry = index.symbol_to_function[sym]
            if score > best_score:
                best_score = score
                best_hits = {entry: ({key}, sym)}
            else:
                toks, best_sym = best_hits.get(entry, (set(), sym))
                toks.add(key)
                best_hits[entry] = (toks, min(best_sym, sym))
    if best_score < threshold or not best_hits:
        return FunctionMatch(frame.frame_index, None)
    entry = min(best_hits, key=lambda e: (-len(best_hits[e][0]), e))
    return FunctionMatch(frame.frame_index, entry, best_score, best_hits[entry][1])


# ---------------------------------------------------------------------------
# Rectangle detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RectRegion:
    x: int
    y: int
    w: int
    h: int
    fill_class: str = "node"

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)

    def contains_point(self, px: float, py: float) -> bool:
        return self.x <= px < self.x + self.w and self.y <= py < self.y + self.h


@dataclass(frozen=True)
class ColorClass:
    rgb: tuple[int, int, int]
    tolerance: int = 10
    fill_class: str = "node"


@dataclass(frozen=True)
class RectFilters:
    classes: tuple[ColorClass, ...]
    min_w: int = 10
    min_h: int = 10
    max_w: int = 4096
    max_h: int = 4096


DEFAULT_FILTERS = RectFilters(classes=(ColorClass(rgb=(255, 255, 255), tolerance=12),))


def load_filters(path: str | Path | None = None, tool: str | None = None) -> RectFilters:
    """Load size+color filters; per-tool sections override the default."""
    if path is None:
        text = resources.files("rescribe").joinpath("data/filters.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    table = json.loads(text)
    section = table.get(tool or "default") or table["default"]
    classes = tuple(
        ColorClass(rgb=tuple(c["rgb"]), tolerance=c.get("tol", 10), fill_class=c.get("fill_class", "node"))
        for c in section["classes"]
    )
    return RectFilters(
        classes=classes,
        min_w=section.get("min_w", 10),
        min_h=section.get("min_h", 10),
        max_w=section.get("max_w", 4096),
        max_h=section.get("max_h", 4096),
    )


def detect_block_rects(img: Image, filters: RectFilters = DEFAULT_FILTERS) -> list[RectRegion]:
    """Bounding rectangles of node-colored connected regions."""
    rgb = img.rgba[:, :, :3].astype(np.int16)
    regions: list[RectRegion] = []
    for cls in filters.classes:
        target = np.array(cls.rgb, dtype=np.int16)
        mask = (np.abs(rgb - target) <= cls.tolerance).all(axis=2).astype(np.uint8)
        if not mask.any():
            continue
        n_labels, _, stats, _ = cv2.connectedComponentsWithStats(mask, connectivity=8)
        for i in range(1, n_labels):
            w = int(stats[i, cv2.CC_STAT_WIDTH])
            h = int(stats[i, cv2.CC_STAT_HEIGHT])
            if not (filters.min_w <= w <= filters.max_w and filters.min_h <= h <= filters.max_h):
                continue
            regions.append(
                RectRegion(
                    x=int(stats[i, cv2.CC_STAT_LEFT]),
                    y=int(stats[i, cv2.CC_STAT_TOP]),
                    w=w,
                    h=h,
                    fill_class=cls.fill_class,
                )
            )
    regions.sort(key=lambda r: (r.y, r.x))
    return regions


# ---------------------------------------------------------------------------
# Block matching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockMatch:
    rect: RectRegion
    entry: int | None  # function entry of the matched block
    block: int | None  # block address, None when unmatched
    distance: int
    ambiguous: bool = False


_WS = re.compile(r"\s+")


def _normalize_text(text: str) -> str:
    return _WS.sub(" ", text.lower()).strip()


def rect_text(frame: OcrFrame, rect: RectRegion) -> str:
    """Concatenated text of tokens whose centers fall inside a rectangle."""
    inside = [t for t in frame.tokens if rect.contains_point(*t.center)]
    inside.sort(key=lambda t: (t.y, t.x))
    return _normalize_text(" ".join(t.text for t in inside))


def match_blocks(
    frame: OcrFrame,
    rects: list[RectRegion],
    function: FunctionRecord,
    accept_ratio: float = DEFAULT_BLOCK_ACCEPT_RATIO,
) -> list[BlockMatch]:
    """Assign each node rectangle to at most one of the function's blocks.

    Greedy by ascending edit distance; a block is used at most once.
    Matches whose block text also occurs in another block of the function
    are flagged ambiguous (identical one-liners are indistinguishable).
    """
    node_rects = [r for r in rects if r.fill_class == "node"]
    cand_texts = [_normalize_text(" ".join(b.text_lines)) for b in function.blocks]
    text_counts = Counter(cand_texts)
    rect_texts = [rect_text(frame, r) for r in node_rects]

    pairs = []
    for ri, rtext in enumerate(rect_texts):
        if not rtext:
            continue
        for ci, ctext in enumerate(cand_texts):
            dist = levenshtein(rtext, ctext)
            if dist <= accept_ratio * max(len(rtext), len(ctext)):
                pairs.append((dist, ri, ci))
    pairs.sort(key=lambda p: (p[0], node_rects[p[1]].y, node_rects[p[1]].x, function.blocks[p[2]].address))

    assigned_rect: dict[int, tuple[int, int]] = {}
    used_blocks: set[int] = set()
    for dist, ri, ci in pairs:
        if ri in assigned_rect or ci in used_blocks:
            continue
        assigned_rect[ri] = (ci, dist)
        used_blocks.add(ci)

    out = []
    for ri, rect in enumerate(node_rects):
        if ri in assigned_rect:
            ci, dist = assigned_rect[ri]
            blk = function.blocks[ci]
            out.append(
                BlockMatch(
                    rect=rect,
                    entry=function.entry_address,
                    block=blk.address,
                    distance=dist,
                    ambiguous=text_counts[cand_texts[ci]] > 1,
                )
            )
        else:
            best = min(
                (levenshtein(rect_texts[ri], c) for c in cand_texts), default=0
            ) if rect_texts[ri] else 0
            out.append(BlockMatch(rect=rect, entry=None, block=None, distance=best))
    return out
