"""Session bundle model: manifest, event log, differential frame codec.

A bundle is a directory with the canonical layout::

    manifest.json            session metadata
    frames/NNNNNN.kf.png     full keyframe raster
    frames/NNNNNN.kf.json    keyframe metadata (index, timestamp)
    frames/NNNNNN.patch.json patch metadata (timestamp, region list)
    frames/NNNNNN.RR.png     per-region raster for patch frames
    events.jsonl             one event per line, sorted by "t"
    ocr/NNNNNN.json          OCR cache (see rescribe.ocr)
    artifacts/<binary>.json  artifact interchange (see rescribe.artifacts)
    annotations.jsonl        append-only annotation log (see rescribe.annotate)

Frames are stored differentially: a keyframe carries the full raster and
subsequent patch frames carry only the changed regions. All rasters are
8-bit RGBA.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import cv2
import numpy as np
from PIL import Image as PilImage

from .errors import (
    CorruptPatch,
    DimensionMismatch,
    IndexOutOfRange,
    MissingFile,
    OutOfBounds,
    SchemaViolation,
    UnsortedEvents,
)

Timestamp = int  # milliseconds since the Unix epoch, non-negative

EVENT_TYPES = ("key", "click", "window", "proc", "comment")

KEYFRAME_MAX_SPACING = 100
KEYFRAME_PATCH_BUDGET = 0.6  # patch bytes above this fraction of a full frame force a keyframe


# ---------------------------------------------------------------------------
# Rasters
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Image:
    """An RGBA raster. `rgba` has shape (height, width, 4), dtype uint8."""

    width: int
    height: int
    rgba: np.ndarray

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Image":
        if arr.ndim != 3 or arr.shape[2] != 4 or arr.dtype != np.uint8:
            raise ValueError("expected a (h, w, 4) uint8 array")
        return cls(width=arr.shape[1], height=arr.shape[0], rgba=arr)

    @classmethod
    def blank(cls, width: int, height: int, color: tuple[int, int, int, int] = (0, 0, 0, 255)) -> "Image":
        arr = np.empty((height, width, 4), dtype=np.uint8)
        arr[:, :] = color
        return cls.from_array(arr)

    def copy(self) -> "Image":
        return Image(self.width, self.height, self.rgba.copy())

    def same_pixels(self, other: "Image") -> bool:
        return (
            self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.rgba, other.rgba))
        )

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        PilImage.fromarray(self.rgba, "RGBA").save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_png_bytes(cls, data: bytes) -> "Image":
        with PilImage.open(io.BytesIO(data)) as im:
            arr = np.asarray(im.convert("RGBA"), dtype=np.uint8)
        return cls.from_array(arr.copy())


@dataclass(eq=False)
class PatchRegion:
    """A changed rectangle with its raster, positioned on the frame."""

    x: int
    y: int
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 4) uint8


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Keystroke:
    t: Timestamp
    key: str
    modifiers: tuple[str, ...] = ()

    type = "key"


@dataclass(frozen=True)
class MouseClick:
    t: Timestamp
    x: int
    y: int
    button: str = "left"
    click_count: int = 1

    type = "click"


@dataclass(frozen=True)
class WindowInfo:
    t: Timestamp
    title: str
    x: int
    y: int
    w: int
    h: int
    focused: bool

    type = "window"


@dataclass(frozen=True)
class ProcessSample:
    t: Timestamp
    processes: tuple[tuple[str, float, int], ...]  # (name, cpu_pct, mem_bytes)

    type = "proc"


@dataclass(frozen=True)
class Comment:
    t: Timestamp
    text: str

    type = "comment"


EventRecord = Keystroke | MouseClick | WindowInfo | ProcessSample | Comment


def event_to_json(ev: EventRecord) -> str:
    """Canonical single-line JSON for an event (field order is fixed)."""
    if isinstance(ev, Keystroke):
        obj = {"type": "key", "t": ev.t, "key": ev.key, "modifiers": list(ev.modifiers)}
    elif isinstance(ev, MouseClick):
        obj = {
            "type": "click",
            "t": ev.t,
            "x": ev.x,
            "y": ev.y,
            "button": ev.button,
            "click_count": ev.click_count,
        }
    elif isinstance(ev, WindowInfo):
        obj = {
            "type": "window",
            "t": ev.t,
            "title": ev.title,
            "x": ev.x,
            "y": ev.y,
            "w": ev.w,
            "h": ev.h,
            "focused": ev.focused,
        }
    elif isinstance(ev, ProcessSample):
        obj = {
            "type": "proc",
            "t": ev.t,
            "processes": [
                {"name": n, "cpu_pct": c, "mem_bytes": m} for n, c, m in ev.processes
            ],
        }
    elif isinstance(ev, Comment):
        obj = {"type": "comment", "t": ev.t, "text": ev.text}
    else:  # pragma: no cover - exhaustive over the union
        raise TypeError(f"unknown event {ev!r}")
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def event_from_json(obj: dict, line_no: int) -> EventRecord:
    etype = obj.get("type")
    t = obj.get("t")
    if not isinstance(t, int) or t < 0:
        raise SchemaViolation(f"events.jsonl line {line_no}: field 't' must be a non-negative integer")
    try:
        if etype == "key":
            return Keystroke(t=t, key=str(obj["key"]), modifiers=tuple(obj.get("modifiers", [])))
        if etype == "click":
            return MouseClick(
                t=t,
                x=int(obj["x"]),
                y=int(obj["y"]),
                button=str(obj.get("button", "left")),
                click_count=int(obj.get("click_count", 1)),
            )
        if etype == "window":
            return WindowInfo(
                t=t,
                title=str(obj["title"]),
                x=int(obj["x"]),
                y=int(obj["y"]),
                w=int(obj["w"]),
                h=int(obj["h"]),
                focused=bool(obj["focused"]),
            )
        if etype == "proc":
            procs = tuple(
                (str(p["name"]), float(p["cpu_pct"]), int(p["mem_bytes"]))
                for p in obj["processes"]
            )
            return ProcessSample(t=t, processes=procs)
        if etype == "comment":
            return Comment(t=t, text=str(obj["text"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"events.jsonl line {line_no}: malformed {etype!r} record ({exc})") from exc
    raise SchemaViolation(f"events.jsonl line {line_no}: field 'type' must be one of {EVENT_TYPES}")


# ---------------------------------------------------------------------------
# Manifest and frame records
# ---------------------------------------------------------------------------

_MANIFEST_FIELDS = (
    "session_id",
    "subject_pseudonym",
    "binary_id",
    "tool_hint",
    "start",
    "end",
    "frame_count",
    "capture_interval_ms",
)


@dataclass(frozen=True)
class SessionManifest:
    session_id: str
    subject_pseudonym: str
    binary_id: str
    start: Timestamp
    end: Timestamp
    frame_count: int
    capture_interval_ms: int
    tool_hint: str | None = None

    def to_json(self) -> str:
        obj: dict = {}
        for name in _MANIFEST_FIELDS:
            value = getattr(self, name)
            if name == "tool_hint" and value is None:
                continue
            obj[name] = value
        return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SessionManifest":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"manifest.json: invalid JSON ({exc})") from exc
        required = [f for f in _MANIFEST_FIELDS if f != "tool_hint"]
        for name in required:
            if name not in obj:
                raise SchemaViolation(f"manifest.json: missing field '{name}'")
        for name in ("start", "end", "frame_count", "capture_interval_ms"):
            if not isinstance(obj[name], int) or obj[name] < 0:
                raise SchemaViolation(f"manifest.json: field '{name}' must be a non-negative integer")
        if obj["start"] > obj["end"]:
            raise SchemaViolation("manifest.json: field 'start' must be <= 'end'")
        return cls(
            session_id=str(obj["session_id"]),
            subject_pseudonym=str(obj["subject_pseudonym"]),
            binary_id=str(obj["binary_id"]),
            tool_hint=obj.get("tool_hint"),
            start=obj["start"],
            end=obj["end"],
            frame_count=obj["frame_count"],
            capture_interval_ms=obj["capture_interval_ms"],
        )


@dataclass(frozen=True)
class PatchMeta:
    """On-disk metadata for one patch region; raster loads lazily."""

    x: int
    y: int
    width: int
    height: int
    png_name: str


@dataclass(frozen=True)
class FrameRecord:
    index: int
    t: Timestamp
    kind: str  # "keyframe" | "patch"
    width: int
    height: int
    patches: tuple[PatchMeta, ...] = ()


# ---------------------------------------------------------------------------
# Codec
# ---------------------------------------------------------------------------


def apply_patches(base: Image, patches: list[PatchRegion]) -> Image:
    """Return a copy of `base` with each patch raster copied at its offset."""
    out = base.copy()
    for p in patches:
        if p.x < 0 or p.y < 0 or p.x + p.width > base.width or p.y + p.height > base.height:
            raise OutOfBounds(
                f"patch {p.width}x{p.height}@({p.x},{p.y}) exceeds frame {base.width}x{base.height}"
            )
        if p.pixels.shape != (p.height, p.width, 4):
            raise CorruptPatch(
                f"patch raster shape {p.pixels.shape} != ({p.height}, {p.width}, 4)"
            )
        out.rgba[p.y : p.y + p.height, p.x : p.x + p.width] = p.pixels
    return out


def _merge_overlapping(rects: list[tuple[int, int, int, int]]) -> list[tuple[int, int, int, int]]:
    rects = list(rects)
    merged = True
    while merged:
        merged = False
        out: list[tuple[int, int, int, int]] = []
        while rects:
            x, y, w, h = rects.pop()
            i = 0
            while i < len(rects):
                ox, oy, ow, oh = rects[i]
                if x < ox + ow and ox < x + w and y < oy + oh and oy < y + h:
                    nx, ny = min(x, ox), min(y, oy)
                    w = max(x + w, ox + ow) - nx
                    h = max(y + h, oy + oh) - ny
                    x, y = nx, ny
                    rects.pop(i)
                    merged = True
                else:
                    i += 1
            out.append((x, y, w, h))
        rects = out
    return sorted(rects, key=lambda r: (r[1], r[0]))


def diff_frames(prev: Image, next_: Image) -> list[PatchRegion]:
    """Changed regions between two equal-size frames.

    Regions are the bounding rectangles of 8-connected components of changed
    pixels; overlapping rectangles are merged. Applying the result to `prev`
    reproduces `next_` pixel-exactly.
    """
    if (prev.width, prev.height) != (next_.width, next_.height):
        raise DimensionMismatch(
            f"{prev.width}x{prev.height} vs {next_.width}x{next_.height}"
        )
    changed = np.any(prev.rgba != next_.rgba, axis=2).astype(np.uint8)
    if not changed.any():
        return []
    n_labels, _labels, stats, _ = cv2.connectedComponentsWithStats(changed, connectivity=8)
    rects = [
        (int(stats[i, cv2.CC_STAT_LEFT]), int(stats[i, cv2.CC_STAT_TOP]),
         int(stats[i, cv2.CC_STAT_WIDTH]), int(stats[i, cv2.CC_STAT_HEIGHT]))
        for i in range(1, n_labels)
    ]
    patches = []
    for x, y, w, h in _merge_overlapping(rects):
        patches.append(PatchRegion(x=x, y=y, width=w, height=h, pixels=next_.rgba[y : y + h, x : x + w].copy()))
    return patches


# ---------------------------------------------------------------------------
# Bundle
# ---------------------------------------------------------------------------


def _kf_png(index: int) -> str:
    return f"{index:06d}.kf.png"


def _kf_json(index: int) -> str:
    return f"{index:06d}.kf.json"


def _patch_json(index: int) -> str:
    return f"{index:06d}.patch.json"


def _region_png(index: int, region: int) -> str:
    return f"{index:06d}.{region:02d}.png"


def kf_meta_to_json(index: int, t: Timestamp) -> str:
    return json.dumps({"index": index, "t": t}, separators=(",", ":")) + "\n"


def patch_meta_to_json(rec: FrameRecord) -> str:
    obj = {
        "index": rec.index,
        "t": rec.t,
        "width": rec.width,
        "height": rec.height,
        "patches": [
            {"x": p.x, "y": p.y, "w": p.width, "h": p.height, "png": p.png_name}
            for p in rec.patches
        ],
    }
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False) + "\n"


class SessionBundle:
    """A loaded session: manifest and records in memory, rasters on demand.

    Immutable after load. `reconstruct_frame` memoizes the most recent
    result so sequential scans cost one patch application per step; each
    concurrent reader should own its bundle instance (or serialize access).
    """

    def __init__(self, root: Path, manifest: SessionManifest, frames: list[FrameRecord], events: list[EventRecord]):
        self.root = Path(root)
        self.manifest = manifest
        self.frames = frames
        self.events = events
        self._memo_index: int | None = None
        self._memo_image: Image | None = None

    @property
    def frames_dir(self) -> Path:
        return self.root / "frames"

    @property
    def ocr_dir(self) -> Path:
        return self.root / "ocr"

    def _load_keyframe(self, rec: FrameRecord) -> Image:
        path = self.frames_dir / _kf_png(rec.index)
        if not path.exists():
            raise MissingFile(str(path))
        return Image.from_png_bytes(path.read_bytes())

    def _load_patches(self, rec: FrameRecord) -> list[PatchRegion]:
        patches = []
        for meta in rec.patches:
            path = self.frames_dir / meta.png_name
            if not path.exists():
                raise CorruptPatch(f"missing region file {path.name}")
            img = Image.from_png_bytes(path.read_bytes())
            if (img.width, img.height) != (meta.width, meta.height):
                raise CorruptPatch(
                    f"{path.name}: raster is {img.width}x{img.height}, metadata says {meta.width}x{meta.height}"
                )
            patches.append(PatchRegion(meta.x, meta.y, meta.width, meta.height, img.rgba))
        return patches

    def reconstruct_frame(self, index: int) -> Image:
        """Full raster of frame `index` (keyframe plus intervening patches)."""
        if index < 0 or index >= len(self.frames):
            raise IndexOutOfRange(f"frame index {index} outside [0, {len(self.frames)})")
        if self._memo_index is not None and self._memo_index == index:
            return self._memo_image.copy()
        # Resume from the memoized frame when it sits between the governing
        # keyframe and the target; otherwise restart at the keyframe.
        kf = index
        while self.frames[kf].kind != "keyframe":
            kf -= 1
        start = kf
        if self._memo_index is not None and kf <= self._memo_index < index:
            start = self._memo_index
            img = self._memo_image.copy()
        else:
            img = self._load_keyframe(self.frames[start])
        for i in range(start + 1, index + 1):
            rec = self.frames[i]
            if rec.kind == "keyframe":
                img = self._load_keyframe(rec)
            else:
                img = apply_patches(img, self._load_patches(rec))
        self._memo_index = index
        self._memo_image = img
        return img.copy()

    def frame_time(self, index: int) -> Timestamp:
        if index < 0 or index >= len(self.frames):
            raise IndexOutOfRange(f"frame index {index} outside [0, {len(self.frames)})")
        return self.frames[index].t

    def events_of(self, *types) -> Iterator[EventRecord]:
        for ev in self.events:
            if isinstance(ev, types):
                yield ev


def load_bundle(path: str | Path) -> SessionBundle:
    """Load and validate a bundle directory."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise MissingFile(str(manifest_path))
    manifest = SessionManifest.from_json(manifest_path.read_text("utf-8"))

    frames = _load_frame_records(root, manifest)
    events = _load_events(root, manifest, frames)
    return SessionBundle(root, manifest, frames, events)


def _load_frame_records(root: Path, manifest: SessionManifest) -> list[FrameRecord]:
    frames_dir = root / "frames"
    if not frames_dir.is_dir():
        raise MissingFile(str(frames_dir))
    kf_indices = {int(p.name[:6]) for p in frames_dir.glob("*.kf.png")}
    patch_indices = {int(p.name[:6]) for p in frames_dir.glob("*.patch.json")}
    both = kf_indices & patch_indices
    if both:
        raise SchemaViolation(f"frames: index {min(both)} has both keyframe and patch records")
    indices = kf_indices | patch_indices
    count = manifest.frame_count
    if indices:
        for i in range(max(indices) + 1):
            if i not in indices:
                raise SchemaViolation(f"frames: missing index {i}")
    if len(indices) != count:
        raise SchemaViolation(
            f"manifest.json: frame_count {count} != {len(indices)} frame records on disk"
        )
    if count and 0 not in kf_indices:
        raise SchemaViolation("frames: index 0 must be a keyframe")

    records: list[FrameRecord] = []
    cur_w = cur_h = 0
    prev_t: Timestamp | None = None
    for i in range(count):
        if i in kf_indices:
            meta_path = frames_dir / _kf_json(i)
            if not meta_path.exists():
                raise MissingFile(str(meta_path))
            meta = json.loads(meta_path.read_text("utf-8"))
            if meta.get("index") != i:
                raise SchemaViolation(f"{meta_path.name}: field 'index' != {i}")
            t = meta.get("t")
            if not isinstance(t, int) or t < 0:
                raise SchemaViolation(f"{meta_path.name}: field 't' must be a non-negative integer")
            with PilImage.open(frames_dir / _kf_png(i)) as im:
                cur_w, cur_h = im.size
            records.append(FrameRecord(index=i, t=t, kind="keyframe", width=cur_w, height=cur_h))
        else:
            meta_path = frames_dir / _patch_json(i)
            meta = json.loads(meta_path.read_text("utf-8"))
            if meta.get("index") != i:
                raise SchemaViolation(f"{meta_path.name}: field 'index' != {i}")
            t = meta.get("t")
            if not isinstance(t, int) or t < 0:
                raise SchemaViolation(f"{meta_path.name}: field 't' must be a non-negative integer")
            w, h = meta.get("width"), meta.get("height")
            if (w, h) != (cur_w, cur_h):
                raise SchemaViolation(
                    f"{meta_path.name}: dimensions {w}x{h} differ from governing keyframe {cur_w}x{cur_h}"
                )
            patches = []
            for j, p in enumerate(meta.get("patches", [])):
                px, py, pw, ph = p.get("x"), p.get("y"), p.get("w"), p.get("h")
                if px < 0 or py < 0 or px + pw > w or py + ph > h:
                    raise SchemaViolation(
                        f"{meta_path.name}: patch {j} ({pw}x{ph}@({px},{py})) outside frame bounds"
                    )
                patches.append(PatchMeta(x=px, y=py, width=pw, height=ph, png_name=p["png"]))
            records.append(
                FrameRecord(index=i, t=t, kind="patch", width=w, height=h, patches=tuple(patches))
            )
        if prev_t is not None and records[-1].t < prev_t:
            raise SchemaViolation(f"frames: timestamp decreases at index {i}")
        prev_t = records[-1].t
    return records


def _load_events(root: Path, manifest: SessionManifest, frames: list[FrameRecord]) -> list[EventRecord]:
    events_path = root / "events.jsonl"
    if not events_path.exists():
        raise MissingFile(str(events_path))
    max_w = max((f.width for f in frames), default=0)
    max_h = max((f.height for f in frames), default=0)
    events: list[EventRecord] = []
    prev_t: Timestamp | None = None
    for line_no, line in enumerate(events_path.read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"events.jsonl line {line_no}: invalid JSON ({exc})") from exc
        ev = event_from_json(obj, line_no)
        if ev.t < manifest.start or ev.t > manifest.end:
            raise SchemaViolation(
                f"events.jsonl line {line_no}: t={ev.t} outside session [{manifest.start}, {manifest.end}]"
            )
        if isinstance(ev, MouseClick) and frames:
            if not (0 <= ev.x < max_w and 0 <= ev.y < max_h):
                raise SchemaViolation(
                    f"events.jsonl line {line_no}: click ({ev.x},{ev.y}) outside screen bounds {max_w}x{max_h}"
                )
        if prev_t is not None and ev.t < prev_t:
            raise UnsortedEvents(f"events.jsonl line {line_no}: t={ev.t} < previous t={prev_t}")
        prev_t = ev.t
        events.append(ev)
    return events


def write_bundle(
    root: str | Path,
    manifest: SessionManifest,
    frames: list[tuple[Timestamp, Image]],
    events: list[EventRecord],
) -> SessionBundle:
    """Encode frames differentially and write a canonical bundle.

    A keyframe is emitted when the patch encoding for a frame would exceed
    60% of a full-frame encoding, and at least every 100 frames.
    """
    if len(frames) != manifest.frame_count:
        raise SchemaViolation(
            f"manifest.json: frame_count {manifest.frame_count} != {len(frames)} frames supplied"
        )
    root = Path(root)
    frames_dir = root / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    (root / "ocr").mkdir(exist_ok=True)
    (root / "artifacts").mkdir(exist_ok=True)

    (root / "manifest.json").write_bytes(manifest.to_json().encode("utf-8"))
    with open(root / "events.jsonl", "w", encoding="utf-8") as fh:
        for ev in sorted(events, key=lambda e: e.t):
            fh.write(event_to_json(ev) + "\n")

    prev: Image | None = None
    since_kf = 0
    for index, (t, img) in enumerate(frames):
        write_kf = index == 0 or since_kf >= KEYFRAME_MAX_SPACING
        patches: list[PatchRegion] = []
        region_blobs: list[bytes] = []
        if not write_kf:
            if (prev.width, prev.height) != (img.width, img.height):
                write_kf = True
            else:
                patches = diff_frames(prev, img)
                region_blobs = [
                    Image.from_array(np.ascontiguousarray(p.pixels)).to_png_bytes() for p in patches
                ]
                full = img.to_png_bytes()
                if sum(len(b) for b in region_blobs) > KEYFRAME_PATCH_BUDGET * len(full):
                    write_kf = True
        if write_kf:
            (frames_dir / _kf_png(index)).write_bytes(img.to_png_bytes())
            (frames_dir / _kf_json(index)).write_text(kf_meta_to_json(index, t), "utf-8")
            since_kf = 0
        else:
            metas = []
            for j, (p, blob) in enumerate(zip(patches, region_blobs)):
                name = _region_png(index, j)
                (frames_dir / name).write_bytes(blob)
                metas.append(PatchMeta(p.x, p.y, p.width, p.height, name))
            rec = FrameRecord(
                index=index, t=t, kind="patch", width=img.width, height=img.height, patches=tuple(metas)
            )
            (frames_dir / _patch_json(index)).write_text(patch_meta_to_json(rec), "utf-8")
            since_kf += 1
        prev = img
    return load_bundle(root)


def reserialize_metadata(bundle: SessionBundle) -> dict[str, bytes]:
    """Canonical bytes for every JSON artifact of the bundle, from memory.

    Used to check that load followed by re-serialization is byte-identical
    for canonical bundles.
    """
    out: dict[str, bytes] = {"manifest.json": bundle.manifest.to_json().encode("utf-8")}
    lines = "".join(event_to_json(ev) + "\n" for ev in bundle.events)
    out["events.jsonl"] = lines.encode("utf-8")
    for rec in bundle.frames:
        if rec.kind == "keyframe":
            out[f"frames/{_kf_json(rec.index)}"] = kf_meta_to_json(rec.index, rec.t).encode("utf-8")
        else:
            out[f"frames/{_patch_json(rec.index)}"] = patch_meta_to_json(rec).encode("utf-8")
    return out
