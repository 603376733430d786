"""Screenshot text extraction behind a pluggable engine adapter.

Engines are external processes invoked as ``engine png_path config_path``
and printing one token per line as ``text<TAB>x<TAB>y<TAB>w<TAB>h<TAB>conf``
in the coordinates of the image they were given. A deterministic mock
backend reads sidecar token tables instead, so every downstream matching
test runs independently of real OCR noise; a noise wrapper reintroduces
the classic confusion errors (O/0, l/1, I/l) on demand.

Token bounding boxes are always stored in ORIGINAL screenshot coordinates
(clicks arrive in original coordinates); mapping back from the upscaled
image rounds down.
"""

from __future__ import annotations

import math
import os
import random
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import BackendFailure, BackendUnavailable
from .session import Image, SessionBundle
from .util import compact_json, fingerprint

MOCK_SIDECAR_DIR = "ocr_mock"
NEAREST_TOKEN_RADIUS_PX = 12.0

DEFAULT_CONFUSIONS = {"O": "0", "0": "O", "l": "1", "1": "l", "I": "l"}


@dataclass(frozen=True)
class OcrToken:
    text: str
    x: int
    y: int
    w: int
    h: int
    confidence: int  # 0..100

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> int:
        return self.w * self.h

    def contains(self, px: int, py: int) -> bool:
        return self.x <= px < self.x + self.w and self.y <= py < self.y + self.h


@dataclass(frozen=True)
class OcrFrame:
    frame_index: int
    tokens: tuple[OcrToken, ...]
    backend_id: str
    config_fingerprint: str

    def to_obj(self) -> dict:
        return {
            "frame_index": self.frame_index,
            "backend_id": self.backend_id,
            "config_fingerprint": self.config_fingerprint,
            "tokens": [
                {"text": t.text, "x": t.x, "y": t.y, "w": t.w, "h": t.h, "conf": t.confidence}
                for t in self.tokens
            ],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "OcrFrame":
        tokens = tuple(
            OcrToken(
                text=t["text"], x=t["x"], y=t["y"], w=t["w"], h=t["h"], confidence=t["conf"]
            )
            for t in obj["tokens"]
        )
        return cls(
            frame_index=obj["frame_index"],
            tokens=tokens,
            backend_id=obj["backend_id"],
            config_fingerprint=obj["config_fingerprint"],
        )


@dataclass(frozen=True)
class OcrConfig:
    upscale_factor: int = 2
    grayscale: bool = False
    threshold: str = "none"  # none | otsu | fixed
    threshold_value: int = 128
    char_whitelist: str | None = None
    segmentation_hint: str = "sparse"  # sparse | block | line

    def __post_init__(self):
        if self.upscale_factor < 1:
            raise ValueError("upscale_factor must be >= 1")
        if self.threshold not in ("none", "otsu", "fixed"):
            raise ValueError(f"unknown threshold mode {self.threshold!r}")

    def to_obj(self) -> dict:
        return {
            "upscale_factor": self.upscale_factor,
            "grayscale": self.grayscale,
            "threshold": self.threshold,
            "threshold_value": self.threshold_value,
            "char_whitelist": self.char_whitelist,
            "segmentation_hint": self.segmentation_hint,
        }


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------


def preprocess_image(img: Image, cfg: OcrConfig) -> Image:
    """Upscale (nearest-neighbor) and optionally grayscale/threshold."""
    arr = img.rgba
    if cfg.upscale_factor > 1:
        arr = np.repeat(np.repeat(arr, cfg.upscale_factor, axis=0), cfg.upscale_factor, axis=1)
    if cfg.grayscale or cfg.threshold != "none":
        gray = cv2.cvtColor(arr[:, :, :3], cv2.COLOR_RGB2GRAY)
        if cfg.threshold == "otsu":
            # Degenerate (single-value) histograms map to all-background.
            _, gray = cv2.threshold(gray, 0, 255, cv2.THRESH_BINARY + cv2.THRESH_OTSU)
        elif cfg.threshold == "fixed":
            _, gray = cv2.threshold(gray, cfg.threshold_value, 255, cv2.THRESH_BINARY)
        out = np.empty_like(arr)
        out[:, :, 0] = gray
        out[:, :, 1] = gray
        out[:, :, 2] = gray
        out[:, :, 3] = arr[:, :, 3]
        arr = out
    if arr is img.rgba:
        return img
    return Image.from_array(np.ascontiguousarray(arr))


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

RawToken = tuple[str, int, int, int, int, int]


def parse_token_table(text: str, source: str) -> list[RawToken]:
    """Parse the tab-separated adapter output (text, x, y, w, h, conf)."""
    tokens: list[RawToken] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 6:
            raise BackendFailure(f"{source} line {line_no}: expected 6 tab-separated fields")
        try:
            tokens.append(
                (parts[0], int(parts[1]), int(parts[2]), int(parts[3]), int(parts[4]), int(float(parts[5])))
            )
        except ValueError as exc:
            raise BackendFailure(f"{source} line {line_no}: {exc}") from exc
    return tokens


class MockBackend:
    """Reads sidecar token tables (original coordinates) from the bundle.

    Sidecars live at ``<bundle>/ocr_mock/NNNNNN.tsv``. A missing sidecar
    means the frame shows no text.
    """

    backend_id = "mock"

    def recognize(
        self, image: Image, cfg: OcrConfig, frame_index: int, bundle_root: Path | None
    ) -> list[RawToken]:
        if bundle_root is None:
            raise BackendFailure("mock backend needs a bundle to read sidecars from")
        path = Path(bundle_root) / MOCK_SIDECAR_DIR / f"{frame_index:06d}.tsv"
        if not path.exists():
            return []
        u = cfg.upscale_factor
        # Sidecars are authored in original coordinates; emit engine
        # coordinates so the caller's mapping divides them back exactly.
        return [
            (text, x * u, y * u, w * u, h * u, conf)
            for text, x, y, w, h, conf in parse_token_table(path.read_text("utf-8"), path.name)
        ]


class SubprocessBackend:
    """Adapter for an external OCR engine executable."""

    def __init__(self, executable: str):
        self.executable = executable
        self.backend_id = f"subprocess:{Path(executable).name}"

    def recognize(
        self, image: Image, cfg: OcrConfig, frame_index: int, bundle_root: Path | None
    ) -> list[RawToken]:
        resolved = shutil.which(self.executable) or (
            self.executable if os.path.exists(self.executable) else None
        )
        if resolved is None:
            raise BackendUnavailable(f"OCR engine {self.executable!r} not found")
        with tempfile.TemporaryDirectory(prefix="rescribe-ocr-") as tmp:
            png_path = Path(tmp) / "frame.png"
            cfg_path = Path(tmp) / "config.json"
            png_path.write_bytes(image.to_png_bytes())
            cfg_path.write_text(compact_json(cfg.to_obj()), "utf-8")
            proc = subprocess.run(
                [resolved, str(png_path), str(cfg_path)], capture_output=True, text=True
            )
        if proc.returncode != 0:
            raise BackendFailure(
                f"{self.backend_id} exited {proc.returncode}: {proc.stderr.strip()[:200]}"
            )
        return parse_token_table(proc.stdout, self.backend_id)


class NoisyBackend:
    """Wraps another backend and perturbs its tokens deterministically.

    Each character is confused with probability `char_error_rate` (using
    the confusion table when it applies, a random alphanumeric otherwise)
    and each token is dropped with probability `drop_rate`. The RNG is
    seeded per frame so results do not depend on processing order.
    """

    def __init__(
        self,
        inner,
        char_error_rate: float = 0.05,
        drop_rate: float = 0.1,
        confusions: dict[str, str] | None = None,
        seed: int = 0,
    ):
        self.inner = inner
        self.char_error_rate = char_error_rate
        self.drop_rate = drop_rate
        self.confusions = DEFAULT_CONFUSIONS if confusions is None else confusions
        self.seed = seed
        self.backend_id = (
            f"{inner.backend_id}+noise(err={char_error_rate},drop={drop_rate},seed={seed})"
        )

    def _perturb(self, text: str, rng: random.Random) -> str:
        out = []
        for ch in text:
            if rng.random() < self.char_error_rate:
                out.append(self.confusions.get(ch) or rng.choice("abcdefghijklmnopqrstuvwxyz0123456789"))
            else:
                out.append(ch)
        return "".join(out)

    def recognize(
        self, image: Image, cfg: OcrConfig, frame_index: int, bundle_root: Path | None
    ) -> list[RawToken]:
        raw = self.inner.recognize(image, cfg, frame_index=frame_index, bundle_root=bundle_root)
        rng = random.Random(f"{self.seed}:{frame_index}")
        kept = []
        for text, x, y, w, h, conf in raw:
            if rng.random() < self.drop_rate:
                continue
            kept.append((self._perturb(text, rng), x, y, w, h, conf))
        return kept


def get_backend(backend_id: str):
    """Resolve a CLI backend id: "mock" or the path/name of an engine."""
    if backend_id == "mock":
        return MockBackend()
    if shutil.which(backend_id) or os.path.exists(backend_id):
        return SubprocessBackend(backend_id)
    raise BackendUnavailable(f"no such OCR backend: {backend_id!r}")


# ---------------------------------------------------------------------------
# Recognition entry point and cache
# ---------------------------------------------------------------------------


def _cache_path(bundle: SessionBundle, frame_index: int) -> Path:
    return bundle.ocr_dir / f"{frame_index:06d}.json"


def config_fingerprint(backend_id: str, cfg: OcrConfig) -> str:
    return fingerprint({"backend": backend_id, "config": cfg.to_obj()})


def run_ocr(
    bundle: SessionBundle, frame_index: int, backend, cfg: OcrConfig | None = None
) -> OcrFrame:
    """Recognize one frame, consulting and refreshing the on-disk cache.

    Returned bounding boxes are in original frame coordinates. A cache
    entry is reused only when its config fingerprint matches.
    """
    cfg = cfg or OcrConfig()
    fp = config_fingerprint(backend.backend_id, cfg)
    cache = _cache_path(bundle, frame_index)
    if cache.exists():
        import json

        obj = json.loads(cache.read_text("utf-8"))
        if obj.get("config_fingerprint") == fp:
            return OcrFrame.from_obj(obj)

    img = bundle.reconstruct_frame(frame_index)
    pre = preprocess_image(img, cfg)
    raw = backend.recognize(pre, cfg, frame_index=frame_index, bundle_root=bundle.root)

    u = cfg.upscale_factor
    tokens = []
    for text, x, y, w, h, conf in raw:
        text = text.strip()
        if not text:
            continue
        ox, oy = x // u, y // u
        ow, oh = max(1, w // u), max(1, h // u)
        ox = min(max(ox, 0), img.width - 1)
        oy = min(max(oy, 0), img.height - 1)
        ow = min(ow, img.width - ox)
        oh = min(oh, img.height - oy)
        tokens.append(OcrToken(text=text, x=ox, y=oy, w=ow, h=oh, confidence=min(max(conf, 0), 100)))
    tokens.sort(key=lambda t: (t.y, t.x, t.text))

    frame = OcrFrame(frame_index=frame_index, tokens=tuple(tokens), backend_id=backend.backend_id, config_fingerprint=fp)
    bundle.ocr_dir.mkdir(exist_ok=True)
    tmp = cache.with_suffix(".json.tmp")
    tmp.write_text(compact_json(frame.to_obj()) + "\n", "utf-8")
    os.replace(tmp, cache)
    return frame


def load_cached_frame(bundle: SessionBundle, frame_index: int) -> OcrFrame | None:
    cache = _cache_path(bundle, frame_index)
    if not cache.exists():
        return None
    import json

    return OcrFrame.from_obj(json.loads(cache.read_text("utf-8")))


def token_at_point(frame: OcrFrame, x: int, y: int) -> OcrToken | None:
    """Token whose box contains (x, y); smallest area wins on nesting.

    Falls back to the nearest token center within a small radius, so
    clicks landing just outside a glyph box still resolve.
    """
    containing = [t for t in frame.tokens if t.contains(x, y)]
    if containing:
        return min(containing, key=lambda t: (t.area, t.y, t.x))
    best = None
    best_key = None
    for t in frame.tokens:
        cx, cy = t.center
        dist = math.hypot(cx - x, cy - y)
        if dist <= NEAREST_TOKEN_RADIUS_PX:
            key = (dist, t.y, t.x)
            if best_key is None or key < best_key:
                best, best_key = t, key
    return best
