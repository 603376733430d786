from __future__ import annotations

import json
import random

import numpy as np
import pytest

from rescribe.errors import (
    CorruptPatch,
    DimensionMismatch,
    IndexOutOfRange,
    OutOfBounds,
    SchemaViolation,
    UnsortedEvents,
)
from rescribe.session import (
    Image,
    Keystroke,
    MouseClick,
    PatchRegion,
    SessionManifest,
    WindowInfo,
    apply_patches,
    diff_frames,
    load_bundle,
    reserialize_metadata,
    write_bundle,
)

from conftest import mutate_image, random_image


def make_manifest(frame_count: int, start: int = 1000, end: int = 500_000) -> SessionManifest:
    return SessionManifest(
        session_id="s1",
        subject_pseudonym="subj-a",
        binary_id="demo",
        tool_hint="ida",
        start=start,
        end=end,
        frame_count=frame_count,
        capture_interval_ms=3000,
    )


def make_frames(n: int, seed: int = 0, size=(24, 16)) -> list[tuple[int, Image]]:
    rng = random.Random(seed)
    img = random_image(rng, *size)
    frames = [(1000, img)]
    for i in range(1, n):
        img = mutate_image(rng, img)
        frames.append((1000 + i * 3000, img))
    return frames


# ---------------------------------------------------------------------------
# Codec
# ---------------------------------------------------------------------------


def test_apply_patches_empty_is_identity():
    img = Image.blank(6, 4, (10, 20, 30, 255))
    out = apply_patches(img, [])
    assert out.same_pixels(img)
    assert out is not img


def test_apply_patches_places_white_square():
    base = Image.blank(4, 4, (0, 0, 0, 255))
    patch = PatchRegion(1, 1, 2, 2, np.full((2, 2, 4), 255, dtype=np.uint8))
    out = apply_patches(base, [patch])
    white = (out.rgba == 255).all(axis=2)
    assert int(white.sum()) == 4
    assert white[1:3, 1:3].all()
    assert (base.rgba[1, 1] == [0, 0, 0, 255]).all()  # base untouched


def test_apply_patches_out_of_bounds():
    base = Image.blank(4, 4)
    patch = PatchRegion(3, 3, 2, 2, np.zeros((2, 2, 4), dtype=np.uint8))
    with pytest.raises(OutOfBounds):
        apply_patches(base, [patch])


def test_diff_identical_images_is_empty():
    rng = random.Random(1)
    img = random_image(rng, 16, 12)
    assert diff_frames(img, img.copy()) == []


def test_diff_single_pixel():
    a = Image.blank(10, 10)
    b = a.copy()
    b.rgba[7, 5] = [255, 0, 0, 255]
    patches = diff_frames(a, b)
    assert len(patches) == 1
    p = patches[0]
    assert (p.x, p.y, p.width, p.height) == (5, 7, 1, 1)


def test_diff_two_disconnected_pixels_two_patches():
    a = Image.blank(64, 64)
    b = a.copy()
    b.rgba[0, 0] = [1, 2, 3, 255]
    b.rgba[63, 63] = [4, 5, 6, 255]
    patches = diff_frames(a, b)
    assert len(patches) == 2
    assert apply_patches(a, patches).same_pixels(b)


def test_diff_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        diff_frames(Image.blank(4, 4), Image.blank(5, 4))


def test_codec_round_trip_random_pairs():
    rng = random.Random(42)
    for _ in range(50):
        a = random_image(rng, rng.randint(1, 32), rng.randint(1, 32))
        b = mutate_image(rng, a)
        assert apply_patches(a, diff_frames(a, b)).same_pixels(b)


# ---------------------------------------------------------------------------
# Bundle write / load / reconstruct
# ---------------------------------------------------------------------------


def test_write_then_load_three_frames(tmp_path):
    frames = make_frames(3)
    events = [
        Keystroke(t=2000, key="a"),
        MouseClick(t=3000, x=1, y=1),
        WindowInfo(t=4000, title="IDA", x=0, y=0, w=24, h=16, focused=True),
    ]
    bundle = write_bundle(tmp_path / "b", make_manifest(3), frames, events)
    assert bundle.manifest.frame_count == 3
    assert len(bundle.frames) == 3
    assert len(bundle.events) == 3


def test_reconstruct_matches_encoded_frames(tmp_path):
    frames = make_frames(10, seed=3)
    bundle = write_bundle(tmp_path / "b", make_manifest(10), frames, [])
    for i, (_, img) in enumerate(frames):
        assert bundle.reconstruct_frame(i).same_pixels(img), f"frame {i}"


def test_reconstruct_sequential_equals_independent(tmp_path):
    frames = make_frames(8, seed=5)
    seq = write_bundle(tmp_path / "b", make_manifest(8), frames, [])
    sequential = [seq.reconstruct_frame(i) for i in range(8)]
    for i in range(7, -1, -1):
        fresh = load_bundle(tmp_path / "b")
        assert fresh.reconstruct_frame(i).same_pixels(sequential[i])


def test_reconstruct_index_out_of_range(tmp_path):
    bundle = write_bundle(tmp_path / "b", make_manifest(3), make_frames(3), [])
    with pytest.raises(IndexOutOfRange):
        bundle.reconstruct_frame(3)


def test_keyframe_forced_by_large_change(tmp_path):
    rng = random.Random(9)
    a = random_image(rng, 24, 16)
    b = random_image(rng, 24, 16)  # completely different content
    write_bundle(tmp_path / "b", make_manifest(2), [(1000, a), (4000, b)], [])
    assert (tmp_path / "b" / "frames" / "000001.kf.png").exists()


def test_keyframe_cadence_cap(tmp_path):
    img = Image.blank(8, 8, (9, 9, 9, 255))
    frames = []
    for i in range(102):
        nxt = img.copy()
        nxt.rgba[0, 0, 0] = i  # one-pixel change per frame
        frames.append((1000 + i * 10, nxt))
        img = nxt
    write_bundle(tmp_path / "b", make_manifest(102), frames, [])
    assert (tmp_path / "b" / "frames" / "000101.kf.png").exists()


def test_load_rejects_event_before_start(tmp_path):
    root = tmp_path / "b"
    write_bundle(root, make_manifest(2), make_frames(2), [])
    (root / "events.jsonl").write_text(
        json.dumps({"type": "key", "t": 10, "key": "a", "modifiers": []}) + "\n", "utf-8"
    )
    with pytest.raises(SchemaViolation):
        load_bundle(root)


def test_load_rejects_unsorted_events(tmp_path):
    root = tmp_path / "b"
    write_bundle(root, make_manifest(2), make_frames(2), [])
    lines = [
        json.dumps({"type": "key", "t": 5000, "key": "a", "modifiers": []}),
        json.dumps({"type": "key", "t": 4000, "key": "b", "modifiers": []}),
    ]
    (root / "events.jsonl").write_text("\n".join(lines) + "\n", "utf-8")
    with pytest.raises(UnsortedEvents):
        load_bundle(root)


def test_load_rejects_click_outside_screen(tmp_path):
    root = tmp_path / "b"
    write_bundle(root, make_manifest(2), make_frames(2), [])
    (root / "events.jsonl").write_text(
        json.dumps({"type": "click", "t": 5000, "x": 9000, "y": 2, "button": "left", "click_count": 1})
        + "\n",
        "utf-8",
    )
    with pytest.raises(SchemaViolation):
        load_bundle(root)


def test_load_names_missing_frame_index(tmp_path):
    root = tmp_path / "b"
    write_bundle(root, make_manifest(4), make_frames(4), [])
    for p in (root / "frames").glob("000002.*"):
        p.unlink()
    with pytest.raises(SchemaViolation, match="index 2"):
        load_bundle(root)


def test_load_rejects_missing_manifest(tmp_path):
    from rescribe.errors import MissingFile

    with pytest.raises(MissingFile):
        load_bundle(tmp_path)


def test_corrupt_region_file_detected(tmp_path):
    root = tmp_path / "b"
    frames = make_frames(3, seed=11)
    bundle = write_bundle(root, make_manifest(3), frames, [])
    import re

    patch_pngs = sorted(
        p for p in (root / "frames").glob("*.png") if re.fullmatch(r"\d{6}\.\d{2}\.png", p.name)
    )
    assert patch_pngs, "fixture needs at least one patch region"
    patch_pngs[0].write_bytes(Image.blank(1, 1).to_png_bytes())
    fresh = load_bundle(root)
    with pytest.raises(CorruptPatch):
        for i in range(3):
            fresh.reconstruct_frame(i)


def test_reserialize_is_byte_identical(tmp_path):
    root = tmp_path / "b"
    events = [
        Keystroke(t=2000, key="a", modifiers=("shift",)),
        MouseClick(t=2500, x=3, y=4, button="left", click_count=2),
    ]
    bundle = write_bundle(root, make_manifest(5), make_frames(5, seed=7), events)
    for rel, data in reserialize_metadata(bundle).items():
        assert (root / rel).read_bytes() == data, rel


def test_manifest_requires_start_before_end():
    with pytest.raises(SchemaViolation, match="start"):
        SessionManifest.from_json(
            json.dumps(
                {
                    "session_id": "x",
                    "subject_pseudonym": "y",
                    "binary_id": "z",
                    "start": 10,
                    "end": 5,
                    "frame_count": 0,
                    "capture_interval_ms": 1000,
                }
            )
        )
