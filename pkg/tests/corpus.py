"""Synthetic matching corpus: mock-OCR frames over a generated binary map.

Generates a 30-function artifact map with structurally distinct symbols,
then 200 frames: most show one function's symbols, the rest are
no-function frames (stoplist-only token sets and string-window traps in
the style of a Defined Strings view). One trap deliberately lists a
string token unique to a single function, the classic false-positive
case. Noise comes from the library's own injection wrapper.
"""

from __future__ import annotations

import random

from rescribe.artifacts import artifact_map_from_obj
from rescribe.ocr import NoisyBackend, OcrConfig, OcrFrame, OcrToken

from oracles import levenshtein_matrix

CHROME = ["File", "View", "Window", "Help", "Tools", "Options", "Analysis"]
MNEMONICS = ["mov", "eax", "push", "rbp", "call", "ret", "cmp", "jne", "xor", "lea", "test", "edx"]
N_FUNCTIONS = 30
N_FRAMES = 200
N_WITH_FUNCTION = 140


def _random_symbol(rng: random.Random) -> str:
    return "".join(rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(rng.randint(10, 12)))


def _distinct_symbols(rng: random.Random, count: int, min_distance: int = 5) -> list[str]:
    symbols: list[str] = []
    while len(symbols) < count:
        cand = _random_symbol(rng)
        if all(levenshtein_matrix(cand, s) >= min_distance for s in symbols):
            symbols.append(cand)
    return symbols


def make_corpus_map(seed: int = 1001):
    rng = random.Random(seed)
    words = _distinct_symbols(rng, N_FUNCTIONS * 4)
    functions = []
    strings = []
    per_fn_syms: dict[int, list[str]] = {}
    for i in range(N_FUNCTIONS):
        entry = 0x00400000 + i * 0x200
        u = words[i * 4 : i * 4 + 4]  # three code symbols + one string word
        per_fn_syms[entry] = u
        name = f"FUN_{entry:08x}"
        functions.append(
            {
                "entry": f"0x{entry:08x}",
                "name": name,
                "blocks": [
                    {
                        "addr": f"0x{entry:08x}",
                        "lines": [
                            f"{name}:",
                            f"call {u[0]}",
                            "mov eax, ebx",
                            f'lea rax, "error: {u[3]} not accepted"',
                        ],
                    },
                    {
                        "addr": f"0x{entry + 0x40:08x}",
                        "lines": [f"{u[1]}:", f"cmp eax, {u[2]}", "jne exit", "call globalhelper"],
                    },
                ],
            }
        )
        strings.append({"addr": f"0x{0x600000 + i * 0x20:08x}", "literal": f"error: {u[3]} not accepted"})
    amap = artifact_map_from_obj(
        {"binary_id": "corpus", "functions": functions, "globals": [], "strings": strings, "xrefs": []}
    )
    return amap, per_fn_syms


def _grid_tokens(texts: list[str]) -> list[tuple[str, int, int, int, int, int]]:
    rows = []
    for i, text in enumerate(texts):
        x = 8 + (i % 3) * 210
        y = 8 + (i // 3) * 14
        rows.append((text, x, y, min(7 * len(text), 200), 10, 92))
    return rows


def make_corpus_frames(per_fn_syms: dict[int, list[str]], seed: int = 2002):
    """Raw token tables plus ground truth entry per frame (None = no function)."""
    rng = random.Random(seed)
    entries = sorted(per_fn_syms)
    plans: list[tuple[str, int | None]] = [("fn", rng.choice(entries)) for _ in range(N_WITH_FUNCTION)]
    n_nofn = N_FRAMES - N_WITH_FUNCTION
    for i in range(n_nofn - 1):
        plans.append(("stoplist" if i % 2 == 0 else "strings", None))
    plans.append(("hot_trap", None))
    rng.shuffle(plans)

    shared_string_words = ["error:", "not", "accepted", "usage:", "exit", "globalhelper"]
    raw_frames = []
    truths = []
    for kind, entry in plans:
        if kind == "fn":
            syms = per_fn_syms[entry]
            texts = []
            if rng.random() < 0.5:
                texts.append(f"FUN_{entry:08x}")
            texts += rng.sample(syms[:3], rng.randint(2, 3))
            texts += rng.sample(MNEMONICS, 4)
            texts += rng.sample(CHROME, 2)
            truths.append(entry)
        elif kind == "stoplist":
            texts = rng.sample(MNEMONICS, rng.randint(5, 8)) + rng.sample(CHROME, 3)
            truths.append(None)
        elif kind == "strings":
            texts = ["Defined", "Strings"] + rng.sample(shared_string_words, 4) + rng.sample(CHROME, 2)
            truths.append(None)
        else:  # hot trap: one genuinely unique string word leaks in
            trap_entry = entries[7]
            texts = ["Defined", "Strings", "error:", "not", "accepted", per_fn_syms[trap_entry][3]]
            truths.append(None)
        rng.shuffle(texts)
        raw_frames.append(_grid_tokens(texts))
    return raw_frames, truths


class _ListBackend:
    backend_id = "list"

    def __init__(self, frames):
        self.frames = frames

    def recognize(self, image, cfg, frame_index, bundle_root):
        return self.frames[frame_index]


def noisy_ocr_frames(raw_frames, char_error_rate=0.05, drop_rate=0.10, seed=7) -> list[OcrFrame]:
    noisy = NoisyBackend(
        _ListBackend(raw_frames), char_error_rate=char_error_rate, drop_rate=drop_rate, seed=seed
    )
    cfg = OcrConfig(upscale_factor=1)
    frames = []
    for i in range(len(raw_frames)):
        raw = noisy.recognize(None, cfg, frame_index=i, bundle_root=None)
        tokens = sorted(
            (OcrToken(t, x, y, w, h, c) for t, x, y, w, h, c in raw if t.strip()),
            key=lambda tok: (tok.y, tok.x, tok.text),
        )
        frames.append(
            OcrFrame(frame_index=i, tokens=tuple(tokens), backend_id=noisy.backend_id, config_fingerprint="corpus")
        )
    return frames
