from __future__ import annotations

import random

import numpy as np
import pytest

from rescribe.artifacts import BinaryArtifactMap, artifact_map_from_obj
from rescribe.session import Image


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" in nodeid and getattr(rep, "when", "call") == "call":
                verdict = "PASS" if outcome == "passed" else "FAIL"
                lines.append((nodeid.split("::")[-1], verdict))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, verdict in sorted(lines):
            terminalreporter.write_line(f"[{verdict}] {name}")


def random_image(rng: random.Random, width: int, height: int) -> Image:
    arr = np.frombuffer(
        bytes(rng.getrandbits(8) for _ in range(width * height * 4)), dtype=np.uint8
    ).reshape(height, width, 4).copy()
    arr[:, :, 3] = 255
    return Image.from_array(arr)


def mutate_image(rng: random.Random, img: Image, max_edits: int = 4) -> Image:
    """Random rectangle edits, occasionally none (identical frame)."""
    out = img.copy()
    for _ in range(rng.randint(0, max_edits)):
        w = rng.randint(1, max(1, img.width // 3))
        h = rng.randint(1, max(1, img.height // 3))
        x = rng.randint(0, img.width - w)
        y = rng.randint(0, img.height - h)
        color = [rng.randrange(256) for _ in range(3)] + [255]
        out.rgba[y : y + h, x : x + w] = color
    return out


@pytest.fixture
def two_function_map() -> BinaryArtifactMap:
    return artifact_map_from_obj(
        {
            "binary_id": "demo",
            "functions": [
                {
                    "entry": "0x00401000",
                    "name": "FUN_00401000",
                    "blocks": [
                        {
                            "addr": "0x00401000",
                            "lines": ["FUN_00401000:", "call hashtableInsert", "mov eax, 1"],
                        },
                        {"addr": "0x00401020", "lines": ["cmp eax, [DAT_00403000]", "jne FUN_00401000"]},
                    ],
                },
                {
                    "entry": "0x00402000",
                    "name": "FUN_00402000",
                    "blocks": [
                        {
                            "addr": "0x00402000",
                            "lines": ["FUN_00402000:", "call quicksortPivot", "mov eax, [DAT_00403000]"],
                        }
                    ],
                },
            ],
            "globals": [{"addr": "0x00403000", "name": "DAT_00403000", "type": "undefined8"}],
            "strings": [{"addr": "0x00404000", "literal": "invalid key"}],
            "xrefs": [
                {"from": "0x00401020", "to": "0x00403000", "kind": "data"},
                {"from": "0x00402000", "to": "0x00403000", "kind": "data"},
            ],
        }
    )
