#!/usr/bin/env python3
"""OCR adapter contract wrapper around tesseract.

Invoked as ``tesseract_adapter.py <png_path> <config_path>`` and prints
one token per line: text<TAB>x<TAB>y<TAB>w<TAB>h<TAB>conf, coordinates in
the pixels of the image it was given. The config file is the engine
config JSON (segmentation hint and character whitelist are honored; the
pipeline itself already did upscaling/thresholding).
"""

import json
import subprocess
import sys

PSM_BY_HINT = {"sparse": "11", "block": "6", "line": "7"}


def main() -> int:
    if len(sys.argv) != 3:
        print("usage: tesseract_adapter.py <png> <config.json>", file=sys.stderr)
        return 2
    png_path, config_path = sys.argv[1], sys.argv[2]
    try:
        cfg = json.load(open(config_path, "r", encoding="utf-8"))
    except (OSError, ValueError):
        cfg = {}

    argv = ["tesseract", png_path, "stdout", "--psm", PSM_BY_HINT.get(cfg.get("segmentation_hint"), "11"), "tsv"]
    whitelist = cfg.get("char_whitelist")
    if whitelist:
        argv += ["-c", f"tessedit_char_whitelist={whitelist}"]
    proc = subprocess.run(argv, capture_output=True, text=True)
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr)
        return proc.returncode

    lines = proc.stdout.splitlines()
    if not lines:
        return 0
    header = lines[0].split("\t")
    col = {name: i for i, name in enumerate(header)}
    for line in lines[1:]:
        parts = line.split("\t")
        if len(parts) != len(header):
            continue
        text = parts[col["text"]].strip()
        conf = float(parts[col["conf"]])
        if not text or conf < 0:
            continue
        print(
            "\t".join(
                [
                    text,
                    parts[col["left"]],
                    parts[col["top"]],
                    parts[col["width"]],
                    parts[col["height"]],
                    str(int(conf)),
                ]
            )
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
