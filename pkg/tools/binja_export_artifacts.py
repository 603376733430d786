#!/usr/bin/env python3
# Binary Ninja exporter for the artifact interchange format.
#
# Usage: python3 binja_export_artifacts.py <binary> <output.json>
# Requires a Binary Ninja install with the python API on sys.path.

import json
import sys

import binaryninja as bn


def hexaddr(addr):
    return "0x%08x" % addr


def main():
    if len(sys.argv) != 3:
        print("usage: binja_export_artifacts.py <binary> <output.json>", file=sys.stderr)
        return 1
    bv = bn.load(sys.argv[1])
    bv.update_analysis_and_wait()

    functions = []
    for fn in bv.functions:
        if fn.symbol.type == bn.SymbolType.ImportedFunctionSymbol:
            continue
        blocks = []
        for bb in fn.basic_blocks:
            lines = ["".join(tok.text for tok in line.tokens) for line in bb.get_disassembly_text()]
            lines = [line for line in lines if line.strip()]
            if lines:
                blocks.append({"addr": hexaddr(bb.start), "lines": lines})
        functions.append({"entry": hexaddr(fn.start), "name": fn.name, "blocks": blocks})

    strings = [{"addr": hexaddr(s.start), "literal": s.value} for s in bv.strings]
    string_starts = {s.start for s in bv.strings}

    globals_ = []
    for addr, var in bv.data_vars.items():
        if addr in string_starts:
            continue
        symbol = bv.get_symbol_at(addr)
        if symbol is None:
            continue
        globals_.append({"addr": hexaddr(addr), "name": symbol.name, "type": str(var.type)})

    xrefs = []
    for fn in bv.functions:
        for ref in bv.get_code_refs(fn.start):
            xrefs.append({"from": hexaddr(ref.address), "to": hexaddr(fn.start), "kind": "call"})
    for g in globals_:
        addr = int(g["addr"], 16)
        for ref in bv.get_code_refs(addr):
            xrefs.append({"from": hexaddr(ref.address), "to": g["addr"], "kind": "data"})

    payload = {
        "binary_id": bv.file.filename.rsplit("/", 1)[-1],
        "functions": functions,
        "globals": globals_,
        "strings": strings,
        "xrefs": xrefs,
    }
    with open(sys.argv[2], "w") as fh:
        json.dump(payload, fh, indent=2)
    print("wrote %s (%d functions)" % (sys.argv[2], len(functions)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
