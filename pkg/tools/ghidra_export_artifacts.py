# Ghidra headless exporter for the artifact interchange format.
#
# Usage:
#   analyzeHeadless <proj_dir> <proj> -import <binary> \
#       -postScript ghidra_export_artifacts.py <output.json>
#
# Writes {binary_id, functions[{entry,name,blocks[{addr,lines}]}],
# globals, strings, xrefs} with hex-string addresses. Runs under Ghidra's
# Jython, so no Python 3 syntax here.

import json

from ghidra.program.model.block import BasicBlockModel
from ghidra.program.model.symbol import RefType
from ghidra.util.task import ConsoleTaskMonitor


def hexaddr(addr):
    return "0x%08x" % addr.getOffset()


def block_lines(program, block):
    listing = program.getListing()
    lines = []
    units = listing.getCodeUnits(block, True)
    while units.hasNext():
        lines.append(units.next().toString())
    return lines


def run():
    args = getScriptArgs()
    out_path = args[0] if len(args) else "artifacts.json"
    program = currentProgram
    monitor = ConsoleTaskMonitor()
    model = BasicBlockModel(program)

    functions = []
    for fn in program.getFunctionManager().getFunctions(True):
        if fn.isExternal():
            continue
        blocks = []
        it = model.getCodeBlocksContaining(fn.getBody(), monitor)
        while it.hasNext():
            block = it.next()
            lines = block_lines(program, block)
            if lines:
                blocks.append({"addr": hexaddr(block.getFirstStartAddress()), "lines": lines})
        functions.append(
            {"entry": hexaddr(fn.getEntryPoint()), "name": fn.getName(), "blocks": blocks}
        )

    globals_ = []
    strings = []
    listing = program.getListing()
    data = listing.getDefinedData(True)
    while data.hasNext():
        d = data.next()
        if d.hasStringValue():
            strings.append({"addr": hexaddr(d.getAddress()), "literal": str(d.getValue())})
        else:
            symbol = d.getPrimarySymbol()
            if symbol is not None:
                globals_.append(
                    {
                        "addr": hexaddr(d.getAddress()),
                        "name": symbol.getName(),
                        "type": d.getDataType().getName(),
                    }
                )

    xrefs = []
    refs = program.getReferenceManager().getReferenceIterator(program.getMinAddress())
    while refs.hasNext():
        ref = refs.next()
        rt = ref.getReferenceType()
        if rt.isCall():
            kind = "call"
        elif rt.isData():
            kind = "data"
        else:
            continue
        xrefs.append(
            {"from": hexaddr(ref.getFromAddress()), "to": hexaddr(ref.getToAddress()), "kind": kind}
        )

    payload = {
        "binary_id": program.getName(),
        "functions": functions,
        "globals": globals_,
        "strings": strings,
        "xrefs": xrefs,
    }
    fh = open(out_path, "w")
    try:
        fh.write(json.dumps(payload, indent=2))
    finally:
        fh.close()
    print("wrote %s (%d functions)" % (out_path, len(functions)))


run()
