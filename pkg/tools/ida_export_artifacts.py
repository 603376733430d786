# IDA Pro exporter for the artifact interchange format.
#
# Usage (headless):
#   ida64 -A -S"ida_export_artifacts.py /path/out.json" <binary>
#
# Requires IDA 7.x+ with IDAPython.

import json
import sys

import ida_auto
import ida_bytes
import ida_funcs
import ida_kernwin
import ida_lines
import ida_nalt
import ida_name
import ida_pro
import idaapi
import idautils
import idc


def hexaddr(ea):
    return "0x%08x" % ea


def block_lines(start, end):
    lines = []
    ea = start
    while ea < end:
        text = ida_lines.tag_remove(idc.generate_disasm_line(ea, 0))
        if text:
            lines.append(text)
        ea = idc.next_head(ea, end)
    return lines


def export(out_path):
    functions = []
    for entry in idautils.Functions():
        fn = ida_funcs.get_func(entry)
        blocks = []
        for bb in idaapi.FlowChart(fn):
            lines = block_lines(bb.start_ea, bb.end_ea)
            if lines:
                blocks.append({"addr": hexaddr(bb.start_ea), "lines": lines})
        functions.append(
            {"entry": hexaddr(entry), "name": ida_funcs.get_func_name(entry), "blocks": blocks}
        )

    strings = [
        {"addr": hexaddr(s.ea), "literal": str(s)} for s in idautils.Strings()
    ]
    string_eas = {s.ea for s in idautils.Strings()}

    globals_ = []
    for ea, name in idautils.Names():
        if ida_funcs.get_func(ea) is not None or ea in string_eas:
            continue
        flags = ida_bytes.get_flags(ea)
        if ida_bytes.is_data(flags):
            globals_.append({"addr": hexaddr(ea), "name": name, "type": idc.get_type(ea) or "undefined"})

    xrefs = []
    for entry in idautils.Functions():
        for ref in idautils.XrefsTo(entry):
            if ref.iscode:
                xrefs.append({"from": hexaddr(ref.frm), "to": hexaddr(entry), "kind": "call"})
    for g in globals_:
        to_ea = int(g["addr"], 16)
        for ref in idautils.XrefsTo(to_ea):
            xrefs.append({"from": hexaddr(ref.frm), "to": g["addr"], "kind": "data"})

    payload = {
        "binary_id": ida_nalt.get_root_filename(),
        "functions": functions,
        "globals": globals_,
        "strings": strings,
        "xrefs": xrefs,
    }
    with open(out_path, "w") as fh:
        json.dump(payload, fh, indent=2)
    print("wrote %s (%d functions)" % (out_path, len(functions)))


def main():
    ida_auto.auto_wait()
    out_path = idc.ARGV[1] if len(idc.ARGV) > 1 else "artifacts.json"
    export(out_path)
    ida_pro.qexit(0)


main()
