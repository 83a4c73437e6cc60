"""IDAPython exporter: dump the open database as a libsift interchange
document.

Run inside IDA (File > Script file...) or headless:

    ida64 -A -S"ida_export.py /tmp/out.jsonl tpl" binary.so

Writes one JSON line for the header and one per function, matching
FORMAT.md. Operands are IDA's rendered token strings; the pipeline's
normalizer abstracts immediates, memory references, and call targets on
its own, so no cleanup is needed here.

This script only runs under IDA; it is shipped as documentation of the
expected producer side.
"""
import json
import sys

try:
    import ida_auto
    import ida_entry
    import ida_funcs
    import ida_gdl
    import ida_kernwin
    import ida_nalt
    import ida_segment
    import ida_ua
    import idautils
    import idc
except ImportError:
    sys.exit("this script must run inside IDA (idapython not importable)")


def export_names():
    """Addresses present in the export table."""
    out = set()
    for i in range(ida_entry.get_entry_qty()):
        ordinal = ida_entry.get_entry_ordinal(i)
        out.add(ida_entry.get_entry(ordinal))
    return out


def function_record(func, exports):
    name = ida_funcs.get_func_name(func.start_ea)
    seg = ida_segment.getseg(func.start_ea)
    section = ida_segment.get_segm_name(seg) if seg else ".text"

    flow = ida_gdl.FlowChart(func, flags=ida_gdl.FC_NOEXT)
    ids = {}
    blocks = []
    for bb in flow:
        ids[bb.id] = len(ids)
        instructions = []
        ea = bb.start_ea
        while ea < bb.end_ea:
            insn = ida_ua.insn_t()
            size = ida_ua.decode_insn(insn, ea)
            if size <= 0:
                break
            row = [ida_ua.print_insn_mnem(ea) or "?"]
            for op_index in range(8):
                text = idc.print_operand(ea, op_index)
                if not text:
                    break
                row.append(text)
            instructions.append(row)
            ea += size
        if instructions:
            blocks.append({"id": ids[bb.id], "instructions": instructions})

    edges = []
    seen = set()
    for bb in flow:
        if bb.id not in ids:
            continue
        for succ in bb.succs():
            if succ.id in ids:
                edge = (ids[bb.id], ids[succ.id])
                if edge not in seen:
                    seen.add(edge)
                    edges.append(list(edge))

    if not blocks:
        return None
    return {
        "name": name,
        "section": section,
        "is_export": func.start_ea in exports,
        "blocks": blocks,
        "edges": edges,
    }


def main():
    argv = idc.ARGV if getattr(idc, "ARGV", None) else sys.argv
    if len(argv) < 2:
        out_path = ida_kernwin.ask_file(True, "*.jsonl", "Output document")
        kind = "tpl"
    else:
        out_path = argv[1]
        kind = argv[2] if len(argv) > 2 else "tpl"
    if not out_path:
        return

    ida_auto.auto_wait()
    exports = export_names()
    binary_id = ida_nalt.get_root_filename()

    count = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        header = {"binary_id": binary_id, "kind": kind, "format_version": 1}
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for ea in idautils.Functions():
            func = ida_funcs.get_func(ea)
            record = function_record(func, exports)
            if record is None:
                continue
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")
            count += 1
    print("exported %d functions to %s" % (count, out_path))


main()
