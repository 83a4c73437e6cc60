"""Disassembly interchange documents.

A document is UTF-8 JSON lines: one header record, then one record per
function.  Field names are frozen in FORMAT.md.  Parsed documents are
treated as immutable values; every operation here returns a new document
and never mutates its input.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .errors import ParseError, ValidationError

FORMAT_VERSION = 1
DOCUMENT_KINDS = ("tpl", "target")

# Linkage stubs and init/fini glue carry no library-specific logic and are
# dropped before any feature extraction.
EXCLUDED_SECTIONS = frozenset({".plt", "extern", ".init", ".fini"})


@dataclass
class Instruction:
    mnemonic: str
    operands: tuple = ()


@dataclass
class BasicBlock:
    id: int
    instructions: list = field(default_factory=list)


@dataclass
class FunctionRecord:
    name: str
    section: str
    is_export: bool
    blocks: list = field(default_factory=list)
    edges: list = field(default_factory=list)

    def instruction_count(self) -> int:
        return sum(len(b.instructions) for b in self.blocks)


@dataclass
class BinaryDocument:
    binary_id: str
    kind: str
    functions: list = field(default_factory=list)
    format_version: int = FORMAT_VERSION


def _expect(record, key, typ, line):
    if key not in record:
        raise ParseError("missing field %r" % key, line=line)
    value = record[key]
    ok = isinstance(value, typ)
    if ok and typ is not bool and isinstance(value, bool):
        ok = False  # bool is an int subclass; never accept it for int fields
    if not ok:
        raise ParseError("field %r has wrong type" % key, line=line)
    return value


def _decode_function(record: dict, line: int) -> FunctionRecord:
    name = _expect(record, "name", str, line)
    section = _expect(record, "section", str, line)
    is_export = _expect(record, "is_export", bool, line)
    raw_blocks = _expect(record, "blocks", list, line)
    raw_edges = _expect(record, "edges", list, line)

    blocks = []
    for rb in raw_blocks:
        if not isinstance(rb, dict):
            raise ParseError("block record is not an object", line=line)
        bid = _expect(rb, "id", int, line)
        raw_instrs = _expect(rb, "instructions", list, line)
        instrs = []
        for ri in raw_instrs:
            if not isinstance(ri, list) or not ri:
                raise ParseError("instruction must be a non-empty array", line=line)
            if not all(isinstance(tok, str) for tok in ri):
                raise ParseError("instruction tokens must be strings", line=line)
            instrs.append(Instruction(ri[0], tuple(ri[1:])))
        blocks.append(BasicBlock(bid, instrs))

    edges = []
    for re_ in raw_edges:
        if (
            not isinstance(re_, list)
            or len(re_) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in re_)
        ):
            raise ParseError("edge must be a [from, to] integer pair", line=line)
        edges.append((re_[0], re_[1]))

    return FunctionRecord(name, section, is_export, blocks, edges)


def _validate_function(fn: FunctionRecord) -> None:
    if not fn.name:
        raise ValidationError("empty function name", function=fn.name)
    if not fn.blocks:
        raise ValidationError("function has no basic blocks", function=fn.name)
    ids = [b.id for b in fn.blocks]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate basic block id", function=fn.name)
    if fn.instruction_count() == 0:
        raise ValidationError("function has no instructions", function=fn.name)
    for ins in (i for b in fn.blocks for i in b.instructions):
        if not ins.mnemonic:
            raise ValidationError("empty mnemonic", function=fn.name)
    known = set(ids)
    seen_edges = set()
    for edge in fn.edges:
        if edge[0] not in known or edge[1] not in known:
            raise ValidationError(
                "edge %r references a missing block id" % (edge,), function=fn.name
            )
        if edge in seen_edges:
            raise ValidationError("duplicate edge %r" % (edge,), function=fn.name)
        seen_edges.add(edge)


def parse_document(data) -> BinaryDocument:
    """Parse bytes (or str) into a validated BinaryDocument.

    Raises ParseError for syntax/type problems (with a line number) and
    ValidationError for invariant violations (naming the function).
    """
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError("invalid JSON: %s" % exc.msg, line=lineno) from exc
        if not isinstance(obj, dict):
            raise ParseError("record is not an object", line=lineno)
        records.append((lineno, obj))

    if not records:
        raise ParseError("empty document: header record missing", line=1)

    header_line, header = records[0]
    binary_id = _expect(header, "binary_id", str, header_line)
    kind = _expect(header, "kind", str, header_line)
    version = _expect(header, "format_version", int, header_line)
    if kind not in DOCUMENT_KINDS:
        raise ParseError("kind must be one of %s" % (DOCUMENT_KINDS,), line=header_line)
    if version != FORMAT_VERSION:
        raise ParseError(
            "unsupported format_version %d (this build writes %d)"
            % (version, FORMAT_VERSION),
            line=header_line,
        )
    if not binary_id:
        raise ParseError("binary_id must be non-empty", line=header_line)

    functions = []
    names = set()
    for lineno, record in records[1:]:
        fn = _decode_function(record, lineno)
        _validate_function(fn)
        if fn.name in names:
            raise ValidationError("duplicate function name", function=fn.name)
        names.add(fn.name)
        functions.append(fn)

    return BinaryDocument(binary_id, kind, functions, version)


def serialize_document(doc: BinaryDocument) -> bytes:
    """Serialize a document; parse_document(serialize_document(d)) == d."""
    lines = [
        json.dumps(
            {
                "binary_id": doc.binary_id,
                "kind": doc.kind,
                "format_version": doc.format_version,
            },
            separators=(",", ":"),
        )
    ]
    for fn in doc.functions:
        lines.append(
            json.dumps(
                {
                    "name": fn.name,
                    "section": fn.section,
                    "is_export": fn.is_export,
                    "blocks": [
                        {
                            "id": b.id,
                            "instructions": [
                                [ins.mnemonic, *ins.operands] for ins in b.instructions
                            ],
                        }
                        for b in fn.blocks
                    ],
                    "edges": [list(e) for e in fn.edges],
                },
                separators=(",", ":"),
            )
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_document(path) -> BinaryDocument:
    with open(path, "rb") as fh:
        return parse_document(fh.read())


def save_document(doc: BinaryDocument, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_document(doc))


def filter_sections(
    doc: BinaryDocument, excluded: Iterable[str] = EXCLUDED_SECTIONS
) -> BinaryDocument:
    """Drop functions living in excluded sections (exact, case-sensitive).

    Idempotent; retained records are shared, not copied.
    """
    excluded = frozenset(excluded)
    kept = [fn for fn in doc.functions if fn.section not in excluded]
    return BinaryDocument(doc.binary_id, doc.kind, kept, doc.format_version)
