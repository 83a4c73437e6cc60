"""Function vectorization.

Instruction streams are normalized into class-tagged tokens, then hashed
into fixed-dimension vectors by signed feature hashing of unigrams and
adjacent bigrams.  The built-in embedder is deterministic and
dependency-free; vectors from a real similarity model can be imported
instead, as long as the dimension matches the repository.
"""
from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass
from hashlib import blake2b
from typing import Iterable, Mapping

import numpy as np

from . import _kernels
from .errors import EmbeddingError, ParseError
from .interchange import BinaryDocument, FunctionRecord

DEFAULT_DIM = 768
DEFAULT_SEED = 1

MNEMONIC = "MNEMONIC"
REG = "REG"
IMM = "IMM"
MEM = "MEM"
NEARFUNC = "NEARFUNC"
EXTFUNC = "EXTFUNC"

_ABSTRACT_KINDS = frozenset({IMM, MEM, NEARFUNC, EXTFUNC})


@dataclass(frozen=True)
class NormalizedToken:
    text: str
    kind: str


def _register_names():
    regs = set()
    for base in ("ax", "bx", "cx", "dx"):
        regs.update({"r" + base, "e" + base, base, base[0] + "l", base[0] + "h"})
    for base in ("sp", "bp", "si", "di"):
        regs.update({"r" + base, "e" + base, base, base + "l"})
    for i in range(8, 16):
        regs.update({"r%d" % i, "r%dd" % i, "r%dw" % i, "r%db" % i})
    for i in range(16):
        regs.update({"xmm%d" % i, "ymm%d" % i})
    regs.update({"rip", "cs", "ds", "es", "fs", "gs", "ss"})
    return frozenset(regs)


REGISTERS = _register_names()

_BRANCH_EXTRA = frozenset({"call", "lcall", "callq", "loop", "loope", "loopne"})
_IMM_RE = re.compile(r"^[+-]?(0x[0-9a-fA-F]+|\d+)$")


def _is_branch(mnemonic: str) -> bool:
    return mnemonic in _BRANCH_EXTRA or mnemonic.startswith("j")


def _classify(operand: str, mnemonic: str, local_names) -> NormalizedToken:
    if operand in REGISTERS:
        return NormalizedToken(operand, REG)
    if operand in _ABSTRACT_KINDS:
        # already-abstracted input (synthetic corpora, preprocessed exports)
        return NormalizedToken(operand, operand)
    if _IMM_RE.match(operand):
        return NormalizedToken(IMM, IMM)
    if "[" in operand:
        return NormalizedToken(MEM, MEM)
    if _is_branch(mnemonic):
        if operand in local_names:
            return NormalizedToken(NEARFUNC, NEARFUNC)
        return NormalizedToken(EXTFUNC, EXTFUNC)
    # bare symbol on a data instruction: treat as a memory reference
    return NormalizedToken(MEM, MEM)


def normalize(record: FunctionRecord, local_names=frozenset()) -> list:
    """Tokenize one function: mnemonics and registers verbatim, everything
    else abstracted to its class.  Blocks are concatenated in ascending id
    order, so block relabeling cannot change the stream.
    """
    tokens = []
    for block in sorted(record.blocks, key=lambda b: b.id):
        for ins in block.instructions:
            tokens.append(NormalizedToken(ins.mnemonic, MNEMONIC))
            for op in ins.operands:
                tokens.append(_classify(op, ins.mnemonic, local_names))
    return tokens


def normalize_document(doc: BinaryDocument) -> dict:
    """Token streams for every function, resolving near/external targets
    against the document's own function names."""
    local = frozenset(fn.name for fn in doc.functions)
    return {fn.name: normalize(fn, local) for fn in doc.functions}


class HashedNgramEmbedder:
    """Deterministic signed feature hashing of token unigrams and bigrams.

    Hash function and seed are fixed at construction and recorded in
    repository headers, so repositories reproduce across machines.
    """

    name = "hashed-ngram-v1"

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = DEFAULT_SEED):
        if dim < 2:
            raise EmbeddingError("dim must be >= 2")
        self.dim = int(dim)
        self.seed = int(seed)
        self._key = struct.pack("<q", self.seed)
        self._slots = {}

    @property
    def info(self) -> str:
        return "%s/d%d/s%d" % (self.name, self.dim, self.seed)

    def _slot(self, key: str):
        cached = self._slots.get(key)
        if cached is None:
            digest = blake2b(key.encode("utf-8"), digest_size=8, key=self._key).digest()
            value = int.from_bytes(digest, "little")
            cached = ((value >> 1) % self.dim, 1.0 if value & 1 else -1.0)
            self._slots[key] = cached
        return cached

    def embed_tokens(self, tokens) -> np.ndarray:
        """L2-normalized vector for one token stream."""
        if not tokens:
            raise EmbeddingError("cannot embed an empty token stream")
        vec = np.zeros(self.dim, dtype=np.float64)
        keys = ["%s:%s" % (t.kind, t.text) for t in tokens]
        for key in keys:
            slot, sign = self._slot(key)
            vec[slot] += sign
        for a, b in zip(keys, keys[1:]):
            slot, sign = self._slot(a + "\x1f" + b)
            vec[slot] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            # total sign cancellation; vanishingly rare but must stay deterministic
            slot, _ = self._slot("\x1f".join(keys) + "\x1f#cancelled")
            vec[slot] = 1.0
            norm = 1.0
        return vec / norm

    def embed_function(self, record: FunctionRecord, local_names=frozenset()) -> np.ndarray:
        return self.embed_tokens(normalize(record, local_names))

    def embed_document(self, doc: BinaryDocument):
        """(function names, matrix of their vectors) in document order."""
        streams = normalize_document(doc)
        names = [fn.name for fn in doc.functions]
        mat = np.empty((len(names), self.dim), dtype=np.float64)
        for i, name in enumerate(names):
            mat[i] = self.embed_tokens(streams[name])
        return names, mat


def import_embeddings(doc: BinaryDocument, data, dim: int) -> dict:
    """Load an external vector file for `doc`; returns name -> unit vector.

    The file is JSON lines: a header (doc_id, dim, count), then one record
    per function.  Vectors are L2-normalized on import.
    """
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty vector file", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError("invalid JSON: %s" % exc.msg, line=1) from exc
    if header.get("doc_id") != doc.binary_id:
        raise EmbeddingError(
            "vector file is for %r, not %r" % (header.get("doc_id"), doc.binary_id)
        )
    if header.get("dim") != dim:
        raise EmbeddingError(
            "vector dimension %r does not match repository dimension %d"
            % (header.get("dim"), dim)
        )
    known = {fn.name for fn in doc.functions}
    out = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError("invalid JSON: %s" % exc.msg, line=lineno) from exc
        name = rec.get("function")
        if name not in known:
            raise EmbeddingError("vector for unknown function %r" % name)
        if name in out:
            raise EmbeddingError("duplicate vector for function %r" % name)
        values = np.asarray(rec.get("values", ()), dtype=np.float64)
        if values.shape != (dim,):
            raise EmbeddingError("vector for %r has wrong dimension" % name)
        if not np.isfinite(values).all():
            raise EmbeddingError("vector for %r has non-finite values" % name)
        norm = float(np.linalg.norm(values))
        if norm == 0.0:
            raise EmbeddingError("vector for %r has zero norm" % name)
        out[name] = values / norm
    count = header.get("count")
    if count is not None and count != len(out):
        raise EmbeddingError(
            "header count %r does not match %d records" % (count, len(out))
        )
    return out


def cosine(a, b) -> float:
    """cos(a, b) in [-1, 1]; identical arrays compare to exactly 1.0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise EmbeddingError("dimension mismatch")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise EmbeddingError("cosine of a zero vector is undefined")
    if np.array_equal(a, b):
        return 1.0
    value = float(a @ b) / (na * nb)
    return min(1.0, max(-1.0, value))


def batched_similarity(queries, keys, batch: int = 128) -> np.ndarray:
    """Cosine matrix between two vector stacks, processed `batch` query
    rows at a time; results match across batch sizes to 1e-9."""
    q = np.ascontiguousarray(queries, dtype=np.float64)
    k = np.ascontiguousarray(keys, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2 or q.shape[1] != k.shape[1]:
        raise EmbeddingError("dimension mismatch")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    qn = np.linalg.norm(q, axis=1)
    kn = np.linalg.norm(k, axis=1)
    if (qn == 0.0).any() or (kn == 0.0).any():
        raise EmbeddingError("cosine of a zero vector is undefined")
    q = q / qn[:, None]
    k = k / kn[:, None]
    return _kernels.sim_matrix(q, k, int(batch))
