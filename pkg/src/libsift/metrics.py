"""Complexity features over assembly functions.

Four scalar features per function: token-volume (Halstead-style over
mnemonics/operands), instruction count, cyclomatic complexity of the CFG,
and a maintainability index combining the three.  Lower index = more
complex = more characteristic of a library; the index is only ever used to
rank functions against each other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .interchange import FunctionRecord


@dataclass(frozen=True)
class ComplexityProfile:
    hv: float
    loc: int
    cc: int
    mi: float


def halstead_volume(record: FunctionRecord) -> float:
    """(N1 + N2) * log2(n1 + n2) over mnemonic and raw operand tokens.

    Mnemonics are the operator alphabet, raw operand strings the operand
    alphabet.  A one-token vocabulary yields volume 0.
    """
    total = 0
    mnemonics = set()
    operands = set()
    for block in record.blocks:
        for ins in block.instructions:
            total += 1 + len(ins.operands)
            mnemonics.add(ins.mnemonic)
            operands.update(ins.operands)
    if total == 0:
        raise ValueError("function has no instructions")
    return total * math.log2(len(mnemonics) + len(operands))


def lines_of_code(record: FunctionRecord) -> int:
    """Total instruction count across all blocks."""
    loc = record.instruction_count()
    if loc == 0:
        raise ValueError("function has no instructions")
    return loc


def cyclomatic_complexity(record: FunctionRecord) -> int:
    """edges - nodes + 2, clamped to a minimum of 1.

    The clamp covers disconnected CFG fragments some disassemblers emit;
    a well-formed single-component graph never needs it.
    """
    return max(1, len(record.edges) - len(record.blocks) + 2)


def maintainability_index(hv: float, cc: int, loc: int) -> float:
    """171 - 5.2*ln(max(hv,1)) - 0.23*cc - 16.2*ln(loc).

    hv below 1 is clamped so the log stays defined; only the relative
    ordering of the result is ever consumed.
    """
    if loc < 1:
        raise ValueError("loc must be >= 1")
    if cc < 1:
        raise ValueError("cc must be >= 1")
    if hv < 0:
        raise ValueError("hv must be >= 0")
    return 171.0 - 5.2 * math.log(max(hv, 1.0)) - 0.23 * cc - 16.2 * math.log(loc)


def compute_profile(record: FunctionRecord) -> ComplexityProfile:
    """All four features for one function."""
    hv = halstead_volume(record)
    loc = lines_of_code(record)
    cc = cyclomatic_complexity(record)
    return ComplexityProfile(hv, loc, cc, maintainability_index(hv, cc, loc))
