"""Evaluation harness: ground-truth scoring, threshold sweeps, the
ablation matrix, stage timing, and a synthetic corpus generator with
planted reuse.

The generator gives every function its own instruction vocabulary and a
repeated three-instruction idiom, so unrelated functions land well below
the similarity thresholds while verbatim copies match exactly.  All
call/jump targets point at a shared external symbol pool, never at
document-local names, so a copied function embeds identically wherever it
lands.
"""
from __future__ import annotations

import json
import logging
import math
import random
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .detector import AGG_WEIGHTED_MEAN, AGGREGATION_MODES, DEFAULT_BATCH, aggregate
from .embedding import DEFAULT_DIM, DEFAULT_SEED, HashedNgramEmbedder
from .errors import ConfigError, ParseError
from .interchange import BasicBlock, BinaryDocument, FunctionRecord, Instruction, filter_sections
from .metrics import compute_profile
from .repository import (
    STAGE_EXPORT,
    STAGE_MI,
    TplRepository,
    build_origin,
    compute_weights,
    purify_export,
    purify_mi,
)

log = logging.getLogger(__name__)

DEFAULT_THETA1_GRID = (0.75, 0.8, 0.85, 0.9, 0.95)
DEFAULT_THETA2_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)
DEFAULT_THETA3_GRID = tuple(round(0.70 + 0.01 * k, 2) for k in range(26))


# ---------------------------------------------------------------------------
# ground-truth metrics

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass(frozen=True)
class EvalResult:
    counts: ConfusionCounts
    precision: float
    recall: float
    f1: float
    precision_defined: bool
    recall_defined: bool


def metrics_from_counts(counts: ConfusionCounts) -> EvalResult:
    """P/R/F1 on integer counts; undefined ratios report 0.0 with the
    matching *_defined flag cleared."""
    p_den = counts.tp + counts.fp
    r_den = counts.tp + counts.fn
    precision = counts.tp / p_den if p_den else 0.0
    recall = counts.tp / r_den if r_den else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalResult(counts, precision, recall, f1, p_den > 0, r_den > 0)


def score_metrics(reports, manifest: Mapping) -> EvalResult:
    """Count (binary, library) decisions against the manifest.

    Manifest binaries without a report count as all-missed; a report for a
    binary absent from the manifest is an error.
    """
    seen = set()
    tp = fp = fn = 0
    for report in reports:
        if report.binary_id not in manifest:
            raise ValueError("report for unknown binary %r" % report.binary_id)
        if report.binary_id in seen:
            raise ValueError("duplicate report for binary %r" % report.binary_id)
        seen.add(report.binary_id)
        truth = set(manifest[report.binary_id])
        decided = report.decided()
        tp += len(decided & truth)
        fp += len(decided - truth)
        fn += len(truth - decided)
    for bin_id in manifest:
        if bin_id not in seen:
            fn += len(set(manifest[bin_id]))
    return metrics_from_counts(ConfusionCounts(tp, fp, fn))


# ---------------------------------------------------------------------------
# shared scoring plumbing (sweep and ablation reuse embedded targets)

def _embed_tpl_cache(tpl_docs, embedder):
    cache = {}
    for doc in tpl_docs:
        fdoc = filter_sections(doc)
        if not fdoc.functions:
            cache[doc.binary_id] = {}
            continue
        names, mat = embedder.embed_document(fdoc)
        cache[doc.binary_id] = {name: mat[i] for i, name in enumerate(names)}
    return cache


def _embed_targets(target_docs, embedder):
    out = []
    for doc in target_docs:
        fdoc = filter_sections(doc)
        if not fdoc.functions:
            log.warning("binary %r is empty after section filtering", doc.binary_id)
            out.append((doc.binary_id, [], None))
            continue
        names, mat = embedder.embed_document(fdoc)
        out.append((doc.binary_id, names, mat))
    return out


def _score_targets(target_embeds, repo: TplRepository, mode, batch):
    """bin_id -> {library_id: aggregate score} with empty cases scored 0."""
    table = {}
    for bin_id, names, mat in target_embeds:
        scores = {}
        for lib_id in sorted(repo.libraries):
            feats = repo.libraries[lib_id]
            if mat is None or not feats:
                scores[lib_id] = 0.0
            else:
                scores[lib_id] = aggregate(mat, names, feats, mode=mode, batch=batch)[0]
        table[bin_id] = scores
    return table


def _counts_at(score_table, manifest, theta3) -> ConfusionCounts:
    tp = fp = fn = 0
    for bin_id, scores in score_table.items():
        truth = set(manifest[bin_id])
        decided = {lib for lib, s in scores.items() if s >= theta3}
        tp += len(decided & truth)
        fp += len(decided - truth)
        fn += len(truth - decided)
    for bin_id in manifest:
        if bin_id not in score_table:
            fn += len(set(manifest[bin_id]))
    return ConfusionCounts(tp, fp, fn)


# ---------------------------------------------------------------------------
# threshold sweep

@dataclass(frozen=True)
class SweepCell:
    theta1: float
    theta2: float
    theta3: float
    retained_fraction: float
    precision: float
    recall: float
    f1: float


@dataclass
class SweepGrid:
    cells: list

    def best(self) -> SweepCell:
        """Argmax F1; ties resolved toward larger retained fraction, then
        the lexicographically smallest (theta1, theta2, theta3)."""
        return max(
            self.cells,
            key=lambda c: (c.f1, c.retained_fraction, (-c.theta1, -c.theta2, -c.theta3)),
        )

    def to_csv_bytes(self) -> bytes:
        lines = ["theta1,theta2,theta3,retained_fraction,precision,recall,f1"]
        for c in self.cells:
            lines.append(
                "%r,%r,%r,%r,%r,%r,%r"
                % (c.theta1, c.theta2, c.theta3, c.retained_fraction,
                   c.precision, c.recall, c.f1)
            )
        return ("\n".join(lines) + "\n").encode("utf-8")

    def write_csv(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_csv_bytes())


def sweep(
    tpl_docs,
    target_docs,
    manifest: Mapping,
    *,
    theta1_values: Sequence[float] = DEFAULT_THETA1_GRID,
    theta2_values: Sequence[float] = DEFAULT_THETA2_GRID,
    theta3_values: Sequence[float] = DEFAULT_THETA3_GRID,
    dim: int = DEFAULT_DIM,
    seed: int = DEFAULT_SEED,
    mode: str = AGG_WEIGHTED_MEAN,
    batch: int = DEFAULT_BATCH,
) -> SweepGrid:
    """Full grid evaluation.

    Embeddings are computed once (they do not depend on thresholds);
    purification and weights are rebuilt per (theta1, theta2); theta3 only
    re-thresholds the cached aggregate scores.
    """
    if not theta1_values or not theta2_values or not theta3_values:
        raise ConfigError("sweep grids must be non-empty")
    if mode not in AGGREGATION_MODES:
        raise ConfigError("unknown aggregation mode %r" % mode)
    tpl_docs = list(tpl_docs)
    target_docs = list(target_docs)
    for doc in target_docs:
        if doc.binary_id not in manifest:
            raise ValueError("target %r missing from manifest" % doc.binary_id)

    embedder = HashedNgramEmbedder(dim, seed)
    cache = _embed_tpl_cache(tpl_docs, embedder)
    origin = build_origin(tpl_docs, dim=dim, seed=seed, precomputed=cache)
    exported = purify_export(origin)
    target_embeds = _embed_targets(target_docs, embedder)

    cells = []
    for t1 in theta1_values:
        for t2 in theta2_values:
            repo = compute_weights(purify_mi(exported, t2), t1)
            retained = repo.stats[-1].leave_percent
            table = _score_targets(target_embeds, repo, mode, batch)
            for t3 in theta3_values:
                result = metrics_from_counts(_counts_at(table, manifest, t3))
                cells.append(
                    SweepCell(
                        float(t1), float(t2), float(t3), retained,
                        result.precision, result.recall, result.f1,
                    )
                )
    return SweepGrid(cells)


# ---------------------------------------------------------------------------
# ablation matrix

ABLATION_CONFIGS = (
    ("origin", ()),
    ("export", (STAGE_EXPORT,)),
    ("mi", (STAGE_MI,)),
    ("export+mi", (STAGE_EXPORT, STAGE_MI)),
)


@dataclass(frozen=True)
class AblationRow:
    config: str
    weights: bool
    func_count: int
    leave_percent: float
    precision: float
    recall: float
    f1: float


@dataclass
class AblationTable:
    rows: list

    def row(self, config: str, weights: bool) -> AblationRow:
        for r in self.rows:
            if r.config == config and r.weights == weights:
                return r
        raise KeyError((config, weights))

    def to_csv_bytes(self) -> bytes:
        lines = ["config,weights,func_count,leave_percent,precision,recall,f1"]
        for r in self.rows:
            lines.append(
                "%s,%s,%d,%r,%r,%r,%r"
                % (r.config, "on" if r.weights else "off", r.func_count,
                   r.leave_percent, r.precision, r.recall, r.f1)
            )
        return ("\n".join(lines) + "\n").encode("utf-8")

    def __str__(self) -> str:
        out = ["%-10s %-4s %10s %14s %10s %8s %8s"
               % ("config", "wts", "functions", "leave_percent", "precision",
                  "recall", "f1")]
        for r in self.rows:
            out.append(
                "%-10s %-4s %10d %14.3f %10.3f %8.3f %8.3f"
                % (r.config, "on" if r.weights else "off", r.func_count,
                   r.leave_percent, r.precision, r.recall, r.f1)
            )
        return "\n".join(out)


def run_ablation(
    tpl_docs,
    target_docs,
    manifest: Mapping,
    *,
    theta1: float = 0.8,
    theta2: float = 0.2,
    theta3: float = 0.89,
    dim: int = DEFAULT_DIM,
    seed: int = DEFAULT_SEED,
    mode: str = AGG_WEIGHTED_MEAN,
    batch: int = DEFAULT_BATCH,
) -> AblationTable:
    """Eight rows: four purification configs, each with weights off (all
    1.0) and on, at fixed thresholds."""
    tpl_docs = list(tpl_docs)
    target_docs = list(target_docs)
    embedder = HashedNgramEmbedder(dim, seed)
    cache = _embed_tpl_cache(tpl_docs, embedder)
    origin = build_origin(tpl_docs, dim=dim, seed=seed, precomputed=cache)
    target_embeds = _embed_targets(target_docs, embedder)

    rows = []
    for label, stages in ABLATION_CONFIGS:
        staged = origin
        if STAGE_EXPORT in stages:
            staged = purify_export(staged)
        if STAGE_MI in stages:
            staged = purify_mi(staged, theta2)
        for weights_on in (False, True):
            repo = compute_weights(staged, theta1) if weights_on else staged
            table = _score_targets(target_embeds, repo, mode, batch)
            result = metrics_from_counts(_counts_at(table, manifest, theta3))
            rows.append(
                AblationRow(
                    config=label,
                    weights=weights_on,
                    func_count=staged.feature_count(),
                    leave_percent=staged.stats[-1].leave_percent,
                    precision=result.precision,
                    recall=result.recall,
                    f1=result.f1,
                )
            )
    return AblationTable(rows)


# ---------------------------------------------------------------------------
# synthetic corpus generation

_BASE_MNEMONICS = (
    "add sub adc sbb inc dec neg not and or xor mul imul div idiv "
    "shl shr sar sal rol ror rcl rcr shld shrd "
    "bt bts btr btc bsf bsr popcnt lzcnt tzcnt andn bextr blsi blsmsk blsr "
    "cmove cmovne cmovl cmovle cmovg cmovge cmova cmovae cmovb cmovbe cmovs cmovns "
    "sete setne setl setle setg setge seta setae setb setbe sets setns "
    "movsx movzx movsxd movbe xchg bswap lea cmpxchg xadd test "
    "cdq cqo cwde cbw cdqe push pop "
    "addss addsd subss subsd mulss mulsd divss divsd sqrtss sqrtsd "
    "minss minsd maxss maxsd ucomiss ucomisd cvtsi2sd cvtsd2si cvttsd2si "
    "addps addpd subps subpd mulps mulpd andps andpd orps orpd xorps xorpd "
    "maxps minps sqrtps shufps unpcklps "
    "paddb paddw paddd paddq psubb psubw psubd psubq pmulld pmullw "
    "pand pandn por pxor psllw pslld psllq psrlw psrld psrlq "
    "pcmpeqb pcmpeqd pcmpgtb pcmpgtd pminsd pmaxsd pminud pmaxud "
    "packssdw punpcklbw punpckldq pshufb pshufd pmovmskb "
    "movaps movups movdqa movdqu movq movd"
).split()

_REGISTER_POOL = (
    "rax rbx rcx rdx rsi rdi rbp rsp r8 r9 r10 r11 r12 r13 r14 r15 "
    "eax ebx ecx edx esi edi r8d r9d r10d r11d ax bx cx dx al bl cl dl "
    "xmm0 xmm1 xmm2 xmm3 xmm4 xmm5 xmm6 xmm7 xmm8 xmm9 xmm10 xmm11 "
    "xmm12 xmm13 xmm14 xmm15"
).split()

_JCC_POOL = (
    "je jne jl jle jg jge ja jae jb jbe js jns jo jno jp jnp"
).split()

_EXT_SYMBOLS = tuple("ext_%03d" % i for i in range(64))


def _synth_function(
    rng: random.Random,
    name: str,
    *,
    is_export: bool,
    section: str = ".text",
    blocks_range=(1, 5),
    instr_range=(3, 9),
    mnemonic_pool: Sequence[str] = None,
) -> FunctionRecord:
    """One synthetic function with its own vocabulary and repeated idiom.

    The private mnemonic/register sample keeps unrelated functions apart in
    embedding space; the repeated idiom concentrates n-gram mass the way
    real loop bodies do.
    """
    pool = list(mnemonic_pool) if mnemonic_pool is not None else _BASE_MNEMONICS
    regs = rng.sample(_REGISTER_POOL, rng.randint(3, 5))
    mnems = rng.sample(pool, min(len(pool), rng.randint(8, 16)))
    jccs = rng.sample(_JCC_POOL, 2)
    shape_weights = [rng.randint(1, 6) for _ in range(5)]

    def make_instr() -> Instruction:
        r = rng.random()
        if r < 0.87:
            m = rng.choice(mnems)
        elif r < 0.95:
            m = "mov"
        else:
            m = "cmp"
        shape = rng.choices(range(5), weights=shape_weights)[0]
        a = rng.choice(regs)
        if shape == 0:
            ops = (a, rng.choice(regs))
        elif shape == 1:
            ops = (a, hex(rng.randrange(1 << 20)))
        elif shape == 2:
            ops = (a, "[%s+%s]" % (rng.choice(regs), hex(rng.randrange(512))))
        elif shape == 3:
            ops = ("[%s+%s]" % (rng.choice(regs), hex(rng.randrange(512))), a)
        else:
            ops = (a,)
        return Instruction(m, ops)

    idiom = [make_instr() for _ in range(3)]
    n_blocks = rng.randint(*blocks_range)
    blocks = []
    jcc_blocks = []
    for b in range(n_blocks):
        instrs = []
        budget = rng.randint(*instr_range)
        while budget > 0:
            if budget >= 3 and rng.random() < 0.4:
                instrs.extend(idiom)
                budget -= 3
            else:
                instrs.append(make_instr())
                budget -= 1
        if rng.random() < 0.25:
            instrs.append(Instruction("call", (rng.choice(_EXT_SYMBOLS),)))
        if rng.random() < 0.6:
            instrs.append(Instruction(rng.choice(jccs), ()))
            jcc_blocks.append(b)
        blocks.append(BasicBlock(b, instrs))
    blocks[-1].instructions.append(Instruction("ret", ()))

    edges = [(b, b + 1) for b in range(n_blocks - 1)]
    present = set(edges)
    for b in jcc_blocks:
        extra = (b, rng.randrange(n_blocks))
        if extra not in present:
            edges.append(extra)
            present.add(extra)
    return FunctionRecord(name, section, is_export, blocks, edges)


def _synth_simple(
    rng: random.Random, name: str, *, is_export: bool, section: str = ".text"
) -> FunctionRecord:
    """A 1-2 instruction stub: forwarding jump, bare return, or constant
    load.  These are the filter fodder."""
    kind = rng.randrange(3)
    if kind == 0:
        instrs = [Instruction("jmp", (rng.choice(_EXT_SYMBOLS),))]
    elif kind == 1:
        instrs = [Instruction("ret", ())]
    else:
        instrs = [
            Instruction("mov", (rng.choice(_REGISTER_POOL), hex(rng.randrange(256)))),
            Instruction("ret", ()),
        ]
    return FunctionRecord(name, section, is_export, [BasicBlock(0, instrs)], [])


def _linkage_stubs(rng: random.Random, prefix: str) -> list:
    stubs = []
    for section in (".plt", ".init", ".fini"):
        stubs.append(
            FunctionRecord(
                "%s%s_stub" % (prefix, section.replace(".", "_")),
                section,
                False,
                [BasicBlock(0, [Instruction("jmp", (rng.choice(_EXT_SYMBOLS),))])],
                [],
            )
        )
    return stubs


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    library_count: int = 10
    functions_per_library: int = 50
    clone_rate: float = 0.05
    simple_fn_rate: float = 0.3
    export_rate: float = 0.35
    planted_reuse: Mapping = field(default_factory=dict)
    distractor_functions: int = 40
    rng_seed: int = 1

    def library_ids(self):
        return ["lib%03d" % i for i in range(self.library_count)]

    def validate(self) -> None:
        if self.library_count < 1 or self.functions_per_library < 1:
            raise ConfigError("library_count and functions_per_library must be >= 1")
        for rate_name in ("clone_rate", "simple_fn_rate", "export_rate"):
            rate = getattr(self, rate_name)
            if not 0.0 <= rate <= 1.0:
                raise ConfigError("%s must be in [0, 1]" % rate_name)
        if self.distractor_functions < 0:
            raise ConfigError("distractor_functions must be >= 0")
        known = set(self.library_ids())
        for bin_id, (libs, fraction) in self.planted_reuse.items():
            if not bin_id or bin_id in known:
                raise ConfigError("bad binary id %r" % bin_id)
            unknown = set(libs) - known
            if unknown:
                raise ConfigError(
                    "binary %r plants unknown libraries %s" % (bin_id, sorted(unknown))
                )
            if len(set(libs)) != len(list(libs)):
                raise ConfigError("binary %r lists a library twice" % bin_id)
            if libs and not 0.0 < fraction <= 1.0:
                raise ConfigError("binary %r has reuse fraction outside (0, 1]" % bin_id)


def random_reuse_plan(
    rng: random.Random,
    binary_ids: Sequence[str],
    library_ids: Sequence[str],
    *,
    min_libs: int = 1,
    max_libs: int = 3,
    min_fraction: float = 0.3,
    max_fraction: float = 1.0,
) -> dict:
    """Deterministic random plan: each binary reuses min..max libraries at
    one uniform fraction."""
    plan = {}
    for bin_id in binary_ids:
        k = rng.randint(min_libs, min(max_libs, len(library_ids)))
        libs = sorted(rng.sample(list(library_ids), k))
        plan[bin_id] = (libs, rng.uniform(min_fraction, max_fraction))
    return plan


def _api_first(functions: Sequence[FunctionRecord]) -> list:
    """Exported-first, then most complex first: the order in which a
    partial reuser would plausibly pull functions in."""
    keyed = [
        (not fn.is_export, compute_profile(fn).mi, fn.name, fn) for fn in functions
    ]
    keyed.sort(key=lambda t: t[:3])
    return [t[3] for t in keyed]


def generate_corpus(spec: SyntheticCorpusSpec):
    """(tpl documents, target documents, manifest), fully determined by the
    spec's seed.

    Every planted (binary, library) pair receives at least
    ceil(fraction * |library|) verbatim function copies, taken API-first.
    Clones are verbatim copies pushed into other libraries under new names;
    every document also gets .plt/.init/.fini stubs so section filtering
    has something to chew on.
    """
    spec.validate()
    rng = random.Random(spec.rng_seed)
    lib_ids = spec.library_ids()

    bodies = {}
    for lib in lib_ids:
        n = spec.functions_per_library
        n_simple = min(n - 1, round(spec.simple_fn_rate * n)) if n > 1 else 0
        n_flag = max(1, min(n - n_simple, max(2, n // 12)))
        n_regular = n - n_simple - n_flag
        kinds = ["flag"] * n_flag + ["regular"] * n_regular + ["simple"] * n_simple
        rng.shuffle(kinds)
        fns = []
        for k, kind in enumerate(kinds):
            name = "%s_fn%04d" % (lib, k)
            if kind == "flag":
                fns.append(
                    _synth_function(
                        rng, name, is_export=True,
                        blocks_range=(6, 10), instr_range=(8, 14),
                    )
                )
            elif kind == "regular":
                fns.append(
                    _synth_function(
                        rng, name, is_export=rng.random() < spec.export_rate
                    )
                )
            else:
                fns.append(
                    _synth_simple(rng, name, is_export=rng.random() < spec.export_rate)
                )
        bodies[lib] = fns

    # verbatim cross-library clones, spread cyclically so no destination
    # pair stacks up
    if len(lib_ids) > 1:
        clone_count = round(spec.clone_rate * spec.functions_per_library)
        for i, lib in enumerate(lib_ids):
            if not clone_count:
                break
            others = lib_ids[i + 1 :] + lib_ids[:i]
            picks = sorted(rng.sample(range(spec.functions_per_library), clone_count))
            for c, idx in enumerate(picks):
                src = bodies[lib][idx]
                dst = others[c % len(others)]
                bodies[dst].append(
                    FunctionRecord(
                        "%s_clone_%s" % (dst, src.name),
                        src.section,
                        src.is_export,
                        src.blocks,
                        src.edges,
                    )
                )

    tpl_docs = [
        BinaryDocument(lib, "tpl", list(bodies[lib]) + _linkage_stubs(rng, lib))
        for lib in lib_ids
    ]

    ordered = {lib: _api_first(bodies[lib]) for lib in lib_ids}
    target_docs = []
    manifest = {}
    for bin_id, (libs, fraction) in spec.planted_reuse.items():
        fns = []
        for lib in libs:
            pool = ordered[lib]
            fns.extend(pool[: math.ceil(fraction * len(pool))])
        nd = spec.distractor_functions
        n_simple = round(spec.simple_fn_rate * nd)
        kinds = ["simple"] * n_simple + ["regular"] * (nd - n_simple)
        rng.shuffle(kinds)
        for k, kind in enumerate(kinds):
            name = "%s_fn%04d" % (bin_id, k)
            if kind == "simple":
                fns.append(_synth_simple(rng, name, is_export=False))
            else:
                fns.append(_synth_function(rng, name, is_export=False))
        target_docs.append(
            BinaryDocument(bin_id, "target", fns + _linkage_stubs(rng, bin_id))
        )
        manifest[bin_id] = set(libs)
    return tpl_docs, target_docs, manifest


# ---------------------------------------------------------------------------
# stage timing

@dataclass(frozen=True)
class StageTimings:
    export_s: float
    mi_s: float
    weights_s: float

    @property
    def total_s(self) -> float:
        return self.export_s + self.mi_s + self.weights_s


def time_stages(
    tpl_docs,
    *,
    theta1: float = 0.8,
    theta2: float = 0.2,
    dim: int = DEFAULT_DIM,
    seed: int = DEFAULT_SEED,
):
    """Wall-clock the three purification stages over a freshly built
    origin; returns (timings, final repository)."""
    origin = build_origin(list(tpl_docs), theta1=theta1, theta2=theta2, dim=dim, seed=seed)
    t0 = time.perf_counter()
    repo = purify_export(origin)
    t1 = time.perf_counter()
    repo = purify_mi(repo, theta2)
    t2 = time.perf_counter()
    repo = compute_weights(repo, theta1)
    t3 = time.perf_counter()
    return StageTimings(t1 - t0, t2 - t1, t3 - t2), repo


def write_timings(timings: StageTimings, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "export_s": timings.export_s,
                "mi_s": timings.mi_s,
                "weights_s": timings.weights_s,
                "total_s": timings.total_s,
            },
            fh,
        )
        fh.write("\n")


def read_timings(path) -> StageTimings:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError("invalid timing file: %s" % exc.msg) from exc
    try:
        timings = StageTimings(raw["export_s"], raw["mi_s"], raw["weights_s"])
    except KeyError as exc:
        raise ParseError("timing file missing field %s" % exc) from exc
    return timings
