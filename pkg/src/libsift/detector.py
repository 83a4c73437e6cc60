"""Score target binaries against the repository and decide reuse.

Two aggregation modes share the same weighted pairwise scores but differ
in the max direction:

* core-weighted-mean (default): every library feature keeps its best match
  among the binary's functions; the score is the weight-normalized mean of
  those best matches, so a verbatim superset of the library scores 1.0.
* match-sum: every binary function keeps its best weighted match among the
  library's features and the score is the plain sum, unbounded and
  monotone in binary size.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _kernels
from .embedding import HashedNgramEmbedder, cosine
from .errors import ConfigError, EmbeddingError, ParseError
from .interchange import BinaryDocument, filter_sections
from .repository import EMBEDDER_EXTERNAL, FunctionFeature, TplRepository

log = logging.getLogger(__name__)

AGG_WEIGHTED_MEAN = "core-weighted-mean"
AGG_MATCH_SUM = "match-sum"
AGGREGATION_MODES = (AGG_WEIGHTED_MEAN, AGG_MATCH_SUM)

DEFAULT_THETA3 = 0.89
DEFAULT_BATCH = 128


@dataclass(frozen=True)
class MatchEvidence:
    binary_function: str
    library_function: str
    cosine: float
    weight: float
    contribution: float


@dataclass
class LibraryScore:
    library_id: str
    score: float
    decision: bool
    evidence: list = field(default_factory=list)


@dataclass
class DetectionReport:
    binary_id: str
    entries: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def decided(self) -> set:
        return {e.library_id for e in self.entries if e.decision}


def score_pairwise(vector, feature: FunctionFeature) -> float:
    """weight * cosine for one (binary function, library feature) pair."""
    return feature.weight * cosine(vector, feature.vector)


def _unit_rows(mat) -> np.ndarray:
    mat = np.ascontiguousarray(mat, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1)
    if (norms == 0.0).any():
        raise EmbeddingError("zero-norm vector in similarity input")
    return mat / norms[:, None]


def aggregate(
    bin_vectors,
    bin_names,
    features,
    mode: str = AGG_WEIGHTED_MEAN,
    batch: int = DEFAULT_BATCH,
):
    """(score, evidence rows) for one binary against one library.

    Evidence contributions always sum to the unnormalized aggregate.
    """
    if mode not in AGGREGATION_MODES:
        raise ConfigError("unknown aggregation mode %r" % mode)
    features = list(features)
    bin_vectors = np.asarray(bin_vectors, dtype=np.float64)
    if len(features) == 0 or bin_vectors.shape[0] == 0:
        raise ValueError("aggregate needs a non-empty binary and library")

    bin_mat = _unit_rows(bin_vectors)
    lib_mat = _unit_rows(np.vstack([f.vector for f in features]))

    evidence = []
    if mode == AGG_WEIGHTED_MEAN:
        # streaming max avoids materializing the full score matrix
        best, arg = _kernels.best_match(bin_mat, lib_mat)
        best = np.clip(best, -1.0, 1.0)
        total_weight = 0.0
        total = 0.0
        for j, f in enumerate(features):
            contribution = f.weight * float(best[j])
            evidence.append(
                MatchEvidence(
                    binary_function=bin_names[int(arg[j])],
                    library_function=f.function_name,
                    cosine=float(best[j]),
                    weight=f.weight,
                    contribution=contribution,
                )
            )
            total += contribution
            total_weight += f.weight
        score = total / total_weight if total_weight > 0.0 else 0.0
        return score, evidence

    sims = np.clip(_kernels.sim_matrix(bin_mat, lib_mat, batch), -1.0, 1.0)
    weights = np.array([f.weight for f in features], dtype=np.float64)
    scored = sims * weights[None, :]
    arg = scored.argmax(axis=1)
    total = 0.0
    for i, name in enumerate(bin_names):
        j = int(arg[i])
        contribution = float(scored[i, j])
        evidence.append(
            MatchEvidence(
                binary_function=name,
                library_function=features[j].function_name,
                cosine=float(sims[i, j]),
                weight=features[j].weight,
                contribution=contribution,
            )
        )
        total += contribution
    return total, evidence


def detect(
    doc: BinaryDocument,
    repo: TplRepository,
    *,
    theta3: float = DEFAULT_THETA3,
    mode: str = AGG_WEIGHTED_MEAN,
    batch: int = DEFAULT_BATCH,
    vectors=None,
) -> DetectionReport:
    """One report entry per library, sorted by library id; decision is
    score >= theta3 (inclusive).

    `vectors` maps function name -> embedding for the target; required when
    the repository was built from external vectors, ignored otherwise only
    if absent.
    """
    if mode not in AGGREGATION_MODES:
        raise ConfigError("unknown aggregation mode %r" % mode)
    if not -1.0 <= theta3 <= 1.0:
        raise ConfigError("theta3 must be in [-1, 1]")
    if repo.config.embedder == EMBEDDER_EXTERNAL and vectors is None:
        raise ConfigError(
            "repository was built from external vectors; supply target vectors"
        )

    echo = {
        "theta1": repo.config.theta1,
        "theta2": repo.config.theta2,
        "theta3": theta3,
        "mode": mode,
        "dim": repo.config.dim,
        "embedder": repo.config.embedder,
        "seed": repo.config.seed,
        "batch": batch,
    }
    fdoc = filter_sections(doc)
    if not fdoc.functions:
        log.warning("binary %r is empty after section filtering", doc.binary_id)
        return DetectionReport(doc.binary_id, [], echo)

    names = [fn.name for fn in fdoc.functions]
    if vectors is not None:
        dim = repo.config.dim
        mat = np.empty((len(names), dim), dtype=np.float64)
        for i, name in enumerate(names):
            if name not in vectors:
                raise EmbeddingError("no vector supplied for function %r" % name)
            vec = np.asarray(vectors[name], dtype=np.float64)
            if vec.shape != (dim,):
                raise ConfigError(
                    "vector for %r does not match repository dimension %d"
                    % (name, dim)
                )
            norm = float(np.linalg.norm(vec))
            if norm == 0.0 or not np.isfinite(vec).all():
                raise EmbeddingError("vector for %r is degenerate" % name)
            mat[i] = vec / norm
    else:
        embedder = HashedNgramEmbedder(repo.config.dim, repo.config.seed)
        if embedder.name != repo.config.embedder:
            raise ConfigError(
                "repository embedder %r is not available" % repo.config.embedder
            )
        names, mat = embedder.embed_document(fdoc)

    entries = []
    for lib_id in sorted(repo.libraries):
        feats = repo.libraries[lib_id]
        if not feats:
            log.warning("library %r has no retained features; scoring 0", lib_id)
            entries.append(LibraryScore(lib_id, 0.0, False, []))
            continue
        score, evidence = aggregate(mat, names, feats, mode=mode, batch=batch)
        entries.append(LibraryScore(lib_id, score, score >= theta3, evidence))
    return DetectionReport(doc.binary_id, entries, echo)


def detect_many(docs: Iterable[BinaryDocument], repo: TplRepository, **kwargs):
    return [detect(doc, repo, **kwargs) for doc in docs]


# ---------------------------------------------------------------------------
# report files: JSON lines, one report per line

def write_reports(reports: Iterable[DetectionReport], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(json.dumps(_report_dict(report), separators=(",", ":")))
            fh.write("\n")


def _report_dict(report: DetectionReport) -> dict:
    return {
        "binary_id": report.binary_id,
        "config": report.config,
        "entries": [
            {
                "library_id": e.library_id,
                "score": e.score,
                "decision": e.decision,
                "evidence": [
                    {
                        "binary_function": m.binary_function,
                        "library_function": m.library_function,
                        "cosine": m.cosine,
                        "weight": m.weight,
                        "contribution": m.contribution,
                    }
                    for m in e.evidence
                ],
            }
            for e in report.entries
        ],
    }


def read_reports(path) -> list:
    reports = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError("invalid JSON: %s" % exc.msg, line=lineno) from exc
            try:
                entries = [
                    LibraryScore(
                        e["library_id"],
                        e["score"],
                        e["decision"],
                        [
                            MatchEvidence(
                                m["binary_function"],
                                m["library_function"],
                                m["cosine"],
                                m["weight"],
                                m["contribution"],
                            )
                            for m in e["evidence"]
                        ],
                    )
                    for e in obj["entries"]
                ]
                report = DetectionReport(obj["binary_id"], entries, obj["config"])
            except (KeyError, TypeError) as exc:
                raise ParseError(
                    "malformed report record: %s" % exc, line=lineno
                ) from exc
            reports.append(report)
    return reports
