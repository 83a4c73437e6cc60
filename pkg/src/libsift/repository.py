"""Library feature repository: build, purify, weight, persist.

Construction runs up to three purification passes over the extracted
features, in a fixed order: keep exported functions, drop simple functions
by a complexity-index percentile, then weight what remains so functions
common across libraries stop driving scores.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

import numpy as np

from . import _kernels
from .embedding import DEFAULT_DIM, DEFAULT_SEED, HashedNgramEmbedder
from .errors import (
    ConfigError,
    ParseError,
    RepositoryChecksumError,
    RepositoryError,
    RepositoryVersionError,
)
from .interchange import BinaryDocument, filter_sections
from .metrics import ComplexityProfile, compute_profile

log = logging.getLogger(__name__)

REPO_FORMAT_VERSION = 1
_MAGIC = b"LSREPO"

STAGE_EXPORT = "export"
STAGE_MI = "mi"
STAGE_WEIGHTS = "weights"
ALL_STAGES = (STAGE_EXPORT, STAGE_MI, STAGE_WEIGHTS)

EMBEDDER_EXTERNAL = "external"


@dataclass(eq=False)
class FunctionFeature:
    library_id: str
    function_name: str
    vector: np.ndarray
    profile: ComplexityProfile
    is_export: bool
    weight: float = 1.0
    df: int = 0
    n_in_library: int = 1

    def __eq__(self, other):
        if not isinstance(other, FunctionFeature):
            return NotImplemented
        return (
            self.library_id == other.library_id
            and self.function_name == other.function_name
            and self.profile == other.profile
            and self.is_export == other.is_export
            and self.weight == other.weight
            and self.df == other.df
            and self.n_in_library == other.n_in_library
            and np.array_equal(self.vector, other.vector)
        )


@dataclass(frozen=True)
class RepoConfig:
    theta1: float = 0.8
    theta2: float = 0.2
    dim: int = DEFAULT_DIM
    embedder: str = HashedNgramEmbedder.name
    seed: int = DEFAULT_SEED
    stages: tuple = ()


@dataclass(frozen=True)
class StageStats:
    stage: str
    functions: int
    leave_percent: float  # relative to the origin population


@dataclass(eq=False)
class TplRepository:
    libraries: dict
    config: RepoConfig
    stats: list

    def feature_count(self) -> int:
        return sum(len(feats) for feats in self.libraries.values())

    def __eq__(self, other):
        if not isinstance(other, TplRepository):
            return NotImplemented
        return (
            self.config == other.config
            and self.stats == other.stats
            and list(self.libraries.items()) == list(other.libraries.items())
        )


def tfidf_weight(n: int, lib_size: int, library_count: int, df: int) -> float:
    """(n / lib_size) * ln(library_count / (df + 1)).

    df counts OTHER libraries holding a similar function, so df + 1 never
    exceeds library_count and the log never goes negative.
    """
    return (n / lib_size) * math.log(library_count / (df + 1))


def _leave_percent(count: int, origin: int) -> float:
    return count / origin if origin else 0.0


def build_origin(
    docs: Iterable[BinaryDocument],
    *,
    theta1: float = 0.8,
    theta2: float = 0.2,
    dim: int = DEFAULT_DIM,
    seed: int = DEFAULT_SEED,
    embedder: HashedNgramEmbedder = None,
    vectors: Mapping = None,
    precomputed: Mapping = None,
) -> TplRepository:
    """Extract one feature per function from per-library documents.

    Section filtering is applied here (idempotent if already done).
    `vectors` supplies external embeddings keyed binary_id -> name -> vector
    and marks the repository as externally embedded; `precomputed` is a
    trusted cache of built-in embedder output with the same shape, used to
    avoid re-hashing during sweeps.
    """
    docs = list(docs)
    if not docs:
        raise RepositoryError("empty corpus: no library documents")
    if embedder is None:
        embedder = HashedNgramEmbedder(dim, seed)
    elif embedder.dim != dim or embedder.seed != seed:
        raise ConfigError("embedder does not match requested dim/seed")

    embedder_name = EMBEDDER_EXTERNAL if vectors is not None else embedder.name
    libraries = {}
    for doc in docs:
        if doc.kind != "tpl":
            raise RepositoryError(
                "document %r has kind %r; repositories are built from tpl documents"
                % (doc.binary_id, doc.kind)
            )
        if doc.binary_id in libraries:
            raise RepositoryError("duplicate library_id %r" % doc.binary_id)
        fdoc = filter_sections(doc)
        if not fdoc.functions:
            log.warning(
                "library %r has no functions after section filtering", doc.binary_id
            )
            libraries[doc.binary_id] = []
            continue

        if vectors is not None:
            table = vectors.get(doc.binary_id)
            if table is None:
                raise RepositoryError(
                    "no external vectors supplied for library %r" % doc.binary_id
                )
            missing = [fn.name for fn in fdoc.functions if fn.name not in table]
            if missing:
                raise RepositoryError(
                    "library %r lacks vectors for %d functions (first: %r)"
                    % (doc.binary_id, len(missing), missing[0])
                )
            mat = {}
            for fn in fdoc.functions:
                vec = np.asarray(table[fn.name], dtype=np.float64)
                if vec.shape != (dim,):
                    raise RepositoryError(
                        "external vector for %r has wrong dimension" % fn.name
                    )
                if not np.isfinite(vec).all():
                    raise RepositoryError(
                        "external vector for %r has non-finite values" % fn.name
                    )
                norm = float(np.linalg.norm(vec))
                if norm == 0.0:
                    raise RepositoryError(
                        "external vector for %r has zero norm" % fn.name
                    )
                mat[fn.name] = vec / norm
        elif precomputed is not None and doc.binary_id in precomputed:
            mat = precomputed[doc.binary_id]
        else:
            names, stack = embedder.embed_document(fdoc)
            mat = {name: stack[i] for i, name in enumerate(names)}

        feats = []
        for fn in fdoc.functions:
            feats.append(
                FunctionFeature(
                    library_id=doc.binary_id,
                    function_name=fn.name,
                    vector=np.ascontiguousarray(mat[fn.name], dtype=np.float64),
                    profile=compute_profile(fn),
                    is_export=fn.is_export,
                )
            )
        libraries[doc.binary_id] = feats

    config = RepoConfig(
        theta1=theta1, theta2=theta2, dim=dim, embedder=embedder_name, seed=seed
    )
    repo = TplRepository(libraries, config, [])
    repo.stats.append(StageStats("origin", repo.feature_count(), 1.0))
    return repo


def _require_stage_unapplied(repo: TplRepository, stage: str) -> None:
    if stage in repo.config.stages:
        raise RepositoryError("stage %r already applied" % stage)


def purify_export(repo: TplRepository) -> TplRepository:
    """Keep only export-table functions; they are what a reusing binary can
    actually link against."""
    _require_stage_unapplied(repo, STAGE_EXPORT)
    if STAGE_MI in repo.config.stages:
        raise RepositoryError(
            "export purification must run before the complexity filter"
        )
    libraries = {}
    for lib_id, feats in repo.libraries.items():
        kept = [f for f in feats if f.is_export]
        if feats and not kept:
            log.warning("library %r has no exported functions", lib_id)
        libraries[lib_id] = kept
    config = replace(repo.config, stages=repo.config.stages + (STAGE_EXPORT,))
    stats = list(repo.stats)
    count = sum(len(v) for v in libraries.values())
    stats.append(
        StageStats(STAGE_EXPORT, count, _leave_percent(count, repo.stats[0].functions))
    )
    return TplRepository(libraries, config, stats)


def purify_mi(repo: TplRepository, theta2: float = None) -> TplRepository:
    """Drop simple functions by a global complexity-index percentile.

    The cutoff m* is the largest observed index value whose strictly-below
    fraction stays within theta2; functions AT the cutoff are dropped too,
    so retention can undershoot theta2 when values tie.
    """
    if theta2 is None:
        theta2 = repo.config.theta2
    if not 0.0 < theta2 <= 1.0:
        raise ConfigError("theta2 must be in (0, 1]")
    _require_stage_unapplied(repo, STAGE_MI)

    values = np.array(
        [f.profile.mi for feats in repo.libraries.values() for f in feats],
        dtype=np.float64,
    )
    libraries = {}
    if values.size == 0:
        log.warning("complexity filter ran on an empty repository")
        libraries = {lib_id: [] for lib_id in repo.libraries}
    else:
        ordered = np.sort(values)
        distinct = np.unique(values)
        below = np.searchsorted(ordered, distinct, side="left")
        eligible = distinct[below / values.size <= theta2]
        m_star = float(eligible[-1])  # below[0] == 0, so this always exists
        for lib_id, feats in repo.libraries.items():
            libraries[lib_id] = [f for f in feats if f.profile.mi < m_star]
        if sum(len(v) for v in libraries.values()) == 0:
            log.warning(
                "complexity filter retained nothing (all values tie at the cutoff)"
            )

    config = replace(
        repo.config,
        theta2=theta2,
        stages=repo.config.stages + (STAGE_MI,),
    )
    stats = list(repo.stats)
    count = sum(len(v) for v in libraries.values())
    stats.append(
        StageStats(STAGE_MI, count, _leave_percent(count, repo.stats[0].functions))
    )
    return TplRepository(libraries, config, stats)


def compute_weights(repo: TplRepository, theta1: float = None) -> TplRepository:
    """Frequency-weight every retained feature.

    n counts same-library functions within theta1 similarity (self always
    included); df counts OTHER libraries holding at least one such match.
    The weight is TF * IDF over the post-purification population, with the
    library count taken over ALL libraries, including purification-emptied
    ones.
    """
    if theta1 is None:
        theta1 = repo.config.theta1
    _require_stage_unapplied(repo, STAGE_WEIGHTS)

    nonempty = [(lib_id, feats) for lib_id, feats in repo.libraries.items() if feats]
    library_count = len(repo.libraries)
    libraries = {lib_id: [] for lib_id in repo.libraries}
    if nonempty:
        stack = np.vstack(
            [f.vector for _, feats in nonempty for f in feats]
        )
        lib_ids = np.concatenate(
            [np.full(len(feats), i, dtype=np.int64) for i, (_, feats) in enumerate(nonempty)]
        )
        n_arr, df_arr = _kernels.theta_counts(stack, lib_ids, len(nonempty), theta1)
        pos = 0
        for lib_id, feats in nonempty:
            size = len(feats)
            for f, n, df in zip(feats, n_arr[pos : pos + size], df_arr[pos : pos + size]):
                libraries[lib_id].append(
                    replace(
                        f,
                        weight=tfidf_weight(int(n), size, library_count, int(df)),
                        df=int(df),
                        n_in_library=int(n),
                    )
                )
            pos += size
    else:
        log.warning("weighting ran on an empty repository")

    config = replace(
        repo.config,
        theta1=theta1,
        stages=repo.config.stages + (STAGE_WEIGHTS,),
    )
    return TplRepository(libraries, config, list(repo.stats))


def build_repository(
    docs: Iterable[BinaryDocument],
    *,
    theta1: float = 0.8,
    theta2: float = 0.2,
    dim: int = DEFAULT_DIM,
    seed: int = DEFAULT_SEED,
    stages: Iterable[str] = ALL_STAGES,
    embedder: HashedNgramEmbedder = None,
    vectors: Mapping = None,
    precomputed: Mapping = None,
) -> TplRepository:
    """Origin extraction plus the requested purification stages, applied in
    canonical order (export, then complexity filter, then weights)."""
    stages = tuple(stages)
    unknown = set(stages) - set(ALL_STAGES)
    if unknown:
        raise ConfigError("unknown stages: %s" % sorted(unknown))
    repo = build_origin(
        docs,
        theta1=theta1,
        theta2=theta2,
        dim=dim,
        seed=seed,
        embedder=embedder,
        vectors=vectors,
        precomputed=precomputed,
    )
    if STAGE_EXPORT in stages:
        repo = purify_export(repo)
    if STAGE_MI in stages:
        repo = purify_mi(repo)
    if STAGE_WEIGHTS in stages:
        repo = compute_weights(repo)
    return repo


# ---------------------------------------------------------------------------
# persistence

def _header_dict(repo: TplRepository) -> dict:
    return {
        "format_version": REPO_FORMAT_VERSION,
        "config": {
            "theta1": repo.config.theta1,
            "theta2": repo.config.theta2,
            "dim": repo.config.dim,
            "embedder": repo.config.embedder,
            "seed": repo.config.seed,
            "stages": list(repo.config.stages),
        },
        "stats": [
            {"stage": s.stage, "functions": s.functions, "leave_percent": s.leave_percent}
            for s in repo.stats
        ],
        "libraries": [
            {
                "library_id": lib_id,
                "features": [
                    {
                        "function_name": f.function_name,
                        "is_export": f.is_export,
                        "weight": f.weight,
                        "df": f.df,
                        "n_in_library": f.n_in_library,
                        "profile": {
                            "hv": f.profile.hv,
                            "loc": f.profile.loc,
                            "cc": f.profile.cc,
                            "mi": f.profile.mi,
                        },
                    }
                    for f in feats
                ],
            }
            for lib_id, feats in repo.libraries.items()
        ],
    }


def save_repository(repo: TplRepository, path) -> None:
    """Write a versioned, checksummed container; load() restores it
    field-for-field (vectors byte-exact, scalars via JSON round-trip)."""
    header = json.dumps(_header_dict(repo), separators=(",", ":")).encode("utf-8")
    blob = bytearray()
    for feats in repo.libraries.values():
        for f in feats:
            blob += np.ascontiguousarray(f.vector, dtype="<f8").tobytes()
    payload = _MAGIC + struct.pack("<HI", REPO_FORMAT_VERSION, len(header)) + header + bytes(blob)
    digest = hashlib.sha256(payload).digest()
    with open(path, "wb") as fh:
        fh.write(payload + digest)


def load_repository(path) -> TplRepository:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(_MAGIC) + 6 or not data.startswith(_MAGIC):
        raise RepositoryError("not a repository file")
    version, header_len = struct.unpack_from("<HI", data, len(_MAGIC))
    if version != REPO_FORMAT_VERSION:
        raise RepositoryVersionError(
            "repository format %d unsupported (this build reads %d)"
            % (version, REPO_FORMAT_VERSION)
        )
    body_start = len(_MAGIC) + 6
    if len(data) < body_start + header_len + 32:
        raise RepositoryChecksumError("repository file is truncated")
    payload, digest = data[:-32], data[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise RepositoryChecksumError("repository checksum mismatch")

    try:
        header = json.loads(payload[body_start : body_start + header_len])
    except json.JSONDecodeError as exc:
        raise RepositoryChecksumError("repository header is unreadable") from exc
    cfg = header["config"]
    config = RepoConfig(
        theta1=cfg["theta1"],
        theta2=cfg["theta2"],
        dim=cfg["dim"],
        embedder=cfg["embedder"],
        seed=cfg["seed"],
        stages=tuple(cfg["stages"]),
    )
    stats = [
        StageStats(s["stage"], s["functions"], s["leave_percent"])
        for s in header["stats"]
    ]
    dim = config.dim
    blob = payload[body_start + header_len :]
    expected = sum(len(lib["features"]) for lib in header["libraries"]) * dim * 8
    if len(blob) != expected:
        raise RepositoryChecksumError("vector block has wrong length")

    libraries = {}
    pos = 0
    for lib in header["libraries"]:
        feats = []
        for rec in lib["features"]:
            vec = np.frombuffer(blob, dtype="<f8", count=dim, offset=pos).copy()
            pos += dim * 8
            prof = rec["profile"]
            feats.append(
                FunctionFeature(
                    library_id=lib["library_id"],
                    function_name=rec["function_name"],
                    vector=vec,
                    profile=ComplexityProfile(
                        prof["hv"], prof["loc"], prof["cc"], prof["mi"]
                    ),
                    is_export=rec["is_export"],
                    weight=rec["weight"],
                    df=rec["df"],
                    n_in_library=rec["n_in_library"],
                )
            )
        libraries[lib["library_id"]] = feats
    return TplRepository(libraries, config, stats)


# ---------------------------------------------------------------------------
# ground-truth manifests

def save_manifest(manifest: Mapping, path) -> None:
    """JSON map binary_id -> sorted list of library ids."""
    payload = {bin_id: sorted(libs) for bin_id, libs in manifest.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError("invalid JSON manifest: %s" % exc.msg) from exc
    if not isinstance(raw, dict):
        raise ParseError("manifest must be an object")
    out = {}
    for bin_id, libs in raw.items():
        if not isinstance(libs, list) or not all(isinstance(x, str) for x in libs):
            raise ParseError("manifest entry %r must list library ids" % bin_id)
        out[bin_id] = set(libs)
    return out
