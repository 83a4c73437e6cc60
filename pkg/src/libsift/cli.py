"""Command-line entry point.

Subcommands: gen (synthetic corpus), build (library repository), detect,
sweep, ablate, inspect.  Every command is deterministic given its inputs,
flags, and seed.  Exit codes: 0 success, 1 pipeline error, 2 bad
configuration or usage.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import random
import sys
import time
from dataclasses import dataclass

from .detector import (
    AGG_WEIGHTED_MEAN,
    AGGREGATION_MODES,
    DEFAULT_BATCH,
    DEFAULT_THETA3,
    detect,
    write_reports,
)
from .embedding import DEFAULT_DIM, DEFAULT_SEED, import_embeddings
from .errors import ConfigError, LibsiftError
from .evaluation import (
    DEFAULT_THETA1_GRID,
    DEFAULT_THETA2_GRID,
    DEFAULT_THETA3_GRID,
    SyntheticCorpusSpec,
    generate_corpus,
    random_reuse_plan,
    run_ablation,
    sweep,
)
from .interchange import load_document, save_document
from .repository import (
    ALL_STAGES,
    STAGE_EXPORT,
    STAGE_MI,
    STAGE_WEIGHTS,
    build_origin,
    compute_weights,
    load_manifest,
    load_repository,
    purify_export,
    purify_mi,
    save_manifest,
    save_repository,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    """Effective thresholds and knobs after merging defaults, the config
    file, and explicit flags (flags win)."""
    theta1: float = 0.8
    theta2: float = 0.2
    theta3: float = DEFAULT_THETA3
    dim: int = DEFAULT_DIM
    batch: int = DEFAULT_BATCH
    mode: str = AGG_WEIGHTED_MEAN
    seed: int = DEFAULT_SEED
    stages: tuple = ALL_STAGES

    def validate(self) -> None:
        if not -1.0 <= self.theta1 <= 1.0:
            raise ConfigError("theta1 must be in [-1, 1]")
        if not 0.0 < self.theta2 <= 1.0:
            raise ConfigError("theta2 must be in (0, 1]")
        if not -1.0 <= self.theta3 <= 1.0:
            raise ConfigError("theta3 must be in [-1, 1]")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if self.mode not in AGGREGATION_MODES:
            raise ConfigError("unknown aggregation mode %r" % self.mode)
        unknown = set(self.stages) - set(ALL_STAGES)
        if unknown:
            raise ConfigError("unknown stages: %s" % sorted(unknown))


_CONFIG_KEYS = ("theta1", "theta2", "theta3", "dim", "batch", "mode", "seed", "stages")


def _load_config_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("config file %s is not valid JSON: %s" % (path, exc.msg))
    if not isinstance(raw, dict):
        raise ConfigError("config file %s must hold a JSON object" % path)
    unknown = set(raw) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError("config file %s has unknown keys: %s" % (path, sorted(unknown)))
    if "stages" in raw:
        raw["stages"] = tuple(raw["stages"])
    return raw


def resolve_config(args) -> PipelineConfig:
    """defaults < config file < flags, with range validation."""
    merged = {}
    if getattr(args, "config", None):
        merged.update(_load_config_file(args.config))
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = tuple(value) if key == "stages" else value
    cfg = PipelineConfig(**merged)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# shared I/O helpers

def _doc_paths(path) -> list:
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.endswith(".jsonl"))
        if not names:
            raise ConfigError("no .jsonl documents under %s" % path)
        return [os.path.join(path, n) for n in names]
    return [path]


def _load_docs(path) -> list:
    return [load_document(p) for p in _doc_paths(path)]


def _load_vectors(vectors_dir, docs, dim) -> dict:
    """Per-document external embedding files named <binary_id>.jsonl."""
    out = {}
    for doc in docs:
        vpath = os.path.join(vectors_dir, doc.binary_id + ".jsonl")
        if not os.path.exists(vpath):
            raise ConfigError("no vector file for %r at %s" % (doc.binary_id, vpath))
        with open(vpath, "r", encoding="utf-8") as fh:
            out[doc.binary_id] = import_embeddings(doc, fh.read(), dim)
    return out


def _say(args, msg, *fmt) -> None:
    if not args.quiet:
        print(msg % fmt if fmt else msg)


def _write_meta(path, payload: dict) -> None:
    with open(path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_grid(text: str) -> tuple:
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError("bad grid %r; expected comma-separated floats" % text)
    if not values:
        raise ConfigError("bad grid %r; expected comma-separated floats" % text)
    return values


def _parse_stages(text: str) -> tuple:
    if text == "none":
        return ()
    return tuple(part.strip() for part in text.split(",") if part.strip())


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen(args) -> int:
    rng = random.Random(args.seed)
    lib_ids = ["lib%03d" % i for i in range(args.libraries)]
    bin_ids = ["bin%03d" % i for i in range(args.targets)]
    plan = random_reuse_plan(
        rng, bin_ids, lib_ids,
        min_libs=args.min_libs, max_libs=args.max_libs,
        min_fraction=args.min_fraction, max_fraction=args.max_fraction,
    )
    spec = SyntheticCorpusSpec(
        library_count=args.libraries,
        functions_per_library=args.functions,
        clone_rate=args.clone_rate,
        simple_fn_rate=args.simple_rate,
        export_rate=args.export_rate,
        planted_reuse=plan,
        distractor_functions=args.distractors,
        rng_seed=args.seed,
    )
    tpl_docs, target_docs, manifest = generate_corpus(spec)

    tpl_dir = os.path.join(args.out, "tpls")
    target_dir = os.path.join(args.out, "targets")
    os.makedirs(tpl_dir, exist_ok=True)
    os.makedirs(target_dir, exist_ok=True)
    for doc in tpl_docs:
        save_document(doc, os.path.join(tpl_dir, doc.binary_id + ".jsonl"))
    for doc in target_docs:
        save_document(doc, os.path.join(target_dir, doc.binary_id + ".jsonl"))
    save_manifest(manifest, os.path.join(args.out, "manifest.json"))
    with open(os.path.join(args.out, "corpus_spec.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "library_count": spec.library_count,
                "functions_per_library": spec.functions_per_library,
                "clone_rate": spec.clone_rate,
                "simple_fn_rate": spec.simple_fn_rate,
                "export_rate": spec.export_rate,
                "distractor_functions": spec.distractor_functions,
                "rng_seed": spec.rng_seed,
                "planted_reuse": {
                    b: {"libraries": list(libs), "fraction": frac}
                    for b, (libs, frac) in sorted(plan.items())
                },
            },
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    _say(args, "wrote %d library docs, %d targets, manifest under %s",
         len(tpl_docs), len(target_docs), args.out)
    return 0


def cmd_build(args) -> int:
    cfg = resolve_config(args)
    docs = _load_docs(args.tpls)
    vectors = None
    if args.vectors_dir:
        vectors = _load_vectors(args.vectors_dir, docs, cfg.dim)

    t0 = time.perf_counter()
    repo = build_origin(
        docs, theta1=cfg.theta1, theta2=cfg.theta2, dim=cfg.dim,
        seed=cfg.seed, vectors=vectors,
    )
    times = [("origin", time.perf_counter() - t0)]
    for stage in ALL_STAGES:
        if stage not in cfg.stages:
            continue
        t0 = time.perf_counter()
        if stage == STAGE_EXPORT:
            repo = purify_export(repo)
        elif stage == STAGE_MI:
            repo = purify_mi(repo, cfg.theta2)
        elif stage == STAGE_WEIGHTS:
            repo = compute_weights(repo, cfg.theta1)
        times.append((stage, time.perf_counter() - t0))
    save_repository(repo, args.out)

    _say(args, "%-8s %10s %14s", "stage", "functions", "leave_percent")
    for row in repo.stats:
        _say(args, "%-8s %10d %14.3f", row.stage, row.functions, row.leave_percent)
    if not args.no_timing:
        for stage, seconds in times:
            _say(args, "timing %-8s %.3fs", stage, seconds)
        _say(args, "timing %-8s %.3fs", "total", sum(s for _, s in times))
    _say(args, "repository written to %s (%d features, %d libraries)",
         args.out, repo.feature_count(), len(repo.libraries))
    return 0


def cmd_detect(args) -> int:
    cfg = resolve_config(args)
    repo = load_repository(args.repo)
    docs = _load_docs(args.targets)

    vector_maps = {}
    if args.vectors_dir:
        vector_maps = _load_vectors(args.vectors_dir, docs, repo.config.dim)

    def run(doc):
        return detect(
            doc, repo, theta3=cfg.theta3, mode=cfg.mode, batch=cfg.batch,
            vectors=vector_maps.get(doc.binary_id),
        )

    if args.jobs > 1 and len(docs) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(run, docs))
    else:
        reports = [run(doc) for doc in docs]
    reports.sort(key=lambda r: r.binary_id)
    write_reports(reports, args.out)

    for report in reports:
        decided = sorted(report.decided())
        _say(args, "%s: %s", report.binary_id,
             " ".join(decided) if decided else "(no libraries detected)")
        for entry in report.entries:
            _say(args, "  %-12s %8.4f  %s", entry.library_id, entry.score,
                 "REUSED" if entry.decision else "-")
    _say(args, "reports written to %s", args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    tpl_docs = _load_docs(args.tpls)
    target_docs = _load_docs(args.targets)
    manifest = load_manifest(args.manifest)
    grid = sweep(
        tpl_docs, target_docs, manifest,
        theta1_values=args.theta1_grid,
        theta2_values=args.theta2_grid,
        theta3_values=args.theta3_grid,
        dim=cfg.dim, seed=cfg.seed, mode=cfg.mode, batch=cfg.batch,
    )
    grid.write_csv(args.out)
    _write_meta(args.out, {
        "theta1_grid": list(args.theta1_grid),
        "theta2_grid": list(args.theta2_grid),
        "theta3_grid": list(args.theta3_grid),
        "dim": cfg.dim, "seed": cfg.seed, "mode": cfg.mode, "batch": cfg.batch,
    })
    best = grid.best()
    _say(args, "%d cells written to %s", len(grid.cells), args.out)
    _say(args, "best: theta1=%r theta2=%r theta3=%r f1=%.4f precision=%.4f "
         "recall=%.4f retained=%.3f",
         best.theta1, best.theta2, best.theta3, best.f1, best.precision,
         best.recall, best.retained_fraction)
    return 0


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    tpl_docs = _load_docs(args.tpls)
    target_docs = _load_docs(args.targets)
    manifest = load_manifest(args.manifest)
    table = run_ablation(
        tpl_docs, target_docs, manifest,
        theta1=cfg.theta1, theta2=cfg.theta2, theta3=cfg.theta3,
        dim=cfg.dim, seed=cfg.seed, mode=cfg.mode, batch=cfg.batch,
    )
    with open(args.out, "wb") as fh:
        fh.write(table.to_csv_bytes())
    _write_meta(args.out, {
        "theta1": cfg.theta1, "theta2": cfg.theta2, "theta3": cfg.theta3,
        "dim": cfg.dim, "seed": cfg.seed, "mode": cfg.mode, "batch": cfg.batch,
    })
    _say(args, "%s", table)
    _say(args, "ablation written to %s", args.out)
    return 0


def cmd_inspect(args) -> int:
    repo = load_repository(args.repo)
    cfg = repo.config
    payload = {
        "embedder": cfg.embedder,
        "dim": cfg.dim,
        "seed": cfg.seed,
        "theta1": cfg.theta1,
        "theta2": cfg.theta2,
        "stages": list(cfg.stages),
        "stats": [
            {"stage": s.stage, "functions": s.functions,
             "leave_percent": s.leave_percent}
            for s in repo.stats
        ],
        "libraries": {
            lib_id: len(feats) for lib_id, feats in sorted(repo.libraries.items())
        },
        "feature_count": repo.feature_count(),
    }
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
        return 0
    print("embedder: %s  dim=%d  seed=%d" % (cfg.embedder, cfg.dim, cfg.seed))
    print("theta1=%r theta2=%r  stages: %s"
          % (cfg.theta1, cfg.theta2, ",".join(cfg.stages) or "(origin only)"))
    print("%-8s %10s %14s" % ("stage", "functions", "leave_percent"))
    for s in repo.stats:
        print("%-8s %10d %14.3f" % (s.stage, s.functions, s.leave_percent))
    print("libraries (%d):" % len(repo.libraries))
    for lib_id, count in sorted(payload["libraries"].items()):
        print("  %-16s %6d" % (lib_id, count))
    print("total features: %d" % payload["feature_count"])
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_common(p) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    p.add_argument("--verbose", action="store_true", help="log at INFO level")


def _add_thresholds(p, *names) -> None:
    if "theta1" in names:
        p.add_argument("--theta1", type=float, default=None)
    if "theta2" in names:
        p.add_argument("--theta2", type=float, default=None)
    if "theta3" in names:
        p.add_argument("--theta3", type=float, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--mode", choices=AGGREGATION_MODES, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="libsift",
        description="Library reuse detection over disassembly documents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--libraries", type=int, default=10)
    p.add_argument("--functions", type=int, default=50)
    p.add_argument("--clone-rate", type=float, default=0.05)
    p.add_argument("--simple-rate", type=float, default=0.3)
    p.add_argument("--export-rate", type=float, default=0.35)
    p.add_argument("--targets", type=int, default=20)
    p.add_argument("--min-libs", type=int, default=1)
    p.add_argument("--max-libs", type=int, default=3)
    p.add_argument("--min-fraction", type=float, default=0.3)
    p.add_argument("--max-fraction", type=float, default=1.0)
    p.add_argument("--distractors", type=int, default=40)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("build", help="build a library feature repository")
    p.add_argument("--tpls", required=True, help="document file or directory")
    p.add_argument("--out", required=True)
    p.add_argument("--stages", type=_parse_stages, default=None,
                   help="comma list of export,mi,weights or 'none'")
    p.add_argument("--vectors-dir",
                   help="external embedding files, one <binary_id>.jsonl per doc")
    p.add_argument("--no-timing", action="store_true")
    _add_thresholds(p, "theta1", "theta2")
    _add_common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("detect", help="score target binaries against a repository")
    p.add_argument("--repo", required=True)
    p.add_argument("--targets", required=True, help="document file or directory")
    p.add_argument("--out", required=True, help="report JSONL path")
    p.add_argument("--vectors-dir")
    p.add_argument("--jobs", type=int, default=1)
    _add_thresholds(p, "theta3")
    _add_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("sweep", help="grid-evaluate thresholds against a manifest")
    p.add_argument("--tpls", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--theta1-grid", type=_parse_grid, default=DEFAULT_THETA1_GRID)
    p.add_argument("--theta2-grid", type=_parse_grid, default=DEFAULT_THETA2_GRID)
    p.add_argument("--theta3-grid", type=_parse_grid, default=DEFAULT_THETA3_GRID)
    _add_thresholds(p)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="purification/weighting ablation matrix")
    p.add_argument("--tpls", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    _add_thresholds(p, "theta1", "theta2", "theta3")
    _add_common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect", help="dump repository configuration and stats")
    p.add_argument("--repo", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if not hasattr(args, "quiet"):
        args.quiet = False
    try:
        return args.func(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except LibsiftError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
