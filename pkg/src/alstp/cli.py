"""Operator surface: preprocess → embed → train → eval → search and friends.

Every subcommand honors --seed, --threads, and --config.  Settings resolve
as built-in defaults, overridden by the config file, overridden by flags
given explicitly on the command line.  Each artifact directory receives
exactly one ``manifest.json`` recording the command, the resolved settings,
input content hashes, output names, and wall time — wall time lives only
there, so checkpoints, metrics, and corpus files stay byte-reproducible.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import baselines as B
from . import corpus as cp
from . import embed as em
from . import evaluation as E
from . import model as M
from . import synth as S
from . import trainer as T

logger = logging.getLogger(__name__)


class CliError(Exception):
    """Operator-facing failure: printed to stderr, exit code 2."""


# ---------------------------------------------------------------------------
# Config files and flag resolution
# ---------------------------------------------------------------------------

# every key a config file may set, with its type; subcommands read the subset
# they understand and ignore the rest
KEY_TYPES: dict[str, type] = {
    "seed": int,
    "threads": int,
    "min_user": int,
    "min_word": int,
    "users": int,
    "products": int,
    "per_user": int,
    "topics": int,
    "categories": int,
    "session_len": int,
    "adherence": float,
    "k": int,
    "window": int,
    "negatives": int,
    "epochs": int,
    "lr": float,
    "m": int,
    "f": int,
    "beta": float,
    "tower_layers": int,
    "momentum": float,
    "clip": float,
    "l2": float,
    "variant": str,
    "phase": str,
    "cutoff": int,
    "mu": float,
    "lam": float,
    "topn": int,
    "metric": str,
}

_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _convert(key: str, value: str, where: str):
    target = KEY_TYPES[key]
    try:
        if target is bool:
            if value.lower() not in _BOOL_WORDS:
                raise ValueError(value)
            return _BOOL_WORDS[value.lower()]
        return target(value)
    except ValueError:
        raise CliError(f"{where}: cannot parse {value!r} as {target.__name__} for key {key!r}") from None


def parse_config_file(path: Path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; keys are typed."""
    if not path.is_file():
        raise CliError(f"config file not found: {path}")
    values: dict = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise CliError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, _, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if key not in KEY_TYPES:
            raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _convert(key, value, where=f"{path}:{lineno}")
    return values


def resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge: defaults, then config-file entries, then explicit flags.

    Flags are declared with ``argparse.SUPPRESS`` defaults, so a flag the
    operator did not type never shadows the config file.
    """
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path is not None:
        from_file = parse_config_file(Path(config_path))
        merged.update({k: v for k, v in from_file.items() if k in defaults})
    for key in defaults:
        if hasattr(args, key):
            merged[key] = getattr(args, key)
    return merged


def _apply_threads(n: int) -> None:
    if n < 1:
        raise CliError(f"--threads must be >= 1, got {n}")
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:  # pragma: no cover - depends on environment
        import os

        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


# ---------------------------------------------------------------------------
# Run manifests
# ---------------------------------------------------------------------------


def _hash_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_path(path: Path) -> str:
    """Content hash of a file, or of a directory's sorted file listing."""
    if path.is_dir():
        digest = hashlib.sha256()
        for sub in sorted(p for p in path.rglob("*") if p.is_file()):
            digest.update(f"{sub.relative_to(path)}:{_hash_file(sub)}\n".encode())
        return digest.hexdigest()
    return _hash_file(path)


def run_manifest(command: str, settings: dict, inputs: dict[str, Path], outputs: list[str], t0: float) -> dict:
    return {
        "command": command,
        "config": {k: settings[k] for k in sorted(settings)},
        "seed": settings.get("seed", 0),
        "inputs": {label: str(p) for label, p in inputs.items()},
        "input_hashes": {label: hash_path(p) for label, p in inputs.items()},
        "outputs": sorted(outputs),
        "wall_time_s": time.perf_counter() - t0,
    }


def write_manifest(out_dir: Path, manifest: dict, stats: dict | None = None) -> None:
    payload = {"run": manifest}
    if stats:
        payload["stats"] = stats
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise CliError(f"{what} not found: {path}")
    return path


def _load_corpus(corpus_dir: str) -> cp.SplitCorpus:
    d = _require(Path(corpus_dir), "corpus directory")
    if not (d / "interactions.tsv").is_file():
        raise CliError(f"corpus directory is incomplete (no interactions.tsv): {d}")
    return cp.load_corpus(d)


def _load_table(vectors_dir: str) -> em.EmbeddingTable:
    d = _require(Path(vectors_dir), "embeddings directory")
    if not (d / "embeddings.json").is_file():
        raise CliError(f"embeddings directory is incomplete (no embeddings.json): {d}")
    return em.EmbeddingTable.load(d)


def _load_model(model_dir: str):
    d = _require(Path(model_dir), "model directory")
    if not (d / "model.json").is_file():
        raise CliError(f"model directory is incomplete (no model.json): {d}")
    return M.load_model(d)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_preprocess(args: argparse.Namespace) -> int:
    settings = resolve(args, {"seed": 0, "threads": 1, "min_user": 10, "min_word": 5})
    _apply_threads(settings["threads"])
    t0 = time.perf_counter()
    reviews_path = _require(Path(args.reviews), "reviews file")
    meta_path = _require(Path(args.meta), "metadata file")

    reviews, bad_reviews = cp.parse_reviews(reviews_path)
    metas, bad_metas = cp.parse_meta(meta_path)
    corpus = cp.build_corpus(
        reviews,
        metas,
        min_user_interactions=settings["min_user"],
        min_word_freq=settings["min_word"],
        seed=settings["seed"],
    )
    out = Path(args.out)
    manifest = run_manifest(
        "preprocess",
        settings,
        {"reviews": reviews_path, "meta": meta_path},
        list(cp.DECLARED_FILES),
        t0,
    )
    cp.save_corpus(corpus, out, manifest_extra={"run": manifest})
    print(
        f"preprocess: {len(corpus.users)} users, {len(corpus.products)} products, "
        f"{len(corpus.queries)} queries, vocabulary {len(corpus.vocab)} "
        f"({bad_reviews} malformed review lines, {bad_metas} malformed meta lines) -> {out}"
    )
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    settings = resolve(
        args,
        {
            "seed": 0,
            "threads": 1,
            "users": 200,
            "products": 500,
            "per_user": 30,
            "topics": 5,
            "categories": 0,  # 0 = derive from catalog size
            "session_len": 3,
            "adherence": 0.85,
        },
    )
    _apply_threads(settings["threads"])
    t0 = time.perf_counter()
    try:
        spec = S.SynthSpec(
            profile=args.profile,
            n_users=settings["users"],
            n_products=settings["products"],
            n_per_user=settings["per_user"],
            n_topics=settings["topics"],
            n_categories=settings["categories"] or None,
            session_len=settings["session_len"],
            adherence=settings["adherence"],
            seed=settings["seed"],
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out = Path(args.out)
    synth = S.write_synth(out, spec)
    outputs = ["reviews.jsonl", "meta.jsonl", S.GROUND_TRUTH_FILE]
    write_manifest(
        out,
        run_manifest("synth", {**settings, "profile": args.profile}, {}, outputs, t0),
        stats={"reviews": len(synth.reviews), "products": len(synth.metas)},
    )
    print(f"synth: {args.profile}, {len(synth.reviews)} reviews over {len(synth.metas)} products -> {out}")
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    settings = resolve(
        args,
        {"seed": 0, "threads": 1, "k": 256, "window": 5, "negatives": 5, "epochs": 20, "lr": 0.025},
    )
    _apply_threads(settings["threads"])
    t0 = time.perf_counter()
    corpus_dir = Path(args.corpus)
    corpus = _load_corpus(args.corpus)
    table, losses = em.embed_corpus(
        corpus,
        k=settings["k"],
        window=settings["window"],
        negatives=settings["negatives"],
        epochs=settings["epochs"],
        lr=settings["lr"],
        seed=settings["seed"],
    )
    out = Path(args.out)
    table.save(out)
    write_manifest(
        out,
        run_manifest("embed", settings, {"corpus": corpus_dir}, ["embeddings.bin", "embeddings.json"], t0),
        stats={"documents": len(table.doc_keys), "words": len(table.words), "epoch_losses": losses},
    )
    print(f"embed: {len(table.doc_keys)} documents, {len(table.words)} words at k={settings['k']} -> {out}")
    return 0


def _train_config(settings: dict, table_k: int) -> M.Config:
    if settings["k"] and settings["k"] != table_k:
        raise CliError(f"embeddings were trained at k={table_k} but the run requests k={settings['k']}")
    return M.Config(
        k=table_k,
        m=settings["m"],
        f=settings["f"] or None,
        beta=settings["beta"],
        tower_layers=settings["tower_layers"],
        negatives=settings["negatives"],
        lr=settings["lr"],
        momentum=settings["momentum"],
        clip_norm=settings["clip"],
        l2=settings["l2"],
        epochs=settings["epochs"],
        cutoff=settings["cutoff"],
        seed=settings["seed"],
    )


_TRAIN_DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "variant": "ALSTP",
    "k": 0,  # 0 = inherit from the embedding table
    "m": 4,
    "f": 0,  # 0 = default to k
    "beta": 0.5,
    "tower_layers": 2,
    "negatives": 5,
    "lr": 1e-4,
    "momentum": 0.9,
    "clip": 5.0,
    "l2": 1e-5,
    "epochs": 20,
    "cutoff": 20,
}


def cmd_train(args: argparse.Namespace) -> int:
    settings = resolve(args, _TRAIN_DEFAULTS)
    _apply_threads(settings["threads"])
    t0 = time.perf_counter()
    corpus = _load_corpus(args.corpus)
    table = _load_table(args.vectors)
    vc = M.VecCorpus(corpus, table)
    try:
        config = _train_config(settings, table.k)
        config.validate()
        M.ablate(settings["variant"])
    except ValueError as exc:
        raise CliError(str(exc)) from None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.grid_lr:
        best_lr, results = T.lr_grid_search(vc, config, variant=settings["variant"])
        result = results[best_lr]
        settings = {**settings, "lr": best_lr}
    else:
        result = T.train(vc, config, variant=settings["variant"], log_file=out / "train_log.jsonl")
    M.save_model(out, result.params, result.user_g)
    if args.grid_lr:
        with open(out / "train_log.jsonl", "w", encoding="utf-8") as fh:
            for entry in result.log:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    stats = {
        "variant": settings["variant"],
        "best_epoch": result.best_epoch,
        "best_val_ndcg": None if result.log == [] else result.best_val_ndcg,
        "epochs_run": len(result.log),
    }
    write_manifest(
        out,
        run_manifest(
            "train",
            settings,
            {"corpus": Path(args.corpus), "vectors": Path(args.vectors)},
            ["model.bin", "model.json", "train_log.jsonl"],
            t0,
        ),
        stats=stats,
    )
    summary = f"train: {settings['variant']} best epoch {result.best_epoch}"
    if result.log:
        summary += f" (validation NDCG {result.best_val_ndcg:.4f})"
    print(summary + f" -> {out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    settings = resolve(args, {"seed": 0, "threads": 1, "phase": "test", "cutoff": 20})
    _apply_threads(settings["threads"])
    t0 = time.perf_counter()
    corpus = _load_corpus(args.corpus)
    table = _load_table(args.vectors)
    params, _ = _load_model(args.model)
    vc = M.VecCorpus(corpus, table)
    try:
        result = E.evaluate_model(params, vc, settings["phase"], cutoff=settings["cutoff"])
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    E.write_metrics(out / "metrics.json", params.wiring.variant, settings["phase"], result)
    write_manifest(
        out,
        run_manifest(
            "eval",
            settings,
            {"corpus": Path(args.corpus), "vectors": Path(args.vectors), "model": Path(args.model)},
            ["metrics.json"],
            t0,
        ),
    )
    s = result.summary()
    print(
        f"eval: {params.wiring.variant} on {settings['phase']}: "
        f"HR@{s['cutoff']}={s['hr']:.4f} MRR={s['mrr']:.4f} NDCG={s['ndcg']:.4f} over {s['count']} instances"
    )
    return 0


def cmd_search(args: argparse.Namespace) -> int:
    settings = resolve(args, {"seed": 0, "threads": 1, "topn": 20})
    _apply_threads(settings["threads"])
    corpus = _load_corpus(args.corpus)
    table = _load_table(args.vectors)
    params, _ = _load_model(args.model)
    vc = M.VecCorpus(corpus, table)

    q_vec = em.infer_query_vector(table, args.query)
    if args.user in corpus.users:
        ctx = M.replay_context(params, vc.pairs(corpus.interactions_of(args.user)))
    else:
        logger.warning("unknown user %r: scoring without preference context", args.user)
        k, m = params.config.k, params.config.m
        ctx = M.UserContext(
            g=M.initial_g(k),
            window_queries=np.zeros((m, k), dtype=np.float32),
            window_products=np.zeros((m, k), dtype=np.float32),
        )
    ranked = M.rank_catalog(params, ctx, q_vec, vc.product_ids, vc.product_matrix)
    top = ranked[: max(1, settings["topn"])]
    for pos, (pid, score) in enumerate(top, start=1):
        print(f"{pos}\t{pid}\t{score:.6f}")
    return 0


def cmd_attn_dump(args: argparse.Namespace) -> int:
    settings = resolve(args, {"seed": 0, "threads": 1, "phase": "test"})
    _apply_threads(settings["threads"])
    t0 = time.perf_counter()
    corpus = _load_corpus(args.corpus)
    table = _load_table(args.vectors)
    params, _ = _load_model(args.model)
    vc = M.VecCorpus(corpus, table)
    try:
        records = E.dump_attention(params, vc, settings["phase"])
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    E.write_attention(out / "attention.jsonl", records)
    write_manifest(
        out,
        run_manifest(
            "attn-dump",
            settings,
            {"corpus": Path(args.corpus), "vectors": Path(args.vectors), "model": Path(args.model)},
            ["attention.jsonl"],
            t0,
        ),
        stats={"instances": len(records)},
    )
    print(f"attn-dump: {len(records)} instances -> {out / 'attention.jsonl'}")
    return 0


def _run_baseline(args: argparse.Namespace, name: str) -> int:
    settings = resolve(args, {"seed": 0, "threads": 1, "phase": "test", "cutoff": 20, "mu": 2000.0, "lam": 0.5})
    _apply_threads(settings["threads"])
    t0 = time.perf_counter()
    corpus = _load_corpus(args.corpus)
    try:
        index = B.build_index(corpus)
        if name == "QL":
            result = B.evaluate_ql(index, corpus, settings["phase"], mu=settings["mu"], cutoff=settings["cutoff"])
        else:
            profiles = B.build_user_profiles(corpus)
            result = B.evaluate_uql(
                index,
                profiles,
                corpus,
                settings["phase"],
                mu=settings["mu"],
                lam=settings["lam"],
                cutoff=settings["cutoff"],
            )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    E.write_metrics(out / "metrics.json", name, settings["phase"], result)
    write_manifest(
        out,
        run_manifest(name.lower(), settings, {"corpus": Path(args.corpus)}, ["metrics.json"], t0),
    )
    s = result.summary()
    print(
        f"{name.lower()}: mu={settings['mu']:g}"
        + (f" lambda={settings['lam']:g}" if name == "UQL" else "")
        + f" on {settings['phase']}: HR@{s['cutoff']}={s['hr']:.4f} MRR={s['mrr']:.4f} NDCG={s['ndcg']:.4f}"
    )
    return 0


def cmd_baseline_ql(args: argparse.Namespace) -> int:
    return _run_baseline(args, "QL")


def cmd_baseline_uql(args: argparse.Namespace) -> int:
    return _run_baseline(args, "UQL")


def _load_metrics_instances(path: Path) -> list[dict]:
    _require(path, "metrics file")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"metrics file is not valid JSON: {path} ({exc})") from None
    if "instances" not in payload:
        raise CliError(f"metrics file has no per-instance records: {path}")
    return payload["instances"]


def cmd_significance(args: argparse.Namespace) -> int:
    settings = resolve(args, {"seed": 0, "threads": 1, "metric": "ndcg"})
    metric = settings["metric"]
    if metric not in ("hr", "mrr", "ndcg"):
        raise CliError(f"metric must be one of hr, mrr, ndcg; got {metric!r}")
    inst_a = _load_metrics_instances(Path(args.a))
    inst_b = _load_metrics_instances(Path(args.b))
    keys_a = [(i["user"], i["query"], i["product"]) for i in inst_a]
    keys_b = [(i["user"], i["query"], i["product"]) for i in inst_b]
    if keys_a != keys_b:
        raise CliError("metrics files cover different instances; a paired test needs matching runs")
    try:
        report = E.paired_ttest([i[metric] for i in inst_a], [i[metric] for i in inst_b])
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        E.write_significance(out / "significance.json", {metric: report})
    print(
        f"significance ({metric}, n={len(inst_a)}): mean diff {report['mean_diff']:+.6f}, "
        f"t={report['t']:.4f}, p={report['p']:.6f}"
        + (" [degenerate: zero variance]" if report["degenerate"] else "")
    )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed (default 0)")
    sub.add_argument(
        "--threads",
        type=int,
        default=argparse.SUPPRESS,
        help="BLAS thread cap; 1 (the default) is deterministic mode",
    )
    sub.add_argument("--config", default=None, help="flat key=value config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alstp", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="subcommand", required=True)
    sup = argparse.SUPPRESS

    p = subs.add_parser("preprocess", help="raw reviews + metadata -> corpus directory")
    p.add_argument("--reviews", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-user", dest="min_user", type=int, default=sup)
    p.add_argument("--min-word", dest="min_word", type=int, default=sup)
    _add_common(p)
    p.set_defaults(handler=cmd_preprocess)

    p = subs.add_parser("synth", help="generate a planted-preference synthetic corpus")
    p.add_argument("--profile", required=True, choices=S.PROFILES)
    p.add_argument("--out", required=True)
    p.add_argument("--users", type=int, default=sup)
    p.add_argument("--products", type=int, default=sup)
    p.add_argument("--per-user", dest="per_user", type=int, default=sup)
    p.add_argument("--topics", type=int, default=sup)
    p.add_argument("--categories", type=int, default=sup)
    p.add_argument("--session-len", dest="session_len", type=int, default=sup)
    p.add_argument("--adherence", type=float, default=sup)
    _add_common(p)
    p.set_defaults(handler=cmd_synth)

    p = subs.add_parser("embed", help="train PV-DM vectors for a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=sup)
    p.add_argument("--window", type=int, default=sup)
    p.add_argument("--negatives", type=int, default=sup)
    p.add_argument("--epochs", type=int, default=sup)
    p.add_argument("--lr", type=float, default=sup)
    _add_common(p)
    p.set_defaults(handler=cmd_embed)

    p = subs.add_parser("train", help="train a preference model on an embedded corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=M.VARIANTS, default=sup)
    p.add_argument("--grid-lr", action="store_true", help="search the learning-rate grid instead of --lr")
    for flag, typ in (
        ("--k", int),
        ("--m", int),
        ("--f", int),
        ("--beta", float),
        ("--tower-layers", int),
        ("--negatives", int),
        ("--lr", float),
        ("--momentum", float),
        ("--clip", float),
        ("--l2", float),
        ("--epochs", int),
        ("--cutoff", int),
    ):
        p.add_argument(flag, dest=flag.lstrip("-").replace("-", "_"), type=typ, default=sup)
    _add_common(p)
    p.set_defaults(handler=cmd_train)

    p = subs.add_parser("eval", help="rank the catalog for held-out instances and write metrics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--phase", choices=("validation", "test"), default=sup)
    p.add_argument("--cutoff", type=int, default=sup)
    _add_common(p)
    p.set_defaults(handler=cmd_eval)

    p = subs.add_parser("search", help="rank the catalog for one (user, query) pair")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--topn", type=int, default=sup)
    _add_common(p)
    p.set_defaults(handler=cmd_search)

    p = subs.add_parser("attn-dump", help="write per-instance attention weights")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--phase", choices=("validation", "test"), default=sup)
    _add_common(p)
    p.set_defaults(handler=cmd_attn_dump)

    for name, help_text in (
        ("baseline-ql", "query-likelihood baseline with Dirichlet smoothing"),
        ("baseline-uql", "user-profile-smoothed query likelihood baseline"),
    ):
        p = subs.add_parser(name, help=help_text)
        p.add_argument("--corpus", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--phase", choices=("validation", "test"), default=sup)
        p.add_argument("--cutoff", type=int, default=sup)
        p.add_argument("--mu", type=float, default=sup)
        if name == "baseline-uql":
            p.add_argument("--lam", type=float, default=sup)
        _add_common(p)
        p.set_defaults(handler=cmd_baseline_ql if name == "baseline-ql" else cmd_baseline_uql)

    p = subs.add_parser("significance", help="paired t-test between two metrics files")
    p.add_argument("--a", required=True, help="metrics.json of the first run")
    p.add_argument("--b", required=True, help="metrics.json of the second run")
    p.add_argument("--out", default=None, help="optional directory for significance.json")
    p.add_argument("--metric", choices=("hr", "mrr", "ndcg"), default=sup)
    _add_common(p)
    p.set_defaults(handler=cmd_significance)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.handler(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
