"""Review-corpus pipeline: parse raw review/metadata dumps, derive queries
from category paths, filter, split per user, and serialize a versioned
corpus directory.

The corpus directory is the single source of truth downstream: interaction
tuples, the query table, the word vocabulary, per-user split boundaries, and
the per-product and per-user training documents.  Review text of
validation/test interactions is never written anywhere — that is the
package's no-leakage guarantee, and it holds by construction because only
training-side text reaches an artifact.
"""

from __future__ import annotations

import gzip
import json
import logging
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .stopwords import STOPWORDS

logger = logging.getLogger(__name__)

CORPUS_FORMAT_VERSION = 1

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


def extract_query(category_path: list[str] | tuple[str, ...]) -> str:
    """Turn a root-to-leaf category path into flat query text.

    Terms are concatenated in path order, lowercased, punctuation-stripped,
    stopwords removed, and duplicate words deduplicated keeping the LAST
    (deepest) occurrence.  Returns "" when nothing survives; the caller drops
    such products.
    """
    tokens = [t for t in tokenize(" ".join(category_path)) if t not in STOPWORDS]
    last_pos = {tok: i for i, tok in enumerate(tokens)}
    kept = [tok for i, tok in enumerate(tokens) if last_pos[tok] == i]
    return " ".join(kept)


@dataclass(frozen=True)
class RawReview:
    user_id: str
    product_id: str
    text: str
    timestamp: int


@dataclass(frozen=True)
class ProductMeta:
    product_id: str
    category_paths: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class Interaction:
    user_id: str
    product_id: str
    query_id: int
    timestamp: int


@dataclass
class UserSplit:
    train: list[Interaction]
    validation: Interaction
    test: Interaction


@dataclass
class SplitCorpus:
    """Filtered, per-user chronological interactions with leak-free artifacts."""

    users: dict[str, UserSplit]
    products: list[str]  # sorted catalog
    queries: list[str]  # query_id -> query text
    vocab: dict[str, int]  # word -> training frequency (threshold applied)
    product_docs: dict[str, list[str]]  # product -> training review tokens
    user_docs: dict[str, list[str]] = field(default_factory=dict)  # user -> own training review tokens
    meta: dict = field(default_factory=dict)

    def interactions_of(self, user_id: str) -> list[Interaction]:
        u = self.users[user_id]
        return list(u.train) + [u.validation, u.test]

    def train_query_ids(self) -> set[int]:
        return {i.query_id for u in self.users.values() for i in u.train}


def _open_maybe_gzip(path: Path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def parse_reviews(path: str | Path) -> tuple[list[RawReview], int]:
    """Read a JSONL review dump; returns (records, malformed_line_count).

    A line is malformed if it is not JSON, lacks reviewerID/asin/
    unixReviewTime, or carries a non-integer or negative timestamp.  Missing
    review text is tolerated (empty string).  Zero valid records is a hard
    error; an unreadable file raises the underlying OSError.
    """
    path = Path(path)
    records: list[RawReview] = []
    skipped = 0
    with _open_maybe_gzip(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                user = obj["reviewerID"]
                product = obj["asin"]
                ts = obj["unixReviewTime"]
            except (json.JSONDecodeError, KeyError, TypeError):
                skipped += 1
                continue
            if not isinstance(user, str) or not isinstance(product, str) or not user or not product:
                skipped += 1
                continue
            if isinstance(ts, bool) or not isinstance(ts, int) or ts < 0:
                skipped += 1
                continue
            text = obj.get("reviewText", "")
            if not isinstance(text, str):
                text = ""
            records.append(RawReview(user, product, text, ts))
    if skipped:
        logger.warning("parse_reviews: skipped %d malformed line(s) in %s", skipped, path)
    if not records:
        raise ValueError(f"no valid review records in {path}")
    return records, skipped


def parse_meta(path: str | Path) -> tuple[dict[str, ProductMeta], int]:
    """Read a JSONL metadata dump keyed by asin; returns (map, skipped)."""
    path = Path(path)
    metas: dict[str, ProductMeta] = {}
    skipped = 0
    with _open_maybe_gzip(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                product = obj["asin"]
                cats = obj["categories"]
            except (json.JSONDecodeError, KeyError, TypeError):
                skipped += 1
                continue
            if not isinstance(product, str) or not product or not isinstance(cats, list):
                skipped += 1
                continue
            paths = []
            for p in cats:
                if isinstance(p, list) and p and all(isinstance(t, str) for t in p):
                    paths.append(tuple(p))
            if not paths:
                skipped += 1
                continue
            metas[product] = ProductMeta(product, tuple(paths))
    if skipped:
        logger.warning("parse_meta: skipped %d malformed line(s) in %s", skipped, path)
    if not metas:
        raise ValueError(f"no valid metadata records in {path}")
    return metas, skipped


def _assign_product_queries(metas: dict[str, ProductMeta], seed: int) -> dict[str, str]:
    """One query per product; multi-path products pick uniformly at random."""
    rng = np.random.default_rng(seed)
    chosen: dict[str, str] = {}
    dropped = 0
    for product in sorted(metas):
        candidates: list[str] = []
        for path in metas[product].category_paths:
            q = extract_query(list(path))
            if q and q not in candidates:
                candidates.append(q)
        if not candidates:
            dropped += 1
            logger.warning("product %s dropped: category path empties out after query extraction", product)
            continue
        if len(candidates) == 1:
            chosen[product] = candidates[0]
        else:
            chosen[product] = candidates[int(rng.integers(len(candidates)))]
    if dropped:
        logger.warning("dropped %d product(s) with no usable query", dropped)
    return chosen


def build_corpus(
    reviews: list[RawReview],
    metas: dict[str, ProductMeta],
    min_user_interactions: int = 10,
    min_word_freq: int = 5,
    seed: int = 0,
) -> SplitCorpus:
    """Join reviews with product queries, filter, split, and build artifacts.

    Filtering iterates to a fixpoint: users below ``min_user_interactions``
    are dropped, which can orphan products (they simply leave the catalog).
    Per user the chronologically last interaction becomes the test instance,
    the second-to-last validation, the rest training.  The word vocabulary
    and the per-product documents are built from TRAINING data only.
    """
    product_query = _assign_product_queries(metas, seed)

    joined = []  # (user, product, ts, order, text, query_text)
    for order, r in enumerate(reviews):
        q = product_query.get(r.product_id)
        if q is None:
            continue
        joined.append((r.user_id, r.product_id, r.timestamp, order, r.text, q))
    if not joined:
        raise ValueError("no interactions remain after joining reviews with product metadata")

    # fixpoint user filter
    while True:
        counts = Counter(rec[0] for rec in joined)
        keep = {u for u, n in counts.items() if n >= min_user_interactions}
        if len(keep) == len(counts):
            break
        joined = [rec for rec in joined if rec[0] in keep]
        if not joined:
            raise ValueError(
                f"no users with at least {min_user_interactions} interactions remain after filtering"
            )

    by_user: dict[str, list] = {}
    for rec in joined:
        by_user.setdefault(rec[0], []).append(rec)
    for recs in by_user.values():
        recs.sort(key=lambda rec: (rec[2], rec[3]))  # stable chronological

    query_texts = sorted({rec[5] for rec in joined})
    query_id = {q: i for i, q in enumerate(query_texts)}
    products = sorted({rec[1] for rec in joined})

    users: dict[str, UserSplit] = {}
    train_text_records = []  # (ts, order, user, product, text) training side only
    for uid in sorted(by_user):
        recs = by_user[uid]
        inters = [Interaction(uid, p, query_id[q], ts) for (_, p, ts, _, _, q) in recs]
        users[uid] = UserSplit(train=inters[:-2], validation=inters[-2], test=inters[-1])
        for rec in recs[:-2]:
            train_text_records.append((rec[2], rec[3], rec[0], rec[1], rec[4]))

    # vocabulary: training review tokens + each distinct training query once
    word_counts: Counter[str] = Counter()
    for _, _, _, _, text in train_text_records:
        word_counts.update(tokenize(text))
    train_qids = {i.query_id for u in users.values() for i in u.train}
    for qid in train_qids:
        word_counts.update(query_texts[qid].split())
    vocab = {w: c for w, c in word_counts.items() if c >= min_word_freq}

    # per-product and per-user training documents in global chronological order
    product_docs: dict[str, list[str]] = {p: [] for p in products}
    user_docs: dict[str, list[str]] = {u: [] for u in users}
    for ts, order, user, product, text in sorted(train_text_records, key=lambda r: (r[0], r[1])):
        toks = [t for t in tokenize(text) if t in vocab]
        product_docs[product].extend(toks)
        user_docs[user].extend(toks)

    meta = {
        "min_user_interactions": min_user_interactions,
        "min_word_freq": min_word_freq,
        "seed": seed,
        "n_users": len(users),
        "n_products": len(products),
        "n_queries": len(query_texts),
        "n_interactions": sum(len(u.train) + 2 for u in users.values()),
        "vocab_size": len(vocab),
    }
    return SplitCorpus(users, products, query_texts, vocab, product_docs, user_docs, meta)


# ---------------------------------------------------------------------------
# serialization

DECLARED_FILES = (
    "interactions.tsv",
    "queries.tsv",
    "vocab.tsv",
    "documents.tsv",
    "user_docs.tsv",
    "split.json",
    "manifest.json",
)


def save_corpus(corpus: SplitCorpus, out_dir: str | Path, manifest_extra: dict | None = None) -> None:
    """Write the corpus directory; identical corpora serialize byte-identically."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    boundaries = {}
    for uid in sorted(corpus.users):
        u = corpus.users[uid]
        seq = list(u.train) + [u.validation, u.test]
        boundaries[uid] = {"start": len(rows), "total": len(seq), "train": len(u.train)}
        rows.extend(seq)

    with open(out / "interactions.tsv", "w", encoding="utf-8") as fh:
        fh.write("user_id\tproduct_id\tquery_id\ttimestamp\n")
        for it in rows:
            fh.write(f"{it.user_id}\t{it.product_id}\t{it.query_id}\t{it.timestamp}\n")

    with open(out / "queries.tsv", "w", encoding="utf-8") as fh:
        fh.write("query_id\tquery_text\n")
        for i, q in enumerate(corpus.queries):
            fh.write(f"{i}\t{q}\n")

    with open(out / "vocab.tsv", "w", encoding="utf-8") as fh:
        fh.write("word\tfreq\n")
        for w in sorted(corpus.vocab):
            fh.write(f"{w}\t{corpus.vocab[w]}\n")

    with open(out / "documents.tsv", "w", encoding="utf-8") as fh:
        fh.write("product_id\ttokens\n")
        for p in corpus.products:
            fh.write(f"{p}\t{' '.join(corpus.product_docs.get(p, []))}\n")

    with open(out / "user_docs.tsv", "w", encoding="utf-8") as fh:
        fh.write("user_id\ttokens\n")
        for u in sorted(corpus.users):
            fh.write(f"{u}\t{' '.join(corpus.user_docs.get(u, []))}\n")

    with open(out / "split.json", "w", encoding="utf-8") as fh:
        json.dump({"format_version": CORPUS_FORMAT_VERSION, "users": boundaries}, fh, indent=2, sort_keys=True)
        fh.write("\n")

    manifest = dict(corpus.meta)
    manifest["format_version"] = CORPUS_FORMAT_VERSION
    if manifest_extra:
        manifest.update(manifest_extra)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_corpus(corpus_dir: str | Path) -> SplitCorpus:
    d = Path(corpus_dir)
    for name in DECLARED_FILES:
        if not (d / name).exists():
            raise FileNotFoundError(f"corpus directory {d} is missing {name}")

    with open(d / "queries.tsv", encoding="utf-8") as fh:
        next(fh)
        queries = [line.rstrip("\n").split("\t", 1)[1] for line in fh if line.strip()]

    vocab: dict[str, int] = {}
    with open(d / "vocab.tsv", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            if line.strip():
                w, c = line.rstrip("\n").split("\t")
                vocab[w] = int(c)

    rows: list[Interaction] = []
    with open(d / "interactions.tsv", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            if line.strip():
                uid, pid, qid, ts = line.rstrip("\n").split("\t")
                rows.append(Interaction(uid, pid, int(qid), int(ts)))

    with open(d / "split.json", encoding="utf-8") as fh:
        boundaries = json.load(fh)["users"]

    users: dict[str, UserSplit] = {}
    for uid, b in boundaries.items():
        seq = rows[b["start"] : b["start"] + b["total"]]
        users[uid] = UserSplit(train=seq[: b["train"]], validation=seq[b["train"]], test=seq[b["train"] + 1])

    product_docs: dict[str, list[str]] = {}
    with open(d / "documents.tsv", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            if line.rstrip("\n"):
                parts = line.rstrip("\n").split("\t")
                product_docs[parts[0]] = parts[1].split() if len(parts) > 1 and parts[1] else []

    user_docs: dict[str, list[str]] = {}
    with open(d / "user_docs.tsv", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            if line.rstrip("\n"):
                parts = line.rstrip("\n").split("\t")
                user_docs[parts[0]] = parts[1].split() if len(parts) > 1 and parts[1] else []

    products = sorted(product_docs)
    with open(d / "manifest.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    return SplitCorpus(users, products, queries, vocab, product_docs, user_docs, meta)
