"""Distributed-memory paragraph embeddings for product documents and queries.

Each document (a product's concatenated training reviews, or a query's text)
gets a k-dim vector trained jointly with word vectors: at every position the
center word is predicted from the AVERAGE of the document vector and the
context word vectors, optimized with negative sampling.  Products and
queries therefore live in one shared latent space.

Negatives are drawn from the unigram distribution raised to 3/4 and
renormalized.  Training is sequential and seeded (one RNG stream per
document per epoch), so identical inputs and seed give bit-identical
checkpoints.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .container import read_container, write_container
from .corpus import SplitCorpus, extract_query, tokenize
from .numerics import _sigmoid_stable

logger = logging.getLogger(__name__)

MIN_LR = 1e-4


def product_doc_key(product_id: str) -> str:
    return f"p:{product_id}"


def query_doc_key(query_id: int) -> str:
    return f"q:{query_id}"


@dataclass
class EmbeddingTable:
    """Trained document/word vectors plus everything inference needs."""

    k: int
    doc_keys: list[str]
    doc_vectors: np.ndarray  # (n_docs, k) float32
    words: list[str]
    word_vectors: np.ndarray  # input vectors, (V, k) float32
    word_out: np.ndarray  # output (context) vectors, (V, k) float32
    word_counts: np.ndarray  # (V,) raw frequencies, drives the noise dist
    seed: int
    hyper: dict = field(default_factory=dict)
    query_text_rows: dict[str, int] = field(default_factory=dict)  # normalized text -> doc row
    _doc_index: dict[str, int] = field(default_factory=dict, repr=False)
    _word_index: dict[str, int] = field(default_factory=dict, repr=False)
    _noise_cum: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self._doc_index:
            self._doc_index = {key: i for i, key in enumerate(self.doc_keys)}
        if not self._word_index:
            self._word_index = {w: i for i, w in enumerate(self.words)}

    def noise_cumulative(self) -> np.ndarray:
        """CDF of the negative-sampling distribution: unigram^(3/4), normalized."""
        if self._noise_cum is None:
            w = self.word_counts.astype(np.float64) ** 0.75
            self._noise_cum = np.cumsum(w / w.sum())
        return self._noise_cum

    def doc_vector(self, key: str) -> np.ndarray | None:
        idx = self._doc_index.get(key)
        return None if idx is None else self.doc_vectors[idx]

    def product_vector(self, product_id: str) -> np.ndarray | None:
        return self.doc_vector(product_doc_key(product_id))

    def query_vector(self, query_id: int) -> np.ndarray | None:
        return self.doc_vector(query_doc_key(query_id))

    def has_query(self, query_id: int) -> bool:
        return query_doc_key(query_id) in self._doc_index

    def save(self, directory, name: str = "embeddings") -> None:
        tensors = {
            "doc_vectors": self.doc_vectors,
            "word_vectors": self.word_vectors,
            "word_out": self.word_out,
            "word_counts": self.word_counts.astype(np.float32),
        }
        meta = {
            "k": self.k,
            "seed": self.seed,
            "doc_keys": self.doc_keys,
            "words": self.words,
            "hyperparameters": self.hyper,
            "query_text_rows": self.query_text_rows,
        }
        write_container(directory, name, tensors, meta)

    @classmethod
    def load(cls, directory, name: str = "embeddings") -> "EmbeddingTable":
        tensors, meta = read_container(directory, name)
        return cls(
            k=int(meta["k"]),
            doc_keys=list(meta["doc_keys"]),
            doc_vectors=tensors["doc_vectors"].copy(),
            words=list(meta["words"]),
            word_vectors=tensors["word_vectors"].copy(),
            word_out=tensors["word_out"].copy(),
            word_counts=tensors["word_counts"].astype(np.int64),
            seed=int(meta["seed"]),
            hyper=dict(meta["hyperparameters"]),
            query_text_rows={k: int(v) for k, v in meta.get("query_text_rows", {}).items()},
        )


def build_documents(corpus: SplitCorpus) -> list[tuple[str, list[str]]]:
    """Documents for embedding training: every catalog product (training
    review tokens) plus every query observed in a training interaction."""
    docs: list[tuple[str, list[str]]] = []
    for pid in corpus.products:
        docs.append((product_doc_key(pid), list(corpus.product_docs.get(pid, []))))
    vocab = corpus.vocab
    for qid in sorted(corpus.train_query_ids()):
        toks = [t for t in corpus.queries[qid].split() if t in vocab]
        if not toks:
            logger.warning("query %r has no in-vocabulary tokens; its vector stays at initialization", corpus.queries[qid])
        docs.append((query_doc_key(qid), toks))
    return docs


def _init_table(docs, k: int, seed: int, hyper: dict) -> EmbeddingTable:
    counts: dict[str, int] = {}
    for _, toks in docs:
        for t in toks:
            counts[t] = counts.get(t, 0) + 1
    words = sorted(counts)
    if not words:
        raise ValueError("embedding corpus is empty: no document has any token")
    rng = np.random.default_rng([seed, 0xD0C])
    bound = 0.5 / k
    doc_keys = [key for key, _ in docs]
    doc_vectors = rng.uniform(-bound, bound, size=(len(docs), k)).astype(np.float32)
    word_vectors = rng.uniform(-bound, bound, size=(len(words), k)).astype(np.float32)
    word_out = np.zeros((len(words), k), dtype=np.float32)
    return EmbeddingTable(
        k=k,
        doc_keys=doc_keys,
        doc_vectors=doc_vectors,
        words=words,
        word_vectors=word_vectors,
        word_out=word_out,
        word_counts=np.array([counts[w] for w in words], dtype=np.int64),
        seed=seed,
        hyper=hyper,
    )


def _train_positions(
    tokens_idx: np.ndarray,
    doc_vec: np.ndarray,
    word_in: np.ndarray,
    word_out: np.ndarray,
    noise_cum: np.ndarray,
    rng: np.random.Generator,
    window: int,
    negatives: int,
    lr_for_position,
    update_words: bool,
) -> float:
    """One pass over a document; returns summed position loss.

    Per position the center word is scored against ``negatives`` noise words
    (noise draws colliding with the center are dropped) from the average of
    the document vector and the context vectors; a single SGD step applies
    the summed gradient of that position's loss.  ``update_words=False``
    freezes word vectors (inference mode: only the doc vector moves).
    """
    n = tokens_idx.shape[0]
    total_loss = 0.0
    for t in range(n):
        lo = max(0, t - window)
        ctx = np.concatenate([tokens_idx[lo:t], tokens_idx[t + 1 : t + 1 + window]])
        n_inputs = 1 + ctx.shape[0]
        if ctx.shape[0]:
            h = (doc_vec + word_in[ctx].sum(axis=0)) / n_inputs
        else:
            h = doc_vec.copy()
        center = tokens_idx[t]
        negs = np.searchsorted(noise_cum, rng.random(negatives))
        negs = negs[negs != center]
        targets = np.concatenate([[center], negs])
        labels = np.zeros(targets.shape[0], dtype=np.float32)
        labels[0] = 1.0
        u = word_out[targets]
        scores = u @ h
        p = _sigmoid_stable(scores)
        eps = 1e-7
        total_loss -= float(np.log(p[0] + eps) + np.log(1.0 - p[1:] + eps).sum())
        lr = lr_for_position()
        gvec = (labels - p) * lr
        dh = u.T @ gvec
        if update_words:
            np.add.at(word_out, targets, np.outer(gvec, h))
        upd = dh / n_inputs
        doc_vec += upd
        if update_words and ctx.shape[0]:
            np.add.at(word_in, ctx, np.broadcast_to(upd, (ctx.shape[0], upd.shape[0])))
    return total_loss


def train_pvdm(
    docs: list[tuple[str, list[str]]],
    k: int,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 20,
    lr: float = 0.025,
    seed: int = 0,
) -> tuple[EmbeddingTable, list[float]]:
    """Train paragraph + word vectors; returns (table, mean loss per epoch).

    Zero epochs returns the seeded initialization unchanged.  The learning
    rate decays linearly over all positions down to MIN_LR.
    """
    hyper = {"window": window, "negatives": negatives, "epochs": epochs, "lr": lr}
    table = _init_table(docs, k, seed, hyper)
    widx = table._word_index
    token_ids = [np.array([widx[t] for t in toks], dtype=np.int64) for _, toks in docs]
    total_positions = sum(arr.shape[0] for arr in token_ids) * max(epochs, 1)
    if total_positions == 0 or epochs == 0:
        return table, []
    noise_cum = table.noise_cumulative()

    pos_counter = [0]

    def lr_now() -> float:
        frac = pos_counter[0] / total_positions
        pos_counter[0] += 1
        return max(lr * (1.0 - frac), MIN_LR)

    epoch_losses = []
    n_tokens = sum(arr.shape[0] for arr in token_ids)
    for epoch in range(epochs):
        loss = 0.0
        for di, ids in enumerate(token_ids):
            if ids.shape[0] == 0:
                continue
            rng = np.random.default_rng([seed, epoch, di])
            loss += _train_positions(
                ids,
                table.doc_vectors[di],
                table.word_vectors,
                table.word_out,
                noise_cum,
                rng,
                window,
                negatives,
                lr_now,
                update_words=True,
            )
        epoch_losses.append(loss / max(n_tokens, 1))
    return table, epoch_losses


def infer_query_vector(table: EmbeddingTable, query_text: str, epochs: int | None = None) -> np.ndarray:
    """Fit a fresh doc vector for unseen query text with frozen word vectors.

    Query text already seen at training time returns the stored vector
    bit-exactly.  Text with no in-vocabulary tokens is a hard error.
    Deterministic: the RNG seed derives from the table seed and the text.
    """
    norm = extract_query([query_text])
    row = table.query_text_rows.get(norm if norm else query_text)
    if row is not None:
        return table.doc_vectors[row].copy()
    toks = [t for t in (norm.split() if norm else tokenize(query_text)) if t in table._word_index]
    if not toks:
        raise ValueError(f"query {query_text!r} has no in-vocabulary tokens; cannot infer a vector")
    if epochs is None:
        epochs = int(table.hyper.get("epochs", 20)) * 2
    digest = int.from_bytes(hashlib.sha256(query_text.encode("utf-8")).digest()[:8], "little")
    rng_init = np.random.default_rng([table.seed, 0x1F, digest])
    bound = 0.5 / table.k
    vec = rng_init.uniform(-bound, bound, size=table.k).astype(np.float32)
    ids = np.array([table._word_index[t] for t in toks], dtype=np.int64)
    lr = float(table.hyper.get("lr", 0.025))
    total = ids.shape[0] * epochs
    noise_cum = table.noise_cumulative()
    window = int(table.hyper.get("window", 5))
    negatives = int(table.hyper.get("negatives", 5))
    counter = [0]

    def lr_now() -> float:
        frac = counter[0] / total
        counter[0] += 1
        return max(lr * (1.0 - frac), MIN_LR)

    for epoch in range(epochs):
        rng = np.random.default_rng([table.seed, 0x1F, digest, epoch])
        _train_positions(
            ids, vec, table.word_vectors, table.word_out, noise_cum, rng, window, negatives, lr_now, update_words=False
        )
    return vec


def lookup_or_infer_query(table: EmbeddingTable, query_id: int, query_text: str) -> np.ndarray:
    stored = table.query_vector(query_id)
    if stored is not None:
        return stored
    return infer_query_vector(table, query_text)


def embed_corpus(
    corpus: SplitCorpus,
    k: int,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 20,
    lr: float = 0.025,
    seed: int = 0,
) -> tuple[EmbeddingTable, list[float]]:
    """Corpus-level entry point: builds documents, trains, and registers the
    normalized text of every trained query for exact lookup at inference."""
    docs = build_documents(corpus)
    table, losses = train_pvdm(docs, k, window=window, negatives=negatives, epochs=epochs, lr=lr, seed=seed)
    for qid in sorted(corpus.train_query_ids()):
        key = query_doc_key(qid)
        table.query_text_rows[corpus.queries[qid]] = table._doc_index[key]
    return table, losses
