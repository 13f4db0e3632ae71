"""Shared helpers for the test suite."""

import numpy as np

from alstp import embed as em
from alstp import model as M
from alstp import numerics as nx
from alstp.corpus import Interaction, SplitCorpus, UserSplit


def params64(params: M.ModelParams) -> M.ModelParams:
    """Clone a parameter set in float64 (gradient checks and tight oracle
    comparisons need more headroom than the float32 training dtype)."""
    t64 = {
        name: nx.Tensor(t.data.astype(np.float64), trainable=True, name=name)
        for name, t in params.items()
    }
    return M.ModelParams(params.config, params.wiring, t64)


def random_params(config: M.Config, variant: str = "ALSTP", seed: int = 0, dtype=np.float64) -> M.ModelParams:
    """Xavier-initialized params, optionally recast for high-precision tests."""
    p = M.init_params(config, variant, seed=seed)
    if dtype == np.float32:
        return p
    return params64(p)


def random_context(config: M.Config, rng: np.random.Generator, scale: float = 0.5) -> M.UserContext:
    k, m = config.k, config.m
    return M.UserContext(
        g=(rng.normal(size=k) * scale).astype(np.float32),
        window_queries=(rng.normal(size=(m, k)) * scale).astype(np.float32),
        window_products=(rng.normal(size=(m, k)) * scale).astype(np.float32),
    )


_TOPIC_WORDS = {
    0: "red green blue crimson teal azure violet maroon",
    1: "oak elm pine birch cedar maple walnut aspen",
}
_TOPIC_QUERIES = ["red crimson azure", "oak cedar maple"]


def toy_train_corpus(seed: int = 0, k: int = 8, pvdm_epochs: int = 25):
    """Three users whose purchases arrive in same-topic runs of four.

    Queries name the target's topic and product reviews are built from the
    same topic vocabulary, so the query embedding genuinely predicts the
    purchased product — enough signal for pairwise training to bite on.
    """
    products = [f"A{i}" for i in range(4)] + [f"B{i}" for i in range(4)]
    topic_of = {p: 0 if p.startswith("A") else 1 for p in products}
    product_docs = {
        p: _TOPIC_WORDS[topic_of[p]].split() * 5 + [f"item{p.lower()}"] * 3 for p in products
    }

    def inter(u, p, q, t):
        return Interaction(user_id=u, product_id=p, query_id=q, timestamp=t)

    topic_runs = [0] * 4 + [1] * 4 + [0] * 4 + [1] * 4
    users = {}
    for ui, u in enumerate(("u1", "u2", "u3")):
        train = []
        for t, topic in enumerate(topic_runs):
            pool = products[:4] if topic == 0 else products[4:]
            train.append(inter(u, pool[(ui + t) % 4], topic, t))
        users[u] = UserSplit(
            train=train,
            validation=inter(u, products[ui], 0, 100),
            test=inter(u, products[ui + 1], 0, 101),
        )

    vocab = {}
    for doc in product_docs.values():
        for w in doc:
            vocab[w] = vocab.get(w, 0) + 1
    corpus = SplitCorpus(
        users=users, products=products, queries=_TOPIC_QUERIES, vocab=vocab, product_docs=product_docs
    )
    docs = [(em.product_doc_key(p), product_docs[p]) for p in products]
    docs += [(em.query_doc_key(qi), q.split()) for qi, q in enumerate(_TOPIC_QUERIES)]
    table, _ = em.train_pvdm(docs, k=k, window=2, negatives=2, epochs=pvdm_epochs, lr=0.08, seed=seed)
    for qi, q in enumerate(_TOPIC_QUERIES):
        table.query_text_rows[q] = table._doc_index[em.query_doc_key(qi)]
    return M.VecCorpus(corpus, table)
