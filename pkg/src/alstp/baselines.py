"""Query-likelihood retrieval baselines with Dirichlet smoothing.

QL scores a product document by the smoothed log-likelihood of generating
the query; UQL mixes in the likelihood of generating the user's frequent
review words, interpolated by lambda (lambda = 1 reduces to plain QL).
Scores stay in the log domain throughout.
"""

from __future__ import annotations

import logging
import math
from collections import Counter

from . import evaluation as E
from . import model as M
from .corpus import SplitCorpus

logger = logging.getLogger(__name__)

MU_GRID = (2000, 6000, 10000)
LAMBDA_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
PROFILE_THRESHOLD = 50


class LanguageModelIndex:
    """Term statistics over the per-product training documents.

    Immutable after construction: per-document term frequencies, document
    lengths, and maximum-likelihood collection probabilities P(w|C).
    """

    def __init__(self, product_docs: dict[str, list[str]]):
        if not product_docs:
            raise ValueError("cannot build a language-model index from an empty document set")
        self.tf: dict[str, Counter[str]] = {}
        self.doc_len: dict[str, int] = {}
        collection: Counter[str] = Counter()
        for pid, tokens in product_docs.items():
            counts = Counter(tokens)
            self.tf[pid] = counts
            self.doc_len[pid] = len(tokens)
            collection.update(counts)
        self.total_tokens = sum(collection.values())
        if self.total_tokens == 0:
            raise ValueError("cannot build a language-model index: every document is empty")
        self.p_collection = {w: c / self.total_tokens for w, c in collection.items()}
        checksum = math.fsum(self.p_collection.values())
        if abs(checksum - 1.0) > 1e-9:
            raise AssertionError(f"collection probabilities sum to {checksum!r}, not 1")
        self.products = sorted(self.tf)
        self._warned_words: set[str] = set()

    def score(self, query_tokens: list[str], product_id: str, mu: float) -> float:
        """Dirichlet-smoothed log-likelihood of the query under the document.

        Out-of-collection words contribute nothing (warned once per word);
        an empty document falls back to pure collection smoothing.
        """
        if mu <= 0:
            raise ValueError(f"the Dirichlet prior mu must be positive, got {mu}")
        tf = self.tf[product_id]
        dlen = self.doc_len[product_id]
        total = 0.0
        for w in query_tokens:
            p_c = self.p_collection.get(w)
            if p_c is None:
                if w not in self._warned_words:
                    self._warned_words.add(w)
                    logger.warning("query word %r is outside the collection; skipped in QL scoring", w)
                continue
            total += math.log((tf.get(w, 0) + mu * p_c) / (dlen + mu))
        return total


def build_index(corpus: SplitCorpus) -> LanguageModelIndex:
    return LanguageModelIndex(corpus.product_docs)


def build_user_profiles(corpus: SplitCorpus, threshold: int = PROFILE_THRESHOLD) -> dict[str, list[str]]:
    """Per-user frequent review words: strictly more than `threshold` uses."""
    profiles = {}
    for user, tokens in corpus.user_docs.items():
        counts = Counter(tokens)
        profiles[user] = sorted(w for w, c in counts.items() if c > threshold)
    return profiles


def ql_score(index: LanguageModelIndex, query_tokens: list[str], product_id: str, mu: float) -> float:
    return index.score(query_tokens, product_id, mu)


def uql_score(
    index: LanguageModelIndex,
    profile_words: list[str],
    query_tokens: list[str],
    product_id: str,
    mu: float,
    lam: float,
) -> float:
    """lam * QL(query) + (1 - lam) * QL(user profile), on log scores."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"the mixing weight lambda must lie in [0, 1], got {lam}")
    query_part = index.score(query_tokens, product_id, mu)
    if lam == 1.0:
        return query_part
    if not profile_words:
        return query_part  # caller warns once per user; scoring stays per-product
    return lam * query_part + (1.0 - lam) * index.score(profile_words, product_id, mu)


def rank_ql(index: LanguageModelIndex, query_tokens: list[str], mu: float) -> list[tuple[str, float]]:
    """Full catalog sorted by descending score; ties fall back to id order."""
    scores = {pid: index.score(query_tokens, pid, mu) for pid in index.products}
    order = sorted(index.products, key=lambda pid: (-scores[pid], pid))
    return [(pid, scores[pid]) for pid in order]


def rank_uql(
    index: LanguageModelIndex,
    profile_words: list[str],
    query_tokens: list[str],
    mu: float,
    lam: float,
) -> list[tuple[str, float]]:
    scores = {pid: uql_score(index, profile_words, query_tokens, pid, mu, lam) for pid in index.products}
    order = sorted(index.products, key=lambda pid: (-scores[pid], pid))
    return [(pid, scores[pid]) for pid in order]


def evaluate_ql(
    index: LanguageModelIndex,
    corpus: SplitCorpus,
    phase: str,
    mu: float,
    cutoff: int | None = None,
) -> E.EvalResult:
    """Rank the catalog for every held-out (user, query) pair of `phase`."""
    cutoff = E.DEFAULT_CUTOFF if cutoff is None else cutoff
    result = E.EvalResult(cutoff=cutoff)
    for user in sorted(corpus.users):
        target = _target(corpus, user, phase)
        ranked = rank_ql(index, corpus.queries[target.query_id].split(), mu)
        rank = M.rank_of(ranked, target.product_id)
        result.instances.append(E.score_instance(user, target.query_id, target.product_id, rank, cutoff))
    return result


def evaluate_uql(
    index: LanguageModelIndex,
    profiles: dict[str, list[str]],
    corpus: SplitCorpus,
    phase: str,
    mu: float,
    lam: float,
    cutoff: int | None = None,
) -> E.EvalResult:
    cutoff = E.DEFAULT_CUTOFF if cutoff is None else cutoff
    result = E.EvalResult(cutoff=cutoff)
    empty_profiles = 0
    for user in sorted(corpus.users):
        target = _target(corpus, user, phase)
        profile = profiles.get(user, [])
        if not profile:
            empty_profiles += 1
        ranked = rank_uql(index, profile, corpus.queries[target.query_id].split(), mu, lam)
        rank = M.rank_of(ranked, target.product_id)
        result.instances.append(E.score_instance(user, target.query_id, target.product_id, rank, cutoff))
    if empty_profiles:
        logger.warning(
            "%d user(s) have no frequent review words; UQL fell back to plain QL for them", empty_profiles
        )
    return result


def _target(corpus: SplitCorpus, user: str, phase: str):
    split = corpus.users[user]
    if phase == "validation":
        return split.validation
    if phase == "test":
        return split.test
    raise ValueError(f"phase must be 'validation' or 'test', got {phase!r}")
