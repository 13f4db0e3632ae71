"""Synthetic review-corpus generator with planted preference structure.

Products live on a (category, topic) grid. The category alone determines the
search query, so the query is deliberately ambiguous across topics; which
topic a user buys from is planted in their history:

- planted-shortterm: purchases arrive in short sessions that share a
  (category, topic); the recent window predicts the target's topic.
- planted-longterm: singleton sessions, but each user has a persistent
  favorite topic that switches once mid-stream and must be tracked.
- mixed: sessions whose topics are drawn from a per-user biased
  distribution — both structures at once.

The generator emits raw inputs in the same shape the preprocessor ingests
(reviews + metadata), plus a ground-truth manifest describing what was
planted, so experiments run through the genuine pipeline end to end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import ProductMeta, RawReview
from .stopwords import STOPWORDS

PROFILES = ("planted-shortterm", "planted-longterm", "mixed")

_CONSONANTS = "b c d f g h j k l m n p r s t v z".split()
_VOWELS = "a e i o u".split()


def _word_stream():
    """Deterministic stream of pronounceable CVCV pseudo-words."""
    for a in _CONSONANTS:
        for va in _VOWELS:
            for b in _CONSONANTS:
                for vb in _VOWELS:
                    w = a + va + b + vb
                    if w not in STOPWORDS:
                        yield w


@dataclass
class SynthSpec:
    profile: str
    n_users: int = 200
    n_products: int = 500
    n_per_user: int = 30
    n_topics: int = 5
    n_categories: int | None = None  # default: about 25 products per category
    session_len: int = 3  # shortterm; the mixed profile uses 5
    adherence: float = 0.85  # longterm favorite-topic probability
    seed: int = 0

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        if self.n_categories is None:
            self.n_categories = max(4, self.n_products // 25)
        if self.n_per_user < 10:
            raise ValueError("n_per_user must be at least 10 so users survive preprocessing")
        if self.profile == "planted-longterm" and self.n_per_user < 17:
            # switch_at is drawn from [n//2, n-8); both halves need room so the
            # switch leaves at least eight post-switch purchases to learn from
            raise ValueError("planted-longterm needs n_per_user of at least 17")
        if self.profile == "mixed" and self.n_topics < 3:
            raise ValueError("mixed needs n_topics of at least 3 (two favorites plus one other)")
        if self.profile == "planted-longterm" and self.n_topics < 2:
            raise ValueError("planted-longterm needs n_topics of at least 2 to switch between")
        if self.n_products < self.n_categories * self.n_topics:
            raise ValueError("need at least one product per (category, topic) cell")


@dataclass
class SynthCorpus:
    reviews: list[RawReview]
    metas: dict[str, ProductMeta]
    truth: dict = field(default_factory=dict)


def _allocate_words(spec: SynthSpec):
    stream = _word_stream()

    def take(n):
        return [next(stream) for _ in range(n)]

    topic_words = {t: take(8) for t in range(spec.n_topics)}
    category_words = {c: take(3) for c in range(spec.n_categories)}
    filler = take(30)
    product_words = {f"S{i:04d}": take(1)[0] for i in range(spec.n_products)}
    return topic_words, category_words, filler, product_words


def _plan_user(spec: SynthSpec, rng: np.random.Generator) -> tuple[list[dict], dict]:
    """Plan one user's purchase stream: (interaction plans, user-level truth)."""
    n, n_top, n_cat = spec.n_per_user, spec.n_topics, spec.n_categories
    plans: list[dict] = []

    if spec.profile == "planted-shortterm":
        pos = 0
        session = 0
        while pos < n:
            topic = int(rng.integers(n_top))
            category = int(rng.integers(n_cat))
            for _ in range(min(spec.session_len, n - pos)):
                plans.append({"position": pos, "topic": topic, "category": category, "session": session})
                pos += 1
            session += 1
        return plans, {"sessions": session}

    if spec.profile == "planted-longterm":
        before = int(rng.integers(n_top))
        after = int((before + 1 + rng.integers(n_top - 1)) % n_top)
        switch_at = int(rng.integers(n // 2, n - 8))
        for pos in range(n):
            favorite = before if pos < switch_at else after
            if rng.random() < spec.adherence:
                topic = favorite
            else:
                topic = int((favorite + 1 + rng.integers(n_top - 1)) % n_top)
            plans.append(
                {"position": pos, "topic": topic, "category": int(rng.integers(n_cat)), "session": pos}
            )
        return plans, {"favorite_before": before, "favorite_after": after, "switch_at": switch_at}

    # mixed: sessions of five, session topics drawn from a per-user bias
    favorites = [int(x) for x in rng.choice(n_top, size=2, replace=False)]
    others = [t for t in range(n_top) if t not in favorites]
    pos = 0
    session = 0
    while pos < n:
        u = rng.random()
        if u < 0.35:
            topic = favorites[0]
        elif u < 0.70:
            topic = favorites[1]
        else:
            topic = int(rng.choice(others))
        category = int(rng.integers(n_cat))
        for _ in range(min(5, n - pos)):
            plans.append({"position": pos, "topic": topic, "category": category, "session": session})
            pos += 1
        session += 1
    return plans, {"favorites": favorites, "sessions": session}


def _review_tokens(plan, product_word, topic_words, category_words, filler, rng) -> list[str]:
    tokens = (
        category_words[plan["category"]] * 2
        + [str(w) for w in rng.choice(topic_words[plan["topic"]], size=6)]
        + [product_word] * 2
        + [str(w) for w in rng.choice(filler, size=2)]
    )
    order = rng.permutation(len(tokens))
    return [tokens[i] for i in order]


def generate(spec: SynthSpec) -> SynthCorpus:
    rng = np.random.default_rng([spec.seed, 0x5717])
    topic_words, category_words, filler, product_words = _allocate_words(spec)

    products = sorted(product_words)
    cell: dict[tuple[int, int], list[str]] = {}
    product_truth = {}
    for i, pid in enumerate(products):
        c = i % spec.n_categories
        t = (i // spec.n_categories) % spec.n_topics
        cell.setdefault((c, t), []).append(pid)
        product_truth[pid] = {"category": c, "topic": t}

    metas = {
        pid: ProductMeta(
            pid,
            (("Catalog", " ".join(w.capitalize() for w in category_words[product_truth[pid]["category"]])),),
        )
        for pid in products
    }

    planted = {
        "planted-shortterm": ["shortterm"],
        "planted-longterm": ["longterm"],
        "mixed": ["shortterm", "longterm"],
    }[spec.profile]

    reviews: list[RawReview] = []
    users_truth = {}
    base_ts = 1_600_000_000
    for ui in range(spec.n_users):
        uid = f"U{ui:03d}"
        plans, user_truth = _plan_user(spec, rng)
        recorded = []
        for plan in plans:
            pool = cell[(plan["category"], plan["topic"])]
            pid = pool[int(rng.integers(len(pool)))]
            text = " ".join(
                _review_tokens(plan, product_words[pid], topic_words, category_words, filler, rng)
            )
            reviews.append(RawReview(uid, pid, text, base_ts + plan["position"] * 86400))
            recorded.append({**plan, "product": pid})
        user_truth["interactions"] = recorded
        users_truth[uid] = user_truth

    truth = {
        "profile": spec.profile,
        "planted": planted,
        "seed": spec.seed,
        "n_users": spec.n_users,
        "n_products": spec.n_products,
        "n_per_user": spec.n_per_user,
        "topics": {str(t): words for t, words in topic_words.items()},
        "categories": {
            str(c): {"words": words, "query": "catalog " + " ".join(words)}
            for c, words in category_words.items()
        },
        "products": product_truth,
        "users": users_truth,
    }
    return SynthCorpus(reviews=reviews, metas=metas, truth=truth)


GROUND_TRUTH_FILE = "ground_truth.json"


def write_synth(out_dir: str | Path, spec: SynthSpec) -> SynthCorpus:
    """Generate and serialize: reviews.jsonl + meta.jsonl + ground_truth.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    synth = generate(spec)

    with open(out / "reviews.jsonl", "w", encoding="utf-8") as fh:
        for r in synth.reviews:
            fh.write(
                json.dumps(
                    {
                        "reviewerID": r.user_id,
                        "asin": r.product_id,
                        "reviewText": r.text,
                        "unixReviewTime": r.timestamp,
                    },
                    sort_keys=True,
                )
                + "\n"
            )

    with open(out / "meta.jsonl", "w", encoding="utf-8") as fh:
        for pid in sorted(synth.metas):
            meta = synth.metas[pid]
            fh.write(
                json.dumps(
                    {"asin": pid, "categories": [list(path) for path in meta.category_paths]},
                    sort_keys=True,
                )
                + "\n"
            )

    with open(out / GROUND_TRUTH_FILE, "w", encoding="utf-8") as fh:
        json.dump(synth.truth, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return synth
