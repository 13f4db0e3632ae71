"""Ranking metrics, significance testing, and attention export.

Each evaluation instance is one held-out purchase: the full catalog is
ranked for the (user, query) pair and the metrics depend only on the rank
of the purchased product, truncated at a cutoff (default 20). With a single
relevant item the ideal DCG is 1, so NDCG collapses to a rank discount.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import model as M

DEFAULT_CUTOFF = 20


def _check_rank(rank: int) -> None:
    if rank < 1:
        raise ValueError(f"rank is 1-based; got {rank}")


def hit_ratio(rank: int, cutoff: int = DEFAULT_CUTOFF) -> float:
    _check_rank(rank)
    return 1.0 if rank <= cutoff else 0.0


def reciprocal_rank(rank: int, cutoff: int = DEFAULT_CUTOFF) -> float:
    _check_rank(rank)
    return 1.0 / rank if rank <= cutoff else 0.0


def ndcg_single(rank: int, cutoff: int = DEFAULT_CUTOFF) -> float:
    _check_rank(rank)
    return 1.0 / math.log2(rank + 1) if rank <= cutoff else 0.0


@dataclass
class Instance:
    """Metrics for one held-out purchase."""

    user_id: str
    query_id: str
    product_id: str
    rank: int
    hr: float
    mrr: float
    ndcg: float


@dataclass
class EvalResult:
    instances: list[Instance] = field(default_factory=list)
    cutoff: int = DEFAULT_CUTOFF

    @property
    def count(self) -> int:
        return len(self.instances)

    def mean(self, metric: str) -> float:
        if not self.instances:
            raise ValueError("no evaluation instances; cannot aggregate")
        return float(np.mean([getattr(i, metric) for i in self.instances]))

    def summary(self) -> dict:
        return {
            "hr": self.mean("hr"),
            "mrr": self.mean("mrr"),
            "ndcg": self.mean("ndcg"),
            "count": self.count,
            "cutoff": self.cutoff,
        }

    def vector(self, metric: str) -> list[float]:
        return [getattr(i, metric) for i in self.instances]


def score_instance(user_id: str, query_id: str, product_id: str, rank: int, cutoff: int) -> Instance:
    return Instance(
        user_id=user_id,
        query_id=query_id,
        product_id=product_id,
        rank=rank,
        hr=hit_ratio(rank, cutoff),
        mrr=reciprocal_rank(rank, cutoff),
        ndcg=ndcg_single(rank, cutoff),
    )


def evaluate_model(params: M.ModelParams, vc: M.VecCorpus, phase: str, cutoff: int | None = None) -> EvalResult:
    """Rank the full catalog for every user's held-out purchase in `phase`.

    The user state is replayed from scratch with the given parameters, so
    the result is a pure function of (params, corpus, phase).
    """
    cutoff = params.config.cutoff if cutoff is None else cutoff
    result = EvalResult(cutoff=cutoff)
    for user_id in sorted(vc.corpus.users):
        history = vc.history(user_id, phase)
        target = vc.target(user_id, phase)
        ctx = M.replay_context(params, vc.pairs(history))
        ranked = M.rank_catalog(params, ctx, vc.query_vec(target.query_id), vc.product_ids, vc.product_matrix)
        rank = M.rank_of(ranked, target.product_id)
        result.instances.append(score_instance(user_id, target.query_id, target.product_id, rank, cutoff))
    return result


def evaluate_scored(ranks: dict[str, tuple[str, str, int]], cutoff: int = DEFAULT_CUTOFF) -> EvalResult:
    """Build an EvalResult from precomputed ranks: user -> (query, product, rank)."""
    result = EvalResult(cutoff=cutoff)
    for user_id in sorted(ranks):
        query_id, product_id, rank = ranks[user_id]
        result.instances.append(score_instance(user_id, query_id, product_id, rank, cutoff))
    return result


def paired_ttest(a: list[float], b: list[float]) -> dict:
    """Two-sided paired t-test over per-instance metric vectors.

    Zero-variance differences make the statistic undefined; by convention
    the p-value is then 1 for equal means and 0 otherwise, and the result
    is flagged degenerate.
    """
    if len(a) != len(b):
        raise ValueError(f"paired vectors differ in length: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise ValueError("paired t-test needs at least 2 instances")
    diffs = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    n = diffs.shape[0]
    mean = float(diffs.mean())
    sd = float(diffs.std(ddof=1))
    if sd == 0.0:
        return {
            "t": 0.0 if mean == 0.0 else math.copysign(math.inf, mean),
            "p": 1.0 if mean == 0.0 else 0.0,
            "dof": n - 1,
            "mean_diff": mean,
            "degenerate": True,
        }
    t_stat = mean / (sd / math.sqrt(n))
    p = 2.0 * float(stats.t.sf(abs(t_stat), n - 1))
    return {"t": float(t_stat), "p": p, "dof": n - 1, "mean_diff": mean, "degenerate": False}


def dump_attention(params: M.ModelParams, vc: M.VecCorpus, phase: str) -> list[dict]:
    """One record per evaluation instance with both attention vectors.

    Window slots that predate the user's history are null. Records are
    re-derivable bit-for-bit by replaying the same forward pass.
    """
    records = []
    m = params.config.m
    for user_id in sorted(vc.corpus.users):
        history = vc.history(user_id, phase)
        target = vc.target(user_id, phase)
        ctx = M.replay_context(params, vc.pairs(history))
        side = M.query_side(params, ctx, vc.query_vec(target.query_id))
        tail = history[-m:] if len(history) >= m else history
        pad = m - len(tail)
        window_q = [None] * pad + [it.query_id for it in tail]
        window_p = [None] * pad + [it.product_id for it in tail]
        records.append(
            {
                "user": user_id,
                "query": target.query_id,
                "target_product": target.product_id,
                "previous_queries": window_q,
                "previous_products": window_p,
                "alpha_short": side["alpha_l"].data.tolist() if side["alpha_l"] is not None else None,
                "alpha_long": side["alpha_g"].data.tolist() if side["alpha_g"] is not None else None,
            }
        )
    return records


# ---------------------------------------------------------------------------
# Artifact writers
# ---------------------------------------------------------------------------


def write_metrics(path, model_name: str, dataset: str, result: EvalResult) -> None:
    payload = {
        "model": model_name,
        "dataset": dataset,
        **result.summary(),
        "instances": [
            {
                "user": i.user_id,
                "query": i.query_id,
                "product": i.product_id,
                "rank": i.rank,
                "hr": i.hr,
                "mrr": i.mrr,
                "ndcg": i.ndcg,
            }
            for i in result.instances
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_attention(path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_significance(path, pairs: dict[str, dict]) -> None:
    Path(path).write_text(json.dumps(pairs, indent=2, sort_keys=True) + "\n", encoding="utf-8")
