"""Pairwise training: chronological per-user sweeps with sampled negatives.

Each training target (a purchase beyond the user's first m) yields one
optimizer step per sampled negative: fresh forward, BPR loss, backward,
momentum-SGD update under a global-norm clip. The long-term state g is
refreshed from the GRU after every m consumed purchases; a user's first m
interactions only ever feed that state. After each epoch the model is
scored on the validation split and the best-NDCG parameters are kept.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import evaluation as E
from . import model as M
from . import numerics as nx

logger = logging.getLogger(__name__)

LR_GRID = (1e-5, 5e-4, 1e-4, 1e-3, 1e-2)


def bpr_loss(s_pos: nx.Tensor, s_neg: nx.Tensor, l2: float = 0.0, trainables=()) -> nx.Tensor:
    """-log(sigmoid(s_pos - s_neg)) plus l2 * sum of squared parameters."""
    data = nx.neg(nx.logsigmoid(nx.sub(s_pos, s_neg)))
    if l2 == 0.0 or not trainables:
        return data
    return nx.add(data, nx.scale(nx.sqsum(trainables), l2))


def sample_negatives(positive: str, catalog: list[str], n_s: int, rng: np.random.Generator,
                     index: dict[str, int] | None = None) -> list[str]:
    """n_s uniform draws (with replacement) from the catalog minus the positive."""
    if len(catalog) < 2:
        raise ValueError("negative sampling needs a catalog of at least 2 products")
    if index is not None:
        pos = index[positive]
    else:
        try:
            pos = catalog.index(positive)
        except ValueError:
            raise ValueError(f"positive product {positive!r} is not in the catalog") from None
    draws = rng.integers(0, len(catalog) - 1, size=n_s)
    draws = np.where(draws >= pos, draws + 1, draws)
    return [catalog[int(i)] for i in draws]


class MomentumSGD:
    """SGD with momentum and global-norm gradient clipping.

    v <- momentum * v + g_clipped;  theta <- theta - lr * v.
    A NaN in any gradient aborts the step with the parameter's name.
    """

    def __init__(self, params: list[nx.Tensor], lr: float, momentum: float = 0.9, clip_norm: float = 5.0):
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.clip_norm = float(clip_norm)
        self.velocity = [np.zeros_like(p.data) for p in self.params]
        self.step_norms: list[float] = []  # post-clip global norms, one per step

    def step(self) -> None:
        grads = []
        for p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if np.isnan(g).any():
                raise RuntimeError(f"NaN gradient in parameter {p.name or '<unnamed>'}; aborting the update")
            grads.append(g)
        total_sq = 0.0
        for g in grads:
            total_sq += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
        total = float(np.sqrt(total_sq))
        if total > self.clip_norm:
            factor = self.clip_norm / total
            grads = [g * factor for g in grads]
            self.step_norms.append(total * factor)
        else:
            self.step_norms.append(total)
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.momentum
            v += g
            p.data -= (self.lr * v).astype(p.data.dtype, copy=False)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


@dataclass
class TrainResult:
    params: M.ModelParams
    user_g: dict[str, np.ndarray]
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    step_norms: list[float] = field(default_factory=list)

    @property
    def best_val_ndcg(self) -> float:
        if not self.log:
            return float("nan")
        return self.log[self.best_epoch - 1]["val_ndcg"]


def _snapshot(params: M.ModelParams) -> dict[str, np.ndarray]:
    return {name: t.data.copy() for name, t in params.items()}


def _restore(params: M.ModelParams, snap: dict[str, np.ndarray]) -> None:
    for name, t in params.items():
        t.data[...] = snap[name]


def train(
    vc: M.VecCorpus,
    config: M.Config,
    variant: str = "ALSTP",
    log_file=None,
    on_pair=None,
) -> TrainResult:
    """Run the full training loop and return the best-validation model.

    `on_pair(user_id, interaction)` fires as each training pair is consumed,
    in order — an observability hook for progress reporting and tests.
    """
    config.validate()
    wiring = M.ablate(variant)
    params = M.init_params(config, wiring, seed=config.seed)
    opt = MomentumSGD(params.trainables(), config.lr, config.momentum, config.clip_norm)
    rng = np.random.default_rng([config.seed, 0x7EA1])
    catalog = vc.product_ids
    index = {pid: i for i, pid in enumerate(catalog)}
    m = config.m

    users = sorted(vc.corpus.users)
    short = [u for u in users if len(vc.corpus.users[u].train) < m + 1]
    if short:
        logger.warning(
            "%d user(s) have fewer than m+1=%d training purchases and only seed the long-term state: %s",
            len(short), m + 1, ", ".join(short[:5]) + ("..." if len(short) > 5 else ""),
        )

    log: list[dict] = []
    best_epoch = 0
    best_ndcg = -1.0
    best_params = _snapshot(params)
    best_user_g = {u: M.replay_context(params, vc.pairs(vc.corpus.users[u].train)).g for u in users}

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        losses: list[float] = []
        user_g: dict[str, np.ndarray] = {}
        for user in users:
            pairs = vc.corpus.users[user].train
            g = M.initial_g(config.k)
            window_q: list[np.ndarray] = []
            window_p: list[np.ndarray] = []
            pending: list[np.ndarray] = []
            for t, inter in enumerate(pairs):
                if on_pair is not None:
                    on_pair(user, inter)
                q_vec = vc.query_vec(inter.query_id)
                p_vec = vc.product_vec(inter.product_id)
                if t >= m:
                    ctx = M.UserContext(
                        g=g,
                        window_queries=np.stack(window_q),
                        window_products=np.stack(window_p),
                    )
                    for neg_id in sample_negatives(inter.product_id, catalog, config.negatives, rng, index):
                        neg_vec = vc.product_vec(neg_id)
                        with nx.Tape():
                            side = M.query_side(params, ctx, q_vec)
                            s_pos = M.score_product(params, side, p_vec)
                            s_neg = M.score_product(params, side, neg_vec)
                            loss = bpr_loss(s_pos, s_neg, config.l2, params.trainables())
                            nx.backward(loss)
                        opt.step()
                        opt.zero_grad()
                        losses.append(float(loss.data))
                window_q.append(q_vec)
                window_p.append(p_vec)
                if len(window_q) > m:
                    window_q.pop(0)
                    window_p.pop(0)
                if wiring.needs_gru:
                    pending.append(p_vec)
                    if len(pending) == m:
                        g = M.refresh_long_term(params, g, np.stack(pending), config.beta)
                        pending = []
            user_g[user] = g
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        val = E.evaluate_model(params, vc, "validation")
        entry = {
            "epoch": epoch,
            "mean_loss": mean_loss,
            "val_hr": val.mean("hr"),
            "val_mrr": val.mean("mrr"),
            "val_ndcg": val.mean("ndcg"),
            "wall_time": time.perf_counter() - t0,
        }
        log.append(entry)
        logger.info(
            "epoch %d: mean loss %.5f, val NDCG %.4f (HR %.4f, MRR %.4f)",
            epoch, mean_loss, entry["val_ndcg"], entry["val_hr"], entry["val_mrr"],
        )
        if entry["val_ndcg"] > best_ndcg:
            best_ndcg = entry["val_ndcg"]
            best_epoch = epoch
            best_params = _snapshot(params)
            best_user_g = user_g
    _restore(params, best_params)

    if log_file is not None:
        with open(log_file, "w", encoding="utf-8") as fh:
            for entry in log:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    return TrainResult(
        params=params,
        user_g=best_user_g,
        log=log,
        best_epoch=best_epoch,
        step_norms=opt.step_norms,
    )


def lr_grid_search(
    vc: M.VecCorpus,
    config: M.Config,
    variant: str = "ALSTP",
    grid: tuple[float, ...] = LR_GRID,
) -> tuple[float, dict[float, TrainResult]]:
    """Train once per learning rate; pick the best validation NDCG.

    Ties keep the earliest grid entry, so the outcome is deterministic.
    """
    results: dict[float, TrainResult] = {}
    best_lr = None
    best_ndcg = -1.0
    for lr in grid:
        cfg = replace(config, lr=lr)
        res = train(vc, cfg, variant)
        results[lr] = res
        score = res.best_val_ndcg
        logger.info("lr %g: best val NDCG %.4f (epoch %d)", lr, score, res.best_epoch)
        if not np.isnan(score) and score > best_ndcg:
            best_ndcg = score
            best_lr = lr
    if best_lr is None:
        raise RuntimeError("no learning rate in the grid produced a validation score")
    return best_lr, results
