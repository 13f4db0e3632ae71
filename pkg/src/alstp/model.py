"""Personalized ranking model over pretrained query/product vectors.

The scoring pipeline: a shared projection maps query and product vectors
into a common space; a single-layer bias-free GRU encodes the user's m most
recent purchases (its initial hidden state is the long-term state g); one
attention network weights the GRU hidden states by how much each previous
query resembles the current one; a second, factor-level attention gates the
coordinates of g against the current query; the current query and the two
preference summaries are concatenated and pushed through a shrinking ELU
tower; candidates are scored by cosine similarity against the tower output.

Everything here is wiring-aware: ablated variants drop branches of the
fusion (and the parameters that feed them) while keeping a single code path,
so that e.g. the no-attention variants are literally the attentive model
with its attention forced uniform/disabled.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .container import read_container, write_container

VARIANTS = ("WoPM", "STPM", "ASTP", "LTPM", "ALTP", "LSTP", "ALSTP")


@dataclass(frozen=True)
class Wiring:
    """Which branches of the model a variant keeps."""

    variant: str
    use_short: bool
    use_long: bool
    short_attention: bool
    long_attention: bool

    @property
    def needs_gru(self) -> bool:
        # The long-term state is refreshed from GRU hidden states, so any
        # variant with a long-term branch keeps the recurrent parameters even
        # if its scoring path never reads them.
        return self.use_short or self.use_long

    @property
    def fusion_parts(self) -> int:
        return 1 + int(self.use_short) + int(self.use_long)


_WIRINGS = {
    "WoPM": Wiring("WoPM", False, False, False, False),
    "STPM": Wiring("STPM", True, False, False, False),
    "ASTP": Wiring("ASTP", True, False, True, False),
    "LTPM": Wiring("LTPM", False, True, False, False),
    "ALTP": Wiring("ALTP", False, True, False, True),
    "LSTP": Wiring("LSTP", True, True, False, False),
    "ALSTP": Wiring("ALSTP", True, True, True, True),
}


def ablate(variant: str) -> Wiring:
    try:
        return _WIRINGS[variant]
    except KeyError:
        raise ValueError(f"unknown model variant {variant!r}; expected one of {VARIANTS}") from None


@dataclass
class Config:
    """Model and training hyperparameters.

    `f` is the hidden width of the short-term attention network and defaults
    to `k` when left unset.
    """

    k: int = 256
    m: int = 4
    f: int | None = None
    beta: float = 0.5
    tower_layers: int = 2
    negatives: int = 5
    lr: float = 1e-4
    momentum: float = 0.9
    clip_norm: float = 5.0
    l2: float = 1e-5
    epochs: int = 20
    cutoff: int = 20
    seed: int = 0
    share_projection: bool = True

    @property
    def attention_width(self) -> int:
        return self.k if self.f is None else self.f

    def validate(self) -> None:
        for name in ("k", "m", "tower_layers", "negatives"):
            if getattr(self, name) < 1:
                raise ValueError(f"config: {name} must be >= 1, got {getattr(self, name)}")
        if self.f is not None and self.f < 1:
            raise ValueError(f"config: f must be >= 1, got {self.f}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"config: beta must lie in [0, 1], got {self.beta}")
        if self.clip_norm <= 0:
            raise ValueError(f"config: clip_norm must be > 0, got {self.clip_norm}")
        if self.lr < 0 or self.l2 < 0:
            raise ValueError("config: lr and l2 must be nonnegative")
        if self.epochs < 0:
            raise ValueError(f"config: epochs must be >= 0, got {self.epochs}")
        if self.cutoff < 1:
            raise ValueError(f"config: cutoff must be >= 1, got {self.cutoff}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "Config":
        known = {f.name for f in dataclasses.fields(cls)}
        cfg = cls(**{k: v for k, v in raw.items() if k in known})
        cfg.validate()
        return cfg


def tower_widths(input_width: int, k: int, layers: int) -> list[int]:
    """Layer output widths, linearly interpolated from the fused input down to k."""
    widths = []
    for i in range(1, layers + 1):
        w = round(input_width + (k - input_width) * i / layers)
        widths.append(max(int(w), 1))
    widths[-1] = k
    for prev, cur in zip([input_width] + widths, widths):
        if cur > prev:
            raise ValueError(f"tower widths must not increase: {[input_width] + widths}")
    return widths


def _xavier(rng: np.random.Generator, fan_out: int, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class ModelParams:
    """Ordered bag of named trainable tensors for one wiring."""

    def __init__(self, config: Config, wiring: Wiring, tensors: dict[str, nx.Tensor]):
        self.config = config
        self.wiring = wiring
        self._tensors = tensors

    def __getitem__(self, name: str) -> nx.Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def trainables(self) -> list[nx.Tensor]:
        return list(self._tensors.values())

    def tower(self) -> list[tuple[nx.Tensor, nx.Tensor]]:
        layers = []
        i = 0
        while f"tower_W_{i}" in self._tensors:
            layers.append((self._tensors[f"tower_W_{i}"], self._tensors[f"tower_b_{i}"]))
            i += 1
        return layers


def init_params(config: Config, wiring: Wiring | str = "ALSTP", seed: int | None = None) -> ModelParams:
    """Allocate and initialize every tensor the wiring needs.

    Weight matrices (and the attention weight vectors) are xavier-uniform;
    biases start at zero. The draw order is fixed so a (seed, wiring) pair
    always produces the same bytes.
    """
    config.validate()
    if isinstance(wiring, str):
        wiring = ablate(wiring)
    if seed is None:
        seed = config.seed
    rng = np.random.default_rng([seed, 0xA157])
    k, f = config.k, config.attention_width
    tensors: dict[str, nx.Tensor] = {}

    def add(name: str, value: np.ndarray) -> None:
        tensors[name] = nx.Tensor(value, trainable=True, name=name)

    if config.share_projection:
        add("W_c", _xavier(rng, k, k, (k, k)))
        add("b_c", np.zeros(k, dtype=np.float32))
    else:
        add("W_c_q", _xavier(rng, k, k, (k, k)))
        add("b_c_q", np.zeros(k, dtype=np.float32))
        add("W_c_p", _xavier(rng, k, k, (k, k)))
        add("b_c_p", np.zeros(k, dtype=np.float32))
    if wiring.needs_gru:
        for name in ("W_z", "U_z", "W_r", "U_r", "W_h", "U_h"):
            add(name, _xavier(rng, k, k, (k, k)))
    if wiring.short_attention:
        add("W_l0", _xavier(rng, f, k, (f, k)))
        add("W_l1", _xavier(rng, f, k, (f, k)))
        add("b_l", np.zeros(f, dtype=np.float32))
        add("v", _xavier(rng, 1, f, (f,)))
    if wiring.long_attention:
        add("w_g", _xavier(rng, 1, k, (k,)))
        add("b_g", np.zeros(1, dtype=np.float32))
    in_width = wiring.fusion_parts * k
    for i, out_width in enumerate(tower_widths(in_width, k, config.tower_layers)):
        add(f"tower_W_{i}", _xavier(rng, out_width, in_width, (out_width, in_width)))
        add(f"tower_b_{i}", np.zeros(out_width, dtype=np.float32))
        in_width = out_width
    return ModelParams(config, wiring, tensors)


# ---------------------------------------------------------------------------
# Forward operations
# ---------------------------------------------------------------------------


def _proj_names(params: ModelParams, kind: str) -> tuple[str, str]:
    if params.config.share_projection:
        return "W_c", "b_c"
    if kind not in ("query", "product"):
        raise ValueError(f"projection kind must be 'query' or 'product', got {kind!r}")
    suffix = "_q" if kind == "query" else "_p"
    return f"W_c{suffix}", f"b_c{suffix}"


def project(params: ModelParams, x, kind: str = "query") -> nx.Tensor:
    """elu(W_c @ x + b_c): one vector into the shared latent space."""
    w, b = _proj_names(params, kind)
    return nx.elu(nx.linear(params[w], x, params[b]))


def project_rows(params: ModelParams, X, kind: str = "query") -> nx.Tensor:
    """Row-batched projection: each row of X mapped like `project`."""
    w, b = _proj_names(params, kind)
    return nx.elu(nx.linear_rows(X, params[w], params[b]))


def encode_short_term(params: ModelParams, phat_rows, h0) -> list[nx.Tensor]:
    """Run the GRU over the m projected window products; returns all hidden states."""
    rows = phat_rows.data.shape[0] if isinstance(phat_rows, nx.Tensor) else np.asarray(phat_rows).shape[0]
    m = params.config.m
    if rows != m:
        raise ValueError(f"short-term window holds {rows} products; the model needs exactly m={m}")
    h = h0 if isinstance(h0, nx.Tensor) else nx.Tensor(h0)
    hidden: list[nx.Tensor] = []
    for i in range(rows):
        x = nx.take_row(phat_rows, i)
        h = nx.gru_step(
            x, h,
            params["W_z"], params["U_z"],
            params["W_r"], params["U_r"],
            params["W_h"], params["U_h"],
        )
        hidden.append(h)
    return hidden


def short_term_attention(
    params: ModelParams,
    q_hat_now: nx.Tensor,
    qhat_rows,
    hidden: list[nx.Tensor],
    uniform: bool = False,
) -> tuple[nx.Tensor, nx.Tensor]:
    """Weight the GRU hidden states by previous-query relevance.

    Scores come from a two-layer network over (current query, previous query)
    pairs; `uniform=True` replaces them with a constant so every hidden state
    weighs 1/m — this is the exact code path the no-attention variants use.
    """
    m = len(hidden)
    if m == 0:
        raise ValueError("short-term attention needs at least one hidden state")
    if uniform:
        scores = nx.Tensor(np.zeros(m, dtype=np.float32))
    else:
        base = nx.linear(params["W_l0"], q_hat_now, params["b_l"])
        act = nx.elu(nx.linear_rows(qhat_rows, params["W_l1"], base))
        scores = nx.matvec(act, params["v"])
    alpha = nx.softmax(scores)
    c_l = nx.weighted_sum(hidden, alpha)
    return alpha, c_l


def long_term_attention(
    params: ModelParams,
    g: nx.Tensor,
    q_hat_now: nx.Tensor,
    attentive: bool = True,
) -> tuple[nx.Tensor, nx.Tensor]:
    """Gate the coordinates of g by their relevance to the current query.

    With `attentive=False` the long-term state passes through untouched
    (the returned alpha is the uniform vector, for reporting only).
    """
    if not attentive:
        kdim = g.data.shape[0]
        alpha = nx.Tensor(np.full(kdim, 1.0 / kdim, dtype=np.float32))
        return alpha, g
    s = nx.dot(params["w_g"], q_hat_now)
    a = nx.add(nx.mul(g, s), params["b_g"])
    alpha = nx.softmax(a)
    c_g = nx.mul(g, alpha)
    return alpha, c_g


def update_long_term(g: np.ndarray, h_prime: np.ndarray, beta: float) -> np.ndarray:
    """g <- (1 - beta) * g + beta * h'. Pure state update; no gradient flows."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    g = np.asarray(g, dtype=np.float32)
    h_prime = np.asarray(h_prime, dtype=np.float32)
    return ((1.0 - beta) * g + beta * h_prime).astype(np.float32)


def fuse(params: ModelParams, q_hat_now: nx.Tensor, c_l, c_g) -> nx.Tensor:
    """Concatenate the active branches and run the ELU tower."""
    parts = [q_hat_now]
    if params.wiring.use_short:
        if c_l is None:
            raise ValueError(f"variant {params.wiring.variant} needs a short-term summary")
        parts.append(c_l)
    if params.wiring.use_long:
        if c_g is None:
            raise ValueError(f"variant {params.wiring.variant} needs a long-term summary")
        parts.append(c_g)
    h = nx.concat(parts)
    for W, b in params.tower():
        h = nx.elu(nx.linear(W, h, b))
    return h


def fuse_and_score(params: ModelParams, q_hat_now: nx.Tensor, c_l, c_g, p_hat: nx.Tensor) -> nx.Tensor:
    """Full fusion followed by cosine against one projected product."""
    return nx.cosine(fuse(params, q_hat_now, c_l, c_g), p_hat)


# ---------------------------------------------------------------------------
# User state
# ---------------------------------------------------------------------------


@dataclass
class LongTermState:
    """Long-term preference vector plus purchases consumed since it last moved."""

    g: np.ndarray
    pending_count: int = 0

    def validate(self, m: int) -> None:
        if not 0 <= self.pending_count < m:
            raise ValueError(f"pending_count {self.pending_count} outside [0, {m})")
        if not np.all(np.isfinite(self.g)):
            raise ValueError("long-term state has non-finite entries")


@dataclass
class UserContext:
    """Raw inputs the model needs to score one query for one user."""

    g: np.ndarray
    window_queries: np.ndarray  # (m, k) raw query vectors, oldest first
    window_products: np.ndarray  # (m, k) raw product vectors, oldest first


def initial_g(k: int) -> np.ndarray:
    return np.zeros(k, dtype=np.float32)


def refresh_long_term(params: ModelParams, g: np.ndarray, block_products: np.ndarray, beta: float) -> np.ndarray:
    """Fold one completed window of m raw product vectors into g.

    The block is projected and run through the GRU with the current
    parameters (h0 = g); the final hidden state is mixed into g. Runs
    outside any tape: the state is input data, not a differentiable leaf.
    """
    phat = project_rows(params, np.asarray(block_products, dtype=np.float32), kind="product")
    h = nx.Tensor(np.asarray(g, dtype=np.float32))
    for i in range(phat.data.shape[0]):
        h = nx.gru_step(
            nx.take_row(phat, i), h,
            params["W_z"], params["U_z"],
            params["W_r"], params["U_r"],
            params["W_h"], params["U_h"],
        )
    return update_long_term(g, h.data, beta)


def replay_context(params: ModelParams, pairs: list[tuple[np.ndarray, np.ndarray]]) -> UserContext:
    """Rebuild the state held just after consuming `pairs` in order.

    g absorbs every completed m-block; the window is the last m raw pairs,
    zero-padded at the front when the history is shorter than m (a cold
    context scores on the query alone, against zero preference signals).
    """
    cfg = params.config
    m, k = cfg.m, cfg.k
    g = initial_g(k)
    if params.wiring.needs_gru:
        for start in range(0, len(pairs) - m + 1, m):
            block = np.stack([p for _, p in pairs[start : start + m]])
            g = refresh_long_term(params, g, block, cfg.beta)
    window_q = np.zeros((m, k), dtype=np.float32)
    window_p = np.zeros((m, k), dtype=np.float32)
    tail = pairs[-m:] if len(pairs) >= m else pairs
    for slot, (q_vec, p_vec) in zip(range(m - len(tail), m), tail):
        window_q[slot] = q_vec
        window_p[slot] = p_vec
    return UserContext(g=g, window_queries=window_q, window_products=window_p)


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


def query_side(
    params: ModelParams,
    ctx: UserContext,
    q_vec: np.ndarray,
    force_uniform_short: bool = False,
    force_plain_long: bool = False,
) -> dict:
    """Everything that does not depend on the candidate product.

    Returns the projected query, the fused tower output, and both attention
    vectors (None for branches the wiring drops). The force flags downgrade
    the attentive branches onto the exact code path the non-attentive
    variants use, which is what makes ablation comparisons structural.
    """
    w = params.wiring
    q_hat = project(params, np.asarray(q_vec), kind="query")
    g_t = nx.Tensor(np.asarray(ctx.g))
    alpha_l = c_l = alpha_g = c_g = None
    if w.use_short:
        phat = project_rows(params, np.asarray(ctx.window_products), kind="product")
        hidden = encode_short_term(params, phat, g_t)
        qhat_prev = project_rows(params, np.asarray(ctx.window_queries), kind="query")
        uniform = (not w.short_attention) or force_uniform_short
        alpha_l, c_l = short_term_attention(params, q_hat, qhat_prev, hidden, uniform=uniform)
    if w.use_long:
        attentive = w.long_attention and not force_plain_long
        alpha_g, c_g = long_term_attention(params, g_t, q_hat, attentive=attentive)
    fused = fuse(params, q_hat, c_l, c_g)
    return {"q_hat": q_hat, "fused": fused, "alpha_l": alpha_l, "alpha_g": alpha_g, "c_l": c_l, "c_g": c_g}


def score_product(params: ModelParams, side: dict, p_vec: np.ndarray) -> nx.Tensor:
    p_hat = project(params, np.asarray(p_vec), kind="product")
    return nx.cosine(side["fused"], p_hat)


def rank_catalog(
    params: ModelParams,
    ctx: UserContext,
    q_vec: np.ndarray,
    product_ids: list[str],
    product_matrix: np.ndarray,
) -> list[tuple[str, float]]:
    """Score the whole catalog and rank it.

    Descending by score; ties broken by ascending product id so the ordering
    is reproducible. Product projection reuses the batched op; the cosine is
    vectorized here and covered by an equivalence test against the scalar op.
    """
    if len(product_ids) != product_matrix.shape[0]:
        raise ValueError("product id list and vector matrix disagree on catalog size")
    side = query_side(params, ctx, q_vec)
    c = side["fused"].data
    c_norm = float(np.linalg.norm(c))
    if c_norm == 0.0:
        raise ValueError("fused query representation has zero norm; cannot rank by cosine")
    p_hat = project_rows(params, np.asarray(product_matrix, dtype=np.float32), kind="product").data
    norms = np.linalg.norm(p_hat, axis=1)
    if np.any(norms == 0.0):
        bad = product_ids[int(np.argmax(norms == 0.0))]
        raise ValueError(f"projected product {bad!r} has zero norm; degenerate embedding")
    scores = (p_hat @ c) / (norms * c_norm)
    order = sorted(range(len(product_ids)), key=lambda i: (-float(scores[i]), product_ids[i]))
    return [(product_ids[i], float(scores[i])) for i in order]


def rank_of(ranked: list[tuple[str, float]], product_id: str) -> int:
    """1-based position of a product in a ranked list."""
    for pos, (pid, _) in enumerate(ranked, start=1):
        if pid == product_id:
            return pos
    raise KeyError(f"product {product_id!r} not present in the ranked list")


# ---------------------------------------------------------------------------
# Corpus/vector binding
# ---------------------------------------------------------------------------


class VecCorpus:
    """A split corpus bound to its embedding table.

    Resolves interactions to raw vectors: products from the stored document
    vectors, queries from the stored rows when trained or a deterministic
    fresh inference otherwise. All lookups are cached.
    """

    def __init__(self, corpus, table):
        from .embed import lookup_or_infer_query  # local to avoid import cycles

        self.corpus = corpus
        self.table = table
        self._lookup = lookup_or_infer_query
        self.product_ids = sorted(corpus.products)
        vectors = []
        for pid in self.product_ids:
            vec = table.product_vector(pid)
            if vec is None:
                raise ValueError(f"product {pid!r} has no embedding vector; rebuild embeddings for this corpus")
            vectors.append(vec)
        self.product_matrix = np.stack(vectors).astype(np.float32)
        self._product_row = {pid: i for i, pid in enumerate(self.product_ids)}
        self._query_cache: dict[str, np.ndarray] = {}

    @property
    def k(self) -> int:
        return self.product_matrix.shape[1]

    def product_vec(self, product_id: str) -> np.ndarray:
        return self.product_matrix[self._product_row[product_id]]

    def query_vec(self, query_id: int) -> np.ndarray:
        if query_id not in self._query_cache:
            text = self.corpus.queries[query_id]
            vec = self._lookup(self.table, query_id, text).astype(np.float32)
            self._query_cache[query_id] = vec
        return self._query_cache[query_id]

    def pairs(self, interactions) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.query_vec(it.query_id), self.product_vec(it.product_id)) for it in interactions]

    def history(self, user_id: str, phase: str) -> list:
        """Chronological interactions preceding the held-out target of `phase`."""
        split = self.corpus.users[user_id]
        if phase == "validation":
            return list(split.train)
        if phase == "test":
            return list(split.train) + [split.validation]
        raise ValueError(f"phase must be 'validation' or 'test', got {phase!r}")

    def target(self, user_id: str, phase: str):
        split = self.corpus.users[user_id]
        if phase == "validation":
            return split.validation
        if phase == "test":
            return split.test
        raise ValueError(f"phase must be 'validation' or 'test', got {phase!r}")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_MODEL_CONTAINER = "model"


def save_model(directory, params: ModelParams, user_g: dict[str, np.ndarray]) -> None:
    """Write parameters, the per-user long-term table, and a config echo."""
    users = sorted(user_g)
    tensors = {f"param:{name}": t.data for name, t in params.items()}
    if users:
        tensors["user_g"] = np.stack([user_g[u] for u in users]).astype(np.float32)
    meta = {
        "kind": "model-checkpoint",
        "variant": params.wiring.variant,
        "config": params.config.to_dict(),
        "param_order": params.names(),
        "users": users,
    }
    write_container(directory, _MODEL_CONTAINER, tensors, meta)


def load_model(directory) -> tuple[ModelParams, dict[str, np.ndarray]]:
    tensors, meta = read_container(directory, _MODEL_CONTAINER)
    config = Config.from_dict(meta["config"])
    wiring = ablate(meta["variant"])
    named: dict[str, nx.Tensor] = {}
    for name in meta["param_order"]:
        named[name] = nx.Tensor(tensors[f"param:{name}"], trainable=True, name=name)
    params = ModelParams(config, wiring, named)
    users = meta.get("users", [])
    user_g: dict[str, np.ndarray] = {}
    if users:
        table = tensors["user_g"]
        user_g = {u: table[i].copy() for i, u in enumerate(users)}
    return params, user_g
