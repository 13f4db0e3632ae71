"""Independent reference implementations used to verify the package.

Everything here is written with plain python floats, lists and ``math`` —
scalar loops only, no numpy — so these oracles cannot share a bug with the
vectorized production code they check.
"""

import math


def sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def elu_scalar(x, alpha=1.0):
    return x if x > 0 else alpha * (math.exp(x) - 1.0)


def elu_vec(v, alpha=1.0):
    return [elu_scalar(x, alpha) for x in v]


def matvec(W, x):
    out = []
    for row in W:
        s = 0.0
        for w, xi in zip(row, x):
            s += w * xi
        out.append(s)
    return out


def add_vec(a, b):
    return [x + y for x, y in zip(a, b)]


def softmax(v):
    m = max(v)
    exps = [math.exp(x - m) for x in v]
    z = sum(exps)
    return [e / z for e in exps]


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def norm(a):
    return math.sqrt(sum(x * x for x in a))


def cosine(a, b):
    return dot(a, b) / (norm(a) * norm(b))


def project(W, b, x):
    """elu(W x + b), the shared query/product projection."""
    return elu_vec(add_vec(matvec(W, x), b))


def gru_step(x, h, W_z, U_z, W_r, U_r, W_h, U_h):
    """Bias-free gated recurrent step, coordinate by coordinate."""
    az = add_vec(matvec(W_z, x), matvec(U_z, h))
    ar = add_vec(matvec(W_r, x), matvec(U_r, h))
    z = [sigmoid(v) for v in az]
    r = [sigmoid(v) for v in ar]
    rh = [ri * hi for ri, hi in zip(r, h)]
    ac = add_vec(matvec(W_h, x), matvec(U_h, rh))
    c = [math.tanh(v) for v in ac]
    return [(1.0 - zi) * hi + zi * ci for zi, hi, ci in zip(z, h, c)]


def short_attention(q_now, q_prev, hidden, W0, W1, b, v):
    """Two-layer additive attention over past query vectors, applied to the
    recurrent hidden states.  Returns (weights, combined_vector)."""
    scores = []
    for q_j in q_prev:
        pre = add_vec(add_vec(matvec(W0, q_now), matvec(W1, q_j)), b)
        scores.append(dot(v, elu_vec(pre)))
    alpha = softmax(scores)
    k = len(hidden[0])
    combined = [0.0] * k
    for a, h in zip(alpha, hidden):
        for i in range(k):
            combined[i] += a * h[i]
    return alpha, combined


def long_attention(g, q_now, w_g, b_g):
    """Per-coordinate gating of the long-term state by the current query.
    Returns (weights, gated_vector)."""
    s = dot(w_g, q_now)
    scores = [gi * s + b_g for gi in g]
    alpha = softmax(scores)
    return alpha, [gi * ai for gi, ai in zip(g, alpha)]


def tower(x, layers):
    """Feed-forward tower: elu(W x + b) at every layer."""
    cur = x
    for W, b in layers:
        cur = elu_vec(add_vec(matvec(W, cur), b))
    return cur


def rank_of_target(scores, ids, target_idx):
    """1-based rank under 'descending score, ties broken by ascending id'."""
    s_t = scores[target_idx]
    id_t = ids[target_idx]
    rank = 1
    for j, (s, pid) in enumerate(zip(scores, ids)):
        if j == target_idx:
            continue
        if s > s_t or (s == s_t and pid < id_t):
            rank += 1
    return rank


def hit_ratio(rank, cutoff=20):
    return 1.0 if rank <= cutoff else 0.0


def reciprocal_rank(rank, cutoff=20):
    return 1.0 / rank if rank <= cutoff else 0.0


def ndcg_single(rank, cutoff=20):
    return 1.0 / math.log2(rank + 1.0) if rank <= cutoff else 0.0


def ql_score(query_tokens, tf, doc_len, collection_prob, mu):
    """Dirichlet-smoothed query-likelihood log score; skips words without a
    collection probability (out-of-collection)."""
    s = 0.0
    for w in query_tokens:
        pc = collection_prob.get(w)
        if pc is None:
            continue
        s += math.log((tf.get(w, 0) + mu * pc) / (doc_len + mu))
    return s


def student_t_two_sided_p(t_stat, dof):
    """Two-sided p-value by numerical integration of the t density (mpmath)."""
    import mpmath

    t_abs = abs(t_stat)
    nu = mpmath.mpf(dof)
    coef = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))

    def pdf(u):
        return coef * (1 + u * u / nu) ** (-(nu + 1) / 2)

    tail = mpmath.quad(pdf, [t_abs, mpmath.inf])
    return float(2 * tail)
