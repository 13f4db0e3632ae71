import json
import math

import numpy as np
import pytest

import oracles
from helpers import random_params

from alstp import evaluation as E
from alstp import model as M
from alstp.corpus import Interaction, SplitCorpus, UserSplit
from alstp import embed as em


class TestSingleInstanceMetrics:
    def test_rank_one_is_perfect(self):
        assert E.hit_ratio(1) == 1.0
        assert E.reciprocal_rank(1) == 1.0
        assert E.ndcg_single(1) == 1.0

    def test_rank_three_ndcg_is_exactly_half(self):
        assert E.ndcg_single(3) == 0.5

    def test_rank_past_cutoff_scores_zero(self):
        for fn in (E.hit_ratio, E.reciprocal_rank, E.ndcg_single):
            assert fn(21) == 0.0
            assert fn(21, cutoff=20) == 0.0

    def test_rank_at_cutoff_still_counts(self):
        assert E.hit_ratio(20) == 1.0
        assert E.reciprocal_rank(20) == 1.0 / 20
        assert E.ndcg_single(20) == pytest.approx(1.0 / math.log2(21))

    def test_rank_must_be_positive(self):
        for fn in (E.hit_ratio, E.reciprocal_rank, E.ndcg_single):
            with pytest.raises(ValueError, match="1-based"):
                fn(0)

    def test_miss_forces_all_zero(self):
        for rank in range(1, 60):
            hr = E.hit_ratio(rank)
            rr = E.reciprocal_rank(rank)
            nd = E.ndcg_single(rank)
            assert hr >= rr and hr >= nd
            if hr == 0.0:
                assert rr == 0.0 and nd == 0.0

    def test_matches_oracle_for_all_ranks(self):
        for rank in range(1, 50):
            assert E.hit_ratio(rank) == oracles.hit_ratio(rank)
            assert E.reciprocal_rank(rank) == oracles.reciprocal_rank(rank)
            assert E.ndcg_single(rank) == pytest.approx(oracles.ndcg_single(rank), rel=1e-12)


class TestAgainstLinearScanOracle:
    def test_random_instances_agree_exactly(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n = int(rng.integers(2, 40))
            ids = [f"P{i:03d}" for i in range(n)]
            scores = rng.normal(size=n)
            if rng.random() < 0.3:  # plant ties
                scores[: n // 2] = scores[0]
            target = int(rng.integers(0, n))
            order = sorted(range(n), key=lambda i: (-scores[i], ids[i]))
            ranked = [(ids[i], float(scores[i])) for i in order]
            rank = M.rank_of(ranked, ids[target])
            want = oracles.rank_of_target([float(s) for s in scores], ids, target)
            assert rank == want
            inst = E.score_instance("u", 0, ids[target], rank, cutoff=20)
            assert inst.hr == oracles.hit_ratio(want)
            assert inst.mrr == oracles.reciprocal_rank(want)
            assert inst.ndcg == pytest.approx(oracles.ndcg_single(want), rel=1e-12)


class TestAggregation:
    def test_means_over_instances(self):
        res = E.EvalResult(cutoff=20)
        res.instances.append(E.score_instance("a", 0, "p", 1, 20))
        res.instances.append(E.score_instance("b", 1, "q", 3, 20))
        res.instances.append(E.score_instance("c", 2, "r", 25, 20))
        s = res.summary()
        assert s["hr"] == pytest.approx(2 / 3)
        assert s["mrr"] == pytest.approx((1.0 + 1 / 3 + 0.0) / 3)
        assert s["ndcg"] == pytest.approx((1.0 + 0.5 + 0.0) / 3)
        assert s["count"] == 3

    def test_empty_result_cannot_aggregate(self):
        with pytest.raises(ValueError, match="no evaluation instances"):
            E.EvalResult().mean("hr")


class TestPairedTTest:
    def test_identical_vectors(self):
        out = E.paired_ttest([0.5, 0.2, 0.9], [0.5, 0.2, 0.9])
        assert out["t"] == 0.0 and out["p"] == 1.0 and out["degenerate"]

    def test_constant_shift_is_certain(self):
        a = [0.6, 0.7, 0.8, 0.9]
        b = [x - 0.1 for x in a]
        out = E.paired_ttest(a, b)
        assert out["p"] == 0.0 and out["degenerate"]

    def test_five_point_fixture_matches_reference_integration(self):
        a = [0.61, 0.42, 0.78, 0.55, 0.69]
        b = [0.58, 0.44, 0.70, 0.51, 0.60]
        out = E.paired_ttest(a, b)
        diffs = np.array(a) - np.array(b)
        t_stat = diffs.mean() / (diffs.std(ddof=1) / np.sqrt(5))
        want_p = oracles.student_t_two_sided_p(float(t_stat), 4)
        assert out["p"] == pytest.approx(want_p, abs=1e-4)
        assert not out["degenerate"]

    def test_large_sample_with_shift_goes_to_zero(self):
        rng = np.random.default_rng(7)
        b = rng.normal(0.5, 0.05, size=400).tolist()
        a = [x + 0.02 + float(e) for x, e in zip(b, rng.normal(0, 0.005, size=400))]
        out = E.paired_ttest(a, b)
        assert out["p"] < 1e-10 and not out["degenerate"]

    def test_input_validation(self):
        with pytest.raises(ValueError, match="length"):
            E.paired_ttest([1.0, 2.0], [1.0])
        with pytest.raises(ValueError, match="at least 2"):
            E.paired_ttest([1.0], [1.0])


def tiny_vec_corpus(seed=0):
    """Hand-built 3-user corpus with trained embeddings over 6 products."""
    topics = {
        "A": "red green blue crimson teal azure",
        "B": "oak elm pine birch cedar maple",
    }
    products = [f"P{i}" for i in range(6)]
    product_docs = {p: (topics["A"] if i % 2 == 0 else topics["B"]).split() * 6 for i, p in enumerate(products)}
    queries = ["red blue", "oak pine"]

    def inter(u, p, q, t):
        return Interaction(user_id=u, product_id=p, query_id=q, timestamp=t)

    users = {}
    for ui, u in enumerate(("u1", "u2", "u3")):
        train = [inter(u, products[(ui + j) % 6], j % 2, j) for j in range(6)]
        users[u] = UserSplit(train=train, validation=inter(u, products[ui], 0, 50), test=inter(u, products[5 - ui], 1, 60))

    vocab = {}
    for doc in product_docs.values():
        for w in doc:
            vocab[w] = vocab.get(w, 0) + 1
    corpus = SplitCorpus(users=users, products=products, queries=queries, vocab=vocab, product_docs=product_docs)

    docs = [(em.product_doc_key(p), product_docs[p]) for p in products]
    docs += [(em.query_doc_key(qi), q.split()) for qi, q in enumerate(queries)]
    table, _ = em.train_pvdm(docs, k=8, window=2, negatives=2, epochs=15, lr=0.08, seed=seed)
    for qi, q in enumerate(queries):
        table.query_text_rows[q] = table._doc_index[em.query_doc_key(qi)]
    return M.VecCorpus(corpus, table)


class TestEvaluateModel:
    def test_counts_bounds_and_determinism(self):
        vc = tiny_vec_corpus()
        cfg = M.Config(k=8, m=3, f=4, tower_layers=2, cutoff=20, seed=1)
        params = M.init_params(cfg, "ALSTP", seed=1)
        r1 = E.evaluate_model(params, vc, "validation")
        r2 = E.evaluate_model(params, vc, "validation")
        assert r1.count == 3
        for i1, i2 in zip(r1.instances, r2.instances):
            assert (i1.user_id, i1.rank, i1.hr, i1.mrr, i1.ndcg) == (i2.user_id, i2.rank, i2.hr, i2.mrr, i2.ndcg)
        for inst in r1.instances:
            assert 1 <= inst.rank <= 6
            assert 0.0 <= inst.ndcg <= 1.0

    def test_test_phase_history_includes_validation(self):
        vc = tiny_vec_corpus()
        assert len(vc.history("u1", "validation")) == 6
        assert len(vc.history("u1", "test")) == 7
        assert vc.target("u1", "test").product_id == "P5"
        with pytest.raises(ValueError, match="phase"):
            vc.history("u1", "train")

    def test_metrics_agree_with_rank_brute_force(self):
        vc = tiny_vec_corpus()
        cfg = M.Config(k=8, m=3, f=4, tower_layers=1, cutoff=3, seed=2)
        params = M.init_params(cfg, "ALSTP", seed=2)
        result = E.evaluate_model(params, vc, "test", cutoff=3)
        for inst in result.instances:
            ctx = M.replay_context(params, vc.pairs(vc.history(inst.user_id, "test")))
            ranked = M.rank_catalog(params, ctx, vc.query_vec(inst.query_id), vc.product_ids, vc.product_matrix)
            scores = {pid: s for pid, s in ranked}
            want = oracles.rank_of_target(
                [scores[pid] for pid in vc.product_ids], vc.product_ids, vc.product_ids.index(inst.product_id)
            )
            assert inst.rank == want
            assert inst.ndcg == pytest.approx(oracles.ndcg_single(want, cutoff=3), rel=1e-12)


class TestAttentionDump:
    def test_records_replay_bit_equal(self):
        vc = tiny_vec_corpus()
        cfg = M.Config(k=8, m=3, f=4, seed=3)
        params = M.init_params(cfg, "ALSTP", seed=3)
        rec1 = E.dump_attention(params, vc, "validation")
        rec2 = E.dump_attention(params, vc, "validation")
        assert rec1 == rec2

    def test_alpha_shapes_and_sums(self):
        vc = tiny_vec_corpus()
        cfg = M.Config(k=8, m=3, f=4, seed=4)
        params = M.init_params(cfg, "ALSTP", seed=4)
        for rec in E.dump_attention(params, vc, "validation"):
            assert len(rec["alpha_short"]) == 3
            assert len(rec["alpha_long"]) == 8
            assert abs(sum(rec["alpha_short"]) - 1.0) < 1e-6
            assert abs(sum(rec["alpha_long"]) - 1.0) < 1e-6
            assert len(rec["previous_queries"]) == 3
            assert all(q is not None for q in rec["previous_queries"])  # histories are long enough

    def test_identical_previous_queries_dump_uniform(self):
        vc = tiny_vec_corpus()
        cfg = M.Config(k=8, m=3, f=4, seed=5)
        params = M.init_params(cfg, "ALSTP", seed=5)
        u = "u1"
        hist = vc.history(u, "validation")
        same = [Interaction(user_id=u, product_id=it.product_id, query_id=1, timestamp=it.timestamp) for it in hist]
        ctx = M.replay_context(params, vc.pairs(same))
        side = M.query_side(params, ctx, vc.query_vec(0))
        np.testing.assert_allclose(side["alpha_l"].data, np.full(3, 1 / 3), rtol=1e-6)

    def test_wopm_dumps_no_attention(self):
        vc = tiny_vec_corpus()
        cfg = M.Config(k=8, m=3, f=4, seed=6)
        params = M.init_params(cfg, "WoPM", seed=6)
        for rec in E.dump_attention(params, vc, "validation"):
            assert rec["alpha_short"] is None and rec["alpha_long"] is None


class TestWriters:
    def test_metrics_file_round_trips(self, tmp_path):
        res = E.EvalResult(cutoff=20)
        res.instances.append(E.score_instance("a", 0, "p", 2, 20))
        path = tmp_path / "metrics.json"
        E.write_metrics(path, "alstp", "toy", res)
        payload = json.loads(path.read_text())
        assert payload["model"] == "alstp"
        assert payload["count"] == 1
        assert payload["instances"][0]["rank"] == 2
        assert payload["ndcg"] == pytest.approx(1.0 / math.log2(3))

    def test_attention_file_is_jsonl(self, tmp_path):
        path = tmp_path / "attn.jsonl"
        E.write_attention(path, [{"user": "a", "alpha_short": [0.5, 0.5]}, {"user": "b", "alpha_short": None}])
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 2
        assert json.loads(lines[0])["user"] == "a"

    def test_significance_file(self, tmp_path):
        path = tmp_path / "significance.json"
        E.write_significance(path, {"alstp_vs_ql": {"t": 2.0, "p": 0.04, "dof": 9, "degenerate": False}})
        assert json.loads(path.read_text())["alstp_vs_ql"]["p"] == 0.04
