"""CLI pipeline: wiring, config precedence, manifests, error contract."""

import json
import math

import pytest

from alstp import cli
from alstp import corpus as cp


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One small end-to-end run shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    assert run("synth", "--profile", "mixed", "--out", root / "raw", "--users", 12,
               "--products", 40, "--per-user", 12, "--topics", 3, "--categories", 4,
               "--seed", 1) == 0
    assert run("preprocess", "--reviews", root / "raw" / "reviews.jsonl",
               "--meta", root / "raw" / "meta.jsonl", "--out", root / "corpus", "--seed", 1) == 0
    assert run("embed", "--corpus", root / "corpus", "--out", root / "vectors", "--k", 12,
               "--window", 3, "--negatives", 3, "--epochs", 4, "--lr", 0.05, "--seed", 1) == 0
    assert run("train", "--corpus", root / "corpus", "--vectors", root / "vectors",
               "--out", root / "model", "--m", 3, "--f", 6, "--negatives", 2,
               "--lr", 0.01, "--epochs", 2, "--seed", 1) == 0
    return root


def first_query(root) -> str:
    lines = (root / "corpus" / "queries.tsv").read_text().splitlines()
    return lines[1].split("\t")[1]


class TestErrorContract:
    def test_missing_meta_names_path(self, tmp_path, capsys):
        reviews = tmp_path / "reviews.jsonl"
        reviews.write_text("{}\n")
        missing = tmp_path / "nope" / "meta.jsonl"
        rc = run("preprocess", "--reviews", reviews, "--meta", missing, "--out", tmp_path / "out")
        assert rc != 0
        err = capsys.readouterr().err
        assert "error" in err and str(missing) in err

    def test_missing_corpus_directory(self, tmp_path, capsys):
        missing = tmp_path / "ghost"
        rc = run("embed", "--corpus", missing, "--out", tmp_path / "v")
        assert rc == 2
        assert str(missing) in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("bogus = 3\n")
        rc = run("synth", "--profile", "mixed", "--out", tmp_path / "o", "--config", cfg)
        assert rc == 2
        assert "bogus" in capsys.readouterr().err

    def test_untypeable_config_value(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("k = banana\n")
        rc = run("synth", "--profile", "mixed", "--out", tmp_path / "o", "--config", cfg)
        assert rc == 2
        assert "banana" in capsys.readouterr().err

    def test_train_k_mismatch(self, pipeline, tmp_path, capsys):
        rc = run("train", "--corpus", pipeline / "corpus", "--vectors", pipeline / "vectors",
                 "--out", tmp_path / "m", "--k", 99, "--epochs", 0)
        assert rc == 2
        err = capsys.readouterr().err
        assert "k=12" in err and "k=99" in err

    def test_synth_domain_error_is_operator_facing(self, tmp_path, capsys):
        rc = run("synth", "--profile", "planted-longterm", "--per-user", 12, "--out", tmp_path / "o")
        assert rc == 2
        assert "17" in capsys.readouterr().err


class TestPreprocessCli:
    def test_declared_files_present(self, pipeline):
        for name in cp.DECLARED_FILES:
            assert (pipeline / "corpus" / name).is_file(), name

    def test_manifest_records_run(self, pipeline):
        manifest = json.loads((pipeline / "corpus" / "manifest.json").read_text())
        rut = manifest["run"]
        assert rut["command"] == "preprocess"
        assert rut["seed"] == 1
        assert set(rut["input_hashes"]) == {"reviews", "meta"}
        assert all(len(h) == 64 for h in rut["input_hashes"].values())
        assert rut["wall_time_s"] >= 0.0

    def test_rerun_same_seed_identical_hashes(self, pipeline, tmp_path):
        rc = run("preprocess", "--reviews", pipeline / "raw" / "reviews.jsonl",
                 "--meta", pipeline / "raw" / "meta.jsonl", "--out", tmp_path / "again", "--seed", 1)
        assert rc == 0
        for name in cp.DECLARED_FILES:
            if name == "manifest.json":  # wall time differs by design
                continue
            assert (tmp_path / "again" / name).read_bytes() == (pipeline / "corpus" / name).read_bytes()


class TestConfigPrecedence:
    def test_defaults_then_file_then_flags(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("users = 7\ntopics = 3  # comment survives\nproducts = 40\nper_user = 12\n")
        out = tmp_path / "o"
        rc = run("synth", "--profile", "mixed", "--out", out, "--config", cfg,
                 "--users", 9, "--categories", 4)
        assert rc == 0
        truth = json.loads((out / "ground_truth.json").read_text())
        assert len(truth["users"]) == 9  # explicit flag beats the file's 7
        assert len(truth["topics"]) == 3  # file beats the built-in default 5
        assert truth["n_products"] == 40  # file beats the default 500

    def test_threads_flag_accepted(self, tmp_path):
        rc = run("synth", "--profile", "mixed", "--out", tmp_path / "o", "--users", 10,
                 "--products", 40, "--per-user", 10, "--threads", 2)
        assert rc == 0


class TestTrainEvalCli:
    def test_train_artifacts(self, pipeline):
        for name in ("model.bin", "model.json", "train_log.jsonl", "manifest.json"):
            assert (pipeline / "model" / name).is_file()
        log = [json.loads(l) for l in (pipeline / "model" / "train_log.jsonl").read_text().splitlines()]
        assert len(log) == 2
        manifest = json.loads((pipeline / "model" / "manifest.json").read_text())
        assert manifest["stats"]["variant"] == "ALSTP"
        assert manifest["stats"]["best_epoch"] in (1, 2)

    def test_eval_writes_metrics(self, pipeline, tmp_path):
        out = tmp_path / "ev"
        assert run("eval", "--corpus", pipeline / "corpus", "--vectors", pipeline / "vectors",
                   "--model", pipeline / "model", "--out", out, "--phase", "test") == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["model"] == "ALSTP"
        assert metrics["count"] == 12 and len(metrics["instances"]) == 12
        assert 0.0 <= metrics["ndcg"] <= 1.0

    def test_attn_dump_emits_window_weights(self, pipeline, tmp_path):
        out = tmp_path / "attn"
        assert run("attn-dump", "--corpus", pipeline / "corpus", "--vectors", pipeline / "vectors",
                   "--model", pipeline / "model", "--out", out) == 0
        records = [json.loads(l) for l in (out / "attention.jsonl").read_text().splitlines()]
        assert len(records) == 12
        for rec in records:
            assert len(rec["alpha_short"]) == 3  # m weights per instance
            assert abs(sum(rec["alpha_short"]) - 1.0) < 1e-5

    def test_search_list_length(self, pipeline, capsys):
        q = first_query(pipeline)
        assert run("search", "--corpus", pipeline / "corpus", "--vectors", pipeline / "vectors",
                   "--model", pipeline / "model", "--user", "U000", "--query", q) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 20  # min(20, catalog) with a catalog of 35
        rank, pid, score = lines[0].split("\t")
        assert rank == "1" and pid.startswith("S")
        float(score)

    def test_search_unknown_user_warns_and_ranks(self, pipeline, capsys, caplog):
        q = first_query(pipeline)
        with caplog.at_level("WARNING"):
            rc = run("search", "--corpus", pipeline / "corpus", "--vectors", pipeline / "vectors",
                     "--model", pipeline / "model", "--user", "NOBODY", "--query", q, "--topn", 3)
        assert rc == 0
        assert any("NOBODY" in rec.getMessage() for rec in caplog.records)
        assert len(capsys.readouterr().out.strip().splitlines()) == 3

    def test_untrained_eval_is_near_random(self, pipeline, tmp_path):
        corpus = cp.load_corpus(pipeline / "corpus")
        n = len(corpus.products)
        expected = sum(1.0 / math.log2(r + 1) for r in range(1, min(20, n) + 1)) / n
        means = []
        for seed in range(5):
            mdir = tmp_path / f"init{seed}"
            assert run("train", "--corpus", pipeline / "corpus", "--vectors", pipeline / "vectors",
                       "--out", mdir, "--m", 3, "--f", 6, "--epochs", 0, "--seed", seed) == 0
            edir = tmp_path / f"ev{seed}"
            assert run("eval", "--corpus", pipeline / "corpus", "--vectors", pipeline / "vectors",
                       "--model", mdir, "--out", edir) == 0
            means.append(json.loads((edir / "metrics.json").read_text())["ndcg"])
        mean = sum(means) / len(means)
        assert expected / 3.0 <= mean <= expected * 3.0


class TestBaselineCli:
    def test_uql_lambda_one_equals_ql(self, pipeline, tmp_path):
        assert run("baseline-ql", "--corpus", pipeline / "corpus", "--out", tmp_path / "ql",
                   "--mu", 2000) == 0
        assert run("baseline-uql", "--corpus", pipeline / "corpus", "--out", tmp_path / "uql",
                   "--mu", 2000, "--lam", 1.0) == 0
        a = json.loads((tmp_path / "ql" / "metrics.json").read_text())
        b = json.loads((tmp_path / "uql" / "metrics.json").read_text())
        assert a["instances"] == b["instances"]

    def test_significance_identical_runs_degenerate(self, pipeline, tmp_path, capsys):
        run("baseline-ql", "--corpus", pipeline / "corpus", "--out", tmp_path / "a", "--mu", 2000)
        run("baseline-ql", "--corpus", pipeline / "corpus", "--out", tmp_path / "b", "--mu", 2000)
        capsys.readouterr()
        rc = run("significance", "--a", tmp_path / "a" / "metrics.json",
                 "--b", tmp_path / "b" / "metrics.json", "--out", tmp_path / "sig")
        assert rc == 0
        out = capsys.readouterr().out
        assert "p=1.000000" in out and "degenerate" in out
        report = json.loads((tmp_path / "sig" / "significance.json").read_text())
        assert report["ndcg"]["p"] == 1.0

    def test_significance_rejects_mismatched_instances(self, pipeline, tmp_path, capsys):
        run("baseline-ql", "--corpus", pipeline / "corpus", "--out", tmp_path / "t",
            "--mu", 2000, "--phase", "test")
        run("baseline-ql", "--corpus", pipeline / "corpus", "--out", tmp_path / "v",
            "--mu", 2000, "--phase", "validation")
        capsys.readouterr()
        rc = run("significance", "--a", tmp_path / "t" / "metrics.json",
                 "--b", tmp_path / "v" / "metrics.json")
        assert rc == 2
        assert "different instances" in capsys.readouterr().err


class TestPipelineDeterminism:
    def test_two_runs_byte_identical_artifacts(self, tmp_path):
        blobs = {}
        for tag in ("a", "b"):
            d = tmp_path / tag
            assert run("synth", "--profile", "planted-shortterm", "--out", d / "raw", "--users", 10,
                       "--products", 40, "--per-user", 10, "--topics", 3, "--categories", 4,
                       "--seed", 5) == 0
            assert run("preprocess", "--reviews", d / "raw" / "reviews.jsonl",
                       "--meta", d / "raw" / "meta.jsonl", "--out", d / "corpus", "--seed", 5) == 0
            assert run("embed", "--corpus", d / "corpus", "--out", d / "vectors", "--k", 8,
                       "--window", 3, "--negatives", 2, "--epochs", 3, "--lr", 0.05, "--seed", 5) == 0
            assert run("train", "--corpus", d / "corpus", "--vectors", d / "vectors",
                       "--out", d / "model", "--m", 2, "--f", 4, "--negatives", 2,
                       "--lr", 0.01, "--epochs", 1, "--seed", 5) == 0
            assert run("eval", "--corpus", d / "corpus", "--vectors", d / "vectors",
                       "--model", d / "model", "--out", d / "ev") == 0
            blobs[tag] = {
                "model.bin": (d / "model" / "model.bin").read_bytes(),
                "model.json": (d / "model" / "model.json").read_bytes(),
                "metrics.json": (d / "ev" / "metrics.json").read_bytes(),
            }
        assert blobs["a"] == blobs["b"]
