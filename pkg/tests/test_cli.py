"""Command-line surface: exit codes, JSON contracts, config defaults, artifacts."""

import json
import shutil

import pytest

from paperrec.cli import main
from paperrec.corpus import write_records
from paperrec.synthetic import make_citation_corpus, tiny5

from oracles import rrf_oracle


def run_json(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    try:
        payload = json.loads(captured.out)
    except json.JSONDecodeError:
        payload = captured.out
    return code, payload, captured.err


def build_pipeline(data_dir, src, gb_d):
    for argv in (
        ["ingest", "--data-dir", str(data_dir), "--input", str(src)],
        ["graph", "--data-dir", str(data_dir)],
        ["embed-gb", "--data-dir", str(data_dir), "--d", str(gb_d)],
        ["embed-cbf", "--data-dir", str(data_dir)],
        ["index", "--data-dir", str(data_dir), "--method", "cbf"],
        ["index", "--data-dir", str(data_dir), "--method", "gb"],
    ):
        assert main(argv) == 0, argv


@pytest.fixture(scope="module")
def tiny_cli_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-tiny")
    src = root / "src.jsonl"
    write_records(tiny5(), src)
    data_dir = root / "data"
    build_pipeline(data_dir, src, gb_d=4)
    return data_dir


@pytest.fixture(scope="module")
def corpus_cli_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-corpus")
    src = root / "src.jsonl"
    write_records(make_citation_corpus(120, seed=1, abstract_missing=0.15), src)
    data_dir = root / "data"
    build_pipeline(data_dir, src, gb_d=16)
    return data_dir


class TestUsage:
    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert "paperrec" in capsys.readouterr().out

    def test_unknown_subcommand_exits_2(self, capsys):
        assert main(["summon"]) == 2
        assert main([]) == 2

    def test_bad_choice_exits_2(self, capsys, tiny_cli_dir):
        code = main(["recommend", "--data-dir", str(tiny_cli_dir), "--paper", "P1",
                     "--method", "lsh"])
        assert code == 2

    def test_missing_required_flag_exits_2(self, capsys):
        assert main(["recommend"]) == 2
        assert main(["ingest"]) == 2


class TestIngest:
    def test_reports_counts(self, tmp_path, capsys):
        src = tmp_path / "src.jsonl"
        write_records(tiny5(), src)
        code, payload, _ = run_json(
            capsys, "ingest", "--data-dir", str(tmp_path / "d"), "--input", str(src)
        )
        assert code == 0
        assert payload == {"nParsed": 5, "nLines": 5, "nMalformed": 0, "nDuplicates": 0}
        assert (tmp_path / "d" / "corpus.jsonl").exists()
        assert (tmp_path / "d" / "corpus.jsonl.sha256").exists()
        assert (tmp_path / "d" / "id_map.tsv").exists()

    def test_bad_lines_reported_to_file(self, tmp_path, capsys):
        src = tmp_path / "src.jsonl"
        lines = [json.dumps({"id": f"R{i}", "title": "t"}) for i in range(11)]
        lines.append("{broken")
        src.write_text("\n".join(lines) + "\n")
        code, payload, _ = run_json(
            capsys, "ingest", "--data-dir", str(tmp_path / "d"), "--input", str(src)
        )
        assert code == 0
        assert payload["nParsed"] == 11
        assert payload["nMalformed"] == 1
        report = json.loads((tmp_path / "d" / "ingest_report.json").read_text())
        assert report["malformed"][0]["line"] == 12

    def test_missing_input_exits_1(self, tmp_path, capsys):
        code, _, err = run_json(
            capsys, "ingest", "--data-dir", str(tmp_path), "--input", str(tmp_path / "no.jsonl")
        )
        assert code == 1
        assert err.startswith("error:")


class TestStageOutputs:
    def test_graph_counts(self, tiny_cli_dir, capsys):
        code, payload, _ = run_json(capsys, "graph", "--data-dir", str(tiny_cli_dir))
        assert code == 0
        assert payload == {"nodes": 5, "edges": 4}

    def test_embed_gb_reports_stages(self, tiny_cli_dir, capsys):
        code, payload, _ = run_json(
            capsys, "embed-gb", "--data-dir", str(tiny_cli_dir), "--d", "4"
        )
        assert code == 0
        assert payload["n"] == 5 and payload["d"] == 4
        assert payload["missing"] == 1  # P4 is isolated
        assert set(payload["stages"]) == {"factorize", "propagate"}

    def test_embed_gb_oversized_d_exits_1(self, tiny_cli_dir, capsys):
        code, _, err = run_json(
            capsys, "embed-gb", "--data-dir", str(tiny_cli_dir), "--d", "64"
        )
        assert code == 1
        assert err.startswith("error:")

    def test_stats_coverage(self, tiny_cli_dir, capsys):
        code, payload, _ = run_json(capsys, "stats", "--data-dir", str(tiny_cli_dir))
        assert code == 0
        assert payload["nTotal"] == 5
        assert payload["nBoth"] == 3
        assert payload["fractionBoth"] == pytest.approx(0.6)

    def test_index_before_embedding_exits_1(self, tmp_path, capsys):
        src = tmp_path / "src.jsonl"
        write_records(tiny5(), src)
        data_dir = tmp_path / "d"
        assert main(["ingest", "--data-dir", str(data_dir), "--input", str(src)]) == 0
        capsys.readouterr()
        code, _, err = run_json(capsys, "index", "--data-dir", str(data_dir), "--method", "cbf")
        assert code == 1
        assert "embed-cbf" in err

    def test_embed_cbf_vector_import(self, tmp_path, capsys):
        src = tmp_path / "src.jsonl"
        write_records(tiny5(), src)
        data_dir = tmp_path / "d"
        assert main(["ingest", "--data-dir", str(data_dir), "--input", str(src)]) == 0
        vectors = tmp_path / "ext.tsv"
        vectors.write_text(
            "P0\t1.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0\nP1\t0.0,1.0,0.0,0.0,0.0,0.0,0.0,0.0\n"
        )
        capsys.readouterr()
        code, payload, _ = run_json(
            capsys, "embed-cbf", "--data-dir", str(data_dir), "--vectors", str(vectors)
        )
        assert code == 0
        assert payload == {"n": 5, "d": 8, "missing": 3}


class TestRecommendCli:
    def test_json_contract(self, tiny_cli_dir, capsys):
        code, payload, _ = run_json(
            capsys, "recommend", "--data-dir", str(tiny_cli_dir),
            "--paper", "P1", "--method", "gb", "-k", "2",
        )
        assert code == 0
        assert set(payload) == {"query", "method", "generatedAt", "recommendedPapers"}
        assert payload["query"] == "P1"
        assert payload["method"] == "gb"
        ids = [item["paperId"] for item in payload["recommendedPapers"]]
        assert len(ids) == 2 and "P2" in ids and "P1" not in ids
        for item in payload["recommendedPapers"]:
            assert set(item) == {"paperId", "title", "score", "citationCount"}

    def test_unknown_paper_exits_1(self, tiny_cli_dir, capsys):
        code, _, err = run_json(
            capsys, "recommend", "--data-dir", str(tiny_cli_dir), "--paper", "NOPE"
        )
        assert code == 1
        assert "unknown paper id" in err

    def test_missing_vector_exits_1(self, tiny_cli_dir, capsys):
        code, _, err = run_json(
            capsys, "recommend", "--data-dir", str(tiny_cli_dir),
            "--paper", "P0", "--method", "cbf",
        )
        assert code == 1
        assert "no vector" in err

    def test_authors_without_author_data_exits_1(self, tiny_cli_dir, capsys):
        code, _, err = run_json(
            capsys, "authors", "--data-dir", str(tiny_cli_dir), "--paper", "P1"
        )
        assert code == 1
        assert "author" in err

    def test_authors_json(self, corpus_cli_dir, capsys):
        code, payload, _ = run_json(
            capsys, "authors", "--data-dir", str(corpus_cli_dir),
            "--paper", "S10", "--method", "gb", "-k", "3",
        )
        assert code == 0
        assert payload["method"] == "gb"
        assert 1 <= len(payload["recommendedAuthors"]) <= 3
        assert all(set(a) == {"author", "score"} for a in payload["recommendedAuthors"])


class TestFuseCli:
    def test_fuses_two_saved_lists(self, tiny_cli_dir, tmp_path, capsys):
        code_a, payload_a, _ = run_json(
            capsys, "recommend", "--data-dir", str(tiny_cli_dir),
            "--paper", "P2", "--method", "cbf", "-k", "3",
        )
        code_b, payload_b, _ = run_json(
            capsys, "recommend", "--data-dir", str(tiny_cli_dir),
            "--paper", "P2", "--method", "gb", "-k", "3",
        )
        assert code_a == 0 and code_b == 0
        file_a = tmp_path / "a.json"
        file_b = tmp_path / "b.json"
        file_a.write_text(json.dumps(payload_a))
        file_b.write_text(json.dumps(payload_b))
        code, fused, _ = run_json(
            capsys, "fuse", "--data-dir", str(tiny_cli_dir),
            "--a", str(file_a), "--b", str(file_b), "-k", "4",
        )
        assert code == 0
        assert fused["method"] == "hybrid"
        ids_a = [i["paperId"] for i in payload_a["recommendedPapers"]]
        ids_b = [i["paperId"] for i in payload_b["recommendedPapers"]]
        expected = [i for i, _ in rrf_oracle([ids_a, ids_b]) if i != "P2"][:4]
        assert [i["paperId"] for i in fused["recommendedPapers"]] == expected

    def test_unreadable_input_exits_1(self, tiny_cli_dir, tmp_path, capsys):
        code, _, err = run_json(
            capsys, "fuse", "--data-dir", str(tiny_cli_dir),
            "--a", str(tmp_path / "none.json"), "--b", str(tmp_path / "none.json"),
        )
        assert code == 1
        assert "cannot read" in err


class TestAnalysisCli:
    def test_priors_profile_and_csv(self, corpus_cli_dir, capsys):
        code, payload, _ = run_json(
            capsys, "priors", "--data-dir", str(corpus_cli_dir),
            "--queries", "8", "-k", "5", "--threads", "2",
        )
        assert code == 0
        assert payload["queries"] == 8
        assert set(payload["perMethod"]) == {"cbf", "gb"}
        for method in ("cbf", "gb"):
            stats = payload["perMethod"][method]
            assert stats["nItems"] > 0
            assert stats["citations"]["mean"] is not None
        csv_text = (corpus_cli_dir / "priors.csv").read_text()
        assert csv_text.startswith("method,rank,paper_id,citations,year\n")

    def test_corners_report(self, corpus_cli_dir, capsys):
        code, payload, _ = run_json(
            capsys, "corners", "--data-dir", str(corpus_cli_dir), "--sample", "40"
        )
        assert code == 0
        assert payload["sampleSize"] == 40
        assert 0.0 <= payload["fractionGe099"] <= 1.0
        assert (corpus_cli_dir / "flags.jsonl").exists()

    def test_impute_centroid(self, corpus_cli_dir, capsys):
        code, payload, _ = run_json(
            capsys, "impute", "--data-dir", str(corpus_cli_dir), "--target", "cbf"
        )
        assert code == 0
        assert payload["missingBefore"] > 0
        assert payload["missingAfter"] <= payload["missingBefore"]
        assert payload["imputed"] + payload["unimputable"] == payload["missingBefore"]
        assert (corpus_cli_dir / "cbf.imputed.emb").exists()

    def test_eval_scaling_writes_csv(self, corpus_cli_dir, capsys):
        code, payload, _ = run_json(
            capsys, "eval", "--data-dir", str(corpus_cli_dir), "--scaling",
            "--t", "50,100", "--bins", "4", "--bin-mode", "year",
            "--k-pairs", "30", "--d", "16",
        )
        assert code == 0
        assert [p["t"] for p in payload["points"]] == [2, 4]
        for p in payload["points"]:
            assert 0.0 <= p["auc"] <= 1.0
        csv_text = (corpus_cli_dir / "eval_scaling.csv").read_text()
        assert csv_text.startswith("t,h,auc,n_pairs,excluded\n")

    def test_eval_horizon(self, corpus_cli_dir, capsys):
        code, payload, _ = run_json(
            capsys, "eval", "--data-dir", str(corpus_cli_dir), "--horizon",
            "--t", "25", "--h-list", "0,1", "--bins", "4", "--bin-mode", "year",
            "--k-pairs", "30", "--d", "16",
        )
        assert code == 0
        assert [p["h"] for p in payload["points"]] == [0, 1]
        assert all(p["t"] == 1 for p in payload["points"])
        assert (corpus_cli_dir / "eval_horizon.csv").exists()

    def test_eval_needs_exactly_one_mode(self, corpus_cli_dir, capsys):
        code, _, err = run_json(capsys, "eval", "--data-dir", str(corpus_cli_dir))
        assert code == 1
        assert "exactly one" in err
        code2, _, err2 = run_json(
            capsys, "eval", "--data-dir", str(corpus_cli_dir), "--scaling", "--horizon"
        )
        assert code2 == 1


class TestConfigFile:
    def test_config_sets_defaults(self, tiny_cli_dir, tmp_path, capsys):
        cfg = tmp_path / "paperrec.cfg"
        cfg.write_text(f"data-dir = {tiny_cli_dir}\nk = 2  # top-k\n")
        code, payload, _ = run_json(
            capsys, "recommend", "--config", str(cfg), "--paper", "P1", "--method", "gb"
        )
        assert code == 0
        assert len(payload["recommendedPapers"]) == 2

    def test_explicit_flag_beats_config(self, tiny_cli_dir, tmp_path, capsys):
        cfg = tmp_path / "paperrec.cfg"
        cfg.write_text(f"data-dir = {tiny_cli_dir}\nk = 2\n")
        code, payload, _ = run_json(
            capsys, "recommend", "--config", str(cfg), "--paper", "P1",
            "--method", "gb", "-k", "1",
        )
        assert code == 0
        assert len(payload["recommendedPapers"]) == 1

    def test_unknown_key_exits_1(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("warp-speed = 9\n")
        code, _, err = run_json(capsys, "stats", "--config", str(cfg))
        assert code == 1
        assert "unknown config key" in err

    def test_malformed_line_exits_1(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("just words\n")
        code, _, err = run_json(capsys, "stats", "--config", str(cfg))
        assert code == 1
        assert "key=value" in err

    def test_missing_config_exits_1(self, tmp_path, capsys):
        code, _, err = run_json(capsys, "stats", "--config", str(tmp_path / "none.cfg"))
        assert code == 1
        assert "cannot read config" in err


class TestForceSemantics:
    def test_changed_artifact_requires_force(self, tiny_cli_dir, tmp_path, capsys):
        clone = tmp_path / "clone"
        shutil.copytree(tiny_cli_dir, clone)
        code, _, err = run_json(
            capsys, "embed-cbf", "--data-dir", str(clone), "--d", "64"
        )
        assert code == 1
        assert "--force" in err
        code2, payload, _ = run_json(
            capsys, "embed-cbf", "--data-dir", str(clone), "--d", "64", "--force"
        )
        assert code2 == 0
        assert payload["d"] == 64
