"""Artifact layout: guarded writes, sidecar digests, full-bundle load path."""

import numpy as np
import pytest

from paperrec.artifacts import (
    CBF_EMB,
    CORPUS,
    GB_EMB,
    GRAPH,
    ArtifactError,
    build_default_pipeline,
    load_bundle,
    load_store,
    sha256_bytes,
    verify_artifact,
    write_artifact,
)
from paperrec.synthetic import tiny5


class TestWriteArtifact:
    def test_writes_payload_and_sidecar(self, tmp_path):
        path = tmp_path / "x.bin"
        assert write_artifact(path, b"payload") is True
        assert path.read_bytes() == b"payload"
        sidecar = tmp_path / "x.bin.sha256"
        digest, name = sidecar.read_text().split()
        assert digest == sha256_bytes(b"payload")
        assert name == "x.bin"

    def test_identical_rewrite_is_skipped(self, tmp_path):
        path = tmp_path / "x.bin"
        write_artifact(path, b"same")
        before = path.stat().st_mtime_ns
        assert write_artifact(path, b"same") is False
        assert path.stat().st_mtime_ns == before

    def test_changed_content_refused_without_force(self, tmp_path):
        path = tmp_path / "x.bin"
        write_artifact(path, b"one")
        with pytest.raises(ArtifactError, match="--force"):
            write_artifact(path, b"two")
        assert path.read_bytes() == b"one"
        assert write_artifact(path, b"two", force=True) is True
        assert path.read_bytes() == b"two"
        verify_artifact(path)  # sidecar must follow the forced rewrite

    def test_creates_parent_directories(self, tmp_path):
        path = tmp_path / "a" / "b" / "x.bin"
        write_artifact(path, b"deep")
        assert path.read_bytes() == b"deep"

    def test_no_tmp_droppings(self, tmp_path):
        write_artifact(tmp_path / "x.bin", b"data")
        assert not list(tmp_path.glob("*.tmp~"))


class TestVerifyArtifact:
    def test_tampering_detected(self, tmp_path):
        path = tmp_path / "x.bin"
        write_artifact(path, b"original")
        path.write_bytes(b"tampered")
        with pytest.raises(ArtifactError, match="digest"):
            verify_artifact(path)

    def test_missing_sidecar_tolerated(self, tmp_path):
        path = tmp_path / "bare.bin"
        path.write_bytes(b"no sidecar")
        verify_artifact(path)


class TestBundle:
    def test_round_trip_equals_in_memory_build(self, tiny5_data_dir, tiny5_bundle):
        loaded = load_bundle(tiny5_data_dir)
        assert loaded.store.n == tiny5_bundle.store.n
        assert loaded.graph.digest() == tiny5_bundle.graph.digest()
        assert np.array_equal(loaded.cbf_emb.data, tiny5_bundle.cbf_emb.data)
        assert np.array_equal(loaded.gb_emb.data, tiny5_bundle.gb_emb.data)
        assert loaded.cbf_emb.missing == tiny5_bundle.cbf_emb.missing
        assert loaded.gb_emb.missing == tiny5_bundle.gb_emb.missing

    def test_loaded_recommender_answers(self, tiny5_data_dir):
        rec = load_bundle(tiny5_data_dir).recommender()
        out = rec.papers_like_this(1, "hybrid", k=3)
        assert len(out.items) >= 1

    def test_missing_artifact_names_the_stage(self, tmp_path):
        with pytest.raises(ArtifactError, match="run `ingest` first"):
            load_store(tmp_path)
        write_artifact(tmp_path / CORPUS, b'{"id": "X", "title": "t"}\n')
        with pytest.raises(ArtifactError, match="run `graph` first"):
            load_bundle(tmp_path)

    def test_corrupted_artifact_refused(self, tmp_path):
        build_default_pipeline(tiny5(), tmp_path)
        target = tmp_path / GB_EMB
        data = bytearray(target.read_bytes())
        data[-1] ^= 0xFF
        target.write_bytes(bytes(data))
        with pytest.raises(ArtifactError, match="digest"):
            load_bundle(tmp_path)

    def test_graph_corpus_size_mismatch(self, tmp_path):
        from paperrec.artifacts import graph_bytes
        from paperrec.citegraph import from_edges

        build_default_pipeline(tiny5(), tmp_path)
        write_artifact(tmp_path / GRAPH, graph_bytes(from_edges(3, [(1, 0)])), force=True)
        with pytest.raises(ArtifactError, match="rebuild"):
            load_bundle(tmp_path)


class TestBuildDefaultPipeline:
    def test_idempotent_without_force(self, tmp_path):
        store = tiny5()
        build_default_pipeline(store, tmp_path)
        # same inputs produce byte-identical artifacts, so the second run
        # must not raise
        build_default_pipeline(store, tmp_path)

    def test_changed_corpus_needs_force(self, tmp_path):
        from paperrec.corpus import CorpusStore, PaperRecord

        build_default_pipeline(tiny5(), tmp_path)
        other = CorpusStore(
            [
                PaperRecord("Z0", title="z", abstract="first topic"),
                PaperRecord("Z1", title="z", abstract="second topic", references=("Z0",)),
            ]
        )
        with pytest.raises(ArtifactError, match="--force"):
            build_default_pipeline(other, tmp_path)
        bundle = build_default_pipeline(other, tmp_path, force=True)
        assert bundle.store.n == 2
        assert load_bundle(tmp_path).store.n == 2

    def test_gb_dimension_capped_by_corpus(self, tiny5_bundle):
        assert tiny5_bundle.gb_emb.d == 5
        assert tiny5_bundle.cbf_emb.d == 256
