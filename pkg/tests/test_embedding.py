import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from paperrec.embedding import (
    EmbeddingFormatError,
    EmbeddingMatrix,
    cosine_matrix,
    load_embedding,
    save_embedding,
    unit_rows,
)


def make_emb(rows, method="cbf", missing=(), imputed=()):
    return EmbeddingMatrix(
        data=np.asarray(rows, dtype=np.float32),
        method=method,
        missing=frozenset(missing),
        imputed=frozenset(imputed),
    )


class TestMatrix:
    def test_casts_to_float32(self):
        emb = EmbeddingMatrix(data=np.eye(3, dtype=np.float64), method="gb")
        assert emb.data.dtype == np.float32

    def test_bad_method_rejected(self):
        with pytest.raises(ValueError):
            EmbeddingMatrix(data=np.eye(2, dtype=np.float32), method="other")

    def test_missing_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            make_emb(np.eye(2), missing=[5])

    def test_missing_imputed_disjoint(self):
        with pytest.raises(ValueError):
            make_emb(np.eye(2), missing=[0], imputed=[0])

    def test_row_access_and_missing(self):
        emb = make_emb([[1, 0], [0, 0]], missing=[1])
        assert emb.row(0).tolist() == [1, 0]
        assert emb.is_missing(1)
        with pytest.raises(LookupError):
            emb.row(1)

    def test_present_indices(self):
        emb = make_emb(np.eye(4), missing=[1, 3])
        assert emb.present_indices().tolist() == [0, 2]

    def test_cosine(self):
        emb = make_emb([[1, 0], [1, 1]])
        assert emb.cosine(0, 1) == pytest.approx(1 / np.sqrt(2))

    def test_cosine_zero_vector_rejected(self):
        emb = make_emb([[1, 0], [0, 0]])
        with pytest.raises(ValueError):
            emb.cosine(0, 1)

    def test_with_rows_fills_missing_only(self):
        emb = make_emb([[1, 0], [0, 0]], missing=[1])
        filled = emb.with_rows({1: np.array([0, 1], dtype=np.float32)})
        assert filled.missing == frozenset()
        assert filled.imputed == frozenset({1})
        assert filled.row(1).tolist() == [0, 1]
        with pytest.raises(ValueError):
            emb.with_rows({0: np.array([9, 9], dtype=np.float32)})

    def test_with_rows_shape_checked(self):
        emb = make_emb([[1, 0], [0, 0]], missing=[1])
        with pytest.raises(ValueError):
            emb.with_rows({1: np.zeros(3, dtype=np.float32)})

    def test_digest_sensitive_to_data_and_missing(self):
        a = make_emb(np.eye(3))
        b = make_emb(np.eye(3), missing=[2])
        c = make_emb(np.eye(3) * 2)
        assert len({a.digest(), b.digest(), c.digest()}) == 3
        assert a.digest() == make_emb(np.eye(3)).digest()


class TestUnitRows:
    def test_normalizes(self):
        data, missing = unit_rows(np.array([[3.0, 4.0]]))
        assert missing == frozenset()
        assert np.allclose(data, [[0.6, 0.8]])

    def test_dead_rows_become_missing_zeros(self):
        data, missing = unit_rows(np.array([[1.0, 0.0], [1e-15, 0.0]]))
        assert missing == frozenset({1})
        assert data[1].tolist() == [0.0, 0.0]

    def test_prior_missing_preserved_and_zeroed(self):
        data, missing = unit_rows(np.array([[1.0, 1.0], [2.0, 0.0]]), missing=[0])
        assert missing == frozenset({0})
        assert data[0].tolist() == [0.0, 0.0]
        assert np.allclose(data[1], [1.0, 0.0])


class TestPersistence:
    def test_round_trip_bitwise(self, tmp_path, rng):
        emb = make_emb(rng.normal(size=(6, 5)), method="gb", missing=[2])
        path = tmp_path / "e.emb"
        save_embedding(emb, path)
        again = load_embedding(path)
        assert again.method == "gb"
        assert again.missing == emb.missing
        assert again.data.tobytes() == emb.data.tobytes()
        assert again.digest() == emb.digest()

    def test_file_object_round_trip(self, rng):
        emb = make_emb(rng.normal(size=(3, 4)))
        buf = io.BytesIO()
        save_embedding(emb, buf)
        buf.seek(0)
        assert load_embedding(buf).digest() == emb.digest()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "e.emb"
        path.write_bytes(b"XXXX" + b"\x00" * 20)
        with pytest.raises(EmbeddingFormatError):
            load_embedding(path)

    def test_truncation_reports_offset(self, tmp_path, rng):
        emb = make_emb(rng.normal(size=(4, 3)))
        path = tmp_path / "e.emb"
        save_embedding(emb, path)
        path.write_bytes(path.read_bytes()[:-2])
        with pytest.raises(EmbeddingFormatError) as err:
            load_embedding(path)
        assert "offset" in str(err.value)

    def test_trailing_bytes_rejected(self, tmp_path, rng):
        emb = make_emb(rng.normal(size=(4, 3)))
        path = tmp_path / "e.emb"
        save_embedding(emb, path)
        path.write_bytes(path.read_bytes() + b"!")
        with pytest.raises(EmbeddingFormatError):
            load_embedding(path)

    def test_missing_index_out_of_range_rejected(self, tmp_path):
        emb = make_emb(np.eye(2), missing=[1])
        path = tmp_path / "e.emb"
        save_embedding(emb, path)
        raw = bytearray(path.read_bytes())
        raw[-8:] = (9).to_bytes(8, "little")  # missing index 9 > n
        path.write_bytes(bytes(raw))
        with pytest.raises(EmbeddingFormatError):
            load_embedding(path)


class TestCosineMatrix:
    def test_missing_rows_are_nan(self):
        emb = make_emb(np.eye(3), missing=[1])
        mat = cosine_matrix(emb)
        assert np.isnan(mat[1]).all() and np.isnan(mat[:, 1]).all()
        assert mat[0, 0] == pytest.approx(1.0)
        assert mat[0, 2] == pytest.approx(0.0)

    def test_symmetric(self, rng):
        emb = make_emb(rng.normal(size=(5, 4)))
        mat = cosine_matrix(emb)
        assert np.allclose(mat, mat.T)


@settings(max_examples=40, deadline=None)
@given(
    arrays(
        np.float32,
        st.tuples(st.integers(1, 6), st.integers(1, 5)),
        elements=st.floats(-5, 5, width=32),
    )
)
def test_save_load_round_trip_property(data):
    emb = EmbeddingMatrix(data=data, method="cbf")
    buf = io.BytesIO()
    save_embedding(emb, buf)
    buf.seek(0)
    again = load_embedding(buf)
    assert again.data.tobytes() == emb.data.tobytes()
    assert again.missing == emb.missing
