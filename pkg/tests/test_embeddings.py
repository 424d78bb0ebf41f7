import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from densequest.embeddings import EmbeddingMatrix, read_embeddings, write_embeddings
from densequest.errors import BadMagic, DimMismatch, TruncatedFile


def matrix_of(model_id, doc_ids, rows):
    vectors = np.asarray(rows, dtype=np.float32)
    return EmbeddingMatrix(model_id=model_id, dim=vectors.shape[1], doc_ids=list(doc_ids), vectors=vectors)


def test_single_vector_byte_layout():
    """Byte-count oracle from the format definition:
    header 4+4+8, id record 2+len(id), payload dim*4."""
    m = matrix_of("m", ["d1"], [[1.0, 0.0]])
    sink = io.BytesIO()
    write_embeddings(m, sink)
    raw = sink.getvalue()
    assert len(raw) == 4 + 4 + 8 + (2 + 2) + 8
    assert raw[:4] == b"DQV1"
    assert struct.unpack("<I", raw[4:8])[0] == 2        # dim
    assert struct.unpack("<Q", raw[8:16])[0] == 1       # count
    assert struct.unpack("<H", raw[16:18])[0] == 2      # id byte length
    assert raw[18:20] == b"d1"
    assert struct.unpack("<2f", raw[20:28]) == (1.0, 0.0)


def test_round_trip_random_matrix():
    rng = np.random.default_rng(11)
    m = matrix_of("model-x", [f"d{i}" for i in range(100)], rng.standard_normal((100, 64)))
    sink = io.BytesIO()
    write_embeddings(m, sink)
    back = read_embeddings(io.BytesIO(sink.getvalue()), model_id="model-x")
    assert back == m


def test_round_trip_via_path_recovers_model_id(tmp_path):
    m = matrix_of("mx", ["a", "b"], [[1, 2, 3], [4, 5, 6]])
    path = tmp_path / "mx.dqv"
    write_embeddings(m, path)
    assert read_embeddings(path) == m


def test_bad_magic():
    with pytest.raises(BadMagic):
        read_embeddings(io.BytesIO(b"XXXX" + b"\x00" * 24))


def test_truncated_header():
    with pytest.raises(TruncatedFile):
        read_embeddings(io.BytesIO(b"DQV1\x02\x00"))


def test_truncated_record():
    m = matrix_of("m", ["d1"], [[1.0, 0.0]])
    sink = io.BytesIO()
    write_embeddings(m, sink)
    with pytest.raises(TruncatedFile):
        read_embeddings(io.BytesIO(sink.getvalue()[:-3]))


def test_trailing_garbage_rejected():
    m = matrix_of("m", ["d1"], [[1.0, 0.0]])
    sink = io.BytesIO()
    write_embeddings(m, sink)
    with pytest.raises(TruncatedFile):
        read_embeddings(io.BytesIO(sink.getvalue() + b"\x00"))


def test_validate_rejects_shape_mismatch():
    bad = EmbeddingMatrix("m", 3, ["d1"], np.zeros((1, 2), dtype=np.float32))
    with pytest.raises(DimMismatch):
        write_embeddings(bad, io.BytesIO())


def test_validate_rejects_nan():
    bad = matrix_of("m", ["d1"], [[np.nan, 0.0]])
    with pytest.raises(ValueError):
        write_embeddings(bad, io.BytesIO())


def test_unicode_doc_ids_round_trip():
    m = matrix_of("m", ["déjà-vu", "文档"], [[0.5, -0.5], [1.5, 2.5]])
    sink = io.BytesIO()
    write_embeddings(m, sink)
    assert read_embeddings(io.BytesIO(sink.getvalue()), model_id="m") == m


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=20),
    dim=st.integers(min_value=1, max_value=32),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_round_trip_is_bit_exact(n, dim, seed):
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((n, dim)).astype(np.float32)
    m = matrix_of("m", [f"d{i}" for i in range(n)], rows)
    sink = io.BytesIO()
    write_embeddings(m, sink)
    back = read_embeddings(io.BytesIO(sink.getvalue()), model_id="m")
    assert back.vectors.tobytes() == m.vectors.tobytes()
    assert back == m
