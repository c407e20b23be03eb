import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bandslice.io import (
    MatrixFormatError,
    detect_format,
    load_matrix,
    read_matrix_market,
    read_raw,
    read_values,
    write_matrix_market,
    write_raw,
    write_values,
)
from bandslice.linalg import NotHermitianError, random_hermitian


def _write(tmp_path, text, name="m.mtx"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_coordinate_symmetric_lower(tmp_path):
    p = _write(
        tmp_path,
        "%%MatrixMarket matrix coordinate real symmetric\n% comment\n3 3 4\n1 1 2.0\n2 1 -1\n2 2 2\n3 3 5e-1\n",
    )
    A = load_matrix(p)
    assert A.is_real
    assert np.array_equal(A.data, [[2, -1, 0], [-1, 2, 0], [0, 0, 0.5]])


def test_coordinate_symmetric_upper_triangle(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 2 3.0\n2 2 1\n")
    assert np.array_equal(load_matrix(p).data, [[0, 3], [3, 1]])


def test_coordinate_hermitian(tmp_path):
    p = _write(
        tmp_path,
        "%%MatrixMarket matrix coordinate complex hermitian\n2 2 3\n1 1 1 0\n2 1 0 1\n2 2 3 0\n",
    )
    A = load_matrix(p)
    assert not A.is_real
    assert A.data[0, 1] == -1j and A.data[1, 0] == 1j


def test_coordinate_pattern_and_integer(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate pattern symmetric\n2 2 1\n2 1\n")
    assert np.array_equal(read_matrix_market(p), [[0, 1], [1, 0]])
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate integer general\n2 2 2\n1 1 4\n2 2 7\n", "i.mtx")
    assert np.array_equal(load_matrix(p).data, np.diag([4.0, 7.0]))


def test_array_general_and_symmetric(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix array real general\n2 2\n1\n2\n2\n5\n")
    assert np.array_equal(load_matrix(p).data, [[1, 2], [2, 5]])
    p = _write(tmp_path, "%%MatrixMarket matrix array real symmetric\n2 2\n1\n2\n5\n", "s.mtx")
    assert np.array_equal(load_matrix(p).data, [[1, 2], [2, 5]])


def test_general_nonsymmetric_rejected(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 1.0\n")
    with pytest.raises(NotHermitianError):
        load_matrix(p)


def test_skew_and_nonsquare_rejected(tmp_path):
    p = _write(tmp_path, "%%MatrixMarket matrix coordinate real skew-symmetric\n2 2 1\n2 1 1.0\n")
    with pytest.raises(NotHermitianError):
        load_matrix(p)
    p = _write(tmp_path, "%%MatrixMarket matrix array real general\n1 2\n1\n2\n", "r.mtx")
    with pytest.raises(NotHermitianError):
        load_matrix(p)


@pytest.mark.parametrize(
    "text,line",
    [
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 1.0\n", 3),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", 3),
        ("%%MatrixMarket matrix coordinate real general\n% c\n2 2 2\n1 1 1.0\n", 4),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n", 3),
        ("%%MatrixMarket matrix coordinate complex hermitian\n2 2 1\n1 1 1.0\n", 3),
        ("%%MatrixMarket matrix coordinate real general\n2 two 1\n", 2),
        ("%%MatrixMarket matrix sparse real general\n2 2 0\n", 1),
        ("hello\n", 1),
    ],
)
def test_parse_errors_report_line(tmp_path, text, line):
    p = _write(tmp_path, text)
    with pytest.raises(MatrixFormatError) as info:
        read_matrix_market(p)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


@given(st.integers(1, 12), st.integers(0, 1000), st.booleans())
def test_matrix_market_round_trip(n, seed, real):
    A = random_hermitian(n, seed=seed, is_real=real)
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "a.mtx"
        write_matrix_market(p, A.data)
        assert detect_format(p) == "matrix-market"
        B = load_matrix(p)
    assert np.array_equal(A.data, B.data)


@given(st.integers(1, 9), st.integers(1, 9), st.booleans(), st.integers(0, 1000))
def test_raw_round_trip(rows, cols, cplx, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((rows, cols))
    if cplx:
        M = M + 1j * rng.standard_normal((rows, cols))
    with tempfile.TemporaryDirectory() as d:
        p = Path(d) / "m.bin"
        write_raw(p, M)
        assert detect_format(p) == "raw-binary"
        back = read_raw(p)
    assert back.dtype == M.dtype and np.array_equal(back, M)


def test_raw_layout_is_column_major(tmp_path):
    p = tmp_path / "m.bin"
    write_raw(p, np.array([[1.0, 2.0], [3.0, 4.0]]))
    body = np.frombuffer(p.read_bytes()[32:], dtype="<f8")
    assert list(body) == [1.0, 3.0, 2.0, 4.0]


def test_raw_errors(tmp_path):
    p = tmp_path / "m.bin"
    p.write_bytes(b"BSLC")
    with pytest.raises(MatrixFormatError, match="too short"):
        read_raw(p)
    write_raw(p, np.eye(2))
    data = p.read_bytes()
    p.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(MatrixFormatError, match="magic"):
        read_raw(p)
    p.write_bytes(data[:-8])
    with pytest.raises(MatrixFormatError, match="entries"):
        read_raw(p)


def test_raw_hermitian_load(tmp_path):
    p = tmp_path / "m.bin"
    A = random_hermitian(5, seed=1)
    write_raw(p, A.data)
    assert np.array_equal(load_matrix(p).data, A.data)
    write_raw(p, np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotHermitianError):
        load_matrix(p)


def test_unknown_format(tmp_path):
    p = tmp_path / "x"
    p.write_text("nope")
    with pytest.raises(MatrixFormatError):
        detect_format(p)


def test_values_round_trip(tmp_path):
    p = tmp_path / "v.txt"
    v = np.array([-1.5, 0.1, 1e-300, 2.0 / 3.0])
    write_values(p, v)
    assert np.array_equal(read_values(p), v)
    p.write_text("1.0\n# note\n\n2.0  # trailing\nbad\n")
    with pytest.raises(MatrixFormatError) as info:
        read_values(p)
    assert info.value.line == 5
