"""Matrix Market and raw-binary matrix files, plain-text eigenvalue lists.

Raw-binary layout (little-endian)::

    magic   4 bytes  b"BSLC"
    version uint32   1
    rows    uint64
    cols    uint64
    complex uint32   0 = float64 entries, 1 = complex128 entries
    pad     uint32   0
    data    rows*cols entries, column-major
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .linalg import DenseHermitian, NotHermitianError

MAGIC = b"BSLC"
_HEADER = struct.Struct("<4sIQQII")


class MatrixFormatError(ValueError):
    """Malformed matrix file; ``line`` is 1-based when known."""

    def __init__(self, msg, line=None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


def write_raw(path, M):
    M = np.asarray(M)
    if M.ndim == 1:
        M = M[:, None]
    cplx = np.iscomplexobj(M)
    data = np.asfortranarray(M, dtype=np.complex128 if cplx else np.float64)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, 1, M.shape[0], M.shape[1], int(cplx), 0))
        f.write(data.astype("<c16" if cplx else "<f8").tobytes(order="F"))


def read_raw(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise MatrixFormatError("file too short for raw header")
    magic, version, rows, cols, cplx, _ = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise MatrixFormatError(f"bad magic {magic!r}")
    if version != 1:
        raise MatrixFormatError(f"unsupported raw version {version}")
    dtype = np.dtype("<c16" if cplx else "<f8")
    body = raw[_HEADER.size :]
    if len(body) != rows * cols * dtype.itemsize:
        raise MatrixFormatError(f"expected {rows * cols} entries, file holds {len(body) // dtype.itemsize}")
    return np.frombuffer(body, dtype=dtype).reshape((rows, cols), order="F").astype(dtype.newbyteorder("="))


def _parse_numbers(tokens, field, lineno):
    try:
        vals = [float(t) for t in tokens]
    except ValueError as exc:
        raise MatrixFormatError(f"not a number: {exc}", lineno) from None
    if field == "complex":
        if len(vals) != 2:
            raise MatrixFormatError("complex entry needs real and imaginary parts", lineno)
        return complex(vals[0], vals[1])
    if len(vals) != 1:
        raise MatrixFormatError(f"expected one value, got {len(vals)}", lineno)
    return vals[0]


def read_matrix_market(path):
    """Parse a Matrix Market file into a dense array.

    Symmetric/Hermitian files are mirrored from the stored triangle;
    ``general`` files are returned as stored.
    """
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].lower().startswith("%%matrixmarket"):
        raise MatrixFormatError("missing %%MatrixMarket banner", 1)
    parts = lines[0].lower().split()
    if len(parts) != 5 or parts[1] != "matrix":
        raise MatrixFormatError("banner must be '%%MatrixMarket matrix <format> <field> <symmetry>'", 1)
    fmt, field, sym = parts[2:]
    if fmt not in ("coordinate", "array"):
        raise MatrixFormatError(f"unknown format {fmt!r}", 1)
    if field not in ("real", "integer", "double", "complex", "pattern"):
        raise MatrixFormatError(f"unknown field {field!r}", 1)
    if sym not in ("general", "symmetric", "hermitian", "skew-symmetric"):
        raise MatrixFormatError(f"unknown symmetry {sym!r}", 1)
    if sym == "skew-symmetric":
        raise NotHermitianError("skew-symmetric matrices are not Hermitian")
    if field == "pattern" and fmt == "array":
        raise MatrixFormatError("pattern field requires coordinate format", 1)

    body = [(i + 1, ln) for i, ln in enumerate(lines[1:], start=1) if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise MatrixFormatError("missing size line", len(lines))
    lineno, size_line = body[0]
    try:
        size = [int(t) for t in size_line.split()]
    except ValueError:
        raise MatrixFormatError("size line must hold integers", lineno) from None
    dtype = np.complex128 if field == "complex" else np.float64

    if fmt == "coordinate":
        if len(size) != 3:
            raise MatrixFormatError("coordinate size line needs rows cols nnz", lineno)
        rows, cols, nnz = size
        M = np.zeros((rows, cols), dtype=dtype)
        entries = body[1:]
        if len(entries) != nnz:
            raise MatrixFormatError(f"header promises {nnz} entries, found {len(entries)}", entries[-1][0] if entries else lineno)
        for ln, text in entries:
            tok = text.split()
            if len(tok) < 2:
                raise MatrixFormatError("entry needs row and column indices", ln)
            try:
                i, j = int(tok[0]) - 1, int(tok[1]) - 1
            except ValueError:
                raise MatrixFormatError("row/column indices must be integers", ln) from None
            if not (0 <= i < rows and 0 <= j < cols):
                raise MatrixFormatError(f"index ({i + 1}, {j + 1}) out of range", ln)
            v = 1.0 if field == "pattern" else _parse_numbers(tok[2:], field, ln)
            M[i, j] = v
            if sym != "general" and i != j:
                # either triangle may be stored; mirror onto the other
                M[j, i] = np.conj(v) if sym == "hermitian" else v
    else:
        if len(size) != 2:
            raise MatrixFormatError("array size line needs rows cols", lineno)
        rows, cols = size
        vals = [(ln, _parse_numbers(text.split(), field, ln)) for ln, text in body[1:]]
        M = np.zeros((rows, cols), dtype=dtype)
        if sym == "general":
            if len(vals) != rows * cols:
                raise MatrixFormatError(f"expected {rows * cols} values, found {len(vals)}", body[-1][0])
            M[...] = np.array([v for _, v in vals], dtype=dtype).reshape((rows, cols), order="F")
        else:
            if rows != cols:
                raise MatrixFormatError("symmetric array storage needs a square matrix", lineno)
            need = rows * (rows + 1) // 2
            if len(vals) != need:
                raise MatrixFormatError(f"expected {need} values, found {len(vals)}", body[-1][0])
            it = iter(v for _, v in vals)
            for j in range(cols):
                for i in range(j, rows):
                    v = next(it)
                    M[i, j] = v
                    M[j, i] = np.conj(v) if sym == "hermitian" else v
    return M


def write_matrix_market(path, M, symmetry=None):
    """Write a dense matrix in coordinate format (lower triangle when symmetric)."""
    M = np.asarray(M)
    cplx = np.iscomplexobj(M)
    if symmetry is None:
        symmetry = "hermitian" if cplx else "symmetric"
    field = "complex" if cplx else "real"
    entries = []
    for j in range(M.shape[1]):
        for i in range(M.shape[0]):
            if symmetry != "general" and i < j:
                continue
            v = M[i, j]
            if v != 0:
                entries.append((i, j, v))
    with open(path, "w") as f:
        f.write(f"%%MatrixMarket matrix coordinate {field} {symmetry}\n")
        f.write(f"{M.shape[0]} {M.shape[1]} {len(entries)}\n")
        for i, j, v in entries:
            if cplx:
                f.write(f"{i + 1} {j + 1} {float(v.real)!r} {float(v.imag)!r}\n")
            else:
                f.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def detect_format(path):
    with open(path, "rb") as f:
        head = f.read(14)
    if head.startswith(MAGIC):
        return "raw-binary"
    if head.lower().startswith(b"%%matrixmarket"):
        return "matrix-market"
    raise MatrixFormatError(f"cannot tell the format of {path}")


def load_matrix(path, format=None):
    """Load a Hermitian matrix from Matrix Market or raw-binary storage."""
    fmt = format or detect_format(path)
    if fmt == "matrix-market":
        M = read_matrix_market(path)
    elif fmt == "raw-binary":
        M = read_raw(path)
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")
    if M.shape[0] != M.shape[1]:
        raise NotHermitianError(f"matrix is not square: {M.shape}")
    return DenseHermitian(M, is_real=not np.iscomplexobj(M))


def write_values(path, values):
    with open(path, "w") as f:
        for v in values:
            f.write(f"{float(v)!r}\n")


def read_values(path):
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            try:
                out.append(float(s))
            except ValueError:
                raise MatrixFormatError(f"not a number: {s!r}", lineno) from None
    return np.array(out)
