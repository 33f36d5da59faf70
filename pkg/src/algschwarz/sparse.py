"""Sparse and dense matrix kernels.

``CsrMatrix`` is a small immutable CSR container that every other module
consumes.  Heavy lifting (products, fancy indexing) is delegated to
:mod:`scipy.sparse`; the container owns validation, the symmetry flag and
Matrix Market ingestion.  Dense blocks are plain ``numpy.ndarray`` objects.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

SYMMETRY_RTOL = 1e-12


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input.  ``lineno`` is 1-based (0 if unknown)."""

    def __init__(self, message: str, lineno: int = 0, path: str | None = None):
        self.lineno = lineno
        self.path = path
        where = f"{path or '<input>'}:{lineno}" if lineno else (path or "<input>")
        super().__init__(f"{where}: {message}")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Immutable compressed-sparse-row matrix of float64 values.

    Column indices are strictly increasing within each row.  ``symmetric`` is
    set only when the matrix passed :meth:`check_symmetric` (or was declared
    symmetric in a Matrix Market header and mirrored).
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    symmetric: bool = False
    _scipy: sps.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        offsets = np.asarray(self.row_offsets, dtype=np.int64)
        cols = np.asarray(self.col_indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if offsets.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if offsets[0] != 0 or offsets[-1] != cols.size or cols.size != vals.size:
            raise ValueError("row_offsets inconsistent with stored entries")
        if np.any(np.diff(offsets) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if cols.size:
            if cols.min() < 0 or cols.max() >= self.n_cols:
                raise ValueError("column index out of range")
            row_of = np.repeat(np.arange(self.n_rows), np.diff(offsets))
            same_row = row_of[1:] == row_of[:-1]
            if np.any(np.diff(cols)[same_row] <= 0):
                raise ValueError("column indices must be strictly increasing within each row")
        object.__setattr__(self, "row_offsets", _readonly(offsets))
        object.__setattr__(self, "col_indices", _readonly(cols))
        object.__setattr__(self, "values", _readonly(vals))
        mat = sps.csr_matrix((vals, cols, offsets), shape=(self.n_rows, self.n_cols))
        object.__setattr__(self, "_scipy", mat)

    @classmethod
    def from_scipy(cls, mat, symmetric: bool | None = None) -> "CsrMatrix":
        """Build from any scipy sparse matrix.  Duplicates are summed, explicit
        zeros kept.  ``symmetric=None`` runs the symmetry test."""
        csr = sps.csr_matrix(mat, dtype=np.float64, copy=True)
        csr.sum_duplicates()
        csr.sort_indices()
        out = cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)
        if symmetric is None:
            symmetric = out.check_symmetric()
        if symmetric:
            object.__setattr__(out, "symmetric", True)
        return out

    @classmethod
    def from_dense(cls, a, symmetric: bool | None = None) -> "CsrMatrix":
        a = np.asarray(a, dtype=np.float64)
        return cls.from_scipy(sps.csr_matrix(a), symmetric=symmetric)

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        return cls.from_scipy(sps.identity(n, format="csr"), symmetric=True)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def to_scipy(self) -> sps.csr_matrix:
        """The backing scipy matrix.  Callers must not mutate it."""
        return self._scipy

    def toarray(self) -> np.ndarray:
        return self._scipy.toarray()

    def diagonal(self) -> np.ndarray:
        return self._scipy.diagonal()

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def check_symmetric(self, rtol: float = SYMMETRY_RTOL) -> bool:
        """Structural symmetry plus ``|a_ij - a_ji| <= rtol * max|a|``."""
        if self.n_rows != self.n_cols:
            return False
        pattern = sps.csr_matrix(
            (np.ones(self.nnz), self.col_indices, self.row_offsets), shape=self.shape
        )
        diff = pattern - pattern.T.tocsr()
        diff.eliminate_zeros()
        if diff.nnz:
            return False
        if not self.nnz:
            return True
        delta = self._scipy - self._scipy.T.tocsr()
        worst = np.max(np.abs(delta.data)) if delta.nnz else 0.0
        return bool(worst <= rtol * self.max_abs())

    def __matmul__(self, x):
        return spmv(self, x)


class AdjacencyGraph:
    """Symmetric neighbour lists of a matrix pattern, self-loops removed."""

    def __init__(self, indptr: np.ndarray, indices: np.ndarray):
        self.indptr = _readonly(np.asarray(indptr, dtype=np.int64))
        self.indices = _readonly(np.asarray(indices, dtype=np.int64))
        self.n_vertices = self.indptr.size - 1
        self._adj = sps.csr_matrix(
            (np.ones(self.indices.size, dtype=np.int8), self.indices, self.indptr),
            shape=(self.n_vertices, self.n_vertices),
        )

    @classmethod
    def from_matrix(cls, a: CsrMatrix | sps.spmatrix) -> "AdjacencyGraph":
        """Graph of the stored pattern; explicit zeros count as edges."""
        mat = a.to_scipy() if isinstance(a, CsrMatrix) else sps.csr_matrix(a)
        n = mat.shape[0]
        if mat.shape[1] != n:
            raise ValueError("adjacency graph needs a square matrix")
        pat = sps.csr_matrix(
            (np.ones(mat.indices.size, dtype=np.int8), mat.indices, mat.indptr), shape=(n, n)
        )
        pat = (pat + pat.T).tocsr()
        pat.setdiag(0)
        pat.eliminate_zeros()
        pat.sort_indices()
        return cls(pat.indptr, pat.indices)

    @classmethod
    def from_edges(cls, n: int, edges) -> "AdjacencyGraph":
        edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        mat = sps.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
        return cls.from_matrix(mat.tocsr())

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def neighbors_of_set(self, vertices: np.ndarray) -> np.ndarray:
        """Sorted union of the neighbour lists of ``vertices``."""
        vertices = np.asarray(vertices, dtype=np.int64)
        if vertices.size == 0:
            return vertices
        return np.unique(self._adj[vertices].indices).astype(np.int64)

    def to_scipy(self) -> sps.csr_matrix:
        return self._adj


# -- Matrix Market ------------------------------------------------------------


def _parse_header(line: str, path):
    parts = line.strip().split()
    if len(parts) != 5 or parts[0] != "%%MatrixMarket" or parts[1].lower() != "matrix":
        raise MatrixMarketError("malformed header, expected '%%MatrixMarket matrix ...'", 1, path)
    fmt, fld, sym = (p.lower() for p in parts[2:])
    if fld != "real":
        raise MatrixMarketError(f"unsupported field '{fld}', only 'real' is accepted", 1, path)
    if sym not in ("general", "symmetric"):
        raise MatrixMarketError(f"unsupported symmetry '{sym}'", 1, path)
    return fmt, sym


def read_matrix_market(path: str | os.PathLike) -> CsrMatrix:
    """Read a real coordinate Matrix Market file into a :class:`CsrMatrix`.

    A ``symmetric`` header mirrors the stored triangle.  Duplicated entries
    are summed and explicit zeros are kept in the pattern.
    """
    path = os.fspath(path)
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError("empty file", 0, path)
    fmt, sym = _parse_header(lines[0], path)
    if fmt != "coordinate":
        raise MatrixMarketError("matrices must use the 'coordinate' format", 1, path)

    lineno = 1
    while lineno < len(lines) and (not lines[lineno].strip() or lines[lineno].lstrip().startswith("%")):
        lineno += 1
    if lineno >= len(lines):
        raise MatrixMarketError("missing size line", lineno, path)
    size = lines[lineno].split()
    try:
        n_rows, n_cols, nnz = (int(s) for s in size)
    except ValueError:
        raise MatrixMarketError("size line must hold three integers", lineno + 1, path) from None
    if n_rows <= 0 or n_cols <= 0 or nnz <= 0:
        raise MatrixMarketError("empty matrix", lineno + 1, path)
    if sym == "symmetric" and n_rows != n_cols:
        raise MatrixMarketError("symmetric matrix must be square", lineno + 1, path)

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    k = 0
    for idx in range(lineno + 1, len(lines)):
        text = lines[idx].strip()
        if not text or text.startswith("%"):
            continue
        if k >= nnz:
            raise MatrixMarketError(f"more than {nnz} entries", idx + 1, path)
        tok = text.split()
        if len(tok) != 3:
            raise MatrixMarketError("entry line must be 'row col value'", idx + 1, path)
        try:
            i, j, v = int(tok[0]), int(tok[1]), float(tok[2])
        except ValueError:
            raise MatrixMarketError(f"cannot parse entry '{text}'", idx + 1, path) from None
        if not (1 <= i <= n_rows and 1 <= j <= n_cols):
            raise MatrixMarketError(f"index ({i}, {j}) out of bounds", idx + 1, path)
        rows[k], cols[k], vals[k] = i - 1, j - 1, v
        k += 1
    if k != nnz:
        raise MatrixMarketError(f"expected {nnz} entries, found {k}", len(lines), path)

    if sym == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    coo = sps.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_cols))
    return CsrMatrix.from_scipy(coo.tocsr(), symmetric=True if sym == "symmetric" else None)


def write_matrix_market(a: CsrMatrix, path: str | os.PathLike, symmetric: bool | None = None) -> None:
    """Write ``a`` in coordinate format; symmetric matrices store the lower triangle."""
    symmetric = a.symmetric if symmetric is None else symmetric
    coo = a.to_scipy().tocoo()
    r, c, v = coo.row, coo.col, coo.data
    if symmetric:
        keep = r >= c
        r, c, v = r[keep], c[keep], v[keep]
    order = np.lexsort((r, c))
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate real {'symmetric' if symmetric else 'general'}\n")
        fh.write(f"{a.n_rows} {a.n_cols} {r.size}\n")
        for i, j, x in zip(r[order], c[order], v[order]):
            fh.write(f"{i + 1} {j + 1} {float(x)!r}\n")


def read_vector(path: str | os.PathLike) -> np.ndarray:
    """Read a vector from a Matrix Market ``array`` file or whitespace text."""
    path = os.fspath(path)
    with open(path) as fh:
        text = fh.read()
    lines = text.splitlines()
    if lines and lines[0].startswith("%%MatrixMarket"):
        fmt, _ = _parse_header(lines[0], path)
        if fmt != "array":
            raise MatrixMarketError("vectors must use the 'array' format", 1, path)
        body = [(i + 1, ln) for i, ln in enumerate(lines[1:], start=1) if ln.strip() and not ln.lstrip().startswith("%")]
        if not body:
            raise MatrixMarketError("missing size line", len(lines), path)
        lno, size = body[0]
        try:
            m, ncol = (int(s) for s in size.split())
        except ValueError:
            raise MatrixMarketError("size line must hold two integers", lno, path) from None
        if ncol != 1:
            raise MatrixMarketError("vector file must have one column", lno, path)
        vals = []
        for lno, ln in body[1:]:
            try:
                vals.append(float(ln.split()[0]))
            except ValueError:
                raise MatrixMarketError(f"cannot parse value '{ln.strip()}'", lno, path) from None
        if len(vals) != m:
            raise MatrixMarketError(f"expected {m} values, found {len(vals)}", len(lines), path)
        return np.asarray(vals, dtype=np.float64)
    try:
        vals = np.asarray(text.split(), dtype=np.float64)
    except ValueError as exc:
        raise MatrixMarketError(f"non-numeric token in vector file ({exc})", 0, path) from None
    if vals.size == 0:
        raise MatrixMarketError("empty vector", 0, path)
    return vals


# -- kernels ------------------------------------------------------------------


def spmv(a: CsrMatrix, x) -> np.ndarray:
    """Return ``a @ x`` for a vector (or a block of column vectors)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != a.n_cols:
        raise ValueError(f"dimension mismatch: matrix has {a.n_cols} columns, vector has {x.shape[0]} rows")
    return a.to_scipy() @ x


def _check_index_set(idx, bound: int, what: str) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= bound):
        raise IndexError(f"{what} index out of range [0, {bound})")
    if np.unique(idx).size != idx.size:
        raise ValueError(f"{what} index set has duplicates")
    return idx


def extract_submatrix(a: CsrMatrix, rows, cols, dense: bool = True):
    """``A(rows, cols)`` with the order of both index sets preserved."""
    rows = _check_index_set(rows, a.n_rows, "row")
    cols = _check_index_set(cols, a.n_cols, "column")
    sub = a.to_scipy()[rows][:, cols]
    if dense:
        return sub.toarray()
    return CsrMatrix.from_scipy(sub, symmetric=False)


def dense_svd(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Economic SVD ``x = U @ diag(s) @ V.T``.

    Returns ``(U, s, V)`` with V holding right singular vectors as columns.
    Each right singular vector is signed so its largest-magnitude entry is
    non-negative.  Falls back from ``gesdd`` to ``gesvd``; a second failure
    propagates.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("dense_svd expects a 2-d array")
    if x.size == 0:
        k = min(x.shape)
        return np.zeros((x.shape[0], k)), np.zeros(k), np.zeros((x.shape[1], k))
    try:
        u, s, vt = sla.svd(x, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        u, s, vt = sla.svd(x, full_matrices=False, lapack_driver="gesvd")
    v = vt.T
    pivot = np.argmax(np.abs(v), axis=0)
    flip = v[pivot, np.arange(v.shape[1])] < 0
    v[:, flip] *= -1.0
    u[:, flip] *= -1.0
    return u, s, v
