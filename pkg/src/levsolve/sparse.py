"""Immutable CSR sparse matrices and the kernels every other module builds on.

The solvers access matrices row-wise (rows ``a_i``) and need fast transpose
products, so compressed sparse row is the only storage format. Matrices are
validated on construction and never mutated afterwards; all scalars are
float64 (the inner-accuracy constants used elsewhere underflow in 32-bit).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

_USE_NUMBA = os.environ.get("LEVSOLVE_NO_NUMBA", "") != "1"
if _USE_NUMBA:
    try:
        import numba
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _USE_NUMBA = False

if not _USE_NUMBA:  # pragma: no cover - exercised via LEVSOLVE_NO_NUMBA
    def njit(*args, **kwargs):
        def wrap(f):
            return f
        if args and callable(args[0]):
            return args[0]
        return wrap


def numba_enabled() -> bool:
    """True when the compiled kernels are active (LEVSOLVE_NO_NUMBA unset)."""
    return _USE_NUMBA


@dataclass(frozen=True)
class SparseMatrix:
    """Immutable CSR matrix.

    Invariants (enforced by the constructor):
      - row_ptr is nondecreasing, has length n_rows+1, ends at nnz;
      - column indices are strictly increasing within each row and < n_cols;
      - no explicitly stored zeros;
      - max_row_nnz is the maximum number of stored entries in any row.
    """

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    max_row_nnz: int = field(default=-1)

    def __post_init__(self):
        row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "row_ptr", row_ptr)
        object.__setattr__(self, "col_idx", col_idx)
        object.__setattr__(self, "values", values)
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        if row_ptr.shape != (self.n_rows + 1,):
            raise ValueError(
                f"row_ptr has length {row_ptr.shape[0]}, expected n_rows+1 = {self.n_rows + 1}"
            )
        if row_ptr[0] != 0 or row_ptr[-1] != col_idx.shape[0]:
            raise ValueError("row_ptr must start at 0 and end at nnz")
        if col_idx.shape != values.shape:
            raise ValueError("col_idx and values must have equal length")
        counts = np.diff(row_ptr)
        if np.any(counts < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if col_idx.size:
            if col_idx.min() < 0 or col_idx.max() >= self.n_cols:
                raise ValueError("column index out of range")
            # strictly increasing within each row: every adjacent pair either
            # crosses a row boundary or increases
            same_row = np.repeat(np.arange(self.n_rows), counts)
            bad = (np.diff(col_idx) <= 0) & (same_row[1:] == same_row[:-1])
            if np.any(bad):
                raise ValueError("column indices must be strictly increasing within each row")
            if np.any(values == 0.0):
                raise ValueError("explicitly stored zero values are not allowed")
        if not np.all(np.isfinite(values)):
            raise ValueError("matrix values must be finite")
        object.__setattr__(self, "max_row_nnz", int(counts.max()) if self.n_rows else 0)

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    @property
    def shape(self) -> tuple:
        return (self.n_rows, self.n_cols)

    def row(self, i: int) -> tuple:
        """Return (col_idx, values) views of row i."""
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_ptr))
        out[rows, self.col_idx] = self.values
        return out


def from_coo(n_rows, n_cols, rows, cols, vals) -> SparseMatrix:
    """Build a SparseMatrix from coordinate triplets.

    Duplicate (row, col) entries are summed; entries that are (or sum to)
    exactly zero are dropped.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    if not (rows.shape == cols.shape == vals.shape):
        raise ValueError("rows, cols, vals must have equal length")
    if rows.size:
        if rows.min() < 0 or rows.max() >= n_rows:
            raise ValueError("row index out of range")
        if cols.min() < 0 or cols.max() >= n_cols:
            raise ValueError("column index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        # sum duplicates: group boundaries where (row, col) changes
        new_group = np.empty(rows.size, dtype=bool)
        new_group[0] = True
        new_group[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        group_id = np.cumsum(new_group) - 1
        summed = np.bincount(group_id, weights=vals)
        rows = rows[new_group]
        cols = cols[new_group]
        vals = summed
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(row_ptr, rows + 1, 1)
    row_ptr = np.cumsum(row_ptr)
    return SparseMatrix(n_rows, n_cols, row_ptr, cols, vals)


def from_dense(a) -> SparseMatrix:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("expected a 2-D array")
    rows, cols = np.nonzero(a)
    return from_coo(a.shape[0], a.shape[1], rows, cols, a[rows, cols])


def identity(d: int, scale: float = 1.0) -> SparseMatrix:
    idx = np.arange(d, dtype=np.int64)
    if scale == 0.0:
        return from_coo(d, d, [], [], [])
    return SparseMatrix(d, d, np.arange(d + 1, dtype=np.int64), idx,
                        np.full(d, float(scale)))


def vstack(top: SparseMatrix, bottom: SparseMatrix) -> SparseMatrix:
    """Stack two CSR matrices vertically (shared column count)."""
    if top.n_cols != bottom.n_cols:
        raise ValueError(f"column counts differ: {top.n_cols} vs {bottom.n_cols}")
    row_ptr = np.concatenate([top.row_ptr, top.nnz + bottom.row_ptr[1:]])
    return SparseMatrix(
        top.n_rows + bottom.n_rows, top.n_cols, row_ptr,
        np.concatenate([top.col_idx, bottom.col_idx]),
        np.concatenate([top.values, bottom.values]),
    )


def take_rows(A: SparseMatrix, indices, row_scale=None) -> SparseMatrix:
    """Extract rows `indices` (in order), optionally scaling row i by row_scale[i]."""
    indices = np.asarray(indices, dtype=np.int64)
    counts = np.diff(A.row_ptr)[indices]
    row_ptr = np.zeros(indices.size + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    starts = A.row_ptr[indices]
    # gather index ranges
    gather = np.repeat(starts - row_ptr[:-1], counts) + np.arange(row_ptr[-1])
    vals = A.values[gather]
    if row_scale is not None:
        vals = vals * np.repeat(np.asarray(row_scale, dtype=np.float64), counts)
    return SparseMatrix(indices.size, A.n_cols, row_ptr, A.col_idx[gather], vals)


# ---------------------------------------------------------------------------
# kernels

@njit(cache=True)
def _matvec_csr(row_ptr, col_idx, values, x, out):  # pragma: no cover - compiled
    for i in range(out.shape[0]):
        acc = 0.0
        for k in range(row_ptr[i], row_ptr[i + 1]):
            acc += values[k] * x[col_idx[k]]
        out[i] = acc


@njit(cache=True)
def _matvec_t_csr(row_ptr, col_idx, values, y, out):  # pragma: no cover - compiled
    for i in range(y.shape[0]):
        yi = y[i]
        if yi != 0.0:
            for k in range(row_ptr[i], row_ptr[i + 1]):
                out[col_idx[k]] += values[k] * yi


def matvec(A: SparseMatrix, x) -> np.ndarray:
    """Compute A @ x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.n_cols,):
        raise ValueError(f"x has shape {x.shape}, expected ({A.n_cols},)")
    out = np.empty(A.n_rows)
    if _USE_NUMBA:
        _matvec_csr(A.row_ptr, A.col_idx, A.values, x, out)
        return out
    prod = A.values * x[A.col_idx]
    csum = np.concatenate([[0.0], np.cumsum(prod)])
    return csum[A.row_ptr[1:]] - csum[A.row_ptr[:-1]]


def matvec_t(A: SparseMatrix, y) -> np.ndarray:
    """Compute A.T @ y."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (A.n_rows,):
        raise ValueError(f"y has shape {y.shape}, expected ({A.n_rows},)")
    if _USE_NUMBA:
        out = np.zeros(A.n_cols)
        _matvec_t_csr(A.row_ptr, A.col_idx, A.values, y, out)
        return out
    y_per_entry = np.repeat(y, np.diff(A.row_ptr))
    return np.bincount(A.col_idx, weights=A.values * y_per_entry,
                       minlength=A.n_cols).astype(np.float64)


def row_norms(A: SparseMatrix) -> np.ndarray:
    """Euclidean norm of each row."""
    sq = A.values * A.values
    csum = np.concatenate([[0.0], np.cumsum(sq)])
    return np.sqrt(csum[A.row_ptr[1:]] - csum[A.row_ptr[:-1]])


def row_norms_sq(A: SparseMatrix) -> np.ndarray:
    sq = A.values * A.values
    csum = np.concatenate([[0.0], np.cumsum(sq)])
    return csum[A.row_ptr[1:]] - csum[A.row_ptr[:-1]]


def gram(A: SparseMatrix) -> np.ndarray:
    """Dense A.T @ A (desk-scale oracle helper)."""
    dense = A.to_dense()
    return dense.T @ dense


# ---------------------------------------------------------------------------
# file formats

class MatrixMarketError(ValueError):
    """Parse error with file/line/column location."""

    def __init__(self, path, line, col, message):
        self.path = path
        self.line = line
        self.col = col
        super().__init__(f"{path}:{line}:{col}: {message}")


def read_matrix_market(path) -> SparseMatrix:
    """Read a Matrix Market coordinate file (real, general) into CSR.

    Duplicate entries are summed. Only the 'coordinate real general' flavor is
    accepted; symmetric or complex files raise MatrixMarketError.
    """
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError(path, 1, 1, "empty file")
    header = lines[0].split()
    if len(header) < 4 or header[0] not in ("%%MatrixMarket", "%MatrixMarket"):
        raise MatrixMarketError(path, 1, 1, "missing %%MatrixMarket header")
    want = ["matrix", "coordinate", "real", "general"]
    got = [tok.lower() for tok in header[1:5]]
    if got != want:
        raise MatrixMarketError(
            path, 1, len(header[0]) + 2,
            f"unsupported format {' '.join(header[1:])!r}; "
            f"only 'matrix coordinate real general' is supported")
    lineno = 1
    size_line = None
    for lineno, text in enumerate(lines[1:], start=2):
        stripped = text.strip()
        if not stripped or stripped.startswith("%"):
            continue
        size_line = (lineno, stripped)
        break
    if size_line is None:
        raise MatrixMarketError(path, len(lines), 1, "missing size line")
    lineno, text = size_line
    parts = text.split()
    if len(parts) != 3:
        raise MatrixMarketError(path, lineno, 1, "size line must be 'rows cols nnz'")
    try:
        n_rows, n_cols, nnz = (int(p) for p in parts)
    except ValueError:
        raise MatrixMarketError(path, lineno, 1, f"non-integer size entry in {text!r}") from None
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    count = 0
    for entry_lineno, text in enumerate(lines[lineno:], start=lineno + 1):
        stripped = text.strip()
        if not stripped or stripped.startswith("%"):
            continue
        if count >= nnz:
            raise MatrixMarketError(path, entry_lineno, 1,
                                    f"more than the declared {nnz} entries")
        parts = stripped.split()
        if len(parts) != 3:
            raise MatrixMarketError(path, entry_lineno, 1,
                                    "entry line must be 'row col value'")
        try:
            i = int(parts[0])
        except ValueError:
            raise MatrixMarketError(path, entry_lineno, text.index(parts[0]) + 1,
                                    f"bad row index {parts[0]!r}") from None
        try:
            j = int(parts[1])
        except ValueError:
            raise MatrixMarketError(path, entry_lineno, text.index(parts[1]) + 1,
                                    f"bad column index {parts[1]!r}") from None
        try:
            v = float(parts[2])
        except ValueError:
            raise MatrixMarketError(path, entry_lineno, text.index(parts[2]) + 1,
                                    f"bad value {parts[2]!r}") from None
        if not (1 <= i <= n_rows):
            raise MatrixMarketError(path, entry_lineno, 1,
                                    f"row index {i} outside 1..{n_rows}")
        if not (1 <= j <= n_cols):
            raise MatrixMarketError(path, entry_lineno, 1,
                                    f"column index {j} outside 1..{n_cols}")
        rows[count] = i - 1
        cols[count] = j - 1
        vals[count] = v
        count += 1
    if count != nnz:
        raise MatrixMarketError(path, len(lines), 1,
                                f"declared {nnz} entries but found {count}")
    return from_coo(n_rows, n_cols, rows, cols, vals)


def write_matrix_market(path, A: SparseMatrix) -> None:
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.n_rows} {A.n_cols} {A.nnz}\n")
        rows = np.repeat(np.arange(A.n_rows), np.diff(A.row_ptr))
        for i, j, v in zip(rows, A.col_idx, A.values):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def read_vector(path) -> np.ndarray:
    """Read a one-value-per-line text vector."""
    out = []
    with open(path, "r") as fh:
        for lineno, text in enumerate(fh, start=1):
            stripped = text.strip()
            if not stripped or stripped.startswith("%"):
                continue
            try:
                out.append(float(stripped))
            except ValueError:
                raise MatrixMarketError(path, lineno, 1,
                                        f"bad vector entry {stripped!r}") from None
    return np.asarray(out, dtype=np.float64)


def write_vector(path, x) -> None:
    with open(path, "w") as fh:
        for v in np.asarray(x, dtype=np.float64):
            fh.write(f"{float(v)!r}\n")
