"""Deterministic synthetic instance families for tests and benchmarks.

Three families stress different terms of the sampled-solver cost:

- ``gaussian``: incoherent rows, mild condition number (orthonormal when
  n == d).
- ``ill-conditioned``: a d-row block carrying an exact log-spaced spectrum
  with condition number ~kappa_target, padded by very light sparse rows so
  the row-norm sum grows with n while the spectrum stays pinned.
- ``coherent-rows``: rows owning exclusive columns, whose leverage is
  exactly 1 -- any sampler must keep them.

Every family is a pure function of (n, d, kappa_target, seed).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError
from .sparse import SparseMatrix, from_coo, from_dense, matvec

KINDS = ("gaussian", "ill-conditioned", "coherent-rows")

# light padding rows perturb each Gram eigenvalue by at most
# (n - d) * LIGHT_BUDGET * lambda_min in total
_LIGHT_BUDGET = 0.02
_LIGHT_NNZ = 3


def _gaussian(n: int, d: int, rng) -> SparseMatrix:
    g = rng.standard_normal((n, d))
    if n == d:
        q, r = np.linalg.qr(g)
        # fix signs so the factor is unique given the draw
        q = q * np.sign(np.diag(r))
        return from_dense(q)
    return from_dense(g / (math.sqrt(n) + math.sqrt(d)))


def _light_rows(n_light: int, d: int, norm_each: float, rng):
    """COO triplets for sparse rows of fixed Euclidean norm."""
    rows, cols, vals = [], [], []
    for i in range(n_light):
        nnz = min(_LIGHT_NNZ, d)
        chosen = rng.choice(d, size=nnz, replace=False)
        raw = rng.standard_normal(nnz)
        while float(np.linalg.norm(raw)) == 0.0:
            raw = rng.standard_normal(nnz)
        raw *= norm_each / float(np.linalg.norm(raw))
        rows.extend([i] * nnz)
        cols.extend(int(c) for c in chosen)
        vals.extend(float(v) for v in raw)
    return rows, cols, vals


def _ill_conditioned(n: int, d: int, kappa_target: float, rng) -> SparseMatrix:
    if kappa_target < 1.0:
        raise ConfigurationError(
            f"kappa_target must be >= 1, got {kappa_target}")
    if d < 2 and kappa_target > 1.0:
        raise ConfigurationError(
            "need d >= 2 to realize a condition number above 1")
    # singular values log-spaced so kappa(A^T A) = kappa_target
    s = np.logspace(0.0, -0.5 * math.log10(kappa_target), num=d) \
        if kappa_target > 1.0 else np.ones(d)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    spike = s[:, None] * q.T  # row j is s_j * v_j^T
    n_light = n - d
    if n_light == 0:
        return from_dense(spike)
    # keep the total light-row energy below _LIGHT_BUDGET * lambda_min so the
    # oracle condition number stays within a few percent of the target
    norm_each = float(s[-1]) * math.sqrt(_LIGHT_BUDGET / n_light)
    rows, cols, vals = _light_rows(n_light, d, norm_each, rng)
    rows = [ri + d for ri in rows]
    top_rows, top_cols = np.nonzero(spike)
    rows = list(top_rows) + rows
    cols = list(top_cols) + cols
    vals = list(spike[top_rows, top_cols]) + vals
    return from_coo(n, d, rows, cols, vals)


def _coherent_rows(n: int, d: int, rng) -> SparseMatrix:
    """Planted exclusive-column rows (leverage exactly 1) + covered bulk.

    Three blocks: p tiny rows each owning a private column (leverage 1, so
    any sampler must keep them and lambda_min is set by their small scale);
    d - p unit rows covering the remaining columns; and n - p - (d - p)
    very light sparse rows inside that covered span, whose leverage is tiny.
    Leverage mass is therefore concentrated on the first d rows while the
    row count (and the row-norm sum) grows with n.
    """
    if d < 2:
        raise ConfigurationError("coherent-rows needs d >= 2")
    if n < d + 1:
        raise ConfigurationError(
            f"coherent-rows needs n >= d + 1, got n = {n}, d = {d}")
    n_planted = max(1, min(d - 1, d // 4 + 1, n - d))
    planted_scale = 0.01
    rows = list(range(n_planted))
    cols = list(range(n_planted))
    vals = [planted_scale] * n_planted
    d_cov = d - n_planted
    for j in range(d_cov):
        rows.append(n_planted + j)
        cols.append(n_planted + j)
        vals.append(1.0)
    n_bulk = n - n_planted - d_cov
    if n_bulk > 0:
        # total bulk energy = 1% of the covered block's, so bulk leverage
        # stays ~0.01*d_cov/n_bulk per row
        norm_each = math.sqrt(0.01 * d_cov / n_bulk)
        br, bc, bv = _light_rows(n_bulk, d_cov, norm_each, rng)
        rows.extend(ri + n_planted + d_cov for ri in br)
        cols.extend(ci + n_planted for ci in bc)
        vals.extend(bv)
    return from_coo(n, d, rows, cols, vals)


def generate(kind: str, n: int, d: int, kappa_target: float = 1.0,
             seed: int = 0):
    """Build a deterministic synthetic instance; returns (A, rhs).

    The rhs is A x# + 0.01*noise for a unit-scale planted x#, so regression
    residuals are nonzero but small.
    """
    n = int(n)
    d = int(d)
    if d < 1:
        raise ConfigurationError(f"d must be >= 1, got {d}")
    if n < d:
        raise ConfigurationError(f"n = {n} < d = {d}")
    if kind not in KINDS:
        raise ConfigurationError(
            f"unknown kind {kind!r}; expected one of {KINDS}")
    rng = np.random.default_rng(int(seed))
    if kind == "gaussian":
        A = _gaussian(n, d, rng)
    elif kind == "ill-conditioned":
        A = _ill_conditioned(n, d, float(kappa_target), rng)
    else:
        A = _coherent_rows(n, d, rng)
    x_sharp = rng.standard_normal(d) / math.sqrt(d)
    rhs = matvec(A, x_sharp) + 0.01 * rng.standard_normal(n)
    return A, rhs
