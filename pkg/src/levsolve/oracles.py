"""Dense brute-force oracles for desk-scale verification.

These ship with the library (not test-only code) so the CLI's verify mode can
assert every bracketed invariant at runtime. They are all O(n d^2) or worse
and intended for d up to a few hundred.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import SparseMatrix, matvec, matvec_t


class RankDeficientError(np.linalg.LinAlgError):
    """The matrix does not have full column rank at the oracle's tolerance."""


@dataclass(frozen=True)
class RegressionProblem:
    """Least-squares instance: minimize 0.5*||A x - b||^2."""

    A: SparseMatrix
    b: np.ndarray

    def __post_init__(self):
        b = np.ascontiguousarray(self.b, dtype=np.float64)
        object.__setattr__(self, "b", b)
        if b.shape != (self.A.n_rows,):
            raise ValueError(f"b has shape {b.shape}, expected ({self.A.n_rows},)")

    def value(self, x) -> float:
        r = matvec(self.A, x) - self.b
        return 0.5 * float(r @ r)

    def gradient(self, x) -> np.ndarray:
        return matvec_t(self.A, matvec(self.A, x) - self.b)


@dataclass(frozen=True)
class SpectralBounds:
    """Extreme eigenvalues of A.T A plus the derived condition numbers."""

    lambda_min: float
    lambda_max: float
    kappa: float
    kappa_sum: float

    def __post_init__(self):
        if not (0.0 < self.lambda_min <= self.lambda_max):
            raise ValueError("need 0 < lambda_min <= lambda_max")
        if self.kappa < 1.0 - 1e-12:
            raise ValueError("kappa must be >= 1")
        if self.kappa_sum < self.kappa - 1e-9 * self.kappa:
            # trace >= lambda_max always, so kappa_sum >= kappa
            raise ValueError("kappa_sum must be >= kappa")


def _gram_cholesky(A: SparseMatrix) -> np.ndarray:
    """Cholesky factor of A.T A with a pivot-based rank check."""
    dense = A.to_dense()
    G = dense.T @ dense
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientError(f"A.T A is not positive definite: {exc}") from exc
    # numpy's cholesky can succeed on barely-PSD matrices; enforce the pivot floor
    if np.min(np.diag(L)) ** 2 <= 1e-12 * np.trace(G):
        raise RankDeficientError(
            "A.T A factorization pivot below 1e-12 * trace; matrix is rank deficient")
    return L


def oracle_solve(problem: RegressionProblem) -> np.ndarray:
    """Exact minimizer of 0.5*||A x - b||^2 via dense normal equations.

    Raises RankDeficientError when a Cholesky pivot of A.T A falls below
    1e-12 * trace(A.T A).
    """
    L = _gram_cholesky(problem.A)
    rhs = matvec_t(problem.A, problem.b)
    z = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, z)


def oracle_leverage(A: SparseMatrix) -> np.ndarray:
    """Exact leverage scores sigma_i = a_i^T (A^T A)^+ a_i via dense pseudo-inverse."""
    dense = A.to_dense()
    G_pinv = np.linalg.pinv(dense.T @ dense, hermitian=True)
    return np.einsum("ij,jk,ik->i", dense, G_pinv, dense)


def oracle_spectral(A: SparseMatrix) -> SpectralBounds:
    """Exact spectral bounds of A.T A by dense symmetric eigendecomposition.

    Raises RankDeficientError when lambda_min <= 1e-12 * lambda_max.
    """
    dense = A.to_dense()
    G = dense.T @ dense
    eigs = np.linalg.eigvalsh(G)
    lam_min, lam_max = float(eigs[0]), float(eigs[-1])
    if lam_min <= 1e-12 * lam_max:
        raise RankDeficientError(
            f"lambda_min={lam_min:.3e} <= 1e-12 * lambda_max={lam_max:.3e}")
    return SpectralBounds(
        lambda_min=lam_min,
        lambda_max=lam_max,
        kappa=lam_max / lam_min,
        kappa_sum=float(np.trace(G)) / lam_min,
    )


def power_iteration_lambda_max(A: SparseMatrix, iters: int = 200,
                               rtol: float = 1e-4, seed: int = 0):
    """Estimate lambda_max(A.T A) by power iteration on the Gram operator.

    Deterministic for a fixed seed; stops early once successive Rayleigh
    quotients agree to rtol. Returns ``(estimate, iterations_used)`` so the
    caller can charge the matvec work honestly. Callers wanting an
    overestimate multiply by a safety factor themselves.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.n_cols)
    v /= np.linalg.norm(v)
    lam = 0.0
    for t in range(1, iters + 1):
        w = matvec_t(A, matvec(A, v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, t
        lam_new = float(v @ w)
        v = w / nw
        if lam > 0.0 and abs(lam_new - lam) <= rtol * lam_new:
            return lam_new, t
        lam = lam_new
    return lam, iters
