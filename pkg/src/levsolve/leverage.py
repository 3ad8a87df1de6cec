"""Leverage-score row sampling, the sampled-preconditioner solver, and
JL-probe leverage estimation.

The pipeline: ``compute_ls`` estimates leverage scores with k Gaussian
probes whose regression solutions expose row-projection norms;
``sample_rows`` turns overestimates u into a spectral sparsifier by keeping
row i with probability p_i = min(1, k'*u_i*ln n) and rescaling kept rows by
1/sqrt(p_i); ``solve_using_ls`` solves least squares in A by sampling a
sparsifier and running the preconditioned outer iteration in it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import sparse
from .counters import WorkCounter
from .errors import ConfigurationError, InvariantViolation, SamplingFailureError
from .kernels import csr_arrays
from .sparse import SparseMatrix, matvec, matvec_t, take_rows

# The "sufficiently large" analysis constants, pinned by the acceptance tests.
# DEFAULT_SAMPLE_K scales the inclusion probabilities (k' = k / delta^2);
# DEFAULT_JL_C scales the probe count k_probes = ceil(c * delta^-2 * ln n).
DEFAULT_SAMPLE_K = 8.0
DEFAULT_JL_C = 48.0
# epsilon_inner floors: below these, a relative gap is 64-bit noise
EPS_INNER_FLOOR_FAST = 1e-10
EPS_INNER_FLOOR_PAPER = 1e-12

_ROLES = ("exact", "overestimate", "bracketed-estimate")


@dataclass(frozen=True)
class LeverageVector:
    """Leverage scores or estimates thereof, tagged with their role."""

    values: np.ndarray
    role: str

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if self.role not in _ROLES:
            raise ConfigurationError(
                f"role must be one of {_ROLES}, got {self.role!r}")
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError("leverage values must be finite")
        if np.any(vals < 0.0):
            raise ConfigurationError("leverage values must be nonnegative")
        if self.role == "exact" and np.any(vals > 1.0 + 1e-9):
            raise ConfigurationError("exact leverage scores cannot exceed 1")

    def __len__(self):
        return int(self.values.shape[0])


@dataclass(frozen=True)
class SamplingPlan:
    """Row inclusion probabilities p_i = min(1, k'*u_i*ln n)."""

    p: np.ndarray
    k_prime: float
    delta: float

    def __post_init__(self):
        p = np.ascontiguousarray(self.p, dtype=np.float64)
        object.__setattr__(self, "p", p)
        if not (0.0 < self.delta < 0.5):
            raise ConfigurationError(f"delta must be in (0, 1/2), got {self.delta}")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ConfigurationError("inclusion probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class SampledMatrix:
    """A sparsifier: rows a_i/sqrt(p_i) for each kept row i."""

    B: SparseMatrix
    kept_rows: np.ndarray
    plan: SamplingPlan


@dataclass(frozen=True)
class JlConfig:
    """Probe-count and inner-accuracy settings for compute_ls.

    k is the number of Gaussian probes; epsilon_inner the relative accuracy
    of each probe solve; kappa_hint an upper estimate of kappa(A^T A) used in
    the additive terms (overestimating kappa only tightens the tolerance).
    """

    k: int
    epsilon_inner: float
    delta: float
    c: float
    kappa_hint: float

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError(f"probe count k must be >= 1, got {self.k}")
        if not (0.0 < self.epsilon_inner < 1.0):
            raise ConfigurationError(
                f"epsilon_inner must be in (0, 1), got {self.epsilon_inner}")
        if not (0.0 < self.delta < 0.5):
            raise ConfigurationError(f"delta must be in (0, 1/2), got {self.delta}")
        if self.kappa_hint < 1.0:
            raise ConfigurationError(
                f"kappa_hint must be >= 1, got {self.kappa_hint}")


def plan_jl_config(n_rows, n_cols, delta, kappa_hint, c=DEFAULT_JL_C,
                   mode="fast", work: WorkCounter | None = None) -> JlConfig:
    """Size the probe count and inner tolerance for a matrix shape.

    k = ceil(c * delta^-2 * ln n). The inner tolerance follows
    delta^2 / (18 * n * d * ln n * kappa)^2, clamped at a floating-point
    floor (1e-10 fast, 1e-12 paper-faithful); clamping is flagged on `work`.
    """
    if n_rows < 2:
        raise ConfigurationError("need at least 2 rows to size probes")
    log_n = math.log(n_rows)
    k = int(math.ceil(c * delta ** -2 * log_n))
    raw = delta ** 2 / (18.0 * n_rows * n_cols * log_n * kappa_hint) ** 2
    floor = EPS_INNER_FLOOR_PAPER if mode == "paper-faithful" else EPS_INNER_FLOOR_FAST
    eps_inner = raw
    if raw < floor:
        eps_inner = floor
        if work is not None:
            work.flag("jl_epsilon_inner_clamped")
    return JlConfig(k=k, epsilon_inner=eps_inner, delta=float(delta),
                    c=float(c), kappa_hint=float(kappa_hint))


def _apply(A, x):
    """Matrix-vector product for SparseMatrix or any duck-typed view."""
    if isinstance(A, SparseMatrix):
        return matvec(A, x)
    return A.matvec(x)


def _row_norms(A):
    if isinstance(A, SparseMatrix):
        return sparse.row_norms(A)
    return A.row_norms()


def sample_rows(A: SparseMatrix, u: LeverageVector, delta, rng, *,
                k=DEFAULT_SAMPLE_K, work: WorkCounter | None = None) -> SampledMatrix:
    """Draw a spectral sparsifier using leverage overestimates u.

    Each row is kept independently with p_i = min(1, k'*u_i*ln n),
    k' = k/delta^2, and scaled by 1/sqrt(p_i). The draw repeats until the
    acceptance test sum ||b_i|| <= 2 * sum sqrt(k'*u_i*ln n)*||a_i|| passes
    (expected <= 2 rounds); more than 64*ln n rounds raises
    SamplingFailureError.
    """
    if u.role not in ("overestimate", "bracketed-estimate"):
        raise ConfigurationError(
            f"u.role must be 'overestimate' or 'bracketed-estimate', got {u.role!r}")
    if not (0.0 < delta < 0.5):
        raise ConfigurationError(f"delta must be in (0, 1/2), got {delta}")
    n = A.n_rows
    if len(u) != n:
        raise ConfigurationError(
            f"u has {len(u)} entries, matrix has {n} rows")
    if n < 2:
        raise ConfigurationError("need at least 2 rows to sample")
    uv = u.values
    norms = sparse.row_norms(A)
    zero_weight = uv == 0.0
    if np.any(zero_weight & (norms > 0.0)):
        warnings.warn(
            "rows with u_i = 0 but nonzero entries are excluded from sampling",
            RuntimeWarning, stacklevel=2)
    log_n = math.log(n)
    k_prime = float(k) / float(delta) ** 2
    p = np.minimum(1.0, k_prime * uv * log_n)
    plan = SamplingPlan(p=p, k_prime=k_prime, delta=float(delta))
    # Markov acceptance threshold: twice the expectation upper bound
    threshold = 2.0 * float(np.sqrt(k_prime * uv * log_n) @ norms)
    max_attempts = max(1, math.ceil(64.0 * log_n))
    for _attempt in range(max_attempts):
        keep = rng.random(n) < p
        kept = np.nonzero(keep)[0]
        if work is not None:
            work.resample_rounds += 1
        if kept.size == 0:
            continue
        total = float(np.sum(norms[kept] / np.sqrt(p[kept])))
        if total <= threshold:
            B = take_rows(A, kept, 1.0 / np.sqrt(p[kept]))
            if work is not None:
                work.sampled_rows += int(kept.size)
            return SampledMatrix(B=B, kept_rows=kept, plan=plan)
    raise SamplingFailureError(
        f"row sampling failed its acceptance test {max_attempts} times; "
        "the supplied leverage overestimates are likely invalid")


def solve_using_ls(A: SparseMatrix, u: LeverageVector, b, x0, epsilon, rng, *,
                   lambda_lb, sample_delta=0.1, sample_k=DEFAULT_SAMPLE_K,
                   mode="fast", work: WorkCounter | None = None,
                   trace: list | None = None) -> np.ndarray:
    """Solve min 0.5*||Ax - b||^2 by sampling a sparsifier preconditioner.

    u must satisfy sigma_i(A) <= u_i <= 4*sigma_i(A) + 1/(n*kappa) (asserted
    against dense oracles only in verify mode). Internally samples at
    delta = 1/10 and delegates to the preconditioned outer iteration.
    """
    from .dualreg import make_pair, preconditioned_solve

    if mode == "verify":
        verify_overestimate_bracket(A, u)
    if work is None:
        work = WorkCounter()
    sampled = sample_rows(A, u, sample_delta, rng, k=sample_k, work=work)
    pair = make_pair(A, sampled.B, float(lambda_lb))
    return preconditioned_solve(pair, b, x0, epsilon, rng,
                                lambda_lb=float(lambda_lb), mode=mode,
                                work=work, trace=trace)


def verify_overestimate_bracket(A: SparseMatrix, u: LeverageVector) -> None:
    """Dense check of sigma_i <= u_i <= 4*sigma_i + 1/(n*kappa) (verify mode)."""
    from .oracles import oracle_leverage, oracle_spectral

    sigma = oracle_leverage(A)
    bounds = oracle_spectral(A)
    slack = 1.0 / (A.n_rows * bounds.kappa)
    uv = u.values
    lo_bad = np.nonzero(uv < sigma * (1.0 - 1e-9))[0]
    if lo_bad.size:
        i = int(lo_bad[0])
        raise InvariantViolation(
            "leverage-overestimate-lower", f"u_i = {uv[i]} < sigma_i = {sigma[i]}", i)
    hi_bad = np.nonzero(uv > 4.0 * sigma + slack + 1e-9)[0]
    if hi_bad.size:
        i = int(hi_bad[0])
        raise InvariantViolation(
            "leverage-overestimate-upper",
            f"u_i = {uv[i]} > 4*sigma_i + 1/(n*kappa) = {4.0 * sigma[i] + slack}", i)


def compute_ls(A, delta, solver, cfg: JlConfig, rng, *,
               work: WorkCounter | None = None) -> LeverageVector:
    """Estimate leverage scores of A with k Gaussian probes.

    `solver` is a regression handle: solver(V, epsilon_inner, seed) returns
    (Y, updates) where Y[:, j] approximately minimizes f_{A, V[:, j]} from
    start 0 to relative gap epsilon_inner. The score of row i is
    tau_i = (1/k) * sum_j (A Y[:, j])_i^2, and the returned estimate is
    tau/(1 - delta/3) + delta/(2*n*kappa), a bracketed estimate satisfying
    sigma_i <= out_i <= (1+delta)*sigma_i + delta/(n*kappa) w.h.p.

    A may be a SparseMatrix or any object with n_rows/n_cols/matvec.
    """
    n = A.n_rows
    if not (1.0 / n < delta < 0.5):
        raise ConfigurationError(
            f"delta must be in (1/n, 1/2) = ({1.0 / n}, 0.5), got {delta}")
    if cfg.k < 1:
        raise ConfigurationError(f"probe count must be >= 1, got {cfg.k}")
    if work is None:
        work = WorkCounter()
    V = rng.standard_normal((n, cfg.k))
    seed = int(rng.integers(0, 2**63 - 1))
    Y, updates = solver(V, cfg.epsilon_inner, seed)
    work.add_updates(updates)
    work.probe_solves += cfg.k
    tau = np.zeros(n)
    for j in range(cfg.k):
        proj = _apply(A, Y[:, j])
        tau += proj * proj
    tau /= cfg.k
    work.add_updates(cfg.k * n)  # scoring pass
    out = tau / (1.0 - delta / 3.0) + delta / (2.0 * n * cfg.kappa_hint)
    return LeverageVector(values=out, role="bracketed-estimate")


def make_dense_probe_solver(A: SparseMatrix):
    """Exact probe solver via a dense Cholesky of the Gram matrix.

    A valid (zero-gap) regression handle for compute_ls at desk scale; each
    probe is charged n coordinate updates.
    """
    from .oracles import RankDeficientError

    G = sparse.gram(A)
    try:
        chol = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientError(f"Gram matrix is singular: {exc}") from exc

    def solver(V, epsilon_inner, seed):
        rhs = np.column_stack([matvec_t(A, V[:, j]) for j in range(V.shape[1])])
        Y = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
        return Y, float(V.shape[1] * A.n_rows)

    return solver


def make_ridge_probe_solver(A: SparseMatrix, eta: float):
    """Probe solver for the logically augmented matrix [A; sqrt(eta)*I].

    Splits each probe v into its A-part and identity-part w, and solves
    0.5*||Ax - v||^2 + (eta/2)*||x - w/sqrt(eta)||^2 — exactly the
    least-squares problem on the augmented matrix — in one fused dual pass
    per probe batch.
    """
    from .kernels import probe_batch_solve

    csr = csr_arrays(A)
    n = A.n_rows

    def solver(V, epsilon_inner, seed):
        if V.shape[0] != n + A.n_cols:
            raise ConfigurationError(
                f"probe matrix has {V.shape[0]} rows, expected {n + A.n_cols}")
        X, updates, _ncert = probe_batch_solve(
            csr, V[:n, :], V[n:, :], eta, epsilon_inner, seed)
        return X, updates

    return solver
