"""Ridge-homotopy master solver and probability-boosting wrappers.

``solve`` drives the full pipeline: estimate lambda_max(A^T A) by power
iteration, start a ridge weight eta just above it (there the scaled row
norms ||a_i||^2/eta are already valid leverage overestimates of the
augmented matrix [A; sqrt(eta)*I]), and shrink eta by 3/4 per phase. Each
phase re-estimates the leverage scores of the current augmented matrix with
Gaussian probe regressions solved directly in the ridge dual, doubles the
bracketed estimate into a safe overestimate, and — once eta has dropped to
lambda_min/10 — hands the overestimate for the plain rows to the sampled
preconditioner solver for the actual least-squares solve on A.

``reduction_boost`` and ``markov_boost`` convert expected-work randomized
solvers into high-probability ones: the former chains best-of-k improvement
steps and accepts a chain only when a distorted gap estimator at least
halves, the latter reruns a budgeted procedure and keeps the minimum-value
iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .counters import WorkCounter
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DegenerateProblemError,
    NumericError,
    PreconditionerQualityError,
    SamplingFailureError,
)
from .leverage import (
    DEFAULT_SAMPLE_K,
    LeverageVector,
    compute_ls,
    make_ridge_probe_solver,
    plan_jl_config,
    solve_using_ls,
    verify_overestimate_bracket,
)
from .sparse import SparseMatrix, identity, matvec, matvec_t, row_norms, row_norms_sq, vstack

# Probe-count constant for the per-phase estimates. Phases only need the
# two-sided bracket at delta = 1/4, where c = 6 keeps the per-row failure
# rate of the chi^2 mean concentration below ~1e-6 per phase; the much
# larger standalone default guards the tighter delta = 0.25 all-rows test.
PIPELINE_JL_C = 6.0

_ETA_SHRINK = 0.75
_ETA_EXIT_FRACTION = 0.1  # loop continues while eta > lambda_min/10
_LAMBDA_MAX_SAFETY = 1.05
_FINAL_SOLVE_ATTEMPTS = 3


@dataclass(frozen=True)
class AugmentedView:
    """Logical [A; sqrt(eta) * I] without materializing the identity rows.

    Duck-compatible with SparseMatrix consumers that only need n_rows,
    n_cols, matvec and row_norms (compute_ls scoring).
    """

    base: SparseMatrix
    eta: float

    def __post_init__(self):
        if not (self.eta > 0.0 and math.isfinite(self.eta)):
            raise ConfigurationError(f"eta must be positive, got {self.eta}")

    @property
    def n_rows(self) -> int:
        return self.base.n_rows + self.base.n_cols

    @property
    def n_cols(self) -> int:
        return self.base.n_cols

    def matvec(self, x) -> np.ndarray:
        top = matvec(self.base, x)
        return np.concatenate([top, math.sqrt(self.eta) * np.asarray(x, dtype=np.float64)])

    def row_norms(self) -> np.ndarray:
        tail = np.full(self.base.n_cols, math.sqrt(self.eta))
        return np.concatenate([row_norms(self.base), tail])

    def row_norms_sq(self) -> np.ndarray:
        tail = np.full(self.base.n_cols, self.eta)
        return np.concatenate([row_norms_sq(self.base), tail])

    def to_sparse(self) -> SparseMatrix:
        """Materialize the augmentation (verification / testing only)."""
        return vstack(self.base, identity(self.base.n_cols, math.sqrt(self.eta)))


@dataclass(frozen=True)
class HomotopyState:
    """One phase of the ridge schedule: weight, overestimates, view."""

    eta: float
    u: LeverageVector
    A_eta: AugmentedView

    def __post_init__(self):
        if len(self.u) != self.A_eta.n_rows:
            raise ConfigurationError(
                f"u has {len(self.u)} entries, augmented matrix has "
                f"{self.A_eta.n_rows} rows")


def initial_state(A: SparseMatrix, eta: float) -> HomotopyState:
    """Bootstrap state at eta >= lambda_max: u_i = ||a_i||^2/eta, identity rows 1.

    At eta >= lambda_max(A^T A) these satisfy sigma_i <= u_i <= 2*sigma_i for
    the augmented matrix (its Gram matrix is sandwiched between eta*I and
    2*eta*I), so they are genuine overestimates.
    """
    head = row_norms_sq(A) / float(eta)
    tail = np.ones(A.n_cols)
    u = LeverageVector(values=np.concatenate([head, tail]), role="overestimate")
    return HomotopyState(eta=float(eta), u=u, A_eta=AugmentedView(A, float(eta)))


@dataclass
class SolverReport:
    """Work summary of one master-solver run (JSON-serializable)."""

    phases: int
    eta_schedule: list
    coordinate_updates_total: float
    sampled_rows_per_phase: list
    final_gap_estimate: float
    clamp_flags: list
    seed: int = -1

    def as_dict(self) -> dict:
        return {
            "phases": int(self.phases),
            "eta_schedule": [float(e) for e in self.eta_schedule],
            "coordinate_updates_total": float(self.coordinate_updates_total),
            "sampled_rows_per_phase": [int(s) for s in self.sampled_rows_per_phase],
            "final_gap_estimate": float(self.final_gap_estimate),
            "clamp_flags": list(self.clamp_flags),
            "seed": int(self.seed),
        }


def solve(A: SparseMatrix, b, x0, epsilon, rng, *, lambda_min=None,
          mode="fast", jl_c=PIPELINE_JL_C, sample_delta=0.1,
          sample_k=DEFAULT_SAMPLE_K, work: WorkCounter | None = None,
          report_seed: int = -1):
    """Solve min_x 0.5*||Ax - b||^2 to relative gap epsilon via the ridge schedule.

    Returns ``(x, SolverReport)`` where f(x) - f* <= epsilon * (f(x0) - f*)
    with high probability. A lambda_min(A^T A) lower bound must be available:
    pass ``lambda_min=`` explicitly, or use ``mode="verify"`` to let the dense
    oracle supply it (and to assert the per-phase leverage bracket).
    Underestimating lambda_min only adds phases.

    Raises ConfigurationError when no lambda_min bound is available, and
    propagates sampling / convergence failures after the final solve's retry
    budget is exhausted.
    """
    if work is None:
        work = WorkCounter()
    b = np.ascontiguousarray(b, dtype=np.float64)
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    n, d = A.n_rows, A.n_cols
    if b.shape != (n,):
        raise ConfigurationError(f"b has shape {b.shape}, expected ({n},)")
    if x0.shape != (d,):
        raise ConfigurationError(f"x0 has shape {x0.shape}, expected ({d},)")
    if not (0.0 < epsilon < 1.0):
        raise ConfigurationError(f"epsilon must be in (0, 1), got {epsilon}")

    if lambda_min is None:
        if mode == "verify":
            from .oracles import oracle_spectral

            lambda_min = oracle_spectral(A).lambda_min
        else:
            raise ConfigurationError(
                "a lambda_min(A^T A) lower bound is required: pass lambda_min= "
                "or run in mode='verify' to use the dense oracle")
    lambda_min = float(lambda_min)
    if not (lambda_min > 0.0 and math.isfinite(lambda_min)):
        raise ConfigurationError(f"lambda_min must be positive, got {lambda_min}")

    updates_at_entry = work.coordinate_updates
    from .oracles import power_iteration_lambda_max

    lam_hat, pit_iters = power_iteration_lambda_max(A, seed=int(rng.integers(2**31)))
    work.add_updates(2.0 * pit_iters * n)  # one matvec + one transpose matvec per iteration
    if lam_hat <= 0.0:
        raise DegenerateProblemError("A^T A has no positive eigenvalue (A is zero)")
    eta = _LAMBDA_MAX_SAFETY * lam_hat
    threshold = _ETA_EXIT_FRACTION * lambda_min
    if eta <= threshold:
        # A Rayleigh quotient can never fall below lambda_min, so this only
        # guards a caller-supplied lambda_min far above the true value.
        eta = threshold / _ETA_SHRINK

    state = initial_state(A, eta)
    eta_schedule: list = []
    sampled_per_phase: list = []
    u = state.u
    while eta > threshold:
        view = AugmentedView(A, eta)
        kappa_hint = (_LAMBDA_MAX_SAFETY * lam_hat + eta) / eta
        cfg = plan_jl_config(view.n_rows, view.n_cols, 0.25, kappa_hint,
                             c=jl_c, mode=mode, work=work)
        solver = make_ridge_probe_solver(A, eta)
        est = compute_ls(view, 0.25, solver, cfg, rng, work=work)
        u = LeverageVector(values=2.0 * est.values, role="overestimate")
        if mode == "verify":
            verify_overestimate_bracket(view.to_sparse(), u)
        state = HomotopyState(eta=eta, u=u, A_eta=view)
        eta_schedule.append(eta)
        sampled_per_phase.append(0)  # phases solve probes in the ridge dual directly
        eta *= _ETA_SHRINK

    u_final = LeverageVector(values=u.values[:n], role="overestimate")
    x = None
    last_err = None
    sampled_final = 0
    for _attempt in range(_FINAL_SOLVE_ATTEMPTS):
        sampled_before = work.sampled_rows
        try:
            x = solve_using_ls(A, u_final, b, x0, epsilon, rng,
                               lambda_lb=lambda_min, sample_delta=sample_delta,
                               sample_k=sample_k, mode=mode, work=work)
            sampled_final = work.sampled_rows - sampled_before
            break
        except (ConvergenceError, SamplingFailureError,
                PreconditionerQualityError) as exc:
            last_err = exc
    if x is None:
        raise last_err
    eta_schedule.append(0.0)
    sampled_per_phase.append(sampled_final)

    grad = matvec_t(A, matvec(A, x) - b)
    work.add_updates(float(n))
    gap_estimate = float(grad @ grad) / (2.0 * lambda_min)

    report = SolverReport(
        phases=len(eta_schedule) - 1,
        eta_schedule=eta_schedule,
        coordinate_updates_total=work.coordinate_updates - updates_at_entry,
        sampled_rows_per_phase=sampled_per_phase,
        final_gap_estimate=gap_estimate,
        clamp_flags=list(work.clamp_flags),
        seed=report_seed,
    )
    return x, report


@dataclass
class ReductionConfig:
    """Sizing for reduction_boost.

    c is the per-step gap contraction of the base algorithm, delta_fail its
    per-call failure probability, and r the estimator distortion
    (m/r <= gap <= r*m). T and repeats_per_step are derived when omitted:
    T = ceil(log_{1/c}(2 r^2)) chain steps make a successful chain shrink the
    estimate below half, and repeats_per_step = ceil(log_{1/delta_fail}(2 T))
    keeps the whole chain's failure probability below 1/2.
    """

    c: float
    delta_fail: float
    r: float
    T: int | None = None
    repeats_per_step: int | None = None

    def __post_init__(self):
        if not (0.0 < self.c < 1.0):
            raise ConfigurationError(f"c must be in (0, 1), got {self.c}")
        if not (0.0 < self.delta_fail < 1.0):
            raise ConfigurationError(
                f"delta_fail must be in (0, 1), got {self.delta_fail}")
        if self.r < 1.0:
            raise ConfigurationError(f"r must be >= 1, got {self.r}")
        t_real = math.log(2.0 * self.r * self.r) / math.log(1.0 / self.c)
        if self.T is None:
            self.T = max(1, math.ceil(t_real))
        if self.repeats_per_step is None:
            self.repeats_per_step = max(
                1, math.ceil(math.log(2.0 * max(t_real, 1.0))
                             / math.log(1.0 / self.delta_fail)))
        if self.T < 1 or self.repeats_per_step < 1:
            raise ConfigurationError("T and repeats_per_step must be >= 1")


@dataclass
class ReductionStats:
    """Optional counters filled by reduction_boost (Monte Carlo tests)."""

    passes_run: int = 0
    passes_accepted: int = 0
    base_calls: int = 0


def _checked_estimate(estimator, x) -> float:
    m = float(estimator(x))
    if not math.isfinite(m) or m < 0.0:
        raise NumericError(f"gap estimator returned {m}; expected a finite value >= 0")
    return m


def reduction_boost(F, x0, base_alg, estimator, cfg: ReductionConfig, epsilon,
                    *, rng=None, stats: ReductionStats | None = None) -> np.ndarray:
    """Drive a randomized improvement step to relative gap epsilon, certified.

    F(x) evaluates the objective; base_alg(x, rng) returns an improved
    iterate (contracting the gap by cfg.c with probability >= 1 -
    cfg.delta_fail); estimator(x) returns m with m/r <= F(x) - F* <= r*m.
    Each pass chains cfg.T best-of-repeats steps and is accepted when the
    estimate at least halves; the run stops once m <= (epsilon/r^2) * m0,
    which certifies F(x) - F* <= epsilon * (F(x0) - F*). Returns the
    best-objective iterate seen (never worse than x0).

    Raises NumericError if the estimator goes negative and ConvergenceError
    (carrying the best iterate) if the pass budget is exhausted.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if not (0.0 < epsilon < 1.0):
        raise ConfigurationError(f"epsilon must be in (0, 1), got {epsilon}")
    x = np.ascontiguousarray(x0, dtype=np.float64).copy()
    best_x = x.copy()
    best_f = float(F(x))
    m0 = _checked_estimate(estimator, x)
    if m0 <= 0.0:
        return best_x
    target = (epsilon / (cfg.r * cfg.r)) * m0
    halvings = max(1, math.ceil(math.log2(max(cfg.r * cfg.r / epsilon, 2.0))))
    pass_cap = 8 * halvings + 16
    m_cur = m0
    for _pass in range(pass_cap):
        if m_cur <= target:
            return best_x
        x_chain = x
        for _t in range(cfg.T):
            best_cand = None
            best_val = math.inf
            for _j in range(cfg.repeats_per_step):
                cand = base_alg(x_chain, rng)
                val = float(F(cand))
                if stats is not None:
                    stats.base_calls += 1
                # strict comparison: ties keep the earliest candidate
                if val < best_val:
                    best_val = val
                    best_cand = cand
            x_chain = best_cand
            if best_val < best_f:
                best_f = best_val
                best_x = np.ascontiguousarray(x_chain, dtype=np.float64).copy()
        m_end = _checked_estimate(estimator, x_chain)
        if stats is not None:
            stats.passes_run += 1
        if m_end <= 0.5 * m_cur:
            x = x_chain
            m_cur = m_end
            if stats is not None:
                stats.passes_accepted += 1
    if m_cur <= target:
        return best_x
    raise ConvergenceError(
        f"estimate ratio {m_cur / m0:.3e} did not reach {epsilon / (cfg.r * cfg.r):.3e} "
        f"within {pass_cap} passes", best=best_x)


def markov_boost(proc, epsilon, gamma, rng) -> np.ndarray:
    """Boost an expected-work procedure to success probability >= 1 - gamma.

    ``proc(eps_half, budget_factor, seed) -> (x, value, ok)`` must run the
    underlying method at accuracy eps_half with budget_factor times its
    expected work and report whether it certified within budget. By Markov's
    inequality a 2x budget succeeds with probability >= 1/2, so up to
    ceil(log2(1/gamma)) repeats drive the failure rate below gamma. Returns
    the minimum-value iterate across attempts; if every attempt misses its
    budget, raises ConvergenceError carrying the best iterate.
    """
    if not (0.0 < gamma < 1.0):
        raise ConfigurationError(f"gamma must be in (0, 1), got {gamma}")
    repeats = max(1, math.ceil(math.log2(1.0 / gamma)))
    best_x = None
    best_val = math.inf
    for _t in range(repeats):
        seed = int(rng.integers(0, 2**63 - 1))
        x, val, ok = proc(epsilon / 2.0, 2.0, seed)
        val = float(val)
        if best_x is None or val < best_val:
            best_val = val
            best_x = x
        if ok:
            return best_x
    raise ConvergenceError(
        f"all {repeats} budgeted attempts failed to certify", best=best_x)
