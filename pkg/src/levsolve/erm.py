"""Generalized ERM solver with variance-reduced leverage-weighted sampling.

The objective is F(x) = sum_i psi_i(a_i^T x) with per-row components whose
second derivative lies in [1/M, M]. One improvement step (``erm_solve_step``)
builds the variance-reduced reformulation around an anchor x0, samples
m = 80*(sum tau)*M^4 components by leverage-weighted importance, and solves
the sampled problem via the generalized dual coordinate-descent kernel
(``gen_acd_solve``), halving the gap with probability >= 1/2.
``erm_full_solve`` boosts the step to any target accuracy through
``reduction_boost`` with the gradient-norm gap estimator.

Conjugates are never hand-derived: (psi*)' is computed by safeguarded
quasi-Newton inversion of psi' (``conjugate_gradient_1d``), using only the
component's first derivative and curvature bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import sparse
from .counters import WorkCounter
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DegenerateProblemError,
    NumericError,
)
from .homotopy import PIPELINE_JL_C, ReductionConfig, ReductionStats, reduction_boost
from .kernels import PSI_LOGISTIC_AUG, PSI_QUADRATIC, csr_arrays, erm_dual_acd
from .leverage import LeverageVector, compute_ls, make_dense_probe_solver, plan_jl_config
from .sparse import SparseMatrix, matvec, matvec_t, take_rows

# Sampling-rate and budget constants of the variance-reduced step.
TAU_WEIGHT = 20.0          # tau_k = min(1, TAU_WEIGHT * u_k * ln d)
SAMPLE_FACTOR = 80.0       # m = ceil(SAMPLE_FACTOR * sum(tau) * M^4)
ACCEPT_FACTOR = 10.0       # row-norm acceptance threshold multiplier
INNER_TARGET_FACTOR = 512.0  # sampled problem solved to gap 1/(512 M^4)

_INNER_TOL = 1e-3          # per-prox-step dual accuracy inside gen_acd_solve
_ABS_FLOOR = 1e-14


def _sigmoid(s: float) -> float:
    if s >= 0.0:
        return 1.0 / (1.0 + math.exp(-s))
    e = math.exp(s)
    return e / (1.0 + e)


def _softplus(s: float) -> float:
    return math.log1p(math.exp(-abs(s))) + max(s, 0.0)


def _sigmoid_vec(s: np.ndarray) -> np.ndarray:
    out = np.empty_like(s)
    pos = s >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True)
class QuadraticComponent:
    """psi(t) = 0.5*(t - shift)^2 + linear*t; curvature identically 1."""

    shift: float = 0.0
    linear: float = 0.0

    def value(self, t: float) -> float:
        return 0.5 * (t - self.shift) ** 2 + self.linear * t

    def first_derivative(self, t: float) -> float:
        return (t - self.shift) + self.linear

    @property
    def curvature_bracket(self) -> tuple:
        return (1.0, 1.0)

    @property
    def kernel_kind(self) -> int:
        return PSI_QUADRATIC

    @property
    def kernel_shift(self) -> float:
        # 0.5*(t-shift)^2 + linear*t equals 0.5*(t-(shift-linear))^2 plus a
        # constant, so the kernel sees the combined shift
        return self.shift - self.linear


@dataclass(frozen=True)
class LogisticAugComponent:
    """psi(t) = 0.5*s^2 + log(1 + e^s) with s = t - shift; curvature in [1, 1.25]."""

    shift: float = 0.0

    def value(self, t: float) -> float:
        s = t - self.shift
        return 0.5 * s * s + _softplus(s)

    def first_derivative(self, t: float) -> float:
        s = t - self.shift
        return s + _sigmoid(s)

    @property
    def curvature_bracket(self) -> tuple:
        return (1.0, 1.25)

    @property
    def kernel_kind(self) -> int:
        return PSI_LOGISTIC_AUG

    @property
    def kernel_shift(self) -> float:
        return self.shift


@dataclass(frozen=True)
class ErmProblem:
    """F(x) = sum_i psi_i(a_i^T x) with curvature brackets inside [1/M, M]."""

    A: SparseMatrix
    components: tuple
    M: float

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.components) != self.A.n_rows:
            raise ConfigurationError(
                f"{len(self.components)} components for {self.A.n_rows} rows")
        if self.M < 1.0:
            raise ConfigurationError(f"M must be >= 1, got {self.M}")
        tol = 1e-9
        for i, comp in enumerate(self.components):
            lo, hi = comp.curvature_bracket
            if lo < 1.0 / self.M - tol or hi > self.M + tol:
                raise ConfigurationError(
                    f"component {i} curvature bracket [{lo}, {hi}] is outside "
                    f"[1/M, M] = [{1.0 / self.M}, {self.M}]")

    @property
    def n_rows(self) -> int:
        return self.A.n_rows

    @property
    def n_cols(self) -> int:
        return self.A.n_cols


def quadratic_problem(A: SparseMatrix, targets) -> ErmProblem:
    """F(x) = 0.5*||Ax - targets||^2 as an ErmProblem (M = 1)."""
    targets = np.asarray(targets, dtype=np.float64)
    comps = tuple(QuadraticComponent(shift=float(t)) for t in targets)
    return ErmProblem(A=A, components=comps, M=1.0)


def logistic_aug_problem(A: SparseMatrix, shifts=None) -> ErmProblem:
    """Components 0.5*(t-b)^2 + log(1+e^{t-b}) with M = 1.25."""
    if shifts is None:
        shifts = np.zeros(A.n_rows)
    shifts = np.asarray(shifts, dtype=np.float64)
    comps = tuple(LogisticAugComponent(shift=float(b)) for b in shifts)
    return ErmProblem(A=A, components=comps, M=1.25)


def _uniform_kind(components) -> tuple:
    """(kind, kernel_shift array) when all components share a kernel kind."""
    first = type(components[0])
    if not all(type(c) is first for c in components):
        raise ConfigurationError(
            "mixed component types are not supported by the dual kernel")
    kind = components[0].kernel_kind
    shift = np.array([c.kernel_shift for c in components], dtype=np.float64)
    return kind, shift


def _psi_prime_rows(components, t: np.ndarray) -> np.ndarray:
    """Vectorized psi'_i(t_i) with a generic per-row fallback."""
    first = type(components[0]) if components else None
    if first is QuadraticComponent and all(type(c) is QuadraticComponent for c in components):
        shift = np.array([c.shift for c in components])
        lin = np.array([c.linear for c in components])
        return (t - shift) + lin
    if first is LogisticAugComponent and all(type(c) is LogisticAugComponent for c in components):
        shift = np.array([c.shift for c in components])
        s = t - shift
        return s + _sigmoid_vec(s)
    return np.array([c.first_derivative(ti) for c, ti in zip(components, t)])


def _psi_value_rows(components, t: np.ndarray) -> np.ndarray:
    first = type(components[0]) if components else None
    if first is QuadraticComponent and all(type(c) is QuadraticComponent for c in components):
        shift = np.array([c.shift for c in components])
        lin = np.array([c.linear for c in components])
        return 0.5 * (t - shift) ** 2 + lin * t
    if first is LogisticAugComponent and all(type(c) is LogisticAugComponent for c in components):
        shift = np.array([c.shift for c in components])
        s = t - shift
        return 0.5 * s * s + np.logaddexp(0.0, s)
    return np.array([c.value(ti) for c, ti in zip(components, t)])


def erm_value_grad(P: ErmProblem, x, *, work: WorkCounter | None = None):
    """F(x) and grad F(x) = A^T [psi'_i(a_i^T x)]_i.

    Raises NumericError (with the row index) if any component value or
    derivative is non-finite.
    """
    x = np.asarray(x, dtype=np.float64)
    t = matvec(P.A, x)
    vals = _psi_value_rows(P.components, t)
    w = _psi_prime_rows(P.components, t)
    bad = ~(np.isfinite(vals) & np.isfinite(w))
    if np.any(bad):
        i = int(np.nonzero(bad)[0][0])
        raise NumericError(
            f"component value/derivative is non-finite at row {i} (t = {t[i]})",
            index=i)
    if work is not None:
        work.add_updates(P.A.n_rows)
    return float(vals.sum()), matvec_t(P.A, w)


@dataclass(frozen=True)
class VrComponents:
    """Variance-reduced reformulation around an anchor point.

    f~_k(x) = (1/p_k)*[psi_k(a_k^T x) - anchor_grads_k * a_k^T x]
              + full_grad^T x, and E_{k~p} f~_k = F exactly.
    """

    tau: np.ndarray
    p: np.ndarray
    anchor: np.ndarray
    anchor_grads: np.ndarray
    full_grad: np.ndarray
    m: int

    def __post_init__(self):
        for name in ("tau", "p", "anchor", "anchor_grads", "full_grad"):
            object.__setattr__(self, name,
                               np.ascontiguousarray(getattr(self, name),
                                                    dtype=np.float64))
        if abs(float(self.p.sum()) - 1.0) > 1e-12:
            raise ConfigurationError("sampling probabilities must sum to 1")
        if np.any((self.tau > 0.0) & (self.p <= 0.0)):
            raise ConfigurationError("p_k must be positive wherever tau_k > 0")
        if self.m < 1:
            raise ConfigurationError(f"sample count m must be >= 1, got {self.m}")


def build_vr(P: ErmProblem, x0, u: LeverageVector, *, tau_count=None,
             work: WorkCounter | None = None) -> VrComponents:
    """Sampling rates tau_k = min(1, 20*u_k*ln d), p = tau/sum, m = 80*(sum tau)*M^4.

    ``tau_count`` overrides the count whose logarithm scales tau (the column
    count by default). Raises DegenerateProblemError when every tau is zero.
    """
    if len(u) != P.A.n_rows:
        raise ConfigurationError(
            f"u has {len(u)} entries, matrix has {P.A.n_rows} rows")
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    count = P.A.n_cols if tau_count is None else int(tau_count)
    if count < 1:
        raise ConfigurationError(f"tau_count must be >= 1, got {count}")
    tau = np.minimum(1.0, TAU_WEIGHT * u.values * math.log(count))
    sum_tau = float(tau.sum())
    if sum_tau <= 0.0:
        raise DegenerateProblemError(
            "all sampling rates tau_k are zero; leverage overestimates (or "
            "the log factor) vanish")
    p = tau / sum_tau
    t0 = matvec(P.A, x0)
    anchor_grads = _psi_prime_rows(P.components, t0)
    full_grad = matvec_t(P.A, anchor_grads)
    if work is not None:
        work.add_updates(P.A.n_rows)
    m = int(math.ceil(SAMPLE_FACTOR * sum_tau * P.M ** 4))
    return VrComponents(tau=tau, p=p, anchor=x0, anchor_grads=anchor_grads,
                        full_grad=full_grad, m=m)


def _row_dot(A: SparseMatrix, k: int, x: np.ndarray) -> float:
    cols, vals = A.row(k)
    return float(vals @ x[cols])


def vr_component_value(P: ErmProblem, vr: VrComponents, k: int, x) -> float:
    """f~_k(x); only defined where p_k > 0."""
    if vr.p[k] <= 0.0:
        raise ConfigurationError(f"component {k} has p_k = 0")
    x = np.asarray(x, dtype=np.float64)
    t = _row_dot(P.A, k, x)
    base = P.components[k].value(t) - vr.anchor_grads[k] * t
    return base / vr.p[k] + float(vr.full_grad @ x)


def vr_component_grad(P: ErmProblem, vr: VrComponents, k: int, x) -> np.ndarray:
    """grad f~_k(x) as a dense vector; only defined where p_k > 0."""
    if vr.p[k] <= 0.0:
        raise ConfigurationError(f"component {k} has p_k = 0")
    x = np.asarray(x, dtype=np.float64)
    t = _row_dot(P.A, k, x)
    coef = (P.components[k].first_derivative(t) - vr.anchor_grads[k]) / vr.p[k]
    out = vr.full_grad.copy()
    cols, vals = P.A.row(k)
    out[cols] += coef * vals
    return out


def vr_variance_bound(P: ErmProblem, vr: VrComponents, x, x_star):
    """(lhs, rhs) of E_{k~p}||grad f~_k(x) - grad f~_k(x*)||^2_W <= 2L(F(x) - F(x*)).

    The gradient-difference norm is the whitened one, W = (A^T A)^(-1); in
    that geometry every component is L-smooth with the common bound
    L = (sum tau)*M, which is the constant on the right side. The anchor and
    full-gradient terms cancel in the difference, so the left side reduces to
    sum_k (1/p_k)*(psi'_k(a_k^T x) - psi'_k(a_k^T x*))^2 * sigma_k with
    sigma_k the k-th leverage score. x_star should be the minimizer of F.
    A dense leverage computation backs the whitening, so this is a desk-scale
    verification helper, not a pipeline component.
    """
    from .oracles import oracle_leverage

    x = np.asarray(x, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64)
    tx = matvec(P.A, x)
    ts = matvec(P.A, x_star)
    dw = _psi_prime_rows(P.components, tx) - _psi_prime_rows(P.components, ts)
    sigma = oracle_leverage(P.A)
    mask = vr.p > 0.0
    lhs = float(np.sum(dw[mask] ** 2 * sigma[mask] / vr.p[mask]))
    f_x, _ = erm_value_grad(P, x)
    f_s, _ = erm_value_grad(P, x_star)
    big_l = float(vr.tau.sum()) * P.M
    rhs = 2.0 * big_l * (f_x - f_s)
    return lhs, rhs


@dataclass(frozen=True)
class GenAcdComponent:
    """One sampled dual coordinate: phi_t(.) = c_t*[psi(.) - g_t*(.)].

    c_t = 1/(m*p_t), so L_t = M*c_t and mu_t = c_t/M with L_t/mu_t = M^2
    exactly by construction.
    """

    psi: object
    scale_c: float
    anchor_grad: float
    M: float

    @property
    def L(self) -> float:
        return self.M * self.scale_c

    @property
    def mu(self) -> float:
        return self.scale_c / self.M

    def conjugate_gradient(self, y: float) -> float:
        """(phi_t*)'(y) via the component's inverted first derivative."""
        return conjugate_gradient_1d(self.psi, y / self.scale_c + self.anchor_grad)


@dataclass(frozen=True)
class GenAcdSystem:
    """The sampled ERM dual system: rows, per-component data, global linear term.

    Minimizes F_m(x) = sum_t scale_c_t*[psi_t(b_t^T x) - anchor_grad_t*b_t^T x]
    + linear^T x over the sampled rows b_t.
    """

    B: SparseMatrix
    kind: int
    kernel_shift: np.ndarray
    scale_c: np.ndarray
    anchor_grad: np.ndarray
    linear: np.ndarray
    M: float
    psis: tuple

    def __post_init__(self):
        m = self.B.n_rows
        for name in ("kernel_shift", "scale_c", "anchor_grad", "linear"):
            object.__setattr__(self, name,
                               np.ascontiguousarray(getattr(self, name),
                                                    dtype=np.float64))
        if self.kernel_shift.shape != (m,) or self.scale_c.shape != (m,) \
                or self.anchor_grad.shape != (m,):
            raise ConfigurationError("per-component arrays must have one entry per row")
        if self.linear.shape != (self.B.n_cols,):
            raise ConfigurationError("linear term must have one entry per column")
        if np.any(self.scale_c <= 0.0):
            raise ConfigurationError("component scales must be positive")

    def __len__(self) -> int:
        return self.B.n_rows

    def component(self, t: int) -> GenAcdComponent:
        return GenAcdComponent(psi=self.psis[t], scale_c=float(self.scale_c[t]),
                               anchor_grad=float(self.anchor_grad[t]), M=self.M)

    def _psi_parts(self, t: np.ndarray):
        s = t - self.kernel_shift
        if self.kind == PSI_QUADRATIC:
            vals = 0.5 * s * s
            primes = s
        else:
            vals = 0.5 * s * s + np.logaddexp(0.0, s)
            primes = s + _sigmoid_vec(s)
        return vals, primes

    def value_grad(self, x, *, work: WorkCounter | None = None):
        """F_m(x) and its gradient (kernel-form psi, exact up to a constant)."""
        x = np.asarray(x, dtype=np.float64)
        t = matvec(self.B, x)
        vals, primes = self._psi_parts(t)
        value = float(self.scale_c @ (vals - self.anchor_grad * t)) \
            + float(self.linear @ x)
        grad = matvec_t(self.B, self.scale_c * (primes - self.anchor_grad)) \
            + self.linear
        if work is not None:
            work.add_updates(self.B.n_rows)
        return value, grad

    def phi_sum(self, x) -> float:
        """sum_t phi_t(b_t^T x) without the linear term (certificate P0)."""
        x = np.asarray(x, dtype=np.float64)
        t = matvec(self.B, x)
        vals, _ = self._psi_parts(t)
        return float(self.scale_c @ (vals - self.anchor_grad * t))


def conjugate_gradient_1d(psi, y: float, *, max_iter: int = 100) -> float:
    """(psi*)'(y): the unique t with psi'(t) = y, to |psi'(t)-y| <= 1e-12*max(1,|y|).

    Safeguarded quasi-Newton: steps t -= (psi'(t)-y)/hi use the curvature
    upper bound as slope (never overshoots a 1/M-strongly-monotone psi'),
    with a hard bracket maintained by bisection. Raises NumericError after
    max_iter iterations.
    """
    y = float(y)
    lo_curv, hi_curv = psi.curvature_bracket
    if not (0.0 < lo_curv <= hi_curv):
        raise ConfigurationError(
            f"curvature bracket must satisfy 0 < lo <= hi, got ({lo_curv}, {hi_curv})")
    tol = 1e-12 * max(1.0, abs(y))
    f0 = psi.first_derivative(0.0)
    if abs(f0 - y) <= tol:
        return 0.0
    span = (abs(y - f0)) / lo_curv
    if y > f0:
        lo, hi = 0.0, span
    else:
        lo, hi = -span, 0.0
    # start from the quasi-Newton step off zero, clipped into the bracket
    t = min(max((y - f0) / hi_curv, lo), hi)
    for _ in range(max_iter):
        r = psi.first_derivative(t) - y
        if abs(r) <= tol:
            return t
        if r > 0.0:
            hi = t
        else:
            lo = t
        t_new = t - r / hi_curv
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        t = t_new
    raise NumericError(
        f"conjugate inversion did not reach |psi'(t) - y| <= {tol} "
        f"in {max_iter} iterations")


def gen_acd_solve(system: GenAcdSystem, lam: float, x0, epsilon, rng, *,
                  work: WorkCounter | None = None, budget_factor=4.0,
                  kappa_hint=None) -> np.ndarray:
    """Minimize the sampled ERM objective to relative gap epsilon.

    lam must lower-bound the strong convexity of the sampled objective
    (callers pass lambda_min(A^T A)/(2M)). A proximal-point outer loop feeds
    the generalized dual kernel; the monitored certificate
    ||grad F_m(x)||^2/(2*lam) <= epsilon*(F_m(x0) - best) ends the loop.

    kappa_hint, when given, is kappa(A^T A) of the unsampled Gram; the inner
    solves then tighten to min(1e-3, 1/(256*M^2*kappa)) relative gap. The
    prox contraction degrades with a sqrt(kappa * inner_tol) cross term, so
    ill-conditioned problems stall without this.

    A warm start at the subproblem optimum is a valid output even when the
    relative certificate is unreachable (epsilon times a gap of a few ulps is
    below the gradient's resolution), so the loop also returns once two
    consecutive prox steps make no representable decrease in F_m while the
    gap bound sits at rounding scale.

    Raises NumericError (with the component index) if a conjugate inversion
    fails inside the kernel, and ConvergenceError when the outer budget is
    exhausted.
    """
    if lam is None or lam <= 0.0:
        raise ConfigurationError(f"lam must be positive, got {lam}")
    if not (0.0 < epsilon < 1.0):
        raise ConfigurationError(f"epsilon must be in (0, 1), got {epsilon}")
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if x0.shape != (system.B.n_cols,):
        raise ConfigurationError(
            f"x0 has shape {x0.shape}, expected ({system.B.n_cols},)")
    if work is None:
        work = WorkCounter()
    lam = float(lam)
    inner_tol = _INNER_TOL
    if kappa_hint is not None:
        if kappa_hint < 1.0:
            raise ConfigurationError(
                f"kappa_hint must be >= 1, got {kappa_hint}")
        inner_tol = min(_INNER_TOL,
                        1.0 / (256.0 * system.M ** 2 * float(kappa_hint)))
    csr = csr_arrays(system.B)

    f0, g = system.value_grad(x0, work=work)
    x = x0.copy()
    best_x, best_f = x0.copy(), f0
    f_cur = f0
    per_step = 0.35
    n_theory = max(1, math.ceil(math.log(1.0 / epsilon) / math.log(1.0 / per_step)) + 1)
    cap = math.ceil(budget_factor * n_theory)
    # the kernel certificate is relative to the subproblem gap at the warm
    # outer iterate (passed via p0), so the inner solves tighten in absolute
    # terms as the outer loop contracts; x - s_vec = linear/lam is constant
    prox_const = float(system.linear @ system.linear) / (2.0 * lam)
    eps_mach = float(np.finfo(np.float64).eps)
    stalled = 0
    for _outer in range(cap + 1):
        gap_ub = float(g @ g) / (2.0 * lam)
        lb = f0 - best_f
        scale = max(1.0, abs(f_cur))
        if gap_ub <= epsilon * lb or gap_ub <= _ABS_FLOOR * scale:
            return best_x if best_f < f_cur else x
        # each exact prox step cuts the gap by about half, so two steps with
        # no representable decrease put the true gap at rounding scale; the
        # sqrt(eps) guard keeps this from masking a kernel that never moved
        if stalled >= 2 and gap_ub <= math.sqrt(eps_mach) * scale:
            return best_x if best_f < f_cur else x
        if _outer == cap:
            break
        s_vec = x - system.linear / lam
        p0 = system.phi_sum(x) + prox_const
        work.add_updates(system.B.n_rows)
        seed = int(rng.integers(0, 2**63 - 1))
        x_new, kwork, _cert, _gap, fail_idx = erm_dual_acd(
            csr, system.kind, system.kernel_shift, system.anchor_grad,
            system.scale_c, s_vec, lam, system.M, inner_tol, seed, p0)
        work.add_updates(kwork)
        if fail_idx >= 0:
            raise NumericError(
                "conjugate inversion failed inside the dual kernel",
                index=fail_idx)
        x = x_new
        f_cur, g = system.value_grad(x, work=work)
        if f_cur < best_f - 32.0 * eps_mach * scale:
            stalled = 0
        else:
            stalled += 1
        if f_cur < best_f:
            best_f, best_x = f_cur, x.copy()
    raise ConvergenceError(
        f"prox-point loop missed the certificate after {cap} outer steps",
        best=best_x)


def build_sampled_system(P: ErmProblem, vr: VrComponents, indices) -> GenAcdSystem:
    """Assemble the dual system for sampled component indices i_t."""
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    kind, shift_all = _uniform_kind(P.components)
    B = take_rows(P.A, indices)
    scale_c = 1.0 / (float(len(indices)) * vr.p[indices])
    return GenAcdSystem(
        B=B, kind=kind, kernel_shift=shift_all[indices],
        scale_c=scale_c, anchor_grad=vr.anchor_grads[indices],
        linear=vr.full_grad, M=P.M,
        psis=tuple(P.components[i] for i in indices))


def erm_solve_step(P: ErmProblem, x0, u: LeverageVector, rng, *,
                   lambda_min=None, kappa=None,
                   work: WorkCounter | None = None) -> np.ndarray:
    """One expected-halving step: F(x') - F* <= (F(x0) - F*)/2 w.p. >= 1/2.

    Builds the variance-reduced reformulation, draws m components, runs the
    row-norm acceptance test (returning x0 unchanged on failure, a retryable
    no-progress signal), and solves the sampled problem to gap 1/(512 M^4).
    lambda_min(A^T A) (and kappa, for the inner tolerance on ill-conditioned
    problems) are taken from the arguments or the dense oracle.
    """
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if work is None:
        work = WorkCounter()
    vr = build_vr(P, x0, u, work=work)
    n = P.A.n_rows
    indices = rng.choice(n, size=vr.m, p=vr.p)
    norms = sparse.row_norms(P.A)
    lhs = float(np.sum(norms[indices] / np.sqrt(vr.p[indices])))
    rhs = ACCEPT_FACTOR * vr.m * float(norms @ np.sqrt(vr.p))
    if lhs > rhs:
        return x0.copy()
    if lambda_min is None:
        from .oracles import oracle_spectral

        spectral = oracle_spectral(P.A)
        lambda_min = spectral.lambda_min
        if kappa is None:
            kappa = spectral.kappa
    lam = float(lambda_min) / (2.0 * P.M)
    system = build_sampled_system(P, vr, indices)
    work.sampled_rows += int(vr.m)
    eps_inner = 1.0 / (INNER_TARGET_FACTOR * P.M ** 4)
    return gen_acd_solve(system, lam, x0, eps_inner, rng, work=work,
                         kappa_hint=kappa)


def erm_full_solve(P: ErmProblem, x0, epsilon, rng, *, u=None, spectral=None,
                   work: WorkCounter | None = None,
                   stats: ReductionStats | None = None) -> np.ndarray:
    """Solve F to relative gap epsilon by boosting the halving step.

    Wraps erm_solve_step in reduction_boost with the gradient-norm gap
    estimator m(x) = ||grad F(x)||^2 at distortion r = M^2 * kappa(A^T A).
    Leverage overestimates and spectral bounds default to probe estimates /
    the dense oracle; pass them explicitly at scale.
    """
    if work is None:
        work = WorkCounter()
    if spectral is None:
        from .oracles import oracle_spectral

        spectral = oracle_spectral(P.A)
    # absolute-floor certificate: hess F >= A^T A / M, so this gap bound is
    # sound; starting at (numerical) optimality skips the probe/boost work
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    f_start, g_start = erm_value_grad(P, x0, work=work)
    gap_ub = float(g_start @ g_start) / (2.0 * spectral.lambda_min / P.M)
    if gap_ub <= _ABS_FLOOR * max(1.0, abs(f_start)):
        return x0.copy()
    if u is None:
        cfg = plan_jl_config(P.A.n_rows, P.A.n_cols, 0.25, spectral.kappa,
                             c=PIPELINE_JL_C, work=work)
        solver = make_dense_probe_solver(P.A)
        u = compute_ls(P.A, 0.25, solver, cfg, rng, work=work)
    r = P.M ** 2 * spectral.kappa
    cfg_red = ReductionConfig(c=0.5, delta_fail=0.5, r=r)

    def objective(x):
        value, _grad = erm_value_grad(P, x, work=work)
        return value

    def estimator(x):
        _value, grad = erm_value_grad(P, x, work=work)
        return float(grad @ grad)

    def base_alg(x, step_rng):
        return erm_solve_step(P, x, u, step_rng,
                              lambda_min=spectral.lambda_min,
                              kappa=spectral.kappa, work=work)

    return reduction_boost(objective, x0, base_alg, estimator, cfg_red,
                           epsilon, rng=rng, stats=stats)


def convex_gap_identity(f_value, f_hess, g_grad, g_hess, x_star, y_star,
                        nodes: int = 64):
    """(lhs, rhs) of the convex-gap identity between two minimizers.

    For F minimized at x_star and G minimized at y_star,
    F(y*) - F(x*) = 0.5 * ||grad G(x*)||^2 in the metric
    H_G^{-1} H_F H_G^{-1}, where H_F = 2*int_0^1 (1-t)*hess F(x*+t(y*-x*)) dt
    and H_G = int_0^1 hess G(y*+t(x*-y*)) dt, evaluated by Gauss-Legendre
    quadrature with ``nodes`` points (exact for quadratics).
    """
    x_star = np.asarray(x_star, dtype=np.float64)
    y_star = np.asarray(y_star, dtype=np.float64)
    t_nodes, weights = np.polynomial.legendre.leggauss(nodes)
    t_nodes = 0.5 * (t_nodes + 1.0)
    weights = 0.5 * weights
    d = x_star.shape[0]
    h_f = np.zeros((d, d))
    h_g = np.zeros((d, d))
    for t, w in zip(t_nodes, weights):
        h_f += w * 2.0 * (1.0 - t) * np.asarray(f_hess(x_star + t * (y_star - x_star)))
        h_g += w * np.asarray(g_hess(y_star + t * (x_star - y_star)))
    lhs = float(f_value(y_star)) - float(f_value(x_star))
    pull = np.linalg.solve(h_g, np.asarray(g_grad(x_star), dtype=np.float64))
    rhs = 0.5 * float(pull @ h_f @ pull)
    return lhs, rhs


def concentration_probe(A: SparseMatrix, u: LeverageVector, alpha, m, rng, *,
                        c: float = 3.0):
    """Whitened extreme eigenvalues of a with-replacement subsampled Gram.

    Sampling rates gamma_i = min(1, alpha*c*u_i*ln d) define p = gamma/sum;
    m draws of a_i a_i^T / p_i average to Y with E[Y] = A^T A. Returns the
    (min, max) eigenvalues of (A^T A)^{-1/2} Y (A^T A)^{-1/2}. Requires
    m >= sum(gamma) (the sampling-rate hypothesis); raises ConfigurationError
    below it.
    """
    if len(u) != A.n_rows:
        raise ConfigurationError(
            f"u has {len(u)} entries, matrix has {A.n_rows} rows")
    if A.n_cols < 2:
        raise ConfigurationError("need at least 2 columns for the log d rate")
    if alpha <= 0.0 or c <= 0.0:
        raise ConfigurationError("alpha and c must be positive")
    gamma = np.minimum(1.0, alpha * c * u.values * math.log(A.n_cols))
    sum_gamma = float(gamma.sum())
    if sum_gamma <= 0.0:
        raise DegenerateProblemError("all sampling rates gamma_i are zero")
    if m < sum_gamma:
        raise ConfigurationError(
            f"m = {m} is below the sampling-rate hypothesis sum(gamma) = {sum_gamma:.3f}")
    p = gamma / sum_gamma
    idx = rng.choice(A.n_rows, size=int(m), p=p)
    dense = A.to_dense()
    scaled = dense[idx] / np.sqrt(float(m) * p[idx])[:, None]
    y_mat = scaled.T @ scaled
    gram = dense.T @ dense
    vals, vecs = np.linalg.eigh(gram)
    if vals[0] <= 0.0:
        raise ConfigurationError("A^T A is singular; cannot whiten")
    inv_sqrt = (vecs / np.sqrt(vals)) @ vecs.T
    wh = inv_sqrt @ y_mat @ inv_sqrt
    eigs = np.linalg.eigvalsh(0.5 * (wh + wh.T))
    return float(eigs[0]), float(eigs[-1])
