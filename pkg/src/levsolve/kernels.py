"""Fused accelerated-coordinate-descent kernels for the dual solvers.

Both kernels minimize a dual of the form

    g(y) = sum_i phi*_i(y_i) + (1/(2*lam))*||B^T y||^2 - s^T B^T y

(1-strongly convex after per-coordinate rescaling) and recover the primal
point x = s - B^T y / lam. The quadratic kernel handles
phi*_i(y) = 0.5*y^2 + d_i*y (least squares); the general kernel handles the
conjugates of scaled ERM components via in-kernel Newton inversion.

The accelerated update is carried in an implicit two-sequence representation:
(x_seq, v_seq) = C @ (xh, vh) with a 2x2 coefficient matrix C updated by the
mixing matrix M = [[1, theta], [theta, 1]]/(1+theta) each step, so one update
costs O(row nnz) instead of O(dim). det(C) decays like
((1-theta)/(1+theta))^t, so the state is re-materialized periodically to keep
the 2x2 solves well conditioned.

Stopping uses a sound primal-dual certificate evaluated at monitor events:
stop once P(x(y)) + g(y) <= eps * [P0 + g(y) - ||grad g(y)||^2/2], the
bracket being a computable lower bound on the initial primal gap P0 - P*.
The certificate needs no iteration floor (it is valid at any iterate); the
update cap is a multiple of the expected-gap theory count S*ln(6/eps), so a
run that exhausts the cap still satisfies the expected-contraction guarantee.

Work accounting: returned `work` counts coordinate updates plus `dim` per
monitor event (a monitor costs a full pass), uniformly across pipelines.
"""

from __future__ import annotations

import numpy as np

from .sparse import njit, numba_enabled

U64 = np.uint64
_SM_GAMMA = U64(0x9E3779B97F4A7C15)
_SM_MUL1 = U64(0xBF58476D1CE4E5B9)
_SM_MUL2 = U64(0x94D049BB133111EB)
_S30 = U64(30)
_S27 = U64(27)
_S31 = U64(31)
_S11 = U64(11)
_INV53 = float(2.0 ** -53)


@njit(cache=True, inline="always")
def _sm_next(z):  # pragma: no cover - compiled
    """splitmix64 step: returns (new_state, uniform double in [0,1))."""
    z = z + _SM_GAMMA
    x = z
    x = (x ^ (x >> _S30)) * _SM_MUL1
    x = (x ^ (x >> _S27)) * _SM_MUL2
    x = x ^ (x >> _S31)
    return z, np.float64(x >> _S11) * _INV53


@njit(cache=True)
def _build_alias(p, prob_out, alias_out):  # pragma: no cover - compiled
    """Walker alias table for the probability vector p (sums to 1)."""
    n = p.shape[0]
    scaled = np.empty(n)
    for i in range(n):
        scaled[i] = p[i] * n
    small = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.int64)
    ns = 0
    nl = 0
    for i in range(n):
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        l = large[nl - 1]
        prob_out[s] = scaled[s]
        alias_out[s] = l
        scaled[l] = (scaled[l] + scaled[s]) - 1.0
        if scaled[l] < 1.0:
            nl -= 1
            small[ns] = l
            ns += 1
    while nl > 0:
        nl -= 1
        prob_out[large[nl]] = 1.0
        alias_out[large[nl]] = large[nl]
    while ns > 0:
        ns -= 1
        prob_out[small[ns]] = 1.0
        alias_out[small[ns]] = small[ns]


def build_alias_table(p):
    """Build (prob, alias) arrays for O(1) categorical sampling."""
    p = np.ascontiguousarray(p, dtype=np.float64)
    prob = np.empty(p.shape[0])
    alias = np.empty(p.shape[0], dtype=np.int64)
    _build_alias(p, prob, alias)
    return prob, alias


# ---------------------------------------------------------------------------
# quadratic dual: phi*_i(y) = 0.5 y^2 + d_i y


@njit(cache=True)
def _quad_refresh(row_ptr, col_idx, values, xh, vh, wx, wv):  # pragma: no cover
    """Recompute wx = B^T xh, wv = B^T vh exactly."""
    for c in range(wx.shape[0]):
        wx[c] = 0.0
        wv[c] = 0.0
    for i in range(xh.shape[0]):
        xi = xh[i]
        vi = vh[i]
        for k in range(row_ptr[i], row_ptr[i + 1]):
            c = col_idx[k]
            wx[c] += values[k] * xi
            wv[c] += values[k] * vi


@njit(cache=True)
def _quad_acd_core(row_ptr, col_idx, values, d_shift, s_vec, lam, theta, L,
                   p_true, prob, alias, seed, floor_updates, cap_updates,
                   eps_rel, p0, monitor_every, remat_every,
                   x_out, y_out):  # pragma: no cover - compiled
    """Run ACD on the quadratic dual. Returns (work, certified, best_gap, lb).

    x_out receives the recovered primal at the best monitored point; y_out the
    dual point there. `work` includes monitor charges (dim per event).
    """
    n = d_shift.shape[0]
    d = s_vec.shape[0]
    xh = np.zeros(n)
    vh = np.zeros(n)
    wx = np.zeros(d)
    wv = np.zeros(d)
    cxx = 1.0
    cxv = 0.0
    cvx = 0.0
    cvv = 1.0
    m00 = 1.0 / (1.0 + theta)
    m01 = theta / (1.0 + theta)
    inv1t = 1.0 / (1.0 + theta)
    z = seed
    raw = 0
    work = 0.0
    best_gap = np.inf
    certified = False
    lb_last = 0.0
    since_monitor = 0
    since_remat = 0
    y_tmp = np.empty(n)
    wy = np.empty(d)
    while raw < cap_updates:
        z, u1 = _sm_next(z)
        z, u2 = _sm_next(z)
        j = int(u1 * n)
        if j >= n:
            j = n - 1
        i = j if u2 < prob[j] else alias[j]

        ax = (cxx + theta * cvx) * inv1t
        av = (cxv + theta * cvv) * inv1t
        yi = ax * xh[i] + av * vh[i]
        dot_wx = 0.0
        dot_wv = 0.0
        dot_s = 0.0
        for k in range(row_ptr[i], row_ptr[i + 1]):
            c = col_idx[k]
            val = values[k]
            dot_wx += val * wx[c]
            dot_wv += val * wv[c]
            dot_s += val * s_vec[c]
        g = yi + d_shift[i] + (ax * dot_wx + av * dot_wv) / lam - dot_s
        s1 = -g / L[i]
        s2 = -g * theta / p_true[i]
        ncxx = m00 * cxx + m01 * cvx
        ncvx = m01 * cxx + m00 * cvx
        ncxv = m00 * cxv + m01 * cvv
        ncvv = m01 * cxv + m00 * cvv
        cxx = ncxx
        cxv = ncxv
        cvx = ncvx
        cvv = ncvv
        det = cxx * cvv - cxv * cvx
        if np.abs(det) < 1e-60:
            # representation degenerated (theta ~ 1); fold it into the state
            # and continue from the identity -- visible iterates unchanged
            for q in range(n):
                xq = cxx * xh[q] + cxv * vh[q]
                vq = cvx * xh[q] + cvv * vh[q]
                xh[q] = xq
                vh[q] = vq
            for c in range(d):
                wxc = cxx * wx[c] + cxv * wv[c]
                wvc = cvx * wx[c] + cvv * wv[c]
                wx[c] = wxc
                wv[c] = wvc
            cxx = 1.0
            cxv = 0.0
            cvx = 0.0
            cvv = 1.0
            since_remat = 0
            det = 1.0
        dxh = (cvv * s1 - cxv * s2) / det
        dvh = (-cvx * s1 + cxx * s2) / det
        xh[i] += dxh
        vh[i] += dvh
        for k in range(row_ptr[i], row_ptr[i + 1]):
            c = col_idx[k]
            val = values[k]
            wx[c] += val * dxh
            wv[c] += val * dvh
        raw += 1
        work += 1.0
        since_monitor += 1
        since_remat += 1

        if since_remat >= remat_every and since_monitor < monitor_every:
            # fold C into the state so the 2x2 solves stay well conditioned
            for q in range(n):
                xq = cxx * xh[q] + cxv * vh[q]
                vq = cvx * xh[q] + cvv * vh[q]
                xh[q] = xq
                vh[q] = vq
            for c in range(d):
                wxc = cxx * wx[c] + cxv * wv[c]
                wvc = cvx * wx[c] + cvv * wv[c]
                wx[c] = wxc
                wv[c] = wvc
            cxx = 1.0
            cxv = 0.0
            cvx = 0.0
            cvv = 1.0
            since_remat = 0

        if since_monitor >= monitor_every or raw >= cap_updates:
            since_monitor = 0
            for q in range(n):
                xq = cxx * xh[q] + cxv * vh[q]
                vq = cvx * xh[q] + cvv * vh[q]
                xh[q] = xq
                vh[q] = vq
            cxx = 1.0
            cxv = 0.0
            cvx = 0.0
            cvv = 1.0
            since_remat = 0
            _quad_refresh(row_ptr, col_idx, values, xh, vh, wx, wv)
            ayx = inv1t
            ayv = theta * inv1t
            for q in range(n):
                y_tmp[q] = ayx * xh[q] + ayv * vh[q]
            for c in range(d):
                wy[c] = ayx * wx[c] + ayv * wv[c]
            # residual t_q = b_q^T(wy/lam - s) = -(B x)_q for x = s - wy/lam
            gn2 = 0.0
            gval = 0.0
            pnorm = 0.0
            for q in range(n):
                acc = 0.0
                for k in range(row_ptr[q], row_ptr[q + 1]):
                    c = col_idx[k]
                    acc += values[k] * (wy[c] / lam - s_vec[c])
                gq = y_tmp[q] + d_shift[q] + acc
                gn2 += gq * gq
                gval += 0.5 * y_tmp[q] * y_tmp[q] + d_shift[q] * y_tmp[q]
                r = acc + d_shift[q]
                pnorm += r * r
            wy2 = 0.0
            swy = 0.0
            for c in range(d):
                wy2 += wy[c] * wy[c]
                swy += s_vec[c] * wy[c]
            gval += wy2 / (2.0 * lam) - swy
            pval = 0.5 * pnorm + wy2 / (2.0 * lam)
            dual_gap = pval + gval
            lb = p0 + gval - 0.5 * gn2
            lb_last = lb
            work += n
            if dual_gap < best_gap:
                best_gap = dual_gap
                for c in range(d):
                    x_out[c] = s_vec[c] - wy[c] / lam
                for q in range(n):
                    y_out[q] = y_tmp[q]
            scale = 1.0 if pval < 0.0 else pval
            if raw >= floor_updates and (
                    dual_gap <= eps_rel * lb
                    or dual_gap <= 1e-14 * (1.0 + scale)):
                certified = True
                break
    return work, certified, best_gap, lb_last


@njit(cache=True)
def _probe_batch(row_ptr, col_idx, values, V, W, eta, theta, L, p_true, prob,
                 alias, seed, floor_updates, cap_updates, eps_rel,
                 monitor_every, remat_every,
                 X_out):  # pragma: no cover - compiled
    """Solve one ridge-regularized probe per column of (V, W).

    Probe j minimizes 0.5||A x - V[:,j]||^2 + (eta/2)||x - W[:,j]/sqrt(eta)||^2
    from x0 = 0 and writes the solution into X_out[:, j]. Returns
    (total work, number certified).
    """
    n = V.shape[0]
    d = W.shape[0]
    k = V.shape[1]
    sqrt_eta = np.sqrt(eta)
    x_out = np.empty(d)
    y_out = np.empty(n)
    s_vec = np.empty(d)
    d_shift = np.empty(n)
    total_work = 0.0
    n_cert = 0
    z = seed
    for jp in range(k):
        z, _u = _sm_next(z)
        probe_seed = z * _SM_MUL1 + U64(jp)
        p0 = 0.0
        for q in range(n):
            d_shift[q] = V[q, jp]
            p0 += 0.5 * V[q, jp] * V[q, jp]
        for c in range(d):
            s_vec[c] = W[c, jp] / sqrt_eta
            p0 += 0.5 * W[c, jp] * W[c, jp]
        work, cert, _gap, _lb = _quad_acd_core(
            row_ptr, col_idx, values, d_shift, s_vec, eta, theta, L, p_true,
            prob, alias, probe_seed, floor_updates, cap_updates, eps_rel, p0,
            monitor_every, remat_every, x_out, y_out)
        total_work += work
        if cert:
            n_cert += 1
        for c in range(d):
            X_out[c, jp] = x_out[c]
    return total_work, n_cert


def _remat_cadence(S, theta):
    """Steps between re-materializations of the 2x2 coefficient matrix.

    det(C) shrinks by rho = (1-theta)/(1+theta) per update, and the hidden
    state grows like 1/det, so folding before det drops below ~e^-8 keeps
    the 2x2 solves at roughly half the mantissa. For large instances
    (theta ~ 1/S small, rho ~ 1) this returns the lax 0.25*S cadence; tiny
    instances fold every few steps, which costs O(dim) and is cheap at that
    size. Without the rho-aware bound a small-S run collapses C to the rank-1
    averaging matrix (det rounds to exactly zero) before the first fold.
    """
    cadence = max(64, int(0.25 * S))
    rho = (1.0 - theta) / (1.0 + theta)
    if rho <= 0.0:
        return 1
    return max(1, min(cadence, int(8.0 / -np.log(rho))))


def _quad_schedule(rnsq, lam, epsilon, n, budget_factor):
    """Shared step-size / budget computation for the quadratic dual.

    The primal-dual certificate is sound at any iterate, so certification has
    no iteration floor; the cap is budget_factor times the expected-gap
    theory count S*ln(6/eps).
    """
    L = 1.0 + rnsq / lam
    sqrt_L = np.sqrt(L)
    S = float(sqrt_L.sum())
    theta = 1.0 / S
    p_true = sqrt_L / S
    prob, alias = build_alias_table(p_true)
    theory = int(np.ceil(S * np.log(6.0 / epsilon))) + 1
    floor = 0
    cap = int(np.ceil(budget_factor * theory))
    monitor_every = max(n, 64)
    remat_every = _remat_cadence(S, theta)
    return L, theta, p_true, prob, alias, floor, cap, monitor_every, remat_every


def quad_dual_acd(B_csr, d_shift, s_vec, lam, epsilon, seed, p0,
                  budget_factor=4.0):
    """Python wrapper for the quadratic-dual kernel.

    B_csr is the tuple from :func:`csr_arrays`. Returns
    (x_primal, y_dual, work, certified, best_gap, lb).
    """
    row_ptr, col_idx, values, n, d, rnsq = B_csr
    (L, theta, p_true, prob, alias, floor, cap, monitor_every,
     remat_every) = _quad_schedule(rnsq, lam, epsilon, n, budget_factor)
    x_out = np.zeros(d)
    y_out = np.zeros(n)
    args = (row_ptr, col_idx, values,
            np.ascontiguousarray(d_shift, dtype=np.float64),
            np.ascontiguousarray(s_vec, dtype=np.float64),
            float(lam), theta, L, p_true, prob, alias, U64(seed),
            floor, cap, float(epsilon), float(p0), monitor_every,
            remat_every, x_out, y_out)
    with np.errstate(over="ignore"):
        work, cert, gap, lb = _quad_acd_core(*args)
    return x_out, y_out, work, bool(cert), float(gap), float(lb)


def probe_batch_solve(A_csr, V, W, eta, epsilon, seed, budget_factor=4.0):
    """Solve the ridge probes for leverage estimation in one fused call.

    Returns (X, work, certified_count) with X[:, j] the solution of probe j.
    """
    row_ptr, col_idx, values, n, d, rnsq = A_csr
    (L, theta, p_true, prob, alias, floor, cap, monitor_every,
     remat_every) = _quad_schedule(rnsq, eta, epsilon, n, budget_factor)
    V = np.ascontiguousarray(V, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    X = np.zeros((d, V.shape[1]))
    args = (row_ptr, col_idx, values, V, W,
            float(eta), theta, L, p_true, prob, alias, U64(seed), floor, cap,
            float(epsilon), monitor_every, remat_every, X)
    with np.errstate(over="ignore"):
        work, n_cert = _probe_batch(*args)
    return X, work, int(n_cert)


def csr_arrays(A):
    """Pack a SparseMatrix into the argument tuple the kernels take."""
    from .sparse import row_norms_sq

    return (A.row_ptr, A.col_idx, A.values, A.n_rows, A.n_cols,
            row_norms_sq(A))


# ---------------------------------------------------------------------------
# generalized dual for scaled ERM components
#
# phi_t(tau) = c_t * (psi(tau) - g_t * tau) with psi one of the scalar kinds
# below (component shift baked in via shift_b). Conjugate derivative
# phi*_t'(z) = (psi')^{-1}(z / c_t + g_t).

PSI_QUADRATIC = 0
PSI_LOGISTIC_AUG = 1


@njit(cache=True, inline="always")
def _sigmoid(x):  # pragma: no cover - compiled
    if x >= 0.0:
        e = np.exp(-x)
        return 1.0 / (1.0 + e)
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True, inline="always")
def _softplus(x):  # pragma: no cover - compiled
    if x > 30.0:
        return x
    if x < -30.0:
        return np.exp(x)
    return np.log1p(np.exp(x))


@njit(cache=True, inline="always")
def _psi_value(kind, t, b):  # pragma: no cover - compiled
    u = t - b
    if kind == PSI_QUADRATIC:
        return 0.5 * u * u
    return 0.5 * u * u + _softplus(u)


@njit(cache=True, inline="always")
def _psi_prime(kind, t, b):  # pragma: no cover - compiled
    u = t - b
    if kind == PSI_QUADRATIC:
        return u
    return u + _sigmoid(u)


@njit(cache=True, inline="always")
def _psi_prime_inv(kind, z, b):  # pragma: no cover - compiled
    """Solve psi'(t) = z for t. Returns (t, ok)."""
    if kind == PSI_QUADRATIC:
        return z + b, True
    # solve u + sigmoid(u) = z; the root lies in (z - 1, z)
    u = z - 0.5
    for _ in range(100):
        sg = _sigmoid(u)
        f = u + sg - z
        if -1e-12 <= f <= 1e-12:
            return u + b, True
        u = u - f / (1.0 + sg * (1.0 - sg))
        if u < z - 1.0:
            u = z - 1.0
        elif u > z:
            u = z
    sg = _sigmoid(u)
    f = u + sg - z
    ok = -1e-10 <= f <= 1e-10
    return u + b, ok


@njit(cache=True)
def _erm_refresh(row_ptr, col_idx, values, D, xh, vh, wx, wv):  # pragma: no cover
    """wx = B^T diag(D) xh, wv likewise (dual variables are rescaled)."""
    for c in range(wx.shape[0]):
        wx[c] = 0.0
        wv[c] = 0.0
    for i in range(xh.shape[0]):
        xi = D[i] * xh[i]
        vi = D[i] * vh[i]
        for k in range(row_ptr[i], row_ptr[i + 1]):
            c = col_idx[k]
            wx[c] += values[k] * xi
            wv[c] += values[k] * vi


@njit(cache=True)
def _erm_acd_core(row_ptr, col_idx, values, kind, shift_b, lin_g, scale_c,
                  s_vec, lam, theta, D, Lam, p_true, prob, alias, seed,
                  floor_updates, cap_updates, eps_rel, p0, monitor_every,
                  remat_every, x_out):  # pragma: no cover - compiled
    """ACD on the rescaled general dual.

    Returns (work, certified, best_gap, fail_idx); fail_idx is -1 normally,
    else the component index where conjugate inversion failed to converge.
    """
    m = shift_b.shape[0]
    d = s_vec.shape[0]
    xh = np.zeros(m)
    vh = np.zeros(m)
    wx = np.zeros(d)
    wv = np.zeros(d)
    cxx = 1.0
    cxv = 0.0
    cvx = 0.0
    cvv = 1.0
    m00 = 1.0 / (1.0 + theta)
    m01 = theta / (1.0 + theta)
    inv1t = 1.0 / (1.0 + theta)
    z = seed
    raw = 0
    work = 0.0
    best_gap = np.inf
    certified = False
    since_monitor = 0
    since_remat = 0
    wy = np.empty(d)
    x_cur = np.empty(d)
    while raw < cap_updates:
        z, u1 = _sm_next(z)
        z, u2 = _sm_next(z)
        j = int(u1 * m)
        if j >= m:
            j = m - 1
        i = j if u2 < prob[j] else alias[j]

        ax = (cxx + theta * cvx) * inv1t
        av = (cxv + theta * cvv) * inv1t
        yi = D[i] * (ax * xh[i] + av * vh[i])  # unscaled dual coordinate
        dot_wx = 0.0
        dot_wv = 0.0
        dot_s = 0.0
        for k in range(row_ptr[i], row_ptr[i + 1]):
            c = col_idx[k]
            val = values[k]
            dot_wx += val * wx[c]
            dot_wv += val * wv[c]
            dot_s += val * s_vec[c]
        that, ok = _psi_prime_inv(kind, yi / scale_c[i] + lin_g[i], shift_b[i])
        if not ok:
            return work, False, best_gap, i
        g = D[i] * (that + (ax * dot_wx + av * dot_wv) / lam - dot_s)
        s1 = -g / Lam[i]
        s2 = -g * theta / p_true[i]
        ncxx = m00 * cxx + m01 * cvx
        ncvx = m01 * cxx + m00 * cvx
        ncxv = m00 * cxv + m01 * cvv
        ncvv = m01 * cxv + m00 * cvv
        cxx = ncxx
        cxv = ncxv
        cvx = ncvx
        cvv = ncvv
        det = cxx * cvv - cxv * cvx
        if np.abs(det) < 1e-60:
            # representation degenerated (theta ~ 1); fold it into the state
            # and continue from the identity -- visible iterates unchanged
            for q in range(m):
                xq = cxx * xh[q] + cxv * vh[q]
                vq = cvx * xh[q] + cvv * vh[q]
                xh[q] = xq
                vh[q] = vq
            for c in range(d):
                wxc = cxx * wx[c] + cxv * wv[c]
                wvc = cvx * wx[c] + cvv * wv[c]
                wx[c] = wxc
                wv[c] = wvc
            cxx = 1.0
            cxv = 0.0
            cvx = 0.0
            cvv = 1.0
            since_remat = 0
            det = 1.0
        dxh = (cvv * s1 - cxv * s2) / det
        dvh = (-cvx * s1 + cxx * s2) / det
        xh[i] += dxh
        vh[i] += dvh
        dterm = D[i]
        for k in range(row_ptr[i], row_ptr[i + 1]):
            c = col_idx[k]
            val = values[k] * dterm
            wx[c] += val * dxh
            wv[c] += val * dvh
        raw += 1
        work += 1.0
        since_monitor += 1
        since_remat += 1

        if since_remat >= remat_every and since_monitor < monitor_every:
            for q in range(m):
                xq = cxx * xh[q] + cxv * vh[q]
                vq = cvx * xh[q] + cvv * vh[q]
                xh[q] = xq
                vh[q] = vq
            for c in range(d):
                wxc = cxx * wx[c] + cxv * wv[c]
                wvc = cvx * wx[c] + cvv * wv[c]
                wx[c] = wxc
                wv[c] = wvc
            cxx = 1.0
            cxv = 0.0
            cvx = 0.0
            cvv = 1.0
            since_remat = 0

        if since_monitor >= monitor_every or raw >= cap_updates:
            since_monitor = 0
            for q in range(m):
                xq = cxx * xh[q] + cxv * vh[q]
                vq = cvx * xh[q] + cvv * vh[q]
                xh[q] = xq
                vh[q] = vq
            cxx = 1.0
            cxv = 0.0
            cvx = 0.0
            cvv = 1.0
            since_remat = 0
            _erm_refresh(row_ptr, col_idx, values, D, xh, vh, wx, wv)
            ayx = inv1t
            ayv = theta * inv1t
            for c in range(d):
                wy[c] = ayx * wx[c] + ayv * wv[c]
                x_cur[c] = s_vec[c] - wy[c] / lam
            gval = 0.0
            gn2 = 0.0
            pval = 0.0
            fail = -1
            for q in range(m):
                acc = 0.0
                for k in range(row_ptr[q], row_ptr[q + 1]):
                    acc += values[k] * x_cur[col_idx[k]]
                yq = D[q] * (ayx * xh[q] + ayv * vh[q])
                that, ok = _psi_prime_inv(kind, yq / scale_c[q] + lin_g[q],
                                          shift_b[q])
                if not ok:
                    fail = q
                    break
                gval += yq * that - scale_c[q] * (
                    _psi_value(kind, that, shift_b[q]) - lin_g[q] * that)
                # b_q^T(wy/lam - s) = -(B x)_q, so grad_q = D_q*(that - (Bx)_q)
                gq = D[q] * (that - acc)
                gn2 += gq * gq
                pval += scale_c[q] * (_psi_value(kind, acc, shift_b[q])
                                      - lin_g[q] * acc)
            if fail >= 0:
                return work, False, best_gap, fail
            wy2 = 0.0
            swy = 0.0
            for c in range(d):
                wy2 += wy[c] * wy[c]
                swy += s_vec[c] * wy[c]
            gval += wy2 / (2.0 * lam) - swy
            pval += wy2 / (2.0 * lam)  # (lam/2)||x-s||^2 with x-s = -wy/lam
            dual_gap = pval + gval
            lb = p0 + gval - 0.5 * gn2
            work += m
            if dual_gap < best_gap:
                best_gap = dual_gap
                for c in range(d):
                    x_out[c] = x_cur[c]
            scale = 1.0 if pval < 0.0 else pval
            if raw >= floor_updates and (
                    dual_gap <= eps_rel * lb
                    or dual_gap <= 1e-13 * (1.0 + scale)):
                certified = True
                break
    return work, certified, best_gap, -1


def erm_dual_acd(B_csr, kind, shift_b, lin_g, scale_c, s_vec, lam, M_bound,
                 epsilon, seed, p0, budget_factor=4.0):
    """Python wrapper for the generalized-dual kernel.

    Minimizes sum_t c_t*(psi(b_t^T x) - g_t*b_t^T x) + (lam/2)||x - s||^2 via
    its rescaled dual. Returns (x_primal, work, certified, best_gap, fail_idx).
    """
    row_ptr, col_idx, values, m, d, rnsq = B_csr
    scale_c = np.ascontiguousarray(scale_c, dtype=np.float64)
    L_t = M_bound * scale_c
    D = np.sqrt(L_t)
    Lam = M_bound * M_bound + L_t * rnsq / lam
    sqrt_Lam = np.sqrt(Lam)
    S = float(sqrt_Lam.sum())
    theta = 1.0 / S
    p_true = sqrt_Lam / S
    prob, alias = build_alias_table(p_true)
    theory = int(np.ceil(S * np.log(6.0 / epsilon))) + 1
    floor = 0
    cap = int(np.ceil(budget_factor * theory))
    monitor_every = max(m, 64)
    remat_every = _remat_cadence(S, theta)
    x_out = np.zeros(d)
    args = (row_ptr, col_idx, values, int(kind),
            np.ascontiguousarray(shift_b, dtype=np.float64),
            np.ascontiguousarray(lin_g, dtype=np.float64),
            scale_c,
            np.ascontiguousarray(s_vec, dtype=np.float64),
            float(lam), theta, D, Lam, p_true, prob, alias, U64(seed),
            floor, cap, float(epsilon), float(p0), monitor_every,
            remat_every, x_out)
    with np.errstate(over="ignore"):
        work, cert, gap, fail_idx = _erm_acd_core(*args)
    return x_out, work, bool(cert), float(gap), int(fail_idx)
