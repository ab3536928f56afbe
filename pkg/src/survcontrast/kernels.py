"""Hot numeric kernels.

Every kernel here has two routes: a loop-level body compiled with ``numba.njit``
and a numpy route used when ``SURVCONTRAST_DISABLE_NUMBA`` is set. Loop bodies
that have no useful vectorised form (PAVA, the simplex) run as plain Python in
fallback mode. Public wrappers at the bottom pick the route.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# solver status codes shared with contrast.SupResult
STATUS_EXACT = 0
STATUS_CONVERGED = 1
STATUS_MAXITER = 2


# ---------------------------------------------------------------------------
# product-limit survival for many linear predictors
# ---------------------------------------------------------------------------

@njit
def _survival_products_loop(exp_eta, dlam):
    out = np.empty(exp_eta.shape[0])
    n_clamped = 0
    for i in range(exp_eta.shape[0]):
        s = 1.0
        e = exp_eta[i]
        for k in range(dlam.shape[0]):
            q = dlam[k] * e
            if q >= 1.0:
                if q > 1.0:
                    n_clamped += 1
                q = 1.0
            s *= 1.0 - q
        out[i] = s
    return out, n_clamped


def _survival_products_numpy(exp_eta, dlam):
    out = np.ones(exp_eta.shape[0])
    n_clamped = 0
    for k in range(dlam.shape[0]):
        q = dlam[k] * exp_eta
        n_clamped += int(np.count_nonzero(q > 1.0))
        out *= 1.0 - np.minimum(q, 1.0)
    return out, n_clamped


# ---------------------------------------------------------------------------
# per-subject pieces of the estimated influence function
# ---------------------------------------------------------------------------

@njit
def _martingale_terms_loop(exp_s, exp_c, y, delta, t, ev_times, ev_dlam,
                           c_times, c_dlam, floor):
    n = y.shape[0]
    n_ev = ev_times.shape[0]
    n_c = c_times.shape[0]
    s_t = np.empty(n)
    h = np.zeros(n)
    j_term = np.zeros(n)
    n_clip = 0
    for i in range(n):
        es = exp_s[i]
        ec = exp_c[i]
        yi = y[i]
        upper = yi if yi < t else t
        s = 1.0
        g_left = 1.0
        l = 0
        s_y_left = 1.0
        s_y = 1.0
        acc = 0.0
        for k in range(n_ev):
            u = ev_times[k]
            if u > t:
                break
            while l < n_c and c_times[l] < u:
                qc = c_dlam[l] * ec
                if qc > 1.0:
                    qc = 1.0
                g_left *= 1.0 - qc
                l += 1
            q = ev_dlam[k] * es
            if q > 1.0:
                q = 1.0
            s *= 1.0 - q
            if u < yi:
                s_y_left = s
            if u <= yi:
                s_y = s
            if u <= upper:
                den = s * g_left
                if den < floor:
                    den = floor
                    n_clip += 1
                acc += q / den
        s_t[i] = s
        h[i] = acc
        if delta[i] == 1 and yi <= t:
            g_y = 1.0
            for m in range(n_c):
                if c_times[m] >= yi:
                    break
                qc = c_dlam[m] * ec
                if qc > 1.0:
                    qc = 1.0
                g_y *= 1.0 - qc
            r = s_y_left * g_y
            if r < floor:
                r = floor
                n_clip += 1
            den = s_y * r
            if den < floor:
                den = floor
                n_clip += 1
            j_term[i] = s_y_left / den
    return s_t, h, j_term, n_clip


def _cumulative_survival(exp_eta, times, dlam):
    # column k holds the product over jumps 0..k; a leading column of ones
    q = np.minimum(np.multiply.outer(exp_eta, dlam), 1.0)
    surv = np.ones((exp_eta.shape[0], times.shape[0] + 1))
    if times.shape[0]:
        surv[:, 1:] = np.cumprod(1.0 - q, axis=1)
    return q, surv


def _martingale_terms_numpy(exp_s, exp_c, y, delta, t, ev_times, ev_dlam,
                            c_times, c_dlam, floor):
    n = y.shape[0]
    keep = ev_times <= t
    ev_times = ev_times[keep]
    ev_dlam = ev_dlam[keep]
    rows = np.arange(n)

    q, surv = _cumulative_survival(exp_s, ev_times, ev_dlam)
    _, gsurv = _cumulative_survival(exp_c, c_times, c_dlam)
    s_t = surv[:, -1].copy()

    g_left = gsurv[:, np.searchsorted(c_times, ev_times, side="left")]
    den = surv[:, 1:] * g_left
    upper = np.minimum(y, t)
    active = ev_times[None, :] <= upper[:, None]
    low = active & (den < floor)
    n_clip = int(np.count_nonzero(low))
    den = np.where(low, floor, np.where(active, den, 1.0))
    h = np.where(active, q / den, 0.0).sum(axis=1)

    j_term = np.zeros(n)
    has_j = (delta == 1) & (y <= t)
    if np.any(has_j):
        idx = rows[has_j]
        yj = y[has_j]
        s_left = surv[idx, np.searchsorted(ev_times, yj, side="left")]
        s_at = surv[idx, np.searchsorted(ev_times, yj, side="right")]
        g_y = gsurv[idx, np.searchsorted(c_times, yj, side="left")]
        r = s_left * g_y
        low_r = r < floor
        r = np.where(low_r, floor, r)
        d = s_at * r
        low_d = d < floor
        d = np.where(low_d, floor, d)
        n_clip += int(np.count_nonzero(low_r)) + int(np.count_nonzero(low_d))
        j_term[idx] = s_left / d
    return s_t, h, j_term, n_clip


# ---------------------------------------------------------------------------
# weighted pool-adjacent-violators (non-decreasing fit)
# ---------------------------------------------------------------------------

@njit
def _pava(y, w):
    n = y.shape[0]
    val = np.empty(n)
    wt = np.empty(n)
    size = np.empty(n, dtype=np.int64)
    top = -1
    for i in range(n):
        top += 1
        val[top] = y[i]
        wt[top] = w[i]
        size[top] = 1
        while top > 0 and val[top - 1] > val[top]:
            wsum = wt[top - 1] + wt[top]
            val[top - 1] = (wt[top - 1] * val[top - 1] + wt[top] * val[top]) / wsum
            wt[top - 1] = wsum
            size[top - 1] += size[top]
            top -= 1
    out = np.empty(n)
    pos = 0
    for b in range(top + 1):
        for _ in range(size[b]):
            out[pos] = val[b]
            pos += 1
    return out


# ---------------------------------------------------------------------------
# monotone coefficients under a unit empirical-variance bound
# ---------------------------------------------------------------------------

@njit
def _monotone_variance_exact(c, p):
    # Moreau: sup over a cone K of <v, b>_p with ||b||_p <= 1 is ||proj_K v||_p
    k = c.shape[0]
    v = c / p
    vbar = 0.0
    for j in range(k):
        vbar += p[j] * v[j]
    best = 0.0
    beta = np.zeros(k)
    for sgn in (1.0, -1.0):
        z = _pava(sgn * (v - vbar), p)
        nrm2 = 0.0
        for j in range(k):
            nrm2 += p[j] * z[j] * z[j]
        nrm = np.sqrt(nrm2)
        if nrm > best:
            best = nrm
            beta = z / nrm
    return best, beta


@njit
def _project_monotone_ball(x, p):
    k = x.shape[0]
    xbar = 0.0
    for j in range(k):
        xbar += p[j] * x[j]
    z = _pava(x - xbar, p)
    nrm2 = 0.0
    for j in range(k):
        nrm2 += p[j] * z[j] * z[j]
    if nrm2 > 1.0:
        z = z / np.sqrt(nrm2)
    return z


@njit
def _monotone_variance_pg(c, p, max_iter, tol):
    k = c.shape[0]
    best = 0.0
    beta = np.zeros(k)
    status = STATUS_CONVERGED
    for sgn in (1.0, -1.0):
        obj = sgn * c
        v = obj / p
        nrm2 = 0.0
        for j in range(k):
            nrm2 += p[j] * v[j] * v[j]
        if nrm2 == 0.0:
            continue
        step = 1.0 / np.sqrt(nrm2)
        b = np.zeros(k)
        val = 0.0
        done = False
        for _ in range(max_iter):
            b_new = _project_monotone_ball(b + step * v, p)
            val_new = 0.0
            for j in range(k):
                val_new += obj[j] * b_new[j]
            improvement = val_new - val
            if improvement >= 0.0:
                b = b_new
                val = val_new
            if improvement < tol:
                done = True
                break
        if not done:
            status = STATUS_MAXITER
        if val > best:
            # b is monotone for either sign; |c @ b| = val
            best = val
            beta = b.copy()
    return best, beta, status


# ---------------------------------------------------------------------------
# dense tableau simplex for the box + total-variation LP
# ---------------------------------------------------------------------------

@njit
def _simplex_solve(tab, basis, max_iter):
    # maximise; last row holds negated reduced costs, last column the rhs.
    # Dantzig pricing, switching to Bland's rule after a run of degenerate pivots.
    m = tab.shape[0] - 1
    ncol = tab.shape[1] - 1
    eps = 1e-12
    degenerate = 0
    bland = False
    for it in range(max_iter):
        enter = -1
        if bland:
            for j in range(ncol):
                if tab[m, j] < -eps:
                    enter = j
                    break
        else:
            most = -eps
            for j in range(ncol):
                if tab[m, j] < most:
                    most = tab[m, j]
                    enter = j
        if enter < 0:
            return STATUS_EXACT, it
        leave = -1
        best = np.inf
        for i in range(m):
            a = tab[i, enter]
            if a > eps:
                ratio = tab[i, ncol] / a
                if ratio < best - eps or (ratio <= best + eps and leave >= 0
                                          and basis[i] < basis[leave]):
                    best = ratio
                    leave = i
        if leave < 0:
            return STATUS_MAXITER, it  # unbounded; cannot happen for a bounded polytope
        if best <= eps:
            degenerate += 1
            if degenerate > 50:
                bland = True
        else:
            degenerate = 0
        piv = tab[leave, enter]
        for j in range(ncol + 1):
            tab[leave, j] /= piv
        for i in range(m + 1):
            if i != leave:
                f = tab[i, enter]
                if f != 0.0:
                    for j in range(ncol + 1):
                        tab[i, j] -= f * tab[leave, j]
        basis[leave] = enter
    return STATUS_MAXITER, max_iter


@njit
def _box_tv_lp(c, lam, max_iter):
    # variables x = beta + 1 in [0, 2] (k of them) and d_j >= |beta_j - beta_{j-1}|
    k = c.shape[0]
    beta = np.zeros(k)
    scale = 0.0
    for j in range(k):
        if abs(c[j]) > scale:
            scale = abs(c[j])
    if scale == 0.0 or k == 0:
        return 0.0, beta, STATUS_EXACT
    cs = c / scale
    nd = k - 1
    nv = k + nd
    m = k + 2 * nd + 1
    tab = np.zeros((m + 1, nv + m + 1))
    rhs = nv + m
    row = 0
    for j in range(k):
        tab[row, j] = 1.0
        tab[row, rhs] = 2.0
        row += 1
    for j in range(1, k):
        tab[row, j] = 1.0
        tab[row, j - 1] = -1.0
        tab[row, k + j - 1] = -1.0
        row += 1
        tab[row, j] = -1.0
        tab[row, j - 1] = 1.0
        tab[row, k + j - 1] = -1.0
        row += 1
    for j in range(nd):
        tab[row, k + j] = 1.0
    tab[row, rhs] = lam
    row += 1
    basis = np.empty(m, dtype=np.int64)
    for i in range(m):
        tab[i, nv + i] = 1.0
        basis[i] = nv + i
    for j in range(k):
        tab[m, j] = -cs[j]
    status, _ = _simplex_solve(tab, basis, max_iter)
    x = np.zeros(nv)
    for i in range(m):
        if basis[i] < nv:
            x[basis[i]] = tab[i, rhs]
    value = 0.0
    for j in range(k):
        b = x[j] - 1.0
        if b > 1.0:
            b = 1.0
        elif b < -1.0:
            b = -1.0
        beta[j] = b
        value += c[j] * b
    return value, beta, status


# ---------------------------------------------------------------------------
# batched supremum over many Gaussian draws
# ---------------------------------------------------------------------------

@njit
def _batch_box_tv(xi, lam, max_iter):
    out = np.empty(xi.shape[0])
    status = np.empty(xi.shape[0], dtype=np.int64)
    for u in range(xi.shape[0]):
        v, _, s = _box_tv_lp(xi[u].copy(), lam, max_iter)
        out[u] = v
        status[u] = s
    return out, status


@njit
def _batch_monotone_exact(xi, p):
    out = np.empty(xi.shape[0])
    for u in range(xi.shape[0]):
        v, _ = _monotone_variance_exact(xi[u].copy(), p)
        out[u] = v
    return out


@njit
def _batch_monotone_pg(xi, p, max_iter, tol):
    out = np.empty(xi.shape[0])
    status = np.empty(xi.shape[0], dtype=np.int64)
    for u in range(xi.shape[0]):
        v, _, s = _monotone_variance_pg(xi[u].copy(), p, max_iter, tol)
        out[u] = v
        status[u] = s
    return out, status


# ---------------------------------------------------------------------------
# public wrappers
# ---------------------------------------------------------------------------

def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def survival_products(exp_eta, dlam):
    """Product-limit value ``prod_k (1 - min(dlam_k * exp_eta, 1))`` per element.

    Returns the products (same shape as ``exp_eta``) and the number of
    (element, jump) pairs whose hazard increment had to be clamped at 1.
    """
    exp_eta = np.asarray(exp_eta, dtype=np.float64)
    shape = exp_eta.shape
    flat = _f64(exp_eta.ravel())
    dlam = _f64(dlam)
    if USE_NUMBA:
        out, n_clamped = _survival_products_loop(flat, dlam)
    else:
        out, n_clamped = _survival_products_numpy(flat, dlam)
    return out.reshape(shape), int(n_clamped)


def martingale_terms(exp_s, exp_c, y, delta, t, ev_times, ev_dlam, c_times, c_dlam, floor):
    """Per-subject survival at ``t``, integral term and jump term of the EIF.

    Returns ``(S(t|x_i), H_i, J_i, n_clipped)`` where ``H_i`` sums
    ``dLambda(u|x_i) / (S(u|x_i) G(u-|x_i))`` over event jumps ``u <= min(t, Y_i)``
    and ``J_i = 1(Y_i <= t, delta_i = 1) S(Y_i-|x_i) / (S(Y_i|x_i) R(Y_i|x_i))``.
    """
    args = (_f64(exp_s), _f64(exp_c), _f64(y), np.ascontiguousarray(delta, dtype=np.int64),
            float(t), _f64(ev_times), _f64(ev_dlam), _f64(c_times), _f64(c_dlam), float(floor))
    if USE_NUMBA:
        s_t, h, j, n_clip = _martingale_terms_loop(*args)
    else:
        s_t, h, j, n_clip = _martingale_terms_numpy(*args)
    return s_t, h, j, int(n_clip)


def pava(y, w=None):
    """Weighted least-squares non-decreasing fit by pool-adjacent-violators."""
    y = _f64(y)
    w = np.ones_like(y) if w is None else _f64(w)
    return _pava(y, w)


def monotone_variance_exact(c, p):
    value, beta = _monotone_variance_exact(_f64(c), _f64(p))
    return float(value), beta


def monotone_variance_pg(c, p, max_iter=1000, tol=1e-10):
    value, beta, status = _monotone_variance_pg(_f64(c), _f64(p), int(max_iter), float(tol))
    return float(value), beta, int(status)


def box_tv_lp(c, lam, max_iter=10_000):
    value, beta, status = _box_tv_lp(_f64(c), float(lam), int(max_iter))
    return float(value), beta, int(status)


def batch_box_tv(xi, lam, max_iter=10_000):
    return _batch_box_tv(_f64(xi), float(lam), int(max_iter))


def batch_monotone(xi, p, method="exact", max_iter=1000, tol=1e-10):
    xi = _f64(xi)
    p = _f64(p)
    if method == "exact":
        return _batch_monotone_exact(xi, p), np.full(xi.shape[0], STATUS_EXACT)
    return _batch_monotone_pg(xi, p, int(max_iter), float(tol))
