# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot-loop kernels.

Mirrors `_pycore` exactly: same recursions, same uniform-consumption order.
See that module for the input conventions.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, lgamma, log, log1p, sqrt, floor, INFINITY
from libc.stdlib cimport qsort

from ..errors import NumericError

cnp.import_array()

BACKEND_NAME = "cython"

cdef double LOG_2PI = 1.8378770664093454835606594728112
cdef int KIND_GAUSS = 0
cdef int KIND_AR = 1
cdef int KIND_FLAT = 2
cdef int MAX_LAG = 16


cdef int _cmp_desc(const void* a, const void* b) noexcept nogil:
    cdef double x = (<const double*> a)[0]
    cdef double y = (<const double*> b)[0]
    if x > y:
        return -1
    if x < y:
        return 1
    return 0


cdef double _seg_ld(int kind, double[:, ::1] mats, double[::1] vec,
                    double p1, double p2, Py_ssize_t s, Py_ssize_t t,
                    double* scratch) except? 1e300:
    """Log marginal density of segment (s, t] from the prefix pack."""
    cdef Py_ssize_t n = t - s
    cdef double total, ss, scale
    cdef Py_ssize_t L, i, j, k
    cdef double acc, quad, beta_st, alpha_st, logdet, val
    cdef double* M
    cdef double* ev
    if kind == KIND_FLAT or n == 0:
        return 0.0
    if kind == KIND_GAUSS:
        total = mats[0, t] - mats[0, s]
        ss = mats[1, t] - mats[1, s]
        scale = n * p2 + p1
        return (-0.5 * n * (LOG_2PI + log(p1))
                + 0.5 * (log(p1) - log(scale))
                - ss / (2.0 * p1)
                + p2 * total * total / (2.0 * p1 * scale))
    # AR: assemble M = H'H + D^-1 and E = y'H from prefix differences,
    # then a small in-place Cholesky.
    L = vec.shape[0]
    M = scratch
    ev = scratch + L * L
    for i in range(L):
        for j in range(L):
            M[i * L + j] = mats[(i + 1) * (L + 1) + (j + 1), t] - mats[(i + 1) * (L + 1) + (j + 1), s]
        M[i * L + i] += 1.0 / vec[i]
        ev[i] = mats[i + 1, t] - mats[i + 1, s]
    ss = mats[0, t] - mats[0, s]
    logdet = 0.0
    for i in range(L):
        for j in range(i + 1):
            acc = M[i * L + j]
            for k in range(j):
                acc -= M[i * L + k] * M[j * L + k]
            if i == j:
                if acc <= 0.0:
                    raise NumericError("Cholesky breakdown in segment density")
                M[i * L + i] = sqrt(acc)
                logdet += log(M[i * L + i])
            else:
                M[i * L + j] = acc / M[j * L + j]
    quad = 0.0
    for i in range(L):
        acc = ev[i]
        for k in range(i):
            acc -= M[i * L + k] * ev[k]
        ev[i] = acc / M[i * L + i]
        quad += ev[i] * ev[i]
    beta_st = p2 + 0.5 * (ss - quad)
    if beta_st <= 0.0:
        raise NumericError("posterior rate collapsed; numerical breakdown")
    alpha_st = p1 + 0.5 * n
    val = 0.0
    for i in range(L):
        val -= log(vec[i])
    return (-0.5 * n * LOG_2PI
            + 0.5 * (-2.0 * logdet + val)
            + p1 * log(p2)
            - alpha_st * log(beta_st)
            + lgamma(alpha_st) - lgamma(p1))


def seg_logdens(int kind, double[:, ::1] mats, double[::1] vec,
                double p1, double p2, Py_ssize_t s, Py_ssize_t t):
    """Log marginal density of segment (s, t] from a prefix pack."""
    cdef double scratch[16 * 16 + 16]
    if kind == KIND_AR and vec.shape[0] > MAX_LAG:
        raise NumericError(f"compiled kernel supports lag order <= {MAX_LAG}")
    return _seg_ld(kind, mats, vec, p1, p2, s, t, scratch)


cdef inline double _lookahead(Py_ssize_t v, Py_ssize_t u, Py_ssize_t T,
                              double[:, ::1] child_base, unsigned char[:, ::1] child_u,
                              double[::1] child_c, double[::1] child_q,
                              double[::1] log1mq) noexcept nogil:
    cdef Py_ssize_t C = child_c.shape[0]
    cdef double prod = 1.0, p
    cdef Py_ssize_t c
    if u > T or C == 0:
        return 1.0
    for c in range(C):
        p = child_base[c, u]
        if v > 0:
            p += child_c[c] * child_q[c] * exp((u - v - 2) * log1mq[c])
        if child_u[c, u]:
            prod *= p
        else:
            prod *= 1.0 - p
    return prod


cdef double _logsumexp(double* a, Py_ssize_t n) noexcept nogil:
    cdef double m = -INFINITY
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        if a[i] > m:
            m = a[i]
    if m == -INFINITY:
        return m
    for i in range(n):
        acc += exp(a[i] - m)
    return m + log(acc)


cdef double _solve_kappa(double* w, Py_ssize_t M, Py_ssize_t n_keep, double* ws,
                         double* suffix) except -1.0:
    cdef Py_ssize_t i, k
    cdef double acc = 0.0, kappa, upper
    for i in range(M):
        ws[i] = w[i]
    qsort(ws, M, sizeof(double), _cmp_desc)
    # tail sums accumulated from the small end: subtracting a prefix from the
    # total cancels catastrophically when the tail is many orders smaller
    for i in range(M - 1, -1, -1):
        acc += ws[i]
        suffix[i] = acc
    for k in range(n_keep):
        kappa = suffix[k] / (n_keep - k)
        upper = ws[k - 1] if k > 0 else INFINITY
        if kappa > 0.0 and upper > kappa >= ws[k]:
            return kappa
    raise NumericError("no feasible resampling threshold (degenerate weights)")


cdef Py_ssize_t _cond_sor(cnp.int64_t* supp, double* lw, Py_ssize_t M,
                          Py_ssize_t n_keep, cnp.int64_t keep, double u,
                          double* wlin, double* ws, double* suffix, double* q_arr,
                          cnp.int64_t* b_idx, cnp.int64_t* sel,
                          unsigned char* flag) except -1:
    """Conditional SOR on (supp, lw); writes survivors back in place, returns
    the new size (<= n_keep). ``flag`` is scratch: 1 = keep outright, 2 = in B.

    Works on max-shifted weights (the threshold equation is scale-equivariant).
    If fewer particles than the budget carry representable mass they are all
    kept outright with the conditioned particle; skipping the stratified draw
    there is exact below float resolution.
    """
    cdef Py_ssize_t i, nB = 0, m, keep_i = -1, cond = -1, p, bi, j
    cdef double kappa, wb_total, lo, v_star, v1, gp, norm
    cdef double mx = -INFINITY
    cdef Py_ssize_t npos = 0
    for i in range(M):
        if supp[i] == keep:
            keep_i = i
        if lw[i] > mx:
            mx = lw[i]
    if keep_i < 0:
        raise NumericError("conditioned state missing from the support")
    for i in range(M):
        wlin[i] = exp(lw[i] - mx)
        if wlin[i] > 0.0:
            npos += 1
    if wlin[keep_i] == 0.0:
        npos += 1
    if npos <= n_keep:
        j = 0
        for i in range(M):
            if wlin[i] > 0.0 or i == keep_i:
                supp[j] = supp[i]
                lw[j] = lw[i]
                j += 1
        norm = _logsumexp(lw, j)
        for i in range(j):
            lw[i] -= norm
        return j
    kappa = _solve_kappa(wlin, M, n_keep, ws, suffix)
    for i in range(M):
        if wlin[i] > kappa:
            flag[i] = 1
        elif wlin[i] > 0.0:
            flag[i] = 2
        else:
            flag[i] = 0
    if flag[keep_i] == 0:
        flag[keep_i] = 2
    m = n_keep
    wb_total = 0.0
    for i in range(M):
        if flag[i] == 1:
            m -= 1
        elif flag[i] == 2:
            if i == keep_i:
                cond = nB
            b_idx[nB] = i
            wb_total += wlin[i]
            nB += 1
    # cumulative normalized B-weights in support order
    norm = 0.0
    for i in range(nB):
        norm += wlin[b_idx[i]] / wb_total
        q_arr[i] = norm
    if cond >= 0:
        lo = q_arr[cond - 1] if cond > 0 else 0.0
        v_star = lo + u * (q_arr[cond] - lo)
        v1 = v_star - floor(m * v_star) / m
    else:
        v1 = u / m
    bi = 0
    for p in range(m):
        gp = v1 + (<double> p) / m
        while bi < nB - 1 and q_arr[bi] < gp:
            bi += 1
        sel[p] = bi
    if cond >= 0:
        j = -1
        for p in range(m):
            if sel[p] == cond:
                j = p
                break
        if j < 0:
            # float-corner guard: the grid point through V* must select cond
            j = 0
            for p in range(1, m):
                if (sel[p] - cond if sel[p] > cond else cond - sel[p]) < \
                   (sel[j] - cond if sel[j] > cond else cond - sel[j]):
                    j = p
            sel[j] = cond
    for p in range(1, m):
        if sel[p] == sel[p - 1]:
            raise NumericError("stratified grid selected a duplicate candidate")
    # merge kept-A and selected-B survivors in support order
    for p in range(m):
        flag[b_idx[sel[p]]] = 3
    j = 0
    for i in range(M):
        if flag[i] == 1:
            supp[j] = supp[i]
            lw[j] = lw[i]
            j += 1
        elif flag[i] == 3:
            supp[j] = supp[i]
            lw[j] = log(kappa) + mx
            j += 1
    norm = _logsumexp(lw, j)
    for i in range(j):
        lw[i] -= norm
    return j


def pg_update(int kind, double[:, ::1] mats, double[::1] vec, double p1, double p2,
              Py_ssize_t T, Py_ssize_t N, double[::1] p_change,
              double[:, ::1] child_base, unsigned char[:, ::1] child_u,
              double[::1] child_c, double[::1] child_q,
              cnp.int64_t[::1] x_star, double[::1] uniforms, collect=False):
    """Conditional particle filter + backward sampling for one series.

    Same contract as `_pycore.pg_update`.
    """
    cdef Py_ssize_t cap_row = min(T, N) + 2
    cdef Py_ssize_t t, i, M, ucount = 0, keep_i, idx, store_pos = 0
    cdef double pt, g, b, birth, norm, u, cum
    cdef double scratch[16 * 16 + 16]

    if kind == KIND_AR and vec.shape[0] > MAX_LAG:
        raise NumericError(f"compiled kernel supports lag order <= {MAX_LAG}")

    supp_np = np.zeros(cap_row, dtype=np.int64)
    lw_np = np.zeros(cap_row, dtype=np.float64)
    new_lw_np = np.zeros(cap_row, dtype=np.float64)
    wlin_np = np.zeros(cap_row, dtype=np.float64)
    ws_np = np.zeros(cap_row, dtype=np.float64)
    suffix_np = np.zeros(cap_row, dtype=np.float64)
    qarr_np = np.zeros(cap_row, dtype=np.float64)
    bidx_np = np.zeros(cap_row, dtype=np.int64)
    sel_np = np.zeros(cap_row, dtype=np.int64)
    flag_np = np.zeros(cap_row, dtype=np.uint8)
    log1mq_np = np.log1p(-np.asarray(child_q))
    cdef double[::1] log1mq = log1mq_np

    cdef Py_ssize_t cap_store
    if T <= N:
        cap_store = T * (T + 1) // 2 + 2
    else:
        cap_store = N * (N + 1) // 2 + (T - N) * N + 2
    store_supp_np = np.zeros(cap_store, dtype=np.int64)
    store_lw_np = np.zeros(cap_store, dtype=np.float64)
    offsets_np = np.zeros(T + 2, dtype=np.int64)
    path_np = np.zeros(T + 1, dtype=np.int64)

    cdef cnp.int64_t[::1] supp = supp_np
    cdef double[::1] lw = lw_np
    cdef double[::1] new_lw = new_lw_np
    cdef cnp.int64_t[::1] store_supp = store_supp_np
    cdef double[::1] store_lw = store_lw_np
    cdef cnp.int64_t[::1] offsets = offsets_np
    cdef cnp.int64_t[::1] path = path_np
    cdef double* wlin = <double*> cnp.PyArray_DATA(wlin_np)
    cdef double* ws = <double*> cnp.PyArray_DATA(ws_np)
    cdef double* suffix = <double*> cnp.PyArray_DATA(suffix_np)
    cdef double* qarr = <double*> cnp.PyArray_DATA(qarr_np)
    cdef cnp.int64_t* bidx = <cnp.int64_t*> cnp.PyArray_DATA(bidx_np)
    cdef cnp.int64_t* sel = <cnp.int64_t*> cnp.PyArray_DATA(sel_np)
    cdef unsigned char* flag = <unsigned char*> cnp.PyArray_DATA(flag_np)

    supp[0] = 0
    lw[0] = 0.0
    M = 1
    offsets[1] = 0
    store_supp[0] = 0
    store_lw[0] = 0.0
    store_pos = 1
    offsets[2] = store_pos

    for t in range(2, T + 1):
        # The conditional transition is used as an unnormalized pair
        # potential: own transition times the other series' next-step
        # transition probabilities under the candidate state. Normalizing it
        # per candidate pair would divide by a quantity that depends on the
        # previous state and change the target distribution.
        pt = p_change[t]
        g = pt * _lookahead(t - 1, t + 1, T, child_base, child_u, child_c, child_q, log1mq)
        for i in range(M):
            b = (1.0 - pt) * _lookahead(supp[i], t + 1, T, child_base, child_u,
                                        child_c, child_q, log1mq)
            new_lw[i] = (lw[i] + log(b)
                         + _seg_ld(kind, mats, vec, p1, p2, supp[i], t, scratch)
                         - _seg_ld(kind, mats, vec, p1, p2, supp[i], t - 1, scratch))
        birth = _logsumexp(&lw[0], M) + log(g)
        new_lw[M] = birth + _seg_ld(kind, mats, vec, p1, p2, t - 1, t, scratch)
        supp[M] = t - 1
        M += 1
        norm = _logsumexp(&new_lw[0], M)
        if norm == -INFINITY or norm != norm:
            raise NumericError(f"all filter weights vanished at t={t}")
        for i in range(M):
            lw[i] = new_lw[i] - norm
        if M > N:
            M = _cond_sor(&supp[0], &lw[0], M, N, x_star[t], uniforms[ucount],
                          wlin, ws, suffix, qarr, bidx, sel, flag)
            ucount += 1
        for i in range(M):
            store_supp[store_pos + i] = supp[i]
            store_lw[store_pos + i] = lw[i]
        store_pos += M
        offsets[t + 1] = store_pos

    # backward pass
    cdef Py_ssize_t lo_off, n_t
    u = uniforms[ucount]
    ucount += 1
    lo_off = offsets[T]
    n_t = offsets[T + 1] - lo_off
    cum = 0.0
    idx = n_t - 1
    for i in range(n_t):
        cum += exp(store_lw[lo_off + i])
        if u < cum:
            idx = i
            break
    path[T] = store_supp[lo_off + idx]
    for t in range(T - 1, 0, -1):
        # Backward weights are w_t(s) times the transition potential into
        # x_{t+1}. A copy (x_{t+1} < t) forces x_t = x_{t+1}; a change pins
        # x_{t+1} = t and the change branch of the potential is constant in s,
        # so the draw reduces to the stored filter weights.
        if path[t + 1] != t:
            path[t] = path[t + 1]
            continue
        lo_off = offsets[t]
        n_t = offsets[t + 1] - lo_off
        norm = _logsumexp(&store_lw[lo_off], n_t)
        u = uniforms[ucount]
        ucount += 1
        cum = 0.0
        idx = n_t - 1
        for i in range(n_t):
            cum += exp(store_lw[lo_off + i] - norm)
            if u < cum:
                idx = i
                break
        path[t] = store_supp[lo_off + idx]

    systems = None
    if collect:
        systems = [None]
        for t in range(1, T + 1):
            lo_off = offsets[t]
            n_t = offsets[t + 1] - lo_off
            systems.append((store_supp_np[lo_off:lo_off + n_t].copy(),
                            store_lw_np[lo_off:lo_off + n_t].copy()))
    return path_np, systems


def single_site_sweep(int kind, double[:, ::1] mats, double[::1] vec, double p1, double p2,
                      Py_ssize_t T, double[::1] p_change,
                      double[:, ::1] child_base, unsigned char[:, ::1] child_u,
                      double[::1] child_c, double[::1] child_q,
                      cnp.int64_t[::1] xj, double[::1] uniforms):
    """One single-site Gibbs sweep over one series' change indicators.

    Same contract as `_pycore.single_site_sweep`.
    """
    cdef Py_ssize_t t, v, b_end, hi, c, v2, w, a
    cdef Py_ssize_t C = child_c.shape[0]
    cdef double pt, lr, cc, cq, base, pn, po, p_one
    cdef double scratch[16 * 16 + 16]
    cdef cnp.int64_t fill

    if kind == KIND_AR and vec.shape[0] > MAX_LAG:
        raise NumericError(f"compiled kernel supports lag order <= {MAX_LAG}")

    x_np = np.asarray(xj).copy()
    cdef cnp.int64_t[::1] x = x_np
    log1mq_np = np.log1p(-np.asarray(child_q))
    cdef double[::1] log1mq = log1mq_np

    for t in range(2, T + 1):
        a = x[t - 1]
        v = t + 1
        while v <= T and x[v] != v - 1:
            v += 1
        b_end = v - 1 if v <= T else T
        pt = p_change[t]
        lr = log(pt) - log1p(-pt)
        lr += (_seg_ld(kind, mats, vec, p1, p2, a, t - 1, scratch)
               + _seg_ld(kind, mats, vec, p1, p2, t - 1, b_end, scratch)
               - _seg_ld(kind, mats, vec, p1, p2, a, b_end, scratch))
        hi = b_end + 1 if b_end + 1 < T else T
        for c in range(C):
            cc = child_c[c]
            cq = child_q[c]
            for v2 in range(t + 1, hi + 1):
                base = child_base[c, v2]
                pn = base + cc * cq * exp((v2 - t - 1) * log1mq[c])
                po = base
                if a > 0:
                    po += cc * cq * exp((v2 - a - 2) * log1mq[c])
                if child_u[c, v2]:
                    lr += log(pn) - log(po)
                else:
                    lr += log1p(-pn) - log1p(-po)
        if lr > 36.0:
            p_one = 1.0
        elif lr < -36.0:
            p_one = 0.0
        else:
            p_one = 1.0 / (1.0 + exp(-lr))
        fill = t - 1 if uniforms[t - 2] < p_one else a
        for w in range(t, b_end + 1):
            x[w] = fill
    return x_np
