"""Numpy implementation of the hot sampling kernels.

This is the reference backend; `_ckernels.pyx` mirrors it exactly (same
arithmetic, same uniform-consumption order), so the two are interchangeable
at import time.

All kernels work on one series at a time in "paper" time coordinates: arrays
indexed by t = 1..T with slot 0 unused. Inputs prepared by `netcp.particle`:

- ``p_change[t]``: prior change probability of the series being updated at
  time t, given the other series' frozen states (t = 2..T).
- ``child_base[c, v]``: change probability of child c at transition time v
  with the updated series' contribution removed (the mixture normalizer is
  unchanged), for v = 2..T.
- ``child_u[c, v]``: 1 if child c changes at time v.
- ``child_c[c]`` / ``child_q[c]``: the updated series' mixture weight
  W[j,i]/Z_i and decay rate q[j,i] toward child c.

Density evaluation uses the prefix packs built by `segments.SeriesDensity`.
"""

import math

import numpy as np
from scipy.special import gammaln

from ..errors import NumericError
from ..segments import (KIND_AR, KIND_FLAT, KIND_GAUSS,
                        _ar_log_marginal_from_parts, _gauss_log_marginal_from_sums)

BACKEND_NAME = "python"


def seg_logdens(kind, mats, vec, p1, p2, s, t):
    """Log marginal density of segment (s, t] from a prefix pack."""
    if kind == KIND_FLAT or s == t:
        return 0.0
    n = t - s
    if kind == KIND_GAUSS:
        total = mats[0, t] - mats[0, s]
        ss = mats[1, t] - mats[1, s]
        return _gauss_log_marginal_from_sums(n, total, ss, p1, p2)
    L = vec.size
    G = (mats[:, t] - mats[:, s]).reshape(L + 1, L + 1)
    return _ar_log_marginal_from_parts(n, G[0, 0], G[0, 1:], G[1:, 1:], p1, p2, vec)


def _seg_logdens_vec(kind, mats, vec, p1, p2, s_arr, t):
    """Vectorized seg_logdens over an array of segment starts (fixed end t)."""
    s_arr = np.asarray(s_arr)
    out = np.zeros(s_arr.size)
    if kind == KIND_FLAT:
        return out
    live = s_arr < t
    s_live = s_arr[live]
    n = t - s_live
    if kind == KIND_GAUSS:
        total = mats[0, t] - mats[0, s_live]
        ss = mats[1, t] - mats[1, s_live]
        scale = n * p2 + p1
        out[live] = (-0.5 * n * (math.log(2 * math.pi) + math.log(p1))
                     + 0.5 * (math.log(p1) - np.log(scale))
                     - ss / (2.0 * p1)
                     + p2 * total * total / (2.0 * p1 * scale))
        return out
    L = vec.size
    if L == 1:
        g00 = mats[0, t] - mats[0, s_live]
        g01 = mats[1, t] - mats[1, s_live]
        g11 = mats[3, t] - mats[3, s_live]
        M = g11 + 1.0 / vec[0]
        beta_st = p2 + 0.5 * (g00 - g01 * g01 / M)
        if np.any(beta_st <= 0.0):
            raise NumericError("posterior rate collapsed; numerical breakdown")
        alpha_st = p1 + 0.5 * n
        out[live] = (-0.5 * n * math.log(2 * math.pi)
                     + 0.5 * (-np.log(M) - math.log(vec[0]))
                     + p1 * math.log(p2) - alpha_st * np.log(beta_st)
                     + gammaln(alpha_st) - gammaln(p1))
        return out
    for k, s in zip(np.flatnonzero(live), s_live):
        out[k] = seg_logdens(kind, mats, vec, p1, p2, int(s), t)
    return out


def _lookahead_vec(v_arr, u, T, child_base, child_u, child_c, child_q, log1mq):
    """Product over children of the branch probability of their transition at
    time u, as a function of the updated series' state v (vectorized over v).

    Returns ones when u is beyond the horizon (no look-ahead at t = T).
    """
    v_arr = np.asarray(v_arr)
    prod = np.ones(v_arr.size)
    if u > T or child_c.size == 0:
        return prod
    for c in range(child_c.size):
        p = np.full(v_arr.size, child_base[c, u])
        mask = v_arr > 0
        if np.any(mask):
            p[mask] += child_c[c] * child_q[c] * np.exp((u - v_arr[mask] - 2) * log1mq[c])
        prod *= p if child_u[c, u] else 1.0 - p
    return prod


def _logsumexp(a):
    m = np.max(a)
    if not np.isfinite(m):
        return m
    return m + math.log(np.exp(a - m).sum())


def solve_kappa(weights, n_keep):
    """Threshold kappa with sum_s min(w_s / kappa, 1) = n_keep, in closed form.

    Sorts descending; with the k largest kept outright the candidate is
    kappa = (tail weight) / (n_keep - k); the first k for which the prefix
    weights all exceed kappa and the tail weights do not is the solution.
    """
    w = np.asarray(weights, dtype=float)
    ws = np.sort(w)[::-1]
    # tail sums accumulated from the small end: subtracting a prefix from the
    # total cancels catastrophically when the tail is many orders smaller
    suffix = np.cumsum(ws[::-1])[::-1]
    for k in range(n_keep):
        kappa = suffix[k] / (n_keep - k)
        upper = ws[k - 1] if k > 0 else math.inf
        if kappa > 0.0 and upper > kappa >= ws[k]:
            return kappa
    raise NumericError("no feasible resampling threshold (degenerate weights)")


def stratified_pick(wb, m, u, cond_idx=None):
    """Indices into the candidate set surviving stratified resampling.

    ``wb`` are normalized candidate weights in ascending support order, ``m``
    the number of survivors, ``u`` a single uniform draw. Unconditioned: the
    grid starts at V1 = u/m. Conditioned on candidate ``cond_idx``: V* is
    placed uniformly inside that candidate's CDF bracket and the grid is the
    one passing through V*, which guarantees the candidate survives.
    A particle s survives when some grid point falls in (Q(s-1), Q(s)].
    """
    Q = np.cumsum(wb)
    if cond_idx is None:
        v1 = u / m
    else:
        lo = Q[cond_idx - 1] if cond_idx > 0 else 0.0
        v_star = lo + u * (Q[cond_idx] - lo)
        v1 = v_star - math.floor(m * v_star) / m
    grid = v1 + np.arange(m) / m
    idx = np.searchsorted(Q, grid, side="left")
    idx = np.minimum(idx, wb.size - 1)
    if cond_idx is not None and cond_idx not in idx:
        # float-corner guard: the grid point through V* must select cond_idx
        k = int(np.argmin(np.abs(idx - cond_idx)))
        idx[k] = cond_idx
    if np.unique(idx).size != m:
        raise NumericError("stratified grid selected a duplicate candidate")
    return idx


def conditional_sor_core(weights, n_keep, keep_idx, u):
    """Conditional stratified optimal resampling on normalized weights.

    Returns (survivor index array ascending, new weights, kappa): particles
    with weight above kappa survive unchanged, the rest are stratified-sampled
    and assigned weight kappa; ``keep_idx`` always survives.
    """
    w = np.asarray(weights, dtype=float)
    kappa = solve_kappa(w, n_keep)
    in_a = w > kappa
    in_b = ~in_a & (w > 0.0)
    if not (in_a[keep_idx] or in_b[keep_idx]):
        in_b[keep_idx] = True  # zero-weight conditioned particle; keep per contract
    b_idx = np.flatnonzero(in_b)
    m = n_keep - int(in_a.sum())
    wb = w[b_idx]
    wb = wb / wb.sum()
    cond = None
    if in_b[keep_idx]:
        cond = int(np.searchsorted(b_idx, keep_idx))
    picks = b_idx[stratified_pick(wb, m, u, cond)]
    survivors = np.sort(np.concatenate([np.flatnonzero(in_a), picks]))
    new_w = np.where(in_a[survivors], w[survivors], kappa)
    return survivors, new_w, kappa


def _sor_in_log(lw, n_keep, keep_idx, u):
    """Conditional SOR on normalized log weights (the filter's native scale).

    Works on max-shifted weights (the threshold equation is scale-equivariant)
    so exponentiation only underflows for particles hundreds of nats below the
    best one. If fewer particles than the budget carry representable mass,
    they are all kept outright together with the conditioned particle; the
    distributional error of skipping the stratified draw is below float
    resolution. Returns (survivor indices ascending, new log weights).
    """
    mx = lw.max()
    w = np.exp(lw - mx)
    pos = w > 0.0
    pos[keep_idx] = True
    if int(pos.sum()) <= n_keep:
        sel = np.flatnonzero(pos)
        return sel, lw[sel]
    kappa = solve_kappa(w, n_keep)
    in_a = w > kappa
    in_b = ~in_a & (w > 0.0)
    if not (in_a[keep_idx] or in_b[keep_idx]):
        in_b[keep_idx] = True
    b_idx = np.flatnonzero(in_b)
    m = n_keep - int(in_a.sum())
    wb = w[b_idx]
    wb = wb / wb.sum()
    cond = None
    if in_b[keep_idx]:
        cond = int(np.searchsorted(b_idx, keep_idx))
    picks = b_idx[stratified_pick(wb, m, u, cond)]
    survivors = np.sort(np.concatenate([np.flatnonzero(in_a), picks]))
    new_lw = np.where(in_a[survivors], lw[survivors], math.log(kappa) + mx)
    return survivors, new_lw


def pg_update(kind, mats, vec, p1, p2, T, N, p_change,
              child_base, child_u, child_c, child_q,
              x_star, uniforms, collect=False):
    """Conditional particle filter + backward sampling for one series.

    Runs the support-extension filter (deterministic proposal over the two
    candidate states, conditional SOR when the support exceeds N), then draws
    a new path backward through the stored systems. ``x_star`` is the
    conditioned path (paper-indexed, slot 0 unused); it survives every
    resampling step. Returns (new path, systems or None) where systems is a
    per-time list of (support, normalized log weights).
    """
    log1mq = np.log1p(-child_q)
    ucount = 0
    supp = np.array([0], dtype=np.int64)
    lw = np.array([0.0])
    store_supp = [None, supp]
    store_lw = [None, lw]
    for t in range(2, T + 1):
        # The conditional transition is used as an unnormalized pair
        # potential: own transition times the other series' next-step
        # transition probabilities under the candidate state. Normalizing it
        # per candidate pair would divide by a quantity that depends on the
        # previous state and change the target distribution.
        pt = p_change[t]
        look = _lookahead_vec(np.append(supp, t - 1), t + 1, T,
                              child_base, child_u, child_c, child_q, log1mq)
        b = (1.0 - pt) * look[:-1]
        g = pt * look[-1]
        lpred = (_seg_logdens_vec(kind, mats, vec, p1, p2, supp, t)
                 - _seg_logdens_vec(kind, mats, vec, p1, p2, supp, t - 1))
        new_lw = np.empty(supp.size + 1)
        new_lw[:-1] = lw + np.log(b) + lpred
        birth = _logsumexp(lw) + math.log(g)
        new_lw[-1] = birth + seg_logdens(kind, mats, vec, p1, p2, t - 1, t)
        supp = np.append(supp, t - 1)
        norm = _logsumexp(new_lw)
        if not np.isfinite(norm):
            raise NumericError(f"all filter weights vanished at t={t}")
        lw = new_lw - norm
        if supp.size > N:
            keep_idx = int(np.searchsorted(supp, x_star[t]))
            assert keep_idx < supp.size and supp[keep_idx] == x_star[t]
            sel, lw = _sor_in_log(lw, N, keep_idx, uniforms[ucount])
            ucount += 1
            supp = supp[sel]
            lw = lw - _logsumexp(lw)
        store_supp.append(supp)
        store_lw.append(lw)

    x_new = np.zeros(T + 1, dtype=np.int64)
    w_T = np.exp(store_lw[T] - _logsumexp(store_lw[T]))
    idx = min(int(np.searchsorted(np.cumsum(w_T), uniforms[ucount], side="right")),
              w_T.size - 1)
    ucount += 1
    x_new[T] = store_supp[T][idx]
    for t in range(T - 1, 0, -1):
        # Backward weights are w_t(s) times the transition potential into
        # x_{t+1}. A copy (x_{t+1} < t) forces x_t = x_{t+1}; a change pins
        # x_{t+1} = t and the change branch of the potential is constant in s,
        # so the draw reduces to the stored filter weights.
        if x_new[t + 1] != t:
            x_new[t] = x_new[t + 1]
            continue
        w = np.exp(store_lw[t] - _logsumexp(store_lw[t]))
        idx = min(int(np.searchsorted(np.cumsum(w), uniforms[ucount], side="right")),
                  w.size - 1)
        ucount += 1
        x_new[t] = store_supp[t][idx]
    systems = None
    if collect:
        systems = [None] + [(store_supp[t], store_lw[t]) for t in range(1, T + 1)]
    return x_new, systems


def single_site_sweep(kind, mats, vec, p1, p2, T, p_change,
                      child_base, child_u, child_c, child_q,
                      xj, uniforms):
    """One single-site Gibbs sweep over the change indicators of one series.

    For each t = 2..T in order, redraws the binary event "change at t-1" from
    its full conditional given everything else, re-segmenting the path by
    propagating the copy rule forward to the next change. Returns the new
    paper-indexed path.
    """
    x = xj.copy()
    log1mq = np.log1p(-child_q)
    for t in range(2, T + 1):
        a = int(x[t - 1])
        v = t + 1
        while v <= T and x[v] != v - 1:
            v += 1
        b_end = v - 1 if v <= T else T
        pt = p_change[t]
        lr = math.log(pt) - math.log1p(-pt)
        lr += (seg_logdens(kind, mats, vec, p1, p2, a, t - 1)
               + seg_logdens(kind, mats, vec, p1, p2, t - 1, b_end)
               - seg_logdens(kind, mats, vec, p1, p2, a, b_end))
        hi = min(b_end + 1, T)
        for c in range(child_c.size):
            cc = child_c[c]
            cq = child_q[c]
            for v2 in range(t + 1, hi + 1):
                base = child_base[c, v2]
                pn = base + cc * cq * math.exp((v2 - t - 1) * log1mq[c])
                po = base
                if a > 0:
                    po += cc * cq * math.exp((v2 - a - 2) * log1mq[c])
                if child_u[c, v2]:
                    lr += math.log(pn) - math.log(po)
                else:
                    lr += math.log1p(-pn) - math.log1p(-po)
        if lr > 36.0:
            p_one = 1.0
        elif lr < -36.0:
            p_one = 0.0
        else:
            p_one = 1.0 / (1.0 + math.exp(-lr))
        x[t:b_end + 1] = t - 1 if uniforms[t - 2] < p_one else a
    return x
