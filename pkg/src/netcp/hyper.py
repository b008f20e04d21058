"""Full-conditional and Metropolis updates for the graph hyperparameters.

One sweep of the hyperparameter block is: Gibbs over the edge pairs
(lexicographic), the truncated-Beta draw for the edge density, then joint
random-walk Metropolis on every (weight, rate) pair, backgrounds included.

The path prior of series j is a product of Bernoulli terms whose probability
mixes a background component and one geometric-kernel component per parent.
Each update here moves a single (weight, rate) pair, so the other components
are precomputed once and every proposal evaluation costs one O(T) pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as beta_dist

from .errors import ParameterError
from .prior import GraphParams

RHO_MAX = 0.2

_PAIR_STATES = ((1, 0), (0, 1), (0, 0))


@dataclass
class MhConfig:
    """Random-walk Metropolis tuning for the (weight, rate) pairs."""

    sd_w: float = 0.5
    sd_q: float = 0.05
    inner_thin: int = 15

    def __post_init__(self):
        if self.sd_w <= 0 or self.sd_q <= 0:
            raise ParameterError("proposal standard deviations must be positive")
        if self.inner_thin < 1:
            raise ParameterError("inner_thin must be >= 1")


def _series_changes(j: int, x: np.ndarray) -> np.ndarray:
    T = x.shape[1]
    return x[j, 1:] == np.arange(1, T)


def _parent_distances(i: int, x: np.ndarray):
    """(distance, active) arrays of parent i's geometric kernel over t = 2..T."""
    T = x.shape[1]
    t_arr = np.arange(2, T + 1)
    xm = x[i, t_arr - 2]
    return t_arr - xm - 1, xm > 0


def _kernel_column(dist, active, q: float) -> np.ndarray:
    return q * np.exp((dist - 1) * math.log1p(-q)) * active


def _edge_mix(j: int, x: np.ndarray, g: GraphParams, exclude: int):
    """Sum of the active parents' weighted kernels for series j, optionally
    excluding one parent, plus the excluded weights' total."""
    T = x.shape[1]
    acc = np.zeros(T - 1)
    z_edges = 0.0
    for m in np.flatnonzero(g.A[:, j]):
        if m == exclude:
            continue
        dist, active = _parent_distances(m, x)
        acc += g.W[m, j] * _kernel_column(dist, active, g.q[m, j])
        z_edges += g.W[m, j]
    return acc, z_edges


def _bernoulli_loglik(u: np.ndarray, p: np.ndarray) -> float:
    return float(np.where(u, np.log(p), np.log1p(-p)).sum())


def sample_edge_pair(i: int, j: int, x: np.ndarray, g: GraphParams, rng):
    """Gibbs draw of the edge pair (A[i,j], A[j,i]) from its full conditional.

    The conditional over {(1,0), (0,1), (0,0)} is the pair prior
    (rho/2, rho/2, 1-rho) times the prior of series i's and series j's hidden
    paths under the imputed adjacency; (1,1) has zero mass. Mutates g.A and
    returns the sampled pair.
    """
    if not i < j:
        raise ParameterError("edge pairs are indexed with i < j")
    T = x.shape[1]
    if T < 2:
        lp_j = lp_i = (0.0, 0.0)
    else:
        lp_j = _edge_toggle_logpriors(i, j, x, g)
        lp_i = _edge_toggle_logpriors(j, i, x, g)
    half = math.log(g.rho / 2.0)
    log_masses = np.array([
        half + lp_j[1] + lp_i[0],            # edge i -> j only
        half + lp_j[0] + lp_i[1],            # edge j -> i only
        math.log1p(-g.rho) + lp_j[0] + lp_i[0],
    ])
    p = np.exp(log_masses - log_masses.max())
    p /= p.sum()
    k = min(int(np.searchsorted(np.cumsum(p), rng.random(), side="right")), 2)
    g.A[i, j], g.A[j, i] = _PAIR_STATES[k]
    return _PAIR_STATES[k]


def _edge_toggle_logpriors(parent: int, child: int, x, g: GraphParams):
    """Series ``child`` path log prior without/with the edge parent -> child
    (all other edges as currently set)."""
    u = _series_changes(child, x)
    acc, z_edges = _edge_mix(child, x, g, exclude=parent)
    base = g.W0[child] * g.q0[child] + acc
    z0 = g.W0[child] + z_edges
    without = _bernoulli_loglik(u, base / z0)
    dist, active = _parent_distances(parent, x)
    w, q = g.W[parent, child], g.q[parent, child]
    p_with = (base + w * _kernel_column(dist, active, q)) / (z0 + w)
    return without, _bernoulli_loglik(u, p_with)


def edge_pair_counts(A: np.ndarray):
    """(n1, n2): pairs i<j with an edge in either direction / with none."""
    d = A.shape[0]
    n1 = n2 = 0
    for i in range(d):
        for j in range(i + 1, d):
            if A[i, j] or A[j, i]:
                n1 += 1
            else:
                n2 += 1
    return n1, n2


def sample_rho(A: np.ndarray, rng) -> float:
    """Draw the edge density from Beta(1+n1, 1+n2) truncated to (0, 0.2).

    Uses the inverse CDF on the truncated region (rejection sampling
    degenerates when n1 is large relative to the truncation point).
    """
    n1, n2 = edge_pair_counts(A)
    a, b = 1.0 + n1, 1.0 + n2
    hi = beta_dist.cdf(RHO_MAX, a, b)
    rho = float(beta_dist.ppf(rng.uniform(0.0, hi), a, b))
    return min(max(rho, 1e-12), RHO_MAX - 1e-12)


def mh_update_weight_rate(i, j: int, x: np.ndarray, g: GraphParams,
                          cfg: MhConfig, rng, stats=None):
    """Joint random-walk Metropolis on a (weight, rate) pair.

    ``i is None`` updates the background pair (W0[j], q0[j]); otherwise the
    edge pair (W[i,j], q[i,j]). The target is the series-j path prior times
    Ga(1,1) on the weight and U(0,1) on the rate; when the edge is absent the
    path prior is constant and the move samples the prior, keeping dormant
    edge parameters dispersed. Repeats ``cfg.inner_thin`` times; mutates g and
    returns the final pair. ``stats`` (optional [accepted, proposed] list) is
    updated in place.
    """
    background = i is None
    T = x.shape[1]
    path_dep = (background or g.A[i, j] == 1) and T >= 2
    if background:
        w_cur, q_cur = g.W0[j], g.q0[j]
    else:
        w_cur, q_cur = g.W[i, j], g.q[i, j]

    if path_dep:
        u = _series_changes(j, x)
        if background:
            acc, z_edges = _edge_mix(j, x, g, exclude=-1)

            def logprior(w, q):
                return _bernoulli_loglik(u, (w * q + acc) / (w + z_edges))
        else:
            acc, z_edges = _edge_mix(j, x, g, exclude=i)
            base = g.W0[j] * g.q0[j] + acc
            z0 = g.W0[j] + z_edges
            dist, active = _parent_distances(i, x)

            def logprior(w, q):
                return _bernoulli_loglik(u, (base + w * _kernel_column(dist, active, q))
                                         / (z0 + w))

        lp_cur = logprior(w_cur, q_cur)

    for _ in range(cfg.inner_thin):
        w_prop = w_cur + cfg.sd_w * rng.standard_normal()
        q_prop = q_cur + cfg.sd_q * rng.standard_normal()
        if stats is not None:
            stats[1] += 1
        if w_prop <= 0.0 or not (0.0 < q_prop < 1.0):
            continue
        log_r = w_cur - w_prop  # Ga(1,1) prior ratio
        if path_dep:
            lp_new = logprior(w_prop, q_prop)
            log_r += lp_new - lp_cur
        if math.log(rng.random()) < log_r:
            w_cur, q_cur = w_prop, q_prop
            if path_dep:
                lp_cur = lp_new
            if stats is not None:
                stats[0] += 1
    _set_pair(g, i, j, w_cur, q_cur)
    return w_cur, q_cur


def mh_update_background_rate(j: int, x: np.ndarray, g: GraphParams,
                              cfg: MhConfig, rng, stats=None) -> float:
    """Random-walk Metropolis on q0[j] alone (the empty-graph model updates
    only the background rates)."""
    T = x.shape[1]
    q_cur = g.q0[j]
    path_dep = T >= 2
    if path_dep:
        u = _series_changes(j, x)
        acc, z_edges = _edge_mix(j, x, g, exclude=-1)
        w0 = g.W0[j]

        def logprior(q):
            return _bernoulli_loglik(u, (w0 * q + acc) / (w0 + z_edges))

        lp_cur = logprior(q_cur)
    for _ in range(cfg.inner_thin):
        q_prop = q_cur + cfg.sd_q * rng.standard_normal()
        if stats is not None:
            stats[1] += 1
        if not (0.0 < q_prop < 1.0):
            continue
        log_r = 0.0
        if path_dep:
            lp_new = logprior(q_prop)
            log_r = lp_new - lp_cur
        if math.log(rng.random()) < log_r:
            q_cur = q_prop
            if path_dep:
                lp_cur = lp_new
            if stats is not None:
                stats[0] += 1
    g.q0[j] = q_cur
    return q_cur


def _set_pair(g: GraphParams, i, j: int, w: float, q: float) -> None:
    if i is None:
        g.W0[j] = w
        g.q0[j] = q
    else:
        g.W[i, j] = w
        g.q[i, j] = q
