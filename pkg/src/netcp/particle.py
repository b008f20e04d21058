"""Blocked sampling of one series' hidden-state path.

The particle Gibbs update runs a conditional particle filter over the
series' change-time support (deterministic proposal of the two candidate
states, conditional stratified optimal resampling when the support outgrows
the particle budget) followed by backward sampling. The single-site update is
the classical one-indicator-at-a-time Gibbs baseline. Both leave the joint
posterior invariant; they differ only in mixing speed.

Heavy loops live in ``netcp._kernels`` (compiled when available).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ParameterError
from .prior import GraphParams, _mixture_prob_series, change_prob, change_prob_series
from .segments import SeriesDensity


@dataclass
class ParticleSystem:
    """Support set and normalized log-weights of one filtering step."""

    support: np.ndarray
    log_weights: np.ndarray


def _series_arrays(j: int, x: np.ndarray, g: GraphParams):
    """Per-series inputs consumed by the kernels (see _pycore docstring)."""
    T = x.shape[1]
    p_change = change_prob_series(j, x, g)
    children = np.flatnonzero(g.A[j, :])
    C = children.size
    child_base = np.zeros((C, T + 1))
    child_u = np.zeros((C, T + 1), dtype=np.uint8)
    child_c = np.zeros(C)
    child_q = np.zeros(C)
    for k, i in enumerate(children):
        child_base[k] = _mixture_prob_series(i, x, g, exclude=j)
        child_u[k, 2:] = x[i, 1:] == np.arange(1, T)
        child_c[k] = g.W[j, i] / g.normalizer(i)
        child_q[k] = g.q[j, i]
    return p_change, child_base, child_u, child_c, child_q


def _paper_path(x: np.ndarray, j: int) -> np.ndarray:
    out = np.zeros(x.shape[1] + 1, dtype=np.int64)
    out[1:] = x[j]
    return out


def cond_transition_logpmf(j: int, x: np.ndarray, g: GraphParams, t: int,
                           x_next: int, x_cur: int) -> float:
    """Normalized log PMF of series j's conditional transition into time t.

    The two candidate states are t-1 (change) and x_cur (copy); the PMF is
    proportional to the own transition probability times, for t < T, the
    probability of every other series' observed transition into t+1 under the
    candidate state. Computed directly from the definition (the kernels use an
    algebraically reduced form; this function is their cross-check).
    """
    T = x.shape[1]
    if not (2 <= t <= T):
        raise ParameterError("t must lie in 2..T")
    if x_next not in (t - 1, x_cur):
        raise ParameterError(f"x_next must be t-1 or x_cur, got {x_next}")

    def unnorm(v):
        x_prev = x[:, t - 2].copy()
        x_prev[j] = x_cur
        p = change_prob(j, t, x_prev, g)
        value = p if v == t - 1 else 1.0 - p
        if t < T:
            x_t = x[:, t - 1].copy()
            x_t[j] = v
            for i in range(g.d):
                if i == j:
                    continue
                pi = change_prob(i, t + 1, x_t, g)
                value *= pi if x[i, t] == t else 1.0 - pi
        return value

    num = unnorm(x_next)
    total = unnorm(t - 1) + unnorm(x_cur)
    return float(np.log(num) - np.log(total))


def pg_update_series(j: int, x_star: np.ndarray, g: GraphParams, N: int,
                     dens: SeriesDensity, rng, collect_systems: bool = False):
    """Particle Gibbs update of series j's path conditional on x_star.

    Returns (new_path (T,), systems) where systems is the per-time list of
    ParticleSystem (only when requested). With N >= T no resampling occurs and
    the update is an exact forward-backward draw.
    """
    if N < 2:
        raise ParameterError("particle budget N must be >= 2")
    T = x_star.shape[1]
    p_change, child_base, child_u, child_c, child_q = _series_arrays(j, x_star, g)
    kind, mats, vec, p1, p2 = dens.kernel_pack()
    uniforms = rng.random(2 * T + 8)
    path, systems = _kernels.pg_update(
        kind, mats, vec, p1, p2, T, N, p_change,
        child_base, child_u, child_c, child_q,
        _paper_path(x_star, j), uniforms, collect_systems)
    out = None
    if systems is not None:
        out = [None] + [ParticleSystem(np.asarray(s), np.asarray(w))
                        for (s, w) in systems[1:]]
    return path[1:], out


def run_filter(j: int, x_star: np.ndarray, g: GraphParams, N: int,
               dens: SeriesDensity, rng):
    """Filter pass only; returns the per-time ParticleSystem list."""
    _, systems = pg_update_series(j, x_star, g, N, dens, rng, collect_systems=True)
    return systems


def single_site_update(x: np.ndarray, g: GraphParams, dens_list, rng) -> np.ndarray:
    """One full single-site Gibbs sweep over all series (fixed scan order)."""
    x = x.copy()
    T = x.shape[1]
    for j in range(g.d):
        p_change, child_base, child_u, child_c, child_q = _series_arrays(j, x, g)
        kind, mats, vec, p1, p2 = dens_list[j].kernel_pack()
        uniforms = rng.random(T + 2)
        new_path = _kernels.single_site_sweep(
            kind, mats, vec, p1, p2, T, p_change,
            child_base, child_u, child_c, child_q,
            _paper_path(x, j), uniforms)
        x[j] = new_path[1:]
    return x


def solve_kappa(weights, n_keep: int) -> float:
    """Resampling threshold: the unique kappa with sum min(w/kappa, 1) = n_keep."""
    if n_keep < 1 or n_keep >= len(weights):
        raise ParameterError("need 1 <= n_keep < number of particles")
    return _kernels.solve_kappa(weights, n_keep)


def stratified_resample(particles, weights, m: int, rng, condition_on=None) -> np.ndarray:
    """Survivor subset (size m) under (conditional) stratified resampling.

    ``particles`` must be strictly ascending; ``weights`` normalized over the
    candidates. When ``condition_on`` is given, that particle is guaranteed to
    survive.
    """
    particles = np.asarray(particles)
    weights = np.asarray(weights, dtype=float)
    if particles.size != weights.size:
        raise ParameterError("particles and weights must align")
    if np.any(np.diff(particles) <= 0):
        raise ParameterError("particles must be strictly ascending")
    if m > particles.size:
        raise ParameterError("cannot keep more particles than there are candidates")
    cond = None
    if condition_on is not None:
        cond = int(np.searchsorted(particles, condition_on))
        if cond >= particles.size or particles[cond] != condition_on:
            raise ParameterError("condition_on is not among the candidates")
    idx = _kernels.stratified_pick(weights, m, rng.random(), cond)
    return particles[np.sort(idx)]


def conditional_sor(particles, weights, N: int, keep_state, rng):
    """Conditional stratified optimal resampling of a weighted support.

    Returns (survivors, weights, kappa); survivors above kappa keep their
    weights, the rest are stratified-sampled and assigned kappa, and
    ``keep_state`` always survives. Output weights are renormalized.
    """
    particles = np.asarray(particles)
    weights = np.asarray(weights, dtype=float)
    if particles.size <= N:
        raise ParameterError("resampling needs more candidates than survivors")
    keep_idx = int(np.searchsorted(particles, keep_state))
    if keep_idx >= particles.size or particles[keep_idx] != keep_state:
        raise ParameterError("keep_state is not among the candidates")
    sel, w_new, kappa = _kernels.conditional_sor_core(weights, N, keep_idx, rng.random())
    return particles[sel], w_new / w_new.sum(), kappa
