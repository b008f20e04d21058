import itertools
import math

import numpy as np
import pytest

from netcp.prior import change_prob
from netcp.segments import GaussMeanHyper, SeriesDensity


def enumerate_series_paths(T):
    """All 2^(T-1) valid single-series paths as paper-indexed arrays x[1..T]."""
    paths = []
    for bits in itertools.product([0, 1], repeat=T - 1):
        x = np.zeros(T + 1, dtype=np.int64)
        for t in range(2, T + 1):
            x[t] = t - 1 if bits[t - 2] else x[t - 1]
        paths.append(x)
    return paths


def joint_log_mass(x_paths, g, dens_list):
    """Log posterior mass (up to a constant) of one joint configuration."""
    d = len(x_paths)
    T = x_paths[0].size - 1
    xmat = np.stack([p[1:] for p in x_paths])
    lm = 0.0
    for t in range(2, T + 1):
        prev = xmat[:, t - 2]
        for j in range(d):
            p = change_prob(j, t, prev, g)
            lm += math.log(p) if xmat[j, t - 1] == t - 1 else math.log1p(-p)
    for j in range(d):
        for t in range(1, T + 1):
            lm += dens_list[j].predictive(int(xmat[j, t - 1]), t)
    return lm


def enumeration_posterior(y, g, dens_list):
    """Exact change-indicator marginals (d, T) by joint enumeration."""
    d, T = y.shape
    per_series = enumerate_series_paths(T)
    combos = list(itertools.product(per_series, repeat=d))
    lm = np.array([joint_log_mass(c, g, dens_list) for c in combos])
    w = np.exp(lm - lm.max())
    w /= w.sum()
    marg = np.zeros((d, T))
    cols = np.arange(1, T)
    for wi, combo in zip(w, combos):
        for j in range(d):
            marg[j, 1:] += wi * (combo[j][2:] == cols)
    return marg


def gauss_toy(d=2, T=6, seed=11, shift=2.0):
    """Small dataset with a visible mean shift, plus its density objects."""
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(d, T))
    y[0, T // 2:] += shift
    hyper = GaussMeanHyper(0.5, 3.0)
    dens = [SeriesDensity.gauss(y[j], hyper, j=j) for j in range(d)]
    return y, dens


def mc_se(p_hat, iat, n):
    """IAT-adjusted Monte Carlo standard error of an indicator mean."""
    tau = 1.0 if iat is None else max(iat, 1.0)
    return math.sqrt(max(p_hat * (1.0 - p_hat), 1e-12) * tau / n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
