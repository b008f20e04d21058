"""Closed-form marginal segment densities for the conjugate segment models.

Two models are provided. The autoregressive model integrates the lag
coefficients and the noise variance out of a normal-inverse-gamma prior; the
Gaussian-mean model integrates a normal prior on a segment-constant mean with
known noise variance. Both are evaluated entirely in log space.

Indexing convention: the segment between change-points ``s`` and ``t`` holds
observations ``s+1, ..., t`` (1-based times), i.e. the half-open slice
``y[s:t]`` of the 0-based per-series array. The empty segment (``s == t``) has
log density 0 by convention, which makes the predictive decomposition
``log f(y_t | x, y) = log f(y[x:t]) - log f(y[x:t-1])`` well defined at
``t == x + 1``.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .errors import DataError, NumericError, ParameterError

LOG_2PI = math.log(2.0 * math.pi)

# density kind codes shared with the compiled kernels
KIND_GAUSS = 0
KIND_AR = 1
KIND_FLAT = 2


@dataclass
class ARModelHyper:
    """Hyperparameters of the conjugate AR segment model.

    ``alpha``/``beta`` are the inverse-gamma shape/rate for the noise variance,
    ``delta[l]`` the prior scale of lag coefficient l+1 (coefficient prior
    N(0, delta_l * sigma^2)).
    """

    alpha: float
    beta: float
    delta: np.ndarray

    def __post_init__(self):
        self.delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        if not (self.alpha > 0 and self.beta > 0):
            raise ParameterError("alpha and beta must be strictly positive")
        if self.delta.ndim != 1 or self.delta.size < 1 or np.any(self.delta <= 0):
            raise ParameterError("delta must be a vector of strictly positive scales")

    @property
    def L(self) -> int:
        return self.delta.size


@dataclass
class GaussMeanHyper:
    """Hyperparameters of the Gaussian changing-mean segment model."""

    sigma2: float
    gamma2: float

    def __post_init__(self):
        if not (self.sigma2 > 0 and self.gamma2 > 0):
            raise ParameterError("sigma2 and gamma2 must be strictly positive")


class SegmentDensityCache:
    """LRU map from (series, start, end) to a log marginal density.

    Densities are deterministic, so eviction only costs a recompute. The cache
    tracks hit/miss counters for diagnostics.
    """

    def __init__(self, max_entries: int = 1_000_000):
        if max_entries < 1:
            raise ParameterError("max_entries must be >= 1")
        self.max_entries = max_entries
        self.hits = 0
        self.misses = 0
        self._data: OrderedDict = OrderedDict()

    def __len__(self) -> int:
        return len(self._data)

    def get(self, key):
        try:
            value = self._data[key]
        except KeyError:
            self.misses += 1
            return None
        self._data.move_to_end(key)
        self.hits += 1
        return value

    def put(self, key, value) -> None:
        self._data[key] = value
        self._data.move_to_end(key)
        if len(self._data) > self.max_entries:
            self._data.popitem(last=False)


def extended_series(y_row: np.ndarray, lag_context, L: int) -> np.ndarray:
    """Series prefixed with L pre-sample values (zero where no context given).

    The returned array z satisfies z[L + m - 1] = value at 1-based time m, with
    m <= 0 drawn from the tail of ``lag_context`` (context entry -1 is time 0).
    """
    y_row = np.asarray(y_row, dtype=float)
    z = np.zeros(y_row.size + L)
    z[L:] = y_row
    if lag_context is not None and L > 0:
        ctx = np.asarray(lag_context, dtype=float).ravel()
        m = min(L, ctx.size)
        if m > 0:
            z[L - m:L] = ctx[ctx.size - m:]
    return z


def design_matrix(y_row, lag_context, s: int, t: int, L: int) -> np.ndarray:
    """Lagged design matrix for segment (s, t]: row for observation k holds
    (z_{k-1}, ..., z_{k-L})."""
    z = extended_series(y_row, lag_context, L)
    windows = np.lib.stride_tricks.sliding_window_view(z, L)
    return windows[s:t, ::-1]


def _ar_log_marginal_from_parts(n, ss, ev, hth, alpha, beta, delta) -> float:
    """Evaluate the AR closed form from segment sufficient statistics.

    n: segment length, ss: ||y||^2, ev: y @ H (length L), hth: H^T H (LxL).
    """
    if n == 0:
        return 0.0
    M = hth + np.diag(1.0 / delta)
    chol = np.linalg.cholesky(M)
    u = solve_triangular(chol, ev, lower=True)
    beta_st = beta + 0.5 * (ss - u @ u)
    if beta_st <= 0.0:
        raise NumericError(f"posterior rate collapsed to {beta_st}; numerical breakdown")
    alpha_st = alpha + 0.5 * n
    # |D_st| / |D| = 1 / (|M| * prod(delta))
    logdet_ratio = -2.0 * np.log(np.diag(chol)).sum() - np.log(delta).sum()
    return (
        -0.5 * n * LOG_2PI
        + 0.5 * logdet_ratio
        + alpha * math.log(beta)
        - alpha_st * math.log(beta_st)
        + gammaln(alpha_st)
        - gammaln(alpha)
    )


def ar_log_marginal(obs, j: int, s: int, t: int, hyper: ARModelHyper, cache=None) -> float:
    """Log marginal density of segment (s, t] in series j under the AR model.

    ``obs`` is an ObservationMatrix (or anything with ``y`` and ``lag_context``
    attributes). Lagged regressors for pre-sample indices come from the
    observation matrix's lag context (zeros by default).
    """
    y = obs.y
    if not (0 <= s < t <= y.shape[1]):
        raise ParameterError(f"need 0 <= s < t <= T, got s={s}, t={t}")
    if cache is not None:
        hit = cache.get(("ar", j, s, t))
        if hit is not None:
            return hit
    ctx = None if obs.lag_context is None else obs.lag_context[j]
    H = design_matrix(y[j], ctx, s, t, hyper.L)
    yseg = y[j, s:t]
    if not np.all(np.isfinite(yseg)):
        raise DataError("segment contains non-finite values")
    value = _ar_log_marginal_from_parts(t - s, yseg @ yseg, yseg @ H, H.T @ H,
                                        hyper.alpha, hyper.beta, hyper.delta)
    if cache is not None:
        cache.put(("ar", j, s, t), value)
    return value


def gauss_mean_log_marginal(seg, hyper: GaussMeanHyper) -> float:
    """Log marginal density of a segment under the Gaussian changing-mean model."""
    seg = np.asarray(seg, dtype=float)
    if seg.size < 1:
        raise ParameterError("segment must contain at least one observation")
    if not np.all(np.isfinite(seg)):
        raise DataError("segment contains non-finite values")
    return _gauss_log_marginal_from_sums(seg.size, seg.sum(), seg @ seg, hyper.sigma2, hyper.gamma2)


def _gauss_log_marginal_from_sums(n, total, ss, sigma2, gamma2) -> float:
    if n == 0:
        return 0.0
    scale = n * gamma2 + sigma2
    return (
        -0.5 * n * (LOG_2PI + math.log(sigma2))
        + 0.5 * (math.log(sigma2) - math.log(scale))
        - ss / (2.0 * sigma2)
        + gamma2 * total * total / (2.0 * sigma2 * scale)
    )


class SeriesDensity:
    """Per-series marginal segment density with O(1) prefix-sum evaluation.

    Precomputes cumulative statistics so that any segment (s, t] is evaluated
    in O(1) (Gaussian mean) or O(L^3) (AR) independent of the segment length.
    ``kernel_pack()`` exposes the raw arrays consumed by the compiled filters.
    """

    def __init__(self, kind, mats, vec, p1, p2, T, j=0):
        self.kind = kind
        self.mats = np.ascontiguousarray(mats, dtype=float)
        self.vec = np.ascontiguousarray(vec, dtype=float)
        self.p1 = float(p1)
        self.p2 = float(p2)
        self.T = int(T)
        self.j = j

    @classmethod
    def gauss(cls, y_row, hyper: GaussMeanHyper, j=0) -> "SeriesDensity":
        y_row = np.asarray(y_row, dtype=float)
        c1 = np.concatenate(([0.0], np.cumsum(y_row)))
        c2 = np.concatenate(([0.0], np.cumsum(y_row * y_row)))
        return cls(KIND_GAUSS, np.vstack([c1, c2]), np.empty(0), hyper.sigma2, hyper.gamma2,
                   y_row.size, j)

    @classmethod
    def ar(cls, y_row, hyper: ARModelHyper, lag_context=None, j=0) -> "SeriesDensity":
        y_row = np.asarray(y_row, dtype=float)
        T = y_row.size
        L = hyper.L
        z = extended_series(y_row, lag_context, L)
        # cross-product prefixes C[a,b][u] = sum_{k<=u} z_{k-a} z_{k-b}, 0 <= a,b <= L
        mats = np.empty(((L + 1) * (L + 1), T + 1))
        for a in range(L + 1):
            za = z[L - a:L - a + T]
            for b in range(L + 1):
                zb = z[L - b:L - b + T]
                mats[a * (L + 1) + b, 0] = 0.0
                np.cumsum(za * zb, out=mats[a * (L + 1) + b, 1:])
        return cls(KIND_AR, mats, hyper.delta, hyper.alpha, hyper.beta, T, j)

    @classmethod
    def flat(cls, T, j=0) -> "SeriesDensity":
        """Constant-likelihood stand-in (every segment has log density 0)."""
        return cls(KIND_FLAT, np.zeros((1, T + 1)), np.empty(0), 0.0, 0.0, T, j)

    @property
    def L(self) -> int:
        return self.vec.size

    def log_marginal(self, s: int, t: int) -> float:
        """Log density of segment (s, t]; 0 for the empty segment s == t."""
        if not (0 <= s <= t <= self.T):
            raise ParameterError(f"need 0 <= s <= t <= T, got s={s}, t={t}")
        if self.kind == KIND_FLAT or s == t:
            return 0.0
        n = t - s
        if self.kind == KIND_GAUSS:
            total = self.mats[0, t] - self.mats[0, s]
            ss = self.mats[1, t] - self.mats[1, s]
            return _gauss_log_marginal_from_sums(n, total, ss, self.p1, self.p2)
        L = self.L
        G = (self.mats[:, t] - self.mats[:, s]).reshape(L + 1, L + 1)
        return _ar_log_marginal_from_parts(n, G[0, 0], G[0, 1:], G[1:, 1:],
                                           self.p1, self.p2, self.vec)

    def predictive(self, x: int, t: int) -> float:
        """log f(y_t | most recent change at x, y_{1:t-1})."""
        return self.log_marginal(x, t) - self.log_marginal(x, t - 1)

    def kernel_pack(self):
        return self.kind, self.mats, self.vec, self.p1, self.p2


def predictive_log_like(dens: SeriesDensity, x_jt: int, t: int, cache=None) -> float:
    """Predictive log likelihood log f(y_{j,t} | x_{j,t}, y_{j,1:t-1}).

    Equals log f(y[x:t]) - log f(y[x:t-1]); the denominator is the empty
    segment (log density 0) when t == x_jt + 1.
    """
    if not (0 <= x_jt < t <= dens.T):
        raise ParameterError(f"need 0 <= x_jt < t <= T, got x_jt={x_jt}, t={t}")
    if cache is None:
        return dens.predictive(x_jt, t)
    num = cache.get((dens.j, x_jt, t))
    if num is None:
        num = dens.log_marginal(x_jt, t)
        cache.put((dens.j, x_jt, t), num)
    if t - 1 == x_jt:
        return num
    den = cache.get((dens.j, x_jt, t - 1))
    if den is None:
        den = dens.log_marginal(x_jt, t - 1)
        cache.put((dens.j, x_jt, t - 1), den)
    return num - den
