"""Latent directed-graph prior over per-series change-point processes.

The hidden state x[j, t] is the time of the most recent change-point in
series j strictly before time t (1-based times; x[j, 1] = 0 almost surely).
Hidden state matrices are stored as (d, T) integer arrays whose column c
holds the states at time c+1. A change-point at time c (1 <= c <= T-1) is the
event x[j, c] == c in array coordinates.

The probability that series j changes at time t-1 is a normalized mixture of
a background Bernoulli rate and geometric-decay impulses from each series i
with a directed edge i -> j, evaluated at the distance to i's most recent
change-point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError, ParameterError, ResourceError


@dataclass
class GraphParams:
    """Adjacency, weights and rates of the change-point prior.

    A[i, j] = 1 means series i leads series j. W0/q0 are per-series background
    weights/rates; W[i, j]/q[i, j] the edge weight and geometric decay rate of
    edge i -> j; rho the edge-density parameter of the pair prior.
    """

    A: np.ndarray
    W0: np.ndarray
    W: np.ndarray
    q0: np.ndarray
    q: np.ndarray
    rho: float

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.int64)
        self.W0 = np.asarray(self.W0, dtype=float)
        self.W = np.asarray(self.W, dtype=float)
        self.q0 = np.asarray(self.q0, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.validate()

    @property
    def d(self) -> int:
        return self.A.shape[0]

    def validate(self) -> None:
        d = self.A.shape[0]
        if self.A.shape != (d, d) or self.W.shape != (d, d) or self.q.shape != (d, d):
            raise ParameterError("A, W, q must all be d x d")
        if self.W0.shape != (d,) or self.q0.shape != (d,):
            raise ParameterError("W0, q0 must be length-d vectors")
        if np.any((self.A != 0) & (self.A != 1)):
            raise ParameterError("A must be binary")
        if np.any(np.diag(self.A) != 0):
            raise ParameterError("A must have a zero diagonal (no self edges)")
        if np.any((self.A * self.A.T) != 0):
            raise ParameterError("A has a parallel edge pair (A[i,j] = A[j,i] = 1)")
        if np.any(self.W0 <= 0) or np.any(self.W <= 0):
            raise ParameterError("all weights must be strictly positive")
        if np.any(self.q0 <= 0) or np.any(self.q0 >= 1) or np.any(self.q <= 0) or np.any(self.q >= 1):
            raise ParameterError("all rates must lie strictly inside (0, 1)")
        if not (0.0 < self.rho < 0.2):
            raise ParameterError("rho must lie strictly inside (0, 0.2)")

    def copy(self) -> "GraphParams":
        return GraphParams(self.A.copy(), self.W0.copy(), self.W.copy(),
                           self.q0.copy(), self.q.copy(), self.rho)

    def normalizer(self, j: int) -> float:
        """Z_j = W0_j + sum_i A[i,j] W[i,j]."""
        return self.W0[j] + float(self.A[:, j] @ self.W[:, j])

    def to_json(self) -> str:
        return json.dumps({
            "A": self.A.tolist(), "W0": self.W0.tolist(), "W": self.W.tolist(),
            "q0": self.q0.tolist(), "q": self.q.tolist(), "rho": self.rho,
        })

    @classmethod
    def from_json(cls, text: str) -> "GraphParams":
        obj = json.loads(text)
        return cls(np.array(obj["A"]), np.array(obj["W0"]), np.array(obj["W"]),
                   np.array(obj["q0"]), np.array(obj["q"]), float(obj["rho"]))

    @classmethod
    def empty(cls, d: int, q0=0.5, rho=0.1) -> "GraphParams":
        """Edge-free parameters at the hyperprior means (W = W0 = 1, q = 0.5)."""
        return cls(np.zeros((d, d), dtype=np.int64), np.ones(d), np.ones((d, d)),
                   np.full(d, float(q0)), np.full((d, d), 0.5), rho)


def geometric_kernel(q: float, u) -> np.ndarray:
    """Delay kernel g(u) = q (1-q)^(u-1) for integer distances u >= 1."""
    u = np.asarray(u)
    return q * np.exp((u - 1) * math.log1p(-q))


def change_prob(j: int, t: int, x_prev: np.ndarray, g: GraphParams) -> float:
    """Prior probability that series j changes at time t-1 given X_{t-1} = x_prev.

    x_prev holds every series' most recent change time at t-1; entries equal to
    0 contribute nothing (time 0 is not an observed change-point).
    """
    if t < 2:
        raise ParameterError("change probabilities are defined for t >= 2")
    x_prev = np.asarray(x_prev)
    if np.any(x_prev < 0) or np.any(x_prev > t - 2):
        raise ParameterError("x_prev entries must lie in {0, ..., t-2}")
    acc = g.W0[j] * g.q0[j]
    for i in np.flatnonzero(g.A[:, j]):
        if x_prev[i] > 0:
            u = t - x_prev[i] - 1
            assert u >= 1
            acc += g.W[i, j] * geometric_kernel(g.q[i, j], u)
    return float(acc / g.normalizer(j))


def change_prob_series(j: int, x: np.ndarray, g: GraphParams) -> np.ndarray:
    """Vector of p_{j,t}(x_{t-1}) for t = 2..T, as a (T+1,) array indexed by t.

    Entries 0 and 1 are unused (set to 0). Equivalent to calling change_prob
    at every t with the columns of x, but vectorized over time.
    """
    return _mixture_prob_series(j, x, g, exclude=-1)


def _mixture_prob_series(j: int, x: np.ndarray, g: GraphParams, exclude: int) -> np.ndarray:
    """As change_prob_series, optionally dropping parent ``exclude`` from the
    mixture numerator (the normalizer Z_j is unchanged)."""
    T = x.shape[1]
    out = np.zeros(T + 1)
    t_arr = np.arange(2, T + 1)
    acc = np.full(T - 1, g.W0[j] * g.q0[j])
    for i in np.flatnonzero(g.A[:, j]):
        if i == exclude:
            continue
        xm = x[i, t_arr - 2]
        u = t_arr - xm - 1
        acc += g.W[i, j] * geometric_kernel(g.q[i, j], u) * (xm > 0)
    out[2:] = acc / g.normalizer(j)
    return out


def init_states(d: int, T: int) -> np.ndarray:
    """Hidden-state matrix with no change-points (all states 0)."""
    return np.zeros((d, T), dtype=np.int64)


def validate_hidden_states(x: np.ndarray) -> None:
    """Check the Markov-chain support constraints of a hidden-state matrix."""
    x = np.asarray(x)
    d, T = x.shape
    if T < 1 or np.any(x[:, 0] != 0):
        raise DataError("states at time 1 must all be 0")
    for c in range(1, T):
        bad = (x[:, c] != c) & (x[:, c] != x[:, c - 1])
        if np.any(bad):
            raise DataError(f"invalid transition into time {c + 1} for series {np.flatnonzero(bad)}")


def change_indicators(x: np.ndarray) -> np.ndarray:
    """Binary (d, T) matrix of change events; column c flags a change at time c.

    Column 0 is always zero: the almost-sure initial state is not a change.
    """
    d, T = x.shape
    u = np.zeros((d, T), dtype=np.uint8)
    cols = np.arange(1, T)
    u[:, 1:] = x[:, 1:] == cols
    return u


def simulate_prior(g: GraphParams, T: int, rng) -> np.ndarray:
    """Draw one hidden-state matrix from the prior Markov chain."""
    if T < 1:
        raise ParameterError("T must be >= 1")
    rng = np.random.default_rng(rng)
    d = g.d
    x = init_states(d, T)
    for t in range(2, T + 1):
        prev = x[:, t - 2]
        for j in range(d):
            p = change_prob(j, t, prev, g)
            x[j, t - 1] = t - 1 if rng.random() < p else prev[j]
    return x


def simulate_prior_indicators(g: GraphParams, T: int, n_paths: int, rng) -> np.ndarray:
    """Change indicators of ``n_paths`` independent prior draws, shape (n, d, T).

    Same Markov chain as simulate_prior, vectorized across paths for Monte
    Carlo work.
    """
    rng = np.random.default_rng(rng)
    d = g.d
    Z = np.array([g.normalizer(j) for j in range(d)])
    x_prev = np.zeros((n_paths, d), dtype=np.int64)
    u_out = np.zeros((n_paths, d, T), dtype=np.uint8)
    log1mq = np.log1p(-g.q)
    for t in range(2, T + 1):
        p = np.tile(g.W0 * g.q0, (n_paths, 1))
        for j in range(d):
            for i in np.flatnonzero(g.A[:, j]):
                xm = x_prev[:, i]
                u = t - xm - 1
                p[:, j] += g.W[i, j] * g.q[i, j] * np.exp((u - 1) * log1mq[i, j]) * (xm > 0)
        p /= Z
        changed = rng.random((n_paths, d)) < p
        u_out[:, :, t - 1] = changed
        x_prev = np.where(changed, t - 1, x_prev)
    return u_out


def log_prior_x(x: np.ndarray, g: GraphParams) -> float:
    """Log prior probability of a full hidden-state matrix."""
    validate_hidden_states(x)
    total = 0.0
    for j in range(g.d):
        total += log_prior_series(j, x, g)
    return total


def log_prior_series(j: int, x: np.ndarray, g: GraphParams, p_series=None) -> float:
    """Log prior of series j's path given all series' states (its own
    transition probabilities depend only on the other series)."""
    T = x.shape[1]
    if T < 2:
        return 0.0
    if p_series is None:
        p_series = change_prob_series(j, x, g)
    p = p_series[2:]
    cols = np.arange(1, T)
    changed = x[j, 1:] == cols
    return float(np.where(changed, np.log(p), np.log1p(-p)).sum())


def exact_lagged_corr(g: GraphParams, i: int, j: int, t: int, h: int,
                      max_work: int = 100_000_000) -> float:
    """Exact Cor(U_{i,t}, U_{j,t+h}) by summing the chain over all paths.

    Implements the nested-sum factorization of the expectation over the joint
    chain, propagating a distribution over reachable state vectors forward and
    splitting on the series-i change indicator once time t is reached. Raises
    ResourceError when the workload guard is exceeded.
    """
    if g.d > 4:
        raise ParameterError("exact enumeration is limited to d <= 4")
    if t < 2 or h < 0:
        raise ParameterError("need t >= 2 and h >= 0")
    if h == 0 and i == j:
        return 1.0
    d = g.d
    combos = [np.array(bits) for bits in np.ndindex(*(2,) * d)]
    # mass over (state vector, U_{i,t} flag); flag is None until time t
    states = {(tuple([0] * d), None): 1.0}
    work = 0
    for step in range(2, t + h + 1):
        nxt: dict = {}
        for (vec, flag), mass in states.items():
            prev = np.array(vec)
            probs = np.array([change_prob(jj, step, prev, g) for jj in range(d)])
            for bits in combos:
                pr = np.where(bits, probs, 1.0 - probs).prod()
                new_vec = np.where(bits, step - 1, prev)
                new_flag = flag
                if step == t:
                    new_flag = bool(new_vec[i] == t - 1)
                key = (tuple(int(v) for v in new_vec), new_flag)
                nxt[key] = nxt.get(key, 0.0) + mass * pr
        states = nxt
        work += len(states) * (1 << d)
        if work > max_work:
            raise ResourceError(f"enumeration workload {work} exceeds guard {max_work}")
    e_i = e_j = e_ij = 0.0
    for (vec, flag), mass in states.items():
        uj = vec[j] == t + h - 1
        if flag:
            e_i += mass
            if uj:
                e_ij += mass
        if uj:
            e_j += mass
    var_i = e_i * (1.0 - e_i)
    var_j = e_j * (1.0 - e_j)
    if var_i <= 0.0 or var_j <= 0.0:
        # unreachable for valid GraphParams (change probabilities are interior)
        raise NumericError("degenerate indicator variance in exact correlation")
    return (e_ij - e_i * e_j) / math.sqrt(var_i * var_j)
