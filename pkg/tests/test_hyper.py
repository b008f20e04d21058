"""Edge-pair Gibbs, truncated-Beta density draw, weight/rate Metropolis."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import beta as beta_dist
from scipy.stats import chisquare, kstest

from netcp.errors import ParameterError
from netcp.hyper import (MhConfig, edge_pair_counts, mh_update_background_rate,
                         mh_update_weight_rate, sample_edge_pair, sample_rho)
from netcp.prior import (GraphParams, init_states, log_prior_series,
                         simulate_prior)

PAIR_STATES = ((1, 0), (0, 1), (0, 0))


class _ScriptedRng:
    """Returns scripted standard-normal and uniform draws, in order."""

    def __init__(self, normals, uniforms):
        self.normals = list(normals)
        self.uniforms = list(uniforms)

    def standard_normal(self):
        return self.normals.pop(0)

    def random(self):
        return self.uniforms.pop(0)


def pair_conditional(i, j, x, g):
    """Directly normalized categorical over the three admissible pair states."""
    masses = []
    keep = (g.A[i, j], g.A[j, i])
    for (aij, aji) in PAIR_STATES:
        g.A[i, j], g.A[j, i] = aij, aji
        prior = g.rho / 2 if (aij or aji) else 1 - g.rho
        lm = math.log(prior) + log_prior_series(i, x, g) + log_prior_series(j, x, g)
        masses.append(lm)
    g.A[i, j], g.A[j, i] = keep
    p = np.exp(np.array(masses) - max(masses))
    return p / p.sum()


class TestSampleEdgePair:
    def test_tiny_rho_forces_empty_pair(self, rng):
        g = GraphParams.empty(2, q0=0.2)
        g.rho = 1e-9
        x = simulate_prior(g, 8, rng)
        draws = [sample_edge_pair(0, 1, x, g, rng) for _ in range(300)]
        assert all(d == (0, 0) for d in draws)

    def test_single_time_posterior_equals_prior(self, rng):
        """T = 1 has no transitions: the conditional is the pair prior."""
        g = GraphParams.empty(3, q0=0.3)
        g.rho = 0.18
        x = init_states(3, 1)
        n = 40_000
        counts = {s: 0 for s in PAIR_STATES}
        for _ in range(n):
            counts[sample_edge_pair(0, 2, x, g, rng)] += 1
        expected = np.array([g.rho / 2, g.rho / 2, 1 - g.rho]) * n
        stat, pval = chisquare([counts[s] for s in PAIR_STATES], expected)
        assert pval > 0.001

    def test_matches_direct_normalization(self, rng):
        """Empirical pair frequencies track the directly normalized masses."""
        g = GraphParams.empty(2, q0=0.1)
        g.W[0, 1] = 4.0
        g.q[0, 1] = 0.6
        g.W[1, 0] = 4.0
        g.q[1, 0] = 0.6
        x = init_states(2, 6)
        x[0, 2:] = 2
        x[1, 3:] = 3  # series 1 change follows series 0: favors edge 0 -> 1
        target = pair_conditional(0, 1, x, g)
        n = 60_000
        counts = {s: 0 for s in PAIR_STATES}
        for _ in range(n):
            counts[sample_edge_pair(0, 1, x, g, rng)] += 1
        assert target[0] > target[1]  # lead-lag orientation favored
        for k, s in enumerate(PAIR_STATES):
            se = math.sqrt(target[k] * (1 - target[k]) / n)
            assert abs(counts[s] / n - target[k]) < 4 * se + 1e-4

    def test_detailed_balance_chi_square(self, rng):
        g = GraphParams.empty(2, q0=0.15)
        x = simulate_prior(g, 10, rng)
        target = pair_conditional(0, 1, x, g)
        n = 60_000
        counts = {s: 0 for s in PAIR_STATES}
        for _ in range(n):
            counts[sample_edge_pair(0, 1, x, g, rng)] += 1
        stat, pval = chisquare([counts[s] for s in PAIR_STATES], target * n)
        assert pval > 0.001

    def test_never_parallel_and_invariants_hold(self, rng):
        g = GraphParams.empty(4, q0=0.1)
        x = simulate_prior(g, 20, rng)
        for _ in range(200):
            for i in range(4):
                for j in range(i + 1, 4):
                    sample_edge_pair(i, j, x, g, rng)
            g.rho = sample_rho(g.A, rng)
            g.validate()

    def test_requires_ordered_pair(self, rng):
        g = GraphParams.empty(2)
        with pytest.raises(ParameterError):
            sample_edge_pair(1, 0, init_states(2, 3), g, rng)


class TestSampleRho:
    def test_truncated_beta_mean_for_one_empty_pair(self, rng):
        """d=2, empty A: Beta(1,2) truncated to (0, 0.2) has mean ~ 0.0963."""
        num = quad(lambda v: v * 2 * (1 - v), 0, 0.2)[0]
        den = quad(lambda v: 2 * (1 - v), 0, 0.2)[0]
        want = num / den
        assert want == pytest.approx(0.0963, abs=1e-4)
        draws = np.array([sample_rho(np.zeros((2, 2), dtype=int), rng)
                          for _ in range(60_000)])
        assert abs(draws.mean() - want) < 4 * draws.std() / math.sqrt(draws.size)

    def test_all_pairs_connected_concentrates_at_truncation(self, rng):
        A = np.zeros((3, 3), dtype=int)
        A[0, 1] = A[1, 2] = A[0, 2] = 1
        n1, n2 = edge_pair_counts(A)
        assert (n1, n2) == (3, 0)
        draws = np.array([sample_rho(A, rng) for _ in range(4000)])
        assert np.all((draws > 0) & (draws < 0.2))
        assert draws.mean() > 0.12  # monotone increasing density on (0, 0.2)

    def test_no_pairs_gives_uniform(self, rng):
        A = np.zeros((1, 1), dtype=int)
        draws = np.array([sample_rho(A, rng) for _ in range(20_000)])
        stat, pval = kstest(draws / 0.2, "uniform")
        assert pval > 0.001

    def test_matches_truncated_beta_law(self, rng):
        A = np.zeros((4, 4), dtype=int)
        A[0, 1] = A[2, 3] = 1
        n1, n2 = edge_pair_counts(A)
        a, b = 1 + n1, 1 + n2
        hi = beta_dist.cdf(0.2, a, b)
        draws = np.array([sample_rho(A, rng) for _ in range(20_000)])
        stat, pval = kstest(beta_dist.cdf(draws, a, b) / hi, "uniform")
        assert pval > 0.001


class TestMhWeightRate:
    def test_zero_variance_proposal_always_accepted(self, rng):
        g = GraphParams.empty(2, q0=0.4)
        x = simulate_prior(g, 12, rng)
        cfg = MhConfig(sd_w=1e-13, sd_q=1e-13, inner_thin=50)
        stats = [0, 0]
        mh_update_weight_rate(None, 0, x, g, cfg, rng, stats=stats)
        assert stats == [50, 50]

    def test_out_of_support_proposals_rejected(self):
        g = GraphParams.empty(1, q0=0.5)
        x = init_states(1, 4)
        cfg = MhConfig(sd_w=1.0, sd_q=0.1, inner_thin=2)
        # first proposal: W -> negative; second: q -> above 1
        rng = _ScriptedRng(normals=[-50.0, 0.0, 0.0, 50.0], uniforms=[0.0, 0.0])
        w0, q0 = g.W0[0], g.q0[0]
        stats = [0, 0]
        mh_update_weight_rate(None, 0, x, g, cfg, rng, stats=stats)
        assert (g.W0[0], g.q0[0]) == (w0, q0)
        assert stats == [0, 2]

    def test_dormant_edge_pair_samples_its_prior(self, rng):
        """With A[i,j]=0 the path prior is flat in (W_ij, q_ij); long-run draws
        match Ga(1,1) x U(0,1)."""
        g = GraphParams.empty(2, q0=0.2)
        x = simulate_prior(g, 10, rng)
        cfg = MhConfig(sd_w=1.2, sd_q=0.4, inner_thin=1)
        w_draws, q_draws = [], []
        for k in range(120_000):
            mh_update_weight_rate(0, 1, x, g, cfg, rng)
            if k % 40 == 0:
                w_draws.append(g.W[0, 1])
                q_draws.append(g.q[0, 1])
        assert kstest(np.array(w_draws), "expon").pvalue > 0.001
        assert kstest(np.array(q_draws), "uniform").pvalue > 0.001

    def test_background_rate_matches_conjugate_beta(self, rng):
        """d=1, x fixed: the q0 chain's stationary law is Beta(1+changes,
        1+non-changes); Kolmogorov-Smirnov on thinned draws."""
        g = GraphParams.empty(1, q0=0.5)
        T = 6
        x = init_states(1, T)
        x[0, 2:] = 2
        x[0, 4:] = 4  # two changes, three non-changes
        cfg = MhConfig(sd_w=0.5, sd_q=0.25, inner_thin=1)
        draws = []
        for k in range(200_000):
            mh_update_background_rate(0, x, g, cfg, rng)
            if k % 50 == 0:
                draws.append(g.q0[0])
        draws = np.array(draws[20:])
        stat, pval = kstest(beta_dist.cdf(draws, 3, 4), "uniform")
        assert pval > 0.001

    def test_joint_update_matches_conjugate_when_weight_cancels(self, rng):
        """The d=1 background weight cancels from the path prior, so the joint
        (W0, q0) Metropolis must reproduce the same Beta law for q0."""
        g = GraphParams.empty(1, q0=0.5)
        T = 6
        x = init_states(1, T)
        x[0, 3:] = 3  # one change, four non-changes
        cfg = MhConfig(sd_w=0.8, sd_q=0.25, inner_thin=1)
        draws = []
        for k in range(200_000):
            mh_update_weight_rate(None, 0, x, g, cfg, rng)
            if k % 50 == 0:
                draws.append(g.q0[0])
        draws = np.array(draws[20:])
        stat, pval = kstest(beta_dist.cdf(draws, 2, 5), "uniform")
        assert pval > 0.001
