"""Conditional particle filter, SOR, backward sampling, single-site baseline."""

import itertools
import math

import numpy as np
import pytest

from conftest import enumerate_series_paths, enumeration_posterior, gauss_toy, mc_se
from netcp.engine import estimate_iat
from netcp.errors import ParameterError
from netcp.particle import (cond_transition_logpmf, conditional_sor,
                            pg_update_series, run_filter, single_site_update,
                            solve_kappa, stratified_resample)
from netcp.prior import GraphParams, change_indicators, change_prob, init_states
from netcp.segments import GaussMeanHyper, SeriesDensity


class _PinnedRng:
    """Feeds a fixed sequence of uniforms to code expecting a Generator."""

    def __init__(self, values):
        self.values = list(values)

    def random(self, n=None):
        if n is None:
            return self.values.pop(0)
        return np.array([self.values.pop(0) for _ in range(n)])


def edge_graph(q0=0.15, w=2.0, q=0.5):
    A = np.zeros((2, 2), dtype=np.int64)
    A[0, 1] = 1
    return GraphParams(A, np.ones(2), np.full((2, 2), w),
                       np.full(2, q0), np.full((2, 2), q), 0.1)


class TestSolveKappa:
    def test_worked_fixture(self):
        assert solve_kappa([0.4, 0.3, 0.2, 0.1], 2) == pytest.approx(0.5, abs=1e-12)

    def test_dominant_weight_kept_outright(self):
        kappa = solve_kappa([0.7, 0.1, 0.1, 0.1], 2)
        assert kappa == pytest.approx(0.3, abs=1e-12)
        assert 0.7 > kappa

    def test_kappa_solves_equation_on_random_weights(self, rng):
        for _ in range(300):
            m = int(rng.integers(3, 40))
            n_keep = int(rng.integers(1, m))
            w = rng.dirichlet(np.full(m, rng.uniform(0.05, 3.0)))
            kappa = solve_kappa(w, n_keep)
            assert abs(np.minimum(w / kappa, 1.0).sum() - n_keep) <= 1e-10

    def test_extreme_dynamic_range(self, rng):
        """Tail many orders of magnitude below the head must not corrupt kappa
        (suffix sums, not total-minus-prefix)."""
        w = np.concatenate([[0.9, 0.0999], 10.0 ** -rng.uniform(8, 25, 30)])
        w /= w.sum()
        for n_keep in (2, 5, 20, 31):
            kappa = solve_kappa(w, n_keep)
            assert abs(np.minimum(w / kappa, 1.0).sum() - n_keep) <= 1e-9


class TestStratifiedResample:
    def test_pinned_uniform_selects_first(self):
        got = stratified_resample([0, 1], [0.5, 0.5], 1, _PinnedRng([0.3]))
        assert got.tolist() == [0]

    def test_conditioning_always_keeps_target(self, rng):
        for _ in range(2000):
            got = stratified_resample([0, 1], [0.5, 0.5], 1, rng, condition_on=1)
            assert got.tolist() == [1]

    def test_m_larger_than_candidates_rejected(self, rng):
        with pytest.raises(ParameterError):
            stratified_resample([0, 1], [0.5, 0.5], 3, rng)

    def test_survival_unbiasedness(self, rng):
        """Unconditioned survival frequency of each particle is min(m*w, 1)."""
        w = np.array([0.45, 0.25, 0.2, 0.1])
        m = 2
        n = 100_000
        counts = np.zeros(4)
        for _ in range(n):
            for s in stratified_resample([0, 1, 2, 3], w, m, rng):
                counts[s] += 1
        target = np.minimum(m * w, 1.0)
        for k in range(4):
            se = math.sqrt(target[k] * (1 - target[k]) / n) + 1e-12
            assert abs(counts[k] / n - target[k]) < 4 * se


class TestConditionalSOR:
    def test_fixture_kappa_half_all_resampled(self, rng):
        parts, w, kappa = conditional_sor([0, 1, 2, 3], [0.4, 0.3, 0.2, 0.1], 2, 0, rng)
        assert kappa == pytest.approx(0.5, abs=1e-12)
        assert parts.size == 2 and 0 in parts
        assert np.allclose(w, 0.5)  # all survivors carry kappa, renormalized

    def test_dominant_particle_survives_with_own_weight(self, rng):
        for _ in range(200):
            parts, w, kappa = conditional_sor([0, 1, 2, 3], [0.7, 0.1, 0.1, 0.1], 2, 0, rng)
            assert kappa == pytest.approx(0.3, abs=1e-12)
            assert parts[0] == 0 and w[0] == pytest.approx(0.7, abs=1e-12)
            assert parts.size == 2

    def test_smallest_weight_keep_state_always_survives(self, rng):
        for _ in range(2000):
            parts, _, _ = conditional_sor([0, 1, 2, 3], [0.4, 0.3, 0.2, 0.1], 2, 3, rng)
            assert 3 in parts

    def test_output_weights_normalized(self, rng):
        for _ in range(50):
            raw = rng.dirichlet(np.ones(8))
            parts, w, _ = conditional_sor(np.arange(8), raw, 4, 2, rng)
            assert parts.size == 4
            assert w.sum() == pytest.approx(1.0, abs=1e-12)


class TestCondTransitionLogpmf:
    def test_empty_graph_reduces_to_background(self, rng):
        y, dens = gauss_toy(d=2, T=6)
        g = GraphParams.empty(2, q0=0.3)
        x = init_states(2, 6)
        x[1, 3:] = 3
        for t in (2, 4, 6):
            lp_change = cond_transition_logpmf(0, x, g, t, t - 1, 0)
            lp_stay = cond_transition_logpmf(0, x, g, t, 0, 0)
            assert lp_change == pytest.approx(math.log(0.3), abs=1e-12)
            assert lp_stay == pytest.approx(math.log(0.7), abs=1e-12)

    def test_probabilities_sum_to_one(self, rng):
        g = edge_graph()
        x = init_states(2, 8)
        x[1, 4:] = 4
        for t in range(2, 9):
            for x_cur in (0, min(2, t - 2)):
                total = (math.exp(cond_transition_logpmf(0, x, g, t, t - 1, x_cur))
                         + math.exp(cond_transition_logpmf(0, x, g, t, x_cur, x_cur)))
                assert total == pytest.approx(1.0, abs=1e-12)

    def test_leader_change_upweighted_by_follower_change(self):
        """With an edge 1 -> 2, a change in series 2 at t+1 raises the
        conditional probability that series 1 changed at t-1... the look-ahead
        factor rewards the candidate that makes the follower's change likely."""
        g = edge_graph(q0=0.05, w=4.0, q=0.6)
        T, t = 8, 4
        x_with = init_states(2, T)
        x_with[1, t:] = t  # series 2 changes at time t (observed at t+1)
        x_without = init_states(2, T)
        lp_with = cond_transition_logpmf(0, x_with, g, t, t - 1, 0)
        lp_without = cond_transition_logpmf(0, x_without, g, t, t - 1, 0)
        assert lp_with > lp_without


class TestPgUpdateSeries:
    def test_budget_contract(self, rng):
        y, dens = gauss_toy(d=1, T=6)
        with pytest.raises(ParameterError):
            pg_update_series(0, init_states(1, 6), GraphParams.empty(1), 1, dens[0], rng)

    def test_filter_weights_match_enumeration_at_full_budget(self, rng):
        """N = T reproduces the exact filtering recursions: per-time filtering
        marginals agree with prefix-path enumeration to 1e-9."""
        y, dens = gauss_toy(d=1, T=6, seed=3)
        g = GraphParams.empty(1, q0=0.2)
        systems = run_filter(0, init_states(1, 6), g, 6, dens[0], rng)
        for t in range(1, 7):
            marg = {}
            for bits in itertools.product([0, 1], repeat=t - 1):
                x = np.zeros(t + 1, dtype=np.int64)
                lm = 0.0
                for u in range(2, t + 1):
                    x[u] = u - 1 if bits[u - 2] else x[u - 1]
                    p = change_prob(0, u, np.array([x[u - 1]]), g)
                    lm += math.log(p) if x[u] == u - 1 else math.log1p(-p)
                for u in range(1, t + 1):
                    lm += dens[0].predictive(int(x[u]), u)
                marg[x[t]] = marg.get(x[t], 0.0) + math.exp(lm)
            tot = sum(marg.values())
            got = dict(zip(systems[t].support.tolist(),
                           np.exp(systems[t].log_weights).tolist()))
            for s, p in marg.items():
                assert got.get(s, 0.0) == pytest.approx(p / tot, abs=1e-9)

    def test_conditioned_path_survives_every_resampling(self, rng):
        y, dens = gauss_toy(d=2, T=16, seed=9)
        g = edge_graph()
        x = init_states(2, 16)
        x[0, 5:] = 5
        x[0, 11:] = 11
        for seed in range(30):
            systems = run_filter(0, x, g, 3, dens[0], np.random.default_rng(seed))
            for t in range(1, 17):
                assert x[0, t - 1] in systems[t].support
                lw = systems[t].log_weights
                assert np.logaddexp.reduce(lw) == pytest.approx(0.0, abs=1e-10)
                assert np.all(np.diff(systems[t].support) > 0)

    def test_backward_sampling_total_variation_vs_enumeration(self, rng):
        """d=1, T=6, N=T: sampled paths over 1e5 draws match the enumeration
        posterior within total variation 0.02."""
        y, dens = gauss_toy(d=1, T=6, seed=3)
        g = GraphParams.empty(1, q0=0.2)
        paths = enumerate_series_paths(6)
        from conftest import joint_log_mass
        lm = np.array([joint_log_mass([p], g, dens) for p in paths])
        w = np.exp(lm - lm.max())
        w /= w.sum()
        exact = {tuple(p[1:]): wi for p, wi in zip(paths, w)}
        counts = {}
        n = 100_000
        x0 = init_states(1, 6)
        for _ in range(n):
            path, _ = pg_update_series(0, x0, g, 6, dens[0], rng)
            counts[tuple(path)] = counts.get(tuple(path), 0) + 1
        tv = 0.5 * sum(abs(counts.get(k, 0) / n - v) for k, v in exact.items())
        assert tv < 0.02

    def test_path_always_valid(self, rng):
        y, dens = gauss_toy(d=2, T=12, seed=21)
        g = edge_graph()
        x = init_states(2, 12)
        for _ in range(200):
            for j in range(2):
                x[j], _ = pg_update_series(j, x, g, 3, dens[j], rng)
            from netcp.prior import validate_hidden_states
            validate_hidden_states(x)


class TestSingleSite:
    def test_near_zero_change_probability_leaves_empty_path(self, rng):
        y, dens = gauss_toy(d=2, T=8)
        dens = [SeriesDensity.flat(8, j=j) for j in range(2)]
        g = GraphParams.empty(2, q0=1e-12)
        x = init_states(2, 8)
        for _ in range(20):
            x_new = single_site_update(x, g, dens, rng)
            assert np.array_equal(x_new, x)

    def test_resegmentation_consistency(self, rng):
        y, dens = gauss_toy(d=2, T=14, seed=5)
        g = edge_graph()
        x = init_states(2, 14)
        from netcp.prior import validate_hidden_states
        for _ in range(300):
            x = single_site_update(x, g, dens, rng)
            validate_hidden_states(x)


class TestKernelInvariance:
    """Both kernels leave the exact joint posterior invariant (d=2, T=6,
    with a directed edge so the conditional coupling is exercised)."""

    N_SWEEPS = 30_000

    @pytest.mark.parametrize("kernel", ["pg_small", "pg_exact", "single_site"])
    def test_chain_marginals_match_enumeration(self, kernel):
        y, dens = gauss_toy(d=2, T=6, seed=11)
        g = edge_graph(q0=0.15, w=2.0, q=0.5)
        exact = enumeration_posterior(y, g, dens)
        rng = np.random.default_rng(77)
        x = init_states(2, 6)
        acc = np.zeros((2, 6))
        traces = np.zeros((self.N_SWEEPS, 2, 6), dtype=np.uint8)
        for it in range(self.N_SWEEPS):
            if kernel == "single_site":
                x = single_site_update(x, g, dens, rng)
            else:
                n_particles = 3 if kernel == "pg_small" else 6
                for j in range(2):
                    x[j], _ = pg_update_series(j, x, g, n_particles, dens[j], rng)
            u = change_indicators(x)
            acc += u
            traces[it] = u
        emp = acc / self.N_SWEEPS
        for j in range(2):
            for t in range(1, 6):
                iat = estimate_iat(traces[:, j, t])
                se = mc_se(emp[j, t], iat, self.N_SWEEPS)
                assert abs(emp[j, t] - exact[j, t]) < 3.5 * se + 1e-4, (
                    kernel, j, t, emp[j, t], exact[j, t], se)
