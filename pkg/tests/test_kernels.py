"""Compiled and pure-Python kernels are interchangeable: same uniforms in,
same paths and near-identical weights out."""

import numpy as np
import pytest

import netcp._kernels as K
from netcp._kernels import _pycore
from netcp.particle import _paper_path, _series_arrays
from netcp.prior import GraphParams, init_states, simulate_prior
from netcp.segments import ARModelHyper, GaussMeanHyper, SeriesDensity

try:
    from netcp._kernels import _ckernels
except ImportError:
    _ckernels = None

needs_compiled = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def chain_graph(d, w=3.0, q=0.5, q0=0.05):
    A = np.zeros((d, d), dtype=np.int64)
    for i in range(d - 1):
        A[i, i + 1] = 1
    return GraphParams(A, np.ones(d), np.full((d, d), w), np.full(d, q0),
                       np.full((d, d), q), 0.1)


def make_problem(seed, T=60, d=3, kind="gauss"):
    rng = np.random.default_rng(seed)
    g = chain_graph(d)
    x = simulate_prior(g, T, rng)
    y = rng.normal(size=(d, T))
    if kind == "gauss":
        dens = [SeriesDensity.gauss(y[j], GaussMeanHyper(0.5, 3.0), j=j) for j in range(d)]
    else:
        h = ARModelHyper(1.0, 1.0, [1.0, 0.4][: (2 if kind == "ar2" else 1)])
        dens = [SeriesDensity.ar(y[j], h, j=j) for j in range(d)]
    return g, x, dens


@needs_compiled
class TestSegLogdensParity:
    @pytest.mark.parametrize("kind", ["gauss", "ar1", "ar2"])
    def test_matches_python_and_reference(self, kind, rng):
        y = rng.normal(size=40)
        if kind == "gauss":
            dens = SeriesDensity.gauss(y, GaussMeanHyper(0.7, 2.5))
        else:
            L = 1 if kind == "ar1" else 2
            dens = SeriesDensity.ar(y, ARModelHyper(1.1, 0.9, np.full(L, 0.8)))
        pack = dens.kernel_pack()
        for _ in range(200):
            s = int(rng.integers(0, 40))
            t = int(rng.integers(s, 41))
            c_val = _ckernels.seg_logdens(*pack, s, t)
            p_val = _pycore.seg_logdens(*pack, s, t)
            assert c_val == pytest.approx(p_val, abs=1e-10)
            assert c_val == pytest.approx(dens.log_marginal(s, t), abs=1e-10)


@needs_compiled
class TestPgUpdateParity:
    @pytest.mark.parametrize("kind", ["gauss", "ar1"])
    @pytest.mark.parametrize("N", [5, 20, 200])
    def test_identical_paths_and_weights(self, kind, N):
        g, x, dens = make_problem(seed=42, kind=kind)
        T = x.shape[1]
        for j in range(g.d):
            arrays = _series_arrays(j, x, g)
            pack = dens[j].kernel_pack()
            for seed in range(25):
                u = np.random.default_rng(seed).random(2 * T + 8)
                path_c, sys_c = _ckernels.pg_update(*pack, T, N, *arrays,
                                                    _paper_path(x, j), u, True)
                path_p, sys_p = _pycore.pg_update(*pack, T, N, *arrays,
                                                  _paper_path(x, j), u, True)
                assert np.array_equal(path_c, path_p)
                for t in range(1, T + 1):
                    assert np.array_equal(sys_c[t][0], sys_p[t][0])
                    np.testing.assert_allclose(sys_c[t][1], sys_p[t][1], atol=1e-9)


@needs_compiled
class TestSingleSiteParity:
    def test_identical_sweeps(self):
        g, x, dens = make_problem(seed=7, kind="gauss")
        T = x.shape[1]
        for j in range(g.d):
            arrays = _series_arrays(j, x, g)
            pack = dens[j].kernel_pack()
            for seed in range(25):
                u = np.random.default_rng(seed).random(T + 2)
                out_c = _ckernels.single_site_sweep(*pack, T, *arrays,
                                                    _paper_path(x, j), u)
                out_p = _pycore.single_site_sweep(*pack, T, *arrays,
                                                  _paper_path(x, j), u)
                assert np.array_equal(out_c, out_p)


def test_backend_exported():
    assert K.BACKEND_NAME in ("cython", "python")
    assert callable(K.pg_update) and callable(K.single_site_sweep)
