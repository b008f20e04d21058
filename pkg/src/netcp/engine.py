"""MCMC orchestration: full runs, posterior summaries, diagnostics, evidence.

A sweep alternates (1) a blocked update of each series' hidden path and
(2) the hyperparameter block. The empty-graph ("yao") model freezes A at zero
and updates only the background rates. Runs are deterministic given
(seed, config): chains draw from independently spawned generator streams.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ParameterError, ResourceError
from .hyper import (MhConfig, mh_update_background_rate, mh_update_weight_rate,
                    sample_edge_pair, sample_rho)
from .particle import pg_update_series, single_site_update
from .prior import GraphParams, change_indicators, change_prob, init_states
from .segments import ARModelHyper, GaussMeanHyper, SeriesDensity

logger = logging.getLogger("netcp")

ACCEPT_RATE_BAND = (0.05, 0.8)


@dataclass
class EvidenceConfig:
    """Per-prefix schedule of the sequential evidence estimator."""

    iters: int = 500
    burn_in: int = 100
    particles: int | None = None
    warm_start: bool = True
    work_cap: float = 2e9

    def __post_init__(self):
        if not (0 <= self.burn_in < self.iters):
            raise ParameterError("need 0 <= burn_in < iters")


@dataclass
class RunConfig:
    """Configuration of one posterior run."""

    n_iters: int = 2000
    burn_in: int = 200
    n_chains: int = 1
    particles: int = 200
    seed: int = 0
    model: str = "netcp"           # netcp | yao (empty graph, q0 only)
    segment_model: str = "ar"      # ar | gauss_mean
    segment_hyper: dict = field(default_factory=dict)
    mh: MhConfig = field(default_factory=MhConfig)
    sampler: str = "pg"            # pg | single_site
    trace_thin: int = 1
    record_u_trace: bool = False
    sample_hypers: bool = True
    flat_likelihood: bool = False  # test hook: constant likelihood (prior recovery)
    evidence: EvidenceConfig = field(default_factory=EvidenceConfig)

    def __post_init__(self):
        if isinstance(self.mh, dict):
            self.mh = MhConfig(**self.mh)
        if isinstance(self.evidence, dict):
            self.evidence = EvidenceConfig(**self.evidence)
        if not (0 <= self.burn_in < self.n_iters):
            raise ParameterError("need 0 <= burn_in < n_iters")
        if self.particles < 2:
            raise ParameterError("particle budget must be >= 2")
        if self.model not in ("netcp", "yao"):
            raise ParameterError(f"unknown model {self.model!r}")
        if self.segment_model not in ("ar", "gauss_mean"):
            raise ParameterError(f"unknown segment model {self.segment_model!r}")
        if self.sampler not in ("pg", "single_site"):
            raise ParameterError(f"unknown sampler {self.sampler!r}")
        if self.trace_thin < 1:
            raise ParameterError("trace_thin must be >= 1")


@dataclass
class PosteriorSummary:
    """Pooled posterior summaries of one run."""

    cp_prob: np.ndarray            # (d, T) marginal change-point probabilities
    edge_prob: np.ndarray          # (d, d) edge inclusion probabilities
    param_traces: dict             # thinned draws, leading axis = chain
    diagnostics: dict
    log_evidence: float | None = None
    labels: list | None = None
    u_trace: np.ndarray | None = None  # (chains, kept, d, T) when recorded


def _per_series(value, j, default):
    if value is None:
        return default
    if np.ndim(value) >= 1:
        return value[j]
    return value


def build_densities(obs, cfg: RunConfig):
    """One SeriesDensity per series from the configured segment model."""
    y = obs.y
    d = y.shape[0]
    hp = cfg.segment_hyper
    out = []
    for j in range(d):
        if cfg.flat_likelihood:
            out.append(SeriesDensity.flat(y.shape[1], j=j))
        elif cfg.segment_model == "gauss_mean":
            h = GaussMeanHyper(_per_series(hp.get("sigma2"), j, 1.0),
                               _per_series(hp.get("gamma2"), j, 1.0))
            out.append(SeriesDensity.gauss(y[j], h, j=j))
        else:
            L = int(hp.get("L", 1))
            delta = hp.get("delta")
            if delta is None:
                delta = np.ones(L)
            h = ARModelHyper(_per_series(hp.get("alpha"), j, 1.0),
                             _per_series(hp.get("beta"), j, 1.0),
                             np.atleast_1d(delta))
            ctx = None if obs.lag_context is None else obs.lag_context[j]
            out.append(SeriesDensity.ar(y[j], h, lag_context=ctx, j=j))
    return out


class _Chain:
    """State of one MCMC chain over a fixed data window."""

    def __init__(self, obs, cfg: RunConfig, rng):
        self.cfg = cfg
        self.rng = rng
        self.d, self.T = obs.y.shape
        self.x = init_states(self.d, self.T)
        self.g = GraphParams.empty(self.d, q0=0.5, rho=0.1)
        self.dens = build_densities(obs, cfg)
        self.accept_wq = [0, 0]
        self.accept_q0 = [0, 0]

    def sweep(self):
        cfg = self.cfg
        if cfg.sampler == "single_site":
            self.x = single_site_update(self.x, self.g, self.dens, self.rng)
        else:
            for j in range(self.d):
                self.x[j], _ = pg_update_series(j, self.x, self.g, cfg.particles,
                                                self.dens[j], self.rng)
        if not cfg.sample_hypers:
            return
        if cfg.model == "yao":
            for j in range(self.d):
                mh_update_background_rate(j, self.x, self.g, cfg.mh, self.rng,
                                          stats=self.accept_q0)
            return
        for i in range(self.d):
            for j in range(i + 1, self.d):
                sample_edge_pair(i, j, self.x, self.g, self.rng)
        self.g.rho = sample_rho(self.g.A, self.rng)
        for j in range(self.d):
            mh_update_weight_rate(None, j, self.x, self.g, cfg.mh, self.rng,
                                  stats=self.accept_wq)
            for i in range(self.d):
                if i != j:
                    mh_update_weight_rate(i, j, self.x, self.g, cfg.mh, self.rng,
                                          stats=self.accept_wq)


def _as_observation(y):
    """Accept an ObservationMatrix or a bare (d, T) array."""
    if hasattr(y, "y"):
        return y
    from .io import ObservationMatrix
    return ObservationMatrix(np.asarray(y, dtype=float))


def run_mcmc(y, cfg: RunConfig) -> PosteriorSummary:
    """Run the sampler and pool chains into a PosteriorSummary."""
    obs = _as_observation(y)
    d, T = obs.y.shape
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_chains)
    cp_acc = np.zeros((d, T))
    edge_acc = np.zeros((d, d))
    traces = {k: [] for k in ("rho", "W0", "W", "q0", "q")}
    u_traces = []
    accept_wq = [0, 0]
    accept_q0 = [0, 0]
    kept_total = 0
    for c in range(cfg.n_chains):
        chain = _Chain(obs, cfg, np.random.default_rng(seeds[c]))
        chain_traces = {k: [] for k in traces}
        chain_u = []
        kept = 0
        for it in range(cfg.n_iters):
            chain.sweep()
            if it < cfg.burn_in:
                continue
            u = change_indicators(chain.x)
            cp_acc += u
            edge_acc += chain.g.A
            kept += 1
            if (it - cfg.burn_in) % cfg.trace_thin == 0:
                chain_traces["rho"].append(chain.g.rho)
                chain_traces["W0"].append(chain.g.W0.copy())
                chain_traces["W"].append(chain.g.W.copy())
                chain_traces["q0"].append(chain.g.q0.copy())
                chain_traces["q"].append(chain.g.q.copy())
                if cfg.record_u_trace:
                    chain_u.append(u)
        kept_total += kept
        for k in traces:
            traces[k].append(np.array(chain_traces[k]))
        if cfg.record_u_trace:
            u_traces.append(np.array(chain_u, dtype=np.uint8))
        accept_wq = [a + b for a, b in zip(accept_wq, chain.accept_wq)]
        accept_q0 = [a + b for a, b in zip(accept_q0, chain.accept_q0)]
    cp_prob = cp_acc / kept_total
    cp_prob[:, 0] = 0.0
    edge_prob = edge_acc / kept_total
    param_traces = {k: np.stack(v) for k, v in traces.items()}
    u_trace = np.stack(u_traces) if u_traces else None
    diagnostics = _diagnostics(cp_prob, u_trace, accept_wq, accept_q0)
    return PosteriorSummary(cp_prob, edge_prob, param_traces, diagnostics,
                            labels=getattr(obs, "labels", None), u_trace=u_trace)


def _diagnostics(cp_prob, u_trace, accept_wq, accept_q0) -> dict:
    diag = {}
    if accept_wq[1]:
        rate = accept_wq[0] / accept_wq[1]
        diag["accept_rate_wq"] = rate
        if not (ACCEPT_RATE_BAND[0] < rate < ACCEPT_RATE_BAND[1]):
            logger.warning("weight/rate Metropolis acceptance rate %.3f outside %s",
                           rate, ACCEPT_RATE_BAND)
    if accept_q0[1]:
        diag["accept_rate_q0"] = accept_q0[0] / accept_q0[1]
    if u_trace is not None and u_trace.shape[0] * u_trace.shape[1] >= 1000:
        iat = {}
        pooled = u_trace.reshape(-1, *u_trace.shape[2:])
        for j in range(cp_prob.shape[0]):
            t_star = int(np.argmax(cp_prob[j]))
            if cp_prob[j, t_star] > 0:
                iat[f"series{j}_t{t_star}"] = estimate_iat(pooled[:, j, t_star])
        diag["iat"] = iat
    return diag


def estimate_iat(trace) -> float | None:
    """Integrated autocorrelation time 1 + 2 sum_k acf(k), truncated by
    Geyer's initial positive sequence. Returns None for a constant trace
    (the "degenerate" sentinel)."""
    x = np.asarray(trace, dtype=float)
    if x.size < 1000:
        raise ParameterError("IAT estimation needs a trace of length >= 1000")
    v = x.var()
    if v == 0.0:
        return None
    n = x.size
    xc = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acf = np.fft.irfft(f * np.conj(f), nfft)[:n].real / (v * n)
    gam = acf[: (n // 2) * 2].reshape(-1, 2).sum(axis=1)
    tau = -1.0
    for gm in gam:
        if gm <= 0.0:
            break
        tau += 2.0 * gm
    return max(tau, 1e-12)


@dataclass
class EvidenceResult:
    """Sequential log-evidence estimate with per-term Monte Carlo errors."""

    total: float
    terms: np.ndarray
    term_se: np.ndarray

    @property
    def total_se(self) -> float:
        return float(np.sqrt(np.nansum(self.term_se ** 2)))

    def __float__(self):
        return self.total


class _PrefixView:
    """Data window y[:, :T_cur] with the matching lag-context slice."""

    def __init__(self, obs, T_cur):
        self.y = obs.y[:, :T_cur]
        self.lag_context = obs.lag_context
        self.labels = getattr(obs, "labels", None)


def log_evidence(y, cfg: RunConfig) -> EvidenceResult:
    """Estimate log f(y) by the sequential predictive decomposition.

    For each t, a shortened sampler run on y_{1:t-1} yields posterior draws of
    (x_{t-1}, hyperparameters); each draw is propagated one step through the
    prior transition and the likelihood of y_t is averaged over the propagated
    states. Per-prefix schedules come from cfg.evidence; chains warm-start
    from the previous prefix unless disabled.
    """
    obs = _as_observation(y)
    d, T = obs.y.shape
    ev = cfg.evidence
    n_particles = ev.particles if ev.particles is not None else cfg.particles
    work = T * ev.iters * d * min(n_particles, T)
    if work > ev.work_cap:
        raise ResourceError(
            f"evidence workload {work:.2e} exceeds cap {ev.work_cap:.2e}; "
            "reduce the schedule or raise evidence.work_cap")
    dens_full = build_densities(obs, cfg)
    terms = np.zeros(T)
    term_se = np.zeros(T)
    terms[0] = sum(dens_full[j].predictive(0, 1) for j in range(d))
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    chain_cfg = RunConfig(**{**asdict(cfg), "particles": n_particles,
                             "mh": asdict(cfg.mh), "evidence": asdict(ev)})
    chain = None
    for t in range(2, T + 1):
        view = _PrefixView(obs, t - 1)
        if chain is None or not ev.warm_start:
            chain = _Chain(view, chain_cfg, rng)
        else:
            chain = _extend_chain(chain, view, chain_cfg, rng)
        log_w = np.empty(ev.iters - ev.burn_in)
        kept = 0
        for it in range(ev.iters):
            chain.sweep()
            if it < ev.burn_in:
                continue
            lw = 0.0
            prev = chain.x[:, -1] if t > 2 else np.zeros(d, dtype=np.int64)
            for j in range(d):
                p = change_prob(j, t, prev, chain.g)
                x_jt = t - 1 if rng.random() < p else int(prev[j])
                lw += dens_full[j].predictive(x_jt, t)
            log_w[kept] = lw
            kept += 1
        m = log_w.max()
        w = np.exp(log_w - m)
        mean_w = w.mean()
        terms[t - 1] = m + math.log(mean_w)
        term_se[t - 1] = w.std() / (mean_w * math.sqrt(kept))
    return EvidenceResult(float(terms.sum()), terms, term_se)


def _extend_chain(chain: _Chain, view, cfg: RunConfig, rng) -> _Chain:
    """Warm start: carry (x, g) over to a one-point-longer data window,
    drawing the new column from the prior transition."""
    new = _Chain(view, cfg, rng)
    new.g = chain.g
    T_new = view.y.shape[1]
    new.x[:, :T_new - 1] = chain.x
    if T_new >= 2:
        prev = new.x[:, T_new - 2]
        for j in range(new.d):
            p = change_prob(j, T_new, prev, new.g)
            new.x[j, T_new - 1] = T_new - 1 if rng.random() < p else prev[j]
    new.accept_wq = chain.accept_wq
    new.accept_q0 = chain.accept_q0
    return new
