"""Simulation-study harness: scenario generators, link analysis, Bayes factors.

Five change-point generating scenarios over d = 4 series:

  S1  chain lead-lag graph 1->2->3->4 (edge weights 5, decay 0.6, background
      rate 1/40);
  S2  S1 with the 2->3 edge removed (two sub-graphs);
  S3  one Bernoulli(1/40) process shared by all series (synchronous changes);
  S4  blocks {1,2} and {3,4}, each sharing an independent Bernoulli(1/40);
  S5  independent Bernoulli(1/40) per series.

Each scenario is paired with a segment likelihood: Gaussian changing means
(sigma^2 = 0.5, gamma^2 = 3) or AR(1) segments whose (phi, sigma^2) cycle
deterministically through {(-0.8, 0.09), (0.8, 1), (-0.8, 4), (0.8, 9)}.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import EvidenceConfig, RunConfig, log_evidence, run_mcmc
from .errors import NetcpError, ParameterError
from .io import ObservationMatrix
from .prior import GraphParams, change_indicators, simulate_prior

SCENARIO_D = 4
SCENARIO_RATE = 1.0 / 40.0
AR1_STATES = ((-0.8, 0.09), (0.8, 1.0), (-0.8, 4.0), (0.8, 9.0))
GAUSS_SIGMA2 = 0.5
GAUSS_GAMMA2 = 3.0


@dataclass
class ScenarioSpec:
    """One cell of the simulation study."""

    scenario: str
    T: int = 500
    likelihood: str = "gauss_mean"   # gauss_mean | ar1
    n_replicates: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in ("S1", "S2", "S3", "S4", "S5"):
            raise ParameterError(f"unknown scenario {self.scenario!r}")
        if self.likelihood not in ("gauss_mean", "ar1"):
            raise ParameterError(f"unknown likelihood {self.likelihood!r}")


def scenario_graph(scenario: str) -> GraphParams | None:
    """Generating GraphParams for S1/S2 (None: S3-S5 are direct mechanisms)."""
    if scenario not in ("S1", "S2"):
        return None
    d = SCENARIO_D
    A = np.zeros((d, d), dtype=np.int64)
    edges = [(0, 1), (1, 2), (2, 3)]
    if scenario == "S2":
        edges.remove((1, 2))
    W = np.ones((d, d))
    q = np.full((d, d), 0.5)
    for (i, j) in edges:
        A[i, j] = 1
        W[i, j] = 5.0
        q[i, j] = 0.6
    return GraphParams(A, np.ones(d), W, np.full(d, SCENARIO_RATE), q, 0.1)


def true_adjacency(scenario: str) -> np.ndarray:
    g = scenario_graph(scenario)
    if g is not None:
        return g.A.copy()
    return np.zeros((SCENARIO_D, SCENARIO_D), dtype=np.int64)


def _scenario_indicators(spec: ScenarioSpec, rng) -> np.ndarray:
    d, T = SCENARIO_D, spec.T
    g = scenario_graph(spec.scenario)
    if g is not None:
        return change_indicators(simulate_prior(g, T, rng))
    u = np.zeros((d, T), dtype=np.uint8)
    if spec.scenario == "S3":
        shared = rng.random(T - 1) < SCENARIO_RATE
        u[:, 1:] = shared
    elif spec.scenario == "S4":
        for rows in ((0, 1), (2, 3)):
            shared = rng.random(T - 1) < SCENARIO_RATE
            for j in rows:
                u[j, 1:] = shared
    else:  # S5
        u[:, 1:] = rng.random((d, T - 1)) < SCENARIO_RATE
    return u


def _draw_data(u: np.ndarray, likelihood: str, rng) -> np.ndarray:
    d, T = u.shape
    y = np.empty((d, T))
    for j in range(d):
        seg_id = np.cumsum(u[j])
        if likelihood == "gauss_mean":
            means = rng.normal(0.0, np.sqrt(GAUSS_GAMMA2), size=seg_id[-1] + 1)
            y[j] = means[seg_id] + rng.normal(0.0, np.sqrt(GAUSS_SIGMA2), size=T)
        else:
            prev = 0.0
            for t in range(T):
                phi, s2 = AR1_STATES[seg_id[t] % 4]
                prev = phi * prev + rng.normal(0.0, np.sqrt(s2))
                y[j, t] = prev
    return y


def generate_scenario(spec: ScenarioSpec, replicate_index: int):
    """Data, true adjacency and true change indicators for one replicate.

    Deterministic in (spec.seed, replicate_index); replicates use independent
    spawned generator streams.
    """
    seq = np.random.SeedSequence(spec.seed, spawn_key=(replicate_index,))
    rng = np.random.default_rng(seq)
    u = _scenario_indicators(spec, rng)
    y = _draw_data(u, spec.likelihood, rng)
    return ObservationMatrix(y), true_adjacency(spec.scenario), u


def link_auc(edge_prob: np.ndarray, true_A: np.ndarray) -> float | None:
    """Rank-based AUC of the off-diagonal edge scores against the true graph.

    Probability that a uniformly chosen true edge outranks a uniformly chosen
    non-edge, ties counting one half. None ("undefined") when the truth has no
    positive or no negative off-diagonal entries.
    """
    edge_prob = np.asarray(edge_prob, dtype=float)
    true_A = np.asarray(true_A)
    d = true_A.shape[0]
    off = ~np.eye(d, dtype=bool)
    scores = edge_prob[off]
    labels = true_A[off] > 0
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        return None
    pos = scores[labels]
    neg = scores[~labels]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return float(wins / (n_pos * n_neg))


def empty_graph_accuracy(edge_prob: np.ndarray, threshold: float = 0.5) -> float:
    """Fraction of off-diagonal pairs classified absent at the threshold;
    the link-analysis score used when the true graph is empty (AUC undefined)."""
    d = edge_prob.shape[0]
    off = ~np.eye(d, dtype=bool)
    return float((edge_prob[off] < threshold).mean())


@dataclass
class StudyBudget:
    """Compute budget of one study run (desk scale by default; the paper's
    full scale is 50 replicates, 5000 iterations, 500 burn-in, 150 particles)."""

    n_iters: int = 2000
    burn_in: int = 200
    particles: int = 150
    compute_auc: bool = True
    compute_logbf: bool = False
    evidence: EvidenceConfig = field(default_factory=EvidenceConfig)
    n_jobs: int = 1


@dataclass
class ScenarioReport:
    scenario: str
    likelihood: str
    n_replicates: int
    failures: int
    auc: list
    auc_mean: float | None
    auc_q05: float | None
    auc_q95: float | None
    empty_graph_accuracy: float | None
    logbf: dict   # model -> {"values": [...], "mean": m, "q05": a, "q95": b}


@dataclass
class EvalReport:
    reports: list

    def to_json(self) -> str:
        return json.dumps([r.__dict__ for r in self.reports], indent=2, sort_keys=True)


def _fit_config(spec: ScenarioSpec, budget: StudyBudget, model: str, seed: int) -> RunConfig:
    hyper = ({"sigma2": GAUSS_SIGMA2, "gamma2": GAUSS_GAMMA2}
             if spec.likelihood == "gauss_mean"
             else {"alpha": 1.0, "beta": 1.0, "delta": [1.0]})
    return RunConfig(
        n_iters=budget.n_iters, burn_in=budget.burn_in, particles=budget.particles,
        seed=seed, model=model,
        segment_model="gauss_mean" if spec.likelihood == "gauss_mean" else "ar",
        segment_hyper=hyper, evidence=budget.evidence)


def _run_replicate(args):
    spec, budget, models, r = args
    obs, true_A, _ = generate_scenario(spec, r)
    seed_root = np.random.SeedSequence(spec.seed, spawn_key=(r, 1))
    seeds = [int(s.generate_state(1)[0]) for s in seed_root.spawn(1 + len(models))]
    out = {"auc": None, "empty_acc": None, "logbf": {}}
    if budget.compute_auc:
        summary = run_mcmc(obs, _fit_config(spec, budget, "netcp", seeds[0]))
        auc = link_auc(summary.edge_prob, true_A)
        out["auc"] = auc
        if auc is None:
            out["empty_acc"] = empty_graph_accuracy(summary.edge_prob)
    if budget.compute_logbf:
        ev = {}
        for k, model in enumerate(models):
            ev[model] = log_evidence(obs, _fit_config(spec, budget, model, seeds[1 + k])).total
        base = ev.get("netcp")
        for model in models:
            out["logbf"][model] = 0.0 if model == "netcp" else ev[model] - base
    return out


def run_study(specs, models=("netcp", "yao"), budget: StudyBudget | None = None) -> EvalReport:
    """Fit each scenario's replicates, aggregate AUC and log Bayes factors.

    Per-replicate failures are logged and excluded, with counts reported.
    log Bayes factors are relative to NetCP (positive favors the competitor).
    """
    budget = budget or StudyBudget()
    models = list(models)
    if budget.compute_logbf and "netcp" not in models:
        raise ParameterError("log Bayes factors are relative to netcp; include it in models")
    reports = []
    for spec in specs:
        tasks = [(spec, budget, models, r) for r in range(spec.n_replicates)]
        results, failures = [], 0
        if budget.n_jobs > 1:
            with ProcessPoolExecutor(max_workers=budget.n_jobs) as pool:
                futures = list(pool.map(_run_replicate, tasks))
            for res in futures:
                results.append(res)
        else:
            for task in tasks:
                try:
                    results.append(_run_replicate(task))
                except NetcpError as exc:
                    failures += 1
                    logging.getLogger("netcp").warning(
                        "replicate failed for %s: %s", spec.scenario, exc)
        aucs = [r["auc"] for r in results if r["auc"] is not None]
        accs = [r["empty_acc"] for r in results if r["empty_acc"] is not None]
        logbf = {}
        for model in models:
            vals = [r["logbf"][model] for r in results if model in r["logbf"]]
            logbf[model] = {
                "values": vals,
                "mean": float(np.mean(vals)) if vals else None,
                "q05": float(np.quantile(vals, 0.05)) if vals else None,
                "q95": float(np.quantile(vals, 0.95)) if vals else None,
            }
        reports.append(ScenarioReport(
            scenario=spec.scenario, likelihood=spec.likelihood,
            n_replicates=spec.n_replicates, failures=failures,
            auc=aucs,
            auc_mean=float(np.mean(aucs)) if aucs else None,
            auc_q05=float(np.quantile(aucs, 0.05)) if aucs else None,
            auc_q95=float(np.quantile(aucs, 0.95)) if aucs else None,
            empty_graph_accuracy=float(np.mean(accs)) if accs else None,
            logbf=logbf))
    return EvalReport(reports)
