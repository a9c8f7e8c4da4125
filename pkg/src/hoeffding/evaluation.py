"""Evaluation harness: random models, the simulation oracle, accuracy metric, ROC points."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .divergence import DivergenceWorkspace, relative_entropy
from .errors import InputError
from .markov import (DEFAULT_EPS, TransitionModel, floor_law, simulate_counts,
                     simulate_path)
from .threshold import (DEFAULT_T, fit_reference, order_statistic, ordinary_cache,
                        quantile_threshold, sanov_threshold)

logger = logging.getLogger(__name__)

DEFAULT_ROC_BETAS = (0.001,) + tuple(round(0.01 * i, 2) for i in range(1, 20))
ROC_METHODS = ("HTWC-1", "HTWC-2", "HTSV")
ESTIMATORS = ("wc", "wc-chi2", "sv", "oracle")
REFERENCE_FACTOR = 1000


def seed_sequence(seed) -> np.random.SeedSequence:
    """Normalize an int, ``None`` or existing ``SeedSequence`` for spawning child seeds."""
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def random_transition(N: int, seed=None, min_entry: float = 1e-3,
                      concentration: float = 1.0) -> TransitionModel:
    """A random strictly positive ``N x N`` chain.

    Each row is drawn from a symmetric Dirichlet(``concentration``), floored
    at ``min_entry`` and renormalized.
    """
    if N < 1:
        raise InputError(f"N must be >= 1, got {N}")
    if min_entry <= 0:
        raise InputError("min_entry must be positive so that every transition is possible")
    rng = np.random.default_rng(seed)
    q = rng.dirichlet(np.full(N, float(concentration)), size=N)
    q = np.maximum(q, min_entry)
    return TransitionModel.from_q(q / q.sum(axis=1, keepdims=True))


def statistic_samples(model: TransitionModel, n: int, T: int, seed=None,
                      reference: TransitionModel | DivergenceWorkspace | None = None,
                      eps: float = DEFAULT_EPS) -> np.ndarray:
    """``D(Gamma_n || pi_ref)`` for ``T`` independent length-``n`` paths of ``model``.

    The reference defaults to ``model`` itself (null-hypothesis samples).
    """
    ws = reference if isinstance(reference, DivergenceWorkspace) else DivergenceWorkspace(reference or model)
    counts = simulate_counts(model, n, T, seed)
    return relative_entropy(floor_law(counts / n, eps), ws)


def oracle_threshold(model: TransitionModel, n: int, beta: float, T: int = DEFAULT_T, seed=None,
                     eps: float = DEFAULT_EPS) -> float:
    """Quantile of directly simulated test statistics under the null."""
    samples = np.sort(statistic_samples(model, n, T, seed, eps=eps))
    return order_statistic(samples, beta)


def sample_size_grid(N: int) -> list[int]:
    """``n = 2N^2 + i * floor(0.2 N^2 + 1)`` for ``i = 0, 1, ...`` while ``n < 6N^2 + 5``."""
    step = math.floor(0.2 * N * N + 1)
    out, n = [], 2 * N * N
    while n < 6 * N * N + 5:
        out.append(n)
        n += step
    return out


def squared_error(estimates: Iterable[float], oracles: Iterable[float]) -> float:
    """Average squared difference between estimated and oracle thresholds."""
    e = np.asarray(list(estimates), dtype=float)
    o = np.asarray(list(oracles), dtype=float)
    if e.shape != o.shape or e.size == 0:
        raise InputError("need equally many (and at least one) estimates and oracle values")
    return float(np.mean((e - o) ** 2))


@dataclass(frozen=True)
class ExperimentGrid:
    N_values: tuple[int, ...] = (2, 4, 6, 8)
    beta: float = 0.001
    K: int = 50
    T: int = DEFAULT_T
    seed: int = 0
    n_values: dict[int, tuple[int, ...]] | None = field(default=None)
    eps: float = DEFAULT_EPS

    def __post_init__(self) -> None:
        if not self.N_values:
            raise InputError("grid needs at least one N")
        if min(self.N_values) < 1 or self.K < 1 or self.T < 1:
            raise InputError("N, K and T must all be positive")
        if not 0 < self.beta < 1:
            raise InputError(f"beta must lie in (0, 1), got {self.beta}")

    def sizes(self, N: int) -> tuple[int, ...]:
        if self.n_values and N in self.n_values:
            return tuple(self.n_values[N])
        return tuple(sample_size_grid(N))


def threshold_curves(model: TransitionModel, n_values: Sequence[int], beta: float, T: int = DEFAULT_T,
                     seed=None, eps: float = DEFAULT_EPS, estimate_pi: bool = True) -> dict[str, np.ndarray]:
    """All four thresholds for one model over a range of sample sizes.

    With ``estimate_pi`` the weak-convergence thresholds are built from a
    reference path of ``1000 N^2`` symbols, otherwise from the exact model.
    One Gaussian and one chi-square cache serve every ``n``; the oracle is
    re-simulated for each ``n``.
    """
    ss = seed_sequence(seed)
    ref_seed, gauss_seed, chi_seed, oracle_seed = ss.spawn(4)
    if estimate_pi:
        path = simulate_path(model, REFERENCE_FACTOR * model.n_states ** 2, np.random.default_rng(ref_seed))
        fit = fit_reference(path, eps=eps)
    else:
        fit = fit_reference(model, eps=eps)
    gauss = ordinary_cache(fit, T, np.random.default_rng(gauss_seed), "gaussian")
    chi = ordinary_cache(fit, T, np.random.default_rng(chi_seed), "chi2")
    oracle_seeds = oracle_seed.spawn(len(n_values))
    out = {name: np.empty(len(n_values)) for name in ESTIMATORS}
    for i, n in enumerate(n_values):
        out["wc"][i] = quantile_threshold(gauss, n, beta).value
        out["wc-chi2"][i] = quantile_threshold(chi, n, beta).value
        out["sv"][i] = sanov_threshold(n, beta).value
        out["oracle"][i] = oracle_threshold(model, n, beta, T, np.random.default_rng(oracle_seeds[i]), eps)
    return out


def accuracy_metric(estimators: str | Sequence[str], grid: ExperimentGrid) -> list[dict]:
    """Average squared error ``d`` of each estimator against the oracle.

    Every repetition ``k`` draws a fresh random model. Returns one row
    ``{"N", "n", "method", "d"}`` per grid cell and estimator.
    """
    methods = [estimators] if isinstance(estimators, str) else list(estimators)
    unknown = set(methods) - set(ESTIMATORS)
    if unknown:
        raise InputError(f"unknown estimators {sorted(unknown)}; choose from {ESTIMATORS}")
    rows = []
    root = np.random.SeedSequence(grid.seed)
    for N, n_seed in zip(grid.N_values, root.spawn(len(grid.N_values))):
        sizes = grid.sizes(N)
        sq = {m: np.zeros(len(sizes)) for m in methods}
        for k, cell in enumerate(n_seed.spawn(grid.K)):
            model_seed, curve_seed = cell.spawn(2)
            model = random_transition(N, np.random.default_rng(model_seed))
            curves = threshold_curves(model, sizes, grid.beta, grid.T, curve_seed, grid.eps)
            for m in methods:
                sq[m] += (curves[m] - curves["oracle"]) ** 2
            logger.debug("accuracy: N=%d repetition %d/%d done", N, k + 1, grid.K)
        for i, n in enumerate(sizes):
            for m in methods:
                rows.append({"N": N, "n": n, "method": m, "d": float(sq[m][i] / grid.K)})
    return rows


@dataclass(frozen=True)
class RocPoint:
    beta: float
    fpr: float
    tpr: float
    method: str


def roc_experiment(null_model: TransitionModel, alt_model: TransitionModel, n: int, T: int = DEFAULT_T,
                   betas: Sequence[float] = DEFAULT_ROC_BETAS, methods: Sequence[str] = ROC_METHODS,
                   seed=None, cache_T: int | None = None, eps: float = DEFAULT_EPS) -> list[RocPoint]:
    """FPR/TPR of the discrete tests given by each threshold estimator.

    ``T`` null paths are the negatives and ``T`` alternative paths the
    positives; all are scored against the exact null law.
    """
    unknown = set(methods) - set(ROC_METHODS)
    if unknown:
        raise InputError(f"unknown methods {sorted(unknown)}; choose from {ROC_METHODS}")
    if null_model.n_states != alt_model.n_states:
        raise InputError("null and alternative models must share the alphabet")
    neg_seed, pos_seed, gauss_seed, chi_seed = seed_sequence(seed).spawn(4)
    ws = DivergenceWorkspace(null_model)
    negatives = statistic_samples(null_model, n, T, np.random.default_rng(neg_seed), ws, eps)
    positives = statistic_samples(alt_model, n, T, np.random.default_rng(pos_seed), ws, eps)
    fit = fit_reference(null_model, eps=eps)
    caches = {}
    if "HTWC-1" in methods:
        caches["HTWC-1"] = ordinary_cache(fit, cache_T or T, np.random.default_rng(gauss_seed), "gaussian")
    if "HTWC-2" in methods:
        caches["HTWC-2"] = ordinary_cache(fit, cache_T or T, np.random.default_rng(chi_seed), "chi2")
    points = []
    for beta in betas:
        for method in methods:
            if method == "HTSV":
                eta = sanov_threshold(n, beta).value
            else:
                eta = quantile_threshold(caches[method], n, beta).value
            points.append(RocPoint(beta=beta, fpr=float(np.mean(negatives > eta)),
                                   tpr=float(np.mean(positives > eta)), method=method))
    return points


def random_roc_experiment(N: int, n: int, T: int = DEFAULT_T, betas: Sequence[float] = DEFAULT_ROC_BETAS,
                          methods: Sequence[str] = ROC_METHODS, seed=None, **kwargs) -> list[RocPoint]:
    """ROC points for a random null model against an independent random alternative."""
    null_seed, alt_seed, run_seed = seed_sequence(seed).spawn(3)
    null_model = random_transition(N, np.random.default_rng(null_seed))
    alt_model = random_transition(N, np.random.default_rng(alt_seed))
    return roc_experiment(null_model, alt_model, n, T, betas, methods, run_seed, **kwargs)
