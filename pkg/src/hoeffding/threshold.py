"""Detection thresholds for the Hoeffding test.

Four estimators are provided:

* ``sanov``: ``-log(beta) / n`` from large deviations;
* ``wc-gaussian``: quantile of ``U' H U / (2n)`` with ``U ~ N(0, Lambda)``;
* ``wc-chi2``: quantile of ``sum_k rho_k chi2_1 / (2n)``, ``rho`` the
  eigenvalues of ``H Lambda``;
* ``wc-robust``: quantile of the minimum over several reference laws of the
  Gaussian quadratic form, one independent draw per law.

Monte-Carlo caches hold the ``n``-free statistic ``S = 2n * D`` so that one
cache serves every window size.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Literal, Sequence, Union

import numpy as np

from .divergence import hessian_h
from .errors import (ConvergenceError, InputError, NumericalError,
                     UnreliableQuantileWarning)
from .markov import (DEFAULT_EPS, EmpiricalLaw, SymbolSequence,
                     TransitionModel, empirical_law)

logger = logging.getLogger(__name__)

DEFAULT_T = 1000
MIN_RELIABLE_T = 100
REPAIR_FLOOR = 1e-12
SERIES_TOL = 1e-12
SERIES_MAX_M = 5000
IMAG_TOL = 1e-8
MIN_REFERENCE_FACTOR = 500

Branch = Literal["gaussian", "chi2"]
Reference = Union[TransitionModel, SymbolSequence, EmpiricalLaw, np.ndarray]


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Symmetrized, PSD-repaired covariance of the limiting empirical measure.

    ``factor`` satisfies ``factor @ factor.T == lam`` and is what the Gaussian
    sampler multiplies standard normals by.
    """

    lam: np.ndarray
    truncation_m: int
    repair_log: tuple[float, ...]
    factor: np.ndarray
    raw: np.ndarray = field(repr=False)

    @property
    def repaired_eigencount(self) -> int:
        return len(self.repair_log)


@dataclass(frozen=True, eq=False)
class SampleCache:
    """Sorted draws of the scale-free statistic ``2n * D``."""

    raw_samples: np.ndarray
    method: str
    seed: int | None = None

    def __post_init__(self) -> None:
        s = np.sort(np.asarray(self.raw_samples, dtype=float))
        s.setflags(write=False)
        object.__setattr__(self, "raw_samples", s)

    @property
    def T(self) -> int:
        return int(self.raw_samples.size)


@dataclass(frozen=True)
class ThresholdEstimate:
    value: float
    method: str
    n: int
    beta: float
    T: int | None = None
    seed: int | None = None
    truncation_m: int | None = None
    repaired_eigencount: int | None = None

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["eta"] = rec.pop("value")
        return rec


def _check_beta(beta: float) -> None:
    if not 0.0 < beta < 1.0:
        raise InputError(f"beta must lie in (0, 1), got {beta}")


def _check_n(n: int) -> None:
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")


def _seed_repr(seed) -> int | None:
    return seed if isinstance(seed, (int, np.integer)) else None


def psd_repair(m: np.ndarray, floor: float = REPAIR_FLOOR) -> tuple[np.ndarray, list[float]]:
    """Raise every eigenvalue of a symmetric matrix below ``floor`` up to ``floor``.

    Returns the repaired matrix and the list of original eigenvalues that
    were replaced. A matrix that needs no repair is returned unchanged.
    """
    repaired, log, _, _ = _repair(m, floor)
    return repaired, log


def _repair(m: np.ndarray, floor: float):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError(f"expected a square matrix, got shape {m.shape}")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(m))))):
        raise InputError("psd_repair needs a symmetric matrix; symmetrize it first")
    try:
        vals, vecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    low = vals < floor
    log = [float(v) for v in vals[low]]
    if not log:
        return m.copy(), log, vals, vecs
    vals = np.where(low, floor, vals)
    repaired = (vecs * vals) @ vecs.T
    return (repaired + repaired.T) / 2.0, log, vals, vecs


def covariance(model: TransitionModel, tol: float = SERIES_TOL, max_m: int = SERIES_MAX_M,
               floor: float = REPAIR_FLOOR) -> CovarianceModel:
    """Asymptotic covariance of ``sqrt(n) * (Gamma_n - pi)`` for the pair chain.

    ``Lambda_ij = pi_i (I_ij - pi_j) + sum_{m>=1} [pi_i (P^m_ij - pi_j) + pi_j (P^m_ji - pi_i)]``,
    the series being cut at the first ``m`` with ``max|P^m - 1 pi'| < tol``.
    """
    pi = np.asarray(model.pi, dtype=float)
    if np.any(pi <= 0):
        raise InputError("covariance needs a strictly positive stationary law; floor it first")
    p = model.p
    lam = np.diag(pi) - np.outer(pi, pi)
    limit = np.broadcast_to(pi, p.shape)
    power = np.eye(p.shape[0])
    residual = np.inf
    for m in range(1, max_m + 1):
        power = power @ p
        diff = power - limit
        term = pi[:, None] * diff
        lam += term + term.T
        residual = float(np.max(np.abs(diff)))
        if residual < tol:
            break
    else:
        raise ConvergenceError("covariance series did not converge", residual, max_m)
    raw = lam
    sym = (lam + lam.T) / 2.0
    repaired, log, vals, vecs = _repair(sym, floor)
    factor = vecs * np.sqrt(np.maximum(vals, 0.0))
    logger.debug("covariance: m0=%d, %d eigenvalues repaired", m, len(log))
    for a in (repaired, factor, raw):
        a.setflags(write=False)
    return CovarianceModel(lam=repaired, truncation_m=m, repair_log=tuple(log), factor=factor, raw=raw)


def _warn_small_T(T: int) -> None:
    if T < 1:
        raise InputError(f"T must be >= 1, got {T}")
    if T < MIN_RELIABLE_T:
        warnings.warn(f"T={T} Monte-Carlo samples give unreliable quantiles", UnreliableQuantileWarning,
                      stacklevel=3)


def _gaussian_draws(cov: CovarianceModel, hess: np.ndarray, T: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((T, cov.factor.shape[1]))
    u = z @ cov.factor.T
    return np.einsum("ti,ti->t", u @ hess, u)


def gaussian_sample_cache(cov: CovarianceModel, hess: np.ndarray, T: int = DEFAULT_T,
                          seed: int | np.random.SeedSequence | None = None) -> SampleCache:
    """``T`` draws of ``U' H U`` with ``U ~ N(0, Lambda)``."""
    _warn_small_T(T)
    hess = np.asarray(hess, dtype=float)
    if hess.shape != cov.lam.shape:
        raise InputError(f"hessian shape {hess.shape} does not match covariance {cov.lam.shape}")
    draws = _gaussian_draws(cov, hess, T, np.random.default_rng(seed))
    return SampleCache(draws, "gaussian", _seed_repr(seed))


def chi2_mixture_weights(hess: np.ndarray, cov: CovarianceModel, imag_tol: float = IMAG_TOL) -> np.ndarray:
    """Eigenvalues of ``H @ Lambda`` as nonnegative reals, largest first.

    Raises:
        NumericalError: if an eigenvalue has an imaginary part larger than
            ``imag_tol`` relative to the spectrum's scale.
    """
    prod = np.asarray(hess, dtype=float) @ cov.lam
    vals = np.linalg.eigvals(prod)
    scale = max(1.0, float(np.max(np.abs(vals))))
    worst = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    if worst > imag_tol * scale:
        raise NumericalError(f"H @ Lambda has complex eigenvalues (max imaginary part {worst:.3e})")
    rho = np.maximum(vals.real, 0.0)
    return np.sort(rho)[::-1]


def chi2_sample_cache(rho: np.ndarray, T: int = DEFAULT_T,
                      seed: int | np.random.SeedSequence | None = None) -> SampleCache:
    """``T`` draws of ``sum_k rho_k * chi2_1``."""
    _warn_small_T(T)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise InputError("chi-square mixture weights must be nonnegative")
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((T, rho.size)) ** 2 @ rho
    return SampleCache(draws, "chi2", _seed_repr(seed))


def order_statistic(sorted_samples: np.ndarray, beta: float) -> float:
    """The ``ceil((1 - beta) * T)``-th smallest of ``T`` sorted samples."""
    _check_beta(beta)
    T = len(sorted_samples)
    if T == 0:
        raise InputError("no samples")
    if beta * T < 1:
        warnings.warn(f"beta={beta} is below the resolution 1/T={1 / T:.2e}; using the sample maximum",
                      UnreliableQuantileWarning, stacklevel=3)
    k = T - math.floor(beta * T + 1e-9)
    return float(sorted_samples[k - 1])


def quantile_threshold(cache: SampleCache, n: int, beta: float) -> ThresholdEstimate:
    """``eta = s_(ceil((1 - beta) T)) / (2n)`` from a cache of raw samples."""
    _check_n(n)
    value = order_statistic(cache.raw_samples, beta) / (2.0 * n)
    method = {"gaussian": "wc-gaussian", "chi2": "wc-chi2", "robust": "wc-robust"}.get(cache.method, cache.method)
    return ThresholdEstimate(value=max(value, 0.0), method=method, n=n, beta=beta, T=cache.T, seed=cache.seed)


def sanov_threshold(n: int, beta: float) -> ThresholdEstimate:
    """``eta = -log(beta) / n``."""
    _check_n(n)
    if not 0.0 < beta <= 1.0:
        raise InputError(f"beta must lie in (0, 1], got {beta}")
    return ThresholdEstimate(value=-math.log(beta) / n + 0.0, method="sanov", n=n, beta=beta)


@dataclass(frozen=True, eq=False)
class ReferenceFit:
    """Everything the samplers need about one reference law."""

    model: TransitionModel
    hessian: np.ndarray
    covariance: CovarianceModel


def reference_model(reference: Reference, eps: float = DEFAULT_EPS,
                    min_length_factor: float = MIN_REFERENCE_FACTOR,
                    n_states: int | None = None) -> TransitionModel:
    """Turn a model, a reference path, or a pair law into a :class:`TransitionModel`.

    A reference path must hold at least ``min_length_factor * N**2`` pair
    symbols. Paths and laws are floored at ``eps``; the transition rows are
    the conditionals of the floored law.
    """
    if isinstance(reference, TransitionModel):
        return reference
    if isinstance(reference, SymbolSequence):
        size = reference.alphabet.pair_size
        if len(reference) < min_length_factor * size:
            raise InputError(f"reference path has {len(reference)} symbols; need at least "
                             f"{min_length_factor:g} * N^2 = {int(min_length_factor * size)}")
        reference = empirical_law(reference, eps=eps)
    if isinstance(reference, EmpiricalLaw):
        reference = reference.gamma
    law = np.asarray(reference, dtype=float)
    if law.ndim != 1:
        raise InputError("a reference law must be a vector over pair states")
    if n_states is not None and law.size != n_states * n_states:
        raise InputError(f"reference law has {law.size} entries, expected {n_states ** 2}")
    return TransitionModel.from_law(law, eps)


def fit_reference(reference: Reference, eps: float = DEFAULT_EPS, tol: float = SERIES_TOL,
                  max_m: int = SERIES_MAX_M, floor: float = REPAIR_FLOOR,
                  min_length_factor: float = MIN_REFERENCE_FACTOR) -> ReferenceFit:
    """Steps shared by both threshold algorithms: law, Hessian, and covariance."""
    model = reference_model(reference, eps=eps, min_length_factor=min_length_factor)
    cov = covariance(model, tol=tol, max_m=max_m, floor=floor)
    return ReferenceFit(model=model, hessian=hessian_h(model.pi), covariance=cov)


def ordinary_cache(fit: ReferenceFit, T: int = DEFAULT_T, seed=None, branch: Branch = "gaussian") -> SampleCache:
    if branch == "gaussian":
        return gaussian_sample_cache(fit.covariance, fit.hessian, T, seed)
    if branch == "chi2":
        return chi2_sample_cache(chi2_mixture_weights(fit.hessian, fit.covariance), T, seed)
    raise InputError(f"unknown branch {branch!r}; use 'gaussian' or 'chi2'")


def law_seed(seed: int | None, index: int) -> int | np.random.SeedSequence | None:
    """Seed for the draws of law ``index`` in a robust cache.

    Law 0 uses ``seed`` itself so a one-law robust cache reproduces the
    ordinary Gaussian cache built from the same seed.
    """
    if index == 0:
        return seed
    return np.random.SeedSequence(seed, spawn_key=(index,))


def robust_cache(fits: Sequence[ReferenceFit], T: int = DEFAULT_T, seed: int | None = None) -> SampleCache:
    """``T`` draws of ``min_l U_l' H_l U_l`` with independent ``U_l ~ N(0, Lambda_l)``."""
    if not fits:
        raise InputError("robust cache needs at least one reference law")
    _warn_small_T(T)
    best = None
    for l, fit in enumerate(fits):
        draws = _gaussian_draws(fit.covariance, fit.hessian, T, np.random.default_rng(law_seed(seed, l)))
        best = draws if best is None else np.minimum(best, draws)
    return SampleCache(best, "robust", _seed_repr(seed))


def _tag(estimate: ThresholdEstimate, fits: Sequence[ReferenceFit]) -> ThresholdEstimate:
    return replace(estimate,
                   truncation_m=max(f.covariance.truncation_m for f in fits),
                   repaired_eigencount=sum(f.covariance.repaired_eigencount for f in fits))


def estimate_threshold_ordinary(reference: Reference, n: int, beta: float, T: int = DEFAULT_T,
                                seed: int | None = None, branch: Branch = "gaussian",
                                eps: float = DEFAULT_EPS,
                                min_length_factor: float = MIN_REFERENCE_FACTOR) -> ThresholdEstimate:
    """Weak-convergence threshold for the ordinary test, end to end.

    ``reference`` is either the exact model or data to estimate it from (a
    long reference path, or a pair law).
    """
    _check_n(n)
    _check_beta(beta)
    fit = fit_reference(reference, eps=eps, min_length_factor=min_length_factor)
    return _tag(quantile_threshold(ordinary_cache(fit, T, seed, branch), n, beta), [fit])


def estimate_threshold_robust(references: Sequence[Reference], n: int, beta: float, T: int = DEFAULT_T,
                              seed: int | None = None, eps: float = DEFAULT_EPS,
                              min_length_factor: float = MIN_REFERENCE_FACTOR) -> ThresholdEstimate:
    """Weak-convergence threshold for the robust test over ``L`` reference laws."""
    _check_n(n)
    _check_beta(beta)
    if not references:
        raise InputError("need at least one reference")
    fits = [fit_reference(r, eps=eps, min_length_factor=min_length_factor) for r in references]
    sizes = {f.model.n_states for f in fits}
    if len(sizes) != 1:
        raise InputError(f"references disagree on the number of states: {sorted(sizes)}")
    return _tag(quantile_threshold(robust_cache(fits, T, seed), n, beta), fits)

