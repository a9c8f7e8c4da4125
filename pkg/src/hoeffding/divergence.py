"""Relative entropy of an empirical pair law and its first two derivatives.

For a law ``nu`` over pair states, with row sums ``s_i = sum_t nu_it``::

    h(nu) = sum_ij nu_ij * log( (nu_ij / s_i) / (pi_ij / sum_t pi_it) )

depends on ``nu`` only through its conditional rows and their weights, and
vanishes at ``nu = pi`` together with its gradient.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .markov import TransitionModel, _side, conditional_rows

NEGATIVE_NOISE = 1e-12


def _positive(nu: np.ndarray, name: str) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    if np.any(~np.isfinite(nu)) or np.any(nu <= 0):
        raise InputError(f"{name} must be strictly positive; floor empirical laws first")
    return nu


class DivergenceWorkspace:
    """Reference law with its conditional rows precomputed.

    Args:
        reference: strictly positive pair law ``pi`` (length ``N**2``), or a
            :class:`TransitionModel`, whose ``pi`` is used.
    """

    def __init__(self, reference: np.ndarray | TransitionModel) -> None:
        if isinstance(reference, TransitionModel):
            reference = reference.pi
        self.reference = _positive(reference, "reference law").copy()
        self.n_states = _side(self.reference.size)
        self.conditional = conditional_rows(self.reference)
        self.log_conditional = np.log(self.conditional).ravel()
        for a in (self.reference, self.conditional, self.log_conditional):
            a.setflags(write=False)

    @property
    def pair_size(self) -> int:
        return self.reference.size


def _log_conditional(nu: np.ndarray, n: int) -> np.ndarray:
    rows = nu.reshape(nu.shape[:-1] + (n, n))
    return (np.log(rows) - np.log(rows.sum(axis=-1, keepdims=True))).reshape(nu.shape)


def relative_entropy(gamma: np.ndarray, workspace: DivergenceWorkspace) -> float | np.ndarray:
    """``D(gamma || pi)`` in nats.

    ``gamma`` may be a single law or a stack of laws (one per row), in which
    case an array of divergences is returned.
    """
    gamma = _positive(gamma, "gamma")
    if gamma.shape[-1] != workspace.pair_size:
        raise InputError(f"gamma has length {gamma.shape[-1]}, expected {workspace.pair_size}")
    d = np.sum(gamma * (_log_conditional(gamma, workspace.n_states) - workspace.log_conditional), axis=-1)
    d = np.where((d < 0) & (d > -NEGATIVE_NOISE), 0.0, d)
    return float(d) if d.ndim == 0 else d


def gradient_h(nu: np.ndarray, workspace: DivergenceWorkspace) -> np.ndarray:
    """``d h / d nu_ij = log nu_ij - log s_i - log pi_ij + log sum_t pi_it``."""
    nu = _positive(nu, "nu")
    return _log_conditional(nu, workspace.n_states) - workspace.log_conditional


def hessian_h(nu: np.ndarray) -> np.ndarray:
    """Full ``N**2 x N**2`` Hessian of ``h``; block diagonal with one block per row ``i``.

    Inside block ``i``: ``1/nu_ij - 1/s_i`` on the diagonal, ``-1/s_i`` off it.
    The Hessian does not depend on the reference law.
    """
    nu = _positive(nu, "nu")
    n = _side(nu.size)
    rows = nu.reshape(n, n)
    hess = np.zeros((n * n, n * n))
    for i in range(n):
        block = np.full((n, n), -1.0 / rows[i].sum())
        block[np.diag_indices(n)] += 1.0 / rows[i]
        hess[i * n:(i + 1) * n, i * n:(i + 1) * n] = block
    return hess
