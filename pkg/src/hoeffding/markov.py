"""Finite-alphabet Markov models and their pair-chain lifting.

An observation stream ``Y`` on ``N`` states is turned into the pair chain
``Z_l = (Y_{l-1}, Y_l)`` on ``N**2`` states. Pair ``(i, j)`` (both 1-based)
has the row-major index ``k = (i - 1) * N + j``; every module shares this
convention. Public functions speak 1-based states and symbols, arrays are
indexed 0-based internally.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, InputError, NumericalError, ValidationError

DEFAULT_EPS = 1e-10
STOCHASTIC_TOL = 1e-9


@dataclass(frozen=True)
class Alphabet:
    """The original alphabet of ``n_states`` symbols and its pair alphabet."""

    n_states: int

    def __post_init__(self) -> None:
        if int(self.n_states) != self.n_states or self.n_states < 1:
            raise InputError(f"n_states must be a positive integer, got {self.n_states!r}")

    @property
    def pair_size(self) -> int:
        return self.n_states * self.n_states

    def pair_index(self, i: int, j: int) -> int:
        """1-based pair index of the 1-based state pair ``(i, j)``."""
        n = self.n_states
        if not (1 <= i <= n and 1 <= j <= n):
            raise InputError(f"state pair ({i}, {j}) outside 1..{n}")
        return (i - 1) * n + j

    def pair_states(self, k: int) -> tuple[int, int]:
        """Inverse of :meth:`pair_index`."""
        if not 1 <= k <= self.pair_size:
            raise InputError(f"pair index {k} outside 1..{self.pair_size}")
        i, j = divmod(k - 1, self.n_states)
        return i + 1, j + 1


def _side(pair_size: int) -> int:
    n = int(round(np.sqrt(pair_size)))
    if n * n != pair_size:
        raise InputError(f"length {pair_size} is not the square of an integer")
    return n


def validate_stochastic(m: np.ndarray, name: str = "matrix", tol: float = STOCHASTIC_TOL) -> np.ndarray:
    """Return ``m`` as a float array after checking it is square and row-stochastic."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} has non-finite entries")
    if np.any(m < 0):
        raise ValidationError(f"{name} has negative entries")
    worst = float(np.max(np.abs(m.sum(axis=1) - 1.0)))
    if worst > tol:
        raise ValidationError(f"{name} is not row-stochastic (max |row sum - 1| = {worst:.3e})")
    return m


def lift_transition(q: np.ndarray) -> np.ndarray:
    """Transition matrix of the pair chain.

    ``P[(k,l), (i,j)] = 1{i == l} * q[i, j]``: from pair ``(k, l)`` the chain
    can only move to a pair starting with ``l``.
    """
    q = validate_stochastic(q, "q")
    n = q.shape[0]
    p = np.zeros((n * n, n * n))
    for l in range(n):
        # rows (k, l) for every k; the block of columns (l, *) receives row l of q
        p[l::n, l * n:(l + 1) * n] = q[l]
    return p


def stationary_law(p: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Stationary law of a row-stochastic matrix by power iteration.

    Starts from the uniform law and iterates ``pi <- pi @ p`` until
    ``max|pi @ p - pi| <= tol``, then keeps iterating while the residual
    still shrinks so that ``pi`` is accurate to rounding level, not just to
    ``tol`` divided by the spectral gap.

    Raises:
        ConvergenceError: if the residual is still above ``tol`` after
            ``max_iter`` iterations (typically a periodic chain).
    """
    p = validate_stochastic(p, "p")
    pi = np.full(p.shape[0], 1.0 / p.shape[0])
    residual = np.inf
    for _ in range(max_iter):
        nxt = pi @ p
        nxt /= nxt.sum()
        residual = float(np.max(np.abs(nxt - pi)))
        pi = nxt
        if residual <= tol:
            break
    else:
        raise ConvergenceError("power iteration did not reach the stationary law", residual, max_iter)
    for _ in range(max_iter):
        nxt = pi @ p
        nxt /= nxt.sum()
        step = float(np.max(np.abs(nxt - pi)))
        pi = nxt
        if step == 0.0 or step >= residual:
            break
        residual = step
    return pi


def conditional_rows(pi: np.ndarray) -> np.ndarray:
    """``Q_hat[i, j] = pi_ij / sum_t pi_it`` for a law over pair states."""
    pi = np.asarray(pi, dtype=float)
    n = _side(pi.shape[-1])
    rows = pi.reshape(pi.shape[:-1] + (n, n))
    sums = rows.sum(axis=-1, keepdims=True)
    if np.any(sums <= 0):
        raise NumericalError("law has a zero row sum; floor it before taking conditionals")
    return rows / sums


@dataclass(frozen=True, eq=False)
class TransitionModel:
    """A chain ``q`` on N states with its lifted matrix ``p`` and stationary pair law ``pi``."""

    q: np.ndarray
    p: np.ndarray
    pi: np.ndarray

    @classmethod
    def from_q(cls, q: np.ndarray | Sequence[Sequence[float]], tol: float = 1e-12,
               max_iter: int = 100_000) -> TransitionModel:
        q = validate_stochastic(q, "q").copy()
        p = lift_transition(q)
        pi = stationary_law(p, tol=tol, max_iter=max_iter)
        for a in (q, p, pi):
            a.setflags(write=False)
        return cls(q=q, p=p, pi=pi)

    @classmethod
    def from_law(cls, law: np.ndarray, eps: float = DEFAULT_EPS) -> TransitionModel:
        """Model whose transition rows are the conditionals of a pair law.

        The law is floored at ``eps`` and renormalized first. The returned
        ``pi`` is the exact stationary law of the lifted chain, which agrees
        with the input law up to its deviation from stationarity.
        """
        return cls.from_q(conditional_rows(floor_law(law, eps)))

    @property
    def n_states(self) -> int:
        return self.q.shape[0]

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet(self.n_states)


@dataclass(frozen=True, eq=False)
class SymbolSequence:
    """Pair-state symbols (1-based), optionally timestamped in seconds."""

    symbols: np.ndarray
    alphabet: Alphabet
    timestamps: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        s = np.asarray(self.symbols, dtype=np.int64)
        if s.ndim != 1:
            raise InputError("symbols must be one-dimensional")
        if s.size and (s.min() < 1 or s.max() > self.alphabet.pair_size):
            raise InputError(f"pair symbols must lie in 1..{self.alphabet.pair_size}")
        object.__setattr__(self, "symbols", s)
        if self.timestamps is not None:
            t = np.asarray(self.timestamps, dtype=float)
            if t.shape != s.shape:
                raise InputError("timestamps and symbols differ in length")
            object.__setattr__(self, "timestamps", t)

    def __len__(self) -> int:
        return int(self.symbols.size)


@dataclass(frozen=True, eq=False)
class EmpiricalLaw:
    gamma: np.ndarray
    floor_eps: float
    sample_size: int


def pair_encode(y_sequence: Sequence[int] | np.ndarray, alphabet: Alphabet,
                timestamps: Sequence[float] | np.ndarray | None = None) -> SymbolSequence:
    """Encode states ``Y_0..Y_n`` as the pair symbols ``Z_1..Z_n``.

    If timestamps for the ``Y`` values are given, ``Z_l`` inherits the
    timestamp of ``Y_l``.
    """
    y = np.asarray(y_sequence)
    if y.ndim != 1 or y.size < 2:
        raise InputError("need a one-dimensional sequence of at least 2 states")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise InputError("states must be integers")
        y = y.astype(np.int64)
    n = alphabet.n_states
    if y.min() < 1 or y.max() > n:
        raise InputError(f"states must lie in 1..{n}")
    z = (y[:-1] - 1) * n + y[1:]
    ts = None
    if timestamps is not None:
        t = np.asarray(timestamps, dtype=float)
        if t.shape != y.shape:
            raise InputError("timestamps and states differ in length")
        ts = t[1:]
    return SymbolSequence(z.astype(np.int64), alphabet, ts)


def floor_law(freq: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """``max(freq, eps)`` then normalize; works row-wise on 2-D input."""
    if eps <= 0:
        raise InputError(f"eps must be positive, got {eps}")
    f = np.maximum(np.asarray(freq, dtype=float), eps)
    return f / f.sum(axis=-1, keepdims=True)


def empirical_law(z: SymbolSequence, alphabet: Alphabet | None = None,
                  eps: float = DEFAULT_EPS) -> EmpiricalLaw:
    """Floored, normalized frequency of each pair symbol in ``z``."""
    alphabet = alphabet or z.alphabet
    symbols = z.symbols if isinstance(z, SymbolSequence) else np.asarray(z, dtype=np.int64)
    if symbols.size == 0:
        raise InputError("cannot estimate a law from an empty sequence")
    counts = np.bincount(symbols - 1, minlength=alphabet.pair_size)
    if counts.size > alphabet.pair_size:
        raise InputError(f"symbols exceed the pair alphabet size {alphabet.pair_size}")
    gamma = floor_law(counts / symbols.size, eps)
    return EmpiricalLaw(gamma=gamma, floor_eps=eps, sample_size=int(symbols.size))


def _cumulative_rows(q: np.ndarray) -> np.ndarray:
    cum = np.cumsum(q, axis=1)
    cum[:, -1] = 1.0
    return cum


def simulate_states(model: TransitionModel, n: int, seed: int | np.random.Generator | None) -> np.ndarray:
    """``n`` states of the original chain, 1-based.

    ``Y_0`` is drawn from the first-coordinate marginal of ``pi`` so that
    ``Z_1 = (Y_0, Y_1)`` is distributed as ``pi``.
    """
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    big_n = model.n_states
    marginal = model.pi.reshape(big_n, big_n).sum(axis=1)
    cum = _cumulative_rows(model.q).tolist()
    u = rng.random(n).tolist()
    start = np.cumsum(marginal)
    start[-1] = 1.0
    state = bisect.bisect_right(start.tolist(), u[0])
    out = [state]
    for x in u[1:]:
        state = bisect.bisect_right(cum[state], x)
        out.append(state)
    return np.asarray(out, dtype=np.int64) + 1


def simulate_path(model: TransitionModel, n: int, seed: int | np.random.Generator | None) -> SymbolSequence:
    """``n`` pair symbols drawn from the lifted chain started at ``pi``."""
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    return pair_encode(simulate_states(model, n + 1, seed), model.alphabet)


def simulate_counts(model: TransitionModel, n: int, paths: int,
                    seed: int | np.random.Generator | None) -> np.ndarray:
    """Pair-symbol counts of ``paths`` independent length-``n`` paths.

    Vectorized across paths; returns an integer array of shape
    ``(paths, N**2)`` whose rows sum to ``n``.
    """
    if n < 1 or paths < 1:
        raise InputError("n and paths must be >= 1")
    rng = np.random.default_rng(seed)
    big_n = model.n_states
    size = big_n * big_n
    cum = _cumulative_rows(model.q)
    counts = np.zeros(paths * size, dtype=np.int64)
    base = np.arange(paths) * size
    pi_cum = np.cumsum(model.pi)
    pi_cum[-1] = 1.0
    z = np.minimum(np.searchsorted(pi_cum, rng.random(paths), side="right"), size - 1)
    counts[base + z] += 1
    prev = z % big_n
    for _ in range(n - 1):
        u = rng.random(paths)
        nxt = np.minimum((u[:, None] >= cum[prev]).sum(axis=1), big_n - 1)
        counts[base + prev * big_n + nxt] += 1
        prev = nxt
    return counts.reshape(paths, size)
