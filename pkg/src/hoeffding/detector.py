"""Sliding-window anomaly detection on timestamped pair-symbol streams."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .divergence import DivergenceWorkspace, relative_entropy
from .errors import ConfigurationError, DegenerateReferenceError, InputError
from .markov import DEFAULT_EPS, SymbolSequence, TransitionModel, floor_law
from .threshold import (DEFAULT_T, Reference, SampleCache, fit_reference,
                        quantile_threshold, reference_model, robust_cache,
                        sanov_threshold)

logger = logging.getLogger(__name__)

DAY_SECONDS = 86400.0


@dataclass(frozen=True)
class WindowConfig:
    """Window length ``w_s`` and stride ``w_d`` in seconds, target FPR, count floor.

    ``min_samples=None`` means ``max(2, ceil(N^2 / 4))`` for an ``N``-state chain.
    """

    w_s: float
    w_d: float
    beta: float = 0.001
    min_samples: int | None = None

    def __post_init__(self) -> None:
        if not (self.w_s > 0 and self.w_d > 0) or not (math.isfinite(self.w_s) and math.isfinite(self.w_d)):
            raise InputError(f"window size and stride must be positive, got {self.w_s}, {self.w_d}")
        if not 0 < self.beta < 1:
            raise InputError(f"beta must lie in (0, 1), got {self.beta}")
        if self.min_samples is not None and self.min_samples < 2:
            raise InputError(f"min_samples must be >= 2, got {self.min_samples}")

    def sample_floor(self, n_states: int) -> int:
        if self.min_samples is not None:
            return self.min_samples
        return max(2, math.ceil(n_states * n_states / 4))


@dataclass(frozen=True, eq=False)
class Window:
    start: float
    end: float
    symbols: np.ndarray
    skipped: bool = False

    @property
    def n(self) -> int:
        return int(self.symbols.size)


@dataclass(frozen=True)
class WindowReport:
    start: float
    end: float
    n: int
    stat: float
    eta: float
    flagged: bool
    law_index: int | None = None
    skipped: bool = False

    def to_row(self) -> dict:
        return {
            "window_start": self.start,
            "window_end": self.end,
            "n": self.n,
            "divergence": "" if self.skipped else repr(self.stat),
            "threshold": "" if self.skipped else repr(self.eta),
            "flagged": int(self.flagged),
            "law_index": "" if self.law_index is None else self.law_index,
        }


REPORT_COLUMNS = ("window_start", "window_end", "n", "divergence", "threshold", "flagged", "law_index")


@dataclass(frozen=True)
class Period:
    """Time-of-day interval ``[start, end)`` in seconds; wraps past midnight when ``start > end``."""

    start: float
    end: float
    laws: tuple[int, ...]

    def length(self, day: float) -> float:
        return (self.end - self.start) % day or (day if self.start == self.end else 0.0)

    def contains(self, tod: float, day: float) -> bool:
        return (tod - self.start) % day < self.length(day)


@dataclass(frozen=True, eq=False)
class LawSchedule:
    """Reference laws, optionally tied to periods of the day.

    ``periods`` hold 1-based law numbers. Without periods every law applies
    at all times.
    """

    laws: tuple[TransitionModel, ...]
    periods: tuple[Period, ...] | None = None
    day_seconds: float = DAY_SECONDS

    def __post_init__(self) -> None:
        object.__setattr__(self, "laws", tuple(self.laws))
        if not self.laws:
            raise ConfigurationError("a schedule needs at least one law")
        if len({m.n_states for m in self.laws}) != 1:
            raise ConfigurationError("all laws in a schedule must share the alphabet")
        if self.periods is None:
            return
        periods = tuple(self.periods)
        object.__setattr__(self, "periods", periods)
        day = self.day_seconds
        for p in periods:
            if not p.laws or min(p.laws) < 1 or max(p.laws) > len(self.laws):
                raise ConfigurationError(f"period {p} names laws outside 1..{len(self.laws)}")
            if not (0 <= p.start < day and 0 <= p.end < day):
                raise ConfigurationError(f"period bounds must lie in [0, {day:g})")
        total = sum(p.length(day) for p in periods)
        if not math.isclose(total, day, rel_tol=0, abs_tol=1e-9 * day):
            raise ConfigurationError(f"periods cover {total:g} s of a {day:g} s day")
        # Equal total length plus every period start lying in no other period rules out overlap.
        for i, p in enumerate(periods):
            for j, other in enumerate(periods):
                if i != j and other.contains(p.start, day):
                    raise ConfigurationError(f"periods {other} and {p} overlap")

    @property
    def n_states(self) -> int:
        return self.laws[0].n_states

    def applicable(self, t: float) -> tuple[int, ...]:
        """1-based numbers of the laws valid at time ``t`` (seconds since a midnight)."""
        if self.periods is None:
            return tuple(range(1, len(self.laws) + 1))
        tod = t % self.day_seconds
        for p in self.periods:
            if p.contains(tod, self.day_seconds):
                return tuple(sorted(set(p.laws)))
        raise ConfigurationError(f"no law applies at time of day {tod:g}")

    def law_sets(self) -> list[tuple[int, ...]]:
        if self.periods is None:
            return [self.applicable(0.0)]
        return sorted({tuple(sorted(set(p.laws))) for p in self.periods})


def sliding_windows(stream: SymbolSequence, config: WindowConfig) -> list[Window]:
    """Cut a timestamped stream into windows ``[s, s + w_s)`` starting every ``w_d`` seconds.

    Starts run from the first timestamp ``t0`` and the last start is the
    latest one whose window fits before the last timestamp (at least one
    window is always produced for a nonempty stream).
    """
    if stream.timestamps is None:
        raise InputError("sliding windows need a timestamped stream")
    t = stream.timestamps
    if t.size == 0:
        return []
    if np.any(np.diff(t) < 0):
        raise InputError("timestamps must be nondecreasing")
    t0, t_end = float(t[0]), float(t[-1])
    count = max(1, math.floor((t_end - t0 - config.w_s) / config.w_d + 1e-9) + 1)
    floor = config.sample_floor(stream.alphabet.n_states)
    starts = t0 + np.arange(count) * config.w_d
    lo = np.searchsorted(t, starts, side="left")
    hi = np.searchsorted(t, starts + config.w_s, side="left")
    return [Window(start=float(s), end=float(s + config.w_s), symbols=stream.symbols[a:b],
                   skipped=bool(b - a < floor))
            for s, a, b in zip(starts, lo, hi)]


def window_law(symbols: np.ndarray, pair_size: int, eps: float = DEFAULT_EPS) -> np.ndarray:
    counts = np.bincount(symbols - 1, minlength=pair_size)
    return floor_law(counts / symbols.size, eps)


def _skipped(w: Window) -> WindowReport:
    return WindowReport(w.start, w.end, w.n, math.nan, math.nan, False, None, True)


def _model(reference: Reference | TransitionModel, eps: float) -> TransitionModel:
    return reference_model(reference, eps=eps)


def detect_ordinary(stream: SymbolSequence, reference: Reference, config: WindowConfig,
                    cache: SampleCache | None, eps: float = DEFAULT_EPS) -> list[WindowReport]:
    """Hoeffding test on every window against one reference law.

    Each window's threshold is read from the shared cache at that window's
    own sample count; nothing is re-simulated. ``cache=None`` uses the
    Sanov threshold ``-log(beta) / n`` instead.
    """
    ws = DivergenceWorkspace(_model(reference, eps))
    if ws.pair_size != stream.alphabet.pair_size:
        raise InputError("stream and reference use different alphabets")
    reports = []
    for w in sliding_windows(stream, config):
        if w.skipped:
            reports.append(_skipped(w))
            continue
        stat = float(relative_entropy(window_law(w.symbols, ws.pair_size, eps), ws))
        if cache is None:
            eta = sanov_threshold(w.n, config.beta).value
        else:
            eta = quantile_threshold(cache, w.n, config.beta).value
        reports.append(WindowReport(w.start, w.end, w.n, stat, eta, stat > eta))
    logger.info("ordinary detection: %d windows, %d flagged", len(reports), sum(r.flagged for r in reports))
    return reports


def build_robust_caches(schedule: LawSchedule, T: int = DEFAULT_T, seed: int | None = None,
                        eps: float = DEFAULT_EPS) -> dict[tuple[int, ...], SampleCache]:
    """One robust cache per distinct set of simultaneously valid laws."""
    fits = [fit_reference(m, eps=eps) for m in schedule.laws]
    return {laws: robust_cache([fits[l - 1] for l in laws], T, seed) for laws in schedule.law_sets()}


def detect_robust(stream: SymbolSequence, schedule: LawSchedule, config: WindowConfig,
                  caches: SampleCache | Mapping[tuple[int, ...], SampleCache],
                  eps: float = DEFAULT_EPS) -> list[WindowReport]:
    """Robust test: the statistic is the smallest divergence over the laws valid at the window start.

    ``law_index`` reports which law (1-based) attained the minimum.
    """
    if schedule.n_states != stream.alphabet.n_states:
        raise InputError("stream and schedule use different alphabets")
    spaces = [DivergenceWorkspace(m) for m in schedule.laws]
    size = stream.alphabet.pair_size
    reports = []
    for w in sliding_windows(stream, config):
        laws = schedule.applicable(w.start)
        if not laws:
            raise ConfigurationError(f"no law applies to the window starting at {w.start:g}")
        if w.skipped:
            reports.append(_skipped(w))
            continue
        if isinstance(caches, SampleCache):
            cache = caches
        else:
            try:
                cache = caches[laws]
            except KeyError:
                raise ConfigurationError(f"no cache for law set {laws}") from None
        gamma = window_law(w.symbols, size, eps)
        stats = [float(relative_entropy(gamma, spaces[l - 1])) for l in laws]
        best = int(np.argmin(stats))
        eta = quantile_threshold(cache, w.n, config.beta).value
        reports.append(WindowReport(w.start, w.end, w.n, stats[best], eta, stats[best] > eta, laws[best]))
    logger.info("robust detection: %d windows, %d flagged", len(reports), sum(r.flagged for r in reports))
    return reports


def sigma_refine(flagged_records: Sequence[tuple[object, float]], reference_values: Sequence[float],
                 k_sigma: float = 3.0) -> list[tuple[object, float]]:
    """Keep the records whose value exceeds ``mean + k_sigma * std`` of the reference values.

    The standard deviation uses the ``n - 1`` denominator.
    """
    ref = np.asarray(reference_values, dtype=float)
    if ref.size < 2:
        raise InputError("need at least two reference values for a sample standard deviation")
    sigma = float(np.std(ref, ddof=1))
    if sigma == 0.0:
        raise DegenerateReferenceError("reference values are constant; the sigma rule is undefined")
    cut = float(np.mean(ref)) + k_sigma * sigma
    return [(record, value) for record, value in flagged_records if value > cut]
