from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoeffding.detector import (LawSchedule, Period, WindowConfig, build_robust_caches,
                                detect_ordinary, detect_robust, sigma_refine, sliding_windows)
from hoeffding.errors import ConfigurationError, DegenerateReferenceError, InputError
from hoeffding.evaluation import random_transition
from hoeffding.markov import Alphabet, SymbolSequence, TransitionModel, simulate_path
from hoeffding.threshold import fit_reference, ordinary_cache, quantile_threshold


def timed(model: TransitionModel, n: int, seed: int, rate: float = 1.0, start: float = 0.0) -> SymbolSequence:
    z = simulate_path(model, n, seed)
    return SymbolSequence(z.symbols, z.alphabet, start + np.arange(n) / rate)


@pytest.fixture(scope="module")
def model4():
    return random_transition(4, 11)


@pytest.fixture(scope="module")
def cache4(model4):
    return ordinary_cache(fit_reference(model4), 1000, 3)


def test_window_starts_example():
    stream = SymbolSequence(np.ones(101, dtype=int), Alphabet(2), np.arange(101.0))
    windows = sliding_windows(stream, WindowConfig(20, 10))
    assert [w.start for w in windows] == [float(s) for s in range(0, 90, 10)]
    assert all(w.n == 20 for w in windows)
    assert windows[-1].end == 100.0


def test_empty_stream_gives_no_windows():
    stream = SymbolSequence(np.array([], dtype=int), Alphabet(2), np.array([]))
    assert sliding_windows(stream, WindowConfig(10, 5)) == []


def test_burst_shorter_than_window():
    stream = SymbolSequence(np.ones(30, dtype=int), Alphabet(2), np.linspace(0, 0.9, 30))
    windows = sliding_windows(stream, WindowConfig(200, 50))
    assert len(windows) == 1 and windows[0].n == 30


def test_window_errors():
    with pytest.raises(InputError):
        sliding_windows(SymbolSequence(np.ones(3, dtype=int), Alphabet(2), np.array([0.0, 2.0, 1.0])),
                        WindowConfig(1, 1))
    with pytest.raises(InputError):
        sliding_windows(SymbolSequence(np.ones(3, dtype=int), Alphabet(2)), WindowConfig(1, 1))
    for bad in (dict(w_s=0, w_d=1), dict(w_s=1, w_d=-1), dict(w_s=1, w_d=1, beta=1.0),
                dict(w_s=1, w_d=1, min_samples=1)):
        with pytest.raises(InputError):
            WindowConfig(**bad)


def test_default_sample_floor():
    assert WindowConfig(1, 1).sample_floor(2) == 2
    assert WindowConfig(1, 1).sample_floor(4) == 4
    assert WindowConfig(1, 1).sample_floor(5) == 7
    assert WindowConfig(1, 1, min_samples=9).sample_floor(4) == 9


def test_small_windows_are_skipped_not_flagged(model4, cache4):
    stream = timed(model4, 40, 0, rate=0.1)  # one event every 10 s
    reports = detect_ordinary(stream, model4, WindowConfig(20, 20), cache4)
    assert reports and all(r.skipped and not r.flagged for r in reports)
    assert all(math.isnan(r.stat) for r in reports)


def test_window_at_reference_law_has_zero_statistic():
    model = TransitionModel.from_q(np.full((2, 2), 0.5))
    stream = SymbolSequence(np.array([1, 2, 3, 4] * 5), Alphabet(2), np.arange(20.0))
    cache = ordinary_cache(fit_reference(model), 1000, 0)
    reports = detect_ordinary(stream, model, WindowConfig(4, 4), cache)
    assert all(r.stat == 0.0 and not r.flagged for r in reports)


def test_null_stream_flag_rate(model4, cache4):
    stream = timed(model4, 100 * 60 + 1, 5)
    reports = detect_ordinary(stream, model4, WindowConfig(60, 60, beta=0.001), cache4)
    assert len(reports) == 100
    assert np.mean([r.flagged for r in reports]) <= 0.05


def test_per_window_threshold_comes_from_cache(model4, cache4):
    stream = timed(model4, 3000, 6, rate=1.0)
    # jittered clock so window sizes vary
    jitter = np.sort(stream.timestamps + np.random.default_rng(0).uniform(0, 30, stream.timestamps.size))
    stream = SymbolSequence(stream.symbols, stream.alphabet, jitter)
    reports = detect_ordinary(stream, model4, WindowConfig(50, 25), cache4)
    assert len({r.n for r in reports}) > 3
    for r in reports:
        assert r.eta == quantile_threshold(cache4, r.n, 0.001).value
        assert r.flagged == (r.stat > r.eta)


def test_sanov_mode(model4):
    stream = timed(model4, 1000, 7)
    reports = detect_ordinary(stream, model4, WindowConfig(100, 100, beta=0.01), None)
    assert all(r.eta == pytest.approx(-math.log(0.01) / r.n) for r in reports)


def test_reruns_are_identical(model4):
    stream = timed(model4, 2000, 8)
    config = WindowConfig(100, 50)
    a = detect_ordinary(stream, model4, config, ordinary_cache(fit_reference(model4), 1000, 4))
    b = detect_ordinary(stream, model4, config, ordinary_cache(fit_reference(model4), 1000, 4))
    assert a == b


def test_alphabet_mismatch(model4, cache4):
    stream = SymbolSequence(np.ones(10, dtype=int), Alphabet(3), np.arange(10.0))
    with pytest.raises(InputError):
        detect_ordinary(stream, model4, WindowConfig(5, 5), cache4)


def test_single_law_robust_matches_ordinary(model4):
    stream = timed(model4, 3000, 9)
    config = WindowConfig(100, 50, beta=0.01)
    schedule = LawSchedule((model4,))
    robust = detect_robust(stream, schedule, config, build_robust_caches(schedule, 1000, 21))
    plain = detect_ordinary(stream, model4, config, ordinary_cache(fit_reference(model4), 1000, 21))
    for r, p in zip(robust, plain, strict=True):
        assert (r.start, r.n, r.stat, r.eta, r.flagged) == (p.start, p.n, p.stat, p.eta, p.flagged)
        assert r.law_index == 1


def test_robust_statistic_is_minimum_and_picks_generating_law():
    laws = (random_transition(3, 1), random_transition(3, 2))
    schedule = LawSchedule(laws)
    stream = timed(laws[1], 6000, 10)
    config = WindowConfig(200, 200)
    robust = detect_robust(stream, schedule, config, build_robust_caches(schedule, 1000, 0))
    singles = [detect_ordinary(stream, m, config, None) for m in laws]
    for i, r in enumerate(robust):
        assert r.stat == min(s[i].stat for s in singles)
        assert r.flagged == (r.stat > r.eta)
    assert np.mean([r.law_index == 2 for r in robust]) >= 0.9


def test_schedule_periods():
    laws = (random_transition(2, 1), random_transition(2, 2), random_transition(2, 3))
    sched = LawSchedule(laws, (Period(21600, 64800, (1,)), Period(64800, 21600, (2, 3))))
    assert sched.applicable(30000) == (1,)
    assert sched.applicable(70000) == (2, 3)
    assert sched.applicable(3600) == (2, 3)
    assert sched.applicable(86400 + 30000) == (1,)
    assert sched.law_sets() == [(1,), (2, 3)]
    assert set(build_robust_caches(sched, 200, 0)) == {(1,), (2, 3)}


@pytest.mark.parametrize("periods", [
    (Period(0, 40000, (1,)),),
    (Period(0, 50000, (1,)), Period(40000, 0, (2,))),
    (Period(0, 50000, (1,)), Period(50000, 0, (3,))),
    (Period(0, 90000, (1,)),),
])
def test_schedule_rejects_bad_periods(periods):
    laws = (random_transition(2, 1), random_transition(2, 2))
    with pytest.raises(ConfigurationError):
        LawSchedule(laws, periods)


def test_schedule_rejects_mixed_alphabets_and_empty():
    with pytest.raises(ConfigurationError):
        LawSchedule((random_transition(2, 1), random_transition(3, 1)))
    with pytest.raises(ConfigurationError):
        LawSchedule(())


def test_missing_cache_for_law_set():
    laws = (random_transition(2, 1), random_transition(2, 2))
    sched = LawSchedule(laws, (Period(0, 43200, (1,)), Period(43200, 0, (2,))))
    stream = timed(laws[0], 100, 0)
    caches = {(1,): ordinary_cache(fit_reference(laws[0]), 200, 0)}
    with pytest.raises(ConfigurationError):
        detect_robust(stream, sched, WindowConfig(10, 10), {(2,): caches[(1,)]})


def test_sigma_refine_examples():
    ref = list(range(1, 11))
    out = sigma_refine([("a", 20.0), ("b", 10.0), ("c", 14.5)], ref)
    assert out == [("a", 20.0)]
    assert np.std(ref, ddof=1) == pytest.approx(3.0277, abs=1e-4)
    assert sigma_refine([("x", 5.6), ("y", 5.5)], ref, k_sigma=0) == [("x", 5.6)]
    with pytest.raises(DegenerateReferenceError):
        sigma_refine([("a", 1.0)], [2.0, 2.0, 2.0])
    with pytest.raises(InputError):
        sigma_refine([("a", 1.0)], [2.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=0, max_size=30),
       st.lists(st.floats(-100, 100), min_size=2, max_size=30).filter(lambda v: np.std(v) > 1e-6),
       st.floats(0, 5))
def test_sigma_refine_returns_subset(values, ref, k):
    records = [(i, v) for i, v in enumerate(values)]
    out = sigma_refine(records, ref, k)
    assert set(out) <= set(records)
    cut = np.mean(ref) + k * np.std(ref, ddof=1)
    assert all(v > cut for _, v in out)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(5, 80), st.floats(5, 80))
def test_flag_iff_statistic_exceeds_threshold(seed, w_s, w_d):
    model = random_transition(3, seed % 7)
    stream = timed(model, 400, seed)
    cache = ordinary_cache(fit_reference(model), 300, seed)
    for r in detect_ordinary(stream, model, WindowConfig(w_s, w_d, 0.05), cache):
        assert r.flagged == (not r.skipped and r.stat > r.eta)
