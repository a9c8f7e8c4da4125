from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hoeffding.divergence import DivergenceWorkspace, gradient_h, hessian_h, relative_entropy
from hoeffding.errors import InputError
from hoeffding.markov import TransitionModel

from conftest import random_positive_q


def naive_divergence(gamma: np.ndarray, pi: np.ndarray) -> float:
    """Double loop over pairs, written independently of the vectorized code."""
    n = math.isqrt(gamma.size)
    total = 0.0
    for i in range(n):
        g_row = sum(gamma[i * n + t] for t in range(n))
        p_row = sum(pi[i * n + t] for t in range(n))
        for j in range(n):
            g, p = gamma[i * n + j], pi[i * n + j]
            total += g * math.log((g / g_row) / (p / p_row))
    return total


def central_gradient(f, x: np.ndarray, h: float | None = None) -> np.ndarray:
    # the third derivative grows like 1/x^2, so the step must shrink with the smallest entry
    h = 1e-4 * float(x.min()) if h is None else h
    out = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        out[k] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def test_zero_at_reference():
    model = TransitionModel.from_q(random_positive_q(np.random.default_rng(1), 3))
    ws = DivergenceWorkspace(model)
    assert relative_entropy(model.pi, ws) == 0.0


def test_hand_example_two_states():
    pi = np.full(4, 0.25)
    gamma = np.array([0.4, 0.1, 0.25, 0.25])
    # only the first row differs: 0.5 * KL((0.8, 0.2) || (0.5, 0.5))
    expected = 0.5 * (0.8 * math.log(1.6) + 0.2 * math.log(0.4))
    assert relative_entropy(gamma, DivergenceWorkspace(pi)) == pytest.approx(expected, rel=1e-14)


def test_batch_matches_single():
    rng = np.random.default_rng(2)
    ws = DivergenceWorkspace(rng.dirichlet(np.ones(9)))
    laws = rng.dirichlet(np.ones(9), size=5)
    batch = relative_entropy(laws, ws)
    assert batch.shape == (5,)
    for law, value in zip(laws, batch):
        assert relative_entropy(law, ws) == pytest.approx(value, abs=1e-15)


def test_rejects_zero_entries():
    with pytest.raises(InputError):
        DivergenceWorkspace(np.array([0.5, 0.5, 0.0, 0.0]))
    ws = DivergenceWorkspace(np.full(4, 0.25))
    with pytest.raises(InputError):
        relative_entropy(np.array([1.0, 0.0, 0.0, 0.0]), ws)


def test_gradient_vanishes_at_reference():
    rng = np.random.default_rng(3)
    for n in (2, 3, 5):
        pi = TransitionModel.from_q(random_positive_q(rng, n)).pi
        assert np.max(np.abs(gradient_h(pi, DivergenceWorkspace(pi)))) <= 1e-12


def test_hessian_block_structure():
    nu = np.random.default_rng(4).dirichlet(np.ones(9))
    h = hessian_h(nu)
    rows = nu.reshape(3, 3)
    for i in range(3):
        for j in range(3):
            block = h[3 * i:3 * i + 3, 3 * j:3 * j + 3]
            if i != j:
                assert np.all(block == 0)
            else:
                s = rows[i].sum()
                expected = np.diag(1 / rows[i]) - 1 / s
                np.testing.assert_allclose(block, expected, rtol=1e-13)


def test_hessian_annihilates_row_scaling():
    # h is unchanged when a row of nu is rescaled, so nu restricted to one row is in the kernel
    nu = np.random.default_rng(5).dirichlet(np.ones(16))
    h = hessian_h(nu)
    for i in range(4):
        direction = np.zeros(16)
        direction[4 * i:4 * i + 4] = nu[4 * i:4 * i + 4]
        np.testing.assert_allclose(h @ direction, 0.0, atol=1e-10)


positive_laws = st.integers(2, 4).flatmap(
    lambda n: st.tuples(arrays(np.float64, n * n, elements=st.floats(0.01, 1.0)),
                        arrays(np.float64, n * n, elements=st.floats(0.01, 1.0))))


@settings(max_examples=80, deadline=None)
@given(positive_laws)
def test_matches_naive_formula_and_is_nonnegative(pair):
    gamma, pi = (a / a.sum() for a in pair)
    value = relative_entropy(gamma, DivergenceWorkspace(pi))
    assert value >= 0.0
    assert value == pytest.approx(naive_divergence(gamma, pi), rel=1e-9, abs=1e-13)


@settings(max_examples=40, deadline=None)
@given(positive_laws)
@example((np.r_[0.015625, np.ones(15)], np.r_[0.015625, np.ones(15)]))
def test_gradient_matches_finite_differences(pair):
    nu, pi = pair[0] / pair[0].sum(), pair[1] / pair[1].sum()
    ws = DivergenceWorkspace(pi)
    numeric = central_gradient(lambda x: float(relative_entropy(x, ws)), nu)
    np.testing.assert_allclose(gradient_h(nu, ws), numeric, rtol=1e-5, atol=1e-7)
