from __future__ import annotations

import numpy as np
import pytest

from hoeffding.markov import TransitionModel

ACCEPTANCE_LINES: list[str] = []

SAMPLE_Q = np.array([[0.1, 0.2, 0.7], [0.0, 0.2, 0.8], [0.6, 0.15, 0.25]])


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def sample_model() -> TransitionModel:
    return TransitionModel.from_q(SAMPLE_Q)


def random_positive_q(rng: np.random.Generator, n: int) -> np.ndarray:
    q = rng.random((n, n)) + 0.05
    return q / q.sum(axis=1, keepdims=True)
