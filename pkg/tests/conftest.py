import time

import numpy as np
import pytest
from hypothesis import settings

from randpush.graphs import DiGraph, GraphEnsemble, half_cycle_ensemble

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture
def two_node_ensemble():
    """1 -> 2 and 2 -> 1 (plus loops), p = 0.5 each."""
    g1 = DiGraph.from_edges(2, [(0, 1)])
    g2 = DiGraph.from_edges(2, [(1, 0)])
    return GraphEnsemble((g1, g2), (0.5, 0.5), name="two-node")


@pytest.fixture
def five_node_ensemble():
    return half_cycle_ensemble(5)


@pytest.fixture
def three_cycle():
    return DiGraph.cycle(3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# --- acceptance reporting ------------------------------------------------------

_ACCEPTANCE_LINES = {}


class CriterionCheck:
    """Context manager that times a criterion, enforces its runtime budget and records a line."""

    def __init__(self, number: int, title: str, budget_s: float):
        self.number, self.title, self.budget_s = number, title, budget_s
        self.details = []

    def note(self, text: str):
        self.details.append(text)

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self._start
        over = exc_type is None and elapsed > self.budget_s
        ok = exc_type is None and not over
        reason = ""
        if exc_type is not None:
            reason = f" ({exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
        elif over:
            reason = f" (runtime {elapsed:.2f}s over budget {self.budget_s:g}s)"
        line = (f"criterion {self.number:2d} {'PASS' if ok else 'FAIL'} "
                f"[{elapsed:6.2f}s / {self.budget_s:g}s] {self.title}{reason}")
        if self.details:
            line += " | " + "; ".join(self.details)
        _ACCEPTANCE_LINES[self.number] = line
        print(line)
        if over:
            raise AssertionError(f"criterion {self.number} exceeded its runtime budget: {elapsed:.2f}s")
        return False


@pytest.fixture
def criterion():
    return CriterionCheck


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(_ACCEPTANCE_LINES[k])
