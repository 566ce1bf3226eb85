import numpy as np
import pytest


def central_diff(f, params: dict, name: str, direction: np.ndarray, h: float = 1e-5) -> float:
    """Directional derivative of scalar ``f(params)`` by central differences."""
    plus = {**params, name: params[name] + h * direction}
    minus = {**params, name: params[name] - h * direction}
    return (f(plus) - f(minus)) / (2 * h)


def rel_err(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(1e-12, np.max(np.abs(a)), np.max(np.abs(b))))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
