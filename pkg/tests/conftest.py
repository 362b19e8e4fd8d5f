import numpy as np
import pytest
from scipy import optimize, special

from leastfalse import Dataset, FiniteSupport, StepFunction


def s1_closed_form(masses=(1 / 3, 1 / 3, 1 / 3), low=0.2, high=0.9):
    """Least false (alpha, b) for a step truth on {-1, 0, 1}, solved from the two score equations.

    With residuals r_k = q_k - expit(alpha + b x_k) the equations read
    sum m_k r_k = 0 and r_1 m_1 = r_-1 m_-1 (since x = 0 drops out of the second).
    Parametrize by r = r_1: r_-1 = r m_1 / m_-1, r_0 = -(m_-1 r_-1 + m_1 r_1) / m_0,
    and the three fitted probabilities must lie on one logistic line.
    """
    m_lo, m_0, m_hi = masses
    q = np.array([low, high, high])

    def fitted(r):
        r_lo = r * m_hi / m_lo
        r_0 = -(m_lo * r_lo + m_hi * r) / m_0
        return q - np.array([r_lo, r_0, r])

    def gap(r):
        f = special.logit(fitted(r))
        return f[0] + f[2] - 2.0 * f[1]

    # every fitted probability must stay inside (0, 1)
    c = 2.0 * m_hi / m_0
    lo = max(high - 1.0, (low - 1.0) * m_lo / m_hi, -high / c)
    hi = min(high, low * m_lo / m_hi, (1.0 - high) / c)
    grid = np.linspace(lo, hi, 2001)[1:-1]
    vals = np.array([gap(r) for r in grid])
    k = int(np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0])
    r = optimize.brentq(gap, grid[k], grid[k + 1], xtol=1e-16)
    f = special.logit(fitted(r))
    return np.array([f[1], f[2] - f[1]])


@pytest.fixture
def s1():
    H = FiniteSupport([[-1.0], [0.0], [1.0]], [1 / 3, 1 / 3, 1 / 3])
    truth = StepFunction(0, (0.0,), (0.2, 0.9))
    return H, truth


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def logistic_data(rng, n, beta=(0.5, -1.0), low=-2.0, high=2.0):
    x = rng.uniform(low, high, n)
    q = special.expit(beta[0] + beta[1] * x)
    z = (rng.random(n) < q).astype(float)
    return Dataset.from_arrays(x, z)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
