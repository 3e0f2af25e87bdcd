import numpy as np
import pytest
from scipy.optimize import fsolve

from beliefhjb import build_grid, make_spec, solve_value


@pytest.fixture(scope="session")
def std_spec():
    return make_spec(0.0, 2.0, 1.0, sigma=1.0, c=1.0, b=3.0)


@pytest.fixture(scope="session")
def spec2():
    return make_spec([0.0, 0.5], [2.0, 2.5], 1.0, sigma=[1.0, 1.5], c=1.0)


@pytest.fixture(scope="session")
def std_solution(std_spec):
    grid = build_grid(1, 201)
    V, report = solve_value(std_spec, grid)
    return grid, V, report


def closed_form_1d(lo, hi, pi0, sigma, c):
    """Exact value function for one alternative with a single interior continuation interval.

    On the continuation interval ``k x^2 (1-x)^2 V'' = c`` is solved by
    ``c psi + A x + B`` with ``psi = (2x - 1) log(x / (1 - x)) / k``; the four
    unknowns come from value matching and smooth fit at both ends.
    """
    k = (hi - lo) ** 2 / (2 * sigma**2)

    def psi(x):
        return (2 * x - 1) * np.log(x / (1 - x)) / k

    def dpsi(x):
        return (2 * np.log(x / (1 - x)) + (2 * x - 1) / (x * (1 - x))) / k

    slope = hi - lo

    def eqs(z):
        xl, xr, A, B = z
        return [c * psi(xl) + A * xl + B - pi0,
                c * dpsi(xl) + A,
                c * psi(xr) + A * xr + B - (lo + slope * xr),
                c * dpsi(xr) + A - slope]

    xk = (pi0 - lo) / slope
    xl, xr, A, B = fsolve(eqs, [xk - 0.1, xk + 0.1, 1.0, 0.5], xtol=1e-13)
    assert np.max(np.abs(eqs([xl, xr, A, B]))) < 1e-11

    def V(x):
        x = np.asarray(x, float)
        inside = (x > xl) & (x < xr)
        xs = np.clip(x, 1e-300, 1 - 1e-16)
        cont = c * psi(np.where(inside, xs, 0.5)) + A * x + B
        return np.where(inside, cont, np.maximum(pi0, lo + slope * x))

    return V, (xl, xr, A, B)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS, key=lambda k: (int(str(k)[:2].rstrip("ab")), str(k))):
            terminalreporter.write_line(RESULTS[key])
