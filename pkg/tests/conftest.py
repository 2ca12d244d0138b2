import mpmath
import numpy as np
import pytest

from coop_odes import CoefficientMatrix, Constant, PiecewiseConstant, TimeWindow

WINDOW = TimeWindow(-1.0, 10.0, 0.0)


def const(matrix, window=WINDOW):
    return CoefficientMatrix(window, Constant(matrix))


def piecewise(breakpoints, pieces, window=WINDOW):
    return CoefficientMatrix(window, PiecewiseConstant(breakpoints, pieces))


def series_expm(M, dps=60, terms=400):
    """Unscaled Taylor series of exp(M) in extended precision (independent oracle)."""
    with mpmath.workdps(dps):
        M = mpmath.matrix(np.asarray(M, dtype=float).tolist())
        n = M.rows
        total = mpmath.eye(n)
        term = mpmath.eye(n)
        for k in range(1, terms):
            term = term * M / k
            total += term
        return np.array([[float(total[i, j]) for j in range(n)] for i in range(n)])


@pytest.fixture
def window():
    return WINDOW


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
