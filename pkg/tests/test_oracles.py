import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coop_odes import (
    EpsilonSchedule,
    GeneratorConfig,
    PolynomialEntries,
    CoefficientMatrix,
    continuous_dependence_probe,
    epsilon_perturb,
    evaluate,
    expm,
    fundamental_matrix,
    gen_initial,
    gen_system,
    metzler_exponential_sign_check,
    solve_ivp,
    stream,
)
from coop_odes.errors import NonFiniteInput
from coop_odes.integrator import EmbeddedRK45, StepperConfig
from coop_odes.oracles import ProbeRow, deviations_nonincreasing

from conftest import WINDOW, const, piecewise, series_expm

# exp(t [[-1, 2], [3, -4]]), 80-digit reference, row-major
EXPM_FROZEN = {
    0.1: [0.92958081967353159, 0.15791071066253362, 0.23686606599380042, 0.69271475367973117],
    1.0: [1.1055205888839633, 0.50357101094619655, 0.75535651641929482, 0.35016407246466846],
    10.0: [31.495490182924333, 14.406890981743218, 21.610336472614827, 9.8851537103095061],
}
SINH = {1e-1: 0.10016675001984403, 1e-2: 0.010000166667500002, 1e-3: 0.001000000166666675, 1e-4: 0.00010000000016666667}
METZLER = np.array([[-1.0, 2.0], [3.0, -4.0]])


def _rel(a, b):
    return np.abs(a - b).sum(axis=1).max() / np.abs(b).sum(axis=1).max()


def test_expm_basic_examples():
    assert np.array_equal(expm(np.zeros((3, 3))), np.eye(3))
    assert np.allclose(expm(np.diag([1.0, -1.0])), np.diag([math.e, 1 / math.e]), rtol=1e-15)
    E = expm([[0.0, -0.2], [0.0, 0.0]])
    assert np.allclose(E, [[1.0, -0.2], [0.0, 1.0]], rtol=0, atol=1e-16)
    R = expm([[0.0, -math.pi / 2], [math.pi / 2, 0.0]])
    assert np.allclose(R, [[0, -1], [1, 0]], atol=1e-14)


@pytest.mark.parametrize("t", sorted(EXPM_FROZEN))
def test_expm_frozen_metzler_values(t):
    ref = np.array(EXPM_FROZEN[t]).reshape(2, 2)
    assert _rel(expm(t * METZLER), ref) <= 1e-13


def test_expm_rejects_bad_input():
    with pytest.raises(NonFiniteInput):
        expm([[np.nan]])
    with pytest.raises(ValueError):
        expm(np.ones((2, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4).flatmap(lambda n: arrays(np.float64, (n, n), elements=st.floats(-3, 3))))
def test_expm_matches_extended_precision_series(M):
    ref = series_expm(M)
    assert _rel(expm(M), ref) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(
    arrays(np.float64, (3, 3), elements=st.floats(-2, 2)),
    st.floats(0.01, 1.0),
    st.floats(0.01, 1.0),
)
def test_expm_semigroup(M, s, t):
    lhs = expm((s + t) * M)
    rhs = expm(s * M) @ expm(t * M)
    assert _rel(rhs, lhs) <= 1e-10


def test_expm_agrees_with_fundamental_matrix():
    rng = stream(11)
    cfg = StepperConfig(EmbeddedRK45(rel_tol=1e-11, abs_tol=1e-13))
    for _ in range(10):
        n = rng.integer(1, 5)
        M = np.array([[rng.uniform(-2, 2) for _ in range(n)] for _ in range(n)])
        Phi = fundamental_matrix(const(M), 0.0, 1.0, cfg)
        assert _rel(Phi, expm(M)) <= 1e-8


def test_sign_check_non_metzler_witness():
    res = metzler_exponential_sign_check([[0.0, -2.0], [0.0, 0.0]], [0.1])
    assert not res
    t, i, j, value = res.witness
    assert (t, i, j) == (0.1, 0, 1)
    assert value == pytest.approx(-0.2, rel=1e-14)


def test_sign_check_metzler_and_diagonal():
    assert metzler_exponential_sign_check(METZLER, [0.1, 1.0, 10.0])
    assert metzler_exponential_sign_check(np.diag([-5.0, 3.0, 0.0]), [0.5, 2.0]).witness is None


def test_sign_check_scans_probes_in_order():
    res = metzler_exponential_sign_check([[0.0, -1.0], [0.0, 0.0]], [2.0, 1.0])
    assert res.witness[0] == 2.0


def test_sign_check_rejects_bad_probes():
    with pytest.raises(ValueError):
        metzler_exponential_sign_check(METZLER, [0.0])
    with pytest.raises(NonFiniteInput):
        metzler_exponential_sign_check(METZLER, [np.inf])


def test_epsilon_perturb_constant():
    B = epsilon_perturb(const([[0.0, -1.0], [0.0, 0.0]]), 0.5)
    assert np.array_equal(evaluate(B, 0.0), [[0.0, -0.5], [0.5, 0.0]])
    assert B.window == WINDOW


def test_epsilon_perturb_keeps_breakpoints():
    A = piecewise([1.0, 2.0], [[[1.0]], [[2.0]], [[3.0]]])
    B = epsilon_perturb(A, 0.1)
    assert np.array_equal(B.smoothness_breaks(), A.smoothness_breaks())
    assert B.kind == A.kind
    A2 = piecewise([1.0], [np.zeros((2, 2)), np.eye(2)])
    assert np.array_equal(evaluate(epsilon_perturb(A2, 0.1), 1.5), [[1.0, 0.1], [0.1, 1.0]])


def test_epsilon_perturb_polynomial_touches_constant_term():
    coeffs = np.zeros((2, 2, 2))
    coeffs[0, 1, 1] = 1.0
    B = epsilon_perturb(CoefficientMatrix(WINDOW, PolynomialEntries(coeffs)), 0.25)
    assert evaluate(B, 2.0)[0, 1] == pytest.approx(2.25)
    assert evaluate(B, 2.0)[1, 0] == pytest.approx(0.25)


@pytest.mark.parametrize("eps", [0.0, -1e-3, math.nan, math.inf])
def test_epsilon_perturb_rejects(eps):
    with pytest.raises(ValueError):
        epsilon_perturb(const([[0.0]]), eps)


@pytest.mark.parametrize("values", [(), (1e-2, 1e-1), (1e-1, 1e-1), (1e-1, 0.0)])
def test_schedule_validation(values):
    with pytest.raises(ValueError):
        EpsilonSchedule(values)


def test_probe_zero_system_matches_hyperbolic_sine():
    rows = continuous_dependence_probe(const(np.zeros((2, 2))), [1.0, 0.0], 0.0, 1.0)
    assert [r.eps for r in rows] == [1e-1, 1e-2, 1e-3, 1e-4]
    for r in rows:
        assert r.deviation == pytest.approx(SINH[r.eps], rel=1e-8)
    assert deviations_nonincreasing(rows)


def test_gronwall_bound_on_probe():
    rng = stream(5)
    cfg = GeneratorConfig(body_mix=(1, 0, 0, 0), boundary_fraction=0.0)
    for k in range(10):
        A = gen_system(cfg, stream(cfg.seed, k))
        x0 = gen_initial(cfg, A.n, rng)
        L = np.abs(evaluate(A, cfg.t0)).sum(axis=1).max()
        T = cfg.t_end - cfg.t0
        for row in continuous_dependence_probe(A, x0, cfg.t0, cfg.t_end):
            L_eps = L + row.eps * (A.n - 1)
            bound = row.eps * (A.n - 1) * np.abs(x0).max() * T * math.exp(L_eps * T)
            assert row.deviation <= bound * (1 + 1e-6) + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32))
def test_perturbed_cooperative_solution_dominates(index):
    # larger off-diagonal entries push a nonnegative solution upward
    cfg = GeneratorConfig(boundary_fraction=0.5)
    rng = stream(cfg.seed + 7, index)
    A = gen_system(cfg, rng)
    x0 = gen_initial(cfg, A.n, rng)
    base = solve_ivp(A, cfg.t0, x0, cfg.t_end).states[-1]
    pert = solve_ivp(epsilon_perturb(A, 1e-2), cfg.t0, x0, cfg.t_end).states[-1]
    assert np.all(pert >= base - 1e-9 * np.maximum(1.0, np.abs(base)))


def test_deviations_nonincreasing_helper():
    rows = [ProbeRow(1e-1, 1.0, None), ProbeRow(1e-2, 1.0 + 1e-13, None), ProbeRow(1e-3, 0.5, None)]
    assert deviations_nonincreasing(rows)
    assert not deviations_nonincreasing(rows, slack=0.0)
