from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rs_regime._newton import ConvergenceError, damped_newton

NO_CONSTRAINTS = np.zeros((0, 2))


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.1, 10.0))
def test_quadratic_solved_exactly(a, b, scale):
    c = np.array([a, b])
    H = np.array([[scale, 0.3], [0.3, 1.0]])
    res = damped_newton(lambda x: 0.5 * (x - c) @ H @ (x - c), lambda x: H @ (x - c),
                        lambda x: H, np.zeros(2), NO_CONSTRAINTS)
    np.testing.assert_allclose(res.x, c, atol=1e-9)
    assert res.status == "interior"


def test_iterates_stay_feasible():
    Z = np.array([[-0.2]])
    seen = []

    def f(x):
        seen.append(float(x[0]))
        return float(-np.log(1 + Z[0] @ x) - 0.5 * x[0])

    res = damped_newton(f, lambda x: np.array([0.2 / (1 + Z[0] @ x) - 0.5]),
                        lambda x: np.array([[0.04 / (1 + Z[0] @ x) ** 2]]), np.zeros(1), Z)
    assert all(1 - 0.2 * s > 0 for s in seen)
    assert res.x[0] == pytest.approx(3.0, abs=1e-9)


def test_linear_objective_stops_at_the_wall():
    Z = np.array([[-0.2]])
    res = damped_newton(lambda x: -float(x[0]), lambda x: np.array([-1.0]),
                        lambda x: np.zeros((1, 1)), np.zeros(1), Z, margin=1e-10)
    assert res.status == "boundary"
    assert 1 + Z[0] @ res.x == pytest.approx(1e-10, abs=1e-12)


def test_iteration_cap_raises():
    f = lambda x: float(np.sum(np.cosh(x)))
    g = lambda x: np.sinh(x)
    H = lambda x: np.diag(np.cosh(x))
    with pytest.raises(ConvergenceError) as info:
        damped_newton(f, g, H, np.full(2, 8.0), NO_CONSTRAINTS, max_iter=2)
    assert info.value.grad_norm > 0
