from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rs_regime.hjb import (HJBError, SolverConfig, _integrate, build_grid, check_invariants,
                           closed_form_no_jump, g_min, g_value, independent_jumps_operator,
                           merton_cost, minimize_A, operator_A, operator_A_grad, operator_matrix,
                           solve_hjb, value_bounds)
from rs_regime.market import admissible_set, constant_model, is_feasible
from rs_regime.models import merton_model, model_m2, random_no_jump_model
from rs_regime.simulate import effective_generator

G_STAR = -0.0425     # Merton data: -0.06^2 / (2 * 2 * 0.04) - 0.02


def _m2_direct(h, theta=1.0):
    """Hand-written operator pieces for state 0 of the two-regime model."""
    q, z, s2, r, ex = 0.5, -0.2, 0.04, 0.02, 0.06
    tilt = (1.0 + h * z) ** -theta
    g = 0.5 * (theta + 1) * h * h * s2 - r - h * ex + q * ((tilt - 1.0) / theta + h * z)
    return g, q * tilt


# ----------------------------------------------------------------------
# Running cost
# ----------------------------------------------------------------------

def test_g_at_zero_is_minus_r(m2, m3):
    assert g_value(m2, 0.3, 0, [0.0]) == -0.02
    assert g_value(m3, 0.7, 2, [0.0, 0.0]) == -0.015


def test_g_merton_hand_value(merton):
    assert g_value(merton, 0.0, 0, [0.75]) == pytest.approx(G_STAR, abs=1e-15)
    assert merton_cost(merton.local(0.0, 0), 1.0) == pytest.approx(G_STAR, abs=1e-15)


@pytest.mark.parametrize("theta", [0.5, 1.0, 3.0])
def test_g_two_regime_direct_sum(theta):
    m = model_m2(theta=theta)
    g, _ = _m2_direct(0.5, theta)
    assert g_value(m, 0.0, 0, [0.5]) == pytest.approx(g, abs=1e-12)


def test_g_min_merton(merton):
    assert g_min(merton) == pytest.approx(G_STAR, abs=1e-12)


# ----------------------------------------------------------------------
# Operator A
# ----------------------------------------------------------------------

def test_operator_single_state_at_zero(merton):
    assert operator_A(merton, [2.5], 0.0, 0, [0.0]) == pytest.approx(-1.0 * 2.5 * 0.02, abs=1e-16)


def test_operator_unit_u_no_jumps_at_zero():
    m = model_m2(with_jumps=False)
    assert operator_A(m, [1.0, 1.0], 0.0, 1, [0.0]) == pytest.approx(-0.01, abs=1e-16)


def test_operator_matches_tilted_generator_form(m2):
    u = np.array([1.0, 1.1])
    g, qh = _m2_direct(0.5)
    expected = (-qh * u[0] + qh * u[1]) + 1.0 * g * u[0]
    assert operator_A(m2, u, 0.0, 0, [0.5]) == pytest.approx(expected, abs=1e-12)


def test_operator_rejects_nonpositive_u(m2):
    with pytest.raises(ValueError):
        operator_A(m2, [1.0, 0.0], 0.0, 0, [0.1])


@given(st.floats(-5.0, 4.9), st.floats(0.5, 1.5), st.floats(0.5, 1.5))
def test_operator_gradient_matches_differences(h, u0, u1):
    m = model_m2()
    u = np.array([u0, u1])
    g = operator_A_grad(m, u, 0.0, 0, [h])[0]
    eps = 1e-6
    fd = (operator_A(m, u, 0.0, 0, [h + eps]) - operator_A(m, u, 0.0, 0, [h - eps])) / (2 * eps)
    assert abs(fd - g) <= 1e-6 * max(abs(g), 1e-3)


def test_operator_matrix_rows(m2):
    hs = np.array([[0.4], [0.1]])
    u = np.array([0.9, 1.05])
    A = operator_matrix(m2, 0.2, hs)
    for i in range(2):
        assert A[i] @ u == pytest.approx(operator_A(m2, u, 0.2, i, hs[i]), abs=1e-14)


@given(st.integers(0, 2**32 - 1))
def test_operator_convex_in_h(seed):
    m = model_m2()
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.8, 1.2, size=2)
    for i in range(2):
        lo, hi = admissible_set(m, i).bounds_1d()
        a, b = rng.uniform(max(lo, -20) + 1e-3, min(hi, 20) - 1e-3, size=2)
        lam = rng.uniform()
        mid = operator_A(m, u, 0.0, i, [lam * a + (1 - lam) * b])
        ends = lam * operator_A(m, u, 0.0, i, [a]) + (1 - lam) * operator_A(m, u, 0.0, i, [b])
        assert mid <= ends + 1e-10


# ----------------------------------------------------------------------
# Independent-jump variant
# ----------------------------------------------------------------------

def test_variants_agree_for_constant_u(m2):
    for h in (-1.0, 0.3, 2.0):
        for i in (0, 1):
            a = operator_A(m2, [1.3, 1.3], 0.0, i, [h])
            b = independent_jumps_operator(m2, [1.3, 1.3], 0.0, i, [h])
            assert a == pytest.approx(b, abs=1e-14)


def test_variants_agree_at_zero(m2):
    u = [0.9, 1.2]
    for i in (0, 1):
        assert operator_A(m2, u, 0.0, i, [0.0]) == pytest.approx(
            independent_jumps_operator(m2, u, 0.0, i, [0.0]), abs=1e-14)


def test_coinciding_jump_term_is_larger_before_a_crash(m2):
    u = [1.0, 1.2]
    a = operator_A(m2, u, 0.0, 0, [0.5])
    b = independent_jumps_operator(m2, u, 0.0, 0, [0.5])
    # difference is Q01 (u1 - u0) (E(1+hZ)^-theta - 1) = 0.5 * 0.2 * (1/0.9 - 1)
    assert a - b == pytest.approx(0.5 * 0.2 * (1 / 0.9 - 1), abs=1e-14)
    assert a > b


# ----------------------------------------------------------------------
# Pointwise minimization
# ----------------------------------------------------------------------

def test_no_jump_minimizer_closed_form(merton):
    res = minimize_A(merton, [1.0], 0.0, 0)
    h_closed = 0.06 / 0.04 / 2.0
    assert res.h[0] == pytest.approx(h_closed, abs=1e-12)
    assert h_closed == 0.75
    assert res.value == pytest.approx(1.0 * G_STAR, abs=1e-14)
    assert res.status == "interior"


def test_minimizer_matches_grid_search(m2):
    u = np.array([1.0, 1.0])
    res = minimize_A(m2, u, 0.0, 0)
    hs = np.arange(-3.0, 4.9999, 1e-4)
    g, qh = _m2_direct(hs)
    vals = (-qh * u[0] + qh * u[1]) + g * u[0]
    k = int(np.argmin(vals))
    assert abs(res.h[0] - hs[k]) <= 1e-3
    assert abs(res.value - vals[k]) <= 1e-8
    assert res.value <= vals[k] + 1e-15


def test_minimizer_unpacks_and_respects_warm_start(m2):
    h, value = minimize_A(m2, [1.0, 1.1], 0.0, 0, warm_start=np.array([3.0]))
    h0, v0 = minimize_A(m2, [1.0, 1.1], 0.0, 0)
    assert h[0] == pytest.approx(h0[0], abs=1e-9)
    assert value == pytest.approx(v0, abs=1e-14)


def test_minimizer_gradient_certificate(m3):
    u = np.array([0.95, 1.0, 1.05])
    for i in range(3):
        res = minimize_A(m3, u, 0.7, i)
        assert res.grad_norm <= 1e-10
        assert is_feasible(admissible_set(m3, i), res.h)
        assert np.max(np.abs(operator_A_grad(m3, u, 0.7, i, res.h))) <= 1e-10


def test_h_star_shrinks_as_theta_grows():
    norms = []
    for theta in (0.5, 1.0, 2.0, 4.0):
        surf = solve_hjb(model_m2(theta=theta), SolverConfig(n_steps=50))
        norms.append(np.abs(surf.h_star[0, :, 0]))
    norms = np.array(norms)
    assert np.all(np.diff(norms, axis=0) < 0)


def test_envelope_derivative(m2):
    u = np.array([0.97, 1.02])
    eps = 1e-6
    for i in range(2):
        res = minimize_A(m2, u, 0.0, i)
        row = operator_matrix(m2, 0.0, np.array([res.h, res.h]))[i]
        for j in range(2):
            e = np.eye(2)[j] * eps
            fd = (minimize_A(m2, u + e, 0.0, i).value - minimize_A(m2, u - e, 0.0, i).value) / (2 * eps)
            assert fd == pytest.approx(row[j], abs=1e-6)


# ----------------------------------------------------------------------
# Closed form without jumps
# ----------------------------------------------------------------------

def test_closed_form_merton(merton):
    u, v = closed_form_no_jump(merton, 0.0)
    assert u[0] == pytest.approx(math.exp(G_STAR), rel=1e-14)
    assert v[0] == pytest.approx(-G_STAR, rel=1e-12)


def test_closed_form_frozen_chain_is_per_state():
    m = constant_model([[0.0, 0.0], [0.0, 0.0]], [[0.08], [0.03]], [[[0.2]], [[0.3]]],
                       [0.02, 0.01], 2.0, 1.5)
    u, _ = closed_form_no_jump(m, 0.0)
    for i in range(2):
        assert u[i] == pytest.approx(math.exp(2.0 * merton_cost(m.local(0, i), 2.0) * 1.5),
                                     rel=1e-13)


def test_closed_form_rejects_jumps(m2):
    with pytest.raises(ValueError):
        closed_form_no_jump(m2, 0.0)


# ----------------------------------------------------------------------
# Backward integration
# ----------------------------------------------------------------------

def test_zero_drift_zero_rate_gives_unit_u():
    m = constant_model([[-1.0, 1.0], [2.0, -2.0]], [[0.0], [0.0]], [[[0.2]], [[0.3]]],
                       [0.0, 0.0], 1.5, 1.0)
    surf = solve_hjb(m, SolverConfig(n_steps=20))
    np.testing.assert_array_equal(surf.u, 1.0)
    np.testing.assert_array_equal(surf.h_star, 0.0)


def test_merton_solution(merton):
    surf = solve_hjb(merton)
    assert surf.u[-1, 0] == 1.0
    assert surf.u[0, 0] == pytest.approx(math.exp(G_STAR), abs=1e-12)
    np.testing.assert_allclose(surf.h_star[:, 0, 0], 0.75, atol=1e-12)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_solver_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    m = random_no_jump_model(rng, int(rng.integers(2, 4)), int(rng.integers(1, 3)))
    surf = solve_hjb(m, SolverConfig(n_steps=100))
    for k in range(0, len(surf.time_grid), 10):
        u, _ = closed_form_no_jump(m, surf.time_grid[k])
        np.testing.assert_allclose(surf.u[k], u, rtol=1e-6)


def test_grid_contains_breakpoints(m3):
    grid = build_grid(m3, 30)
    assert 0.5 in grid and grid[0] == 0.0 and grid[-1] == 1.5
    assert np.all(np.diff(grid) > 0)


@pytest.mark.parametrize("model_name", ["m2", "m3"])
def test_fourth_order_convergence(model_name, request):
    model = request.getfixturevalue(model_name)
    u = [solve_hjb(model, SolverConfig(n_steps=n)).u[0] for n in (10, 20, 40)]
    d1 = np.max(np.abs(u[0] - u[1]))
    d2 = np.max(np.abs(u[1] - u[2]))
    assert d1 / d2 >= 8.0


def test_error_control_meets_tolerance(m2):
    surf = solve_hjb(m2, SolverConfig(n_steps=4, ode_tol=1e-10, error_control=True))
    assert surf.error_estimate is not None and surf.error_estimate <= 1e-10
    assert len(surf.time_grid) > 5


def test_invariants_hold_on_reference_surfaces(m2, m2_surface, m3, m3_surface, merton):
    assert check_invariants(m2, m2_surface, 1e-7) == []
    assert check_invariants(m3, m3_surface, 1e-7) == []
    assert check_invariants(merton, solve_hjb(merton), 1e-7) == []


def test_value_bounds_are_ordered(m3):
    lo, hi = value_bounds(m3, np.linspace(0, 1.5, 7))
    assert np.all(lo <= hi) and lo[-1] == hi[-1] == 1.0


def test_tilted_generator_at_every_node(m3, m3_surface):
    for k in range(0, len(m3_surface.time_grid), 5):
        Qh = effective_generator(m3, m3_surface.h_star[k], m3_surface.time_grid[k])
        off = Qh[~np.eye(3, dtype=bool)]
        assert np.all(off >= 0)
        np.testing.assert_allclose(Qh.sum(axis=1), 0.0, atol=1e-12)


def test_workers_do_not_change_output(m3):
    a = solve_hjb(m3, SolverConfig(n_steps=40, workers=1))
    b = solve_hjb(m3, SolverConfig(n_steps=40, workers=3))
    np.testing.assert_array_equal(a.u, b.u)
    np.testing.assert_array_equal(a.h_star, b.h_star)


def test_safety_band_aborts(m2):
    grid = build_grid(m2, 10)
    with pytest.raises(HJBError, match="safety band"):
        _integrate(m2, grid, SolverConfig(n_steps=10), "coinciding", gmin=1.0)


@pytest.mark.parametrize("kw", [dict(n_steps=1), dict(tol_grad=0.0), dict(ode_tol=-1.0),
                                dict(feasibility_margin=0.0)])
def test_solver_config_rejects_bad_values(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_surface_helpers(m2, m2_surface):
    np.testing.assert_allclose(m2_surface.v, -np.log(m2_surface.u))
    assert m2_surface.n_states == 2
    mid = 0.5 * (m2_surface.time_grid[3] + m2_surface.time_grid[4])
    at = m2_surface.at(mid)
    assert np.all((at >= m2_surface.u[3]) & (at <= m2_surface.u[4]))
    s = m2_surface.strategy()
    assert s(0.0, 0)[0] == m2_surface.h_star[0, 0, 0]
