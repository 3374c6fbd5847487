import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ues.costs import ConvexityBounds, CustomCost, OracleError, QuadSinSq, ShiftedQuadratic, quadratic_form


def fd_grad(cost, agent, x, t, eps=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = eps * max(1.0, abs(x[j]))
        g[j] = (cost.value(agent, x + e, t) - cost.value(agent, x - e, t)) / (2 * e[j])
    return g


def rel_err(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(1.0, np.linalg.norm(b))


def smooth_custom():
    # f_i(x) = cosh(x_1 - i) + (x_2 + 0.1 i t)^2 ; an independent family with a 2-D domain
    def value(i, x, t):
        return math.cosh(x[0] - i) + (x[1] + 0.1 * i * t) ** 2

    def grad(i, x, t):
        return np.array([math.sinh(x[0] - i), 2 * (x[1] + 0.1 * i * t)])

    return CustomCost(3, 2, value, grad)


# --- values and gradients ---------------------------------------------------------


def test_quadsinsq_values():
    c = QuadSinSq()
    for i in range(5):
        assert c.value(i, [i + 1.0], 7.0) == 0.0
    assert c.value(0, [3.0], 0.0) == pytest.approx(4 + math.sin(2) ** 2, abs=1e-15)


def test_shifted_quadratic_value_at_center():
    c = ShiftedQuadratic()
    t = 2.7
    assert c.value(0, [0.1 * math.sin(0.1 * t)], t) == 0.0


def test_gradient_closed_forms():
    q = QuadSinSq()
    for i in range(5):
        assert q.grad(i, [i + 1.0], 0.0)[0] == 0.0
    assert q.grad(0, [2.5], 0.0)[0] == pytest.approx(2 * 1.5 + math.sin(3.0))
    s = ShiftedQuadratic()
    t, x = 1.3, 0.7
    for i, (a, b) in enumerate(zip(s.a[:, 0], s.b[:, 0])):
        assert s.grad(i, [x], t)[0] == pytest.approx(2 * (x - a * math.sin(b * t)), abs=1e-15)


@pytest.mark.parametrize("family", ["quad_sin_sq", "shifted_quadratic", "custom"])
def test_gradient_matches_finite_differences(family, rng):
    cost = {"quad_sin_sq": QuadSinSq(), "shifted_quadratic": ShiftedQuadratic(), "custom": smooth_custom()}[family]
    for _ in range(20):
        agent = int(rng.integers(cost.n_agents))
        x = rng.uniform(-3, 6, cost.dim)
        t = float(rng.uniform(0, 40))
        assert rel_err(cost.grad(agent, x, t), fd_grad(cost, agent, x, t)) <= 1e-6


@pytest.mark.parametrize("cost", [QuadSinSq(), ShiftedQuadratic(), QuadSinSq(dim=2)])
def test_hessian_matches_finite_differences_of_gradient(cost, rng):
    for _ in range(20):
        agent = int(rng.integers(cost.n_agents))
        x = rng.uniform(-3, 6, cost.dim)
        t = float(rng.uniform(0, 40))
        H = cost.hessian(agent, x, t)
        fd = np.empty((cost.dim, cost.dim))
        for j in range(cost.dim):
            e = np.zeros(cost.dim)
            e[j] = 1e-6
            fd[:, j] = (cost.grad(agent, x + e, t) - cost.grad(agent, x - e, t)) / 2e-6
        assert np.linalg.norm(H - fd) / max(1.0, np.linalg.norm(H)) <= 1e-5


def test_agent_index_checked():
    with pytest.raises(IndexError):
        QuadSinSq().value(5, [0.0], 0.0)


# --- optimum ----------------------------------------------------------------------


def test_static_optimum_is_three():
    assert QuadSinSq().optimum(0.0)[0] == pytest.approx(3.0, abs=1e-9)


def test_summed_gradient_vanishes_at_three():
    c = QuadSinSq()
    assert abs(c.total_grad([3.0], 0.0)[0]) <= 1e-12


@pytest.mark.parametrize("t", [0.0, 1.0, 4.5, 13.7, 50.0])
def test_moving_optimum_is_mean_of_centers(t):
    c = ShiftedQuadratic()
    expected = np.mean([a * math.sin(b * t) for a, b in zip(c.a[:, 0], c.b[:, 0])])
    assert c.optimum(t)[0] == pytest.approx(expected, abs=1e-10)


def test_single_agent_optimum():
    c = ShiftedQuadratic(a=(0.8,), b=(0.5,))
    assert c.optimum(2.0)[0] == pytest.approx(0.8 * math.sin(1.0), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0, max_value=100))
def test_optimum_zeroes_summed_gradient(t):
    for c in (QuadSinSq(), ShiftedQuadratic(), smooth_custom()):
        assert np.linalg.norm(c.total_grad(c.optimum(t), t)) <= 1e-9


def test_optimum_needs_gradient():
    c = CustomCost(2, 1, lambda i, x, t: float(x[0] ** 2))
    with pytest.raises(OracleError):
        c.optimum(0.0)
    with pytest.raises(OracleError):
        c.grad(0, [1.0], 0.0)


def test_missing_minimizer_raises():
    # unbounded below along x_1: no minimizer to find
    c = CustomCost(1, 2, lambda i, x, t: float(x[0] + x[1] ** 2), lambda i, x, t: np.array([1.0, 2 * x[1]]))
    with pytest.raises(OracleError):
        c.optimum(0.0)


# --- convexity bounds -------------------------------------------------------------


def test_shifted_quadratic_bounds():
    b = ShiftedQuadratic().convexity_bounds([-5, 5])
    assert (b.m, b.M) == (2.0, 2.0)


def test_quadsinsq_bounds_wide_box_has_zero_modulus():
    b = QuadSinSq().convexity_bounds([-1, 5])
    assert b.M == 4.0 and b.m == 0.0


def test_quadsinsq_bounds_narrow_box_against_grid():
    box = [2.9, 3.1]
    b = QuadSinSq().convexity_bounds(box)
    xs = np.linspace(*box, 20001)
    oracle = min(np.min(2 + 2 * np.cos(2 * (xs - c))) for c in range(1, 6))
    assert b.m == pytest.approx(oracle, abs=1e-6)
    assert b.m > 0


def test_quadratic_form_bounds():
    Q = np.array([[3.0, 1.0], [1.0, 2.0]])
    b = quadratic_form(Q, 2).convexity_bounds([[-1, 1], [-1, 1]])
    lo, hi = np.linalg.eigvalsh(Q)
    assert b.m == pytest.approx(lo, rel=1e-6) and b.M == pytest.approx(hi, rel=1e-6)


def test_bounds_validate_order():
    with pytest.raises(ValueError):
        ConvexityBounds(3.0, 2.0)


def test_measurement_view_hides_gradients():
    view = QuadSinSq().measurements()
    assert not hasattr(view, "grads") and not hasattr(view, "optimum")
    assert view.values(np.array([[1.0], [2.0], [3.0], [4.0], [5.0]]), 0.0).tolist() == [0, 0, 0, 0, 0]
