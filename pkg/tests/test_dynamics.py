import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracvi.dynamics import (
    DiscretePath,
    LagrangianDerivatives,
    MechanicalSystem,
    Potential,
    action_directional_derivative,
    action_gradient_check,
    action_sum,
    change_of_variables_check,
    lagrangian_eval,
    lagrangian_series,
    mechanical_derivatives,
    predicted_directional_derivative,
    residual_general,
    residual_general_all,
    residual_x,
    residual_y,
    residuals,
    transform_system,
)
from fracvi.verify import random_system

ALPHAS = (0.25, 0.5, 0.75)


def random_path(rng, N, d, alpha, h=0.1):
    return DiscretePath(h, rng.normal(size=(N + 1, d)), rng.normal(size=(N + 1, d)), alpha)


def interior_direction(rng, N, d):
    delta = rng.normal(size=(N + 1, d))
    delta[0] = delta[-1] = 0.0
    return delta


# --- potentials and systems


@pytest.mark.parametrize(
    "pot",
    [
        Potential.harmonic([1.0, 3.0]),
        Potential.pendulum([2.0, 0.5]),
        Potential.double_well([1.0, 0.3], [0.5, 2.0]),
        Potential.polynomial([[0.0, 1.0, 0.5, -0.2], [1.0, 0.0, 2.0]]),
        Potential.custom(lambda q: float(np.sum(np.cosh(q))), dim=2),
    ],
)
def test_gradient_self_check(pot):
    assert pot.check_gradient(2, np.random.default_rng(0)) <= 1e-5


def test_hessians_match_gradient_differences():
    rng = np.random.default_rng(1)
    for pot in (Potential.pendulum([2.0]), Potential.double_well([1.0], [0.5]), Potential.polynomial([[0, 0, 1, 1]])):
        q = rng.uniform(-1, 1, 1)
        e = 1e-6
        fd = (pot.gradient(q + e) - pot.gradient(q - e)) / (2 * e)
        assert pot.hessian(q)[0, 0] == pytest.approx(fd[0], rel=1e-6)


def test_custom_potential_with_gradient():
    pot = Potential.custom(lambda q: float(q @ q), gradient=lambda q: 2 * q, dim=3)
    np.testing.assert_array_equal(pot.gradient([1.0, 2.0, 3.0]), [2.0, 4.0, 6.0])
    assert pot.has_analytic_gradient


def test_system_validation():
    with pytest.raises(ValueError, match="positive"):
        MechanicalSystem([-1.0], [0.0], Potential.zero(1))
    with pytest.raises(ValueError, match="non-negative"):
        MechanicalSystem([1.0], [-0.1], Potential.zero(1))
    with pytest.raises(ValueError, match="dimension"):
        MechanicalSystem([1.0, 1.0], [0.0, 0.0], Potential.zero(3))
    with pytest.raises(ValueError):
        Potential("spline")


def test_harmonic_factory():
    s = MechanicalSystem.harmonic(2.0, 0.1, 3.0)
    assert s.potential.params["stiffness"][0] == 18.0
    assert s.omega[0] == pytest.approx(3.0)
    assert s.energy([1.0], [1.0]) == pytest.approx(1.0 + 9.0)
    assert s.fingerprint() == MechanicalSystem.harmonic(2.0, 0.1, 3.0).fingerprint()
    assert s.fingerprint() != MechanicalSystem.harmonic(2.0, 0.2, 3.0).fingerprint()


# --- Lagrangian and action


def test_lagrangian_examples():
    zero = DiscretePath(0.1, np.zeros((4, 1)), np.zeros((4, 1)), 0.5)
    assert lagrangian_eval(MechanicalSystem.harmonic(1.0, 0.3, 1.0), zero, 2) == 0.0
    pend = MechanicalSystem([1.0], [0.0], Potential.polynomial([[1.5, 0.0, 1.0]]))
    assert lagrangian_eval(pend, zero, 0) == pytest.approx(-3.0)

    free = MechanicalSystem.free(1.0)
    p = DiscretePath(1.0, [0.0, 1.0], [1.0, 0.0], 0.5)
    assert lagrangian_eval(free, p, 0) == 0.5
    assert action_sum(free, p) == 0.5
    p2 = DiscretePath(1.0, [0.0, 1.0, 2.0], [2.0, 1.0, 0.0], 0.5)
    assert lagrangian_eval(MechanicalSystem.free(2.0), p2, 1) == 2.0
    with pytest.raises(IndexError):
        lagrangian_eval(free, p, 1)


def test_action_scales_with_h():
    free = MechanicalSystem.free(1.0)
    xs, ys = [0.0, 1.0, 3.0], [3.0, 1.0, 0.0]
    # same point values with h doubled: every difference halves, kinetic terms drop by 4, h factor doubles
    a1 = action_sum(free, DiscretePath(1.0, xs, ys, 0.5))
    a2 = action_sum(free, DiscretePath(2.0, xs, ys, 0.5))
    assert a2 == pytest.approx(a1 / 2)


def test_vectorised_lagrangian_matches_scalar():
    rng = np.random.default_rng(5)
    s = random_system(rng, 2)
    p = random_path(rng, 9, 2, 0.3)
    series = lagrangian_series(s, p)
    for k in range(9):
        assert series[k] == pytest.approx(lagrangian_eval(s, p, k), rel=1e-12, abs=1e-12)


# --- residuals


def test_residual_examples():
    free = MechanicalSystem.free(1.0)
    lin = np.arange(6) * 0.25  # dyadic values keep the second difference exact
    p = DiscretePath.reversed_pair(0.1, lin, 0.5)
    assert np.all(residuals(free, p).r_x == 0.0)

    well = MechanicalSystem([1.0], [0.0], Potential.double_well([1.0], [1.0]))
    rest = DiscretePath.reversed_pair(0.1, np.ones(5), 0.3)
    assert np.all(residuals(well, rest).r_x == 0.0)

    damped = MechanicalSystem.free(1.0, 1.0)
    p = DiscretePath(0.1, [0.0, 0.1, 0.19], [0.19, 0.1, 0.0], 0.5)
    assert residual_x(damped, p, 1)[0] == pytest.approx(0.0, abs=1e-13)
    with pytest.raises(IndexError):
        residual_x(damped, p, 2)


def test_vectorised_residuals_match_scalar():
    rng = np.random.default_rng(9)
    for alpha in ALPHAS:
        s = random_system(rng, 3)
        p = random_path(rng, 10, 3, alpha)
        r = residuals(s, p)
        for k in range(1, 10):
            np.testing.assert_allclose(r.r_x[k - 1], residual_x(s, p, k), rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(r.r_y[k - 1], residual_y(s, p, k), rtol=1e-12, atol=1e-12)


def test_half_order_collapse_substitution():
    rng = np.random.default_rng(2)
    s = MechanicalSystem.harmonic(1.3, 0.7, 1.1)
    xs = rng.normal(size=30)
    p = DiscretePath.reversed_pair(0.05, xs, 0.5)
    r = residuals(s, p).r_x[:, 0]
    h, m, k2 = 0.05, 1.3, 1.3 * 1.1**2
    local = (
        m * (xs[2:] - 2 * xs[1:-1] + xs[:-2]) / h**2
        + 0.7 * (xs[1:-1] - xs[:-2]) / h
        + 0.5 * k2 * 0.5 * (xs[2:] + xs[1:-1])
        + 0.5 * k2 * 0.5 * (xs[1:-1] + xs[:-2])
    )
    np.testing.assert_allclose(r, local, rtol=0, atol=1e-11 * np.max(np.abs(local)))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(ALPHAS + (0.0, 0.13, 1.0)), st.integers(2, 40), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_time_reversal_mapping_is_exact(alpha, N, d, seed):
    rng = np.random.default_rng(seed)
    s = random_system(rng, d)
    p = DiscretePath.reversed_pair(0.07, rng.normal(size=(N + 1, d)), alpha)
    r = residuals(s, p)
    np.testing.assert_array_equal(r.r_y, r.r_x[::-1])


# --- general Lagrangians


def test_residual_general_zero_lagrangian():
    p = random_path(np.random.default_rng(0), 5, 2, 0.4)
    ex, ey = residual_general(LagrangianDerivatives.zero(2), p, 2)
    assert np.all(ex == 0) and np.all(ey == 0)


def test_residual_general_quadratic_lagrangian():
    z = lambda *s: np.zeros(1)  # noqa: E731
    L = LagrangianDerivatives(z, z, lambda sx, sy, vx, vy, fx, fy: vx, z, z, z)
    p = DiscretePath(1.0, [0.0, 1.0, 4.0], [0.0, 0.0, 0.0], 0.5)
    ex, _ = residual_general(L, p, 1)
    assert ex[0] == -2.0


def test_residual_general_callback_shape_error():
    bad = LagrangianDerivatives(*(lambda *s: np.zeros(3) for _ in range(6)))
    with pytest.raises(ValueError, match="shape"):
        residual_general_all(bad, random_path(np.random.default_rng(0), 4, 2, 0.5))


@pytest.mark.parametrize("alpha", ALPHAS)
def test_general_form_specialises_to_mechanical_residuals(alpha):
    rng = np.random.default_rng(int(alpha * 100))
    s = random_system(rng, 2)
    p = random_path(rng, 12, 2, alpha)
    ex, ey = residual_general_all(mechanical_derivatives(s), p)
    r = residuals(s, p)
    # the mechanical residuals carry the opposite sign of the general left-hand sides
    scale = np.max(np.abs(r.r_x)) + np.max(np.abs(r.r_y))
    np.testing.assert_allclose(ex, -r.r_x, rtol=0, atol=1e-12 * scale)
    np.testing.assert_allclose(ey, -r.r_y, rtol=0, atol=1e-12 * scale)


# --- variational consistency


@pytest.mark.parametrize("alpha", ALPHAS)
@pytest.mark.parametrize("N", [5, 20])
def test_closed_action_gradient(alpha, N):
    rng = np.random.default_rng(N)
    for d in (1, 2, 3):
        s = random_system(rng, d)
        p = random_path(rng, N, d, alpha)
        assert action_gradient_check(s, p, interior_direction(rng, N, d), closed=True) <= 1e-5


@pytest.mark.parametrize("alpha", ALPHAS)
def test_zero_closure_is_exact_gradient_of_plain_action(alpha):
    rng = np.random.default_rng(3)
    s = random_system(rng, 2)
    p = random_path(rng, 10, 2, alpha)
    delta = interior_direction(rng, 10, 2)
    ex, ey = residual_general_all(mechanical_derivatives(s), p, closure="zero")
    predicted = p.h * np.sum((ex + ey) * delta[1:-1])
    assert action_directional_derivative(s, p, delta) == pytest.approx(predicted, rel=1e-6)


def test_plain_action_misses_end_node_terms():
    """The mechanical residuals need the closing end-node term of the action (see decisions ledger)."""
    rng = np.random.default_rng(4)
    s = random_system(rng, 1)
    p = random_path(rng, 10, 1, 0.5)
    delta = np.zeros((11, 1))
    delta[9] = 1.0
    assert action_gradient_check(s, p, delta, closed=False) > 1e-3
    assert action_gradient_check(s, p, delta, closed=True) <= 1e-5


def test_single_node_direction_recovers_residuals():
    rng = np.random.default_rng(6)
    s = random_system(rng, 1)
    p = random_path(rng, 10, 1, 0.25)
    r = residuals(s, p)
    for k in (1, 4, 9):
        delta = np.zeros((11, 1))
        delta[k] = 1.0
        fd = action_directional_derivative(s, p, delta, closed=True)
        assert fd == pytest.approx(-p.h * (r.r_x[k - 1, 0] + r.r_y[k - 1, 0]), rel=1e-5)


def test_critical_path_has_zero_derivative():
    free = MechanicalSystem.free(1.0)
    p = DiscretePath.reversed_pair(0.1, np.linspace(0, 1, 11), 0.5)
    delta = interior_direction(np.random.default_rng(0), 10, 1)
    assert abs(action_directional_derivative(free, p, delta, closed=True)) <= 1e-8
    assert predicted_directional_derivative(free, p, delta) == 0.0


def test_direction_must_vanish_at_ends():
    s = MechanicalSystem.free(1.0)
    p = DiscretePath.reversed_pair(0.1, np.linspace(0, 1, 5), 0.5)
    with pytest.raises(ValueError):
        predicted_directional_derivative(s, p, np.ones(5))


# --- change of variables


def test_transform_identity_and_scaling():
    rng = np.random.default_rng(8)
    s = random_system(rng, 2)
    p = random_path(rng, 8, 2, 0.5)
    base = residual_general_all(mechanical_derivatives(s), p)
    same = residual_general_all(transform_system(s, np.eye(2)), p)
    np.testing.assert_allclose(same[0], base[0], rtol=1e-14, atol=1e-14)

    free = MechanicalSystem.free([1.0, 2.0], [0.3, 0.1])
    pz = random_path(rng, 8, 2, 0.5)
    px = DiscretePath(pz.h, 2 * pz.xs, 2 * pz.ys, 0.5)
    ez = residual_general_all(transform_system(free, 2 * np.eye(2)), pz)[0]
    ex = residual_general_all(mechanical_derivatives(free), px)[0]
    np.testing.assert_allclose(ez, 2 * ex, rtol=1e-13)


def test_transform_rejects_singular():
    s = MechanicalSystem.free([1.0, 1.0])
    with pytest.raises(ValueError):
        transform_system(s, np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(ValueError):
        transform_system(s, np.eye(3))


@pytest.mark.parametrize("d", [2, 3])
def test_change_of_variables_covariance(d):
    rng = np.random.default_rng(d)
    for alpha in ALPHAS:
        s = random_system(rng, d)
        Lam = rng.normal(size=(d, d)) + 2 * np.eye(d)
        assert change_of_variables_check(s, Lam, random_path(rng, 10, d, alpha)) <= 1e-10
