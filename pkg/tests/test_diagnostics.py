import math

import numpy as np
import pytest

from fracvi.diagnostics import (
    analytic_damped_oscillator,
    analytic_reference,
    convergence_study,
    energy_series,
    first_integral_check,
    first_integral_series,
    reversal_check,
    rk4_interpolant,
    rk4_reference,
    run_diagnostics,
)
from fracvi.dynamics import MechanicalSystem, Potential
from fracvi.integrator import InitialValue, IntegratorConfig, Trajectory, integrate

DAMPED = MechanicalSystem.harmonic(1.0, 0.2, 1.0)
CONSERVATIVE = MechanicalSystem.harmonic(1.0, 0.0, 1.0)
H_LIST = [0.1, 0.05, 0.025, 0.0125]


def run(sys, h, N, alpha=0.5, q0=1.0, v0=0.0):
    return integrate(sys, IntegratorConfig(alpha, h, N, InitialValue([q0], [v0])))


# --- analytic oscillator


def test_analytic_examples():
    t = np.linspace(0, 5, 11)
    q, v = analytic_damped_oscillator(2.0, 0.0, 1.5, 0.7, -0.3, t)
    np.testing.assert_allclose(q, 0.7 * np.cos(1.5 * t) - 0.2 * np.sin(1.5 * t), atol=1e-15)
    q0, v0 = analytic_damped_oscillator(1.0, 0.2, 1.0, 0.4, 1.3, 0.0)
    assert (q0, v0) == (pytest.approx(0.4, abs=1e-16), pytest.approx(1.3, abs=1e-15))
    # one damped period lasts 2 pi / omega_d with omega_d = sqrt(0.99)
    wd = math.sqrt(0.99)
    assert wd == pytest.approx(0.994987, abs=1e-6)
    q1, _ = analytic_damped_oscillator(1.0, 0.2, 1.0, 1.0, -0.1, 2 * math.pi / wd)
    assert q1 == pytest.approx(math.exp(-0.1 * 2 * math.pi / wd), rel=1e-13)


def test_analytic_solution_satisfies_the_ode():
    m, rho, w, q0, v0 = 1.3, 0.4, 2.0, 0.8, -0.5
    lam = rho / (2 * m)
    wd = math.sqrt(w * w - lam * lam)
    t = np.linspace(0, 10, 401)
    q, v = analytic_damped_oscillator(m, rho, w, q0, v0, t)
    b = (v0 + lam * q0) / wd
    # second derivative from the closed form: d/dt of v
    A, B = b * wd - lam * q0, -(q0 * wd + lam * b)
    e = np.exp(-lam * t)
    a = e * ((B * wd - lam * A) * np.cos(wd * t) - (A * wd + lam * B) * np.sin(wd * t))
    assert np.max(np.abs(m * a + rho * v + m * w * w * q)) <= 1e-10
    # velocity is the derivative of position
    fd = (q[2:] - q[:-2]) / (2 * (t[1] - t[0]))
    assert np.max(np.abs(fd - v[1:-1])) <= 1e-3


def test_overdamped_is_rejected():
    with pytest.raises(ValueError, match="overdamped"):
        analytic_damped_oscillator(1.0, 2.0, 1.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        analytic_damped_oscillator(1.0, 3.0, 1.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError, match="harmonic"):
        analytic_reference(MechanicalSystem([1.0], [0.1], Potential.pendulum([1.0])), [1.0], [0.0])


# --- RK4


def test_rk4_free_particle_is_exact():
    ref = rk4_reference(MechanicalSystem.free([1.0, 2.0]), [0.0, 1.0], [0.5, -0.25], 0.125, 16)
    np.testing.assert_allclose(ref.q[-1], [1.0, 0.5], atol=1e-14)
    np.testing.assert_allclose(ref.v, np.tile([0.5, -0.25], (17, 1)), atol=0)


def test_rk4_matches_analytic():
    ref = rk4_reference(DAMPED, [1.0], [0.0], 1e-3, 10_000)
    q, v = analytic_damped_oscillator(1.0, 0.2, 1.0, 1.0, 0.0, ref.times)
    assert np.max(np.abs(ref.q[:, 0] - q)) <= 1e-8
    assert abs(ref.q[-1, 0] - q[-1]) <= 1e-7


def test_rk4_conserves_energy_without_damping():
    ref = rk4_reference(CONSERVATIVE, [1.0], [0.0], 1e-3, 10_000)
    E = 0.5 * ref.v[:, 0] ** 2 + 0.5 * ref.q[:, 0] ** 2
    assert np.max(np.abs(E - E[0])) / E[0] <= 1e-8


def test_rk4_interpolant_between_nodes():
    f = rk4_interpolant(DAMPED, [1.0], [0.0], 1e-3, 10.0)
    t = np.array([0.0, 0.00037, 3.14159, 10.0])
    q, _ = analytic_damped_oscillator(1.0, 0.2, 1.0, 1.0, 0.0, t)
    assert np.max(np.abs(f(t)[:, 0] - q)) <= 1e-8


# --- energy


def test_energy_examples():
    rest = Trajectory(0.1, np.full((20, 1), 0.0), 0.5)
    well = MechanicalSystem([1.0], [0.3], Potential.double_well([1.0], [1.0]))
    es = energy_series(well, rest)
    assert len(es.values) == 18 and es.velocity == "central"
    np.testing.assert_array_equal(es.values, well.potential.value([0.0]))
    free = integrate(MechanicalSystem.free(2.0), IntegratorConfig(0.5, 0.1, 30, InitialValue([0.0], [1.5])))
    np.testing.assert_allclose(energy_series(MechanicalSystem.free(2.0), free).values, 2.25, rtol=1e-14)
    with pytest.raises(ValueError):
        energy_series(DAMPED, Trajectory(0.1, np.zeros(2), 0.5))


def test_damped_energy_decreases():
    es = energy_series(DAMPED, run(DAMPED, 0.01, 1000))
    assert es.max_increase() <= 1e-12


def test_other_orders_are_not_monotone():
    # away from alpha = 1/2 the history term is not a pure dissipation
    es = energy_series(DAMPED, run(DAMPED, 0.01, 1000, 0.75))
    assert es.max_increase() > 0.1


def test_conservative_energy_stays_bounded():
    traj = run(CONSERVATIVE, 0.1, 10_000)
    E = energy_series(CONSERVATIVE, traj).values
    assert np.max(np.abs(E - E[0])) <= 0.01


# --- first integral


def test_first_integral_of_rest_is_zero():
    rest = Trajectory(0.1, np.full((15, 2), 0.3), 0.5)
    sys = MechanicalSystem.harmonic([1.0, 2.0], [0.3, 0.1], [1.0, 2.0])
    assert first_integral_check(sys, rest) == 0.0
    assert first_integral_check(sys, rest, form="sum") == 0.0


def test_first_integral_drift_shrinks_when_h_halves():
    coarse = first_integral_check(DAMPED, run(DAMPED, 0.02, 500))
    fine = first_integral_check(DAMPED, run(DAMPED, 0.01, 1000))
    assert 1.5 <= coarse / fine <= 4.5


def test_conservative_first_integral_is_second_order():
    drifts = [first_integral_check(CONSERVATIVE, run(CONSERVATIVE, h, round(10 / h))) for h in (0.1, 0.05, 0.025)]
    scaled = np.array(drifts) / np.array([0.1, 0.05, 0.025]) ** 2
    assert np.all(scaled <= 0.5)
    assert np.ptp(scaled) <= 0.1 * scaled.max()


def test_first_integral_forms_agree_without_damping():
    traj = run(CONSERVATIVE, 0.05, 200)
    np.testing.assert_array_equal(
        first_integral_series(CONSERVATIVE, traj, "balance"), first_integral_series(CONSERVATIVE, traj, "sum")
    )
    with pytest.raises(ValueError):
        first_integral_series(CONSERVATIVE, traj, "other")


def test_first_integral_needs_complete_run():
    partial = Trajectory(0.1, np.zeros((5, 1)), 0.5, failure={"step": 4, "message": "x", "residual_norm": 1.0})
    with pytest.raises(ValueError):
        first_integral_check(DAMPED, partial)


# --- reversal and summary


def test_reversal_and_run_diagnostics():
    traj = run(DAMPED, 0.01, 500)
    rx, ry = reversal_check(DAMPED, traj)
    assert rx <= 1e-10 and ry <= 1e-9
    diag = run_diagnostics(DAMPED, traj)
    assert set(diag) == {
        "newton_stats",
        "residual_max",
        "reversal_residual_max",
        "energy_initial",
        "energy_final",
        "first_integral_drift",
    }
    assert diag["energy_final"] < diag["energy_initial"]


# --- convergence


def test_conservative_convergence_order():
    rep = convergence_study(CONSERVATIVE, analytic_reference(CONSERVATIVE, [1.0], [0.0]), H_LIST, 10.0, [1.0], [0.0])
    assert rep.complete and rep.monotone and not rep.exact
    assert 1.8 <= rep.slope <= 2.2


def test_damped_convergence_order():
    rep = convergence_study(DAMPED, analytic_reference(DAMPED, [1.0], [0.0]), H_LIST, 10.0, [1.0], [0.0])
    assert rep.monotone
    assert 0.9 <= rep.slope <= 2.2
    d = rep.to_dict()
    assert len(d["runs"]) == 4 and d["h"] == H_LIST


def test_free_particle_study_is_exact():
    free = MechanicalSystem.free(1.0)
    rep = convergence_study(free, lambda t: (1.0 + 0.5 * t)[:, None], [0.25, 0.125, 0.0625], 2.0, [1.0], [0.5])
    assert rep.exact and rep.slope is None


def test_convergence_study_preconditions():
    ref = analytic_reference(DAMPED, [1.0], [0.0])
    with pytest.raises(ValueError, match="3 step sizes"):
        convergence_study(DAMPED, ref, [0.1], 10.0, [1.0], [0.0])
    with pytest.raises(ValueError, match="divide"):
        convergence_study(DAMPED, ref, [0.1, 0.05, 0.03], 10.0, [1.0], [0.0])


def test_discrete_runs_approach_rk4():
    ref = rk4_interpolant(DAMPED, [1.0], [0.0], 1e-3, 10.0)
    errs = []
    for h in (0.1, 0.05, 0.025, 0.0125, 0.00625):
        traj = run(DAMPED, h, round(10 / h))
        errs.append(np.max(np.abs(traj.xs - ref(traj.times))))
    assert np.all(np.diff(errs) < 0)
