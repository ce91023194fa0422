"""Reference solutions and run diagnostics.

* closed-form underdamped oscillator and a fixed-step RK4 reference for
  ``M q'' + R q' + grad U(q) = 0``
* energy along a discrete trajectory (central-difference velocities)
* a drift measure for the first integral of the doubled ``(x, y)`` system
* time-reversal residuals and convergence-order studies
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import DiscretePath, MechanicalSystem, residuals
from .integrator import InitialValue, IntegratorConfig, NewtonSettings, Trajectory, integrate

__all__ = [
    "EnergySeries",
    "ReferenceSolution",
    "ConvergenceReport",
    "analytic_damped_oscillator",
    "analytic_reference",
    "rk4_reference",
    "rk4_interpolant",
    "energy_series",
    "first_integral_series",
    "first_integral_check",
    "reversal_check",
    "convergence_study",
    "fit_slope",
    "run_diagnostics",
]


# ---------------------------------------------------------------------------
# reference solutions


def analytic_damped_oscillator(m, rho, omega, q0, v0, t):
    """Position and velocity of ``m q'' + rho q' + m omega^2 q = 0`` (underdamped).

    Works elementwise on array ``t``. Raises for ``rho / (2m) >= omega``.
    """
    if not m > 0 or rho < 0 or not omega > 0:
        raise ValueError("need m > 0, rho >= 0, omega > 0")
    lam = rho / (2.0 * m)
    if lam >= omega:
        raise ValueError(
            f"critically damped or overdamped (rho/2m = {lam:g} >= omega = {omega:g}); use rk4_reference"
        )
    wd = np.sqrt(omega * omega - lam * lam)
    t = np.asarray(t, dtype=float)
    b = (v0 + lam * q0) / wd
    e = np.exp(-lam * t)
    c, s = np.cos(wd * t), np.sin(wd * t)
    q = e * (q0 * c + b * s)
    v = e * ((b * wd - lam * q0) * c - (q0 * wd + lam * b) * s)
    return q, v


def analytic_reference(sys: MechanicalSystem, q0, v0) -> Callable[[np.ndarray], np.ndarray]:
    """Exact positions ``t -> (len(t), d)`` for an underdamped harmonic system."""
    w = sys.omega
    if w is None:
        raise ValueError("analytic reference needs a harmonic potential")
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))

    def positions(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cols = [
            analytic_damped_oscillator(sys.mass[i], sys.damping[i], w[i], q0[i], v0[i], t)[0]
            for i in range(sys.dim)
        ]
        return np.stack(cols, axis=1)

    return positions


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    """Positions and velocities on ``t_k = k h``."""

    times: np.ndarray
    q: np.ndarray
    v: np.ndarray

    @property
    def h(self) -> float:
        return float(self.times[1] - self.times[0])


def rk4_reference(sys: MechanicalSystem, q0, v0, h: float, N: int) -> ReferenceSolution:
    """Classical RK4 on ``q' = v, v' = M^-1 (-R v - grad U(q))``."""
    q = np.atleast_1d(np.asarray(q0, dtype=float)).copy()
    v = np.atleast_1d(np.asarray(v0, dtype=float)).copy()
    Q = np.empty((N + 1, len(q)))
    V = np.empty_like(Q)
    Q[0], V[0] = q, v
    acc = sys.acceleration
    for k in range(N):
        k1q, k1v = v, acc(q, v)
        k2q, k2v = v + 0.5 * h * k1v, acc(q + 0.5 * h * k1q, v + 0.5 * h * k1v)
        k3q, k3v = v + 0.5 * h * k2v, acc(q + 0.5 * h * k2q, v + 0.5 * h * k2v)
        k4q, k4v = v + h * k3v, acc(q + h * k3q, v + h * k3v)
        q = q + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
        v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        Q[k + 1], V[k + 1] = q, v
    return ReferenceSolution(h * np.arange(N + 1), Q, V)


def rk4_interpolant(sys: MechanicalSystem, q0, v0, h_ref: float, T: float) -> Callable[[np.ndarray], np.ndarray]:
    """RK4 positions on ``[0, T]`` with cubic Hermite interpolation between nodes."""
    N = int(np.ceil(T / h_ref - 1e-9))
    ref = rk4_reference(sys, q0, v0, T / N, N)
    hr = ref.h

    def positions(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        j = np.clip(np.floor(t / hr + 1e-9).astype(int), 0, N - 1)
        s = ((t - j * hr) / hr)[:, None]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * ref.q[j] + h10 * hr * ref.v[j] + h01 * ref.q[j + 1] + h11 * hr * ref.v[j + 1]

    return positions


# ---------------------------------------------------------------------------
# energy and first integral


@dataclass(frozen=True, eq=False)
class EnergySeries:
    """Energy at interior nodes ``k = 1..N-1``."""

    times: np.ndarray
    values: np.ndarray
    velocity: str = "central"

    def max_increase(self) -> float:
        """Largest step-to-step increase (negative when strictly decreasing)."""
        return float(np.max(np.diff(self.values))) if len(self.values) > 1 else 0.0


def _central_velocities(xs: np.ndarray, h: float) -> np.ndarray:
    return (xs[2:] - xs[:-2]) / (2.0 * h)


def energy_series(sys: MechanicalSystem, traj: Trajectory) -> EnergySeries:
    """``E_k = 1/2 v_k^T M v_k + U(x_k)`` with central-difference ``v_k``."""
    xs = traj.xs
    if len(xs) < 3:
        raise ValueError("energy needs at least three trajectory points")
    v = _central_velocities(xs, traj.h)
    kinetic = 0.5 * np.sum(sys.mass * v * v, axis=1)
    potential = np.array([sys.potential.value(q) for q in xs[1:-1]])
    return EnergySeries(traj.times[1:-1], kinetic + potential)


FIRST_INTEGRAL_FORMS = ("balance", "sum")


def first_integral_series(sys: MechanicalSystem, traj: Trajectory, form: str = "balance") -> np.ndarray:
    """Discrete first integral of the pair ``(x, y)`` with ``y_k = x_{N-k}``.

    ``form="sum"`` is ``E_k + E~_k`` (energies of x and y at node k).
    ``form="balance"`` adds the accumulated dissipation imbalance
    ``int (x'Rx' - y'Ry') dt`` (trapezoid), which makes the quantity
    constant for the continuous doubled system.
    """
    if form not in FIRST_INTEGRAL_FORMS:
        raise ValueError(f"form must be one of {FIRST_INTEGRAL_FORMS}")
    E = energy_series(sys, traj).values
    total = E + E[::-1]
    if form == "sum":
        return total
    v = _central_velocities(traj.xs, traj.h)
    power = np.sum(sys.damping * v * v, axis=1)
    imbalance = power - power[::-1]
    work = np.concatenate([[0.0], np.cumsum(0.5 * (imbalance[1:] + imbalance[:-1]) * traj.h)])
    return total + work


def first_integral_check(sys: MechanicalSystem, traj: Trajectory, form: str = "balance") -> float:
    """Max deviation of the discrete first integral from its first value."""
    if not traj.complete:
        raise ValueError("first-integral drift needs a complete trajectory")
    series = first_integral_series(sys, traj, form)
    return float(np.max(np.abs(series - series[0])))


def reversal_check(sys: MechanicalSystem, traj: Trajectory) -> tuple[float, float]:
    """Max residuals of the x- and y-equations for ``(x, reversed x)``."""
    r = residuals(sys, DiscretePath.reversed_pair(traj.h, traj.xs, traj.alpha))
    return float(np.max(np.abs(r.r_x), initial=0.0)), float(np.max(np.abs(r.r_y), initial=0.0))


def run_diagnostics(sys: MechanicalSystem, traj: Trajectory) -> dict:
    """Summary numbers for a marched trajectory."""
    out: dict = {"newton_stats": traj.newton_stats()}
    if len(traj.xs) >= 3:
        rx, ry = reversal_check(sys, traj)
        E = energy_series(sys, traj).values
        out.update(residual_max=rx, reversal_residual_max=ry, energy_initial=float(E[0]), energy_final=float(E[-1]))
        out["first_integral_drift"] = first_integral_check(sys, traj) if traj.complete else None
    return out


# ---------------------------------------------------------------------------
# convergence


EXACT_RELATIVE = 1e-10


@dataclass(frozen=True)
class ConvergenceReport:
    h: tuple
    errors: tuple
    slope: float | None
    exact: bool
    complete: bool
    runs: tuple = field(default_factory=tuple)

    @property
    def monotone(self) -> bool:
        e = [x for x in self.errors if x is not None]
        return all(b < a for a, b in zip(e, e[1:]))

    def to_dict(self) -> dict:
        return {
            "h": list(self.h),
            "errors": list(self.errors),
            "slope": self.slope,
            "exact": self.exact,
            "complete": self.complete,
            "monotone": self.monotone,
            "runs": [dict(r) for r in self.runs],
        }


def fit_slope(h, errors) -> float:
    """Least-squares slope of ``log e`` against ``log h``."""
    return float(np.polyfit(np.log(np.asarray(h, float)), np.log(np.asarray(errors, float)), 1)[0])


def convergence_study(
    sys: MechanicalSystem,
    reference: Callable[[np.ndarray], np.ndarray],
    h_list,
    T: float,
    q0,
    v0,
    alpha: float = 0.5,
    newton: NewtonSettings = NewtonSettings(),
    method: str = "auto",
) -> ConvergenceReport:
    """Global error ``max_k |x_k - q(t_k)|`` of ``integrate`` for each step size.

    Every ``h`` must divide ``T``. Errors at rounding level for all runs set
    the ``exact`` flag and no slope is fitted.
    """
    hs = sorted((float(h) for h in h_list), reverse=True)
    if len(hs) < 3:
        raise ValueError("need ≥ 3 step sizes")
    steps = []
    for h in hs:
        if not h > 0:
            raise ValueError("step sizes must be positive")
        n = T / h
        if abs(n - round(n)) > 1e-9 * n or round(n) < 2:
            raise ValueError(f"step size {h} does not divide the final time {T}")
        steps.append(int(round(n)))

    errors, runs = [], []
    complete = True
    scale = 1.0
    for h, N in zip(hs, steps):
        cfg = IntegratorConfig(alpha, h, N, InitialValue(np.atleast_1d(q0), np.atleast_1d(v0)), newton)
        traj = integrate(sys, cfg, method)
        meta = {"h": h, "steps": N, "complete": traj.complete, **traj.newton_stats()}
        runs.append(meta)
        if not traj.complete:
            complete = False
            errors.append(None)
            continue
        ref = reference(traj.times)
        scale = max(scale, float(np.max(np.abs(ref))))
        errors.append(float(np.max(np.abs(traj.xs - ref))))

    done = [e for e in errors if e is not None]
    exact = complete and all(e <= EXACT_RELATIVE * scale for e in done)
    slope = None
    if complete and not exact:
        slope = fit_slope(hs, [max(e, np.finfo(float).tiny) for e in errors])
    return ConvergenceReport(tuple(hs), tuple(errors), slope, exact, complete, tuple(runs))

