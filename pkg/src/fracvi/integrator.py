"""Implicit time stepping for the restricted discrete fractional equations.

Each step solves the x-equation at node ``k`` for ``x_{k+1}``,

    M (x_{k+1} - 2 x_k + x_{k-1}) / h^2 + damping_k
        + 1/2 grad U((x_{k+1} + x_k)/2) + 1/2 grad U((x_k + x_{k-1})/2) = 0,

where ``damping_k = R h^(-2a) sum_n c_n sum_p c_p x_{k-n-p}`` only involves
known points. For ``a = 1/2`` the double sum collapses to ``x_k - x_{k-1}``
and the scheme is the midpoint-rule variational integrator with a backward
difference damping term (:func:`step_half`). Other orders keep the whole
history (:func:`step_general`), O(k) work per step with a cached inner sum.

The companion ``y`` curve is always produced by reversal, ``y_k = x_{N-k}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import MechanicalSystem, residuals_x_all
from .frac_ops import CoeffTable, GridSequence, double_frac_minus, gl_coefficients, self_convolution

__all__ = [
    "NewtonSettings",
    "InitialValue",
    "BoundaryValue",
    "IntegratorConfig",
    "Trajectory",
    "SolverFailure",
    "StepFailure",
    "init_first_step",
    "step_half",
    "step_general",
    "integrate",
    "march",
    "reverse_trajectory",
    "solve_bvp",
]

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps
JACOBIANS = ("analytic", "finite_difference")


@dataclass(frozen=True)
class NewtonSettings:
    """Newton iteration controls. ``tol`` bounds both the residual max-norm
    (force units) and the last update's max-norm (position units)."""

    tol: float = 1e-10
    max_iter: int = 25
    jacobian: str = "analytic"
    max_halvings: int = 8

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("newton.tol must be positive")
        if self.max_iter < 1:
            raise ValueError("newton.max_iter must be at least 1")
        if self.jacobian not in JACOBIANS:
            raise ValueError(f"newton.jacobian must be one of {JACOBIANS}")


@dataclass(frozen=True)
class InitialValue:
    q0: np.ndarray
    v0: np.ndarray


@dataclass(frozen=True)
class BoundaryValue:
    x_a: np.ndarray
    x_b: np.ndarray


@dataclass(frozen=True)
class IntegratorConfig:
    alpha: float
    h: float
    steps: int
    mode: InitialValue | BoundaryValue
    newton: NewtonSettings = field(default_factory=NewtonSettings)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0,1]")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.steps < 2:
            raise ValueError("steps must be at least 2")


class SolverFailure(RuntimeError):
    """Newton did not converge or hit a singular Jacobian."""

    def __init__(self, message: str, iterate=None, residual_norm: float = float("nan"), residual_profile=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual_norm = residual_norm
        self.residual_profile = residual_profile


class StepFailure(SolverFailure):
    """A single marching step failed."""

    def __init__(self, message: str, step: int = -1, **kw):
        super().__init__(message, **kw)
        self.step = step


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Points ``x_0..x_N`` on ``t_k = t0 + k h``.

    ``iterations[k-1]`` / ``residual_norms[k-1]`` describe the solve for
    ``x_{k+1}``. A failed run keeps the points computed so far and a
    ``failure`` record.
    """

    h: float
    xs: np.ndarray
    alpha: float
    t0: float = 0.0
    system_hash: str = ""
    iterations: tuple = ()
    residual_norms: tuple = ()
    failure: dict | None = None

    def __post_init__(self):
        xs = np.array(self.xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        xs.setflags(write=False)
        object.__setattr__(self, "xs", xs)

    @property
    def N(self) -> int:
        return len(self.xs) - 1

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(len(self.xs))

    @property
    def complete(self) -> bool:
        return self.failure is None

    def newton_stats(self) -> dict:
        it = np.asarray(self.iterations, dtype=int)
        return {
            "solves": int(it.size),
            "total_iterations": int(it.sum()) if it.size else 0,
            "max_iterations": int(it.max()) if it.size else 0,
            "mean_iterations": float(it.mean()) if it.size else 0.0,
        }


# ---------------------------------------------------------------------------
# Newton machinery


def _fd_jacobian(F: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    n = len(x)
    J = np.empty((n, n))
    for j in range(n):
        step = 1e-7 * (1.0 + abs(x[j]))
        e = np.zeros(n)
        e[j] = step
        J[:, j] = (F(x + e) - F(x - e)) / (2 * step)
    return J


def _newton(F, J, x0: np.ndarray, settings: NewtonSettings, floor: float, what: str):
    """Damped Newton iteration; returns ``(x, iterations, residual_norm)``."""
    tol_res = max(settings.tol, floor)
    x = np.array(x0, dtype=float)
    r = F(x)
    rn = float(np.max(np.abs(r)))
    if rn <= tol_res:
        return x, 0, rn
    for it in range(1, settings.max_iter + 1):
        try:
            dx = np.linalg.solve(J(x), -r)
        except np.linalg.LinAlgError as exc:
            raise SolverFailure(f"{what}: singular Jacobian ({exc})", iterate=x, residual_norm=rn) from exc
        if not np.all(np.isfinite(dx)):
            raise SolverFailure(f"{what}: non-finite Newton update", iterate=x, residual_norm=rn)
        lam = 1.0
        for halving in range(settings.max_halvings + 1):
            x_new = x + lam * dx
            r_new = F(x_new)
            rn_new = float(np.max(np.abs(r_new)))
            if rn_new <= rn or halving == settings.max_halvings:
                break
            lam *= 0.5
        step = float(np.max(np.abs(lam * dx)))
        x, r, rn = x_new, r_new, rn_new
        step_tol = max(settings.tol, 8 * EPS * float(np.max(np.abs(x))))
        if rn <= tol_res and step <= step_tol:
            return x, it, rn
    raise SolverFailure(
        f"{what}: no convergence in {settings.max_iter} iterations (residual {rn:.3e})",
        iterate=x,
        residual_norm=rn,
    )


def _roundoff_floor(sys: MechanicalSystem, scale_x: float, h: float, damping_scale: float) -> float:
    """Residual level below which rounding of the difference quotients dominates."""
    inertia = 4.0 * float(np.max(sys.mass)) * scale_x / h**2
    return 16 * EPS * (inertia + damping_scale + 1.0)


def _use_fd_jacobian(sys: MechanicalSystem, settings: NewtonSettings) -> bool:
    return settings.jacobian == "finite_difference" or sys.potential.kind == "custom"


def _solve_step(sys, x_prev, x_curr, h, damping_term, newton: NewtonSettings, step: int = -1):
    x_prev = np.atleast_1d(np.asarray(x_prev, dtype=float))
    x_curr = np.atleast_1d(np.asarray(x_curr, dtype=float))
    M = sys.mass
    grad = sys.potential.gradient
    const = M * (x_prev - 2.0 * x_curr) / h**2 + damping_term + 0.5 * grad(0.5 * (x_curr + x_prev))

    def F(x_next):
        return M * x_next / h**2 + const + 0.5 * grad(0.5 * (x_next + x_curr))

    if _use_fd_jacobian(sys, newton):
        J = lambda x_next: _fd_jacobian(F, x_next)  # noqa: E731
    else:
        J = lambda x_next: np.diag(M / h**2) + 0.25 * sys.potential.hessian(0.5 * (x_next + x_curr))  # noqa: E731

    guess = 2.0 * x_curr - x_prev
    scale = float(max(np.max(np.abs(x_curr)), np.max(np.abs(x_prev)), np.max(np.abs(guess))))
    floor = _roundoff_floor(sys, scale, h, float(np.max(np.abs(damping_term))))
    try:
        return _newton(F, J, guess, newton, floor, f"step {step}")
    except SolverFailure as exc:
        raise StepFailure(str(exc), step=step, iterate=exc.iterate, residual_norm=exc.residual_norm) from exc


# ---------------------------------------------------------------------------
# public steppers


def init_first_step(sys: MechanicalSystem, q0, v0, h: float):
    """``x_0 = q0`` and the second-order Taylor start ``x_1 = q0 + h v0 + h^2/2 a0``."""
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    if not (np.all(np.isfinite(q0)) and np.all(np.isfinite(v0))):
        raise ValueError("initial data must be finite")
    a0 = sys.acceleration(q0, v0)
    return q0.copy(), q0 + h * v0 + 0.5 * h**2 * a0


def step_half(sys: MechanicalSystem, x_prev, x_curr, h: float, newton: NewtonSettings = NewtonSettings()) -> np.ndarray:
    """One step of the local order-1/2 scheme (damping ``R (x_k - x_{k-1}) / h``)."""
    x_prev = np.atleast_1d(np.asarray(x_prev, dtype=float))
    x_curr = np.atleast_1d(np.asarray(x_curr, dtype=float))
    damping = sys.damping * (x_curr - x_prev) / h
    return _solve_step(sys, x_prev, x_curr, h, damping, newton)[0]


def _history_damping(sys, coeffs: CoeffTable, h: float, double_sum) -> np.ndarray:
    return sys.damping * double_sum / h ** (2 * coeffs.alpha)


def step_general(
    sys: MechanicalSystem, history, coeffs: CoeffTable, h: float, newton: NewtonSettings = NewtonSettings()
) -> np.ndarray:
    """One step of the full-history scheme from ``history = x_0..x_k`` (k >= 1)."""
    xs = np.asarray(history, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    k = len(xs) - 1
    if k < 1:
        raise ValueError("history must contain at least x_0 and x_1")
    double = double_frac_minus(GridSequence(xs, h), coeffs, k)
    return _solve_step(sys, xs[k - 1], xs[k], h, _history_damping(sys, coeffs, h, double), newton)[0]


METHODS = ("auto", "local", "history")


def integrate(sys: MechanicalSystem, config: IntegratorConfig, method: str = "auto") -> Trajectory:
    """March from ``(q0, v0)`` through ``x_N``.

    ``method="auto"`` picks the local scheme for ``alpha == 1/2`` and the
    history scheme otherwise; ``"history"`` forces the full double sum even
    at ``alpha = 1/2``. A failed step ends the run early with a ``failure``
    record instead of raising.
    """
    if not isinstance(config.mode, InitialValue):
        raise ValueError("integrate needs an initial_value configuration; use solve_bvp for boundary values")
    x0, x1 = init_first_step(sys, config.mode.q0, config.mode.v0, config.h)
    return march(sys, x0, x1, config.alpha, config.h, config.steps, config.newton, method)


def march(
    sys: MechanicalSystem,
    x0,
    x1,
    alpha: float,
    h: float,
    steps: int,
    newton: NewtonSettings = NewtonSettings(),
    method: str = "auto",
) -> Trajectory:
    """Solve the x-equations at ``k = 1..steps-1`` starting from two given points."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    local = alpha == 0.5 if method == "auto" else method == "local"
    if local and alpha != 0.5:
        raise ValueError("the local scheme is only valid for alpha = 1/2")
    N = steps
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    if x0.shape != (sys.dim,) or x1.shape != (sys.dim,):
        raise ValueError(f"starting points must have dimension {sys.dim}")
    xs = np.empty((N + 1, sys.dim))
    xs[0], xs[1] = x0, x1
    coeffs = gl_coefficients(alpha, N)
    c = coeffs.coeffs
    inner = np.empty_like(xs)
    if not local:
        inner[0] = c[0] * xs[0]
        inner[1] = c[:2] @ xs[1::-1]

    iterations, norms = [], []
    failure = None
    last = N
    for k in range(1, N):
        if local:
            damping = sys.damping * (xs[k] - xs[k - 1]) / h
        else:
            # inner[j] = sum_p c_p x_{j-p}; the double sum pairs c_n with inner[k-n]
            damping = _history_damping(sys, coeffs, h, c[: k + 1] @ inner[k::-1])
        try:
            x_next, it, rn = _solve_step(sys, xs[k - 1], xs[k], h, damping, newton, step=k)
        except StepFailure as exc:
            log.warning("integration stopped: %s", exc)
            failure = {"step": k, "message": str(exc), "residual_norm": exc.residual_norm}
            last = k
            break
        xs[k + 1] = x_next
        iterations.append(it)
        norms.append(rn)
        if not local:
            inner[k + 1] = c[: k + 2] @ xs[k + 1 :: -1]

    return Trajectory(
        h=h,
        xs=xs[: last + 1],
        alpha=alpha,
        system_hash=sys.fingerprint(),
        iterations=tuple(iterations),
        residual_norms=tuple(norms),
        failure=failure,
    )


def reverse_trajectory(traj: Trajectory) -> Trajectory:
    """The companion curve ``y_k = x_{N-k}``."""
    return Trajectory(
        h=traj.h,
        xs=traj.xs[::-1].copy(),
        alpha=traj.alpha,
        t0=traj.t0,
        system_hash=traj.system_hash,
        iterations=traj.iterations,
        residual_norms=traj.residual_norms,
        failure=traj.failure,
    )


# ---------------------------------------------------------------------------
# boundary-value mode


def _bvp_jacobian(sys: MechanicalSystem, xs: np.ndarray, h: float, gamma: np.ndarray, alpha: float) -> np.ndarray:
    N, d = xs.shape[0] - 1, xs.shape[1]
    n = N - 1
    J = np.zeros((n * d, n * d))
    M = np.diag(sys.mass) / h**2
    Rw = sys.damping / h ** (2 * alpha)
    H = [0.25 * sys.potential.hessian(0.5 * (xs[j] + xs[j + 1])) for j in range(N)]
    for k in range(1, N):
        r = slice((k - 1) * d, k * d)
        # inertia and midpoint gradients: H[k] couples k,k+1; H[k-1] couples k-1,k
        J[r, r] += -2.0 * M + H[k] + H[k - 1]
        if k + 1 <= N - 1:
            J[r, slice(k * d, (k + 1) * d)] += M + H[k]
        if k - 1 >= 1:
            J[r, slice((k - 2) * d, (k - 1) * d)] += M + H[k - 1]
        # history damping: d r_k / d x_j = R h^-2a gamma_{k-j}, 1 <= j <= k
        for j in range(1, k + 1):
            J[r, slice((j - 1) * d, j * d)] += np.diag(Rw * gamma[k - j])
    return J


def solve_bvp(sys: MechanicalSystem, config: IntegratorConfig):
    """Solve the stacked x-equations with ``x_0 = x_a``, ``x_N = x_b``.

    Global Newton from the linear interpolant. Returns ``(x, y)`` with
    ``y`` the reversal of ``x`` (so ``y_0 = x_b``, ``y_N = x_a``).
    Raises :class:`SolverFailure` with the final residual profile on failure.
    """
    if not isinstance(config.mode, BoundaryValue):
        raise ValueError("solve_bvp needs a boundary_value configuration")
    h, N, alpha = config.h, config.steps, config.alpha
    xa = np.atleast_1d(np.asarray(config.mode.x_a, dtype=float))
    xb = np.atleast_1d(np.asarray(config.mode.x_b, dtype=float))
    d = sys.dim
    if xa.shape != (d,) or xb.shape != (d,):
        raise ValueError(f"boundary values must have dimension {d}")
    coeffs = gl_coefficients(alpha, N)
    gamma = self_convolution(coeffs, N + 1)

    s = np.linspace(0.0, 1.0, N + 1)[:, None]
    xs0 = (1 - s) * xa + s * xb

    def full(X):
        xs = np.empty((N + 1, d))
        xs[0], xs[N] = xa, xb
        xs[1:N] = X.reshape(N - 1, d)
        return xs

    def F(X):
        return residuals_x_all(sys, full(X), h, coeffs).ravel()

    if _use_fd_jacobian(sys, config.newton):
        J = lambda X: _fd_jacobian(F, X)  # noqa: E731
    else:
        J = lambda X: _bvp_jacobian(sys, full(X), h, gamma, alpha)  # noqa: E731

    scale = float(max(np.max(np.abs(xa)), np.max(np.abs(xb)), 1.0))
    damp_scale = float(np.max(sys.damping)) * h ** (-2 * alpha) * float(np.sum(np.abs(gamma))) * scale
    floor = _roundoff_floor(sys, scale, h, damp_scale) * np.sqrt(N)
    try:
        X, it, rn = _newton(F, J, xs0[1:N].ravel(), config.newton, floor, "boundary-value solve")
    except SolverFailure as exc:
        profile = None
        if exc.iterate is not None:
            profile = np.max(np.abs(F(exc.iterate).reshape(N - 1, d)), axis=1)
        raise SolverFailure(
            str(exc), iterate=exc.iterate, residual_norm=exc.residual_norm, residual_profile=profile
        ) from exc
    x = Trajectory(
        h=h,
        xs=full(X),
        alpha=alpha,
        system_hash=sys.fingerprint(),
        iterations=(it,),
        residual_norms=(rn,),
    )
    return x, reverse_trajectory(x)
