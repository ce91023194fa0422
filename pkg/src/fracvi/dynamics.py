"""Mechanical systems on the doubled (x, y) phase space and their discrete
restricted Euler-Lagrange residuals.

The discrete Lagrangian evaluated on interval ``k`` is

    L(k) = 1/2 (D-x_k)' M (D-x_k) + 1/2 (D+y_k)' M (D+y_k)
           - U(S x_k) - U(S y_k) - (D-^a x_k)' R (D+^a y_k)

and the residuals returned by :func:`residual_x` / :func:`residual_y` are

    r_x(k) = M (x_{k+1} - 2 x_k + x_{k-1}) / h^2 + R h^(-2a) sum_n c_n sum_p c_p x_{k-n-p}
             + 1/2 grad U((x_{k+1} + x_k)/2) + 1/2 grad U((x_k + x_{k-1})/2)

and its mirror image for ``y``. They equal minus the left-hand sides of the
general equations produced by :func:`residual_general`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .frac_ops import (
    CoeffTable,
    GridSequence,
    backward_diff,
    double_frac_minus,
    double_frac_minus_all,
    double_frac_plus,
    double_frac_plus_all,
    forward_diff_neg,
    frac_diff_minus,
    frac_diff_minus_all,
    frac_diff_plus,
    frac_diff_plus_all,
    gl_coefficients,
    shift_average,
)

__all__ = [
    "Potential",
    "MechanicalSystem",
    "DiscretePath",
    "ResidualVector",
    "LagrangianDerivatives",
    "lagrangian_eval",
    "lagrangian_series",
    "action_sum",
    "residual_x",
    "residual_y",
    "residuals",
    "residuals_x_all",
    "mechanical_derivatives",
    "residual_general",
    "residual_general_all",
    "action_directional_derivative",
    "action_gradient_check",
    "transform_system",
    "change_of_variables_check",
]

POTENTIAL_KINDS = ("harmonic", "pendulum", "double_well", "polynomial", "custom")


def _as_vector(q) -> np.ndarray:
    return np.atleast_1d(np.asarray(q, dtype=float))


@dataclass(frozen=True, eq=False)
class Potential:
    """Potential energy ``U`` with analytic gradient and (diagonal) Hessian.

    Built-in kinds are separable, ``U(q) = sum_i u_i(q_i)``:

    * ``harmonic``: ``u_i = k_i q_i^2 / 2`` with stiffness ``k_i``
    * ``pendulum``: ``u_i = c_i (1 - cos q_i)``
    * ``double_well``: ``u_i = a_i q_i^4 / 4 - b_i q_i^2 / 2``
    * ``polynomial``: ``u_i = sum_j p_ij q_i^j``

    ``custom`` wraps user callables; a missing gradient falls back to
    central differences with step ``1e-6 (1 + |q|)``.
    """

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    value_fn: Callable[[np.ndarray], float] | None = None
    grad_fn: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {POTENTIAL_KINDS}")
        if self.kind == "custom" and self.value_fn is None:
            raise ValueError("custom potential needs a value callable")

    # constructors

    @classmethod
    def harmonic(cls, stiffness) -> "Potential":
        return cls("harmonic", {"stiffness": _as_vector(stiffness)})

    @classmethod
    def zero(cls, dim: int) -> "Potential":
        return cls.harmonic(np.zeros(dim))

    @classmethod
    def pendulum(cls, coefficient) -> "Potential":
        return cls("pendulum", {"coefficient": _as_vector(coefficient)})

    @classmethod
    def double_well(cls, a, b) -> "Potential":
        a, b = _as_vector(a), _as_vector(b)
        if a.shape != b.shape:
            raise ValueError("double_well parameters a and b must have one entry per axis")
        return cls("double_well", {"a": a, "b": b})

    @classmethod
    def polynomial(cls, coefficients) -> "Potential":
        coeffs = tuple(np.asarray(c, dtype=float) for c in coefficients)
        return cls("polynomial", {"coefficients": coeffs})

    @classmethod
    def custom(cls, value, gradient=None, dim: int | None = None) -> "Potential":
        return cls("custom", {"dim": dim}, value_fn=value, grad_fn=gradient)

    @property
    def dim(self) -> int | None:
        p = self.params
        if self.kind == "harmonic":
            return len(p["stiffness"])
        if self.kind == "pendulum":
            return len(p["coefficient"])
        if self.kind == "double_well":
            return len(p["a"])
        if self.kind == "polynomial":
            return len(p["coefficients"])
        return p.get("dim")

    @property
    def has_analytic_gradient(self) -> bool:
        return self.kind != "custom" or self.grad_fn is not None

    def value(self, q) -> float:
        q = _as_vector(q)
        p = self.params
        if self.kind == "harmonic":
            return float(0.5 * np.dot(p["stiffness"], q * q))
        if self.kind == "pendulum":
            return float(np.dot(p["coefficient"], 1.0 - np.cos(q)))
        if self.kind == "double_well":
            return float(np.sum(p["a"] * q**4 / 4.0 - p["b"] * q**2 / 2.0))
        if self.kind == "polynomial":
            return float(sum(np.polynomial.polynomial.polyval(qi, c) for qi, c in zip(q, p["coefficients"])))
        return float(self.value_fn(q))

    def gradient(self, q) -> np.ndarray:
        q = _as_vector(q)
        p = self.params
        if self.kind == "harmonic":
            return p["stiffness"] * q
        if self.kind == "pendulum":
            return p["coefficient"] * np.sin(q)
        if self.kind == "double_well":
            return p["a"] * q**3 - p["b"] * q
        if self.kind == "polynomial":
            return np.array(
                [np.polynomial.polynomial.polyval(qi, np.polynomial.polynomial.polyder(c)) if len(c) > 1 else 0.0
                 for qi, c in zip(q, p["coefficients"])]
            )
        if self.grad_fn is not None:
            return _as_vector(self.grad_fn(q))
        return _fd_gradient(self.value_fn, q)

    def hessian(self, q) -> np.ndarray:
        q = _as_vector(q)
        p = self.params
        if self.kind == "harmonic":
            return np.diag(p["stiffness"].astype(float))
        if self.kind == "pendulum":
            return np.diag(p["coefficient"] * np.cos(q))
        if self.kind == "double_well":
            return np.diag(3.0 * p["a"] * q**2 - p["b"])
        if self.kind == "polynomial":
            P = np.polynomial.polynomial
            return np.diag(
                [P.polyval(qi, P.polyder(c, 2)) if len(c) > 2 else 0.0 for qi, c in zip(q, p["coefficients"])]
            )
        # custom: difference the gradient
        d = len(q)
        H = np.empty((d, d))
        for j in range(d):
            step = 1e-6 * (1.0 + abs(q[j]))
            e = np.zeros(d)
            e[j] = step
            H[:, j] = (self.gradient(q + e) - self.gradient(q - e)) / (2 * step)
        return 0.5 * (H + H.T)

    def check_gradient(self, dim: int, rng: np.random.Generator, probes: int = 5) -> float:
        """Largest relative mismatch between ``gradient`` and central differences of ``value``."""
        worst = 0.0
        for _ in range(probes):
            q = rng.uniform(-1.5, 1.5, dim)
            g = self.gradient(q)
            g_fd = _fd_gradient(self.value, q)
            scale = max(np.max(np.abs(g)), 1.0)
            worst = max(worst, float(np.max(np.abs(g - g_fd)) / scale))
        return worst

    def describe(self) -> dict:
        out = {"kind": self.kind}
        for key, val in self.params.items():
            if isinstance(val, tuple):
                out[key] = [np.asarray(v).tolist() for v in val]
            elif isinstance(val, np.ndarray):
                out[key] = val.tolist()
            else:
                out[key] = val
        return out


def _fd_gradient(fn: Callable, q: np.ndarray) -> np.ndarray:
    g = np.empty(len(q))
    for j in range(len(q)):
        step = 1e-6 * (1.0 + abs(q[j]))
        e = np.zeros(len(q))
        e[j] = step
        g[j] = (fn(q + e) - fn(q - e)) / (2 * step)
    return g


@dataclass(frozen=True, eq=False)
class MechanicalSystem:
    """Diagonal mass ``M``, diagonal damping ``R`` and potential ``U``."""

    mass: np.ndarray
    damping: np.ndarray
    potential: Potential

    def __post_init__(self):
        m = _as_vector(self.mass).copy()
        r = _as_vector(self.damping).copy()
        if m.shape != r.shape:
            raise ValueError(f"mass and damping must have the same length, got {len(m)} and {len(r)}")
        if np.any(~(m > 0)):
            raise ValueError("all masses must be positive")
        if np.any(~(r >= 0)):
            raise ValueError("all damping coefficients must be non-negative")
        pd = self.potential.dim
        if pd is not None and pd != len(m):
            raise ValueError(f"potential has dimension {pd}, system has {len(m)}")
        m.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "mass", m)
        object.__setattr__(self, "damping", r)

    @classmethod
    def harmonic(cls, mass, damping, omega) -> "MechanicalSystem":
        """Oscillator ``M q'' + R q' + M omega^2 q = 0`` (per axis)."""
        m = _as_vector(mass)
        w = _as_vector(omega) * np.ones_like(m)
        return cls(m, _as_vector(damping) * np.ones_like(m), Potential.harmonic(m * w**2))

    @classmethod
    def free(cls, mass, damping=0.0) -> "MechanicalSystem":
        m = _as_vector(mass)
        return cls(m, _as_vector(damping) * np.ones_like(m), Potential.zero(len(m)))

    @property
    def dim(self) -> int:
        return len(self.mass)

    @property
    def omega(self) -> np.ndarray | None:
        """Natural frequencies when the potential is harmonic."""
        if self.potential.kind != "harmonic":
            return None
        return np.sqrt(self.potential.params["stiffness"] / self.mass)

    def energy(self, q, v) -> float:
        v = _as_vector(v)
        return float(0.5 * np.dot(self.mass, v * v) + self.potential.value(q))

    def acceleration(self, q, v) -> np.ndarray:
        return (-self.damping * _as_vector(v) - self.potential.gradient(q)) / self.mass

    def fingerprint(self) -> str:
        blob = repr((self.mass.tolist(), self.damping.tolist(), self.potential.describe()))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _as_path_array(v) -> np.ndarray:
    a = np.array(v, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError("path arrays must have shape (N+1,) or (N+1, d)")
    return a


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """Pair of discrete curves ``x_0..x_N`` and ``y_0..y_N`` with step ``h``."""

    h: float
    xs: np.ndarray
    ys: np.ndarray
    alpha: float

    def __post_init__(self):
        xs = _as_path_array(self.xs)
        ys = _as_path_array(self.ys)
        if xs.shape != ys.shape:
            raise ValueError(f"xs and ys must have equal shape, got {xs.shape} and {ys.shape}")
        if len(xs) < 2:
            raise ValueError("a discrete path needs N >= 1")
        if not self.h > 0:
            raise ValueError("h must be positive")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "alpha", float(self.alpha))

    @classmethod
    def reversed_pair(cls, h: float, xs, alpha: float) -> "DiscretePath":
        """Path with ``y_k = x_{N-k}``."""
        xs = _as_path_array(xs)
        return cls(h, xs, xs[::-1], alpha)

    @property
    def N(self) -> int:
        return len(self.xs) - 1

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    @property
    def coeffs(self) -> CoeffTable:
        return gl_coefficients(self.alpha, self.N)

    def perturbed(self, direction, eps: float) -> "DiscretePath":
        """Restricted variation: the same perturbation is added to both curves."""
        d = _as_path_array(direction)
        return DiscretePath(self.h, self.xs + eps * d, self.ys + eps * d, self.alpha)


@dataclass(frozen=True)
class ResidualVector:
    """Residuals at interior nodes ``k = 1..N-1`` (row ``k-1``)."""

    r_x: np.ndarray
    r_y: np.ndarray

    def max_norm(self) -> float:
        if self.r_x.size == 0:
            return 0.0
        return float(max(np.max(np.abs(self.r_x)), np.max(np.abs(self.r_y))))


def _check_system_path(sys: MechanicalSystem, path: DiscretePath) -> None:
    if sys.dim != path.dim:
        raise ValueError(f"system dimension {sys.dim} does not match path dimension {path.dim}")


# ---------------------------------------------------------------------------
# Lagrangian and action


def lagrangian_eval(sys: MechanicalSystem, path: DiscretePath, k: int) -> float:
    """Discrete Lagrangian on interval ``k`` (0 <= k <= N-1), term by term."""
    _check_system_path(sys, path)
    if not 0 <= k <= path.N - 1:
        raise IndexError(f"k={k} outside 0..{path.N - 1}")
    x = GridSequence(path.xs, path.h)
    y = GridSequence(path.ys, path.h)
    c = path.coeffs
    vx = backward_diff(x, k)
    vy = forward_diff_neg(y, k)
    fx = frac_diff_minus(x, c, k)
    fy = frac_diff_plus(y, c, k)
    M, R = sys.mass, sys.damping
    kinetic = 0.5 * np.dot(vx, M * vx) + 0.5 * np.dot(vy, M * vy)
    potential = sys.potential.value(shift_average(x, k)) + sys.potential.value(shift_average(y, k))
    return float(kinetic - potential - np.dot(fx, R * fy))


def _slots(path: DiscretePath, closure: bool = False):
    """The six Lagrangian arguments at every interval ``k = 0..N-1``.

    With ``closure=True`` a row for ``k = N`` is appended; the slots that
    reach past the grid are closed with ``S x_N = x_N``, ``S y_N = y_N`` and
    ``D+ y_N = 0`` (mirroring the ``D- x_0 = 0`` convention).
    """
    x, y, h = path.xs, path.ys, path.h
    N = path.N
    c = path.coeffs
    sx = 0.5 * (x[:-1] + x[1:])
    sy = 0.5 * (y[:-1] + y[1:])
    vx = np.zeros_like(x)
    vx[1:] = (x[1:] - x[:-1]) / h
    vy = -(y[1:] - y[:-1]) / h
    fx = frac_diff_minus_all(x, c, h)
    fy = frac_diff_plus_all(y, c, h)
    if not closure:
        return sx, sy, vx[:N], vy, fx[:N], fy[:N]
    return (
        np.vstack([sx, x[N:]]),
        np.vstack([sy, y[N:]]),
        vx,
        np.vstack([vy, np.zeros((1, path.dim))]),
        fx,
        fy,
    )


def lagrangian_series(sys: MechanicalSystem, path: DiscretePath) -> np.ndarray:
    """``L(k)`` for ``k = 0..N-1`` (vectorised)."""
    _check_system_path(sys, path)
    sx, sy, vx, vy, fx, fy = _slots(path)
    M, R = sys.mass, sys.damping
    U = sys.potential.value
    kinetic = 0.5 * np.sum(M * vx * vx, axis=1) + 0.5 * np.sum(M * vy * vy, axis=1)
    pot = np.array([U(a) + U(b) for a, b in zip(sx, sy)])
    return kinetic - pot - np.sum(fx * R * fy, axis=1)


def action_sum(sys: MechanicalSystem, path: DiscretePath, closed: bool = False) -> float:
    """``h * sum_{k=0}^{N-1} L(k)``.

    ``closed=True`` adds the closing contribution of node ``N``: the terms
    of ``L(N)`` that depend on interior points, ``1/2 (D-x_N)' M (D-x_N)
    - (D-^a x_N)' R (D+^a y_N)``. The residuals of :func:`residuals` are the
    exact restricted gradient of this closed sum; the plain sum misses the
    final backward difference and the tail of the right fractional difference.
    """
    total = float(np.sum(lagrangian_series(sys, path)))
    if closed:
        x, y, h = path.xs, path.ys, path.h
        N = path.N
        c = path.coeffs
        vx = (x[N] - x[N - 1]) / h
        fx = frac_diff_minus(GridSequence(x, h), c, N)
        fy = frac_diff_plus(GridSequence(y, h), c, N)
        total += 0.5 * np.dot(vx, sys.mass * vx) - np.dot(fx, sys.damping * fy)
    return path.h * total


# ---------------------------------------------------------------------------
# residuals of the mechanical system


def residual_x(sys: MechanicalSystem, path: DiscretePath, k: int) -> np.ndarray:
    """x-equation residual at interior node ``k`` (1 <= k <= N-1)."""
    _check_system_path(sys, path)
    if not 1 <= k <= path.N - 1:
        raise IndexError(f"k={k} outside 1..{path.N - 1}")
    x, h = path.xs, path.h
    grad = sys.potential.gradient
    damping = double_frac_minus(GridSequence(x, h), path.coeffs, k)
    return (
        sys.mass * ((x[k + 1] + x[k - 1]) - 2.0 * x[k]) / h**2
        + sys.damping * damping / h ** (2 * path.alpha)
        + 0.5 * grad(0.5 * (x[k + 1] + x[k]))
        + 0.5 * grad(0.5 * (x[k] + x[k - 1]))
    )


def residual_y(sys: MechanicalSystem, path: DiscretePath, k: int) -> np.ndarray:
    """y-equation residual at interior node ``k``, the mirror of :func:`residual_x`."""
    _check_system_path(sys, path)
    if not 1 <= k <= path.N - 1:
        raise IndexError(f"k={k} outside 1..{path.N - 1}")
    y, h = path.ys, path.h
    grad = sys.potential.gradient
    damping = double_frac_plus(GridSequence(y, h), path.coeffs, k)
    return (
        sys.mass * ((y[k - 1] + y[k + 1]) - 2.0 * y[k]) / h**2
        + sys.damping * damping / h ** (2 * path.alpha)
        + 0.5 * grad(0.5 * (y[k - 1] + y[k]))
        + 0.5 * grad(0.5 * (y[k] + y[k + 1]))
    )


def _second_diff_terms(sys: MechanicalSystem, z: np.ndarray, h: float) -> np.ndarray:
    grad = sys.potential.gradient
    mids = 0.5 * (z[:-1] + z[1:])
    g = np.array([grad(m) for m in mids])
    # (z_{k+1} + z_{k-1}) summed first so the mirrored sequence reproduces it bit for bit
    return sys.mass * ((z[2:] + z[:-2]) - 2.0 * z[1:-1]) / h**2, 0.5 * g[:-1], 0.5 * g[1:]


def residuals_x_all(sys: MechanicalSystem, xs: np.ndarray, h: float, coeffs: CoeffTable) -> np.ndarray:
    """``r_x(k)`` for ``k = 1..N-1`` as an ``(N-1, d)`` array."""
    x = _as_path_array(xs)
    inertia, g_left, g_right = _second_diff_terms(sys, x, h)
    damping = double_frac_minus_all(x, coeffs)[1:-1]
    return inertia + sys.damping * damping / h ** (2 * coeffs.alpha) + g_right + g_left


def residuals(sys: MechanicalSystem, path: DiscretePath) -> ResidualVector:
    """Both residual families at every interior node."""
    _check_system_path(sys, path)
    c = path.coeffs
    r_x = residuals_x_all(sys, path.xs, path.h, c)
    y = path.ys
    # terms added in mirrored order so that y = reversed(x) gives r_y(k) == r_x(N-k) exactly
    inertia, g_left, g_right = _second_diff_terms(sys, y, path.h)
    damping = double_frac_plus_all(y, c)[1:-1]
    r_y = inertia + sys.damping * damping / path.h ** (2 * c.alpha) + g_left + g_right
    return ResidualVector(r_x, r_y)


# ---------------------------------------------------------------------------
# general Lagrangians


@dataclass(frozen=True, eq=False)
class LagrangianDerivatives:
    """Partial derivatives ``D_1 L .. D_6 L`` of a Lagrangian on six slots
    ``(S x, S y, D- x, D+ y, D-^a x, D+^a y)``; each callable takes the six
    slot vectors and returns a vector of length ``d``.
    """

    d1: Callable[..., np.ndarray]
    d2: Callable[..., np.ndarray]
    d3: Callable[..., np.ndarray]
    d4: Callable[..., np.ndarray]
    d5: Callable[..., np.ndarray]
    d6: Callable[..., np.ndarray]
    mass_form: np.ndarray | None = None
    damping_form: np.ndarray | None = None

    @classmethod
    def zero(cls, dim: int) -> "LagrangianDerivatives":
        z = lambda *s: np.zeros(dim)  # noqa: E731
        return cls(z, z, z, z, z, z)


def mechanical_derivatives(sys: MechanicalSystem) -> LagrangianDerivatives:
    """Derivatives of the mechanical Lagrangian with diagonal ``M`` and ``R``."""
    M, R = sys.mass, sys.damping
    grad = sys.potential.gradient
    return LagrangianDerivatives(
        d1=lambda sx, sy, vx, vy, fx, fy: -grad(sx),
        d2=lambda sx, sy, vx, vy, fx, fy: -grad(sy),
        d3=lambda sx, sy, vx, vy, fx, fy: M * vx,
        d4=lambda sx, sy, vx, vy, fx, fy: M * vy,
        d5=lambda sx, sy, vx, vy, fx, fy: -R * fy,
        d6=lambda sx, sy, vx, vy, fx, fy: -R * fx,
        mass_form=np.diag(M),
        damping_form=np.diag(R),
    )


CLOSURES = ("slot", "zero")


def residual_general_all(derivs: LagrangianDerivatives, path: DiscretePath, closure: str = "slot"):
    """Left-hand sides of the restricted discrete equations at ``k = 1..N-1``.

    x-equation: 1/2 (D1L(k) + D1L(k-1)) + D+ D3L(k) + D-^a D6L(k)
    y-equation: 1/2 (D2L(k) + D2L(k-1)) + D- D4L(k) + D+^a D5L(k)

    ``D+ D3L(N-1)`` and ``D+^a D5L(k)`` reach the sequence value at node
    ``N``. ``closure="slot"`` evaluates it from the closed slot row (this
    reproduces the mechanical residuals exactly); ``closure="zero"`` sets
    ``D3L(N) = D5L(N) = 0``, which makes the equations the exact restricted
    gradient of the plain action sum.
    """
    if closure not in CLOSURES:
        raise ValueError(f"closure must be one of {CLOSURES}")
    N, h, d = path.N, path.h, path.dim
    slots = _slots(path, closure=True)
    D = []
    for fn in (derivs.d1, derivs.d2, derivs.d3, derivs.d4, derivs.d5, derivs.d6):
        vals = np.array([np.asarray(fn(*(s[k] for s in slots)), dtype=float).reshape(-1) for k in range(N + 1)])
        if vals.shape != (N + 1, d):
            raise ValueError(f"derivative callback returned shape {vals.shape[1:]}, expected ({d},)")
        D.append(vals)
    D1, D2, D3, D4, D5, D6 = D
    if closure == "zero":
        D3[N] = 0.0
        D5[N] = 0.0
    c = path.coeffs
    ks = slice(1, N)
    eq_x = 0.5 * (D1[1:N] + D1[0 : N - 1]) - (D3[2 : N + 1] - D3[1:N]) / h + frac_diff_minus_all(D6, c, h)[ks]
    eq_y = 0.5 * (D2[1:N] + D2[0 : N - 1]) + (D4[1:N] - D4[0 : N - 1]) / h + frac_diff_plus_all(D5, c, h)[ks]
    return eq_x, eq_y


def residual_general(derivs: LagrangianDerivatives, path: DiscretePath, k: int, closure: str = "slot"):
    """Both left-hand sides at a single node ``k`` (1 <= k <= N-1)."""
    if not 1 <= k <= path.N - 1:
        raise IndexError(f"k={k} outside 1..{path.N - 1}")
    eq_x, eq_y = residual_general_all(derivs, path, closure)
    return eq_x[k - 1], eq_y[k - 1]


# ---------------------------------------------------------------------------
# variational consistency


def action_directional_derivative(
    sys: MechanicalSystem, path: DiscretePath, direction, eps: float = 1e-6, closed: bool = False
) -> float:
    """Central difference of the action along the restricted variation ``(delta, delta)``."""
    plus = action_sum(sys, path.perturbed(direction, eps), closed)
    minus = action_sum(sys, path.perturbed(direction, -eps), closed)
    return (plus - minus) / (2 * eps)


def predicted_directional_derivative(sys: MechanicalSystem, path: DiscretePath, direction) -> float:
    """``-h sum_k (r_x(k) + r_y(k)) . delta_k`` (the residuals carry the opposite sign of the gradient)."""
    d = _as_path_array(direction)
    if not (np.all(d[0] == 0) and np.all(d[-1] == 0)):
        raise ValueError("variations must vanish at both end nodes")
    res = residuals(sys, path)
    return float(-path.h * np.sum((res.r_x + res.r_y) * d[1:-1]))


def action_gradient_check(
    sys: MechanicalSystem, path: DiscretePath, direction, eps: float = 1e-6, closed: bool = False
) -> float:
    """Relative discrepancy between the finite-difference action derivative and
    the residual-based prediction.
    """
    fd = action_directional_derivative(sys, path, direction, eps, closed)
    pred = predicted_directional_derivative(sys, path, direction)
    scale = max(abs(fd), abs(pred))
    if scale == 0.0:
        return 0.0
    return abs(fd - pred) / scale


# ---------------------------------------------------------------------------
# linear change of variables


def transform_system(sys: MechanicalSystem, Lam) -> LagrangianDerivatives:
    """Derivative callbacks of the pulled-back Lagrangian ``z -> L(Lam z)``.

    Mass form ``Lam' M Lam``, damping form ``Lam' R Lam`` and potential
    ``U(Lam z)``. Residuals in ``z`` equal ``Lam'`` times the residuals in
    ``x = Lam z``.
    """
    Lam = np.asarray(Lam, dtype=float)
    d = sys.dim
    if Lam.shape != (d, d):
        raise ValueError(f"Lam must be {d}x{d}, got {Lam.shape}")
    cond = np.linalg.cond(Lam)
    if not np.isfinite(cond) or cond >= 1e8:
        raise ValueError(f"Lam is singular or ill-conditioned (cond={cond:.3g})")
    LT = Lam.T
    Mz = LT @ np.diag(sys.mass) @ Lam
    Rz = LT @ np.diag(sys.damping) @ Lam
    grad = sys.potential.gradient
    return LagrangianDerivatives(
        d1=lambda sx, sy, vx, vy, fx, fy: -LT @ grad(Lam @ sx),
        d2=lambda sx, sy, vx, vy, fx, fy: -LT @ grad(Lam @ sy),
        d3=lambda sx, sy, vx, vy, fx, fy: Mz @ vx,
        d4=lambda sx, sy, vx, vy, fx, fy: Mz @ vy,
        d5=lambda sx, sy, vx, vy, fx, fy: -Rz @ fy,
        d6=lambda sx, sy, vx, vy, fx, fy: -Rz @ fx,
        mass_form=Mz,
        damping_form=Rz,
    )


def change_of_variables_check(sys: MechanicalSystem, Lam, path_z: DiscretePath) -> float:
    """Relative mismatch between residuals of the transformed system on ``z`` and
    ``Lam'`` times the original residuals on ``x = Lam z`` (both equations).
    """
    Lam = np.asarray(Lam, dtype=float)
    path_x = DiscretePath(path_z.h, path_z.xs @ Lam.T, path_z.ys @ Lam.T, path_z.alpha)
    zx, zy = residual_general_all(transform_system(sys, Lam), path_z)
    ox, oy = residual_general_all(mechanical_derivatives(sys), path_x)
    expected = np.concatenate([ox @ Lam, oy @ Lam])
    got = np.concatenate([zx, zy])
    scale = float(np.max(np.abs(expected)))
    if scale == 0.0:
        return float(np.max(np.abs(got)))
    return float(np.max(np.abs(got - expected))) / scale
