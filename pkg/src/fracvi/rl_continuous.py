"""Riemann-Liouville derivatives of sampled functions.

The derivative is computed as the first derivative of the fractional
integral of order ``1 - alpha``. The fractional integral uses the
product-trapezoidal rule: ``f`` is replaced by its piecewise-linear
interpolant and the moments of the weakly singular kernel are integrated
exactly. The outer derivative is a two-cell central difference (second-order
one-sided at the grid ends).

The constant part ``f(a)`` (or ``f(b)`` for the right-sided operator) is
split off and differentiated in closed form,

    D_-^alpha [1](t) = (t - a)^-alpha / Gamma(1 - alpha),

so the quadrature only ever sees a function vanishing at the singular end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "SampledFunction",
    "gamma",
    "power_rule",
    "fractional_integral_grid",
    "rl_minus",
    "rl_plus",
    "rl_minus_grid",
    "rl_plus_grid",
    "check_half_composition",
    "check_frac_ibp_continuous",
]

# Distance (in cells) from the singular endpoint inside which no accuracy is promised.
BOUNDARY_CELLS = 10


def gamma(x: float) -> float:
    return math.gamma(x)


def _rgamma(x: float) -> float:
    """1 / Gamma(x), zero at the poles."""
    if x <= 0 and float(x).is_integer():
        return 0.0
    return 1.0 / math.gamma(x)


def power_rule(p: float, alpha: float, s):
    """Closed form of ``D_-^alpha (t - a)^p`` evaluated at ``s = t - a``."""
    return math.gamma(p + 1) * _rgamma(p + 1 - alpha) * np.asarray(s, dtype=float) ** (p - alpha)


@dataclass(frozen=True)
class SampledFunction:
    """Samples ``f(t_j)`` on the uniform grid ``t_j = a + j (b - a) / M``."""

    a: float
    b: float
    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if len(s) < 3:
            raise ValueError("need M >= 2 grid cells")
        if not self.a < self.b:
            raise ValueError(f"need a < b, got [{self.a}, {self.b}]")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @classmethod
    def from_callable(cls, f: Callable, a: float, b: float, M: int) -> "SampledFunction":
        t = np.linspace(a, b, M + 1)
        return cls(a, b, np.asarray(f(t), dtype=float) * np.ones_like(t))

    @property
    def M(self) -> int:
        return len(self.samples) - 1

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.M

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.M + 1)

    def reflected(self) -> "SampledFunction":
        """``t -> f(a + b - t)`` on the same interval."""
        return SampledFunction(self.a, self.b, self.samples[::-1])

    def derivative_samples(self) -> np.ndarray:
        return np.gradient(self.samples, self.h, edge_order=2)


# ---------------------------------------------------------------------------
# fractional integrals


def fractional_integral_grid(values: np.ndarray, h: float, order: float) -> np.ndarray:
    """Left fractional integral of order ``order`` > 0 at every grid node.

    Product-trapezoidal weights (piecewise-linear interpolant, exact kernel
    moments); ``out[0] = 0``.
    """
    v = np.asarray(values, dtype=float)
    M = len(v) - 1
    b1 = order + 1.0
    m = np.arange(1, M + 1, dtype=float)
    w = np.empty(M + 1)
    w[0] = 1.0
    w[1:] = (m + 1) ** b1 - 2.0 * m**b1 + (m - 1) ** b1
    j = m
    first = (j - 1) ** b1 - (j - 1 - order) * j**order
    out = np.zeros(M + 1)
    out[1:] = np.convolve(v[1:], w)[:M] + first * v[0]
    return out * (h**order / math.gamma(order + 2.0))


def _cell_moments(u0: np.ndarray, u1: np.ndarray, order: float):
    """``int_{u0}^{u1} u^(order-1) du`` and ``int_{u0}^{u1} u^order du``."""
    m0 = (u1**order - u0**order) / order
    m1 = (u1 ** (order + 1) - u0 ** (order + 1)) / (order + 1)
    return m0, m1


def _integral_left_at(f: SampledFunction, vals: np.ndarray, t: float, order: float) -> float:
    """``1/Gamma(order) int_a^t (t - tau)^(order-1) f_lin(tau) dtau`` for any t in [a, b]."""
    if t <= f.a:
        return 0.0
    grid = f.grid
    n = min(int(np.searchsorted(grid, t, side="left")), f.M)
    left = grid[:n]
    right = np.minimum(grid[1 : n + 1], t)
    slope = (vals[1 : n + 1] - vals[:n]) / f.h
    # linear piece f_i + slope (tau - t_i); substitute u = t - tau
    u1 = t - left
    u0 = t - right
    m0, m1 = _cell_moments(u0, u1, order)
    total = np.sum((vals[:n] + slope * (t - left)) * m0 - slope * m1)
    return float(total) / math.gamma(order)


def _integral_right_at(f: SampledFunction, vals: np.ndarray, t: float, order: float) -> float:
    """``1/Gamma(order) int_t^b (tau - t)^(order-1) f_lin(tau) dtau``."""
    if t >= f.b:
        return 0.0
    grid = f.grid
    i0 = max(int(np.searchsorted(grid, t, side="right")) - 1, 0)
    left = np.maximum(grid[i0:-1], t)
    right = grid[i0 + 1 :]
    slope = (vals[i0 + 1 :] - vals[i0:-1]) / f.h
    # linear piece f_i + slope (tau - t_i); substitute u = tau - t
    u0 = left - t
    u1 = right - t
    m0, m1 = _cell_moments(u0, u1, order)
    base = vals[i0:-1] + slope * (t - grid[i0:-1])
    total = np.sum(base * m0 + slope * m1)
    return float(total) / math.gamma(order)


def _stencil_derivative(F: Callable[[float], float], t: float, h: float, lo: float, hi: float) -> float:
    if t + h <= hi + 1e-12 * h and t - h >= lo - 1e-12 * h:
        return (F(t + h) - F(t - h)) / (2 * h)
    if t + h > hi:
        return (3 * F(t) - 4 * F(t - h) + F(t - 2 * h)) / (2 * h)
    return (-3 * F(t) + 4 * F(t + h) - F(t + 2 * h)) / (2 * h)


def _interp(f: SampledFunction, t: float) -> float:
    return float(np.interp(t, f.grid, f.samples))


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0,1], got {alpha}")


def rl_minus(f: SampledFunction, alpha: float, t: float) -> float:
    """Left (retarded) Riemann-Liouville derivative of order ``alpha`` at ``t`` in (a, b]."""
    _check_alpha(alpha)
    if not f.a < t <= f.b:
        raise ValueError(f"t={t} must lie in (a, b] = ({f.a}, {f.b}]")
    if alpha == 0.0:
        return _interp(f, t)
    if alpha == 1.0:
        return _stencil_derivative(lambda s: _interp(f, s), t, f.h, f.a, f.b)
    f0 = f.samples[0]
    rest = f.samples - f0
    order = 1.0 - alpha
    d = _stencil_derivative(lambda s: _integral_left_at(f, rest, s, order), t, f.h, f.a - 2 * f.h, f.b)
    return d + f0 * (t - f.a) ** (-alpha) / math.gamma(1.0 - alpha)


def rl_plus(f: SampledFunction, alpha: float, t: float) -> float:
    """Right (advanced) Riemann-Liouville derivative of order ``alpha`` at ``t`` in [a, b)."""
    _check_alpha(alpha)
    if not f.a <= t < f.b:
        raise ValueError(f"t={t} must lie in [a, b) = [{f.a}, {f.b})")
    if alpha == 0.0:
        return _interp(f, t)
    if alpha == 1.0:
        return -_stencil_derivative(lambda s: _interp(f, s), t, f.h, f.a, f.b)
    fb = f.samples[-1]
    rest = f.samples - fb
    order = 1.0 - alpha
    d = _stencil_derivative(lambda s: _integral_right_at(f, rest, s, order), t, f.h, f.a, f.b + 2 * f.h)
    return -d + fb * (f.b - t) ** (-alpha) / math.gamma(1.0 - alpha)


def _grid_derivative(I: np.ndarray, h: float) -> np.ndarray:
    d = np.empty_like(I)
    d[1:-1] = (I[2:] - I[:-2]) / (2 * h)
    d[0] = (-3 * I[0] + 4 * I[1] - I[2]) / (2 * h)
    d[-1] = (3 * I[-1] - 4 * I[-2] + I[-3]) / (2 * h)
    return d


def rl_minus_grid(f: SampledFunction, alpha: float, split: bool = False):
    """Left derivative at every grid node.

    Returns the full derivative; the value at ``t = a`` is ``inf`` when
    ``f(a) != 0``. With ``split=True`` returns ``(regular, f(a))`` where
    ``regular`` is the derivative of ``f - f(a)`` (zero at ``a``) and the
    singular remainder is ``f(a) (t - a)^-alpha / Gamma(1 - alpha)``.
    """
    _check_alpha(alpha)
    v = f.samples
    f0 = float(v[0])
    if alpha == 0.0:
        regular, f0 = v - f0, f0
    elif alpha == 1.0:
        regular, f0 = f.derivative_samples(), 0.0
    else:
        regular = _grid_derivative(fractional_integral_grid(v - f0, f.h, 1.0 - alpha), f.h)
        regular[0] = 0.0
    if split:
        return regular, f0
    s = f.grid - f.a
    with np.errstate(divide="ignore"):
        if alpha == 0.0:
            sing = np.full_like(s, f0)
        elif f0 == 0.0:
            sing = np.zeros_like(s)
        else:
            sing = f0 * s ** (-alpha) / math.gamma(1.0 - alpha)
    return regular + sing


def rl_plus_grid(f: SampledFunction, alpha: float, split: bool = False):
    """Right derivative at every grid node, via the reflection ``t -> a + b - t``."""
    out = rl_minus_grid(f.reflected(), alpha, split)
    if split:
        regular, fb = out
        return regular[::-1].copy(), fb
    return out[::-1].copy()


def _interior(f: SampledFunction, fraction: float = 0.1) -> slice:
    lo = max(int(math.ceil(fraction * f.M)), BOUNDARY_CELLS)
    return slice(lo, f.M + 1 - lo)


def check_half_composition(f: SampledFunction) -> float:
    """Max deviation of ``D_-^(1/2) D_-^(1/2) f`` from ``f'`` and of the right
    composition from ``-f'`` over the middle 80% of the interval.

    The singular term ``f(a) (t-a)^(-1/2) / Gamma(1/2)`` produced by the first
    application is mapped to zero by the second one (power rule with a pole
    of Gamma), so only the regular part is differentiated twice.
    """
    df = f.derivative_samples()
    sl = _interior(f)

    g_minus, _ = rl_minus_grid(f, 0.5, split=True)
    dd_minus = rl_minus_grid(SampledFunction(f.a, f.b, g_minus), 0.5)
    g_plus, _ = rl_plus_grid(f, 0.5, split=True)
    dd_plus = rl_plus_grid(SampledFunction(f.a, f.b, g_plus), 0.5)

    err_minus = np.max(np.abs(dd_minus[sl] - df[sl]))
    err_plus = np.max(np.abs(dd_plus[sl] + df[sl]))
    return float(max(err_minus, err_plus))


def _weighted_integral(f: SampledFunction, weight_vals: np.ndarray) -> float:
    return float(np.trapezoid(weight_vals, dx=f.h))


def check_frac_ibp_continuous(f: SampledFunction, g: SampledFunction, alpha: float) -> float:
    """``|int f D_+^alpha g - int (D_-^alpha f) g|`` over [a, b].

    Regular parts use the trapezoidal rule; the integrable endpoint
    singularities ``(t-a)^-alpha`` and ``(b-t)^-alpha`` are integrated against
    the piecewise-linear interpolant with exact moments.
    """
    _check_alpha(alpha)
    if (f.a, f.b, f.M) != (g.a, g.b, g.M):
        raise ValueError("f and g must be sampled on the same interval and grid")
    if alpha == 0.0:
        return 0.0
    if alpha == 1.0:
        # classical limit: the endpoint singularities become the boundary term [f g]
        lhs = _weighted_integral(f, f.samples * -g.derivative_samples())
        rhs = _weighted_integral(f, f.derivative_samples() * g.samples)
        boundary = f.samples[-1] * g.samples[-1] - f.samples[0] * g.samples[0]
        return abs(lhs - rhs + boundary)

    dg_reg, gb = rl_plus_grid(g, alpha, split=True)
    df_reg, fa = rl_minus_grid(f, alpha, split=True)
    order = 1.0 - alpha
    # int f(t) gb (b - t)^-alpha / Gamma(1-alpha) dt  = gb * I_-^{1-alpha} f (b)
    lhs = _weighted_integral(f, f.samples * dg_reg) + gb * _integral_left_at(f, f.samples, f.b, order)
    rhs = _weighted_integral(f, df_reg * g.samples) + fa * _integral_right_at(g, g.samples, g.a, order)
    return abs(lhs - rhs)
