"""Discrete difference operators on uniform grids.

Classical midpoint/difference operators and the Grünwald-type fractional
differences built from the signed binomial weights

    c_0 = 1,   c_n = c_{n-1} (n - 1 - alpha) / n,

together with checkers for the summation-by-parts identities they obey.
All operators act componentwise on vector-valued sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "CoeffTable",
    "GridSequence",
    "gl_coefficients",
    "shift_average",
    "backward_diff",
    "forward_diff_neg",
    "frac_diff_minus",
    "frac_diff_plus",
    "double_frac_minus",
    "double_frac_plus",
    "beta_coefficient",
    "check_discrete_ibp",
    "frac_diff_minus_all",
    "frac_diff_plus_all",
    "double_frac_minus_all",
    "double_frac_plus_all",
    "self_convolution",
]

MAX_TABLE_LENGTH = 2**31 - 1


@dataclass(frozen=True)
class CoeffTable:
    """Weights ``c_0 .. c_{n_max}`` of the fractional difference of order ``alpha``."""

    alpha: float
    coeffs: np.ndarray = field(repr=False)

    @property
    def n_max(self) -> int:
        return len(self.coeffs) - 1

    def __len__(self) -> int:
        return len(self.coeffs)

    def __getitem__(self, n):
        return self.coeffs[n]

    def require(self, n: int) -> None:
        """Raise if the table does not reach index ``n``."""
        if n > self.n_max:
            raise ValueError(
                f"coefficient table for alpha={self.alpha} holds indices 0..{self.n_max}, "
                f"index {n} requested"
            )


@dataclass(frozen=True)
class GridSequence:
    """Values ``z_0 .. z_N`` on a uniform grid of spacing ``h``.

    ``values`` is either 1-D (scalar sequence) or 2-D with shape ``(N + 1, d)``.
    """

    values: np.ndarray
    h: float = 1.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim not in (1, 2):
            raise ValueError("values must be a 1-D or (N+1, d) array")
        if len(v) < 2:
            raise ValueError("a grid sequence needs at least two points (N >= 1)")
        if not self.h > 0:
            raise ValueError(f"step h must be positive, got {self.h}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "h", float(self.h))

    @property
    def N(self) -> int:
        return len(self.values) - 1

    def __len__(self) -> int:
        return len(self.values)


@lru_cache(maxsize=64)
def _coefficients(alpha: float, n_max: int) -> np.ndarray:
    c = np.empty(n_max + 1)
    c[0] = 1.0
    for n in range(1, n_max + 1):
        c[n] = c[n - 1] * ((n - 1 - alpha) / n)
    c.setflags(write=False)
    return c


def gl_coefficients(alpha: float, n_max: int) -> CoeffTable:
    """Return the weights ``c_0 .. c_{n_max}`` for order ``alpha`` in [0, 1].

    Uses the multiplicative recurrence; the factorial form overflows long
    before useful table lengths. Tables are cached per ``(alpha, n_max)``.
    """
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0,1], got {alpha}")
    n_max = int(n_max)
    if n_max < 0:
        raise ValueError(f"n_max must be non-negative, got {n_max}")
    if n_max >= MAX_TABLE_LENGTH:
        raise ValueError(f"n_max={n_max} exceeds the supported table length")
    return CoeffTable(alpha, _coefficients(alpha, n_max))


def _check_index(k: int, lo: int, hi: int, what: str) -> None:
    if not lo <= k <= hi:
        raise IndexError(f"{what}: index k={k} outside {lo}..{hi}")


def shift_average(z: GridSequence, k: int):
    """Midpoint average ``(z_k + z_{k+1}) / 2`` for ``0 <= k <= N-1``."""
    _check_index(k, 0, z.N - 1, "shift_average")
    return 0.5 * (z.values[k] + z.values[k + 1])


def backward_diff(z: GridSequence, k: int):
    """``(z_k - z_{k-1}) / h``, with the convention that the value at ``k = 0`` is zero."""
    _check_index(k, 0, z.N, "backward_diff")
    if k == 0:
        return np.zeros_like(z.values[0])
    return (z.values[k] - z.values[k - 1]) / z.h


def forward_diff_neg(z: GridSequence, k: int):
    """Negated forward difference ``-(z_{k+1} - z_k) / h``."""
    _check_index(k, 0, z.N - 1, "forward_diff_neg")
    return -(z.values[k + 1] - z.values[k]) / z.h


def _weighted_sum(weights: np.ndarray, terms: np.ndarray, compensated: bool):
    if not compensated:
        return np.tensordot(weights, terms, axes=(0, 0))
    prods = weights.reshape((-1,) + (1,) * (terms.ndim - 1)) * terms
    if terms.ndim == 1:
        return math.fsum(prods)
    return np.array([math.fsum(col) for col in prods.T])


def frac_diff_minus(z: GridSequence, coeffs: CoeffTable, k: int, compensated: bool = False):
    """Left fractional difference ``h^-alpha * sum_{n=0}^{k} c_n z_{k-n}``."""
    _check_index(k, 0, z.N, "frac_diff_minus")
    coeffs.require(k)
    s = _weighted_sum(coeffs.coeffs[: k + 1], z.values[k::-1], compensated)
    return s / z.h**coeffs.alpha


def frac_diff_plus(z: GridSequence, coeffs: CoeffTable, k: int, compensated: bool = False):
    """Right fractional difference ``h^-alpha * sum_{n=0}^{N-k} c_n z_{k+n}``."""
    _check_index(k, 0, z.N, "frac_diff_plus")
    coeffs.require(z.N - k)
    s = _weighted_sum(coeffs.coeffs[: z.N - k + 1], z.values[k:], compensated)
    return s / z.h**coeffs.alpha


def double_frac_minus(z: GridSequence, coeffs: CoeffTable, k: int, compensated: bool = False):
    """Nested sum ``sum_n c_n sum_p c_p z_{k-n-p}`` (no ``h`` prefactor).

    For ``alpha = 1/2`` this collapses to ``z_k - z_{k-1}``.
    """
    _check_index(k, 1, z.N, "double_frac_minus")
    coeffs.require(k)
    c = coeffs.coeffs
    v = z.values
    inner = np.array(
        [_weighted_sum(c[: j + 1], v[j::-1], compensated) for j in range(k + 1)]
    )
    # inner[j] = sum_p c_p z_{j-p}; outer pairs c_n with inner[k-n]
    return _weighted_sum(c[: k + 1], inner[::-1], compensated)


def double_frac_plus(z: GridSequence, coeffs: CoeffTable, k: int, compensated: bool = False):
    """Mirror of :func:`double_frac_minus`: ``sum_n c_n sum_p c_p z_{k+n+p}``.

    For ``alpha = 1/2`` this equals ``-(z_{k+1} - z_k)``.
    """
    _check_index(k, 0, z.N - 1, "double_frac_plus")
    mirrored = GridSequence(z.values[::-1], z.h)
    return double_frac_minus(mirrored, coeffs, z.N - k, compensated)


def beta_coefficient(l: int, j: int, coeffs: CoeffTable) -> float:
    """``2 c_{l+j} + sum_{i=1}^{j-1} c_i c_{l+j-i}`` (``j`` is an index, not a power)."""
    if j < 2 or l < 0:
        raise ValueError(f"need j >= 2 and l >= 0, got l={l}, j={j}")
    coeffs.require(l + j)
    c = coeffs.coeffs
    i = np.arange(1, j)
    return float(2.0 * c[l + j] + np.dot(c[i], c[l + j - i]))


def check_discrete_ibp(F: GridSequence, G: GridSequence, coeffs: CoeffTable) -> tuple[float, float]:
    """Absolute residuals of the classical and fractional summation-by-parts identities.

    Classical:   sum_{k<N} F_k D+G_k = sum_{k>=1} (D-F_k) G_k + (F_0 G_0 - F_N G_N) / h
    Fractional:  same with the fractional differences and ``h^alpha`` in the boundary term.

    Sums are accumulated with ``math.fsum``.
    """
    f = np.asarray(F.values, dtype=float)
    g = np.asarray(G.values, dtype=float)
    if f.shape != g.shape or f.ndim != 1:
        raise ValueError("F and G must be scalar sequences of equal length")
    if F.h != G.h:
        raise ValueError("F and G must share the grid step")
    h = F.h
    N = len(f) - 1
    coeffs.require(N)
    boundary = f[0] * g[0] - f[N] * g[N]

    lhs = math.fsum(f[:N] * (-(g[1:] - g[:N]) / h))
    rhs = math.fsum((f[1:] - f[:N]) / h * g[1:])
    classical = abs(lhs - rhs - boundary / h)

    dplus = frac_diff_plus_all(g, coeffs, h, compensated=True)
    dminus = frac_diff_minus_all(f, coeffs, h, compensated=True)
    lhs_a = math.fsum(f[:N] * dplus[:N])
    rhs_a = math.fsum(dminus[1:] * g[1:])
    fractional = abs(lhs_a - rhs_a - boundary / h**coeffs.alpha)
    return classical, fractional


# Whole-sequence versions used by the mechanics and integrator modules.


def _causal_convolve(weights: np.ndarray, values: np.ndarray, compensated: bool = False) -> np.ndarray:
    """``out[k] = sum_{n=0}^{k} weights[n] * values[k-n]`` along axis 0."""
    n = len(values)
    if len(weights) < n:
        raise ValueError(f"coefficient table too short: need {n}, have {len(weights)}")
    w = weights[:n]
    if compensated:
        return np.array([_weighted_sum(w[: k + 1], values[k::-1], True) for k in range(n)])
    if values.ndim == 1:
        return np.convolve(w, values)[:n]
    return np.stack([np.convolve(w, col)[:n] for col in values.T], axis=1)


def frac_diff_minus_all(values, coeffs: CoeffTable, h: float, compensated: bool = False) -> np.ndarray:
    """Left fractional difference at every node ``k = 0..N``."""
    v = np.asarray(values, dtype=float)
    return _causal_convolve(coeffs.coeffs, v, compensated) / h**coeffs.alpha


def frac_diff_plus_all(values, coeffs: CoeffTable, h: float, compensated: bool = False) -> np.ndarray:
    """Right fractional difference at every node; the exact mirror of the left one."""
    v = np.asarray(values, dtype=float)
    return frac_diff_minus_all(v[::-1], coeffs, h, compensated)[::-1]


def double_frac_minus_all(values, coeffs: CoeffTable) -> np.ndarray:
    """Nested left double sum at every node ``k = 0..N`` (no ``h`` prefactor)."""
    v = np.asarray(values, dtype=float)
    inner = _causal_convolve(coeffs.coeffs, v)
    return _causal_convolve(coeffs.coeffs, inner)


def double_frac_plus_all(values, coeffs: CoeffTable) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return double_frac_minus_all(v[::-1], coeffs)[::-1]


def self_convolution(coeffs: CoeffTable, n: int) -> np.ndarray:
    """Weights of the double sum written as a single sum: ``sum_{i} c_i c_{m-i}``, m < n."""
    coeffs.require(n - 1)
    c = coeffs.coeffs[:n]
    return np.convolve(c, c)[:n]
