"""Property suites behind ``fracvi verify``.

Each suite draws its own random cases from a seeded generator and reports
the worst observed deviation against a fixed threshold.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .dynamics import (
    DiscretePath,
    MechanicalSystem,
    Potential,
    action_gradient_check,
    change_of_variables_check,
    residuals,
)
from .frac_ops import beta_coefficient, check_discrete_ibp, double_frac_minus_all, gl_coefficients, GridSequence
from .integrator import NewtonSettings, init_first_step, march
from .rl_continuous import SampledFunction, check_frac_ibp_continuous, check_half_composition

__all__ = ["SuiteResult", "SUITES", "run_suites", "format_table", "action_gradient_errors", "random_system"]

ALPHAS = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    metric: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "metric": self.metric,
            "threshold": self.threshold,
            "detail": self.detail,
        }


def _result(name, metric, threshold, detail="") -> SuiteResult:
    return SuiteResult(name, bool(metric <= threshold), float(metric), threshold, detail)


def random_system(rng: np.random.Generator, dim: int, nonlinear: bool = True) -> MechanicalSystem:
    """Random diagonal mass/damping with a harmonic or double-well potential."""
    m = rng.uniform(0.5, 2.0, dim)
    r = rng.uniform(0.0, 1.0, dim)
    if nonlinear and rng.random() < 0.5:
        pot = Potential.double_well(rng.uniform(0.1, 1.0, dim), rng.uniform(0.1, 1.0, dim))
    else:
        pot = Potential.harmonic(rng.uniform(0.5, 2.0, dim))
    return MechanicalSystem(m, r, pot)


# ---------------------------------------------------------------------------
# suites


def suite_coefficients(rng) -> SuiteResult:
    worst = 0.0
    for num, den in ((1, 4), (1, 2), (3, 4), (1, 3)):
        a = Fraction(num, den)
        table = gl_coefficients(num / den, 60).coeffs
        exact = Fraction(1)
        for n in range(61):
            if n:
                exact *= Fraction(n - 1) - a
                exact /= n
            worst = max(worst, abs(table[n] - float(exact)) / max(abs(float(exact)), 1e-300))
        partial = np.cumsum(table)
        if table[0] != 1.0 or table[1] != -num / den or np.any(table[1:] >= 0) or np.any(partial < 0):
            worst = np.inf
    return _result("coefficients", worst, 1e-13, "relative error against exact rational weights, n <= 60")


def suite_lemma4(rng) -> SuiteResult:
    c = gl_coefficients(0.5, 500)
    worst = 0.0
    for _ in range(200):
        N = int(rng.integers(1, 501))
        z = rng.normal(size=N + 1)
        dd = double_frac_minus_all(z, c)
        worst = max(worst, float(np.max(np.abs(dd[1:] - (z[1:] - z[:-1])))))
    return _result("lemma4", worst, 1e-11, "200 sequences, N <= 500")


def suite_beta(rng) -> SuiteResult:
    c = gl_coefficients(0.5, 60)
    worst = max(abs(beta_coefficient(0, j, c)) for j in range(2, 51))
    return _result("beta", worst, 1e-12, "beta_0^j at alpha = 1/2, j = 2..50")


def suite_ibp(rng) -> SuiteResult:
    worst = 0.0
    for _ in range(100):
        N = int(rng.integers(1, 61))
        alpha = float(rng.uniform(0.0, 1.0))
        h = float(rng.uniform(0.05, 1.0))
        F = GridSequence(rng.uniform(-1, 1, N + 1), h)
        G = GridSequence(rng.uniform(-1, 1, N + 1), h)
        worst = max(worst, *check_discrete_ibp(F, G, gl_coefficients(alpha, N)))
    return _result("ibp", worst, 1e-12, "classical and fractional, 100 draws")


POLY_PAIRS = (
    (lambda t: 1.0 + t**2, lambda t: 2.0 - t + t**3),
    (lambda t: t, lambda t: 1.0 + 2.0 * t),
    (lambda t: 3.0 - t**2, lambda t: t**2 + 0.5 * t),
)


def suite_continuous(rng) -> SuiteResult:
    M = 2**13
    comp = check_half_composition(SampledFunction.from_callable(lambda t: t**2, 0.0, 1.0, M))
    ibp = 0.0
    for f, g in POLY_PAIRS:
        fs = SampledFunction.from_callable(f, 0.0, 1.0, M)
        gs = SampledFunction.from_callable(g, 0.0, 1.0, M)
        for a in ALPHAS:
            ibp = max(ibp, check_frac_ibp_continuous(fs, gs, a))
    # report the tighter of the two ratios so one number summarises both checks
    ratio = max(comp / 5e-3, ibp / 1e-2)
    return SuiteResult(
        "continuous",
        bool(comp <= 5e-3 and ibp <= 1e-2),
        ratio,
        1.0,
        f"composition {comp:.2e} (<= 5e-3), integration by parts {ibp:.2e} (<= 1e-2); metric is worst ratio",
    )


def action_gradient_errors(rng, trials: int = 100, closed: bool = True) -> np.ndarray:
    """Relative errors of the residual-predicted action derivative on random paths."""
    errs = np.empty(trials)
    for i in range(trials):
        alpha = ALPHAS[i % 3]
        d = int(rng.integers(1, 4))
        N = int(rng.integers(4, 13))
        sys = random_system(rng, d)
        path = DiscretePath(0.1, rng.normal(size=(N + 1, d)), rng.normal(size=(N + 1, d)), alpha)
        delta = rng.normal(size=(N + 1, d))
        delta[0] = delta[-1] = 0.0
        errs[i] = action_gradient_check(sys, path, delta, closed=closed)
    return errs


def suite_action_gradient(rng) -> SuiteResult:
    worst = float(np.max(action_gradient_errors(rng, closed=True)))
    return _result("action_gradient", worst, 1e-5, "closed action (end-node term included), 100 draws")


def _marched(rng, alpha, N, tol=1e-10):
    sys = MechanicalSystem.harmonic(rng.uniform(0.5, 2.0), rng.uniform(0.0, 0.5), rng.uniform(0.5, 2.0))
    h = float(rng.uniform(0.01, 0.1))
    x0, x1 = init_first_step(sys, [rng.uniform(-1, 1)], [rng.uniform(-1, 1)], h)
    return sys, march(sys, x0, x1, alpha, h, N, NewtonSettings(tol=tol), method="history")


def suite_reversal(rng) -> SuiteResult:
    tol = 1e-10
    worst, bitwise = 0.0, True
    for alpha in ALPHAS:
        for _ in range(5):
            sys, traj = _marched(rng, alpha, int(rng.integers(20, 150)), tol)
            r = residuals(sys, DiscretePath.reversed_pair(traj.h, traj.xs, alpha))
            worst = max(worst, float(np.max(np.abs(r.r_y))))
            bitwise &= bool(np.array_equal(r.r_y, r.r_x[::-1]))
    metric = worst if bitwise else np.inf
    return _result("reversal", metric, 10 * tol, f"y-residual of reversed runs; mirrored bitwise: {bitwise}")


def suite_change_of_variables(rng) -> SuiteResult:
    worst = 0.0
    for i in range(50):
        d = 2 + i % 2
        sys = random_system(rng, d)
        while True:
            Lam = rng.normal(size=(d, d))
            if np.linalg.cond(Lam) < 50:
                break
        N = int(rng.integers(4, 15))
        path = DiscretePath(0.1, rng.normal(size=(N + 1, d)), rng.normal(size=(N + 1, d)), ALPHAS[i % 3])
        worst = max(worst, change_of_variables_check(sys, Lam, path))
    return _result("change_of_variables", worst, 1e-10, "50 random Lam, d = 2, 3")


def scheme_equivalence_errors(rng, runs: int = 50) -> np.ndarray:
    errs = np.empty(runs)
    for i in range(runs):
        sys = MechanicalSystem.harmonic(rng.uniform(0.5, 2.0), rng.uniform(0.05, 0.5), rng.uniform(0.5, 2.0))
        h = float(rng.uniform(0.01, 0.1))
        N = int(rng.integers(2, 201))
        x0, x1 = init_first_step(sys, [rng.uniform(-1, 1)], [rng.uniform(-1, 1)], h)
        a = march(sys, x0, x1, 0.5, h, N, method="local")
        b = march(sys, x0, x1, 0.5, h, N, method="history")
        errs[i] = float(np.max(np.abs(a.xs - b.xs)))
    return errs


def suite_scheme_equivalence(rng) -> SuiteResult:
    worst = float(np.max(scheme_equivalence_errors(rng)))
    return _result("scheme_equivalence", worst, 1e-11, "local vs history stepper at alpha = 1/2, 50 runs")


SUITES: dict[str, Callable[[np.random.Generator], SuiteResult]] = {
    "coefficients": suite_coefficients,
    "lemma4": suite_lemma4,
    "beta": suite_beta,
    "ibp": suite_ibp,
    "continuous": suite_continuous,
    "action_gradient": suite_action_gradient,
    "reversal": suite_reversal,
    "change_of_variables": suite_change_of_variables,
    "scheme_equivalence": suite_scheme_equivalence,
}


def run_suites(names=None, seed: int = 0) -> list[SuiteResult]:
    """Run the named suites (all when ``names`` is empty) in declaration order."""
    names = list(names or SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}; available: {', '.join(SUITES)}")
    out = []
    for name in names:
        rng = np.random.default_rng([seed, list(SUITES).index(name)])
        t0 = time.perf_counter()
        res = SUITES[name](rng)
        out.append(SuiteResult(res.name, res.passed, res.metric, res.threshold, res.detail, time.perf_counter() - t0))
    return out


def format_table(results: list[SuiteResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'suite':<{width}}  status  {'metric':>10}  {'threshold':>9}  detail"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name:<{width}}  {status:<6}  {r.metric:>10.3e}  {r.threshold:>9.1e}  {r.detail}")
    return "\n".join(lines)
