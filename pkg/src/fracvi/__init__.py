"""Restricted fractional variational integrators for damped mechanical systems.

Submodules:

* ``frac_ops``: discrete classical and fractional difference operators
* ``rl_continuous``: quadrature for Riemann-Liouville derivatives on sampled functions
* ``dynamics``: mechanical systems, discrete action and equation residuals
* ``integrator``: implicit marching and boundary-value solvers
* ``diagnostics``: reference solutions, energy, first integral, convergence
* ``config``, ``cli``, ``verify``, ``plotting``: the command-line layer
"""

__version__ = "0.1.0"

from .dynamics import DiscretePath, MechanicalSystem, Potential, residuals
from .frac_ops import CoeffTable, GridSequence, gl_coefficients
from .integrator import (
    BoundaryValue,
    InitialValue,
    IntegratorConfig,
    NewtonSettings,
    Trajectory,
    integrate,
    reverse_trajectory,
    solve_bvp,
)

__all__ = [
    "__version__",
    "BoundaryValue",
    "CoeffTable",
    "DiscretePath",
    "GridSequence",
    "InitialValue",
    "IntegratorConfig",
    "MechanicalSystem",
    "NewtonSettings",
    "Potential",
    "Trajectory",
    "gl_coefficients",
    "integrate",
    "residuals",
    "reverse_trajectory",
    "solve_bvp",
]
