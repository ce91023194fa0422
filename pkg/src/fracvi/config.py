"""Run configuration: a JSON document with three blocks.

Example::

    {
      "system": {"dim": 1, "masses": [1.0], "dampings": [0.2],
                 "potential": {"kind": "harmonic", "stiffness": [1.0]}},
      "integrator": {"alpha": 0.5, "h": 0.01, "steps": 1000,
                     "mode": {"kind": "initial_value", "q0": [1.0], "v0": [0.0]}},
      "output": {"directory": "out"}
    }

Unknown keys are rejected. Every problem is reported with its field path,
e.g. ``system.masses[0]: must be positive``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .dynamics import MechanicalSystem, Potential
from .integrator import METHODS, BoundaryValue, InitialValue, IntegratorConfig, NewtonSettings

__all__ = [
    "ConfigError",
    "SystemSpec",
    "IntegratorSpec",
    "OutputSpec",
    "RunConfig",
    "parse_config",
    "serialize_config",
    "config_from_dict",
    "config_to_dict",
]

POTENTIAL_PARAMS = {
    "harmonic": ("stiffness",),
    "pendulum": ("coefficient",),
    "double_well": ("a", "b"),
    "polynomial": ("coefficients",),
}
MODE_KEYS = {"initial_value": ("q0", "v0"), "boundary_value": ("x_a", "x_b")}
EMIT_DEFAULTS = {"trajectory": True, "diagnostics": True, "plot_script": False, "figure": False}
OUTPUT_DEFAULTS = {
    "directory": ".",
    "trajectory": "trajectory.csv",
    "diagnostics": "diagnostics.json",
    "plot_script": "plot.gp",
    "figure": "trajectory.png",
    "report": "convergence.json",
    "table": "convergence.csv",
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists field-path-qualified messages."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class SystemSpec:
    dim: int
    masses: tuple
    dampings: tuple
    potential_kind: str
    potential_params: tuple  # sorted (name, value) pairs; values are tuples

    def build(self) -> MechanicalSystem:
        p = dict(self.potential_params)
        if self.potential_kind == "harmonic":
            pot = Potential.harmonic(p["stiffness"])
        elif self.potential_kind == "pendulum":
            pot = Potential.pendulum(p["coefficient"])
        elif self.potential_kind == "double_well":
            pot = Potential.double_well(p["a"], p["b"])
        else:
            pot = Potential.polynomial(p["coefficients"])
        return MechanicalSystem(list(self.masses), list(self.dampings), pot)


@dataclass(frozen=True)
class IntegratorSpec:
    alpha: float
    h: float
    steps: int
    mode: str
    start: tuple
    end: tuple
    method: str = "auto"
    newton: NewtonSettings = field(default_factory=NewtonSettings)

    @property
    def final_time(self) -> float:
        return self.h * self.steps

    def build(self) -> IntegratorConfig:
        if self.mode == "initial_value":
            mode = InitialValue(list(self.start), list(self.end))
        else:
            mode = BoundaryValue(list(self.start), list(self.end))
        return IntegratorConfig(self.alpha, self.h, self.steps, mode, self.newton)


@dataclass(frozen=True)
class OutputSpec:
    directory: str = OUTPUT_DEFAULTS["directory"]
    trajectory: str = OUTPUT_DEFAULTS["trajectory"]
    diagnostics: str = OUTPUT_DEFAULTS["diagnostics"]
    plot_script: str = OUTPUT_DEFAULTS["plot_script"]
    figure: str = OUTPUT_DEFAULTS["figure"]
    report: str = OUTPUT_DEFAULTS["report"]
    table: str = OUTPUT_DEFAULTS["table"]
    emit: tuple = tuple(sorted(EMIT_DEFAULTS.items()))

    def emits(self, what: str) -> bool:
        return dict(self.emit)[what]


@dataclass(frozen=True)
class RunConfig:
    system: SystemSpec
    integrator: IntegratorSpec
    output: OutputSpec = field(default_factory=OutputSpec)


# ---------------------------------------------------------------------------
# validation helpers


class _Collector:
    def __init__(self):
        self.errors: list[str] = []

    def add(self, path: str, msg: str) -> None:
        self.errors.append(f"{path}: {msg}")

    def obj(self, value, path: str, required: tuple, optional: tuple = ()) -> dict | None:
        if not isinstance(value, dict):
            self.add(path, "must be an object")
            return None
        for key in value:
            if key not in required and key not in optional:
                self.add(f"{path}.{key}" if path else key, "unknown key")
        for key in required:
            if key not in value:
                self.add(f"{path}.{key}" if path else key, "missing required key")
        return value

    def number(self, value, path: str) -> float | None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.add(path, "must be a number")
            return None
        if not math.isfinite(value):
            self.add(path, "must be finite")
            return None
        return float(value)

    def integer(self, value, path: str) -> int | None:
        if isinstance(value, bool) or not isinstance(value, int):
            self.add(path, "must be an integer")
            return None
        return value

    def vector(self, value, path: str, dim: int | None) -> tuple | None:
        if not isinstance(value, list):
            self.add(path, "must be a list of numbers")
            return None
        out = [self.number(v, f"{path}[{i}]") for i, v in enumerate(value)]
        if dim is not None and len(value) != dim:
            self.add(path, f"must have {dim} entries (system.dim), got {len(value)}")
            return None
        if any(v is None for v in out):
            return None
        return tuple(out)

    def string(self, value, path: str, choices: tuple) -> str | None:
        if value not in choices:
            self.add(path, f"must be one of {', '.join(choices)}")
            return None
        return value


def _parse_system(c: _Collector, raw) -> SystemSpec | None:
    s = c.obj(raw, "system", ("dim", "masses", "dampings", "potential"))
    if s is None:
        return None
    dim = c.integer(s.get("dim"), "system.dim") if "dim" in s else None
    if dim is not None and dim < 1:
        c.add("system.dim", "must be at least 1")
        dim = None
    masses = c.vector(s["masses"], "system.masses", dim) if "masses" in s else None
    if masses:
        for i, m in enumerate(masses):
            if not m > 0:
                c.add(f"system.masses[{i}]", "must be positive")
    dampings = c.vector(s["dampings"], "system.dampings", dim) if "dampings" in s else None
    if dampings:
        for i, r in enumerate(dampings):
            if r < 0:
                c.add(f"system.dampings[{i}]", "must be non-negative")

    pot = s.get("potential")
    kind, params = None, None
    if isinstance(pot, dict) and "kind" in pot:
        if pot["kind"] == "custom":
            c.add("system.potential.kind", "custom potentials are only available from the Python API")
        else:
            kind = c.string(pot["kind"], "system.potential.kind", tuple(POTENTIAL_PARAMS))
    elif "potential" in s:
        c.obj(pot, "system.potential", ("kind",))
    if kind is not None:
        names = POTENTIAL_PARAMS[kind]
        c.obj(pot, "system.potential", ("kind",) + names)
        params = []
        for name in names:
            if name not in pot:
                continue
            path = f"system.potential.{name}"
            if kind == "polynomial":
                rows = pot[name]
                if not isinstance(rows, list) or (dim is not None and len(rows) != dim):
                    c.add(path, f"must be a list of {dim} coefficient lists (one per axis)")
                    continue
                vals = tuple(c.vector(r, f"{path}[{i}]", None) for i, r in enumerate(rows))
                if any(v is None for v in vals):
                    continue
                params.append((name, vals))
            else:
                v = c.vector(pot[name], path, dim)
                if v is not None:
                    params.append((name, v))
        params = tuple(sorted(params))
    if None in (dim, masses, dampings, kind, params) or len(params) != len(POTENTIAL_PARAMS[kind]):
        return None
    return SystemSpec(dim, masses, dampings, kind, params)


def _parse_newton(c: _Collector, raw) -> NewtonSettings | None:
    d = NewtonSettings()
    n = c.obj(raw, "integrator.newton", (), ("tol", "max_iter", "jacobian", "max_halvings"))
    if n is None:
        return None
    ok = True
    tol = c.number(n.get("tol", d.tol), "integrator.newton.tol")
    if tol is not None and not tol > 0:
        c.add("integrator.newton.tol", "must be positive")
        ok = False
    max_iter = c.integer(n.get("max_iter", d.max_iter), "integrator.newton.max_iter")
    if max_iter is not None and max_iter < 1:
        c.add("integrator.newton.max_iter", "must be at least 1")
        ok = False
    jac = c.string(n.get("jacobian", d.jacobian), "integrator.newton.jacobian", ("analytic", "finite_difference"))
    halvings = c.integer(n.get("max_halvings", d.max_halvings), "integrator.newton.max_halvings")
    if halvings is not None and halvings < 0:
        c.add("integrator.newton.max_halvings", "must be non-negative")
        ok = False
    if not ok or None in (tol, max_iter, jac, halvings):
        return None
    return NewtonSettings(tol, max_iter, jac, halvings)


def _parse_integrator(c: _Collector, raw, dim: int | None) -> IntegratorSpec | None:
    s = c.obj(raw, "integrator", ("alpha", "h", "steps", "mode"), ("method", "newton"))
    if s is None:
        return None
    alpha = c.number(s["alpha"], "integrator.alpha") if "alpha" in s else None
    if alpha is not None and not 0.0 <= alpha <= 1.0:
        c.add("integrator.alpha", "alpha must lie in [0,1]")
        alpha = None
    h = c.number(s["h"], "integrator.h") if "h" in s else None
    if h is not None and not h > 0:
        c.add("integrator.h", "must be positive")
        h = None
    steps = c.integer(s["steps"], "integrator.steps") if "steps" in s else None
    if steps is not None and steps < 2:
        c.add("integrator.steps", "must be at least 2")
        steps = None
    method = c.string(s.get("method", "auto"), "integrator.method", METHODS)
    if method == "local" and alpha is not None and alpha != 0.5:
        c.add("integrator.method", "the local scheme requires alpha = 0.5")
        method = None
    newton = _parse_newton(c, s.get("newton", {}))

    mode = start = end = None
    m = s.get("mode")
    if isinstance(m, dict) and m.get("kind") in MODE_KEYS:
        mode = m["kind"]
        a, b = MODE_KEYS[mode]
        c.obj(m, "integrator.mode", ("kind", a, b))
        start = c.vector(m[a], f"integrator.mode.{a}", dim) if a in m else None
        end = c.vector(m[b], f"integrator.mode.{b}", dim) if b in m else None
    elif isinstance(m, dict):
        c.add("integrator.mode.kind", f"must be one of {', '.join(MODE_KEYS)}")
    elif "mode" in s:
        c.add("integrator.mode", "must be an object")
    if None in (alpha, h, steps, method, newton, mode, start, end):
        return None
    return IntegratorSpec(alpha, h, steps, mode, start, end, method, newton)


def _parse_output(c: _Collector, raw) -> OutputSpec | None:
    o = c.obj(raw, "output", (), tuple(OUTPUT_DEFAULTS) + ("emit",))
    if o is None:
        return None
    vals = {}
    for key, default in OUTPUT_DEFAULTS.items():
        v = o.get(key, default)
        if not isinstance(v, str) or not v:
            c.add(f"output.{key}", "must be a non-empty path string")
            return None
        vals[key] = v
    e = c.obj(o.get("emit", {}), "output.emit", (), tuple(EMIT_DEFAULTS))
    if e is None:
        return None
    emit = dict(EMIT_DEFAULTS)
    for key, v in e.items():
        if key in emit:
            if not isinstance(v, bool):
                c.add(f"output.emit.{key}", "must be true or false")
                return None
            emit[key] = v
    return OutputSpec(**vals, emit=tuple(sorted(emit.items())))


# ---------------------------------------------------------------------------
# public API


def config_from_dict(raw) -> RunConfig:
    c = _Collector()
    top = c.obj(raw, "", ("system", "integrator"), ("output",))
    if top is None:
        raise ConfigError(c.errors)
    system = _parse_system(c, top["system"]) if "system" in top else None
    dim = system.dim if system else None
    integ = _parse_integrator(c, top["integrator"], dim) if "integrator" in top else None
    output = _parse_output(c, top.get("output", {}))
    if c.errors or None in (system, integ, output):
        raise ConfigError(c.errors or ["configuration is incomplete"])
    return RunConfig(system, integ, output)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON configuration document."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"not valid JSON: {exc}"]) from exc
    return config_from_dict(raw)


def config_to_dict(cfg: RunConfig) -> dict:
    s, i, o = cfg.system, cfg.integrator, cfg.output
    potential = {"kind": s.potential_kind}
    for name, val in s.potential_params:
        potential[name] = [list(v) for v in val] if s.potential_kind == "polynomial" else list(val)
    a, b = MODE_KEYS[i.mode]
    n = i.newton
    return {
        "system": {"dim": s.dim, "masses": list(s.masses), "dampings": list(s.dampings), "potential": potential},
        "integrator": {
            "alpha": i.alpha,
            "h": i.h,
            "steps": i.steps,
            "method": i.method,
            "mode": {"kind": i.mode, a: list(i.start), b: list(i.end)},
            "newton": {"tol": n.tol, "max_iter": n.max_iter, "jacobian": n.jacobian, "max_halvings": n.max_halvings},
        },
        "output": {
            "directory": o.directory,
            "trajectory": o.trajectory,
            "diagnostics": o.diagnostics,
            "plot_script": o.plot_script,
            "figure": o.figure,
            "report": o.report,
            "table": o.table,
            "emit": dict(o.emit),
        },
    }


def serialize_config(cfg: RunConfig) -> str:
    """JSON text with every default written out; ``parse_config`` inverts it."""
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"
