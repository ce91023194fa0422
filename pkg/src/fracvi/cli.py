"""Command-line entry point: ``fracvi {simulate,bvp,converge,verify,plot}``.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 I/O error, 5 verify-suite failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, parse_config
from .diagnostics import analytic_reference, convergence_study, rk4_interpolant, run_diagnostics
from .dynamics import MechanicalSystem
from .integrator import SolverFailure, Trajectory, integrate, solve_bvp
from .plotting import convergence_figure, gnuplot_script, read_trajectory_csv, trajectory_figure
from .verify import SUITES, format_table, run_suites

__all__ = ["main", "trajectory_csv", "write_atomic", "EXIT_OK", "EXIT_CONFIG", "EXIT_SOLVER", "EXIT_IO", "EXIT_VERIFY"]

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO, EXIT_VERIFY = 0, 2, 3, 4, 5
FORMAT_VERSION = 1
OUTPUT_DIR_ENV = "FRACVI_OUTPUT_DIR"

log = logging.getLogger("fracvi")


# ---------------------------------------------------------------------------
# serialization


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectory_csv(sys: MechanicalSystem, traj: Trajectory) -> tuple[str, np.ndarray]:
    """CSV text ``t, x_1..x_d, v_1..v_d, E`` and the energy column.

    Velocities are central differences inside and one-sided at the ends.
    """
    xs, d = traj.xs, traj.dim
    v = np.gradient(xs, traj.h, axis=0) if len(xs) > 1 else np.zeros_like(xs)
    energy = np.array([sys.energy(q, w) for q, w in zip(xs, v)])
    header = ["t"] + [f"x_{i + 1}" for i in range(d)] + [f"v_{i + 1}" for i in range(d)] + ["E"]
    rows = [",".join(header)]
    for t, q, w, e in zip(traj.times, xs, v, energy):
        rows.append(",".join([_fmt(t), *map(_fmt, q), *map(_fmt, w), _fmt(e)]))
    return "\n".join(rows) + "\n", energy


# ---------------------------------------------------------------------------
# helpers


class CliError(Exception):
    def __init__(self, code: int, message: str, report: dict | None = None):
        super().__init__(message)
        self.code = code
        self.report = report


def _load_config(path: str) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config {path}: {exc}") from exc
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, "invalid configuration", {"errors": exc.errors}) from exc


def _output_dir(cfg: RunConfig, override: str | None) -> Path:
    return Path(override or os.environ.get(OUTPUT_DIR_ENV) or cfg.output.directory)


def _write(path: Path, text: str) -> None:
    try:
        write_atomic(path, text)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from exc
    log.info("wrote %s", path)


def _save_figure(fn, *args) -> None:
    path = args[-1]
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        fn(*args)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from exc
    log.info("wrote %s", path)


def _emit_trajectory(cfg, out: Path, sys, traj, args, diag: dict) -> None:
    o = cfg.output
    text, energy = trajectory_csv(sys, traj)
    csv_path = out / o.trajectory
    if o.emits("trajectory"):
        _write(csv_path, text)
    if o.emits("diagnostics"):
        _write(out / o.diagnostics, dumps_json(diag))
    if o.emits("plot_script") or args.plot_script:
        if not o.emits("trajectory"):
            raise CliError(EXIT_CONFIG, "a plot script needs the trajectory CSV (output.emit.trajectory)")
        _write(out / o.plot_script, gnuplot_script(str(csv_path), text.split("\n", 1)[0].split(",")))
    if o.emits("figure") or args.figure:
        _save_figure(trajectory_figure, traj.times, traj.xs, energy, out / o.figure)


def _run_meta(cfg: RunConfig, command: str, sys) -> dict:
    i = cfg.integrator
    return {
        "format_version": FORMAT_VERSION,
        "command": command,
        "alpha": i.alpha,
        "h": i.h,
        "steps": i.steps,
        "system_hash": sys.fingerprint(),
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    if cfg.integrator.mode != "initial_value":
        raise CliError(EXIT_CONFIG, "simulate needs integrator.mode.kind = initial_value (use 'bvp')")
    sys_ = cfg.system.build()
    traj = integrate(sys_, cfg.integrator.build(), cfg.integrator.method)
    diag = _run_meta(cfg, "simulate", sys_)
    diag.update(run_diagnostics(sys_, traj))
    diag["status"] = "ok" if traj.complete else "failed"
    if not traj.complete:
        diag["error"] = traj.failure
    out = _output_dir(cfg, args.out_dir)
    _emit_trajectory(cfg, out, sys_, traj, args, diag)
    if not traj.complete:
        raise CliError(EXIT_SOLVER, f"step failure at k={traj.failure['step']}", {"error": traj.failure})
    print(
        f"simulate: {traj.N} steps, residual_max={diag['residual_max']:.3e}, "
        f"energy {diag['energy_initial']:.6g} -> {diag['energy_final']:.6g}"
    )
    return EXIT_OK


def cmd_bvp(args) -> int:
    cfg = _load_config(args.config)
    if cfg.integrator.mode != "boundary_value":
        raise CliError(EXIT_CONFIG, "bvp needs integrator.mode.kind = boundary_value")
    sys_ = cfg.system.build()
    try:
        x, _ = solve_bvp(sys_, cfg.integrator.build())
    except SolverFailure as exc:
        profile = None if exc.residual_profile is None else list(exc.residual_profile)
        raise CliError(
            EXIT_SOLVER, str(exc), {"error": {"message": str(exc), "residual_norm": exc.residual_norm, "residual_profile": profile}}
        ) from exc
    diag = _run_meta(cfg, "bvp", sys_)
    diag.update(run_diagnostics(sys_, x))
    diag["status"] = "ok"
    _emit_trajectory(cfg, _output_dir(cfg, args.out_dir), sys_, x, args, diag)
    print(f"bvp: {x.N} steps, residual_max={diag['residual_max']:.3e}")
    return EXIT_OK


def _parse_h_list(items) -> list[float]:
    vals = []
    for item in items:
        for tok in str(item).split(","):
            if tok.strip():
                try:
                    vals.append(float(tok))
                except ValueError as exc:
                    raise CliError(EXIT_CONFIG, f"bad step size {tok!r}") from exc
    return vals


def _reference(sys_: MechanicalSystem, q0, v0, h_list, T):
    w = sys_.omega
    if w is not None and np.all(sys_.damping / (2 * sys_.mass) < w):
        return "analytic", analytic_reference(sys_, q0, v0)
    h_ref = min(h_list) / 20
    return "rk4", rk4_interpolant(sys_, q0, v0, h_ref, T)


def cmd_converge(args) -> int:
    cfg = _load_config(args.config)
    i = cfg.integrator
    if i.mode != "initial_value":
        raise CliError(EXIT_CONFIG, "converge needs integrator.mode.kind = initial_value")
    h_list = _parse_h_list(args.h_list)
    if len(h_list) < 3:
        raise CliError(EXIT_CONFIG, "need ≥ 3 step sizes")
    sys_ = cfg.system.build()
    T = i.final_time
    kind, ref = _reference(sys_, i.start, i.end, h_list, T)
    try:
        rep = convergence_study(sys_, ref, h_list, T, i.start, i.end, i.alpha, i.newton, i.method)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    report = {"format_version": FORMAT_VERSION, "command": "converge", "reference": kind, "final_time": T,
              "alpha": i.alpha, "system_hash": sys_.fingerprint(), **rep.to_dict()}
    out = _output_dir(cfg, args.out_dir)
    _write(out / cfg.output.report, dumps_json(report))
    table = "h,error\n" + "".join(
        f"{_fmt(h)},{'' if e is None else _fmt(e)}\n" for h, e in zip(rep.h, rep.errors)
    )
    _write(out / cfg.output.table, table)
    if (cfg.output.emits("figure") or args.figure) and rep.complete and not rep.exact:
        _save_figure(convergence_figure, rep.h, rep.errors, rep.slope, out / "convergence.png")
    if not rep.complete:
        raise CliError(EXIT_SOLVER, "a convergence run failed", {"runs": list(rep.runs)})
    slope = "exact (rounding-level errors)" if rep.exact else f"slope {rep.slope:.3f}"
    print(f"converge: {kind} reference, {slope}, monotone={rep.monotone}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        results = run_suites(args.suites, seed=args.seed)
    except KeyError as exc:
        raise CliError(EXIT_CONFIG, exc.args[0]) from exc
    print(format_table(results))
    if args.json:
        _write(Path(args.json), dumps_json({"format_version": FORMAT_VERSION, "suites": [r.to_dict() for r in results]}))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def cmd_plot(args) -> int:
    try:
        header, data = read_trajectory_csv(args.csv)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_IO, f"cannot read trajectory {args.csv}: {exc}") from exc
    try:
        script = gnuplot_script(args.csv, header)
    except ValueError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    _write(Path(args.out), script)
    if args.figure:
        d = (len(header) - 2) // 2
        _save_figure(trajectory_figure, data[:, 0], data[:, 1 : 1 + d], data[:, -1], Path(args.figure))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracvi", description="Fractional variational integrators for damped systems")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def run_parser(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="JSON run configuration")
        sp.add_argument("--out-dir", help=f"output directory (overrides ${OUTPUT_DIR_ENV} and output.directory)")
        sp.add_argument("--figure", action="store_true", help="also render a PNG figure")
        return sp

    sp = run_parser("simulate", "march an initial-value problem")
    sp.add_argument("--plot-script", action="store_true", help="also write a gnuplot script")
    sp.set_defaults(func=cmd_simulate)

    sp = run_parser("bvp", "solve a boundary-value problem")
    sp.add_argument("--plot-script", action="store_true", help="also write a gnuplot script")
    sp.set_defaults(func=cmd_bvp)

    sp = run_parser("converge", "measure the observed order against a reference solution")
    sp.add_argument("--h-list", nargs="+", required=True, help="step sizes, space or comma separated")
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("verify", help="run property suites")
    sp.add_argument("suites", nargs="*", help=f"suite names (default: all): {', '.join(SUITES)}")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--json", help="also write results as JSON")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("plot", help="write a gnuplot script for a trajectory CSV")
    sp.add_argument("csv")
    sp.add_argument("out")
    sp.add_argument("--figure", help="also render the trajectory to this image file")
    sp.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        report = {"format_version": FORMAT_VERSION, "status": "error", "exit_code": exc.code, "message": str(exc)}
        report.update(exc.report or {})
        sys.stderr.write(dumps_json(report))
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
