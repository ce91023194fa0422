"""Plot output: gnuplot scripts and matplotlib figures rendered to files."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

__all__ = [
    "gnuplot_quote",
    "gnuplot_script",
    "read_trajectory_csv",
    "write_plot_script",
    "trajectory_figure",
    "convergence_figure",
]

STYLE = {"font.size": 9, "axes.grid": True, "grid.alpha": 0.3, "lines.linewidth": 1.2}
# no software/date stamps so figures are reproducible
_PNG_METADATA = {"Software": None}


def gnuplot_quote(path: str) -> str:
    """Single-quoted gnuplot string; the only escape inside is a doubled quote."""
    return "'" + str(path).replace("'", "''") + "'"


def gnuplot_script(csv_path: str, header: list[str]) -> str:
    """Two stanzas: positions against time, then energy against time."""
    if len(header) < 4 or header[0] != "t" or header[-1] != "E":
        raise ValueError(f"unexpected trajectory header: {header}")
    d = (len(header) - 2) // 2
    src = gnuplot_quote(csv_path)
    pos = ", \\\n     ".join(
        f"{src if i == 0 else chr(39) * 2} using 1:{i + 2} with lines title 'x_{i + 1}'" for i in range(d)
    )
    return (
        "# positions and energy against time\n"
        "set datafile separator ','\n"
        "set key top right\n"
        "set xlabel 't'\n"
        "set multiplot layout 2,1\n"
        "\n"
        "set ylabel 'position'\n"
        f"plot {pos}\n"
        "\n"
        "set ylabel 'energy'\n"
        f"plot {src} using 1:{len(header)} with lines title 'E'\n"
        "\n"
        "unset multiplot\n"
    )


def read_trajectory_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return header, data.reshape(-1, len(header))


def write_plot_script(csv_path, out_path) -> str:
    """Write the gnuplot script for ``csv_path`` to ``out_path``; returns its text."""
    with open(csv_path, newline="") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    text = gnuplot_script(str(csv_path), header)
    Path(out_path).write_text(text, encoding="utf-8", newline="\n")
    return text


def _figure(nrows: int, height: float) -> Figure:
    fig = Figure(figsize=(6.0, height), layout="constrained")
    fig.subplots(nrows, 1, sharex=nrows > 1, squeeze=False)
    return fig


def trajectory_figure(times, xs, energy, out_path, title: str | None = None) -> None:
    """Positions (top) and energy (bottom) against time."""
    xs = np.asarray(xs, dtype=float).reshape(len(times), -1)
    import matplotlib

    with matplotlib.rc_context(STYLE):
        fig = _figure(2, 4.5)
        top, bottom = fig.axes
        for i in range(xs.shape[1]):
            top.plot(times, xs[:, i], label=f"$x_{{{i + 1}}}$")
        top.set_ylabel("position")
        if xs.shape[1] > 1:
            top.legend(loc="upper right")
        bottom.plot(times, energy, color="k")
        bottom.set_ylabel("energy")
        bottom.set_xlabel("t")
        if title:
            fig.suptitle(title)
        fig.savefig(out_path, dpi=120, metadata=_PNG_METADATA)


def convergence_figure(h, errors, slope, out_path) -> None:
    """Log-log error against step size with the fitted slope in the legend."""
    import matplotlib

    h = np.asarray(h, dtype=float)
    e = np.asarray(errors, dtype=float)
    with matplotlib.rc_context(STYLE):
        fig = _figure(1, 3.5)
        ax = fig.axes[0]
        ax.loglog(h, e, "o-", label="global error" if slope is None else f"global error (slope {slope:.2f})")
        if slope is not None:
            ax.loglog(h, e[0] * (h / h[0]) ** 2, ":", color="gray", label="order 2")
            ax.loglog(h, e[0] * (h / h[0]), "--", color="gray", label="order 1")
        ax.set_xlabel("h")
        ax.set_ylabel("max error")
        ax.legend(loc="lower right")
        fig.savefig(out_path, dpi=120, metadata=_PNG_METADATA)
