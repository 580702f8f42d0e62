"""Whitespace-delimited data files with '#' header lines, plus gnuplot scripts."""
from __future__ import annotations

import os
from typing import Sequence

import numpy as np

FORMATS = {
    "orbit": ("t", "x", "p", "lift_x", "lift_p"),
    "section": ("t", "x", "p"),
    "series": ("t", "value", "stderr"),
    "fidelity": ("t", "F"),
    "state": ("n", "x", "|amp|^2", "Re", "Im"),
    "curve": ("ell", "x", "p"),
    "action": ("ell", "dS_exact", "dS_pert"),
    "histogram": ("bin_center", "count", "gaussian_fit"),
    "correlation": ("t", "Re(C_sc)", "Im(C_sc)", "Re(C_qm)", "Im(C_qm)", "n_orbits", "abs_err"),
}


def write_table(path: str, kind: str, columns: Sequence, comments: Sequence[str] = ()) -> str:
    """Write parallel columns under the header for ``kind``; returns the path."""
    names = FORMATS[kind]
    if len(columns) != len(names):
        raise ValueError(f"{kind} needs {len(names)} columns, got {len(columns)}")
    cols = [np.asarray(c) for c in columns]
    n = {len(c) for c in cols}
    if len(n) != 1:
        raise ValueError("columns differ in length")
    header = [*comments, " ".join(names)]
    data = np.column_stack([c.astype(float) for c in cols]) if cols[0].size else np.zeros((0, len(names)))
    np.savetxt(path, data, fmt="%.17g", header="\n".join(header), comments="# ")
    return path


def read_table(path: str) -> np.ndarray:
    return np.loadtxt(path, comments="#", ndmin=2)


def write_gnuplot(path: str, datafile: str, using: str, title: str, xlabel: str, ylabel: str, style: str = "lines") -> str:
    """A minimal gnuplot script that renders ``datafile`` to a PNG next to it."""
    base = os.path.splitext(os.path.basename(datafile))[0]
    script = (
        "set terminal pngcairo size 800,600\n"
        f"set output '{base}.png'\n"
        f"set title '{title}'\n"
        f"set xlabel '{xlabel}'\n"
        f"set ylabel '{ylabel}'\n"
        f"plot '{os.path.basename(datafile)}' using {using} with {style} notitle\n"
    )
    with open(path, "w") as fh:
        fh.write(script)
    return path
