"""Plot data: two-column CSV (log L, log statistic) and a gnuplot script."""
from __future__ import annotations

import math
import os

import numpy as np

from ..errors import InsufficientDataError
from .estimators import group_by_L

STATISTICS = {
    "median_max_height": ("max_height", np.median),
    "std_GE": ("GE", lambda v: np.std(v, ddof=1)),
    "mean_ell2H": ("heights_ell2H", np.mean),
}


def plot_rows(records, statistic: str = "median_max_height"):
    if statistic not in STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}; choose from {sorted(STATISTICS)}")
    name, fn = STATISTICS[statistic]
    rows = []
    for L, v in group_by_L(records, name).items():
        if v.size < 2:
            continue
        y = float(fn(v))
        if y > 0:
            rows.append((math.log(L), math.log(y)))
    if len(rows) < 2:
        raise InsufficientDataError("need at least two box sizes for plot data")
    return rows


GNUPLOT = """set datafile separator ","
set key top left
set xlabel "log L"
set ylabel "log {stat}"
f(x) = a + b*x
fit f(x) "{csv}" using 1:2 via a, b
set title sprintf("{stat}: slope %.3f", b)
set terminal pngcairo size 800,600
set output "{png}"
plot "{csv}" using 1:2 with points pt 7 title "{stat}", f(x) title "least squares"
"""


def write_plot_data(records, out_prefix, statistic: str = "median_max_height"):
    """Write <prefix>.csv and <prefix>.gp; returns both paths."""
    rows = plot_rows(records, statistic)
    csv_path = f"{out_prefix}.csv"
    gp_path = f"{out_prefix}.gp"
    with open(csv_path, "w") as fh:
        fh.write(f"# log_L,log_{statistic}\n")
        for x, y in rows:
            fh.write(f"{x!r},{y!r}\n")
    with open(gp_path, "w") as fh:
        fh.write(GNUPLOT.format(stat=statistic, csv=os.path.basename(csv_path),
                                png=os.path.basename(out_prefix) + ".png"))
    return csv_path, gp_path
