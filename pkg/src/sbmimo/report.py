"""Render figures from the CSV tables produced by the experiment runner.

Each *.csv with a first-column-x / one-column-per-series layout becomes a
PNG next to it.  CDF tables are drawn as distribution curves, sweep and
convergence tables as line plots (log-x for the iteration axis).
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_AXIS_LABELS = {
    "theta_deg": "Angle between subspaces in degrees",
    "rate_bits": "Rate in bits per channel use",
    "T_ul": "Number of uplink data samples",
    "iterations": "Number of L-BFGS iterations",
}

_TITLES = {
    "angle_cdf": "Subspace angle CDF",
    "rate_cdf_mf": "Matched filter rate CDF",
    "rate_cdf_zf": "Zero-forcing rate CDF",
    "sweep_mf_mean": "Average MF rate vs uplink samples",
    "sweep_mf_p5": "Cell-edge MF rate vs uplink samples",
    "sweep_zf_mean": "Average ZF rate vs uplink samples",
    "sweep_zf_p5": "Cell-edge ZF rate vs uplink samples",
    "converge": "Semi-blind rate vs iterations",
}


def _read_series(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    x = [float(r[0]) for r in body]
    series = {name: [float(r[i + 1]) for r in body]
              for i, name in enumerate(header[1:])}
    return header[0], x, series


def render_figure(csv_path: str) -> str:
    """Render one CSV table to a PNG alongside it; returns the PNG path."""
    stem = os.path.splitext(os.path.basename(csv_path))[0]
    x_name, x, series = _read_series(csv_path)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for name, ys in series.items():
        ax.plot(x, ys, label=name, linewidth=1.6)
    ax.set_xlabel(_AXIS_LABELS.get(x_name, x_name))
    if stem.endswith(("_cdf", "cdf_mf", "cdf_zf")) or "cdf" in stem:
        ax.set_ylabel("empirical CDF")
        ax.set_ylim(0.0, 1.0)
    else:
        ax.set_ylabel("rate in bits per channel use")
    if x_name == "iterations":
        ax.set_xscale("log", base=2)
    ax.set_title(_TITLES.get(stem, stem))
    ax.grid(True, alpha=0.4)
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = os.path.join(os.path.dirname(csv_path), stem + ".png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_all(csv_paths) -> list:
    """Render every known table; skips summary/metrics listings."""
    out = []
    for p in csv_paths:
        stem = os.path.splitext(os.path.basename(p))[0]
        if stem in ("summary", "metrics"):
            continue
        out.append(render_figure(p))
    return out
