"""Figures rendered from the CSV outputs (PNG files next to the CSVs)."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_csv(path) -> dict:
    """Columns of a CSV file, skipping '#' header comments; numeric where possible."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    if not rows:
        return {}
    head, body = rows[0], rows[1:]
    cols = {}
    for i, name in enumerate(head):
        vals = [r[i] for r in body]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals)
    return cols


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_series(path, out=None):
    """Relative drift of the conserved totals of a solver run."""
    d = read_csv(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in ("mass", "energy", "energy_with_potential"):
        v = d[name]
        ax.plot(d["t"], (v - v[0]) / max(abs(v[0]), 1e-300), label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("relative drift")
    ax.legend()
    return _save(fig, out or path.replace(".csv", ".png"))


def plot_convergence(path, out=None):
    d = read_csv(path)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(d["epsilon"], d["sup_rel_energy"], "o-", label="sup relative energy")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("sup_t relative energy")
    ax.invert_xaxis()
    ax.legend()
    return _save(fig, out or path.replace(".csv", ".png"))


def plot_diagnostics(path, out=None):
    d = read_csv(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in ("xi_vertical", "div_residual", "div_h_residual", "entropy_transport"):
        ax.loglog(d["epsilon"], np.maximum(d[name], 1e-300), "o-", label=name)
    ax.set_xlabel("epsilon")
    ax.invert_xaxis()
    ax.legend(fontsize=8)
    return _save(fig, out or path.replace(".csv", ".png"))


def plot_rel_energy(path, out=None):
    d = read_csv(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(d["t"], d["rel_energy"], label="relative energy")
    ax.set_xlabel("t")
    ax.legend()
    return _save(fig, out or path.replace(".csv", ".png"))


def plot_profile(path, out=None):
    d = read_csv(path)
    fig, ax = plt.subplots(figsize=(4, 5))
    ax.plot(d["rho_s"], d["z"])
    ax.set_xlabel("rho_s")
    ax.set_ylabel("z")
    return _save(fig, out or path.replace(".csv", ".png"))


def plot_residuals(path, out=None):
    """Histogram of |normalized residual| per equation."""
    d = read_csv(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    vals = np.abs(d["normalized"].astype(float))
    for eq in np.unique(d["equation"]):
        v = vals[d["equation"] == eq]
        ax.hist(np.log10(np.maximum(v, 1e-300)), bins=30, alpha=0.6, label=str(eq))
    ax.set_xlabel("log10 |normalized residual|")
    ax.legend(fontsize=8)
    return _save(fig, out or path.replace(".csv", ".png"))


def plot_spectrum(path, out=None):
    d = read_csv(path)
    fig, ax = plt.subplots(figsize=(5, 4))
    for name in d:
        if name != "k":
            ax.semilogy(d["k"], np.maximum(d[name], 1e-300), label=name)
    ax.set_xlabel("|k|")
    ax.set_ylabel("shell energy")
    ax.legend()
    return _save(fig, out or path.replace(".csv", ".png"))


def plot_defect(path, out=None):
    d = read_csv(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(d["t"], d["D"], label="D(t)")
    ax.plot(d["t"], d["mu_tv"], label="|mu_R| up to t")
    ax.set_xlabel("t")
    ax.legend()
    return _save(fig, out or path.replace(".csv", ".png"))


RENDERERS = {
    "series.csv": plot_series,
    "convergence.csv": plot_convergence,
    "diagnostics.csv": plot_diagnostics,
    "rel_energy.csv": plot_rel_energy,
    "static.csv": plot_profile,
    "residuals.csv": plot_residuals,
    "spectrum.csv": plot_spectrum,
    "defect.csv": plot_defect,
}


def render_report(directory, out_dir=None) -> list:
    """Render every recognised CSV below ``directory``; returns the PNG paths."""
    made = []
    for root, _, files in sorted(os.walk(directory)):
        for name in sorted(files):
            fn = RENDERERS.get(name)
            if fn is None:
                continue
            src = os.path.join(root, name)
            dest = None
            if out_dir is not None:
                rel = os.path.relpath(src, directory).replace(os.sep, "_")
                os.makedirs(out_dir, exist_ok=True)
                dest = os.path.join(out_dir, rel.replace(".csv", ".png"))
            made.append(fn(src, dest))
    return made
