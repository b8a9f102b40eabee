"""Render utility-fairness trade-off figures from a sweep CSV."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import InvalidArgumentError

FAIRNESS_COLUMNS = ("dp", "eo", "eodd", "abcc")


def load_sweep_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InvalidArgumentError(f"no rows in {path}")
    return rows


def render_tradeoff_figures(csv_path: str, out_dir: str) -> list[str]:
    """One accuracy-vs-gap scatter per fairness column, colored by alpha.

    Returns the list of files written.
    """
    rows = [r for r in load_sweep_csv(csv_path) if r.get("status", "ok") == "ok"]
    if not rows:
        raise InvalidArgumentError("no successful sweep cells to plot")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    alphas = sorted({float(r["alpha"]) for r in rows})
    for col in FAIRNESS_COLUMNS:
        if not any(r.get(col) not in (None, "", "nan") for r in rows):
            continue
        fig, ax = plt.subplots(figsize=(5, 4))
        for a in alphas:
            pts = [
                (float(r[col]), float(r["acc"]))
                for r in rows
                if float(r["alpha"]) == a and r.get(col) not in (None, "", "nan")
            ]
            if not pts:
                continue
            xs, ys = zip(*sorted(pts))
            ax.scatter(xs, ys, label=f"alpha={a:g}", s=24)
        ax.set_xlabel(col)
        ax.set_ylabel("accuracy")
        ax.set_title(f"accuracy vs {col}")
        ax.legend(fontsize=8)
        fig.tight_layout()
        out = os.path.join(out_dir, f"tradeoff_{col}.png")
        fig.savefig(out, dpi=150)
        plt.close(fig)
        written.append(out)
    return written
