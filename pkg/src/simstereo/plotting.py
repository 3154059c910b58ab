"""Reproducible PR-curve figures (SVG) and their CSV tables."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import PrCurve  # noqa: E402

# Fixed hash salt and no date stamp keep SVG output byte-identical across runs.
_RC = {"svg.hashsalt": "simstereo", "svg.fonttype": "none", "font.size": 9, "axes.grid": True,
       "grid.alpha": 0.3}


def write_pr_csv(path, curves: Mapping[str, PrCurve]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["series", "threshold", "recall", "precision"])
        for name in sorted(curves):
            c = curves[name]
            ths = c.thresholds or [float("nan")] * len(c.points)
            for t, (r, p) in zip(ths, c.points):
                w.writerow([name, f"{t:.6g}", f"{r:.9g}", f"{p:.9g}"])


def plot_pr_curves(path, curves: Mapping[str, PrCurve], title: str = "") -> None:
    """Step plot of interpolated precision against recall, one line per series."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.0, 3.2))
        for name in sorted(curves):
            c = curves[name]
            rec = [0.0] + [p[0] for p in c.points]
            prec = [c.points[0][1] if c.points else 0.0] + [p[1] for p in c.points]
            ax.step(rec, prec, where="post", label=f"{name} (AP {c.ap:.3f})")
        ax.set_xlim(0.0, 1.0)
        ax.set_ylim(0.0, 1.05)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        if title:
            ax.set_title(title)
        if curves:
            ax.legend(loc="lower left", frameon=False)
        fig.tight_layout()
        fig.savefig(Path(path), format="svg", metadata={"Date": None})
        plt.close(fig)


def write_pr_report(directory, stem: str, curves: Mapping[str, PrCurve], title: str = "") -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    plot_pr_curves(d / f"{stem}.svg", curves, title)
    write_pr_csv(d / f"{stem}.csv", curves)
