"""Static SVG/CSV reports from a run summary."""
from __future__ import annotations

import csv
import io
import json
import math
import os

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["report", "render_convergence", "render_margins", "checks_csv", "trend"]

_RC = {
    "svg.hashsalt": "twoscale",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (5.0, 3.4),
}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)


def trend(x, y) -> dict:
    """Least-squares slope in log-log coordinates and monotonicity of y
    along decreasing x."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    order = np.argsort(-x)
    ys = y[order]
    mono = bool(np.all(np.diff(ys) <= 1e-12 * np.maximum(1.0, np.abs(ys[:-1])))) if len(ys) > 1 else True
    slope = float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0]) if ok.sum() >= 2 else math.nan
    return {"slope": slope, "monotone": mono}


def render_convergence(series: list, path: str, xlabel: str = "ε", ylabel: str = "deviation") -> str:
    """Log-log plot of each {label, x, y} series with a trend annotation."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        lines = []
        for s in series:
            x = np.asarray(s["x"], float)
            y = np.asarray(s["y"], float)
            pos = y > 0
            if not np.any(pos):
                continue
            ax.loglog(x[pos], y[pos], "o-", ms=3.5, lw=1.2, label=s["label"])
            t = trend(x, y)
            mono = "monotone" if t["monotone"] else "not monotone"
            lines.append(f"{s['label']}: slope {t['slope']:.2f}, {mono}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if lines:
            ax.legend(loc="best", frameon=False, fontsize=8)
            ax.text(0.02, 0.02, "\n".join(lines), transform=ax.transAxes, fontsize=7, va="bottom")
        _save(fig, path)
    return path


def render_margins(rows: list, path: str, title: str = "") -> str:
    """Bar chart of signed margins with the zero line; failing bars in red."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.28 * len(rows) + 2.0), 3.4))
        labels = [r["name"] for r in rows]
        vals = [r["margin"] for r in rows]
        colors = ["#3b7dd8" if r["passed"] else "#d8453b" for r in rows]
        ax.bar(range(len(rows)), vals, color=colors)
        ax.axhline(0.0, color="black", lw=0.8)
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(labels, rotation=70, ha="right", fontsize=7)
        ax.set_ylabel("margin")
        if title:
            ax.set_title(title)
        _save(fig, path)
    return path


def _finite(v):
    return v is not None and isinstance(v, (int, float)) and math.isfinite(v)


def checks_csv(checks: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "passed", "value", "tol", "margin"])
    for c in checks:
        w.writerow([c["name"], int(bool(c["passed"])), _fmt(c.get("value")), _fmt(c.get("tol")), _fmt(c.get("margin"))])
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, float)):
        return repr(float(v))
    return str(v)


def report(summary, out_dir: str) -> list:
    """Write checks.csv and the figures derivable from ``summary`` (a dict
    or a path to summary JSON) into ``out_dir``; returns the file list."""
    if not isinstance(summary, dict):
        with open(summary) as fh:
            summary = json.load(fh)
    os.makedirs(out_dir, exist_ok=True)
    files = []
    checks = summary.get("checks", [])
    p = os.path.join(out_dir, "checks.csv")
    with open(p, "w") as fh:
        fh.write(checks_csv(checks))
    files.append(p)
    series = summary.get("series", {})
    conv = series.get("convergence", [])
    if conv:
        files.append(render_convergence(conv, os.path.join(out_dir, "convergence.svg"),
                                        series.get("convergence_xlabel", "ε"),
                                        series.get("convergence_ylabel", "deviation")))
    margins = series.get("margins")
    if margins is None:
        margins = [{"name": c["name"], "margin": c["margin"], "passed": c["passed"]}
                   for c in checks if _finite(c.get("margin"))]
    if margins:
        files.append(render_margins(margins, os.path.join(out_dir, "margins.svg"), summary.get("experiment", "")))
    return files
