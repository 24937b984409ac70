"""Figure rendering from harness CSV output.

Pure consumer of the versioned CSV files the experiment runners emit; no
estimator code is imported here.  Each figure declares the columns it needs
and fails loudly, naming the missing ones, when handed the wrong file.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

METHOD_ORDER = (
    "poly_heldout", "poly_cv", "buckets", "nw",
    "raw_m", "raw_mv", "raw_s", "raw_s_flip",
    "first_1d", "first_2d", "second_1d", "second_2d", "oracle",
)


@dataclass(frozen=True)
class FigureJob:
    """One rendering request: which figure, from which CSVs, to which file."""

    figure: str           # "exp1" | "exp2" | "exp3" | "exp4"
    inputs: tuple[str, ...]
    output: str
    dpi: int = 150


def _read_columns(path: str, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    missing = [c for c in required if c not in rows[0]]
    if missing:
        raise ValueError(f"{path}: missing columns {missing} "
                         f"(have {sorted(rows[0])})")
    out: dict[str, np.ndarray] = {}
    for c in rows[0]:
        vals = [r[c] for r in rows]
        try:
            out[c] = np.array(vals, dtype=float)
        except ValueError:
            out[c] = np.array(vals)
    return out


def _methods_in(col: np.ndarray) -> list[str]:
    present = list(dict.fromkeys(col.tolist()))
    ordered = [m for m in METHOD_ORDER if m in present]
    return ordered + [m for m in present if m not in ordered]


def _fig_exp1(job: FigureJob, ax) -> None:
    """Log-log error-vs-n curves with confidence bands and fitted slopes."""
    data = _read_columns(job.inputs[0],
                         ("method", "h", "n", "mean_abs_error", "t90_lo", "t90_hi"))
    slopes: dict[tuple[str, float], float] = {}
    if len(job.inputs) > 1:
        sl = _read_columns(job.inputs[1], ("method", "h", "slope"))
        for m, h, s in zip(sl["method"], sl["h"], sl["slope"]):
            slopes[(m, float(h))] = float(s)
    for h in sorted(set(data["h"].astype(float))):
        for meth in _methods_in(data["method"]):
            sel = (data["method"] == meth) & (data["h"] == h)
            if not sel.any():
                continue
            n = data["n"][sel]
            order = np.argsort(n)
            n = n[order]
            err = data["mean_abs_error"][sel][order]
            lo = np.clip(data["t90_lo"][sel][order], 1e-12, None)
            hi = data["t90_hi"][sel][order]
            key = (meth, h)
            slope = slopes.get(key)
            if slope is None:
                slope = np.polyfit(np.log10(n), np.log10(err), 1)[0]
            label = f"{meth} (slope {slope:.2f})"
            if len(set(data["h"])) > 1:
                label += f", h={h:g}"
            (line,) = ax.loglog(n, err, "o-", label=label)
            ax.fill_between(n, lo, hi, alpha=0.2, color=line.get_color())
    ax.set_xlabel("calibration sample size n")
    ax.set_ylabel(r"mean $|\widehat{CE}_2 - CE_2|$")
    ax.set_title("Estimation error vs sample size")
    ax.legend(fontsize=8)


def _fig_exp2(job: FigureJob, ax) -> None:
    """Raw and recalibrated variance against the oracle, with y=x."""
    data = _read_columns(
        job.inputs[0], ("m", "v", "sigma2_raw", "sigma2_recal", "condvar_true"))
    truth = data["condvar_true"]
    ax.scatter(truth, data["sigma2_raw"], s=4, alpha=0.35, label="raw $\\sigma^2$")
    ax.scatter(truth, data["sigma2_recal"], s=4, alpha=0.35,
               label="recalibrated $(\\sigma^2)'$")
    lim = max(float(truth.max()), float(data["sigma2_raw"].max()),
              float(data["sigma2_recal"].max())) * 1.05
    ax.plot([0, lim], [0, lim], "k--", linewidth=1, label="y = x")
    ax.set_xlabel("oracle conditional variance")
    ax.set_ylabel("predicted variance")
    ax.set_title("Variance recalibration")
    ax.legend(fontsize=8)


def _fig_exp3(job: FigureJob, ax) -> None:
    """Mean referral gain per method across the threshold grid."""
    data = _read_columns(job.inputs[0], ("method", "tau", "mean_gain", "sem"))
    for meth in _methods_in(data["method"]):
        sel = data["method"] == meth
        tau = data["tau"][sel]
        order = np.argsort(tau)
        tau = tau[order]
        g = data["mean_gain"][sel][order]
        sem = data["sem"][sel][order]
        style = {"oracle": {"color": "black", "linestyle": ":"}}.get(meth, {})
        (line,) = ax.plot(tau, g, label=meth, **style)
        ax.fill_between(tau, g - 1.96 * sem, g + 1.96 * sem, alpha=0.15,
                        color=line.get_color())
    ax.axhline(0.0, color="grey", linewidth=0.6)
    ax.set_xlabel(r"referral threshold $\tau$")
    ax.set_ylabel("realized gain per 100 patients")
    ax.set_title("Referral gain vs threshold")
    ax.legend(fontsize=7, ncol=2)


def _fig_exp4(job: FigureJob, ax) -> None:
    """Audit yield per budget fraction, averaged over repeats."""
    data = _read_columns(job.inputs[0], ("method", "budget", "yield"))
    for meth in _methods_in(data["method"]):
        sel = data["method"] == meth
        budgets = sorted(set(data["budget"][sel].astype(float)))
        means, halfs = [], []
        for b in budgets:
            y = data["yield"][sel & (data["budget"] == b)]
            means.append(y.mean())
            halfs.append(1.96 * y.std(ddof=1) / np.sqrt(len(y)) if len(y) > 1 else 0.0)
        means, halfs = np.array(means), np.array(halfs)
        style = {"oracle": {"color": "black", "linestyle": ":"}}.get(
            meth, {"linestyle": "-"})
        (line,) = ax.plot(budgets, means, marker="o", label=meth, markersize=3,
                          **style)
        ax.fill_between(budgets, means - halfs, means + halfs, alpha=0.15,
                        color=line.get_color())
    ax.set_xlabel("audit budget fraction")
    ax.set_ylabel("disagreement yield per 100 audits")
    ax.set_title("Audit yield vs budget")
    ax.legend(fontsize=7, ncol=2)


_RENDERERS = {"exp1": _fig_exp1, "exp2": _fig_exp2, "exp3": _fig_exp3,
              "exp4": _fig_exp4}


def render(job: FigureJob) -> str:
    """Render one figure to ``job.output``; returns the written path."""
    if job.figure not in _RENDERERS:
        raise ValueError(f"unknown figure {job.figure!r} "
                         f"(choose from {sorted(_RENDERERS)})")
    if not job.inputs:
        raise ValueError("figure job needs at least one input CSV")
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    try:
        _RENDERERS[job.figure](job, ax)
        fig.tight_layout()
        fig.savefig(job.output, dpi=job.dpi)
    finally:
        plt.close(fig)
    return job.output


def render_all(csv_dir: str, out_dir: str) -> list[str]:
    """Render every figure whose input CSVs exist under ``csv_dir``."""
    import pathlib

    src = pathlib.Path(csv_dir)
    dst = pathlib.Path(out_dir)
    dst.mkdir(parents=True, exist_ok=True)
    jobs = {
        "exp1": ("exp1_summary.csv", "exp1_slopes.csv"),
        "exp2": ("exp2_scatter.csv",),
        "exp3": ("exp3.csv",),
        "exp4": ("exp4.csv",),
    }
    written = []
    for fig, names in jobs.items():
        paths = [src / n for n in names]
        if not paths[0].exists():
            continue
        inputs = tuple(str(p) for p in paths if p.exists())
        written.append(render(FigureJob(fig, inputs, str(dst / f"{fig}.png"))))
    return written
