"""Figure rendering for run reports (headless Agg backend).

Each report kind maps to one PNG; render_figures dispatches and returns the
paths it wrote. Figures are diagnostics, not data: the delimited files and
report.json stay the source of truth.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_phat_vs_r",
    "plot_gap_vs_k",
    "plot_bound_vs_r",
    "plot_generation_sizes",
    "plot_theta_components",
    "render_figures",
]

_DPI = 130


def _save(fig, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_phat_vs_r(report: dict, path: str) -> str:
    """Deviation probabilities against depth, one line per delta, log scale."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    by_delta: dict[float, list[dict]] = {}
    for row in report["estimates"]:
        by_delta.setdefault(row["delta"], []).append(row)
    for delta, rows in sorted(by_delta.items()):
        rows.sort(key=lambda r: r["r"])
        rs = [r["r"] for r in rows if r["k_exceed"] > 0]
        ps = [r["p_hat"] for r in rows if r["k_exceed"] > 0]
        lo = [r["p_hat"] - r["ci_low"] for r in rows if r["k_exceed"] > 0]
        hi = [r["ci_high"] - r["p_hat"] for r in rows if r["k_exceed"] > 0]
        line = None
        if rs:
            line = ax.errorbar(rs, ps, yerr=[lo, hi], marker="o", capsize=3,
                               label=f"delta = {delta:g}")
        zr = [r["r"] for r in rows if r["k_exceed"] == 0]
        zb = [r["ci_high"] for r in rows if r["k_exceed"] == 0]
        if zr:
            color = line[0].get_color() if line else None
            ax.plot(zr, zb, linestyle="none", marker="v", fillstyle="none",
                    color=color,
                    label=f"delta = {delta:g} (0 hits, 95% cap)" if not rs else None)
    ax.set_yscale("log")
    ax.set_xlabel("depth r")
    ax.set_ylabel("estimated deviation probability")
    ax.set_title(f"mode: {report.get('mode', '?')}, set: {report.get('set', '?')}")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_gap_vs_k(report: dict, path: str) -> str:
    """Worst-case transition-kernel gap against step count, log scale."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ks = np.asarray([row["k"] for row in report["gaps"]])
    gaps = np.asarray([row["gap"] for row in report["gaps"]])
    ax.semilogy(ks, np.maximum(gaps, 1e-300), marker="o", label="max gap over x grid")
    floor = report.get("floor")
    if floor:
        ax.axhline(floor, linestyle="--", color="grey", label="noise floor")
    fit = report.get("rate_fit")
    if fit:
        sel = ks.astype(float)
        line = np.exp(fit["intercept"] + fit["slope"] * sel)
        ax.semilogy(sel, line, linestyle=":",
                    label=f"fit rate = {fit['rate']:.4f}")
    ax.set_xlabel("steps k")
    ax.set_ylabel("sup over x grid of |Q^k f(x) - mu(f)|")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_bound_vs_r(report: dict, path: str) -> str:
    """Closed-form deviation bounds against depth, one line per (form, delta)."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    series: dict[tuple[str, float], list[dict]] = {}
    for row in report["bounds"]:
        series.setdefault((row["form"], row["delta"]), []).append(row)
    for (form, delta), rows in sorted(series.items()):
        rows = [r for r in sorted(rows, key=lambda r: r["r"])
                if r["value"] is not None and r["value"] > 0]
        if not rows:
            continue
        ax.semilogy([r["r"] for r in rows], [r["value"] for r in rows],
                    marker=".", label=f"{form}, delta = {delta:g}")
    ax.set_xlabel("depth r")
    ax.set_ylabel("bound value")
    ax.set_title(f"regime: {report.get('regime', '?')}, set: {report.get('set', '?')}")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_generation_sizes(report: dict, path: str) -> str:
    """Observed generation sizes against the mean growth curve m^r."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    sizes = report["generation_sizes"]
    rs = np.arange(len(sizes))
    m = report["model"]["law"]["mean"]
    ax.bar(rs, sizes, alpha=0.6, label="alive cells per generation")
    ax.plot(rs, m ** rs.astype(float), "k--", label="m^r")
    ax.set_xlabel("generation r")
    ax.set_ylabel("cells")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_theta_components(report: dict, path: str) -> str:
    """Estimated autoregression coefficients next to the generating truth."""
    fig, ax = plt.subplots(figsize=(6.8, 4.2))
    names = list(report["estimate"].keys())
    est = [report["estimate"][k] for k in names]
    true = [report["truth"][k] for k in names]
    xs = np.arange(len(names))
    width = 0.38
    ax.bar(xs - width / 2, [0.0 if v is None else v for v in est], width,
           label="estimate")
    ax.bar(xs + width / 2, true, width, label="truth")
    for i, v in enumerate(est):
        if v is None:
            ax.annotate("n/a", (xs[i] - width / 2, 0.0), ha="center",
                        va="bottom", fontsize=8, color="crimson")
    ax.set_xticks(xs)
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)


_RENDERERS = {
    "deviation": ("phat_vs_r.png", plot_phat_vs_r),
    "chain": ("gap_vs_k.png", plot_gap_vs_k),
    "bounds": ("bound_vs_r.png", plot_bound_vs_r),
    "simulate": ("generation_sizes.png", plot_generation_sizes),
    "estimate": ("theta_components.png", plot_theta_components),
}


def render_figures(report: dict, out_dir: str) -> list[str]:
    kind = report.get("kind")
    if kind not in _RENDERERS:
        raise ValueError(f"no figure renderer for report kind {kind!r}")
    name, fn = _RENDERERS[kind]
    return [fn(report, os.path.join(out_dir, name))]
