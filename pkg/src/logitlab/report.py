"""Figure rendering for CLI outputs.

Every function takes already-computed results and writes a single PNG next to
the delimited data, so reruns with the same inputs produce the same pixels.
Nothing here recomputes statistics.
"""

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "grid_figure",
    "phase_curve_figure",
    "deviation_figure",
    "sweep_figure",
]

_DPI = 130


def _x_axis(cells):
    """Pick the grid axis that actually varies: n if possible, else d."""
    ns = {c.n for c in cells}
    if len(ns) > 1:
        return "n", [c.n for c in cells]
    return "d", [c.d for c in cells]


def _slices(cells):
    """Group cells by (d, signal) or (n, signal) depending on the free axis."""
    name, _ = _x_axis(cells)
    fixed = "d" if name == "n" else "n"
    groups = {}
    for c in cells:
        key = (getattr(c, fixed), c.signal)
        groups.setdefault(key, []).append(c)
    return name, fixed, groups


def grid_figure(cells, path):
    """Render a grid run: existence frequencies with confidence bands, excess
    risk quantiles on a log scale, and the Wilks mean, one panel each.

    Panels with no finite data (for example risk columns on an existence-only
    run) are dropped rather than drawn empty.
    """
    x_name, fixed_name, groups = _slices(cells)

    have_risk = any(not math.isnan(c.wilks_mean) for c in cells)
    have_noflip = any(not math.isnan(c.noflip_frequency) for c in cells)
    n_panels = 1 + 2 * have_risk
    fig, axes = plt.subplots(1, n_panels, figsize=(4.2 * n_panels, 3.4),
                             squeeze=False)
    axes = axes[0]

    ax = axes[0]
    for (fixed, signal), grp in sorted(groups.items()):
        grp = sorted(grp, key=lambda c: getattr(c, x_name))
        xs = [getattr(c, x_name) for c in grp]
        fr = [c.existence_frequency for c in grp]
        lo = [c.existence_lo for c in grp]
        hi = [c.existence_hi for c in grp]
        label = f"{fixed_name}={fixed}, signal={signal:g}"
        line, = ax.plot(xs, fr, marker="o", label=label)
        ax.fill_between(xs, lo, hi, alpha=0.2, color=line.get_color())
        if have_noflip:
            nf = [c.noflip_frequency for c in grp]
            ax.plot(xs, nf, marker="x", linestyle="--",
                    color=line.get_color(), label=label + " (no flips)")
    ax.set_xlabel(x_name)
    ax.set_ylabel("existence frequency")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=7)

    if have_risk:
        ax = axes[1]
        for (fixed, signal), grp in sorted(groups.items()):
            grp = sorted(grp, key=lambda c: getattr(c, x_name))
            xs = [getattr(c, x_name) for c in grp]
            for attr, style in (("excess_q50", "-"), ("excess_q90", "--"),
                                ("excess_q99", ":")):
                ys = [getattr(c, attr) for c in grp]
                if all(math.isnan(y) for y in ys):
                    continue
                ax.plot(xs, ys, style, marker=".",
                        label=f"{attr[-3:]} {fixed_name}={fixed}, s={signal:g}")
        ax.set_xlabel(x_name)
        ax.set_ylabel("excess risk quantiles")
        ax.set_yscale("log")
        ax.legend(fontsize=6)

        ax = axes[2]
        for (fixed, signal), grp in sorted(groups.items()):
            grp = sorted(grp, key=lambda c: getattr(c, x_name))
            xs = [getattr(c, x_name) for c in grp]
            ys = [c.wilks_mean for c in grp]
            ax.plot(xs, ys, marker="o",
                    label=f"{fixed_name}={fixed}, signal={signal:g}")
        ds = {c.d for c in cells}
        if len(ds) == 1:
            ax.axhline(ds.pop(), color="gray", linestyle=":", linewidth=1,
                       label="dimension")
        ax.set_xlabel(x_name)
        ax.set_ylabel("mean of 2n * excess")
        ax.legend(fontsize=7)

    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def phase_curve_figure(estimates, path):
    """Critical-ratio curve with a +-2 standard error band."""
    betas = np.array([e.beta for e in estimates])
    hs = np.array([e.h_hat for e in estimates])
    ses = np.array([e.mc_std_error for e in estimates])
    order = np.argsort(betas)
    betas, hs, ses = betas[order], hs[order], ses[order]

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(betas, hs, marker="o", markersize=3)
    ax.fill_between(betas, hs - 2 * ses, hs + 2 * ses, alpha=0.25)
    ax.axhline(0.5, color="gray", linestyle=":", linewidth=1)
    ax.set_xlabel("signal strength")
    ax.set_ylabel("critical d/n ratio")
    ax.set_ylim(0, 0.55)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def deviation_figure(summary, path):
    """Histogram of whitened gradient deviations with the bound marked."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.hist(summary.samples, bins=40, alpha=0.8)
    ax.axvline(summary.bound, color="crimson", linestyle="--",
               label=f"bound (coverage {summary.coverage:.3f})")
    ax.set_xlabel("whitened gradient norm at the truth")
    ax.set_ylabel("replicates")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def sweep_figure(min_eigs, threshold, path):
    """Histogram of per-replicate minimum whitened curvature eigenvalues."""
    vals = np.asarray(min_eigs, dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.hist(vals, bins=30, alpha=0.8)
    if threshold is not None:
        frac = float(np.mean(vals >= threshold))
        ax.axvline(threshold, color="crimson", linestyle="--",
                   label=f"threshold ({frac:.0%} at or above)")
        ax.legend(fontsize=8)
    ax.set_xlabel("minimum whitened eigenvalue over the sweep")
    ax.set_ylabel("replicates")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
