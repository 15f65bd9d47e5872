"""Report figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def k_trace(k_all, burn_in: int, path):
    """Number of clusters per iteration, burn-in shaded."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6, 2.4))
        ax.plot(np.arange(1, len(k_all) + 1), k_all, lw=0.6, color="0.2")
        ax.axvspan(0, burn_in, color="0.85", lw=0)
        ax.set_xlabel("iteration")
        ax.set_ylabel("clusters")
        return _save(fig, path)


def lpml_grid(cells, path):
    """LPML against h, one line per number of pieces; the best cell is marked."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5, 3))
        ok = [c for c in cells if c.lpml is not None]
        for J in sorted({c.J for c in ok}):
            pts = sorted((c.h, c.lpml) for c in ok if c.J == J)
            ax.plot(*zip(*pts), marker="o", ms=3, lw=1, label=f"J={J}")
        if ok:
            best = max(ok, key=lambda c: (c.lpml, -c.J, -c.h))
            ax.plot(best.h, best.lpml, marker="*", ms=12, color="crimson", ls="none", label="selected")
        ax.set_xlabel("h")
        ax.set_ylabel("LPML")
        ax.legend(frameon=False)
        return _save(fig, path)


def k_histograms(study, path):
    """Histogram of the estimated number of clusters for each h and for the LPML choice."""
    rows = study.method_rows()
    ncol = 5
    nrow = int(np.ceil(len(rows) / ncol))
    kmax = max(int(max(r.k_hat.max() for r in study.replicates)), study.design.k) if study.replicates else 1
    with plt.rc_context(RC):
        fig, axes = plt.subplots(nrow, ncol, figsize=(2.0 * ncol, 1.7 * nrow), sharex=True, sharey=True,
                                 squeeze=False)
        bins = np.arange(0.5, kmax + 1.5)
        for ax, (name, _, k) in zip(axes.flat, rows):
            if study.replicates:
                ax.hist(study.k_hats(k), bins=bins, color="0.4" if name != "optimal" else "crimson")
            ax.axvline(study.design.k, color="k", lw=0.6, ls=":")
            ax.set_title(name)
        for ax in list(axes.flat)[len(rows):]:
            ax.set_visible(False)
        fig.supxlabel("estimated number of clusters")
        return _save(fig, path)


def rand_boxplots(study, path):
    """Rand index across replicates for each h and for the LPML choice."""
    rows = study.method_rows()
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(max(5, 0.45 * len(rows)), 3))
        data = [study.rands(k) if study.replicates else [] for _, _, k in rows]
        ax.boxplot(data, showfliers=True)
        ax.set_xticks(np.arange(1, len(rows) + 1))
        ax.set_xticklabels([name for name, _, _ in rows], rotation=60, ha="right")
        ax.set_ylabel("Rand index")
        return _save(fig, path)
