"""Plot the acceleration components of a `compare.csv` written by ilpkit.

Usage: python3 docs/plot_compare.py out/ts2_default/compare.csv [figure.png]
"""
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main() -> None:
    src = sys.argv[1]
    dst = sys.argv[2] if len(sys.argv) > 2 else "compare.png"
    with open(src, newline="") as f:
        rows = list(csv.DictReader(f))
    t = [float(r["time"]) for r in rows]
    dim = sum(1 for k in rows[0] if k.startswith("mean_"))
    comps = range(3, 6) if dim == 6 else range(dim)
    fig, axes = plt.subplots(1, len(comps), figsize=(4 * len(comps), 3.2), squeeze=False)
    for ax, c in zip(axes[0], comps):
        mean = [float(r[f"mean_{c}"]) for r in rows]
        se = [float(r[f"stderr_{c}"]) for r in rows]
        ax.fill_between(t, [m - 2 * s for m, s in zip(mean, se)], [m + 2 * s for m, s in zip(mean, se)],
                        color="0.85", label="MC mean +/- 2 stderr")
        ax.plot(t, mean, "k-", lw=1, label="MC mean")
        ax.plot(t, [float(r[f"ode_{c}"]) for r in rows], "b--", label="ODE")
        ax.plot(t, [float(r[f"ilp_{c}"]) for r in rows], "r-", label="ILP")
        ax.set_title(f"component {c}")
        ax.set_xlabel("time")
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(dst, dpi=120)


if __name__ == "__main__":
    main()
