"""Plot the CSV output of delay_study.py or speedup_study.py (needs matplotlib).

    python3 scripts/plot_curves.py results/delay.csv results/delay.png
"""
import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def main(argv=None) -> int:
    src, dst = (argv or sys.argv[1:])[:2]
    with open(src, newline="") as fh:
        rows = list(csv.DictReader(fh))
    fig, ax = plt.subplots(figsize=(6, 4))
    if "speedup" in rows[0]:
        n = [int(r["n"]) for r in rows]
        ax.plot(n, [float(r["speedup"]) for r in rows], "o-", label="measured")
        ax.plot(n, n, "k--", lw=0.8, label="linear")
        ax.set_xlabel("workers n")
        ax.set_ylabel("speedup")
    else:
        curves = defaultdict(list)
        for r in rows:
            curves[(r["loss"], r["tau"])].append((int(r["t"]), float(r["median_gap"])))
        for (loss, tau), pts in sorted(curves.items()):
            t, g = zip(*pts)
            ax.loglog(t, g, label=f"{loss}, tau={tau}")
        ax.set_xlabel("T")
        ax.set_ylabel("median f(x_avg) - f*")
    ax.legend()
    fig.tight_layout()
    fig.savefig(dst, dpi=120)
    return 0


if __name__ == "__main__":
    sys.exit(main())
