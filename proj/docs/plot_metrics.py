#!/usr/bin/env python3
"""Plot the evolution-dynamics panels from a run's metrics.jsonl.

Usage: python3 docs/plot_metrics.py runs/out/metrics.jsonl [panels.png]
"""
import json
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main() -> None:
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    path = sys.argv[1]
    out = sys.argv[2] if len(sys.argv) > 2 else "panels.png"

    rows = [json.loads(line) for line in open(path) if line.strip()]
    steps = [r["step"] for r in rows]

    def series(key):
        return [r[key] if r[key] is not None else float("nan") for r in rows]

    best_so_far = series("best_so_far")
    best = series("best")
    mean = series("mean")
    median = series("median")
    variance = series("variance")
    improvements = [0.0] + [
        max(0.0, b - a) for a, b in zip(best_so_far, best_so_far[1:])
    ]

    fig, ax = plt.subplots(2, 3, figsize=(15, 8))

    ax[0][0].plot(steps, best_so_far, color="tab:green")
    ax[0][0].set_title("best score so far")

    ax[0][1].bar(steps, improvements, color="tab:orange", width=1.0)
    ax[0][1].set_title("improvement per step")

    ax[0][2].plot(steps, best, label="best")
    ax[0][2].plot(steps, mean, label="mean")
    ax[0][2].plot(steps, median, label="median")
    ax[0][2].legend()
    ax[0][2].set_title("score statistics")

    for key, style in (("p10", ":"), ("p25", "--"), ("p75", "--"), ("p90", ":")):
        ax[1][0].plot(steps, series(key), style, label=key)
    ax[1][0].plot(steps, median, label="median")
    ax[1][0].legend()
    ax[1][0].set_title("percentile trajectories")

    ax[1][1].plot(steps, variance, color="tab:red")
    ax[1][1].set_title("score variance")

    ax[1][2].plot(steps, series("path_total"), color="tab:purple")
    ax[1][2].set_title("executable paths")

    for row in ax:
        for a in row:
            a.set_xlabel("step")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
