#!/usr/bin/env python3
"""Render the convergence history of a coupled run.

Log-scale chart of the per-iteration sup-norm deltas against the stopping
tolerance, with the verdict annotated. Zero deltas (the decoupled case) are
clamped to the axis floor so they stay visible on the log scale. Output:
<run>/plots/history.png, byte-deterministic.
"""

from __future__ import annotations

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from runio import RunDirectory, RunDirectoryError

SAVEFIG_KW = {"dpi": 150, "metadata": {"Software": None}}
AXIS_FLOOR = 1e-16


def plot_history(run: RunDirectory) -> str:
    hist = run.history()
    iterations = hist.get("iterations", [])
    if not iterations:
        raise RunDirectoryError("history carries no iterations")
    js = [r["j"] for r in iterations]
    deltas = np.maximum([r["delta"] for r in iterations], AXIS_FLOOR)
    tol = hist.get("tolerance")
    verdict = hist.get("verdict", "unknown")

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(js, deltas, "o-", color="#20507a", label="sup-norm delta")
    if tol:
        ax.axhline(tol, color="#b03030", linestyle="--", linewidth=1.0,
                   label=f"tolerance {tol:g}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("delta")
    ax.set_title(f"coupling convergence ({verdict})")
    ax.legend(loc="upper right")
    ax.annotate(verdict, xy=(js[-1], deltas[-1]),
                xytext=(-10, 12), textcoords="offset points", fontsize=9)
    name = run.output_dir() / "history.png"
    fig.savefig(name, **SAVEFIG_KW)
    plt.close(fig)
    return str(name)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--run", required=True, help="solver run directory")
    args = parser.parse_args(argv)
    try:
        name = plot_history(RunDirectory(args.run))
    except RunDirectoryError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(name)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
