#!/usr/bin/env python3
"""Render grown-set snapshots from a solver run directory.

For each requested time t the figure shows the grown set {v < t} filled, the
constraint region and seed set outlined, and the Dirichlet nodes marked.
Times beyond the run horizon are skipped with a warning. Images land in
<run>/plots/levels_t<t>.png and regenerate byte-identically.
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


def parse_times(spec: str) -> list[float]:
    spec = spec.strip()
    if not spec:
        return []
    return [float(tok) for tok in spec.split(",") if tok.strip()]


def plot_levels(run: RunDirectory, times: list[float]) -> list[str]:
    v, meta = run.field("v_final")
    omega, _ = run.field("omega")
    v0, _ = run.field("v0")
    gamma, _ = run.field("gamma")
    xs, ys = run.axes(meta)
    horizon = run.horizon()
    outdir = run.output_dir()

    written = []
    for t in times:
        if t > horizon:
            print(f"warning: t={t:g} beyond the run horizon {horizon:g}, skipped",
                  file=sys.stderr)
            continue
        with np.errstate(invalid="ignore"):
            grown = np.isfinite(v) & (v < t)
        fig, ax = plt.subplots(figsize=(6, 6))
        ax.contourf(xs, ys, grown.T.astype(float), levels=[0.5, 1.5],
                    colors=["#7fb2d9"])
        ax.contour(xs, ys, omega.T, levels=[0.5], colors="black", linewidths=1.2)
        ax.contour(xs, ys, v0.T, levels=[0.5], colors="#2a6f2a", linewidths=1.0)
        gi, gj = np.nonzero(gamma > 0.5)
        if gi.size:
            ax.plot(xs[gi], ys[gj], ".", color="#b03030", markersize=3)
        ax.set_aspect("equal")
        ax.set_title(f"grown set at t = {t:g}")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        name = outdir / f"levels_t{t:.3f}.png"
        fig.savefig(name, **SAVEFIG_KW)
        plt.close(fig)
        written.append(str(name))
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--run", required=True, help="solver run directory")
    parser.add_argument("--times", default="", help="comma-separated times, e.g. 0.5,1.0")
    args = parser.parse_args(argv)
    try:
        written = plot_levels(RunDirectory(args.run), parse_times(args.times))
    except RunDirectoryError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    for name in written:
        print(name)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
