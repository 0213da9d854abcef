"""Command-line orchestration of the solver pipeline.

Subcommands: validate, hj, elliptic, convolve, couple, diagnose. Every run
directory gets a manifest.json with the full config, its hash, library
versions, and timings, so a run can be reproduced exactly by pointing the
same subcommand at the manifest. Exit codes: 0 ok, 1 validation failure,
2 solver error, 3 max-iter verdict.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, config as cfgmod, fieldio
from .convolution import ActivationTrace, convolve
from .coupling import (
    VERDICT_CONVERGED,
    CoupledState,
    CouplingProblem,
    initialize,
    run as run_coupling,
)
from .diagnostics import regularity_report
from .elliptic import TimeField, solve_on_growth
from .grid import Mask, ScalarField, boundary_mask, sublevel
from .hj import MetricField, SolverError, backtrack_curve, solve_attachment

logger = logging.getLogger("accreta")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_MAX_ITER = 3


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ACCRETA_THREADS", "1")))
    except ValueError:
        return 1


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()
    ).hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_manifest(outdir: Path, cfg: dict, timings: dict, warnings: list[str]) -> None:
    _write_json(outdir / "manifest.json", {
        "config": cfg,
        "config_sha256": _config_hash(cfg),
        "versions": {
            "accreta": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "threads": _threads(),
        "timings": timings,
        "warnings": warnings,
    })


def _write_geometry(outdir: Path, problem: CouplingProblem) -> None:
    d = problem.domain
    fieldio.write_mask(outdir / "omega.csv", d.omega, "omega")
    fieldio.write_mask(outdir / "v0.csv", d.v0, "v0")
    gvals = np.zeros(d.grid.shape)
    if d.gamma.size:
        gvals[tuple(d.gamma.T)] = 1.0
    fieldio.write_field(outdir / "gamma.csv", d.grid, gvals, "gamma", kind="mask")


def _window_warning(problem: CouplingProblem, v) -> list[str]:
    """Growth touching the window frame means the truncation is too tight."""
    grown = sublevel(v.v, problem.config.T)
    frame = np.zeros(problem.domain.grid.shape, dtype=bool)
    for k in range(problem.domain.grid.dim):
        frame[tuple(slice(0, 1) if j == k else slice(None) for j in range(frame.ndim))] = True
        frame[tuple(slice(-1, None) if j == k else slice(None) for j in range(frame.ndim))] = True
    if bool((grown.values & frame).any()):
        msg = "grown set reached the window boundary; enlarge the grid window"
        logger.warning(msg)
        return [msg]
    return []


def _load(args) -> tuple[dict, CouplingProblem]:
    cfg, base = cfgmod.load_config(args.config)
    problems = cfgmod.validate(cfg, base)
    if problems:
        for p in problems:
            print(f"validation: {p}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)
    return cfg, cfgmod.build_problem(cfg, base, threads=_threads())


def _cmd_validate(args) -> int:
    cfg, base = cfgmod.load_config(args.config)
    problems = cfgmod.validate(cfg, base)
    if problems:
        for p in problems:
            print(f"validation: {p}")
        return EXIT_VALIDATION
    print("ok")
    return EXIT_OK


def _solve_hj(problem: CouplingProblem, activation: np.ndarray | None):
    metric = MetricField.from_evaluator(problem.domain.grid, problem.evaluator, activation)
    return solve_attachment(problem.domain, metric, problem.config.stencil_radius)


def _cmd_hj(args) -> int:
    cfg, problem = _load(args)
    outdir = Path(args.out or cfg.get("output", "run"))
    t0 = time.perf_counter()
    activation = None
    if args.activation:
        _, act, _ = fieldio.read_field(args.activation)
        activation = np.nan_to_num(act)
    v = _solve_hj(problem, activation)
    timings = {"hj": time.perf_counter() - t0}
    fieldio.write_scalar_field(outdir / "v_final.csv", v.v, "attachment_time")
    _write_geometry(outdir, problem)
    warnings = _window_warning(problem, v)
    if args.backtrack:
        lines = ["curve,vertex," + ",".join("xyz"[: problem.domain.grid.dim])]
        for ci, spec in enumerate(args.backtrack.split(";")):
            point = [float(c) for c in spec.split(",")]
            node = problem.domain.grid.nearest_node(point)
            verts, _ = backtrack_curve(v, node)
            for vi, p in enumerate(verts):
                lines.append(f"{ci},{vi}," + ",".join(repr(float(c)) for c in p))
        (outdir / "curves.csv").write_text("\n".join(lines) + "\n")
    _write_manifest(outdir, cfg, timings, warnings)
    print(f"wrote {outdir}")
    return EXIT_OK


def _read_attachment(problem: CouplingProblem, path) -> "object":
    from .grid import ABSENT

    grid, values, _ = fieldio.read_field(path)
    if tuple(grid.shape) != tuple(problem.domain.grid.shape):
        raise SolverError("v field grid does not match the config grid")
    support = Mask(problem.domain.grid, np.isfinite(values))
    v = ScalarField(problem.domain.grid, support, values)
    from .hj import NO_PREDECESSOR, AttachmentField, lattice_offsets

    pred = np.full(problem.domain.grid.node_count, NO_PREDECESSOR, dtype=int)
    return AttachmentField(
        problem.domain.grid, problem.domain, v, pred,
        lattice_offsets(problem.domain.grid.dim, problem.config.stencil_radius),
        problem.config.stencil_radius,
    )


def _cmd_elliptic(args) -> int:
    cfg, problem = _load(args)
    rundir = Path(args.run)
    v = _read_attachment(problem, rundir / "v_final.csv")
    t0 = time.perf_counter()
    u = solve_on_growth(v, problem.domain, problem.config.T, problem.config.M,
                        cg_tol=problem.config.cg_tol, threads=_threads())
    timings = {"elliptic": time.perf_counter() - t0}
    _write_time_field(rundir / "u", u)
    _write_json(rundir / "elliptic_report.json", _elliptic_report(u, problem))
    _write_manifest(rundir, cfg, timings, [])
    print(f"wrote {rundir / 'u'}")
    return EXIT_OK


def _elliptic_report(u: TimeField, problem: CouplingProblem) -> dict:
    from .elliptic import dirichlet_energy, poincare_ratio, source_integral

    h = u.grid.spacing
    rows = []
    for t, s in zip(u.times, u.slices):
        rows.append({
            "t": float(t),
            "nodes": int(s.support.count),
            "energy": dirichlet_energy(s),
            "source_integral": source_integral(s),
            "poincare_ratio": poincare_ratio(s, h),
        })
    return {"slices": rows, "max_poincare_ratio": max(r["poincare_ratio"] for r in rows)}


def _write_time_field(directory: Path, u: TimeField) -> None:
    fieldio.write_time_slices(directory, u.grid, u.times,
                              [s.values for s in u.slices], "activation")


def _write_trace(directory: Path, trace: ActivationTrace) -> None:
    fieldio.write_time_slices(directory, trace.grid, trace.times,
                              list(trace.values), "convolved_activation")


def _cmd_convolve(args) -> int:
    cfg, problem = _load(args)
    rundir = Path(args.run)
    grid, times, stack = fieldio.read_time_slices(rundir / "u")
    slices = [ScalarField.from_values(problem.domain.grid, s) for s in stack]
    u = TimeField(problem.domain.grid, times, slices)
    t0 = time.perf_counter()
    trace = convolve(u, problem.kernels)
    timings = {"convolve": time.perf_counter() - t0}
    _write_trace(rundir / "ku", trace)
    _write_manifest(rundir, cfg, timings, [])
    print(f"wrote {rundir / 'ku'}")
    return EXIT_OK


def _diagnostics_payload(problem: CouplingProblem, v, extra: dict | None = None) -> dict:
    m = problem.model
    report = regularity_report(
        v, m.sigma_lower, m.sigma_upper, problem.domain.L, problem.config.R,
        problem.config.T, n_times=problem.config.diagnostic_times,
    )
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    return payload


def _cmd_couple(args) -> int:
    cfg, problem = _load(args)
    outdir = Path(args.out or cfg.get("output", "run"))
    t0 = time.perf_counter()
    try:
        result = run_coupling(problem)
    except SolverError as e:
        print(f"solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    timings = {
        "couple": time.perf_counter() - t0,
        "iterations": [r.wall_time for r in result.state.history],
    }
    state = result.state
    fieldio.write_scalar_field(outdir / "v_final.csv", state.v.v, "attachment_time")
    _write_geometry(outdir, problem)
    _write_time_field(outdir / "u", state.u)
    _write_trace(outdir / "ku", state.ku)
    _write_json(outdir / "history.json", {
        "verdict": result.verdict,
        "tolerance": problem.config.tol,
        "representation_residual": result.residual,
        "iterations": [r.to_dict() for r in state.history],
    })
    _write_json(outdir / "diagnostics.json", _diagnostics_payload(
        problem, state.v,
        extra={"representation_residual": result.residual, "verdict": result.verdict},
    ))
    warnings = _window_warning(problem, state.v)
    _write_manifest(outdir, cfg, timings, warnings)
    print(f"verdict: {result.verdict} after {state.j} iterations -> {outdir}")
    return EXIT_OK if result.converged else EXIT_MAX_ITER


def _cmd_diagnose(args) -> int:
    cfg, base = cfgmod.load_config(Path(args.run) / "manifest.json")
    problems = cfgmod.validate(cfg, base)
    if problems:
        for p in problems:
            print(f"validation: {p}", file=sys.stderr)
        return EXIT_VALIDATION
    problem = cfgmod.build_problem(cfg, base, threads=_threads())
    rundir = Path(args.run)
    v = _read_attachment(problem, rundir / "v_final.csv")
    # backtracking needs the shortest-path tree: re-solve with frozen activation
    activation = None
    ku_dir = rundir / "ku"
    if ku_dir.exists():
        _, times, stack = fieldio.read_time_slices(ku_dir)
        trace = ActivationTrace(problem.domain.grid, times, stack)
        from .convolution import compose_with_attachment

        activation = compose_with_attachment(trace, v.v.values, clamp_horizon=True)
    v = _solve_hj(problem, activation)
    payload = _diagnostics_payload(problem, v)
    _write_json(rundir / "diagnostics.json", payload)
    print(f"wrote {rundir / 'diagnostics.json'} (all_passed={payload['all_passed']})")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = argparse.ArgumentParser(
        prog="accreta",
        description="Solvers for the accretive-growth free boundary problem",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config against the model assumptions")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("hj", help="solve the attachment-time field")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--activation", help="frozen activation field CSV")
    p.add_argument("--backtrack", help="semicolon-separated points, e.g. '1,0;0,2'")
    p.set_defaults(func=_cmd_hj)

    p = sub.add_parser("elliptic", help="solve activation slices on a run's v field")
    p.add_argument("--config", required=True)
    p.add_argument("--run", required=True)
    p.set_defaults(func=_cmd_elliptic)

    p = sub.add_parser("convolve", help="convolve a run's activation slices")
    p.add_argument("--config", required=True)
    p.add_argument("--run", required=True)
    p.set_defaults(func=_cmd_convolve)

    p = sub.add_parser("couple", help="run the coupled fixed-point iteration")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_couple)

    p = sub.add_parser("diagnose", help="recompute the bound suite for a run directory")
    p.add_argument("--run", required=True)
    p.set_defaults(func=_cmd_diagnose)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    except SolverError as e:
        print(f"solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    raise SystemExit(main())
