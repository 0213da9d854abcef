"""Acceptance suite: every criterion at its stated tolerance.

Each test prints one PASS/FAIL line; run with `pytest -s tests/test_acceptance.py`
to see the lines inline. Module-scoped fixtures share the three reference
solves (free-space eikonal, decoupled wall run, coupled wall benchmark).
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from accreta.convolution import (
    KernelPair,
    SpatialKernel,
    TimeKernel,
    convolve,
    time_lipschitz_constant,
)
from accreta.coupling import VERDICT_CONVERGED, CouplingProblem, run as run_coupling
from accreta.diagnostics import (
    box_counting_slope,
    john_constant_estimate,
    john_lower_bound,
    regularity_report,
)
from accreta.elliptic import (
    PoissonProblem,
    TimeField,
    assemble,
    dirichlet_energy,
    poincare_ratio,
    solve_poisson,
    source_integral,
)
from accreta.grid import (
    DomainSpec,
    Grid,
    Mask,
    ScalarField,
    boundary_nodes,
    sublevel,
)
from accreta.hamiltonian import HamiltonianModel, SupportEvaluator, constant_rate
from accreta.hj import MetricField, build_edges, solve_attachment
from conftest import (
    ball_mask,
    dense_poisson_oracle,
    dijkstra_oracle,
    eikonal_evaluator,
    free_space_domain,
    full_mask,
    random_connected_mask,
    window_grid,
)

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def _report(criterion: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


# -- shared solves -----------------------------------------------------------


@pytest.fixture(scope="module")
def eikonal_201():
    grid = Grid((-3.0, -3.0), 6.0 / 200, (201, 201))
    domain = free_space_domain(grid, 1.0)
    metric = MetricField.from_evaluator(grid, eikonal_evaluator())
    t0 = time.perf_counter()
    field = solve_attachment(domain, metric, 2)
    return field, domain, time.perf_counter() - t0


@pytest.fixture(scope="module")
def coupled_benchmark():
    from accreta import config as cfgmod

    cfg = json.loads((CONFIG_DIR / "coupled_disk.json").read_text())
    problem = cfgmod.build_problem(cfg)
    t0 = time.perf_counter()
    result = run_coupling(problem)
    return problem, result, time.perf_counter() - t0


@pytest.fixture(scope="module")
def decoupled_run():
    from accreta import config as cfgmod

    cfg = json.loads((CONFIG_DIR / "decoupled_disk.json").read_text())
    problem = cfgmod.build_problem(cfg)
    return problem, run_coupling(problem)


# -- criteria ----------------------------------------------------------------


def test_criterion_01_eikonal_exactness(eikonal_201):
    field, _, elapsed = eikonal_201
    pos = field.grid.positions()
    exact = np.maximum(np.linalg.norm(pos, axis=-1) - 1.0, 0.0)
    max_err = float(np.nanmax(np.abs(field.v.values - exact)))
    ok = max_err <= 0.04 and elapsed < 5.0
    _report(1, ok, f"max error {max_err:.4f} (tol 0.04), runtime {elapsed:.2f}s (< 5s)")


def test_criterion_02_oracle_equivalence():
    rng = np.random.default_rng(42)
    mismatches = 0
    for trial in range(20):
        n = int(rng.integers(30, 51))
        g = window_grid(n, 1.5)
        omega = random_connected_mask(g, rng, fill=0.7 + 0.2 * rng.random())
        nodes = omega.indices()
        pick = nodes[rng.integers(len(nodes))]
        v0_vals = np.zeros(g.shape, dtype=bool)
        v0_vals[tuple(pick)] = True
        domain = DomainSpec(omega, Mask(g, v0_vals), pick.reshape(1, -1), tuple(pick))
        lo = 0.5 + 0.5 * rng.random()
        hi = lo * (1.0 + 0.5 * rng.random())
        model = HamiltonianModel.generalized_eikonal(
            lambda x, u, lo=lo, hi=hi: 1.0 / np.clip(lo + u, lo, hi), lo, hi
        )
        metric = MetricField(g, rng.random(g.shape) * (hi - lo), SupportEvaluator(model), lo, hi)
        radius = int(rng.integers(1, 4))
        field = solve_attachment(domain, metric, radius)
        rows, cols, costs, _ = build_edges(omega, metric, radius)
        oracle = dijkstra_oracle(
            g.node_count, rows, cols, costs,
            np.flatnonzero((domain.v0.values & omega.values).ravel()),
        )
        got = np.where(np.isfinite(field.v.values.ravel()), field.v.values.ravel(), np.inf)
        if not np.array_equal(got[omega.values.ravel()], oracle[omega.values.ravel()]):
            mismatches += 1
    _report(2, mismatches == 0, f"{mismatches} mismatching instance(s) of 20 (exact match required)")


def _bound_suite_failures(field, sigma_lower, sigma_upper, L, R, T) -> tuple[int, int]:
    report = regularity_report(field, sigma_lower, sigma_upper, L=L, R=R, T=T,
                               john_samples=32, length_samples=100)
    fails = [c for c in report.checks if not c.passed]
    return len(fails), len(report.checks)


def test_criterion_03_paper_bound_suite(eikonal_201, decoupled_run, coupled_benchmark):
    field, _, _ = eikonal_201
    f1, n1 = _bound_suite_failures(field, 1.0, 1.0, L=1.0, R=3.0, T=1.6)
    problem_d, result_d = decoupled_run
    f2, n2 = _bound_suite_failures(result_d.state.v, 1.0, 1.0,
                                   L=problem_d.domain.L, R=problem_d.config.R,
                                   T=problem_d.config.T)
    problem_c, result_c, _ = coupled_benchmark
    f3, n3 = _bound_suite_failures(result_c.state.v, problem_c.model.sigma_lower, 1.0,
                                   L=problem_c.domain.L, R=problem_c.config.R,
                                   T=problem_c.config.T)
    total_fail = f1 + f2 + f3
    total = n1 + n2 + n3
    _report(3, total_fail == 0,
            f"{total_fail} failures of {total} bound checks over three solved runs")


def test_criterion_04_elliptic_accuracy():
    # mixed-BC strip
    n = 101
    h = 1.0 / (n - 1)
    g = Grid((0.0, -h), h, (n, 3))
    vals = np.zeros((n, 3), dtype=bool)
    vals[:, 1] = True
    strip = PoissonProblem(Mask(g, vals), np.array([[0, 1]]), h)
    u = solve_poisson(strip, cg_tol=1e-12)
    xs = np.arange(n) * h
    strip_err = float(np.max(np.abs(u.values[:, 1] - (xs - xs**2 / 2))))
    ok_strip = strip_err <= 2 * h * h

    # full-Dirichlet disk
    nd = 121
    hd = 2.4 / (nd - 1)
    gd = Grid((-1.2, -1.2), hd, (nd, nd))
    mask = ball_mask(gd, (0, 0), 1.0)
    disk = PoissonProblem(mask, boundary_nodes(mask), hd)
    ud = solve_poisson(disk, cg_tol=1e-10)
    r = np.linalg.norm(gd.positions(), axis=-1)
    sup = ud.support.values
    disk_err = float(np.max(np.abs(ud.values[sup] - (1.0 - r[sup] ** 2) / 4.0)))
    ok_disk = disk_err <= 3 * hd

    # dense-LU agreement on small instances
    rng = np.random.default_rng(5)
    lu_worst = 0.0
    checked = 0
    while checked < 5:
        gg = window_grid(13, 1.0)
        m = random_connected_mask(gg, rng, fill=0.7)
        nodes = m.indices()
        if not (5 <= len(nodes) <= 200):
            continue
        dirichlet = nodes[rng.choice(len(nodes), size=3, replace=False)]
        p = PoissonProblem(m, dirichlet, gg.spacing)
        sol = solve_poisson(p, cg_tol=1e-13)
        A, rhs, free_flat, _ = assemble(p)
        lu = dense_poisson_oracle(A, rhs)
        lu_worst = max(lu_worst, float(np.max(np.abs(sol.values.ravel()[free_flat] - lu))))
        checked += 1
    ok_lu = lu_worst <= 1e-8

    # energy identity at the working tolerance
    cg_tol = 1e-8
    ue = solve_poisson(disk, cg_tol=cg_tol)
    e, s = dirichlet_energy(ue), source_integral(ue)
    ok_energy = abs(e - s) <= 10 * cg_tol * s

    ok = ok_strip and ok_disk and ok_lu and ok_energy
    _report(4, ok,
            f"strip {strip_err:.2e} (tol {2*h*h:.1e}), disk {disk_err:.4f} (tol {3*hd:.3f}), "
            f"LU gap {lu_worst:.2e} (tol 1e-8), energy gap {abs(e-s):.2e} (tol {10*cg_tol*s:.2e})")


def test_criterion_05_poincare_ratio():
    n = 101
    h = 1.0 / (n - 1)
    g = Grid((0.0, -h), h, (n, 3))
    vals = np.zeros((n, 3), dtype=bool)
    vals[:, 1] = True
    u = solve_poisson(PoissonProblem(Mask(g, vals), np.array([[0, 1]]), h), cg_tol=1e-12)
    ratio = poincare_ratio(u, h)
    target = float(np.sqrt(1.4))
    rel = abs(ratio - target) / target
    _report(5, rel <= 0.02, f"ratio {ratio:.5f} vs sqrt(1.4)={target:.5f}, rel err {rel:.4%} (tol 2%)")


def test_criterion_06_convolution_oracle():
    g = window_grid(81, 2.0)
    T, M = 1.0, 200
    times = np.linspace(0.0, T, M + 1)
    ones = ScalarField.from_values(g, np.ones(g.shape), full_mask(g))
    u = TimeField(g, times, [ones] * (M + 1))
    kp = KernelPair(TimeKernel.exponential(1.0), SpatialKernel.gaussian(0.1))
    trace = convolve(u, kp)
    interior = np.all(np.abs(g.positions()) <= 2.0 - kp.phi.truncation_radius, axis=-1)
    worst = 0.0
    for m in range(1, M + 1):
        expected = 1.0 - np.exp(-times[m])
        worst = max(worst, float(np.max(np.abs(trace.values[m][interior] - expected))))
    ok_oracle = worst <= 1e-3

    rng = np.random.default_rng(11)
    tiny = window_grid(31, 1.0)
    rtimes = np.linspace(0.0, 1.5, 31)
    stack = rng.random((len(rtimes), *tiny.shape)) * 2.0
    ur = TimeField(tiny, rtimes,
                   [ScalarField.from_values(tiny, s, full_mask(tiny)) for s in stack])
    tr = convolve(ur, kp)
    slopes = float(np.max(np.abs(np.diff(tr.values, axis=0))) / (rtimes[1] - rtimes[0]))
    ck = time_lipschitz_constant(kp, ur)
    ok_lip = slopes <= ck
    _report(6, ok_oracle and ok_lip,
            f"oracle error {worst:.2e} (tol 1e-3), time slope {slopes:.3f} <= C_K {ck:.3f}")


def test_criterion_07_decoupled_fixed_point(decoupled_run):
    _, result = decoupled_run
    ok = (
        result.verdict == VERDICT_CONVERGED
        and result.state.j == 1
        and result.state.history[-1].delta == 0.0
        and result.residual == 0.0
    )
    _report(7, ok,
            f"verdict {result.verdict} at j={result.state.j}, delta0="
            f"{result.state.history[-1].delta}, residual {result.residual}")


def test_criterion_08_coupled_benchmark(coupled_benchmark):
    problem, result, elapsed = coupled_benchmark
    ok = (
        result.verdict == VERDICT_CONVERGED
        and result.state.j <= 50
        and elapsed < 120.0
        and result.residual is not None
        and result.residual <= problem.config.tol
    )
    _report(8, ok,
            f"verdict {result.verdict} in {result.state.j} iterations, "
            f"{elapsed:.1f}s (< 120s), residual {result.residual:.2e} (tol {problem.config.tol})")


def test_criterion_09_john_lower_bound(eikonal_201):
    field, domain, _ = eikonal_201
    bound = john_lower_bound(1.0, 1.0, 1.0) - 0.05
    estimates = []
    for t in (0.4, 0.8, 1.2, 1.6):
        mask = sublevel(field.v, t)
        estimates.append(john_constant_estimate(mask, domain.x0, field, samples=64).value)
    ok = all(e >= bound for e in estimates)
    _report(9, ok,
            "estimates " + ", ".join(f"{e:.3f}" for e in estimates) + f" all >= {bound:.4f}")


def test_criterion_10_box_counting():
    g = window_grid(401, 1.2)
    disk = ball_mask(g, (0, 0), 1.0)
    slope_disk = box_counting_slope(
        boundary_nodes(disk), g.spacing, [2.4 / 8, 2.4 / 16, 2.4 / 32, 2.4 / 64]
    ).slope
    ok_disk = abs(slope_disk - 1.0) <= 0.1

    # 4-level Koch prefractal rasterized on a fine lattice
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    a = -np.pi / 3
    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    for _ in range(4):
        out = [pts[0]]
        for p, q in zip(pts[:-1], pts[1:]):
            d = (q - p) / 3.0
            out.extend([p + d, p + d + rot @ d, p + 2 * d, q])
        pts = np.asarray(out)
    h = 1.0 / 2048
    nodes = set()
    for p, q in zip(pts[:-1], pts[1:]):
        k = max(2, int(np.ceil(np.linalg.norm(q - p) / (h / 2))))
        for t in np.linspace(0, 1, k):
            x = p + t * (q - p)
            nodes.add((int(round(x[0] / h)), int(round(x[1] / h))))
    slope_koch = box_counting_slope(
        np.array(sorted(nodes)), h, [1 / 8, 1 / 16, 1 / 32, 1 / 64]
    ).slope
    target = np.log(4) / np.log(3)
    ok_koch = abs(slope_koch - target) <= 0.15
    _report(10, ok_disk and ok_koch,
            f"disk slope {slope_disk:.3f} (1 +/- 0.1), koch slope {slope_koch:.3f} "
            f"({target:.3f} +/- 0.15)")
