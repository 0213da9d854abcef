"""Alternating fixed-point iteration coupling growth and activation.

Each step freezes the composed activation x -> Ku_j(x, v_j(x)) from the
previous iterate, re-solves the geodesic problem, then the elliptic slices on
the new sublevels, then the convolution. The stopping rule is the practical
Cauchy criterion sup|v_{j+1} - v_j| < tol on omega within the window ball;
the theory only guarantees subsequence convergence, so hitting max_iter is a
verdict, not an error.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .convolution import ActivationTrace, KernelPair, compose_with_attachment, convolve
from .diagnostics import containment_radius_c3, hausdorff
from .elliptic import TimeField, solve_on_growth
from .grid import DomainSpec, distance_to_complement, sublevel
from .hamiltonian import HamiltonianModel, SupportEvaluator
from .hj import AttachmentField, MetricField, SolverError, representation_residual, solve_attachment

logger = logging.getLogger(__name__)

VERDICT_CONVERGED = "converged"
VERDICT_MAX_ITER = "max-iter-reached"


@dataclass(frozen=True)
class CouplingConfig:
    T: float
    M: int
    R: float
    tol: float
    max_iter: int
    theta: float = 1.0
    stencil_radius: int = 2
    cg_tol: float = 1e-8
    diagnostic_times: int = 4
    threads: int = 1

    def __post_init__(self):
        if not (self.tol > 0):
            raise ValueError("tol must be positive")
        if self.max_iter < 2:
            raise ValueError("max_iter must be at least 2")
        if not (0 < self.theta <= 1):
            raise ValueError("theta must lie in (0, 1]")
        if self.M < 1 or self.T <= 0 or self.R <= 0:
            raise ValueError("need T > 0, M >= 1, R > 0")

    def horizon_ok(self, domain: DomainSpec, sigma_lower: float) -> tuple[bool, str]:
        """T <= sigma_lower * (R - c3-offset): growth stays inside the window."""
        d0 = float(distance_to_complement(domain.v0)[domain.x0])
        x0_norm = float(np.linalg.norm(domain.grid.position(domain.x0)))
        offset = d0 / domain.kappa0 + x0_norm
        limit = sigma_lower * (self.R - offset)
        msg = (
            f"horizon T={self.T:g} vs sigma_lower*(R - c3 offset)={limit:g} "
            f"(offset {offset:g})"
        )
        return self.T <= limit + 1e-12, msg


@dataclass(frozen=True)
class IterationRecord:
    j: int
    delta: float
    hausdorff_deltas: dict
    hausdorff_bound: float
    containment_ok: bool
    max_v_window: float
    wall_time: float

    def to_dict(self) -> dict:
        # wall_time stays out: history.json must be bit-reproducible from the
        # manifest, and timings belong to the manifest instead
        return {
            "j": self.j,
            "delta": self.delta,
            "hausdorff_deltas": self.hausdorff_deltas,
            "hausdorff_bound": self.hausdorff_bound,
            "containment_ok": self.containment_ok,
            "max_v_window": self.max_v_window,
        }


@dataclass(frozen=True)
class CoupledState:
    j: int
    v: AttachmentField
    u: TimeField
    ku: ActivationTrace
    activation: np.ndarray = field(repr=False)
    history: tuple = ()

    @property
    def domain(self) -> DomainSpec:
        return self.v.domain


@dataclass(frozen=True)
class RunResult:
    state: CoupledState
    verdict: str
    residual: float | None

    @property
    def converged(self) -> bool:
        return self.verdict == VERDICT_CONVERGED


def _window_delta(a: AttachmentField, b: AttachmentField, R: float) -> float:
    va, vb = a.v.values, b.v.values
    both = np.isfinite(va) & np.isfinite(vb)
    both &= np.linalg.norm(a.grid.positions(), axis=-1) <= R
    if not both.any():
        return 0.0
    return float(np.max(np.abs(va[both] - vb[both])))


def _check_containment(v: AttachmentField, times, sigma_lower: float) -> bool:
    d0 = float(distance_to_complement(v.domain.v0)[v.domain.x0])
    x0_norm = float(np.linalg.norm(v.grid.position(v.domain.x0)))
    pos_norm = np.linalg.norm(v.grid.positions(), axis=-1)
    for t in times:
        mask = sublevel(v.v, float(t))
        if mask.is_empty:
            continue
        c3 = containment_radius_c3(float(t), sigma_lower, d0, v.domain.kappa0, x0_norm)
        if float(pos_norm[mask.values].max()) > c3:
            return False
    return True


def _diag_times(config: CouplingConfig):
    n = config.diagnostic_times
    return [config.T * (i + 1) / n for i in range(n)]


@dataclass(frozen=True)
class CouplingProblem:
    """Bundle of everything one run needs; keeps the step signature small."""

    domain: DomainSpec
    model: HamiltonianModel
    kernels: KernelPair
    config: CouplingConfig
    evaluator: SupportEvaluator = None

    def __post_init__(self):
        if self.evaluator is None:
            object.__setattr__(self, "evaluator", SupportEvaluator(self.model))


def initialize(problem: CouplingProblem) -> CoupledState:
    """Iterate zero: activation frozen at 0, then one elliptic/convolution pass."""
    domain, config = problem.domain, problem.config
    activation = np.zeros(domain.grid.shape)
    metric = MetricField.from_evaluator(domain.grid, problem.evaluator, activation)
    v0 = solve_attachment(domain, metric, config.stencil_radius)
    u0 = solve_on_growth(v0, domain, config.T, config.M, cg_tol=config.cg_tol,
                         threads=config.threads)
    ku0 = convolve(u0, problem.kernels)
    return CoupledState(0, v0, u0, ku0, activation)


def step(problem: CouplingProblem, state: CoupledState) -> CoupledState:
    """One sweep v_j -> v_{j+1} -> u_{j+1} -> Ku_{j+1} with frozen activation.

    The metric never reads the v being solved: the composed activation comes
    from the previous iterate only, optionally under-relaxed toward the
    activation that produced it.
    """
    domain, config = problem.domain, problem.config
    t0 = time.perf_counter()
    composed = compose_with_attachment(state.ku, state.v.v.values, clamp_horizon=True)
    activation = config.theta * composed + (1.0 - config.theta) * state.activation
    metric = MetricField.from_evaluator(domain.grid, problem.evaluator, activation)
    v_next = solve_attachment(domain, metric, config.stencil_radius)
    u_next = solve_on_growth(v_next, domain, config.T, config.M,
                             cg_tol=config.cg_tol, threads=config.threads)
    ku_next = convolve(u_next, problem.kernels)

    delta = _window_delta(v_next, state.v, config.R)
    times = _diag_times(config)
    dh = {}
    for t in times:
        a = sublevel(state.v.v, t)
        b = sublevel(v_next.v, t)
        if a.is_empty or b.is_empty:
            continue
        dh[repr(float(t))] = hausdorff(a, b)
    bound = delta / problem.model.sigma_lower + 2 * domain.grid.spacing
    contained = _check_containment(v_next, times, problem.model.sigma_lower)
    if not contained:
        raise SolverError("sublevel escaped the containment ball c3(t); "
                          "enlarge the window or shorten the horizon")
    record = IterationRecord(
        state.j + 1, delta, dh, bound, contained,
        float(np.nanmax(np.where(
            np.linalg.norm(domain.grid.positions(), axis=-1) <= config.R,
            v_next.v.values, np.nan))),
        time.perf_counter() - t0,
    )
    logger.info("iteration %d: delta=%.3e", record.j, delta)
    return CoupledState(state.j + 1, v_next, u_next, ku_next, activation,
                        state.history + (record,))


def run(problem: CouplingProblem) -> RunResult:
    """Iterate to the Cauchy tolerance or the iteration cap.

    On convergence the representation residual is evaluated by re-freezing the
    metric at the final iterate and re-solving.
    """
    config = problem.config
    ok, msg = config.horizon_ok(problem.domain, problem.model.sigma_lower)
    if not ok:
        raise SolverError(f"window cannot contain the growth: {msg}")
    state = initialize(problem)
    verdict = VERDICT_MAX_ITER
    while state.j < config.max_iter:
        state = step(problem, state)
        if state.history[-1].delta < config.tol:
            verdict = VERDICT_CONVERGED
            break
    residual = None
    if verdict == VERDICT_CONVERGED:
        composed = compose_with_attachment(state.ku, state.v.v.values, clamp_horizon=True)
        metric = MetricField.from_evaluator(problem.domain.grid, problem.evaluator, composed)
        residual = representation_residual(problem.domain, metric, state.v,
                                           window_radius=config.R)
    return RunResult(state, verdict, residual)
