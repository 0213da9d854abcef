"""Masked Poisson solves: -Laplace(u) = 1 on each grown sublevel.

Finite-volume discretization on the mask: links to nodes outside the mask are
dropped, which realizes the homogeneous Neumann condition in the discrete
variational sense; Dirichlet nodes are eliminated with value zero. Source
volumes shrink to half cells on axis sides where a neighbor is missing, so
the mixed-BC strip fixture reproduces its quadratic solution to solver
tolerance instead of first order (see the volume rule in _cell_volumes).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import cg

from .grid import ABSENT, DomainSpec, Grid, Mask, ScalarField, sublevel
from .hj import AttachmentField, SolverError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PoissonProblem:
    """Unit-source Poisson problem on a mask with nodal Dirichlet constraints."""

    mask: Mask
    dirichlet: np.ndarray
    h: float

    def __post_init__(self):
        d = np.asarray(self.dirichlet, dtype=int)
        if d.ndim == 1:
            d = d.reshape(1, -1)
        object.__setattr__(self, "dirichlet", d)


@dataclass(frozen=True)
class TimeField:
    """u(., t_m) on the growing sublevels, sampled at uniform times."""

    grid: Grid
    times: np.ndarray
    slices: list = field(repr=False)

    def values_stack(self) -> np.ndarray:
        return np.stack([s.values for s in self.slices])


def _axis_neighbor_counts(region: np.ndarray) -> list[np.ndarray]:
    """Per axis, how many of the two axis neighbors are inside the region."""
    dim = region.ndim
    counts = []
    padded = np.pad(region, 1, constant_values=False)
    for k in range(dim):
        lo = tuple(slice(1, -1) if j != k else slice(0, -2) for j in range(dim))
        hi = tuple(slice(1, -1) if j != k else slice(2, None) for j in range(dim))
        counts.append(padded[lo].astype(int) + padded[hi].astype(int))
    return counts


def _cell_volumes(region: np.ndarray, h: float) -> np.ndarray:
    """FV cell volume per node: full h along an axis with both neighbors (or
    neither: a one-node-thick sheet keeps thickness h), half where exactly one
    neighbor is missing (the Neumann wall passes through the node)."""
    vol = np.full(region.shape, h ** region.ndim)
    for counts in _axis_neighbor_counts(region):
        factor = np.where(counts == 1, 0.5, 1.0)
        vol = vol * factor
    vol[~region] = 0.0
    return vol


def _dirichlet_mask(shape, dirichlet: np.ndarray) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    if dirichlet.size:
        m[tuple(dirichlet.T)] = True
    return m


def _solve_region(mask: Mask, dirichlet: np.ndarray) -> np.ndarray:
    """Connected component(s) of the mask holding Dirichlet nodes."""
    structure = ndimage.generate_binary_structure(mask.grid.dim, 1)
    labels, n = ndimage.label(mask.values, structure=structure)
    dmask = _dirichlet_mask(mask.grid.shape, dirichlet) & mask.values
    if not dmask.any():
        raise SolverError("non-coercive problem: empty Dirichlet set")
    keep = np.unique(labels[dmask])
    region = np.isin(labels, keep) & mask.values
    dropped = int(mask.values.sum() - region.sum())
    if dropped:
        logger.warning(
            "dropping %d mask nodes in pockets not connected to the Dirichlet set",
            dropped,
        )
    return region


def assemble(problem: PoissonProblem):
    """Assemble the SPD system on the free nodes of the solve region.

    Returns (A, rhs, free_flat_indices, region) with A in integrated FV form:
    link coefficients h^(dim-2), rhs the per-node cell volume times the unit
    source.
    """
    grid = problem.mask.grid
    dim = grid.dim
    h = problem.h
    region = _solve_region(problem.mask, problem.dirichlet)
    dmask = _dirichlet_mask(grid.shape, problem.dirichlet) & region
    free = region & ~dmask

    flat = np.arange(grid.node_count).reshape(grid.shape)
    free_flat = flat[free]
    index_of = np.full(grid.node_count, -1, dtype=int)
    index_of[free_flat] = np.arange(free_flat.size)

    coeff = h ** (dim - 2)
    rows, cols, data = [], [], []
    diag = np.zeros(free_flat.size)
    for k in range(dim):
        lo = tuple(slice(None) if j != k else slice(0, -1) for j in range(dim))
        hi = tuple(slice(None) if j != k else slice(1, None) for j in range(dim))
        a = flat[lo].ravel()
        b = flat[hi].ravel()
        link = (region[lo] & region[hi]).ravel()
        a, b = a[link], b[link]
        fa, fb = index_of[a], index_of[b]
        both = (fa >= 0) & (fb >= 0)
        np.add.at(diag, fa[fa >= 0], coeff)
        np.add.at(diag, fb[fb >= 0], coeff)
        rows.extend([fa[both], fb[both]])
        cols.extend([fb[both], fa[both]])
        data.extend([np.full(both.sum(), -coeff)] * 2)
    rows.append(np.arange(free_flat.size))
    cols.append(np.arange(free_flat.size))
    data.append(diag)
    A = coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(free_flat.size, free_flat.size),
    ).tocsr()
    rhs = _cell_volumes(region, h)[free]
    return A, rhs, free_flat, region


def solve_poisson(problem: PoissonProblem, cg_tol: float = 1e-8,
                  max_iter: int | None = None, x0: np.ndarray | None = None) -> ScalarField:
    """Conjugate-gradient solve to relative residual cg_tol.

    x0 optionally warm-starts CG with nodal values over the whole grid
    (missing nodes may be NaN; they enter as zero).
    """
    grid = problem.mask.grid
    A, rhs, free_flat, region = assemble(problem)
    n = free_flat.size
    values = np.zeros(grid.shape)
    if n:
        if max_iter is None:
            max_iter = 10 * n
        start = None
        if x0 is not None:
            start = np.nan_to_num(np.asarray(x0, dtype=float).ravel()[free_flat])
        sol, info = cg(A, rhs, x0=start, rtol=cg_tol, atol=0.0, maxiter=max_iter)
        if info != 0:
            res = float(np.linalg.norm(rhs - A @ sol) / np.linalg.norm(rhs))
            raise SolverError(
                f"CG did not reach tol {cg_tol} in {max_iter} iterations "
                f"(relative residual {res:.3e})"
            )
        values.ravel()[free_flat] = sol
    field_vals = np.where(region, values, ABSENT)
    return ScalarField(grid, Mask(grid, region), field_vals)


def residual_norm(problem: PoissonProblem, u: ScalarField) -> float:
    """Relative algebraic residual of a solved field (one matvec)."""
    A, rhs, free_flat, _ = assemble(problem)
    if free_flat.size == 0:
        return 0.0
    x = np.nan_to_num(u.values.ravel()[free_flat])
    return float(np.linalg.norm(rhs - A @ x) / np.linalg.norm(rhs))


def dirichlet_energy(u: ScalarField) -> float:
    """Integral of |grad u|^2 over the support using forward links."""
    grid = u.grid
    h = grid.spacing
    vals = np.nan_to_num(u.values)
    sup = u.support.values
    total = 0.0
    for k in range(grid.dim):
        lo = tuple(slice(None) if j != k else slice(0, -1) for j in range(grid.dim))
        hi = tuple(slice(None) if j != k else slice(1, None) for j in range(grid.dim))
        link = sup[lo] & sup[hi]
        diff = (vals[hi] - vals[lo])[link] / h
        total += float(np.sum(diff**2)) * h**grid.dim
    return total


def source_integral(u: ScalarField) -> float:
    """Integral of u over the support with the assembly's cell volumes."""
    vols = _cell_volumes(u.support.values, u.grid.spacing)
    return float(np.sum(np.nan_to_num(u.values) * vols))


def poincare_ratio(u: ScalarField, h: float) -> float:
    """Discrete ||u||_{H1} / ||grad u||_{L2}; 1 by convention for u == 0."""
    grad_sq = dirichlet_energy(u)
    l2_sq = float(np.sum(np.nan_to_num(u.values) ** 2)) * h**u.grid.dim
    if grad_sq == 0.0:
        return 1.0
    return float(np.sqrt((l2_sq + grad_sq) / grad_sq))


def slice_mask(v: AttachmentField, domain: DomainSpec, t: float) -> Mask:
    """Sublevel of v at time t, unioned with the seed mask.

    The union keeps the Dirichlet patch inside every slice even when the
    staircase boundary of a small sublevel would miss it.
    """
    sub = sublevel(v.v, t)
    return Mask(v.grid, (sub.values | domain.v0.values) & domain.omega.values)


def solve_on_growth(v: AttachmentField, domain: DomainSpec, T: float, M: int,
                    cg_tol: float = 1e-8, threads: int = 1) -> TimeField:
    """Solve the activation slices on the growing sublevels at t_m = m T / M.

    Sequential mode warm-starts each slice from the previous one extended by
    zero; with threads > 1 the slices solve independently from zero initial
    guesses.
    """
    if M < 1:
        raise ValueError("need at least one time step")
    times = np.linspace(0.0, float(T), M + 1)
    problems = []
    for t in times:
        mask = slice_mask(v, domain, t) if t > 0 else Mask(
            v.grid, domain.v0.values & domain.omega.values
        )
        inside = mask.values[tuple(domain.gamma.T)] if domain.gamma.size else np.array([])
        gam = domain.gamma[inside] if inside.size else domain.gamma[:0]
        if gam.shape[0] == 0:
            raise SolverError(f"slice at t={t:g} excludes every Dirichlet node")
        problems.append(PoissonProblem(mask, gam, v.grid.spacing))

    slices: list[ScalarField | None]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            slices = list(ex.map(lambda p: solve_poisson(p, cg_tol=cg_tol), problems))
    else:
        slices = []
        prev = None
        for p in problems:
            u = solve_poisson(p, cg_tol=cg_tol, x0=prev)
            slices.append(u)
            prev = u.values
    return TimeField(v.grid, times, slices)
