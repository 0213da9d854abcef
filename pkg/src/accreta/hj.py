"""Time-of-attachment solver: constrained geodesics on the lattice graph.

The attachment field v is the shortest-path distance from the seed set under
the anisotropic edge metric built from the support function, with the
activation argument frozen at values supplied per node. Label setting on the
discrete graph is exact for the discrete metric, so the only discretization
error is the stencil's angular consistency gap plus O(h).

Two caveats worth knowing: the continuous problem admits multiple solutions
in general, and this solver returns the unique discrete-metric minimizer,
which is one selection among them; and the constraint enters solely through
edge admissibility (curves may not leave the constraint mask), with no
separate boundary-inequality check on the constraint boundary.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .grid import ABSENT, DomainSpec, Grid, Mask, ScalarField
from .hamiltonian import SupportEvaluator

logger = logging.getLogger(__name__)

NO_PREDECESSOR = -9999
_BOUND_TOL = 1e-9


class SolverError(RuntimeError):
    pass


def lattice_offsets(dim: int, radius: int) -> np.ndarray:
    """gcd-reduced integer offsets of Chebyshev radius <= radius, fixed order."""
    if radius not in (1, 2, 3):
        raise ValueError("stencil radius must be 1, 2, or 3")
    offs = []
    for o in itertools.product(range(-radius, radius + 1), repeat=dim):
        if all(c == 0 for c in o):
            continue
        if math.gcd(*(abs(c) for c in o)) != 1:
            continue
        offs.append(o)
    offs.sort()
    return np.asarray(offs, dtype=int)


def stencil_angular_constant(offsets: np.ndarray) -> float:
    """Dimensionless constant entering the gradient-check slack.

    sec of half the largest angular gap between stencil directions, times the
    longest offset length in lattice units: the first factor is the directional
    consistency inflator of the discrete metric, the second covers the source
    staircase quantization that centered differences can straddle within one
    stencil step.
    """
    dirs = offsets / np.linalg.norm(offsets, axis=1, keepdims=True)
    if offsets.shape[1] == 2:
        ang = np.sort(np.arctan2(dirs[:, 1], dirs[:, 0]))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
        max_gap = float(gaps.max())
    else:
        probes = _fibonacci_sphere(2048)
        cosines = probes @ dirs.T
        max_gap = 2.0 * float(np.arccos(np.clip(cosines.max(axis=1), -1, 1)).max())
    sec = 1.0 / math.cos(max_gap / 2.0)
    return sec * float(np.linalg.norm(offsets, axis=1).max())


def _fibonacci_sphere(m: int) -> np.ndarray:
    k = np.arange(m) + 0.5
    phi = np.arccos(1.0 - 2.0 * k / m)
    theta = np.pi * (1.0 + math.sqrt(5.0)) * k
    return np.stack(
        [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)], axis=1
    )


@dataclass(frozen=True)
class MetricField:
    """Edge-cost generator: per-node frozen activation plus a support evaluator.

    cost(edge a -> b) = |b - a| * sigma(midpoint, activation(midpoint), unit(b - a))
    with the midpoint activation interpolated multilinearly from nodal values.
    """

    grid: Grid
    activation: np.ndarray = field(repr=False)
    evaluator: SupportEvaluator
    sigma_lower: float
    sigma_upper: float

    def __post_init__(self):
        act = np.asarray(self.activation, dtype=float)
        if act.shape != self.grid.shape:
            raise ValueError("activation shape does not match grid")
        object.__setattr__(self, "activation", act)

    @classmethod
    def from_evaluator(cls, grid: Grid, evaluator: SupportEvaluator,
                       activation: np.ndarray | None = None):
        if activation is None:
            activation = np.zeros(grid.shape)
        m = evaluator.model
        return cls(grid, activation, evaluator, m.sigma_lower, m.sigma_upper)


@dataclass(frozen=True)
class AttachmentField:
    """Solved attachment times with the shortest-path tree for backtracking."""

    grid: Grid
    domain: DomainSpec
    v: ScalarField
    predecessor: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)
    stencil_radius: int

    @property
    def h(self) -> float:
        return self.grid.spacing


def _offset_slices(n: int, o: int) -> tuple[slice, slice]:
    """Start/end slices along one axis so both i and i+o stay in-grid."""
    return slice(max(0, -o), n - max(0, o)), slice(max(0, o), n + min(0, o))


def build_edges(omega: Mask, metric: MetricField, stencil_radius: int):
    """Directed edge arrays (rows, cols, costs) of the admissible lattice graph.

    An edge i -> i+o is admissible when both endpoints and every node carrying
    interpolation weight at the segment midpoint belong to omega; the midpoint
    rule is what prevents corner cutting through the constraint boundary.
    """
    grid = metric.grid
    dim = grid.dim
    h = grid.spacing
    offsets = lattice_offsets(dim, stencil_radius)
    member = omega.values
    origin = np.asarray(grid.origin)

    all_rows, all_cols, all_costs = [], [], []
    flat = np.arange(grid.node_count).reshape(grid.shape)
    for o in offsets:
        src_sl, dst_sl = zip(*(_offset_slices(grid.shape[k], int(o[k])) for k in range(dim)))
        src = flat[tuple(src_sl)].ravel()
        dst = flat[tuple(dst_sl)].ravel()
        ok = member[tuple(src_sl)].ravel() & member[tuple(dst_sl)].ravel()

        # nodes spanning the midpoint cell: floor(o/2) plus 0/1 on odd axes
        lo = np.floor_divide(o, 2)
        odd_axes = [k for k in range(dim) if o[k] % 2 != 0]
        corners = []
        for choice in itertools.product((0, 1), repeat=len(odd_axes)):
            corner = lo.copy()
            for ax, c in zip(odd_axes, choice):
                corner[ax] += c
            corners.append(corner)
        act_sum = np.zeros(src.shape)
        for corner in corners:
            sl = tuple(
                slice(src_sl[k].start + int(corner[k]), src_sl[k].stop + int(corner[k]))
                for k in range(dim)
            )
            ok &= member[sl].ravel()
            act_sum += metric.activation[sl].ravel()
        if not ok.any():
            continue
        src, dst = src[ok], dst[ok]
        act_mid = act_sum[ok] / len(corners)
        idx = np.stack(np.unravel_index(src, grid.shape), axis=1).astype(float)
        mid_pos = origin + h * (idx + 0.5 * o)

        length = h * float(np.linalg.norm(o))
        qhat = o / np.linalg.norm(o)
        sigma = metric.evaluator.support_unit_batch(mid_pos, act_mid, qhat)
        if not np.all(np.isfinite(sigma)):
            raise SolverError("non-finite edge cost in the metric")
        if np.any(sigma < metric.sigma_lower * (1 - _BOUND_TOL)) or np.any(
            sigma > metric.sigma_upper * (1 + _BOUND_TOL)
        ):
            raise SolverError(
                "metric rate escapes the declared [sigma_lower, sigma_upper] band; "
                "run verify_bounds on the model"
            )
        all_rows.append(src)
        all_cols.append(dst)
        all_costs.append(length * sigma)

    if not all_rows:
        raise SolverError("graph has no admissible edges")
    return (
        np.concatenate(all_rows),
        np.concatenate(all_cols),
        np.concatenate(all_costs),
        offsets,
    )


def solve_attachment(domain: DomainSpec, metric: MetricField,
                     stencil_radius: int = 2) -> AttachmentField:
    """Label-setting solve of the constrained geodesic problem.

    All seed nodes inside omega are sources with label zero. Unreachable
    omega nodes (disconnected pockets) come back absent and are treated as
    never grown by the downstream modules.
    """
    grid = metric.grid
    omega = domain.omega
    sources = np.flatnonzero((domain.v0.values & omega.values).ravel())
    if sources.size == 0:
        raise SolverError("empty source: no seed node inside omega")

    rows, cols, costs, offsets = build_edges(omega, metric, stencil_radius)
    graph = csr_matrix((costs, (rows, cols)), shape=(grid.node_count, grid.node_count))
    dist, pred, _ = _csgraph_dijkstra(
        graph, directed=True, indices=sources, min_only=True, return_predecessors=True
    )

    values = np.where(omega.values.ravel(), dist, np.inf).reshape(grid.shape)
    reachable = Mask(grid, omega.values & np.isfinite(values))
    n_pockets = omega.count - reachable.count
    if n_pockets:
        logger.warning("%d omega nodes unreachable from the seed set", n_pockets)
    field_vals = np.where(reachable.values, values, ABSENT)
    v = ScalarField(grid, reachable, field_vals)
    return AttachmentField(grid, domain, v, pred, offsets, stencil_radius)


def backtrack_curve(a: AttachmentField, node) -> tuple[np.ndarray, float]:
    """Polyline of the optimal discrete curve from a node down to the seed set.

    Returns (vertices, length): vertices are physical positions ordered from
    the query node to its source; a seed node returns itself with length 0.
    """
    grid = a.grid
    if not isinstance(node, (int, np.integer)):
        node = grid.flat_index(node)
    idx = grid.unflatten(node)
    if not np.isfinite(a.v.values[idx]):
        raise SolverError(f"node {idx} carries no attachment value")
    chain = [node]
    seen = {node}
    cur = node
    while a.predecessor[cur] != NO_PREDECESSOR:
        cur = int(a.predecessor[cur])
        if cur in seen:
            raise SolverError("predecessor chain contains a cycle")
        seen.add(cur)
        chain.append(cur)
    tail = grid.unflatten(chain[-1])
    if not a.domain.v0.values[tail]:
        raise SolverError("predecessor chain does not terminate in the seed set")
    verts = np.array([grid.position(grid.unflatten(c)) for c in chain])
    length = float(np.sum(np.linalg.norm(np.diff(verts, axis=0), axis=1))) if len(verts) > 1 else 0.0
    return verts, length


@dataclass(frozen=True)
class GradientReport:
    max_gradient: float
    bound: float
    slack: float
    fraction_exceeding: float
    interior_nodes: int

    @property
    def passed(self) -> bool:
        return self.max_gradient <= self.bound


def discrete_gradient_bound(a: AttachmentField, L: float, sigma_upper: float) -> GradientReport:
    """Centered-difference |grad v| on interior omega nodes against the
    Lipschitz bound sigma_upper * L plus the stencil slack."""
    v = a.v.values
    h = a.h
    omega = a.domain.omega.values
    finite = np.isfinite(v)
    grad_sq = np.zeros(v.shape)
    interior = omega & finite
    for k in range(a.grid.dim):
        plus = np.roll(v, -1, axis=k)
        minus = np.roll(v, 1, axis=k)
        okp = np.roll(omega & finite, -1, axis=k)
        okm = np.roll(omega & finite, 1, axis=k)
        # roll wraps around; cut the wrapped layers
        edge_lo = tuple(slice(0, 1) if j == k else slice(None) for j in range(a.grid.dim))
        edge_hi = tuple(slice(-1, None) if j == k else slice(None) for j in range(a.grid.dim))
        okp[edge_hi] = False
        okm[edge_lo] = False
        interior = interior & okp & okm
        with np.errstate(invalid="ignore"):
            grad_sq = grad_sq + ((plus - minus) / (2 * h)) ** 2
    n_int = int(interior.sum())
    if n_int == 0:
        return GradientReport(0.0, sigma_upper * L, 0.0, 0.0, 0)
    mag = np.sqrt(grad_sq[interior])
    slack = 2.0 * sigma_upper * h * stencil_angular_constant(a.offsets)
    bound = sigma_upper * L + slack
    return GradientReport(
        float(mag.max()), bound, slack, float(np.mean(mag > bound)), n_int
    )


def representation_residual(domain: DomainSpec, metric: MetricField,
                            a: AttachmentField, window_radius: float | None = None) -> float:
    """Fixed-point self-consistency: re-solve with the metric as given and
    return the sup-norm change of v over omega (optionally within B_R).

    The caller must freeze the metric at the same (v, activation) pair the
    field was solved with; at a coupled fixed point the residual is bounded by
    the coupling tolerance, and it is exactly zero when the model ignores u.
    """
    redo = solve_attachment(domain, metric, a.stencil_radius)
    va, vb = a.v.values, redo.v.values
    both = np.isfinite(va) & np.isfinite(vb)
    if window_radius is not None:
        pos = a.grid.positions()
        both &= np.linalg.norm(pos, axis=-1) <= window_radius
    if not both.any():
        return 0.0
    return float(np.max(np.abs(va[both] - vb[both])))
