"""Shared geometry builders and the independent oracles used across tests.

The oracles here deliberately avoid the library's solver code paths: the
shortest-path oracle is a plain heapq Dijkstra over an edge list, the Poisson
oracle is a dense LU solve of the assembled system, and the Hausdorff oracle
is the O(N^2) pairwise scan.
"""

from __future__ import annotations

import heapq

import numpy as np
import pytest

from accreta.grid import DomainSpec, Grid, Mask, boundary_nodes
from accreta.hamiltonian import HamiltonianModel, SupportEvaluator, constant_rate


def window_grid(n: int = 41, half: float = 2.0, center=(0.0, 0.0)) -> Grid:
    h = 2.0 * half / (n - 1)
    return Grid((center[0] - half, center[1] - half), h, (n, n))


def full_mask(grid: Grid) -> Mask:
    return Mask(grid, np.ones(grid.shape, dtype=bool))


def ball_mask(grid: Grid, center, radius: float) -> Mask:
    pos = grid.positions()
    return Mask(grid, np.linalg.norm(pos - np.asarray(center), axis=-1) < radius)


def free_space_domain(grid: Grid, seed_radius: float = 1.0) -> DomainSpec:
    """Unconstrained setup: omega is the whole window, seed ball at the origin,
    Dirichlet nodes on the window frame inside the seed (unused by hj tests)."""
    omega = full_mask(grid)
    v0 = ball_mask(grid, (0.0,) * grid.dim, seed_radius)
    bnd = boundary_nodes(omega)
    keep = v0.values[tuple(bnd.T)]
    gamma = bnd[keep] if keep.any() else v0.indices()[:1]
    x0 = grid.nearest_node((0.0,) * grid.dim)
    return DomainSpec(omega, v0, gamma, x0, L=1.0, kappa0=1.0)


def eikonal_evaluator(speed: float = 1.0) -> SupportEvaluator:
    return SupportEvaluator(HamiltonianModel.constant_eikonal(speed))


def wall_domain(n: int = 61, kappa0: float = 0.45) -> DomainSpec:
    """Constrained benchmark geometry: box omega inside the window, seed
    half-ball on the bottom wall, Dirichlet patch on the wall."""
    h = 5.0 / (n - 1)
    grid = Grid((-2.5, -0.5), h, (n, n))
    pos = grid.positions()
    box = (np.abs(pos[..., 0]) <= 2.4) & (pos[..., 1] >= -0.45) & (pos[..., 1] <= 3.4)
    omega = Mask(grid, box)
    c = np.array([0.0, -0.45])
    v0 = Mask(grid, (np.linalg.norm(pos - c, axis=-1) < 0.5) & box)
    bnd = boundary_nodes(omega)
    gamma = bnd[v0.values[tuple(bnd.T)]]
    x0 = grid.nearest_node((0.0, -0.2))
    return DomainSpec(omega, v0, gamma, x0, L=1.0, kappa0=kappa0)


# -- oracles -----------------------------------------------------------------


def dijkstra_oracle(n_nodes: int, rows, cols, costs, sources) -> np.ndarray:
    """Plain binary-heap label setting over an explicit edge list."""
    adj: dict[int, list[tuple[int, float]]] = {}
    for r, c, w in zip(rows, cols, costs):
        adj.setdefault(int(r), []).append((int(c), float(w)))
    dist = np.full(n_nodes, np.inf)
    heap = []
    for s in sources:
        dist[int(s)] = 0.0
        heapq.heappush(heap, (0.0, int(s)))
    settled = np.zeros(n_nodes, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if settled[u] or d > dist[u]:
            continue
        settled[u] = True
        for v, w in adj.get(u, ()):
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def dense_poisson_oracle(A, rhs) -> np.ndarray:
    """LU solve of the same assembled system."""
    return np.linalg.solve(A.toarray(), rhs)


def hausdorff_oracle(a: Mask, b: Mask) -> float:
    """O(N^2) pairwise excess computation."""
    pa = a.indices() * a.grid.spacing
    pb = b.indices() * b.grid.spacing
    d_ab = max(np.min(np.linalg.norm(pb - p, axis=1)) for p in pa)
    d_ba = max(np.min(np.linalg.norm(pa - p, axis=1)) for p in pb)
    return float(max(d_ab, d_ba))


def random_connected_mask(grid: Grid, rng, fill: float = 0.6) -> Mask:
    """Random mask restricted to its largest connected component."""
    from scipy import ndimage

    vals = rng.random(grid.shape) < fill
    labels, n = ndimage.label(vals, structure=ndimage.generate_binary_structure(grid.dim, 1))
    if n == 0:
        vals[tuple(s // 2 for s in grid.shape)] = True
        return Mask(grid, vals)
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=range(1, n + 1))
    keep = 1 + int(np.argmax(sizes))
    return Mask(grid, labels == keep)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
