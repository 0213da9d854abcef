"""Rectilinear lattice, node masks, and nodal scalar fields.

Every solver in the suite shares this representation: a uniform grid with
spacing h, boolean masks for the geometric sets (constraint region, seed set,
sublevels), and scalar fields stored as dense arrays with NaN marking nodes
outside the field's support. All objects are immutable after construction and
safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

ABSENT = np.nan


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform rectilinear lattice in 2 or 3 dimensions.

    Node i (an index tuple) sits at the physical position origin + spacing * i.
    """

    origin: tuple[float, ...]
    spacing: float
    shape: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if self.dim not in (2, 3):
            raise GridError(f"grid dimension must be 2 or 3, got {self.dim}")
        if len(self.origin) != self.dim:
            raise GridError("origin length does not match shape length")
        if not (self.spacing > 0):
            raise GridError("spacing must be positive")
        if any(s < 3 for s in self.shape):
            raise GridError("every shape entry must be >= 3")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> list[np.ndarray]:
        """Per-axis physical coordinates of the node planes."""
        return [
            self.origin[k] + self.spacing * np.arange(self.shape[k])
            for k in range(self.dim)
        ]

    def positions(self) -> np.ndarray:
        """Physical positions of all nodes, shape (*grid.shape, dim)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def position(self, index) -> np.ndarray:
        idx = np.asarray(index, dtype=float)
        return np.asarray(self.origin) + self.spacing * idx

    def flat_index(self, index) -> int:
        return int(np.ravel_multi_index(tuple(int(i) for i in index), self.shape))

    def unflatten(self, flat: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(int(flat), self.shape))

    def nearest_node(self, position) -> tuple[int, ...]:
        """Grid index of the node closest to a physical position."""
        rel = (np.asarray(position, dtype=float) - np.asarray(self.origin)) / self.spacing
        idx = np.rint(rel).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.shape) - 1)
        return tuple(int(i) for i in idx)


def _axis_structure(dim: int) -> np.ndarray:
    # 2*dim connectivity (no diagonals), matching the adjacency used everywhere
    return ndimage.generate_binary_structure(dim, 1)


@dataclass(frozen=True)
class Mask:
    """Boolean node membership over a grid."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=bool)
        if vals.shape != self.grid.shape:
            raise GridError(
                f"mask shape {vals.shape} does not match grid shape {self.grid.shape}"
            )
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def count(self) -> int:
        return int(self.values.sum())

    @property
    def is_empty(self) -> bool:
        return not bool(self.values.any())

    def is_connected(self) -> bool:
        """Flood-fill connectivity under axis adjacency."""
        if self.is_empty:
            return False
        _, n = ndimage.label(self.values, structure=_axis_structure(self.grid.dim))
        return n == 1

    def indices(self) -> np.ndarray:
        """Member node indices as an (n, dim) integer array, in C order."""
        return np.argwhere(self.values)

    def contains_index(self, index) -> bool:
        return bool(self.values[tuple(int(i) for i in index)])


@dataclass(frozen=True)
class ScalarField:
    """Nodal scalar data supported on a mask; unsupported nodes hold NaN."""

    grid: Grid
    support: Mask
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise GridError("field shape does not match grid shape")
        if self.support.grid is not self.grid and self.support.grid != self.grid:
            raise GridError("support mask lives on a different grid")
        if not np.all(np.isfinite(vals[self.support.values])):
            raise GridError("field has non-finite values on supported nodes")
        vals = vals.copy()
        vals[~self.support.values] = ABSENT
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_values(cls, grid: Grid, values: np.ndarray, support: Mask | None = None):
        vals = np.asarray(values, dtype=float)
        if support is None:
            support = Mask(grid, np.isfinite(vals))
        return cls(grid, support, vals)


@dataclass(frozen=True)
class DomainSpec:
    """Geometry of one problem instance.

    omega is the constraint region, v0 the seed set, gamma the Dirichlet node
    set on the discrete boundary of omega, x0 the John center inside v0, L the
    geodesic/Euclidean comparability constant, and kappa0 the declared John
    constant of the seed set.
    """

    omega: Mask
    v0: Mask
    gamma: np.ndarray
    x0: tuple[int, ...]
    L: float = 1.0
    kappa0: float = 1.0

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=int)
        if gamma.ndim == 1:
            gamma = gamma.reshape(1, -1)
        gamma.flags.writeable = False
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "x0", tuple(int(i) for i in self.x0))

    @property
    def grid(self) -> Grid:
        return self.omega.grid

    def validate(self) -> list[str]:
        """Check the discrete analogues of the geometric assumptions.

        Returns a list of human-readable violations; empty means valid.
        """
        errs = []
        g = self.grid
        if self.omega.is_empty:
            errs.append("omega is empty (H05 requires a nonempty open set)")
        elif not self.omega.is_connected():
            errs.append("omega is not connected (H05)")
        if self.v0.is_empty:
            errs.append("v0 is empty (H00u requires a nonempty seed set)")
        elif not self.v0.is_connected():
            errs.append("v0 is not connected (H00u)")
        if np.any(self.v0.values & ~self.omega.values):
            errs.append("v0 is not contained in omega (H00u requires V0 inside the constraint set)")
        if not self.v0.is_empty and not self.v0.contains_index(self.x0):
            errs.append("x0 does not belong to v0 (H00u fixes the John center in V0)")
        if self.gamma.size == 0:
            errs.append("gamma is empty (H07 requires a nonempty Dirichlet patch)")
        else:
            bnd = boundary_nodes(self.omega)
            bset = set(map(tuple, bnd.tolist()))
            v0v = self.v0.values
            for node in map(tuple, self.gamma.tolist()):
                if node not in bset:
                    errs.append(
                        f"gamma node {node} is not on the discrete boundary of omega (H07)"
                    )
                    break
            for node in map(tuple, self.gamma.tolist()):
                if v0v[node]:
                    continue
                adjacent = False
                for k in range(g.dim):
                    for s in (-1, 1):
                        nb = list(node)
                        nb[k] += s
                        if 0 <= nb[k] < g.shape[k] and v0v[tuple(nb)]:
                            adjacent = True
                if not adjacent:
                    errs.append(
                        f"gamma node {node} is neither in v0 nor adjacent to it (H07)"
                    )
                    break
        if not (self.L > 0):
            errs.append("L must be positive (E2)")
        if not (0 < self.kappa0 <= 1):
            errs.append("kappa0 must lie in (0, 1] (H00u)")
        return errs


def build_mask_from_predicate(grid: Grid, predicate) -> Mask:
    """Mask of nodes whose physical position satisfies the predicate.

    The predicate must accept an (n, dim) position array and return a boolean
    array; this matches how the shape primitives in the config layer evaluate.
    """
    pos = grid.positions().reshape(-1, grid.dim)
    member = np.asarray(predicate(pos), dtype=bool).reshape(grid.shape)
    if not member.any():
        raise GridError("empty set: predicate selects no grid node")
    return Mask(grid, member)


def sublevel(v: ScalarField, t: float) -> Mask:
    """Nodes of v's support with v < t (the grown set at time t)."""
    with np.errstate(invalid="ignore"):
        vals = v.support.values & (v.values < t)
    return Mask(v.grid, vals)


def boundary_nodes(m: Mask) -> np.ndarray:
    """Member nodes with an axis neighbor outside the mask or outside the grid.

    Returns an (n, dim) integer index array in C order.
    """
    vals = m.values
    # pad with False so grid-edge members count as boundary
    padded = np.pad(vals, 1, mode="constant", constant_values=False)
    interior = np.ones_like(vals)
    for k in range(vals.ndim):
        lo = tuple(
            slice(1, -1) if j != k else slice(0, -2) for j in range(vals.ndim)
        )
        hi = tuple(
            slice(1, -1) if j != k else slice(2, None) for j in range(vals.ndim)
        )
        interior = interior & padded[lo] & padded[hi]
    return np.argwhere(vals & ~interior.astype(bool))


def boundary_mask(m: Mask) -> Mask:
    idx = boundary_nodes(m)
    vals = np.zeros(m.grid.shape, dtype=bool)
    if idx.size:
        vals[tuple(idx.T)] = True
    return Mask(m.grid, vals)


def distance_to_complement(m: Mask) -> np.ndarray:
    """Exact Euclidean distance (physical units) from each node to the nearest
    node outside the mask. Zero outside the mask."""
    dist = ndimage.distance_transform_edt(m.values, sampling=m.grid.spacing)
    return np.asarray(dist, dtype=float)


def distance_to_set(m: Mask) -> np.ndarray:
    """Exact Euclidean distance (physical units) from each node to the nearest
    member node. Zero on members; infinity if the mask is empty."""
    if m.is_empty:
        return np.full(m.grid.shape, np.inf)
    dist = ndimage.distance_transform_edt(~m.values, sampling=m.grid.spacing)
    return np.asarray(dist, dtype=float)
