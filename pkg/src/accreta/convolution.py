"""Space-time convolution of the activation slices.

Ku(x, t) integrates k(t - s) * phi(x - y) against the zero-extension of each
slice: spatial part by direct summation over the truncated phi stencil
(scipy.ndimage.correlate with constant zero padding is exactly that sum),
time part by the trapezoid rule on the slice samples. The stencil is
renormalized so its discrete integral matches the analytic integral of phi,
which keeps the constant-input oracle exact up to time quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .elliptic import TimeField
from .grid import Grid, ScalarField


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class TimeKernel:
    """Nonnegative integrable kernel k on [0, infinity)."""

    family: str
    rate: float = 1.0
    table_s: np.ndarray | None = field(default=None, repr=False)
    table_k: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def exponential(cls, rate: float):
        """k(s) = rate * exp(-rate s)."""
        if rate <= 0:
            raise KernelError("exponential rate must be positive")
        return cls("exponential", rate=float(rate))

    @classmethod
    def tabulated(cls, s_values, k_values):
        s = np.asarray(s_values, dtype=float)
        k = np.asarray(k_values, dtype=float)
        if s.ndim != 1 or s.shape != k.shape or len(s) < 2:
            raise KernelError("kernel table needs matching 1D arrays, length >= 2")
        if s[0] != 0.0 or np.any(np.diff(s) <= 0):
            raise KernelError("kernel table must start at s=0 and increase strictly")
        if np.any(k < 0):
            raise KernelError("kernel must be nonnegative")
        return cls("table", table_s=s, table_k=k)

    @property
    def horizon(self) -> float:
        return math.inf if self.family == "exponential" else float(self.table_s[-1])

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "exponential":
            return self.rate * np.exp(-self.rate * s)
        return np.interp(s, self.table_s, self.table_k)

    def at_zero(self) -> float:
        return float(self(0.0))

    def l1_norm(self) -> float:
        if self.family == "exponential":
            return 1.0
        return float(np.trapezoid(self.table_k, self.table_s))

    def derivative_l1_norm(self) -> float:
        """Total variation surrogate for ||k'||_L1."""
        if self.family == "exponential":
            return self.rate
        return float(np.sum(np.abs(np.diff(self.table_k))))


@dataclass(frozen=True)
class SpatialKernel:
    """Nonnegative radial mollifier phi with truncated support."""

    family: str
    width: float = 1.0
    truncation_radius: float = 4.0
    table_r: np.ndarray | None = field(default=None, repr=False)
    table_phi: np.ndarray | None = field(default=None, repr=False)
    integral: float = 1.0  # analytic integral the stencil is renormalized to

    @classmethod
    def gaussian(cls, width: float, truncation_radius: float | None = None):
        """Normalized Gaussian of the stated width, truncated (default 4w)."""
        if width <= 0:
            raise KernelError("gaussian width must be positive")
        r = 4.0 * width if truncation_radius is None else float(truncation_radius)
        if r < width:
            raise KernelError("truncation radius below one width loses the mass scale")
        return cls("gaussian", width=float(width), truncation_radius=r, integral=1.0)

    @classmethod
    def tabulated_radial(cls, radii, values, integral: float | None = None):
        r = np.asarray(radii, dtype=float)
        p = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != p.shape or len(r) < 2:
            raise KernelError("radial table needs matching 1D arrays, length >= 2")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise KernelError("radial table must start at r=0 and increase strictly")
        if np.any(p < 0):
            raise KernelError("phi must be nonnegative")
        return cls("table", truncation_radius=float(r[-1]), table_r=r, table_phi=p,
                   integral=1.0 if integral is None else float(integral))

    def stencil(self, grid: Grid) -> np.ndarray:
        """Discrete weights phi(offset) * h^dim on the truncated footprint,
        rescaled so they sum to the analytic integral."""
        h = grid.spacing
        dim = grid.dim
        m = max(1, int(math.ceil(self.truncation_radius / h)))
        ax = np.arange(-m, m + 1) * h
        mesh = np.meshgrid(*([ax] * dim), indexing="ij")
        r = np.sqrt(sum(c**2 for c in mesh))
        if self.family == "gaussian":
            w = self.width
            phi = np.exp(-(r**2) / (2 * w * w)) / ((2 * math.pi) ** (dim / 2) * w**dim)
        else:
            phi = np.interp(r, self.table_r, self.table_phi)
        phi = np.where(r <= self.truncation_radius, phi, 0.0)
        weights = phi * h**dim
        total = float(weights.sum())
        if total <= 0:
            raise KernelError("phi stencil has no mass at this grid resolution")
        return weights * (self.integral / total)

    def l2_norm_discrete(self, grid: Grid) -> float:
        """Grid-scale surrogate for ||phi||_L2 from the renormalized stencil."""
        w = self.stencil(grid)
        h = grid.spacing
        dens = w / h**grid.dim
        return float(np.sqrt(np.sum(dens**2) * h**grid.dim))

    def gradient_l1_discrete(self, grid: Grid) -> float:
        """Grid-scale surrogate for the integral of |grad phi|."""
        w = self.stencil(grid)
        h = grid.spacing
        dens = w / h**grid.dim
        total = 0.0
        for k in range(grid.dim):
            total += float(np.sum(np.abs(np.diff(dens, axis=k)) / h)) * h**grid.dim
        return total


@dataclass(frozen=True)
class KernelPair:
    k: TimeKernel
    phi: SpatialKernel

    def validate(self) -> list[str]:
        errs = []
        if self.k.l1_norm() <= 0 or not math.isfinite(self.k.l1_norm()):
            errs.append("time kernel has no finite positive mass (H06)")
        if not math.isfinite(self.k.derivative_l1_norm()):
            errs.append("time kernel derivative has infinite total variation (H06)")
        if self.phi.integral <= 0:
            errs.append("spatial kernel integral must be positive (H06)")
        return errs


@dataclass(frozen=True)
class ActivationTrace:
    """Ku on every grid node per sampled time."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (len(self.times), *self.grid.shape):
            raise KernelError("trace shape mismatch")
        object.__setattr__(self, "values", vals)


def _trapezoid_weights(m: int, dt: float) -> np.ndarray:
    w = np.full(m + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def convolve(u: TimeField, kp: KernelPair) -> ActivationTrace:
    """Space-time convolution of the trivial zero-extension of the slices."""
    times = np.asarray(u.times, dtype=float)
    if len(times) < 2:
        raise KernelError("need at least two time samples")
    dt = float(times[1] - times[0])
    if dt <= 0:
        raise KernelError("time samples must increase")
    if times[-1] > kp.k.horizon:
        raise KernelError(
            f"kernel horizon {kp.k.horizon:g} shorter than the final time {times[-1]:g}"
        )
    stencil = kp.phi.stencil(u.grid)
    spatial = np.empty((len(times), *u.grid.shape))
    for l, s in enumerate(u.slices):
        ubar = np.nan_to_num(s.values)
        spatial[l] = ndimage.correlate(ubar, stencil, mode="constant", cval=0.0)
    out = np.zeros_like(spatial)
    for m in range(1, len(times)):
        w = _trapezoid_weights(m, dt) * kp.k(times[m] - times[: m + 1])
        out[m] = np.tensordot(w, spatial[: m + 1], axes=(0, 0))
    return ActivationTrace(u.grid, times, out)


def sample_composed(trace: ActivationTrace, v: ScalarField, node) -> float:
    """Ku(x, v(x)) at one node by linear interpolation in time."""
    node = tuple(int(i) for i in node)
    t = float(v.values[node])
    if not math.isfinite(t):
        raise KernelError(f"attachment time at node {node} is absent")
    if t > trace.times[-1] + 1e-12:
        raise KernelError(
            f"time horizon exceeded: v={t:g} beyond the trace horizon {trace.times[-1]:g}"
        )
    column = trace.values[(slice(None), *node)]
    return float(np.interp(min(t, trace.times[-1]), trace.times, column))


def compose_with_attachment(trace: ActivationTrace, v_values: np.ndarray,
                            clamp_horizon: bool = False) -> np.ndarray:
    """Vectorized x -> Ku(x, v(x)) over the whole grid.

    Non-finite or beyond-horizon attachment times are clamped to the horizon
    when clamp_horizon is set (those nodes never influence the grown sets
    within the horizon); otherwise they raise.
    """
    T = float(trace.times[-1])
    t = np.asarray(v_values, dtype=float).copy()
    bad = ~np.isfinite(t) | (t > T)
    if bad.any():
        if not clamp_horizon:
            raise KernelError("time horizon exceeded for some nodes")
        t[bad] = T
    t = np.clip(t, trace.times[0], T)
    # piecewise-linear interpolation in time, vectorized over all nodes
    pos = np.searchsorted(trace.times, t, side="right") - 1
    pos = np.clip(pos, 0, len(trace.times) - 2)
    t0 = trace.times[pos]
    t1 = trace.times[pos + 1]
    w = np.where(t1 > t0, (t - t0) / (t1 - t0), 0.0)
    flat = trace.values.reshape(len(trace.times), -1)
    cols = np.arange(flat.shape[1]).reshape(trace.grid.shape)
    lower = flat[pos.ravel(), cols.ravel()].reshape(trace.grid.shape)
    upper = flat[pos.ravel() + 1, cols.ravel()].reshape(trace.grid.shape)
    return lower * (1.0 - w) + upper * w


def sup_norm_l2_slices(u: TimeField) -> float:
    """sup over t of the discrete L2 norm of the zero-extended slice."""
    h = u.grid.spacing
    best = 0.0
    for s in u.slices:
        best = max(best, float(np.sqrt(np.sum(np.nan_to_num(s.values) ** 2) * h**u.grid.dim)))
    return best


def young_bound(kp: KernelPair, u: TimeField) -> float:
    """Uniform bound on |Ku| from the kernel norms: ||k||_L1 ||phi||_L2 sup||u||_L2."""
    return kp.k.l1_norm() * kp.phi.l2_norm_discrete(u.grid) * sup_norm_l2_slices(u)


def time_lipschitz_constant(kp: KernelPair, u: TimeField) -> float:
    """C_K = (|k(0)| + ||k'||_L1) ||phi||_L2 sup||u||_L2."""
    return (
        (abs(kp.k.at_zero()) + kp.k.derivative_l1_norm())
        * kp.phi.l2_norm_discrete(u.grid)
        * sup_norm_l2_slices(u)
    )
