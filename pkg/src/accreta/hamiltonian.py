"""Hamiltonian models with convex bounded sublevels and their support functions.

The geodesic solver never consumes H directly: it consumes the support
function sigma(x, u, q) = sup{q.p : H(x, u, p) <= 0} of the zero sublevel.
Analytic kinds (generalized eikonal, ellipsoidal) have closed-form sigma;
arbitrary evaluators fall back to direction sampling with bisection along
rays, which is safe because the sublevel is convex and sandwiched between
the declared balls B_{sigma_lower} and B_{sigma_upper}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class HamiltonianError(ValueError):
    pass


def _as_points(x) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    return pts


def clamp(u, lo, hi):
    return np.minimum(np.maximum(u, lo), hi)


@dataclass(frozen=True)
class HamiltonianModel:
    """H(x, u, p) with declared sublevel bounds sigma_lower <= sigma_upper.

    kind is one of "generalized_eikonal", "ellipsoidal", "custom". The payload
    callables must accept vectorized inputs: gamma/axes take an (n, dim)
    position array and an (n,) u array; a custom evaluator takes a single
    (x, u, p) triple.
    """

    kind: str
    sigma_lower: float
    sigma_upper: float
    gamma: Callable | None = field(default=None, repr=False)
    axes: Callable | None = field(default=None, repr=False)
    evaluator: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if not (0 < self.sigma_lower <= self.sigma_upper):
            raise HamiltonianError("need 0 < sigma_lower <= sigma_upper")

    @classmethod
    def generalized_eikonal(cls, gamma, sigma_lower: float, sigma_upper: float):
        """H(x,u,p) = gamma(x,u)|p| - 1; the sublevel is the ball of radius 1/gamma."""
        return cls("generalized_eikonal", sigma_lower, sigma_upper, gamma=gamma)

    @classmethod
    def constant_eikonal(cls, speed: float = 1.0):
        s = float(speed)
        return cls.generalized_eikonal(
            lambda x, u: np.full(len(_as_points(x)), 1.0 / s), s, s
        )

    @classmethod
    def ellipsoidal(cls, axes, sigma_lower: float, sigma_upper: float):
        """Sublevel is the axis-aligned ellipsoid with semi-axes a_i(x, u)."""
        return cls("ellipsoidal", sigma_lower, sigma_upper, axes=axes)

    @classmethod
    def custom(cls, evaluator, sigma_lower: float, sigma_upper: float):
        return cls("custom", sigma_lower, sigma_upper, evaluator=evaluator)

    @property
    def depends_on_u(self) -> bool:
        """Cheap probe: does the model react to the activation argument?

        Used by the coupling loop only for reporting; correctness never relies
        on it.
        """
        x = np.zeros((1, 2))
        if self.kind == "generalized_eikonal":
            a = float(np.asarray(self.gamma(x, np.array([0.0])))[0])
            b = float(np.asarray(self.gamma(x, np.array([1.0])))[0])
            return a != b
        if self.kind == "ellipsoidal":
            a = np.asarray(self.axes(x, np.array([0.0])))
            b = np.asarray(self.axes(x, np.array([1.0])))
            return not np.array_equal(a, b)
        return True

    def hamiltonian(self, x, u: float, p) -> float:
        """Evaluate H at a single (x, u, p)."""
        p = np.asarray(p, dtype=float)
        if self.kind == "generalized_eikonal":
            g = float(np.asarray(self.gamma(_as_points(x), np.array([u])))[0])
            return g * float(np.linalg.norm(p)) - 1.0
        if self.kind == "ellipsoidal":
            a = np.asarray(self.axes(_as_points(x), np.array([u])), dtype=float).reshape(-1)
            return float(np.linalg.norm(p / a)) - 1.0
        val = float(self.evaluator(np.asarray(x, dtype=float), float(u), p))
        if not math.isfinite(val):
            raise HamiltonianError("ill-posed Hamiltonian: evaluator returned non-finite value")
        return val


def unit_directions(dim: int, m: int) -> np.ndarray:
    """m roughly uniform unit directions (exact uniform angles in 2D,
    Fibonacci sphere in 3D)."""
    if dim == 2:
        ang = 2.0 * np.pi * np.arange(m) / m
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if dim == 3:
        k = np.arange(m) + 0.5
        phi = np.arccos(1.0 - 2.0 * k / m)
        theta = np.pi * (1.0 + math.sqrt(5.0)) * k
        return np.stack(
            [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)],
            axis=1,
        )
    raise HamiltonianError(f"unsupported dimension {dim}")


@dataclass(frozen=True)
class SupportEvaluator:
    """Computes sigma(x, u, q) for a model.

    direction_samples and bisection_tol only matter for the custom kind; the
    analytic kinds are exact.
    """

    model: HamiltonianModel
    direction_samples: int = 64
    bisection_tol: float = 1e-10

    def __post_init__(self):
        if self.direction_samples < 16:
            raise HamiltonianError("direction_samples must be >= 16")
        if not (self.bisection_tol > 0):
            raise HamiltonianError("bisection_tol must be positive")

    # -- ray gauge -------------------------------------------------------

    def ray_gauge(self, x, u: float, d) -> float:
        """sup{lam > 0 : H(x, u, lam*d) <= 0} for a unit direction d.

        For analytic kinds this is closed form. For custom models it is found
        by bisection on [sigma_lower, sigma_upper]; a positive H already at
        sigma_lower*d violates the declared inner ball and raises.
        """
        m = self.model
        if m.kind == "generalized_eikonal":
            g = float(np.asarray(m.gamma(_as_points(x), np.array([u])))[0])
            return 1.0 / g
        if m.kind == "ellipsoidal":
            a = np.asarray(m.axes(_as_points(x), np.array([u])), dtype=float).reshape(-1)
            d = np.asarray(d, dtype=float)
            return 1.0 / float(np.linalg.norm(d / a))
        d = np.asarray(d, dtype=float)
        lo, hi = m.sigma_lower, m.sigma_upper
        if m.hamiltonian(x, u, lo * d) > 0:
            raise HamiltonianError(
                "sigma_lower bound violated: H > 0 on the declared inner ball"
            )
        if m.hamiltonian(x, u, hi * d) <= 0:
            return hi
        while hi - lo > self.bisection_tol:
            mid = 0.5 * (lo + hi)
            if m.hamiltonian(x, u, mid * d) <= 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    # -- support function ------------------------------------------------

    def support(self, x, u: float, q) -> float:
        """sigma(x, u, q) = sup{q.p : H(x, u, p) <= 0}."""
        q = np.asarray(q, dtype=float)
        nq = float(np.linalg.norm(q))
        if nq == 0.0:
            return 0.0
        m = self.model
        if m.kind == "generalized_eikonal":
            return nq * self.ray_gauge(x, u, q / nq)
        if m.kind == "ellipsoidal":
            a = np.asarray(m.axes(_as_points(x), np.array([u])), dtype=float).reshape(-1)
            return float(np.linalg.norm(q * a))
        dirs = unit_directions(q.shape[-1], self.direction_samples)
        best = 0.0
        for d in dirs:
            lam = self.ray_gauge(x, u, d)
            best = max(best, float(q @ d) * lam)
        return best

    def support_unit_batch(self, xs: np.ndarray, us: np.ndarray, qhat: np.ndarray) -> np.ndarray:
        """sigma(x_i, u_i, qhat) for a fixed unit direction, vectorized over points.

        This is the hot path of the metric construction: one call per stencil
        offset per outer iteration.
        """
        xs = _as_points(xs)
        us = np.asarray(us, dtype=float).reshape(-1)
        m = self.model
        if m.kind == "generalized_eikonal":
            g = np.asarray(m.gamma(xs, us), dtype=float).reshape(-1)
            return 1.0 / g
        if m.kind == "ellipsoidal":
            a = np.asarray(m.axes(xs, us), dtype=float).reshape(len(xs), -1)
            return np.sqrt(np.sum((a * qhat) ** 2, axis=1))
        return np.array([self.support(x, u, qhat) for x, u in zip(xs, us)])


def minkowski_normalize(model: HamiltonianModel, x, u: float, p,
                        bisection_tol: float = 1e-12) -> float:
    """Gauge of the zero sublevel at p, minus one.

    Replacing H by this normalization leaves the zero level (hence the
    viscosity solutions and sigma) unchanged; the result is positively
    1-homogeneous up to the additive constant -1 and equals -1 at p = 0.
    """
    p = np.asarray(p, dtype=float)
    norm = float(np.linalg.norm(p))
    if norm == 0.0:
        return -1.0
    d = p / norm
    if model.kind == "generalized_eikonal":
        g = float(np.asarray(model.gamma(_as_points(x), np.array([u])))[0])
        return norm * g - 1.0
    if model.kind == "ellipsoidal":
        a = np.asarray(model.axes(_as_points(x), np.array([u])), dtype=float).reshape(-1)
        return norm * float(np.linalg.norm(d / a)) - 1.0
    # expanding bracket so invalid declarations are still measurable
    gauge = _measured_ray_gauge(model, x, u, d, bisection_tol)
    return norm / gauge - 1.0


def _measured_ray_gauge(model: HamiltonianModel, x, u: float, d,
                        tol: float = 1e-12, max_doublings: int = 60) -> float:
    """Boundary radius of {H <= 0} along direction d, independent of the
    declared bounds (used by verification and the Minkowski gauge)."""
    d = np.asarray(d, dtype=float)
    lo = 0.0
    hi = model.sigma_upper
    if model.hamiltonian(x, u, hi * d) <= 0:
        for _ in range(max_doublings):
            hi *= 2.0
            if model.hamiltonian(x, u, hi * d) > 0:
                break
        else:
            raise HamiltonianError(
                "sublevel appears unbounded along a ray; no gauge exists"
            )
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if model.hamiltonian(x, u, mid * d) <= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ProbeResult:
    x: tuple
    u: float
    passed: bool
    min_gauge: float
    max_gauge: float
    worst_direction: tuple


@dataclass(frozen=True)
class BoundsReport:
    ok: bool
    probes: list

    def failures(self):
        return [p for p in self.probes if not p.passed]


def verify_bounds(model: HamiltonianModel, probe_points, directions: int | None = None,
                  tol: float = 1e-6) -> BoundsReport:
    """Check the ball sandwich B_{sigma_lower} <= {H <= 0} <= B_{sigma_upper}
    at each probed (x, u) by measuring the ray gauge over sampled directions.

    The report carries per-probe pass/fail with the worst offending direction;
    nothing is raised so callers can surface all failures at once.
    """
    probes = list(probe_points)
    if not probes:
        raise HamiltonianError("probe set must be nonempty")
    results = []
    for x, u in probes:
        x = np.asarray(x, dtype=float)
        m = directions or (64 if x.size == 2 else 512)
        dirs = unit_directions(x.size, m)
        gmin, gmax = np.inf, -np.inf
        worst = dirs[0]
        worst_badness = -np.inf
        for d in dirs:
            g = _measured_ray_gauge(model, x, float(u), d)
            gmin = min(gmin, g)
            gmax = max(gmax, g)
            badness = max(model.sigma_lower - g, g - model.sigma_upper)
            if badness > worst_badness:
                worst_badness = badness
                worst = d
        passed = (gmin >= model.sigma_lower * (1 - tol)) and (
            gmax <= model.sigma_upper * (1 + tol)
        )
        results.append(
            ProbeResult(tuple(x.tolist()), float(u), passed, float(gmin),
                        float(gmax), tuple(worst.tolist()))
        )
    return BoundsReport(all(r.passed for r in results), results)


# -- accretion-rate helpers used by the config layer -----------------------


def constant_rate(value: float):
    def gamma(x, u):
        return np.full(len(_as_points(x)), float(value))
    return gamma


def affine_rate(gamma0: float, gamma1: float, u_min: float, u_max: float):
    """gamma(x, u) = gamma0 + gamma1 * clamp(u, u_min, u_max)."""
    def gamma(x, u):
        u = np.asarray(u, dtype=float)
        return gamma0 + gamma1 * clamp(u, u_min, u_max)
    return gamma


def tabulated_rate(u_table, gamma_table):
    """Piecewise-linear gamma(u), clamped to the tabulated range."""
    u_table = np.asarray(u_table, dtype=float)
    gamma_table = np.asarray(gamma_table, dtype=float)
    if u_table.ndim != 1 or u_table.shape != gamma_table.shape or len(u_table) < 2:
        raise HamiltonianError("rate table needs matching 1D arrays of length >= 2")
    if np.any(np.diff(u_table) <= 0):
        raise HamiltonianError("rate table abscissae must be strictly increasing")

    def gamma(x, u):
        u = np.asarray(u, dtype=float)
        return np.interp(u, u_table, gamma_table)

    return gamma
