"""Run configuration: JSON schema, shape primitives, and desk-scale validation.

A config is one JSON object with sections grid / domain / hamiltonian /
kernel / coupling / solver / output. Geometry is written in a small shape DSL
(box, ball, half-space, boolean combinations, mask file import) evaluated
strictly at node centers. validate() encodes every model assumption that can
be checked at desk scale and reports all violations with the assumption each
one encodes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import fieldio
from .convolution import KernelPair, SpatialKernel, TimeKernel
from .coupling import CouplingConfig, CouplingProblem
from .grid import (
    DomainSpec,
    Grid,
    Mask,
    boundary_nodes,
    build_mask_from_predicate,
)
from .hamiltonian import (
    HamiltonianModel,
    SupportEvaluator,
    affine_rate,
    constant_rate,
    tabulated_rate,
    verify_bounds,
)


class ConfigError(ValueError):
    pass


# -- shape DSL ---------------------------------------------------------------


def evaluate_shape(spec: dict, positions: np.ndarray, base_dir: Path | None = None) -> np.ndarray:
    """Boolean membership of each position for a shape spec."""
    kind = spec.get("type")
    if kind == "all":
        return np.ones(len(positions), dtype=bool)
    if kind == "box":
        lo = np.asarray(spec["lo"], dtype=float)
        hi = np.asarray(spec["hi"], dtype=float)
        return np.all((positions >= lo) & (positions <= hi), axis=1)
    if kind == "ball":
        c = np.asarray(spec["center"], dtype=float)
        r = float(spec["radius"])
        return np.linalg.norm(positions - c, axis=1) < r
    if kind == "half_space":
        n = np.asarray(spec["normal"], dtype=float)
        return positions @ n < float(spec["offset"])
    if kind == "union":
        out = np.zeros(len(positions), dtype=bool)
        for term in spec["terms"]:
            out |= evaluate_shape(term, positions, base_dir)
        return out
    if kind == "intersection":
        out = np.ones(len(positions), dtype=bool)
        for term in spec["terms"]:
            out &= evaluate_shape(term, positions, base_dir)
        return out
    if kind == "difference":
        a = evaluate_shape(spec["terms"][0], positions, base_dir)
        for term in spec["terms"][1:]:
            a &= ~evaluate_shape(term, positions, base_dir)
        return a
    if kind == "mask_file":
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        mask, _ = fieldio.read_mask(path)
        return mask.values.reshape(-1)
    raise ConfigError(f"unknown shape type {kind!r}")


# -- section builders --------------------------------------------------------


def build_grid(cfg: dict) -> Grid:
    g = cfg["grid"]
    return Grid(tuple(g["origin"]), float(g["spacing"]), tuple(g["shape"]))


def _shape_mask(grid: Grid, spec: dict, base_dir: Path | None) -> Mask:
    return build_mask_from_predicate(
        grid, lambda pos: evaluate_shape(spec, pos, base_dir)
    )


def build_domain(cfg: dict, grid: Grid, base_dir: Path | None = None) -> DomainSpec:
    d = cfg["domain"]
    omega = _shape_mask(grid, d["omega"], base_dir)
    v0_vals = evaluate_shape(d["v0"], grid.positions().reshape(-1, grid.dim), base_dir)
    v0 = Mask(grid, v0_vals.reshape(grid.shape) & omega.values)
    if v0.is_empty:
        raise ConfigError("v0 intersected with omega selects no node")

    gamma_spec = d.get("gamma", {"type": "auto"})
    bnd = boundary_nodes(omega)
    if gamma_spec.get("type") == "auto":
        keep = v0.values[tuple(bnd.T)]
        gamma = bnd[keep]
    else:
        pos = grid.positions().reshape(-1, grid.dim)
        inside = evaluate_shape(gamma_spec, pos, base_dir).reshape(grid.shape)
        keep = inside[tuple(bnd.T)]
        gamma = bnd[keep]
    if gamma.shape[0] == 0:
        raise ConfigError("gamma selects no node on the boundary of omega (H07)")

    x0 = grid.nearest_node(d["x0"])
    return DomainSpec(
        omega, v0, gamma, x0,
        L=float(d.get("L", 1.0)),
        kappa0=float(d.get("kappa0", 1.0)),
    )


def build_model(cfg: dict) -> HamiltonianModel:
    hm = cfg["hamiltonian"]
    kind = hm["kind"]
    sl = float(hm["sigma_lower"])
    su = float(hm["sigma_upper"])
    if kind == "generalized_eikonal":
        return HamiltonianModel.generalized_eikonal(_build_rate(hm["gamma"]), sl, su)
    if kind == "ellipsoidal":
        scales = [ _build_rate(a) for a in hm["axes"] ]
        def axes(x, u):
            return np.stack([s(x, u) for s in scales], axis=1)
        return HamiltonianModel.ellipsoidal(axes, sl, su)
    raise ConfigError(f"unknown hamiltonian kind {kind!r} (custom models are library-only)")


def _build_rate(spec) -> callable:
    if isinstance(spec, (int, float)):
        return constant_rate(float(spec))
    kind = spec["type"]
    if kind == "constant":
        return constant_rate(float(spec["value"]))
    if kind == "affine":
        return affine_rate(
            float(spec["gamma0"]), float(spec["gamma1"]),
            float(spec["u_min"]), float(spec["u_max"]),
        )
    if kind == "table":
        return tabulated_rate(spec["u"], spec["gamma"])
    raise ConfigError(f"unknown rate type {kind!r}")


def build_kernels(cfg: dict) -> KernelPair:
    kc = cfg["kernel"]
    kspec = kc["k"]
    if kspec["type"] == "exponential":
        k = TimeKernel.exponential(float(kspec["rate"]))
    elif kspec["type"] == "table":
        k = TimeKernel.tabulated(kspec["s"], kspec["values"])
    else:
        raise ConfigError(f"unknown time kernel {kspec['type']!r}")
    pspec = kc["phi"]
    if pspec["type"] == "gaussian":
        phi = SpatialKernel.gaussian(
            float(pspec["width"]), pspec.get("truncation_radius")
        )
    elif pspec["type"] == "table":
        phi = SpatialKernel.tabulated_radial(
            pspec["r"], pspec["values"], pspec.get("integral")
        )
    else:
        raise ConfigError(f"unknown spatial kernel {pspec['type']!r}")
    return KernelPair(k, phi)


def build_coupling(cfg: dict, threads: int = 1) -> CouplingConfig:
    c = cfg["coupling"]
    solver = cfg.get("solver", {})
    return CouplingConfig(
        T=float(c["T"]),
        M=int(c["M"]),
        R=float(c["R"]),
        tol=float(c["tol"]),
        max_iter=int(c["max_iter"]),
        theta=float(c.get("theta", 1.0)),
        stencil_radius=int(solver.get("stencil_radius", 2)),
        cg_tol=float(solver.get("cg_tol", 1e-8)),
        diagnostic_times=int(c.get("diagnostic_times", 4)),
        threads=threads,
    )


def build_problem(cfg: dict, base_dir: Path | None = None, threads: int = 1) -> CouplingProblem:
    grid = build_grid(cfg)
    domain = build_domain(cfg, grid, base_dir)
    model = build_model(cfg)
    kernels = build_kernels(cfg)
    coupling = build_coupling(cfg, threads=threads)
    ds = int(cfg.get("solver", {}).get("direction_samples", 64 if grid.dim == 2 else 512))
    evaluator = SupportEvaluator(model, direction_samples=ds)
    return CouplingProblem(domain, model, kernels, coupling, evaluator)


# -- validation --------------------------------------------------------------


def validate(cfg: dict, base_dir: Path | None = None) -> list[str]:
    """All desk-scale assumption checks; returns the list of violations."""
    errors: list[str] = []
    try:
        grid = build_grid(cfg)
    except Exception as e:  # noqa: BLE001 - every defect becomes a report line
        return [f"grid: {e}"]
    try:
        domain = build_domain(cfg, grid, base_dir)
        errors.extend(domain.validate())
    except Exception as e:  # noqa: BLE001
        errors.append(f"domain: {e} (H05/H07)")
        domain = None
    try:
        model = build_model(cfg)
        if domain is not None:
            probes = _bound_probes(cfg, grid)
            report = verify_bounds(model, probes, directions=32)
            for p in report.failures():
                errors.append(
                    "hamiltonian: measured gauge "
                    f"[{p.min_gauge:.6g}, {p.max_gauge:.6g}] escapes the declared "
                    f"[{model.sigma_lower:g}, {model.sigma_upper:g}] at x={p.x}, "
                    f"u={p.u} (H04u ball sandwich)"
                )
    except Exception as e:  # noqa: BLE001
        errors.append(f"hamiltonian: {e} (H01u-H04u)")
        model = None
    try:
        kernels = build_kernels(cfg)
        errors.extend("kernel: " + e for e in kernels.validate())
    except Exception as e:  # noqa: BLE001
        errors.append(f"kernel: {e} (H06)")
        kernels = None
    if "coupling" in cfg and domain is not None and model is not None:
        try:
            coupling = build_coupling(cfg)
            if kernels is not None and coupling.T > kernels.k.horizon:
                errors.append("coupling: kernel horizon shorter than T (H06)")
            ok, msg = coupling.horizon_ok(domain, model.sigma_lower)
            if not ok:
                errors.append(f"coupling: {msg} (c3 containment)")
        except Exception as e:  # noqa: BLE001
            errors.append(f"coupling: {e}")
    return errors


def _bound_probes(cfg: dict, grid: Grid):
    """A few (x, u) pairs spanning the window and the clamp range."""
    lo = np.asarray(grid.origin)
    hi = lo + grid.spacing * (np.asarray(grid.shape) - 1)
    corners = [lo, hi, 0.5 * (lo + hi)]
    us = cfg.get("hamiltonian", {}).get("probe_u", [0.0, 0.5, 1.0])
    return [(c, float(u)) for c in corners for u in us]


def load_config(path) -> tuple[dict, Path]:
    """Read a config file; a run manifest is accepted and unwrapped."""
    path = Path(path)
    data = json.loads(path.read_text())
    if "config" in data and "grid" not in data:
        data = data["config"]
    return data, path.parent
