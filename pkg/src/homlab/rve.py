"""Window estimators on growing cubes with affine boundary data.

local_min_energy computes |Q_R|^{-1} min { integral of f(y, grad v) over
Q_R(x0) : v affine on the boundary }. For homogenizable fields the values
settle as R grows, independently of the window center; window_sequence
packages a growing family of windows together with its Cauchy gaps and a
numerical homogenizability verdict. The verdict is evidence, not proof: the
raw value sequence always travels with it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import (
    MatrixField,
    PPower,
    QuadraticMatrix,
    element_coefficients,
    eval_matrix,
)
from .numerics import (
    BOX,
    DEFAULT_CONFIG,
    PEnergyProblem,
    SolverConfig,
    SparseSystem,
    build_grid,
    cg_solve,
    element_ops,
    interpolate_affine,
    krylov_solve_nonsymmetric,
    minimize_p_energy,
)

_MIN_CELLS = 8


@dataclass(frozen=True)
class WindowEstimate:
    """Normalized window minima over a growing list of window sizes."""

    center: tuple[float, ...]
    window_sizes: tuple[float, ...]
    xi: tuple[float, ...]
    values: tuple[float, ...]
    resolution_per_unit: int
    cauchy_gap: float
    homogenizable_at_center: bool
    limit_estimate: float
    bounds_alpha: float
    bounds_beta: float
    p: float

    def __post_init__(self):
        if len(self.window_sizes) != len(self.values):
            raise ValueError("one value per window size required")
        sizes = np.asarray(self.window_sizes)
        if len(sizes) >= 2 and not np.all(np.diff(sizes) > 0):
            raise ValueError("window sizes must be strictly increasing")
        xi_norm = float(np.linalg.norm(self.xi))
        lo = self.bounds_alpha * xi_norm ** self.p
        hi = self.bounds_beta * (1.0 + xi_norm ** self.p)
        for v in self.values:
            if v < lo - 1e-9 * max(1.0, lo) or v > hi + 1e-9 * max(1.0, hi):
                raise RuntimeError(
                    f"window value {v:.12g} escapes the growth bounds "
                    f"[{lo:.6g}, {hi:.6g}]")


def _window_grid(dim: int, x0, R: float, resolution_per_unit: int):
    if R <= 0:
        raise ValueError(f"window size must be positive, got {R}")
    n_f = R * resolution_per_unit
    n = int(round(n_f))
    if abs(n_f - n) > 1e-9 or n < 1:
        raise ValueError(f"window size {R} times resolution {resolution_per_unit} "
                         "must be a positive integer")
    if n < _MIN_CELLS:
        raise ValueError(f"window needs at least {_MIN_CELLS} cells per axis, "
                         f"got {n}")
    if x0 is None:
        x0v = np.zeros(dim)
    else:
        x0v = np.broadcast_to(np.asarray(x0, dtype=float), (dim,)).astype(float)
    origin = tuple(x0v[k] - R / 2.0 for k in range(dim))
    return build_grid(dim, n, origin, R, BOX), x0v


def _dirichlet_quadratic(grid, center, coeff, xi, symmetric: bool,
                         config: SolverConfig):
    """Solve the affine-Dirichlet problem; returns the full nodal vector."""
    ops = element_ops(grid)
    K = ops.assemble_stiffness(coeff)
    g = interpolate_affine(grid, xi, center)
    free = np.flatnonzero(~grid.boundary_node_mask())
    K_ff = K[free][:, free]
    rhs = -(K @ g)[free]
    system = SparseSystem(K_ff, symmetric=symmetric)
    if symmetric:
        w, stats = cg_solve(system, rhs, config)
    else:
        w, stats = krylov_solve_nonsymmetric(system, rhs, config)
    u = g.copy()
    u[free] += w
    return u, stats


def _check_growth(value: float, bounds, p: float, xi: np.ndarray):
    xi_norm = float(np.linalg.norm(xi))
    lo = bounds.alpha * xi_norm ** p
    hi = bounds.beta * (1.0 + xi_norm ** p)
    if value < lo - 1e-9 * max(1.0, lo) or value > hi + 1e-9 * max(1.0, hi):
        raise RuntimeError(f"window value {value:.12g} escapes the growth "
                           f"bounds [{lo:.6g}, {hi:.6g}]")


def local_min_energy(f, x0, R: float, xi, resolution_per_unit: int,
                     config: SolverConfig = DEFAULT_CONFIG) -> float:
    """Normalized minimum energy on the cube window Q_R(x0)."""
    dim = f.dim
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (dim,):
        raise ValueError(f"xi must have shape ({dim},)")
    grid, center = _window_grid(dim, x0, R, resolution_per_unit)
    coeff = element_coefficients(f, grid)
    if isinstance(f, PPower) and f.p != 2.0:
        g = interpolate_affine(grid, xi, center)
        free = np.flatnonzero(~grid.boundary_node_mask())
        problem = PEnergyProblem(grid, coeff, f.p, np.zeros(dim),
                                 free=free, fixed_values=g)
        # continuation: the quadratic minimizer is a cheap, qualitatively
        # right starting point
        u_quad, _ = _dirichlet_quadratic(grid, center, coeff, xi, True, config)
        u, _ = minimize_p_energy(problem, config, x0=u_quad[free])
        raw = problem.value(u[free])
    else:
        symmetric = not (isinstance(f, QuadraticMatrix) and not f.matrix.symmetric)
        u, _ = _dirichlet_quadratic(grid, center, coeff, xi, symmetric, config)
        raw = element_ops(grid).energy_quadratic(u, coeff, np.zeros(dim))
    value = raw / R ** dim
    _check_growth(value, f.bounds, f.p, xi)
    return value


def window_sequence(f, x0, xi, R_list, resolution_per_unit: int,
                    config: SolverConfig = DEFAULT_CONFIG) -> WindowEstimate:
    """Window estimates over increasing sizes, with gap-based verdict.

    The field is flagged homogenizable-at-center when the Cauchy gaps do not
    grow over the last three windows; constant-in-R sequences (exactly
    periodic fields on aligned windows) qualify.
    """
    R_list = list(R_list)
    if len(R_list) < 3:
        raise ValueError("need at least 3 window sizes")
    if not all(b > a for a, b in zip(R_list, R_list[1:])):
        raise ValueError("window sizes must be strictly increasing")
    values = [local_min_energy(f, x0, R, xi, resolution_per_unit, config)
              for R in R_list]
    gaps = [abs(b - a) for a, b in zip(values, values[1:])]
    cauchy_gap = max(gaps[-2:])
    # gaps at the solver-noise level (flat sequences, e.g. exactly periodic
    # fields on aligned windows) count as converged
    noise = 1e-12 * max(1.0, max(abs(v) for v in values))
    homogenizable = gaps[-1] <= gaps[-2] + noise
    dim = f.dim
    x0v = (np.zeros(dim) if x0 is None
           else np.broadcast_to(np.asarray(x0, dtype=float), (dim,)))
    xi = np.asarray(xi, dtype=float)
    return WindowEstimate(
        center=tuple(float(c) for c in x0v),
        window_sizes=tuple(float(R) for R in R_list),
        xi=tuple(float(c) for c in xi),
        values=tuple(values),
        resolution_per_unit=resolution_per_unit,
        cauchy_gap=float(cauchy_gap),
        homogenizable_at_center=bool(homogenizable),
        limit_estimate=float(values[-1]),
        bounds_alpha=f.bounds.alpha,
        bounds_beta=f.bounds.beta,
        p=f.p,
    )


def flux_average_window(A: MatrixField, x0, R: float, xi,
                        resolution_per_unit: int,
                        config: SolverConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Window mean of A grad u for the affine-Dirichlet boundary problem."""
    dim = A.dim
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (dim,):
        raise ValueError(f"xi must have shape ({dim},)")
    grid, center = _window_grid(dim, x0, R, resolution_per_unit)
    coeff = eval_matrix(A, grid.element_centers())
    u, _ = _dirichlet_quadratic(grid, center, coeff, xi, A.symmetric, config)
    ops = element_ops(grid)
    flux = ops.flux_average(u, coeff, np.zeros(dim))
    if A.symmetric:
        energy = ops.energy_quadratic(u, coeff, np.zeros(dim)) / R ** dim
        pairing = float(flux @ xi)
        scale = max(abs(energy), 1.0)
        if abs(pairing - energy) > 1e-10 * scale:
            raise RuntimeError(
                f"flux/energy pairing broke: {pairing:.12g} vs {energy:.12g}")
    return flux
