"""Perforated-domain homogenization: hole patterns, penalized and masked
cell values, an annulus-to-ball extension operator, and the lambda-problem
convergence experiment.

Holes are realized on-grid by element-center membership, so coefficients
stay piecewise constant per element and assembly is exact. The masked
variant assembles only over elements outside the holes (Neumann holes); the
penalized variant keeps the full grid with coefficient 1/n inside. The two
bracket each other, which is what the sandwich tests check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .cell import HomogenizedResult
from .numerics import (
    BOX,
    DEFAULT_CONFIG,
    TORUS,
    Grid,
    SolverConfig,
    SparseSystem,
    build_grid,
    cg_solve,
    element_ops,
    interpolate_affine,
)

_MIN_CELLS_ACROSS_HOLE = 8


@dataclass(frozen=True)
class DecayingShift:
    """Shift the hole in cell k by min(cap, 1/|k|) along the first axis."""

    cap: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.cap:
            raise ValueError(f"shift cap must be positive, got {self.cap}")


@dataclass(frozen=True)
class SparseRemoval:
    """Remove the holes in cells whose coordinates are all powers of two."""


def _power_of_two_cells(k: np.ndarray) -> np.ndarray:
    """Componentwise test for positive integer powers of two (1, 2, 4, ...)."""
    positive = k >= 1
    kp = np.where(positive, k, 1).astype(np.int64)
    return positive & ((kp & (kp - 1)) == 0)


@dataclass(frozen=True)
class PerforationSet:
    """Periodic array of holes centered in unit cells, radius < 1/2.

    ``radius`` is the ball radius or the square half-width; ``radius = 0``
    means no holes (useful as a control). Perturbations never let holes
    touch cell boundaries, so the complement stays connected.
    """

    shape: str = "ball"
    radius: float = 0.25
    perturbation: DecayingShift | SparseRemoval | None = None

    def __post_init__(self):
        if self.shape not in ("ball", "square"):
            raise ValueError(f"unknown hole shape {self.shape!r}")
        if not 0.0 <= self.radius < 0.5:
            raise ValueError(f"radius must lie in [0, 0.5), got {self.radius}")
        if isinstance(self.perturbation, DecayingShift):
            if self.radius + self.perturbation.cap >= 0.5:
                raise ValueError("shifted holes would touch the cell boundary: "
                                 f"radius {self.radius} + cap "
                                 f"{self.perturbation.cap} >= 0.5")

    def membership(self, pts) -> np.ndarray:
        """True where points fall inside a hole."""
        pts = np.asarray(pts, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("membership expects (n, 2) points")
        if self.radius == 0.0:
            return np.zeros(len(pts), dtype=bool)
        cells = np.floor(pts).astype(np.int64)
        local = pts - cells - 0.5
        if isinstance(self.perturbation, DecayingShift):
            norms = np.hypot(cells[:, 0].astype(float), cells[:, 1].astype(float))
            with np.errstate(divide="ignore"):
                shift = np.where(norms > 0.0,
                                 np.minimum(self.perturbation.cap, 1.0 / norms),
                                 self.perturbation.cap)
            local = local.copy()
            local[:, 0] -= shift
        if self.shape == "ball":
            inside = local[:, 0] ** 2 + local[:, 1] ** 2 <= self.radius ** 2
        else:
            inside = np.maximum(np.abs(local[:, 0]),
                                np.abs(local[:, 1])) <= self.radius
        if isinstance(self.perturbation, SparseRemoval):
            removed = (_power_of_two_cells(cells[:, 0])
                       & _power_of_two_cells(cells[:, 1]))
            inside &= ~removed
        return inside

    def hole_volume_unit_cell(self) -> float:
        """Exact hole volume of one unperturbed cell."""
        if self.shape == "ball":
            return float(np.pi * self.radius ** 2)
        return float((2.0 * self.radius) ** 2)


@dataclass(frozen=True)
class VolumeFraction:
    theta: float
    window: float
    method: str

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise RuntimeError(f"volume fraction {self.theta} escapes (0, 1]; "
                               "the perforation admits no nontrivial limit")


def _window_centers(R: float, resolution: int) -> np.ndarray:
    n_f = R * resolution
    n = int(round(n_f))
    if abs(n_f - n) > 1e-9 or n < 1:
        raise ValueError(f"window {R} times resolution {resolution} must be "
                         "a positive integer")
    h = R / n
    axis = -R / 2.0 + h * (np.arange(n) + 0.5)
    xg, yg = np.meshgrid(axis, axis, indexing="xy")
    return np.column_stack([xg.ravel(), yg.ravel()])


def volume_fraction(E: PerforationSet, R: float, resolution: int) -> VolumeFraction:
    """Element-center estimate of |Q_R \\ E| / R^2."""
    if R < 4:
        raise ValueError(f"window must be at least 4, got {R}")
    pts = _window_centers(R, resolution)
    theta = 1.0 - float(np.mean(E.membership(pts)))
    return VolumeFraction(theta, float(R), "element-centers")


def symmetric_difference_density(E: PerforationSet, E2: PerforationSet,
                                 R: float, resolution: int) -> float:
    """Element-center estimate of |(E xor E2) ∩ Q_R| / R^2."""
    pts = _window_centers(R, resolution)
    return float(np.mean(E.membership(pts) != E2.membership(pts)))


def _check_hole_resolution(E: PerforationSet, resolution: int):
    if E.radius > 0 and 2.0 * E.radius * resolution < _MIN_CELLS_ACROSS_HOLE:
        raise ValueError(
            f"resolution {resolution} puts fewer than {_MIN_CELLS_ACROSS_HOLE} "
            f"elements across a hole of diameter {2 * E.radius}")


def penalized_cell_value(E: PerforationSet, n: float, xi, resolution: int,
                         config: SolverConfig = DEFAULT_CONFIG) -> float:
    """Periodic cell minimum with coefficient 1 outside E, 1/n inside."""
    if n < 1:
        raise ValueError(f"penalization index must be >= 1, got {n}")
    if resolution < 64:
        raise ValueError(f"resolution must be at least 64, got {resolution}")
    _check_hole_resolution(E, resolution)
    xi = np.asarray(xi, dtype=float)
    grid = build_grid(2, resolution, (0.0, 0.0), 1.0, TORUS)
    ops = element_ops(grid)
    inside = E.membership(grid.element_centers())
    coeff = np.where(inside, 1.0 / n, 1.0)
    K = SparseSystem(ops.assemble_stiffness(coeff), symmetric=True)
    rhs = -ops.load_from_element_vectors(coeff[:, None] * xi[None, :])
    u, _ = cg_solve(K, rhs, config, mean_zero=True, jacobi=True)
    return ops.energy_quadratic(u, coeff, xi)


def _element_node_edges(elem_nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Enough node-node edges to make each element's nodes one clique chain."""
    a = np.concatenate([elem_nodes[:, 0], elem_nodes[:, 1], elem_nodes[:, 2]])
    b = np.concatenate([elem_nodes[:, 1], elem_nodes[:, 2], elem_nodes[:, 3]])
    return a, b


def _active_nodes_checked(grid: Grid, active_el: np.ndarray) -> np.ndarray:
    """Nodes adjacent to active elements; errors if empty or disconnected."""
    ops = element_ops(grid)
    if not np.any(active_el):
        raise RuntimeError("perforation removed every element")
    elem_nodes = ops.elem_nodes[active_el]
    active_nodes = np.unique(elem_nodes)
    a, b = _element_node_edges(elem_nodes)
    n = grid.n_nodes
    adj = sp.coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
    n_comp, labels = connected_components(adj.tocsr(), directed=False)
    # nodes not touching any active element form singleton components
    n_active_comp = len(np.unique(labels[active_nodes]))
    if n_active_comp != 1:
        raise RuntimeError(f"perforation complement is disconnected at this "
                           f"resolution ({n_active_comp} components)")
    return active_nodes


def _masked_cell_solve(grid: Grid, active_el: np.ndarray, xi: np.ndarray,
                       config: SolverConfig):
    """Periodic corrector on the masked cell; returns (u_full, coeff)."""
    ops = element_ops(grid)
    coeff = active_el.astype(float)
    active_nodes = _active_nodes_checked(grid, active_el)
    K = ops.assemble_stiffness(coeff)
    K_aa = K[active_nodes][:, active_nodes]
    rhs = -ops.load_from_element_vectors(coeff[:, None] * xi[None, :])[active_nodes]
    system = SparseSystem(K_aa, symmetric=True)
    w, _ = cg_solve(system, rhs, config, mean_zero=True, jacobi=True)
    u = np.zeros(grid.n_nodes)
    u[active_nodes] = w
    return u, coeff


def masked_cell_value(E: PerforationSet, xi, resolution: int,
                      config: SolverConfig = DEFAULT_CONFIG) -> float:
    """Perforated cell quadratic form <A_hom^E xi, xi> (Neumann holes)."""
    _check_hole_resolution(E, resolution)
    xi = np.asarray(xi, dtype=float)
    grid = build_grid(2, resolution, (0.0, 0.0), 1.0, TORUS)
    active_el = ~E.membership(grid.element_centers())
    u, coeff = _masked_cell_solve(grid, active_el, xi, config)
    return element_ops(grid).energy_quadratic(u, coeff, xi)


def masked_cell_matrix(E: PerforationSet, resolution: int,
                       config: SolverConfig = DEFAULT_CONFIG,
                       extension_constant: float = 3.0,
                       field_id: str = "") -> tuple[HomogenizedResult, float]:
    """Perforated homogenized matrix and the cell volume fraction theta."""
    _check_hole_resolution(E, resolution)
    grid = build_grid(2, resolution, (0.0, 0.0), 1.0, TORUS)
    ops = element_ops(grid)
    active_el = ~E.membership(grid.element_centers())
    theta = float(np.mean(active_el))
    matrix = np.empty((2, 2))
    for i in range(2):
        e_i = np.zeros(2)
        e_i[i] = 1.0
        u, coeff = _masked_cell_solve(grid, active_el, e_i, config)
        column = ops.flux_average(u, coeff, e_i)
        energy = ops.energy_quadratic(u, coeff, e_i)
        if abs(energy - column[i]) > 1e-8 * max(abs(energy), 1.0):
            raise RuntimeError(f"masked energy/flux cross-check failed: "
                               f"{energy:.12g} vs {column[i]:.12g}")
        matrix[:, i] = column
    result = HomogenizedResult(matrix, resolution, True, (), (), 1.0, 1.0,
                               field_id, extension_constant=extension_constant)
    return result, theta


def masked_window_value(E: PerforationSet, x0, R: float, xi, resolution: int,
                        config: SolverConfig = DEFAULT_CONFIG) -> float:
    """Affine-Dirichlet window minimum on Q_R(x0) minus the holes."""
    _check_hole_resolution(E, resolution)
    xi = np.asarray(xi, dtype=float)
    n_f = R * resolution
    n = int(round(n_f))
    if abs(n_f - n) > 1e-9 or n < _MIN_CELLS_ACROSS_HOLE:
        raise ValueError(f"window {R} times resolution {resolution} must be an "
                         f"integer of at least {_MIN_CELLS_ACROSS_HOLE}")
    center = np.broadcast_to(np.asarray(x0, dtype=float), (2,)).astype(float)
    grid = build_grid(2, n, tuple(center - R / 2.0), R, BOX)
    ops = element_ops(grid)
    active_el = ~E.membership(grid.element_centers())
    coeff = active_el.astype(float)
    active_nodes = _active_nodes_checked(grid, active_el)
    g = interpolate_affine(grid, xi, center)
    boundary = grid.boundary_node_mask()
    free = active_nodes[~boundary[active_nodes]]
    K = ops.assemble_stiffness(coeff)
    K_ff = K[free][:, free]
    rhs = -(K @ g)[free]
    system = SparseSystem(K_ff, symmetric=True)
    w, _ = cg_solve(system, rhs, config, jacobi=True)
    u = g.copy()
    u[free] += w
    return ops.energy_quadratic(u, coeff, np.zeros(2)) / R ** 2


# --- extension operator -----------------------------------------------------


@dataclass(frozen=True)
class ExtensionResult:
    """Polar-grid extension of annulus data over the inner ball.

    ``inner_values[i, j]`` lives at radius ``inner_radii[i]`` and angle
    ``angles[j]``; the gradient ratio compares L2 gradient norms of the
    extension (over B_{2s}) and the input (over B_{3s} minus B_{2s}).
    """

    scale: float
    inner_radii: np.ndarray
    annulus_radii: np.ndarray
    angles: np.ndarray
    inner_values: np.ndarray
    annulus_values: np.ndarray
    annulus_mean: float
    gradient_ratio: float


def _polar_gradient_sq_integral(values: np.ndarray, radii: np.ndarray,
                                dr: float, dtheta: float) -> float:
    """Integral of |grad u|^2 over the polar patch via finite differences."""
    ur = np.gradient(values, dr, axis=0)
    ut = (np.roll(values, -1, axis=1) - np.roll(values, 1, axis=1)) / (2.0 * dtheta)
    dens = ur ** 2 + (ut / radii[:, None]) ** 2
    return float(np.sum(dens * radii[:, None]) * dr * dtheta)


def extend_over_ball(u, resolution: int, scale: float = 1.0) -> ExtensionResult:
    """Extend annulus data u (sampled on B_{3s} minus B_{2s}) over B_{2s}.

    The extension is the annulus mean on B_s and, on the shell between s and
    2s, blends the mean with the reflected annulus values u((4s - |x|) x/|x|).
    The construction commutes with homotheties, which the scale parameter
    makes testable.
    """
    if resolution < 4:
        raise ValueError(f"resolution must be at least 4, got {resolution}")
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    s = float(scale)
    dr = s / resolution
    n_t = 8 * resolution
    dtheta = 2.0 * np.pi / n_t
    angles = (np.arange(n_t) + 0.5) * dtheta
    cos_t, sin_t = np.cos(angles), np.sin(angles)

    annulus_radii = 2.0 * s + (np.arange(resolution) + 0.5) * dr
    ann_pts_x = annulus_radii[:, None] * cos_t[None, :]
    ann_pts_y = annulus_radii[:, None] * sin_t[None, :]
    annulus_values = np.asarray(u(ann_pts_x, ann_pts_y), dtype=float)
    if annulus_values.shape != (resolution, n_t):
        raise ValueError("annulus sample function must preserve shape")
    weights = annulus_radii[:, None] * np.ones_like(annulus_values)
    mean = float(np.sum(annulus_values * weights) / np.sum(weights))

    inner_radii = (np.arange(2 * resolution) + 0.5) * dr
    inner_values = np.full((2 * resolution, n_t), mean)
    shell = inner_radii > s
    rho = inner_radii[shell]
    mirror = 4.0 * s - rho
    mir_x = mirror[:, None] * cos_t[None, :]
    mir_y = mirror[:, None] * sin_t[None, :]
    mirrored = np.asarray(u(mir_x, mir_y), dtype=float)
    t = rho / s
    inner_values[shell] = ((t - 1.0)[:, None] * mirrored
                           + (2.0 - t)[:, None] * mean)

    num = _polar_gradient_sq_integral(inner_values, inner_radii, dr, dtheta)
    den = _polar_gradient_sq_integral(annulus_values, annulus_radii, dr, dtheta)
    floor = 1e-14 * max(1.0, float(np.max(np.abs(annulus_values))) ** 2)
    ratio = 0.0 if den <= floor else float(np.sqrt(num / den))
    return ExtensionResult(s, inner_radii, annulus_radii, angles, inner_values,
                           annulus_values, mean, ratio)


def empirical_extension_constant(resolution: int = 24, trials: int = 20,
                                 seed: int = 0) -> float:
    """Max gradient ratio of the extension over random smooth functions."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n_terms = 3
        lin = rng.normal(size=2)
        amps = rng.normal(size=n_terms) / np.arange(1, n_terms + 1)
        freqs = rng.uniform(0.3, 1.5, size=(n_terms, 2))
        phases = rng.uniform(0.0, 2.0 * np.pi, size=n_terms)

        def u(x, y, lin=lin, amps=amps, freqs=freqs, phases=phases):
            out = lin[0] * x + lin[1] * y
            for a, (fx, fy), ph in zip(amps, freqs, phases):
                out = out + a * np.sin(fx * x + fy * y + ph)
            return out

        ratio = extend_over_ball(u, resolution).gradient_ratio
        if not np.isfinite(ratio):
            raise RuntimeError("extension ratio must be finite")
        worst = max(worst, ratio)
    return worst


# --- lambda problem ----------------------------------------------------------


@dataclass(frozen=True)
class GaussianSource:
    """exp(-|x - center|^2 / (2 sigma^2)), numerically compactly supported."""

    sigma: float = 1.0 / 16.0
    center: tuple[float, float] = (0.0, 0.0)
    amplitude: float = 1.0

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        d = pts - np.asarray(self.center)[None, :]
        return self.amplitude * np.exp(-(d[:, 0] ** 2 + d[:, 1] ** 2)
                                       / (2.0 * self.sigma ** 2))


@dataclass(frozen=True)
class LambdaReport:
    epsilons: tuple[float, ...]
    distances: tuple[float, ...]
    hom_matrix: np.ndarray
    theta: float
    box_size: float
    resolution: int


def _solve_lambda_system(K, mass, load, lam: float, boundary: np.ndarray,
                         config: SolverConfig) -> np.ndarray:
    n = K.shape[0]
    free = np.flatnonzero(~boundary)
    A = (K + lam * mass).tocsr()
    system = SparseSystem(A[free][:, free], symmetric=True)
    w, _ = cg_solve(system, load[free], config, jacobi=True)
    u = np.zeros(n)
    u[free] = w
    return u


def lambda_problem_experiment(E: PerforationSet, lam: float, source,
                              epsilons, box_size: float = 2.0,
                              n_penal: float = 256.0, resolution: int = 256,
                              cell_resolution: int = 64,
                              config: SolverConfig = DEFAULT_CONFIG) -> LambdaReport:
    """Compare scaled-perforation solves against the homogenized solve.

    Each epsilon problem minimizes the penalized gradient term plus masked
    lower-order terms on a zero-Dirichlet box; the reference uses the masked
    homogenized matrix and volume-fraction weight theta on the same grid.
    Reported distances are L2 norms over the box.
    """
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    epsilons = tuple(float(e) for e in epsilons)
    for eps in epsilons:
        if not 0.0 < eps <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {eps}")
        if E.radius > 0 and 2.0 * E.radius * eps * resolution < _MIN_CELLS_ACROSS_HOLE:
            raise ValueError(
                f"resolution {resolution} puts fewer than "
                f"{_MIN_CELLS_ACROSS_HOLE} elements across a hole at eps {eps}")
    n = int(round(box_size * resolution))
    half = box_size / 2.0
    grid = build_grid(2, n, (-half, -half), box_size, BOX)
    ops = element_ops(grid)
    centers = grid.element_centers()
    boundary = grid.boundary_node_mask()
    f_el = np.asarray(source(centers), dtype=float)

    hom, theta = masked_cell_matrix(E, cell_resolution, config)
    coeff_hom = np.broadcast_to(hom.matrix, (grid.n_elements, 2, 2))
    K_hom = ops.assemble_stiffness(np.ascontiguousarray(coeff_hom))
    mass_full = ops.assemble_mass(np.ones(grid.n_elements, dtype=bool))
    load_hom = theta * ops.load_from_element_scalars(f_el)
    u_hom = _solve_lambda_system(K_hom, theta * mass_full, load_hom, lam,
                                 boundary, config)

    distances = []
    for eps in epsilons:
        inside = E.membership(centers / eps)
        coeff = np.where(inside, 1.0 / n_penal, 1.0)
        K_eps = ops.assemble_stiffness(coeff)
        mask = ~inside
        mass_eps = ops.assemble_mass(mask)
        load_eps = ops.load_from_element_scalars(np.where(mask, f_el, 0.0))
        u_eps = _solve_lambda_system(K_eps, mass_eps, load_eps, lam,
                                     boundary, config)
        diff = u_eps - u_hom
        distances.append(float(np.sqrt(diff @ (mass_full @ diff))))
    return LambdaReport(epsilons, tuple(distances), hom.matrix, theta,
                        box_size, resolution)
