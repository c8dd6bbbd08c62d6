"""Coefficient fields, energy densities, and closeness-in-mean statistics.

Every field evaluates vectorized on (m, dim) point arrays and stays inside its
declared bounds. Random fields use a counter-based hash keyed by (seed, cell
index), so evaluation is deterministic, order-independent, and random access;
shifting the environment is an integer index shift, which is what makes the
stationarity identity a(w, y + z) = a(shift_z w, y) exact.

The statistics implement the closeness-in-mean quantity used by the stability
experiments: the cube-window average of the analytic supremum over |xi| <= t
of the energy-density difference (t^2 |a - b| for quadratic scalar pairs,
t^2 times the spectral radius of the symmetrized difference for matrix pairs,
t^p |a - b| for p-power pairs).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from fractions import Fraction
from math import gcd

import numpy as np

from .numerics import Grid

_MASK64 = (1 << 64) - 1
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB
_GOLD = 0x9E3779B97F4A7C15
_AXIS_SALT = (0xA0761D6478BD642F, 0xE7037ED1A0B428DB)


def _scramble_scalar(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _C1) & _MASK64
    z = ((z ^ (z >> 27)) * _C2) & _MASK64
    return z ^ (z >> 31)


def _scramble_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_C1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_C2)
    return z ^ (z >> np.uint64(31))


def mix_seed(seed: int, index: int) -> int:
    """Derive a per-trial seed; pure function of (seed, index)."""
    return _scramble_scalar((seed + _GOLD * (index + 1)) & _MASK64)


def cell_uniforms(seed: int, cells: np.ndarray) -> np.ndarray:
    """Uniform [0, 1) variates keyed by (seed, cell index), shape (m,)."""
    cells = np.atleast_2d(np.asarray(cells, dtype=np.int64))
    h = np.full(cells.shape[0], _scramble_scalar(seed + _GOLD), dtype=np.uint64)
    for j in range(cells.shape[1]):
        lane = cells[:, j].astype(np.uint64) + np.uint64(_AXIS_SALT[j])
        h = _scramble_array(h ^ _scramble_array(lane))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


@dataclass(frozen=True)
class FieldBounds:
    """Uniform ellipticity window [alpha, beta] and growth exponent p."""

    alpha: float
    beta: float
    p: float = 2.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.beta >= self.alpha:
            raise ValueError(f"beta must be >= alpha, got bounds ({self.alpha}, {self.beta})")
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")


def _as_points(pts, dim: int) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        if dim != 1:
            raise ValueError(f"1D point array passed to a dim-{dim} field")
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ValueError(f"points must have shape (m, {dim}), got {pts.shape}")
    return pts


class ScalarField:
    """Base for scalar coefficient fields; subclasses fill values_impl."""

    bounds: FieldBounds
    dim: int

    def values(self, pts) -> np.ndarray:
        return self.values_impl(_as_points(pts, self.dim))

    def values_impl(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def period(self) -> float | None:
        """Axis period if the field is periodic, else None."""
        return None

    @property
    def alignment_divisor(self) -> int:
        """Cells per unit must be a multiple of this for exact phase alignment."""
        return 1


@dataclass(frozen=True)
class Constant(ScalarField):
    value: float
    bounds: FieldBounds
    dim: int = 1

    def __post_init__(self):
        if not self.bounds.alpha <= self.value <= self.bounds.beta:
            raise ValueError(f"constant {self.value} outside bounds "
                             f"[{self.bounds.alpha}, {self.bounds.beta}]")

    def values_impl(self, pts):
        return np.full(len(pts), self.value)

    @property
    def period(self):
        return 1.0


@dataclass(frozen=True)
class Layered1D(ScalarField):
    """1-periodic piecewise-constant profile in the first coordinate.

    ``breakpoints`` are the left endpoints in [0, 1), strictly increasing,
    starting at 0; value j applies on [b_j, b_{j+1}).
    """

    breakpoints: tuple[float, ...]
    layer_values: tuple[float, ...]
    bounds: FieldBounds
    dim: int = 1

    def __post_init__(self):
        b = np.asarray(self.breakpoints)
        if len(b) == 0 or b[0] != 0.0 or np.any(np.diff(b) <= 0) or np.any(b >= 1.0):
            raise ValueError("breakpoints must start at 0, increase strictly, stay in [0, 1)")
        if len(self.layer_values) != len(b):
            raise ValueError("one value per breakpoint required")
        v = np.asarray(self.layer_values)
        if np.any(v < self.bounds.alpha) or np.any(v > self.bounds.beta):
            raise ValueError("layer values outside bounds")

    def values_impl(self, pts):
        frac = np.mod(pts[:, 0], 1.0)
        idx = np.searchsorted(np.asarray(self.breakpoints), frac, side="right") - 1
        return np.asarray(self.layer_values)[idx]

    @property
    def period(self):
        return 1.0

    @property
    def alignment_divisor(self):
        denoms = [Fraction(b).limit_denominator(4096).denominator for b in self.breakpoints]
        for b, d in zip(self.breakpoints, denoms):
            if abs(b - round(b * d) / d) > 1e-12:
                raise ValueError(f"breakpoint {b} is not a small rational; "
                                 "no exact grid alignment exists")
        out = 1
        for d in denoms:
            out = out * d // gcd(out, d)
        return out


@dataclass(frozen=True)
class PeriodicStep(ScalarField):
    """Unit-periodic field, constant on a k x k subdivision of the unit cell.

    ``cell_values`` is row-major with the first axis fastest, length k**dim.
    """

    subdivisions: int
    cell_values: tuple[float, ...]
    bounds: FieldBounds
    dim: int = 2

    def __post_init__(self):
        if self.subdivisions < 1:
            raise ValueError("subdivisions must be >= 1")
        if len(self.cell_values) != self.subdivisions ** self.dim:
            raise ValueError(f"need {self.subdivisions ** self.dim} cell values, "
                             f"got {len(self.cell_values)}")
        v = np.asarray(self.cell_values)
        if np.any(v < self.bounds.alpha) or np.any(v > self.bounds.beta):
            raise ValueError("cell values outside bounds")

    def values_impl(self, pts):
        k = self.subdivisions
        sub = np.clip((np.mod(pts, 1.0) * k).astype(np.int64), 0, k - 1)
        flat = sub[:, 0]
        if self.dim == 2:
            flat = flat + k * sub[:, 1]
        return np.asarray(self.cell_values)[flat]

    @property
    def period(self):
        return 1.0

    @property
    def alignment_divisor(self):
        return self.subdivisions


def checkerboard_step(low: float, high: float, bounds: FieldBounds) -> PeriodicStep:
    """The periodic 2x2 checkerboard with ``low`` on the even diagonal."""
    return PeriodicStep(2, (low, high, high, low), bounds, dim=2)


@dataclass(frozen=True)
class TrigPolynomialClamped(ScalarField):
    """offset + sum of sines, clamped into [alpha, beta]: ((P v alpha) ^ beta).

    Terms are (amplitude, frequency vector, phase) with frequencies in cycles
    per unit length; irrational frequencies give an almost-periodic field.
    """

    offset: float
    terms: tuple[tuple[float, tuple[float, ...], float], ...]
    bounds: FieldBounds
    dim: int = 1

    def __post_init__(self):
        for amp, freq, phase in self.terms:
            if len(freq) != self.dim:
                raise ValueError(f"frequency vector {freq} does not match dim {self.dim}")

    def values_impl(self, pts):
        period = self.period
        if period is not None:
            # reduce first so integer-translated windows see bit-identical
            # arguments (the field is exactly periodic in each coordinate)
            pts = pts - period * np.floor(pts / period)
        raw = np.full(len(pts), float(self.offset))
        for amp, freq, phase in self.terms:
            raw += amp * np.sin(2.0 * np.pi * (pts @ np.asarray(freq)) + phase)
        return np.clip(raw, self.bounds.alpha, self.bounds.beta)

    @property
    def period(self):
        denoms = []
        for _, freq, _ in self.terms:
            for f in freq:
                if f == 0.0:
                    continue
                frac = Fraction(f).limit_denominator(1000)
                if abs(f - float(frac)) > 1e-9:
                    return None
                denoms.append(frac.denominator)
        if not denoms:
            return 1.0
        out = 1
        for d in denoms:
            out = out * d // gcd(out, d)
        return float(out)


@dataclass(frozen=True)
class HalfSpaceStep(ScalarField):
    """gamma + c on {y_1 >= 0}, gamma - c below; not homogenizable for c != 0."""

    gamma: float
    c: float
    bounds: FieldBounds
    dim: int = 1

    def __post_init__(self):
        if not (self.bounds.alpha <= self.gamma - abs(self.c)
                and self.gamma + abs(self.c) <= self.bounds.beta):
            raise ValueError("gamma +/- c must stay within bounds")

    def values_impl(self, pts):
        return np.where(pts[:, 0] >= 0.0, self.gamma + self.c, self.gamma - self.c)


@dataclass(frozen=True)
class PowerOfTwoCells:
    """Cells z with every coordinate a positive integer power of two.

    The perturbation lives on the sub-square z + [0, width)^d of qualifying
    cells; the set has density (log R)^d / R^d in the window Q_R, hence
    vanishing mean.
    """

    width: float = 1.0

    def __post_init__(self):
        if not 0 < self.width <= 1:
            raise ValueError(f"width must be in (0, 1], got {self.width}")

    def profile(self, pts: np.ndarray) -> np.ndarray:
        cells = np.floor(pts).astype(np.int64)
        offs = pts - cells
        ok = np.ones(len(pts), dtype=bool)
        for j in range(pts.shape[1]):
            k = cells[:, j]
            is_pow2 = (k >= 1) & ((k & (k - 1)) == 0)
            ok &= is_pow2 & (offs[:, j] < self.width)
        return ok.astype(float)

    def qualifying_cells(self, R: float, dim: int) -> list[tuple[int, ...]]:
        """Enumerate qualifying cells intersecting the centered window Q_R."""
        half = R / 2.0
        powers = []
        k = 1
        while k < half:
            powers.append(k)
            k *= 2
        if dim == 1:
            return [(p,) for p in powers]
        return [(p, q) for p in powers for q in powers]


@dataclass(frozen=True)
class BallSupport:
    """Indicator of the origin-centered euclidean ball of the given radius."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    def profile(self, pts: np.ndarray) -> np.ndarray:
        return (np.linalg.norm(pts, axis=1) <= self.radius).astype(float)


@dataclass(frozen=True)
class LpDecay:
    """Cell-constant profile (1 + |z|_inf)^(-q); summable mean for q > 0."""

    exponent: float

    def __post_init__(self):
        if not self.exponent > 0:
            raise ValueError("exponent must be positive")

    def profile(self, pts: np.ndarray) -> np.ndarray:
        cells = np.floor(pts).astype(np.int64)
        norm = np.max(np.abs(cells), axis=1)
        return (1.0 + norm) ** (-self.exponent)


SparsePerturbationRule = PowerOfTwoCells | BallSupport | LpDecay


def rule_mean_abs_bound(rule: SparsePerturbationRule, R: float, dim: int) -> float:
    """Upper bound on the Q_R average of the rule's |profile| (certifies
    the vanishing-mean property used by the stability experiments)."""
    if isinstance(rule, BallSupport):
        vol = 2.0 * rule.radius if dim == 1 else np.pi * rule.radius ** 2
        return min(1.0, vol / R ** dim)
    if isinstance(rule, PowerOfTwoCells):
        count = len(rule.qualifying_cells(R, dim))
        return count * rule.width ** dim / R ** dim
    half = int(np.ceil(R / 2.0))
    ks = np.arange(-half, half)
    if dim == 1:
        total = np.sum((1.0 + np.abs(ks)) ** (-rule.exponent))
    else:
        kx, ky = np.meshgrid(ks, ks, indexing="xy")
        total = np.sum((1.0 + np.maximum(np.abs(kx), np.abs(ky))) ** (-rule.exponent))
    return float(total / R ** dim)


@dataclass(frozen=True)
class Perturbed(ScalarField):
    """base + amplitude * rule profile, clamped back into the base bounds."""

    base: ScalarField
    rule: SparsePerturbationRule
    amplitude: float

    def __post_init__(self):
        if self.amplitude == 0.0:
            raise ValueError("amplitude must be nonzero (use the base field instead)")

    @property
    def bounds(self):
        return self.base.bounds

    @property
    def dim(self):
        return self.base.dim

    def values_impl(self, pts):
        raw = self.base.values_impl(pts) + self.amplitude * self.rule.profile(pts)
        return np.clip(raw, self.bounds.alpha, self.bounds.beta)


@dataclass(frozen=True)
class RandomCheckerboard(ScalarField):
    """iid two-valued field, constant on unit cells z + [0, 1)^d.

    Cell z takes ``cell_values[1]`` with the given probability, decided by a
    counter-based hash of (seed, z + index_offset); ``shifted`` translates the
    environment by shifting the index. ``flip_cells`` swaps the two values on
    the qualifying cells of a sparse rule (the stochastic perturbation).
    """

    cell_values: tuple[float, float]
    probability: float
    seed: int
    bounds: FieldBounds
    dim: int = 2
    index_offset: tuple[int, ...] = None
    flip_cells: PowerOfTwoCells | None = None

    def __post_init__(self):
        lo, hi = self.cell_values
        if not (self.bounds.alpha <= lo <= self.bounds.beta
                and self.bounds.alpha <= hi <= self.bounds.beta):
            raise ValueError("cell values outside bounds")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability must be in [0, 1], got {self.probability}")
        if self.index_offset is None:
            object.__setattr__(self, "index_offset", (0,) * self.dim)
        if len(self.index_offset) != self.dim:
            raise ValueError("index_offset must have one entry per axis")

    def values_impl(self, pts):
        cells = np.floor(pts).astype(np.int64) + np.asarray(self.index_offset, dtype=np.int64)
        u = cell_uniforms(self.seed, cells)
        vals = np.where(u < self.probability, self.cell_values[1], self.cell_values[0])
        if self.flip_cells is not None:
            flip = np.ones(len(cells), dtype=bool)
            for j in range(self.dim):
                k = cells[:, j]
                flip &= (k >= 1) & ((k & (k - 1)) == 0)
            swapped = self.cell_values[0] + self.cell_values[1] - vals
            vals = np.where(flip, swapped, vals)
        return vals

    def shifted(self, z: tuple[int, ...]) -> "RandomCheckerboard":
        offset = tuple(o + int(dz) for o, dz in zip(self.index_offset, z))
        return dataclasses.replace(self, index_offset=offset)


@dataclass(frozen=True)
class MatrixField:
    """d x d matrix of scalar fields with a declared symmetry flag."""

    entries: tuple[tuple[ScalarField, ...], ...]
    symmetric: bool
    dim: int

    def __post_init__(self):
        if len(self.entries) != self.dim or any(len(r) != self.dim for r in self.entries):
            raise ValueError(f"entries must form a {self.dim} x {self.dim} grid")

    @property
    def bounds(self):
        return self.entries[0][0].bounds

    def values(self, pts) -> np.ndarray:
        pts = _as_points(pts, self.dim)
        out = np.empty((len(pts), self.dim, self.dim))
        for i in range(self.dim):
            for j in range(self.dim):
                out[:, i, j] = self.entries[i][j].values_impl(pts)
        return out


def isotropic_matrix(coeff: ScalarField) -> MatrixField:
    """a(y) * Identity as a MatrixField."""
    zero_bounds = coeff.bounds
    rows = []
    for i in range(coeff.dim):
        row = []
        for j in range(coeff.dim):
            if i == j:
                row.append(coeff)
            else:
                row.append(_ZeroField(zero_bounds, coeff.dim))
        rows.append(tuple(row))
    return MatrixField(tuple(rows), symmetric=True, dim=coeff.dim)


@dataclass(frozen=True)
class _ZeroField(ScalarField):
    # off-diagonal filler; deliberately exempt from the [alpha, beta] window,
    # which constrains eigenvalues of the full matrix, not entries
    bounds: FieldBounds
    dim: int

    def values_impl(self, pts):
        return np.zeros(len(pts))

    @property
    def period(self):
        return 1.0


def constant_matrix(mat, bounds: FieldBounds, dim: int = 2) -> MatrixField:
    """Constant matrix field; validates uniform ellipticity of the matrix."""
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (dim, dim):
        raise ValueError(f"matrix must be {dim} x {dim}")
    sym = 0.5 * (mat + mat.T)
    eigs = np.linalg.eigvalsh(sym)
    if eigs.min() < bounds.alpha - 1e-12:
        raise ValueError(f"matrix not elliptic above alpha = {bounds.alpha}: "
                         f"min symmetric eigenvalue {eigs.min():.6g}")
    if np.linalg.norm(mat, 2) > bounds.beta + 1e-12:
        raise ValueError(f"matrix norm exceeds beta = {bounds.beta}")
    rows = tuple(tuple(_FixedValue(mat[i, j], bounds, dim) for j in range(dim))
                 for i in range(dim))
    return MatrixField(rows, symmetric=bool(np.allclose(mat, mat.T, atol=0)), dim=dim)


@dataclass(frozen=True)
class _FixedValue(ScalarField):
    value: float
    bounds: FieldBounds
    dim: int

    def values_impl(self, pts):
        return np.full(len(pts), self.value)

    @property
    def period(self):
        return 1.0


# Energy densities f(y, xi)

@dataclass(frozen=True)
class QuadraticIsotropic:
    coeff: ScalarField

    @property
    def p(self):
        return 2.0

    @property
    def dim(self):
        return self.coeff.dim

    @property
    def bounds(self):
        return self.coeff.bounds


@dataclass(frozen=True)
class QuadraticMatrix:
    matrix: MatrixField

    @property
    def p(self):
        return 2.0

    @property
    def dim(self):
        return self.matrix.dim

    @property
    def bounds(self):
        return self.matrix.bounds


@dataclass(frozen=True)
class PPower:
    coeff: ScalarField
    p: float

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")

    @property
    def dim(self):
        return self.coeff.dim

    @property
    def bounds(self):
        return self.coeff.bounds


EnergyDensity = QuadraticIsotropic | QuadraticMatrix | PPower


def eval_scalar(field: ScalarField, pts) -> np.ndarray:
    """Evaluate and enforce the bounds contract."""
    v = field.values(pts)
    b = field.bounds
    if np.any(v < b.alpha - 1e-12) or np.any(v > b.beta + 1e-12):
        raise AssertionError(f"field values escaped bounds [{b.alpha}, {b.beta}]: "
                             f"range [{v.min():.6g}, {v.max():.6g}]")
    return v


def eval_matrix(field: MatrixField, pts) -> np.ndarray:
    return field.values(pts)


def element_coefficients(density: EnergyDensity, grid: Grid) -> np.ndarray:
    """Per-element coefficients at element centers: (n_e,) or (n_e, d, d)."""
    centers = grid.element_centers()
    if isinstance(density, QuadraticMatrix):
        return eval_matrix(density.matrix, centers)
    return eval_scalar(density.coeff, centers)


def _window_points(R: float, resolution_per_unit: int, dim: int,
                   center) -> tuple[np.ndarray, float]:
    n_f = R * resolution_per_unit
    n = int(round(n_f))
    if abs(n_f - n) > 1e-9 or n < 1:
        raise ValueError(f"window side {R} times resolution {resolution_per_unit} "
                         "must be a positive integer")
    h = R / n
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    axes = [center[k] - R / 2.0 + h * (np.arange(n) + 0.5) for k in range(dim)]
    if dim == 1:
        return axes[0][:, None], h
    xg, yg = np.meshgrid(axes[0], axes[1], indexing="xy")
    return np.column_stack([xg.ravel(), yg.ravel()]), h


def _sym_spectral_radius_2x2(D: np.ndarray) -> np.ndarray:
    s01 = 0.5 * (D[:, 0, 1] + D[:, 1, 0])
    half_tr = 0.5 * (D[:, 0, 0] + D[:, 1, 1])
    half_gap = 0.5 * (D[:, 0, 0] - D[:, 1, 1])
    root = np.sqrt(half_gap ** 2 + s01 ** 2)
    return np.maximum(np.abs(half_tr + root), np.abs(half_tr - root))


def mean_abs_statistic(f: EnergyDensity, g: EnergyDensity, t: float, R: float,
                       resolution_per_unit: int = 16, center=None) -> float:
    """Cube-window average of sup_{|xi| <= t} |f(y, xi) - g(y, xi)|.

    The sup is analytic per density pair; midpoint quadrature over Q_R(center)
    with the given resolution.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if f.dim != g.dim:
        raise ValueError("densities have different dimensions")
    pts, _ = _window_points(R, resolution_per_unit, f.dim, center)
    quad_kinds = (QuadraticIsotropic, QuadraticMatrix)
    if isinstance(f, PPower) or isinstance(g, PPower):
        if not (isinstance(f, PPower) and isinstance(g, PPower) and f.p == g.p):
            raise ValueError("p-power densities can only be compared at equal p")
        diff = np.abs(eval_scalar(f.coeff, pts) - eval_scalar(g.coeff, pts))
        return float(t ** f.p * diff.mean())
    if isinstance(f, quad_kinds) and isinstance(g, quad_kinds):
        if isinstance(f, QuadraticIsotropic) and isinstance(g, QuadraticIsotropic):
            diff = np.abs(eval_scalar(f.coeff, pts) - eval_scalar(g.coeff, pts))
            return float(t ** 2 * diff.mean())
        fm = f.matrix.values(pts) if isinstance(f, QuadraticMatrix) else \
            eval_scalar(f.coeff, pts)[:, None, None] * np.eye(f.dim)[None]
        gm = g.matrix.values(pts) if isinstance(g, QuadraticMatrix) else \
            eval_scalar(g.coeff, pts)[:, None, None] * np.eye(g.dim)[None]
        D = fm - gm
        if f.dim == 1:
            sup = np.abs(D[:, 0, 0])
        else:
            sup = _sym_spectral_radius_2x2(D)
        return float(t ** 2 * sup.mean())
    raise ValueError(f"unsupported density pair: {type(f).__name__}, {type(g).__name__}")


def expectation_statistic(family_f, family_g, t: float, R: float, trials: int,
                          seed: int, resolution_per_unit: int = 16,
                          p: float = 2.0) -> tuple[float, float]:
    """Monte-Carlo mean and standard error of the paired-seed statistic.

    Families expose realize(seed) -> ScalarField; realizations are paired by
    per-trial seeds derived from (seed, trial index).
    """
    if trials < 2:
        raise ValueError(f"trials must be >= 2 for a standard error, got {trials}")
    vals = np.empty(trials)
    for i in range(trials):
        s = mix_seed(seed, i)
        a = family_f.realize(s)
        b = family_g.realize(s)
        fa = PPower(a, p) if p != 2.0 else QuadraticIsotropic(a)
        fb = PPower(b, p) if p != 2.0 else QuadraticIsotropic(b)
        vals[i] = mean_abs_statistic(fa, fb, t, R, resolution_per_unit)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(trials))
    return mean, se


@dataclass(frozen=True)
class CheckerboardFamily:
    """Seed-indexed family of iid checkerboards (optionally sparsely flipped)."""

    cell_values: tuple[float, float]
    probability: float
    bounds: FieldBounds
    dim: int = 2
    flip_cells: PowerOfTwoCells | None = None

    def realize(self, seed: int) -> RandomCheckerboard:
        return RandomCheckerboard(self.cell_values, self.probability, seed,
                                  self.bounds, dim=self.dim,
                                  flip_cells=self.flip_cells)
