# -*- coding: utf-8 -*-
""" Explicit barrier functions a(x_1) b(x') on cylinders, their Hessian determinants and the constants they give"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from utils import CHECK_TOL, BarrierDomainError, as_points

VARIANTS = ("w_eps", "w_bar", "w_lower")
MAX_RADIUS: float = math.sqrt(2.0)
DOMAIN_TOL: float = 1e-12
FD_STEP: float = 1e-4
CERT_X1_POINTS: int = 401
CERT_RADIUS_POINTS: int = 201
CERT_X1_MIN: float = 1e-8
RHO_GRID_POINTS: int = 1401
AMP_CONSTANT_2D: float = math.sqrt(8.0) * math.e


@dataclass(frozen=True)
class BarrierSpec:
    """ A barrier w(x) = a(x_1) b(x') on the cylinder (0, 1) x B_{sqrt 2}^{n-1}.

    Args:
        dimension (int): n >= 2.
        variant (str): "w_eps" (power profile), "w_bar" (upper profile) or "w_lower" (lower profile).
        epsilon (float): Exponent offset in (0, 1/2], used only for n = 2.
    """
    dimension: int
    variant: str = "w_eps"
    epsilon: float = 0.5

    def __post_init__(self):
        if self.dimension < 2:
            raise BarrierDomainError(f"Barriers need dimension n >= 2, got {self.dimension}", value=self.dimension)
        if self.variant not in VARIANTS:
            raise BarrierDomainError(f"Unknown barrier variant {self.variant}", value=self.variant)
        if self.dimension == 2 and not 0 < self.epsilon <= 0.5:
            raise BarrierDomainError(f"Epsilon must lie in (0, 1/2], got {self.epsilon}", value=self.epsilon)

    @property
    def exponent(self) -> float:
        """ 2/n, lowered by epsilon in the plane."""
        return 2.0 / self.dimension - (self.epsilon if self.dimension == 2 else 0.0)


def _power(x1: np.ndarray, exponent: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x1 > 0, np.exp(exponent * np.log(np.where(x1 > 0, x1, 1.0))), 0.0)


def _log(x1: np.ndarray) -> np.ndarray:
    return np.log(np.where(x1 > 0, x1, 1.0))


def a_lower(x1):
    """ x_1 (1 - ln x_1), continued by 0 at 0."""
    x = np.asarray(x1, dtype=float)
    return np.where(x > 0, x * (1.0 - _log(x)), 0.0)


def a_upper(x1):
    """ x_1 (1/2 - ln x_1)^{1/2}, continued by 0 at 0."""
    x = np.asarray(x1, dtype=float)
    return np.where(x > 0, x * np.sqrt(np.maximum(0.5 - _log(x), 0.0)), 0.0)


def lower_profile(dimension: int, x1):
    """ Profile of the strengthened maximum principle: a_lower in the plane, x_1^{2/n} otherwise."""
    x = np.asarray(x1, dtype=float)
    return a_lower(x) if dimension == 2 else _power(x, 2.0 / dimension)


def upper_profile(dimension: int, x1):
    x = np.asarray(x1, dtype=float)
    return a_upper(x) if dimension == 2 else _power(x, 2.0 / dimension)


def profile(spec: BarrierSpec, x1) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ The profile a and its first two derivatives at x_1 > 0."""
    x = np.asarray(x1, dtype=float)
    log_x = _log(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        if spec.variant == "w_bar" and spec.dimension == 2:
            shifted = 0.5 - log_x
            root = np.sqrt(shifted)
            return x * root, -log_x / root, -(1.0 - log_x) / (2.0 * x * shifted * root)
        if spec.variant == "w_lower" and spec.dimension == 2:
            return x * (1.0 - log_x), -log_x, -1.0 / x
    gamma = 2.0 / spec.dimension if spec.variant != "w_eps" else spec.exponent
    return _power(x, gamma), gamma * _power(x, gamma - 1.0), gamma * (gamma - 1.0) * _power(x, gamma - 2.0)


def _cross_section(x: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(x[:, 1:] ** 2, axis=1) - 1.0


def _check_cylinder(spec: BarrierSpec, pts: np.ndarray, open_base: bool) -> None:
    radius = np.sqrt(np.sum(pts[:, 1:] ** 2, axis=1))
    x1 = pts[:, 0]
    low_ok = x1 > 0 if open_base else x1 >= -DOMAIN_TOL
    inside = low_ok & (x1 <= 1.0 + DOMAIN_TOL) & (radius <= MAX_RADIUS * (1.0 + DOMAIN_TOL))
    if not np.all(inside):
        bad = pts[np.argmin(inside)]
        where = "interior of" if open_base else "closed"
        raise BarrierDomainError(f"Point {bad.tolist()} lies outside the {where} cylinder K_(1,sqrt 2)",
                                 value=bad.tolist())


def evaluate_unchecked(spec: BarrierSpec, points) -> np.ndarray:
    pts = as_points(points, spec.dimension)
    return profile(spec, pts[:, 0])[0] * _cross_section(pts)


def evaluate(spec: BarrierSpec, points) -> np.ndarray:
    """ a(x_1) b(x') on the closed cylinder; nonpositive, zero on {x_1 = 0} and on {|x'| = sqrt 2}."""
    pts = as_points(points, spec.dimension)
    _check_cylinder(spec, pts, open_base=False)
    a = np.where(pts[:, 0] > 0, profile(spec, np.clip(pts[:, 0], 0.0, 1.0))[0], 0.0)
    return a * np.minimum(_cross_section(pts), 0.0)


def det_hessian(spec: BarrierSpec, points) -> np.ndarray:
    """ Hessian determinant a^{n-1} a'' b - a^{n-2} a'^2 |x'|^2 at points with x_1 > 0."""
    pts = as_points(points, spec.dimension)
    _check_cylinder(spec, pts, open_base=True)
    n = spec.dimension
    a, a1, a2 = profile(spec, pts[:, 0])
    radius_sq = np.sum(pts[:, 1:] ** 2, axis=1)
    return a ** (n - 1) * a2 * _cross_section(pts) - a ** (n - 2) * a1 ** 2 * radius_sq


def determinant_scale(spec: BarrierSpec, points) -> np.ndarray:
    """ Sum of the magnitudes of the two determinant terms, the reference for relative errors."""
    pts = as_points(points, spec.dimension)
    n = spec.dimension
    a, a1, a2 = profile(spec, pts[:, 0])
    radius_sq = np.sum(pts[:, 1:] ** 2, axis=1)
    return np.abs(a ** (n - 1) * a2 * _cross_section(pts)) + a ** (n - 2) * a1 ** 2 * radius_sq


def hessian(spec: BarrierSpec, point) -> np.ndarray:
    x = np.asarray(point, dtype=float).reshape(-1)
    a, a1, a2 = (float(v) for v in profile(spec, x[:1]))
    matrix = a * np.eye(spec.dimension)
    matrix[0, 0] = a2 * float(_cross_section(x[None, :])[0])
    matrix[0, 1:] = a1 * x[1:]
    matrix[1:, 0] = a1 * x[1:]
    return matrix


def finite_difference_det(spec: BarrierSpec, point, step: float = FD_STEP) -> float:
    """ Determinant of the central difference Hessian of the barrier."""
    x = np.asarray(point, dtype=float).reshape(-1)
    n = spec.dimension
    eye = np.eye(n) * step
    center = float(evaluate_unchecked(spec, x)[0])
    matrix = np.empty((n, n))
    for i in range(n):
        plus = float(evaluate_unchecked(spec, x + eye[i])[0])
        minus = float(evaluate_unchecked(spec, x - eye[i])[0])
        matrix[i, i] = (plus - 2.0 * center + minus) / step ** 2
        for j in range(i + 1, n):
            corners = evaluate_unchecked(spec, np.array([x + eye[i] + eye[j], x + eye[i] - eye[j],
                                                         x - eye[i] + eye[j], x - eye[i] - eye[j]]))
            matrix[i, j] = matrix[j, i] = (corners[0] - corners[1] - corners[2] + corners[3]) / (4.0 * step ** 2)
    return float(np.linalg.det(matrix))


def sample_interior(rng: np.random.Generator, dimension: int, count: int,
                    x1_range: Tuple[float, float] = (0.25, 0.95), radius_fraction: float = 0.95) -> np.ndarray:
    """ Random points of the cylinder away from its base, uniform in direction and radius."""
    x1 = rng.uniform(*x1_range, size=count)
    directions = rng.normal(size=(count, dimension - 1))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = rng.uniform(0.0, MAX_RADIUS * radius_fraction, size=count)
    return np.column_stack([x1, directions * radii[:, None]])


@dataclass
class FiniteDifferenceReport:
    points: np.ndarray
    closed_form: np.ndarray
    finite_difference: np.ndarray
    relative_error: np.ndarray

    @property
    def worst(self) -> float:
        return float(np.max(self.relative_error))

    def passed(self, tol: float = 1e-6) -> bool:
        return self.worst <= tol


def determinant_consistency(spec: BarrierSpec, points, step: float = FD_STEP) -> FiniteDifferenceReport:
    pts = as_points(points, spec.dimension)
    closed = det_hessian(spec, pts)
    numeric = np.array([finite_difference_det(spec, x, step) for x in pts])
    error = np.abs(closed - numeric) / determinant_scale(spec, pts)
    return FiniteDifferenceReport(points=pts, closed_form=closed, finite_difference=numeric, relative_error=error)


def _grid_points(dimension: int, x1_grid: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """ Points (x_1, r e_2) covering the grid; the determinant depends on x' only through |x'|."""
    x1, radius = np.meshgrid(x1_grid, radii, indexing="ij")
    points = np.zeros((x1.size, dimension))
    points[:, 0] = x1.reshape(-1)
    points[:, 1] = radius.reshape(-1)
    return points


def certificate_grid(rho: float) -> Tuple[np.ndarray, np.ndarray]:
    return np.geomspace(CERT_X1_MIN, 1.0, CERT_X1_POINTS), np.linspace(0.0, rho, CERT_RADIUS_POINTS)


@dataclass
class ConvexityCertificate:
    """ Trailing principal minors of the barrier Hessian on a grid of K_(1,rho).

    Attributes:
        convex (bool): True iff every minor is positive.
        x1_grid (np.ndarray): Axial grid.
        radii (np.ndarray): Radial grid.
        minors (np.ndarray): (len(x1_grid), len(radii), n) array; entry k-1 is the minor of rows and columns k..n.
    """
    convex: bool
    x1_grid: np.ndarray
    radii: np.ndarray
    minors: np.ndarray

    @property
    def minimum_det(self) -> float:
        return float(np.min(self.minors[:, :, 0]))

    def rows(self, stride: int = 1) -> List[Tuple[float, float, int, float]]:
        rows = []
        for i in range(0, self.x1_grid.size, stride):
            for j in range(0, self.radii.size, stride):
                for k in range(self.minors.shape[2]):
                    rows.append((float(self.x1_grid[i]), float(self.radii[j]), k + 1, float(self.minors[i, j, k])))
        return rows


def convexity_cert(spec: BarrierSpec, rho: float) -> ConvexityCertificate:
    """ Sylvester certificate on the trailing minors; the minors of order below n are the powers a^{n-k+1}."""
    if not 0 < rho <= MAX_RADIUS * (1.0 + DOMAIN_TOL):
        raise BarrierDomainError(f"Radius must lie in (0, sqrt 2], got {rho}", value=rho)
    n = spec.dimension
    x1_grid, radii = certificate_grid(rho)
    points = _grid_points(n, x1_grid, radii)
    minors = np.empty((x1_grid.size, radii.size, n))
    minors[:, :, 0] = det_hessian(spec, points).reshape(x1_grid.size, radii.size)
    a = profile(spec, x1_grid)[0]
    for k in range(2, n + 1):
        minors[:, :, k - 1] = (a ** (n - k + 1))[:, None]
    return ConvexityCertificate(convex=bool(np.all(minors > 0)), x1_grid=x1_grid, radii=radii, minors=minors)


def _power_det_bound(dimension: int, rho):
    """ Determinant of the x_1^{2/n} barrier at radius rho; it does not depend on x_1."""
    gamma = 2.0 / dimension
    rho = np.asarray(rho, dtype=float)
    return gamma * (1.0 - gamma) * (1.0 - rho ** 2 / 2.0) - gamma ** 2 * rho ** 2


def barrier_constants(dimension: int, epsilon: float = 0.5) -> Tuple[float, float]:
    """ A pair (lambda, rho) with det D^2 w >= lambda on K_(1,rho).

    In the plane this is (eps/4, sqrt(eps/2)). For n >= 3, rho is the largest value of a fine grid on
    [0, sqrt 2] keeping the determinant at least half of its value on the axis, and lambda is the
    determinant at that radius.
    """
    if dimension == 2:
        if not 0 < epsilon <= 0.5:
            raise BarrierDomainError(f"Epsilon must lie in (0, 1/2], got {epsilon}", value=epsilon)
        return epsilon / 4.0, math.sqrt(epsilon / 2.0)
    if dimension < 2:
        raise BarrierDomainError(f"Barriers need dimension n >= 2, got {dimension}", value=dimension)
    grid = np.linspace(0.0, MAX_RADIUS, RHO_GRID_POINTS)
    values = _power_det_bound(dimension, grid)
    rho = float(grid[np.flatnonzero(values >= 0.5 * values[0])[-1]])
    return float(_power_det_bound(dimension, rho)), rho


def optimal_epsilon(x1):
    """ min(1/2, -1/ln x_1), the epsilon minimizing the planar bound at depth x_1."""
    x = np.asarray(x1, dtype=float)
    small = (x > 0) & (x <= math.exp(-2.0))
    return np.where(small, -1.0 / np.log(np.where(small, x, math.exp(-2.0))), 0.5)


def amp_bound_value(dimension: int, x1):
    """ The optimized barrier bound at depth x_1: sqrt 8 x_1^{1-eps}/eps in the plane, C_n x_1^{2/n} otherwise."""
    x = np.asarray(x1, dtype=float)
    if dimension == 2:
        eps = optimal_epsilon(x)
        return np.where(x > 0, math.sqrt(8.0) * _power(x, 1.0 - eps) / eps, 0.0)
    return amp_constant(dimension) * _power(x, 2.0 / dimension)


def amp_constant(dimension: int) -> float:
    if dimension == 2:
        return AMP_CONSTANT_2D
    lam, rho = barrier_constants(dimension)
    return lam ** (-1.0 / dimension) * rho ** (-2.0 * (dimension - 1) / dimension)


def reflect(points) -> np.ndarray:
    """ Folds K_(2,rho) onto K_(1,rho) through the plane x_1 = 1."""
    pts = np.array(as_points(points), dtype=float)
    pts[:, 0] = np.minimum(pts[:, 0], 2.0 - pts[:, 0])
    return pts


def scaled_barrier(spec: BarrierSpec, points) -> np.ndarray:
    """ lambda^{-1/n} rho^{-2(n-1)/n} w(x_1, rho x') on K_(2,1), reflected through x_1 = 1.

    Its Hessian determinant is at least 1 on the open cylinder, so it lies below every convex function
    with zero boundary values and Monge-Ampere measure at most Lebesgue measure there.
    """
    n = spec.dimension
    lam, rho = barrier_constants(n, spec.epsilon)
    pts = reflect(points)
    pts[:, 1:] *= rho
    return lam ** (-1.0 / n) * rho ** (-2.0 * (n - 1) / n) * evaluate(spec, pts)


@dataclass
class AMPProfileBound:
    """ Constant C_n and the profile of the bound |v(x)| <= C_n a(min(x_1, 2 - x_1)) on K_(2,1)."""
    dimension: int
    constant: float

    def bound(self, x1) -> np.ndarray:
        x = np.asarray(x1, dtype=float)
        return self.constant * lower_profile(self.dimension, np.minimum(x, 2.0 - x))

    def check(self, points, values, tol: float = 1e-6) -> "AMPProfileCheck":
        pts = as_points(points, self.dimension)
        margins = self.bound(pts[:, 0]) - np.abs(np.asarray(values, dtype=float))
        return AMPProfileCheck(margins=margins, passed=bool(np.min(margins) >= -tol) if margins.size else True)


@dataclass
class AMPProfileCheck:
    margins: np.ndarray
    passed: bool

    @property
    def worst_margin(self) -> float:
        return float(np.min(self.margins)) if self.margins.size else float("inf")


def amp_profile_bound(dimension: int) -> AMPProfileBound:
    if dimension < 2:
        raise BarrierDomainError(f"Barriers need dimension n >= 2, got {dimension}", value=dimension)
    return AMPProfileBound(dimension=dimension, constant=amp_constant(dimension))


@dataclass
class GridBoundReport:
    name: str
    extreme: float
    bound: float
    passed: bool

    @property
    def margin(self) -> float:
        return self.bound - self.extreme if self.name == "barrier_upper_bound" else self.extreme - self.bound


def lower_bound_check(spec: BarrierSpec, tol: float = CHECK_TOL) -> GridBoundReport:
    """ Grid minimum of the determinant over K_(1,rho) against lambda from `barrier_constants`."""
    lam, rho = barrier_constants(spec.dimension, spec.epsilon)
    x1_grid, radii = certificate_grid(rho)
    extreme = float(np.min(det_hessian(spec, _grid_points(spec.dimension, x1_grid, radii))))
    return GridBoundReport(name="barrier_lower_bound", extreme=extreme, bound=lam, passed=extreme >= lam - tol)


def upper_det_bound(dimension: int) -> float:
    """ Upper bound of the determinant of the upper barrier: 1 in the plane, (2/n)(1 - 2/n) otherwise."""
    gamma = 2.0 / dimension
    return 1.0 if dimension == 2 else gamma * (1.0 - gamma)


def upper_bound_check(dimension: int, bound: Optional[float] = None, tol: float = CHECK_TOL) -> GridBoundReport:
    """ Grid maximum of the determinant of the upper barrier over K_(1,sqrt 2)."""
    if bound is None:
        bound = upper_det_bound(dimension)
    spec = BarrierSpec(dimension=dimension, variant="w_bar")
    x1_grid, radii = certificate_grid(MAX_RADIUS)
    extreme = float(np.max(det_hessian(spec, _grid_points(dimension, x1_grid, radii))))
    return GridBoundReport(name="barrier_upper_bound", extreme=extreme, bound=bound, passed=extreme <= bound + tol)


def barrier_table(spec: BarrierSpec, x1_grid, radii) -> List[Tuple[float, float, float, float]]:
    """ Rows (x_1, radius, value, det) over a grid with x_1 > 0."""
    points = _grid_points(spec.dimension, np.asarray(x1_grid, dtype=float), np.asarray(radii, dtype=float))
    values = evaluate(spec, points)
    dets = det_hessian(spec, points)
    return [(float(p[0]), float(p[1]), float(v), float(d)) for p, v, d in zip(points, values, dets)]
