# -*- coding: utf-8 -*-
""" Regularity experiments on discrete solutions: maximum principle margins, exponent fits, weighted gradient
integrals, divergence under refinement and the flat-face converse configuration"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from barriers import amp_constant, lower_profile, upper_det_bound, upper_profile
from convexfn import ModulusCurve, PLConvexFunction, modulus
from geometry import AffineMap, ConvexPolytope, Cylinder, circumradius, distance_to_boundary, inradius, sphere_area
from utils import (AMP_TOL, CHECK_TOL, GEOMETRY_TOL, ConvexityError, FitError, GeometryError, NormalizationError,
                   ProblemError)

EXCLUDED_LAYERS: int = 3
MAX_FIT_DEPTH: float = 0.25
MIN_FIT_DEPTHS: int = 4
DYADIC_DEPTHS = 2.0 ** -np.arange(1, 64)
GROWTH_FACTOR: float = 1.2
CONTROL_RATIO: float = 1.05
MIN_LEVELS: int = 3
PROBE_BRACKET: Tuple[float, float] = (0.0, 1.2)
PROBE_MIN_DECADES: float = 2.0
CLASSICAL_TIGHTNESS_DEPTH: float = 0.05


def _domain(u: PLConvexFunction) -> ConvexPolytope:
    if u.domain is None:
        raise ProblemError("Function carries no domain")
    return u.domain


def _affine_fit(points: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """ Least-squares affine fit; returns gradient, offset and the worst residual."""
    design = np.column_stack([points, np.ones(points.shape[0])])
    coefficients = np.linalg.lstsq(design, values, rcond=None)[0]
    residual = float(np.max(np.abs(design @ coefficients - values))) if values.size else 0.0
    return coefficients[:-1], float(coefficients[-1]), residual


def classical_amp_profile(dimension: int, dist) -> np.ndarray:
    """ The classical profile dist^{1/n}."""
    d = np.clip(np.asarray(dist, dtype=float), 0.0, None)
    return d ** (1.0 / dimension)


def _normalized_profile(dimension: int, scaled_dist: np.ndarray) -> np.ndarray:
    if dimension == 2:
        return lower_profile(2, np.clip(scaled_dist, 0.0, 1.0))
    return lower_profile(dimension, np.clip(scaled_dist, 0.0, None))


@dataclass
class AMPReport:
    """ Per-node margins of |u| against the strengthened and the classical maximum principle bounds."""
    dist: np.ndarray
    values: np.ndarray
    bound: np.ndarray
    classical_bound: np.ndarray
    constant: float
    tol: float = AMP_TOL

    @property
    def margins(self) -> np.ndarray:
        return self.bound - np.abs(self.values)

    @property
    def worst_margin(self) -> float:
        return float(np.min(self.margins))

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -self.tol

    def tighter_than_classical(self, max_dist: float = CLASSICAL_TIGHTNESS_DEPTH) -> bool:
        near = (self.dist > 0) & (self.dist <= max_dist)
        return bool(np.all(self.bound[near] < self.classical_bound[near]))

    def rows(self) -> List[Tuple]:
        return [(i, float(d), float(v), float(b), float(c), float(b - abs(v)))
                for i, (d, v, b, c) in enumerate(zip(self.dist, self.values, self.bound, self.classical_bound))]


def amp_check(u: PLConvexFunction, affine: AffineMap, upper_bound: float, tol: float = AMP_TOL) -> AMPReport:
    """ |u(x)| <= C_n |det L|^{-2/n} Lambda^{1/n} a(|L| dist(x, boundary)) at every node.

    Boundary values must be affine; the affine part is removed before the comparison.

    Args:
        u (PLConvexFunction): Discrete solution with density at most `upper_bound`.
        affine (AffineMap): Map L with L(domain) inside the unit ball.
        upper_bound (float): Lambda.
        tol (float): Allowed negative margin.

    Returns:
        AMPReport: Margins under both bounds.
    """
    domain = _domain(u)
    n = u.dimension
    radii = np.linalg.norm(affine(domain.vertices), axis=1)
    if np.max(radii) > 1.0 + CHECK_TOL:
        raise NormalizationError(f"L maps the domain outside the unit ball (radius {np.max(radii):.6g})",
                                 residual=float(np.max(radii) - 1.0))
    if upper_bound <= 0:
        raise ProblemError(f"Upper bound must be positive, got {upper_bound}")

    gradient, offset, residual = _affine_fit(u.nodes[u.boundary], u.envelope_values[u.boundary])
    if residual > CHECK_TOL * u.scale:
        raise ProblemError(f"Boundary data is not affine (residual {residual:.3e})")
    values = u.envelope_values - (u.nodes @ gradient + offset)

    dist = np.clip(distance_to_boundary(u.nodes, domain), 0.0, None)
    constant = amp_constant(n) * abs(affine.det) ** (-2.0 / n) * upper_bound ** (1.0 / n)
    scaled = affine.norm * dist
    return AMPReport(dist=dist, values=values, bound=constant * _normalized_profile(n, scaled),
                     classical_bound=constant * classical_amp_profile(n, scaled), constant=constant, tol=tol)


@dataclass
class ModulusBoundReport:
    deltas: np.ndarray
    modulus: np.ndarray
    bound: np.ndarray
    tol: float = AMP_TOL

    @property
    def worst_margin(self) -> float:
        return float(np.min(self.bound - self.modulus))

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -self.tol


def modulus_bound_check(curve: ModulusCurve, boundary_curve: Optional[ModulusCurve], affine: AffineMap,
                        upper_bound: float, tol: float = AMP_TOL) -> ModulusBoundReport:
    """ omega_u(delta) <= omega_g(delta) + C_n |det L|^{-2/n} Lambda^{1/n} P(|L| delta) on the sampled deltas."""
    n = affine.dimension
    constant = amp_constant(n) * abs(affine.det) ** (-2.0 / n) * upper_bound ** (1.0 / n)
    bound = constant * _normalized_profile(n, affine.norm * curve.deltas)
    if boundary_curve is not None:
        bound = bound + np.atleast_1d(boundary_curve(curve.deltas))
    return ModulusBoundReport(deltas=curve.deltas, modulus=curve.values, bound=bound, tol=tol)


def _face_frame(domain: ConvexPolytope, face: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ Face center, inward unit normal and an orthonormal basis of the face plane (columns)."""
    if not 0 <= face < domain.normals.shape[0]:
        raise GeometryError(f"Face index {face} out of range")
    normal = domain.normals[face]
    center = domain.face_vertices(face).mean(axis=0)
    projector = np.eye(domain.dimension) - np.outer(normal, normal)
    order = np.argsort(-np.linalg.norm(projector, axis=0), kind="stable")
    basis, triangular = np.linalg.qr(projector[:, order[:domain.dimension - 1]])
    basis = basis * np.sign(np.diag(triangular))
    return center, -normal, basis


def _node_layers(u: PLConvexFunction, face: int) -> np.ndarray:
    domain = _domain(u)
    depth = domain.offsets[face] - u.nodes @ domain.normals[face]
    return np.unique(np.round(depth[depth >= 0], 12))


def _usable_depths(u: PLConvexFunction, face: int, depths, exclude_layers: int, max_depth: float) -> np.ndarray:
    layers = _node_layers(u, face)
    floor = layers[exclude_layers] if layers.size > exclude_layers else math.inf
    candidates = np.asarray(DYADIC_DEPTHS if depths is None else depths, dtype=float)
    center, inward, _ = _face_frame(_domain(u), face)
    inside = distance_to_boundary(center + np.outer(candidates, inward), _domain(u)) >= 0
    usable = (candidates > floor * (1.0 + 1e-9)) & (candidates <= max_depth) & inside
    return np.sort(candidates[usable])


@dataclass
class HolderFit:
    """ Least-squares fit of log|u(t) - u(0)| against log t along the inward normal of a face.

    Attributes:
        alpha (float): Fitted exponent.
        intercept (float): Fitted log constant.
        stderr (float): Standard error of the exponent.
        depths (np.ndarray): Depths used.
        values (np.ndarray): |u(t) - u(0)| at those depths.
        s_hat (Optional[float]): In the plane, the fitted power s in t (1 - ln t)^s.
    """
    alpha: float
    intercept: float
    stderr: float
    depths: np.ndarray
    values: np.ndarray
    s_hat: Optional[float] = None

    @property
    def fitted(self) -> np.ndarray:
        return np.exp(self.intercept) * self.depths ** self.alpha

    @property
    def window(self) -> Tuple[float, float]:
        return self.alpha - 2.0 * self.stderr, self.alpha + 2.0 * self.stderr

    def rows(self) -> List[Tuple[float, float, float, float]]:
        return [(float(t), float(v), float(f), float(v - f)) for t, v, f in zip(self.depths, self.values, self.fitted)]


def _line_fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    spread = float(np.sum((x - x.mean()) ** 2))
    dof = max(1, x.size - 2)
    stderr = math.sqrt(float(np.sum(residuals ** 2)) / dof / spread) if spread > 0 else math.inf
    return float(slope), float(intercept), stderr


def holder_fit(u: PLConvexFunction, face: int, depths=None, exclude_layers: int = EXCLUDED_LAYERS,
               max_depth: float = MAX_FIT_DEPTH) -> HolderFit:
    """ Fits the exponent of |u(t) - u(0)| along the inward normal at the face center.

    Depths within the `exclude_layers` node layers nearest the face, or beyond `max_depth`, are dropped.
    """
    usable = _usable_depths(u, face, depths, exclude_layers, max_depth)
    center, inward, _ = _face_frame(_domain(u), face)
    if usable.size:
        anchor = u.evaluate(center)[0]
        differences = np.abs(u.evaluate(center + np.outer(usable, inward)) - anchor)
        keep = differences > 0
        usable, differences = usable[keep], differences[keep]
    if usable.size < MIN_FIT_DEPTHS:
        raise FitError(f"Only {usable.size} usable depths, need at least {MIN_FIT_DEPTHS}")

    log_t = np.log(usable)
    alpha, intercept, stderr = _line_fit(log_t, np.log(differences))
    s_hat = None
    if u.dimension == 2:
        s_hat = _line_fit(np.log(1.0 - log_t), np.log(differences / usable))[0]
    logging.info("Fitted exponent %.4f +- %.4f over %d depths", alpha, 2.0 * stderr, usable.size)
    return HolderFit(alpha=alpha, intercept=intercept, stderr=stderr, depths=usable, values=differences, s_hat=s_hat)


def holder_constant(curve: ModulusCurve, alpha: float) -> float:
    """ C_H = max over the sampled deltas of omega(delta) / delta^alpha."""
    return float(np.max(curve.values / curve.deltas ** alpha))


@dataclass
class SobolevReport:
    p: float
    beta: float
    q: float
    integral: float
    bound: float
    holder_constant: float

    @property
    def passed(self) -> bool:
        return math.isfinite(self.integral) and self.integral <= self.bound

    def row(self) -> Tuple[float, float, float, float, float]:
        return (self.p, self.beta, self.q, self.integral, self.bound)


def sobolev_integral(u: PLConvexFunction, p: float, beta: float, alpha: float,
                     curve: Optional[ModulusCurve] = None) -> SobolevReport:
    """ Sum over simplices of |grad u|^p dist(centroid)^beta vol, against the closed-form layer bound.

    The bound is |S^{n-1}| R^{n-1} C_H^p r^{1-q} / (1-q) with q = (1-alpha) p - beta, R the circumradius and r the
    inradius. C_H comes from the modulus curve, sampled at every node depth when none is given.
    """
    if p < 1:
        raise ProblemError(f"Exponent p must be at least 1, got {p}")
    if not 0 < alpha <= 1:
        raise ProblemError(f"Exponent alpha must lie in (0, 1], got {alpha}")
    q = (1.0 - alpha) * p - beta
    if q >= 1:
        raise ProblemError(f"q = {q:.4g} >= 1: the weighted integral may diverge, run divergence_check instead")
    domain = _domain(u)
    n = u.dimension

    slopes = np.linalg.norm(u.gradients, axis=1)
    weights = np.clip(distance_to_boundary(u.simplex_centroids(), domain), 0.0, None) ** beta
    integral = float(np.sum(slopes ** p * weights * u.simplex_volumes()))

    if curve is None:
        depths = np.unique(np.clip(distance_to_boundary(u.nodes, domain), 0.0, None))
        curve = modulus(u, depths[depths > GEOMETRY_TOL * domain.scale])
    c_holder = holder_constant(curve, alpha)
    r = inradius(domain)
    bound = sphere_area(n) * circumradius(domain) ** (n - 1) * c_holder ** p * r ** (1.0 - q) / (1.0 - q)
    return SobolevReport(p=p, beta=beta, q=q, integral=integral, bound=bound, holder_constant=c_holder)


def gradient_norm(u: PLConvexFunction, p: Optional[float]) -> float:
    """ ||grad u||_p^p, or max |grad u| when p is None."""
    slopes = np.linalg.norm(u.gradients, axis=1)
    if p is None:
        return float(np.max(slopes))
    return float(np.sum(slopes ** p * u.simplex_volumes()))


@dataclass
class GradientScaling:
    mean_norm: float
    normalized: float


def gradient_scaling(u: PLConvexFunction, affine: AffineMap, upper_bound: float, p: float) -> GradientScaling:
    """ (|Omega|^{-1} integral |grad u|^p)^{1/p} and its value divided by |L| |det L|^{-2/n} Lambda^{1/n}."""
    n = u.dimension
    mean_norm = (gradient_norm(u, p) / _domain(u).volume) ** (1.0 / p)
    scale = affine.norm * abs(affine.det) ** (-2.0 / n) * upper_bound ** (1.0 / n)
    return GradientScaling(mean_norm=mean_norm, normalized=mean_norm / scale)


@dataclass
class DivergenceReport:
    """ Gradient norms across refinement levels.

    In the plane `norms` holds max |grad u|; otherwise ||grad u||_p^p. `controls` holds ||grad u||_q^q at a
    subcritical exponent when one was requested.
    """
    levels: List[int]
    nodes: List[int]
    norms: List[float]
    controls: List[float] = field(default_factory=list)
    growth: float = GROWTH_FACTOR
    control_ratio: float = CONTROL_RATIO

    @property
    def ratios(self) -> np.ndarray:
        return np.array(self.norms[1:]) / np.array(self.norms[:-1])

    @property
    def control_ratios(self) -> np.ndarray:
        return np.array(self.controls[1:]) / np.array(self.controls[:-1]) if self.controls else np.array([])

    @property
    def diverging(self) -> bool:
        return bool(np.all(self.ratios >= self.growth))

    @property
    def control_converging(self) -> bool:
        return not self.controls or bool(self.control_ratios[-1] <= self.control_ratio)

    @property
    def passed(self) -> bool:
        return self.diverging and self.control_converging

    def rows(self) -> List[Tuple]:
        controls = self.controls or [float("nan")] * len(self.norms)
        return [(k, level, count, norm, control) for k, (level, count, norm, control)
                in enumerate(zip(self.levels, self.nodes, self.norms, controls))]


def divergence_check(functions: Sequence[PLConvexFunction], levels: Sequence[int], p: Optional[float] = None,
                     control_p: Optional[float] = None, growth: float = GROWTH_FACTOR,
                     control_ratio: float = CONTROL_RATIO, min_levels: int = MIN_LEVELS) -> DivergenceReport:
    """ Growth of the critical gradient norm across a refinement family.

    Args:
        functions (Sequence[PLConvexFunction]): Solutions ordered from coarsest to finest refinement.
        levels (Sequence[int]): Refinement layer counts of the solutions.
        p (Optional[float]): Exponent, n/(n-2) by default for n >= 3; the plane uses max |grad u|.
        control_p (Optional[float]): Subcritical exponent whose norms should settle, 2 by default for n >= 3.
        growth (float): Required growth factor between consecutive levels.
        control_ratio (float): Largest accepted ratio of the control norms at the finest pair.
        min_levels (int): Smallest accepted number of levels.

    Returns:
        DivergenceReport: Norms per level.
    """
    if len(functions) != len(levels):
        raise FitError("Every solution needs its refinement level")
    if len(functions) < min_levels:
        raise FitError(f"Divergence needs at least {min_levels} refinement levels, got {len(functions)}")
    n = functions[0].dimension
    if n == 2:
        p, control_p = None, None
    else:
        p = n / (n - 2.0) if p is None else p
        control_p = 2.0 if control_p is None else control_p
    norms = [gradient_norm(u, p) for u in functions]
    controls = [gradient_norm(u, control_p) for u in functions] if control_p is not None else []
    report = DivergenceReport(levels=list(levels), nodes=[u.node_count for u in functions], norms=norms,
                              controls=controls, growth=growth, control_ratio=control_ratio)
    logging.info("Gradient norm ratios across levels: %s", ", ".join(f"{r:.4f}" for r in report.ratios))
    return report


@dataclass
class ConverseSetup:
    """ Normalized flat-face configuration: L maps a cylinder on the face onto K_(2,2).

    Attributes:
        function (PLConvexFunction): The solution u.
        face (int): Halfspace index of the flat face.
        affine (AffineMap): The map L.
        height (float): Height of the cylinder in the original coordinates.
        radius (float): Radius of the cylinder in the original coordinates.
        lg_gradient (np.ndarray): Gradient of l_g in normalized coordinates.
        lg_offset (float): Value of l_g at the origin.
        upper_max (float): M, the positive part of the maximum of u(L^{-1} y) - l_1(y) on the upper boundary.
        mapped_nodes (np.ndarray): L applied to the nodes.
        u0 (np.ndarray): u(L^{-1} y) - l_g(y) at the mapped nodes.
    """
    function: PLConvexFunction
    face: int
    affine: AffineMap
    height: float
    radius: float
    lg_gradient: np.ndarray
    lg_offset: float
    upper_max: float
    mapped_nodes: np.ndarray
    u0: np.ndarray

    @property
    def lipschitz(self) -> float:
        """ C_(L,g), the Lipschitz constant of l_g."""
        return float(np.linalg.norm(self.lg_gradient))

    def lg(self, points) -> np.ndarray:
        return np.atleast_2d(points) @ self.lg_gradient + self.lg_offset

    def normalized_values(self, points) -> np.ndarray:
        """ u_0 at points given in normalized coordinates."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.function.evaluate(self.affine.inverse()(pts)) - self.lg(pts)


def _cylinder_size(domain: ConvexPolytope, face: int, center: np.ndarray, inward: np.ndarray,
                   basis: np.ndarray) -> Tuple[float, float]:
    lateral = np.linalg.norm(domain.normals @ basis, axis=1)
    slack = domain.offsets - domain.normals @ center
    others = np.arange(domain.normals.shape[0]) != face
    spanning = others & (lateral > 1e-12)
    facet_inradius = float(np.min(slack[spanning] / lateral[spanning]))
    rates = domain.normals @ inward
    for fraction in (1.0, 0.5):
        radius = fraction * facet_inradius
        ahead = others & (rates > 1e-12)
        height = float(np.min((slack[ahead] - radius * lateral[ahead]) / rates[ahead]))
        if height > 1e-9 * domain.scale:
            return height, radius
    raise GeometryError("No cylinder of positive height fits on the face")


def _upper_boundary_samples(dimension: int, segments: int = 32, heights: int = 17) -> np.ndarray:
    """ Points of the boundary of K_(2,2) off the bottom face."""
    section = Cylinder(height=2.0, radius=2.0, dimension=dimension).cross_section(segments)
    top = np.vstack([np.column_stack([np.full(section.shape[0], 2.0), f * section]) for f in (0.0, 0.5, 1.0)])
    side = np.vstack([np.column_stack([np.full(section.shape[0], y1), section])
                      for y1 in np.linspace(0.0, 2.0, heights)])
    return np.vstack([top, side])


def converse_setup(u: PLConvexFunction, face: int, tol: float = CHECK_TOL) -> ConverseSetup:
    """ Builds L, l_g and u_0 = u(L^{-1} y) - l_g(y) for a solution that is affine on a flat face.

    l_g is the affine extension of u from the face plus M/2 y_1, where M is the positive part of the maximum of
    u(L^{-1} y) - l_1(y) over the boundary of K_(2,2) off the face. Then u_0 <= 0 on K_(2,2) and u_0 = 0 on the
    bottom disk; both are verified at the nodes.
    """
    domain = _domain(u)
    n = u.dimension
    center, inward, basis = _face_frame(domain, face)
    on_face = np.abs(domain.offsets[face] - u.nodes @ domain.normals[face]) <= 1e-9 * domain.scale
    gradient, offset, residual = _affine_fit(u.nodes[on_face], u.envelope_values[on_face])
    if residual > tol * u.scale:
        raise ConvexityError(f"Solution is not affine on face {face} (residual {residual:.3e})")

    height, radius = _cylinder_size(domain, face, center, inward, basis)
    frame = np.column_stack([inward, basis])
    stretch = np.diag(np.concatenate([[2.0 / height], np.full(n - 1, 2.0 / radius)]))
    linear = stretch @ frame.T
    affine = AffineMap(linear=linear, translation=-linear @ center)
    back = affine.inverse()

    face_gradient = back.linear.T @ gradient
    face_offset = float(gradient @ back.translation + offset)
    upper = _upper_boundary_samples(n)
    excess = u.evaluate(back(upper)) - (upper @ face_gradient + face_offset)
    upper_max = max(0.0, float(np.max(excess)))

    lg_gradient = face_gradient.copy()
    lg_gradient[0] += 0.5 * upper_max
    mapped = affine(u.nodes)
    u0 = u.envelope_values - (mapped @ lg_gradient + face_offset)

    inside = (mapped[:, 0] >= -tol) & (mapped[:, 0] <= 2.0 + tol) & \
        (np.linalg.norm(mapped[:, 1:], axis=1) <= 2.0 + tol)
    bottom = inside & on_face
    if np.any(u0[inside] > tol * u.scale):
        raise ConvexityError(f"u_0 is positive on K_(2,2): {np.max(u0[inside]):.3e}")
    if np.any(np.abs(u0[bottom]) > tol * u.scale):
        raise ConvexityError(f"u_0 does not vanish on the bottom disk: {np.max(np.abs(u0[bottom])):.3e}")
    logging.info("Converse setup on face %d: height %.4g, radius %.4g, M = %.4g", face, height, radius, upper_max)
    return ConverseSetup(function=u, face=face, affine=affine, height=height, radius=radius,
                         lg_gradient=lg_gradient, lg_offset=face_offset, upper_max=upper_max,
                         mapped_nodes=mapped, u0=u0)


def _top_base_cover(dimension: int, segments: int = 64) -> np.ndarray:
    """ Points {1} x V with V containing the ball of radius sqrt 2 for n <= 3; inscribed samples above that."""
    radius = math.sqrt(2.0)
    if dimension == 3:
        radius /= math.cos(math.pi / segments)
    rim = Cylinder(height=1.0, radius=radius, dimension=dimension).cross_section(segments)
    section = np.vstack([np.zeros((1, dimension - 1)), 0.5 * rim, rim])
    return np.column_stack([np.ones(section.shape[0]), section])


def comparison_constant(setup: ConverseSetup, lower_bound: float) -> float:
    """ Largest c for which c times the upper barrier lies above u_0 on the top base of K_(1,sqrt 2) and has
    determinant at most the density of u_0 there.

    In normalized coordinates the density of u_0 is at least lambda |det L|^{-2}; the upper barrier has
    determinant at most `upper_det_bound` and magnitude at most a_upper(1) on the cylinder.
    """
    if lower_bound <= 0:
        raise ProblemError(f"Density lower bound must be positive, got {lower_bound}")
    n = setup.function.dimension
    density = lower_bound / setup.affine.det ** 2
    from_density = (density / upper_det_bound(n)) ** (1.0 / n)
    top = float(np.max(setup.normalized_values(_top_base_cover(n))))
    if top >= 0:
        raise ConvexityError(f"u_0 is not negative on the top base of K_(1,sqrt 2): {top:.3e}")
    from_top = -top / float(upper_profile(n, 1.0))
    return min(from_density, from_top)


@dataclass
class ConverseBoundReport:
    """ |u_0(y_1, 0)| against the upper barrier profile along the axis of K_(1,1).

    `constant` comes from the comparison with the upper barrier; `observed` is min |u_0| / a(y_1) on the axis.
    """
    depths: np.ndarray
    values: np.ndarray
    profile: np.ndarray
    constant: float
    observed: float
    lower_bound_margins: np.ndarray

    @property
    def passed(self) -> bool:
        return self.constant > 0 and self.observed >= self.constant * (1.0 - CHECK_TOL) and \
            bool(np.all(self.lower_bound_margins >= -CHECK_TOL))


def converse_bound_check(setup: ConverseSetup, lower_bound: float, depths=None,
                         exclude_layers: int = EXCLUDED_LAYERS) -> ConverseBoundReport:
    """ Checks |u_0(y)| >= c a(y_1) and u(x_0) - u(x) >= -C_(L,g)|y| + c a(y_1) along the axis.

    Args:
        setup (ConverseSetup): Normalized flat-face configuration.
        lower_bound (float): lambda, with f >= lambda on the domain.
        depths: Depths below the face in original coordinates; dyadic by default.
        exclude_layers (int): Node layers next to the face left out.

    Returns:
        ConverseBoundReport: Profile values and margins against the comparison constant.
    """
    usable = _usable_depths(setup.function, setup.face, depths, exclude_layers, 0.5 * setup.height)
    if usable.size < MIN_FIT_DEPTHS:
        raise FitError(f"Only {usable.size} usable depths, need at least {MIN_FIT_DEPTHS}")
    constant = comparison_constant(setup, lower_bound)
    n = setup.function.dimension
    axis = np.zeros((usable.size, n))
    axis[:, 0] = 2.0 * usable / setup.height
    values = setup.normalized_values(axis)
    bar = upper_profile(n, axis[:, 0])
    observed = float(np.min(-values / bar))
    drop = -(axis @ setup.lg_gradient) - values
    margins = drop - (-setup.lipschitz * np.linalg.norm(axis, axis=1) + constant * bar)
    logging.info("Converse constant %.4g from the barrier comparison, %.4g observed on the axis", constant, observed)
    return ConverseBoundReport(depths=axis[:, 0], values=values, profile=bar, constant=constant, observed=observed,
                               lower_bound_margins=margins)


@dataclass
class ProbeReport:
    """ Fitted power s in omega(delta) ~ C delta (1 - ln delta)^s.

    Only consistency with the bracket is asserted; an inconclusive report never fails.
    """
    s_hat: float
    band: float
    decades: float
    deltas: np.ndarray
    omegas: np.ndarray
    intercept: float
    inconclusive: bool
    bracket: Tuple[float, float] = PROBE_BRACKET

    @property
    def consistent(self) -> bool:
        return self.bracket[0] <= self.s_hat <= self.bracket[1]

    @property
    def passed(self) -> bool:
        return self.inconclusive or self.consistent

    @property
    def fitted(self) -> np.ndarray:
        return np.exp(self.intercept) * self.deltas * (1.0 - np.log(self.deltas)) ** self.s_hat

    def rows(self) -> List[Tuple[float, float, float]]:
        return [(float(d), float(w), float(f)) for d, w, f in zip(self.deltas, self.omegas, self.fitted)]


def log_probe(deltas, omegas, band: Optional[Tuple[float, float]] = None,
              min_decades: float = PROBE_MIN_DECADES) -> ProbeReport:
    """ Fits log(omega/delta) = log C + s log(1 - ln delta) over the deltas inside `band`."""
    d = np.asarray(deltas, dtype=float)
    w = np.asarray(omegas, dtype=float)
    keep = (d > 0) & (d < 1) & (w > 0)
    if band is not None:
        keep &= (d >= band[0]) & (d <= band[1])
    d, w = d[keep], w[keep]
    if d.size < 3:
        raise FitError(f"Only {d.size} usable deltas, need at least 3")
    decades = float(np.log10(d.max() / d.min()))
    s_hat, intercept, stderr = _line_fit(np.log(1.0 - np.log(d)), np.log(w / d))
    inconclusive = decades < min_decades
    if inconclusive:
        logging.warning("Probe spans %.2f decades of delta, fewer than %.1f: inconclusive", decades, min_decades)
    return ProbeReport(s_hat=s_hat, band=2.0 * stderr, decades=decades, deltas=d, omegas=w, intercept=intercept,
                       inconclusive=inconclusive)


@dataclass
class RegularityReport:
    """ Everything measured on one experiment; each entry is optional."""
    modulus: Optional[ModulusCurve] = None
    holder: Optional[HolderFit] = None
    amp: Optional[AMPReport] = None
    modulus_bound: Optional[ModulusBoundReport] = None
    sobolev: List[SobolevReport] = field(default_factory=list)
    divergence: Optional[DivergenceReport] = None
    converse: Optional[ConverseBoundReport] = None
    probe: Optional[ProbeReport] = None
    holder_range: Optional[Tuple[float, float]] = None

    def checks(self) -> List[Tuple[str, bool, float]]:
        """ (name, passed, margin) for every assertion that was run."""
        results = []
        if self.amp is not None:
            results.append(("amp", self.amp.passed, self.amp.worst_margin))
            results.append(("amp_tighter_than_classical", self.amp.tighter_than_classical(), 0.0))
        if self.modulus_bound is not None:
            results.append(("modulus_bound", self.modulus_bound.passed, self.modulus_bound.worst_margin))
        if self.holder is not None and self.holder_range is not None:
            low, high = self.holder_range
            margin = min(self.holder.alpha - low, high - self.holder.alpha)
            results.append(("holder_exponent", margin >= 0, margin))
        for report in self.sobolev:
            name = f"sobolev_p{report.p:g}_beta{report.beta:g}"
            results.append((name, report.passed, report.bound - report.integral))
        if self.divergence is not None:
            growth_margin = float(np.min(self.divergence.ratios)) - self.divergence.growth
            results.append(("divergence", self.divergence.diverging, growth_margin))
            if self.divergence.controls:
                results.append(("divergence_control", self.divergence.control_converging,
                                self.divergence.control_ratio - float(self.divergence.control_ratios[-1])))
        if self.converse is not None:
            results.append(("converse_bound", self.converse.passed,
                            self.converse.observed - self.converse.constant))
        if self.probe is not None:
            results.append(("log_probe", self.probe.passed, min(self.probe.s_hat - self.probe.bracket[0],
                                                                self.probe.bracket[1] - self.probe.s_hat)))
        return results

    @property
    def passed(self) -> bool:
        return all(passed for _, passed, _ in self.checks())


def resolved_depth(u: PLConvexFunction, face: int, exclude_layers: int = EXCLUDED_LAYERS) -> float:
    """ Depth of the node layer below which fits on this face are discretization-dominated."""
    layers = _node_layers(u, face)
    return float(layers[min(exclude_layers, layers.size - 1)])


def unit_ball_map(domain: ConvexPolytope) -> AffineMap:
    """ Translation of the vertex centroid to the origin, shrunk when needed so that the image lies in B_1."""
    center = domain.vertices.mean(axis=0)
    reach = float(np.max(np.linalg.norm(domain.vertices - center, axis=1)))
    factor = 1.0 / reach if reach > 1.0 else 1.0
    linear = factor * np.eye(domain.dimension)
    return AffineMap(linear, -linear @ center)
