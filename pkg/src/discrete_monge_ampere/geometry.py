# -*- coding: utf-8 -*-
""" Convex polytopes, affine maps and cylinders, plus the inner parallel body machinery built on them"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError
from scipy.special import gamma

from utils import (GEOMETRY_TOL, INCLUSION_TOL, MVEE_MAX_ITERATIONS, MVEE_TOL, GeometryError, NormalizationError,
                   as_points, format_float)


def _freeze(array: np.ndarray) -> np.ndarray:
    frozen = np.array(array, dtype=float)
    frozen.setflags(write=False)
    return frozen


def _unique_halfspaces(equations: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """ Drops repeated facet equations, as produced by triangulated hull output."""
    kept = []
    for row in equations:
        if not any(np.allclose(row, other, atol=tol) for other in kept):
            kept.append(row)
    return np.array(kept)


@dataclass(frozen=True, eq=False)
class ConvexPolytope:
    """ A bounded, full-dimensional convex polytope held in vertex and halfspace form at once.

    The halfspace form is `normals @ x <= offsets` with unit outward normals. Both forms are
    cross-validated on construction: every vertex satisfies every inequality, and the facets of
    the vertex hull are exactly the given halfspaces.

    Args:
        vertices (np.ndarray): (m, n) array of extreme points.
        normals (np.ndarray): (k, n) array of unit outward normals.
        offsets (np.ndarray): (k,) array of offsets.

    Attributes:
        dimension (int): Ambient dimension n >= 2.
        scale (float): Magnitude used to scale absolute tolerances.
    """
    vertices: np.ndarray
    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        vertices = as_points(self.vertices)
        normals = as_points(self.normals)
        offsets = np.asarray(self.offsets, dtype=float).reshape(-1)
        if vertices.shape[1] < 2:
            raise GeometryError("Polytopes must have dimension n >= 2")
        if normals.shape != (offsets.size, vertices.shape[1]):
            raise GeometryError("Normals and offsets do not describe halfspaces of the vertex dimension")

        norms = np.linalg.norm(normals, axis=1)
        if np.any(norms <= 0.0):
            raise GeometryError("Halfspace normals must be nonzero")
        normals = normals / norms[:, None]
        offsets = offsets / norms

        super().__setattr__("vertices", _freeze(vertices))
        super().__setattr__("normals", _freeze(normals))
        super().__setattr__("offsets", _freeze(offsets))
        self._cross_validate()

    @property
    def dimension(self) -> int:
        return self.vertices.shape[1]

    @property
    def scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.vertices))), float(np.max(np.abs(self.offsets))))

    @property
    def volume(self) -> float:
        return float(ConvexHull(self.vertices).volume)

    def _cross_validate(self) -> None:
        n = self.dimension
        centered = self.vertices - self.vertices.mean(axis=0)
        if self.vertices.shape[0] <= n or np.linalg.matrix_rank(centered, tol=GEOMETRY_TOL * self.scale) < n:
            raise GeometryError("Polytope is not full-dimensional")

        residual = self.vertices @ self.normals.T - self.offsets
        if np.max(residual) > GEOMETRY_TOL * self.scale:
            raise GeometryError(f"Vertex violates a halfspace by {np.max(residual):.3e}")

        hull_equations = _unique_halfspaces(ConvexHull(self.vertices).equations)
        if hull_equations.shape[0] != self.normals.shape[0]:
            raise GeometryError(f"Vertex hull has {hull_equations.shape[0]} facets but "
                                f"{self.normals.shape[0]} halfspaces were given")
        given = np.hstack([self.normals, -self.offsets[:, None]])
        for equation in hull_equations:
            if not np.any(np.all(np.abs(given - equation) <= 1e-7 * self.scale, axis=1)):
                raise GeometryError("Vertex hull and halfspace intersection disagree")

    def contains(self, points, tol: float = GEOMETRY_TOL) -> np.ndarray:
        pts = as_points(points, self.dimension)
        return np.all(pts @ self.normals.T - self.offsets <= tol * self.scale, axis=1)

    def face_index(self, normal) -> int:
        """ Index of the halfspace whose outward normal points along `normal`."""
        direction = np.asarray(normal, dtype=float)
        direction = direction / np.linalg.norm(direction)
        cosines = self.normals @ direction
        index = int(np.argmax(cosines))
        if cosines[index] < 1.0 - 1e-9:
            raise GeometryError(f"No facet with outward normal {direction.tolist()}")
        return index

    def face_vertices(self, index: int) -> np.ndarray:
        residual = np.abs(self.vertices @ self.normals[index] - self.offsets[index])
        return self.vertices[residual <= 1e-9 * self.scale]

    @classmethod
    def from_vertices(cls, points) -> "ConvexPolytope":
        pts = as_points(points)
        try:
            hull = ConvexHull(pts)
        except QhullError as err:
            raise GeometryError(f"Points do not span a full-dimensional polytope: {err}") from err
        equations = _unique_halfspaces(hull.equations)
        n = pts.shape[1]
        return cls(vertices=pts[hull.vertices], normals=equations[:, :n], offsets=-equations[:, n])

    @classmethod
    def from_halfspaces(cls, normals, offsets) -> "ConvexPolytope":
        body = intersect_halfspaces(normals, offsets)
        if isinstance(body, EmptyBody):
            raise GeometryError("Halfspaces do not bound a full-dimensional polytope")
        return body

    @classmethod
    def box(cls, lower, upper) -> "ConvexPolytope":
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise GeometryError("Box requires lower < upper in every coordinate")
        n = lo.size
        corners = np.array(np.meshgrid(*[[lo[i], hi[i]] for i in range(n)], indexing="ij")).reshape(n, -1).T
        eye = np.eye(n)
        normals = np.vstack([-eye, eye])
        offsets = np.concatenate([-lo, hi])
        return cls(vertices=corners, normals=normals, offsets=offsets)

    @classmethod
    def unit_cube(cls, dimension: int) -> "ConvexPolytope":
        return cls.box(np.zeros(dimension), np.ones(dimension))

    @classmethod
    def regular_polygon(cls, sides: int, radius: float = 1.0, center=(0.0, 0.0)) -> "ConvexPolytope":
        if sides < 3:
            raise GeometryError("A polygon needs at least 3 sides")
        angles = 2.0 * np.pi * np.arange(sides) / sides
        points = np.column_stack([np.cos(angles), np.sin(angles)]) * radius + np.asarray(center, dtype=float)
        return cls.from_vertices(points)

    def is_box(self) -> bool:
        """ True for axis-aligned boxes, which get tensor-product meshes."""
        n = self.dimension
        if self.normals.shape[0] != 2 * n:
            return False
        return bool(np.all(np.isclose(np.sort(np.abs(self.normals), axis=1)[:, -1], 1.0, atol=1e-12)))

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass(frozen=True)
class EmptyBody:
    """ Result of an inner parallel body that has no interior.

    Attributes:
        dimension (int): Ambient dimension.
        measure_zero (bool): True if the body is a nonempty lower-dimensional set, False if it is empty.
    """
    dimension: int
    measure_zero: bool

    @property
    def volume(self) -> float:
        return 0.0


def chebyshev_center(normals: np.ndarray, offsets: np.ndarray) -> Tuple[np.ndarray, float]:
    """ Center and radius of the largest ball inside the halfspaces (negative radius if they are infeasible)."""
    a = as_points(normals)
    b = np.asarray(offsets, dtype=float)
    n = a.shape[1]
    norms = np.linalg.norm(a, axis=1)
    objective = np.zeros(n + 1)
    objective[-1] = -1.0
    result = linprog(objective, A_ub=np.hstack([a, norms[:, None]]), b_ub=b,
                     bounds=[(None, None)] * (n + 1), method="highs")
    if result.status == 3:
        raise GeometryError("Halfspaces are unbounded")
    if not result.success:
        raise GeometryError(f"Chebyshev center could not be computed: {result.message}")
    return result.x[:n], float(result.x[-1])


def intersect_halfspaces(normals, offsets) -> Union[ConvexPolytope, EmptyBody]:
    a = as_points(normals)
    b = np.asarray(offsets, dtype=float)
    scale = max(1.0, float(np.max(np.abs(b))))
    center, radius = chebyshev_center(a, b)
    if radius < -GEOMETRY_TOL * scale:
        return EmptyBody(dimension=a.shape[1], measure_zero=False)
    if radius <= GEOMETRY_TOL * scale:
        return EmptyBody(dimension=a.shape[1], measure_zero=True)

    intersection = HalfspaceIntersection(np.hstack([a, -b[:, None]]), center)
    return ConvexPolytope.from_vertices(intersection.intersections)


def inner_body(polytope: ConvexPolytope, h: float) -> Union[ConvexPolytope, EmptyBody]:
    """ The inner parallel body {x : dist(x, boundary) >= h}, obtained by offsetting every facet inward by h."""
    if h < 0:
        raise GeometryError(f"Offset must be nonnegative, got {h}")
    if h == 0:
        return polytope
    return intersect_halfspaces(polytope.normals, polytope.offsets - h)


def distance_to_boundary(points, polytope: ConvexPolytope) -> np.ndarray:
    """ Signed distance to the boundary, positive inside."""
    pts = as_points(points, polytope.dimension)
    return np.min(polytope.offsets - pts @ polytope.normals.T, axis=1)


def inradius(polytope: ConvexPolytope) -> float:
    return chebyshev_center(polytope.normals, polytope.offsets)[1]


def circumradius(polytope: ConvexPolytope, center=None) -> float:
    """ Radius of the smallest ball about `center` (default: bounding box midpoint) containing the polytope."""
    if center is None:
        lo, hi = polytope.bounds()
        center = 0.5 * (lo + hi)
    return float(np.max(np.linalg.norm(polytope.vertices - np.asarray(center, dtype=float), axis=1)))


def _polish_projection(x: np.ndarray, polytope: ConvexPolytope, active: np.ndarray) -> Optional[np.ndarray]:
    """ Exact projection onto the face cut out by the active constraints, refining the active set by multiplier sign."""
    active = list(active)
    while active:
        a = polytope.normals[active]
        b = polytope.offsets[active]
        multipliers = np.linalg.lstsq(a @ a.T, a @ x - b, rcond=None)[0]
        if np.min(multipliers) < -1e-12:
            active.pop(int(np.argmin(multipliers)))
            continue
        candidate = x - a.T @ multipliers
        if np.all(polytope.normals @ candidate - polytope.offsets <= 1e-12 * polytope.scale):
            return candidate
        return None
    return None


def project(x, polytope: ConvexPolytope) -> np.ndarray:
    """ Nearest point of the polytope to x (x itself if x lies inside)."""
    point = np.asarray(x, dtype=float).reshape(-1)
    if polytope.contains(point)[0]:
        return point.copy()

    start = polytope.vertices[np.argmin(np.linalg.norm(polytope.vertices - point, axis=1))]
    constraint = {"type": "ineq",
                  "fun": lambda y: polytope.offsets - polytope.normals @ y,
                  "jac": lambda y: -polytope.normals}
    result = minimize(lambda y: 0.5 * np.dot(y - point, y - point), start, jac=lambda y: y - point,
                      constraints=[constraint], method="SLSQP", options={"ftol": 1e-15, "maxiter": 500})
    candidate = result.x
    active = np.flatnonzero(polytope.normals @ candidate - polytope.offsets >= -1e-7 * polytope.scale)
    polished = _polish_projection(point, polytope, active)
    return polished if polished is not None else candidate


def project_to_inner(x, polytope: ConvexPolytope, h: float) -> np.ndarray:
    body = inner_body(polytope, h)
    if isinstance(body, EmptyBody):
        raise GeometryError(f"Inner parallel body at depth {h} has no interior to project onto")
    return project(x, body)


def layer_volume(polytope: ConvexPolytope, a: float, b: float) -> float:
    """ Volume of the layer between the inner parallel bodies at depths a and b."""
    if a < 0 or a >= b:
        raise GeometryError(f"Layer requires 0 <= a < b, got a={a}, b={b}")
    return inner_body(polytope, a).volume - inner_body(polytope, b).volume


def sphere_area(n: int) -> float:
    """ Surface area of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / float(gamma(n / 2.0))


def layer_volume_bound(polytope: ConvexPolytope, a: float, b: float, radius: Optional[float] = None) -> float:
    if radius is None:
        radius = circumradius(polytope)
    n = polytope.dimension
    return sphere_area(n) * radius ** (n - 1) * (b - a)


@dataclass(frozen=True, eq=False)
class AffineMap:
    """ Invertible affine map x -> linear @ x + translation.

    Args:
        linear (np.ndarray): (n, n) invertible matrix.
        translation (np.ndarray): (n,) vector.

    Attributes:
        det (float): Determinant of the linear part.
        norm (float): Spectral norm of the linear part.
    """
    linear: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        linear = np.atleast_2d(np.asarray(self.linear, dtype=float))
        translation = np.asarray(self.translation, dtype=float).reshape(-1)
        n = linear.shape[0]
        if linear.shape != (n, n) or translation.size != n:
            raise GeometryError("Affine map needs a square linear part and a matching translation")

        det = float(np.linalg.det(linear))
        if det == 0.0 or not np.isfinite(det):
            raise GeometryError("Affine map is singular")
        inverse = np.linalg.inv(linear)
        if np.max(np.abs(linear @ inverse - np.eye(n))) > GEOMETRY_TOL * max(1.0, float(np.linalg.cond(linear))):
            raise GeometryError("Affine map is numerically singular")

        super().__setattr__("linear", _freeze(linear))
        super().__setattr__("translation", _freeze(translation))
        super().__setattr__("det", det)
        super().__setattr__("norm", float(np.linalg.norm(linear, ord=2)))
        super().__setattr__("_inverse_linear", _freeze(inverse))

    @property
    def dimension(self) -> int:
        return self.linear.shape[0]

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.linear.T + self.translation

    def __call__(self, points) -> np.ndarray:
        return self.apply(points)

    def inverse(self) -> "AffineMap":
        return AffineMap(self._inverse_linear, -self._inverse_linear @ self.translation)

    def compose(self, other: "AffineMap") -> "AffineMap":
        """ The map x -> self(other(x))."""
        return AffineMap(self.linear @ other.linear, self.linear @ other.translation + self.translation)

    def apply_polytope(self, polytope: ConvexPolytope) -> ConvexPolytope:
        return ConvexPolytope.from_vertices(self(polytope.vertices))

    @classmethod
    def identity(cls, dimension: int) -> "AffineMap":
        return cls(np.eye(dimension), np.zeros(dimension))

    @classmethod
    def translation_by(cls, vector) -> "AffineMap":
        vec = np.asarray(vector, dtype=float).reshape(-1)
        return cls(np.eye(vec.size), vec)

    @classmethod
    def scaling(cls, factor: float, dimension: int) -> "AffineMap":
        return cls(factor * np.eye(dimension), np.zeros(dimension))


def random_affine_map(rng: np.random.Generator, dimension: int, unit_det: bool = False) -> AffineMap:
    """ Rotation times diagonal scaling times shear, with a random translation."""
    rotation, _ = np.linalg.qr(rng.normal(size=(dimension, dimension)))
    scales = rng.uniform(0.5, 2.0, size=dimension)
    shear = np.eye(dimension) + np.triu(rng.uniform(-0.5, 0.5, size=(dimension, dimension)), k=1)
    linear = rotation @ np.diag(scales) @ shear
    if unit_det:
        linear = linear / abs(np.linalg.det(linear)) ** (1.0 / dimension)
    return AffineMap(linear, rng.uniform(-1.0, 1.0, size=dimension))


def _minimum_volume_ellipsoid(points: np.ndarray, tol: float, limits: int) -> Tuple[np.ndarray, np.ndarray]:
    """ Khachiyan iteration for the minimum volume enclosing ellipsoid (x-c)^T A^{-1} (x-c) <= 1."""
    count, d = points.shape
    q = np.vstack((points.T, np.ones(count)))
    weights = np.ones(count) / count
    err = tol + 1.0
    iterations = 0
    while err > tol:
        if iterations >= limits:
            raise NormalizationError(f"Enclosing ellipsoid iteration did not converge in {limits} steps", residual=err)
        x_inv = np.linalg.inv(np.einsum("ij,j,kj", q, weights, q))
        m = np.einsum("ji,jk,ki->i", q, x_inv, q)
        j = int(np.argmax(m))
        step_size = (1.0 - d / (m[j] - 1.0)) / (d + 1.0)
        weights[j] -= 1.0
        err = math.sqrt(float(np.dot(weights, weights))) * abs(step_size)
        weights *= 1.0 - step_size
        weights[j] += 1.0
        weights /= weights.sum()
        iterations += 1
    center = weights @ points
    shape = (np.einsum("ji,j,jk", points, weights, points) - np.outer(center, center)) * float(d)
    return shape, center


def normalization_margins(affine: AffineMap, polytope: ConvexPolytope) -> Tuple[float, float]:
    """ Margins of B_1 inside L(P) and of L(P) inside B_n (both nonnegative when the inclusions hold)."""
    image = affine.apply_polytope(polytope)
    inner_margin = float(np.min(image.offsets)) - 1.0
    outer_margin = polytope.dimension - float(np.max(np.linalg.norm(image.vertices, axis=1)))
    return inner_margin, outer_margin


def normalize(polytope: ConvexPolytope, tol: float = MVEE_TOL, limits: int = MVEE_MAX_ITERATIONS) -> AffineMap:
    """ Affine map L with B_1 inside L(P) inside B_n, from the minimum volume enclosing ellipsoid.

    The ellipsoid is mapped to the ball of radius n about the origin, then rescaled so that the
    nearest facet sits at distance exactly 1.

    Args:
        polytope (ConvexPolytope): Full-dimensional polytope.
        tol (float): Step tolerance of the ellipsoid iteration.
        limits (int): Maximal number of iterations.

    Returns:
        AffineMap: The normalizing map.
    """
    n = polytope.dimension
    shape, center = _minimum_volume_ellipsoid(polytope.vertices, tol, limits)
    eigenvalues, eigenvectors = np.linalg.eigh(shape)
    inverse_root = eigenvectors @ np.diag(1.0 / np.sqrt(eigenvalues)) @ eigenvectors.T

    pulled_normals = polytope.normals @ np.linalg.inv(inverse_root)
    distances = (polytope.offsets - polytope.normals @ center) / np.linalg.norm(pulled_normals, axis=1)
    factor = 1.0 / float(np.min(distances))
    linear = factor * inverse_root
    affine = AffineMap(linear, -linear @ center)

    inner_margin, outer_margin = normalization_margins(affine, polytope)
    if min(inner_margin, outer_margin) < -INCLUSION_TOL:
        logging.warning("Normalization inclusions hold only up to margins %.3e (inner), %.3e (outer)",
                        inner_margin, outer_margin)
    return affine


@dataclass(frozen=True)
class Cylinder:
    """ The cylinder (0, height) x B_radius^{n-1}."""
    height: float
    radius: float
    dimension: int

    def __post_init__(self):
        if self.height <= 0 or self.radius <= 0:
            raise GeometryError("Cylinder needs positive height and radius")
        if self.dimension < 2:
            raise GeometryError("Cylinder needs dimension n >= 2")

    def contains(self, points, closed: bool = True) -> np.ndarray:
        pts = as_points(points, self.dimension)
        axial = pts[:, 0]
        radial = np.linalg.norm(pts[:, 1:], axis=1)
        if closed:
            return (axial >= 0) & (axial <= self.height) & (radial <= self.radius)
        return (axial > 0) & (axial < self.height) & (radial < self.radius)

    def cross_section(self, segments: int = 32) -> np.ndarray:
        """ Points of an inscribed polytope of the (n-1)-ball of the given radius."""
        m = self.dimension - 1
        if m == 1:
            return np.array([[-self.radius], [self.radius]])
        if m == 2:
            angles = 2.0 * np.pi * np.arange(segments) / segments
            return self.radius * np.column_stack([np.cos(angles), np.sin(angles)])
        axes = np.vstack([np.eye(m), -np.eye(m)]) * self.radius
        corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * m, indexing="ij")).reshape(m, -1).T
        return np.vstack([axes, corners * self.radius / math.sqrt(m)])

    def as_polytope(self, segments: int = 32) -> ConvexPolytope:
        section = self.cross_section(segments)
        bottom = np.hstack([np.zeros((section.shape[0], 1)), section])
        top = np.hstack([np.full((section.shape[0], 1), self.height), section])
        return ConvexPolytope.from_vertices(np.vstack([bottom, top]))


def format_polytope(polytope: ConvexPolytope) -> str:
    """ Plain text form: dimension, vertex rows, halfspace rows (normal components then offset)."""
    lines = [f"dimension {polytope.dimension}", f"vertices {polytope.vertices.shape[0]}"]
    lines += [" ".join(format_float(v) for v in row) for row in polytope.vertices]
    lines.append(f"halfspaces {polytope.normals.shape[0]}")
    lines += [" ".join(format_float(v) for v in np.append(row, offset))
              for row, offset in zip(polytope.normals, polytope.offsets)]
    return "\n".join(lines) + "\n"


def write_polytope(polytope: ConvexPolytope, path) -> Path:
    output_path = Path(path).resolve()
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", encoding="utf-8") as out_file:
        out_file.write(format_polytope(polytope))
    logging.info("Saved output file: %s", output_path)
    return output_path


def parse_polytope(text: str) -> ConvexPolytope:
    rows = [line.split() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    try:
        if rows[0][0] != "dimension" or rows[1][0] != "vertices":
            raise GeometryError("Polytope text must start with 'dimension' and 'vertices' headers")
        n = int(rows[0][1])
        vertex_count = int(rows[1][1])
        vertices = np.array(rows[2:2 + vertex_count], dtype=float)
        header = rows[2 + vertex_count]
        if header[0] != "halfspaces":
            raise GeometryError("Missing 'halfspaces' header")
        halfspace_count = int(header[1])
        halfspaces = np.array(rows[3 + vertex_count:3 + vertex_count + halfspace_count], dtype=float)
    except (IndexError, ValueError) as err:
        raise GeometryError(f"Malformed polytope text: {err}") from err
    if vertices.shape[1] != n or halfspaces.shape[1] != n + 1:
        raise GeometryError("Polytope rows do not match the declared dimension")
    return ConvexPolytope(vertices=vertices, normals=halfspaces[:, :n], offsets=halfspaces[:, n])


def read_polytope(path) -> ConvexPolytope:
    with open(path, encoding="utf-8") as in_file:
        return parse_polytope(in_file.read())


def polytope_record(polytope: ConvexPolytope) -> Dict:
    return {"dimension": polytope.dimension, "vertices": polytope.vertices.tolist(),
            "normals": polytope.normals.tolist(), "offsets": polytope.offsets.tolist(),
            "volume": polytope.volume}
