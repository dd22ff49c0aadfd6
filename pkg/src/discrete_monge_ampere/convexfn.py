# -*- coding: utf-8 -*-
""" Piecewise-linear convex functions on node sets, their Monge-Ampere measure and moduli of continuity"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from geometry import AffineMap, ConvexPolytope, distance_to_boundary
from utils import CHECK_TOL, GEOMETRY_TOL, ConvexityError, GeometryError, ProblemError, as_points, format_float

CHUNK_SIZE: int = 4096
PERTURBATION: float = 1e-12


@dataclass(frozen=True, eq=False)
class PLConvexFunction:
    """ The lower convex envelope of lifted node values (x_i, u_i).

    Nodes are split into boundary and interior nodes. Lower facets of the lifted hull carry the
    pieces of the function: on facet j the function is `gradients[j] @ x + intercepts[j]`.

    Args:
        nodes (np.ndarray): (N, n) node coordinates.
        values (np.ndarray): (N,) prescribed node values.
        envelope_values (np.ndarray): (N,) values of the envelope at the nodes, never above `values`.
        boundary (np.ndarray): (N,) boolean boundary flags.
        simplices (np.ndarray): (F, n+1) node indices of the lower facets.
        gradients (np.ndarray): (F, n) facet gradients.
        intercepts (np.ndarray): (F,) facet intercepts.
        domain (Optional[ConvexPolytope]): Domain the nodes discretize, if known.
        diagnostics (Tuple[str, ...]): Messages about degeneracies resolved while building the hull.
    """
    nodes: np.ndarray
    values: np.ndarray
    envelope_values: np.ndarray
    boundary: np.ndarray
    simplices: np.ndarray
    gradients: np.ndarray
    intercepts: np.ndarray
    domain: Optional[ConvexPolytope] = None
    diagnostics: Tuple[str, ...] = field(default=())

    @property
    def dimension(self) -> int:
        return self.nodes.shape[1]

    @property
    def node_count(self) -> int:
        return self.nodes.shape[0]

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary

    @property
    def scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.values))))

    @cached_property
    def active(self) -> np.ndarray:
        """ Nodes whose value lies on the envelope."""
        return self.values - self.envelope_values <= GEOMETRY_TOL * self.scale

    @cached_property
    def vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.node_count, dtype=bool)
        mask[np.unique(self.simplices)] = True
        return mask

    @cached_property
    def incident_facets(self) -> List[np.ndarray]:
        facet_ids = np.repeat(np.arange(self.simplices.shape[0]), self.dimension + 1)
        node_ids = self.simplices.reshape(-1)
        order = np.argsort(node_ids, kind="stable")
        counts = np.bincount(node_ids, minlength=self.node_count)
        return np.split(facet_ids[order], np.cumsum(counts)[:-1])

    def evaluate(self, points) -> np.ndarray:
        """ Value of the envelope at arbitrary points inside the hull of the nodes."""
        pts = as_points(points, self.dimension)
        result = np.empty(pts.shape[0])
        for start in range(0, pts.shape[0], CHUNK_SIZE):
            chunk = pts[start:start + CHUNK_SIZE]
            result[start:start + CHUNK_SIZE] = np.max(chunk @ self.gradients.T + self.intercepts, axis=1)
        return result

    def facet_gradients(self) -> np.ndarray:
        return self.gradients

    def simplex_volumes(self) -> np.ndarray:
        corners = self.nodes[self.simplices]
        edges = corners[:, 1:, :] - corners[:, :1, :]
        factorial = float(np.prod(np.arange(1, self.dimension + 1)))
        return np.abs(np.linalg.det(edges)) / factorial

    def simplex_centroids(self) -> np.ndarray:
        return self.nodes[self.simplices].mean(axis=1)


@dataclass(frozen=True, eq=False)
class MAMeasure:
    """ Subdifferential cell volume of every node; boundary nodes carry no mass."""
    masses: np.ndarray
    interior: np.ndarray
    diagnostics: Tuple[str, ...] = field(default=())

    @property
    def total(self) -> float:
        return float(np.sum(self.masses))


def _lower_hull(points: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ Lower facets of the lifted point set, closed off by an apex above the centroid."""
    count, n = points.shape
    span = float(np.ptp(values)) + 1.0
    apex = np.append(points.mean(axis=0), float(np.max(values)) + span)
    lifted = np.vstack([np.column_stack([points, values]), apex])
    hull = ConvexHull(lifted)

    lower = hull.equations[:, n] < -GEOMETRY_TOL
    lower &= ~np.any(hull.simplices == count, axis=1)
    equations = hull.equations[lower]
    gradients = -equations[:, :n] / equations[:, n:n + 1]
    intercepts = -equations[:, n + 1] / equations[:, n]
    return hull.simplices[lower], gradients, intercepts


def _hull_boundary(points: np.ndarray) -> np.ndarray:
    n = points.shape[1]
    equations = ConvexHull(points).equations
    residual = points @ equations[:, :n].T + equations[:, n]
    scale = max(1.0, float(np.max(np.abs(points))))
    return np.any(np.abs(residual) <= 1e-10 * scale, axis=1)


def boundary_mask(points, domain: Optional[ConvexPolytope] = None) -> np.ndarray:
    """ Nodes on the boundary of the domain, or of the node hull when no domain is given."""
    pts = as_points(points)
    if domain is not None:
        return distance_to_boundary(pts, domain) <= 1e-10 * domain.scale
    return _hull_boundary(pts)


def convex_envelope(points, values, boundary=None, domain: Optional[ConvexPolytope] = None) -> PLConvexFunction:
    """ Lower convex envelope of the lifted points (x_i, u_i) as a piecewise-linear function.

    Args:
        points: (N, n) node coordinates, at least n+1 of them affinely independent.
        values: (N,) node values.
        boundary: Optional (N,) boolean boundary flags, derived from `domain` or the node hull otherwise.
        domain (Optional[ConvexPolytope]): Domain the nodes discretize.

    Returns:
        PLConvexFunction: The envelope; nodes strictly above it are flagged inactive.
    """
    pts = as_points(points)
    vals = np.asarray(values, dtype=float).reshape(-1)
    count, n = pts.shape
    if vals.size != count:
        raise ConvexityError(f"Got {vals.size} values for {count} nodes")
    if count < n + 1 or np.linalg.matrix_rank(pts - pts.mean(axis=0)) < n:
        raise ConvexityError("Node set must contain n+1 affinely independent points")

    diagnostics = []
    try:
        simplices, gradients, intercepts = _lower_hull(pts, vals)
    except QhullError as err:
        center = pts.mean(axis=0)
        scale = max(1.0, float(np.max(np.abs(vals))))
        bump = PERTURBATION * scale * np.sum((pts - center) ** 2, axis=1)
        message = f"Lifted hull degenerate, retried with perturbation of size {PERTURBATION * scale:.1e}: {err}"
        logging.warning(message.splitlines()[0])
        diagnostics.append(message)
        simplices, gradients, intercepts = _lower_hull(pts, vals + bump)

    if boundary is None:
        mask = boundary_mask(pts, domain)
    else:
        mask = np.asarray(boundary, dtype=bool).reshape(-1)
        if mask.size != count:
            raise ConvexityError("Boundary flags do not match the node set")

    function = PLConvexFunction(nodes=pts, values=vals, envelope_values=vals.copy(), boundary=mask,
                                simplices=simplices, gradients=gradients, intercepts=intercepts,
                                domain=domain, diagnostics=tuple(diagnostics))
    others = np.flatnonzero(~function.vertex_mask)
    if others.size:
        function.envelope_values[others] = np.minimum(vals[others], function.evaluate(pts[others]))
    function.envelope_values.setflags(write=False)
    return function


def ma_measure(u: PLConvexFunction) -> MAMeasure:
    """ Volume of the subgradient polytope at every interior node.

    The cell of a node is the convex hull of the gradients of all lower facets incident to its lift.
    Nodes that are not hull vertices lie inside a flat piece and get no mass.
    """
    n = u.dimension
    masses = np.zeros(u.node_count)
    flat = 0
    for i in np.flatnonzero(u.interior & u.vertex_mask):
        gradients = np.unique(u.gradients[u.incident_facets[i]], axis=0)
        if gradients.shape[0] <= n:
            continue
        try:
            masses[i] = ConvexHull(gradients).volume
        except QhullError:
            flat += 1

    diagnostics = list(u.diagnostics)
    if flat:
        diagnostics.append(f"{flat} subgradient cells were numerically flat and got zero mass")
    return MAMeasure(masses=masses, interior=u.interior.copy(), diagnostics=tuple(diagnostics))


def compose_affine(u: PLConvexFunction, affine: AffineMap, scale: float = 1.0) -> PLConvexFunction:
    """ The function scale * u(A y) on the pulled-back nodes A^{-1} x."""
    if scale <= 0:
        raise ConvexityError(f"Scale must be positive to preserve convexity, got {scale}")
    pullback = affine.inverse()
    domain = pullback.apply_polytope(u.domain) if u.domain is not None else None
    return convex_envelope(pullback(u.nodes), scale * u.envelope_values, boundary=u.boundary, domain=domain)


@dataclass(frozen=True, eq=False)
class ModulusCurve:
    """ Modulus of continuity sampled at increasing deltas.

    Attributes:
        deltas (np.ndarray): Increasing sample points.
        raw (np.ndarray): Sup of u(x) - u(y) over boundary nodes x and nodes y with |x - y| <= delta.
        values (np.ndarray): Smallest majorant of `raw` with values / deltas nonincreasing.
        boundary_form (Optional[np.ndarray]): For zero boundary data, sup of -u(y) over nodes within delta of
            a boundary node.
    """
    deltas: np.ndarray
    raw: np.ndarray
    values: np.ndarray
    boundary_form: Optional[np.ndarray] = None

    def __call__(self, delta):
        d = np.atleast_1d(np.asarray(delta, dtype=float))
        index = np.searchsorted(self.deltas, d * (1.0 - 1e-12), side="left")
        out = np.empty_like(d)
        inside = index < self.deltas.size
        out[inside] = self.values[index[inside]]
        out[~inside] = self.values[-1] * d[~inside] / self.deltas[-1]
        return out if np.ndim(delta) else float(out[0])

    def pullback_bound(self, deltas, norm: float, scale: float = 1.0) -> np.ndarray:
        """ scale * omega(norm * delta), a majorant of the modulus of scale * u(A y) when |A| <= norm."""
        return scale * np.atleast_1d(self(norm * np.asarray(deltas, dtype=float)))

    def is_monotone(self, tol: float = 1e-12) -> bool:
        nondecreasing = np.all(np.diff(self.values) >= -tol * max(1.0, float(np.max(self.values))))
        ratios = self.values / self.deltas
        ratio_nonincreasing = np.all(np.diff(ratios) <= tol * max(1.0, float(np.max(ratios))))
        return bool(nondecreasing and ratio_nonincreasing)

    @property
    def boundary_form_gap(self) -> Optional[float]:
        if self.boundary_form is None:
            return None
        return float(np.max(np.abs(self.boundary_form - self.raw)))

    def rows(self) -> List[Tuple[float, float, float]]:
        return [(float(d), float(r), float(v)) for d, r, v in zip(self.deltas, self.raw, self.values)]


def modulus(u: PLConvexFunction, deltas) -> ModulusCurve:
    """ Boundary-anchored modulus of continuity, exact on the node set."""
    grid = np.unique(np.asarray(deltas, dtype=float))
    if grid.size == 0 or grid[0] <= 0:
        raise ProblemError("Modulus deltas must be positive")
    boundary_idx = np.flatnonzero(u.boundary)
    if boundary_idx.size == 0:
        raise ProblemError("Modulus needs boundary nodes")

    values = u.envelope_values
    cutoff = grid * (1.0 + 1e-12)
    boundary_tree = cKDTree(u.nodes[boundary_idx])
    pairs = boundary_tree.sparse_distance_matrix(cKDTree(u.nodes), cutoff[-1], output_type="coo_matrix")
    order = np.argsort(pairs.data, kind="stable")
    distances = pairs.data[order]
    differences = values[boundary_idx[pairs.row[order]]] - values[pairs.col[order]]

    counts = np.searchsorted(distances, cutoff, side="right")
    raw = np.zeros(grid.size)
    if distances.size:
        running = np.maximum.accumulate(np.maximum(differences, 0.0))
        raw[counts > 0] = running[counts[counts > 0] - 1]
    if np.any(counts == 0):
        logging.warning("No node pairs within delta=%.3e, modulus set to 0 there", grid[np.argmax(counts == 0)])

    suffix = np.maximum.accumulate((raw / grid)[::-1])[::-1]
    regularized = grid * suffix

    boundary_form = None
    if np.max(np.abs(values[boundary_idx])) <= GEOMETRY_TOL * u.scale:
        node_distance = boundary_tree.query(u.nodes)[0]
        boundary_form = np.array([np.max(-values[node_distance <= c]) for c in cutoff])
        boundary_form = np.maximum(boundary_form, 0.0)
    return ModulusCurve(deltas=grid, raw=raw, values=regularized, boundary_form=boundary_form)


@dataclass
class SubgradientReport:
    worst_margin: float
    worst_node: Optional[int]
    violations: List[Tuple[int, float]]
    checked: int

    @property
    def passed(self) -> bool:
        return not self.violations


def subgradient_bound_check(u: PLConvexFunction, curve: Optional[ModulusCurve] = None,
                            tol: float = CHECK_TOL) -> SubgradientReport:
    """ Checks |p| <= omega(d)/d for every facet gradient p at every interior vertex node, d = dist(x, boundary).

    Without a curve the modulus is sampled on the node set at exactly the node depths.
    """
    domain = u.domain if u.domain is not None else ConvexPolytope.from_vertices(u.nodes)
    distance = distance_to_boundary(u.nodes, domain)

    owners, depths, norms = [], [], []
    for i in np.flatnonzero(u.interior & u.vertex_mask & (distance > GEOMETRY_TOL * domain.scale)):
        for gradient in np.unique(u.gradients[u.incident_facets[i]], axis=0):
            norm = float(np.linalg.norm(gradient))
            if norm == 0.0:
                continue
            owners.append(int(i))
            depths.append(float(distance[i]))
            norms.append(norm)

    if not owners:
        return SubgradientReport(worst_margin=float("inf"), worst_node=None, violations=[], checked=0)

    depths = np.array(depths)
    norms = np.array(norms)
    if curve is None:
        curve = modulus(u, depths)
    margins = np.atleast_1d(curve(depths)) / depths - norms

    worst = int(np.argmin(margins))
    failing = np.flatnonzero(margins < -tol * np.maximum(1.0, norms))
    return SubgradientReport(worst_margin=float(margins[worst]), worst_node=owners[worst],
                             violations=[(owners[k], float(margins[k])) for k in failing], checked=len(owners))


@dataclass
class SuperadditivityReport:
    worst_margin: float
    violations: List[int]
    total_sum: float
    total_u: float
    total_v: float

    @property
    def passed(self) -> bool:
        return not self.violations


def _require_common_nodes(u: PLConvexFunction, v: PLConvexFunction) -> None:
    if u.nodes.shape != v.nodes.shape or not np.array_equal(u.nodes, v.nodes):
        raise ProblemError("Functions must live on a common node set")


def superadditivity_check(u: PLConvexFunction, v: PLConvexFunction, tol: float = CHECK_TOL) -> SuperadditivityReport:
    _require_common_nodes(u, v)
    total = convex_envelope(u.nodes, u.envelope_values + v.envelope_values, boundary=u.boundary, domain=u.domain)
    mass_u = ma_measure(u).masses
    mass_v = ma_measure(v).masses
    mass_sum = ma_measure(total).masses
    margins = mass_sum - mass_u - mass_v
    return SuperadditivityReport(worst_margin=float(np.min(margins)),
                                 violations=[int(i) for i in np.flatnonzero(margins < -tol)],
                                 total_sum=float(mass_sum.sum()), total_u=float(mass_u.sum()),
                                 total_v=float(mass_v.sum()))


@dataclass
class ModulusSubadditivityReport:
    deltas: np.ndarray
    margins: np.ndarray
    tol: float

    @property
    def worst_margin(self) -> float:
        return float(np.min(self.margins))

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -self.tol


def modulus_subadditivity_check(u: PLConvexFunction, boundary_envelope: PLConvexFunction,
                                zero_solution: PLConvexFunction, deltas,
                                tol: float = 1e-6) -> ModulusSubadditivityReport:
    """ Checks omega_u <= omega_g + omega_0 on the node set, g being the envelope of the boundary data."""
    _require_common_nodes(u, boundary_envelope)
    _require_common_nodes(u, zero_solution)
    curve_u = modulus(u, deltas)
    curve_g = modulus(boundary_envelope, deltas)
    curve_0 = modulus(zero_solution, deltas)
    return ModulusSubadditivityReport(deltas=curve_u.deltas, margins=curve_g.raw + curve_0.raw - curve_u.raw, tol=tol)


def node_rows(u: PLConvexFunction) -> List[List]:
    return [[i, int(u.boundary[i]), *map(float, u.nodes[i]), float(u.envelope_values[i])]
            for i in range(u.node_count)]


def format_function(u: PLConvexFunction) -> str:
    """ Node table: one row per node, flag 'b' or 'i', coordinates, value."""
    lines = [f"# dimension {u.dimension}"]
    for i in range(u.node_count):
        flag = "b" if u.boundary[i] else "i"
        coordinates = " ".join(format_float(v) for v in u.nodes[i])
        lines.append(f"{flag} {coordinates} {format_float(u.envelope_values[i])}")
    return "\n".join(lines) + "\n"


def write_function(u: PLConvexFunction, path) -> Path:
    output_path = Path(path).resolve()
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", encoding="utf-8") as out_file:
        out_file.write(format_function(u))
    logging.info("Saved output file: %s", output_path)
    return output_path


def parse_function(text: str, domain: Optional[ConvexPolytope] = None) -> PLConvexFunction:
    flags, rows = [], []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] not in ("b", "i"):
            raise GeometryError(f"Unknown node flag {parts[0]}")
        flags.append(parts[0] == "b")
        rows.append([float(v) for v in parts[1:]])
    table = np.array(rows)
    return convex_envelope(table[:, :-1], table[:, -1], boundary=np.array(flags), domain=domain)


def read_function(path, domain: Optional[ConvexPolytope] = None) -> PLConvexFunction:
    with open(path, encoding="utf-8") as in_file:
        return parse_function(in_file.read(), domain)
