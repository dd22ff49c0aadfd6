# -*- coding: utf-8 -*-
""" Dirichlet problem for the Monge-Ampere equation in the Alexandrov sense, discretized by subgradient cell masses"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional

import numpy as np
from scipy.linalg import null_space
from scipy.sparse import coo_matrix, csr_matrix, diags
from scipy.sparse.linalg import spsolve
from scipy.spatial import ConvexHull, Delaunay, QhullError, cKDTree

from convexfn import PLConvexFunction, convex_envelope, ma_measure
from geometry import AffineMap, ConvexPolytope, distance_to_boundary
from utils import CHECK_TOL, MASS_TOL, ProblemError, SolverConvergenceError

MAX_ITERATIONS: int = 200
MAX_HALVINGS: int = 60
POLISH_STEPS: int = 2
ZERO_DENSITY_FLOOR: float = 1e-3

Density = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Mesh:
    """ Node set of a polytope, split into interior and boundary nodes.

    Attributes:
        nodes (np.ndarray): (N, n) coordinates.
        boundary (np.ndarray): (N,) boolean boundary flags.
        spacing (float): Nominal grid spacing.
        refine_face (Optional[int]): Halfspace index the mesh is refined toward.
        refine_levels (int): Number of geometric layers added toward that face.
    """
    nodes: np.ndarray
    boundary: np.ndarray
    spacing: float
    refine_face: Optional[int] = None
    refine_levels: int = 0

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary

    @property
    def dimension(self) -> int:
        return self.nodes.shape[1]


def _axis_coordinates(lower: float, upper: float, spacing: float, side: int = 0, levels: int = 0) -> np.ndarray:
    count = max(2, int(math.ceil((upper - lower) / spacing - 1e-9)))
    coordinates = np.linspace(lower, upper, count + 1)
    step = (upper - lower) / count
    if side and levels:
        depths = step * 2.0 ** -np.arange(1, levels + 1)
        extra = lower + depths if side < 0 else upper - depths
        coordinates = np.unique(np.concatenate([coordinates, extra]))
    return coordinates


def _thin(points: np.ndarray, radius: float) -> np.ndarray:
    """ Drops points closer than `radius` to an earlier kept point."""
    keep = np.ones(points.shape[0], dtype=bool)
    for i, j in sorted(cKDTree(points).query_pairs(radius)):
        if keep[i] and keep[j]:
            keep[j] = False
    return points[keep]


def _box_mesh(domain: ConvexPolytope, spacing: float, refine_face: Optional[int], levels: int) -> Mesh:
    lower, upper = domain.bounds()
    n = domain.dimension
    axis, side = -1, 0
    if refine_face is not None:
        normal = domain.normals[refine_face]
        axis = int(np.argmax(np.abs(normal)))
        side = int(np.sign(normal[axis]))
    axes = [_axis_coordinates(lower[i], upper[i], spacing, side if i == axis else 0, levels) for i in range(n)]
    nodes = np.array(np.meshgrid(*axes, indexing="ij")).reshape(n, -1).T
    boundary = np.any((nodes == lower) | (nodes == upper), axis=1)
    return Mesh(nodes=nodes, boundary=boundary, spacing=spacing, refine_face=refine_face, refine_levels=levels)


def _polytope_mesh(domain: ConvexPolytope, spacing: float, refine_face: Optional[int], levels: int) -> Mesh:
    lower, upper = domain.bounds()
    n = domain.dimension
    axes = [np.arange(lower[i], upper[i] + 0.5 * spacing, spacing) for i in range(n)]
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(n, -1).T
    depth = distance_to_boundary(grid, domain)
    interior = grid[depth >= 0.5 * spacing]

    projected = [domain.vertices]
    for normal, offset in zip(domain.normals, domain.offsets):
        near = grid[np.abs(grid @ normal - offset) <= 1.5 * spacing]
        candidates = near - np.outer(near @ normal - offset, normal)
        projected.append(candidates[domain.contains(candidates, tol=1e-9)])
    boundary_nodes = _thin(np.vstack(projected), 0.3 * spacing)

    if refine_face is not None and levels:
        normal = domain.normals[refine_face]
        on_face = boundary_nodes[np.abs(boundary_nodes @ normal - domain.offsets[refine_face]) <= 1e-9 * domain.scale]
        layers = []
        for k in range(1, levels + 1):
            layer_depth = spacing * 2.0 ** -k
            shifted = on_face - layer_depth * normal
            layers.append(shifted[distance_to_boundary(shifted, domain) >= 0.5 * layer_depth])
        interior = np.vstack([interior] + layers)

    nodes = np.vstack([boundary_nodes, interior])
    boundary = np.zeros(nodes.shape[0], dtype=bool)
    boundary[:boundary_nodes.shape[0]] = True
    return Mesh(nodes=nodes, boundary=boundary, spacing=spacing, refine_face=refine_face, refine_levels=levels)


def build_mesh(domain: ConvexPolytope, spacing: float, refine_face: Optional[int] = None,
               refine_levels: int = 0) -> Mesh:
    """ Tensor grid on boxes, grid plus projected boundary points on other polytopes.

    Args:
        domain (ConvexPolytope): The domain.
        spacing (float): Grid spacing.
        refine_face (Optional[int]): Halfspace index to refine toward.
        refine_levels (int): Number of layers at depths spacing * 2^-k, k = 1..levels.

    Returns:
        Mesh: Nodes with boundary flags.
    """
    if spacing <= 0:
        raise ProblemError(f"Mesh spacing must be positive, got {spacing}")
    if refine_levels < 0:
        raise ProblemError(f"Refinement levels must be nonnegative, got {refine_levels}")
    if domain.is_box():
        mesh = _box_mesh(domain, spacing, refine_face, refine_levels)
    else:
        mesh = _polytope_mesh(domain, spacing, refine_face, refine_levels)
    if not np.any(mesh.interior):
        raise ProblemError("Mesh has no interior nodes, use a smaller spacing")
    return mesh


@dataclass(frozen=True, eq=False)
class MAProblem:
    """ det D^2 u = f in the domain, u = g on its boundary.

    Args:
        domain (ConvexPolytope): The domain.
        mesh (Mesh): Node set.
        density (Density): Vectorized density f, mapping (k, n) points to (k,) values.
        boundary_data (Density): Vectorized boundary data g.
        upper_bound (float): Lambda, with f <= Lambda.
        lower_bound (Optional[float]): lambda, with f >= lambda where given.
        cell_transform (Optional[AffineMap]): Map to the coordinates in which target cells are built.
        name (str): Label used in reports.
    """
    domain: ConvexPolytope
    mesh: Mesh
    density: Density
    boundary_data: Density
    upper_bound: float
    lower_bound: Optional[float] = None
    cell_transform: Optional[AffineMap] = None
    name: str = ""

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    def boundary_values(self) -> np.ndarray:
        return np.asarray(self.boundary_data(self.mesh.nodes[self.mesh.boundary]), dtype=float).reshape(-1)


def _circumcenters(points: np.ndarray, simplices: np.ndarray) -> np.ndarray:
    corners = points[simplices]
    base = corners[:, 0, :]
    edges = corners[:, 1:, :] - base[:, None, :]
    rhs = 0.5 * np.sum(edges ** 2, axis=2)
    return base + np.linalg.solve(edges, rhs[..., None])[..., 0]


def _incidence(simplices: np.ndarray, count: int) -> List[np.ndarray]:
    simplex_ids = np.repeat(np.arange(simplices.shape[0]), simplices.shape[1])
    node_ids = simplices.reshape(-1)
    order = np.argsort(node_ids, kind="stable")
    return np.split(simplex_ids[order], np.cumsum(np.bincount(node_ids, minlength=count))[:-1])


def target_masses(problem: MAProblem) -> np.ndarray:
    """ Integral of f over the Voronoi cell of every interior node, by centroid quadrature on a fan of simplices.

    Boundary nodes get mass 0. Cells are built in `cell_transform` coordinates when one is given.
    """
    mesh = problem.mesh
    n = mesh.dimension
    transform = problem.cell_transform
    points = transform(mesh.nodes) if transform is not None else mesh.nodes
    back = transform.inverse() if transform is not None else None
    jacobian = 1.0 / abs(transform.det) if transform is not None else 1.0

    tri = Delaunay(points)
    if len(tri.coplanar):
        logging.warning("%d nodes were left out of the Delaunay triangulation", len(tri.coplanar))
    corners = points[tri.simplices]
    volumes = np.abs(np.linalg.det(corners[:, 1:, :] - corners[:, :1, :]))
    good = volumes > 1e-14 * np.max(volumes)
    centers = np.full((tri.simplices.shape[0], n), np.nan)
    centers[good] = _circumcenters(points, tri.simplices[good])
    incident = _incidence(tri.simplices, points.shape[0])

    factorial = float(math.factorial(n))
    owners, centroids, weights = [], [], []
    for i in np.flatnonzero(mesh.interior):
        cell = centers[incident[i]]
        cell = np.unique(cell[np.all(np.isfinite(cell), axis=1)], axis=0)
        try:
            hull = ConvexHull(cell)
        except QhullError:
            logging.warning("Voronoi cell of node %d is degenerate and gets no mass", i)
            continue
        fan = np.concatenate([np.repeat(points[i][None, None, :], hull.simplices.shape[0], axis=0),
                              cell[hull.simplices]], axis=1)
        owners.append(np.full(fan.shape[0], i))
        centroids.append(fan.mean(axis=1))
        weights.append(np.abs(np.linalg.det(fan[:, 1:, :] - fan[:, :1, :])) / factorial)

    masses = np.zeros(points.shape[0])
    if not owners:
        return masses
    centroids = np.vstack(centroids)
    if back is not None:
        centroids = back(centroids)
    samples = np.asarray(problem.density(centroids), dtype=float).reshape(-1)
    _validate_density(problem, samples)
    np.add.at(masses, np.concatenate(owners), samples * np.concatenate(weights) * jacobian)
    return masses


def _validate_density(problem: MAProblem, samples: np.ndarray) -> None:
    scale = max(1.0, abs(problem.upper_bound))
    if np.any(samples < 0):
        raise ProblemError(f"Density takes the negative value {np.min(samples):.3e}")
    if np.any(samples > problem.upper_bound + 1e-12 * scale):
        raise ProblemError(f"Density {np.max(samples):.6g} exceeds the upper bound {problem.upper_bound:.6g}")
    if problem.lower_bound is not None and np.any(samples < problem.lower_bound - 1e-12 * scale):
        raise ProblemError(f"Density {np.min(samples):.6g} is below the lower bound {problem.lower_bound:.6g}")


def boundary_envelope(problem: MAProblem) -> PLConvexFunction:
    """ Convex envelope of the boundary data at all nodes; rejects data that is not the trace of a convex function."""
    mesh = problem.mesh
    g = problem.boundary_values()
    outline = convex_envelope(mesh.nodes[mesh.boundary], g, boundary=np.ones(g.size, dtype=bool))
    gap = float(np.max(g - outline.envelope_values))
    if gap > CHECK_TOL * max(1.0, float(np.max(np.abs(g)))):
        raise ProblemError(f"Boundary data is not convex: a boundary node lies {gap:.3e} above the envelope")
    values = np.empty(mesh.nodes.shape[0])
    values[mesh.boundary] = g
    values[mesh.interior] = outline.evaluate(mesh.nodes[mesh.interior])
    return convex_envelope(mesh.nodes, values, boundary=mesh.boundary, domain=problem.domain)


def _edge_groups(u: PLConvexFunction):
    n = u.dimension
    pairs = np.array(list(itertools.combinations(range(n + 1), 2)))
    first = u.simplices[:, pairs[:, 0]].reshape(-1)
    second = u.simplices[:, pairs[:, 1]].reshape(-1)
    facets = np.repeat(np.arange(u.simplices.shape[0]), pairs.shape[0])
    codes = np.minimum(first, second) * u.node_count + np.maximum(first, second)
    keys, inverse = np.unique(codes, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    starts = np.concatenate([[0], np.flatnonzero(np.diff(inverse[order])) + 1])
    ends = np.append(starts[1:], order.size)
    edges = np.column_stack([keys // u.node_count, keys % u.node_count])
    return edges, facets[order], starts, ends


def mass_jacobian(u: PLConvexFunction) -> csr_matrix:
    """ Derivative of the cell masses with respect to the node values.

    The entry for an edge ij is the (n-1)-measure of the shared face of the two cells divided by |x_j - x_i|;
    the diagonal makes every row sum to zero.
    """
    n = u.dimension
    edges, facets, starts, ends = _edge_groups(u)
    directions = u.nodes[edges[:, 1]] - u.nodes[edges[:, 0]]
    lengths = np.linalg.norm(directions, axis=1)

    if n == 2:
        normals = np.column_stack([-directions[:, 1], directions[:, 0]]) / lengths[:, None]
        groups = np.repeat(np.arange(edges.shape[0]), ends - starts)
        projection = np.sum(u.gradients[facets] * normals[groups], axis=1)
        extent = np.maximum.reduceat(projection, starts) - np.minimum.reduceat(projection, starts)
    else:
        extent = np.zeros(edges.shape[0])
        for e, (start, end) in enumerate(zip(starts, ends)):
            gradients = np.unique(u.gradients[facets[start:end]], axis=0)
            if gradients.shape[0] < n:
                continue
            try:
                extent[e] = ConvexHull(gradients @ null_space(directions[e][None, :])).volume
            except QhullError:
                continue

    weights = extent / lengths
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    off_diagonal = coo_matrix((np.concatenate([weights, weights]), (rows, cols)),
                              shape=(u.node_count, u.node_count)).tocsr()
    return (off_diagonal - diags(np.asarray(off_diagonal.sum(axis=1)).reshape(-1))).tocsr()


def _bubble(domain: ConvexPolytope, points: np.ndarray) -> np.ndarray:
    """ Minus the geometric mean of the facet slacks: strictly convex inside, zero on the boundary."""
    slack = np.clip(domain.offsets - points @ domain.normals.T, 0.0, None)
    with np.errstate(divide="ignore"):
        return -np.exp(np.mean(np.log(slack), axis=1))


class _State(NamedTuple):
    function: PLConvexFunction
    masses: np.ndarray
    admissible: bool


def _state(problem: MAProblem, values: np.ndarray, goal: np.ndarray, tol: float) -> _State:
    mesh = problem.mesh
    function = convex_envelope(mesh.nodes, values, boundary=mesh.boundary, domain=problem.domain)
    interior = mesh.interior
    if not np.all(function.active[interior] & function.vertex_mask[interior]):
        return _State(function, np.zeros(values.size), False)
    masses = ma_measure(function).masses
    admissible = bool(np.all(masses[interior] > 0) and np.all(masses[interior] <= goal[interior] + tol))
    return _State(function, masses, admissible)


def _initial_supersolution(problem: MAProblem, start: np.ndarray, goal: np.ndarray, tol: float):
    mesh = problem.mesh
    interior = mesh.interior
    bubble = _bubble(problem.domain, mesh.nodes)
    bubble_masses = ma_measure(convex_envelope(mesh.nodes, bubble, boundary=mesh.boundary,
                                               domain=problem.domain)).masses[interior]
    usable = bubble_masses > 0
    ratio = float(np.min(goal[interior][usable] / bubble_masses[usable])) if np.any(usable) else 1.0
    scale = 0.5 * ratio ** (1.0 / mesh.dimension)
    for _ in range(MAX_HALVINGS):
        values = start + scale * bubble
        state = _state(problem, values, goal, tol)
        if state.admissible:
            logging.debug("Initial supersolution found with bubble scale %.3e", scale)
            return values, state
        scale *= 0.5
    raise SolverConvergenceError("No admissible initial supersolution found", worst_residual=float("nan"),
                                 iterations=0)


def _newton_step(function: PLConvexFunction, masses: np.ndarray, goal: np.ndarray,
                 interior: np.ndarray) -> np.ndarray:
    n = function.dimension
    index = np.flatnonzero(interior)
    jacobian = mass_jacobian(function)[index][:, index]
    m = masses[index]
    t = goal[index]
    rhs = n * m ** (1.0 - 1.0 / n) * (t ** (1.0 / n) - m ** (1.0 / n))
    delta = spsolve(jacobian.tocsc(), rhs)
    if not np.all(np.isfinite(delta)):
        raise SolverConvergenceError("Mass Jacobian is singular", worst_residual=float(np.max(np.abs(t - m))),
                                     iterations=0)
    step = np.zeros(masses.size)
    step[index] = np.minimum(delta, 0.0)
    return step


@dataclass
class SolveReport:
    """ Result of a solve.

    Attributes:
        solution (PLConvexFunction): The discrete solution.
        targets (np.ndarray): Target cell masses (zero at boundary nodes).
        masses (np.ndarray): Cell masses of the solution.
        iterations (int): Newton iterations performed.
        history (List[float]): Worst mass residual after every iteration.
    """
    solution: PLConvexFunction
    targets: np.ndarray
    masses: np.ndarray
    iterations: int
    history: List[float] = field(default_factory=list)

    @property
    def residual(self) -> np.ndarray:
        residual = self.masses - self.targets
        residual[self.solution.boundary] = 0.0
        return residual

    @property
    def tolerance_achieved(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def values(self) -> np.ndarray:
        return self.solution.envelope_values


def solve(problem: MAProblem, tol: float = MASS_TOL, max_iters: int = MAX_ITERATIONS) -> SolveReport:
    """ Discrete Alexandrov solution with cell masses matching `target_masses` within `tol`.

    Starting from the envelope of the boundary data lowered by a small multiple of a strictly convex bubble,
    a damped Newton iteration on the n-th roots of the masses lowers interior values monotonically. Every
    iterate keeps masses at most the targets, so the sequence decreases toward the maximal discrete solution.
    """
    if tol <= 0:
        raise ProblemError(f"Solver tolerance must be positive, got {tol}")
    mesh = problem.mesh
    interior = mesh.interior
    targets = target_masses(problem)
    envelope = boundary_envelope(problem)

    if np.all(targets[interior] <= 0):
        masses = ma_measure(envelope).masses
        logging.info("Zero density: the envelope of the boundary data solves the problem")
        return SolveReport(solution=envelope, targets=targets, masses=masses, iterations=0,
                           history=[float(np.max(np.abs(masses[interior])))])

    goal = targets.copy()
    goal[interior] = np.maximum(goal[interior], tol * ZERO_DENSITY_FLOOR)
    values, state = _initial_supersolution(problem, envelope.envelope_values.copy(), goal, tol)

    history = []
    iteration = 0
    polish = 0
    while True:
        worst = float(np.max(np.abs(state.masses[interior] - goal[interior])))
        history.append(worst)
        if worst <= tol:
            if polish >= POLISH_STEPS:
                break
            polish += 1
        if iteration >= max_iters:
            if worst <= tol:
                break
            raise SolverConvergenceError(f"Solver did not converge in {max_iters} iterations, "
                                         f"worst mass residual {worst:.3e}", worst_residual=worst,
                                         iterations=iteration)

        step = _newton_step(state.function, state.masses, goal, interior)
        theta = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = values + theta * step
            trial = _state(problem, candidate, goal, tol)
            if trial.admissible:
                break
            theta *= 0.5
        else:
            if worst <= tol:
                break
            raise SolverConvergenceError("Damping could not keep the iterate admissible", worst_residual=worst,
                                         iterations=iteration)

        trial_worst = float(np.max(np.abs(trial.masses[interior] - goal[interior])))
        if worst <= tol and trial_worst >= worst:
            break
        values, state = candidate, trial
        iteration += 1
        logging.debug("Iteration %d: step %.3g, worst residual %.3e", iteration, theta, trial_worst)

    logging.info("Solved %s in %d iterations, worst mass residual %.3e", problem.name or "problem", iteration,
                 history[-1])
    return SolveReport(solution=state.function, targets=targets, masses=state.masses, iterations=iteration,
                       history=history)


def transformed_problem(problem: MAProblem, affine: AffineMap, scale: float = 1.0) -> MAProblem:
    """ The problem solved by scale * u(A^{-1} y) on A(domain), with target cells transported by A."""
    if scale <= 0:
        raise ProblemError(f"Scale must be positive, got {scale}")
    n = problem.dimension
    inverse = affine.inverse()
    factor = scale ** n / affine.det ** 2
    density, boundary_data = problem.density, problem.boundary_data
    cell_transform = inverse if problem.cell_transform is None else problem.cell_transform.compose(inverse)
    mesh = Mesh(nodes=affine(problem.mesh.nodes), boundary=problem.mesh.boundary.copy(),
                spacing=problem.mesh.spacing * affine.norm)
    return MAProblem(domain=affine.apply_polytope(problem.domain), mesh=mesh,
                     density=lambda y: factor * np.asarray(density(inverse(y)), dtype=float),
                     boundary_data=lambda y: scale * np.asarray(boundary_data(inverse(y)), dtype=float),
                     upper_bound=factor * problem.upper_bound,
                     lower_bound=None if problem.lower_bound is None else factor * problem.lower_bound,
                     cell_transform=cell_transform, name=f"{problem.name} (transformed)")


def normalizing_scale(upper_bound: float, affine: AffineMap) -> float:
    """ The factor c = Lambda^{-1/n} |det L|^{2/n} for which c u(L^{-1} y) has density at most 1."""
    n = affine.dimension
    return upper_bound ** (-1.0 / n) * abs(affine.det) ** (2.0 / n)


@dataclass
class EquivarianceReport:
    sup_difference: float
    tolerance: float
    scale: float
    iterations: int

    @property
    def passed(self) -> bool:
        return self.sup_difference <= self.tolerance


def affine_equivariance_check(problem: MAProblem, affine: AffineMap, scale: Optional[float] = None,
                              tol: float = 1e-8) -> EquivarianceReport:
    """ Compares the solve of the transformed problem with the transform of the solve.

    With the default scale this is the normalization u = Lambda^{1/n} |det L|^{-2/n} v(L x). The mass tolerance
    of the second solve is carried along with the masses, which scale by c^n / |det A|.
    """
    if scale is None:
        scale = normalizing_scale(problem.upper_bound, affine)
    original = solve(problem, tol=tol)
    mass_factor = scale ** problem.dimension / abs(affine.det)
    transformed = solve(transformed_problem(problem, affine, scale), tol=tol * mass_factor)
    predicted = scale * original.values
    difference = float(np.max(np.abs(transformed.values - predicted)))
    allowed = 2.0 * tol * max(1.0, float(np.max(np.abs(predicted))))
    return EquivarianceReport(sup_difference=difference, tolerance=allowed, scale=scale,
                              iterations=original.iterations + transformed.iterations)


@dataclass
class ComparisonReport:
    """ Outcome of the discrete comparison principle between u and v on common nodes.

    Precondition violations (boundary ordering, mass ordering) are kept apart from conclusion violations.
    """
    boundary_violations: List[int]
    mass_violations: List[int]
    violations: List[int]
    worst_margin: float

    @property
    def precondition_met(self) -> bool:
        return not self.boundary_violations and not self.mass_violations

    @property
    def passed(self) -> bool:
        return self.precondition_met and not self.violations


def comparison_check(u: PLConvexFunction, v: PLConvexFunction, tol: float = CHECK_TOL,
                     mass_tol: float = CHECK_TOL) -> ComparisonReport:
    if u.nodes.shape != v.nodes.shape or not np.array_equal(u.nodes, v.nodes):
        raise ProblemError("Comparison needs a common node set")
    boundary = u.boundary | v.boundary
    gap = v.envelope_values - u.envelope_values
    mass_gap = ma_measure(u).masses - ma_measure(v).masses
    return ComparisonReport(boundary_violations=[int(i) for i in np.flatnonzero(boundary & (gap < -tol))],
                            mass_violations=[int(i) for i in np.flatnonzero(~boundary & (mass_gap < -mass_tol))],
                            violations=[int(i) for i in np.flatnonzero(gap < -tol)],
                            worst_margin=float(np.min(gap)))


def build_problem(domain: ConvexPolytope, density: Density, boundary_data: Density, spacing: float,
                  upper_bound: Optional[float] = None, lower_bound: Optional[float] = None,
                  refine_face: Optional[int] = None, refine_levels: int = 0, name: str = "") -> MAProblem:
    """ Meshes the domain and wraps the data; Lambda defaults to the largest density value at the nodes."""
    mesh = build_mesh(domain, spacing, refine_face, refine_levels)
    if upper_bound is None:
        upper_bound = float(np.max(density(mesh.nodes)))
    return MAProblem(domain=domain, mesh=mesh, density=density, boundary_data=boundary_data,
                     upper_bound=upper_bound, lower_bound=lower_bound, name=name)
