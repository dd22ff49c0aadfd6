import numpy as np
import pytest

from convexfn import convex_envelope, ma_measure
from geometry import AffineMap, ConvexPolytope, random_affine_map
from solver import (affine_equivariance_check, boundary_envelope, build_mesh, build_problem, comparison_check,
                    mass_jacobian, normalizing_scale, solve, target_masses, transformed_problem)
from utils import ProblemError, SolverConvergenceError


def one(x):
    return np.ones(np.atleast_2d(x).shape[0])


def zero(x):
    return np.zeros(np.atleast_2d(x).shape[0])


def half_norm_squared(x):
    return 0.5 * np.sum(np.atleast_2d(x) ** 2, axis=1)


def quartic(x):
    x = np.atleast_2d(x)
    return 0.5 * np.sum(x ** 2, axis=1) + x[:, 0] ** 4 / 12.0


def square_problem(spacing=0.125, density=one, boundary_data=zero, **kwargs):
    return build_problem(ConvexPolytope.unit_cube(2), density, boundary_data, spacing=spacing, **kwargs)


def test_box_mesh_flags_boundary():
    mesh = build_mesh(ConvexPolytope.unit_cube(2), 0.25)
    assert mesh.nodes.shape == (25, 2)
    assert np.count_nonzero(mesh.boundary) == 16
    assert mesh.dimension == 2


def test_box_mesh_refines_toward_face():
    square = ConvexPolytope.unit_cube(2)
    face = square.face_index([-1.0, 0.0])
    mesh = build_mesh(square, 0.25, refine_face=face, refine_levels=3)
    depths = np.unique(mesh.nodes[:, 0])
    assert np.allclose(depths[:4], [0.0, 0.03125, 0.0625, 0.125])
    assert mesh.refine_levels == 3


def test_polygon_mesh():
    mesh = build_mesh(ConvexPolytope.regular_polygon(64), 0.1)
    polygon = ConvexPolytope.regular_polygon(64)
    assert np.all(polygon.contains(mesh.nodes, tol=1e-9))
    assert np.count_nonzero(mesh.interior) > 200
    assert np.count_nonzero(mesh.boundary) >= 64


def test_mesh_rejects_bad_spacing():
    with pytest.raises(ProblemError):
        build_mesh(ConvexPolytope.unit_cube(2), 0.0)


def test_unit_density_targets_are_cell_areas():
    problem = square_problem(spacing=0.05)
    targets = target_masses(problem)
    interior = problem.mesh.interior
    assert np.allclose(targets[interior], 0.05 ** 2)
    assert np.all(targets[problem.mesh.boundary] == 0.0)


def test_linear_density_targets():
    h = 0.05
    problem = square_problem(spacing=h, density=lambda x: 1.0 + np.atleast_2d(x)[:, 0], upper_bound=2.0)
    assert np.sum(target_masses(problem)) == pytest.approx(1.5 * (1.0 - h) ** 2)


def test_density_above_bound_rejected():
    with pytest.raises(ProblemError):
        target_masses(square_problem(upper_bound=0.5))
    with pytest.raises(ProblemError):
        target_masses(square_problem(density=lambda x: -one(x), upper_bound=1.0))


def test_nonconvex_boundary_data_rejected():
    with pytest.raises(ProblemError):
        boundary_envelope(square_problem(boundary_data=lambda x: -half_norm_squared(x)))


def test_zero_density_returns_envelope():
    problem = square_problem(density=zero, boundary_data=lambda x: np.atleast_2d(x) @ [2.0, -1.0] + 0.5,
                             upper_bound=1.0)
    report = solve(problem)
    assert report.iterations == 0
    assert np.allclose(report.values, problem.mesh.nodes @ [2.0, -1.0] + 0.5)


def test_mass_jacobian_annihilates_affine_functions():
    problem = square_problem(spacing=0.2)
    nodes = problem.mesh.nodes
    values = half_norm_squared(nodes) + 0.1 * (nodes[:, 0] + nodes[:, 1]) ** 3
    u = convex_envelope(nodes, values, boundary=problem.mesh.boundary)
    jacobian = mass_jacobian(u)
    interior = problem.mesh.interior
    assert abs(jacobian - jacobian.T).max() <= 1e-12
    assert np.allclose((jacobian @ np.ones(nodes.shape[0]))[interior], 0.0, atol=1e-12)
    assert np.allclose((jacobian @ (nodes @ [0.3, -0.7]))[interior], 0.0, atol=1e-12)
    assert np.all(jacobian.diagonal()[interior] < 0)


def test_unit_density_on_polygon_matches_radial_solution():
    problem = build_problem(ConvexPolytope.regular_polygon(64), one, zero, spacing=0.1, upper_bound=1.0)
    report = solve(problem)
    assert report.tolerance_achieved <= 1e-10
    assert np.all(report.values <= 1e-12)
    center = report.solution.evaluate([[0.0, 0.0]])[0]
    assert center == pytest.approx(-0.5, abs=2e-2)


def test_quadratic_boundary_data_is_reproduced():
    problem = square_problem(spacing=0.1, boundary_data=half_norm_squared)
    report = solve(problem)
    assert np.max(np.abs(report.values - half_norm_squared(problem.mesh.nodes))) <= 1e-6


def test_manufactured_solution_converges():
    errors = []
    for spacing in (0.2, 0.1, 0.05):
        problem = square_problem(spacing=spacing, density=lambda x: 1.0 + np.atleast_2d(x)[:, 0] ** 2,
                                 boundary_data=quartic, upper_bound=2.0)
        report = solve(problem)
        errors.append(np.max(np.abs(report.values - quartic(problem.mesh.nodes))))
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] <= 5e-2


def test_solution_masses_match_targets():
    problem = square_problem(density=lambda x: 1.0 + np.atleast_2d(x)[:, 0], upper_bound=2.0)
    report = solve(problem, tol=1e-10)
    interior = problem.mesh.interior
    masses = ma_measure(report.solution).masses
    assert np.max(np.abs(masses - report.targets)[interior]) <= 1e-10
    assert report.history[-1] <= 1e-10


def test_solution_lies_below_boundary_envelope():
    problem = square_problem()
    report = solve(problem)
    envelope = boundary_envelope(problem)
    assert comparison_check(report.solution, envelope).passed
    reversed_order = comparison_check(envelope, report.solution)
    assert not reversed_order.precondition_met
    assert not reversed_order.passed


def test_solver_gives_up_after_max_iterations():
    with pytest.raises(SolverConvergenceError) as err:
        solve(square_problem(spacing=0.1), tol=1e-14, max_iters=1)
    assert err.value.iterations == 1


def test_solver_rejects_nonpositive_tolerance():
    with pytest.raises(ProblemError):
        solve(square_problem(), tol=0.0)


def test_identity_transform_reproduces_solution():
    problem = square_problem()
    same = transformed_problem(problem, AffineMap.identity(2))
    assert np.allclose(solve(same).values, solve(problem).values, atol=1e-12)


def test_scaling_by_two():
    problem = square_problem()
    affine = AffineMap.scaling(2.0, 2)
    assert normalizing_scale(1.0, affine) == pytest.approx(4.0)
    report = affine_equivariance_check(problem, affine)
    assert report.scale == pytest.approx(4.0)
    assert report.passed, report.sup_difference


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_affine_maps(seed):
    problem = square_problem(density=lambda x: 1.0 + np.atleast_2d(x)[:, 0], upper_bound=2.0)
    affine = random_affine_map(np.random.default_rng(seed), 2)
    report = affine_equivariance_check(problem, affine)
    assert report.passed, report.sup_difference


def test_unit_determinant_shear():
    problem = square_problem()
    shear = AffineMap(np.array([[1.0, 0.7], [0.0, 1.0]]), np.zeros(2))
    report = affine_equivariance_check(problem, shear, scale=1.0)
    assert report.passed, report.sup_difference
