from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convexfn import (ModulusCurve, boundary_mask, compose_affine, convex_envelope, ma_measure, modulus,
                      modulus_subadditivity_check, node_rows, read_function, subgradient_bound_check,
                      superadditivity_check, write_function)
from geometry import AffineMap, ConvexPolytope
from utils import ConvexityError, ProblemError


def grid(count: int, lower: float = 0.0, upper: float = 1.0) -> np.ndarray:
    axis = np.linspace(lower, upper, count)
    x, y = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([x.reshape(-1), y.reshape(-1)])


def plateau(count: int = 5):
    """ Zero on the boundary of the unit square grid, -1 at every interior node."""
    points = grid(count)
    square = ConvexPolytope.unit_cube(2)
    values = np.where(boundary_mask(points, square), 0.0, -1.0)
    return convex_envelope(points, values, domain=square)


def test_cone_has_mass_four_at_origin():
    points = grid(3, -1.0, 1.0)
    cone = convex_envelope(points, np.abs(points[:, 0]) + np.abs(points[:, 1]))
    masses = ma_measure(cone).masses
    origin = int(np.argmin(np.linalg.norm(points, axis=1)))
    assert cone.interior[origin]
    assert abs(masses[origin] - 4.0) <= 1e-10
    assert np.count_nonzero(cone.boundary) == 8
    assert np.all(masses[cone.boundary] == 0.0)


def test_paraboloid_total_mass():
    count = 201
    points = grid(count)
    h = 1.0 / (count - 1)
    paraboloid = convex_envelope(points, 0.5 * np.sum(points ** 2, axis=1), domain=ConvexPolytope.unit_cube(2))
    total = ma_measure(paraboloid).total
    assert total == pytest.approx((1.0 - h) ** 2, rel=1e-8)
    assert abs(total - 1.0) <= 1e-2


def test_envelope_lies_below_values():
    points = grid(6)
    rng = np.random.default_rng(11)
    values = rng.normal(size=points.shape[0])
    function = convex_envelope(points, values)
    assert np.all(function.envelope_values <= values + 1e-12)
    assert np.allclose(function.evaluate(points), function.envelope_values)
    assert not np.all(function.active)


def test_envelope_needs_full_dimensional_nodes():
    with pytest.raises(ConvexityError):
        convex_envelope([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]], [0.0, 1.0, 2.0])
    with pytest.raises(ConvexityError):
        convex_envelope(grid(3), np.zeros(4))


def test_affine_data_has_no_mass():
    points = grid(5)
    function = convex_envelope(points, 2.0 * points[:, 0] - points[:, 1] + 3.0)
    assert ma_measure(function).total == pytest.approx(0.0, abs=1e-12)


def test_simplex_volumes_cover_domain():
    function = convex_envelope(grid(7), np.sum(grid(7) ** 2, axis=1))
    assert np.sum(function.simplex_volumes()) == pytest.approx(1.0)


def test_compose_affine_scales_mass():
    points = grid(5)
    paraboloid = convex_envelope(points, 0.5 * np.sum(points ** 2, axis=1))
    stretched = compose_affine(paraboloid, AffineMap.scaling(2.0, 2), scale=3.0)
    assert np.allclose(stretched.nodes, points / 2.0)
    assert ma_measure(stretched).total == pytest.approx(9.0 * 4.0 * ma_measure(paraboloid).total)
    with pytest.raises(ConvexityError):
        compose_affine(paraboloid, AffineMap.identity(2), scale=-1.0)


def test_plateau_modulus():
    function = plateau()
    h = 0.25
    curve = modulus(function, [0.5 * h, h, 2.0 * h])
    assert np.allclose(curve.raw, [0.0, 1.0, 1.0])
    assert np.allclose(curve.values, [0.5, 1.0, 1.0])
    assert curve.boundary_form is not None
    assert curve.boundary_form_gap == pytest.approx(0.0)
    assert curve.is_monotone()


def test_modulus_rejects_nonpositive_deltas():
    with pytest.raises(ProblemError):
        modulus(plateau(), [0.0, 0.1])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(min_value=1e-3, max_value=1.0), min_size=2, max_size=12, unique=True))
def test_regularized_modulus_is_monotone(deltas):
    points = grid(9)
    rng = np.random.default_rng(len(deltas))
    function = convex_envelope(points, rng.normal(size=points.shape[0]))
    curve = modulus(function, deltas)
    assert np.all(curve.values >= curve.raw - 1e-12)
    assert curve.is_monotone()


def test_modulus_curve_interpolation():
    curve = ModulusCurve(deltas=np.array([0.1, 0.2]), raw=np.array([0.1, 0.15]), values=np.array([0.1, 0.15]))
    assert curve(0.05) == pytest.approx(0.1)
    assert curve(0.2) == pytest.approx(0.15)
    assert curve(0.4) == pytest.approx(0.3)
    assert np.allclose(curve.pullback_bound([0.1], norm=2.0, scale=0.5), [0.075])


def test_subgradient_bound_on_plateau():
    report = subgradient_bound_check(plateau())
    assert report.checked > 0
    assert report.passed


def test_subgradient_bound_catches_steep_gradients():
    u = plateau()
    steep = replace(u, gradients=3.0 * u.gradients)
    report = subgradient_bound_check(steep, modulus(u, [0.25, 0.5]))
    assert not report.passed
    assert report.worst_margin == pytest.approx(-8.0, rel=1e-6)
    assert report.worst_node in {node for node, _ in report.violations}


def test_superadditivity_of_masses():
    points = grid(5, -1.0, 1.0)
    paraboloid = convex_envelope(points, 0.5 * np.sum(points ** 2, axis=1))
    cone = convex_envelope(points, np.abs(points[:, 0]) + np.abs(points[:, 1]))
    report = superadditivity_check(paraboloid, cone)
    assert report.passed
    assert report.total_sum >= report.total_u + report.total_v - 1e-9


def test_superadditivity_needs_common_nodes():
    with pytest.raises(ProblemError):
        superadditivity_check(plateau(5), plateau(6))


def test_node_rows_layout():
    function = plateau(3)
    rows = node_rows(function)
    assert len(rows) == 9
    assert rows[4] == [4, 0, 0.5, 0.5, -1.0]


def test_modulus_of_sum_is_subadditive():
    zero_solution = plateau()
    points = zero_solution.nodes
    affine_part = 0.5 * points[:, 0] - points[:, 1]
    square = ConvexPolytope.unit_cube(2)
    boundary_envelope = convex_envelope(points, affine_part, domain=square)
    u = convex_envelope(points, zero_solution.envelope_values + affine_part, domain=square)
    report = modulus_subadditivity_check(u, boundary_envelope, zero_solution, [0.125, 0.25, 0.5])
    assert report.passed, report.worst_margin


def test_function_file_round_trip(tmp_path):
    function = plateau(4)
    path = write_function(function, tmp_path / "plateau.txt")
    loaded = read_function(path, domain=ConvexPolytope.unit_cube(2))
    assert np.allclose(loaded.nodes, function.nodes)
    assert np.allclose(loaded.envelope_values, function.envelope_values)
    assert np.array_equal(loaded.boundary, function.boundary)


def test_facet_gradients_of_affine_pieces():
    points = grid(3, -1.0, 1.0)
    cone = convex_envelope(points, np.abs(points[:, 0]) + np.abs(points[:, 1]))
    gradients = cone.facet_gradients()
    assert gradients.shape == (cone.simplices.shape[0], 2)
    assert np.allclose(np.abs(gradients), 1.0)
