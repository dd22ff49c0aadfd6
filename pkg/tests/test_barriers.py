import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barriers import (VARIANTS, BarrierSpec, amp_bound_value, amp_constant, amp_profile_bound, barrier_table,
                      convexity_cert, det_hessian, determinant_consistency, evaluate, hessian, barrier_constants,
                      lower_bound_check, optimal_epsilon, reflect, sample_interior, scaled_barrier, upper_bound_check)
from utils import BarrierDomainError


@pytest.mark.parametrize("dimension", [2, 3, 4, 5])
@pytest.mark.parametrize("variant", VARIANTS)
def test_determinant_matches_finite_differences(dimension, variant):
    spec = BarrierSpec(dimension=dimension, variant=variant)
    points = sample_interior(np.random.default_rng(dimension), dimension, 100)
    report = determinant_consistency(spec, points)
    assert report.passed(1e-6), report.worst


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=0.05, max_value=0.95), st.floats(min_value=0.0, max_value=1.3),
       st.sampled_from([2, 3, 4]))
def test_determinant_matches_hessian_matrix(x1, radius, dimension):
    spec = BarrierSpec(dimension=dimension)
    point = np.zeros(dimension)
    point[0] = x1
    point[1] = radius
    expected = np.linalg.det(hessian(spec, point))
    assert det_hessian(spec, point)[0] == pytest.approx(expected, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("epsilon", [0.1, 0.25, 0.5])
def test_planar_lower_bound(epsilon):
    spec = BarrierSpec(dimension=2, epsilon=epsilon)
    lam, rho = barrier_constants(2, epsilon)
    assert lam == pytest.approx(epsilon / 4.0)
    assert rho == pytest.approx(math.sqrt(epsilon / 2.0))
    report = lower_bound_check(spec)
    assert report.name == "barrier_lower_bound"
    assert report.extreme >= epsilon / 4.0 - 1e-9
    assert report.passed


@pytest.mark.parametrize("dimension", [3, 4, 5])
def test_lower_bound_in_higher_dimensions(dimension):
    lam, rho = barrier_constants(dimension)
    assert lam > 0
    assert 0 < rho < math.sqrt(2.0)
    assert lower_bound_check(BarrierSpec(dimension=dimension)).passed


@pytest.mark.parametrize("dimension, bound", [(2, 1.0), (3, 2.0 / 9.0), (4, 0.25), (5, 0.24)])
def test_upper_barrier_bound(dimension, bound):
    report = upper_bound_check(dimension)
    assert report.bound == pytest.approx(bound)
    assert report.extreme <= bound + 1e-9
    assert report.passed


def test_upper_bound_negative_control():
    report = upper_bound_check(3, bound=0.5 * 2.0 / 9.0)
    assert not report.passed
    assert report.margin < 0


@pytest.mark.parametrize("epsilon", [0.1, 0.25, 0.5])
def test_convexity_certificate(epsilon):
    _, rho = barrier_constants(2, epsilon)
    certificate = convexity_cert(BarrierSpec(dimension=2, epsilon=epsilon), rho)
    assert certificate.convex
    assert certificate.minimum_det >= epsilon / 4.0 - 1e-9
    rows = certificate.rows(stride=100)
    assert rows and all(len(row) == 4 for row in rows)


def test_convexity_certificate_rejects_wide_radius():
    with pytest.raises(BarrierDomainError):
        convexity_cert(BarrierSpec(dimension=3), 2.0)


def test_barrier_vanishes_on_boundary():
    spec = BarrierSpec(dimension=3)
    points = np.array([[0.0, 0.3, 0.2], [0.5, math.sqrt(2.0), 0.0], [0.7, 1.0, 1.0]])
    assert np.allclose(evaluate(spec, points), 0.0)
    assert evaluate(spec, [[0.5, 0.0, 0.0]])[0] < 0


def test_points_outside_cylinder_rejected():
    spec = BarrierSpec(dimension=2)
    with pytest.raises(BarrierDomainError):
        evaluate(spec, [[1.5, 0.0]])
    with pytest.raises(BarrierDomainError):
        det_hessian(spec, [[0.0, 0.5]])


def test_invalid_specs_rejected():
    with pytest.raises(BarrierDomainError):
        BarrierSpec(dimension=1)
    with pytest.raises(BarrierDomainError):
        BarrierSpec(dimension=2, epsilon=0.75)
    with pytest.raises(BarrierDomainError):
        BarrierSpec(dimension=2, variant="w_hat")


def test_optimal_epsilon():
    assert optimal_epsilon(0.5) == pytest.approx(0.5)
    assert optimal_epsilon(math.exp(-10.0)) == pytest.approx(0.1)


@pytest.mark.parametrize("dimension", [2, 3, 4, 5])
def test_amp_profile_dominates_optimized_bound(dimension):
    x1 = np.geomspace(1e-8, 1.0, 200)
    points = np.zeros((x1.size, dimension))
    points[:, 0] = x1
    check = amp_profile_bound(dimension).check(points, amp_bound_value(dimension, x1))
    assert check.passed


def test_planar_amp_constant():
    assert amp_constant(2) == pytest.approx(math.sqrt(8.0) * math.e)


def test_scaled_barrier_is_symmetric():
    spec = BarrierSpec(dimension=2, epsilon=0.25)
    points = np.array([[0.3, 0.4], [1.7, 0.4]])
    values = scaled_barrier(spec, points)
    assert values[0] == pytest.approx(values[1])
    assert values[0] < 0
    assert np.allclose(reflect(points)[:, 0], [0.3, 0.3])


def test_barrier_table_rows():
    spec = BarrierSpec(dimension=2)
    rows = barrier_table(spec, [0.25, 0.5], [0.0, 1.0, math.sqrt(2.0)])
    assert len(rows) == 6
    assert rows[0][2] == pytest.approx(-math.sqrt(0.25) * 1.0)
    assert rows[2][2] == pytest.approx(0.0, abs=1e-12)


def test_upper_barrier_determinant_on_axis():
    spec = BarrierSpec(dimension=3, variant="w_bar")
    dets = det_hessian(spec, [[1.0, 0.0, 0.0], [0.3, 0.0, 0.0]])
    assert np.allclose(dets, 2.0 / 9.0)


def test_planar_constants_at_half():
    assert barrier_constants(2, 0.5) == (pytest.approx(0.125), pytest.approx(0.5))


def test_full_radius_is_not_convex():
    certificate = convexity_cert(BarrierSpec(dimension=2, epsilon=0.1), math.sqrt(2.0))
    assert not certificate.convex
