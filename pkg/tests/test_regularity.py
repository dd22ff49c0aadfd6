import math

import numpy as np
import pytest

from config import load_preset
from convexfn import ModulusCurve, convex_envelope, modulus
from geometry import AffineMap, ConvexPolytope, circumradius
from regularity import (ConverseBoundReport, DivergenceReport, HolderFit, ProbeReport, RegularityReport, amp_check,
                        converse_bound_check, converse_setup, divergence_check, gradient_scaling, holder_constant,
                        holder_fit, log_probe, modulus_bound_check, resolved_depth, sobolev_integral, unit_ball_map)
from solver import build_problem, solve
from utils import FitError, NormalizationError, ProblemError

DEPTHS = np.geomspace(1e-4, 1.0, 30)


def graded_square(function):
    """ Nodes graded toward the left face of the unit square; values depend on x1 only."""
    x1 = np.concatenate([[0.0], DEPTHS])
    x2 = np.linspace(0.0, 1.0, 5)
    grid = np.array([[a, b] for a in x1 for b in x2])
    return convex_envelope(grid, function(grid), domain=ConvexPolytope.unit_cube(2))


def zero(x):
    return np.zeros(np.atleast_2d(x).shape[0])


def one(x):
    return np.ones(np.atleast_2d(x).shape[0])


@pytest.fixture(scope="module")
def square_solution():
    problem = build_problem(ConvexPolytope.unit_cube(2), one, zero, spacing=0.125, upper_bound=1.0)
    return solve(problem).solution


def solve_preset(name):
    """ Solves every stage of a preset schedule; returns the finest problem, its face and the solutions."""
    config = load_preset(name)
    stages = [config.build_problem(spacing, levels) for spacing, levels in config.mesh.schedule()]
    solutions = [solve(problem, tol=tol, max_iters=config.problem.max_iters).solution for problem, tol in stages]
    problem = stages[-1][0]
    return problem, config.refine_face(problem.domain), solutions


def preset_curve(u, face):
    return modulus(u, np.geomspace(resolved_depth(u, face), 0.5 * circumradius(u.domain), 40))


@pytest.fixture(scope="module")
def fine_square():
    problem = build_problem(ConvexPolytope.unit_cube(2), one, zero, spacing=0.05, upper_bound=1.0)
    return solve(problem).solution


@pytest.fixture(scope="module")
def flat_square():
    return solve_preset("log-probe-2d")


@pytest.fixture(scope="module")
def cube_family():
    return solve_preset("converse-3d")


def test_holder_fit_recovers_power():
    u = graded_square(lambda x: -x[:, 0] ** 0.75)
    face = u.domain.face_index([-1.0, 0.0])
    fit = holder_fit(u, face, depths=DEPTHS)
    assert fit.alpha == pytest.approx(0.75, abs=0.01)
    assert fit.depths.max() <= 0.25
    assert fit.s_hat is not None
    low, high = fit.window
    assert low <= fit.alpha <= high


def test_holder_fit_of_affine_function():
    u = graded_square(lambda x: 2.0 * x[:, 0] + 0.5)
    fit = holder_fit(u, u.domain.face_index([-1.0, 0.0]), depths=DEPTHS)
    assert fit.alpha == pytest.approx(1.0, abs=1e-6)


def test_holder_fit_needs_depths():
    u = graded_square(lambda x: -x[:, 0] ** 0.75)
    with pytest.raises(FitError):
        holder_fit(u, u.domain.face_index([-1.0, 0.0]), depths=[0.1, 0.2])


def test_resolved_depth_skips_layers():
    u = graded_square(lambda x: -x[:, 0] ** 0.75)
    depth = resolved_depth(u, u.domain.face_index([-1.0, 0.0]))
    assert depth == pytest.approx(DEPTHS[2])


@pytest.mark.parametrize("power", [1.0, 0.5])
def test_log_probe_recovers_power(power):
    deltas = np.geomspace(1e-5, 0.25, 40)
    omegas = deltas * (1.0 - np.log(deltas)) ** power
    report = log_probe(deltas, omegas)
    assert report.s_hat == pytest.approx(power, abs=0.05)
    assert not report.inconclusive
    assert report.passed
    assert np.allclose(report.fitted, omegas, rtol=1e-6)


def test_short_probe_is_inconclusive():
    deltas = np.geomspace(0.01, 0.25, 10)
    report = log_probe(deltas, deltas * (1.0 - np.log(deltas)) ** 3)
    assert report.inconclusive
    assert not report.consistent
    assert report.passed


def test_probe_band_filters_deltas():
    deltas = np.geomspace(1e-5, 0.5, 40)
    report = log_probe(deltas, deltas * (1.0 - np.log(deltas)), band=(1e-4, 0.25))
    assert report.deltas.min() >= 1e-4
    assert report.deltas.max() <= 0.25
    with pytest.raises(FitError):
        log_probe(deltas, deltas, band=(0.3, 0.4))


def test_converse_setup_on_normalized_cylinder():
    domain = ConvexPolytope.box([0.0, -2.0], [2.0, 2.0])
    x1, x2 = np.meshgrid(np.linspace(0.0, 2.0, 9), np.linspace(-2.0, 2.0, 17), indexing="ij")
    nodes = np.column_stack([x1.reshape(-1), x2.reshape(-1)])
    u = convex_envelope(nodes, nodes[:, 0] ** 2 + 0.3 * nodes[:, 1], domain=domain)
    setup = converse_setup(u, domain.face_index([-1.0, 0.0]))
    assert np.allclose(setup.affine.linear, np.eye(2))
    assert np.allclose(setup.affine.translation, 0.0)
    assert setup.height == pytest.approx(2.0)
    assert setup.radius == pytest.approx(2.0)
    assert setup.upper_max == pytest.approx(4.0)
    assert setup.lipschitz == pytest.approx(math.hypot(2.0, 0.3))
    assert np.all(setup.u0 <= 1e-9)


def test_amp_bound_on_solved_square(square_solution):
    affine = unit_ball_map(square_solution.domain)
    report = amp_check(square_solution, affine, 1.0)
    assert report.passed, report.worst_margin
    assert len(report.rows()) == square_solution.node_count


def test_amp_check_needs_unit_ball_map(square_solution):
    with pytest.raises(NormalizationError):
        amp_check(square_solution, AffineMap.scaling(3.0, 2), 1.0)


def test_modulus_bound_on_solved_square(square_solution):
    curve = modulus(square_solution, [0.05, 0.1, 0.2])
    report = modulus_bound_check(curve, None, unit_ball_map(square_solution.domain), 1.0)
    assert report.passed


@pytest.mark.parametrize("p, beta, alpha", [(1.0, 0.0, 1.0), (2.0, 0.0, 1.0), (2.0, 0.5, 1.0), (3.0, 0.0, 0.75),
                                           (1.5, 0.25, 0.5)])
def test_sobolev_integral_below_layer_bound(square_solution, p, beta, alpha):
    report = sobolev_integral(square_solution, p=p, beta=beta, alpha=alpha)
    assert report.q == pytest.approx((1.0 - alpha) * p - beta)
    assert report.integral > 0
    assert report.passed, (report.integral, report.bound)


def test_holder_constant_uses_modulus_only():
    curve = ModulusCurve(deltas=np.array([0.25, 1.0]), raw=np.array([0.5, 1.0]), values=np.array([0.5, 1.0]))
    assert holder_constant(curve, 0.5) == pytest.approx(1.0)
    assert holder_constant(curve, 1.0) == pytest.approx(2.0)


def test_sobolev_rejects_critical_exponents(square_solution):
    with pytest.raises(ProblemError):
        sobolev_integral(square_solution, p=2.0, beta=-1.0, alpha=1.0)
    with pytest.raises(ProblemError):
        sobolev_integral(square_solution, p=0.5, beta=0.0, alpha=1.0)


def test_divergence_needs_three_levels(square_solution):
    with pytest.raises(FitError):
        divergence_check([square_solution, square_solution], [4, 8])


def test_divergence_report_ratios():
    report = DivergenceReport(levels=[4, 8, 16], nodes=[10, 20, 40], norms=[1.0, 1.5, 2.25],
                              controls=[1.0, 1.02, 1.03])
    assert np.allclose(report.ratios, [1.5, 1.5])
    assert report.diverging
    assert report.control_converging
    assert report.passed
    assert len(report.rows()) == 3
    flat = DivergenceReport(levels=[4, 8, 16], nodes=[10, 20, 40], norms=[1.0, 1.1, 1.2])
    assert not flat.passed


def test_unit_ball_map_shrinks_wide_boxes():
    box = ConvexPolytope.box([0.0, 0.0], [4.0, 2.0])
    affine = unit_ball_map(box)
    radii = np.linalg.norm(affine(box.vertices), axis=1)
    assert np.max(radii) == pytest.approx(1.0)
    square = ConvexPolytope.unit_cube(2)
    assert np.allclose(unit_ball_map(square).linear, np.eye(2))


def test_regularity_report_checks():
    holder = HolderFit(alpha=0.9, intercept=0.0, stderr=0.01, depths=np.array([0.1, 0.2]),
                       values=np.array([0.1, 0.2]))
    probe = ProbeReport(s_hat=0.8, band=0.1, decades=3.0, deltas=np.array([0.01, 0.1]),
                        omegas=np.array([0.02, 0.2]), intercept=0.0, inconclusive=False)
    curve = ModulusCurve(deltas=np.array([0.1]), raw=np.array([0.1]), values=np.array([0.1]))
    report = RegularityReport(modulus=curve, holder=holder, probe=probe, holder_range=(0.85, 1.05))
    checks = {name: (passed, margin) for name, passed, margin in report.checks()}
    assert checks["holder_exponent"][0]
    assert checks["holder_exponent"][1] == pytest.approx(0.05)
    assert checks["log_probe"] == (True, pytest.approx(0.4))
    assert report.passed
    assert RegularityReport().checks() == []


def test_gradient_scaling_of_paraboloid():
    axis = np.linspace(0.0, 1.0, 101)
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    nodes = np.column_stack([x1.reshape(-1), x2.reshape(-1)])
    u = convex_envelope(nodes, 0.5 * np.sum(nodes ** 2, axis=1), domain=ConvexPolytope.unit_cube(2))
    scaling = gradient_scaling(u, AffineMap.identity(2), 1.0, 2.0)
    assert scaling.mean_norm == pytest.approx(math.sqrt(2.0 / 3.0), abs=2e-2)
    assert scaling.normalized == pytest.approx(scaling.mean_norm)


def test_converse_bound_rejects_lipschitz_data():
    domain = ConvexPolytope.box([0.0, -2.0], [2.0, 2.0])
    x1, x2 = np.meshgrid(np.linspace(0.0, 2.0, 9), np.linspace(-2.0, 2.0, 17), indexing="ij")
    nodes = np.column_stack([x1.reshape(-1), x2.reshape(-1)])
    u = convex_envelope(nodes, nodes[:, 0] ** 2 + 0.3 * nodes[:, 1], domain=domain)
    setup = converse_setup(u, domain.face_index([-1.0, 0.0]))
    report = converse_bound_check(setup, 1.0, depths=DEPTHS, exclude_layers=0)
    assert report.constant == pytest.approx(1.0)
    assert report.observed < report.constant
    assert not report.passed
    with pytest.raises(ProblemError):
        converse_bound_check(setup, 0.0, depths=DEPTHS, exclude_layers=0)


def test_converse_report_needs_observed_above_constant():
    depths = np.array([0.1, 0.2])
    report = ConverseBoundReport(depths=depths, values=-depths, profile=depths, constant=0.5, observed=1.0,
                                 lower_bound_margins=np.zeros(2))
    assert report.passed
    weak = ConverseBoundReport(depths=depths, values=-depths, profile=depths, constant=0.5, observed=0.4,
                               lower_bound_margins=np.zeros(2))
    assert not weak.passed
    checks = {name: (passed, margin) for name, passed, margin in RegularityReport(converse=weak).checks()}
    assert checks["converse_bound"] == (False, pytest.approx(-0.1))


def test_amp_bound_tighter_than_classical(fine_square):
    report = amp_check(fine_square, unit_ball_map(fine_square.domain), 1.0)
    assert report.passed, report.worst_margin
    near = (report.dist > 0) & (report.dist <= 0.05)
    assert np.count_nonzero(near) > 0
    assert report.tighter_than_classical()


@pytest.mark.slow
def test_log_power_on_flat_face_solution(flat_square):
    _, face, solutions = flat_square
    u = solutions[-1]
    curve = preset_curve(u, face)
    report = log_probe(curve.deltas, curve.values, band=(float(curve.deltas[0]), 0.25))
    assert 0.0 <= report.s_hat <= 1.2
    assert report.passed


@pytest.mark.slow
def test_planar_exponent_below_lipschitz(flat_square):
    _, face, solutions = flat_square
    fit = holder_fit(solutions[-1], face)
    assert 0.6 <= fit.alpha <= 0.95
    assert fit.s_hat > 0


@pytest.mark.slow
def test_cube_exponent_brackets_two_thirds(cube_family):
    _, face, solutions = cube_family
    fit = holder_fit(solutions[-1], face)
    assert 0.55 <= fit.alpha <= 0.80


@pytest.mark.slow
def test_cube_critical_gradient_norm_diverges(cube_family):
    _, _, solutions = cube_family
    report = divergence_check(solutions, [4, 8, 16], p=3.0, control_p=2.0)
    assert np.all(report.ratios >= 1.2)
    assert report.control_ratios[-1] <= 1.05
    assert report.passed


@pytest.mark.slow
@pytest.mark.parametrize("p, beta", [(1.0, 0.0), (1.5, 0.0), (2.0, 0.0), (2.0, 0.5)])
def test_cube_weighted_gradient_integrals(cube_family, p, beta):
    _, face, solutions = cube_family
    u = solutions[-1]
    alpha = holder_fit(u, face).alpha
    report = sobolev_integral(u, p, beta, alpha, preset_curve(u, face))
    assert report.q < 1
    assert report.passed, (report.integral, report.bound)


@pytest.mark.slow
def test_cube_converse_bound(cube_family):
    problem, face, solutions = cube_family
    setup = converse_setup(solutions[-1], face)
    report = converse_bound_check(setup, problem.lower_bound)
    assert report.constant > 0
    assert report.observed >= report.constant
    assert report.passed
