import numpy as np
import pytest

from core.errors import GeometryError
from core.expressions import Expression
from core.geometry import BoundaryProfile
from core.material import PlateConstants, stiffness_tensor
from core.plate_solver import (PlateProblem, StretchedGrid, assemble_weak_form, domain_for,
                               integration_by_parts_defect, refinement_study, residuals, solve,
                               solver_grid_shape)


def _error(problem, report, exact):
    grid = problem.grid()
    return float(np.max(np.abs(report.computational.values - Expression(exact)(grid.X1, grid.X2))))


def test_grid_shapes(flat_profile):
    assert solver_grid_shape(flat_profile, 17) == (17, 17)
    domain = domain_for(flat_profile, 17)
    assert domain.mask.shape == (17, 33)


def test_stretched_grid_maps_gamma(curved_profile):
    grid = StretchedGrid(curved_profile, 17, 17)
    np.testing.assert_allclose(grid.X2[:, 0], 0.05 * grid.xi ** 2, atol=1e-15)
    np.testing.assert_allclose(grid.X2[:, -1], curved_profile.height, atol=1e-14)
    xi, eta = grid.computational(grid.X1, grid.X2)
    np.testing.assert_allclose(eta, grid.ETA, atol=1e-12)


def test_profile_reaching_top_rejected():
    with pytest.raises(GeometryError):
        StretchedGrid(BoundaryProfile.from_text('3*x^2'), 17, 17)


def test_stencil_centre_weight(flat_profile):
    domain = domain_for(flat_profile, 17)
    pc = PlateConstants.from_expressions('1', '0', domain.x1, domain.x2)
    system = assemble_weak_form(PlateProblem(domain, stiffness_tensor(pc), Expression('0')))
    h = system.grid.h1
    row = system.stencil_row((8, 8))
    assert row[(0, 0)] == pytest.approx(20.0 / h ** 4, rel=1e-12)
    assert row[(2, 0)] == pytest.approx(1.0 / h ** 4, rel=1e-12)
    assert row[(1, 1)] == pytest.approx(2.0 / h ** 4, rel=1e-12)
    assert system.symmetry_defect() == 0.0


@pytest.mark.parametrize('exact', ['x2', '2*x1*x2'])
def test_polynomial_solutions_are_reproduced(flat_profile, make_problem, exact):
    problem = make_problem(flat_profile, 17, exact)
    u, report = solve(problem)
    assert _error(problem, report, exact) < 1e-8
    assert report.boundary_value_residual < 1e-12
    assert u.shape == problem.chart.mask.shape


def test_solution_is_linear_in_data(curved_profile, make_problem):
    _, r1 = solve(make_problem(curved_profile, 17, 'x2*cos(x1)'))
    _, r2 = solve(make_problem(curved_profile, 17, '(x2 - 0.05*x1^2)^2'))
    _, r12 = solve(make_problem(curved_profile, 17, '3*x2*cos(x1) - 2*(x2 - 0.05*x1^2)^2'))
    combined = 3 * r1.computational.values - 2 * r2.computational.values
    scale = float(np.max(np.abs(combined)))
    np.testing.assert_allclose(r12.computational.values, combined, atol=1e-9 * scale)


def test_solver_statistics(flat_profile, make_problem):
    _, report = solve(make_problem(flat_profile, 17, 'x2'))
    stats = report.solver_stats
    assert stats['unknowns'] > 0
    assert stats['condition_estimate'] > 1.0
    assert report.to_dict()['interior_residual'] >= 0.0


def test_residuals_of_linear_field(flat_profile, make_problem):
    problem = make_problem(flat_profile, 17, 'x2')
    report = residuals(problem.chart.sample_function(Expression('x2'), 'u'), problem)
    assert report.interior_residual <= 1e-10
    assert report.expanded_residual <= 1e-10
    assert report.boundary_value_residual <= 1e-10
    assert report.boundary_moment_residual <= 1e-10


def test_residual_flags_nonzero_trace(flat_profile, make_problem):
    problem = make_problem(flat_profile, 17, 'x2')
    report = residuals(problem.chart.sample_function(Expression('x1'), 'u'), problem)
    assert report.boundary_value_residual == pytest.approx(1.0, rel=1e-9)


def test_second_boundary_condition_residual(flat_profile, make_problem, plate_constants):
    problem = make_problem(flat_profile, 17, 'x2')
    report = residuals(problem.chart.sample_function(Expression('x2^2'), 'u'), problem)
    B = float(plate_constants.B.values[0, 0])
    assert report.boundary_moment_residual == pytest.approx(2.0 * B, rel=1e-8)


@pytest.mark.slow
def test_refinement_on_harmonic_solution(flat_profile, make_problem):
    exact = 'sin(x1)*(exp(x2) - exp(-x2))/2'
    rows = refinement_study(lambda n: make_problem(flat_profile, n, exact), Expression(exact),
                            [17, 33, 65])
    errors = [row['error_max'] for row in rows]
    assert errors[0] > errors[1] > errors[2]
    assert rows[-1]['order'] > 1.0


def test_integration_by_parts_defect_vanishes_without_curvature(flat_profile, make_problem):
    problem = make_problem(flat_profile, 17, 'x2')
    assert integration_by_parts_defect(Expression('x2'), Expression('x1^2*x2'), problem) == 0.0
