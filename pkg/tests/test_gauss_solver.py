import numpy as np
import pytest

from conftest import lower_root, upper_root
import gauss_solver
from gauss_errors import ContinuationAbort
from gauss_solver import (
    Branch,
    ContinuationEngine,
    Solution,
    StepControl,
    certify_no_solution,
    branch_solution_at,
    continue_branch,
    integral_identity_defect,
    linearized_operator,
    newton_solve,
    residual,
    residual_norm,
    smallest_eigenvalue,
)
from quad_diff import constant_weight


def constant(mesh, value):
    return np.full(mesh.canonical_count, value)


def test_residual_vanishes_at_the_constant_roots(coarse_mesh, unit_weight):
    for root in (upper_root(0.4), lower_root(0.4)):
        r = residual(constant(coarse_mesh, root), 0.4, coarse_mesh, unit_weight)
        assert residual_norm(r, coarse_mesh) <= 1e-12


def test_residual_at_zero(coarse_mesh, unit_weight):
    r = residual(constant(coarse_mesh, 0.0), 0.3, coarse_mesh, unit_weight)

    np.testing.assert_allclose(r, -0.09, atol=1e-12)


def test_linearization_at_the_origin(coarse_mesh, unit_weight):
    assert smallest_eigenvalue(constant(coarse_mesh, 0.0), 0.0, coarse_mesh, unit_weight) == pytest.approx(
        2.0, abs=1e-10
    )


def test_linearization_on_the_constant_roots(coarse_mesh, unit_weight):
    upper = smallest_eigenvalue(constant(coarse_mesh, upper_root(0.4)), 0.4, coarse_mesh, unit_weight)
    lower = smallest_eigenvalue(constant(coarse_mesh, lower_root(0.4)), 0.4, coarse_mesh, unit_weight)

    assert upper == pytest.approx(1.2, abs=1e-8)
    assert lower == pytest.approx(-1.2, abs=1e-8)


def test_jacobian_matches_finite_differences(coarse_mesh, unit_weight):
    rng = np.random.default_rng(1)
    u = -0.3 + 0.1 * rng.standard_normal(coarse_mesh.canonical_count)
    v = rng.standard_normal(coarse_mesh.canonical_count)
    t, eps = 0.35, 1e-6

    a, _ = linearized_operator(u, t, coarse_mesh, unit_weight)
    numeric = (
        residual(u + eps * v, t, coarse_mesh, unit_weight)
        - residual(u - eps * v, t, coarse_mesh, unit_weight)
    ) / (2.0 * eps)

    np.testing.assert_allclose(numeric, -(a @ v) / coarse_mesh.lumped_mass, rtol=1e-5, atol=1e-6)


def test_newton_reaches_both_roots(coarse_mesh, unit_weight):
    upper = newton_solve(constant(coarse_mesh, 0.0), 0.4, coarse_mesh, unit_weight)
    lower = newton_solve(constant(coarse_mesh, -1.5), 0.4, coarse_mesh, unit_weight)

    assert upper.converged and lower.converged
    np.testing.assert_allclose(upper.u, upper_root(0.4), atol=1e-8)
    np.testing.assert_allclose(lower.u, lower_root(0.4), atol=1e-8)
    assert upper.mu1 > 0.0 > lower.mu1


def test_newton_finds_the_hyperbolic_metric_from_a_rough_start(coarse_mesh, unit_weight):
    rng = np.random.default_rng(7)
    start = 0.3 * rng.standard_normal(coarse_mesh.canonical_count)
    solution = newton_solve(start, 0.0, coarse_mesh, unit_weight)

    assert solution.converged
    assert np.max(np.abs(solution.u)) <= 1e-8


def test_newton_reports_failure_beyond_the_fold(coarse_mesh, unit_weight):
    solution = newton_solve(constant(coarse_mesh, -0.3), 0.6, coarse_mesh, unit_weight, max_iter=20)

    assert not solution.converged
    assert np.isnan(solution.mu1)


def test_newton_refuses_a_nonfinite_start(coarse_mesh, unit_weight):
    start = constant(coarse_mesh, 0.0)
    start[0] = np.nan

    with pytest.raises(ValueError):
        newton_solve(start, 0.1, coarse_mesh, unit_weight)


# ----------------------------------------------------------------------
# Continuation
# ----------------------------------------------------------------------

def test_fold_of_the_constant_weight_branch(unit_branch):
    assert unit_branch.has_fold
    assert unit_branch.fold_parameter == pytest.approx(0.5, abs=1e-8)
    np.testing.assert_allclose(unit_branch.fold_solution.u, 0.5 * np.log(0.5), atol=1e-8)


def test_branch_changes_stability_once(unit_branch):
    signs = np.sign([p.mu1 for p in unit_branch.points])
    changes = int(np.count_nonzero(np.diff(signs) != 0))

    assert changes == 1
    assert all(p.mu1 > 0.0 for p in unit_branch.stable_part()[:-1])
    assert all(p.mu1 < 0.0 for p in unit_branch.unstable_part()[1:])


def test_branch_stays_below_the_hyperbolic_metric(unit_branch):
    assert max(p.u_max for p in unit_branch.points) <= 1e-10


def test_branch_ends_near_t_zero(unit_branch):
    last = unit_branch.points[-1]

    assert last.t < StepControl().t_min
    assert last.u_max < -3.0


def test_branch_points_follow_the_constant_roots(unit_branch):
    for point in unit_branch.stable_part()[:-1]:
        if abs(point.mu1) < 1e-2:
            continue

        np.testing.assert_allclose(point.u, upper_root(point.t), atol=1e-7)

    for point in unit_branch.unstable_part()[1:]:
        if abs(point.mu1) < 1e-2:
            continue

        np.testing.assert_allclose(point.u, lower_root(point.t), atol=1e-7)


def test_integral_identity_along_the_branch(unit_branch, coarse_mesh, unit_weight):
    for point in unit_branch.points:
        assert abs(integral_identity_defect(point, coarse_mesh, unit_weight)) <= 1e-8


def test_arclength_increases(unit_branch):
    s = [p.s for p in unit_branch.points]

    assert np.all(np.diff(s) > 0.0)


def test_solution_on_either_side(unit_branch, coarse_mesh, unit_weight):
    stable = branch_solution_at(unit_branch, 0.3, coarse_mesh, unit_weight)
    unstable = branch_solution_at(unit_branch, 0.3, coarse_mesh, unit_weight, side="unstable")

    np.testing.assert_allclose(stable.u, upper_root(0.3), atol=1e-8)
    np.testing.assert_allclose(unstable.u, lower_root(0.3), atol=1e-8)

    with pytest.raises(ValueError):
        branch_solution_at(unit_branch, 0.7, coarse_mesh, unit_weight)

    with pytest.raises(ValueError):
        branch_solution_at(unit_branch, 0.3, coarse_mesh, unit_weight, side="sideways")


def test_resume_finds_the_same_fold(unit_branch, coarse_mesh, unit_weight):
    before_fold = unit_branch.points[:unit_branch.fold_index - 3]
    resumed = continue_branch(coarse_mesh, unit_weight, resume_points=before_fold)

    assert resumed.fold_parameter == pytest.approx(unit_branch.fold_parameter, abs=1e-8)
    assert all(a is b for a, b in zip(resumed.points, before_fold))


@pytest.mark.parametrize("end", ["left", "right"])
def test_fold_root_on_an_end_of_the_secant(monkeypatch, unit_branch, coarse_mesh, unit_weight, end):
    i = unit_branch.fold_index
    left, right = unit_branch.points[i - 1], unit_branch.points[i]
    engine = ContinuationEngine(coarse_mesh, unit_weight)
    engine.branch = Branch(points=list(unit_branch.points))
    monkeypatch.setattr(gauss_solver, "brentq", lambda f, a, b, **kwargs: a if end == "left" else b)

    engine._locate_fold(left, right, i)

    assert engine.branch.fold_solution is (left if end == "left" else right)
    assert engine.branch.fold_index == i


def test_second_eigenvalue_on_the_constant_branch(unit_branch):
    assert all(np.isfinite(p.mu2) and p.mu2 > 0.0 for p in unit_branch.points)
    assert all(p.mu2 > p.mu1 for p in unit_branch.points)
    assert unit_branch.secondary_branch_points() == []


def test_secondary_branch_point_is_placed_between_neighbours(coarse_mesh):
    u = np.zeros(coarse_mesh.canonical_count)
    points = [
        Solution(u, 0.10, 0.0, -0.5, True, s=1.0, mu2=0.3),
        Solution(u, 0.20, 0.0, -0.6, True, s=2.0, mu2=-0.1),
        Solution(u, 0.30, 0.0, -0.7, True, s=3.0, mu2=-0.2),
        Solution(u, 0.40, 0.0, -0.8, True, s=4.0),
    ]
    found = Branch(points=points).secondary_branch_points()

    assert len(found) == 1
    assert found[0]["s"] == pytest.approx(1.75)
    assert found[0]["t"] == pytest.approx(0.175)


def test_on_point_sees_every_new_point(coarse_mesh):
    weight = constant_weight(coarse_mesh, 4.0)
    seen = []
    branch = continue_branch(coarse_mesh, weight, on_point=seen.append)

    assert len(seen) == len(branch.points)
    assert all(a is b for a, b in zip(seen, branch.points))
    assert branch.fold_parameter == pytest.approx(0.25, abs=1e-6)


def test_continuation_aborts_with_the_partial_branch(coarse_mesh):
    weight = constant_weight(coarse_mesh, 1e6)
    control = StepControl(max_halvings=2)

    with pytest.raises(ContinuationAbort) as info:
        continue_branch(coarse_mesh, weight, control)

    assert len(info.value.branch.points) == 1
    assert info.value.branch.points[0].t == 0.0


def test_zero_weight_is_refused(coarse_mesh):
    with pytest.raises(ValueError):
        continue_branch(coarse_mesh, constant_weight(coarse_mesh, 0.0))


# ----------------------------------------------------------------------
# Nonexistence
# ----------------------------------------------------------------------

def test_certified_beyond_the_bound(coarse_mesh, unit_weight):
    report = certify_no_solution(1.2, coarse_mesh, unit_weight)

    assert report["status"] == "certified-by-theorem"
    assert report["bound"] == pytest.approx(1.0, rel=1e-12)
    assert report["solutions"] == []


def test_no_solution_between_fold_and_bound(coarse_mesh, unit_weight):
    report = certify_no_solution(0.6, coarse_mesh, unit_weight, attempts=6)

    assert report["status"] == "empirical-nonexistence"
    assert report["converged"] == 0
    assert len(report["endpoints"]) == 6


def test_solutions_found_below_the_fold(coarse_mesh, unit_weight):
    report = certify_no_solution(0.4, coarse_mesh, unit_weight, attempts=20, seed=3)

    assert report["status"] == "solutions-found"
    assert report["solutions"][0]["u_max"] == pytest.approx(upper_root(0.4), abs=1e-8)
    assert report["solutions"][0]["mu1"] > 0.0


def test_certify_needs_positive_t(coarse_mesh, unit_weight):
    with pytest.raises(ValueError):
        certify_no_solution(0.0, coarse_mesh, unit_weight)
