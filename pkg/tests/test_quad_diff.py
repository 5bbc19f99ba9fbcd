import numpy as np
import pytest

from gauss_errors import DiskDomainError, GaussKitError
from hyperbolic_core import DiskIsometry, metric_density
from quad_diff import (
    QuadraticDifferential,
    WeightField,
    automorphy_residual,
    build_quadratic_differential,
    constant_weight,
    evaluate_qd,
    nonexistence_bound,
    qd_norms,
    weight_field,
)

SAMPLE_POINTS = np.array([0.1, 0.2j, -0.15 + 0.05j, 0.3 - 0.1j])


def test_identity_series_is_the_seed():
    qd = QuadraticDifferential((DiskIsometry.identity(),), 0, 0.0)

    np.testing.assert_allclose(evaluate_qd(qd, SAMPLE_POINTS), np.ones(len(SAMPLE_POINTS)))
    assert evaluate_qd(qd, 0.0) == 1.0


def test_zero_depth_keeps_only_the_identity(domain):
    qd = build_quadratic_differential(domain, seed_exponent=2, truncation_depth=0.0)

    assert len(qd.group_elements) == 1
    assert evaluate_qd(qd, 0.5) == pytest.approx(0.25)


def test_empty_series_is_refused():
    qd = QuadraticDifferential((), 0, 0.0)

    with pytest.raises(GaussKitError):
        evaluate_qd(qd, 0.0)


def test_points_outside_the_disk_are_refused(domain):
    qd = build_quadratic_differential(domain, truncation_depth=4.0)

    with pytest.raises(DiskDomainError):
        evaluate_qd(qd, np.array([0.2, 1.0]))


@pytest.mark.parametrize("seed", [-2, 1, 3])
def test_bad_seeds_are_refused(domain, seed):
    with pytest.raises(ValueError):
        build_quadratic_differential(domain, seed_exponent=seed, truncation_depth=4.0)


def test_negative_depth_is_refused(domain):
    with pytest.raises(ValueError):
        build_quadratic_differential(domain, truncation_depth=-1.0)


def test_automorphy_improves_with_depth(domain):
    residuals = [
        automorphy_residual(build_quadratic_differential(domain, 0, depth), domain, SAMPLE_POINTS)
        for depth in (6.0, 8.0, 10.0)
    ]

    assert residuals[2] < residuals[0]
    assert residuals[2] < 5e-2 * np.abs(evaluate_qd(
        build_quadratic_differential(domain, 0, 10.0), SAMPLE_POINTS
    )).max()


def test_automorphy_at_each_point_across_depths(domain):
    series = {depth: build_quadratic_differential(domain, 0, depth) for depth in (8.0, 10.0, 12.0)}
    floor = 1e-12 * np.abs(evaluate_qd(series[12.0], SAMPLE_POINTS)).max()

    for z in SAMPLE_POINTS:
        at = {depth: automorphy_residual(qd, domain, [z]) for depth, qd in series.items()}

        assert at[10.0] <= 1.05 * at[8.0] + floor
        assert at[12.0] <= 1.05 * at[8.0] + floor


def test_evaluation_matches_a_direct_sum(domain):
    qd = build_quadratic_differential(domain, seed_exponent=2, truncation_depth=5.0)
    z = 0.2 + 0.1j
    direct = sum(g.apply(z) ** 2 * g.derivative(z) ** 2 for g in qd.group_elements)

    assert evaluate_qd(qd, z) == pytest.approx(direct, rel=1e-10, abs=1e-12)


def test_scaled_differential(domain):
    qd = build_quadratic_differential(domain, truncation_depth=4.0)
    scaled = qd.scaled(2.0j)

    assert evaluate_qd(scaled, 0.3) == pytest.approx(2.0j * evaluate_qd(qd, 0.3))


def test_weight_field_of_a_truncated_series(domain, coarse_mesh):
    qd = build_quadratic_differential(domain, seed_exponent=0, truncation_depth=8.0)
    weight = weight_field(qd, coarse_mesh)
    origin = int(coarse_mesh.identify[0])
    expected = abs(evaluate_qd(qd, 0.0)) ** 2 / metric_density(0.0) ** 2

    assert weight.values.shape == (coarse_mesh.canonical_count,)
    assert weight.values[origin] == pytest.approx(expected, rel=1e-12)
    assert weight.mesh_hash == coarse_mesh.mesh_hash
    assert weight.phase.shape == weight.values.shape
    assert weight.provenance["kind"] == "poincare"
    assert "pairing_discrepancy" in weight.provenance


def test_constant_weight_norms_and_bound(coarse_mesh):
    weight = constant_weight(coarse_mesh, 1.0)
    teichmuller, weil_petersson = qd_norms(weight, coarse_mesh)

    assert teichmuller == pytest.approx(4.0 * np.pi, rel=1e-12)
    assert weil_petersson == pytest.approx(np.sqrt(4.0 * np.pi), rel=1e-12)
    assert nonexistence_bound(weight, coarse_mesh) == pytest.approx(1.0, rel=1e-12)


def test_norms_obey_cauchy_schwarz(domain, coarse_mesh):
    weight = weight_field(build_quadratic_differential(domain, 2, 6.0), coarse_mesh)
    teichmuller, weil_petersson = qd_norms(weight, coarse_mesh)

    assert teichmuller <= np.sqrt(4.0 * np.pi) * weil_petersson * (1.0 + 1e-12)


def test_doubling_the_differential_halves_the_bound(coarse_mesh):
    weight = constant_weight(coarse_mesh, 0.7)
    doubled = weight.scaled(2.0)

    np.testing.assert_allclose(doubled.values, 4.0 * weight.values)
    assert nonexistence_bound(doubled, coarse_mesh) == pytest.approx(
        0.5 * nonexistence_bound(weight, coarse_mesh)
    )


def test_zero_weight_has_no_bound(coarse_mesh):
    weight = constant_weight(coarse_mesh, 0.0)

    assert weight.is_zero
    with pytest.raises(ValueError):
        nonexistence_bound(weight, coarse_mesh)


def test_weight_values_are_checked():
    with pytest.raises(ValueError):
        WeightField(np.array([1.0, -0.5]), {})

    with pytest.raises(ValueError):
        WeightField(np.array([1.0, np.nan]), {})
