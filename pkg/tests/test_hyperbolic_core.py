import math

import numpy as np
import pytest

from gauss_errors import DiskDomainError
from hyperbolic_core import (
    SURFACE_AREA,
    DiskIsometry,
    corner_angle,
    domain_area,
    domain_dump,
    enumerate_ball,
    enumerate_group,
    hyperbolic_distance,
    hyperbolic_midpoint,
    metric_density,
    reduce_to_domain,
    relation_product,
    side_pairing_error,
    surface_relation,
)
from domain_selftest import run_domain_selftest

TRANSLATION_LENGTH = 2.0 * math.acosh(1.0 + math.sqrt(2.0))


def test_metric_density_at_origin_and_outside():
    assert metric_density(0.0) == 4.0
    assert metric_density(0.5) == pytest.approx(4.0 / 0.75 ** 2)

    with pytest.raises(DiskDomainError):
        metric_density(1.0)

    with pytest.raises(DiskDomainError):
        metric_density(np.array([0.1, 1.2j]))


def test_generators_preserve_the_disk(domain):
    for g in domain.generators:
        assert abs(g.determinant() - 1.0) <= 1e-12


def test_generators_have_the_bolza_translation_length(domain):
    for g in domain.generators[:4]:
        assert g.translation_length() == pytest.approx(TRANSLATION_LENGTH, abs=1e-10)


def test_opposite_generators_are_inverse(domain):
    for k in range(4):
        product = domain.generators[k].compose(domain.generators[k + 4])
        assert product.is_close(DiskIsometry.identity())


def test_sides_are_paired(domain):
    for k in range(4):
        assert side_pairing_error(domain, k) <= 1e-10


def test_corner_angles_are_an_eighth_turn(domain):
    for k in range(8):
        assert corner_angle(domain, k) == pytest.approx(math.pi / 4.0, abs=1e-10)


def test_octagon_area_is_four_pi(domain):
    assert domain_area(domain) == pytest.approx(SURFACE_AREA, abs=1e-6)


def test_surface_relation_closes(domain):
    word = surface_relation(domain)
    product = relation_product(domain)

    assert len(word) == 8
    assert min(abs(product.a - 1.0), abs(product.a + 1.0)) + abs(product.b) <= 1e-8


def test_word_length_counts(domain):
    assert len(enumerate_group(domain, 0)) == 1
    assert len(enumerate_group(domain, 1)) == 9
    assert len(enumerate_group(domain, 2)) == 65
    assert len(enumerate_group(domain, 3)) == 457


def test_enumerated_elements_are_distinct(domain):
    elements = enumerate_group(domain, 2)
    keys = np.array([g.key() for g in elements])
    distances = np.max(np.abs(keys[:, None, :] - keys[None, :, :]), axis=-1)
    np.fill_diagonal(distances, 1.0)

    assert distances.min() > 1e-6


def test_ball_holds_identity_and_generators(domain):
    ball = enumerate_ball(domain, TRANSLATION_LENGTH + 0.01)

    assert ball[0].is_close(DiskIsometry.identity())
    assert len(ball) == 9
    assert all(g.displacement() <= TRANSLATION_LENGTH + 0.01 for g in ball)


def test_compose_and_inverse():
    g = DiskIsometry(complex(math.cosh(0.7), 0.1), complex(0.3, -0.2))
    g = DiskIsometry(g.a / math.sqrt(g.determinant()), g.b / math.sqrt(g.determinant()))
    z = 0.2 - 0.4j

    assert g.inverse().apply(g.apply(z)) == pytest.approx(z, abs=1e-12)
    assert g.compose(g.inverse()).is_close(DiskIsometry.identity())


def test_isometry_json_round_trip():
    g = DiskIsometry(complex(1.2, 0.3), complex(0.5, 0.6))
    assert DiskIsometry.from_json(g.to_json()) == g


def test_isometries_preserve_distance(domain):
    z, w = 0.1 + 0.2j, -0.3 + 0.05j
    g = domain.generators[2]

    assert hyperbolic_distance(g.apply(z), g.apply(w)) == pytest.approx(hyperbolic_distance(z, w), abs=1e-10)


def test_midpoint_is_equidistant():
    z, w = 0.6 + 0.1j, -0.2 - 0.5j
    m = hyperbolic_midpoint(z, w)

    assert hyperbolic_distance(z, m) == pytest.approx(hyperbolic_distance(m, w), abs=1e-12)
    assert hyperbolic_distance(z, m) == pytest.approx(0.5 * hyperbolic_distance(z, w), abs=1e-12)


def test_reduction_lands_in_the_octagon(domain):
    rng = np.random.default_rng(3)
    points = 0.97 * np.sqrt(rng.random(25)) * np.exp(2j * np.pi * rng.random(25))

    for z in points:
        reduced, element = reduce_to_domain(z, domain)

        assert domain.contains(reduced, slack=1e-9)
        assert element.apply(z) == pytest.approx(reduced, abs=1e-9)


def test_domain_selftest_reports_every_check(domain):
    messages = []
    ok = run_domain_selftest(lambda message, passed: messages.append((message, passed)), domain)

    assert ok
    assert len(messages) == 5
    assert all(passed for _, passed in messages)


def test_area_quadrature_is_resolved(domain):
    assert domain_area(domain, order=7, pieces=8) == pytest.approx(SURFACE_AREA, abs=1e-6)
    assert domain_area(domain, order=30, pieces=8) == pytest.approx(domain_area(domain), abs=1e-10)


def test_metric_density_is_invariant_under_the_group(domain):
    rng = np.random.default_rng(11)
    z = 0.6 * np.sqrt(rng.random(100)) * np.exp(2j * np.pi * rng.random(100))

    for g in domain.generators:
        image = g.apply(z)
        pulled_back = metric_density(image) * np.abs(g.derivative(z)) ** 2

        np.testing.assert_allclose(pulled_back, metric_density(z), rtol=1e-10)


def test_reduction_of_a_tile_centre(domain):
    t0 = domain.generators[0]
    reduced, element = reduce_to_domain(t0.apply(0.0), domain)

    assert abs(reduced) <= 1e-12
    assert element.is_close(t0.inverse())


def test_interior_points_reduce_to_themselves(domain):
    reduced, element = reduce_to_domain(0.1 + 0.1j, domain)

    assert reduced == 0.1 + 0.1j
    assert element.is_close(DiskIsometry.identity())


def test_composed_elements_reduce_to_the_same_orbit_point(domain):
    elements = enumerate_group(domain, 2)
    rng = np.random.default_rng(5)
    z = 0.15 - 0.1j

    for i, j in rng.integers(0, len(elements), size=(20, 2)):
        g = elements[i].compose(elements[j])
        reduced, element = reduce_to_domain(g.apply(z), domain)

        assert reduced == pytest.approx(z, abs=1e-9)
        assert element.compose(g).is_close(DiskIsometry.identity(), tol=1e-8)


def test_domain_dump(domain):
    dump = domain_dump(domain, 1)

    assert dump["max_word_length"] == 1
    assert len(dump["group"]) == 9
    assert set(dump["group"][0]) == {"a_re", "a_im", "b_re", "b_im"}
    assert DiskIsometry.from_json(dump["group"][0]).is_close(DiskIsometry.identity())
    assert len(dump["domain"]["generators"]) == 8
    assert len(dump["domain"]["sides"]) == 8
