import numpy as np
import pytest

from gauss_errors import ConstructionError
from hyperbolic_core import SURFACE_AREA
from surface_mesh import (
    assemble_mass,
    build_mesh,
    euler_characteristic,
    laplace_spectrum,
    mesh_payload,
    triangle_stiffness,
)


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_mesh_is_a_genus_two_surface(domain, level):
    mesh = build_mesh(domain, level)

    assert euler_characteristic(mesh) == -2
    assert len(mesh.triangles) == 8 * 4 ** level
    assert mesh.canonical_count == 4 * 4 ** level - 2


def test_paired_vertices_map_onto_each_other(domain, mesh3):
    worst = 0.0
    checked = 0

    for v, sides in enumerate(mesh3.vertex_sides):
        if len(sides) != 1 or sides[0] < 4:
            continue

        side = sides[0] - 4
        pulled = domain.generators[side].inverse().apply(mesh3.vertices[v])
        twins = [
            w for w, other in enumerate(mesh3.vertex_sides)
            if other == (side,) and mesh3.identify[w] == mesh3.identify[v]
        ]

        assert len(twins) == 1
        worst = max(worst, abs(pulled - mesh3.vertices[twins[0]]))
        checked += 1

    assert checked == 4 * (2 ** 3 - 1)
    assert worst <= 1e-10


def test_all_corners_share_one_vertex(mesh3):
    corners = [v for v, sides in enumerate(mesh3.vertex_sides) if len(sides) == 2]

    assert len(corners) == 8
    assert len({int(mesh3.identify[v]) for v in corners}) == 1


def test_stiffness_is_symmetric_with_zero_row_sums(mesh3):
    K = mesh3.stiffness

    assert (K - K.T).count_nonzero() == 0
    assert np.max(np.abs(K @ np.ones(K.shape[0]))) <= 1e-10


def test_masses_carry_the_gauss_bonnet_area(coarse_mesh, mesh3):
    for mesh in (coarse_mesh, mesh3):
        assert mesh.lumped_mass.sum() == pytest.approx(SURFACE_AREA, rel=1e-12)
        assert mesh.consistent_mass.sum() == pytest.approx(SURFACE_AREA, rel=1e-12)
        assert np.all(mesh.lumped_mass > 0.0)


def test_raw_area_defect_shrinks_with_refinement(coarse_mesh, mesh3):
    coarse_defect = abs(coarse_mesh.raw_area - SURFACE_AREA)
    fine_defect = abs(mesh3.raw_area - SURFACE_AREA)

    assert fine_defect < 0.2
    assert 3.5 <= coarse_defect / fine_defect <= 4.5


def test_first_laplace_eigenvalue(mesh3):
    values = laplace_spectrum(mesh3, k=2)

    assert abs(values[0]) <= 1e-8
    assert 3.3 < values[1] < 4.6


def test_right_triangle_stiffness():
    local = triangle_stiffness([[0.0, 1.0, 1.0j]])[0]
    expected = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])

    np.testing.assert_allclose(local, expected, atol=1e-14)


def test_degenerate_triangle_is_refused():
    with pytest.raises(ConstructionError):
        triangle_stiffness([[0.0, 0.5, 0.25]])


def test_refinement_level_is_bounded(domain):
    with pytest.raises(ValueError):
        build_mesh(domain, 9)

    with pytest.raises(ValueError):
        build_mesh(domain, -1)


def test_mesh_hash_is_deterministic(domain):
    first = build_mesh(domain, 1)
    second = build_mesh(domain, 1)

    assert first.mesh_hash == second.mesh_hash
    assert mesh_payload(first) == mesh_payload(second)
    assert first.mesh_hash != build_mesh(domain, 1, quadrature_order=3).mesh_hash


def test_fold_undoes_to_disk(coarse_mesh):
    values = np.linspace(-1.0, 1.0, coarse_mesh.canonical_count)

    np.testing.assert_allclose(coarse_mesh.fold(coarse_mesh.to_disk(values)), values)


def test_weighted_lumped_mass_scales_rows(coarse_mesh):
    weight = np.linspace(0.0, 2.0, coarse_mesh.canonical_count)
    lumped = assemble_mass(coarse_mesh, weight)

    np.testing.assert_allclose(lumped.diagonal(), coarse_mesh.lumped_mass * weight)

    with pytest.raises(ValueError):
        assemble_mass(coarse_mesh, -weight - 1.0)


def test_weighted_consistent_mass_integrates_the_weight(coarse_mesh):
    weight = np.full(coarse_mesh.canonical_count, 3.0)
    consistent = assemble_mass(coarse_mesh, weight, lumped=False)

    assert consistent.sum() == pytest.approx(3.0 * SURFACE_AREA, rel=1e-10)
