"""
Triangulation of the Bolza octagon with side identifications, and P1
finite-element assembly of the hyperbolic Laplace-Beltrami operator.

Triangles are straight in disk coordinates. The cotangent stiffness is the
exact weak form of the hyperbolic Laplacian because the Dirichlet energy is
conformally invariant in two dimensions; the metric only enters the masses.
"""

import hashlib
import json
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from gauss_errors import ConstructionError
from hyperbolic_core import SURFACE_AREA, hyperbolic_midpoint, metric_density

logger = logging.getLogger("gauss_kit")

MAX_REFINEMENT = 8
PAIRING_TOLERANCE = 1e-8
DEGENERATE_AREA = 1e-14
DENSE_EIGEN_LIMIT = 300

# Barycentric quadrature rules keyed by point count; weights sum to one.
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
QUADRATURE_RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    3: (
        np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3),
    ),
    7: (
        np.array([
            [1 / 3, 1 / 3, 1 / 3],
            [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
            [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
        ]),
        np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3),
    ),
}


@dataclass(frozen=True)
class SurfaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    identify: np.ndarray
    vertex_sides: tuple
    refinement_level: int
    quadrature_order: int
    lumped_mass: np.ndarray
    consistent_mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    raw_area: float

    @property
    def canonical_count(self):
        return int(self.identify.max()) + 1

    @property
    def representatives(self):
        """First disk vertex of every canonical vertex."""
        _, first = np.unique(self.identify, return_index=True)
        return first

    @property
    def canonical_positions(self):
        return self.vertices[self.representatives]

    @cached_property
    def mesh_hash(self):
        payload = json.dumps(mesh_payload(self), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def fold(self, disk_values):
        """Average disk-vertex values onto canonical vertices."""
        total = np.bincount(self.identify, weights=disk_values, minlength=self.canonical_count)
        count = np.bincount(self.identify, minlength=self.canonical_count)
        return total / count

    def to_disk(self, values):
        return np.asarray(values)[self.identify]

    def integrate(self, values):
        return float(self.lumped_mass @ np.asarray(values, dtype=float))

    def folding_matrix(self):
        return _folding_matrix(self.identify)


def mesh_payload(mesh):
    return {
        "vertices": [[float(z.real), float(z.imag)] for z in mesh.vertices],
        "triangles": mesh.triangles.tolist(),
        "identify": mesh.identify.tolist(),
        "vertex_sides": [list(s) for s in mesh.vertex_sides],
        "refinement_level": mesh.refinement_level,
        "quadrature_order": mesh.quadrature_order,
    }


# ----------------------------------------------------------------------
# Construction
# ----------------------------------------------------------------------

def _coarse_mesh(domain):
    vertices = [0.0j] + list(domain.corners)
    vertex_sides = [()] + [((k - 1) % 8, k) for k in range(8)]
    triangles = [(0, 1 + k, 1 + (k + 1) % 8) for k in range(8)]
    return vertices, vertex_sides, triangles


def _edge_use_counts(triangles):
    counts = {}

    for tri in triangles:
        for i, j in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(i, j), max(i, j))
            counts[key] = counts.get(key, 0) + 1

    return counts


def _boundary_midpoint(domain, side, p, q):
    """Geodesic midpoint on a side; sides 4..7 copy their partner's node."""
    if side < 4:
        return domain.sides[side].project(hyperbolic_midpoint(p, q))

    pairing = domain.generators[side - 4]
    inverse = pairing.inverse()
    primary = domain.sides[side - 4].project(
        hyperbolic_midpoint(inverse.apply(p), inverse.apply(q))
    )
    return domain.sides[side].project(pairing.apply(primary))


def _refine(domain, vertices, vertex_sides, triangles):
    counts = _edge_use_counts(triangles)
    midpoints = {}
    refined = []

    def midpoint(i, j):
        key = (min(i, j), max(i, j))

        if key in midpoints:
            return midpoints[key]

        shared = set(vertex_sides[i]) & set(vertex_sides[j])

        if counts[key] == 1 and shared:
            side = min(shared)
            vertices.append(_boundary_midpoint(domain, side, vertices[key[0]], vertices[key[1]]))
            vertex_sides.append((side,))
        else:
            vertices.append((vertices[i] + vertices[j]) / 2.0)
            vertex_sides.append(())

        midpoints[key] = len(vertices) - 1
        return midpoints[key]

    for i, j, k in triangles:
        a = midpoint(i, j)
        b = midpoint(j, k)
        c = midpoint(k, i)
        refined.extend([(i, a, c), (a, j, b), (c, b, k), (a, b, c)])

    return refined


def _identify(domain, vertices, vertex_sides):
    """Map every disk vertex to its canonical vertex."""
    n = len(vertices)
    identify = np.full(n, -1, dtype=int)
    next_id = 0
    corner_id = None

    for v in range(n):
        sides = vertex_sides[v]

        if len(sides) == 2:
            if corner_id is None:
                corner_id = next_id
                next_id += 1
            identify[v] = corner_id

        elif len(sides) == 0 or sides[0] < 4:
            identify[v] = next_id
            next_id += 1

    for side in range(4):
        primary = [v for v in range(n) if vertex_sides[v] == (side,)]
        partner = [v for v in range(n) if vertex_sides[v] == (side + 4,)]

        if len(primary) != len(partner):
            raise ConstructionError(f"Side {side} and side {side + 4} carry different node counts")

        if not partner:
            continue

        inverse = domain.generators[side].inverse()
        pulled = inverse.apply(np.array([vertices[v] for v in partner]))
        tree = cKDTree(np.column_stack([
            [vertices[v].real for v in primary],
            [vertices[v].imag for v in primary],
        ]))
        distance, index = tree.query(np.column_stack([pulled.real, pulled.imag]))

        if np.max(distance) > PAIRING_TOLERANCE:
            raise ConstructionError(
                f"Pairing mismatch {np.max(distance):.2e} between sides {side} and {side + 4}"
            )

        for v, match in zip(partner, index):
            identify[v] = identify[primary[match]]

    return identify


def _folding_matrix(identify):
    n = len(identify)
    return sp.csr_matrix(
        (np.ones(n), (np.arange(n), identify)),
        shape=(n, int(identify.max()) + 1),
    )


def _symmetric(matrix):
    matrix = matrix.tocsr()
    return ((matrix + matrix.T) * 0.5).tocsr()


# ----------------------------------------------------------------------
# Assembly
# ----------------------------------------------------------------------

def triangle_areas(points):
    """Signed Euclidean areas of triangles given as (nt, 3) complex points."""
    e1 = points[:, 1] - points[:, 0]
    e2 = points[:, 2] - points[:, 0]
    return 0.5 * (np.conj(e1) * e2).imag


def triangle_stiffness(points):
    """Local cotangent stiffness matrices, shape (nt, 3, 3)."""
    points = np.atleast_2d(np.asarray(points, dtype=complex))
    areas = triangle_areas(points)

    if np.any(np.abs(areas) < DEGENERATE_AREA):
        raise ConstructionError("Degenerate triangle in stiffness assembly")

    local = np.zeros((len(points), 3, 3))

    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        e1 = points[:, i] - points[:, k]
        e2 = points[:, j] - points[:, k]
        cot = (np.conj(e1) * e2).real / np.abs((np.conj(e1) * e2).imag)
        half = 0.5 * cot
        local[:, i, j] -= half
        local[:, j, i] -= half
        local[:, i, i] += half
        local[:, j, j] += half

    return local


def _scatter(local, triangles, n):
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_stiffness(mesh_or_parts):
    vertices, triangles, identify = _parts(mesh_or_parts)
    local = triangle_stiffness(vertices[triangles])
    disk = _scatter(local, triangles, len(vertices))
    fold = _folding_matrix(identify)
    return _symmetric(fold.T @ disk @ fold)


def _consistent_disk_mass(vertices, triangles, quadrature_order, weight=None):
    if quadrature_order not in QUADRATURE_RULES:
        raise ValueError(f"Unsupported quadrature order {quadrature_order}")

    bary, weights = QUADRATURE_RULES[quadrature_order]
    points = vertices[triangles]
    areas = np.abs(triangle_areas(points))
    nodes = points @ bary.T
    density = metric_density(nodes)

    if weight is not None:
        density = density * (np.asarray(weight)[triangles] @ bary.T)

    local = np.einsum("q,tq,qi,qj->tij", weights, density, bary, bary) * areas[:, None, None]
    raw_area = float(np.sum(areas * (density @ weights)))
    return _scatter(local, triangles, len(vertices)), raw_area


def assemble_mass(mesh, weight=None, lumped=True):
    """Mass matrix of the area form, optionally weighted per canonical vertex.

    Lumped entries are row sums of the consistent matrix, so the integration
    functional is  int f dA = sum_v M_v f_v.
    """
    if weight is None:
        consistent = mesh.consistent_mass
        diagonal = mesh.lumped_mass
    else:
        weight = np.asarray(weight, dtype=float)

        if np.any(weight < 0.0) or not np.all(np.isfinite(weight)):
            raise ValueError("Mass weight must be finite and nonnegative")

        diagonal = mesh.lumped_mass * weight
        consistent = None

    if lumped:
        return sp.diags(diagonal).tocsr()

    if consistent is None:
        disk, _ = _consistent_disk_mass(
            mesh.vertices, mesh.triangles, mesh.quadrature_order, weight[mesh.identify]
        )
        fold = mesh.folding_matrix()
        consistent = _symmetric(fold.T @ disk @ fold) * (SURFACE_AREA / mesh.raw_area)

    return consistent


def _parts(mesh_or_parts):
    if isinstance(mesh_or_parts, SurfaceMesh):
        return mesh_or_parts.vertices, mesh_or_parts.triangles, mesh_or_parts.identify

    return mesh_or_parts


def build_mesh(domain, refinement_level, quadrature_order=7):
    if not 0 <= refinement_level <= MAX_REFINEMENT:
        raise ValueError(f"Refinement level must lie in [0, {MAX_REFINEMENT}]")

    vertices, vertex_sides, triangles = _coarse_mesh(domain)

    for _ in range(refinement_level):
        triangles = _refine(domain, vertices, vertex_sides, triangles)

    vertices = np.array(vertices, dtype=complex)
    triangles = np.array(triangles, dtype=int)
    identify = _identify(domain, vertices, vertex_sides)

    stiffness = assemble_stiffness((vertices, triangles, identify))
    disk_mass, raw_area = _consistent_disk_mass(vertices, triangles, quadrature_order)
    fold = _folding_matrix(identify)
    # The discrete surface carries exactly the Gauss-Bonnet area.
    consistent = _symmetric(fold.T @ disk_mass @ fold) * (SURFACE_AREA / raw_area)
    lumped = np.asarray(consistent.sum(axis=1)).ravel()

    for array in (vertices, triangles, identify, lumped):
        array.setflags(write=False)

    mesh = SurfaceMesh(
        vertices=vertices,
        triangles=triangles,
        identify=identify,
        vertex_sides=tuple(tuple(s) for s in vertex_sides),
        refinement_level=refinement_level,
        quadrature_order=quadrature_order,
        lumped_mass=lumped,
        consistent_mass=consistent,
        stiffness=stiffness,
        raw_area=raw_area,
    )

    logger.info(
        f"MESH: level {refinement_level}: {len(vertices)} disk vertices, "
        f"{mesh.canonical_count} canonical, {len(triangles)} triangles, "
        f"raw area defect {abs(raw_area - SURFACE_AREA):.3e}"
    )
    return mesh


# ----------------------------------------------------------------------
# Topology and spectra
# ----------------------------------------------------------------------

def euler_characteristic(mesh):
    counts = _edge_use_counts(mesh.triangles.tolist())
    boundary = sum(1 for c in counts.values() if c == 1)
    edges = len(counts) - boundary // 2
    return mesh.canonical_count - edges + len(mesh.triangles)


def smallest_eigenpairs(matrix, mass, k=1, lower_bound=None):
    """Smallest k eigenpairs of the symmetric pencil (matrix, mass).

    Shift-and-invert about a shift below the spectrum; small problems are
    solved densely.
    """
    n = matrix.shape[0]

    if n <= DENSE_EIGEN_LIMIT:
        values, vectors = scipy.linalg.eigh(
            matrix.toarray(), mass.toarray(), subset_by_index=[0, k - 1]
        )
        return values, vectors

    if lower_bound is None:
        lower_bound = -1.0

    # ARPACK's default start vector changes from call to call.
    v0 = np.random.default_rng(0).random(n) + 0.5
    values, vectors = spla.eigsh(matrix, k=k, M=mass, sigma=lower_bound, which="LM", v0=v0)
    order = np.argsort(values)
    return values[order], vectors[:, order]


def laplace_spectrum(mesh, k=2):
    values, _ = smallest_eigenpairs(
        mesh.stiffness, mesh.consistent_mass, k=k, lower_bound=-0.1
    )
    return values
