"""
Poincare-disk geometry and the Fuchsian group of the Bolza surface.

The Bolza surface is the regular hyperbolic octagon with corner angle pi/4
whose opposite sides are glued. Side k faces the direction pi + k*pi/4; the
generator T_k is the translation towards exp(i*k*pi/4) and maps side k onto
side k+4, so T_{k+4} is the inverse of T_k.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from gauss_errors import ConstructionError, DiskDomainError

logger = logging.getLogger("gauss_kit")

GROUP_TOLERANCE = 1e-9
GENUS = 2
SURFACE_AREA = 2.0 * math.pi * (2 * GENUS - 2)

# Greedy reduction needs fewer than this many steps per unit of distance.
REDUCTION_FACTOR = 50


def check_in_disk(z):
    if np.any(np.abs(z) >= 1.0):
        raise DiskDomainError("Point outside the open unit disk")


def metric_density(z):
    """Return lambda^2(z) = 4 / (1 - |z|^2)^2 for scalars or arrays."""
    z = np.asarray(z, dtype=complex)
    check_in_disk(z)
    density = 4.0 / (1.0 - np.abs(z) ** 2) ** 2

    if density.ndim == 0:
        return float(density)

    return density


def hyperbolic_distance(z, w):
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    check_in_disk(z)
    check_in_disk(w)

    ratio = np.abs(z - w) / np.abs(1.0 - np.conj(w) * z)
    distance = 2.0 * np.arctanh(ratio)

    if distance.ndim == 0:
        return float(distance)

    return distance


def hyperbolic_midpoint(z, w):
    """Midpoint of the geodesic segment from z to w."""
    z = complex(z)
    w = complex(w)
    check_in_disk(np.array([z, w]))

    moved = (w - z) / (1.0 - z.conjugate() * w)
    radius = abs(moved)

    if radius == 0.0:
        return z

    half = moved / radius * math.tanh(math.atanh(radius) / 2.0)
    return (half + z) / (1.0 + z.conjugate() * half)


# ----------------------------------------------------------------------
# Isometries
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DiskIsometry:
    """z -> (a z + b) / (conj(b) z + conj(a)) with |a|^2 - |b|^2 = 1."""

    a: complex
    b: complex

    @classmethod
    def identity(cls):
        return cls(1.0 + 0.0j, 0.0j)

    @classmethod
    def rotation(cls, angle):
        return cls(complex(math.cos(angle / 2.0), math.sin(angle / 2.0)), 0.0j)

    def apply(self, z):
        z = np.asarray(z, dtype=complex)
        image = (self.a * z + self.b) / (np.conj(self.b) * z + np.conj(self.a))

        if image.ndim == 0:
            return complex(image)

        return image

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        value = 1.0 / (np.conj(self.b) * z + np.conj(self.a)) ** 2

        if value.ndim == 0:
            return complex(value)

        return value

    def compose(self, other):
        """Return self o other."""
        return DiskIsometry(
            self.a * other.a + self.b * other.b.conjugate(),
            self.a * other.b + self.b * other.a.conjugate(),
        )

    def inverse(self):
        return DiskIsometry(self.a.conjugate(), -self.b)

    def determinant(self):
        return abs(self.a) ** 2 - abs(self.b) ** 2

    def trace(self):
        return 2.0 * self.a.real

    def translation_length(self):
        half_trace = abs(self.a.real)

        if half_trace <= 1.0:
            return 0.0

        return 2.0 * math.acosh(half_trace)

    def displacement(self):
        """Hyperbolic distance from 0 to the image of 0."""
        return 2.0 * math.log(abs(self.a) + abs(self.b))

    def normalized(self):
        if self.a.real < 0.0 or (self.a.real == 0.0 and self.a.imag < 0.0):
            return DiskIsometry(-self.a, -self.b)

        return self

    def key(self):
        n = self.normalized()
        return np.array([n.a.real, n.a.imag, n.b.real, n.b.imag])

    def is_close(self, other, tol=GROUP_TOLERANCE):
        return bool(np.max(np.abs(self.key() - other.key())) <= tol)

    def to_json(self):
        return {
            "a_re": self.a.real,
            "a_im": self.a.imag,
            "b_re": self.b.real,
            "b_im": self.b.imag,
        }

    @classmethod
    def from_json(cls, data):
        return cls(
            complex(data["a_re"], data["a_im"]),
            complex(data["b_re"], data["b_im"]),
        )


@dataclass(frozen=True)
class GeodesicSide:
    """A side of the octagon: arc of a circle orthogonal to |z| = 1."""

    center: complex
    radius: float
    start: complex
    end: complex

    def violation(self, z):
        """Positive when z lies beyond this side (inside the circle)."""
        return self.radius - np.abs(np.asarray(z, dtype=complex) - self.center)

    def project(self, z):
        offset = complex(z) - self.center
        return self.center + self.radius * offset / abs(offset)


@dataclass(frozen=True)
class BolzaDomain:
    vertex_radius: float
    generators: tuple
    sides: tuple

    @property
    def corners(self):
        return tuple(side.start for side in self.sides)

    @property
    def circumradius(self):
        return 2.0 * math.atanh(self.vertex_radius)

    def side_violations(self, z):
        z = np.asarray(z, dtype=complex)
        return np.array([side.violation(z) for side in self.sides])

    def contains(self, z, slack=1e-9):
        z = np.asarray(z, dtype=complex)
        inside = np.all(self.side_violations(z) <= slack, axis=0)
        inside &= np.abs(z) < 1.0

        if inside.ndim == 0:
            return bool(inside)

        return inside

    def to_json(self):
        return {
            "vertex_radius": self.vertex_radius,
            "generators": [g.to_json() for g in self.generators],
            "sides": [
                {
                    "center_re": s.center.real,
                    "center_im": s.center.imag,
                    "radius": s.radius,
                    "start_re": s.start.real,
                    "start_im": s.start.imag,
                    "end_re": s.end.real,
                    "end_im": s.end.imag,
                }
                for s in self.sides
            ],
        }


@lru_cache(maxsize=None)
def build_bolza_domain():
    eighth = math.pi / 8.0

    # cosh R = cot A cot B in the right triangle of the 16-fold subdivision.
    circumradius = math.acosh(1.0 / math.tan(eighth) ** 2)
    vertex_radius = math.tanh(circumradius / 2.0)

    inradius = math.acosh(1.0 / math.tan(eighth))
    midpoint_radius = math.tanh(inradius / 2.0)
    center_distance = (midpoint_radius + 1.0 / midpoint_radius) / 2.0
    side_radius = (1.0 / midpoint_radius - midpoint_radius) / 2.0

    sqrt2 = math.sqrt(2.0)
    t0 = DiskIsometry(complex(1.0 + sqrt2), complex(math.sqrt(2.0 + 2.0 * sqrt2)))

    generators = []
    sides = []

    for k in range(8):
        rotate = DiskIsometry.rotation(k * math.pi / 4.0)
        generators.append(rotate.compose(t0).compose(rotate.inverse()))

        facing = math.pi + k * math.pi / 4.0
        sides.append(
            GeodesicSide(
                center=center_distance * complex(math.cos(facing), math.sin(facing)),
                radius=side_radius,
                start=vertex_radius * complex(
                    math.cos(facing - eighth), math.sin(facing - eighth)
                ),
                end=vertex_radius * complex(
                    math.cos(facing + eighth), math.sin(facing + eighth)
                ),
            )
        )

    return BolzaDomain(
        vertex_radius=vertex_radius,
        generators=tuple(generators),
        sides=tuple(sides),
    )


# ----------------------------------------------------------------------
# Domain measurements
# ----------------------------------------------------------------------

def corner_angle(domain, k):
    """Interior angle at corner k, where side k-1 ends and side k starts."""
    corner = domain.sides[k].start
    n1 = corner - domain.sides[k].center
    n2 = corner - domain.sides[(k - 1) % 8].center
    cosine = (n1 * n2.conjugate()).real / (abs(n1) * abs(n2))
    return math.pi - math.acos(max(-1.0, min(1.0, cosine)))


def side_pairing_error(domain, k):
    """Distance between T_k(side k) and side k+4, endpoints and midpoint."""
    side = domain.sides[k]
    partner = domain.sides[(k + 4) % 8]
    generator = domain.generators[k]

    errors = [
        abs(generator.apply(side.start) - partner.end),
        abs(generator.apply(side.end) - partner.start),
        abs(
            generator.apply(hyperbolic_midpoint(side.start, side.end))
            - hyperbolic_midpoint(partner.start, partner.end)
        ),
    ]
    return max(errors)


def side_radius_at(domain, k, angles):
    """Euclidean radius where the ray at each angle meets side k."""
    side = domain.sides[k]
    distance = abs(side.center)
    psi = np.asarray(angles) - math.atan2(side.center.imag, side.center.real)
    projection = distance * np.cos(psi)
    # |c|^2 - rho^2 = 1 for circles orthogonal to the unit circle.
    return projection - np.sqrt(projection ** 2 - 1.0)


def domain_area(domain, order=20, pieces=8):
    """Hyperbolic area of the octagon by Gauss-Legendre in the angle."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    area = 0.0

    for k, side in enumerate(domain.sides):
        first = math.atan2(side.start.imag, side.start.real)
        span = math.pi / 4.0 / pieces

        for piece in range(pieces):
            lo = first + piece * span
            angles = lo + (nodes + 1.0) * span / 2.0
            rho = side_radius_at(domain, k, angles)
            # integral of 4r/(1-r^2)^2 dr from 0 to rho
            radial = 2.0 * rho ** 2 / (1.0 - rho ** 2)
            area += float(np.sum(weights * radial)) * span / 2.0

    return area


# ----------------------------------------------------------------------
# Group structure
# ----------------------------------------------------------------------

def _normalized_arrays(a, b):
    flip = (a.real < 0.0) | ((a.real == 0.0) & (a.imag < 0.0))
    a = np.where(flip, -a, a)
    b = np.where(flip, -b, b)
    keys = np.column_stack([a.real, a.imag, b.real, b.imag])
    return a, b, keys


def _fresh_rows(keys, seen_tree, tol):
    """Indices of rows unique among themselves and absent from seen_tree."""
    if len(keys) == 0:
        return np.zeros(0, dtype=int)

    drop = np.zeros(len(keys), dtype=bool)
    pairs = cKDTree(keys).query_pairs(tol, output_type="ndarray")

    if len(pairs):
        drop[np.maximum(pairs[:, 0], pairs[:, 1])] = True

    if seen_tree is not None:
        distance, _ = seen_tree.query(keys, distance_upper_bound=tol)
        drop |= np.isfinite(distance)

    return np.flatnonzero(~drop)


def _right_multiply(a, b, gen_a, gen_b):
    new_a = a[:, None] * gen_a[None, :] + b[:, None] * np.conj(gen_b)[None, :]
    new_b = a[:, None] * gen_b[None, :] + b[:, None] * np.conj(gen_a)[None, :]
    return new_a.ravel(), new_b.ravel()


def _as_isometries(a, b):
    return [DiskIsometry(complex(x), complex(y)) for x, y in zip(a, b)]


def _breadth_first(domain, keep_layer, max_layers, tol=GROUP_TOLERANCE):
    gen_a = np.array([g.a for g in domain.generators])
    gen_b = np.array([g.b for g in domain.generators])

    frontier_a = np.array([1.0 + 0.0j])
    frontier_b = np.array([0.0j])
    _, _, seen_keys = _normalized_arrays(frontier_a, frontier_b)
    layers = [(frontier_a, frontier_b, seen_keys)]

    for _ in range(max_layers):
        cand_a, cand_b = _right_multiply(frontier_a, frontier_b, gen_a, gen_b)
        cand_a, cand_b, cand_keys = _normalized_arrays(cand_a, cand_b)

        mask = keep_layer(cand_a, cand_b)
        cand_a, cand_b, cand_keys = cand_a[mask], cand_b[mask], cand_keys[mask]

        fresh = _fresh_rows(cand_keys, cKDTree(seen_keys), tol)

        if len(fresh) == 0:
            break

        frontier_a, frontier_b = cand_a[fresh], cand_b[fresh]
        layers.append((frontier_a, frontier_b, cand_keys[fresh]))
        seen_keys = np.vstack([seen_keys, cand_keys[fresh]])

    return layers


def enumerate_group(domain, max_word_length):
    """Distinct elements of word length <= max_word_length, identity first."""
    if max_word_length < 0:
        raise ValueError("max_word_length must be nonnegative")

    layers = _breadth_first(
        domain,
        keep_layer=lambda a, b: np.ones(len(a), dtype=bool),
        max_layers=max_word_length,
    )

    elements = []

    for a, b, keys in layers:
        order = np.lexsort(keys.T[::-1])
        elements.extend(_as_isometries(a[order], b[order]))

    return elements


def domain_dump(domain, max_word_length=2):
    """Domain and group elements up to max_word_length as JSON-ready data."""
    elements = enumerate_group(domain, max_word_length)
    return {
        "domain": domain.to_json(),
        "max_word_length": max_word_length,
        "group": [g.to_json() for g in elements],
    }


@lru_cache(maxsize=8)
def enumerate_ball(domain, radius):
    """Elements with d(0, g(0)) <= radius, sorted by displacement.

    A tile meeting the geodesic from 0 to g(0) has its centre within
    radius + circumradius of 0, so pruning there loses no element.
    """
    prune = radius + domain.circumradius + 1e-9

    def within_prune(a, b):
        return 2.0 * np.log(np.abs(a) + np.abs(b)) <= prune

    layers = _breadth_first(domain, keep_layer=within_prune, max_layers=10_000)

    a = np.concatenate([layer[0] for layer in layers])
    b = np.concatenate([layer[1] for layer in layers])
    keys = np.concatenate([layer[2] for layer in layers])
    displacement = 2.0 * np.log(np.abs(a) + np.abs(b))

    inside = displacement <= radius + 1e-12
    a, b, keys, displacement = a[inside], b[inside], keys[inside], displacement[inside]

    order = np.lexsort(tuple(keys.T[::-1]) + (np.round(displacement, 9),))
    logger.debug(f"QDIFF: ball of radius {radius} holds {len(order)} elements")

    return tuple(_as_isometries(a[order], b[order]))


def _corner_index(domain, z, tol=1e-8):
    distances = [abs(z - c) for c in domain.corners]
    index = int(np.argmin(distances))

    if distances[index] > tol:
        raise ConstructionError(f"Image {z} is not a corner of the octagon")

    return index


def surface_relation(domain):
    """Generator indices of the corner-cycle relation, first applied first."""
    word = []
    corner, side = 0, 0

    for _ in range(4 * len(domain.sides)):
        word.append(side)
        image = _corner_index(domain, domain.generators[side].apply(domain.corners[corner]))
        arrived = (side + 4) % 8
        meeting = {image, (image - 1) % 8}

        if arrived not in meeting:
            raise ConstructionError("Side pairing does not respect corners")

        side = (meeting - {arrived}).pop()
        corner = image

        if corner == 0 and side == 0:
            return word

    raise ConstructionError("Corner cycle did not close")


def relation_product(domain):
    product = DiskIsometry.identity()

    for index in surface_relation(domain):
        product = domain.generators[index].compose(product)

    return product


def reduce_to_domain(z, domain):
    """Return (z', g) with z' in the closed octagon and g(z) = z'."""
    z = complex(z)
    check_in_disk(np.array(z))

    element = DiskIsometry.identity()
    limit = int(REDUCTION_FACTOR * (1.0 + hyperbolic_distance(0.0, z)))

    for _ in range(limit):
        violations = domain.side_violations(z)
        k = int(np.argmax(violations))

        if violations[k] <= 0.0:
            return z, element

        generator = domain.generators[k]
        z = generator.apply(z)
        element = generator.compose(element)

    raise ConstructionError(f"Reduction did not terminate after {limit} steps")
