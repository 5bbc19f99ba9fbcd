"""
Holomorphic quadratic differentials on the Bolza surface as truncated
relative Poincare series, and the weight field w0 = |alpha|^2 / g^2 that
enters the Gauss equation.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from gauss_errors import GaussKitError
from hyperbolic_core import check_in_disk, enumerate_ball, metric_density

logger = logging.getLogger("gauss_kit")

DEFAULT_DEPTH = 12.0
PAIRING_WARNING = 1e-3
CHUNK_SIZE = 64


@dataclass(frozen=True, eq=False)
class QuadraticDifferential:
    group_elements: tuple
    seed_exponent: int
    truncation_depth: float
    scale: complex = 1.0

    @cached_property
    def _coefficients(self):
        a = np.array([g.a for g in self.group_elements], dtype=complex)
        b = np.array([g.b for g in self.group_elements], dtype=complex)
        return a, b

    def scaled(self, factor):
        return QuadraticDifferential(
            self.group_elements,
            self.seed_exponent,
            self.truncation_depth,
            self.scale * factor,
        )

    def provenance(self):
        return {
            "kind": "poincare",
            "seed_exponent": self.seed_exponent,
            "truncation_depth": self.truncation_depth,
            "elements": len(self.group_elements),
        }


def build_quadratic_differential(domain, seed_exponent=0, truncation_depth=DEFAULT_DEPTH):
    """Poincare series of the seed z**m over the ball of the given radius.

    Odd seeds are refused: conjugation by the rotation through pi/4 maps the
    series of z**m to (-1)**m times itself, so odd seeds sum to zero.
    """
    if seed_exponent < 0:
        raise ValueError("Seed exponent must be nonnegative")

    if seed_exponent % 2 == 1:
        raise ValueError(
            f"Seed exponent {seed_exponent} is odd and gives the zero differential"
        )

    if truncation_depth < 0:
        raise ValueError("Truncation depth must be nonnegative")

    elements = enumerate_ball(domain, float(truncation_depth))
    logger.info(
        f"QDIFF: seed z^{seed_exponent}, depth {truncation_depth}, "
        f"{len(elements)} group elements"
    )
    return QuadraticDifferential(elements, seed_exponent, float(truncation_depth))


def evaluate_qd(qd, z):
    if not qd.group_elements:
        raise GaussKitError("Poincare series over an empty group set")

    z = np.asarray(z, dtype=complex)
    check_in_disk(z)

    scalar = z.ndim == 0
    points = np.atleast_1d(z).ravel()
    a, b = qd._coefficients
    m = qd.seed_exponent
    values = np.empty(points.shape, dtype=complex)

    for start in range(0, len(points), CHUNK_SIZE):
        chunk = points[start:start + CHUNK_SIZE]
        denominator = np.conj(b)[:, None] * chunk[None, :] + np.conj(a)[:, None]
        image = (a[:, None] * chunk[None, :] + b[:, None]) / denominator
        # (gamma'(z))^2 = denominator^-4
        terms = image ** m / denominator ** 4
        values[start:start + CHUNK_SIZE] = terms.sum(axis=0)

    values *= qd.scale

    if scalar:
        return complex(values[0])

    return values.reshape(z.shape)


def automorphy_residual(qd, domain, points):
    """max |alpha(T z) T'(z)^2 - alpha(z)| over generators and sample points."""
    points = np.asarray(points, dtype=complex)
    base = evaluate_qd(qd, points)
    worst = 0.0

    for generator in domain.generators:
        for g in (generator, generator.inverse()):
            image = g.apply(points)
            pulled = evaluate_qd(qd, image) * g.derivative(points) ** 2
            worst = max(worst, float(np.max(np.abs(pulled - base))))

    return worst


# ----------------------------------------------------------------------
# Weight fields
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WeightField:
    values: np.ndarray
    provenance: dict
    mesh_hash: str = ""
    phase: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)

        if np.any(values < 0.0) or not np.all(np.isfinite(values)):
            raise ValueError("Weight values must be finite and nonnegative")

    @property
    def is_zero(self):
        return not np.any(self.values > 0.0)

    def scaled(self, factor):
        """Weight of factor * alpha."""
        factor = complex(factor)
        phase = None

        if self.phase is not None:
            phase = self.phase + np.angle(factor)

        provenance = dict(self.provenance)
        provenance["scale"] = provenance.get("scale", 1.0) * abs(factor)
        return WeightField(self.values * abs(factor) ** 2, provenance, self.mesh_hash, phase)


def weight_field(qd, mesh):
    alpha = evaluate_qd(qd, mesh.vertices)
    disk_values = np.abs(alpha) ** 2 / metric_density(mesh.vertices) ** 2

    n = mesh.canonical_count
    high = np.full(n, -np.inf)
    low = np.full(n, np.inf)
    np.maximum.at(high, mesh.identify, disk_values)
    np.minimum.at(low, mesh.identify, disk_values)
    discrepancy = float(np.max(high - low))
    peak = float(np.max(disk_values))

    if discrepancy > PAIRING_WARNING * peak:
        logger.warning(
            f"QDIFF: paired vertices disagree by {discrepancy:.3e} "
            f"(max weight {peak:.3e}); truncation depth too shallow"
        )
    else:
        logger.debug(f"QDIFF: pairing discrepancy {discrepancy:.3e}")

    values = mesh.fold(disk_values)
    phase = np.angle(alpha[mesh.representatives])
    provenance = qd.provenance()
    provenance["scale"] = abs(qd.scale)
    provenance["pairing_discrepancy"] = discrepancy

    return WeightField(values, provenance, mesh.mesh_hash, phase)


def constant_weight(mesh, c=1.0):
    if c < 0.0:
        raise ValueError("Constant weight must be nonnegative")

    values = np.full(mesh.canonical_count, float(c))
    return WeightField(values, {"kind": "constant", "constant": float(c)}, mesh.mesh_hash)


def qd_norms(weight, mesh):
    """(Teichmuller norm, Weil-Petersson norm) by mesh quadrature."""
    teichmuller = mesh.integrate(np.sqrt(weight.values))
    weil_petersson = float(np.sqrt(mesh.integrate(weight.values)))
    return teichmuller, weil_petersson


def nonexistence_bound(weight, mesh):
    """t beyond which no solution exists: 4 pi / int sqrt(w0) dA."""
    integral = mesh.integrate(np.sqrt(weight.values))

    if integral <= 0.0:
        raise ValueError("Weight integrates to zero; no nonexistence bound")

    return 4.0 * np.pi / integral
