import math

from hyperbolic_core import (
    SURFACE_AREA,
    corner_angle,
    domain_area,
    relation_product,
    side_pairing_error,
)


def check_corner_angles(report, domain, tol=1e-10):
    worst = max(abs(corner_angle(domain, k) - math.pi / 4.0) for k in range(8))
    ok = worst <= tol

    report(f"Corner angles equal pi/4 (worst deviation {worst:.2e})", ok)
    return ok


def check_area(report, domain, order=20, tol=1e-6):
    area = domain_area(domain, order=order)
    ok = abs(area - SURFACE_AREA) <= tol

    report(f"Octagon area {area:.10f} against 4*pi", ok)
    return ok


def check_side_pairings(report, domain, tol=1e-10):
    worst = max(side_pairing_error(domain, k) for k in range(4))
    ok = worst <= tol

    report(f"T_k maps side k onto side k+4 (worst error {worst:.2e})", ok)
    return ok


def check_generators(report, domain, tol=1e-12):
    worst = max(abs(g.determinant() - 1.0) for g in domain.generators)
    ok = worst <= tol

    report(f"Generators preserve the disk (|a|^2-|b|^2 error {worst:.2e})", ok)
    return ok


def check_relation(report, domain, tol=1e-8):
    product = relation_product(domain)
    error = min(abs(product.a - 1.0), abs(product.a + 1.0)) + abs(product.b)
    ok = error <= tol

    report(f"Surface group relation closes (error {error:.2e})", ok)
    return ok


def run_domain_selftest(report, domain):
    """Run every domain check, reporting each; True when all pass."""
    results = [
        check_generators(report, domain),
        check_corner_angles(report, domain),
        check_side_pairings(report, domain),
        check_relation(report, domain),
        check_area(report, domain),
    ]
    return all(results)
