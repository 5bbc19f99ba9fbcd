"""
Geometry of the minimal immersion attached to a solution u: principal and
intrinsic curvature, the almost-Fuchsian test, the metric on the normal
bundle S x R and the blow-up trend along the unstable branch.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from gauss_solver import weight_values, branch_solution_at
from hyperbolic_core import SURFACE_AREA, metric_density

logger = logging.getLogger("gauss_kit")


@dataclass(frozen=True, eq=False)
class CurvatureReport:
    t: float
    lam: np.ndarray
    K: np.ndarray
    lambda_max: float
    almost_fuchsian: bool
    gauss_bonnet_defect: float
    integrated_curvature: float
    frame_defined: np.ndarray

    def summary(self):
        return {
            "t": self.t,
            "lambda_max": self.lambda_max,
            "almost_fuchsian": self.almost_fuchsian,
            "gauss_bonnet_defect": self.gauss_bonnet_defect,
            "integrated_curvature": self.integrated_curvature,
            "k_min": float(np.min(self.K)),
            "degeneration_radius": degeneration_radius(self),
        }


def principal_curvature(solution, w0):
    return solution.t * np.sqrt(weight_values(w0)) * np.exp(-2.0 * solution.u)


def curvature_report(solution, mesh, w0):
    lam = principal_curvature(solution, w0)
    K = -1.0 - lam ** 2
    conformal = np.exp(2.0 * solution.u)
    lambda_max = float(np.max(lam))
    integrated = mesh.integrate((1.0 + lam ** 2) * conformal)

    report = CurvatureReport(
        t=solution.t,
        lam=lam,
        K=K,
        lambda_max=lambda_max,
        almost_fuchsian=lambda_max < 1.0,
        gauss_bonnet_defect=abs(mesh.integrate(K * conformal) + SURFACE_AREA),
        integrated_curvature=integrated,
        frame_defined=lam > 0.0,
    )
    logger.debug(
        f"GEOM: t={solution.t:.6g} lambda_max={lambda_max:.6f} "
        f"Gauss-Bonnet defect {report.gauss_bonnet_defect:.2e}"
    )
    return report


def degeneration_radius(report):
    """Smallest normal distance at which the normal-bundle metric degenerates."""
    if report.lambda_max < 1.0:
        return math.inf

    beyond = report.lam[report.lam > 1.0]

    if beyond.size == 0:
        return math.inf

    return float(np.min(np.arctanh(1.0 / beyond)))


def degeneration_radius_bisection(report, r_max=50.0):
    """Same radius, found by bisection on det of the bracket factor."""
    if report.lambda_max <= 1.0:
        return math.inf

    lam = report.lambda_max

    def determinant(r):
        return math.cosh(r) ** 2 - lam ** 2 * math.sinh(r) ** 2

    return bisect(determinant, 0.0, r_max, xtol=1e-14)


# ----------------------------------------------------------------------
# Normal-bundle metric
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AmbientMetricSample:
    z: complex
    r: float
    g: np.ndarray
    degenerate: bool
    vertex: int = -1

    def as_row(self):
        return {
            "z_re": self.z.real,
            "z_im": self.z.imag,
            "r": self.r,
            "g11": float(self.g[0, 0]),
            "g12": float(self.g[0, 1]),
            "g22": float(self.g[1, 1]),
            "degenerate": self.degenerate,
        }


def shape_frame(phase=None):
    """Traceless symmetric unit frame of Re(alpha dz^2)."""
    if phase is None:
        return np.array([[1.0, 0.0], [0.0, -1.0]])

    c, s = math.cos(phase), math.sin(phase)
    return np.array([[c, -s], [-s, -c]])


def ambient_metric(solution, mesh, w0, vertex, r, phase=None):
    """g(z, r) = e^{2v} [cosh r I + sinh r e^{-2v} A(z)]^2 at a canonical vertex."""
    z = complex(mesh.canonical_positions[vertex])
    u = float(solution.u[vertex])
    lam = float(principal_curvature(solution, w0)[vertex])
    conformal = math.exp(2.0 * u) * metric_density(z)

    if phase is None:
        phase = getattr(w0, "phase", None)

    angle = None if phase is None else float(phase[vertex])
    bracket = math.cosh(r) * np.eye(2) + math.sinh(r) * lam * shape_frame(angle)
    degenerate = math.cosh(r) - lam * abs(math.sinh(r)) <= 0.0

    return AmbientMetricSample(z, float(r), conformal * bracket @ bracket, degenerate, vertex)


def ambient_metric_profile(solution, mesh, w0, vertex, radii):
    return [ambient_metric(solution, mesh, w0, vertex, r) for r in radii]


def ambient_ode_residual(solution, mesh, w0, vertex, r, dr=1e-3):
    """Norm of 1/2 g'' - 1/4 g' g^{-1} g' - g, relative to e^{2v}, by central differences."""
    g_minus = ambient_metric(solution, mesh, w0, vertex, r - dr).g
    g_mid = ambient_metric(solution, mesh, w0, vertex, r).g
    g_plus = ambient_metric(solution, mesh, w0, vertex, r + dr).g

    first = (g_plus - g_minus) / (2.0 * dr)
    second = (g_plus - 2.0 * g_mid + g_minus) / (dr * dr)
    defect = 0.5 * second - 0.25 * first @ np.linalg.solve(g_mid, first) - g_mid

    scale = math.exp(2.0 * solution.u[vertex]) * metric_density(mesh.canonical_positions[vertex])
    return float(np.max(np.abs(defect)) / scale)


# ----------------------------------------------------------------------
# Blow-up trend
# ----------------------------------------------------------------------

def blowup_trend(branch, t_sequence, mesh, w0, control=None):
    t_sequence = [float(t) for t in t_sequence]

    if any(b >= a for a, b in zip(t_sequence, t_sequence[1:])):
        raise ValueError("Blow-up trend needs a strictly decreasing t sequence")

    rows = []

    for t in t_sequence:
        for side in ("unstable", "stable"):
            try:
                solution = branch_solution_at(branch, t, mesh, w0, side, control)
            except ValueError:
                if side == "unstable":
                    raise
                continue

            report = curvature_report(solution, mesh, w0)
            u_norm = float(np.max(np.abs(solution.u)))
            rows.append({
                "t": t,
                "side": side,
                "u_norm": u_norm,
                "lambda_max": report.lambda_max,
                "k_max": float(np.max(np.abs(report.K))),
                "stabilized": u_norm + math.log(t),
                "converged": solution.converged,
            })

    unstable = [row for row in rows if row["side"] == "unstable"]
    u_increasing = all(b["u_norm"] > a["u_norm"] for a, b in zip(unstable, unstable[1:]))
    k_increasing = all(b["k_max"] > a["k_max"] for a, b in zip(unstable, unstable[1:]))

    if not (u_increasing and k_increasing):
        logger.warning("GEOM: blow-up trend is not monotone on the unstable branch")

    return {
        "rows": rows,
        "u_norm_increasing": u_increasing,
        "k_max_increasing": k_increasing,
    }
