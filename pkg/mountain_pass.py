"""
Second (unstable) solution of the Gauss equation as a mountain-pass critical
point of the truncated functional

    E(u) = 1/2 int (|grad u|^2 + V u^2) - int (F1(u) + V F2(u)),   V = t^2 w0,

computed by relaxing a whole path of fields between the stable solution and a
low constant. Steps use the positive part of the second variation as a
preconditioner; convergence is measured in the V-inner product
<f, g>_V = int (grad f . grad g + V f g). The highest node is polished with
Newton.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq, minimize_scalar

from gauss_errors import GaussKitError, MountainPassError
from gauss_solver import DUPLICATE_TOLERANCE, weight_values, newton_solve

logger = logging.getLogger("gauss_kit")

CLAMP_LEVEL = -350.0
RIDGE_MARGIN = 1e-12
ARMIJO = 1e-4
STOP_FRACTION = 0.1
NEGATIVITY_MARGIN = 1e-10

_NODES, _WEIGHTS = leggauss(64)
# Gauss-Legendre on [0, 1]
_UNIT_NODES = 0.5 * (_NODES + 1.0)
_UNIT_WEIGHTS = 0.5 * _WEIGHTS


def _unit_integral(f):
    return float(np.sum(_UNIT_WEIGHTS * f(_UNIT_NODES)))


def _solve_increasing(g, start=0.0, step=1.0):
    """Root of an increasing scalar function by bracket expansion and Brent."""
    low = high = start

    if g(start) > 0.0:
        while g(low) > 0.0:
            high, low = low, low - step
            step *= 2.0
    else:
        while g(high) < 0.0:
            low, high = high, high + step
            step *= 2.0

    return brentq(g, low, high, xtol=1e-14)


@dataclass(frozen=True, eq=False)
class SmoothingBridge:
    """Joins of the truncated nonlinearities on 0 < s < 1.

    f1(s) = -s exp(P(s)) with cubic P, f2(s) = -(1 - s)^2 exp(-s + d s^2).
    F1, F2 are then C^2 at s = 0 and s = 1 and f1 < 0, f2 <= 0 on (0, 1).
    """

    theta: float
    p: tuple
    d: float

    def f1(self, s):
        c0, c1, c2, c3 = self.p
        return -s * np.exp(c0 + s * (c1 + s * (c2 + s * c3)))

    def f2(self, s):
        return -((1.0 - s) ** 2) * np.exp(-s + self.d * s * s)

    def antiderivative(self, f, s):
        """int_0^s f for an array of s in [0, 1]."""
        s = np.asarray(s, dtype=float)
        nodes = s[..., None] * _UNIT_NODES
        return s * np.sum(_UNIT_WEIGHTS * f(nodes), axis=-1)


def build_bridge(theta=3.0):
    if theta <= 2.0:
        raise ValueError("Truncation exponent must exceed 2")

    log_ratio = math.log(theta / 2.0)

    def coefficients(c3):
        c2 = theta - 2.0 - log_ratio - 2.0 * c3
        c1 = 2.0 * log_ratio - theta + 2.0 + c3
        return (math.log(2.0), c1, c2, c3)

    def f1_mass(c3):
        c0, c1, c2, _ = coefficients(c3)
        return _unit_integral(lambda s: s * np.exp(c0 + s * (c1 + s * (c2 + s * c3)))) - 0.5

    def f2_mass(d):
        return _unit_integral(lambda s: (1.0 - s) ** 2 * np.exp(-s + d * s * s)) - 0.5

    c3 = _solve_increasing(f1_mass)
    d = _solve_increasing(f2_mass)
    return SmoothingBridge(theta, coefficients(c3), d)


@dataclass(frozen=True, eq=False)
class TruncatedFunctional:
    mesh: object
    v: np.ndarray
    bridge: SmoothingBridge

    @property
    def theta(self):
        return self.bridge.theta

    @cached_property
    def v_mass(self):
        return self.mesh.lumped_mass * self.v

    @cached_property
    def _v_factor(self):
        if not np.any(self.v > 0.0):
            raise GaussKitError("V vanishes identically; the V-inner product is degenerate")

        matrix = (self.mesh.stiffness + sp.diags(self.v_mass)).tocsc()
        return spla.splu(matrix)

    def preconditioner(self, u):
        """K + M(2V + 2e^{2s} + 2V e^{-2s}) at s = min(u, 0), with its factor.

        Positive part of the second variation for u <= 0.
        """
        s = np.minimum(np.asarray(u, dtype=float), 0.0)
        p = 2.0 * self.v + 2.0 * np.exp(2.0 * s) + 2.0 * self.v * np.exp(-2.0 * s)
        matrix = (self.mesh.stiffness + sp.diags(self.mesh.lumped_mass * p)).tocsc()
        return matrix, spla.splu(matrix)

    # ------------------------------------------------------------------
    # Truncated nonlinearities
    # ------------------------------------------------------------------

    def F1(self, s):
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        low, mid, high = s <= 0.0, (s > 0.0) & (s < 1.0), s >= 1.0
        out[low] = s[low] - 0.5 * np.exp(2.0 * s[low])
        out[mid] = -0.5 + self.bridge.antiderivative(self.bridge.f1, s[mid])
        out[high] = -s[high] ** self.theta
        return out

    def f1(self, s):
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        low, mid, high = s <= 0.0, (s > 0.0) & (s < 1.0), s >= 1.0
        out[low] = 1.0 - np.exp(2.0 * s[low])
        out[mid] = self.bridge.f1(s[mid])
        out[high] = -self.theta * s[high] ** (self.theta - 1.0)
        return out

    def F2(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        low, mid = s <= 0.0, (s > 0.0) & (s < 1.0)
        out[low] = 0.5 * (s[low] ** 2 + np.exp(-2.0 * s[low]))
        out[mid] = 0.5 + self.bridge.antiderivative(self.bridge.f2, s[mid])
        return out

    def f2(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        low, mid = s <= 0.0, (s > 0.0) & (s < 1.0)
        out[low] = s[low] - np.exp(-2.0 * s[low])
        out[mid] = self.bridge.f2(s[mid])
        return out

    def clamp(self, u):
        u = np.asarray(u, dtype=float)

        if np.any(u < CLAMP_LEVEL):
            logger.warning(f"MPASS: field below {CLAMP_LEVEL} clamped; upstream divergence")
            return np.maximum(u, CLAMP_LEVEL)

        return u


def truncated_functional(mesh, w0, t, theta=3.0):
    v = t * t * weight_values(w0)
    return TruncatedFunctional(mesh, v, build_bridge(theta))


def eval_functional(u, tf, mesh=None):
    mesh = mesh or tf.mesh
    u = tf.clamp(u)

    if not np.all(np.isfinite(u)):
        raise ValueError("Functional needs a finite field")

    quadratic = 0.5 * (u @ (mesh.stiffness @ u) + u @ (tf.v_mass * u))
    return float(quadratic - mesh.lumped_mass @ (tf.F1(u) + tf.v * tf.F2(u)))


def euclidean_gradient(u, tf, mesh=None):
    mesh = mesh or tf.mesh
    u = tf.clamp(u)
    return mesh.stiffness @ u + tf.v_mass * u - mesh.lumped_mass * (tf.f1(u) + tf.v * tf.f2(u))


def gradient_v(u, tf, mesh=None):
    """Riesz representative of dE(u) in the V-inner product."""
    return tf._v_factor.solve(euclidean_gradient(u, tf, mesh))


def v_inner(f, g, tf):
    return float(f @ (tf.mesh.stiffness @ g) + f @ (tf.v_mass * g))


def v_norm(f, tf):
    return math.sqrt(max(v_inner(f, f, tf), 0.0))


# ----------------------------------------------------------------------
# Minimax over paths
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class MountainPassSettings:
    path_nodes: int = 21
    tol: float = 1e-3
    max_iterations: int = 500
    max_retries: int = 3
    energy_gap: float = 1.0


def low_energy_endpoint(tf, stable, stable_energy, gap=1.0):
    """Constant field below the stable solution with E at least gap under it.

    Constants are scanned downward from below min(stable.u) until E is both
    below the threshold and decreasing; the returned level is one step past
    that, so the path ends beyond the lower branch.
    """
    n = tf.mesh.canonical_count

    def energy(c):
        return eval_functional(np.full(n, c), tf)

    c = math.floor(float(np.min(stable.u))) - 1.0
    previous = energy(c)

    while c - 1.0 >= CLAMP_LEVEL:
        c -= 1.0
        current = energy(c)

        if current < stable_energy - gap and current < previous:
            return np.full(n, max(c - 1.0, CLAMP_LEVEL))

        previous = current

    raise MountainPassError("No low-energy endpoint found for the path")


class PathState:
    """Polyline path from the stable solution to a low-energy field."""

    def __init__(self, start, end, nodes, tf):
        self.tf = tf
        weights = np.linspace(0.0, 1.0, nodes)
        self.nodes = [(1.0 - s) * start + s * end for s in weights]
        self.energies = [eval_functional(node, tf) for node in self.nodes]

    @property
    def max_index(self):
        return 1 + int(np.argmax(self.energies[1:-1]))

    def set_node(self, i, field, energy=None):
        self.nodes[i] = field
        self.energies[i] = eval_functional(field, self.tf) if energy is None else energy

    def place_on_crest(self, i):
        """Move node i to the energy maximum of the polyline through its neighbours."""
        left, centre, right = self.nodes[i - 1], self.nodes[i], self.nodes[i + 1]

        def point(tau):
            if tau < 0.0:
                return centre + tau * (centre - left)
            return centre + tau * (right - centre)

        result = minimize_scalar(
            lambda tau: -eval_functional(point(tau), self.tf),
            bounds=(-1.0, 1.0),
            method="bounded",
            options={"xatol": 1e-9},
        )

        if -result.fun > self.energies[i]:
            self.set_node(i, point(result.x), -result.fun)

    def respace(self, fixed):
        """Equal V-arclength spacing on both sides of the fixed node."""
        self._respace_range(0, fixed)
        self._respace_range(fixed, len(self.nodes) - 1)

    def _respace_range(self, first, last):
        if last - first < 2:
            return

        segment = self.nodes[first:last + 1]
        lengths = [v_norm(b - a, self.tf) for a, b in zip(segment, segment[1:])]
        cumulative = np.concatenate([[0.0], np.cumsum(lengths)])

        if cumulative[-1] <= 0.0:
            return

        targets = np.linspace(0.0, cumulative[-1], len(segment))
        placed = []

        for target in targets[1:-1]:
            j = min(int(np.searchsorted(cumulative, target, side="right")) - 1, len(lengths) - 1)
            fraction = 0.0 if lengths[j] == 0.0 else (target - cumulative[j]) / lengths[j]
            placed.append((1.0 - fraction) * segment[j] + fraction * segment[j + 1])

        for offset, field in enumerate(placed, start=first + 1):
            self.set_node(offset, field)


def _descend(path, i, tf):
    """Preconditioned Armijo step on node i, P-orthogonal to the path tangent."""
    node = path.nodes[i]
    gradient = euclidean_gradient(node, tf)
    matrix, factor = tf.preconditioner(node)
    direction = -factor.solve(gradient)
    tangent = path.nodes[i + 1] - path.nodes[i - 1]
    tangent_norm = float(tangent @ (matrix @ tangent))

    if tangent_norm > 0.0:
        direction = direction + (float(tangent @ gradient) / tangent_norm) * tangent

    slope = float(gradient @ direction)

    if not slope < 0.0:
        return False

    step = 1.0

    for _ in range(40):
        trial = node + step * direction
        energy = eval_functional(trial, tf)

        if energy <= path.energies[i] + ARMIJO * step * slope:
            path.set_node(i, trial, energy)
            return True

        step *= 0.5

    return False


def _run_path(stable, endpoint, tf, settings, nodes, trace):
    """Relaxes every interior node; returns the highest node once it is critical."""
    path = PathState(stable.u, endpoint, nodes, tf)
    stable_energy = path.energies[0]
    scale = None

    for iteration in range(settings.max_iterations):
        i = path.max_index
        path.place_on_crest(i)

        if path.energies[i] <= stable_energy + RIDGE_MARGIN:
            return None

        grad_norm = v_norm(gradient_v(path.nodes[i], tf), tf)

        if scale is None:
            scale = max(1.0, grad_norm)

        if trace is not None:
            trace.append({
                "iteration": len(trace),
                "max_node_index": i,
                "max_energy": path.energies[i],
                "grad_v_norm": grad_norm,
            })

        if grad_norm <= STOP_FRACTION * settings.tol * scale:
            logger.debug(f"MPASS: ridge converged after {iteration} iterations")
            break

        moved = [_descend(path, j, tf) for j in range(1, len(path.nodes) - 1)]

        if not any(moved):
            logger.debug(f"MPASS: path relaxation stalled at node {i}")
            break

        path.respace(path.max_index)

    return path.nodes[path.max_index]


def _acceptable(solution, stable, stable_energy, tf):
    if not solution.converged:
        return False

    if np.max(np.abs(solution.u - stable.u)) <= DUPLICATE_TOLERANCE:
        return False

    if not (solution.mu1 < 0.0 or abs(solution.mu1) <= 1e-6):
        return False

    if solution.u_max > -NEGATIVITY_MARGIN:
        logger.debug(f"MPASS: candidate reaches u={solution.u_max:.3e}")
        return False

    return eval_functional(solution.u, tf) >= stable_energy


def mountain_pass_solve(stable, tf, mesh=None, settings=None, w0=None, trace=None,
                        newton_tol=1e-10, max_iter=50):
    """Minimax solution above the stable solution at the same t."""
    mesh = mesh or tf.mesh
    settings = settings or MountainPassSettings()

    if not stable.converged or not stable.mu1 > 0.0:
        raise MountainPassError("Mountain pass needs a converged stable solution")

    if w0 is None:
        w0 = tf.v / (stable.t * stable.t)

    stable_energy = eval_functional(stable.u, tf)
    endpoint = low_energy_endpoint(tf, stable, stable_energy, settings.energy_gap)
    nodes = settings.path_nodes

    for attempt in range(settings.max_retries + 1):
        ridge = _run_path(stable, endpoint, tf, settings, nodes, trace)

        if ridge is not None:
            solution = newton_solve(ridge, stable.t, mesh, w0, newton_tol, max_iter)

            if _acceptable(solution, stable, stable_energy, tf):
                logger.info(
                    f"MPASS: t={stable.t:.6g} solution with mu1={solution.mu1:.6f}, "
                    f"energy {eval_functional(solution.u, tf):.8f} over {stable_energy:.8f}"
                )
                return solution

        logger.info(f"MPASS: attempt {attempt + 1} with {nodes} nodes failed; doubling")
        nodes = 2 * nodes - 1

    raise MountainPassError(f"No separating ridge found at t={stable.t:.8g}")
