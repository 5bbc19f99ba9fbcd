"""
Newton solver for the Gauss equation

    Delta u + 1 - e^{2u} - t^2 w0 e^{-2u} = 0

on the Bolza surface, the spectrum of its linearisation, and pseudo-arclength
continuation of the solution curve from (u, t) = (0, 0) through its fold.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq
from scipy.sparse.linalg import MatrixRankWarning

from gauss_errors import ContinuationAbort, FoldProximityError, GaussKitError
from hyperbolic_core import SURFACE_AREA
from quad_diff import nonexistence_bound
from surface_mesh import smallest_eigenpairs

logger = logging.getLogger("gauss_kit")

DUPLICATE_TOLERANCE = 1e-6
DIVERGENCE_LIMIT = 1e8


@dataclass
class Solution:
    u: np.ndarray
    t: float
    residual_norm: float
    mu1: float
    converged: bool
    iterations: int = 0
    s: float = 0.0
    mu2: float = math.nan

    @property
    def u_min(self):
        return float(np.min(self.u))

    @property
    def u_max(self):
        return float(np.max(self.u))


@dataclass
class Branch:
    points: list = field(default_factory=list)
    fold_parameter: float = None
    fold_solution: Solution = None
    # points[:fold_index] precede the fold in arclength order
    fold_index: int = None

    @property
    def has_fold(self):
        return self.fold_solution is not None

    def stable_part(self):
        end = len(self.points) if self.fold_index is None else self.fold_index
        part = list(self.points[:end])

        if self.has_fold:
            part.append(self.fold_solution)

        return part

    def unstable_part(self):
        if not self.has_fold:
            return []

        return [self.fold_solution] + list(self.points[self.fold_index:])

    def secondary_branch_points(self):
        """Sign changes of mu2 between neighbouring points, placed linearly in s."""
        found = []

        for left, right in zip(self.points, self.points[1:]):
            if not (math.isfinite(left.mu2) and math.isfinite(right.mu2)):
                continue

            if left.mu2 * right.mu2 < 0.0:
                weight = left.mu2 / (left.mu2 - right.mu2)
                found.append({
                    "s": left.s + weight * (right.s - left.s),
                    "t": left.t + weight * (right.t - left.t),
                })

        return found


@dataclass(frozen=True)
class StepControl:
    natural_step: float = 0.01
    arclength_step: float = 0.02
    max_arclength_step: float = 0.5
    switch_mu1: float = 0.2
    t_min: float = 1e-3
    max_steps: int = 2000
    max_halvings: int = 8
    fold_tolerance: float = 1e-10
    newton_tol: float = 1e-10
    max_iter: int = 50
    fast_iterations: int = 4
    growth: float = 1.5


def weight_values(w0):
    return np.asarray(getattr(w0, "values", w0), dtype=float)


# ----------------------------------------------------------------------
# Nonlinear map and linearisation
# ----------------------------------------------------------------------

def _raw_residual(u, t, mesh, w0):
    with np.errstate(over="ignore", invalid="ignore"):
        return (
            -(mesh.stiffness @ u) / mesh.lumped_mass
            + 1.0
            - np.exp(2.0 * u)
            - t * t * w0 * np.exp(-2.0 * u)
        )


def residual(u, t, mesh, w0):
    u = np.asarray(u, dtype=float)
    r = _raw_residual(u, t, mesh, weight_values(w0))

    if not np.all(np.isfinite(r)):
        raise GaussKitError(f"Non-finite residual at t={t:.8g}")

    return r


def residual_norm(r, mesh):
    """Discrete L2 norm sqrt(sum_v M_v r_v^2)."""
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sqrt(mesh.lumped_mass @ (r * r)))


def potential(u, t, w0):
    """Zeroth-order coefficient 2 e^{2u} - 2 t^2 w0 e^{-2u} of L."""
    return 2.0 * np.exp(2.0 * u) - 2.0 * t * t * w0 * np.exp(-2.0 * u)


def linearized_operator(u, t, mesh, w0, consistent=False):
    """Pencil (A, M) of L = -Delta + 2(e^{2u} - W e^{-2u}).

    A always carries the lumped mass; M is lumped unless consistent=True.
    """
    q = potential(np.asarray(u, dtype=float), t, weight_values(w0))
    a = (mesh.stiffness + sp.diags(mesh.lumped_mass * q)).tocsr()

    if consistent:
        return a, mesh.consistent_mass

    return a, sp.diags(mesh.lumped_mass).tocsr()


def lowest_eigenvalues(u, t, mesh, w0, k=2):
    """The k smallest eigenvalues of L with the consistent mass matrix."""
    q = potential(np.asarray(u, dtype=float), t, weight_values(w0))
    a, m = linearized_operator(u, t, mesh, w0, consistent=True)
    # Lumped mass dominates consistent mass by at most a factor of four.
    shift = 4.0 * min(float(np.min(q)), 0.0) - 1.0
    values, _ = smallest_eigenpairs(a, m, k=k, lower_bound=shift)
    return [float(v) for v in values]


def smallest_eigenvalue(u, t, mesh, w0):
    return lowest_eigenvalues(u, t, mesh, w0, k=1)[0]


def integral_identity_defect(solution, mesh, w0):
    """int e^{2u} dA + int t^2 w0 e^{-2u} dA - 4 pi."""
    w0 = weight_values(w0)
    u = solution.u
    total = mesh.integrate(np.exp(2.0 * u) + solution.t ** 2 * w0 * np.exp(-2.0 * u))
    return total - SURFACE_AREA


def _solve(matrix, rhs, t):
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)

        try:
            delta = spla.spsolve(sp.csc_matrix(matrix), rhs)
        except (MatrixRankWarning, RuntimeError) as exc:
            raise FoldProximityError(t) from exc

    if not np.all(np.isfinite(delta)):
        raise FoldProximityError(t)

    return delta


def newton_solve(u0, t, mesh, w0, newton_tol=1e-10, max_iter=50, compute_mu1=True):
    """Damped Newton iteration; returns a Solution flagged by convergence."""
    w0 = weight_values(w0)
    u = np.array(u0, dtype=float)

    if not np.all(np.isfinite(u)):
        raise ValueError("Newton start must be finite")

    r = residual(u, t, mesh, w0)
    norm = residual_norm(r, mesh)
    iterations = 0

    while norm > newton_tol and iterations < max_iter:
        a, _ = linearized_operator(u, t, mesh, w0)
        delta = _solve(a, mesh.lumped_mass * r, t)
        iterations += 1

        step = 1.0
        accepted = False

        while step >= 1e-10:
            trial = u + step * delta
            trial_r = _raw_residual(trial, t, mesh, w0)

            if np.all(np.isfinite(trial_r)):
                trial_norm = residual_norm(trial_r, mesh)

                if trial_norm < norm:
                    u, r, norm = trial, trial_r, trial_norm
                    accepted = True
                    break

            step *= 0.5

        if not accepted:
            logger.debug(f"NEWTON: line search stalled at t={t:.6g}, residual {norm:.3e}")
            break

    converged = norm <= newton_tol
    mu1 = mu2 = math.nan

    if converged and compute_mu1:
        mu1, mu2 = lowest_eigenvalues(u, t, mesh, w0)

    logger.debug(
        f"NEWTON: t={t:.8g} iterations={iterations} residual={norm:.3e} "
        f"converged={converged}"
    )
    return Solution(u, float(t), norm, mu1, converged, iterations, mu2=mu2)


# ----------------------------------------------------------------------
# Continuation
# ----------------------------------------------------------------------

class ContinuationEngine:
    """Traces the solution curve starting at (0, 0) through the fold."""

    def __init__(self, mesh, w0, control=None, on_point=None):
        self.mesh = mesh
        self.w0 = weight_values(w0)
        self.control = control or StepControl()
        self.on_point = on_point

        if not np.any(self.w0 > 0.0):
            raise ValueError("Weight field is identically zero")

        self.branch = Branch()
        self.mode = "natural"
        self.natural_step = self.control.natural_step
        self.arclength_step = self.control.arclength_step
        self.halvings = 0
        self.steps_taken = 0
        self.finished = False

    # ------------------------------------------------------------------
    # Branch bookkeeping
    # ------------------------------------------------------------------

    @property
    def last(self):
        return self.branch.points[-1]

    @property
    def past_fold(self):
        return self.branch.has_fold

    def _append(self, solution):
        if self.branch.points and self.last.mu2 * solution.mu2 < 0.0:
            logger.warning(
                f"CONTINUE: mu2 changes sign between t={self.last.t:.8g} and t={solution.t:.8g}; "
                f"secondary branch point"
            )

        self.branch.points.append(solution)

        if self.on_point is not None:
            self.on_point(solution)

    def _norm(self, du, dt):
        return math.sqrt(float(du @ (self.mesh.lumped_mass * du)) + dt * dt)

    def _secant(self, left, right):
        du = right.u - left.u
        dt = right.t - left.t
        length = self._norm(du, dt)
        return du / length, dt / length, length

    # ------------------------------------------------------------------
    # Start and resume
    # ------------------------------------------------------------------

    def start(self):
        c = self.control
        solution = newton_solve(
            np.zeros(self.mesh.canonical_count), 0.0, self.mesh, self.w0,
            c.newton_tol, c.max_iter,
        )
        solution.s = 0.0
        self._append(solution)
        logger.info(f"CONTINUE: start at t=0, mu1={solution.mu1:.6f}")

    def resume(self, points):
        """Continue from stored branch points ordered by arclength."""
        if not points:
            self.start()
            return

        self.branch = Branch(points=list(points))

        for i in range(1, len(points)):
            if points[i - 1].mu1 > 0.0 and points[i].mu1 < 0.0:
                self._locate_fold(points[i - 1], points[i], i)
                break

        if len(points) >= 2 and (self.past_fold or self.last.mu1 < self.control.switch_mu1):
            self.mode = "arclength"

        if self.past_fold and self.last.t < self.control.t_min:
            self.finished = True

        logger.info(
            f"CONTINUE: resumed {len(points)} points at s={self.last.s:.6f} "
            f"in {self.mode} mode"
        )

    # ------------------------------------------------------------------
    # Natural-parameter steps
    # ------------------------------------------------------------------

    def _natural_step(self):
        c = self.control
        current = self.last
        t_new = current.t + self.natural_step
        predictor = current.u

        if len(self.branch.points) >= 2:
            previous = self.branch.points[-2]
            slope = (current.u - previous.u) / (current.t - previous.t)
            predictor = current.u + slope * self.natural_step

        try:
            solution = newton_solve(predictor, t_new, self.mesh, self.w0, c.newton_tol, c.max_iter)
        except FoldProximityError:
            solution = None

        if solution is None or not solution.converged or solution.mu1 <= 0.0:
            if len(self.branch.points) >= 2:
                logger.info(f"CONTINUE: natural step failed at t={t_new:.6f}; arclength mode")
                self.mode = "arclength"
                return

            self._halve("natural")
            self.natural_step *= 0.5
            return

        solution.s = current.s + self._norm(solution.u - current.u, solution.t - current.t)
        self._append(solution)
        self.halvings = 0

        if solution.mu1 < c.switch_mu1:
            logger.info(f"CONTINUE: mu1={solution.mu1:.4f} at t={solution.t:.6f}; arclength mode")
            self.mode = "arclength"

    # ------------------------------------------------------------------
    # Pseudo-arclength steps
    # ------------------------------------------------------------------

    def _correct(self, u, t, anchor, tangent_u, tangent_t, ds):
        """Newton on F(u, t) = 0 plus the arclength constraint."""
        c = self.control
        m = self.mesh.lumped_mass
        border = m * tangent_u

        for iteration in range(1, c.max_iter + 1):
            r = _raw_residual(u, t, self.mesh, self.w0)

            if not np.all(np.isfinite(r)):
                return None, iteration

            constraint = border @ (u - anchor.u) + tangent_t * (t - anchor.t) - ds
            a, _ = linearized_operator(u, t, self.mesh, self.w0)
            dr_dt = m * (-2.0 * t * self.w0 * np.exp(-2.0 * u))
            system = sp.bmat([
                [a, sp.csr_matrix(-dr_dt[:, None])],
                [sp.csr_matrix(border[None, :]), sp.csr_matrix([[tangent_t]])],
            ])
            rhs = np.concatenate([m * r, [-constraint]])
            delta = _solve(system, rhs, t)

            u = u + delta[:-1]
            t = t + float(delta[-1])

            if np.max(np.abs(delta)) > DIVERGENCE_LIMIT:
                return None, iteration

            norm = residual_norm(_raw_residual(u, t, self.mesh, self.w0), self.mesh)

            if norm <= c.newton_tol and abs(
                border @ (u - anchor.u) + tangent_t * (t - anchor.t) - ds
            ) <= c.newton_tol:
                mu1, mu2 = lowest_eigenvalues(u, t, self.mesh, self.w0)
                return Solution(u, float(t), norm, mu1, True, iteration, mu2=mu2), iteration

        return None, c.max_iter

    def _arclength_step(self):
        c = self.control
        previous, current = self.branch.points[-2], self.branch.points[-1]
        tangent_u, tangent_t, _ = self._secant(previous, current)
        ds = self.arclength_step

        try:
            solution, iterations = self._correct(
                current.u + ds * tangent_u, current.t + ds * tangent_t,
                current, tangent_u, tangent_t, ds,
            )
        except FoldProximityError:
            solution, iterations = None, c.max_iter

        if solution is None or solution.t <= 0.0:
            self._halve("arclength")
            self.arclength_step *= 0.5
            return

        solution.s = current.s + ds
        self.halvings = 0

        if not self.past_fold and current.mu1 > 0.0 and solution.mu1 < 0.0:
            self._append(solution)
            self._locate_fold(current, solution, len(self.branch.points) - 1)
        else:
            self._append(solution)

        if iterations <= c.fast_iterations:
            self.arclength_step = min(self.arclength_step * c.growth, c.max_arclength_step)

        if self.past_fold and solution.t < c.t_min:
            self.finished = True

    def _halve(self, mode):
        self.halvings += 1

        if self.halvings > self.control.max_halvings:
            raise ContinuationAbort(
                f"{mode} step failed after {self.control.max_halvings} halvings "
                f"at t={self.last.t:.8g}",
                self.branch,
            )

        logger.debug(f"CONTINUE: {mode} step halved ({self.halvings})")

    # ------------------------------------------------------------------
    # Fold
    # ------------------------------------------------------------------

    def _locate_fold(self, left, right, fold_index):
        """Brent search for mu1 = 0 on the secant hyperplanes between two points."""
        tangent_u, tangent_t, length = self._secant(left, right)
        solutions = {}

        def mu1_at(sigma):
            if sigma <= 0.0:
                return left.mu1

            if sigma >= length:
                return right.mu1

            solution, _ = self._correct(
                left.u + sigma * tangent_u, left.t + sigma * tangent_t,
                left, tangent_u, tangent_t, sigma,
            )

            if solution is None:
                raise ContinuationAbort(
                    f"Corrector failed while locating the fold near t={left.t:.8g}",
                    self.branch,
                )

            solution.s = left.s + sigma
            solutions[sigma] = solution
            return solution.mu1

        sigma = brentq(mu1_at, 0.0, length, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)

        if sigma <= 0.0:
            fold = left
        elif sigma >= length:
            fold = right
        else:
            if sigma not in solutions:
                mu1_at(sigma)

            fold = solutions[sigma]

        if abs(fold.mu1) > self.control.fold_tolerance:
            logger.warning(f"CONTINUE: fold mu1={fold.mu1:.3e} above tolerance")

        self.branch.fold_solution = fold
        self.branch.fold_parameter = fold.t
        self.branch.fold_index = fold_index
        logger.info(f"CONTINUE: fold at t={fold.t:.10f}, mu1={fold.mu1:.2e}")

    # ------------------------------------------------------------------
    # Driver
    # ------------------------------------------------------------------

    def step(self):
        if self.mode == "natural":
            self._natural_step()
        else:
            self._arclength_step()

        self.steps_taken += 1

    def run(self):
        if not self.branch.points:
            self.start()

        while not self.finished:
            if self.steps_taken >= self.control.max_steps:
                logger.warning(f"CONTINUE: stopped after {self.steps_taken} steps")
                break

            self.step()

        logger.info(
            f"CONTINUE: branch of {len(self.branch.points)} points, "
            f"fold t={self.branch.fold_parameter}"
        )
        return self.branch


def continue_branch(mesh, w0, control=None, on_point=None, resume_points=None):
    engine = ContinuationEngine(mesh, w0, control, on_point)

    if resume_points is not None:
        engine.resume(resume_points)

    return engine.run()


def branch_solution_at(branch, t, mesh, w0, side="stable", control=None):
    """Newton-polished solution at parameter t on one side of the fold."""
    control = control or StepControl()

    if side == "stable":
        part = branch.stable_part()
    elif side == "unstable":
        part = branch.unstable_part()
    else:
        raise ValueError(f"Unknown branch side {side!r}")

    for left, right in zip(part, part[1:]):
        low, high = sorted((left.t, right.t))

        if low <= t <= high and high > low:
            weight = (t - left.t) / (right.t - left.t)
            guess = (1.0 - weight) * left.u + weight * right.u
            solution = newton_solve(guess, t, mesh, w0, control.newton_tol, control.max_iter)
            return replace(solution, s=left.s + weight * (right.s - left.s))

    raise ValueError(f"t={t} is outside the {side} part of the branch")


# ----------------------------------------------------------------------
# Nonexistence
# ----------------------------------------------------------------------

def random_starts(mesh, attempts, seed, low=-6.0, high=0.0, noise=0.05):
    """Stratified constant levels in [low, high] plus small smooth noise."""
    rng = np.random.default_rng(seed)
    levels = low + (high - low) * (np.arange(attempts) + rng.random(attempts)) / attempts
    z = mesh.canonical_positions
    x, y = z.real, z.imag
    starts = []

    for level in levels:
        c = rng.standard_normal(3)
        starts.append(level + noise * (c[0] * x + c[1] * y + c[2] * (x * x - y * y)))

    return starts


def certify_no_solution(t, mesh, weight, attempts=20, seed=0, control=None):
    if t <= 0.0:
        raise ValueError("Certification needs t > 0")

    control = control or StepControl()
    bound = nonexistence_bound(weight, mesh)
    report = {"t": float(t), "bound": float(bound), "attempts": attempts}

    if t >= bound:
        logger.info(f"CERTIFY: t={t} beyond bound {bound:.8f}; no solution by theorem")
        report["status"] = "certified-by-theorem"
        report["converged"] = 0
        report["endpoints"] = []
        report["solutions"] = []
        return report

    endpoints = []
    distinct = []

    for start in random_starts(mesh, attempts, seed):
        try:
            solution = newton_solve(start, t, mesh, weight, control.newton_tol, control.max_iter)
        except FoldProximityError:
            endpoints.append({"start": float(np.mean(start)), "converged": False})
            continue

        endpoints.append({
            "start": float(np.mean(start)),
            "converged": solution.converged,
            "residual_norm": solution.residual_norm,
            "u_max": solution.u_max,
        })

        if solution.converged and all(
            np.max(np.abs(solution.u - other.u)) > DUPLICATE_TOLERANCE for other in distinct
        ):
            distinct.append(solution)

    distinct.sort(key=lambda sol: -sol.u_max)
    report["status"] = "solutions-found" if distinct else "empirical-nonexistence"
    report["converged"] = sum(1 for e in endpoints if e["converged"])
    report["endpoints"] = endpoints
    report["solutions"] = [
        {"u_min": s.u_min, "u_max": s.u_max, "mu1": s.mu1, "residual_norm": s.residual_norm}
        for s in distinct
    ]
    logger.info(
        f"CERTIFY: t={t}: {report['converged']} of {attempts} starts converged, "
        f"{len(distinct)} distinct solutions"
    )
    return report
