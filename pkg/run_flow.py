"""
Pipeline commands. Each command reads what earlier commands left in the
output directory, writes its own artifacts and appends to the run event log.
"""

import logging
import math
import os
import shutil
from concurrent.futures import ThreadPoolExecutor

import numpy as np

import persistence
from csv_export import (
    write_ambient_csv,
    write_branch_csv,
    write_diagram_csv,
    write_trace_csv,
    write_trend_csv,
)
from domain_selftest import run_domain_selftest
from gauss_errors import ContinuationAbort, MissingInputError, MountainPassError
from gauss_solver import (
    DUPLICATE_TOLERANCE,
    Branch,
    StepControl,
    branch_solution_at,
    certify_no_solution,
    continue_branch,
)
from hyperbolic_core import SURFACE_AREA, build_bolza_domain, domain_dump
from immersion_geometry import (
    ambient_metric_profile,
    blowup_trend,
    curvature_report,
)
from mountain_pass import (
    MountainPassSettings,
    eval_functional,
    mountain_pass_solve,
    truncated_functional,
)
from quad_diff import (
    automorphy_residual,
    build_quadratic_differential,
    constant_weight,
    nonexistence_bound,
    qd_norms,
    weight_field,
)
from run_logging import log_run_event
from settings_manager import config_hash
from surface_mesh import build_mesh, euler_characteristic

logger = logging.getLogger("gauss_kit")

MESH_FILE = "mesh.json"
DOMAIN_FILE = "domain.json"
WEIGHT_FILE = "weight.json"
QDIFF_FILE = "qdiff_summary.json"
BRANCH_FILE = "branch.csv"
FOLD_FILE = "fold_report.json"
FOLD_SOLUTION_FILE = "fold_solution.json"
MPASS_DIR = "mpass"
MPASS_TABLE = "mpass_table.json"
GEOMETRY_FILE = "geometry.json"
AMBIENT_FILE = "ambient_metric.csv"
CERTIFY_FILE = "certify_report.json"
REPORT_FILE = "report.json"
DIAGRAM_FILE = "diagram.csv"
TREND_FILE = "trend.csv"

DEFAULT_T_FRACTIONS = (0.25, 0.5, 0.75)
TREND_FRACTIONS = (0.8, 0.4, 0.2)
AMBIENT_RADII = np.linspace(-3.0, 3.0, 25)
SAMPLE_COUNT = 20


class RunContext:
    """Settings, hashes and output paths shared by the commands of one run."""

    def __init__(self, settings):
        self.settings = settings
        self.output_dir = settings["outputSettings"]["output_dir"]
        self.config_hash = config_hash(settings)
        self.domain = build_bolza_domain()
        self._mesh = None
        self._weight = None
        os.makedirs(self.output_dir, exist_ok=True)

    def path(self, *parts):
        return os.path.join(self.output_dir, *parts)

    def event(self, event_type, command, t=None, detail=None):
        log_run_event(self.output_dir, event_type, command, t, detail)

    # ------------------------------------------------------------------
    # Inputs
    # ------------------------------------------------------------------

    @property
    def mesh(self):
        if self._mesh is None:
            mesh_settings = self.settings["meshSettings"]
            mesh_path = self.path(MESH_FILE)
            mesh = None

            if os.path.exists(mesh_path):
                document = persistence.read_json(mesh_path)

                if (
                    document["refinement_level"] == mesh_settings["refinement_level"]
                    and document["quadrature_order"] == mesh_settings["quadrature_order"]
                ):
                    mesh = persistence.load_mesh(mesh_path, self.domain)

            if mesh is None:
                mesh = build_mesh(
                    self.domain,
                    mesh_settings["refinement_level"],
                    mesh_settings["quadrature_order"],
                )
                persistence.save_mesh(mesh_path, mesh, self.config_hash)

            self._mesh = mesh

        return self._mesh

    @property
    def weight(self):
        if self._weight is None:
            weight_path = self.path(WEIGHT_FILE)

            if os.path.exists(weight_path):
                document = persistence.read_json(weight_path)

                if document.get("config_hash") == self.config_hash:
                    self._weight = persistence.load_weight(weight_path, self.mesh)

            if self._weight is None:
                self._weight = self.build_weight()
                persistence.save_weight(weight_path, self._weight, self.config_hash)

        return self._weight

    def build_weight(self):
        ws = self.settings["weightSettings"]

        if ws["kind"] == "constant":
            return constant_weight(self.mesh, ws["constant"])

        if ws["kind"] == "file":
            return persistence.load_weight(ws["path"], self.mesh)

        qd = self.quadratic_differential()
        return weight_field(qd, self.mesh)

    def quadratic_differential(self):
        ws = self.settings["weightSettings"]
        return build_quadratic_differential(
            self.domain, ws["seed_exponent"], ws["truncation_depth"]
        )

    def step_control(self):
        c = self.settings["continuationSettings"]
        n = self.settings["newtonSettings"]
        return StepControl(
            natural_step=c["natural_step"],
            arclength_step=c["arclength_step"],
            max_arclength_step=c["max_arclength_step"],
            switch_mu1=c["switch_mu1"],
            t_min=c["t_min"],
            max_steps=c["max_steps"],
            max_halvings=c["max_halvings"],
            fold_tolerance=c["fold_tolerance"],
            newton_tol=n["newton_tol"],
            max_iter=n["max_iter"],
        )

    def read(self, name):
        return persistence.read_json(self.path(name), self.mesh.mesh_hash, self.config_hash)

    def write(self, name, payload):
        return persistence.write_json(self.path(name), payload, self.config_hash, self.mesh.mesh_hash)

    def load_branch(self):
        """Branch points from the checkpoints plus the stored fold."""
        fold = self.read(FOLD_FILE)
        points = persistence.load_checkpoints(self.output_dir, self.mesh.mesh_hash, self.config_hash)

        if not points:
            raise MissingInputError("No branch checkpoints; run 'continue' first")

        branch = Branch(points=points)

        if fold.get("fold_parameter") is not None:
            branch.fold_solution = persistence.load_solution(
                self.path(FOLD_SOLUTION_FILE), self.mesh.mesh_hash, self.config_hash
            )
            branch.fold_parameter = fold["fold_parameter"]
            branch.fold_index = fold["fold_index"]

        return branch


def _solution_summary(solution, mesh, weight):
    report = curvature_report(solution, mesh, weight)
    summary = report.summary()
    summary.update({
        "u_min": solution.u_min,
        "u_max": solution.u_max,
        "u_norm": float(np.max(np.abs(solution.u))),
        "mu1": solution.mu1,
        "residual_norm": solution.residual_norm,
        "converged": solution.converged,
    })
    summary["degeneration_radius"] = _finite(summary["degeneration_radius"])
    return summary


def _finite(value):
    return None if value is None or not math.isfinite(value) else value


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def cmd_mesh(settings):
    ctx = RunContext(settings)
    ctx.event("Command Start", "mesh")

    def report(message, ok=True):
        if ok:
            logger.info(f"MESH: {message}")
        else:
            logger.warning(f"MESH: {message}")

    domain_ok = run_domain_selftest(report, ctx.domain)
    mesh = ctx.mesh

    summary = {
        "refinement_level": mesh.refinement_level,
        "disk_vertices": int(len(mesh.vertices)),
        "canonical_vertices": mesh.canonical_count,
        "triangles": int(len(mesh.triangles)),
        "euler_characteristic": euler_characteristic(mesh),
        "area_defect": abs(float(mesh.lumped_mass.sum()) - SURFACE_AREA),
        "raw_area_defect": abs(mesh.raw_area - SURFACE_AREA),
        "domain_checks_passed": domain_ok,
        "mesh_hash": mesh.mesh_hash,
    }
    ctx.write(DOMAIN_FILE, domain_dump(ctx.domain))
    logger.info(
        f"MESH: {summary['canonical_vertices']} vertices, {summary['triangles']} triangles, "
        f"area defect {summary['area_defect']:.3e} (raw {summary['raw_area_defect']:.3e}), Euler characteristic "
        f"{summary['euler_characteristic']}"
    )
    ctx.event("Command End", "mesh", detail=f"vertices={summary['canonical_vertices']}")
    return summary


def cmd_qdiff(settings):
    ctx = RunContext(settings)
    ctx.event("Command Start", "qdiff")
    weight = ctx.build_weight()
    persistence.save_weight(ctx.path(WEIGHT_FILE), weight, ctx.config_hash)
    ctx._weight = weight

    teichmuller, weil_petersson = qd_norms(weight, ctx.mesh)
    summary = {
        "provenance": weight.provenance,
        "teichmuller_norm": teichmuller,
        "weil_petersson_norm": weil_petersson,
        "nonexistence_bound": nonexistence_bound(weight, ctx.mesh),
        "weight_min": float(np.min(weight.values)),
        "weight_max": float(np.max(weight.values)),
        "automorphy_residual": None,
    }

    if settings["weightSettings"]["kind"] == "poincare":
        rng = np.random.default_rng(settings["seed"])
        radii = 0.6 * np.sqrt(rng.random(SAMPLE_COUNT))
        points = radii * np.exp(2j * np.pi * rng.random(SAMPLE_COUNT))
        summary["automorphy_residual"] = automorphy_residual(
            ctx.quadratic_differential(), ctx.domain, points
        )

    ctx.write(QDIFF_FILE, summary)
    logger.info(
        f"QDIFF: Teichmuller norm {teichmuller:.8f}, WP norm {weil_petersson:.8f}, "
        f"bound {summary['nonexistence_bound']:.8f}"
    )
    ctx.event("Command End", "qdiff", detail=f"bound={summary['nonexistence_bound']:.8g}")
    return summary


def cmd_continue(settings, resume=False):
    ctx = RunContext(settings)
    ctx.event("Command Start", "continue", detail="resume" if resume else "")
    mesh, weight = ctx.mesh, ctx.weight
    checkpoint_dir = ctx.path(persistence.CHECKPOINT_DIR)
    resume_points = None

    if resume:
        resume_points = persistence.load_checkpoints(ctx.output_dir, mesh.mesh_hash, ctx.config_hash)
    elif os.path.isdir(checkpoint_dir):
        shutil.rmtree(checkpoint_dir)

    writer = persistence.CheckpointWriter(
        ctx.output_dir, ctx.config_hash, mesh.mesh_hash,
        start_index=len(resume_points or []),
    )

    try:
        branch = continue_branch(mesh, weight, ctx.step_control(), writer, resume_points)
    except ContinuationAbort as abort:
        write_branch_csv(ctx.path(BRANCH_FILE), abort.branch, weight)
        ctx.event("Continuation Abort", "continue", detail=str(abort))
        raise

    write_branch_csv(ctx.path(BRANCH_FILE), branch, weight)
    bound = nonexistence_bound(weight, mesh)
    fold = {
        "fold_parameter": branch.fold_parameter,
        "fold_index": branch.fold_index,
        "nonexistence_bound": bound,
        "ratio": None if branch.fold_parameter is None else branch.fold_parameter / bound,
        "points": len(branch.points),
        "secondary_branch_points": branch.secondary_branch_points(),
        "fold_solution": None,
    }

    if branch.has_fold:
        persistence.save_solution(
            ctx.path(FOLD_SOLUTION_FILE), branch.fold_solution, ctx.config_hash, mesh.mesh_hash
        )
        fold["fold_solution"] = _solution_summary(branch.fold_solution, mesh, weight)
        logger.info(
            f"CONTINUE: fold {branch.fold_parameter:.10f}, bound {bound:.8f}, "
            f"ratio {fold['ratio']:.6f}"
        )
    else:
        logger.warning("CONTINUE: branch ended without a fold")

    ctx.write(FOLD_FILE, fold)
    ctx.event("Command End", "continue", branch.fold_parameter, f"points={len(branch.points)}")
    return fold


def _mpass_dir(ctx, t):
    return ctx.path(MPASS_DIR, f"t_{t:.6f}")


def _branch_difference(branch, solution, ctx):
    """Sup-norm distance to the unstable branch at the same t, None when unavailable."""
    try:
        on_branch = branch_solution_at(
            branch, solution.t, ctx.mesh, ctx.weight, "unstable", ctx.step_control()
        )
    except ValueError:
        return None

    if not on_branch.converged:
        return None

    return float(np.max(np.abs(solution.u - on_branch.u)))


def _solve_mountain_pass(ctx, branch, t):
    """Stable and mountain-pass solutions at one t; isolated output files."""
    mesh, weight = ctx.mesh, ctx.weight
    mp = ctx.settings["mountainPassSettings"]
    newton = ctx.settings["newtonSettings"]
    control = ctx.step_control()

    stable = branch_solution_at(branch, t, mesh, weight, "stable", control)
    tf = truncated_functional(mesh, weight, t, mp["theta"])
    trace = []
    settings = MountainPassSettings(
        path_nodes=mp["path_nodes"],
        tol=mp["tol"],
        max_iterations=mp["max_iterations"],
        max_retries=mp["max_retries"],
    )

    try:
        second = mountain_pass_solve(
            stable, tf, mesh, settings, weight, trace, newton["newton_tol"], newton["max_iter"]
        )
    finally:
        write_trace_csv(os.path.join(_mpass_dir(ctx, t), "trace.csv"), trace)

    persistence.save_solution(
        os.path.join(_mpass_dir(ctx, t), "stable.json"), stable, ctx.config_hash, mesh.mesh_hash
    )
    persistence.save_solution(
        os.path.join(_mpass_dir(ctx, t), "mountain_pass.json"), second, ctx.config_hash, mesh.mesh_hash
    )

    difference = _branch_difference(branch, second, ctx)
    row = {
        "t": t,
        "branch_difference": difference,
        "agrees_with_branch": difference is not None and difference <= DUPLICATE_TOLERANCE,
    }

    if not row["agrees_with_branch"]:
        logger.warning(f"MPASS: t={t:.6g} solution is not the continued unstable branch")

    for label, solution in (("stable", stable), ("mountain_pass", second)):
        report = curvature_report(solution, mesh, weight)
        row[label] = {
            "u_norm": float(np.max(np.abs(solution.u))),
            "mu1": solution.mu1,
            "mu2": _finite(solution.mu2),
            "lambda_max": report.lambda_max,
            "energy": eval_functional(solution.u, tf),
        }

    return row


def cmd_mpass(settings):
    ctx = RunContext(settings)
    ctx.event("Command Start", "mpass")
    branch = ctx.load_branch()

    if not branch.has_fold:
        raise MissingInputError("Branch has no fold; the mountain pass needs t below it")

    fold_t = branch.fold_parameter
    t_list = list(settings["mountainPassSettings"]["t_list"])

    if not t_list:
        t_list = [fraction * fold_t for fraction in DEFAULT_T_FRACTIONS]
        logger.warning(f"MPASS: empty t-list; using {', '.join(f'{t:.6f}' for t in t_list)}")

    t_list = sorted(float(t) for t in t_list)
    bound = nonexistence_bound(ctx.weight, ctx.mesh)
    failures = []
    feasible = []

    for t in t_list:
        if t >= fold_t:
            failures.append(
                f"t={t:.6g} is past the fold {fold_t:.8f}"
                + (f" and beyond the certified bound {bound:.8f}" if t >= bound else
                   f" (certified nonexistence beyond {bound:.8f})")
            )
        else:
            feasible.append(t)

    def solve(t):
        try:
            return _solve_mountain_pass(ctx, branch, t), None
        except MountainPassError as e:
            return None, str(e)

    with ThreadPoolExecutor() as pool:
        results = list(pool.map(solve, feasible))

    rows = []

    for t, (row, error) in zip(feasible, results):
        if row is None:
            failures.append(error)
            ctx.event("Mountain Pass Failure", "mpass", t, error)
        else:
            rows.append(row)
            ctx.event("Mountain Pass Solution", "mpass", t)

    ctx.write(MPASS_TABLE, {"fold_parameter": fold_t, "rows": rows, "failures": failures})

    if failures:
        raise MountainPassError("; ".join(failures))

    ctx.event("Command End", "mpass", detail=f"solutions={len(rows)}")
    return rows


def _mpass_solutions(ctx):
    path = ctx.path(MPASS_TABLE)

    if not os.path.exists(path):
        return []

    table = ctx.read(MPASS_TABLE)
    solutions = []

    for row in table["rows"]:
        directory = _mpass_dir(ctx, row["t"])
        solutions.append(
            persistence.load_solution(
                os.path.join(directory, "mountain_pass.json"), ctx.mesh.mesh_hash, ctx.config_hash
            )
        )

    return solutions


def cmd_geom(settings):
    ctx = RunContext(settings)
    ctx.event("Command Start", "geom")
    mesh, weight = ctx.mesh, ctx.weight
    branch = ctx.load_branch()

    labelled = []

    if branch.has_fold:
        labelled.append(("fold", branch.fold_solution))

    labelled.extend((f"mountain_pass_t{s.t:.6f}", s) for s in _mpass_solutions(ctx))

    summaries = {}
    samples = []

    for label, solution in labelled:
        summaries[label] = _solution_summary(solution, mesh, weight)

        vertex = int(np.argmax(curvature_report(solution, mesh, weight).lam))
        samples.extend(ambient_metric_profile(solution, mesh, weight, vertex, AMBIENT_RADII))

    write_ambient_csv(ctx.path(AMBIENT_FILE), samples)
    ctx.write(GEOMETRY_FILE, {"solutions": summaries})
    ctx.event("Command End", "geom", detail=f"solutions={len(summaries)}")
    return summaries


def cmd_report(settings):
    ctx = RunContext(settings)
    ctx.event("Command Start", "report")
    mesh, weight = ctx.mesh, ctx.weight
    branch = ctx.load_branch()
    fold = ctx.read(FOLD_FILE)
    extra = [("mountain_pass", s) for s in _mpass_solutions(ctx)]

    write_diagram_csv(ctx.path(DIAGRAM_FILE), branch, extra)
    trend = None

    if branch.has_fold:
        t_sequence = [fraction * branch.fold_parameter for fraction in TREND_FRACTIONS]
        t_sequence = [t for t in t_sequence if t >= min(p.t for p in branch.unstable_part())]

        if len(t_sequence) >= 2:
            trend = blowup_trend(branch, t_sequence, mesh, weight, ctx.step_control())
            write_trend_csv(ctx.path(TREND_FILE), trend)

    geometry = ctx.read(GEOMETRY_FILE)["solutions"] if os.path.exists(ctx.path(GEOMETRY_FILE)) else {}

    report = {
        "fold_parameter": fold["fold_parameter"],
        "nonexistence_bound": fold["nonexistence_bound"],
        "ratio": fold["ratio"],
        "branch_points": len(branch.points),
        "sign_changes": _sign_changes(branch),
        "secondary_branch_points": branch.secondary_branch_points(),
        "mountain_pass": [{"t": s.t, "mu1": s.mu1, "u_norm": float(np.max(np.abs(s.u)))} for _, s in extra],
        "blowup_trend": trend,
        "geometry": geometry,
    }
    ctx.write(REPORT_FILE, report)
    ctx.event("Command End", "report")
    return report


def _sign_changes(branch):
    part = branch.stable_part() + branch.unstable_part()[1:]
    signs = [np.sign(p.mu1) for p in part if p.mu1 != 0.0 and math.isfinite(p.mu1)]
    return int(sum(1 for a, b in zip(signs, signs[1:]) if a != b))


def cmd_certify(settings):
    ctx = RunContext(settings)
    request = settings["certifySettings"]
    ctx.event("Command Start", "certify", request["t"])
    control = ctx.step_control()
    report = certify_no_solution(
        request["t"], ctx.mesh, ctx.weight, request["attempts"], settings["seed"], control
    )
    ctx.write(CERTIFY_FILE, report)
    ctx.event("Command End", "certify", request["t"], report["status"])
    return report
