import csv
import logging
import os

import numpy as np

from immersion_geometry import principal_curvature

logger = logging.getLogger("gauss_kit")

BRANCH_HEADER = ["s", "t", "mu1", "mu2", "uMin", "uMax", "residualNorm", "lambdaMax"]
TRACE_HEADER = ["iteration", "maxNodeIndex", "maxEnergy", "gradVNorm"]
AMBIENT_HEADER = ["z_re", "z_im", "r", "g11", "g12", "g22", "degenerate"]
DIAGRAM_HEADER = ["t", "branch", "uNorm", "mu1"]
TREND_HEADER = ["t", "side", "uNorm", "lambdaMax", "kMax", "uNormPlusLogT", "converged"]


def format_number(value):
    return f"{float(value):.12g}"


def _write_rows(csv_file, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(csv_file)), exist_ok=True)

    with open(csv_file, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)

    logger.debug(f"CSV EXPORT: {len(rows)} rows to {csv_file}")
    return csv_file


def branch_rows(branch, w0):
    points = list(branch.points)

    if branch.has_fold:
        points.insert(branch.fold_index, branch.fold_solution)

    rows = []

    for point in points:
        lam = principal_curvature(point, w0)
        rows.append([
            format_number(point.s),
            format_number(point.t),
            format_number(point.mu1),
            format_number(point.mu2),
            format_number(point.u_min),
            format_number(point.u_max),
            format_number(point.residual_norm),
            format_number(np.max(lam)),
        ])

    return rows


def write_branch_csv(csv_file, branch, w0):
    return _write_rows(csv_file, BRANCH_HEADER, branch_rows(branch, w0))


def write_trace_csv(csv_file, trace):
    rows = [
        [
            entry["iteration"],
            entry["max_node_index"],
            format_number(entry["max_energy"]),
            format_number(entry["grad_v_norm"]),
        ]
        for entry in trace
    ]
    return _write_rows(csv_file, TRACE_HEADER, rows)


def write_ambient_csv(csv_file, samples):
    rows = []

    for sample in samples:
        row = sample.as_row()
        rows.append([format_number(row[key]) for key in AMBIENT_HEADER[:-1]] + [int(row["degenerate"])])

    return _write_rows(csv_file, AMBIENT_HEADER, rows)


def write_diagram_csv(csv_file, branch, extra_solutions=None):
    """t against sup|u| for both sides of the branch and any extra solutions."""
    rows = []

    for side, part in (("stable", branch.stable_part()), ("unstable", branch.unstable_part())):
        for point in part:
            rows.append([
                format_number(point.t),
                side,
                format_number(np.max(np.abs(point.u))),
                format_number(point.mu1),
            ])

    for label, solution in extra_solutions or []:
        rows.append([
            format_number(solution.t),
            label,
            format_number(np.max(np.abs(solution.u))),
            format_number(solution.mu1),
        ])

    return _write_rows(csv_file, DIAGRAM_HEADER, rows)


def write_trend_csv(csv_file, trend):
    rows = [
        [
            format_number(row["t"]),
            row["side"],
            format_number(row["u_norm"]),
            format_number(row["lambda_max"]),
            format_number(row["k_max"]),
            format_number(row["stabilized"]),
            int(row["converged"]),
        ]
        for row in trend["rows"]
    ]
    return _write_rows(csv_file, TREND_HEADER, rows)


def read_csv_rows(csv_file):
    with open(csv_file, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        return [row for row in reader]
