"""
JSON files exchanged between pipeline commands: mesh, weight field,
solution checkpoints and reports. Every file carries the schema version and
the hashes of the configuration and mesh it was produced with.
"""

import glob
import json
import math
import os

import numpy as np

from gauss_errors import MeshMismatchError, MissingInputError
from gauss_solver import Solution
from quad_diff import WeightField
from settings_manager import canonical_json
from surface_mesh import build_mesh, mesh_payload

SCHEMA_VERSION = "1.0"
CHECKPOINT_DIR = "checkpoints"


def write_json(path, payload, config_hash="", mesh_hash=""):
    document = {"schema_version": SCHEMA_VERSION, "config_hash": config_hash, "mesh_hash": mesh_hash}
    document.update(payload)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)

    with open(path, "w", encoding="utf-8") as f:
        f.write(canonical_json(document, indent=1))
        f.write("\n")

    return path


def read_json(path, mesh_hash=None, config_hash=None):
    if not os.path.exists(path):
        raise MissingInputError(f"Missing input file: {path}")

    with open(path, "r", encoding="utf-8") as f:
        document = json.load(f)

    if document.get("schema_version") != SCHEMA_VERSION:
        raise MissingInputError(
            f"{path} has schema version {document.get('schema_version')!r}, "
            f"expected {SCHEMA_VERSION!r}"
        )

    if mesh_hash is not None and document.get("mesh_hash") != mesh_hash:
        raise MeshMismatchError(f"{path} was produced on a different mesh")

    if config_hash is not None and document.get("config_hash") != config_hash:
        raise MissingInputError(f"{path} was produced with a different configuration")

    return document


# ----------------------------------------------------------------------
# Mesh
# ----------------------------------------------------------------------

def save_mesh(path, mesh, config_hash=""):
    return write_json(path, mesh_payload(mesh), config_hash, mesh.mesh_hash)


def load_mesh(path, domain):
    """Rebuild the stored mesh and check it reproduces the stored hash."""
    document = read_json(path)
    mesh = build_mesh(domain, document["refinement_level"], document["quadrature_order"])

    if mesh.mesh_hash != document["mesh_hash"]:
        raise MeshMismatchError(f"{path} does not match the mesh built from its parameters")

    return mesh


# ----------------------------------------------------------------------
# Weight fields
# ----------------------------------------------------------------------

def save_weight(path, weight, config_hash=""):
    payload = {
        "provenance": weight.provenance,
        "values": [float(v) for v in weight.values],
        "phase": None if weight.phase is None else [float(p) for p in weight.phase],
    }
    return write_json(path, payload, config_hash, weight.mesh_hash)


def load_weight(path, mesh):
    document = read_json(path, mesh_hash=mesh.mesh_hash)
    values = np.array(document["values"], dtype=float)

    if values.shape != (mesh.canonical_count,):
        raise MeshMismatchError(f"{path} holds {values.size} values for {mesh.canonical_count} vertices")

    phase = document.get("phase")
    provenance = dict(document.get("provenance") or {"kind": "file"})
    provenance.setdefault("path", path)

    return WeightField(
        values,
        provenance,
        mesh.mesh_hash,
        None if phase is None else np.array(phase, dtype=float),
    )


# ----------------------------------------------------------------------
# Solution checkpoints
# ----------------------------------------------------------------------

def solution_payload(solution):
    return {
        "s": solution.s,
        "t": solution.t,
        "mu1": solution.mu1,
        "mu2": solution.mu2 if math.isfinite(solution.mu2) else None,
        "residual_norm": solution.residual_norm,
        "converged": solution.converged,
        "iterations": solution.iterations,
        "u": [float(v) for v in solution.u],
    }


def solution_from_payload(document):
    return Solution(
        u=np.array(document["u"], dtype=float),
        t=float(document["t"]),
        residual_norm=float(document["residual_norm"]),
        mu1=float(document["mu1"]),
        converged=bool(document["converged"]),
        iterations=int(document.get("iterations", 0)),
        s=float(document["s"]),
        mu2=math.nan if document.get("mu2") is None else float(document["mu2"]),
    )


def save_solution(path, solution, config_hash="", mesh_hash=""):
    return write_json(path, solution_payload(solution), config_hash, mesh_hash)


def load_solution(path, mesh_hash=None, config_hash=None):
    return solution_from_payload(read_json(path, mesh_hash, config_hash))


def checkpoint_path(output_dir, index):
    return os.path.join(output_dir, CHECKPOINT_DIR, f"point_{index:04d}.json")


def load_checkpoints(output_dir, mesh_hash, config_hash=None):
    """Stored branch points ordered by arclength."""
    paths = sorted(glob.glob(os.path.join(output_dir, CHECKPOINT_DIR, "point_*.json")))
    points = [load_solution(path, mesh_hash, config_hash) for path in paths]
    points.sort(key=lambda solution: solution.s)
    return points


class CheckpointWriter:
    """Callback that writes every accepted branch point as it arrives."""

    def __init__(self, output_dir, config_hash, mesh_hash, start_index=0):
        self.output_dir = output_dir
        self.config_hash = config_hash
        self.mesh_hash = mesh_hash
        self.index = start_index

    def __call__(self, solution):
        save_solution(
            checkpoint_path(self.output_dir, self.index),
            solution,
            self.config_hash,
            self.mesh_hash,
        )
        self.index += 1
