"""Readers for the exported artifact files.

Every reader validates what it can of the schema and raises
MissingArtifact or SchemaMismatch before any figure work starts.
CSV files may carry leading '#' comment lines with provenance stamps.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .errors import MissingArtifact, SchemaMismatch

SCHEMA_VERSION = 1

HOMOCLINIC_COLUMNS = ["t", "X", "Y", "P_X", "P_Y", "theta_unwrapped"]
PATHS_COLUMNS = ["path", "t", "X"]


def _open_rows(path: str, columns) -> list:
    if not os.path.exists(path):
        raise MissingArtifact(f"artifact not found: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)
                if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise MissingArtifact(f"artifact is empty: {path}")
    header, body = rows[0], rows[1:]
    if header != columns:
        raise SchemaMismatch(
            f"{path}: columns {header} do not match {columns}")
    if not body:
        raise MissingArtifact(f"artifact has no data rows: {path}")
    return body


def load_homoclinic(path: str) -> dict:
    """Sampled trajectory as named float arrays."""
    body = _open_rows(path, HOMOCLINIC_COLUMNS)
    data = np.array([[float(c) for c in row] for row in body])
    return {name: data[:, i] for i, name in enumerate(HOMOCLINIC_COLUMNS)}


def load_paths(path: str) -> dict:
    """Energy paths keyed by path id, each a (t, X) array pair."""
    body = _open_rows(path, PATHS_COLUMNS)
    out = {}
    for pid, t, x in body:
        out.setdefault(int(pid), []).append((float(t), float(x)))
    return {pid: np.array(rows) for pid, rows in out.items()}


def load_grids(path: str) -> dict:
    """Window-grid document; validates the schema version."""
    if not os.path.exists(path):
        raise MissingArtifact(f"artifact not found: {path}")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MissingArtifact(f"{path} does not parse: {exc}")
    version = doc.get("version")
    if version != SCHEMA_VERSION:
        raise SchemaMismatch(
            f"{path}: schema version {version!r}, expected {SCHEMA_VERSION}")
    if "grids" not in doc:
        raise SchemaMismatch(f"{path}: missing 'grids' section")
    return doc
