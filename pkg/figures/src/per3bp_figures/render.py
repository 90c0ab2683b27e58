"""Figure builders and the render entry point.

Four figure kinds: the orbit and its excursion in the rotating (X, Y)
plane, the action trace against the unwrapped angle with the strip
reference lines, the window grid tiling of a strip, and the energy-path
ensemble.  Rendering is deterministic: fixed sizes, no timestamps in
the output metadata, inputs never modified.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
# deterministic SVG element ids, so re-rendering is byte-identical
matplotlib.rcParams["svg.hashsalt"] = "per3bp-figures"

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle

from .artifacts import load_grids, load_homoclinic, load_paths
from .errors import MissingArtifact

KINDS = ("orbit", "homoclinic-theta", "grid", "paths")

#: default mass ratio and collinear equilibrium of the exporter's model
DEFAULT_MU = 2.089e-4
DEFAULT_L1 = -0.9592202126139626

_CLASS_COLORS = {1: "#1f77b4", 2: "#ff7f0e", 3: "#2ca02c", 4: "#d62728"}


@dataclass
class FigureSpec:
    """What to draw and from which files.

    inputs maps artifact roles to paths ('homoclinic', 'grids',
    'paths'); style options: grid (grid name), mu, l1, formats, dpi.
    """

    kind: str
    inputs: dict
    out: str
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"one of {KINDS}")


def _new_axes(width=6.0, height=4.5):
    fig = plt.figure(figsize=(width, height))
    return fig, fig.add_subplot(111)


def _zero_crossings(y):
    sign = np.sign(y)
    return np.nonzero(sign[:-1] * sign[1:] < 0)[0]


def build_orbit(data: dict, style: dict):
    """Trajectory in the rotating frame with the section crossings
    marked, a dot at the small primary, and a cross at the collinear
    equilibrium."""
    mu = float(style.get("mu", DEFAULT_MU))
    l1 = float(style.get("l1", DEFAULT_L1))
    fig, ax = _new_axes(5.5, 5.5)
    ax.plot(data["X"], data["Y"], lw=0.7, color="#333333")
    idx = _zero_crossings(data["Y"])
    ax.plot(data["X"][idx], data["Y"][idx], "+", ms=7, color="#1f77b4",
            label="section points")
    ax.plot([mu - 1.0], [0.0], "o", ms=5, color="#000000",
            label="small primary")
    ax.plot([l1], [0.0], "x", ms=8, color="#d62728", label="equilibrium")
    ax.set_xlabel("X")
    ax.set_ylabel("Y")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize=8)
    meta = {"section_points": int(idx.size), "small_primary": mu - 1.0,
            "equilibrium": l1}
    return fig, meta


def build_homoclinic_theta(data: dict, style: dict):
    """Action-coordinate trace against the unwrapped angle, with the
    strip reference lines at pi/2 and 3 pi/2 modulo 2 pi."""
    th = data["theta_unwrapped"]
    fig, ax = _new_axes(7.5, 4.0)
    ax.plot(th, data["X"], lw=0.8, color="#333333")
    lines = []
    lo, hi = float(np.min(th)), float(np.max(th))
    k = math.floor((lo - 3.0 * math.pi / 2.0) / (2.0 * math.pi))
    while True:
        base = 2.0 * math.pi * k
        for ref in (math.pi / 2.0, 3.0 * math.pi / 2.0):
            v = base + ref
            if lo <= v <= hi:
                lines.append(v)
        if base + math.pi / 2.0 > hi:
            break
        k += 1
    for v in lines:
        ax.axvline(v, color="#d62728", lw=0.8)
    ax.set_xlabel("theta (unwrapped)")
    ax.set_ylabel("X")
    meta = {"reference_lines": sorted(lines)}
    return fig, meta


def build_grid(doc: dict, style: dict):
    """Window tiling of one strip in the (theta, I) plane, one
    rectangle per window, colored by angle class."""
    name = style.get("grid", "uu")
    grids = doc["grids"]
    if name not in grids:
        raise MissingArtifact(
            f"grid {name!r} not in artifact (has {sorted(grids)})")
    g = grids[name]
    fig, ax = _new_axes(7.0, 4.0)
    count = 0
    for w in g["windows"]:
        t0, t1 = float(w["theta"][0]), float(w["theta"][1])
        i0, i1 = float(w["I"][0]), float(w["I"][1])
        ax.add_patch(Rectangle(
            (t0, i0), t1 - t0, i1 - i0,
            facecolor=_CLASS_COLORS.get(w.get("class"), "#999999"),
            edgecolor="#000000", lw=0.5, alpha=0.45,
        ))
        count += 1
    ax.autoscale_view()
    ax.relim()
    ax.autoscale()
    ax.set_xlabel("theta")
    ax.set_ylabel("I")
    ax.set_title(f"{name}: {g['rows']} x {g['cols']} windows")
    meta = {"rectangles": count, "rows": g["rows"], "cols": g["cols"],
            "grid": name}
    return fig, meta


def build_paths(paths: dict, style: dict):
    """Energy-path ensemble over the rescaled unit time interval."""
    fig, ax = _new_axes(7.0, 4.0)
    for pid in sorted(paths):
        rows = paths[pid]
        ax.plot(rows[:, 0], rows[:, 1], lw=0.6, alpha=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("X")
    meta = {"paths": len(paths)}
    return fig, meta


def _savefig(fig, base: str, formats, dpi: int) -> list:
    written = []
    os.makedirs(os.path.dirname(os.path.abspath(base)), exist_ok=True)
    for fmt in formats:
        path = f"{base}.{fmt}"
        metadata = {"Date": None} if fmt == "svg" else {}
        fig.savefig(path, dpi=dpi, format=fmt, metadata=metadata)
        written.append(path)
    plt.close(fig)
    return written


def render(spec: FigureSpec) -> dict:
    """Render one figure; returns {'files': [...], 'meta': {...}}."""
    style = dict(spec.style)
    formats = tuple(style.get("formats", ("png",)))
    dpi = int(style.get("dpi", 150))
    if spec.kind == "orbit":
        fig, meta = build_orbit(load_homoclinic(spec.inputs["homoclinic"]),
                                style)
    elif spec.kind == "homoclinic-theta":
        fig, meta = build_homoclinic_theta(
            load_homoclinic(spec.inputs["homoclinic"]), style)
    elif spec.kind == "grid":
        fig, meta = build_grid(load_grids(spec.inputs["grids"]), style)
    else:
        fig, meta = build_paths(load_paths(spec.inputs["paths"]), style)
    files = _savefig(fig, spec.out, formats, dpi)
    return {"files": files, "meta": meta}
