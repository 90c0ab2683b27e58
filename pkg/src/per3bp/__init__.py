"""Validated-numerics toolkit for energy diffusion in the planar elliptic
restricted three-body problem: rigorous flow enclosures, section-to-section
maps in local coordinates, covering/cone certification, and the supporting
non-rigorous exploration and stochastic demonstrations."""

from .certify import (
    Certificate,
    derive_constants,
    run_certification,
    verify_C1,
    verify_C2,
    verify_C3,
)
from .errors import Per3bpError
from .explore import build_grids, find_lyapunov, fit_section_charts, shoot_homoclinic
from .integrator import integrate_fast, integrate_rigorous
from .ival import IMat, Interval, mat_m, mat_norm
from .model import ModelParams, hamiltonian, libration_point
from .stochastic import donsker_check, make_schedule, steer_orbit, synthetic_paths
from .windows import check_alignment, cone_sampling_oracle, propagate_cone

__version__ = "0.1.0"

__all__ = [
    "Interval",
    "IMat",
    "mat_norm",
    "mat_m",
    "ModelParams",
    "hamiltonian",
    "libration_point",
    "integrate_fast",
    "integrate_rigorous",
    "find_lyapunov",
    "shoot_homoclinic",
    "fit_section_charts",
    "build_grids",
    "check_alignment",
    "propagate_cone",
    "cone_sampling_oracle",
    "verify_C1",
    "verify_C2",
    "verify_C3",
    "derive_constants",
    "run_certification",
    "Certificate",
    "make_schedule",
    "steer_orbit",
    "synthetic_paths",
    "donsker_check",
    "Per3bpError",
    "__version__",
]
