"""Dynamic frictionless contact with per-step LCPs and Krylov model order reduction."""

__version__ = "0.1.0"

from .fem import ContactSystem, LoadSpec, Material, MeshSpec, Tear, assemble, build_mesh  # noqa: E402
from .lcp import LcpProblem, LcpSolution, LcpStatus, brute_force_solve, fb_newton_solve, lemke_solve  # noqa: E402
from .mor import craig_bampton_basis, krylov_basis, modal_basis, reduce, simulate_rom  # noqa: E402
from .solvers import SimParams, Trajectory, simulate, static_solve  # noqa: E402

__all__ = [
    "ContactSystem",
    "LcpProblem",
    "LcpSolution",
    "LcpStatus",
    "LoadSpec",
    "Material",
    "MeshSpec",
    "SimParams",
    "Tear",
    "Trajectory",
    "assemble",
    "brute_force_solve",
    "build_mesh",
    "craig_bampton_basis",
    "fb_newton_solve",
    "krylov_basis",
    "lemke_solve",
    "modal_basis",
    "reduce",
    "simulate",
    "simulate_rom",
    "static_solve",
]
