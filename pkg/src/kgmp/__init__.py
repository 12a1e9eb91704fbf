"""Numerical lab for the static Klein-Gordon-Maxwell-Proca system in dimension four.

Submodules: ``manifold`` (grids and Laplacians), ``elliptic`` (screened solves
and pairings), ``phi_map`` (the map ``Phi`` and ``Psi``), ``functional``
(energies and gradients), ``mountain_pass`` (saddle search), ``analysis``
(experiments), ``checks`` (derivative suites) and ``cli``.
"""
__version__ = "0.1.0"

from .elliptic import SolverError, screened_solve
from .manifold import FlatRadial4, Sphere4Radial, Torus4, build_manifold
from .mountain_pass import BlowUpError, MPASettings, MPTResult, mpa_solve
from .phi_map import PhysicsParams
from .profiles import CONSTANTS

__all__ = [
    "__version__", "SolverError", "screened_solve", "FlatRadial4", "Sphere4Radial", "Torus4",
    "build_manifold", "BlowUpError", "MPASettings", "MPTResult", "mpa_solve", "PhysicsParams", "CONSTANTS",
]
