"""Kinematics of two-phase flows with sharp interfaces.

Discontinuous velocity fields, their Filippov-type inclusions, co-moving
sets that may straddle a moving interface, and numerical checks of the
associated transport identities.
"""

from . import errors, geometry, inclusion_solver, moving_interface, transport_verify, twophase_field
from .geometry import ConvexBody, PointCloud
from .inclusion_solver import BranchPolicy, ComovingSet, comoving_volume, integrate, reachable_set
from .twophase_field import PhaseField, scenario

__all__ = [
    "errors", "geometry", "moving_interface", "twophase_field", "inclusion_solver", "transport_verify",
    "ConvexBody", "PointCloud", "BranchPolicy", "ComovingSet", "PhaseField",
    "comoving_volume", "integrate", "reachable_set", "scenario",
]
