"""Mod-2 PL chains, multi-scale coarea cuts, cone and interpolation operators, and the
skeleton-by-skeleton regularization of localized families of relative 1-cycles."""

from .chains import Chain0, Chain1
from .complex import CubicalComplex, SkeletonTower, build_cube_domain
from .cuts import CutSchedule, find_admissible_cut
from .interpolation import Decomposition, MuCoefficients, interpolate
from .sweep import FPrime, LocalizedFamily, Schedule, random_family, schedule, verify_bounds

__all__ = ["Chain0", "Chain1", "CubicalComplex", "SkeletonTower", "build_cube_domain", "CutSchedule",
           "find_admissible_cut", "Decomposition", "MuCoefficients", "interpolate", "FPrime",
           "LocalizedFamily", "Schedule", "random_family", "schedule", "verify_bounds"]

__version__ = "0.1.0"
