"""Constraint energy minimizing generalized multiscale FEM for the first-order wave equation.

Pipeline: ``grid`` -> ``assembly`` -> ``pou`` -> ``spectral`` -> ``cem`` -> ``dynamics``;
``cemwave.lab`` drives experiments and the command line.
"""
from .assembly import FineOperators, MediumFields, assemble_fine_operators
from .cem import CemVelocityBasis, assemble_velocity_space
from .dynamics import (
    ReducedSystem,
    SeparableSource,
    Trajectory,
    assemble_reduced,
    check_cfl,
    fine_system,
    run_fine_reference,
    simulate,
)
from .errors import (
    CemError,
    ConfigurationError,
    DivergenceError,
    DomainError,
    FieldFormatError,
    RankDeficiencyError,
    SingularSystemError,
)
from .grid import GridHierarchy, build_hierarchy, oversample
from .pou import PartitionOfUnity, attach_weight, solve_pou
from .spectral import AuxiliarySpace, build_auxiliary

__version__ = "0.1.0"

__all__ = [
    "AuxiliarySpace",
    "CemError",
    "CemVelocityBasis",
    "ConfigurationError",
    "DivergenceError",
    "DomainError",
    "FieldFormatError",
    "FineOperators",
    "GridHierarchy",
    "MediumFields",
    "PartitionOfUnity",
    "RankDeficiencyError",
    "ReducedSystem",
    "SeparableSource",
    "SingularSystemError",
    "Trajectory",
    "assemble_fine_operators",
    "assemble_reduced",
    "assemble_velocity_space",
    "attach_weight",
    "build_auxiliary",
    "build_hierarchy",
    "check_cfl",
    "fine_system",
    "oversample",
    "run_fine_reference",
    "simulate",
    "solve_pou",
]
