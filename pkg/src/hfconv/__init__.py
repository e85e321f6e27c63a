"""Hartree-Fock SCF convergence on the manifold of density matrices."""
from .errors import (
    DimensionError,
    HFError,
    InsufficientDataError,
    ManifoldError,
    NotConvergedError,
    ParseError,
    WellPosednessError,
)
from .eri import EriTensor
from .hamiltonian import (
    Convention,
    ElectronicSystem,
    energy,
    fock,
    hubbard_ring,
    random_system,
)
from .manifold import DensityMatrix, TangentVector, aufbau, gap, geodesic_step, retraction
from .solvers import (
    AlphaFormula,
    Backtracking,
    FixedStep,
    GradientDescent,
    LevelShifting,
    Roothaan,
    RunResult,
    SolverConfig,
    Status,
    auto_shift,
    initial_guess,
    run,
)

__version__ = "0.1.0"

__all__ = [
    "AlphaFormula",
    "Backtracking",
    "Convention",
    "DensityMatrix",
    "DimensionError",
    "ElectronicSystem",
    "EriTensor",
    "FixedStep",
    "GradientDescent",
    "HFError",
    "InsufficientDataError",
    "LevelShifting",
    "ManifoldError",
    "NotConvergedError",
    "ParseError",
    "Roothaan",
    "RunResult",
    "SolverConfig",
    "Status",
    "TangentVector",
    "WellPosednessError",
    "aufbau",
    "auto_shift",
    "energy",
    "fock",
    "gap",
    "geodesic_step",
    "hubbard_ring",
    "initial_guess",
    "random_system",
    "retraction",
    "run",
]
