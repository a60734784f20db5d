"""Exact-diagonalization checks of entanglement and locality bounds for
long-range interacting lattice spin systems."""

__version__ = "0.1.0"

from .lattice import LatticeGeometry, Region  # noqa: E402
from .hamiltonian import (HamiltonianPath, TwoBodyHamiltonian, build_long_range_ising,  # noqa: E402
                          build_long_range_xy)
from .qstate import PureState, entropy, entropy_rate, reduce  # noqa: E402
from .evolution import evolve, trajectory  # noqa: E402

__all__ = [
    "LatticeGeometry", "Region", "HamiltonianPath", "TwoBodyHamiltonian", "build_long_range_ising",
    "build_long_range_xy", "PureState", "entropy", "entropy_rate", "reduce", "evolve", "trajectory",
]
