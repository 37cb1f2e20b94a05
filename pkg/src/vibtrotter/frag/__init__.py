"""Fragmentation engines producing ordered, fast-forwardable fragment sets."""

from .base import (
    BosonicQuadratic,
    BosonicQuartic,
    ChristiansenCSA,
    FragmentSet,
    PauliGroup,
    RealSpaceKinetic,
    RealSpacePotential,
    fragment_from_dict,
)
from .bf import bloch_messiah, bogoliubov_diagonalize, fragment_bf, fragment_symbol
from .cgf import fragment_cgf, one_mode_fragment
from .givens import givens_decompose, givens_matrix, givens_reconstruct
from .pauli_groups import fragment_commuting, fragment_pf
from .realspace import fragment_real_space

__all__ = [
    "BosonicQuadratic",
    "BosonicQuartic",
    "ChristiansenCSA",
    "FragmentSet",
    "PauliGroup",
    "RealSpaceKinetic",
    "RealSpacePotential",
    "fragment_from_dict",
    "fragment_cgf",
    "fragment_bf",
    "fragment_real_space",
    "fragment_symbol",
    "bloch_messiah",
    "bogoliubov_diagonalize",
    "one_mode_fragment",
    "givens_decompose",
    "givens_matrix",
    "givens_reconstruct",
    "fragment_commuting",
    "fragment_pf",
]
