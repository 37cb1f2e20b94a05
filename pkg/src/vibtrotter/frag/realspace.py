"""Kinetic/potential split on a position grid."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..model import VibrationalModel
from .base import FragmentSet, RealSpaceKinetic, RealSpacePotential

__all__ = ["fragment_real_space"]


def fragment_real_space(model: VibrationalModel, n_q: Optional[int] = None) -> FragmentSet:
    """Split ``H`` into ``sum K_ij p_i p_j`` and ``V(q)``, kinetic first.

    The kinetic fragment is diagonalized by the multimode centered Fourier
    transform; the potential is already diagonal on the grid.

    Args:
        model: Vibrational model.
        n_q: Qubits per mode recorded in the fragment space.
    """
    kin = RealSpaceKinetic(np.array(model.kinetic, dtype=float))
    pot = RealSpacePotential(dict(model.monomials()), model.num_modes, float(model.constant))
    space = {"kind": "grid", "num_modes": model.num_modes}
    if n_q is not None:
        space["n_q"] = int(n_q)
        space["n_qubits"] = int(n_q) * model.num_modes
    return FragmentSet(
        (kin, pot),
        "rs",
        space,
        residual_norm=0.0,
        residual=None,
        status="converged",
        provenance={"diagonalizer": {"kinetic": "centered_fourier", "potential": "identity"}},
    )
