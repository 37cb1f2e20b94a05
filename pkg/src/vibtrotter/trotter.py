"""Second-order Trotter error operator, mean-field error estimates and
step-size planning.

For the symmetric product that applies fragment 0 outermost,

    U(dt) = e^{-i H_0 dt/2} ... e^{-i H_{K-1} dt} ... e^{-i H_0 dt/2}
          = exp(-i dt (H + dt^2 Theta_2 + O(dt^4))),

with ``A_v = sum_{u > v} H_u`` the operator

    Theta_2 = sum_v (1/12) [[A_v, H_v], A_v] + (1/24) [[A_v, H_v], H_v].
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .frag.base import ChristiansenCSA, FragmentSet, PauliGroup
from .pauli import PauliSum, commutator, encode_christiansen
from .sim import (
    Space,
    _csa_hamiltonian,
    dense_matrix,
    fragment_matrix,
    grid_ho_states,
    product_dipole_state,
    space_of,
)
from .units import AU_TIME_TO_FS, HARTREE_TO_CM1, cm1_to_hartree

__all__ = [
    "theta2",
    "TrialState",
    "dipole_trial",
    "perturbative_error",
    "TrotterPlan",
    "plan",
    "DEFAULT_EPS_TROT_CM1",
    "DEFAULT_TAU",
    "DEFAULT_K_MAX",
]

DEFAULT_EPS_TROT_CM1 = 7.0
DEFAULT_TAU = 250.0
DEFAULT_K_MAX = 300
DENSE_CAP = 1 << 14


def _symbolic_operands(F: FragmentSet):
    ops = []
    for fr in F.fragments:
        if isinstance(fr, PauliGroup):
            ops.append(fr.terms)
        elif isinstance(fr, ChristiansenCSA):
            ops.append(encode_christiansen(_csa_hamiltonian(fr)))
        else:
            return None
    return ops


def _nested_sum(ops, comm, add, scale, zero):
    """Theta_2 over an ordered operand list using suffix sums."""
    K = len(ops)
    out = zero
    tail = zero
    for v in range(K - 1, -1, -1):
        if v < K - 1:
            c = comm(tail, ops[v])
            out = add(out, add(scale(comm(c, tail), 1 / 12), scale(comm(c, ops[v]), 1 / 24)))
        tail = add(tail, ops[v])
    return out


def theta2(F: FragmentSet, rep: str = "auto", space: Optional[Space] = None, max_dim: int = DENSE_CAP):
    """Leading effective-Hamiltonian correction of the symmetric product.

    Args:
        F: Ordered fragments.
        rep: ``"pauli"`` (symbolic, Pauli and Christiansen fragments),
            ``"dense"`` or ``"auto"``.
        space: Realization space for the dense path (defaults to the
            fragment set's own).
        max_dim: Largest dense dimension accepted.

    Returns:
        A real PauliSum (symbolic) or a dense Hermitian matrix.
    """
    if len(F.fragments) == 0:
        raise ValueError("theta2 needs at least one fragment")
    if rep not in ("auto", "pauli", "dense"):
        raise ValueError(f"unknown representation {rep!r}")
    if rep in ("auto", "pauli"):
        ops = _symbolic_operands(F)
        if ops is not None:
            n = ops[0].n
            th = _nested_sum(ops, commutator, lambda a, b: a + b, lambda a, s: a * s, PauliSum.zero(n))
            return th.real(tol=1e-9)
        if rep == "pauli":
            raise ValueError("symbolic path requires Pauli or Christiansen fragments")
    sp = space or space_of(F)
    if sp.dim > max_dim:
        raise ValueError(f"dense Theta_2 would need dimension {sp.dim} (cap {max_dim})")
    mats = [dense_matrix(fragment_matrix(fr, sp), max_dim) for fr in F.fragments]
    th = _nested_sum(mats, lambda a, b: a @ b - b @ a, lambda a, b: a + b, lambda a, s: a * s,
                     np.zeros((sp.dim, sp.dim), dtype=complex))
    return 0.5 * (th + th.conj().T)


@dataclass(frozen=True)
class TrialState:
    """Mean-field expansion ``sum_n c_n |Phi_n>`` of a trial state.

    ``indices`` locate computational basis states (qubit/Fock spaces);
    ``vectors`` (columns) are used instead when the basis states are not
    computational (grid).
    """

    weights: np.ndarray
    indices: Optional[np.ndarray] = None
    vectors: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        s = w.sum()
        if s <= 0:
            raise ValueError("trial state has zero norm")
        if abs(s - 1) > 1e-10:
            raise ValueError(f"weights must sum to 1 (got {s})")
        object.__setattr__(self, "weights", w)


def dipole_trial(space: Space, dipole: Optional[Sequence[float]] = None, basis_rotations=None,
                 tol: float = 1e-14) -> TrialState:
    """Weights of ``mu |Phi_0>`` over product basis states of ``space``."""
    if space.kind == "grid":
        n_max = 3
        c = product_dipole_state((n_max,) * space.num_modes, dipole)
        vecs, _ = grid_ho_states(space.num_modes, space.n_q, n_max)
        keep = np.abs(c) > tol
        return TrialState(c[keep] ** 2, vectors=vecs[:, keep])
    c = product_dipole_state(space.sizes, dipole, basis_rotations)
    keep = np.flatnonzero(np.abs(c) > tol)
    w = c[keep] ** 2
    return TrialState(w / w.sum(), indices=space.physical_indices()[keep])


def perturbative_error(F: FragmentSet, trial: TrialState, rep: str = "auto", space: Optional[Space] = None,
                       th=None) -> float:
    """``sum_n |c_n|^2 |<Phi_n|Theta_2|Phi_n>|`` (Hartree per a.u. time squared)."""
    if th is None:
        th = theta2(F, rep, space)
    if isinstance(th, PauliSum):
        if trial.indices is None:
            vals = np.array([np.vdot(v, th.apply(v)) for v in trial.vectors.T])
        else:
            vals = th.diagonal_on(trial.indices)
    else:
        if trial.indices is None:
            V = trial.vectors
            vals = np.einsum("in,ij,jn->n", V.conj(), th, V)
        else:
            vals = np.diag(th)[trial.indices]
    return float(np.dot(trial.weights, np.abs(np.real(vals))))


@dataclass(frozen=True)
class TrotterPlan:
    """Trotter step size and step counts for a spectrum run."""

    step: float
    r: int
    tau: float
    k_max: int
    L_max: int
    eps2: float
    eps_trot: float

    def __post_init__(self):
        if self.r < 1 or self.step > self.tau * (1 + 1e-15):
            raise ValueError("invalid plan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eps2_cm1_per_fs2"] = self.eps2 * HARTREE_TO_CM1 / AU_TIME_TO_FS ** 2
        d["eps_trot_cm1"] = self.eps_trot * HARTREE_TO_CM1
        d["step_fs"] = self.step * AU_TIME_TO_FS
        d["units"] = {"step": "a.u. time", "tau": "a.u. time", "eps2": "Hartree / a.u.^2", "eps_trot": "Hartree"}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TrotterPlan":
        return cls(float(d["step"]), int(d["r"]), float(d["tau"]), int(d["k_max"]), int(d["L_max"]),
                   float(d["eps2"]), float(d["eps_trot"]))


def plan(eps_trot: float = cm1_to_hartree(DEFAULT_EPS_TROT_CM1), tau: float = DEFAULT_TAU,
         k_max: int = DEFAULT_K_MAX, eps2: float = 0.0) -> TrotterPlan:
    """``dt = min(tau, sqrt(eps_trot / eps2))``, ``r = ceil(tau / dt)``.

    Args:
        eps_trot: Target energy error (Hartree).
        tau: Autocorrelation sampling interval (a.u.).
        k_max: Number of autocorrelation samples after t = 0.
        eps2: Perturbative error coefficient.
    """
    if eps_trot <= 0 or tau <= 0:
        raise ValueError("eps_trot and tau must be positive")
    if eps2 < 0:
        raise ValueError("eps2 must be non-negative")
    dt = tau if eps2 == 0 else min(tau, math.sqrt(eps_trot / eps2))
    r = max(1, math.ceil(tau / dt - 1e-12))
    return TrotterPlan(dt, r, float(tau), int(k_max), r * int(k_max), float(eps2), float(eps_trot))
