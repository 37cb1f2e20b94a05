"""Polynomial vibrational models and coordinate transformations.

The potential is stored as symmetric Taylor tensors in dimensionless
coordinates ``q``::

    V(q) = sum_l sum_{i1..il} V^(l)_{i1..il} q_i1 ... q_il

Each tensor keeps one element per sorted multi-index; the coefficient of the
corresponding monomial is that element times the number of distinct index
permutations.  The kinetic energy is ``T = sum_ij K_ij p_i p_j``.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .units import PRUNE_TOL

__all__ = [
    "VibrationalModel",
    "ModeRotation",
    "multiplicity",
    "restrict_n_mode",
    "rotate_coordinates",
    "localize_modes",
    "pipek_mezey_objective",
    "load_model",
    "save_model",
]

Index = Tuple[int, ...]


def multiplicity(idx: Index) -> int:
    """Number of distinct orderings of a multi-index."""
    counts = Counter(idx)
    n = math.factorial(len(idx))
    for c in counts.values():
        n //= math.factorial(c)
    return n


def _freeze(taylor: Mapping[int, Mapping[Index, float]]) -> Dict[int, Dict[Index, float]]:
    out = {}
    for deg in sorted(taylor):
        entries = {}
        for idx, c in taylor[deg].items():
            key = tuple(sorted(int(i) for i in idx))
            if len(key) != deg:
                raise ValueError(f"index {idx} does not have degree {deg}")
            if abs(c) > PRUNE_TOL:
                entries[key] = entries.get(key, 0.0) + float(c)
        out[int(deg)] = dict(sorted(entries.items()))
    return out


@dataclass(frozen=True)
class VibrationalModel:
    """Kinetic matrix plus sparse symmetric Taylor tensors of the PES."""

    frequencies: np.ndarray
    kinetic: np.ndarray
    taylor: Dict[int, Dict[Index, float]]
    coordinate_kind: str = "normal"
    n_mode_order: int = 2
    taylor_order: int = 4
    displacements: Optional[np.ndarray] = None
    constant: float = 0.0
    name: str = ""

    def __post_init__(self):
        w = np.asarray(self.frequencies, dtype=float).reshape(-1)
        K = np.asarray(self.kinetic, dtype=float)
        M = w.size
        if M < 1:
            raise ValueError("model needs at least one mode")
        if K.shape != (M, M):
            raise ValueError(f"kinetic matrix must be {M}x{M}, got {K.shape}")
        if not np.allclose(K, K.T, atol=1e-12):
            raise ValueError("kinetic matrix is not symmetric")
        if self.coordinate_kind not in ("normal", "local"):
            raise ValueError(f"unknown coordinate kind {self.coordinate_kind!r}")
        if self.coordinate_kind == "normal" and not np.allclose(K, np.diag(w / 2), atol=1e-12):
            raise ValueError("normal-mode model requires K = diag(omega/2)")
        taylor = _freeze(self.taylor)
        for deg, entries in taylor.items():
            for idx in entries:
                if max(idx) >= M or min(idx) < 0:
                    raise ValueError(f"Taylor index {idx} out of range for {M} modes")
                if len(set(idx)) > self.n_mode_order:
                    raise ValueError(f"entry {idx} couples more than n={self.n_mode_order} modes")
        if taylor and max(taylor) > self.taylor_order:
            raise ValueError("Taylor tensor degree exceeds taylor_order")
        K = 0.5 * (K + K.T)
        K.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "kinetic", K)
        object.__setattr__(self, "taylor", taylor)
        if self.displacements is not None:
            B = np.asarray(self.displacements, dtype=float)
            if B.ndim != 3 or B.shape[1] != 3 or B.shape[2] != M:
                raise ValueError("displacements must have shape (atoms, 3, M)")
            B.setflags(write=False)
            object.__setattr__(self, "displacements", B)

    @property
    def num_modes(self) -> int:
        return self.frequencies.size

    @classmethod
    def harmonic(cls, frequencies, **kw):
        """Uncoupled harmonic model in normal coordinates."""
        w = np.asarray(frequencies, dtype=float)
        taylor = {2: {(i, i): w[i] / 2 for i in range(w.size)}}
        return cls(w, np.diag(w / 2), taylor, **kw)

    @staticmethod
    def elements_from_monomials(monomials: Mapping[Index, float]) -> Dict[int, Dict[Index, float]]:
        """Convert monomial coefficients ``{(i,j,..): c}`` to tensor elements."""
        taylor: Dict[int, Dict[Index, float]] = {}
        for idx, c in monomials.items():
            key = tuple(sorted(idx))
            taylor.setdefault(len(key), {})
            taylor[len(key)][key] = taylor[len(key)].get(key, 0.0) + c / multiplicity(key)
        return taylor

    def monomials(self) -> Dict[Index, float]:
        """Monomial coefficients keyed by sorted multi-index."""
        return {idx: c * multiplicity(idx) for d in self.taylor.values() for idx, c in d.items()}

    def dense_tensor(self, degree: int) -> np.ndarray:
        M = self.num_modes
        T = np.zeros((M,) * degree)
        for idx, c in self.taylor.get(degree, {}).items():
            for perm in set(itertools.permutations(idx)):
                T[perm] = c
        return T

    def potential(self, q: np.ndarray) -> np.ndarray:
        """Evaluate V at points ``q`` of shape (..., M)."""
        q = np.asarray(q, dtype=float)
        out = np.full(q.shape[:-1], self.constant, dtype=float)
        for idx, c in self.monomials().items():
            term = np.full(q.shape[:-1], c)
            for i in idx:
                term = term * q[..., i]
            out += term
        return out

    def max_degree(self) -> int:
        return max((d for d, e in self.taylor.items() if e), default=2)

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        d = {
            "frequencies": self.frequencies.tolist(),
            "kinetic": self.kinetic.tolist(),
            "taylor": [
                {"indices": list(idx), "coeff": c}
                for deg in sorted(self.taylor)
                for idx, c in self.taylor[deg].items()
            ],
            "n_mode_order": self.n_mode_order,
            "taylor_order": self.taylor_order,
            "coordinate_kind": self.coordinate_kind,
        }
        if self.constant:
            d["constant"] = self.constant
        if self.name:
            d["name"] = self.name
        if self.displacements is not None:
            d["displacements"] = self.displacements.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VibrationalModel":
        required = ("frequencies", "kinetic", "taylor")
        for key in required:
            if key not in d:
                raise ValueError(f"model file: missing field {key!r}")
        taylor: Dict[int, Dict[Index, float]] = {}
        for k, entry in enumerate(d["taylor"]):
            try:
                idx = tuple(int(i) for i in entry["indices"])
                coeff = float(entry["coeff"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"model file: bad taylor entry #{k}: {exc}") from None
            if list(idx) != sorted(idx):
                raise ValueError(f"model file: taylor entry #{k} indices not sorted: {list(idx)}")
            taylor.setdefault(len(idx), {})
            taylor[len(idx)][idx] = taylor[len(idx)].get(idx, 0.0) + coeff
        disp = d.get("displacements")
        return cls(
            np.asarray(d["frequencies"], dtype=float),
            np.asarray(d["kinetic"], dtype=float),
            taylor,
            coordinate_kind=d.get("coordinate_kind", "normal"),
            n_mode_order=int(d.get("n_mode_order", 2)),
            taylor_order=int(d.get("taylor_order", 4)),
            displacements=None if disp is None else np.asarray(disp, dtype=float),
            constant=float(d.get("constant", 0.0)),
            name=str(d.get("name", "")),
        )


def load_model(path) -> VibrationalModel:
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return VibrationalModel.from_dict(data)


def save_model(model: VibrationalModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def restrict_n_mode(model: VibrationalModel, n: int) -> VibrationalModel:
    """Drop Taylor entries that couple more than ``n`` distinct modes."""
    if not 1 <= n <= model.num_modes:
        raise ValueError(f"n-mode order must lie in [1, {model.num_modes}], got {n}")
    taylor = {
        deg: {idx: c for idx, c in entries.items() if len(set(idx)) <= n}
        for deg, entries in model.taylor.items()
    }
    return replace(model, taylor=taylor, n_mode_order=n)


@dataclass(frozen=True)
class ModeRotation:
    """Orthogonal map ``q_new = R q_old``."""

    R: np.ndarray = field(repr=False)

    def __post_init__(self):
        R = np.array(self.R, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ValueError("rotation must be a square matrix")
        if not np.allclose(R.T @ R, np.eye(R.shape[0]), atol=1e-10):
            raise ValueError("rotation matrix is not orthogonal")
        R.setflags(write=False)
        object.__setattr__(self, "R", R)

    def is_identity(self, tol=1e-12) -> bool:
        return bool(np.allclose(self.R, np.eye(self.R.shape[0]), atol=tol))


def _contract_all(T: np.ndarray, R: np.ndarray) -> np.ndarray:
    for axis in range(T.ndim):
        T = np.moveaxis(np.tensordot(R, T, axes=([1], [axis])), 0, axis)
    return T


def rotate_coordinates(model: VibrationalModel, R) -> VibrationalModel:
    """Express the model in rotated coordinates ``q' = R q``."""
    if not isinstance(R, ModeRotation):
        R = ModeRotation(np.asarray(R))
    Rm = R.R
    M = model.num_modes
    if Rm.shape != (M, M):
        raise ValueError("rotation size does not match the model")
    K = Rm @ model.kinetic @ Rm.T
    K[np.abs(K) < PRUNE_TOL] = 0.0
    taylor = {}
    for deg in model.taylor:
        T = _contract_all(model.dense_tensor(deg), Rm)
        entries = {}
        for idx in itertools.combinations_with_replacement(range(M), deg):
            # average over permutations to re-symmetrize
            val = np.mean([T[p] for p in set(itertools.permutations(idx))])
            if abs(val) > PRUNE_TOL:
                entries[idx] = float(val)
        taylor[deg] = entries
    n_order = max((len(set(i)) for e in taylor.values() for i in e), default=1)
    n_order = max(n_order, model.n_mode_order)
    kind = model.coordinate_kind if R.is_identity() else "local"
    disp = None
    if model.displacements is not None:
        disp = np.einsum("aki,ji->akj", model.displacements, Rm)
    return replace(
        model,
        kinetic=0.5 * (K + K.T),
        taylor=taylor,
        coordinate_kind=kind,
        n_mode_order=n_order,
        displacements=disp,
    )


def pipek_mezey_objective(B: np.ndarray) -> float:
    """Sum over modes and atoms of squared per-atom displacement weights."""
    w = np.einsum("akj,akj->aj", B, B)
    return float(np.sum(w**2))


def _pair_objective(B, i, j, theta):
    c, s = math.cos(theta), math.sin(theta)
    bi = c * B[:, :, i] + s * B[:, :, j]
    bj = -s * B[:, :, i] + c * B[:, :, j]
    wi = np.einsum("ak,ak->a", bi, bi)
    wj = np.einsum("ak,ak->a", bj, bj)
    return float(np.sum(wi**2) + np.sum(wj**2))


_SAMPLE_ANGLES = np.array([0.0, np.pi / 16, np.pi / 8, 3 * np.pi / 16, np.pi / 4])
_DESIGN = np.column_stack(
    [np.ones(5), np.cos(4 * _SAMPLE_ANGLES), np.sin(4 * _SAMPLE_ANGLES)]
)


def localize_modes(
    B: np.ndarray,
    frequencies=None,
    tol: float = 1e-10,
    max_sweeps: int = 200,
    return_trace: bool = False,
):
    """Pipek-Mezey localization of normal-mode displacement vectors.

    Args:
        B: Normalized displacements of shape (atoms, 3, M), orthonormal columns.
        frequencies: Unused by the objective; accepted for interface symmetry.
        tol: Stop once a full sweep gains less than this.
        max_sweeps: Sweep cap.
        return_trace: Also return the objective after every sweep.

    Returns:
        ModeRotation with ``q_local = R q_normal`` (and the trace if requested).
    """
    B = np.array(B, dtype=float)
    if B.ndim != 3 or B.shape[1] != 3:
        raise ValueError("displacements must have shape (atoms, 3, M)")
    M = B.shape[2]
    flat = B.reshape(-1, M)
    if not np.allclose(flat.T @ flat, np.eye(M), atol=1e-8):
        raise ValueError("displacement columns are not orthonormal")
    U = np.eye(M)
    trace = [pipek_mezey_objective(B)]
    for _ in range(max_sweeps):
        for i, j in itertools.combinations(range(M), 2):
            samples = [_pair_objective(B, i, j, t) for t in _SAMPLE_ANGLES]
            c0, c1, c2 = np.linalg.lstsq(_DESIGN, samples, rcond=None)[0]
            if math.hypot(c1, c2) < 1e-12:
                continue
            theta = math.atan2(c2, c1) / 4
            if _pair_objective(B, i, j, theta) <= samples[0]:
                continue
            c, s = math.cos(theta), math.sin(theta)
            G = np.eye(M)
            G[i, i], G[j, i], G[i, j], G[j, j] = c, s, -s, c
            B = np.einsum("akm,mn->akn", B, G)
            U = U @ G
        trace.append(pipek_mezey_objective(B))
        if trace[-1] - trace[-2] < tol:
            break
    rot = ModeRotation(U.T)
    return (rot, trace) if return_trace else rot
