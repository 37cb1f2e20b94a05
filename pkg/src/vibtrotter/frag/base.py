"""Fragment variants and ordered fragment sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..bosonic import BosonSymbol
from ..pauli import PauliSum

__all__ = [
    "PauliGroup",
    "ChristiansenCSA",
    "BosonicQuadratic",
    "BosonicQuartic",
    "RealSpaceKinetic",
    "RealSpacePotential",
    "FragmentSet",
    "fragment_from_dict",
]


def _arr(x):
    return None if x is None else np.asarray(x, dtype=float)


@dataclass(frozen=True)
class PauliGroup:
    """Mutually commuting Pauli words (a single word for PF)."""

    terms: PauliSum
    kind: str = field(default="pauli_group", init=False)

    def to_dict(self):
        return {"kind": self.kind, "n_qubits": self.terms.n, "text": self.terms.to_text()}

    @classmethod
    def from_dict(cls, d):
        return cls(PauliSum.from_text(d["text"], d["n_qubits"], keep_order=True).real())


@dataclass(frozen=True)
class ChristiansenCSA:
    """Number-operator polynomial in per-mode rotated modal bases.

    ``rotations[l]`` holds the rotated modals as rows (orthogonal, det +1).
    ``one_mode[l]`` are coefficients of the rotated number operators;
    ``two_mode[(l, m)]`` (l > m) is the full-rank lambda matrix and
    ``three_mode[(l, m, n)]`` the optional xi tensor.  ``constant`` is a
    multiple of the identity carried by the fragment.
    """

    rotations: Tuple[np.ndarray, ...]
    one_mode: Optional[Tuple[np.ndarray, ...]] = None
    two_mode: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)
    three_mode: Dict[Tuple[int, int, int], np.ndarray] = field(default_factory=dict)
    constant: float = 0.0
    kind: str = field(default="christiansen_csa", init=False)

    @property
    def sizes(self):
        return tuple(U.shape[0] for U in self.rotations)

    def tensors(self):
        """(h, g, f) Christiansen tensors of this fragment."""
        U = self.rotations
        h = []
        for l, Ul in enumerate(U):
            if self.one_mode is None:
                h.append(np.zeros((Ul.shape[0],) * 2))
            else:
                h.append(Ul.T @ np.diag(self.one_mode[l]) @ Ul)
        g = {
            (l, m): np.einsum("ij,ia,ib,jc,jd->abcd", lam, U[l], U[l], U[m], U[m], optimize=True)
            for (l, m), lam in self.two_mode.items()
        }
        f = {
            (l, m, n): np.einsum("ijk,ia,ib,jc,jd,ke,kf->abcdef", xi, U[l], U[l], U[m], U[m], U[n], U[n], optimize=True)
            for (l, m, n), xi in self.three_mode.items()
        }
        return h, g, f

    def generators(self):
        """Antisymmetric generators X^(l) with rotation = expm(X) where real."""
        from scipy.linalg import logm

        out = []
        for Ul in self.rotations:
            X = logm(Ul)
            out.append(np.real_if_close(0.5 * (X - X.T)))
        return out

    def to_dict(self):
        return {
            "kind": self.kind,
            "rotations": [U.tolist() for U in self.rotations],
            "one_mode": None if self.one_mode is None else [e.tolist() for e in self.one_mode],
            "two_mode": [{"modes": list(k), "lambda": v.tolist()} for k, v in self.two_mode.items()],
            "three_mode": [{"modes": list(k), "xi": v.tolist()} for k, v in self.three_mode.items()],
            "constant": self.constant,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tuple(np.asarray(U, dtype=float) for U in d["rotations"]),
            None if d["one_mode"] is None else tuple(np.asarray(e, dtype=float) for e in d["one_mode"]),
            {tuple(e["modes"]): np.asarray(e["lambda"], dtype=float) for e in d["two_mode"]},
            {tuple(e["modes"]): np.asarray(e["xi"], dtype=float) for e in d["three_mode"]},
            float(d.get("constant", 0.0)),
        )


@dataclass(frozen=True)
class _Gaussian:
    """Bogoliubov transform ``B = D(gamma) G(alpha, beta)`` plus its
    Bloch-Messiah factors ``G = BS(delta1) S(chi) BS(delta2)``."""

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    delta1: np.ndarray
    chi: np.ndarray
    delta2: np.ndarray

    def to_dict(self):
        return {k: np.asarray(getattr(self, k)).tolist() for k in ("alpha", "beta", "gamma", "delta1", "chi", "delta2")}

    @classmethod
    def from_dict(cls, d):
        return cls(*(np.asarray(d[k], dtype=float) for k in ("alpha", "beta", "gamma", "delta1", "chi", "delta2")))


@dataclass(frozen=True)
class BosonicQuadratic:
    """``B (sum_l eps_l n_l + constant) B†``."""

    eps: np.ndarray
    constant: float
    gaussian: _Gaussian
    kind: str = field(default="bosonic_quadratic", init=False)

    @property
    def num_modes(self):
        return len(self.eps)

    def to_dict(self):
        return {"kind": self.kind, "eps": list(map(float, self.eps)), "constant": self.constant,
                "gaussian": self.gaussian.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["eps"], dtype=float), float(d["constant"]), _Gaussian.from_dict(d["gaussian"]))


@dataclass(frozen=True)
class BosonicQuartic:
    """``B (sum_{l<=m} eta_lm n_l n_m) B†`` with eta upper triangular."""

    eta: np.ndarray
    gaussian: _Gaussian
    kind: str = field(default="bosonic_quartic", init=False)

    @property
    def num_modes(self):
        return self.eta.shape[0]

    def to_dict(self):
        return {"kind": self.kind, "eta": self.eta.tolist(), "gaussian": self.gaussian.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["eta"], dtype=float), _Gaussian.from_dict(d["gaussian"]))


@dataclass(frozen=True)
class RealSpaceKinetic:
    """``sum_ij K_ij p_i p_j``, diagonal after a centered Fourier transform."""

    K: np.ndarray
    kind: str = field(default="real_space_kinetic", init=False)

    def to_dict(self):
        return {"kind": self.kind, "K": self.K.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["K"], dtype=float))


@dataclass(frozen=True)
class RealSpacePotential:
    """Diagonal potential ``V(q)`` from Taylor tensor elements."""

    monomials: Dict[Tuple[int, ...], float]
    num_modes: int
    constant: float = 0.0
    kind: str = field(default="real_space_potential", init=False)

    def evaluate(self, q: np.ndarray) -> np.ndarray:
        out = np.full(q.shape[:-1], self.constant, dtype=float)
        for idx, c in self.monomials.items():
            term = np.full(q.shape[:-1], c)
            for i in idx:
                term = term * q[..., i]
            out += term
        return out

    def to_dict(self):
        return {"kind": self.kind, "num_modes": self.num_modes, "constant": self.constant,
                "monomials": [{"indices": list(k), "coeff": v} for k, v in self.monomials.items()]}

    @classmethod
    def from_dict(cls, d):
        return cls({tuple(e["indices"]): float(e["coeff"]) for e in d["monomials"]},
                   int(d["num_modes"]), float(d.get("constant", 0.0)))


_KINDS = {
    "pauli_group": PauliGroup,
    "christiansen_csa": ChristiansenCSA,
    "bosonic_quadratic": BosonicQuadratic,
    "bosonic_quartic": BosonicQuartic,
    "real_space_kinetic": RealSpaceKinetic,
    "real_space_potential": RealSpacePotential,
}


def fragment_from_dict(d):
    try:
        cls = _KINDS[d["kind"]]
    except KeyError:
        raise ValueError(f"unknown fragment kind {d.get('kind')!r}") from None
    return cls.from_dict(d)


@dataclass(frozen=True)
class FragmentSet:
    """Ordered fragments plus what was left out.

    ``space`` describes where the fragments act:
    ``{"kind": "qubit", "sizes": [...]}`` for unary-encoded modes or
    ``{"kind": "grid", "num_modes": M, "n_q": Nq}`` for real space.
    ``residual`` is the discarded operator in the scheme's native form
    (a Christiansen Hamiltonian for CGF, a normal symbol for BF, or None).
    """

    fragments: Tuple[Any, ...]
    scheme: str
    space: Dict[str, Any]
    residual_norm: float = 0.0
    residual: Any = None
    status: str = "converged"
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __len__(self):
        return len(self.fragments)

    def __iter__(self):
        return iter(self.fragments)

    def reordered(self, order) -> "FragmentSet":
        frs = tuple(self.fragments[i] for i in order)
        return FragmentSet(frs, self.scheme, self.space, self.residual_norm, self.residual, self.status, self.provenance)

    def to_dict(self):
        from ..modal import ChristiansenHamiltonian

        res = None
        if isinstance(self.residual, ChristiansenHamiltonian):
            res = {"type": "christiansen", "data": self.residual.to_dict()}
        elif isinstance(self.residual, BosonSymbol):
            res = {"type": "symbol", "data": self.residual.to_dict()}
        return {
            "schema": "fragments/v1",
            "scheme": self.scheme,
            "space": self.space,
            "status": self.status,
            "residual_norm": self.residual_norm,
            "residual": res,
            "provenance": self.provenance,
            "fragments": [f.to_dict() for f in self.fragments],
        }

    @classmethod
    def from_dict(cls, d):
        from ..modal import ChristiansenHamiltonian

        res = d.get("residual")
        if res is not None:
            res = ChristiansenHamiltonian.from_dict(res["data"]) if res["type"] == "christiansen" \
                else BosonSymbol.from_dict(res["data"])
        return cls(
            tuple(fragment_from_dict(f) for f in d["fragments"]),
            d["scheme"],
            d["space"],
            float(d["residual_norm"]),
            res,
            d.get("status", "converged"),
            d.get("provenance", {}),
        )
