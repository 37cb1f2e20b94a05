"""Christiansen-form Hamiltonians in modal bases and the VSCF loop."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import VibrationalModel, multiplicity

__all__ = [
    "ho_functions",
    "position_power_matrix",
    "ladder_matrices",
    "ModalBasis",
    "ChristiansenHamiltonian",
    "build_christiansen",
    "fock_operator",
    "vscf",
    "VSCFResult",
    "christiansen_dense",
    "fix_signs",
]


def ho_functions(n: int, x: np.ndarray) -> np.ndarray:
    """Normalized Hermite polynomials h_k(x), k < n, such that
    ``h_k(x) exp(-x^2/2)`` are the harmonic-oscillator eigenfunctions."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((n,) + x.shape)
    out[0] = np.pi**-0.25
    if n > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for k in range(1, n - 1):
        out[k + 1] = np.sqrt(2.0 / (k + 1)) * x * out[k] - np.sqrt(k / (k + 1)) * out[k - 1]
    return out


def position_power_matrix(n: int, power: int, npoints: Optional[int] = None) -> np.ndarray:
    """Exact ``<a|q^power|b>`` in the n lowest oscillator states by quadrature."""
    if npoints is None:
        npoints = n + power
    x, w = np.polynomial.hermite.hermgauss(npoints)
    h = ho_functions(n, x)
    return np.einsum("ak,bk,k->ab", h, h, w * x**power)


def ladder_matrices(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Truncated (b, b^dagger) in the Fock basis |0>..|n-1>."""
    b = np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1)
    return b, b.T.copy()


def _momentum_antisym(n: int) -> np.ndarray:
    """Real antisymmetric A with p = i A in the truncated Fock basis."""
    b, bd = ladder_matrices(n)
    return (bd - b) / np.sqrt(2.0)


def _momentum_squared(n: int) -> np.ndarray:
    """Exact ``<a|p^2|b>`` (no truncation error)."""
    A = _momentum_antisym(n + 2)
    return -(A @ A)[:n, :n]


def fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip columns so that each column's largest-magnitude entry is positive."""
    vecs = np.array(vecs, dtype=float)
    for j in range(vecs.shape[1]):
        k = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[k, j] < 0:
            vecs[:, j] *= -1
    return vecs


@dataclass(frozen=True)
class ModalBasis:
    """Per-mode orthogonal matrices; row i holds modal i in the oscillator basis."""

    rotations: Tuple[np.ndarray, ...]

    def __post_init__(self):
        rots = []
        for U in self.rotations:
            U = np.array(U, dtype=float)
            if U.ndim != 2 or U.shape[0] != U.shape[1]:
                raise ValueError("modal rotation must be square")
            if not np.allclose(U @ U.T, np.eye(U.shape[0]), atol=1e-10):
                raise ValueError("modal rotation is not orthogonal")
            U.setflags(write=False)
            rots.append(U)
        object.__setattr__(self, "rotations", tuple(rots))

    @classmethod
    def harmonic(cls, sizes: Sequence[int]) -> "ModalBasis":
        return cls(tuple(np.eye(n) for n in sizes))

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(U.shape[0] for U in self.rotations)

    def is_harmonic(self) -> bool:
        return all(np.allclose(U, np.eye(U.shape[0])) for U in self.rotations)


@dataclass(frozen=True)
class ChristiansenHamiltonian:
    """One-, two- and optional three-mode modal tensors.

    ``h[l]`` is N_l x N_l; ``g[(l, m)]`` with l > m has shape
    (N_l, N_l, N_m, N_m); ``f[(l, m, n)]`` with l > m > n has shape
    (N_l, N_l, N_m, N_m, N_n, N_n).  ``constant`` is the PES offset.
    """

    h: Tuple[np.ndarray, ...]
    g: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)
    f: Dict[Tuple[int, int, int], np.ndarray] = field(default_factory=dict)
    basis: Optional[ModalBasis] = None
    constant: float = 0.0

    def __post_init__(self):
        h = tuple(np.array(x, dtype=float) for x in self.h)
        sizes = tuple(x.shape[0] for x in h)
        for x in h:
            if x.shape != (x.shape[0],) * 2 or not np.allclose(x, x.T, atol=1e-12):
                raise ValueError("one-mode tensors must be square and symmetric")
        g = {}
        for (l, m), t in sorted(self.g.items()):
            if not l > m:
                raise ValueError("two-mode keys must satisfy l > m")
            t = np.array(t, dtype=float)
            if t.shape != (sizes[l], sizes[l], sizes[m], sizes[m]):
                raise ValueError(f"g{(l, m)} has shape {t.shape}")
            g[(l, m)] = t
        f = {}
        for (l, m, n), t in sorted(self.f.items()):
            if not l > m > n:
                raise ValueError("three-mode keys must satisfy l > m > n")
            t = np.array(t, dtype=float)
            f[(l, m, n)] = t
        basis = self.basis if self.basis is not None else ModalBasis.harmonic(sizes)
        if basis.sizes != sizes:
            raise ValueError("modal basis does not match tensor dimensions")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "basis", basis)

    @property
    def num_modes(self) -> int:
        return len(self.h)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(x.shape[0] for x in self.h)

    def g_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(t**2) for t in self.g.values())))

    def f_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(t**2) for t in self.f.values())))

    def rotated(self, basis: ModalBasis) -> "ChristiansenHamiltonian":
        """Re-express tensors given in the oscillator basis in ``basis``.

        Only valid when ``self`` is in the oscillator basis.
        """
        if not self.basis.is_harmonic():
            raise ValueError("rotation must start from the oscillator basis")
        U = basis.rotations
        h = [U[l] @ x @ U[l].T for l, x in enumerate(self.h)]
        g = {
            (l, m): np.einsum("ia,jb,kc,ld,abcd->ijkl", U[l], U[l], U[m], U[m], t, optimize=True)
            for (l, m), t in self.g.items()
        }
        f = {
            (l, m, n): np.einsum(
                "ia,jb,kc,ld,me,nf,abcdef->ijklmn",
                U[l], U[l], U[m], U[m], U[n], U[n], t, optimize=True,
            )
            for (l, m, n), t in self.f.items()
        }
        return ChristiansenHamiltonian(tuple(h), g, f, basis, self.constant)

    def to_harmonic(self) -> "ChristiansenHamiltonian":
        """Undo a modal rotation (inverse of :meth:`rotated`)."""
        inv = ModalBasis(tuple(U.T for U in self.basis.rotations))
        plain = ChristiansenHamiltonian(self.h, self.g, self.f, None, self.constant)
        out = plain.rotated(inv)
        return ChristiansenHamiltonian(out.h, out.g, out.f, None, self.constant)

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        def entries(t):
            nz = np.argwhere(t != 0.0)
            return [{"idx": [int(i) for i in ix], "coeff": float(t[tuple(ix)])} for ix in nz]

        return {
            "sizes": list(self.sizes),
            "constant": self.constant,
            "h": [{"mode": l, "matrix": x.tolist()} for l, x in enumerate(self.h)],
            "g": [{"modes": [l, m], "entries": entries(t)} for (l, m), t in self.g.items()],
            "f": [{"modes": list(k), "entries": entries(t)} for k, t in self.f.items()],
            "basis": [U.tolist() for U in self.basis.rotations],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChristiansenHamiltonian":
        sizes = d["sizes"]
        h = [None] * len(sizes)
        for item in d["h"]:
            h[item["mode"]] = np.asarray(item["matrix"], dtype=float)
        g = {}
        for item in d["g"]:
            l, m = item["modes"]
            t = np.zeros((sizes[l], sizes[l], sizes[m], sizes[m]))
            for e in item["entries"]:
                t[tuple(e["idx"])] = e["coeff"]
            g[(l, m)] = t
        f = {}
        for item in d.get("f", []):
            l, m, n = item["modes"]
            t = np.zeros((sizes[l],) * 2 + (sizes[m],) * 2 + (sizes[n],) * 2)
            for e in item["entries"]:
                t[tuple(e["idx"])] = e["coeff"]
            f[(l, m, n)] = t
        basis = ModalBasis(tuple(np.asarray(U) for U in d["basis"])) if "basis" in d else None
        return cls(tuple(h), g, f, basis, float(d.get("constant", 0.0)))


def build_christiansen(model: VibrationalModel, N, n: int = 2) -> ChristiansenHamiltonian:
    """Christiansen tensors of ``model`` in the harmonic-oscillator modal basis.

    Args:
        model: Polynomial model.
        N: Modal count, an int or one per mode.
        n: Highest coupling order kept (1, 2 or 3).
    """
    M = model.num_modes
    sizes = [int(N)] * M if np.isscalar(N) else [int(x) for x in N]
    if len(sizes) != M:
        raise ValueError("need one modal count per mode")
    if min(sizes) < 2:
        raise ValueError("each mode needs at least two modals")
    if n not in (1, 2, 3):
        raise ValueError("coupling order must be 1, 2 or 3")
    d = max(model.max_degree(), 2)
    npts = max(sizes) + d
    cache: Dict[Tuple[int, int], np.ndarray] = {}

    def qpow(l, k):
        key = (sizes[l], k)
        if key not in cache:
            cache[key] = position_power_matrix(sizes[l], k, npts)
        return cache[key]

    K = model.kinetic
    h = [K[l, l] * _momentum_squared(sizes[l]) for l in range(M)]
    g: Dict[Tuple[int, int], np.ndarray] = {}
    f: Dict[Tuple[int, int, int], np.ndarray] = {}
    for l, m in itertools.combinations(range(M), 2):
        if n >= 2 and K[l, m] != 0.0:
            hi, lo = max(l, m), min(l, m)
            Ahi, Alo = _momentum_antisym(sizes[hi]), _momentum_antisym(sizes[lo])
            # 2 K_lm p_l p_m with p = iA
            t = g.setdefault((hi, lo), np.zeros((sizes[hi],) * 2 + (sizes[lo],) * 2))
            t -= 2 * K[l, m] * np.einsum("ab,cd->abcd", Ahi, Alo)
    for idx, c in model.monomials().items():
        powers = {}
        for i in idx:
            powers[i] = powers.get(i, 0) + 1
        modes = sorted(powers, reverse=True)
        if len(modes) > n:
            continue
        mats = [qpow(mode, powers[mode]) for mode in modes]
        if len(modes) == 1:
            h[modes[0]] = h[modes[0]] + c * mats[0]
        elif len(modes) == 2:
            key = tuple(modes)
            t = g.setdefault(key, np.zeros(mats[0].shape + mats[1].shape))
            t += c * np.einsum("ab,cd->abcd", *mats)
        else:
            key = tuple(modes)
            t = f.setdefault(key, np.zeros(mats[0].shape + mats[1].shape + mats[2].shape))
            t += c * np.einsum("ab,cd,ef->abcdef", *mats)
    h = [0.5 * (x + x.T) for x in h]
    return ChristiansenHamiltonian(tuple(h), g, f, None, model.constant)


def _pair_mean_field(t, u_other, first: bool):
    if first:  # mode of interest carries the first index pair
        return np.einsum("abcd,c,d->ab", t, u_other, u_other)
    return np.einsum("abcd,a,b->cd", t, u_other, u_other)


def fock_operator(H: ChristiansenHamiltonian, l: int, basis: ModalBasis) -> np.ndarray:
    """Mean-field one-mode operator for mode ``l`` in oscillator coordinates.

    Every other mode is averaged over its ground modal (row 0 of its basis
    matrix).  ``H`` must be expressed in the oscillator basis.
    """
    if basis.sizes != H.sizes:
        raise ValueError("basis and Hamiltonian dimensions differ")
    u = [U[0] for U in basis.rotations]
    F = np.array(H.h[l], dtype=float)
    for (a, b), t in H.g.items():
        if a == l:
            F = F + _pair_mean_field(t, u[b], True)
        elif b == l:
            F = F + _pair_mean_field(t, u[a], False)
    letters = "abcdef"
    for key, t in H.f.items():
        if l not in key:
            continue
        pos = key.index(l)
        ops = []
        for k, mode in enumerate(key):
            if k != pos:
                ops.extend([u[mode], u[mode]])
        subs = [letters[2 * k: 2 * k + 2] for k in range(3) if k != pos]
        spec = "abcdef," + ",".join(c for s in subs for c in s) + "->" + letters[2 * pos: 2 * pos + 2]
        F = F + np.einsum(spec, t, *ops)
    return 0.5 * (F + F.T)


def _mean_field_energy(H: ChristiansenHamiltonian, basis: ModalBasis) -> float:
    u = [U[0] for U in basis.rotations]
    E = H.constant + sum(u[l] @ x @ u[l] for l, x in enumerate(H.h))
    for (a, b), t in H.g.items():
        E += np.einsum("abcd,a,b,c,d->", t, u[a], u[a], u[b], u[b])
    for (a, b, c), t in H.f.items():
        E += np.einsum("abcdef,a,b,c,d,e,f->", t, u[a], u[a], u[b], u[b], u[c], u[c])
    return float(E)


@dataclass(frozen=True)
class VSCFResult:
    basis: ModalBasis
    hamiltonian: ChristiansenHamiltonian
    energies: Tuple[float, ...]
    converged: bool
    cycles: int
    modal_energies: Tuple[np.ndarray, ...]

    @property
    def energy(self) -> float:
        return self.energies[-1]


def vscf(H: ChristiansenHamiltonian, tol: float = 1e-8, max_cycles: int = 100) -> VSCFResult:
    """Vibrational self-consistent field on a Christiansen Hamiltonian.

    The tracked energy is the mean-field expectation <Phi|H|Phi>, which is
    variational and non-increasing under the sequential mode updates.
    ``energies[0]`` is the starting (oscillator-basis) value.

    Returns:
        VSCFResult; ``converged`` is False when ``max_cycles`` ran out, in
        which case the trace is still returned.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not H.basis.is_harmonic():
        H = H.to_harmonic()
    rots = [np.eye(n) for n in H.sizes]
    energies = [_mean_field_energy(H, ModalBasis(tuple(rots)))]
    eps = [np.diag(x).copy() for x in H.h]
    converged = False
    last_change = 0
    for cycle in range(1, max_cycles + 1):
        for l in range(H.num_modes):
            F = fock_operator(H, l, ModalBasis(tuple(rots)))
            w, v = np.linalg.eigh(F)
            v = fix_signs(v)
            rots[l] = v.T
            eps[l] = w
        energies.append(_mean_field_energy(H, ModalBasis(tuple(rots))))
        if energies[-1] > energies[-2] + 1e-12:
            raise RuntimeError("VSCF energy increased; inconsistent Hamiltonian")
        if abs(energies[-1] - energies[-2]) < tol:
            converged = True
            break
        last_change = cycle
    basis = ModalBasis(tuple(rots))
    return VSCFResult(
        basis=basis,
        hamiltonian=H.rotated(basis),
        energies=tuple(energies),
        converged=converged,
        cycles=max(1, last_change),
        modal_energies=tuple(eps),
    )


def _embed(ops: Dict[int, np.ndarray], sizes) -> np.ndarray:
    out = np.ones((1, 1))
    for l, n in enumerate(sizes):
        out = np.kron(out, ops.get(l, np.eye(n)))
    return out


def christiansen_dense(H: ChristiansenHamiltonian) -> np.ndarray:
    """Dense matrix on the product modal space (last mode fastest)."""
    sizes = H.sizes
    dim = int(np.prod(sizes))
    out = H.constant * np.eye(dim)
    for l, x in enumerate(H.h):
        out += _embed({l: x}, sizes)
    for (l, m), t in H.g.items():
        nl, nm = sizes[l], sizes[m]
        for a, b in itertools.product(range(nl), repeat=2):
            blk = t[a, b]
            if not np.any(blk):
                continue
            e = np.zeros((nl, nl))
            e[a, b] = 1.0
            out += _embed({l: e, m: blk}, sizes)
    for (l, m, n), t in H.f.items():
        for a, b, c, d in itertools.product(range(sizes[l]), range(sizes[l]), range(sizes[m]), range(sizes[m])):
            blk = t[a, b, c, d]
            if not np.any(blk):
                continue
            e1 = np.zeros((sizes[l],) * 2)
            e1[a, b] = 1.0
            e2 = np.zeros((sizes[m],) * 2)
            e2[c, d] = 1.0
            out += _embed({l: e1, m: e2, n: blk}, sizes)
    return out
