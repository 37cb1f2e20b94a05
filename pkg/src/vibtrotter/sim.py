"""Statevector evolution of fragment propagators, Trotter products and spectra.

Three realization spaces are supported:

``qubit``
    Unary-encoded modes on ``2**n_qubits`` amplitudes (qubit 0 is the most
    significant bit).  Used by the Pauli-grouping and CGF schemes.
``fock``
    Truncated Fock product space (last mode fastest), which is the one-hot
    physical subspace of the unary encoding.  Used by BF.
``grid``
    ``2**n_q`` position grid points per mode.  Used by the real-space split.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import expm

from .bosonic import BosonSymbol, _ladder, truncated_generator
from .frag.base import (
    BosonicQuadratic,
    BosonicQuartic,
    ChristiansenCSA,
    FragmentSet,
    PauliGroup,
    RealSpaceKinetic,
    RealSpacePotential,
)
from .frag.bf import fragment_symbol
from .frag.givens import givens_decompose
from .modal import ChristiansenHamiltonian, christiansen_dense, ho_functions
from .pauli import PauliSum, PauliWord, UnaryLayout, _bitrev_masks, _popcount, encode_christiansen, one_hot_indices
from .units import cm1_to_hartree, hartree_to_cm1

__all__ = [
    "Space",
    "space_of",
    "RotationCounter",
    "apply_pauli_rotation",
    "grid_points",
    "centered_fourier",
    "fragment_matrix",
    "fragment_propagator",
    "evolve_fragment",
    "step_program",
    "run_program",
    "trotter_step",
    "evolve",
    "compile_program",
    "autocorrelation",
    "SpectrumResult",
    "spectrum",
    "exact_autocorrelation",
    "exact_reference",
    "find_peaks",
    "peaks_match",
    "write_autocorrelation_csv",
    "read_autocorrelation_csv",
    "write_spectrum_csv",
    "read_spectrum_csv",
    "count_rotations",
    "reference_state",
    "trial_state",
    "product_dipole_state",
    "grid_dipole_state",
    "grid_ho_states",
    "dense_matrix",
]

_U64 = np.uint64


# ----------------------------------------------------------------- spaces


@dataclass(frozen=True)
class Space:
    """Where states live.

    ``sizes`` holds modals per mode (qubit/fock) or grid points per mode.
    """

    kind: str
    sizes: Tuple[int, ...]
    n_q: int = 0

    def __post_init__(self):
        if self.kind not in ("qubit", "fock", "grid"):
            raise ValueError(f"unknown space kind {self.kind!r}")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    @classmethod
    def qubit(cls, sizes):
        return cls("qubit", tuple(sizes))

    @classmethod
    def fock(cls, sizes):
        return cls("fock", tuple(sizes))

    @classmethod
    def grid(cls, num_modes: int, n_q: int):
        return cls("grid", (2 ** n_q,) * num_modes, n_q)

    @property
    def num_modes(self) -> int:
        return len(self.sizes)

    @property
    def n_qubits(self) -> int:
        if self.kind == "qubit":
            return int(sum(self.sizes))
        if self.kind == "grid":
            return self.n_q * self.num_modes
        return int(sum(self.sizes))

    @property
    def dim(self) -> int:
        if self.kind == "qubit":
            return 1 << self.n_qubits
        return int(np.prod(self.sizes))

    def physical_indices(self) -> np.ndarray:
        """Indices of the product-basis states inside the state vector."""
        if self.kind == "qubit":
            return one_hot_indices(self.sizes)
        return np.arange(self.dim)

    def embed(self, product_vec: np.ndarray) -> np.ndarray:
        """Place a product-basis (or grid) vector into a state vector."""
        out = np.zeros(self.dim, dtype=complex)
        out[self.physical_indices()] = product_vec
        return out


def space_of(F: FragmentSet, sizes=None, n_q: Optional[int] = None) -> Space:
    """Realization space of a fragment set, optionally overriding truncation."""
    sp = F.space
    kind = sp.get("kind")
    if kind == "qubit":
        # without a mode layout the register is treated as a single block
        return Space.qubit(sizes or sp.get("sizes") or (sp["n_qubits"],))
    if kind == "fock":
        sz = sizes or sp.get("sizes")
        if sz is None:
            raise ValueError("bosonic fragment set has no truncation; pass sizes")
        if np.isscalar(sz):
            sz = [int(sz)] * sp["num_modes"]
        return Space.fock(sz)
    if kind == "grid":
        nq = n_q or sp.get("n_q")
        if nq is None:
            raise ValueError("real-space fragment set has no grid size; pass n_q")
        return Space.grid(sp["num_modes"], int(nq))
    raise ValueError(f"unknown fragment space {kind!r}")


# -------------------------------------------------------------- counting


@dataclass
class RotationCounter:
    """Tally of emitted rotations (and other circuit events) by label."""

    counts: Dict[str, int] = field(default_factory=dict)

    def emit(self, label: str, n: int = 1):
        self.counts[label] = self.counts.get(label, 0) + int(n)

    @property
    def rz(self) -> int:
        return sum(v for k, v in self.counts.items() if k.startswith("rz"))

    def __getitem__(self, key):
        return self.counts.get(key, 0)


# ------------------------------------------------------ Pauli rotations


@lru_cache(maxsize=4096)
def _word_action(x: int, z: int, n: int):
    """(source indices, phases) with (P psi)[j] = phase[j] * psi[src[j]]."""
    dim = 1 << n
    idx = np.arange(dim, dtype=_U64)
    xi = _bitrev_masks(np.array([x], dtype=_U64), n)[0]
    zi = _bitrev_masks(np.array([z], dtype=_U64), n)[0]
    src = idx ^ xi
    ph = (1j) ** (bin(x & z).count("1") % 4)
    sign = 1 - 2 * (_popcount(src & zi) & 1)
    phases = sign * ph
    src = src.astype(np.int64)
    src.setflags(write=False)
    phases.setflags(write=False)
    return src, phases


def _bcast(v, state):
    return v if state.ndim == 1 else v[:, None]


def apply_pauli_rotation(state: np.ndarray, word: PauliWord, angle: float, counter: RotationCounter = None):
    """In-place ``state <- exp(-i angle P) state`` (vector or column block)."""
    if angle == 0 and counter is None:
        return state
    if word.is_identity():
        state *= np.exp(-1j * angle)
        return state
    if counter is not None:
        counter.emit("rz_pauli")
    src, ph = _word_action(word.x, word.z, word.n)
    if word.x == 0:
        # diagonal word: pure phases
        state *= _bcast(np.exp(-1j * angle * ph.real), state)
        return state
    Pv = _bcast(ph, state) * state[src]
    state *= math.cos(angle)
    state += (-1j * math.sin(angle)) * Pv
    return state


def _apply_zword_phases(state, n, zmask_coeffs: Dict[int, float], t: float, counter=None, label="rz_diag"):
    """Apply ``exp(-i t sum_w c_w Z_w)``; each non-identity word is one rotation."""
    dim = 1 << n
    total = np.zeros(dim)
    idx = np.arange(dim, dtype=_U64)
    phase0 = 0.0
    for z, c in zmask_coeffs.items():
        if z == 0:
            phase0 += c
            continue
        if counter is not None:
            counter.emit(label)
        zi = _bitrev_masks(np.array([z], dtype=_U64), n)[0]
        total += c * (1 - 2 * (_popcount(idx & zi) & 1))
    state *= _bcast(np.exp(-1j * t * (total + phase0)), state)
    return state


# ------------------------------------------------------------------ grid


def grid_points(n_q: int) -> np.ndarray:
    """Centered grid ``q_n = (n - 2**(n_q-1)) * Delta`` with ``Delta = sqrt(2 pi / 2**n_q)``."""
    L = 2 ** n_q
    delta = math.sqrt(2 * math.pi / L)
    return (np.arange(L) - L // 2) * delta


def centered_fourier(psi: np.ndarray, num_modes: int, n_q: int, inverse: bool = False) -> np.ndarray:
    """Multimode centered DFT ``psi~(p_k) = L^-1/2 sum_n exp(-i p_k q_n) psi(q_n)``.

    The momentum grid equals the position grid.  ``psi`` may carry a
    trailing column axis.
    """
    L = 2 ** n_q
    extra = psi.shape[1:] if psi.ndim > 1 else ()
    arr = psi.reshape((L,) * num_modes + extra)
    axes = tuple(range(num_modes))
    arr = np.fft.ifftshift(arr, axes=axes)
    arr = np.fft.ifftn(arr, axes=axes, norm="ortho") if inverse else np.fft.fftn(arr, axes=axes, norm="ortho")
    arr = np.fft.fftshift(arr, axes=axes)
    return arr.reshape(psi.shape)


def _grid_coords(num_modes: int, n_q: int) -> np.ndarray:
    q = grid_points(n_q)
    mesh = np.meshgrid(*([q] * num_modes), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


def _kinetic_diag(K: np.ndarray, n_q: int) -> np.ndarray:
    P = _grid_coords(K.shape[0], n_q)
    return np.einsum("ki,ij,kj->k", P, K, P)


def _fourier_matrix(num_modes: int, n_q: int) -> np.ndarray:
    dim = 2 ** (n_q * num_modes)
    return centered_fourier(np.eye(dim, dtype=complex), num_modes, n_q)


# ----------------------------------------------------------- realization


def _csa_basis_matrices(frag: ChristiansenCSA):
    """Single-particle matrices W_l whose columns are the rotated modals."""
    return [np.asarray(U).T for U in frag.rotations]


def _csa_zwords(frag: ChristiansenCSA, layout: UnaryLayout, keep_zeros: bool = True) -> Dict[int, float]:
    """Z-word coefficients of the diagonal ``D`` of a CSA fragment."""
    words: Dict[int, float] = {0: float(frag.constant)}
    off, sizes = layout.offsets, layout.sizes

    def bit(l, i):
        return 1 << (off[l] + i)

    def add(mask, c):
        words[mask] = words.get(mask, 0.0) + c

    if frag.one_mode is not None:
        for l, eps in enumerate(frag.one_mode):
            for i, e in enumerate(eps):
                add(0, e / 2)
                add(bit(l, i), -e / 2)
    if frag.two_mode or frag.three_mode:
        for l in range(len(sizes)):
            for i in range(sizes[l]):
                add(bit(l, i), 0.0)
    for (l, m), lam in frag.two_mode.items():
        for i, j in itertools.product(range(sizes[l]), range(sizes[m])):
            c = lam[i, j] / 4
            add(0, c)
            add(bit(l, i), -c)
            add(bit(m, j), -c)
            add(bit(l, i) | bit(m, j), c)
    for (l, m, n), xi in frag.three_mode.items():
        for pair in ((l, m), (l, n), (m, n)):
            for i, j in itertools.product(range(sizes[pair[0]]), range(sizes[pair[1]])):
                add(bit(pair[0], i) | bit(pair[1], j), 0.0)
        for i, j, k in itertools.product(range(sizes[l]), range(sizes[m]), range(sizes[n])):
            c = xi[i, j, k] / 8
            a, b, d = bit(l, i), bit(m, j), bit(n, k)
            add(0, c)
            for s in (a, b, d):
                add(s, -c)
            for s in (a | b, a | d, b | d):
                add(s, c)
            add(a | b | d, -c)
    if not keep_zeros:
        words = {k: v for k, v in words.items() if k == 0 or v != 0}
    return words


def _csa_hamiltonian(frag: ChristiansenCSA) -> ChristiansenHamiltonian:
    h, g, f = frag.tensors()
    return ChristiansenHamiltonian(tuple(h), g, f, None, frag.constant)


def _fock_diag(frag, sizes) -> np.ndarray:
    grids = np.meshgrid(*[np.arange(s, dtype=float) for s in sizes], indexing="ij")
    n = [g.reshape(-1) for g in grids]
    if isinstance(frag, BosonicQuadratic):
        return frag.constant + sum(e * n[l] for l, e in enumerate(frag.eps))
    out = np.zeros(int(np.prod(sizes)))
    M = len(sizes)
    for l in range(M):
        for m in range(l, M):
            out = out + frag.eta[l, m] * n[l] * n[m]
    return out


@lru_cache(maxsize=256)
def _gaussian_factors_cached(key, sizes):
    alpha, beta, gamma, d1, chi, d2 = (np.array(v) for v in key)
    M = len(sizes)
    z = np.zeros((M, M))
    zg = np.zeros(M)
    disp = expm(truncated_generator(z, z, gamma, sizes))
    bs1 = expm(truncated_generator(d1, z, zg, sizes))
    sq = expm(truncated_generator(z, np.diag(2 * chi), zg, sizes))
    bs2 = expm(truncated_generator(d2, z, zg, sizes))
    return disp @ bs1 @ sq @ bs2


def _bogoliubov_matrix(frag, sizes) -> np.ndarray:
    """Truncated ``B = D(gamma) BS(delta1) S(chi) BS(delta2)``."""
    g = frag.gaussian
    key = tuple(tuple(np.atleast_1d(np.asarray(v, float)).ravel().tolist()) if np.ndim(v) < 2 else
                tuple(map(tuple, np.asarray(v, float).tolist())) for v in
                (g.alpha, g.beta, g.gamma, g.delta1, g.chi, g.delta2))
    return _gaussian_factors_cached(key, tuple(sizes))


def fragment_matrix(frag, space: Space):
    """Dense Hermitian matrix of a fragment on ``space``.

    Pauli groups on a qubit space return a PauliSum (use ``to_dense``).
    """
    if isinstance(frag, PauliGroup):
        _require(space, "qubit", frag)
        return frag.terms
    if isinstance(frag, ChristiansenCSA):
        if space.kind == "qubit":
            return encode_christiansen(_csa_hamiltonian(frag))
        if space.kind == "fock":
            return christiansen_dense(_csa_hamiltonian(frag))
        raise ValueError("Christiansen fragment cannot act on a grid")
    if isinstance(frag, (BosonicQuadratic, BosonicQuartic)):
        _require(space, "fock", frag)
        return fragment_symbol(frag).dense(list(space.sizes))
    if isinstance(frag, RealSpaceKinetic):
        _require(space, "grid", frag)
        F = _fourier_matrix(space.num_modes, space.n_q)
        return F.conj().T @ (_kinetic_diag(frag.K, space.n_q)[:, None] * F)
    if isinstance(frag, RealSpacePotential):
        _require(space, "grid", frag)
        return np.diag(frag.evaluate(_grid_coords(space.num_modes, space.n_q))).astype(complex)
    raise TypeError(f"unsupported fragment {type(frag).__name__}")


def _require(space: Space, kind: str, frag):
    if space.kind != kind:
        raise ValueError(f"{type(frag).__name__} acts on a {kind} space, got {space.kind}")


def dense_matrix(op, max_dim: int = 1 << 14) -> np.ndarray:
    if isinstance(op, PauliSum):
        if (1 << op.n) > max_dim:
            raise ValueError(f"dense dimension {1 << op.n} exceeds cap {max_dim}")
        return op.to_dense(max_qubits=64)
    return np.asarray(op)


def fragment_propagator(frag, space: Space, t: float) -> np.ndarray:
    """Dense ``U exp(-i D t) U†`` assembled from the diagonalizing data."""
    eye = np.eye(space.dim, dtype=complex)
    return evolve_fragment(eye, frag, t, space)


# ------------------------------------------------------------- programs
#
# A program is a list of primitive operations applied in order to a state:
#   ("pauli", group_terms, t)       commuting Pauli rotations exp(-i t P)
#   ("givens", [W_l], label)        one-hot single-particle basis change
#   ("zdiag", words, t, label)      diagonal Z-word phases
#   ("fock_unitary", matrix)        dense Gaussian unitary on the Fock space
#   ("fock_diag", diag, t, frag)    diagonal number-operator phases
#   ("grid_kinetic", K, t)          centered-Fourier kinetic propagator
#   ("grid_potential", V, t)        potential phases


def _basis_op(frag):
    if isinstance(frag, ChristiansenCSA):
        return "csa"
    if isinstance(frag, (BosonicQuadratic, BosonicQuartic)):
        return "bogo"
    return None


def _palindrome(K: int, dt: float, steps: int, merge: bool = True):
    """Fragment schedule ``[(index, time)]`` in application order."""
    one = [(k, dt / 2) for k in range(K)] + [(k, dt / 2) for k in reversed(range(K))]
    seq = one * steps
    if not merge:
        return seq
    out: List[List] = []
    for k, t in seq:
        if out and out[-1][0] == k:
            out[-1][1] += t
        else:
            out.append([k, t])
    return [(k, t) for k, t in out]


def step_program(F: FragmentSet, dt: float, space: Space, steps: int = 1, merge: bool = True):
    """Primitive operations for ``steps`` second-order Trotter steps.

    With ``merge`` the half-steps of equal adjacent fragments are fused and
    consecutive diagonalizing unitaries are composed into one basis change
    (``U_b† U_a``).  Without it every fragment propagator is emitted in full.
    """
    frs = list(F.fragments)
    prog = []
    # identity-only groups commute with everything: one global phase
    ident = [fr for fr in frs if isinstance(fr, PauliGroup) and fr.terms.num_nonidentity() == 0]
    if ident:
        frs = [fr for fr in frs if not any(fr is g for g in ident)]
        c = sum(float(np.real(co)) for g in ident for _, co in g.terms.terms())
        prog.append(("phase", c * dt * steps))
    sched = _palindrome(len(frs), dt, steps, merge)
    prev = None  # fragment whose basis the state currently sits in
    for k, t in sched:
        fr = frs[k]
        kind = _basis_op(fr)
        if kind is not None:
            if merge and prev is not None and _basis_op(prev) == kind:
                prog.append(_transition(prev, fr, space))
            else:
                if prev is not None:
                    prog.append(_leave(prev, space))
                prog.append(_enter(fr, space))
            prog.append(_diag_op(fr, t, space))
            prev = fr
            if not merge:
                prog.append(_leave(fr, space))
                prev = None
        else:
            if prev is not None:
                prog.append(_leave(prev, space))
                prev = None
            prog.append(_plain_op(fr, t, space))
    if prev is not None:
        prog.append(_leave(prev, space))
    return prog


def _enter(fr, space):
    """Operation applying U† (move into the fragment's diagonal frame)."""
    if isinstance(fr, ChristiansenCSA):
        return ("givens", [W.T for W in _csa_basis_matrices(fr)], "enter")
    B = _bogoliubov_matrix(fr, space.sizes)
    return ("fock_unitary", B.conj().T, "enter")


def _leave(fr, space):
    if isinstance(fr, ChristiansenCSA):
        return ("givens", _csa_basis_matrices(fr), "leave")
    return ("fock_unitary", _bogoliubov_matrix(fr, space.sizes), "leave")


def _transition(a, b, space):
    """Operation ``U_b† U_a``."""
    if isinstance(a, ChristiansenCSA):
        Wa, Wb = _csa_basis_matrices(a), _csa_basis_matrices(b)
        return ("givens", [wb.T @ wa for wa, wb in zip(Wa, Wb)], "transition")
    Ba, Bb = _bogoliubov_matrix(a, space.sizes), _bogoliubov_matrix(b, space.sizes)
    return ("fock_unitary", Bb.conj().T @ Ba, "transition")


def _diag_op(fr, t, space):
    if isinstance(fr, ChristiansenCSA):
        _require(space, "qubit", fr)
        label = "rz_diag_one_mode" if fr.one_mode is not None else "rz_diag_multi_mode"
        return ("zdiag", _csa_zwords(fr, UnaryLayout(space.sizes)), t, label)
    _require(space, "fock", fr)
    return ("fock_diag", _fock_diag(fr, space.sizes), t, fr)


def _plain_op(fr, t, space):
    if isinstance(fr, PauliGroup):
        _require(space, "qubit", fr)
        return ("pauli", fr.terms, t)
    if isinstance(fr, RealSpaceKinetic):
        _require(space, "grid", fr)
        return ("grid_kinetic", fr.K, t)
    if isinstance(fr, RealSpacePotential):
        _require(space, "grid", fr)
        return ("grid_potential", fr.evaluate(_grid_coords(space.num_modes, space.n_q)), t)
    raise TypeError(f"unsupported fragment {type(fr).__name__}")


def _apply_givens(state, Ws, space: Space, counter=None):
    """Apply the one-hot image of ``prod_l W_l`` via XY Pauli rotations."""
    layout = UnaryLayout(space.sizes)
    n = layout.n_qubits
    for l, W in enumerate(Ws):
        rots, sign = givens_decompose(W, keep_zeros=True)
        off = layout.offsets[l]
        if sign < 0:
            # reflection of the last modal: (-1)^{n_last}
            last = 1 << (off + W.shape[0] - 1)
            _apply_zword_phases(state, n, {0: math.pi / 2, last: -math.pi / 2}, 1.0, counter, "rz_sign")
        # W = R_1 ... R_k, so R_k acts first
        for a, b, phi in reversed(rots):
            qa, qb = 1 << (off + a), 1 << (off + b)
            # exp(phi (E^b_a - E^a_b)) = exp(-i(-phi/2) Y_a X_b) exp(-i(phi/2) X_a Y_b)
            apply_pauli_rotation(state, PauliWord(qa | qb, qb, n), phi / 2, counter)
            apply_pauli_rotation(state, PauliWord(qa | qb, qa, n), -phi / 2, counter)
    return state


def run_program(state: np.ndarray, prog, space: Space, counter: RotationCounter = None) -> np.ndarray:
    """Apply a program in place and return the state."""
    n = space.n_qubits
    for op in prog:
        kind = op[0]
        if kind == "pauli":
            terms, t = op[1], op[2]
            for w, c in terms.terms():
                apply_pauli_rotation(state, w, float(np.real(c)) * t, counter)
        elif kind == "phase":
            state *= np.exp(-1j * op[1])
        elif kind == "givens":
            _apply_givens(state, op[1], space, counter)
            if counter is not None:
                counter.emit("basis_change")
        elif kind == "zdiag":
            _apply_zword_phases(state, n, op[1], op[2], counter, op[3])
        elif kind == "fock_unitary":
            state[...] = op[1] @ state
            if counter is not None:
                _count_bogoliubov(counter, space)
        elif kind == "fock_diag":
            diag, t, fr = op[1], op[2], op[3]
            state *= _bcast(np.exp(-1j * t * diag), state)
            if counter is not None:
                _count_fock_diag(counter, fr, space)
        elif kind == "grid_kinetic":
            K, t = op[1], op[2]
            phase = np.exp(-1j * t * _kinetic_diag(K, space.n_q))
            tmp = centered_fourier(state, space.num_modes, space.n_q)
            tmp *= _bcast(phase, tmp)
            state[...] = centered_fourier(tmp, space.num_modes, space.n_q, inverse=True)
            if counter is not None:
                counter.emit("kinetic")
        elif kind == "grid_potential":
            V, t = op[1], op[2]
            state *= _bcast(np.exp(-1j * t * V), state)
            if counter is not None:
                counter.emit("potential")
        else:
            raise ValueError(f"unknown program op {kind!r}")
    return state


def _count_fock_diag(counter: RotationCounter, fr, space: Space):
    """Z-word rotations of a number-operator polynomial in the unary image."""
    sizes = space.sizes
    M = len(sizes)
    singles = sum(sizes)
    if isinstance(fr, BosonicQuadratic):
        counter.emit("rz_diag_quadratic", singles)
        return
    pairs = sum(sizes[l] * sizes[m] for l in range(M) for m in range(l + 1, M))
    same = sum(n * (n - 1) // 2 for n in sizes)
    counter.emit("rz_diag_quartic", pairs + same + singles)


def _count_bogoliubov(counter: RotationCounter, space: Space, squared: bool = False):
    """Rotation slots of one Gaussian unitary in the unary image.

    Beam splitter: 8 words per (l > m, alpha_l, beta_m) with
    alpha, beta < N - 1.  Squeezing and displacement: one slot per modal
    transition and per modal respectively.
    """
    sizes = space.sizes
    M = len(sizes)
    bs = 0
    for l in range(M):
        for m in range(l):
            nl = sizes[l] if squared else sizes[l] - 1
            nm = sizes[m] if squared else sizes[m] - 1
            bs += 8 * nl * nm
    counter.emit("rz_beam_splitter", bs)
    counter.emit("rz_squeeze", sum(n - 1 for n in sizes))
    counter.emit("rz_displacement", sum(sizes))
    counter.emit("bogoliubov")


def evolve_fragment(state: np.ndarray, frag, t: float, space: Space, counter: RotationCounter = None):
    """In-place ``state <- exp(-i H_frag t) state`` through the fragment's
    diagonalizing decomposition."""
    if state.shape[0] != space.dim:
        raise ValueError(f"state dimension {state.shape[0]} does not match space dimension {space.dim}")
    if not np.iscomplexobj(state):
        raise TypeError("state must be complex")
    kind = _basis_op(frag)
    if kind is None:
        prog = [_plain_op(frag, t, space)]
    else:
        prog = [_enter(frag, space), _diag_op(frag, t, space), _leave(frag, space)]
    return run_program(state, prog, space, counter)


def trotter_step(state: np.ndarray, F: FragmentSet, dt: float, space: Space, merge: bool = True,
                 counter: RotationCounter = None):
    """One symmetric second-order step in the stored fragment order."""
    return run_program(state, step_program(F, dt, space, 1, merge), space, counter)


def compile_program(prog, space: Space, max_dim: int = 1 << 12) -> np.ndarray:
    """Dense unitary of a program (columns = images of basis states)."""
    if space.dim > max_dim:
        raise ValueError(f"dimension {space.dim} exceeds compile cap {max_dim}")
    U = np.eye(space.dim, dtype=complex)
    return run_program(U, prog, space)


def evolve(state: np.ndarray, F: FragmentSet, plan, space: Space, hook: Callable = None,
           merge: bool = True, compile_max_dim: int = 1 << 10) -> np.ndarray:
    """Advance ``plan.k_max`` outer steps of ``plan.r`` Trotter steps each.

    Each outer step covers exactly ``plan.tau`` (step length tau / r, which
    never exceeds the planned step).  ``hook(k, state)`` is called for
    k = 0..k_max.  Within an outer step the boundary half-steps telescope.
    """
    psi = np.array(state, dtype=complex)
    prog = step_program(F, plan.tau / plan.r, space, plan.r, merge)
    if hook is not None:
        hook(0, psi)
    idx = space.physical_indices()
    outside = np.linalg.norm(psi) ** 2 - np.linalg.norm(psi[idx]) ** 2
    block_U = None
    if space.kind == "qubit" and outside < 1e-20 and len(idx) <= compile_max_dim:
        # compile the one-hot block only, provided the step does not leak out of it
        block = np.zeros((space.dim, len(idx)), dtype=complex)
        block[idx, np.arange(len(idx))] = 1.0
        full = run_program(block, prog, space)
        if abs(np.linalg.norm(full) ** 2 - np.linalg.norm(full[idx]) ** 2) < 1e-20 * len(idx):
            block_U = full[idx]
    if block_U is not None:
        U = block_U
        sub = psi[idx]
        for k in range(1, plan.k_max + 1):
            sub = U @ sub
            if hook is not None:
                psi = np.zeros(space.dim, dtype=complex)
                psi[idx] = sub
                hook(k, psi)
        return space.embed(sub)
    U = compile_program(prog, space, compile_max_dim) if space.dim <= compile_max_dim else None
    for k in range(1, plan.k_max + 1):
        psi = U @ psi if U is not None else run_program(psi, prog, space)
        if hook is not None:
            hook(k, psi)
    return psi


# ------------------------------------------------------------ spectra


def autocorrelation(F: FragmentSet, trial: np.ndarray, plan, space: Space, merge: bool = True) -> np.ndarray:
    """``C(k tau) = <psi|psi_k>`` for k = 0..k_max."""
    psi0 = np.asarray(trial, dtype=complex)
    nrm = np.linalg.norm(psi0)
    if abs(nrm - 1) > 1e-10:
        raise ValueError(f"trial state is not normalized (norm {nrm})")
    C = np.zeros(plan.k_max + 1, dtype=complex)

    def hook(k, psi):
        C[k] = np.vdot(psi0, psi)

    evolve(psi0, F, plan, space, hook, merge)
    return C


def exact_autocorrelation(H, trial: np.ndarray, tau: float, k_max: int, max_dim: int = 1 << 14):
    """Autocorrelation from a dense eigendecomposition of ``H``."""
    Hd = dense_matrix(H, max_dim)
    if Hd.shape[0] > max_dim:
        raise ValueError(f"dense dimension {Hd.shape[0]} exceeds cap {max_dim}")
    E, V = np.linalg.eigh(Hd)
    w = np.abs(V.conj().T @ trial) ** 2
    k = np.arange(k_max + 1)
    return (w[None, :] * np.exp(-1j * np.outer(k * tau, E))).sum(axis=1), E, w


@dataclass(frozen=True)
class SpectrumResult:
    """Broadened spectrum on a cm^-1 axis plus the data it came from."""

    omega_cm1: np.ndarray
    intensity: np.ndarray
    autocorrelation: np.ndarray
    tau: float
    zpe: float
    eta_cm1: float


def spectrum(C: np.ndarray, tau: float, eta_cm1: float = 10.0, zpe: float = 0.0,
             omega_cm1: Optional[np.ndarray] = None) -> SpectrumResult:
    """``sigma(w) = Re sum_k w_k C(k tau) exp(i (w + zpe) k tau - eta k tau)``
    with trapezoid end weight ``w_0 = 1/2``.

    Args:
        C: Autocorrelation samples.
        tau: Sample spacing (a.u. time).
        eta_cm1: Lorentzian half width at half maximum, cm^-1.
        zpe: Energy subtracted from the axis (Hartree).
        omega_cm1: Frequency axis; default 0..Nyquist in 1 cm^-1 steps.
    """
    if eta_cm1 <= 0:
        raise ValueError("broadening must be positive")
    C = np.asarray(C, dtype=complex)
    if omega_cm1 is None:
        omega_cm1 = np.arange(0.0, math.floor(hartree_to_cm1(math.pi / tau)) + 1.0)
    omega_cm1 = np.asarray(omega_cm1, dtype=float)
    eta = cm1_to_hartree(eta_cm1)
    t = np.arange(len(C)) * tau
    wk = np.ones(len(C))
    wk[0] = 0.5
    w = cm1_to_hartree(omega_cm1) + zpe
    amp = (wk * C * np.exp(-eta * t))[None, :] * np.exp(1j * np.outer(w, t))
    return SpectrumResult(omega_cm1, amp.sum(axis=1).real * tau, C, tau, zpe, eta_cm1)


def exact_reference(H, trial: np.ndarray, tau: float, k_max: int, eta_cm1: float = 10.0, zpe: float = 0.0,
                    omega_cm1=None, max_dim: int = 1 << 14) -> SpectrumResult:
    """Reference spectrum: exact autocorrelation through the same transform."""
    C, _, _ = exact_autocorrelation(H, trial, tau, k_max, max_dim)
    return spectrum(C, tau, eta_cm1, zpe, omega_cm1)


def find_peaks(res: SpectrumResult, rel_height: float = 0.05) -> np.ndarray:
    """Local maxima above ``rel_height`` of the maximum (cm^-1 positions,
    refined by parabolic interpolation)."""
    y, x = res.intensity, res.omega_cm1
    top = y.max()
    out = []
    for i in range(1, len(y) - 1):
        if y[i] >= y[i - 1] and y[i] > y[i + 1] and y[i] >= rel_height * top:
            den = y[i - 1] - 2 * y[i] + y[i + 1]
            shift = 0.5 * (y[i - 1] - y[i + 1]) / den if den != 0 else 0.0
            out.append(x[i] + shift * (x[i + 1] - x[i]))
    return np.array(out)


def peaks_match(test: SpectrumResult, ref: SpectrumResult, tol_cm1: float = 10.0, rel_height: float = 0.05):
    """(ok, max deviation) with every test peak within tol of a reference peak."""
    pt = find_peaks(test, rel_height)
    pr = find_peaks(ref, rel_height)
    if len(pt) == 0 or len(pr) == 0:
        return False, float("inf")
    dev = max(float(np.min(np.abs(pr - p))) for p in pt)
    return dev <= tol_cm1, dev


# ---------------------------------------------------------------- CSV


def write_autocorrelation_csv(path, C: np.ndarray, tau: float):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "t_au", "re_C", "im_C"])
        for k, c in enumerate(C):
            w.writerow([k, repr(float(k * tau)), repr(float(c.real)), repr(float(c.imag))])


def read_autocorrelation_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    C = np.array([float(r["re_C"]) + 1j * float(r["im_C"]) for r in rows])
    tau = float(rows[1]["t_au"]) if len(rows) > 1 else 0.0
    return C, tau


def write_spectrum_csv(path, res: SpectrumResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega_cm1", "intensity"])
        for x, y in zip(res.omega_cm1, res.intensity):
            w.writerow([repr(float(x)), repr(float(y))])


def read_spectrum_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["omega_cm1"]) for r in rows]), np.array([float(r["intensity"]) for r in rows])


# ------------------------------------------------------------- trial states


def _ho_q(N: int) -> np.ndarray:
    b, bd = _ladder(N)
    return (b + bd) / np.sqrt(2)


def product_dipole_state(sizes: Sequence[int], dipole: Optional[Sequence[float]] = None,
                         basis_rotations: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
    """Normalized ``mu |Phi_0>`` with ``mu = sum_i d_i q_i`` on the modal
    product basis (last mode fastest).

    ``basis_rotations[l]`` (rows = modals in the oscillator basis) express
    q in a VSCF modal basis; the default is the oscillator basis.
    """
    M = len(sizes)
    d = np.ones(M) if dipole is None else np.asarray(dipole, dtype=float)
    vec = np.zeros(int(np.prod(sizes)))
    for l in range(M):
        q = _ho_q(sizes[l])
        if basis_rotations is not None:
            U = basis_rotations[l]
            q = U @ q @ U.T
        parts = []
        for m in range(M):
            e0 = np.zeros(sizes[m])
            e0[0] = 1.0
            parts.append(q @ e0 if m == l else e0)
        term = parts[0]
        for p in parts[1:]:
            term = np.kron(term, p)
        vec = vec + d[l] * term
    nrm = np.linalg.norm(vec)
    if nrm == 0:
        raise ValueError("dipole trial state has zero norm")
    return vec / nrm


def grid_ho_states(num_modes: int, n_q: int, n_max: int, omega=None) -> Tuple[np.ndarray, List[Tuple[int, ...]]]:
    """Oscillator product states sampled on the grid (columns, normalized)."""
    q = grid_points(n_q)
    delta = q[1] - q[0]
    phi = ho_functions(n_max, q) * np.exp(-0.5 * q ** 2) * np.sqrt(delta)
    phi = phi / np.linalg.norm(phi, axis=1, keepdims=True)
    labels = list(itertools.product(range(n_max), repeat=num_modes))
    cols = []
    for lab in labels:
        v = phi[lab[0]]
        for i in lab[1:]:
            v = np.kron(v, phi[i])
        cols.append(v)
    return np.array(cols).T, labels


def grid_dipole_state(num_modes: int, n_q: int, dipole: Optional[Sequence[float]] = None) -> np.ndarray:
    """Normalized ``mu(q) Phi_0(q)`` on the grid."""
    d = np.ones(num_modes) if dipole is None else np.asarray(dipole, dtype=float)
    X = _grid_coords(num_modes, n_q)
    phi0 = np.exp(-0.5 * np.sum(X ** 2, axis=1))
    vec = (X @ d) * phi0
    nrm = np.linalg.norm(vec)
    if nrm == 0:
        raise ValueError("dipole trial state has zero norm")
    return (vec / nrm).astype(complex)


def reference_state(space: Space) -> np.ndarray:
    """Mean-field ground state ``|Phi_0>`` in ``space``."""
    if space.kind == "grid":
        X = _grid_coords(space.num_modes, space.n_q)
        v = np.exp(-0.5 * np.sum(X ** 2, axis=1)).astype(complex)
        return v / np.linalg.norm(v)
    vec = np.zeros(int(np.prod(space.sizes)))
    vec[0] = 1.0
    return space.embed(vec) if space.kind == "qubit" else vec.astype(complex)


def trial_state(space: Space, dipole=None, basis_rotations=None) -> np.ndarray:
    """Normalized dipole trial state embedded in ``space``."""
    if space.kind == "grid":
        return grid_dipole_state(space.num_modes, space.n_q, dipole)
    vec = product_dipole_state(space.sizes, dipole, basis_rotations)
    return space.embed(vec) if space.kind == "qubit" else vec.astype(complex)


def count_rotations(F: FragmentSet, space: Space, steps: int = 1, dt: float = 1.0, state=None) -> RotationCounter:
    """Simulate ``steps`` merged Trotter steps and tally every emitted rotation."""
    counter = RotationCounter()
    psi = reference_state(space) if state is None else np.array(state, dtype=complex)
    run_program(psi, step_program(F, dt, space, steps, merge=True), space, counter)
    return counter
