"""Pauli words and sparse Pauli sums in symplectic form, plus the unary
(one qubit per modal) encoding of vibrational operators.

A word is stored as a pair of bit masks ``(x, z)`` where bit ``k`` refers to
qubit ``k``.  The operator it denotes is ``i^{|x & z|} X^x Z^z`` so that a
qubit with both bits set carries ``Y``.  Dense matrices and state vectors put
qubit 0 on the most significant bit of the basis index.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

from .units import PRUNE_TOL

__all__ = [
    "PauliWord",
    "PauliSum",
    "pauli_mul",
    "commutator",
    "expectation",
    "UnaryLayout",
    "unary_encode_excitation",
    "unary_encode_ladder",
    "encode_mode_operators",
    "encode_christiansen",
    "one_hot_indices",
]

_U64 = np.uint64


def _popcount(a) -> np.ndarray:
    return np.bitwise_count(np.asarray(a, dtype=_U64)).astype(np.int64)


_PHASES = np.array([1, 1j, -1, -1j])


@dataclass(frozen=True, order=True)
class PauliWord:
    x: int
    z: int
    n: int

    def __post_init__(self):
        if self.n < 1 or self.n > 64:
            raise ValueError("qubit count must be in [1, 64]")
        if (self.x | self.z) >> self.n:
            raise ValueError("mask exceeds qubit count")

    @classmethod
    def from_string(cls, text: str, n: int) -> "PauliWord":
        x = z = 0
        for tok in text.split():
            m = re.fullmatch(r"([IXYZ])(\d+)", tok.upper())
            if not m:
                raise ValueError(f"bad Pauli token {tok!r}")
            p, k = m.group(1), int(m.group(2))
            if p in "XY":
                x |= 1 << k
            if p in "ZY":
                z |= 1 << k
        return cls(x, z, n)

    def label(self) -> str:
        toks = []
        for k in range(self.n):
            xb, zb = (self.x >> k) & 1, (self.z >> k) & 1
            if xb or zb:
                toks.append(("Y" if xb and zb else "X" if xb else "Z") + str(k))
        return " ".join(toks) if toks else "I"

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def commutes(self, other: "PauliWord") -> bool:
        return (bin(self.x & other.z).count("1") + bin(self.z & other.x).count("1")) % 2 == 0

    def qubitwise_commutes(self, other: "PauliWord") -> bool:
        both = (self.x | self.z) & (other.x | other.z)
        return ((self.x ^ other.x) | (self.z ^ other.z)) & both == 0

    def matrix(self) -> np.ndarray:
        return PauliSum.from_words([self], [1.0], self.n).to_dense()


def pauli_mul(a: PauliWord, b: PauliWord) -> Tuple[PauliWord, complex]:
    """Product ``a b = phase * c`` of two words."""
    if a.n != b.n:
        raise ValueError("qubit counts differ")
    x, z = a.x ^ b.x, a.z ^ b.z
    pc = lambda v: bin(v).count("1")  # noqa: E731
    e = (pc(a.x & a.z) + pc(b.x & b.z) - pc(x & z) + 2 * pc(a.z & b.x)) % 4
    return PauliWord(x, z, a.n), complex(_PHASES[e])


def _bitrev_masks(m: np.ndarray, n: int) -> np.ndarray:
    """Map qubit-bit masks to basis-index masks (qubit 0 is most significant)."""
    out = np.zeros_like(m)
    for k in range(n):
        out |= ((m >> _U64(k)) & _U64(1)) << _U64(n - 1 - k)
    return out


class PauliSum:
    """Immutable sparse linear combination of Pauli words."""

    __slots__ = ("xs", "zs", "coeffs", "n")

    def __init__(self, xs, zs, coeffs, n: int, canonical: bool = False):
        xs = np.asarray(xs, dtype=_U64).reshape(-1)
        zs = np.asarray(zs, dtype=_U64).reshape(-1)
        cs = np.asarray(coeffs, dtype=complex).reshape(-1)
        if not canonical:
            xs, zs, cs = _canonicalize(xs, zs, cs)
        self.xs, self.zs, self.coeffs, self.n = xs, zs, cs, int(n)
        for arr in (self.xs, self.zs, self.coeffs):
            arr.setflags(write=False)

    # construction -------------------------------------------------------
    @classmethod
    def zero(cls, n: int) -> "PauliSum":
        return cls([], [], [], n, canonical=True)

    @classmethod
    def identity(cls, n: int, c: float = 1.0) -> "PauliSum":
        return cls([0], [0], [c], n)

    @classmethod
    def from_words(cls, words: Sequence[PauliWord], coeffs: Sequence[complex], n: int) -> "PauliSum":
        return cls([w.x for w in words], [w.z for w in words], list(coeffs), n)

    @classmethod
    def from_dict(cls, terms: Mapping[PauliWord, complex], n: int) -> "PauliSum":
        return cls.from_words(list(terms), list(terms.values()), n)

    @classmethod
    def single(cls, label: str, n: int, c: complex = 1.0) -> "PauliSum":
        w = PauliWord.from_string(label, n)
        return cls([w.x], [w.z], [c], n)

    # basic properties ---------------------------------------------------
    def __len__(self) -> int:
        return self.coeffs.size

    def words(self):
        return [PauliWord(int(x), int(z), self.n) for x, z in zip(self.xs, self.zs)]

    def terms(self):
        return list(zip(self.words(), self.coeffs))

    def to_dict(self) -> Dict[PauliWord, complex]:
        return dict(self.terms())

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.coeffs.imag) <= tol))

    def real(self, tol: float = 1e-10) -> "PauliSum":
        """Drop imaginary parts after checking they vanish."""
        if np.any(np.abs(self.coeffs.imag) > tol * max(1.0, np.max(np.abs(self.coeffs), initial=0))):
            raise ValueError("Pauli sum is not Hermitian")
        return PauliSum(self.xs, self.zs, self.coeffs.real, self.n, canonical=True)

    def num_nonidentity(self) -> int:
        return int(np.sum((self.xs | self.zs) != 0))

    def norm1(self) -> float:
        return float(np.sum(np.abs(self.coeffs)))

    def norm2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    # algebra --------------------------------------------------------------
    def _check(self, other: "PauliSum"):
        if self.n != other.n:
            raise ValueError("qubit counts differ")

    def __add__(self, other: "PauliSum") -> "PauliSum":
        self._check(other)
        return PauliSum(
            np.concatenate([self.xs, other.xs]),
            np.concatenate([self.zs, other.zs]),
            np.concatenate([self.coeffs, other.coeffs]),
            self.n,
        )

    def __neg__(self) -> "PauliSum":
        return PauliSum(self.xs, self.zs, -self.coeffs, self.n, canonical=True)

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-other)

    def __mul__(self, c) -> "PauliSum":
        if isinstance(c, PauliSum):
            return self @ c
        return PauliSum(self.xs, self.zs, self.coeffs * c, self.n)

    __rmul__ = __mul__

    def __matmul__(self, other: "PauliSum") -> "PauliSum":
        self._check(other)
        xs, zs, cs = _products(self, other, anticommuting_only=False)
        return PauliSum(xs, zs, cs, self.n)

    def __eq__(self, other) -> bool:
        return isinstance(other, PauliSum) and self.allclose(other, 0.0)

    def allclose(self, other: "PauliSum", atol: float = 1e-12) -> bool:
        diff = self - other
        return bool(np.all(np.abs(diff.coeffs) <= atol))

    def __repr__(self) -> str:
        return f"PauliSum(n={self.n}, terms={len(self)})"

    # dense realizations ---------------------------------------------------
    def _index_masks(self):
        return _bitrev_masks(self.xs, self.n), _bitrev_masks(self.zs, self.n)

    def _phases(self) -> np.ndarray:
        return _PHASES[_popcount(self.xs & self.zs) % 4]

    def to_dense(self, max_qubits: int = 14) -> np.ndarray:
        if self.n > max_qubits:
            raise ValueError(f"{self.n} qubits exceeds dense cap of {max_qubits}")
        dim = 1 << self.n
        idx = np.arange(dim, dtype=_U64)
        out = np.zeros((dim, dim), dtype=complex)
        xi, zi = self._index_masks()
        for x, z, c, ph in zip(xi, zi, self.coeffs, self._phases()):
            sign = 1 - 2 * (_popcount(idx & z) & 1)
            out[(idx ^ x).astype(np.int64), idx.astype(np.int64)] += c * ph * sign
        return out

    def apply(self, state: np.ndarray) -> np.ndarray:
        """Return ``P @ state`` for a vector or a (dim, k) block."""
        dim = 1 << self.n
        if state.shape[0] != dim:
            raise ValueError("state dimension mismatch")
        idx = np.arange(dim, dtype=_U64)
        out = np.zeros(state.shape, dtype=complex)
        xi, zi = self._index_masks()
        for x, z, c, ph in zip(xi, zi, self.coeffs, self._phases()):
            src = (idx ^ x).astype(np.int64)
            sign = (1 - 2 * (_popcount((idx ^ x) & z) & 1)) * (c * ph)
            if state.ndim == 1:
                out += sign * state[src]
            else:
                out += sign[:, None] * state[src]
        return out

    def diagonal_on(self, basis_indices: np.ndarray) -> np.ndarray:
        """``<b|P|b>`` for computational basis indices ``b``."""
        b = np.asarray(basis_indices, dtype=_U64)
        xi, zi = self._index_masks()
        keep = xi == 0
        if not np.any(keep):
            return np.zeros(b.size, dtype=complex)
        signs = 1 - 2 * (_popcount(b[:, None] & zi[keep][None, :]) & 1)
        return signs @ (self.coeffs[keep] * self._phases()[keep])

    # text format ------------------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for w, c in self.terms():
            c = complex(c)
            cs = repr(c.real) if abs(c.imag) == 0 else f"{c.real!r}{c.imag:+}j"
            lines.append(f"{cs} {w.label()}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, n: int, keep_order: bool = False) -> "PauliSum":
        """Parse ``to_text`` output.  ``keep_order`` preserves the line order
        (duplicate words are then an error)."""
        words, coeffs = [], []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            head, _, rest = line.partition(" ")
            try:
                c = complex(head)
            except ValueError:
                raise ValueError(f"line {lineno}: bad coefficient {head!r}") from None
            words.append(PauliWord.from_string("" if rest.strip() == "I" else rest, n))
            coeffs.append(c)
        if keep_order and words:
            if len(set(words)) != len(words):
                raise ValueError("duplicate Pauli words")
            return cls([w.x for w in words], [w.z for w in words], coeffs, n, canonical=True)
        return cls.from_words(words, coeffs, n)


def _canonicalize(xs, zs, cs):
    if xs.size == 0:
        return xs, zs, cs
    keys = np.stack([xs, zs], axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    acc = np.zeros(len(uniq), dtype=complex)
    np.add.at(acc, inv.reshape(-1), cs)
    # drop only cancellation noise, relative to what was summed into each word
    scale = np.zeros(len(uniq))
    np.add.at(scale, inv.reshape(-1), np.abs(cs))
    tiny = PRUNE_TOL * scale
    acc.real[np.abs(acc.real) <= tiny] = 0.0
    acc.imag[np.abs(acc.imag) <= tiny] = 0.0
    keep = acc != 0
    return (
        np.ascontiguousarray(uniq[keep, 0]),
        np.ascontiguousarray(uniq[keep, 1]),
        acc[keep],
    )


def _products(a: PauliSum, b: PauliSum, anticommuting_only: bool):
    x1, z1, c1 = a.xs[:, None], a.zs[:, None], a.coeffs[:, None]
    x2, z2, c2 = b.xs[None, :], b.zs[None, :], b.coeffs[None, :]
    x3, z3 = x1 ^ x2, z1 ^ z2
    e = (_popcount(x1 & z1) + _popcount(x2 & z2) - _popcount(x3 & z3) + 2 * _popcount(z1 & x2)) % 4
    cs = c1 * c2 * _PHASES[e]
    if anticommuting_only:
        anti = ((_popcount(x1 & z2) + _popcount(z1 & x2)) & 1).astype(bool)
        return x3[anti], z3[anti], 2 * cs[anti]
    return x3.reshape(-1), z3.reshape(-1), cs.reshape(-1)


def commutator(a: PauliSum, b: PauliSum) -> PauliSum:
    """Exact ``[a, b] = ab - ba``; only anticommuting word pairs contribute."""
    a._check(b)
    if len(a) == 0 or len(b) == 0:
        return PauliSum.zero(a.n)
    xs, zs, cs = _products(a, b, anticommuting_only=True)
    return PauliSum(xs, zs, cs, a.n)


def expectation(P: PauliSum, state: np.ndarray) -> float:
    val = np.vdot(state, P.apply(state))
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ValueError(f"expectation has imaginary part {val.imag}")
    return float(val.real)


# unary encoding --------------------------------------------------------------


@dataclass(frozen=True)
class UnaryLayout:
    """Mode-major, modal-minor qubit layout."""

    sizes: Tuple[int, ...]

    @property
    def offsets(self) -> Tuple[int, ...]:
        return tuple(int(x) for x in np.concatenate([[0], np.cumsum(self.sizes)[:-1]]))

    @property
    def n_qubits(self) -> int:
        return int(sum(self.sizes))

    def qubit(self, mode: int, modal: int) -> int:
        if not 0 <= modal < self.sizes[mode]:
            raise ValueError(f"modal {modal} out of range for mode {mode}")
        return self.offsets[mode] + modal


def one_hot_indices(sizes: Sequence[int]) -> np.ndarray:
    """Basis indices of the physical one-hot states, in product order
    (last mode fastest), matching the dense modal product space."""
    layout = UnaryLayout(tuple(sizes))
    n = layout.n_qubits
    grids = np.meshgrid(*[np.arange(s) for s in sizes], indexing="ij")
    out = np.zeros(grids[0].shape, dtype=np.int64)
    for l, g in enumerate(grids):
        q = layout.offsets[l] + g
        out |= np.left_shift(1, n - 1 - q)
    return out.reshape(-1)


def _mode_word_basis(offset: int, N: int):
    """Pauli words on one mode's qubits and the complex map E^a_b -> words.

    Returns (xs, zs, D) with D of shape (N*N, W): row ``a*N+b`` lists the
    word coefficients of E^a_b.
    """
    xs, zs = [0], [0]
    word_id = {(0, 0): 0}

    def wid(x, z):
        if (x, z) not in word_id:
            word_id[(x, z)] = len(xs)
            xs.append(x)
            zs.append(z)
        return word_id[(x, z)]

    rows = np.zeros((N * N, 1 + N + 4 * N * (N - 1) // 2), dtype=complex)
    for a in range(N):
        qa = 1 << (offset + a)
        rows[a * N + a, wid(0, 0)] += 0.5
        rows[a * N + a, wid(0, qa)] += -0.5
    for a in range(N):
        for b in range(N):
            if a == b:
                continue
            qa, qb = 1 << (offset + a), 1 << (offset + b)
            # (x_a - i y_a)(x_b + i y_b)/4 ; y_k has both x and z bits set
            r = a * N + b
            rows[r, wid(qa | qb, 0)] += 0.25
            rows[r, wid(qa | qb, qb)] += 0.25j
            rows[r, wid(qa | qb, qa)] += -0.25j
            rows[r, wid(qa | qb, qa | qb)] += 0.25
    W = len(xs)
    return np.array(xs, dtype=_U64), np.array(zs, dtype=_U64), rows[:, :W]


_BASIS_CACHE: Dict[Tuple[int, int], tuple] = {}


def _mode_basis(offset: int, N: int):
    key = (offset, N)
    if key not in _BASIS_CACHE:
        _BASIS_CACHE[key] = _mode_word_basis(offset, N)
    return _BASIS_CACHE[key]


def encode_mode_operators(ops: Mapping[int, np.ndarray], layout: UnaryLayout, coeff: complex = 1.0) -> PauliSum:
    """Unary image of ``coeff * prod_l ops[l]`` where each ``ops[l]`` is an
    N_l x N_l matrix acting on mode ``l`` (identity on other modes)."""
    xs = np.zeros(1, dtype=_U64)
    zs = np.zeros(1, dtype=_U64)
    cs = np.array([coeff], dtype=complex)
    for l in sorted(ops):
        N = layout.sizes[l]
        O = np.asarray(ops[l], dtype=complex)
        if O.shape != (N, N):
            raise ValueError(f"operator on mode {l} must be {N}x{N}")
        wx, wz, D = _mode_basis(layout.offsets[l], N)
        wc = O.reshape(-1) @ D
        keep = np.abs(wc) > 0
        wx, wz, wc = wx[keep], wz[keep], wc[keep]
        xs = (xs[:, None] | wx[None, :]).reshape(-1)
        zs = (zs[:, None] | wz[None, :]).reshape(-1)
        cs = (cs[:, None] * wc[None, :]).reshape(-1)
    return PauliSum(xs, zs, cs, layout.n_qubits)


def unary_encode_excitation(l: int, a: int, b: int, layout: UnaryLayout) -> PauliSum:
    """Unary image of E^a_b = |a><b| on mode ``l``."""
    N = layout.sizes[l]
    if not (0 <= a < N and 0 <= b < N):
        raise ValueError("modal index out of range")
    E = np.zeros((N, N))
    E[a, b] = 1.0
    return encode_mode_operators({l: E}, layout)


def ladder_operator_matrix(N: int, kind: str) -> np.ndarray:
    b = np.diag(np.sqrt(np.arange(1, N, dtype=float)), 1)
    if kind == "lower":
        return b.astype(complex)
    if kind == "raise":
        return b.T.astype(complex)
    if kind == "position":
        return ((b + b.T) / np.sqrt(2)).astype(complex)
    if kind == "momentum":
        return 1j * (b.T - b) / np.sqrt(2)
    if kind == "number":
        return np.diag(np.arange(N, dtype=float)).astype(complex)
    raise ValueError(f"unknown ladder kind {kind!r}")


def unary_encode_ladder(l: int, layout: UnaryLayout, kind: str) -> PauliSum:
    """Unary image of b, b^dagger, q, p or n on mode ``l``."""
    N = layout.sizes[l]
    if N < 2:
        raise ValueError("truncation must be at least 2")
    return encode_mode_operators({l: ladder_operator_matrix(N, kind)}, layout)


def encode_christiansen(H) -> PauliSum:
    """Hermitian Pauli sum of a Christiansen Hamiltonian (unary layout)."""
    layout = UnaryLayout(H.sizes)
    n = layout.n_qubits
    total = PauliSum.identity(n, H.constant) if H.constant else PauliSum.zero(n)
    parts = [total]
    for l, h in enumerate(H.h):
        parts.append(encode_mode_operators({l: h}, layout))
    for (l, m), t in H.g.items():
        parts.append(_encode_pair(t, l, m, layout))
    for (l, m, k), t in H.f.items():
        Nl, Nm = H.sizes[l], H.sizes[m]
        for a in range(Nl):
            for b in range(Nl):
                for c in range(Nm):
                    for d in range(Nm):
                        blk = t[a, b, c, d]
                        if not np.any(blk):
                            continue
                        E1 = np.zeros((Nl, Nl)); E1[a, b] = 1
                        E2 = np.zeros((Nm, Nm)); E2[c, d] = 1
                        parts.append(encode_mode_operators({l: E1, m: E2, k: blk}, layout))
    return _sum(parts, n).real()


def _encode_pair(t: np.ndarray, l: int, m: int, layout: UnaryLayout) -> PauliSum:
    Nl, Nm = layout.sizes[l], layout.sizes[m]
    xl, zl, Dl = _mode_basis(layout.offsets[l], Nl)
    xm, zm, Dm = _mode_basis(layout.offsets[m], Nm)
    C = Dl.T @ t.reshape(Nl * Nl, Nm * Nm) @ Dm
    xs = (xl[:, None] | xm[None, :]).reshape(-1)
    zs = (zl[:, None] | zm[None, :]).reshape(-1)
    return PauliSum(xs, zs, C.reshape(-1), layout.n_qubits)


def _sum(parts: Iterable[PauliSum], n: int) -> PauliSum:
    parts = list(parts)
    if not parts:
        return PauliSum.zero(n)
    return PauliSum(
        np.concatenate([p.xs for p in parts]),
        np.concatenate([p.zs for p in parts]),
        np.concatenate([p.coeffs for p in parts]),
        n,
    )


def sum_pauli(parts: Iterable[PauliSum], n: int) -> PauliSum:
    return _sum(parts, n)
