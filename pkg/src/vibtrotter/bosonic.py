"""Normal-ordered polynomials in bosonic ladder operators.

An operator is stored by its normal symbol: for each degree, a vector of
coefficients over sorted multisets of the ``2M`` variables
``(b_0..b_{M-1}, b†_0..b†_{M-1})``.  The operator is obtained by placing all
creators to the left.  Products of affine forms in the ladder operators are
normal ordered with Wick's theorem.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from .model import VibrationalModel
from .pauli import PauliSum, UnaryLayout, encode_mode_operators, sum_pauli
from .units import PRUNE_TOL

__all__ = [
    "monomial_table",
    "BosonSymbol",
    "AffineForm",
    "wick_product",
    "model_symbol",
    "encode_bosonic",
    "ladder_power",
]


@lru_cache(maxsize=None)
def monomial_table(nvar: int, degree: int):
    """Sorted multisets of ``degree`` variables and the flat-index grouping.

    Returns (multisets, group) where ``group[f]`` is the multiset id of the
    flat index ``f`` of a (nvar,)*degree tensor.
    """
    multisets = list(itertools.combinations_with_replacement(range(nvar), degree))
    lookup = {m: k for k, m in enumerate(multisets)}
    if degree == 0:
        return multisets, np.zeros(1, dtype=np.int64)
    grid = np.indices((nvar,) * degree).reshape(degree, -1).T
    group = np.array([lookup[tuple(sorted(r))] for r in grid], dtype=np.int64)
    return multisets, group


def _reduce(T: np.ndarray, nvar: int) -> np.ndarray:
    """Monomial coefficients of a (not necessarily symmetric) tensor."""
    deg = T.ndim
    ms, group = monomial_table(nvar, deg)
    flat = T.reshape(-1)
    if np.iscomplexobj(flat):
        return np.bincount(group, flat.real, len(ms)) + 1j * np.bincount(group, flat.imag, len(ms))
    return np.bincount(group, flat, len(ms))


class BosonSymbol:
    """Normal symbol: ``{degree: coefficient vector}`` over ``num_modes``."""

    def __init__(self, num_modes: int, coeffs: Dict[int, np.ndarray] = None):
        self.num_modes = int(num_modes)
        self.coeffs: Dict[int, np.ndarray] = {}
        for deg, vec in sorted((coeffs or {}).items()):
            ms, _ = monomial_table(2 * self.num_modes, deg)
            vec = np.asarray(vec)
            if vec.shape != (len(ms),):
                raise ValueError("coefficient vector has the wrong length")
            self.coeffs[deg] = vec

    @property
    def nvar(self) -> int:
        return 2 * self.num_modes

    def copy(self) -> "BosonSymbol":
        return BosonSymbol(self.num_modes, {d: v.copy() for d, v in self.coeffs.items()})

    def degree_vec(self, deg: int) -> np.ndarray:
        if deg in self.coeffs:
            return self.coeffs[deg]
        ms, _ = monomial_table(self.nvar, deg)
        return np.zeros(len(ms))

    def __add__(self, other: "BosonSymbol") -> "BosonSymbol":
        out = self.copy()
        for d, v in other.coeffs.items():
            out.coeffs[d] = out.degree_vec(d) + v
        return out

    def __sub__(self, other: "BosonSymbol") -> "BosonSymbol":
        return self + other * -1.0

    def __mul__(self, c) -> "BosonSymbol":
        return BosonSymbol(self.num_modes, {d: v * c for d, v in self.coeffs.items()})

    __rmul__ = __mul__

    def real(self, tol: float = 1e-10) -> "BosonSymbol":
        out = {}
        for d, v in self.coeffs.items():
            if np.iscomplexobj(v):
                if np.any(np.abs(v.imag) > tol * max(1.0, np.max(np.abs(v)))):
                    raise ValueError("symbol has non-negligible imaginary coefficients")
                v = v.real
            out[d] = v
        return BosonSymbol(self.num_modes, out)

    def norm(self, degrees: Sequence[int]) -> float:
        return float(np.sqrt(sum(np.sum(np.abs(self.degree_vec(d)) ** 2) for d in degrees)))

    def terms(self, tol: float = 0.0):
        """Yield (creation powers, annihilation powers, coefficient)."""
        M = self.num_modes
        for d, vec in self.coeffs.items():
            ms, _ = monomial_table(self.nvar, d)
            for k in np.flatnonzero(np.abs(vec) > tol):
                cre = [0] * M
                ann = [0] * M
                for v in ms[k]:
                    if v < M:
                        ann[v] += 1
                    else:
                        cre[v - M] += 1
                yield tuple(cre), tuple(ann), vec[k]

    def dense(self, N) -> np.ndarray:
        """Matrix with truncated ladder operators (last mode fastest)."""
        sizes = _sizes(N, self.num_modes)
        dim = int(np.prod(sizes))
        out = np.zeros((dim, dim), dtype=complex)
        for cre, ann, c in self.terms():
            mat = np.ones((1, 1))
            for l, n in enumerate(sizes):
                mat = np.kron(mat, ladder_power(n, cre[l], ann[l]))
            out += c * mat
        if np.allclose(out.imag, 0):
            out = out.real
        return out

    def to_dict(self) -> dict:
        out = []
        for d, vec in self.coeffs.items():
            ms, _ = monomial_table(self.nvar, d)
            for k in np.flatnonzero(vec != 0):
                out.append({"vars": list(ms[k]), "coeff": float(np.real(vec[k]))})
        return {"num_modes": self.num_modes, "terms": out}

    @classmethod
    def from_dict(cls, d: dict) -> "BosonSymbol":
        M = int(d["num_modes"])
        coeffs: Dict[int, np.ndarray] = {}
        for t in d["terms"]:
            key = tuple(t["vars"])
            ms, _ = monomial_table(2 * M, len(key))
            coeffs.setdefault(len(key), np.zeros(len(ms)))
            coeffs[len(key)][ms.index(key)] += t["coeff"]
        return cls(M, coeffs)


def _sizes(N, M) -> List[int]:
    return [int(N)] * M if np.isscalar(N) else [int(x) for x in N]


@lru_cache(maxsize=None)
def _ladder(n: int):
    b = np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1)
    return b, b.T.copy()


def ladder_power(n: int, cre: int, ann: int) -> np.ndarray:
    """Truncated ``(b†)^cre b^ann`` on an n-level mode."""
    b, bd = _ladder(n)
    return np.linalg.matrix_power(bd, cre) @ np.linalg.matrix_power(b, ann)


class AffineForm:
    """``c · v + d`` with v = (b, b†)."""

    __slots__ = ("c", "d")

    def __init__(self, c, d=0.0):
        self.c = np.asarray(c)
        self.d = d


def _commuting_product(forms: Sequence[AffineForm], nvar: int) -> Dict[int, np.ndarray]:
    """Symbol of the normal-ordered (commuting) product of affine forms."""
    out: Dict[int, np.ndarray] = {}
    k = len(forms)
    for r in range(k + 1):
        for subset in itertools.combinations(range(k), r):
            const = 1.0
            for j in range(k):
                if j not in subset:
                    const = const * forms[j].d
            if const == 0:
                continue
            if r == 0:
                vec = np.array([const], dtype=complex)
            else:
                T = forms[subset[0]].c
                for j in subset[1:]:
                    T = np.multiply.outer(T, forms[j].c)
                vec = const * _reduce(np.asarray(T, dtype=complex), nvar)
            out[r] = out.get(r, 0) + vec
    return out


def _matchings(items: Tuple[int, ...]):
    """All partial matchings of an ordered tuple, as lists of (i, j) pairs."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for m in _matchings(rest):
        yield m
    for k, j in enumerate(rest):
        remaining = rest[:k] + rest[k + 1:]
        for m in _matchings(remaining):
            yield [(first, j)] + m


def wick_product(forms: Sequence[AffineForm], num_modes: int) -> BosonSymbol:
    """Normal symbol of the operator product ``L_1 L_2 ... L_k`` (left to right)."""
    M = num_modes
    nvar = 2 * M
    total: Dict[int, np.ndarray] = {}
    for match in _matchings(tuple(range(len(forms)))):
        scalar = 1.0
        used = set()
        for i, j in match:
            # contraction <L_i L_j> = [ann part of L_i, cre part of L_j]
            scalar = scalar * np.dot(forms[i].c[:M], forms[j].c[M:])
            used.update((i, j))
        if scalar == 0:
            continue
        rest = [forms[k] for k in range(len(forms)) if k not in used]
        for deg, vec in _commuting_product(rest, nvar).items():
            total[deg] = total.get(deg, 0) + scalar * vec
    return BosonSymbol(M, total)


def _q_form(i: int, M: int) -> AffineForm:
    c = np.zeros(2 * M, dtype=complex)
    c[i] = c[M + i] = 1 / np.sqrt(2)
    return AffineForm(c)


def _p_form(i: int, M: int) -> AffineForm:
    c = np.zeros(2 * M, dtype=complex)
    c[i] = -1j / np.sqrt(2)
    c[M + i] = 1j / np.sqrt(2)
    return AffineForm(c)


def model_symbol(model: VibrationalModel) -> BosonSymbol:
    """Normal symbol of the full vibrational Hamiltonian (including constant)."""
    M = model.num_modes
    sym = BosonSymbol(M, {0: np.array([model.constant], dtype=complex)})
    K = model.kinetic
    for i, j in itertools.product(range(M), repeat=2):
        if K[i, j] != 0:
            sym = sym + wick_product([_p_form(i, M), _p_form(j, M)], M) * K[i, j]
    for idx, c in model.monomials().items():
        sym = sym + wick_product([_q_form(i, M) for i in idx], M) * c
    sym = sym.real()
    sym.coeffs = {d: np.where(np.abs(v) < PRUNE_TOL, 0.0, v) for d, v in sym.coeffs.items()}
    return sym


def encode_symbol(sym: BosonSymbol, N) -> PauliSum:
    sizes = _sizes(N, sym.num_modes)
    layout = UnaryLayout(tuple(sizes))
    parts = []
    for cre, ann, c in sym.terms():
        ops = {l: ladder_power(sizes[l], cre[l], ann[l]) for l in range(sym.num_modes) if cre[l] or ann[l]}
        if not ops:
            parts.append(PauliSum.identity(layout.n_qubits, c))
        else:
            parts.append(encode_mode_operators(ops, layout, c))
    return sum_pauli(parts, layout.n_qubits).real()


def encode_bosonic(model: VibrationalModel, N) -> PauliSum:
    """Unary Pauli image of the normal-ordered bosonic Hamiltonian."""
    return encode_symbol(model_symbol(model), N)


def gaussian_action(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Matrix E with ``G v_k G† = sum_j E_kj v_j`` for
    ``G = exp(sum a_lm b†_l b_m + 1/2 sum b_lm (b†_l b†_m - b_l b_m))``."""
    L = np.block([[-alpha, -beta], [-beta, -alpha]])
    return expm(L)


def truncated_generator(alpha, beta, gamma, N) -> np.ndarray:
    """Anti-Hermitian generator of the Gaussian unitary on truncated modes.

    ``X = sum a_lm b†_l b_m + 1/2 sum b_lm (b†_l b†_m - b_l b_m)
          + sum g_l (b_l - b†_l)``
    """
    M = len(gamma)
    sizes = _sizes(N, M)
    dim = int(np.prod(sizes))
    ops = []
    for l, n in enumerate(sizes):
        b, bd = _ladder(n)
        ops.append((b, bd))

    def embed(mats):
        out = np.ones((1, 1))
        for l, n in enumerate(sizes):
            out = np.kron(out, mats.get(l, np.eye(n)))
        return out

    X = np.zeros((dim, dim))
    for l in range(M):
        for m in range(M):
            if alpha[l, m]:
                if l == m:
                    X += alpha[l, m] * embed({l: ops[l][1] @ ops[l][0]})
                else:
                    X += alpha[l, m] * embed({l: ops[l][1], m: ops[m][0]})
            if beta[l, m]:
                if l == m:
                    X += 0.5 * beta[l, m] * embed({l: ops[l][1] @ ops[l][1] - ops[l][0] @ ops[l][0]})
                else:
                    X += 0.5 * beta[l, m] * (embed({l: ops[l][1], m: ops[m][1]}) - embed({l: ops[l][0], m: ops[m][0]}))
        if gamma[l]:
            X += gamma[l] * embed({l: ops[l][0] - ops[l][1]})
    return X
