"""Pauli-level fragmentations: one word per fragment, or greedy coloring
of the (qubit-wise) non-commutation graph."""

from __future__ import annotations

import numpy as np

from ..pauli import PauliSum, _popcount
from .base import FragmentSet, PauliGroup

__all__ = ["fragment_pf", "fragment_commuting", "pf_order"]


def _space(H: PauliSum):
    return {"kind": "qubit", "n_qubits": H.n}


def pf_order(H: PauliSum) -> np.ndarray:
    """Identity first, then descending |coefficient|, ties by (x, z) bits."""
    ident = ((H.xs | H.zs) == 0).astype(int)
    return np.lexsort((H.zs, H.xs, -np.abs(H.coeffs), -ident))


def _check_hermitian(H: PauliSum) -> PauliSum:
    if not H.is_hermitian(1e-10):
        raise ValueError("Hamiltonian must be Hermitian (real coefficients)")
    return H.real()


def fragment_pf(H: PauliSum, sizes=None) -> FragmentSet:
    """One fragment per Pauli word."""
    H = _check_hermitian(H)
    frs = tuple(
        PauliGroup(PauliSum([H.xs[k]], [H.zs[k]], [H.coeffs[k]], H.n)) for k in pf_order(H)
    )
    space = _space(H)
    if sizes is not None:
        space["sizes"] = list(sizes)
    return FragmentSet(frs, "pf", space, provenance={"ordering": "identity, |c| desc, bits"})


def conflict_matrix(H: PauliSum, mode: str) -> np.ndarray:
    x1, z1 = H.xs[:, None], H.zs[:, None]
    x2, z2 = H.xs[None, :], H.zs[None, :]
    if mode == "fc":
        return ((_popcount(x1 & z2) + _popcount(z1 & x2)) & 1).astype(bool)
    if mode == "qwc":
        both = (x1 | z1) & (x2 | z2)
        return (((x1 ^ x2) | (z1 ^ z2)) & both) != 0
    raise ValueError(f"unknown grouping mode {mode!r}")


def _greedy(conflict: np.ndarray, order: np.ndarray) -> np.ndarray:
    color = np.full(len(order), -1)
    for v in order:
        taken = set(color[conflict[v]].tolist())
        c = 0
        while c in taken:
            c += 1
        color[v] = c
    return color


def _dsatur(conflict: np.ndarray, rank: np.ndarray) -> np.ndarray:
    """DSATUR coloring; ``rank`` breaks ties (lower first)."""
    n = len(rank)
    color = np.full(n, -1)
    seen = [set() for _ in range(n)]
    degree = conflict.sum(axis=1)
    for _ in range(n):
        free = np.flatnonzero(color < 0)
        v = min(free, key=lambda u: (-len(seen[u]), -degree[u], rank[u]))
        c = 0
        while c in seen[v]:
            c += 1
        color[v] = c
        for u in np.flatnonzero(conflict[v]):
            seen[u].add(c)
    return color


def _coloring(H: PauliSum, mode: str, rank: np.ndarray):
    conflict = conflict_matrix(H, mode)
    color, method = _greedy(conflict, np.argsort(rank, kind="stable")), "largest_first"
    alt = _dsatur(conflict, rank)
    if alt.max() < color.max():
        color, method = alt, "dsatur"
    return color, method


def fragment_commuting(H: PauliSum, mode: str = "fc", sizes=None) -> FragmentSet:
    """Greedy coloring into commuting ("fc") or qubit-wise commuting ("qwc")
    groups.  Largest-first and DSATUR colorings are both tried and the one
    with fewer groups is kept (largest-first on ties).  For "fc" a greedy
    pass in qubit-wise color-class order is also tried, so "fc" never needs
    more groups than "qwc"."""
    mode = mode.lower()
    H = _check_hermitian(H)
    n_terms = len(H)
    conflict = conflict_matrix(H, mode)
    order = np.lexsort((H.zs, H.xs, -np.abs(H.coeffs), -conflict.sum(axis=1)))
    rank = np.empty(n_terms, dtype=int)
    rank[order] = np.arange(n_terms)
    color, method = _coloring(H, mode, rank) if n_terms else (np.zeros(0, dtype=int), "empty")
    if mode == "fc" and n_terms:
        qwc = _coloring(H, "qwc", rank)[0]
        alt = _greedy(conflict, np.lexsort((rank, qwc)))
        if alt.max() < color.max():
            color, method = alt, "qwc_class_order"
    frs = []
    for c in range(color.max() + 1 if n_terms else 0):
        members = np.flatnonzero(color == c)
        sub = PauliSum(H.xs[members], H.zs[members], H.coeffs[members], H.n)
        perm = pf_order(sub)
        frs.append(PauliGroup(PauliSum(sub.xs[perm], sub.zs[perm], sub.coeffs[perm], H.n, canonical=True)))
    space = _space(H)
    if sizes is not None:
        space["sizes"] = list(sizes)
    return FragmentSet(tuple(frs), mode, space, provenance={"coloring": method})
