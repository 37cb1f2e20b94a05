"""Planar-rotation decomposition of special orthogonal matrices."""

from __future__ import annotations

import math
from typing import List, Tuple

import numpy as np

__all__ = ["givens_decompose", "givens_matrix", "givens_reconstruct"]


def givens_matrix(N: int, a: int, b: int, phi: float) -> np.ndarray:
    """Rotation in the (a, b) plane: |a> -> cos|a> + sin|b>."""
    R = np.eye(N)
    c, s = math.cos(phi), math.sin(phi)
    R[a, a] = R[b, b] = c
    R[b, a] = s
    R[a, b] = -s
    return R


def givens_decompose(U: np.ndarray, keep_zeros: bool = False):
    """Write ``U = D R_1 R_2 ... R_k`` with adjacent-pair planar rotations.

    Args:
        U: Real orthogonal N x N matrix.
        keep_zeros: Keep rotations whose angle vanishes (fixed circuit layout
            with exactly N(N-1)/2 entries).

    Returns:
        (rotations, sign) where rotations is a list of (a, b, phi) and
        ``sign`` is +1, or -1 when ``U`` had determinant -1; in that case
        the decomposition is of ``U`` with its last column negated.
    """
    U = np.array(U, dtype=float)
    N = U.shape[0]
    if U.shape != (N, N) or not np.allclose(U.T @ U, np.eye(N), atol=1e-10):
        raise ValueError("input is not orthogonal")
    sign = 1
    if np.linalg.det(U) < 0:
        U[:, -1] *= -1
        sign = -1
    A = U.copy()
    steps: List[Tuple[int, int, float]] = []
    for j in range(N - 1):
        for i in range(N - 1, j, -1):
            a, b = i - 1, i
            # rotate rows a, b so that A[b, j] vanishes
            phi = math.atan2(A[b, j], A[a, j])
            G = givens_matrix(N, a, b, phi)
            A = G.T @ A
            steps.append((a, b, phi))
    # A is now the identity, so U = G_1 G_2 ... G_k
    rots = [s for s in steps if keep_zeros or abs(s[2]) > 1e-15]
    return rots, sign


def givens_reconstruct(N: int, rotations, sign: int = 1) -> np.ndarray:
    U = np.eye(N)
    for a, b, phi in rotations:
        U = U @ givens_matrix(N, a, b, phi)
    if sign < 0:
        U[:, -1] *= -1
    return U
