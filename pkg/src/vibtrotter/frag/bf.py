"""Bosonic greedy fragmentation with Bogoliubov-conjugated number polynomials.

Conventions (real parameters throughout):

* ``D(gamma) = exp(sum_l gamma_l (b_l - b†_l))`` so ``D b D† = b + gamma``.
* ``G(alpha, beta) = exp(sum alpha_lm b†_l b_m + 1/2 sum beta_lm (b†_l b†_m - b_l b_m))``
  with ``alpha`` antisymmetric and ``beta`` symmetric.
* ``B = D G`` and a fragment is ``B f(n) B†``.
* Beam splitter ``BS(delta) = G(delta, 0)``; squeezer
  ``S(chi) = exp(sum_l chi_l (b†_l² - b_l²))``.
* ``G = BS(delta1) S(chi) BS(delta2)``.

The q-block action ``A(U)`` is defined by ``U q U† = A(U) q``; for products
``A(U1 U2) = A(U2) A(U1)`` and ``A(G) = expm(-(alpha + beta))``.
"""

from __future__ import annotations

import itertools
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.linalg import expm, logm, sqrtm
from scipy.optimize import least_squares, linear_sum_assignment, minimize

from ..bosonic import AffineForm, BosonSymbol, gaussian_action, model_symbol, monomial_table, wick_product, _reduce
from ..model import VibrationalModel
from ..units import cm1_to_hartree
from .base import BosonicQuadratic, BosonicQuartic, FragmentSet, _Gaussian
from .cgf import DEFAULT_SEED

__all__ = [
    "fragment_bf",
    "bloch_messiah",
    "bogoliubov_diagonalize",
    "fragment_symbol",
    "gaussian_from_action",
    "q_action",
]


def _check_generator(alpha, beta):
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    if alpha.shape != beta.shape or alpha.shape[0] != alpha.shape[1]:
        raise ValueError("alpha and beta must be square matrices of equal size")
    if not np.allclose(alpha, -alpha.T, atol=1e-12):
        raise ValueError("alpha must be antisymmetric for a symplectic generator")
    if not np.allclose(beta, beta.T, atol=1e-12):
        raise ValueError("beta must be symmetric for a symplectic generator")
    return alpha, beta


def q_action(alpha, beta) -> np.ndarray:
    """``A(G)`` with ``G q G† = A q``."""
    alpha, beta = _check_generator(alpha, beta)
    return expm(-(alpha + beta))


def _real_log(A: np.ndarray) -> Optional[np.ndarray]:
    L = logm(A)
    if np.iscomplexobj(L):
        if np.max(np.abs(L.imag)) > 1e-9 * max(1.0, np.max(np.abs(L))):
            return None
        L = L.real
    return L


def gaussian_from_action(Aq: np.ndarray):
    """(alpha, beta) with ``q_action(alpha, beta) = Aq``, or None if ``Aq``
    has no real logarithm."""
    L = _real_log(Aq)
    if L is None:
        return None
    Z = -L
    return 0.5 * (Z - Z.T), 0.5 * (Z + Z.T)


def _bs_generator(O: np.ndarray) -> np.ndarray:
    """Antisymmetric ``delta`` with ``A(BS(delta)) = O`` (O special orthogonal)."""
    if O.shape[0] == 1:
        return np.zeros((1, 1))
    L = _real_log(O)
    if L is None:
        # rotation by pi in some plane: logm picks a complex branch; use the
        # real Schur form instead
        from scipy.linalg import schur

        T, Q = schur(O, output="real")
        Lt = np.zeros_like(T)
        i = 0
        n = T.shape[0]
        while i < n:
            if i + 1 < n and abs(T[i + 1, i]) > 1e-12:
                th = np.arctan2(T[i + 1, i], T[i, i])
                Lt[i + 1, i], Lt[i, i + 1] = th, -th
                i += 2
            elif T[i, i] < 0:
                Lt[i + 1, i], Lt[i, i + 1] = np.pi, -np.pi
                i += 2
            else:
                i += 1
        L = Q @ Lt @ Q.T
    L = 0.5 * (L - L.T)
    return -L


def bloch_messiah(alpha, beta):
    """Factor ``G(alpha, beta) = BS(delta1) S(chi) BS(delta2)``.

    Returns:
        (delta1, chi, delta2): antisymmetric beam-splitter generators and
        squeezing magnitudes.  ``A(BS(delta2)) A(S(chi)) A(BS(delta1))``
        equals ``A(G)``.

    Raises:
        ValueError: if alpha is not antisymmetric or beta not symmetric.
    """
    alpha, beta = _check_generator(alpha, beta)
    M = alpha.shape[0]
    if not np.any(alpha) and not np.any(beta):
        z = np.zeros((M, M))
        return z, np.zeros(M), z.copy()
    A = expm(-(alpha + beta))
    Oa, s, Obt = np.linalg.svd(A)
    Ob = Obt.T
    # align singular vectors with the mode labels so already-factored input
    # returns identity beam splitters
    _, perm = linear_sum_assignment(-np.abs(Oa))
    Oa, Ob, s = Oa[:, perm], Ob[:, perm], s[perm]
    sg = np.sign(np.diag(Oa))
    sg[sg == 0] = 1
    Oa, Ob = Oa * sg, Ob * sg
    if np.linalg.det(Oa) < 0:
        Oa[:, -1] *= -1
        Ob[:, -1] *= -1
    # A = Oa diag(s) Ob^T ;  A(S(chi)) = diag(exp(-2 chi))
    chi = -0.5 * np.log(s)
    return _bs_generator(Ob.T), chi, _bs_generator(Oa)


def _gaussian(alpha, beta, gamma) -> _Gaussian:
    d1, chi, d2 = bloch_messiah(alpha, beta)
    return _Gaussian(np.asarray(alpha, float), np.asarray(beta, float), np.asarray(gamma, float), d1, chi, d2)


def _transformed_forms(alpha, beta, gamma) -> List[AffineForm]:
    """``B v_k B†`` as affine forms in v = (b, b†)."""
    E = gaussian_action(alpha, beta)
    shift = E @ np.concatenate([gamma, gamma])
    return [AffineForm(E[k].astype(complex), shift[k]) for k in range(E.shape[0])]


def fragment_symbol(frag, num_modes: Optional[int] = None) -> BosonSymbol:
    """Normal symbol of a bosonic fragment ``B f(n) B†``."""
    g = frag.gaussian
    M = len(g.gamma)
    F = _transformed_forms(g.alpha, g.beta, g.gamma)
    if isinstance(frag, BosonicQuadratic):
        sym = BosonSymbol(M, {0: np.array([frag.constant], dtype=complex)})
        for l in range(M):
            if frag.eps[l]:
                sym = sym + wick_product([F[M + l], F[l]], M) * frag.eps[l]
    elif isinstance(frag, BosonicQuartic):
        sym = BosonSymbol(M)
        for l, m in itertools.combinations_with_replacement(range(M), 2):
            if frag.eta[l, m]:
                sym = sym + wick_product([F[M + l], F[l], F[M + m], F[m]], M) * frag.eta[l, m]
    else:
        raise TypeError(f"not a bosonic fragment: {type(frag).__name__}")
    return sym.real()


# ---------------------------------------------------------------- quadratic


def _quadratic_blocks(sym: BosonSymbol):
    """(A, B, C, c0) with H2 = b†Ab + 1/2(b†Bb† + bBb) + C(b + b†) + c0."""
    M = sym.num_modes
    A = np.zeros((M, M))
    Bc = np.zeros((M, M))
    Ba = np.zeros((M, M))
    C1 = np.zeros(M)
    C2 = np.zeros(M)
    c0 = float(np.real(sym.degree_vec(0)[0]))
    ms1, _ = monomial_table(2 * M, 1)
    v1 = np.real(sym.degree_vec(1))
    for k, (i,) in enumerate(ms1):
        if i < M:
            C1[i] += v1[k]
        else:
            C2[i - M] += v1[k]
    ms2, _ = monomial_table(2 * M, 2)
    v2 = np.real(sym.degree_vec(2))
    for k, (i, j) in enumerate(ms2):
        c = v2[k]
        if i < M <= j:
            A[j - M, i] += c
        elif j < M:
            Ba[i, j] += c
            Ba[j, i] += c
        else:
            Bc[i - M, j - M] += c
            Bc[j - M, i - M] += c
    if not (np.allclose(A, A.T, atol=1e-12) and np.allclose(Bc, Ba, atol=1e-12) and np.allclose(C1, C2, atol=1e-12)):
        raise ValueError("quadratic part is not a real Hermitian form")
    return 0.5 * (A + A.T), Bc, C1, c0


def bogoliubov_diagonalize(sym: BosonSymbol) -> BosonicQuadratic:
    """Diagonalize the degree <= 2 part of ``sym`` as ``B (sum eps n + c) B†``.

    Raises:
        ValueError: naming the first mode whose symplectic frequency is not
            positive.
    """
    M = sym.num_modes
    A, Bm, C, c0 = _quadratic_blocks(sym)
    Vq, Vp = A + Bm, A - Bm
    const = c0 - 0.5 * np.trace(A)
    if not np.any(Vq) and not np.any(Vp):
        if np.any(C):
            raise ValueError(f"linear term on mode {int(np.flatnonzero(C)[0])} without a quadratic confinement")
        z = np.zeros((M, M))
        return BosonicQuadratic(np.zeros(M), c0, _gaussian(z, z, np.zeros(M)))
    wp, Pp = np.linalg.eigh(Vp)
    if np.any(wp <= 1e-14):
        mode = int(np.argmax(np.abs(Pp[:, int(np.argmin(wp))])))
        raise ValueError(f"non-positive kinetic form; unstable direction dominated by mode {mode}")
    Th = (Pp * np.sqrt(wp)) @ Pp.T
    W = Th @ Vq @ Th
    w2, O = np.linalg.eigh(0.5 * (W + W.T))
    if np.any(w2 <= 1e-14):
        mode = int(np.argmax(np.abs(O[:, int(np.argmin(w2))])))
        raise ValueError(f"non-positive symplectic spectrum; unstable direction dominated by mode {mode}")
    omega = np.sqrt(w2)
    # map normal coordinates back onto the closest mode labels
    _, perm = linear_sum_assignment(-np.abs(O))
    O, omega = O[:, perm], omega[perm]
    qc = -np.sqrt(2) * np.linalg.solve(Vq, C)
    const += 0.5 * qc @ Vq @ qc + np.sqrt(2) * C @ qc + 0.5 * omega.sum()
    gamma = -qc / np.sqrt(2)
    best = None
    for signs in itertools.product((1.0, -1.0), repeat=M):
        Os = O * np.array(signs)
        Sq = Th @ Os / np.sqrt(omega)
        ab = gaussian_from_action(np.linalg.inv(Sq))
        if ab is None:
            continue
        nrm = np.linalg.norm(ab[0]) + np.linalg.norm(ab[1])
        if best is None or nrm < best[0] - 1e-12:
            best = (nrm, ab)
    if best is None:
        raise ValueError("Bogoliubov transform has no real generator")
    alpha, beta = best[1]
    return BosonicQuadratic(omega, float(const), _gaussian(alpha, beta, gamma))


# ---------------------------------------------------------------- greedy fit


class _Fitter:
    """Variable projection: eta by linear least squares for fixed (alpha, beta, gamma)."""

    def __init__(self, target: BosonSymbol):
        self.M = M = target.num_modes
        self.pairs = list(itertools.combinations_with_replacement(range(M), 2))
        self.na = M * (M - 1) // 2
        self.nb = M * (M + 1) // 2
        self.npar = self.na + self.nb + M
        self.t = np.concatenate([np.real(target.degree_vec(3)), np.real(target.degree_vec(4))])
        self.t2 = float(self.t @ self.t)

    def bounds(self, max_squeeze, max_displacement):
        return ([(-np.pi, np.pi)] * self.na + [(-max_squeeze, max_squeeze)] * self.nb
                + [(-max_displacement, max_displacement)] * self.M)

    def unpack(self, x):
        M = self.M
        alpha = np.zeros((M, M))
        alpha[np.triu_indices(M, 1)] = x[: self.na]
        alpha = alpha - alpha.T
        beta = np.zeros((M, M))
        beta[np.triu_indices(M)] = x[self.na: self.na + self.nb]
        beta = beta + np.triu(beta, 1).T
        gamma = np.asarray(x[self.na + self.nb:], dtype=float)
        return alpha, beta, gamma

    def columns(self, x) -> np.ndarray:
        """Cubic and quartic coefficients of ``B n_l n_m B†`` for each pair."""
        alpha, beta, gamma = self.unpack(x)
        M, nv = self.M, 2 * self.M
        E = gaussian_action(alpha, beta)
        d = E @ np.concatenate([gamma, gamma])
        cols = []
        for l, m in self.pairs:
            idx = (M + l, l, M + m, m)
            c = [E[k] for k in idx]
            T4 = np.einsum("i,j,k,l->ijkl", *c)
            T3 = (d[idx[0]] * np.einsum("i,j,k->ijk", c[1], c[2], c[3])
                  + d[idx[1]] * np.einsum("i,j,k->ijk", c[0], c[2], c[3])
                  + d[idx[2]] * np.einsum("i,j,k->ijk", c[0], c[1], c[3])
                  + d[idx[3]] * np.einsum("i,j,k->ijk", c[0], c[1], c[2]))
            cols.append(np.concatenate([_reduce(T3, nv), _reduce(T4, nv)]))
        return np.array(cols).T

    def project(self, x):
        with np.errstate(all="ignore"):
            Cm = self.columns(x)
        if not np.all(np.isfinite(Cm)):
            # runaway squeezing: treat as no fit at all
            return np.zeros(len(self.pairs)), self.t.copy()
        eta, *_ = np.linalg.lstsq(Cm, self.t, rcond=None)
        return eta, self.t - Cm @ eta

    def cost(self, x):
        r = self.project(x)[1]
        return float(r @ r) / self.t2

    def residual_vector(self, x):
        return self.project(x)[1] / np.sqrt(self.t2)

    def eta_matrix(self, eta):
        out = np.zeros((self.M, self.M))
        for (l, m), e in zip(self.pairs, eta):
            out[l, m] = e
        return out


def _high_norm(sym: BosonSymbol) -> float:
    return sym.norm([3, 4])


def fragment_bf(
    model: Union[VibrationalModel, BosonSymbol],
    N=None,
    eps_frag: float = cm1_to_hartree(1.0),
    seed: int = DEFAULT_SEED,
    restarts: int = 5,
    max_fragments: int = 50,
    fd_step: float = 1e-6,
    max_squeeze: float = 0.5,
    max_displacement: float = 1.0,
) -> FragmentSet:
    """Bosonic greedy fragmentation.

    Quartic fragments ``B (sum_{l<=m} eta_lm n_l n_m) B†`` are fitted one at a
    time to the cubic and quartic normal-ordered coefficients and subtracted
    from the full symbol (which also shifts lower orders).  Once the
    cubic/quartic residual norm drops below ``eps_frag`` (Hartree) the
    remaining quadratic operator is Bogoliubov-diagonalized into the
    fragment placed first.

    Args:
        model: Vibrational model or a normal symbol.
        N: Truncation recorded in the fragment space (per-mode or scalar).
        eps_frag: Absolute tolerance on the cubic/quartic residual, Hartree.
        seed: Seed for restart parameters.
        restarts: Random restarts per fragment.
        max_fragments: Cap on quartic fragments.
        fd_step: Finite-difference step of the quasi-Newton gradient.
        max_squeeze: Box bound on each beta entry.  Without it the fit
            trades tiny eta for huge squeezing, which no finite Fock
            truncation can represent.
        max_displacement: Box bound on each gamma entry.
    """
    if eps_frag <= 0:
        raise ValueError("eps_frag must be positive")
    sym = model_symbol(model) if isinstance(model, VibrationalModel) else model.real()
    M = sym.num_modes
    rng = np.random.default_rng(seed)
    quartics: List[BosonicQuartic] = []
    history = [_high_norm(sym)]
    status = "converged"
    while _high_norm(sym) >= eps_frag:
        if len(quartics) >= max_fragments:
            status = "fragment_cap"
            break
        fitter = _Fitter(sym)
        bounds = fitter.bounds(max_squeeze, max_displacement)
        best = None
        for _ in range(restarts):
            x0 = rng.uniform(-0.1, 0.1, size=fitter.npar)
            res = minimize(fitter.cost, x0, method="L-BFGS-B", bounds=bounds,
                           options={"eps": fd_step, "gtol": 1e-12, "ftol": 1e-15, "maxiter": 2000})
            if best is None or res.fun < best.fun - 1e-15:
                best = res
        x = best.x
        lo, hi = np.array(bounds).T
        pol = least_squares(fitter.residual_vector, np.clip(x, lo, hi), bounds=(lo, hi), method="trf",
                            xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if np.all(np.isfinite(pol.x)) and np.sum(pol.fun ** 2) <= np.sum(fitter.residual_vector(x) ** 2):
            x = pol.x
        eta, _ = fitter.project(x)
        alpha, beta, gamma = fitter.unpack(x)
        frag = BosonicQuartic(fitter.eta_matrix(eta), _gaussian(alpha, beta, gamma))
        new = sym - fragment_symbol(frag)
        before, after = _high_norm(sym), _high_norm(new)
        if after >= before:
            status = "stagnated"
            break
        sym = new
        quartics.append(frag)
        history.append(after)
        if (before - after) / before < 1e-4:
            status = "stagnated"
            break
    h0 = bogoliubov_diagonalize(sym)
    residual = sym - fragment_symbol(h0)
    residual.coeffs = {d: np.where(np.abs(v) < 1e-14, 0.0, v) for d, v in residual.coeffs.items() if d >= 3}
    sizes = None if N is None else ([int(N)] * M if np.isscalar(N) else [int(n) for n in N])
    space = {"kind": "fock", "num_modes": M}
    if sizes is not None:
        space.update({"sizes": sizes, "n_qubits": int(sum(sizes))})
    return FragmentSet(
        tuple([h0] + quartics),
        "bf",
        space,
        residual_norm=_high_norm(residual),
        residual=residual,
        status=status,
        provenance={
            "eps_frag": eps_frag,
            "seed": seed,
            "restarts": restarts,
            "fd_step": fd_step,
            "optimizer": "L-BFGS-B",
            "bounds": {"alpha": np.pi, "beta": max_squeeze, "gamma": max_displacement},
            "param_init": "uniform(-0.1, 0.1)",
            "residual_history": history,
        },
    )
