"""Acceptance criteria, one PASS/FAIL line each (see the terminal summary).

Oracles here are written independently of the library: dense truncated
matrices are assembled from numpy ladder matrices, the Trotter error is
read off a high-precision matrix logarithm, and rotation counts come from
literally walking the compiled circuit of one Trotter step.
"""

import itertools
import time

import mpmath as mp
import numpy as np
import pytest
from scipy.linalg import expm

from conftest import N_MODAL, N_Q, bundled, report, two_mode_fragments, two_mode_hamiltonian
from vibtrotter import resources as R
from vibtrotter import sim, trotter
from vibtrotter.frag import FragmentSet, PauliGroup, fragment_symbol
from vibtrotter.frag.base import BosonicQuadratic, BosonicQuartic, ChristiansenCSA
from vibtrotter.modal import build_christiansen, vscf
from vibtrotter.pauli import (
    PauliSum,
    UnaryLayout,
    encode_christiansen,
    one_hot_indices,
    unary_encode_excitation,
    unary_encode_ladder,
)
from vibtrotter.units import cm1_to_hartree, hartree_to_cm1

SCHEMES = ("pf", "qwc", "fc", "cgf", "bf", "rs")


# ------------------------------------------------------------ helpers


def _ladder(N):
    return np.diag(np.sqrt(np.arange(1, N)), 1)


def _kron_at(mats, M):
    """Kronecker product with ``mats[l]`` on mode l and identities elsewhere."""
    out = np.ones((1, 1))
    for l in range(M):
        out = np.kron(out, mats[l])
    return out


def _projected_power(op_big, k, N):
    """<a|op^k|b> for a, b < N, exact when op_big is big enough."""
    return np.linalg.matrix_power(op_big, k)[:N, :N]


def truncated_model_matrix(model, N):
    """Dense projection of T + V onto the first N oscillator states per mode."""
    M = model.num_modes
    big = N + model.max_degree() + 2
    b = _ladder(big)
    q = (b + b.T) / np.sqrt(2)
    p = 1j * (b.T - b) / np.sqrt(2)
    eye = np.eye(N)
    H = model.constant * np.eye(N ** M, dtype=complex)
    K = np.asarray(model.kinetic)
    for i, j in itertools.product(range(M), repeat=2):
        if K[i, j] == 0:
            continue
        if i == j:
            mats = [_projected_power(p, 2, N) if l == i else eye for l in range(M)]
        else:
            mats = [p[:N, :N] if l in (i, j) else eye for l in range(M)]
        H += K[i, j] * _kron_at(mats, M)
    for idx, c in model.monomials().items():
        mats = [_projected_power(q, idx.count(l), N) if l in idx else eye for l in range(M)]
        H += c * _kron_at(mats, M)
    return H


def physical_block(op: PauliSum, sizes):
    """Restriction of a Pauli sum to the one-hot subspace, column by column."""
    idx = one_hot_indices(sizes)
    out = np.zeros((len(idx), len(idx)), dtype=complex)
    for c, j in enumerate(idx):
        e = np.zeros(1 << op.n, dtype=complex)
        e[j] = 1.0
        out[:, c] = op.apply(e)[idx]
    return out


def grid_hamiltonian(model, n_q):
    """Position-grid H from an explicit DFT matrix (no FFT)."""
    L = 2 ** n_q
    d = np.sqrt(2 * np.pi / L)
    x = (np.arange(L) - L // 2) * d
    Phi = np.exp(-1j * np.outer(x, x)) / np.sqrt(L)
    M = model.num_modes
    Phi_all = _kron_at([Phi] * M, M)
    X = np.stack([g.ravel() for g in np.meshgrid(*([x] * M), indexing="ij")], -1)
    T = Phi_all.conj().T @ np.diag(np.einsum("ki,ij,kj->k", X, model.kinetic, X)) @ Phi_all
    return T + np.diag(model.potential(X))


# ------------------------------------------------ 1. encoding fidelity


def test_acceptance_1_encoding_fidelity():
    t0 = time.time()
    worst = 0.0
    for sizes in [(4, 4), (3, 3, 3), (2, 3, 4), (6, 6), (4, 4, 4)]:
        layout = UnaryLayout(sizes)
        M = len(sizes)
        for l in range(M):
            b = _ladder(sizes[l])
            kinds = {"lower": b, "raise": b.T, "position": (b + b.T) / np.sqrt(2),
                     "momentum": 1j * (b.T - b) / np.sqrt(2), "number": b.T @ b}
            for kind, m in kinds.items():
                ref = _kron_at([m if k == l else np.eye(sizes[k]) for k in range(M)], M)
                got = physical_block(unary_encode_ladder(l, layout, kind), sizes)
                worst = max(worst, np.abs(got - ref).max())
            for a, c in [(0, 0), (0, sizes[l] - 1), (sizes[l] - 1, 1)]:
                E = np.zeros((sizes[l], sizes[l]))
                E[a, c] = 1.0
                ref = _kron_at([E if k == l else np.eye(sizes[k]) for k in range(M)], M)
                got = physical_block(unary_encode_excitation(l, a, c, layout), sizes)
                worst = max(worst, np.abs(got - ref).max())
    for name, N in [("two_mode_quartic", 4), ("two_mode_quartic", 6), ("h2s_like", 4), ("one_mode_quartic", 8)]:
        model = bundled(name)
        H = build_christiansen(model, N, n=model.num_modes)
        got = physical_block(encode_christiansen(H), H.sizes)
        worst = max(worst, np.abs(got - truncated_model_matrix(model, N)).max())
    dt = time.time() - t0
    ok = worst <= 1e-10 and dt < 10
    report("1 encoding fidelity", ok, f"max |encoded - dense| = {worst:.2e} (tol 1e-10), {dt:.1f} s (< 10 s)")
    assert worst <= 1e-10
    assert dt < 10


# --------------------------------------------- 2. fast-forwardability


def _reference_generator(frag, space):
    """Independent dense generator for a fragment."""
    if isinstance(frag, PauliGroup):
        return frag.terms.to_dense()
    if isinstance(frag, ChristiansenCSA):
        return encode_christiansen(sim._csa_hamiltonian(frag)).to_dense()
    if isinstance(frag, (BosonicQuadratic, BosonicQuartic)):
        return fragment_symbol(frag).dense(list(space.sizes))
    return sim.fragment_matrix(frag, space)


def _ff_error(scheme):
    F = two_mode_fragments(scheme)
    sp = sim.space_of(F, sizes=[N_MODAL] * 2, n_q=N_Q)
    rows = sp.physical_indices() if scheme == "cgf" else np.arange(sp.dim)
    worst = 0.0
    for frag in F.fragments:
        G = _reference_generator(frag, sp)
        for t in (0.1, 1.0, 10.0):
            U = sim.fragment_propagator(frag, sp, t)
            V = expm(-1j * t * G)
            worst = max(worst, np.abs((U - V)[np.ix_(rows, rows)]).max())
    return worst


@pytest.mark.parametrize("scheme", SCHEMES)
def test_acceptance_2_fast_forward(scheme):
    t0 = time.time()
    err = _ff_error(scheme)
    dt = time.time() - t0
    ok = err <= 1e-8 and dt < 60
    report(f"2 fast-forward [{scheme}]", ok, f"max |U e^(-iDt) U^+ - e^(-iHt)| = {err:.2e} (tol 1e-8), {dt:.1f} s")
    assert err <= 1e-8


# ------------------------------------------------- 3. partition identity


def _partition(scheme, m2, h2, sym2):
    F = two_mode_fragments(scheme)
    sp = sim.space_of(F, sizes=[N_MODAL] * 2, n_q=N_Q)
    if scheme in ("pf", "qwc", "fc"):
        total = sum((f.terms for f in F.fragments), PauliSum.zero(8))
        return np.abs(total.to_dense() - encode_christiansen(h2).to_dense()).max(), F
    if scheme == "cgf":
        parts = [encode_christiansen(sim._csa_hamiltonian(f)) for f in F.fragments]
        total = sum(parts, encode_christiansen(F.residual))
        return np.abs(physical_block(total, h2.sizes) - physical_block(encode_christiansen(h2), h2.sizes)).max(), F
    if scheme == "bf":
        total = sum(fragment_symbol(f, 2).dense([N_MODAL] * 2) for f in F.fragments) + F.residual.dense([N_MODAL] * 2)
        return np.abs(total - sym2.dense([N_MODAL] * 2)).max(), F
    total = sum(sim.fragment_matrix(f, sp) for f in F.fragments)
    return np.abs(total - grid_hamiltonian(m2, N_Q)).max(), F


@pytest.mark.parametrize("scheme", SCHEMES)
def test_acceptance_3_partition(scheme, m2, h2, sym2):
    t0 = time.time()
    err, F = _partition(scheme, m2, h2, sym2)
    dt = time.time() - t0
    ok = err <= 1e-8 and dt < 300
    detail = f"|sum + residual - H| = {err:.2e} (tol 1e-8), {dt:.1f} s"
    if scheme == "cgf":
        rel = F.residual.g_norm() / h2.g_norm()
        ok &= rel <= 0.05
        detail += f", residual |g|/|g| = {rel:.4f} (<= 0.05)"
    if scheme == "bf":
        ok &= F.residual_norm < cm1_to_hartree(1.0)
        detail += f", residual = {hartree_to_cm1(F.residual_norm):.3f} cm^-1 (< 1)"
    report(f"3 partition identity [{scheme}]", ok, detail)
    assert ok


# ---------------------------------------------------- 4. Trotter law


def _mp_expm_herm(H, t, dps):
    """exp(-i t H) for a Hermitian numpy matrix via an mpmath eigen-decomposition."""
    with mp.workdps(dps):
        A = mp.matrix(H.tolist())
        E, Q = mp.eighe(A) if hasattr(mp, "eighe") else mp.eigh(A)
        D = mp.diag([mp.expj(-t * e) for e in E])
        return Q * D * Q.H


def _csa_block(frag, sizes):
    return physical_block(encode_christiansen(sim._csa_hamiltonian(frag)), sizes)


def test_acceptance_4_trotter_slope():
    t0 = time.time()
    F = two_mode_fragments("cgf")
    h2 = two_mode_hamiltonian()
    blocks = [_csa_block(f, h2.sizes) for f in F.fragments]
    blocks = [0.5 * (B + B.conj().T) for B in blocks]
    H = sum(blocks)
    dps = 60
    E_exact = sorted(np.linalg.eigvalsh(H))
    with mp.workdps(dps):
        # sum in extended precision: the dt = 1e-3 error is below double rounding of H
        H_mp = mp.zeros(H.shape[0])
        for B in blocks:
            H_mp += mp.matrix(B.tolist())
        E0 = sorted(mp.eigh(H_mp)[0])[0]
    steps = np.logspace(-3, -1, 5)
    errs = []
    for dt in steps:
        with mp.workdps(dps):
            half = [_mp_expm_herm(B, dt / 2, dps) for B in blocks]
            U = mp.eye(H.shape[0])
            for h in half[::-1]:
                U = U * h
            for h in half:
                U = U * h
            Heff = (mp.mpc(0, 1) / dt) * mp.logm(U)
            Heff = (Heff + Heff.H) / 2
            Ee = sorted(mp.eigh(Heff)[0])[0]
            errs.append(abs(float(Ee - E0)))
    slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
    sp = sim.space_of(F)
    eps2 = trotter.perturbative_error(F, trotter.dipole_trial(sp))
    ratio = errs[0] / steps[0] ** 2 / eps2
    dt_run = time.time() - t0
    ok = abs(slope - 2.0) <= 0.05 and dt_run < 60
    report("4a Trotter error slope", ok,
           f"slope {slope:.4f} (2.00 +/- 0.05), ground error/dt^2 = {ratio:.3f} x eps2, {dt_run:.1f} s (< 60 s); "
           f"E0 float {E_exact[0]:.6e}")
    assert abs(slope - 2.0) <= 0.05


def _log_oracle_theta2(a, b, dt=mp.mpf("1e-6"), dps=80):
    """(H_eff - H)/dt^2 from the matrix log of the symmetric product."""
    with mp.workdps(dps):
        Z = mp.matrix([[a, 0], [0, -a]])
        X = mp.matrix([[0, b], [b, 0]])
        U = mp.expm(-mp.mpc(0, 1) * Z * dt / 2) * mp.expm(-mp.mpc(0, 1) * X * dt) * mp.expm(-mp.mpc(0, 1) * Z * dt / 2)
        Heff = mp.mpc(0, 1) * mp.logm(U) / dt
        th = (Heff - Z - X) / dt ** 2
        return np.array(th.tolist(), dtype=complex)


def test_acceptance_4_theta2_single_qubit_implementation():
    """theta2 on the (alpha z, beta x) pair equals the log-of-unitary oracle."""
    a, b = 0.7, 1.3
    F = FragmentSet((PauliGroup(PauliSum.single("Z0", 1, a)), PauliGroup(PauliSum.single("X0", 1, b))),
                    "pf", {"kind": "qubit", "n_qubits": 1})
    oracle = _log_oracle_theta2(a, b)
    got = trotter.theta2(F).to_dense()
    err = np.abs(got - oracle).max()
    report("4b theta2 (implementation) vs log oracle", err <= 1e-10,
           f"max diff {err:.2e}; oracle = {oracle[0, 1].real:+.6f} x {oracle[0, 0].real:+.6f} z")
    assert err <= 1e-10


def test_acceptance_4_theta2_single_qubit_literal():
    """The literal claim Theta_2 = (alpha beta^2/6) z against the oracle."""
    a, b = 0.7, 1.3
    oracle = _log_oracle_theta2(a, b)
    literal = np.diag([a * b * b / 6, -a * b * b / 6])
    err = np.abs(literal - oracle).max()
    report("4b theta2 = (alpha beta^2/6) z vs log oracle", err <= 1e-12,
           f"max diff {err:.3e} (tol 1e-12); oracle z coeff {oracle[0, 0].real:.6f} vs literal {a * b * b / 6:.6f}")
    assert err <= 1e-12


# -------------------------------------------------- 5. resource formulas


def _random_rot(rng, N):
    """Random SO(N) matrix (fragment rotations are proper)."""
    Q, _ = np.linalg.qr(rng.normal(size=(N, N)))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q


def _cgf_set(rng, M, N, N_f):
    f0 = ChristiansenCSA(tuple(_random_rot(rng, N) for _ in range(M)), tuple(rng.normal(size=N) for _ in range(M)))
    rest = [ChristiansenCSA(tuple(_random_rot(rng, N) for _ in range(M)), None,
                            {(l, m): rng.normal(size=(N, N)) for l in range(M) for m in range(l)})
            for _ in range(N_f)]
    return FragmentSet(tuple([f0] + rest), "cgf", {"kind": "qubit", "sizes": [N] * M})


def _bf_set(rng, M, N, N_f):
    from vibtrotter.frag.bf import _gaussian

    def gauss():
        a = rng.normal(size=(M, M)) * 0.2
        b = rng.normal(size=(M, M)) * 0.1
        return _gaussian(a - a.T, b + b.T, rng.normal(size=M) * 0.2)

    frs = [BosonicQuadratic(rng.normal(size=M), 0.1, gauss())]
    frs += [BosonicQuartic(np.triu(rng.normal(size=(M, M))), gauss()) for _ in range(N_f)]
    return FragmentSet(tuple(frs), "bf", {"kind": "fock", "num_modes": M, "sizes": [N] * M})


def _walk(F, L=None):
    return sim.count_rotations(F, sim.space_of(F), steps=L or 1).rz


def test_acceptance_5_resource_formulas(rng):
    from vibtrotter.frag import fragment_commuting, fragment_pf

    t0 = time.time()
    lines = []
    values = {
        "rz_cgf(3,4,3)": (R.rz_cgf(3, 4, 3), 612),
        "rz_pauli PF(641)": (R.rz_pauli(641, "pf"), 1281),
        "cost_real_space qubits(3,4,4,8,13)": (R.cost_real_space(3, 4, 2, 4, 8, 13)["qubits"], 119),
        "rs register walk qubits(3,4,4,8,13)": (R.rs_register_walk(3, 4, 4, 8, 13)["qubits"], 119),
        "rz_bf(3,4,3)": (R.rz_bf(3, 4, 3), 2310),
    }
    ok = all(a == b for a, b in values.values())
    lines += [f"{k} = {a} (expect {b})" for k, (a, b) in values.items()]
    mismatches = []
    for M, N, N_f in [(2, 2, 1), (2, 3, 2), (2, 3, 1), (1, 3, 2)]:
        for L in (None, 1, 3):
            F = _cgf_set(rng, M, N, N_f)
            if M >= 2:
                w, f = _walk(F, L), R.rz_cgf(M, N, N_f, L)
                if w != f:
                    mismatches.append(("cgf", M, N, N_f, L, w, f))
            Fb = _bf_set(rng, M, N, N_f)
            w, f = _walk(Fb, L), R.rz_bf(M, N, N_f, L)
            if w != f:
                mismatches.append(("bf", M, N, N_f, L, w, f))
    H = build_christiansen(bundled("two_mode_quartic"), [2, 3])
    Hq = encode_christiansen(H)
    for mode in ("pf", "qwc", "fc"):
        F = fragment_pf(Hq, sizes=H.sizes) if mode == "pf" else fragment_commuting(Hq, mode, sizes=H.sizes)
        n_first, n_last = F.fragments[0].terms.num_nonidentity(), F.fragments[-1].terms.num_nonidentity()
        for L in (None, 1, 3):
            w = _walk(F, L)
            f = R.rz_pauli(Hq.num_nonidentity(), mode, n_first, n_last, L)
            if w != f:
                mismatches.append((mode, 2, "2,3", len(F), L, w, f))
    # real space: register walk vs closed forms where the product register outgrows b_k
    for M, N_q, d in itertools.product((1, 2), (2, 3), (2, 3, 4)):
        walk = R.rs_register_walk(M, N_q, d, 2, 3)
        cost = R.cost_real_space(M, N_q, min(M, 2), d, 2, 3)
        if walk["qubits"] != cost["qubits"]:
            mismatches.append(("rs-qubits", M, N_q, d, None, walk["qubits"], cost["qubits"]))
        for ell in range(2, min(d, 3) + 1):
            w = R.rs_register_walk(M, N_q, d, 2, 3, ell)["t"]
            if w != R.c_ell(ell, N_q, 2):
                mismatches.append(("rs-C", M, N_q, ell, None, w, R.c_ell(ell, N_q, 2)))
    ok &= not mismatches
    dt = time.time() - t0
    ok &= dt < 30
    report("5 resource formulas + circuit walk", ok,
           "; ".join(lines) + f"; walk mismatches {mismatches or 'none'}; {dt:.1f} s (< 30 s)")
    assert all(a == b for a, b in values.values())
    assert not mismatches


# ------------------------------------------ 6. published-magnitude sanity


def test_acceptance_6_pf_magnitude():
    t = R.to_t_gates(R.rz_pauli(641, "pf"))
    rel = abs(t - 6.07e4) / 6.07e4
    report("6 PF T-per-oracle magnitude (informational)", t == 64050 and rel <= 0.10,
           f"{t} T vs 6.07e4 ({100 * rel:.1f}% off, tol 10%)")
    assert t == 64050


# ------------------------------------------------ 7. spectrum agreement


def _spectrum_check(scheme, sim_N=None):
    F = two_mode_fragments(scheme)
    h2 = two_mode_hamiltonian()
    if scheme == "bf":
        N = sim_N or N_MODAL
        from vibtrotter.bosonic import model_symbol

        sp = sim.Space.fock([N, N])
        Hd = model_symbol(bundled("two_mode_quartic")).dense([N, N])
    elif scheme == "rs":
        sp = sim.space_of(F)
        Hd = grid_hamiltonian(bundled("two_mode_quartic"), N_Q)
    else:
        sp = sim.space_of(F)
        Hd = physical_block(encode_christiansen(h2), h2.sizes)
    psi = sim.trial_state(sp)
    ref_state = sim.reference_state(sp)
    pl = trotter.plan(eps2=trotter.perturbative_error(F, trotter.dipole_trial(sp), space=sp))
    C = sim.autocorrelation(F, psi, pl, sp)
    if scheme in ("pf", "qwc", "fc", "cgf"):
        idx = sp.physical_indices()
        psi_ref, ref0 = psi[idx], ref_state[idx]
    else:
        psi_ref, ref0 = psi, ref_state
    zpe = float(np.real(np.vdot(ref0, Hd @ ref0)))
    s = sim.spectrum(C, pl.tau, 10.0, zpe)
    r = sim.exact_reference(Hd, psi_ref, pl.tau, pl.k_max, 10.0, zpe, s.omega_cm1)
    ok, dev = sim.peaks_match(s, r, 10.0)
    return ok, dev, sp.n_qubits, pl, sim.find_peaks(r)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_acceptance_7_spectrum(scheme):
    t0 = time.time()
    ok, dev, nq, pl, peaks = _spectrum_check(scheme)
    dt = time.time() - t0
    report(f"7 spectrum agreement [{scheme}]", ok and 8 <= nq <= 12,
           f"{nq} qubits, r = {pl.r}, max peak shift {dev:.2f} cm^-1 (tol 10) vs exact peaks "
           f"{np.round(peaks, 1).tolist()}, {dt:.1f} s")
    assert 8 <= nq <= 12
    assert ok


def test_acceptance_7_spectrum_bf_larger_truncation():
    """Informational: the bosonic fragments at a 12-level Fock realization."""
    ok, dev, nq, pl, _ = _spectrum_check("bf", sim_N=12)
    report("7 spectrum agreement [bf, 12 Fock levels per mode, informational]", ok,
           f"{nq} qubits, max peak shift {dev:.2f} cm^-1 (tol 10)")
    assert ok


# ------------------------------------------------------------ 8. VSCF


def test_acceptance_8_vscf():
    from vibtrotter.modal import christiansen_dense
    from vibtrotter.model import VibrationalModel

    t0 = time.time()
    checks = []
    for name, N in [("two_mode_quartic", 4), ("h2s_like", 4), ("one_mode_quartic", 6)]:
        H = build_christiansen(bundled(name), N)
        res = vscf(H)
        e = np.asarray(res.energies)
        mono = bool(np.all(np.diff(e) <= 1e-12))
        E0 = np.linalg.eigvalsh(christiansen_dense(H))[0]
        checks.append((name, mono, bool(res.energy >= E0 - 1e-12), res.converged))
    w = np.array([0.008, 0.011])
    tay = VibrationalModel.elements_from_monomials({(0, 0, 0): 1e-4, (1, 1, 1, 1): 3e-5, (0, 0, 0, 0): 2e-5})
    tay[2] = {(0, 0): w[0] / 2, (1, 1): w[1] / 2}
    sep = vscf(build_christiansen(VibrationalModel(w, np.diag(w / 2), tay), 5))
    dt = time.time() - t0
    ok = all(all(c[1:]) for c in checks) and sep.cycles == 1 and sep.converged and dt < 10
    report("8 VSCF", ok, f"(model, monotone, variational, converged) = {checks}; separable cycles = {sep.cycles}, "
                         f"{dt:.1f} s (< 10 s)")
    assert ok


# ------------------------------------------------------ 9. determinism


def test_acceptance_9_determinism(tmp_path):
    from vibtrotter.cli import main

    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["all", "--scheme", "qwc", "--out", str(out), "--k-max", "40"]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    same = outs[0] == outs[1]
    names = sorted(outs[0])
    report("9 determinism", same, f"{len(names)} artifacts byte-identical: {names}")
    assert same
