import numpy as np
import pytest
from scipy.linalg import expm

from conftest import two_mode_fragments
from vibtrotter import sim, trotter
from vibtrotter.modal import christiansen_dense
from vibtrotter.pauli import PauliWord


def test_pauli_rotation_matches_expm(rng):
    n = 3
    w = PauliWord.from_string("X0 Y1 Z2", n)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    c = sim.RotationCounter()
    out = sim.apply_pauli_rotation(psi.copy(), w, 0.37, c)
    np.testing.assert_allclose(out, expm(-1j * 0.37 * w.matrix()) @ psi, atol=1e-14)
    assert c.rz == 1


def test_identity_rotation_is_uncounted_phase():
    c = sim.RotationCounter()
    out = sim.apply_pauli_rotation(np.ones(2, dtype=complex), PauliWord(0, 0, 1), 0.5, c)
    np.testing.assert_allclose(out, np.exp(-0.5j) * np.ones(2))
    assert c.rz == 0


def test_centered_fourier_is_unitary_and_explicit():
    n_q = 3
    L = 2 ** n_q
    x = sim.grid_points(n_q)
    Phi = np.exp(-1j * np.outer(x, x)) / np.sqrt(L)
    psi = np.arange(L) + 1j
    np.testing.assert_allclose(sim.centered_fourier(psi, 1, n_q), Phi @ psi, atol=1e-12)
    back = sim.centered_fourier(sim.centered_fourier(psi, 1, n_q), 1, n_q, inverse=True)
    np.testing.assert_allclose(back, psi, atol=1e-12)


def test_grid_ho_states_orthonormal():
    vecs, _ = sim.grid_ho_states(1, 6, 3)
    np.testing.assert_allclose(vecs.conj().T @ vecs, np.eye(3), atol=1e-8)


def test_trotter_step_converges_to_exact():
    F = two_mode_fragments("cgf")
    sp = sim.space_of(F)
    idx = sp.physical_indices()
    # the fragments sum to H minus the fitting residual
    H = sum(christiansen_dense(sim._csa_hamiltonian(f)) for f in F.fragments)
    psi = sim.trial_state(sp)
    errs = []
    for dt in (20.0, 10.0):
        U = sim.compile_program(sim.step_program(F, dt, sp), sp)[np.ix_(idx, idx)]
        errs.append(np.linalg.norm(U @ psi[idx] - expm(-1j * dt * H) @ psi[idx]))
    # one step: local error O(dt^3)
    assert errs[1] < errs[0] / 6


def test_merged_and_unmerged_programs_agree():
    F = two_mode_fragments("cgf")
    sp = sim.space_of(F)
    psi = sim.trial_state(sp)
    a = sim.run_program(psi.copy(), sim.step_program(F, 5.0, sp, steps=3, merge=True), sp)
    b = sim.run_program(psi.copy(), sim.step_program(F, 5.0, sp, steps=3, merge=False), sp)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_evolve_paths_agree():
    F = two_mode_fragments("qwc")
    sp = sim.space_of(F)
    psi = sim.trial_state(sp)
    pl = trotter.plan(eps2=1e-12, k_max=3)
    a = sim.evolve(psi, F, pl, sp)
    b = sim.evolve(psi, F, pl, sp, compile_max_dim=1)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_state_checks():
    F = two_mode_fragments("pf")
    sp = sim.space_of(F)
    with pytest.raises(ValueError):
        sim.evolve_fragment(np.zeros(3, dtype=complex), F.fragments[0], 1.0, sp)
    with pytest.raises(TypeError):
        sim.evolve_fragment(np.zeros(sp.dim), F.fragments[0], 1.0, sp)
    with pytest.raises(ValueError):
        sim.autocorrelation(F, 2 * sim.trial_state(sp), trotter.plan(k_max=1), sp)


def test_spectrum_of_single_line():
    """A pure phase exp(-i E t) gives one Lorentzian peak at E - ZPE."""
    E, zpe, tau = 0.01, 0.004, 250.0
    C = np.exp(-1j * E * tau * np.arange(301))
    res = sim.spectrum(C, tau, 10.0, zpe)
    peaks = sim.find_peaks(res)
    from vibtrotter.units import hartree_to_cm1

    assert len(peaks) == 1
    assert peaks[0] == pytest.approx(hartree_to_cm1(E - zpe), abs=0.5)


def test_csv_roundtrip(tmp_path):
    C = np.exp(-1j * 0.01 * np.arange(5))
    sim.write_autocorrelation_csv(tmp_path / "c.csv", C, 250.0)
    C2, tau = sim.read_autocorrelation_csv(tmp_path / "c.csv")
    np.testing.assert_allclose(C2, C, atol=1e-15)
    assert tau == 250.0


def test_count_rotations_pf_single_step():
    from vibtrotter.resources import rz_pauli

    F = two_mode_fragments("pf")
    nH = sum(g.terms.num_nonidentity() for g in F.fragments)
    c = sim.count_rotations(F, sim.space_of(F))
    assert c.rz == rz_pauli(nH, "pf")
