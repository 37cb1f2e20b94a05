import numpy as np
import pytest

from conftest import two_mode_fragments, two_mode_hamiltonian
from vibtrotter import sim
from vibtrotter.frag import (
    FragmentSet,
    bloch_messiah,
    fragment_commuting,
    givens_decompose,
    givens_reconstruct,
)
from vibtrotter.frag.bf import q_action
from vibtrotter.pauli import PauliSum, PauliWord, encode_christiansen


@pytest.mark.parametrize("N", [2, 3, 5])
def test_givens_roundtrip(N, rng):
    Q, _ = np.linalg.qr(rng.normal(size=(N, N)))
    rots, sign = givens_decompose(Q, keep_zeros=True)
    np.testing.assert_allclose(givens_reconstruct(N, rots, sign), Q, atol=1e-12)


def test_commuting_groups_really_commute():
    Hq = encode_christiansen(two_mode_hamiltonian())
    for mode in ("fc", "qwc"):
        F = fragment_commuting(Hq, mode, sizes=(4, 4))
        for g in F.fragments:
            ws = list(g.terms.words())
            test = PauliWord.qubitwise_commutes if mode == "qwc" else PauliWord.commutes
            assert all(test(a, b) for i, a in enumerate(ws) for b in ws[i + 1:])
    assert len(fragment_commuting(Hq, "fc", sizes=(4, 4))) <= len(fragment_commuting(Hq, "qwc", sizes=(4, 4)))


@pytest.mark.parametrize("scheme", ["pf", "qwc", "fc", "cgf", "bf", "rs"])
def test_fragment_set_serialization_roundtrip(scheme):
    F = two_mode_fragments(scheme)
    G = FragmentSet.from_dict(F.to_dict())
    assert G.to_dict() == F.to_dict()


def test_cgf_provenance_and_seed_determinism():
    from vibtrotter.frag import fragment_cgf

    H = two_mode_hamiltonian(3)
    a = fragment_cgf(H, seed=7)
    b = fragment_cgf(H, seed=7)
    assert a.to_dict() == b.to_dict()
    assert a.provenance["relative_residual"] <= 0.05


def test_bloch_messiah_factorization(rng):
    M = 3
    a = rng.normal(size=(M, M)) * 0.3
    b = rng.normal(size=(M, M)) * 0.2
    alpha, beta = a - a.T, b + b.T
    d1, chi, d2 = bloch_messiah(alpha, beta)
    Z = np.zeros((M, M))
    np.testing.assert_allclose(d1, -d1.T, atol=1e-12)
    np.testing.assert_allclose(d2, -d2.T, atol=1e-12)
    rebuilt = q_action(d2, Z) @ q_action(Z, np.diag(2 * chi)) @ q_action(d1, Z)
    np.testing.assert_allclose(rebuilt, q_action(alpha, beta), atol=1e-12)


def test_pauli_fragments_need_hermitian_input():
    from vibtrotter.frag import fragment_pf

    P = PauliSum.single("X0", 2, 1j)
    with pytest.raises(ValueError):
        fragment_pf(P)


def test_bf_residual_below_tolerance():
    from vibtrotter.units import cm1_to_hartree

    F = two_mode_fragments("bf")
    assert F.residual_norm < cm1_to_hartree(1.0)
    assert F.provenance["bounds"]["beta"] == 0.5


def test_real_space_fragments_are_kinetic_then_potential():
    F = two_mode_fragments("rs")
    assert [f.kind for f in F.fragments] == ["real_space_kinetic", "real_space_potential"]
    sp = sim.space_of(F)
    T = sim.fragment_matrix(F.fragments[0], sp)
    np.testing.assert_allclose(T, T.conj().T, atol=1e-14)
