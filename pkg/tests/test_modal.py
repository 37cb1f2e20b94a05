import numpy as np
import pytest
from numpy.polynomial.hermite import hermgauss

from conftest import bundled
from vibtrotter.modal import (
    ChristiansenHamiltonian,
    ModalBasis,
    build_christiansen,
    christiansen_dense,
    ho_functions,
    ladder_matrices,
    position_power_matrix,
    vscf,
)


def test_ho_functions_orthonormal_with_gaussian_weight():
    x, w = hermgauss(40)
    phi = ho_functions(8, x)  # polynomial part; the Gaussian is the weight
    S = (phi * w) @ phi.T
    np.testing.assert_allclose(S, np.eye(8), atol=1e-12)


@pytest.mark.parametrize("power", [1, 2, 3, 4])
def test_position_powers_are_exact_projections(power):
    N = 6
    b = np.diag(np.sqrt(np.arange(1, N + power + 1)), 1)
    q = (b + b.T) / np.sqrt(2)
    ref = np.linalg.matrix_power(q, power)[:N, :N]
    np.testing.assert_allclose(position_power_matrix(N, power), ref, atol=1e-12)


def test_ladder_matrices_commutator():
    b, bd = ladder_matrices(5)
    c = b @ bd - bd @ b
    np.testing.assert_allclose(np.diag(c)[:-1], 1.0, atol=1e-14)


def test_harmonic_model_is_diagonal():
    m = bundled("one_mode_quartic")
    from vibtrotter.model import VibrationalModel

    h = VibrationalModel.harmonic(m.frequencies)
    H = build_christiansen(h, 5)
    np.testing.assert_allclose(np.diag(christiansen_dense(H)), m.frequencies[0] * (np.arange(5) + 0.5), atol=1e-15)


def test_rotation_roundtrip_and_serialization(h2, rng):
    rots = []
    for n in h2.sizes:
        Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        rots.append(Q)
    Hr = h2.rotated(ModalBasis(tuple(rots)))
    E = np.linalg.eigvalsh(christiansen_dense(h2))
    np.testing.assert_allclose(np.linalg.eigvalsh(christiansen_dense(Hr)), E, atol=1e-13)
    back = Hr.to_harmonic()
    np.testing.assert_allclose(christiansen_dense(back), christiansen_dense(h2), atol=1e-13)
    again = ChristiansenHamiltonian.from_dict(Hr.to_dict())
    np.testing.assert_allclose(christiansen_dense(again), christiansen_dense(Hr), atol=0)


def test_vscf_rotated_hamiltonian_has_diagonal_fock(h2):
    res = vscf(h2)
    assert res.converged
    E_mf = christiansen_dense(res.hamiltonian)[0, 0]
    assert E_mf == pytest.approx(res.energy, abs=1e-12)
    assert res.energy <= res.energies[0]


def test_vscf_rejects_bad_tolerance(h2):
    with pytest.raises(ValueError):
        vscf(h2, tol=0)
