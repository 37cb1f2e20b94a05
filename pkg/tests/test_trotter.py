import math

import numpy as np
import pytest

from conftest import two_mode_fragments
from vibtrotter import sim, trotter
from vibtrotter.frag import FragmentSet, PauliGroup
from vibtrotter.model import VibrationalModel
from vibtrotter.frag import fragment_real_space
from vibtrotter.pauli import PauliSum
from vibtrotter.units import cm1_to_hartree


def _pair(a, b):
    return FragmentSet((PauliGroup(PauliSum.single("Z0", 1, a)), PauliGroup(PauliSum.single("X0", 1, b))),
                       "pf", {"kind": "qubit", "n_qubits": 1})


def test_theta2_single_qubit_closed_form():
    a, b = 0.4, 0.9
    th = trotter.theta2(_pair(a, b)).to_dense()
    expect = (a * a * b / 6) * np.array([[0, 1], [1, 0]]) - (a * b * b / 3) * np.diag([1, -1])
    np.testing.assert_allclose(th, expect, atol=1e-14)


def test_theta2_symbolic_equals_dense():
    F = two_mode_fragments("fc")
    sym = trotter.theta2(F, "pauli").to_dense()
    dense = trotter.theta2(F, "dense")
    np.testing.assert_allclose(sym, dense, atol=1e-14)


def test_theta2_vanishes_for_commuting_fragments():
    F = FragmentSet((PauliGroup(PauliSum.single("Z0", 2, 1.0)), PauliGroup(PauliSum.single("Z1", 2, 2.0))),
                    "pf", {"kind": "qubit", "n_qubits": 2})
    assert np.abs(trotter.theta2(F).to_dense()).max() == 0


def test_harmonic_grid_theta2_expectation():
    """Single harmonic mode, kinetic first: <0|Theta_2|0> = omega^3 / 48."""
    w = 0.01
    F = fragment_real_space(VibrationalModel.harmonic([w]), 6)
    sp = sim.space_of(F)
    vecs, _ = sim.grid_ho_states(1, 6, 1)
    th = trotter.theta2(F, space=sp)
    val = np.real(np.vdot(vecs[:, 0], th @ vecs[:, 0]))
    assert val == pytest.approx(w ** 3 / 48, rel=1e-6)


def test_perturbative_error_single_qubit():
    a, b = 0.7, 1.3
    tr = trotter.TrialState(np.array([1.0]), indices=np.array([0]))
    assert trotter.perturbative_error(_pair(a, b), tr) == pytest.approx(a * b * b / 3, rel=1e-12)


def test_trial_weights_must_be_normalized():
    with pytest.raises(ValueError):
        trotter.TrialState(np.array([0.5, 0.4]), indices=np.array([0, 1]))


def test_dipole_trial_weights():
    sp = sim.Space.qubit([3, 3])
    tr = trotter.dipole_trial(sp, [1.0, 2.0])
    assert tr.weights.sum() == pytest.approx(1.0)
    assert len(tr.weights) == 2


@pytest.mark.parametrize("eps2,expect_r", [(0.0, 1), (1e-20, 1), (1e-8, None)])
def test_plan_rules(eps2, expect_r):
    eps = cm1_to_hartree(7)
    p = trotter.plan(eps, 250.0, 300, eps2)
    dt = 250.0 if eps2 == 0 else min(250.0, math.sqrt(eps / eps2))
    assert p.step == pytest.approx(dt)
    assert p.r == (expect_r or math.ceil(250.0 / dt))
    assert p.L_max == p.r * 300
    assert trotter.TrotterPlan.from_dict(p.to_dict()) == p


def test_plan_rejects_bad_input():
    with pytest.raises(ValueError):
        trotter.plan(eps_trot=0)
    with pytest.raises(ValueError):
        trotter.plan(eps2=-1)


def test_dense_cap_message():
    F = two_mode_fragments("rs")
    with pytest.raises(ValueError, match="dimension"):
        trotter.theta2(F, "dense", space=sim.Space.grid(2, 8), max_dim=1000)
