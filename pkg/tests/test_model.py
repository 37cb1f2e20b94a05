import json

import numpy as np
import pytest

from conftest import bundled
from vibtrotter.model import (
    VibrationalModel,
    load_model,
    localize_modes,
    pipek_mezey_objective,
    restrict_n_mode,
    rotate_coordinates,
    save_model,
)


def test_bundled_models_load():
    for name in ("one_mode_quartic", "two_mode_quartic", "h2s_like"):
        m = bundled(name)
        assert m.num_modes == len(m.frequencies)
        assert np.all(np.asarray(m.frequencies) > 0)


def test_save_load_roundtrip(tmp_path, m2):
    p = tmp_path / "m.json"
    save_model(m2, p)
    again = load_model(p)
    assert again.to_dict() == m2.to_dict()
    q = np.random.default_rng(3).normal(size=(5, 2))
    np.testing.assert_allclose(again.potential(q), m2.potential(q))


def test_malformed_model_names_field(tmp_path, m2):
    d = m2.to_dict()
    d.pop("frequencies")
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    with pytest.raises((KeyError, ValueError)) as e:
        load_model(p)
    assert "frequencies" in str(e.value)


def test_restrict_n_mode_drops_three_mode_terms():
    m = bundled("h2s_like")
    r = restrict_n_mode(m, 2)
    assert all(len(set(idx)) <= 2 for idx in r.monomials())
    kept = {k: v for k, v in m.monomials().items() if len(set(k)) <= 2}
    assert r.monomials() == pytest.approx(kept)


def test_rotation_preserves_potential(rng):
    m = bundled("h2s_like")
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    rm = rotate_coordinates(m, Q)
    q_old = rng.normal(size=(7, 3)) * 0.3
    np.testing.assert_allclose(rm.potential(q_old @ Q.T), m.potential(q_old), atol=1e-13)


def test_localization_increases_objective_and_is_orthogonal(rng):
    atoms, M = 4, 3
    raw = rng.normal(size=(atoms * 3, M))
    Q, _ = np.linalg.qr(raw)
    B = Q.reshape(atoms, 3, M)
    R, trace = localize_modes(B, return_trace=True)
    np.testing.assert_allclose(R.R @ R.R.T, np.eye(M), atol=1e-12)
    assert np.all(np.diff(trace) >= -1e-12)
    B_loc = np.einsum("axm,km->axk", B, R.R)
    assert pipek_mezey_objective(B_loc) >= pipek_mezey_objective(B) - 1e-12


def test_harmonic_constructor():
    m = VibrationalModel.harmonic([0.01, 0.02])
    np.testing.assert_allclose(m.potential(np.array([[1.0, 1.0]])), [0.015])
