import functools
from pathlib import Path

import numpy as np
import pytest

from vibtrotter.bosonic import model_symbol
from vibtrotter.frag import fragment_bf, fragment_cgf, fragment_commuting, fragment_pf, fragment_real_space
from vibtrotter.modal import build_christiansen
from vibtrotter.model import load_model
from vibtrotter.pauli import encode_christiansen

DATA = Path(__file__).resolve().parents[1] / "src" / "vibtrotter" / "data"
N_MODAL = 4
N_Q = 4


@functools.lru_cache(maxsize=None)
def bundled(name: str):
    return load_model(DATA / f"{name}.json")


@functools.lru_cache(maxsize=None)
def two_mode_hamiltonian(N: int = N_MODAL):
    return build_christiansen(bundled("two_mode_quartic"), N)


@functools.lru_cache(maxsize=None)
def two_mode_fragments(scheme: str):
    """Fragment sets of the bundled 2-mode model, cached across test modules."""
    model = bundled("two_mode_quartic")
    H = two_mode_hamiltonian()
    if scheme == "cgf":
        return fragment_cgf(H)
    if scheme == "bf":
        return fragment_bf(model, N_MODAL)
    if scheme == "rs":
        return fragment_real_space(model, N_Q)
    Hq = encode_christiansen(H)
    if scheme == "pf":
        return fragment_pf(Hq, sizes=H.sizes)
    return fragment_commuting(Hq, scheme, sizes=H.sizes)


@pytest.fixture(scope="session")
def m2():
    return bundled("two_mode_quartic")


@pytest.fixture(scope="session")
def h2():
    return two_mode_hamiltonian()


@pytest.fixture(scope="session")
def sym2(m2):
    return model_symbol(m2)


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


ACCEPTANCE_LINES = []


def report(name: str, ok: bool, detail: str = "") -> None:
    """Record one acceptance line (printed again in the terminal summary)."""
    line = f"{'PASS' if ok else 'FAIL'} {name}{': ' + detail if detail else ''}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
