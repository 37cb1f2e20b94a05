"""Closed-form R_z / T gate and qubit counts for every scheme, plus walk
counters that rederive them from explicit circuits.

Counts are exact integers.  Long-time totals use boundary merging between
consecutive oracles rather than multiplying the per-oracle count.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from math import comb
from typing import Dict, Optional

__all__ = [
    "T_PER_RZ",
    "T_PER_RZ_CONTROLLED",
    "to_t_gates",
    "rz_cgf",
    "rz_pauli",
    "rz_bf",
    "rz_bf_asymptotic",
    "c_ell",
    "n_ell",
    "cost_real_space",
    "rs_ancilla_qubits",
    "rs_register_walk",
    "ResourceReport",
    "report_for",
]

T_PER_RZ = 50
T_PER_RZ_CONTROLLED = 100


def to_t_gates(rz: int, controlled: bool = False, t_per_rz: Optional[int] = None) -> int:
    """T count for ``rz`` rotations (50 each, 100 when controlled)."""
    if rz < 0:
        raise ValueError("rotation count must be non-negative")
    k = t_per_rz if t_per_rz is not None else (T_PER_RZ_CONTROLLED if controlled else T_PER_RZ)
    return int(rz) * int(k)


def _pos(**kw):
    for k, v in kw.items():
        if v is None or int(v) != v or v < 0:
            raise ValueError(f"{k} must be a non-negative integer, got {v!r}")


def _size(**kw):
    for k, v in kw.items():
        if v is None or int(v) != v or v < 1:
            raise ValueError(f"{k} must be a positive integer, got {v!r}")


# ------------------------------------------------------------------ CGF


def _cgf_diag(M: int, N: int, n: int) -> int:
    """Rotations in one multi-mode diagonal unitary (all pair/triple words)."""
    if n == 2:
        return M * N + M * (M - 1) // 2 * N * N
    if n == 3:
        return M * N + M * (M - 1) // 2 * N * N + comb(M, 3) * N ** 3
    raise ValueError("mode coupling order must be 2 or 3")


def rz_cgf(M: int, N: int, N_f: int, L_max: Optional[int] = None, n: int = 2) -> int:
    """R_z count for ``N_f`` multi-mode fragments plus the one-mode fragment.

    Per oracle: ``2MN + 2MN(N-1)(N_f+1) + D (2N_f-1)`` with ``D`` the
    diagonal cost ``MN(1 + N(M-1)/2)`` (n = 2) or its three-mode extension.
    With ``L_max``: ``(L+1)MN + 2MN(N-1)(N_f L+1) + D (2N_f-1) L``.
    """
    _size(M=M, N=N)
    _pos(N_f=N_f)
    D = _cgf_diag(M, N, n)
    givens = M * N * (N - 1)
    if L_max is None:
        return 2 * M * N + 2 * givens * (N_f + 1) + D * (2 * N_f - 1)
    _pos(L_max=L_max)
    return (L_max + 1) * M * N + 2 * givens * (N_f * L_max + 1) + D * (2 * N_f - 1) * L_max


# ---------------------------------------------------------------- Pauli


def rz_pauli(N_H: int, scheme: str = "pf", N_first: int = 1, N_last: int = 1, L_max: Optional[int] = None) -> int:
    """R_z count for PF/FC/QWC.

    PF: ``2N_H - 1`` per oracle, ``2N_H L - (2L - 1)`` long-time.
    FC/QWC: ``2N_H - N_last`` per oracle,
    ``2N_H L - N_last L - N_first (L - 1)`` long-time.
    """
    if N_H < 1:
        raise ValueError("N_H must be at least 1")
    scheme = scheme.lower()
    if scheme == "pf":
        N_first = N_last = 1
    elif scheme not in ("fc", "qwc"):
        raise ValueError(f"unknown Pauli scheme {scheme!r}")
    _pos(N_first=N_first, N_last=N_last)
    if L_max is None:
        return 2 * N_H - N_last
    _pos(L_max=L_max)
    return 2 * N_H * L_max - N_last * L_max - N_first * (L_max - 1)


# ------------------------------------------------------------------- BF


def _bf_terms(M: int, N: int, squared: bool):
    quad = M * N
    quart = M * (M - 1) // 2 * N * N + M * N * (N - 1) // 2 + M * N
    k = N if squared else N - 1
    unit = 4 * M * (M - 1) * k * k + M * (N - 1) + M * N
    return quad, quart, unit


def rz_bf(M: int, N: int, N_f: int, L_max: Optional[int] = None, d: int = 4, squared: bool = False) -> int:
    """R_z count for one quadratic and ``N_f`` quartic fragments (d = 4).

    Per oracle: ``2 Q + R (2N_f - 1) + 2 B (N_f + 1)`` with ``Q = MN``,
    ``R`` the quartic diagonal and ``B`` the Gaussian unitary count (the
    beam-splitter term uses ``(N-1)^2``, or ``N^2`` with ``squared``).
    Long-time: ``Q (L+1) + R (2N_f - 1) L + 2 B (N_f L + 1)``.
    """
    _size(M=M, N=N)
    _pos(N_f=N_f)
    if d != 4:
        raise ValueError("closed form available for d = 4 only; see rz_bf_asymptotic")
    Q, R, B = _bf_terms(M, N, squared)
    if L_max is None:
        return 2 * Q + R * (2 * N_f - 1) + 2 * B * (N_f + 1)
    _pos(L_max=L_max)
    return Q * (L_max + 1) + R * (2 * N_f - 1) * L_max + 2 * B * (N_f * L_max + 1)


def rz_bf_asymptotic(M: int, N: int, N_f: int, d: int) -> int:
    """Leading-order scaling ``(MN)^{ceil(d/2)} N_f`` (estimate only)."""
    if d % 2 or d < 4:
        raise ValueError("d must be even and at least 4")
    return (M * N) ** (d // 2) * N_f


# ------------------------------------------------------------ real space


def _mult(a: int, b: int) -> int:
    return 2 * a * b - max(a, b)


def _add(a: int) -> int:
    return 4 * a - 4


def c_ell(ell: int, N_q: int, b_k: int) -> int:
    """T gates for one degree-``ell`` monomial:
    ``2N_q(N_q l(l-1) + l(2b_k - 1) + 3) + 4b_k - 4``."""
    return 2 * N_q * (N_q * ell * (ell - 1) + ell * (2 * b_k - 1) + 3) + 4 * b_k - 4


def n_ell(ell: int, M: int, n: int, enumerate_exact: bool = False) -> int:
    """Number of degree-``ell`` monomials touching at most ``n`` modes.

    The default is the published piecewise count; ``enumerate_exact`` gives
    ``sum_j C(M, j) C(ell-1, j-1)`` over ``j <= min(ell, n)``.
    """
    if ell < 2:
        return 0
    if enumerate_exact or ell <= n:
        return sum(comb(M, j) * comb(ell - 1, j - 1) for j in range(1, min(ell, n) + 1))
    return sum(comb(n - 1, n - j) * comb(M, j) for j in range(1, n + 1))


def rs_ancilla_qubits(N_q: int, d: int, b_k: int, b_r: int) -> int:
    """``N_q(d^2 + 3d - 2)/2 + 2b_k + (d-1)b_r``."""
    return N_q * (d * d + 3 * d - 2) // 2 + 2 * b_k + (d - 1) * b_r


def cost_real_space(M: int, N_q: int, n: int, d: int, b_k: int = 8, b_r: int = 13,
                    L_max: Optional[int] = None, kinetic_terms: Optional[int] = None,
                    enumerate_exact: bool = False, controlled: bool = False) -> Dict[str, int]:
    """T and qubit counts of the real-space split-operator oracle.

    The potential costs ``sum_l C(l) N(l)``.  The kinetic quadratic form,
    diagonal after the shifted Fourier transforms, is costed as
    ``C(2)`` per term (``kinetic_terms`` defaults to M(M+1)/2).  Long-time
    evolution applies the potential ``L`` times and the kinetic ``L+1``
    times.  Controlled evolution adds 4 T per phase-gradient addition.
    """
    _size(M=M, N_q=N_q, n=n, d=d, b_k=b_k, b_r=b_r)
    if not 1 <= n <= d or d < 2:
        raise ValueError("need 1 <= n <= d and d >= 2")
    counts = {ell: n_ell(ell, M, n, enumerate_exact) for ell in range(2, d + 1)}
    potential = sum(c_ell(ell, N_q, b_k) * k for ell, k in counts.items())
    n_kin = M * (M + 1) // 2 if kinetic_terms is None else int(kinetic_terms)
    kinetic = c_ell(2, N_q, b_k) * n_kin
    if controlled:
        potential += 4 * sum(counts.values())
        kinetic += 4 * n_kin
    out = {
        "system_qubits": M * N_q,
        "ancilla_qubits": rs_ancilla_qubits(N_q, d, b_k, b_r),
        "potential_t": potential,
        "kinetic_t": kinetic,
        "monomials": sum(counts.values()),
        "t_per_oracle": potential + 2 * kinetic,
    }
    out["qubits"] = out["system_qubits"] + out["ancilla_qubits"]
    if L_max is not None:
        _pos(L_max=L_max)
        out["t_total"] = L_max * potential + (L_max + 1) * kinetic
    return out


def rs_register_walk(M: int, N_q: int, d: int, b_k: int, b_r: int, ell: Optional[int] = None) -> Dict[str, int]:
    """Walk the monomial circuit for one degree-``ell`` term.

    Registers are allocated as the circuit proceeds: the partial products
    (sizes 2N_q..l N_q), the coefficient register, the coefficient-product
    register and one phase-gradient register per degree 2..d.  T gates
    are summed from the out-of-place multiplier ``2ab - max(a, b)`` and
    adder ``4a - 4`` costs, including uncomputation.
    """
    ell = d if ell is None else ell
    live = M * N_q + (d - 1) * b_r
    peak = live
    t = 0
    width = N_q
    for j in range(1, ell):
        t += 2 * _mult(N_q, width)  # compute + uncompute
        width += N_q
        live += width
        peak = max(peak, live)
    live += b_k
    t += 2 * _mult(width, b_k)
    live += width + b_k
    peak = max(peak, live)
    t += _add(width + b_k)
    return {"qubits": peak, "t": t}


# --------------------------------------------------------------- reports


@dataclass(frozen=True)
class ResourceReport:
    """Gate and qubit totals for one scheme and parameter set."""

    scheme: str
    qubits: int
    system_qubits: int
    ancilla_qubits: int
    rz_per_oracle: Optional[int]
    rz_total: Optional[int]
    t_per_oracle: int
    t_total: Optional[int]
    n_fragments: int
    L_max: Optional[int]
    params: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ResourceReport":
        return cls(**d)

    CSV_COLUMNS = ("scheme", "M", "N", "N_q", "N_f", "r", "L_max", "qubits", "T_per_oracle", "T_total")

    def csv_row(self, r: Optional[int] = None) -> str:
        p = self.params
        row = [self.scheme, p.get("M"), p.get("N"), p.get("N_q"), self.n_fragments, r, self.L_max,
               self.qubits, self.t_per_oracle, self.t_total]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        w.writerow(["" if v is None else v for v in row])
        return buf.getvalue()


def report_for(scheme: str, *, M: int, N: Optional[int] = None, N_f: int = 0, L_max: Optional[int] = None,
               N_H: Optional[int] = None, N_first: int = 1, N_last: int = 1, n: int = 2, d: int = 4,
               N_q: Optional[int] = None, b_k: int = 8, b_r: int = 13, controlled: bool = False,
               squared: bool = False, enumerate_exact: bool = False,
               kinetic_terms: Optional[int] = None) -> ResourceReport:
    """Assemble a ResourceReport for ``scheme``.

    ``N_f`` is the number of multi-mode (CGF) or quartic (BF) fragments,
    excluding the one-mode / quadratic fragment, and the number of groups
    for Pauli schemes.
    """
    scheme = scheme.lower()
    params = {"M": M, "N": N, "N_q": N_q, "n": n, "d": d, "b_k": b_k, "b_r": b_r, "controlled": controlled}
    if scheme == "rs":
        c = cost_real_space(M, N_q, n, d, b_k, b_r, L_max, kinetic_terms, enumerate_exact, controlled)
        params.update({"enumerate": enumerate_exact, "kinetic_terms": kinetic_terms})
        return ResourceReport("rs", c["qubits"], c["system_qubits"], c["ancilla_qubits"], None, None,
                              c["t_per_oracle"], c.get("t_total"), 2, L_max, params)
    if scheme == "cgf":
        per = rz_cgf(M, N, N_f, None, n)
        tot = rz_cgf(M, N, N_f, L_max, n) if L_max is not None else None
        nf = N_f + 1
    elif scheme == "bf":
        per = rz_bf(M, N, N_f, None, d, squared)
        tot = rz_bf(M, N, N_f, L_max, d, squared) if L_max is not None else None
        params["squared"] = squared
        nf = N_f + 1
    elif scheme in ("pf", "fc", "qwc"):
        per = rz_pauli(N_H, scheme, N_first, N_last)
        tot = rz_pauli(N_H, scheme, N_first, N_last, L_max) if L_max is not None else None
        params.update({"N_H": N_H, "N_first": N_first, "N_last": N_last})
        nf = N_H if scheme == "pf" else N_f
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    sysq = M * N
    return ResourceReport(scheme, sysq, sysq, 0, per, tot, to_t_gates(per, controlled),
                          None if tot is None else to_t_gates(tot, controlled), nf, L_max, params)
