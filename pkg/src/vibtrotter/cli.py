"""Command-line pipeline: build, localize, vscf, fragment, plan, resources,
simulate, spectrum, or all of them in order.

Every stage writes its artifacts to the output directory and refreshes
``manifest.json`` (schema ``v1``) with the run configuration, its hash and
the SHA-256 of every artifact.  Outputs contain no timestamps, so identical
configurations reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from importlib import resources as importlib_resources
from pathlib import Path
from typing import List, Optional

import numpy as np
import scipy

from . import __version__
from .bosonic import model_symbol
from .frag import (
    FragmentSet,
    fragment_bf,
    fragment_cgf,
    fragment_commuting,
    fragment_pf,
    fragment_real_space,
)
from .frag.base import PauliGroup
from .modal import ChristiansenHamiltonian, build_christiansen, christiansen_dense, vscf
from .model import VibrationalModel, load_model, localize_modes, restrict_n_mode, rotate_coordinates, save_model
from .pauli import encode_christiansen
from .resources import report_for
from .sim import (
    Space,
    autocorrelation,
    dense_matrix,
    exact_reference,
    find_peaks,
    fragment_matrix,
    peaks_match,
    product_dipole_state,
    read_autocorrelation_csv,
    reference_state,
    spectrum,
    trial_state,
    write_autocorrelation_csv,
    write_spectrum_csv,
)
from .trotter import DEFAULT_EPS_TROT_CM1, DEFAULT_K_MAX, DEFAULT_TAU, TrotterPlan, dipole_trial, perturbative_error, plan
from .units import cm1_to_hartree

OUT_ENV = "VIBTROTTER_OUT"
MANIFEST_SCHEMA = "v1"
SCHEMES = ("pf", "qwc", "fc", "cgf", "bf", "rs")
CHRISTIANSEN_SCHEMES = ("pf", "qwc", "fc", "cgf")
STAGES = ("build", "localize", "vscf", "fragment", "plan", "resources", "simulate", "spectrum")
BUNDLED = ("one_mode_quartic", "two_mode_quartic", "h2s_like")


class PipelineError(Exception):
    """A user-facing configuration or stage-ordering problem."""


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run's outputs."""

    model: str
    scheme: str = "cgf"
    basis: str = "ho"
    N: List[int] = field(default_factory=lambda: [4])
    n_q: int = 4
    n: int = 2
    d: int = 4
    eps_frag: Optional[float] = None
    eps_trot_cm1: float = DEFAULT_EPS_TROT_CM1
    tau: float = DEFAULT_TAU
    k_max: int = DEFAULT_K_MAX
    eta_cm1: float = 10.0
    b_k: int = 8
    b_r: int = 13
    controlled: bool = False
    seed: int = 0xC0FFEE
    dipole: Optional[List[float]] = None
    bf_sim_n: Optional[int] = None
    enumerate_monomials: bool = False

    def validate(self):
        if self.scheme not in SCHEMES:
            raise PipelineError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")
        if self.basis not in ("ho", "vscf"):
            raise PipelineError(f"unknown basis {self.basis!r}; choose ho or vscf")
        if self.basis == "vscf" and self.scheme not in CHRISTIANSEN_SCHEMES:
            raise PipelineError(f"basis vscf requires a Christiansen-form scheme ({', '.join(CHRISTIANSEN_SCHEMES)}), "
                                f"not {self.scheme}")
        for name in ("eps_trot_cm1", "tau", "eta_cm1"):
            if not getattr(self, name) > 0:
                raise PipelineError(f"{name} must be positive")
        if self.eps_frag is not None and not self.eps_frag > 0:
            raise PipelineError("eps_frag must be positive")
        if self.k_max < 0 or any(x < 2 for x in self.N) or self.n_q < 1:
            raise PipelineError("need k_max >= 0, N >= 2 and n_q >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def sizes(self, M: int) -> List[int]:
        if len(self.N) == 1:
            return [self.N[0]] * M
        if len(self.N) != M:
            raise PipelineError(f"--N lists {len(self.N)} sizes for a {M}-mode model")
        return list(self.N)


# ------------------------------------------------------------------ files


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _write_json(path: Path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")


def _read_json(path: Path, stage_hint: str):
    if not path.exists():
        raise PipelineError(f"{path.name} not found in {path.parent}; run the '{stage_hint}' stage first")
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise PipelineError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def resolve_model_path(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    if name in BUNDLED:
        return Path(str(importlib_resources.files("vibtrotter") / "data" / f"{name}.json"))
    raise PipelineError(f"model {name!r} is neither a file nor a bundled model ({', '.join(BUNDLED)})")


class Run:
    """Stage runner bound to one configuration and output directory."""

    def __init__(self, cfg: RunConfig, out: Path, log=print):
        cfg.validate()
        self.cfg = cfg
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.log = log

    # -- manifest
    def _manifest(self, stage: str, written: List[str]):
        path = self.out / "manifest.json"
        old = {}
        if path.exists():
            with open(path) as fh:
                old = json.load(fh)
            if old.get("config_hash") != self.cfg.hash():
                old = {}
        artifacts = dict(old.get("artifacts", {}))
        for name in written:
            artifacts[name] = _sha256(self.out / name)
        stages = [s for s in old.get("stages", []) if s != stage] + [stage]
        _write_json(path, {
            "schema": MANIFEST_SCHEMA,
            "config": self.cfg.to_dict(),
            "config_hash": self.cfg.hash(),
            "seed": self.cfg.seed,
            "versions": {"vibtrotter": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": ".".join(map(str, sys.version_info[:3]))},
            "stages": stages,
            "artifacts": dict(sorted(artifacts.items())),
        })

    # -- loaders
    def model(self) -> VibrationalModel:
        p = self.out / "model.json"
        if not p.exists():
            raise PipelineError(f"model.json not found in {self.out}; run the 'build' stage first")
        return load_model(p)

    def hamiltonian(self) -> ChristiansenHamiltonian:
        return ChristiansenHamiltonian.from_dict(_read_json(self.out / "hamiltonian.json", "build"))

    def fragments(self) -> FragmentSet:
        return FragmentSet.from_dict(_read_json(self.out / "fragments.json", "fragment"))

    def trotter_plan(self) -> TrotterPlan:
        return TrotterPlan.from_dict(_read_json(self.out / "plan.json", "plan"))

    # -- stages
    def build(self):
        cfg = self.cfg
        model = load_model(resolve_model_path(cfg.model))
        n = min(cfg.n, model.num_modes)
        if n < model.n_mode_order:
            model = restrict_n_mode(model, n)
        save_model(model, self.out / "model.json")
        written = ["model.json"]
        if cfg.scheme in CHRISTIANSEN_SCHEMES:
            H = build_christiansen(model, cfg.sizes(model.num_modes), n)
            _write_json(self.out / "hamiltonian.json", H.to_dict())
            written.append("hamiltonian.json")
        self.log(f"build: {model.num_modes} modes, n = {n}")
        self._manifest("build", written)

    def localize(self):
        model = self.model()
        if model.displacements is None:
            raise PipelineError("model has no 'displacements' field; localization needs normalized displacements")
        R = localize_modes(model.displacements, model.frequencies)
        model = rotate_coordinates(model, R)
        save_model(model, self.out / "model.json")
        _write_json(self.out / "rotation.json", {"R": R.U.tolist()})
        written = ["model.json", "rotation.json"]
        if self.cfg.scheme in CHRISTIANSEN_SCHEMES:
            H = build_christiansen(model, self.cfg.sizes(model.num_modes), min(self.cfg.n, model.num_modes))
            _write_json(self.out / "hamiltonian.json", H.to_dict())
            written.append("hamiltonian.json")
        self.log("localize: coordinates rotated to localized modes")
        self._manifest("localize", written)

    def vscf(self):
        if self.cfg.basis != "vscf":
            raise PipelineError("the vscf stage needs --basis vscf")
        H = self.hamiltonian()
        res = vscf(H)
        _write_json(self.out / "hamiltonian.json", res.hamiltonian.to_dict())
        _write_json(self.out / "vscf.json", {
            "energies": list(res.energies), "converged": res.converged, "cycles": res.cycles,
            "basis": [U.tolist() for U in res.basis.rotations],
        })
        if not res.converged:
            self.log("vscf: WARNING not converged")
        self.log(f"vscf: E = {res.energy:.10f} Eh after {res.cycles} cycle(s)")
        self._manifest("vscf", ["hamiltonian.json", "vscf.json"])

    def fragment(self):
        cfg = self.cfg
        s = cfg.scheme
        if s in CHRISTIANSEN_SCHEMES:
            H = self.hamiltonian()
            if cfg.basis == "vscf" and H.basis.is_harmonic():
                raise PipelineError("basis vscf requested but hamiltonian.json is in the oscillator basis; "
                                    "run the 'vscf' stage first")
            if s == "cgf":
                F = fragment_cgf(H, eps_frag=cfg.eps_frag or 0.05, seed=cfg.seed)
            else:
                Hq = encode_christiansen(H)
                F = fragment_pf(Hq, sizes=H.sizes) if s == "pf" else fragment_commuting(Hq, s, sizes=H.sizes)
        elif s == "bf":
            model = self.model()
            F = fragment_bf(model, cfg.sizes(model.num_modes),
                            eps_frag=cfg.eps_frag or cm1_to_hartree(1.0), seed=cfg.seed)
        else:
            F = fragment_real_space(self.model(), cfg.n_q)
        _write_json(self.out / "fragments.json", F.to_dict())
        self.log(f"fragment: {s} -> {len(F)} fragments, residual {F.residual_norm:.3e} ({F.status})")
        self._manifest("fragment", ["fragments.json"])

    def _space(self, F: FragmentSet) -> Space:
        sp = F.space
        if sp["kind"] == "qubit":
            return Space.qubit(sp["sizes"])
        if sp["kind"] == "fock":
            sizes = sp["sizes"] if self.cfg.bf_sim_n is None else [self.cfg.bf_sim_n] * sp["num_modes"]
            return Space.fock(sizes)
        return Space.grid(sp["num_modes"], sp["n_q"])

    def _basis_rotations(self):
        if self.cfg.basis == "vscf":
            return self.hamiltonian().basis.rotations
        return None

    def plan(self):
        F = self.fragments()
        sp = self._space(F)
        tr = dipole_trial(sp, self.cfg.dipole, self._basis_rotations())
        eps2 = perturbative_error(F, tr, space=sp)
        p = plan(cm1_to_hartree(self.cfg.eps_trot_cm1), self.cfg.tau, self.cfg.k_max, eps2)
        _write_json(self.out / "plan.json", p.to_dict())
        self.log(f"plan: eps2 = {eps2:.4e} Eh/au^2, dt = {p.step:.4f} au, r = {p.r}, L_max = {p.L_max}")
        self._manifest("plan", ["plan.json"])

    def resources(self):
        cfg = self.cfg
        F = self.fragments()
        p = self.trotter_plan()
        s = cfg.scheme
        if s == "rs":
            M = F.space["num_modes"]
            model = self.model()
            K = model.kinetic
            kin = int(np.count_nonzero(np.triu(np.abs(K) > 0)))
            rep = report_for("rs", M=M, N_q=cfg.n_q, n=min(cfg.n, M), d=model.taylor_order, b_k=cfg.b_k,
                             b_r=cfg.b_r, L_max=p.L_max, controlled=cfg.controlled,
                             enumerate_exact=cfg.enumerate_monomials, kinetic_terms=kin)
        else:
            sizes = F.space.get("sizes") or cfg.sizes(F.space["num_modes"])
            M, N = len(sizes), max(sizes)
            if s in ("cgf", "bf"):
                rep = report_for(s, M=M, N=N, N_f=len(F) - 1, L_max=p.L_max, n=min(cfg.n, 3),
                                 controlled=cfg.controlled)
            else:
                groups = [g for g in F.fragments if isinstance(g, PauliGroup) and g.terms.num_nonidentity() > 0]
                N_H = sum(g.terms.num_nonidentity() for g in groups)
                rep = report_for(s, M=M, N=N, N_f=len(groups), L_max=p.L_max, N_H=N_H,
                                 N_first=groups[0].terms.num_nonidentity(),
                                 N_last=groups[-1].terms.num_nonidentity(), controlled=cfg.controlled)
        _write_json(self.out / "resources.json", rep.to_dict())
        (self.out / "resources.csv").write_text(rep.csv_row(p.r))
        self.log(f"resources: {rep.qubits} qubits, T per oracle {rep.t_per_oracle}, T total {rep.t_total}")
        self._manifest("resources", ["resources.json", "resources.csv"])

    def simulate(self):
        F = self.fragments()
        p = self.trotter_plan()
        sp = self._space(F)
        psi = trial_state(sp, self.cfg.dipole, self._basis_rotations())
        C = autocorrelation(F, psi, p, sp)
        write_autocorrelation_csv(self.out / "autocorrelation.csv", C, p.tau)
        self.log(f"simulate: {len(C)} autocorrelation samples")
        self._manifest("simulate", ["autocorrelation.csv"])

    def _reference(self, F: FragmentSet, sp: Space):
        """(dense H, trial, mean-field reference) on the reference space."""
        cfg = self.cfg
        if cfg.scheme in CHRISTIANSEN_SCHEMES:
            H = self.hamiltonian()
            Hd = christiansen_dense(H)
            psi = product_dipole_state(H.sizes, cfg.dipole, self._basis_rotations()).astype(complex)
            ref = np.zeros(Hd.shape[0])
            ref[0] = 1.0
        elif cfg.scheme == "bf":
            Hd = model_symbol(self.model()).dense(list(sp.sizes))
            psi = trial_state(sp, cfg.dipole)
            ref = reference_state(sp)
        else:
            Hd = sum(dense_matrix(fragment_matrix(f, sp)) for f in F.fragments)
            psi = trial_state(sp, cfg.dipole)
            ref = reference_state(sp)
        zpe = float(np.real(np.vdot(ref, Hd @ ref)))
        return Hd, psi, zpe

    def spectrum(self):
        cfg = self.cfg
        F = self.fragments()
        sp = self._space(F)
        C, tau = read_autocorrelation_csv(_require(self.out / "autocorrelation.csv", "simulate"))
        Hd, psi, zpe = self._reference(F, sp)
        res = spectrum(C, tau, cfg.eta_cm1, zpe)
        ref = exact_reference(Hd, psi, tau, len(C) - 1, cfg.eta_cm1, zpe, res.omega_cm1)
        write_spectrum_csv(self.out / "spectrum.csv", res)
        write_spectrum_csv(self.out / "reference_spectrum.csv", ref)
        ok, dev = peaks_match(res, ref)
        _write_json(self.out / "spectrum.json", {
            "zpe_hartree": zpe, "eta_cm1": cfg.eta_cm1, "peaks_cm1": find_peaks(res).tolist(),
            "reference_peaks_cm1": find_peaks(ref).tolist(), "max_peak_deviation_cm1": dev, "peaks_match": ok,
        })
        self.log(f"spectrum: peaks {np.round(find_peaks(res), 1).tolist()} cm^-1, "
                 f"max deviation from exact {dev:.2f} cm^-1")
        self._manifest("spectrum", ["spectrum.csv", "reference_spectrum.csv", "spectrum.json"])

    def all(self, localize: bool = False):
        self.build()
        if localize:
            self.localize()
        if self.cfg.basis == "vscf":
            self.vscf()
        for st in ("fragment", "plan", "resources", "simulate", "spectrum"):
            getattr(self, st)()


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise PipelineError(f"{path.name} not found in {path.parent}; run the '{stage}' stage first")
    return path


# ------------------------------------------------------------------- argv


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vibtrotter", description=__doc__.split("\n\n")[0].replace("\n", " "))
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default="two_mode_quartic",
                        help=f"model JSON path or bundled name ({', '.join(BUNDLED)})")
    common.add_argument("--scheme", default="cgf", choices=SCHEMES)
    common.add_argument("--basis", default="ho", help="modal basis: ho or vscf (Christiansen schemes only)")
    common.add_argument("--N", type=int, nargs="+", default=[4], help="modals per mode (one value or one per mode)")
    common.add_argument("--n-q", type=int, default=4, help="grid qubits per mode (default 4)")
    common.add_argument("--n", type=int, default=2, help="mode-coupling order")
    common.add_argument("--d", type=int, default=4, help="Taylor degree")
    common.add_argument("--eps-frag", type=float, default=None,
                        help="fragmentation tolerance (CGF relative 0.05; BF 1 cm^-1 in Hartree)")
    common.add_argument("--eps-trot", type=float, default=DEFAULT_EPS_TROT_CM1,
                        help="Trotter energy tolerance in cm^-1 (default 7)")
    common.add_argument("--tau", type=float, default=DEFAULT_TAU, help="sampling interval, a.u. (default 250)")
    common.add_argument("--k-max", type=int, default=DEFAULT_K_MAX, help="autocorrelation samples (default 300)")
    common.add_argument("--eta", type=float, default=10.0, help="Lorentzian broadening, cm^-1 (default 10)")
    common.add_argument("--b-k", type=int, default=8, help="coefficient register qubits")
    common.add_argument("--b-r", type=int, default=13, help="phase-gradient register qubits")
    common.add_argument("--controlled", action="store_true", help="cost controlled rotations (100 T each)")
    common.add_argument("--seed", type=lambda s: int(s, 0), default=0xC0FFEE)
    common.add_argument("--dipole", type=float, nargs="+", default=None, help="linear dipole coefficients d_i")
    common.add_argument("--bf-sim-n", type=int, default=None,
                        help="Fock truncation used to realize bosonic fragments (default: --N)")
    common.add_argument("--enumerate", dest="enumerate_monomials", action="store_true",
                        help="real-space cost with exact monomial enumeration")
    common.add_argument("--localize", action="store_true", help="('all' only) run the localize stage")
    common.add_argument("--out", default=None, help=f"output directory (env {OUT_ENV}, default ./vibtrotter_out)")
    for name in STAGES + ("all",):
        sub.add_parser(name, parents=[common], help=f"run the {name} stage" if name != "all" else "run every stage")
    return ap


def config_from_args(a) -> RunConfig:
    return RunConfig(
        model=a.model, scheme=a.scheme, basis=a.basis, N=list(a.N), n_q=a.n_q, n=a.n, d=a.d,
        eps_frag=a.eps_frag, eps_trot_cm1=a.eps_trot, tau=a.tau, k_max=a.k_max, eta_cm1=a.eta,
        b_k=a.b_k, b_r=a.b_r, controlled=a.controlled, seed=a.seed,
        dipole=None if a.dipole is None else list(a.dipole), bf_sim_n=a.bf_sim_n,
        enumerate_monomials=a.enumerate_monomials,
    )


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    out = Path(a.out or os.environ.get(OUT_ENV) or "vibtrotter_out")
    try:
        run = Run(config_from_args(a), out)
        if a.command == "all":
            run.all(localize=a.localize)
        else:
            getattr(run, a.command)()
    except (PipelineError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
