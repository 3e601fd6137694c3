"""Matterwave gate targets and their synthesis by optimal control.

Gates are defined between Bloch eigenstates at q = 0 of the design lattice.
A candidate control phi(t) is piecewise constant on control bins; the
fidelity gradient is obtained with the adjoint (GRAPE) recursion through
the exact per-bin propagators and fed to a bounded quasi-Newton optimizer.
"""
from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .dynamics import SAMPLE_PERIOD, FewModePropagator, Waveform, propagate_fewmode
from .lattice import LatticeConfig, band_basis
from .parallel import ordered_map

log = logging.getLogger(__name__)

GATE_KINDS = ("beamsplitter", "asym_beamsplitter", "mirror", "cb_beamsplitter", "split_hold", "echo")
KIND_ALIASES = {
    "bs": "beamsplitter",
    "asym": "asym_beamsplitter",
    "abs": "asym_beamsplitter",
    "cb": "cb_beamsplitter",
    "cbbs": "cb_beamsplitter",
    "sh": "split_hold",
    "split&hold": "split_hold",
}
DEFAULT_DURATION = {
    "beamsplitter": 150e-6,
    "asym_beamsplitter": 200e-6,
    "mirror": 250e-6,
    "cb_beamsplitter": 200e-6,
    "split_hold": 200e-6,
    "echo": 200e-6,
}
_S = 1 / np.sqrt(2)
PAULI_Z = np.diag([1.0, -1.0])
# columns are images of the basis states: |a> -> |b>, |b> -> -|a>
PAULI_Y = np.array([[0.0, -1.0], [1.0, 0.0]])
HADAMARD = _S * np.array([[1.0, 1.0], [1.0, -1.0]])


class SynthesisError(RuntimeError):
    def __init__(self, message: str, diagnostics: list):
        super().__init__(message)
        self.diagnostics = diagnostics


def canonical_kind(kind: str) -> str:
    kind = KIND_ALIASES.get(kind.lower(), kind.lower())
    if kind not in GATE_KINDS:
        raise ValueError(f"unknown gate kind {kind!r}; expected one of {GATE_KINDS}")
    return kind


@dataclass
class GateTarget:
    """A state target (d = 1) or an operator target on a 2D band subspace.

    ``matrix`` holds the images of the input basis states expressed in the
    output basis, one column per input.
    """

    kind: str
    variant: int
    bands_in: tuple
    bands_out: tuple
    matrix: np.ndarray
    config: LatticeConfig = field(default_factory=LatticeConfig)

    @property
    def form(self) -> str:
        return "state" if len(self.bands_in) == 1 else "operator"

    @property
    def dim(self) -> int:
        return len(self.bands_in)

    def input_basis(self, config: LatticeConfig | None = None) -> np.ndarray:
        return band_basis(config or self.config, self.bands_in)

    def target_images(self, config: LatticeConfig | None = None) -> np.ndarray:
        return band_basis(config or self.config, self.bands_out) @ self.matrix

    @property
    def name(self) -> str:
        return f"{self.kind}:{self.variant}"


def gate_target(kind: str, variant: int = 1, config: LatticeConfig | None = None) -> GateTarget:
    """The six gate families, two permuted variants each."""
    kind = canonical_kind(kind)
    if variant not in (1, 2):
        raise ValueError(f"variant must be 1 or 2, got {variant}")
    config = config or LatticeConfig()
    one = np.ones((1, 1))
    if kind == "beamsplitter":
        return GateTarget(kind, variant, (0,), (3 if variant == 1 else 4,), one, config)
    if kind == "asym_beamsplitter":
        sign = 1.0 if variant == 1 else -1.0
        return GateTarget(kind, variant, (0,), (3, 4), np.array([[_S], [sign * _S]]), config)
    if kind == "mirror":
        return GateTarget(kind, variant, (3, 4), (3, 4), PAULI_Z if variant == 1 else PAULI_Y, config)
    if kind == "cb_beamsplitter":
        m = HADAMARD if variant == 1 else _S * np.array([[1.0, 1.0], [-1.0, 1.0]])
        return GateTarget(kind, variant, (3, 4), (3, 4), m, config)
    if kind == "split_hold":
        out = (0, 1) if variant == 1 else (1, 0)
        return GateTarget(kind, variant, (3, 4), out, np.eye(2), config)
    return GateTarget(kind, variant, (0, 1), (0, 1), PAULI_Z if variant == 1 else PAULI_Y, config)


def all_targets(config: LatticeConfig | None = None) -> list[GateTarget]:
    return [gate_target(k, v, config) for k in GATE_KINDS for v in (1, 2)]


def state_fidelity(final, target) -> float:
    """|<target|final>|^2 for normalized vectors."""
    return float(min(1.0, abs(np.vdot(np.ravel(target), np.ravel(final))) ** 2))


def operator_fidelity(achieved: np.ndarray, target: np.ndarray, d: int | None = None) -> float:
    """|tr(T^dagger M)|^2 / d^2 for the achieved subspace map M."""
    achieved = np.atleast_2d(achieved)
    target = np.atleast_2d(target)
    d = d or target.shape[0]
    return float(min(1.0, abs(np.trace(target.conj().T @ achieved)) ** 2 / d**2))


@dataclass
class SynthesisOptions:
    duration: float = 150e-6
    control_bin: float = 1e-6
    amplitude_bound: float = np.pi
    restarts: int = 16
    max_iterations: int = 1000
    fidelity_goal: float = 0.99
    seed: int = 0
    smoothness: float = 2e-5
    harmonics: int = 10
    seed_amplitude: float = np.pi / 4
    workers: int | None = None

    def __post_init__(self) -> None:
        n = self.duration / self.control_bin
        if abs(n - round(n)) > 1e-6 or round(n) < 3:
            raise ValueError("duration must be an integral number (>= 3) of control bins")
        b = self.control_bin / SAMPLE_PERIOD
        if abs(b - round(b)) > 1e-6:
            raise ValueError("control bin must be a multiple of the 50 ns sample period")
        if not 0.9 < self.fidelity_goal < 1:
            raise ValueError("fidelity goal must lie in (0.9, 1)")
        if not 0 < self.amplitude_bound <= 2 * np.pi:
            raise ValueError("amplitude bound must lie in (0, 2 pi]")

    @property
    def n_bins(self) -> int:
        return int(round(self.duration / self.control_bin))


@dataclass
class FidelityReport:
    fidelity: float
    overlaps: list = field(default_factory=list)
    gradient_norm: float = float("nan")
    iterations: int = 0
    verification_fidelity: float = float("nan")
    flagged: bool = False
    leakage: dict = field(default_factory=dict)
    restarts: list = field(default_factory=list)
    penalty: float = 0.0


class ControlProblem:
    """Fidelity of a piecewise-constant control and its exact adjoint gradient."""

    def __init__(self, target: GateTarget, config: LatticeConfig, control_bin: float, q: float = 0.0):
        self.config = config
        self.orders = config.orders.astype(float)
        self.prop = FewModePropagator(config, q).static(float(config.to_internal_time(control_bin)))
        self.start = target.input_basis(config)
        self.goal = target.target_images(config)
        self.d = target.dim

    def _phases(self, phi):
        return np.exp(1j * np.outer(phi, self.orders))

    def forward(self, phi: np.ndarray) -> np.ndarray:
        x = self.start
        for dk in self._phases(phi):
            x = dk[:, None] * (self.prop @ (dk.conj()[:, None] * x))
        return x

    def fidelity(self, phi: np.ndarray) -> float:
        g = np.trace(self.goal.conj().T @ self.forward(phi))
        return float(abs(g) ** 2 / self.d**2)

    def fidelity_and_gradient(self, phi: np.ndarray):
        """Adjoint recursion: with U_k = D_k P D_k^dagger, dU_k/dphi_k = i[L, U_k]."""
        phases = self._phases(phi)
        n = len(phi)
        pdag = self.prop.conj().T
        fwd = [self.start]
        for dk in phases:
            fwd.append(dk[:, None] * (self.prop @ (dk.conj()[:, None] * fwd[-1])))
        lam = self.goal
        lo = self.orders[:, None]
        # tr(Lambda_k^dagger L X_k) for k = n..0
        traces = np.empty(n + 1, dtype=complex)
        traces[n] = np.vdot(lam, lo * fwd[n])
        for k in range(n, 0, -1):
            dk = phases[k - 1]
            lam = dk[:, None] * (pdag @ (dk.conj()[:, None] * lam))
            traces[k - 1] = np.vdot(lam, lo * fwd[k - 1])
        g = np.trace(self.goal.conj().T @ fwd[n])
        dg = 1j * (traces[1:] - traces[:-1])
        fid = abs(g) ** 2 / self.d**2
        grad = 2 * np.real(np.conj(g) * dg) / self.d**2
        return float(fid), grad


def _seed_control(rng: np.random.Generator, n: int, harmonics: int, amplitude: float) -> np.ndarray:
    t = (np.arange(n) + 0.5) / n
    coeffs = rng.normal(size=harmonics) / np.arange(1, harmonics + 1)
    phi = np.sin(np.pi * np.outer(t, np.arange(1, harmonics + 1))) @ coeffs
    return phi * (amplitude * rng.uniform(0.5, 1.0) / np.max(np.abs(phi)))


def _run_restart(args, problem: ControlProblem, opts: SynthesisOptions):
    index, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    n = opts.n_bins
    phi0 = _seed_control(rng, n, opts.harmonics, opts.seed_amplitude)
    phi0[0] = phi0[-1] = 0.0
    lam = opts.smoothness

    def objective(x):
        fid, grad = problem.fidelity_and_gradient(x)
        dx = np.diff(x)
        pen = lam * np.dot(dx, dx)
        gpen = np.zeros_like(x)
        gpen[:-1] -= 2 * lam * dx
        gpen[1:] += 2 * lam * dx
        return pen - fid, gpen - grad

    bound = opts.amplitude_bound
    bounds = [(0.0, 0.0)] + [(-bound, bound)] * (n - 2) + [(0.0, 0.0)]
    res = minimize(objective, phi0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": opts.max_iterations, "ftol": 1e-13, "gtol": 1e-10})
    phi = np.clip(res.x, -bound, bound)
    fid, grad = problem.fidelity_and_gradient(phi)
    dx = np.diff(phi)
    return {
        "restart": index,
        "fidelity": fid,
        "iterations": int(res.nit),
        "gradient_norm": float(np.linalg.norm(grad[1:-1])),
        "penalty": float(lam * np.dot(dx, dx)),
        "controls": phi,
    }


def bins_to_waveform(controls: np.ndarray, control_bin: float, label: str = "",
                     metadata: dict | None = None) -> Waveform:
    """Zero-order hold of control bins onto the 50 ns sample grid."""
    per_bin = int(round(control_bin / SAMPLE_PERIOD))
    return Waveform(np.repeat(np.asarray(controls, float), per_bin), SAMPLE_PERIOD, label,
                    dict(metadata or {}))


def synthesize(target: GateTarget, config: LatticeConfig | None = None,
               opts: SynthesisOptions | None = None) -> tuple[Waveform, FidelityReport]:
    """Multi-start optimal control; returns the best waveform and its report."""
    config = config or target.config
    opts = opts or SynthesisOptions(duration=DEFAULT_DURATION[target.kind])
    problem = ControlProblem(target, config, opts.control_bin)
    streams = np.random.SeedSequence(opts.seed).spawn(opts.restarts)
    runs = ordered_map(partial(_run_restart, problem=problem, opts=opts),
                       list(enumerate(streams)), opts.workers)
    best = max(runs, key=lambda r: (r["fidelity"], -r["restart"]))
    diagnostics = [{k: v for k, v in r.items() if k != "controls"} for r in runs]
    if best["fidelity"] < 0.90:
        raise SynthesisError(
            f"{target.name}: no restart reached 0.90 (best {best['fidelity']:.4f})", diagnostics
        )
    if best["fidelity"] < opts.fidelity_goal:
        warnings.warn(
            f"{target.name}: best fidelity {best['fidelity']:.4f} below goal {opts.fidelity_goal}",
            RuntimeWarning, stacklevel=2,
        )
    meta = {
        "kind": target.kind,
        "variant": target.variant,
        "depth_Er": config.depth,
        "fidelity": best["fidelity"],
        "seed": opts.seed,
        "restart": best["restart"],
        "control_bin_ns": round(opts.control_bin * 1e9),
        "truncation": config.truncation,
    }
    wave = bins_to_waveform(best["controls"], opts.control_bin, target.name, meta)
    report = FidelityReport(
        fidelity=best["fidelity"],
        overlaps=channel_overlaps(wave, target, config),
        gradient_norm=best["gradient_norm"],
        iterations=best["iterations"],
        restarts=diagnostics,
        penalty=best["penalty"],
    )
    check = verify_gate(wave, target, config.with_truncation(16))
    report.verification_fidelity = check.fidelity
    report.leakage = check.leakage
    report.flagged = abs(check.fidelity - report.fidelity) > 0.01
    wave.metadata["verification_fidelity"] = check.fidelity
    return wave, report


def reverse(w: Waveform) -> Waveform:
    """Play the control backwards."""
    meta = dict(w.metadata)
    meta["reversed"] = not meta.get("reversed", False)
    return Waveform(w.samples[::-1].copy(), w.sample_period, w.label, meta)


def negate(w: Waveform) -> Waveform:
    """phi -> -phi, which mirrors the gate in space."""
    meta = dict(w.metadata)
    meta["negated"] = not meta.get("negated", False)
    return Waveform(-w.samples, w.sample_period, w.label, meta)


def _achieved(w: Waveform, target: GateTarget, config: LatticeConfig):
    start = target.input_basis(config)
    final = propagate_fewmode(start, w, config).final
    return start, final


def channel_overlaps(w: Waveform, target: GateTarget, config: LatticeConfig) -> list:
    _, final = _achieved(w, target, config)
    goal = target.target_images(config)
    return [float(abs(np.vdot(goal[:, j], final[:, j])) ** 2) for j in range(target.dim)]


def verify_gate(w: Waveform, target: GateTarget, config: LatticeConfig | None = None) -> FidelityReport:
    """Independent re-propagation (default N_max = 16, 50 ns steps)."""
    config = config or target.config.with_truncation(16)
    _, final = _achieved(w, target, config)
    out_basis = band_basis(config, target.bands_out)
    achieved_map = out_basis.conj().T @ final
    if target.form == "state":
        fid = state_fidelity(final[:, 0], target.target_images(config)[:, 0])
    else:
        fid = operator_fidelity(achieved_map, target.matrix, target.dim)
    bands = band_basis(config, range(5))
    pops = np.abs(bands.conj().T @ final) ** 2
    leakage = {f"band{b}": float(pops[b].mean()) for b in range(5)}
    leakage["other"] = float(max(0.0, 1 - pops.sum(axis=0).mean()))
    goal = target.target_images(config)
    overlaps = [float(abs(np.vdot(goal[:, j], final[:, j])) ** 2) for j in range(target.dim)]
    return FidelityReport(fidelity=fid, overlaps=overlaps, verification_fidelity=fid, leakage=leakage)


# ---------------------------------------------------------------- waveform files

def waveform_to_dict(w: Waveform) -> dict:
    meta = dict(w.metadata)
    doc = {
        "label": w.label,
        "sample_period_ns": round(w.sample_period * 1e9, 6),
        "samples_rad": [float(s) for s in w.samples],
        "depth_Er": meta.pop("depth_Er", None),
        "fidelity": meta.pop("fidelity", None),
        "seed": meta.pop("seed", None),
    }
    doc["metadata"] = meta
    return doc


def waveform_from_dict(doc: dict) -> Waveform:
    meta = dict(doc.get("metadata", {}))
    for key in ("depth_Er", "fidelity", "seed"):
        if doc.get(key) is not None:
            meta[key] = doc[key]
    return Waveform(np.array(doc["samples_rad"], dtype=float), doc["sample_period_ns"] * 1e-9,
                    doc.get("label", ""), meta)


def save_waveform(w: Waveform, path, provenance: dict | None = None) -> None:
    doc = waveform_to_dict(w)
    if provenance:
        doc["provenance"] = provenance
    text = json.dumps(doc, indent=1, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_waveform(path) -> Waveform:
    return waveform_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def waveform_hash(w: Waveform) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(w.samples, dtype="<f8").tobytes())
    h.update(repr(w.sample_period).encode())
    return h.hexdigest()[:16]


def options_dict(opts: SynthesisOptions) -> dict:
    d = asdict(opts)
    d.pop("workers", None)
    return d


# ---------------------------------------------------------------- gate library

def default_library_dir() -> Path:
    return Path(__file__).resolve().parent / "data" / "gates"


def library_filename(kind: str, variant: int) -> str:
    return f"{canonical_kind(kind)}_{variant}.wave.json"


def load_library(directory=None) -> dict:
    """Map ``"kind:variant"`` and ``"kind"`` (variant 1) to waveforms."""
    directory = Path(directory) if directory is not None else default_library_dir()
    lib = {}
    for path in sorted(directory.glob("*.wave.json")):
        w = load_waveform(path)
        lib[w.label or path.name.removesuffix(".wave.json")] = w
    for name, w in list(lib.items()):
        kind, _, variant = name.partition(":")
        if variant == "1":
            lib.setdefault(kind, w)
    return lib


def build_library(directory, config: LatticeConfig | None = None, restarts: int = 16,
                  seed: int = 0, workers: int | None = None, kinds=GATE_KINDS) -> dict:
    """Synthesize every kind/variant and write one JSON file per gate."""
    config = config or LatticeConfig()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    reports = {}
    for kind in kinds:
        for variant in (1, 2):
            target = gate_target(kind, variant, config)
            opts = SynthesisOptions(duration=DEFAULT_DURATION[kind], restarts=restarts,
                                    seed=seed, workers=workers)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                wave, report = synthesize(target, config, opts)
            log.info("%s: F=%.5f (verify %.5f)", target.name, report.fidelity,
                     report.verification_fidelity)
            save_waveform(wave, directory / library_filename(kind, variant),
                          provenance={"options": options_dict(opts)})
            reports[target.name] = report
    return reports
