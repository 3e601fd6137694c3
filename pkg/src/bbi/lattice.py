"""Bloch band structure of the 1D shaken optical lattice.

Internal units: energies in recoil energies E_r, times in t_r = hbar/E_r,
lengths in 1/k_L.  In these units the lattice Hamiltonian at
quasimomentum q (in units of k_L) reads

    H = (k)^2 + (V0/2) cos(2x + phi)

and in the plane-wave basis exp(i(2l + q)x), l = -N..N, it is tridiagonal
with diagonal (2l + q)^2, coupling (V0/4) exp(+i phi) on the raising
entry (l+1, l) and its conjugate on (l, l+1).  That coupling convention is the only place the sign of
phi enters; every other module goes through :func:`build_hamiltonian` or
:func:`phase_shift_diagonal`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import constants

HBAR = constants.hbar
ATOMIC_MASS_UNIT = constants.atomic_mass

PRESETS = {
    "rb87-1064": {"wavelength": 1064e-9, "atom_mass": 1.44316e-25},
}


@dataclass(frozen=True)
class LatticeConfig:
    """Physical and numerical description of the lattice."""

    depth: float = 10.0
    wavelength: float = 1064e-9
    atom_mass: float = 1.44316e-25
    truncation: int = 12

    def __post_init__(self) -> None:
        if not np.isfinite(self.depth) or self.depth < 0:
            raise ValueError(f"lattice depth must be non-negative, got {self.depth}")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if not self.atom_mass > 0:
            raise ValueError("atom mass must be positive")
        if int(self.truncation) != self.truncation or self.truncation < 8:
            raise ValueError("truncation N_max must be an integer >= 8")

    @classmethod
    def preset(cls, name: str, **overrides) -> "LatticeConfig":
        try:
            base = dict(PRESETS[name])
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
        base.update(overrides)
        return cls(**base)

    @property
    def k_L(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def recoil_energy(self) -> float:
        return HBAR**2 * self.k_L**2 / (2 * self.atom_mass)

    @property
    def recoil_time(self) -> float:
        return HBAR / self.recoil_energy

    @property
    def recoil_velocity(self) -> float:
        return HBAR * self.k_L / self.atom_mass

    @property
    def site_spacing(self) -> float:
        """Lattice period lambda/2 in meters."""
        return self.wavelength / 2

    @property
    def orders(self) -> np.ndarray:
        n = int(self.truncation)
        return np.arange(-n, n + 1)

    def with_truncation(self, n: int) -> "LatticeConfig":
        return LatticeConfig(self.depth, self.wavelength, self.atom_mass, n)

    # unit conversions, SI <-> internal
    def to_internal_time(self, seconds):
        return np.asarray(seconds) / self.recoil_time

    def to_seconds(self, t_internal):
        return np.asarray(t_internal) * self.recoil_time

    def to_internal_length(self, meters):
        return np.asarray(meters) * self.k_L

    def to_meters(self, x_internal):
        return np.asarray(x_internal) / self.k_L


@dataclass
class BlochState:
    band: int
    quasimomentum: float
    coefficients: np.ndarray
    energy: float = float("nan")

    @property
    def orders(self) -> np.ndarray:
        n = (len(self.coefficients) - 1) // 2
        return np.arange(-n, n + 1)


@dataclass
class MomentumDistribution:
    orders: np.ndarray
    probabilities: np.ndarray
    residual: float = 0.0

    def __getitem__(self, m: int) -> float:
        idx = np.nonzero(self.orders == m)[0]
        return float(self.probabilities[idx[0]]) if len(idx) else 0.0

    def as_dict(self) -> dict[int, float]:
        return {int(m): float(p) for m, p in zip(self.orders, self.probabilities)}


@dataclass
class BandStructure:
    q_grid: np.ndarray
    energies: np.ndarray  # shape (len(q_grid), n_bands)
    states: list[list[BlochState]] = field(default_factory=list)


def build_hamiltonian(config: LatticeConfig, q: float = 0.0, phi: float = 0.0) -> np.ndarray:
    """Plane-wave lattice Hamiltonian in E_r at quasimomentum ``q`` and lattice phase ``phi``."""
    if not np.isfinite(phi):
        raise ValueError(f"lattice phase must be finite, got {phi}")
    if not np.isfinite(q) or abs(q) > 1:
        raise ValueError(f"quasimomentum must satisfy |q| <= 1, got {q}")
    l = config.orders
    h = np.diag(((2 * l + q) ** 2).astype(complex))
    raising = config.depth / 4 * np.exp(1j * phi)
    idx = np.arange(len(l) - 1)
    h[idx + 1, idx] = raising
    h[idx, idx + 1] = np.conj(raising)
    return h


def phase_shift_diagonal(orders: np.ndarray, phi: float) -> np.ndarray:
    """Diagonal of the unitary D with H(phi) = D H(0) D^dagger.

    Shifting the lattice by phi is a translation, which is diagonal in the
    plane-wave basis: D = diag(exp(i l phi)), up to a global phase.
    """
    return np.exp(1j * np.asarray(orders) * phi)


def fix_phase(vec: np.ndarray, rtol: float = 1e-8) -> np.ndarray:
    """Normalize and make the largest coefficient real positive.

    Ties within ``rtol`` (e.g. c_{+2} and c_{-2} of a parity state) are
    broken in favour of the highest plane-wave order, so an odd state has
    its positive-momentum lobe positive.
    """
    vec = np.asarray(vec, dtype=complex)
    vec = vec / np.linalg.norm(vec)
    mags = np.abs(vec)
    candidates = np.nonzero(mags >= mags.max() * (1 - rtol))[0]
    pivot = candidates[-1]
    return vec * (np.conj(vec[pivot]) / mags[pivot])


def solve_bands(config: LatticeConfig, q_grid, n_bands: int = 5) -> BandStructure:
    q_grid = np.atleast_1d(np.asarray(q_grid, dtype=float))
    dim = 2 * config.truncation + 1
    if n_bands > dim - 1:
        raise ValueError(f"n_bands={n_bands} exceeds 2*N_max={dim - 1}")
    if np.any(q_grid < -1) or np.any(q_grid > 1):
        raise ValueError("quasimomenta must lie in [-1, 1]")
    energies = np.empty((len(q_grid), n_bands))
    states = []
    for i, q in enumerate(q_grid):
        try:
            w, v = np.linalg.eigh(build_hamiltonian(config, q, 0.0))
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"eigensolver failed at q={q}") from exc
        order = np.argsort(w, kind="stable")[:n_bands]
        energies[i] = w[order]
        states.append(
            [BlochState(n, float(q), fix_phase(v[:, j]), float(w[j])) for n, j in enumerate(order)]
        )
    return BandStructure(q_grid, energies, states)


def bloch_state(config: LatticeConfig, band: int, q: float = 0.0) -> BlochState:
    return solve_bands(config, [q], band + 1).states[0][band]


def band_basis(config: LatticeConfig, bands, q: float = 0.0) -> np.ndarray:
    """Columns are the phase-fixed Bloch vectors for ``bands`` at ``q``."""
    bands = list(bands)
    bs = solve_bands(config, [q], max(bands) + 1)
    return np.stack([bs.states[0][b].coefficients for b in bands], axis=1)


def momentum_composition(state: BlochState) -> MomentumDistribution:
    c = np.asarray(state.coefficients)
    norm = np.vdot(c, c).real
    if abs(norm - 1) > 1e-9:
        raise ValueError(f"state is not normalized (norm^2 = {norm})")
    return MomentumDistribution(state.orders, np.abs(c) ** 2)
