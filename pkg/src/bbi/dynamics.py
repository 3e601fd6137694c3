"""Time evolution in the shaken lattice.

Three propagators live here:

* :func:`propagate_fewmode` -- plane-wave model at fixed quasimomentum,
  used for gate design and verification.
* :func:`evolve_grid_1d` -- symmetric split-step Fourier solver on a
  uniform grid, including inertial signal potentials.
* :func:`evolve_grid_2d` -- separable 2D lattice plus the rotation term.

All internal arithmetic is in recoil units (see :mod:`bbi.lattice`).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .lattice import (
    BlochState,
    LatticeConfig,
    MomentumDistribution,
    build_hamiltonian,
    phase_shift_diagonal,
    solve_bands,
)

log = logging.getLogger(__name__)

SAMPLE_PERIOD = 50e-9
HOLD_STEP = 0.5e-6
MAX_SHAKE_STEP = 1e-6
# constant runs longer than this are integrated with the hold step
HOLD_THRESHOLD = 10e-6
READOUT_ORDERS = np.arange(-5, 6)


class WrapHazardError(RuntimeError):
    """The wavefunction would reach the periodic boundary of the grid."""


@dataclass
class Waveform:
    samples: np.ndarray
    sample_period: float = SAMPLE_PERIOD
    label: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform samples must be finite")
        if np.any(np.abs(self.samples) > 2 * np.pi + 1e-12):
            raise ValueError("waveform samples must satisfy |phi| <= 2 pi")
        if not self.sample_period > 0:
            raise ValueError("sample period must be positive")

    @property
    def duration(self) -> float:
        return len(self.samples) * self.sample_period

    def __len__(self) -> int:
        return len(self.samples)

    @classmethod
    def constant(cls, duration: float, value: float = 0.0, sample_period: float = SAMPLE_PERIOD,
                 label: str = "wait") -> "Waveform":
        n = int(round(duration / sample_period))
        return cls(np.full(n, float(value)), sample_period, label)


SIGNAL_KINDS = ("none", "acceleration", "gradient", "rotation")


@dataclass(frozen=True)
class SignalSpec:
    """Inertial signal: acceleration a (m/s^2), gradient g' (1/s^2) or rotation Omega (rad/s)."""

    kind: str = "none"
    magnitude: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if not np.isfinite(self.magnitude):
            raise ValueError("signal magnitude must be finite")

    @classmethod
    def parse(cls, text: str) -> "SignalSpec":
        """Parse ``accel:0.01``, ``grad:5``, ``rot:0.1`` or ``none``."""
        aliases = {"accel": "acceleration", "a": "acceleration", "grad": "gradient",
                   "g": "gradient", "rot": "rotation", "omega": "rotation"}
        if text.strip() in ("", "none"):
            return cls()
        kind, _, value = text.partition(":")
        kind = aliases.get(kind.strip(), kind.strip())
        return cls(kind, float(value))

    def potential(self, x: np.ndarray, config: LatticeConfig) -> np.ndarray:
        """V_I on internal-length grid ``x``, in E_r."""
        if self.kind == "acceleration":
            return config.atom_mass * self.magnitude / (config.k_L * config.recoil_energy) * x
        if self.kind == "gradient":
            return config.atom_mass * self.magnitude / (config.k_L**2 * config.recoil_energy) * x**2
        return np.zeros_like(x)


@dataclass
class GridWavefunction:
    """Wavefunction on a uniform periodic grid; coordinates in internal units (1/k_L)."""

    axes: tuple
    psi: np.ndarray
    t: float = 0.0
    config: LatticeConfig = field(default_factory=LatticeConfig)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def spacing(self) -> tuple:
        return tuple(ax[1] - ax[0] for ax in self.axes)

    @property
    def cell(self) -> float:
        return float(np.prod(self.spacing))

    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.cell)

    def copy(self) -> "GridWavefunction":
        return GridWavefunction(self.axes, self.psi.copy(), self.t, self.config)


@dataclass
class DensityProfile:
    positions: np.ndarray  # meters
    density: np.ndarray  # 1/m
    t: float = 0.0

    def centroid(self, mask=None) -> float:
        w = self.density if mask is None else self.density * mask
        return float(np.sum(w * self.positions) / np.sum(w))

    def peak(self, mask=None, period: float | None = None) -> float:
        """Position of the density maximum after averaging over one lattice ``period`` (m).

        Tracks a cloud's bulk rather than its slow tails.
        """
        w = self.density if mask is None else self.density * mask
        if period:
            k = max(1, int(round(period / (self.positions[1] - self.positions[0]))))
            w = np.convolve(w, np.ones(k) / k, mode="same")
        return float(self.positions[np.argmax(w)])


@dataclass
class Trajectory:
    states: list

    @property
    def final(self) -> GridWavefunction:
        return self.states[-1]

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])


@dataclass
class FewModeResult:
    final: np.ndarray
    times: np.ndarray
    snapshots: list


# ---------------------------------------------------------------- few-mode

def _runs(samples: np.ndarray):
    """Run-length encode: yields (start, length, value)."""
    if len(samples) == 0:
        return
    edges = np.nonzero(np.diff(samples) != 0)[0] + 1
    starts = np.concatenate([[0], edges])
    ends = np.concatenate([edges, [len(samples)]])
    for s, e in zip(starts, ends):
        yield int(s), int(e - s), float(samples[s])


class FewModePropagator:
    """Exact piecewise-constant propagation at fixed quasimomentum.

    Uses H(phi) = D(phi) H(0) D(phi)^dagger so a single eigendecomposition
    serves every lattice phase.
    """

    def __init__(self, config: LatticeConfig, q: float = 0.0):
        self.config = config
        self.q = q
        self.orders = config.orders
        self.energies, self.vectors = np.linalg.eigh(build_hamiltonian(config, q, 0.0))

    def static(self, t_internal: float) -> np.ndarray:
        v = self.vectors
        return (v * np.exp(-1j * self.energies * t_internal)) @ v.conj().T

    def step(self, phi: float, t_internal: float) -> np.ndarray:
        d = phase_shift_diagonal(self.orders, phi)
        return d[:, None] * self.static(t_internal) * d.conj()[None, :]


def propagate_fewmode(initial, waveform: Waveform, config: LatticeConfig, q: float = 0.0,
                      snapshot_every: int | None = None) -> FewModeResult:
    """Propagate plane-wave coefficients through ``waveform`` at quasimomentum ``q``.

    ``initial`` is a :class:`BlochState` or a coefficient array (vector or
    matrix of column states).  ``snapshot_every`` stores the state every that
    many samples.
    """
    coeffs = initial.coefficients if isinstance(initial, BlochState) else initial
    psi = np.array(coeffs, dtype=complex)
    if psi.shape[0] != len(config.orders):
        raise ValueError("coefficient dimension does not match the lattice truncation")
    if waveform.sample_period > MAX_SHAKE_STEP and np.any(waveform.samples != 0):
        raise ValueError(
            f"sample period {waveform.sample_period:g} s exceeds {MAX_SHAKE_STEP:g} s "
            "during a shaking segment"
        )
    prop = FewModePropagator(config, q)
    dt = float(config.to_internal_time(waveform.sample_period))
    norm0 = np.linalg.norm(psi, axis=0)
    times, snaps = [0.0], [psi.copy()]
    done = 0
    for start, length, phi in _runs(waveform.samples):
        if snapshot_every:
            # split the run on snapshot boundaries
            pos = start
            while pos < start + length:
                nxt = min(start + length, (pos // snapshot_every + 1) * snapshot_every)
                psi = prop.step(phi, (nxt - pos) * dt) @ psi
                pos = nxt
                if pos % snapshot_every == 0:
                    times.append(pos * waveform.sample_period)
                    snaps.append(psi.copy())
        else:
            psi = prop.step(phi, length * dt) @ psi
        done += length
    drift = np.max(np.abs(np.linalg.norm(psi, axis=0) - norm0))
    if drift > 1e-12 * max(1, done) ** 0.5 * 10:
        raise RuntimeError(f"few-mode norm drift {drift:.2e}")
    return FewModeResult(psi, np.array(times), snaps)


# ---------------------------------------------------------------- 1D grid

def make_grid(domain_sites: int, points_per_site: int) -> np.ndarray:
    """Grid in internal units; lattice sites are pi apart."""
    n = domain_sites * points_per_site
    dx = np.pi / points_per_site
    return (np.arange(n) - n // 2) * dx


def _bloch_on_grid(x: np.ndarray, state: BlochState) -> np.ndarray:
    out = np.zeros(len(x), dtype=complex)
    for l, c in zip(state.orders, state.coefficients):
        if abs(c) > 1e-15:
            out += c * np.exp(1j * (2 * l + state.quasimomentum) * x)
    return out


def prepare_wavepacket(config: LatticeConfig, n_sites: float = 20, band: int = 0,
                       domain_sites: int = 1024, points_per_site: int = 9,
                       center: float = 0.0) -> GridWavefunction:
    """Band-``band`` Bloch function at q=0 under a Gaussian envelope.

    The envelope RMS width is ``n_sites`` * (lambda/2) / 2; ``center`` is in
    lattice sites.
    """
    if band not in range(5):
        raise ValueError("band must be in 0..4")
    if n_sites < 4:
        raise ValueError("wavepacket must span at least 4 sites")
    if points_per_site < 4:
        raise ValueError("need at least 4 points per lattice site")
    x = make_grid(domain_sites, points_per_site)
    sigma = n_sites * np.pi / 2
    if domain_sites * np.pi < 6 * sigma:
        raise ValueError(
            f"domain of {domain_sites} sites too small for a {n_sites}-site envelope"
        )
    state = solve_bands(config, [0.0], band + 1).states[0][band]
    x0 = center * np.pi
    psi = _bloch_on_grid(x, state) * np.exp(-((x - x0) ** 2) / (4 * sigma**2))
    dx = x[1] - x[0]
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * dx)
    return GridWavefunction((x,), psi, 0.0, config)


def _envelope_rms(psi: GridWavefunction, axis: int = 0) -> float:
    dens = np.abs(psi.psi) ** 2
    other = tuple(i for i in range(psi.ndim) if i != axis)
    if other:
        dens = dens.sum(axis=other)
    x = psi.axes[axis]
    w = dens / dens.sum()
    mu = np.sum(w * x)
    return float(np.sqrt(np.sum(w * (x - mu) ** 2)))


def check_wrap(psi: GridWavefunction, excursion: float, axis: int = 0,
               center: float | None = None) -> None:
    """Raise :class:`WrapHazardError` if excursion + 4 envelope widths exceeds half the domain.

    Without ``center`` the excursion is measured from the packet's start;
    with it, from ``center``.  Both are internal lengths.
    """
    x = psi.axes[axis]
    half = (x[-1] - x[0] + (x[1] - x[0])) / 2
    dens = np.abs(psi.psi) ** 2
    other = tuple(i for i in range(psi.ndim) if i != axis)
    if other:
        dens = dens.sum(axis=other)
    start = float(np.sum(dens * x) / np.sum(dens))
    if center is None:
        reach = abs(start) + abs(excursion)
    else:
        reach = max(abs(start - center), abs(excursion))
    reach += 4 * _envelope_rms(psi, axis)
    if reach > half:
        site = np.pi
        raise WrapHazardError(
            f"wrap hazard on axis {axis}: excursion {excursion / site:.0f} sites + 4 envelope "
            f"widths reaches {reach / site:.0f} sites, half-domain is {half / site:.0f} sites"
        )


def _schedule(waveform: Waveform, extra_hold: float, dt_hold: float, substeps: int):
    """Yield (phi, dt_seconds, n_steps, is_hold) blocks covering the waveform and trailing hold."""
    for start, length, phi in _runs(waveform.samples):
        span = length * waveform.sample_period
        if span >= HOLD_THRESHOLD:
            n = int(np.ceil(span / dt_hold - 1e-9))
            yield phi, span / n, n, True
        else:
            yield phi, waveform.sample_period / substeps, length * substeps, False
    if extra_hold > 0:
        phi = float(waveform.samples[-1]) if len(waveform.samples) else 0.0
        n = int(np.ceil(extra_hold / dt_hold - 1e-9))
        yield phi, extra_hold / n, n, True


def max_free_excursion(config: LatticeConfig, duration: float, signal: SignalSpec) -> float:
    """Conservative internal-length excursion bound: 4 v_r for the whole run plus signal drift."""
    dist = 4 * config.recoil_velocity * duration
    if signal.kind == "acceleration":
        dist += 0.5 * abs(signal.magnitude) * duration**2
    return float(config.to_internal_length(dist))


def evolve_grid_1d(psi: GridWavefunction, waveform: Waveform, signal: SignalSpec = SignalSpec(),
                   extra_hold: float = 0.0, *, dt_hold: float = HOLD_STEP, substeps: int = 1,
                   snap_every: float | None = None, max_excursion: float | None = None,
                   check_norm: bool = True) -> Trajectory:
    """Split-step evolution under kinetic + (V0/2)cos(2x + phi(t)) + V_I(x).

    ``max_excursion`` (meters) is the planned classical excursion used by the
    wrap guard; when omitted a conservative 4 v_r bound is applied.
    Returns the initial state, optional snapshots every ``snap_every``
    seconds and the final state.
    """
    if psi.ndim != 1:
        raise ValueError("evolve_grid_1d needs a 1D wavefunction")
    if signal.kind == "rotation":
        raise ValueError("rotation signals need the 2D solver")
    if dt_hold > MAX_SHAKE_STEP:
        raise ValueError("hold step must not exceed 1 us")
    config = psi.config
    total = waveform.duration + extra_hold
    if max_excursion is None:
        excursion = max_free_excursion(config, total, signal)
    else:
        excursion = float(config.to_internal_length(max_excursion))
    check_wrap(psi, excursion)

    x = psi.axes[0]
    dx = x[1] - x[0]
    k = 2 * np.pi * sfft.fftfreq(len(x), d=dx)
    kin = k**2
    cos2x, sin2x = np.cos(2 * x), np.sin(2 * x)
    v_signal = signal.potential(x, config)
    has_signal = bool(np.any(v_signal))
    half_depth = config.depth / 2
    pps = int(round(np.pi / dx))

    out = [psi.copy()]
    state = psi.psi.copy()
    t = psi.t
    next_snap = t + snap_every if snap_every else np.inf
    norm0 = psi.norm()
    cache_key, expv, kick_cache = None, None, {}

    def kinetic(dt_int):
        key = round(dt_int, 15)
        if key not in kick_cache:
            kick_cache[key] = np.exp(-0.5j * kin * dt_int)
        return kick_cache[key]

    blocks = None
    for phi, dt, n, is_hold in _schedule(waveform, extra_hold, dt_hold, substeps):
        dt_int = dt / config.recoil_time
        if is_hold:
            # constant lattice: lattice + kinetic exactly per quasimomentum,
            # V_I by symmetric splitting around it
            if blocks is None:
                blocks = _BlochBlocks(config, len(x) // pps, pps)
            if not has_signal:
                # exact, so steps between snapshots collapse into one
                done = 0
                while done < n:
                    k = n - done
                    if snap_every:
                        k = min(k, max(1, int(np.ceil((next_snap - t) / dt - 1e-9))))
                    amp = blocks.apply(sfft.fft(state), blocks.blocks(phi, k * dt_int))
                    state = sfft.ifft(amp)
                    done += k
                    t += k * dt
                    if t >= next_snap - 1e-15:
                        out.append(GridWavefunction(psi.axes, state.copy(), t, config))
                        next_snap += snap_every
                continue
            step = blocks.blocks(phi, dt_int)
            vhalf = np.exp(-0.5j * v_signal * dt_int)
            for _ in range(n):
                state *= vhalf
                state = sfft.ifft(blocks.apply(sfft.fft(state), step))
                state *= vhalf
                t += dt
                if t >= next_snap - 1e-15:
                    out.append(GridWavefunction(psi.axes, state.copy(), t, config))
                    next_snap += snap_every
            continue
        key = (phi, round(dt_int, 15))
        if key != cache_key:
            pot = half_depth * (cos2x * np.cos(phi) - sin2x * np.sin(phi)) + v_signal
            expv = np.exp(-1j * pot * dt_int)
            cache_key = key
        half = kinetic(dt_int)
        for _ in range(n):
            state = sfft.ifft(sfft.fft(state) * half)
            state *= expv
            state = sfft.ifft(sfft.fft(state) * half)
            t += dt
            if t >= next_snap - 1e-15:
                out.append(GridWavefunction(psi.axes, state.copy(), t, config))
                next_snap += snap_every
    final = GridWavefunction(psi.axes, state, t, config)
    if check_norm:
        drift = abs(final.norm() - norm0)
        if drift > 1e-8:
            raise RuntimeError(f"norm drift {drift:.2e} exceeds 1e-8")
    if out[-1].t != t or len(out) == 1:
        out.append(final)
    else:
        out[-1] = final
    return Trajectory(out)


# ---------------------------------------------------------------- measurements

def _momentum_density_axis(psi: GridWavefunction, axis: int):
    x = psi.axes[axis]
    dx = x[1] - x[0]
    k = 2 * np.pi * sfft.fftfreq(len(x), d=dx)
    amp = sfft.fft(psi.psi, axis=axis)
    dens = np.abs(amp) ** 2
    other = tuple(i for i in range(psi.ndim) if i != axis)
    if other:
        dens = dens.sum(axis=other)
    return k, dens / dens.sum() * psi.norm()


def measure_momentum_orders(psi: GridWavefunction, axis: int = 0,
                            orders=READOUT_ORDERS) -> MomentumDistribution:
    """Emulated TOF readout: probability in each 2 hbar k_L wide bin centred on 2 m k_L."""
    k, dens = _momentum_density_axis(psi, axis)
    orders = np.asarray(orders)
    idx = np.floor((k + 1) / 2).astype(int)
    probs = np.array([dens[idx == m].sum() for m in orders])
    return MomentumDistribution(orders, probs, residual=float(max(0.0, psi.norm() - probs.sum())))


def energy_expectation(psi: GridWavefunction, phi: float = 0.0) -> float:
    """<H> in E_r for a 1D state in the static lattice (no inertial term)."""
    if psi.ndim != 1:
        raise ValueError("energy_expectation needs a 1D wavefunction")
    x = psi.axes[0]
    pps = int(round(np.pi / (x[1] - x[0])))
    blocks = _BlochBlocks(psi.config, len(x) // pps, pps)
    return blocks.energy(sfft.fft(psi.psi), phi, psi.config.depth)


def density_snapshot(psi: GridWavefunction, axis: int = 0) -> DensityProfile:
    config = psi.config
    dens = np.abs(psi.psi) ** 2
    other = tuple(i for i in range(psi.ndim) if i != axis)
    for ax in sorted(other, reverse=True):
        dens = dens.sum(axis=ax) * psi.spacing[ax]
    x = psi.axes[axis]
    # convert density per internal length to density per meter
    return DensityProfile(config.to_meters(x), dens * config.k_L, psi.t)


def vibrational_spectrum(times, populations, noise_floor: float = 1e-6):
    """Dominant nonzero frequency (Hz) of a sampled population series.

    Returns None when no spectral line rises above ``noise_floor``.
    """
    times = np.asarray(times, dtype=float)
    pops = np.asarray(populations, dtype=float)
    if len(times) < 8:
        raise ValueError("need at least 8 samples")
    dt = np.diff(times)
    if np.ptp(dt) > 1e-6 * dt.mean():
        raise ValueError("samples must be uniformly spaced")
    sig = pops - pops.mean()
    window = times[-1] - times[0]
    n_fft = 16 * len(sig)
    spec = np.abs(np.fft.rfft(sig * np.hanning(len(sig)), n=n_fft)) / len(sig)
    freqs = np.fft.rfftfreq(n_fft, d=dt.mean())
    spec[0] = 0.0
    peak = int(np.argmax(spec))
    if spec[peak] < noise_floor:
        return None
    f = float(freqs[peak])
    if f * window < 2:
        raise ValueError("sampling window shorter than two oscillation periods")
    return f


# ---------------------------------------------------------------- 2D grid

class _BlochBlocks:
    """Exact lattice+kinetic propagators per quasimomentum for one axis.

    On a periodic grid of an even number of sites, every FFT momentum is
    k = 2l + kappa with kappa = 2r/n_sites, so the static lattice couples
    only momenta sharing kappa: one small block per kappa.  The set of l in
    each block follows from the FFT index range (it is shifted by one for
    some kappa when the points per site are even).
    """

    def __init__(self, config: LatticeConfig, n_sites: int, pps: int):
        if n_sites % 2:
            raise ValueError("Bloch-block stepping needs an even number of lattice sites")
        self.n_sites, self.pps = n_sites, pps
        n = n_sites * pps
        j = np.fft.fftfreq(n, d=1.0 / n).astype(int)  # integer momentum index
        r = (j + n_sites // 2) % n_sites - n_sites // 2
        l = (j - r) // n_sites
        self.kappa = 2 * np.arange(-n_sites // 2, n_sites // 2) / n_sites
        # perm[b, a] = FFT index of the a-th lowest order in block kappa_b
        order = np.lexsort((l, r))
        self.perm = order.reshape(n_sites, pps)
        self.orders = l[self.perm]
        if np.any(np.diff(self.orders, axis=1) != 1):
            raise ValueError("grid momenta do not form consecutive lattice orders")
        ii = np.arange(pps)
        h = np.zeros((n_sites, pps, pps), dtype=complex)
        h[:, ii, ii] = (2 * self.orders + self.kappa[:, None]) ** 2
        h[:, ii[1:], ii[:-1]] = config.depth / 4
        h[:, ii[:-1], ii[1:]] = config.depth / 4
        self.w, self.v = np.linalg.eigh(h)
        self._static: dict = {}
        self._cache: dict = {}

    def blocks(self, phi: float, dt: float) -> np.ndarray:
        key = (phi, round(dt, 15))
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            tkey = round(dt, 15)
            if tkey not in self._static:
                self._static[tkey] = np.einsum("kab,kb,kcb->kac", self.v,
                                               np.exp(-1j * self.w * dt), self.v.conj())
            d = np.exp(1j * self.orders * phi)
            self._cache[key] = d[:, :, None] * self._static[tkey] * d.conj()[:, None, :]
        return self._cache[key]

    def product(self, runs) -> np.ndarray:
        """Time-ordered product of blocks over ``runs`` of (phi, dt)."""
        runs = list(runs)
        if len(runs) == 1:
            return self.blocks(*runs[0])
        u = None
        for phi, dt in runs:
            tkey = round(dt, 15)
            if tkey not in self._static:
                self.blocks(0.0, dt)
            d = np.exp(1j * self.orders * phi)
            b = d[:, :, None] * self._static[tkey] * d.conj()[:, None, :]
            u = b if u is None else b @ u
        return u

    def energy(self, amp_k: np.ndarray, phi: float, depth: float) -> float:
        """<H> of FFT-ordered 1D amplitudes under the static lattice at phase ``phi``."""
        sub = amp_k[self.perm]
        h_sub = (2 * self.orders + self.kappa[:, None]) ** 2 * sub
        h_sub[:, 1:] += depth / 4 * np.exp(1j * phi) * sub[:, :-1]
        h_sub[:, :-1] += depth / 4 * np.exp(-1j * phi) * sub[:, 1:]
        return float(np.vdot(sub, h_sub).real / np.vdot(sub, sub).real)

    def apply(self, amp_k: np.ndarray, blocks: np.ndarray, axis: int = 0) -> np.ndarray:
        """Apply per-kappa blocks to FFT-ordered amplitudes along ``axis``."""
        a = np.moveaxis(amp_k, axis, 0)
        rest = a.shape[1:]
        sub = a[self.perm].reshape(self.n_sites, self.pps, -1)
        sub = np.matmul(blocks, sub)
        out = np.empty_like(a)
        out[self.perm] = sub.reshape((self.n_sites, self.pps) + rest)
        return np.moveaxis(out, 0, axis)


def prepare_wavepacket_2d(config: LatticeConfig, n_sites: float = 8, band: int = 0,
                          sites=(256, 144), points_per_site: int = 7,
                          center_sites=(0.0, 0.0), origin_sites=(0.0, 0.0)) -> GridWavefunction:
    """Product of two ground-band wavepackets on an (x, z) grid.

    ``origin_sites`` shifts the grid centre so asymmetric excursions fit.
    """
    parts, axes = [], []
    for ax in range(2):
        p = prepare_wavepacket(config, n_sites, band, sites[ax], points_per_site,
                               center=center_sites[ax] - origin_sites[ax])
        parts.append(p.psi)
        axes.append(p.axes[0] + origin_sites[ax] * np.pi)
    psi = np.multiply.outer(parts[0], parts[1])
    return GridWavefunction(tuple(axes), psi, 0.0, config)


def _schedule_2d(wx: Waveform, wz: Waveform, duration: float, dt_gate: float, dt_hold: float):
    """Steps shared by both axes: (runs_x, runs_z, dt).

    Each runs list holds (phi, dt) pieces of constant phase inside the step.
    Constant stretches of at least HOLD_THRESHOLD are cut into dt_hold
    steps; shaken stretches are grouped into steps of about dt_gate.
    """
    if abs(wx.sample_period - wz.sample_period) > 1e-15:
        raise ValueError("axis waveforms must share a sample period")
    sp = wx.sample_period
    n_tot = int(round(duration / sp))

    def padded(w):
        s = w.samples[:n_tot]
        tail = s[-1] if len(s) else 0.0
        return np.concatenate([s, np.full(n_tot - len(s), tail)])

    sx, sz = padded(wx), padded(wz)
    change = np.nonzero((np.diff(sx) != 0) | (np.diff(sz) != 0))[0] + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [n_tot]])
    chunk: list = []
    chunk_t = 0.0
    for s, e in zip(starts, ends):
        span = (e - s) * sp
        px, pz = float(sx[s]), float(sz[s])
        if span >= HOLD_THRESHOLD:
            if chunk:
                yield [c[0] for c in chunk], [c[1] for c in chunk], chunk_t
                chunk, chunk_t = [], 0.0
            n = max(1, int(np.ceil(span / dt_hold - 1e-9)))
            for _ in range(n):
                yield [(px, span / n)], [(pz, span / n)], span / n
            continue
        chunk.append(((px, span), (pz, span)))
        chunk_t += span
        if chunk_t >= dt_gate - 1e-15:
            yield [c[0] for c in chunk], [c[1] for c in chunk], chunk_t
            chunk, chunk_t = [], 0.0
    if chunk:
        yield [c[0] for c in chunk], [c[1] for c in chunk], chunk_t


def evolve_grid_2d(psi: GridWavefunction, waveforms, rotation: float = 0.0,
                   duration: float | None = None, *, dt_gate: float = 1e-6,
                   dt_hold: float = 10e-6, snap_every: float | None = None,
                   max_excursion=None, centers=(0.0, 0.0)) -> Trajectory:
    """Evolve an (x, z) state under two shaken lattices and rotation ``rotation`` (rad/s).

    Lattice and kinetic terms are advanced exactly per quasimomentum block;
    the rotation Hamiltonian Omega (x p_z - z p_x) is split into its two
    sub-terms, each diagonal in a mixed position/momentum representation.
    ``max_excursion`` is a pair of planned excursions in meters.
    """
    if psi.ndim != 2:
        raise ValueError("evolve_grid_2d needs a 2D wavefunction")
    config = psi.config
    wx, wz = waveforms
    if duration is None:
        duration = max(wx.duration, wz.duration)
    if abs(rotation) * duration > 0.1:
        raise ValueError("|Omega| * duration exceeds 0.1 rad (small-rotation regime)")
    if max_excursion is None:
        max_excursion = (4 * config.recoil_velocity * duration,) * 2
    for ax in range(2):
        check_wrap(psi, float(config.to_internal_length(max_excursion[ax])), ax,
                   center=float(config.to_internal_length(centers[ax])))

    x, z = psi.axes
    nx, nz = len(x), len(z)
    pps = int(round(np.pi / (x[1] - x[0])))
    bx = _BlochBlocks(config, nx // pps, pps)
    bz = bx if nz == nx else _BlochBlocks(config, nz // pps, pps)
    kx = 2 * np.pi * sfft.fftfreq(nx, d=x[1] - x[0])
    kz = 2 * np.pi * sfft.fftfreq(nz, d=z[1] - z[0])
    omega = rotation * config.recoil_time

    rot_cache: dict = {}

    def rot_phases(tau):
        key = round(tau, 15)
        if key not in rot_cache:
            if len(rot_cache) > 4:
                rot_cache.clear()
            rot_cache[key] = (np.exp(-1j * omega * np.outer(x, kz) * tau / 2),
                              np.exp(1j * omega * np.outer(kx, z) * tau / 2))
        return rot_cache[key]

    norm0 = psi.norm()
    out = [psi.copy()]
    t = psi.t
    next_snap = t + snap_every if snap_every else np.inf
    # Lattice and kinetic parts are separable and exact per step; only the
    # rotation is split (Strang) around them.  Between steps the state is
    # held in the (x, k_z) representation.
    amp = sfft.fft(psi.psi, axis=1)
    for runs_x, runs_z, dt in _schedule_2d(wx, wz, duration, dt_gate, dt_hold):
        tau = dt / config.recoil_time
        ux = bx.product((p, d / config.recoil_time) for p, d in runs_x)
        uz = bz.product((p, d / config.recoil_time) for p, d in runs_z)
        if omega:
            a_half, b_half = rot_phases(tau)
            amp *= a_half
            amp = sfft.fft(sfft.ifft(amp, axis=1), axis=0)  # -> (k_x, z)
            amp *= b_half
            amp = bx.apply(amp, ux, axis=0)
            amp = sfft.fft(amp, axis=1)  # -> (k_x, k_z)
            amp = bz.apply(amp, uz, axis=1)
            amp = sfft.ifft(amp, axis=1)  # -> (k_x, z)
            amp *= b_half
            amp = sfft.fft(sfft.ifft(amp, axis=0), axis=1)  # -> (x, k_z)
            amp *= a_half
        else:
            amp = bz.apply(amp, uz, axis=1)
            amp = sfft.fft(amp, axis=0)
            amp = bx.apply(amp, ux, axis=0)
            amp = sfft.ifft(amp, axis=0)
        t += dt
        if t >= next_snap - 1e-15:
            out.append(GridWavefunction(psi.axes, sfft.ifft(amp, axis=1), t, config))
            next_snap += snap_every
    final = GridWavefunction(psi.axes, sfft.ifft(amp, axis=1), t, config)
    drift = abs(final.norm() - norm0)
    if drift > 1e-7:
        raise RuntimeError(f"2D norm drift {drift:.2e} exceeds 1e-7")
    if out[-1].t == t and len(out) > 1:
        out[-1] = final
    else:
        out.append(final)
    return Trajectory(out)
