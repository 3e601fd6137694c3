"""Signal scans, fringe analysis, Fisher information and closed-form phases."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .circuit import Circuit, SegmentPlan, StitchedWaveform, circuit_plan, stitch
from .dynamics import (
    SignalSpec,
    WrapHazardError,
    evolve_grid_1d,
    evolve_grid_2d,
    measure_momentum_orders,
    prepare_wavepacket,
    prepare_wavepacket_2d,
)
from .gatesynth import load_library
from .lattice import HBAR, LatticeConfig
from .parallel import ordered_map

log = logging.getLogger(__name__)

G_STANDARD = 9.80665
SCAN_ORDERS = np.arange(-3, 4)
PARAMETERS = {
    "a": ("acceleration", "m/s^2"),
    "g'": ("gradient", "1/s^2"),
    "gprime": ("gradient", "1/s^2"),
    "omega": ("rotation", "rad/s"),
}
CIRCUIT_KINDS = ("accelerometer", "accelerometer_hold", "gradiometer", "gradiometer_hold",
                 "gyroscope")


# ---------------------------------------------------------------- closed forms

def analytic_phase(kind: str, signal: float, *, T: float = 0.0, T_hold: float = 0.0,
                   T1: float = 0.0, T2: float = 0.0, config: LatticeConfig | None = None) -> float:
    """Interferometer phase in radians for a signal a (m/s^2), g' (1/s^2) or Omega (rad/s)."""
    if min(T, T_hold, T1, T2) < 0:
        raise ValueError("durations must be non-negative")
    config = config or LatticeConfig()
    m = config.atom_mass
    p = 4 * HBAR * config.k_L
    if kind == "accelerometer":
        return 2 * signal * p * T**2 / HBAR
    if kind == "accelerometer_hold":
        return 2 * signal * p * T * (T + T_hold) / HBAR
    if kind == "gradiometer":
        return 8 * signal * T1 * T2**2 * p**2 / (HBAR * m)
    if kind == "gradiometer_hold":
        return 8 * signal * T1 * T2 * (T2 + T_hold) * p**2 / (HBAR * m)
    if kind == "gyroscope":
        return 8 * signal * p**2 * T1 * T2 / (m * HBAR)
    raise ValueError(f"unknown circuit kind {kind!r}")


def path_action(plan: SegmentPlan, signal: SignalSpec, config: LatticeConfig | None = None) -> float:
    """Phase difference from the classical action along the plan's arms.

    Each arm contributes its action S = integral of (m v^2 / 2 - V_I) with
    the weight given by its branch label (u = +1, l = -1 per splitting);
    the result is -sum(weight * S) / hbar, i.e. the lower arm relative to
    the upper one.
    """
    if not plan.closed:
        raise ValueError("path action needs a closed plan: " + "; ".join(plan.issues))
    config = config or LatticeConfig()
    m = config.atom_mass
    if signal.kind == "rotation" and len(plan.axes) < 2:
        raise ValueError("rotation needs a plan with two axes")
    total = 0.0
    for arm in plan.arms:
        s = 0.0
        for seg in arm.segments:
            tau = seg.t1 - seg.t0
            r0, v = np.asarray(seg.start), np.asarray(seg.velocity)
            s += 0.5 * m * np.dot(v, v) * tau
            x0, vx = r0[0], v[0]
            if signal.kind == "acceleration":
                s -= m * signal.magnitude * (x0 * tau + vx * tau**2 / 2)
            elif signal.kind == "gradient":
                s -= m * signal.magnitude * (x0**2 * tau + x0 * vx * tau**2 + vx**2 * tau**3 / 3)
            elif signal.kind == "rotation":
                z0, vz = r0[1], v[1]
                # x dz/dt - z dx/dt is constant along a straight segment
                s -= m * signal.magnitude * (x0 * vz - z0 * vx) * tau
        total += arm.sign * s
    return float(-total / HBAR)


# ---------------------------------------------------------------- scans

@dataclass
class SimOptions:
    points_per_site: int = 9
    domain_sites: int | None = None
    wavepacket_sites: float = 20
    dt_hold: float = 0.5e-6
    # 2D grid
    points_per_site_2d: int = 7
    wavepacket_sites_2d: float = 8
    # only the rotation splitting depends on these; halving them moves the
    # gyroscope populations by ~1e-3
    dt_gate_2d: float = 4e-6
    dt_hold_2d: float = 40e-6
    sites_2d: tuple | None = None


@dataclass
class ScanResult:
    parameter: str
    unit: str
    values: np.ndarray
    probabilities: np.ndarray  # (points, orders)
    residual: np.ndarray
    orders: np.ndarray = field(default_factory=lambda: SCAN_ORDERS.copy())
    flagged: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def order(self, m: int) -> np.ndarray:
        return self.probabilities[:, list(self.orders).index(m)]

    @property
    def valid(self) -> np.ndarray:
        return np.all(np.isfinite(self.probabilities), axis=1)

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "unit": self.unit,
            "values": self.values.tolist(),
            "orders": self.orders.tolist(),
            "probabilities": [[None if not np.isfinite(p) else float(p) for p in row]
                              for row in self.probabilities],
            "residual": [None if not np.isfinite(r) else float(r) for r in self.residual],
            "flagged": list(self.flagged),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScanResult":
        probs = np.array([[np.nan if p is None else p for p in row] for row in d["probabilities"]])
        res = np.array([np.nan if r is None else r for r in d["residual"]])
        return cls(d["parameter"], d["unit"], np.array(d["values"], float), probs, res,
                   np.array(d["orders"]), list(d.get("flagged", [])), d.get("provenance", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ScanResult":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _nice_size(n: int) -> int:
    """Smallest even integer >= n whose only prime factors are 2, 3, 5, 7."""
    n = int(np.ceil(n))
    n += n % 2
    while True:
        k = n
        for p in (2, 3, 5, 7):
            while k % p == 0:
                k //= p
        if k == 1:
            return n
        n += 2


def _signal_drift(kind: str, magnitude: float, duration: float) -> float:
    if kind == "acceleration":
        return 0.5 * abs(magnitude) * duration**2
    return 0.0


def _plan_excursion(plan: SegmentPlan, axis: int) -> tuple:
    """(centre, half-span) of the planned positions along ``axis``, meters."""
    pts = [np.asarray(s.start)[axis] for a in plan.arms for s in a.segments]
    pts += [a.position(plan.duration)[axis] for a in plan.arms]
    lo, hi = min(pts), max(pts)
    return (lo + hi) / 2, (hi - lo) / 2


def domain_for(plan: SegmentPlan, config: LatticeConfig, envelope_sites: float,
               axis: int = 0, drift: float = 0.0) -> int:
    """Grid size in sites covering the plan and free flight at 4 v_r for the whole run.

    The free-flight bound keeps gate leakage, which keeps moving after an
    imperfect mirror or stop, from wrapping around onto the arms.
    """
    centre, half = _plan_excursion(plan, axis)
    flight = 4 * config.recoil_velocity * plan.duration
    site = config.site_spacing
    reach = (abs(centre) + max(half, flight) + drift) / site + 2 * envelope_sites + 16
    return _nice_size(2 * reach)


def _scan_point_1d(beta, *, kind, wave, psi0, plan_reach, opts):
    signal = SignalSpec(kind, float(beta))
    reach = plan_reach + _signal_drift(kind, beta, wave.duration)
    try:
        final = evolve_grid_1d(psi0, wave, signal, dt_hold=opts.dt_hold, max_excursion=reach).final
    except WrapHazardError as exc:
        log.warning("point %g flagged: %s", beta, exc)
        return None
    dist = measure_momentum_orders(final, orders=SCAN_ORDERS)
    return dist.probabilities


def _scan_point_2d(beta, *, waves, psi0, reach, centers, opts):
    try:
        final = evolve_grid_2d(psi0, waves, float(beta), dt_gate=opts.dt_gate_2d,
                               dt_hold=opts.dt_hold_2d, max_excursion=reach,
                               centers=centers).final
    except WrapHazardError as exc:
        log.warning("point %g flagged: %s", beta, exc)
        return None
    return measure_momentum_orders(final, axis=0, orders=SCAN_ORDERS).probabilities


def run_scan(circuit: Circuit, parameter: str, values, *, library: dict | None = None,
             config: LatticeConfig | None = None, options: SimOptions | None = None,
             workers: int | None = None) -> ScanResult:
    """Full grid propagation at each signal value; returns TOF order probabilities."""
    values = np.asarray(values, dtype=float)
    if parameter not in PARAMETERS:
        raise ValueError(f"parameter must be one of {sorted(PARAMETERS)}")
    kind, unit = PARAMETERS[parameter]
    config = config or LatticeConfig()
    options = options or SimOptions()
    library = load_library() if library is None else library
    stitched = stitch(circuit, library, config.depth)
    plan = circuit_plan(circuit, library, config)
    prov = {"circuit_sha256": circuit.text_hash, "library": stitched.library_hashes,
            "depth_Er": config.depth, "options": asdict(options)}
    if kind == "rotation":
        if set(circuit.axes) != {"x", "z"}:
            raise ValueError("rotation scans need a circuit on both x and z axes")
        waves = (stitched.axis("x"), stitched.axis("z"))
        env = options.wavepacket_sites_2d
        sites, origins, reach, centers = [], [], [], []
        for ax in range(2):
            c, half = _plan_excursion(plan, ax)
            n = options.sites_2d[ax] if options.sites_2d else _nice_size(
                2 * (half / config.site_spacing + 2 * env + 8))
            sites.append(n)
            origins.append(round(c / config.site_spacing))
            reach.append(half)
            centers.append(origins[-1] * config.site_spacing)
        prov["grid_2d"] = {"sites": sites, "origin_sites": origins}
        psi0 = prepare_wavepacket_2d(config, env, 0, tuple(sites), options.points_per_site_2d,
                                     origin_sites=tuple(origins))
        fn = partial(_scan_point_2d, waves=waves, psi0=psi0, reach=tuple(reach),
                     centers=tuple(centers), opts=options)
    else:
        wave = stitched.axis("x")
        drift = max(_signal_drift(kind, v, wave.duration) for v in values)
        n_dom = options.domain_sites or domain_for(plan, config, options.wavepacket_sites,
                                                   drift=drift)
        prov["domain_sites"] = n_dom
        psi0 = prepare_wavepacket(config, options.wavepacket_sites, 0, n_dom,
                                  options.points_per_site)
        _, half = _plan_excursion(plan, 0)
        fn = partial(_scan_point_1d, kind=kind, wave=wave, psi0=psi0, plan_reach=half * 1.05,
                     opts=options)
    rows = ordered_map(fn, values, workers)
    probs = np.full((len(values), len(SCAN_ORDERS)), np.nan)
    flagged = []
    for i, r in enumerate(rows):
        if r is None:
            flagged.append(i)
        else:
            probs[i] = r
    residual = 1.0 - probs.sum(axis=1)
    return ScanResult(parameter, unit, values, probs, residual, SCAN_ORDERS.copy(), flagged, prov)


# ---------------------------------------------------------------- fringe analysis

def fit_fringe(values, signal_values, omega_max: float | None = None) -> dict:
    """Least-squares fit of A + B cos(w beta) + C sin(w beta); returns w and the fit."""
    beta = np.asarray(values, float)
    y = np.asarray(signal_values, float)
    ok = np.isfinite(y)
    beta, y = beta[ok], y[ok]
    if len(beta) < 5:
        raise ValueError("need at least 5 finite points for a fringe fit")
    span = np.ptp(beta)
    step = np.min(np.diff(np.sort(beta)))
    omega_max = omega_max or np.pi / step
    scale = 1.0 / span

    def rss(w):
        design = np.column_stack([np.ones_like(beta), np.cos(w * beta), np.sin(w * beta)])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        r = y - design @ coef
        return float(r @ r), coef

    grid = np.linspace(0.25 * np.pi * scale, omega_max, 4000)
    costs = np.array([rss(w)[0] for w in grid])
    i = int(np.argmin(costs))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda w: rss(w)[0], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10 * hi})
    w = float(res.x)
    cost, coef = rss(w)
    return {"omega": w, "offset": coef[0], "amplitude": float(np.hypot(coef[1], coef[2])),
            "phase": float(np.arctan2(-coef[2], coef[1])), "rss": cost}


def fringe_frequency(scan: ScanResult, order: int = 0) -> float:
    """Angular fringe frequency d(phase)/d(beta) from the order-``order`` population."""
    return fit_fringe(scan.values, scan.order(order))["omega"]


# ---------------------------------------------------------------- Fisher information

CLAMP = 1e-12


def _fisher(probs, dp) -> np.ndarray:
    keep = probs >= CLAMP
    terms = np.where(keep, dp**2 / np.where(keep, probs, 1.0), 0.0)
    return terms.sum(axis=1)


def cfi(scan: ScanResult | tuple, include_residual: bool = False) -> np.ndarray:
    """Classical Fisher information on the scan grid.

    Derivatives are central differences inside the grid and one-sided at the
    ends; probabilities below 1e-12 are dropped.
    """
    if isinstance(scan, ScanResult):
        beta, probs = scan.values, scan.probabilities
        if include_residual:
            probs = np.column_stack([probs, np.clip(scan.residual, 0, None)])
    else:
        beta, probs = scan
    beta = np.asarray(beta, float)
    probs = np.asarray(probs, float)
    if len(beta) < 3:
        raise ValueError("CFI needs at least 3 grid points")
    if np.any(np.diff(beta) <= 0):
        raise ValueError("degenerate or unsorted grid spacing")
    probs = np.clip(probs, 0.0, None)
    dp = np.gradient(probs, beta, axis=0, edge_order=1)
    return _fisher(probs, dp)


def cfi_oracle(evaluate, betas, step: float) -> np.ndarray:
    """Fisher information from fresh central differences of ``evaluate`` at ``betas``.

    ``evaluate(beta)`` returns the order probabilities; ``step`` is the
    derivative half-width, typically a tenth of the scan spacing.
    """
    out = []
    for b in np.atleast_1d(betas):
        p0 = np.asarray(evaluate(b), float)
        dp = (np.asarray(evaluate(b + step)) - np.asarray(evaluate(b - step))) / (2 * step)
        out.append(_fisher(np.clip(p0, 0, None)[None, :], dp[None, :])[0])
    return np.array(out)


@dataclass
class SensitivityReport:
    cfi: np.ndarray
    atoms: int
    shots: np.ndarray
    dbeta_min: np.ndarray
    dbeta_max: np.ndarray
    unbounded: bool = False

    def rows(self):
        return zip(self.shots, self.dbeta_min, self.dbeta_max)


def sensitivity(info, atoms: int = 1000, shots=(1,)) -> SensitivityReport:
    """Delta beta = 1 / sqrt(s N I) bounded by the extreme CFI values over the scan."""
    if atoms < 1:
        raise ValueError("atom number N must be >= 1")
    if isinstance(info, ScanResult):
        info = cfi(info)
    info = np.asarray(info, float)
    info = info[np.isfinite(info)]
    shots = np.asarray(shots, float)
    if np.any(shots < 1):
        raise ValueError("shot numbers must be >= 1")
    i_max, i_min = (float(info.max()), float(info.min())) if len(info) else (0.0, 0.0)
    unbounded = i_max <= 0
    with np.errstate(divide="ignore"):
        best = np.where(i_max > 0, 1 / np.sqrt(shots * atoms * max(i_max, 1e-300)), np.inf)
        worst = np.where(i_min > 0, 1 / np.sqrt(shots * atoms * max(i_min, 1e-300)), np.inf)
    return SensitivityReport(info, atoms, shots, best, worst, unbounded)
