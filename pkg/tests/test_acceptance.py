"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict; conftest prints them after the run.
The scans and the library rebuild are slow (about 1.5 h in total on one core).
"""
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from bbi.circuit import (
    accelerometer_circuit,
    accelerometer_hold_circuit,
    circuit_plan,
    gradiometer_circuit,
    gradiometer_hold_circuit,
    gyroscope_circuit,
    parse_circuit,
    stitch,
)
from bbi.dynamics import (
    GridWavefunction,
    Waveform,
    density_snapshot,
    evolve_grid_1d,
    measure_momentum_orders,
    prepare_wavepacket,
    propagate_fewmode,
    vibrational_spectrum,
)
from bbi.gatesynth import (
    DEFAULT_DURATION,
    GATE_KINDS,
    build_library,
    gate_target,
    library_filename,
    load_waveform,
    verify_gate,
)
from bbi.lattice import band_basis, bloch_state, momentum_composition
from bbi.sensing import (
    CIRCUIT_KINDS,
    G_STANDARD,
    analytic_phase,
    cfi,
    fringe_frequency,
    path_action,
    run_scan,
)
from bbi.dynamics import SignalSpec

HBAR = 1.054571817e-34
VERDICTS: dict = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[n] = line
    print(line)


def four_photon_momentum(config):
    return 4 * HBAR * config.k_L


# ---------------------------------------------------------------- 1. band composition

def test_01_band_composition(config):
    t0 = time.perf_counter()
    occ = {}
    for b in (3, 4):
        dist = momentum_composition(bloch_state(config, b))
        occ[b] = (dist[2], dist[-2])
    elapsed = time.perf_counter() - t0
    ok = all(abs(v - 0.474) <= 0.005 for pair in occ.values() for v in pair) and elapsed < 1
    record(1, ok, f"+-4hk occupation band3 {occ[3][0]:.6f}, band4 {occ[4][0]:.6f} "
                  f"(target 0.474 +- 0.005), {elapsed:.2f} s")
    for b in (3, 4):
        for v in occ[b]:
            assert v == pytest.approx(0.474, abs=0.005), f"band {b}"
    assert elapsed < 1


# ---------------------------------------------------------------- 2. gate synthesis

def test_02_gate_synthesis(config, tmp_path):
    t0 = time.perf_counter()
    reports = build_library(tmp_path, config, restarts=16, workers=1)
    elapsed = time.perf_counter() - t0
    verified = {}
    for kind in GATE_KINDS:
        for variant in (1, 2):
            w = load_waveform(tmp_path / library_filename(kind, variant))
            verified[f"{kind}:{variant}"] = (verify_gate(w, gate_target(kind, variant, config)).fidelity,
                                            w.duration)
    worst = min(f for f, _ in verified.values())
    bs = max(f for name, (f, d) in verified.items()
             if name.startswith("beamsplitter") and d <= 150e-6 + 1e-12)
    ok = len(reports) == 12 and worst >= 0.90 and bs >= 0.99 and elapsed <= 1800
    record(2, ok, f"12 gates, worst verified F {worst:.4f}, best beamsplitter F {bs:.5f} at "
                  f"{DEFAULT_DURATION['beamsplitter'] * 1e6:.0f} us, {elapsed:.0f} s")
    assert len(reports) == 12
    assert worst >= 0.90
    assert bs >= 0.99
    assert elapsed <= 1800


# ---------------------------------------------------------------- 3. beamsplitter kinematics

def test_03_beamsplitter_kinematics(config, library):
    t0 = time.perf_counter()
    psi = prepare_wavepacket(config, 20, 0, 1024)
    tr = evolve_grid_1d(psi, library["beamsplitter:1"], extra_hold=7e-3, snap_every=0.25e-3)
    site = config.site_spacing
    t, right, left = [], [], []
    for s in tr.states:
        prof = density_snapshot(s)
        t.append(s.t)
        right.append(prof.peak(prof.positions > 0, site))
        left.append(prof.peak(prof.positions < 0, site))
    t, right, left = map(np.array, (t, right, left))
    sep = right[-1] - left[-1]
    # clouds are resolved once they are several envelopes apart
    sel = t >= 3e-3
    v4 = 4 * config.recoil_velocity
    vr = np.polyfit(t[sel], right[sel], 1)[0] / v4
    vl = np.polyfit(t[sel], left[sel], 1)[0] / v4
    elapsed = time.perf_counter() - t0
    ok = (abs(sep / 240e-6 - 1) <= 0.15 and abs(vr - 1) <= 0.02 and abs(vl + 1) <= 0.02
          and elapsed < 120)
    record(3, ok, f"separation {sep * 1e6:.1f} um, speeds {vr:+.4f} / {vl:+.4f} x 4v_r, "
                  f"{elapsed:.0f} s")
    assert sep == pytest.approx(240e-6, rel=0.15)
    assert vr == pytest.approx(1, abs=0.02)
    assert vl == pytest.approx(-1, abs=0.02)
    assert elapsed < 120


# ---------------------------------------------------------------- 4. mirror closure

def test_04_mirror_recrossing(config, library):
    t0 = time.perf_counter()
    text = "axis x { gate BS; wait 4ms; gate MIRROR:2; wait 4ms; }"
    w = stitch(parse_circuit(text), library).axis("x")
    psi = prepare_wavepacket(config, 20, 0, 1024)
    tr = evolve_grid_1d(psi, w, extra_hold=1.5e-3, snap_every=0.1e-3, max_excursion=80e-6)
    site = config.site_spacing
    rows = []
    for s in tr.states:
        prof = density_snapshot(s)
        rows.append((s.t, prof.peak(prof.positions > 0, site), prof.peak(prof.positions < 0, site),
                     prof.peak(None, site)))
    t, right, left, whole = np.array(rows).T
    # inbound legs: after the mirror, before the clouds overlap
    mirror_end = 4e-3 + 2 * 150e-6 + 250e-6
    legs = (t > mirror_end + 0.2e-3) & (np.abs(right) > 15e-6) & (t < w.duration + 1e-3)
    a = np.polyfit(t[legs], right[legs], 1)
    b = np.polyfit(t[legs], left[legs], 1)
    t_cross = (b[1] - a[1]) / (a[0] - b[0])
    x_cross = np.polyval(a, t_cross)
    # the merged cloud really sits at the origin when the lines meet
    near = np.argmin(np.abs(t - t_cross))
    elapsed = time.perf_counter() - t0
    ok = abs(x_cross) < 5e-6 and abs(whole[near]) < 5e-6 and a[0] < 0 < b[0] and elapsed < 300
    record(4, ok, f"re-crossing at x = {x_cross * 1e6:+.2f} um, t = {t_cross * 1e3:.2f} ms; "
                  f"merged peak {whole[near] * 1e6:+.2f} um, {elapsed:.0f} s")
    assert a[0] < 0 < b[0], "clouds not moving back toward each other"
    assert abs(x_cross) < 5e-6
    assert abs(whole[near]) < 5e-6
    assert elapsed < 300


# ---------------------------------------------------------------- 5. split & hold

def test_05_split_and_hold(config, library):
    t0 = time.perf_counter()
    gap_hz = ((bloch_state(config, 1).energy - bloch_state(config, 0).energy)
              * config.recoil_energy / (2 * np.pi * HBAR))
    moves, freqs = [], []
    for variant in (1, 2):
        w = stitch(parse_circuit(f"axis x {{ gate BS; wait 1ms; gate SH:{variant}; }}"),
                   library).axis("x")
        start = evolve_grid_1d(prepare_wavepacket(config, 20, 0, 512), w,
                               max_excursion=40e-6).final
        tr = evolve_grid_1d(start, Waveform.constant(0.0), extra_hold=1e-3, snap_every=2e-6,
                            max_excursion=0.0)
        end = evolve_grid_1d(tr.final, Waveform.constant(0.0), extra_hold=3e-3,
                             max_excursion=0.0).final
        x = start.axes[0]
        first, last = density_snapshot(start), density_snapshot(end)
        for mask in (first.positions > 0, first.positions < 0):
            moves.append(abs(last.centroid(mask) - first.centroid(mask)))
        # The two clouds vibrate in antiphase, so each is read out on its own.
        for side in (x > 0, x < 0):
            for m in (1, -1):
                pop = [measure_momentum_orders(GridWavefunction(s.axes, s.psi * side, s.t, config))[m]
                       for s in tr.states]
                freqs.append(vibrational_spectrum(tr.times, pop))
    elapsed = time.perf_counter() - t0
    worst_move = max(moves)
    worst_freq = max(abs(f / gap_hz - 1) for f in freqs)
    ok = worst_move < 1e-6 and worst_freq <= 0.10 and elapsed < 300
    record(5, ok, f"max centroid drift {worst_move * 1e6:.2f} um over 4 ms; vibration "
                  f"{min(freqs) / 1e3:.2f}-{max(freqs) / 1e3:.2f} kHz vs gap {gap_hz / 1e3:.2f} kHz, "
                  f"{elapsed:.0f} s")
    assert worst_move < 1e-6
    assert worst_freq <= 0.10
    assert elapsed < 300


# ---------------------------------------------------------------- 6. echo round trip

def test_06_echo_round_trip(config, library):
    t0 = time.perf_counter()
    ground = band_basis(config, [0])[:, 0]
    fids = {}
    for variant in (1, 2):
        w = stitch(parse_circuit(f"axis x {{ gate ECHO:{variant}; gate ECHO:{variant}; }}"),
                   library).axis("x")
        final = propagate_fewmode(ground, w, config).final
        fids[variant] = abs(np.vdot(ground, final)) ** 2
    elapsed = time.perf_counter() - t0
    ok = min(fids.values()) >= 0.95 and elapsed < 60
    record(6, ok, f"echo twice returns |0>: F = {fids[1]:.5f} (Z), {fids[2]:.5f} (Y), "
                  f"{elapsed:.1f} s")
    assert min(fids.values()) >= 0.95
    assert elapsed < 60


# ---------------------------------------------------------------- 7, 8. accelerometer

@pytest.fixture(scope="module")
def accel_scan(library):
    t0 = time.perf_counter()
    circ = parse_circuit(accelerometer_circuit(3e-3, library))
    values = np.linspace(-1e-3, 1e-3, 41) * G_STANDARD
    scan = run_scan(circ, "a", values, library=library, workers=1)
    return scan, time.perf_counter() - t0


def test_07_accelerometer_fringe(config, accel_scan):
    scan, elapsed = accel_scan
    expected = 2 * four_photon_momentum(config) * (3e-3) ** 2 / HBAR
    got = fringe_frequency(scan, 0)
    ok = abs(got / expected - 1) <= 0.05 and not scan.flagged and elapsed < 1800
    record(7, ok, f"fringe {got:.2f} rad/(m/s^2) vs 2pT^2/hbar = {expected:.2f} "
                  f"(ratio {got / expected:.4f}), 41 points, {elapsed:.0f} s")
    assert not scan.flagged
    assert got == pytest.approx(expected, rel=0.05)
    assert elapsed < 1800


def test_08_hold_enhancement(accel_scan, library):
    t0 = time.perf_counter()
    circ = parse_circuit(accelerometer_hold_circuit(3e-3, 16e-3, library))
    values = np.linspace(-3e-4, 3e-4, 41) * G_STANDARD
    hold = run_scan(circ, "a", values, library=library, workers=1)
    elapsed = time.perf_counter() - t0
    ratio = fringe_frequency(hold, 0) / fringe_frequency(accel_scan[0], 0)
    expected = (3 + 16) / 3
    ok = abs(ratio / expected - 1) <= 0.05 and not hold.flagged and elapsed < 2700
    record(8, ok, f"hold/plain fringe ratio {ratio:.3f} vs (T+T_H)/T = {expected:.3f}, "
                  f"{elapsed:.0f} s")
    assert not hold.flagged
    assert ratio == pytest.approx(expected, rel=0.05)
    assert elapsed < 2700


# ---------------------------------------------------------------- 9. gradiometer

def test_09_gradiometer_fringe(config, library):
    t0 = time.perf_counter()
    p, m = four_photon_momentum(config), config.atom_mass
    T1 = T2 = 3e-3
    th = 8e-3
    plain_expected = 8 * T1 * T2**2 * p**2 / (HBAR * m)
    hold_expected = 8 * T1 * T2 * (T2 + th) * p**2 / (HBAR * m)
    plain = run_scan(parse_circuit(gradiometer_circuit(T1, T2, library)), "gprime",
                     np.linspace(-70, 70, 21), library=library, workers=1)
    hold = run_scan(parse_circuit(gradiometer_hold_circuit(T1, T2, th, library)), "gprime",
                    np.linspace(-40, 40, 21), library=library, workers=1)
    elapsed = time.perf_counter() - t0
    r_plain = fringe_frequency(plain, 0) / plain_expected
    r_hold = fringe_frequency(hold, 0) / hold_expected
    ok = abs(r_plain - 1) <= 0.05 and abs(r_hold - 1) <= 0.05 and elapsed < 3600
    record(9, ok, f"fringe/analytic {r_plain:.3f} (plain), {r_hold:.3f} (8 ms hold), "
                  f"{elapsed:.0f} s")
    assert r_plain == pytest.approx(1, abs=0.05)
    assert r_hold == pytest.approx(1, abs=0.05)
    assert elapsed < 3600


# ---------------------------------------------------------------- 10. gyroscope

def test_10_gyroscope(config, library):
    t0 = time.perf_counter()
    p, m = four_photon_momentum(config), config.atom_mass
    expected = 8 * p**2 * 3e-3 * 3e-3 / (m * HBAR)
    circ = parse_circuit(gyroscope_circuit(3e-3, 3e-3, library))
    area = circuit_plan(circ, library, config).enclosed_area()
    scan = run_scan(circ, "omega", np.linspace(-0.16, 0.16, 9), library=library, workers=1)
    elapsed = time.perf_counter() - t0
    got = fringe_frequency(scan, 0)
    ok = (abs(got / expected - 1) <= 0.10 and abs(area / 0.010e-6 - 1) <= 0.10
          and not scan.flagged and elapsed < 7200)
    record(10, ok, f"fringe {got:.2f} vs 8p^2T1T2/(m hbar) = {expected:.2f} rad/(rad/s) "
                   f"(ratio {got / expected:.3f}); loop area {area * 1e6:.5f} mm^2, {elapsed:.0f} s")
    assert area == pytest.approx(0.010e-6, rel=0.10)
    assert not scan.flagged
    assert got == pytest.approx(expected, rel=0.10)
    assert elapsed < 7200


# ---------------------------------------------------------------- 11. oracle identity

SIGNAL_OF = {"accelerometer": ("acceleration", 0.05), "accelerometer_hold": ("acceleration", 0.05),
             "gradiometer": ("gradient", 50.0), "gradiometer_hold": ("gradient", 50.0),
             "gyroscope": ("rotation", 0.5)}


def _builder(kind, library, T1, T2, TH):
    return {
        "accelerometer": lambda: (accelerometer_circuit(T1, library), dict(T=T1)),
        "accelerometer_hold": lambda: (accelerometer_hold_circuit(T1, TH, library),
                                       dict(T=T1, T_hold=TH)),
        "gradiometer": lambda: (gradiometer_circuit(T1, T2, library), dict(T1=T1, T2=T2)),
        "gradiometer_hold": lambda: (gradiometer_hold_circuit(T1, T2, TH, library),
                                     dict(T1=T1, T2=T2, T_hold=TH)),
        "gyroscope": lambda: (gyroscope_circuit(T1, T2, library), dict(T1=T1, T2=T2)),
    }[kind]()


def test_11_oracle_identity(library):
    t0 = time.perf_counter()
    worst = 0.0
    for kind in CIRCUIT_KINDS:
        rng = np.random.default_rng(100 + CIRCUIT_KINDS.index(kind))
        signal, scale = SIGNAL_OF[kind]
        for _ in range(100):
            # whole microseconds keep every gate centre on the 50 ns grid
            T1, T2 = rng.integers(1000, 5000, 2) * 1e-6
            TH = rng.integers(1000, 16000) * 1e-6
            beta = rng.uniform(-1, 1) * scale
            text, kw = _builder(kind, library, T1, T2, TH)
            got = path_action(circuit_plan(parse_circuit(text), library), SignalSpec(signal, beta))
            want = analytic_phase(kind, beta, **kw)
            worst = max(worst, abs(got - want) / abs(want))
    beta = np.linspace(0.3, 2.8, 20001)
    two = np.column_stack([np.cos(beta / 2) ** 2, np.sin(beta / 2) ** 2])
    cfi_err = float(np.max(np.abs(cfi((beta, two))[1:-1] - 1)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and cfi_err <= 1e-6 and elapsed < 60
    record(11, ok, f"path_action vs analytic worst rel {worst:.1e} over 500 draws; "
                   f"two-outcome CFI |I-1| {cfi_err:.1e}, {elapsed:.1f} s")
    assert worst <= 1e-10
    assert cfi_err <= 1e-6
    assert elapsed < 60


# ---------------------------------------------------------------- 12. property suites

PROPERTY_TESTS = [
    # norm and energy conservation
    "test_dynamics.py::test_fewmode_norm_preserved",
    "test_dynamics.py::test_energy_conserved_during_hold",
    "test_dynamics.py::test_norm_conserved_with_signal",
    "test_lattice.py::test_hamiltonian_hermitian_and_translation",
    # adjoint gradient against finite differences
    "test_gatesynth.py::test_adjoint_gradient_matches_finite_differences",
    # reverse / negate involutions
    "test_gatesynth.py::test_reverse_negate_involutions",
    "test_gatesynth.py::test_reverse_and_negate_trivial_cases",
    # determinism under a fixed seed
    "test_gatesynth.py::test_synthesis_deterministic",
    "test_cli.py::test_synth_is_byte_identical",
    # time-step halving
    "test_dynamics.py::test_time_step_halving",
]


def test_12_property_suites():
    t0 = time.perf_counter()
    here = Path(__file__).parent
    res = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                          *[str(here / t) for t in PROPERTY_TESTS]],
                         capture_output=True, text=True, cwd=here.parent, check=False)
    elapsed = time.perf_counter() - t0
    summary = res.stdout.strip().splitlines()[-1] if res.stdout.strip() else res.stderr[-200:]
    ok = res.returncode == 0 and elapsed < 600
    record(12, ok, f"{summary}, {elapsed:.0f} s")
    assert res.returncode == 0, res.stdout[-3000:]
    assert elapsed < 600
