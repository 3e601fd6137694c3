"""``bbi`` command line: bands, synth, verify, stitch, run, scan, sense, export.

Exit status: 0 on success, 1 for invalid input, 2 for numerical failure
(no converged gate, wrap hazard, norm drift).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import warnings
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import (
    CircuitSyntaxError,
    LibraryError,
    circuit_plan,
    export_awg,
    load_circuit,
    parse_duration,
    stitch,
)
from .dynamics import (
    SAMPLE_PERIOD,
    SignalSpec,
    WrapHazardError,
    density_snapshot,
    evolve_grid_1d,
    evolve_grid_2d,
    measure_momentum_orders,
    prepare_wavepacket,
    prepare_wavepacket_2d,
)
from .gatesynth import (
    DEFAULT_DURATION,
    SynthesisError,
    SynthesisOptions,
    canonical_kind,
    gate_target,
    load_library,
    load_waveform,
    options_dict,
    save_waveform,
    synthesize,
    verify_gate,
)
from .lattice import PRESETS, LatticeConfig, solve_bands
from .sensing import ScanResult, SimOptions, domain_for, run_scan, sensitivity

log = logging.getLogger("bbi")

CONFIG_KEYS = {"preset", "depth", "truncation", "seed", "output_dir", "workers"} | {
    f.name for f in fields(SimOptions)
}


class ValidationError(ValueError):
    pass


# ---------------------------------------------------------------- config

def load_config(args) -> dict:
    cfg = {"preset": "rb87-1064", "depth": 10.0, "truncation": 12, "seed": 0}
    if getattr(args, "config", None):
        try:
            extra = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file is not valid JSON: {exc}") from None
        unknown = sorted(set(extra) - CONFIG_KEYS)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(extra)
    for key in ("preset", "depth", "truncation", "seed", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def lattice_from(cfg: dict) -> LatticeConfig:
    if cfg["preset"] not in PRESETS:
        raise ValidationError(f"unknown preset {cfg['preset']!r}")
    return LatticeConfig.preset(cfg["preset"], depth=float(cfg["depth"]),
                                truncation=int(cfg["truncation"]))


def sim_options(cfg: dict) -> SimOptions:
    kw = {f.name: cfg[f.name] for f in fields(SimOptions) if f.name in cfg}
    if "sites_2d" in kw and kw["sites_2d"] is not None:
        kw["sites_2d"] = tuple(kw["sites_2d"])
    return SimOptions(**kw)


def config_hash(cfg: dict) -> str:
    text = json.dumps(cfg, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def provenance(cfg: dict, **extra) -> dict:
    out = {"bbi_version": __version__, "seed": cfg.get("seed", 0), "config_sha256": config_hash(cfg),
           "config": cfg}
    out.update(extra)
    return out


def comment_header(prov: dict) -> str:
    keys = ("bbi_version", "seed", "config_sha256")
    lines = [f"# {k}: {prov[k]}" for k in keys]
    lines += [f"# {k}: {v}" for k, v in prov.items() if k not in keys + ("config",)]
    return "\n".join(lines) + "\n"


def _duration(text: str | None, default: float) -> float:
    if text is None:
        return default
    try:
        return parse_duration(text) * SAMPLE_PERIOD
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _library(path):
    lib = load_library(path)
    if not lib:
        raise ValidationError(f"no *.wave.json gate files found in {path}")
    return lib


def _parse_range(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError("range must be lo:hi:points")
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    if n < 5:
        raise ValidationError("a scan needs at least 5 points")
    return np.linspace(lo, hi, n)


# ---------------------------------------------------------------- commands

def cmd_bands(args, cfg) -> int:
    config = lattice_from(cfg)
    if args.qpoints < 2:
        raise ValidationError("need at least 2 quasimomentum points")
    q = np.linspace(-1, 1, args.qpoints)
    bs = solve_bands(config, q, args.nbands)
    prov = provenance(cfg, command="bands")
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        fh.write(comment_header(prov))
        w = csv.writer(fh)
        w.writerow(["q"] + [f"E{n}" for n in range(args.nbands)])
        for qi, row in zip(q, bs.energies):
            w.writerow([repr(float(qi))] + [repr(float(e)) for e in row])
    print(f"wrote {len(q)} quasimomenta x {args.nbands} bands to {args.out}")
    return 0


def cmd_synth(args, cfg) -> int:
    config = lattice_from(cfg)
    kind = canonical_kind(args.gate)
    opts = SynthesisOptions(
        duration=_duration(args.duration, DEFAULT_DURATION[kind]),
        control_bin=_duration(args.control_bin, 1e-6),
        restarts=args.restarts,
        max_iterations=args.max_iter,
        fidelity_goal=args.goal,
        seed=int(cfg["seed"]),
        workers=cfg.get("workers"),
    )
    target = gate_target(kind, args.variant, config)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        wave, report = synthesize(target, config, opts)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = args.out or f"{kind}_{args.variant}.wave.json"
    save_waveform(wave, out, provenance=provenance(cfg, command="synth",
                                                   options=options_dict(opts)))
    print(f"{target.name}: fidelity {report.fidelity:.6f}, verification (N_max=16) "
          f"{report.verification_fidelity:.6f} -> {out}")
    return 0


def cmd_verify(args, cfg) -> int:
    config = lattice_from(cfg)
    wave = load_waveform(args.wave)
    kind, _, variant = args.target.partition(":")
    target = gate_target(kind, int(variant or 1), config)
    rep = verify_gate(wave, target, config.with_truncation(args.truncation_verify))
    print(f"{target.name}: fidelity {rep.fidelity:.6f}")
    for name, pop in rep.leakage.items():
        print(f"  {name}: {pop:.6f}")
    return 0


def cmd_stitch(args, cfg) -> int:
    config = lattice_from(cfg)
    lib = _library(args.library)
    circ = load_circuit(args.circuit)
    st = stitch(circ, lib, config.depth)
    prov = provenance(cfg, command="stitch", circuit_sha256=circ.text_hash,
                      library=st.library_hashes)
    axes = list(st.waveforms)
    if args.out:
        if len(axes) == 1:
            save_waveform(st.waveforms[axes[0]], args.out, provenance=prov)
        else:
            stem = args.out.removesuffix(".wave.json")
            for ax in axes:
                save_waveform(st.waveforms[ax], f"{stem}.{ax}.wave.json", provenance=prov)
    if args.awg:
        for ax in axes:
            path = args.awg if len(axes) == 1 else args.awg.replace(".csv", f".{ax}.csv")
            n = export_awg(st, path, ax, {"bbi_version": __version__,
                                          "config_sha256": prov["config_sha256"]})
            print(f"axis {ax}: {n} samples -> {path}")
    print(f"stitched {', '.join(axes) or 'no axes'}: {st.duration * 1e3:.4f} ms")
    return 0


def cmd_run(args, cfg) -> int:
    config = lattice_from(cfg)
    opts = sim_options(cfg)
    lib = _library(args.library)
    circ = load_circuit(args.circuit)
    st = stitch(circ, lib, config.depth)
    plan = circuit_plan(circ, lib, config)
    signal = SignalSpec.parse(args.signal)
    snap = _duration(args.snap_every, 100e-6)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if signal.kind == "rotation" or len(st.waveforms) == 2:
        n_x = domain_for(plan, config, opts.wavepacket_sites_2d, 0)
        n_z = domain_for(plan, config, opts.wavepacket_sites_2d, 1) if len(plan.axes) > 1 else 64
        psi = prepare_wavepacket_2d(config, opts.wavepacket_sites_2d, 0, (n_x, n_z),
                                    opts.points_per_site_2d)
        traj = evolve_grid_2d(psi, (st.axis("x"), st.axis("z")),
                              signal.magnitude if signal.kind == "rotation" else 0.0,
                              dt_gate=opts.dt_gate_2d, dt_hold=opts.dt_hold_2d, snap_every=snap)
    else:
        n_dom = opts.domain_sites or domain_for(plan, config, opts.wavepacket_sites)
        psi = prepare_wavepacket(config, opts.wavepacket_sites, 0, n_dom, opts.points_per_site)
        traj = evolve_grid_1d(psi, st.axis("x"), signal, dt_hold=opts.dt_hold, snap_every=snap)
    prov = provenance(cfg, command="run", circuit_sha256=circ.text_hash, signal=args.signal)
    header = comment_header(prov)
    profiles = [density_snapshot(s, 0) for s in traj.states]
    with open(outdir / "density.csv", "w", encoding="utf-8") as fh:
        fh.write(header)
        fh.write("# rows: t_s then density (1/m) at positions_m\n")
        fh.write("positions_m," + ",".join(repr(float(x)) for x in profiles[0].positions) + "\n")
        for p in profiles:
            fh.write(repr(float(p.t)) + "," + ",".join(f"{d:.6e}" for d in p.density) + "\n")
    with open(outdir / "orders.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(header)
        w = csv.writer(fh)
        w.writerow(["t_s", "m", "P"])
        for s in traj.states:
            dist = measure_momentum_orders(s, 0)
            for m, pr in zip(dist.orders, dist.probabilities):
                w.writerow([repr(float(s.t)), int(m), repr(float(pr))])
    final = measure_momentum_orders(traj.final, 0)
    print("final orders: " + ", ".join(f"{m:+d}:{p:.4f}" for m, p in final.as_dict().items()))
    return 0


def cmd_scan(args, cfg) -> int:
    config = lattice_from(cfg)
    lib = _library(args.library)
    circ = load_circuit(args.circuit)
    values = _parse_range(args.range)
    scan = run_scan(circ, args.param, values, library=lib, config=config,
                    options=sim_options(cfg), workers=cfg.get("workers"))
    scan.provenance.update(provenance(cfg, command="scan"))
    scan.save(args.out)
    print(f"scan of {len(values)} points -> {args.out}")
    if scan.flagged:
        pts = ", ".join(f"{values[i]:g}" for i in scan.flagged)
        print(f"wrap hazard at {len(scan.flagged)} point(s): {pts}", file=sys.stderr)
        return 2
    return 0


def cmd_sense(args, cfg) -> int:
    scan = ScanResult.load(args.scan)
    parts = args.shots.split(":")
    lo, hi = float(parts[0]), float(parts[1])
    n = int(parts[2]) if len(parts) > 2 else 41
    shots = np.unique(np.round(np.logspace(np.log10(lo), np.log10(hi), n)))
    rep = sensitivity(scan, args.atoms, shots)
    prov = provenance(cfg, command="sense", scan=str(args.scan))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        fh.write(comment_header(prov))
        w = csv.writer(fh)
        w.writerow(["shots", "dbeta_min", "dbeta_max"])
        for s, a, b in rep.rows():
            w.writerow([int(s), repr(float(a)), repr(float(b))])
    print(f"CFI range [{rep.cfi.min():.4g}, {rep.cfi.max():.4g}] per {scan.unit}^-2 -> {args.out}")
    if rep.unbounded:
        print("all-zero Fisher information: sensitivity unbounded", file=sys.stderr)
        return 2
    return 0


def cmd_export(args, cfg) -> int:
    wave = load_waveform(args.wave)
    n = export_awg(wave, args.awg, extra_header={"bbi_version": __version__})
    print(f"{n} samples -> {args.awg}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override it")
    common.add_argument("--preset", choices=sorted(PRESETS), default=None)
    common.add_argument("--depth", type=float, default=None, help="lattice depth in E_r")
    common.add_argument("--truncation", type=int, default=None, help="plane-wave cutoff N_max")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--workers", type=int, default=None,
                        help="worker processes (capped by BBI_WORKERS)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="bbi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"bbi {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("bands", parents=[common], help="band structure CSV")
    s.add_argument("--qpoints", type=int, default=256)
    s.add_argument("--nbands", type=int, default=5)
    s.add_argument("--out", default="bands.csv")
    s.set_defaults(func=cmd_bands)

    s = sub.add_parser("synth", parents=[common], help="synthesize one gate waveform")
    s.add_argument("--gate", required=True, help="bs, asym, mirror, cb, sh or echo")
    s.add_argument("--variant", type=int, default=1, choices=(1, 2))
    s.add_argument("--duration", help="gate duration with unit, e.g. 200us")
    s.add_argument("--control-bin", default=None, help="control bin, default 1us")
    s.add_argument("--restarts", type=int, default=16)
    s.add_argument("--max-iter", type=int, default=1000)
    s.add_argument("--goal", type=float, default=0.99)
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("verify", parents=[common], help="re-propagate a waveform at N_max=16")
    s.add_argument("--wave", required=True)
    s.add_argument("--target", required=True, help="kind:variant, e.g. bs:1")
    s.add_argument("--truncation-verify", type=int, default=16)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("stitch", parents=[common], help="stitch a circuit into waveforms")
    s.add_argument("--circuit", required=True)
    s.add_argument("--library", default=None, help="gate directory (default: shipped library)")
    s.add_argument("--out")
    s.add_argument("--awg", help="AWG CSV path")
    s.set_defaults(func=cmd_stitch)

    s = sub.add_parser("run", parents=[common], help="simulate a circuit on the grid")
    s.add_argument("--circuit", required=True)
    s.add_argument("--library", default=None)
    s.add_argument("--signal", default="none", help="accel:A, grad:G or rot:OMEGA (SI units)")
    s.add_argument("--snap-every", default="100us")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("scan", parents=[common], help="scan a signal parameter")
    s.add_argument("--circuit", required=True)
    s.add_argument("--library", default=None)
    s.add_argument("--param", required=True, choices=("a", "g'", "gprime", "omega"))
    s.add_argument("--range", required=True, help="lo:hi:points in SI units")
    s.add_argument("--out", default="scan.json")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("sense", parents=[common], help="sensitivity band from a scan")
    s.add_argument("--scan", required=True)
    s.add_argument("--atoms", type=int, default=1000)
    s.add_argument("--shots", default="1:10000", help="lo:hi[:points], log spaced")
    s.add_argument("--out", default="sens.csv")
    s.set_defaults(func=cmd_sense)

    s = sub.add_parser("export", parents=[common], help="waveform JSON to AWG CSV")
    s.add_argument("--wave", required=True)
    s.add_argument("--awg", required=True)
    s.set_defaults(func=cmd_export)
    return p


# flags whose values may start with "-" (negative scan bounds, signals)
_SIGNED_VALUE_FLAGS = ("--range", "--signal")


def _join_signed_values(argv):
    out, it = [], iter(argv)
    for tok in it:
        if tok in _SIGNED_VALUE_FLAGS:
            val = next(it, None)
            out.append(tok if val is None else f"{tok}={val}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_signed_values(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args)
        return args.func(args, cfg)
    except (SynthesisError, WrapHazardError) as exc:
        print(f"bbi: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, CircuitSyntaxError, LibraryError, ValueError, KeyError,
            FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"bbi: error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"bbi: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
