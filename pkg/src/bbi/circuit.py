"""Circuit DSL, waveform stitching, classical segment plans and AWG export.

Grammar::

    circuit   := axisblock*
    axisblock := "axis" ID "{" stmt* "}"
    stmt      := "gate" NAME modifier* ";" | "wait" DURATION ";"
               | "repeat" INT "{" stmt* "}"
    modifier  := "rev" | "neg"

Gate names are library keys (``beamsplitter:1``) or short aliases
(``BS``, ``MIRROR:2``, ``SH`` ...).  Durations carry a unit (ns, us, ms, s)
and must be whole multiples of the 50 ns sample period.  ``#`` starts a
comment.
"""
from __future__ import annotations

import csv
import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import SAMPLE_PERIOD, Waveform
from .gatesynth import GATE_KINDS, KIND_ALIASES, load_library, negate, reverse, waveform_hash
from .lattice import HBAR, LatticeConfig

SAMPLE_NS = 50
UNITS_NS = {"ns": 1, "us": 1_000, "µs": 1_000, "μs": 1_000, "ms": 1_000_000, "s": 1_000_000_000}
AXES = ("x", "z")
_EXTRA_ALIASES = {"mirror": "mirror", "echo": "echo", "recombiner": "beamsplitter",
                  "cbs": "cb_beamsplitter", "splithold": "split_hold"}


class CircuitSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line, self.col = line, col


class LibraryError(ValueError):
    pass


# ---------------------------------------------------------------- AST

@dataclass(frozen=True)
class Gate:
    name: str
    reversed: bool = False
    negated: bool = False
    line: int = 0
    col: int = 0

    def describe(self) -> str:
        mods = "".join([" rev" if self.reversed else "", " neg" if self.negated else ""])
        return f"gate {self.name}{mods}"


@dataclass(frozen=True)
class Wait:
    samples: int

    @property
    def duration(self) -> float:
        return self.samples * SAMPLE_PERIOD

    def describe(self) -> str:
        return f"wait {self.samples * SAMPLE_NS}ns"


@dataclass(frozen=True)
class Repeat:
    body: tuple
    count: int


@dataclass
class Circuit:
    axes: dict
    text: str = ""

    def expanded(self, axis: str) -> list:
        return list(_expand(self.axes.get(axis, ())))

    @property
    def gate_names(self) -> set:
        return {el.name for ax in self.axes for el in self.expanded(ax) if isinstance(el, Gate)}

    @property
    def text_hash(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()[:16]

    def to_text(self) -> str:
        """Canonical text of the repeat-expanded circuit."""
        lines = []
        for ax, body in self.axes.items():
            lines.append(f"axis {ax} {{")
            lines.extend(f"  {el.describe()};" for el in _expand(body))
            lines.append("}")
        return "\n".join(lines) + "\n"


def _expand(elements):
    for el in elements:
        if isinstance(el, Repeat):
            for _ in range(el.count):
                yield from _expand(el.body)
        else:
            yield el


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>#[^\n]*)"
    r"|(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)(?P<unit>ns|us|µs|μs|ms|s)?"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_&]*(?::\d+)?)|(?P<punct>[{};])"
)


def _tokenize(text: str):
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise CircuitSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup if m.lastgroup != "unit" else "num"
        if m.group("nl"):
            line, col = line + 1, 1
        elif kind not in ("ws", "comment"):
            if m.group("num") is not None:
                yield ("num", (m.group("num"), m.group("unit")), line, col)
            else:
                yield (kind, m.group(0), line, col)
            col += m.end() - m.start()
        else:
            col += m.end() - m.start()
        pos = m.end()
    yield ("eof", None, line, col)


def parse_duration(text: str) -> int:
    """Duration string (``3ms``, ``150us``) to a whole number of 50 ns samples."""
    m = re.fullmatch(r"\s*(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)\s*(ns|us|µs|μs|ms|s)\s*", text)
    if not m:
        raise ValueError(f"malformed duration {text!r}; expected a number with ns/us/ms/s")
    return _to_samples(m.group(1), m.group(2))


def _to_samples(number: str, unit: str) -> int:
    ns = float(number) * UNITS_NS[unit]
    n = ns / SAMPLE_NS
    if not n > 0:
        raise ValueError(f"duration must be positive, got {number}{unit}")
    if abs(n - round(n)) > 1e-6:
        raise ValueError(f"duration {number}{unit} is not a multiple of {SAMPLE_NS} ns")
    return int(round(n))


def resolve_gate_name(name: str) -> str:
    """Alias or library key -> canonical ``kind:variant`` key."""
    base, _, variant = name.partition(":")
    key = base.lower()
    kind = KIND_ALIASES.get(key) or _EXTRA_ALIASES.get(key) or (key if key in GATE_KINDS else None)
    if kind is None:
        raise KeyError(name)
    return f"{kind}:{variant or 1}"


def parse_circuit(text: str, known_gates=None) -> Circuit:
    """Parse DSL text.  ``known_gates`` (library keys) restricts valid names."""
    tokens = list(_tokenize(text))
    pos = 0

    def peek():
        return tokens[pos]

    def take(kind=None, value=None):
        nonlocal pos
        tok = tokens[pos]
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind
            got = "end of input" if tok[0] == "eof" else repr(tok[1] if tok[0] != "num" else "".join(
                x or "" for x in tok[1]))
            raise CircuitSyntaxError(f"expected {want!r}, found {got}", tok[2], tok[3])
        pos += 1
        return tok

    def check_gate(name, line, col):
        if known_gates is not None and name in known_gates:
            return
        try:
            key = resolve_gate_name(name)
        except KeyError:
            raise CircuitSyntaxError(f"unknown gate {name!r}", line, col) from None
        if known_gates is not None and key not in known_gates:
            raise CircuitSyntaxError(f"gate {name!r} is not in the library", line, col)

    def block(open_tok):
        body = []
        while True:
            tok = peek()
            if tok[0] == "eof":
                raise CircuitSyntaxError("unbalanced block: missing '}'", open_tok[2], open_tok[3])
            if tok[0] == "punct" and tok[1] == "}":
                take()
                return tuple(body)
            body.append(statement())

    def statement():
        tok = take("name")
        word = tok[1]
        if word == "gate":
            ntok = take("name")
            check_gate(ntok[1], ntok[2], ntok[3])
            rev = neg = False
            while peek()[0] == "name" and peek()[1] in ("rev", "neg"):
                mod = take()[1]
                rev |= mod == "rev"
                neg |= mod == "neg"
            take("punct", ";")
            return Gate(ntok[1], rev, neg, ntok[2], ntok[3])
        if word == "wait":
            dtok = peek()
            if dtok[0] != "num" or dtok[1][1] is None:
                raise CircuitSyntaxError("malformed duration: expected number with unit",
                                         dtok[2], dtok[3])
            take()
            try:
                n = _to_samples(*dtok[1])
            except ValueError as exc:
                raise CircuitSyntaxError(str(exc), dtok[2], dtok[3]) from None
            take("punct", ";")
            return Wait(n)
        if word == "repeat":
            ctok = peek()
            if ctok[0] != "num" or ctok[1][1] is not None or not ctok[1][0].isdigit():
                raise CircuitSyntaxError("repeat count must be an integer", ctok[2], ctok[3])
            take()
            count = int(ctok[1][0])
            if count < 1:
                raise CircuitSyntaxError("repeat count must be >= 1", ctok[2], ctok[3])
            open_tok = take("punct", "{")
            return Repeat(block(open_tok), count)
        raise CircuitSyntaxError(f"unknown statement {word!r}", tok[2], tok[3])

    axes: dict = {}
    while peek()[0] != "eof":
        take("name", "axis")
        atok = take("name")
        if atok[1] not in AXES:
            raise CircuitSyntaxError(f"axis must be one of {AXES}", atok[2], atok[3])
        if atok[1] in axes:
            raise CircuitSyntaxError(f"axis {atok[1]} declared twice", atok[2], atok[3])
        open_tok = take("punct", "{")
        axes[atok[1]] = block(open_tok)
    return Circuit(axes, text)


def load_circuit(path, known_gates=None) -> Circuit:
    return parse_circuit(Path(path).read_text(encoding="utf-8"), known_gates)


# ---------------------------------------------------------------- library access

def lookup(library: dict, name: str) -> Waveform:
    if name in library:
        return library[name]
    try:
        key = resolve_gate_name(name)
    except KeyError:
        raise LibraryError(f"unknown gate {name!r}") from None
    if key not in library:
        raise LibraryError(f"gate {name!r} ({key}) missing from library")
    return library[key]


def _gate_wave(library: dict, g: Gate) -> Waveform:
    w = lookup(library, g.name)
    if g.reversed:
        w = reverse(w)
    if g.negated:
        w = negate(w)
    return w


def library_depth(library: dict, names) -> float | None:
    depths = {}
    for n in names:
        d = lookup(library, n).metadata.get("depth_Er")
        if d is not None:
            depths[n] = float(d)
    if len(set(depths.values())) > 1:
        raise LibraryError(f"library depth mismatch: {depths}")
    return next(iter(depths.values()), None)


# ---------------------------------------------------------------- stitching

@dataclass
class Segment:
    start: int  # sample index
    stop: int
    element: str


@dataclass
class StitchedWaveform:
    waveforms: dict
    segments: dict
    depth: float | None = None
    library_hashes: dict = field(default_factory=dict)
    circuit_hash: str = ""

    @property
    def duration(self) -> float:
        return max((w.duration for w in self.waveforms.values()), default=0.0)

    def axis(self, name: str = "x") -> Waveform:
        if name in self.waveforms:
            return self.waveforms[name]
        return Waveform(np.zeros(0), SAMPLE_PERIOD, f"{name} (idle)")


def stitch(circuit: Circuit, library: dict | None = None, depth: float | None = None) -> StitchedWaveform:
    """Concatenate gate waveforms and constant waits per axis.

    Axes are padded at the end with their last value to a common length.
    """
    library = load_library() if library is None else library
    names = circuit.gate_names
    lib_depth = library_depth(library, names)
    if depth is not None and lib_depth is not None and abs(lib_depth - depth) > 1e-9:
        raise LibraryError(f"library depth {lib_depth} does not match lattice depth {depth}")
    chunks, segs = {}, {}
    for ax in circuit.axes:
        parts, seg, n, last = [], [], 0, 0.0
        for el in circuit.expanded(ax):
            if isinstance(el, Gate):
                s = _gate_wave(library, el).samples
            else:
                s = np.full(el.samples, last)
            if len(s):
                parts.append(s)
                seg.append(Segment(n, n + len(s), el.describe()))
                n += len(s)
                last = float(s[-1])
        chunks[ax], segs[ax] = parts, seg
    total = max((sum(len(p) for p in parts) for parts in chunks.values()), default=0)
    waves = {}
    for ax, parts in chunks.items():
        s = np.concatenate(parts) if parts else np.zeros(0)
        if len(s) < total:
            segs[ax].append(Segment(len(s), total, "pad"))
            s = np.concatenate([s, np.full(total - len(s), s[-1] if len(s) else 0.0)])
        waves[ax] = Waveform(s, SAMPLE_PERIOD, f"circuit:{ax}", {"depth_Er": lib_depth})
    hashes = {n: waveform_hash(lookup(library, n)) for n in sorted(names)}
    return StitchedWaveform(waves, segs, lib_depth, hashes, circuit.text_hash)


# ---------------------------------------------------------------- classical plan

@dataclass
class PlanSegment:
    t0: float
    t1: float
    start: tuple  # position per axis, meters
    velocity: tuple  # m/s per axis

    def position(self, t: float) -> np.ndarray:
        return np.asarray(self.start) + np.asarray(self.velocity) * (t - self.t0)


@dataclass
class Arm:
    label: str
    segments: list

    def position(self, t: float) -> np.ndarray:
        for s in self.segments:
            if s.t0 - 1e-15 <= t <= s.t1 + 1e-15:
                return s.position(t)
        raise ValueError(f"time {t} outside the plan")

    @property
    def sign(self) -> int:
        return int(np.prod([1 if c == "u" else -1 for c in self.label])) if self.label else 1

    def vertices(self, axes=(0, 1)) -> np.ndarray:
        pts = [np.asarray(s.start)[list(axes)] for s in self.segments]
        pts.append(self.segments[-1].position(self.segments[-1].t1)[list(axes)])
        return np.array(pts)


@dataclass
class SegmentPlan:
    axes: tuple
    arms: list
    duration: float
    speed: float  # p/m
    closed: bool = True
    issues: list = field(default_factory=list)

    def positions(self, t: float) -> dict:
        return {a.label: a.position(t) for a in self.arms}

    def max_excursion(self, axis: int = 0) -> float:
        return max(abs(np.asarray(s.start)[axis]) for a in self.arms for s in a.segments)

    def enclosed_area(self) -> float:
        """Sum over arms of the (x, z) area each arm's closed path encloses."""
        if len(self.axes) < 2:
            return 0.0
        total = 0.0
        for arm in self.arms:
            v = arm.vertices()
            x, z = v[:, 0], v[:, 1]
            total += 0.5 * abs(np.dot(x, np.roll(z, -1)) - np.dot(z, np.roll(x, -1)))
        return total


class _Branch:
    def __init__(self, label, n_axes):
        self.label = label
        self.pos = np.zeros(n_axes)
        self.vel = np.zeros(n_axes)  # units of p/m
        self.stack = [[] for _ in range(n_axes)]
        self.history = []
        self.t = 0.0

    def clone(self, suffix):
        b = _Branch(self.label + suffix, len(self.pos))
        b.pos, b.vel = self.pos.copy(), self.vel.copy()
        b.stack = [list(s) for s in self.stack]
        b.history, b.t = list(self.history), self.t
        return b

    def advance(self, t, speed):
        if t > self.t:
            self.history.append(PlanSegment(self.t, t, tuple(self.pos), tuple(self.vel * speed)))
            self.pos = self.pos + self.vel * speed * (t - self.t)
            self.t = t


def gate_role(library: dict, name: str) -> tuple:
    """(kind, variant) declared in the library metadata for ``name``."""
    meta = lookup(library, name).metadata
    kind = meta.get("kind")
    if kind is None:
        raise LibraryError(f"library entry {name!r} declares no gate kind")
    return kind, int(meta.get("variant", 1))


def circuit_plan(circuit: Circuit, library: dict | None = None,
                 config: LatticeConfig | None = None) -> SegmentPlan:
    """Idealized plan with every gate acting instantly at its midpoint."""
    library = load_library() if library is None else library
    config = config or LatticeConfig()
    speed = 4 * HBAR * config.k_L / config.atom_mass
    axes = tuple(circuit.axes)
    events = []
    total = 0.0
    for ai, ax in enumerate(axes):
        t = 0.0
        for order, el in enumerate(circuit.expanded(ax)):
            if isinstance(el, Gate):
                d = lookup(library, el.name).duration
                events.append((t + d / 2, ai, order, el))
                t += d
            else:
                t += el.duration
        total = max(total, t)
    events.sort(key=lambda e: (e[0], e[1], e[2]))
    issues = []
    branches = [_Branch("", len(axes))]
    for t, ai, _, g in events:
        kind, variant = gate_role(library, g.name)
        nxt = []
        for b in branches:
            b.advance(t, speed)
            nxt.extend(_apply_role(b, kind, variant, g, ai, issues))
        branches = nxt
    for b in branches:
        b.advance(total, speed)
    arms = [Arm(b.label, b.history or [PlanSegment(0.0, total, tuple(b.pos), tuple(b.vel * speed))])
            for b in branches]
    closed = len(arms) >= 2
    if len(arms) < 2:
        issues.append("single arm: no interference")
    else:
        ends = np.array([b.pos for b in branches])
        vels = np.array([b.vel for b in branches])
        if np.ptp(ends, axis=0).max() > 1e-9 or np.ptp(vels, axis=0).max() > 0:
            closed = False
            issues.append("arms do not merge at the end of the circuit")
    return SegmentPlan(axes, arms, total, speed, closed, issues)


def _apply_role(b: _Branch, kind, variant, g: Gate, ai, issues):
    stack = b.stack[ai]
    if g.reversed and kind in ("beamsplitter", "asym_beamsplitter", "cb_beamsplitter", "split_hold"):
        if not stack:
            issues.append(f"{g.describe()} at arm {b.label or 'root'} has nothing to close")
            b.vel[ai] = 0.0
        else:
            b.vel[ai] = stack.pop()
        return [b]
    if kind in ("mirror", "echo"):
        b.vel[ai] = -b.vel[ai]
        b.stack[ai] = [-v for v in stack]
        return [b]
    if kind == "split_hold":
        stack.append(b.vel[ai])
        b.vel[ai] = 0.0
        return [b]
    if kind == "asym_beamsplitter":
        stack.append(b.vel[ai])
        sign = 1.0 if variant == 1 else -1.0
        b.vel[ai] = -sign if g.negated else sign
        return [b]
    # beamsplitter and conduction-band beamsplitter both split symmetrically
    out = []
    for suffix, v in (("u", 1.0), ("l", -1.0)):
        c = b.clone(suffix)
        c.stack[ai].append(b.vel[ai])
        c.vel[ai] = v
        out.append(c)
    return out


# ---------------------------------------------------------------- AWG export

def export_awg(stitched: StitchedWaveform | Waveform, path, axis: str = "x",
               extra_header: dict | None = None) -> int:
    """Write ``t_ns,phi_rad`` rows at 50 ns spacing; returns the row count."""
    if isinstance(stitched, StitchedWaveform):
        w = stitched.axis(axis)
        header = {"depth_Er": stitched.depth, "circuit_sha256": stitched.circuit_hash,
                  "axis": axis}
        header.update({f"gate {k}": v for k, v in stitched.library_hashes.items()})
    else:
        w = stitched
        header = {"depth_Er": w.metadata.get("depth_Er"), "label": w.label,
                  "waveform_sha256": waveform_hash(w)}
    if abs(w.sample_period - SAMPLE_PERIOD) > 1e-15:
        raise ValueError("AWG export requires 50 ns samples")
    header.update(extra_header or {})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for k, v in header.items():
            fh.write(f"# {k}: {v}\n")
        writer = csv.writer(fh)
        writer.writerow(["t_ns", "phi_rad"])
        for i, s in enumerate(w.samples):
            writer.writerow([i * SAMPLE_NS, repr(float(s))])
    return len(w.samples)


def import_awg(path) -> Waveform:
    rows = []
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        head = next(reader)
        if head != ["t_ns", "phi_rad"]:
            raise ValueError(f"unexpected AWG header {head}")
        for i, (t, phi) in enumerate(reader):
            if int(t) != i * SAMPLE_NS:
                raise ValueError(f"row {i}: expected t_ns={i * SAMPLE_NS}, got {t}")
            rows.append(float(phi))
    return Waveform(np.array(rows), SAMPLE_PERIOD, Path(path).stem)


# ---------------------------------------------------------------- sensing circuits
#
# The builders space gates by their centres: T is the time between the
# midpoints of consecutive gates, which is the interval the instantaneous
# plan (and the closed-form phases) refer to.

def _gap(seconds: float, *gate_durations: float) -> str:
    n = int(round((seconds - sum(gate_durations) / 2) / SAMPLE_PERIOD))
    if n <= 0:
        raise ValueError("interval shorter than the adjacent gates")
    return f"wait {n * SAMPLE_NS}ns;"


def _dur(library, name):
    return lookup(library, name).duration


def accelerometer_circuit(T: float = 3e-3, library: dict | None = None) -> str:
    lib = load_library() if library is None else library
    bs, mi = _dur(lib, "BS"), _dur(lib, "MIRROR:2")
    # The Y mirror swaps bands 3 and 4, so the recombiner is the other variant.
    return ("axis x {\n  gate BS:1;\n  " + _gap(T, bs, mi) + "\n  gate MIRROR:2;\n  "
            + _gap(T, mi, bs) + "\n  gate BS:2 rev;\n}\n")


def _hold_block(hold: float, sh: float, echo: float) -> list:
    return [_gap(hold / 2, sh, echo), "gate ECHO:2;", _gap(hold / 2, echo, sh)]


def accelerometer_hold_circuit(T: float = 3e-3, T_hold: float = 16e-3,
                               library: dict | None = None) -> str:
    lib = load_library() if library is None else library
    bs, sh, ec = _dur(lib, "BS"), _dur(lib, "SH:2"), _dur(lib, "ECHO:2")
    body = (["gate BS:1;", _gap(T, bs, sh), "gate SH:2;"] + _hold_block(T_hold, sh, ec)
            + ["gate SH:2 rev;", _gap(T, sh, bs), "gate BS:2 rev;"])
    return "axis x {\n" + "".join(f"  {s}\n" for s in body) + "}\n"


def gradiometer_circuit(T1: float = 3e-3, T2: float = 3e-3, library: dict | None = None) -> str:
    lib = load_library() if library is None else library
    bs, cb, mi = _dur(lib, "BS:2"), _dur(lib, "CB:2"), _dur(lib, "MIRROR:2")
    # The conduction-band splitter mixes band parities, so backwards playback
    # alone does not undo it; the closing copy is negated as well.
    body = ["gate BS:2;", _gap(T1, bs, cb), "gate CB:2;", _gap(T2, cb, mi), "gate MIRROR:2;",
            _gap(T2, mi, cb), "gate CB:2 neg rev;", _gap(T1, cb, bs), "gate BS:1 rev;"]
    return "axis x {\n" + "".join(f"  {s}\n" for s in body) + "}\n"


def gradiometer_hold_circuit(T1: float = 3e-3, T2: float = 3e-3, T_hold: float = 8e-3,
                             library: dict | None = None) -> str:
    lib = load_library() if library is None else library
    bs, cb, sh, ec = _dur(lib, "BS:2"), _dur(lib, "CB:2"), _dur(lib, "SH"), _dur(lib, "ECHO:2")
    body = (["gate BS:2;", _gap(T1, bs, cb), "gate CB:2;", _gap(T2, cb, sh), "gate SH;"]
            + _hold_block(T_hold, sh, ec)
            + ["gate SH rev;", _gap(T2, sh, cb), "gate CB:2 neg rev;", _gap(T1, cb, bs),
               "gate BS:1 rev;"])
    return "axis x {\n" + "".join(f"  {s}\n" for s in body) + "}\n"


def gyroscope_circuit(T1: float = 3e-3, T2: float = 3e-3, library: dict | None = None,
                      margin: float = 50e-6) -> str:
    """One pair of counter-propagating loops in the (x, z) plane.

    x: split, stop, cross over, stop, return, recombine.  The z lift and
    descent happen while x is held, with a valence echo at the middle of
    each x hold.
    """
    lib = load_library() if library is None else library
    bs, sh, ec, asym = _dur(lib, "BS"), _dur(lib, "SH"), _dur(lib, "ECHO:2"), _dur(lib, "ASYM")
    hold = sh + T2 + asym + 2 * margin  # SH centre to reverse-SH centre
    held = ["gate SH;"] + _hold_block(hold, sh, ec) + ["gate SH rev;"]
    x = ["gate BS;", _gap(T1, bs, sh)] + held + [_gap(2 * T1, sh, sh)] + held
    x += [_gap(T1, sh, bs), "gate BS rev;"]
    # z moves only while x sits in the valence band
    lead = bs / 2 + T1 + sh / 2 + margin
    between = 2 * T1 + sh + 2 * margin
    # Playing ASYM backwards stops the packet it would launch under time
    # reversal, i.e. one moving the other way, so each stop is also negated.
    z = [f"wait {int(round(lead / SAMPLE_PERIOD)) * SAMPLE_NS}ns;", "gate ASYM;",
         _gap(T2, asym, asym), "gate ASYM neg rev;",
         f"wait {int(round(between / SAMPLE_PERIOD)) * SAMPLE_NS}ns;",
         "gate ASYM neg;", _gap(T2, asym, asym), "gate ASYM rev;"]
    return "axis x {\n" + _lines(x) + "}\naxis z {\n" + _lines(z) + "}\n"


def _lines(stmts) -> str:
    return "".join(f"  {s}\n" for s in stmts)
