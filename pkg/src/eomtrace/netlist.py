"""Netlist DSL: parsing, validation, and state propagation.

Grammar (line oriented, '#' starts a comment):

    source <wire>
    bs <id> in=<w>[,<w>] out=<w>,<w> (r=<float> | ratio=<int>:<int>)
    phase <id> wire=<w> phi=<float_rad>
    eom <id> wire=<w> omega_ghz=<float> depth=<float> [order=<int>]
    block <id> wire=<w>
    detect <wire>

Wires are single-writer / single-reader: a wire is driven by the source or
by one beam-splitter output and consumed by one beam-splitter input or one
detector; fan-out needs an explicit splitter.  phase/eom/block sit *on* a
wire and apply in file order.  Parsing is total: it returns diagnostics with
line/column positions instead of raising.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Union

from .elements import (
    BeamSplitterSpec,
    BlockSpec,
    EomSpec,
    PhaseShifterSpec,
    apply_beam_splitter,
    apply_block,
    apply_eom,
    apply_phase,
)
from .state import PhotonState, carrier_state

Element = Union[BeamSplitterSpec, EomSpec, PhaseShifterSpec, BlockSpec]

# Diagnostic codes.  Syntax:
UNKNOWN_KEYWORD = "UNKNOWN_KEYWORD"
ARITY_MISMATCH = "ARITY_MISMATCH"
BAD_VALUE = "BAD_VALUE"
UNKNOWN_KEY = "UNKNOWN_KEY"
DUPLICATE_KEY = "DUPLICATE_KEY"
CONFLICTING_KEYS = "CONFLICTING_KEYS"
DUPLICATE_ID = "DUPLICATE_ID"
REFLECTIVITY_RANGE = "REFLECTIVITY_RANGE"
EOM_PARAM = "EOM_PARAM"
# Structure:
NO_SOURCE = "NO_SOURCE"
MULTIPLE_SOURCE = "MULTIPLE_SOURCE"
NO_DETECT = "NO_DETECT"
DUPLICATE_DRIVER = "DUPLICATE_DRIVER"
DUPLICATE_READER = "DUPLICATE_READER"
UNKNOWN_WIRE = "UNKNOWN_WIRE"
CYCLE = "CYCLE"
UNREACHABLE_DETECT = "UNREACHABLE_DETECT"
DETECT_NOT_SINK = "DETECT_NOT_SINK"

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*\Z")


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    line: int = 0  # 1-based; 0 when the problem is not tied to a line
    col: int = 1

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.code}: {self.message}"


class NetlistError(ValueError):
    """Raised by circuit_from_parts when the element list is invalid."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class Circuit:
    """Validated optical network with a precomputed evaluation schedule."""

    source_wire: str
    elements: tuple[Element, ...]
    detect_wires: tuple[str, ...]
    wires: frozenset[str] = field(compare=False)
    eom_registry: dict = field(compare=False)       # eom id -> (omega_ghz, depth)
    schedule: tuple[int, ...] = field(compare=False)  # element indices in eval order

    def eom_freqs(self) -> dict[str, float]:
        return {k: om for k, (om, _m) in self.eom_registry.items()}

    def element_by_id(self, elem_id: str) -> Element:
        for e in self.elements:
            if e.id == elem_id:
                return e
        raise KeyError(elem_id)


@dataclass
class ParseResult:
    circuit: Circuit | None
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return self.circuit is not None and not self.diagnostics


def _tokens(line: str) -> list[tuple[str, int]]:
    code = line.split("#", 1)[0]
    return [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", code)]


class _LineParser:
    """Parses one element line into a spec, accumulating diagnostics."""

    def __init__(self, toks, lineno, diags):
        self.toks = toks
        self.lineno = lineno
        self.diags = diags
        self.failed = False

    def err(self, code, msg, col=1):
        self.diags.append(Diagnostic(code, msg, self.lineno, col))
        self.failed = True

    def keyvals(self, start, allowed):
        seen = {}
        for tok, col in self.toks[start:]:
            if "=" not in tok:
                self.err(ARITY_MISMATCH, f"expected key=value, got {tok!r}", col)
                continue
            key, val = tok.split("=", 1)
            if key not in allowed:
                self.err(UNKNOWN_KEY, f"unknown key {key!r}", col)
                continue
            if key in seen:
                self.err(DUPLICATE_KEY, f"duplicate key {key!r}", col)
                continue
            seen[key] = (val, col)
        return seen

    def need(self, seen, key):
        if key not in seen:
            self.err(ARITY_MISMATCH, f"missing required key {key!r}")
            return None, 1
        return seen[key]

    def name(self, raw, col, what):
        if raw is None:
            return None
        if not _NAME_RE.match(raw):
            self.err(BAD_VALUE, f"invalid {what} name {raw!r}", col)
            return None
        return raw

    def floatval(self, raw, col, what):
        if raw is None:
            return None
        try:
            return float(raw)
        except ValueError:
            self.err(BAD_VALUE, f"{what} is not a number: {raw!r}", col)
            return None

    def intval(self, raw, col, what):
        if raw is None:
            return None
        try:
            return int(raw)
        except ValueError:
            self.err(BAD_VALUE, f"{what} is not an integer: {raw!r}", col)
            return None


def parse_netlist(text: str) -> ParseResult:
    """Parse netlist source into a validated Circuit.

    Never raises on bad input; all problems come back as positioned
    diagnostics and ``circuit`` is None whenever any were found.
    """
    diags: list[Diagnostic] = []
    elements: list[Element] = []
    source: tuple[str, int] | None = None
    detects: list[str] = []
    ids: dict[str, int] = {}

    for lineno, line in enumerate(text.splitlines(), start=1):
        toks = _tokens(line)
        if not toks:
            continue
        kw, col0 = toks[0]
        p = _LineParser(toks, lineno, diags)

        if kw == "source":
            if len(toks) != 2:
                p.err(ARITY_MISMATCH, "source takes exactly one wire")
                continue
            w = p.name(toks[1][0], toks[1][1], "wire")
            if w is None:
                continue
            if source is not None:
                p.err(MULTIPLE_SOURCE, "second source line", col0)
                continue
            source = (w, lineno)
            continue

        if kw == "detect":
            if len(toks) != 2:
                p.err(ARITY_MISMATCH, "detect takes exactly one wire")
                continue
            w = p.name(toks[1][0], toks[1][1], "wire")
            if w is not None:
                detects.append(w)
            continue

        if kw not in ("bs", "phase", "eom", "block"):
            p.err(UNKNOWN_KEYWORD, f"unknown keyword {kw!r}", col0)
            continue

        if len(toks) < 2 or "=" in toks[1][0]:
            p.err(ARITY_MISMATCH, f"{kw} needs an id before its keys")
            continue
        eid = p.name(toks[1][0], toks[1][1], "element id")
        if eid is None:
            continue
        if eid in ids:
            p.err(DUPLICATE_ID, f"element id {eid!r} already used", toks[1][1])
            continue

        if kw == "bs":
            seen = p.keyvals(2, {"in", "out", "r", "ratio"})
            inraw, incol = p.need(seen, "in")
            outraw, outcol = p.need(seen, "out")
            if "r" in seen and "ratio" in seen:
                p.err(CONFLICTING_KEYS, "give r or ratio, not both")
            if "r" not in seen and "ratio" not in seen:
                p.err(ARITY_MISMATCH, "beam splitter needs r= or ratio=")
            if p.failed:
                continue
            in_wires = tuple(
                w for w in (p.name(x, incol, "wire") for x in inraw.split(","))
            )
            out_wires = tuple(
                w for w in (p.name(x, outcol, "wire") for x in outraw.split(","))
            )
            if None in in_wires or None in out_wires:
                continue
            if not 1 <= len(in_wires) <= 2:
                p.err(ARITY_MISMATCH, "in= takes one or two wires", incol)
            if len(out_wires) != 2:
                p.err(ARITY_MISMATCH, "out= takes exactly two wires", outcol)
            if p.failed:
                continue
            if "r" in seen:
                rraw, rcol = seen["r"]
                r = p.floatval(rraw, rcol, "reflectivity")
                if r is None:
                    continue
                if not 0.0 <= r <= 1.0:
                    p.err(REFLECTIVITY_RANGE, f"r={r:g} outside [0, 1]", rcol)
                    continue
            else:
                rraw, rcol = seen["ratio"]
                parts = rraw.split(":")
                if len(parts) != 2:
                    p.err(BAD_VALUE, f"ratio must look like 1:2, got {rraw!r}", rcol)
                    continue
                a = p.intval(parts[0], rcol, "ratio")
                b = p.intval(parts[1], rcol, "ratio")
                if a is None or b is None:
                    continue
                if a < 0 or b < 0 or a + b == 0:
                    p.err(REFLECTIVITY_RANGE, f"ratio {rraw!r} not interpretable", rcol)
                    continue
                r = a / (a + b)
            elements.append(BeamSplitterSpec(eid, in_wires, out_wires, r))

        elif kw == "phase":
            seen = p.keyvals(2, {"wire", "phi"})
            wraw, wcol = p.need(seen, "wire")
            phiraw, phicol = p.need(seen, "phi")
            if p.failed:
                continue
            w = p.name(wraw, wcol, "wire")
            phi = p.floatval(phiraw, phicol, "phi")
            if w is None or phi is None:
                continue
            elements.append(PhaseShifterSpec(eid, w, phi))

        elif kw == "eom":
            seen = p.keyvals(2, {"wire", "omega_ghz", "depth", "order"})
            wraw, wcol = p.need(seen, "wire")
            omraw, omcol = p.need(seen, "omega_ghz")
            mraw, mcol = p.need(seen, "depth")
            if p.failed:
                continue
            w = p.name(wraw, wcol, "wire")
            om = p.floatval(omraw, omcol, "omega_ghz")
            m = p.floatval(mraw, mcol, "depth")
            order = 3
            if "order" in seen:
                order = p.intval(seen["order"][0], seen["order"][1], "order")
            if None in (w, om, m, order):
                continue
            try:
                elements.append(EomSpec(eid, w, om, m, order))
            except ValueError as exc:
                p.err(EOM_PARAM, str(exc), omcol)

        elif kw == "block":
            seen = p.keyvals(2, {"wire"})
            wraw, wcol = p.need(seen, "wire")
            if p.failed:
                continue
            w = p.name(wraw, wcol, "wire")
            if w is None:
                continue
            elements.append(BlockSpec(eid, w))

        if not p.failed:
            ids[eid] = lineno

    if source is None:
        diags.append(Diagnostic(NO_SOURCE, "no source line"))
    if not detects:
        diags.append(Diagnostic(NO_DETECT, "no detect line"))
    if diags:
        return ParseResult(None, diags)

    struct = _structural_diagnostics(source[0], elements, detects)
    if struct:
        return ParseResult(None, struct)
    return ParseResult(_assemble(source[0], elements, detects), [])


def _wire_io(source_wire, elements, detects):
    """Writers and readers per wire (in-line elements count as neither)."""
    writers: dict[str, list[str]] = {source_wire: ["source"]}
    readers: dict[str, list[str]] = {}
    for e in elements:
        if isinstance(e, BeamSplitterSpec):
            for w in e.in_wires:
                readers.setdefault(w, []).append(e.id)
            for w in e.out_wires:
                writers.setdefault(w, []).append(e.id)
    for w in detects:
        readers.setdefault(w, []).append("detect")
    return writers, readers


def _structural_diagnostics(source_wire, elements, detects) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    writers, readers = _wire_io(source_wire, elements, detects)

    for w, who in writers.items():
        if len(who) > 1:
            diags.append(
                Diagnostic(DUPLICATE_DRIVER, f"wire {w!r} driven by {', '.join(who)}")
            )
    for w, who in readers.items():
        if len(who) > 1:
            diags.append(
                Diagnostic(DUPLICATE_READER, f"wire {w!r} consumed by {', '.join(who)}")
            )
    known = set(writers)
    for e in elements:
        if isinstance(e, BeamSplitterSpec):
            for w in e.in_wires:
                if w not in known:
                    diags.append(
                        Diagnostic(UNKNOWN_WIRE, f"bs {e.id!r} reads undriven wire {w!r}")
                    )
        else:
            if e.wire not in known:
                diags.append(
                    Diagnostic(UNKNOWN_WIRE, f"{e.id!r} sits on undriven wire {e.wire!r}")
                )
    for w in detects:
        if w not in known:
            diags.append(Diagnostic(UNKNOWN_WIRE, f"detector on undriven wire {w!r}"))
        if any(r != "detect" for r in readers.get(w, [])):
            diags.append(Diagnostic(DETECT_NOT_SINK, f"detect wire {w!r} is consumed"))
    if diags:
        return diags

    schedule = _schedule(source_wire, elements)
    if schedule is None:
        return [Diagnostic(CYCLE, "wiring contains a cycle")]

    reachable = _reachable_wires(source_wire, elements)
    for w in detects:
        if w not in reachable:
            diags.append(
                Diagnostic(UNREACHABLE_DETECT, f"detect wire {w!r} unreachable from source")
            )
    return diags


def _schedule(source_wire, elements) -> tuple[int, ...] | None:
    """Deterministic evaluation order: first ready element in file order.

    An in-line element is ready once its wire is driven and every earlier
    in-line element on that wire ran; a splitter additionally waits for all
    in-line elements on its inputs.  Returns None on deadlock (a cycle).
    """
    driven = {source_wire}
    done = [False] * len(elements)
    pending_inline: dict[str, list[int]] = {}
    for i, e in enumerate(elements):
        if not isinstance(e, BeamSplitterSpec):
            pending_inline.setdefault(e.wire, []).append(i)

    def ready(i) -> bool:
        e = elements[i]
        if isinstance(e, BeamSplitterSpec):
            for w in e.in_wires:
                if w not in driven:
                    return False
                if any(not done[j] for j in pending_inline.get(w, [])):
                    return False
            return True
        if e.wire not in driven:
            return False
        return all(done[j] or j >= i for j in pending_inline.get(e.wire, []))

    order: list[int] = []
    while len(order) < len(elements):
        progressed = False
        for i in range(len(elements)):
            if done[i] or not ready(i):
                continue
            done[i] = True
            order.append(i)
            e = elements[i]
            if isinstance(e, BeamSplitterSpec):
                driven.update(e.out_wires)
            progressed = True
            break
        if not progressed:
            return None
    return tuple(order)


def _reachable_wires(source_wire, elements) -> set[str]:
    reach = {source_wire}
    changed = True
    while changed:
        changed = False
        for e in elements:
            if isinstance(e, BeamSplitterSpec):
                if any(w in reach for w in e.in_wires):
                    new = set(e.out_wires) - reach
                    if new:
                        reach |= new
                        changed = True
    return reach


def _assemble(source_wire, elements, detects) -> Circuit:
    wires = {source_wire}
    registry = {}
    for e in elements:
        if isinstance(e, BeamSplitterSpec):
            wires.update(e.in_wires)
            wires.update(e.out_wires)
        else:
            wires.add(e.wire)
        if isinstance(e, EomSpec):
            registry[e.id] = (e.omega_ghz, e.depth)
    wires.update(detects)
    schedule = _schedule(source_wire, elements)
    assert schedule is not None
    return Circuit(
        source_wire=source_wire,
        elements=tuple(elements),
        detect_wires=tuple(detects),
        wires=frozenset(wires),
        eom_registry=registry,
        schedule=schedule,
    )


def circuit_from_parts(source_wire, elements, detect_wires) -> Circuit:
    """Build a Circuit from specs, raising NetlistError when invalid."""
    diags = _structural_diagnostics(source_wire, list(elements), list(detect_wires))
    if diags:
        raise NetlistError(diags)
    return _assemble(source_wire, list(elements), list(detect_wires))


def validate_circuit(c: Circuit) -> list[Diagnostic]:
    """Re-check all structural invariants of an already-built Circuit."""
    return _structural_diagnostics(c.source_wire, list(c.elements), list(c.detect_wires))


def format_netlist(c: Circuit) -> str:
    """Canonical text for a circuit; parsing it back yields an equal Circuit."""
    lines = [f"source {c.source_wire}"]
    for e in c.elements:
        if isinstance(e, BeamSplitterSpec):
            lines.append(
                f"bs {e.id} in={','.join(e.in_wires)} "
                f"out={','.join(e.out_wires)} r={e.r!r}"
            )
        elif isinstance(e, PhaseShifterSpec):
            lines.append(f"phase {e.id} wire={e.wire} phi={e.phi!r}")
        elif isinstance(e, EomSpec):
            lines.append(
                f"eom {e.id} wire={e.wire} omega_ghz={e.omega_ghz!r} "
                f"depth={e.depth!r} order={e.order}"
            )
        elif isinstance(e, BlockSpec):
            lines.append(f"block {e.id} wire={e.wire}")
    lines.extend(f"detect {w}" for w in c.detect_wires)
    return "\n".join(lines) + "\n"


def _apply_element(state: PhotonState, e: Element) -> PhotonState:
    if isinstance(e, BeamSplitterSpec):
        return apply_beam_splitter(state, e)
    if isinstance(e, EomSpec):
        return apply_eom(state, e)
    if isinstance(e, PhaseShifterSpec):
        return apply_phase(state, e)
    if isinstance(e, BlockSpec):
        return apply_block(state, e)
    raise TypeError(f"unknown element {e!r}")


@dataclass
class PropagationResult:
    detected: dict[str, PhotonState]
    dumped: dict[str, PhotonState]  # driven but never consumed nor detected
    absorbed_norm: float            # removed by blocks


def propagate_full(
    c: Circuit, input_state: PhotonState | None = None, _schedule=None
) -> PropagationResult:
    """Run the circuit and account for every bit of norm.

    detected + dumped + absorbed equals the input norm to rounding for any
    valid circuit (elements are unitary apart from blocks).
    """
    if input_state is None:
        input_state = carrier_state(c.source_wire)
    extra = input_state.wires() - {c.source_wire}
    if extra:
        raise ValueError(f"input state must live on {c.source_wire!r}, also on {extra}")
    state = input_state
    absorbed = 0.0
    order = c.schedule if _schedule is None else _schedule
    for i in order:
        e = c.elements[i]
        if isinstance(e, BlockSpec):
            before = state.norm_squared()
            state = _apply_element(state, e)
            absorbed += before - state.norm_squared()
        else:
            state = _apply_element(state, e)
    detected = {w: state.restricted_to(w) for w in c.detect_wires}
    dumped = {
        w: state.restricted_to(w)
        for w in sorted(state.wires())
        if w not in c.detect_wires
    }
    return PropagationResult(detected=detected, dumped=dumped, absorbed_norm=absorbed)


def propagate(c: Circuit, input_state: PhotonState | None = None) -> dict[str, PhotonState]:
    """Propagate a state from the source and return it at each detect wire."""
    return propagate_full(c, input_state).detected
