"""Two-state (forward/backward) analysis of a circuit at carrier level.

The path degree of freedom is analysed with modulators treated as identity:
their action lives in the frequency meter, not in the path dynamics, so the
forward state psi propagates from the source and the backward state phi
propagates adjointly from the chosen detection port, both as one complex
amplitude per wire.  Blocks annihilate in both directions.

Cuts are the boundaries between scheduled elements.  Cut ``i`` is the state
after the first ``i`` elements ran; it can be addressed as ``"source"``
(i = 0), ``"after:<elem-id>"``, ``"before:<elem-id>"`` or ``"final"``.  For
lossless circuits the overlap <phi|psi> is the same at every cut; that also
holds with blocks, because a block only removes forward amplitude exactly
where the backward amplitude already vanished.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

from .elements import BeamSplitterSpec, BlockSpec, EomSpec, PhaseShifterSpec
from .netlist import Circuit

Amplitudes = dict[str, complex]

# Overlaps at or below this magnitude count as orthogonal post-selection.
DIVERGENT_OVERLAP = 1e-15

# Default support threshold for trajectory membership.
TRAJECTORY_ETA = 1e-6


def _forward_elem(state: Amplitudes, e) -> Amplitudes:
    out = dict(state)
    if isinstance(e, BeamSplitterSpec):
        a1 = out.pop(e.in_wires[0], 0.0 + 0.0j)
        a2 = out.pop(e.in_wires[1], 0.0 + 0.0j) if len(e.in_wires) == 2 else 0.0j
        t = np.sqrt(e.r)
        k = 1.0j * np.sqrt(1.0 - e.r)
        out[e.out_wires[0]] = t * a1 + k * a2
        out[e.out_wires[1]] = k * a1 + t * a2
    elif isinstance(e, PhaseShifterSpec):
        if e.wire in out:
            out[e.wire] = out[e.wire] * np.exp(1.0j * e.phi)
    elif isinstance(e, BlockSpec):
        out.pop(e.wire, None)
    elif isinstance(e, EomSpec):
        pass  # identity on the carrier-level path space
    else:
        raise TypeError(f"unknown element {e!r}")
    return out


def _backward_elem(state: Amplitudes, e) -> Amplitudes:
    """Adjoint action: phi_before = U^dagger phi_after."""
    out = dict(state)
    if isinstance(e, BeamSplitterSpec):
        b1 = out.pop(e.out_wires[0], 0.0 + 0.0j)
        b2 = out.pop(e.out_wires[1], 0.0 + 0.0j)
        t = np.sqrt(e.r)
        k = -1.0j * np.sqrt(1.0 - e.r)  # conjugate of the cross coupling
        out[e.in_wires[0]] = t * b1 + k * b2
        if len(e.in_wires) == 2:
            out[e.in_wires[1]] = k * b1 + t * b2
    elif isinstance(e, PhaseShifterSpec):
        if e.wire in out:
            out[e.wire] = out[e.wire] * np.exp(-1.0j * e.phi)
    elif isinstance(e, BlockSpec):
        out.pop(e.wire, None)
    elif isinstance(e, EomSpec):
        pass
    else:
        raise TypeError(f"unknown element {e!r}")
    return out


def _pair_overlap(phi: Amplitudes, psi: Amplitudes) -> complex:
    return sum(np.conj(phi[w]) * a for w, a in psi.items() if w in phi)


@dataclass
class TwoStateVector:
    """Forward and backward path amplitudes at every cut of a circuit."""

    circuit: Circuit
    postselect: str
    cut_ids: tuple[str, ...]
    forward: tuple[Amplitudes, ...]
    backward: tuple[Amplitudes, ...]
    overlap: complex
    # Per wire: amplitudes at the wire's own cut (just before its consumer,
    # i.e. with every in-line element on the wire already applied).
    wire_forward: dict[str, complex]
    wire_backward: dict[str, complex]

    def cut_index(self, cut: str) -> int:
        if cut == "source":
            return 0
        if cut == "final":
            return len(self.forward) - 1
        kind, _, elem_id = cut.partition(":")
        sched = self.circuit.schedule
        for pos, idx in enumerate(sched):
            if self.circuit.elements[idx].id == elem_id:
                return pos if kind == "before" else pos + 1
        raise KeyError(f"no cut {cut!r}")

    def overlap_at(self, cut: str) -> complex:
        i = self.cut_index(cut)
        return _pair_overlap(self.backward[i], self.forward[i])

    def renormalized_overlap(self, cut: str) -> complex:
        """Overlap against the backward state renormalised at the given cut.

        The stored backward state is normalised at the post-selection port,
        so its norm at interior cuts is below one whenever other exit ports
        carry amplitude; this variant divides that norm out, matching
        closed forms quoted for unit-normalised arm states.
        """
        i = self.cut_index(cut)
        phi = self.backward[i]
        nrm = np.sqrt(sum(abs(a) ** 2 for a in phi.values()))
        if nrm == 0.0:
            return 0.0j
        return _pair_overlap(phi, self.forward[i]) / nrm


def two_state(c: Circuit, postselect: str) -> TwoStateVector:
    """Propagate psi forward from the source and phi backward from a port."""
    if postselect not in c.detect_wires:
        raise ValueError(f"post-selection wire {postselect!r} is not a detect wire")

    fwd: list[Amplitudes] = [{c.source_wire: 1.0 + 0.0j}]
    for i in c.schedule:
        fwd.append(_forward_elem(fwd[-1], c.elements[i]))

    bwd: list[Amplitudes] = [{postselect: 1.0 + 0.0j}]
    for i in reversed(c.schedule):
        bwd.append(_backward_elem(bwd[-1], c.elements[i]))
    bwd.reverse()

    cut_ids = ("source",) + tuple(
        f"after:{c.elements[i].id}" for i in c.schedule
    )

    # A wire's own cut: just before its consumer fires (after the whole
    # in-line chain); unconsumed wires use the final cut.
    consumer_pos: dict[str, int] = {}
    for pos, i in enumerate(c.schedule):
        e = c.elements[i]
        if isinstance(e, BeamSplitterSpec):
            for w in e.in_wires:
                consumer_pos[w] = pos
    last = len(c.schedule)
    wire_fwd: dict[str, complex] = {}
    wire_bwd: dict[str, complex] = {}
    for w in c.wires:
        k = consumer_pos.get(w, last)
        wire_fwd[w] = fwd[k].get(w, 0.0 + 0.0j)
        wire_bwd[w] = bwd[k].get(w, 0.0 + 0.0j)

    return TwoStateVector(
        circuit=c,
        postselect=postselect,
        cut_ids=cut_ids,
        forward=tuple(fwd),
        backward=tuple(bwd),
        overlap=_pair_overlap(bwd[-1], fwd[-1]),
        wire_forward=wire_fwd,
        wire_backward=wire_bwd,
    )


@dataclass(frozen=True)
class ProjectorSpec:
    """A path projector at a named cut.

    ``wires`` gives a diagonal projector (sum of |w><w|); ``weights`` gives a
    rank-1 projector onto the normalised vector with those components.  Both
    are idempotent by construction.
    """

    cut: str
    wires: frozenset[str] = frozenset()
    weights: tuple[tuple[str, complex], ...] = ()
    label: str = ""

    @staticmethod
    def diagonal(cut: str, wires: Iterable[str], label: str = "") -> "ProjectorSpec":
        ws = frozenset(wires)
        return ProjectorSpec(cut=cut, wires=ws, label=label or "+".join(sorted(ws)))

    @staticmethod
    def rank1(cut: str, weights: Mapping[str, complex], label: str = "") -> "ProjectorSpec":
        nrm = np.sqrt(sum(abs(a) ** 2 for a in weights.values()))
        if nrm == 0.0:
            raise ValueError("rank-1 projector needs a nonzero vector")
        items = tuple(sorted((w, complex(a) / nrm) for w, a in weights.items()))
        return ProjectorSpec(cut=cut, weights=items, label=label)


@dataclass(frozen=True)
class WeakValueReport:
    projector: ProjectorSpec
    value: complex | None
    divergent: bool
    epsilon: float | None = None

    @property
    def magnitude(self) -> float:
        return abs(self.value) if self.value is not None else float("inf")


def weak_value(tsv: TwoStateVector, p: ProjectorSpec) -> WeakValueReport:
    """<phi|P|psi> / <phi|psi> at the projector's cut.

    A vanishing overlap is reported as a divergent weak value, not an error:
    orthogonal post-selection is legitimate physics and the divergence is the
    signal that higher-order meter terms take over.
    """
    i = tsv.cut_index(p.cut)
    psi = tsv.forward[i]
    phi = tsv.backward[i]
    if p.weights:
        bra_v = sum(np.conj(phi.get(w, 0.0j)) * a for w, a in p.weights)
        v_ket = sum(np.conj(a) * psi.get(w, 0.0j) for w, a in p.weights)
        num = bra_v * v_ket
    else:
        num = sum(
            np.conj(phi.get(w, 0.0j)) * psi.get(w, 0.0j) for w in p.wires
        )
    if abs(tsv.overlap) <= DIVERGENT_OVERLAP:
        return WeakValueReport(projector=p, value=None, divergent=True)
    return WeakValueReport(projector=p, value=num / tsv.overlap, divergent=False)


def tsvf_trajectory(tsv: TwoStateVector, eta: float = TRAJECTORY_ETA) -> frozenset[str]:
    """Wires where forward and backward states both have support above eta.

    Support is evaluated on a single segment of each wire (its own cut), so a
    blocked wire never qualifies: the block separates the segment with
    forward support from the one with backward support.  Leads that connect
    the source or a detector to the splitter network are excluded; a wire
    running straight from source to detector is the whole apparatus and is
    kept.
    """
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must be in (0, 1)")
    c = tsv.circuit
    consumed_by_bs = set()
    driven_by_bs = set()
    for e in c.elements:
        if isinstance(e, BeamSplitterSpec):
            consumed_by_bs.update(e.in_wires)
            driven_by_bs.update(e.out_wires)
    keep = set()
    for w in c.wires:
        if abs(tsv.wire_forward[w]) <= eta or abs(tsv.wire_backward[w]) <= eta:
            continue
        from_source = w == c.source_wire
        to_terminal = w not in consumed_by_bs  # detector or dangling end
        # Exclude pure input/output leads (terminal on exactly one side).
        if from_source != to_terminal:
            continue
        keep.add(w)
    return frozenset(keep)


@dataclass
class ScalingFit:
    """Least-squares fit of log |W| against log epsilon."""

    slope: float | None
    intercept: float | None
    n_used: int
    n_excluded: int
    identically_zero: bool = False


def weak_value_scaling(
    family: Callable[[float], WeakValueReport], eps_grid: Iterable[float]
) -> ScalingFit:
    """Fit the power law |W(eps)| ~ eps^slope over a positive epsilon grid.

    ``family`` must rebuild both the circuit and the projector for each
    epsilon (projectors that track an interferometer arm depend on the
    imperfection themselves).  Divergent or exactly-zero points are excluded
    with a warning; an all-zero family is reported as identically zero.
    """
    eps = [float(e) for e in eps_grid]
    if any(e <= 0 for e in eps):
        raise ValueError("epsilon grid must be strictly positive")
    xs, ys = [], []
    excluded = 0
    zero_count = 0
    for e in eps:
        rep = family(e)
        if rep.divergent or rep.value is None:
            excluded += 1
            continue
        mag = abs(rep.value)
        if mag == 0.0:
            zero_count += 1
            excluded += 1
            continue
        xs.append(np.log(e))
        ys.append(np.log(mag))
    if zero_count == len(eps):
        return ScalingFit(None, None, 0, excluded, identically_zero=True)
    if excluded:
        warnings.warn(
            f"{excluded} of {len(eps)} scaling points excluded "
            "(divergent or zero weak value)",
            stacklevel=2,
        )
    if len(xs) < 2:
        return ScalingFit(None, None, len(xs), excluded)
    slope, intercept = np.polyfit(np.array(xs), np.array(ys), 1)
    return ScalingFit(float(slope), float(intercept), len(xs), excluded)


def forward_image(
    c: Circuit, seed: Mapping[str, complex], cut_from: str, cut_to: str, tsv: TwoStateVector
) -> Amplitudes:
    """Propagate a path vector forward between two cuts of a circuit."""
    i0, i1 = tsv.cut_index(cut_from), tsv.cut_index(cut_to)
    if i1 < i0:
        raise ValueError("cut_to precedes cut_from")
    state: Amplitudes = dict(seed)
    for pos in range(i0, i1):
        state = _forward_elem(state, c.elements[c.schedule[pos]])
    return state


def backward_image(
    c: Circuit, seed: Mapping[str, complex], cut_from: str, cut_to: str, tsv: TwoStateVector
) -> Amplitudes:
    """Propagate a path vector adjointly backward between two cuts."""
    i0, i1 = tsv.cut_index(cut_from), tsv.cut_index(cut_to)
    if i1 > i0:
        raise ValueError("cut_to follows cut_from")
    state: Amplitudes = dict(seed)
    for pos in range(i0 - 1, i1 - 1, -1):
        state = _backward_elem(state, c.elements[c.schedule[pos]])
    return state
