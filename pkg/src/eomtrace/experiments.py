"""Reference interferometer builds, spectral scans and peak analysis.

The reference apparatus is a nested two-arm interferometer: a first splitter
(1:2) feeds an outer arm C and an inner two-arm interferometer (arms A and B
behind a 50/50), whose output F recombines with C on a final 2:1 splitter
into the detection port D.  Every section carries its own modulator
(A/B/C/E/F at 2.8/1.6/2.1/1.0/3.4 GHz), so the frequency of a sideband peak
identifies the section the photon crossed.  Configurations:

* ``a``  - inner interferometer constructive toward F,
* ``b``  - inner interferometer destructive toward F,
* ``c``  - as ``b`` with the outer arm blocked after its modulator,
* ``fig3`` - a plain two-arm interferometer with equally driven 2.1 GHz
  modulators in both arms (coherence check on the shifted components).

A spectral scan sweeps the etalon setting nu and records the expected
detection probability p(nu) = integral S(omega) T(omega - nu) d omega plus
Poisson counts.  Because the etalon is Lorentzian, the carrier leaks a
t ail background of order 2.5e-3 under every sideband position, orders of
magnitude above the first-order peaks (~3e-6); the scan therefore also
stores the expected off-peak background per point (the same integral with
the modes local to the point's window removed), and peak decisions test the
counts against that template scaled by a median fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping

import numpy as np

from .elements import EtalonSpec, etalon_profile
from .netlist import Circuit, parse_netlist, propagate
from .state import SpectralEnvelope, carrier_state
from .tsvf import (
    ProjectorSpec,
    TwoStateVector,
    WeakValueReport,
    backward_image,
    forward_image,
    tsvf_trajectory,
    two_state,
    weak_value,
)

REFERENCE_OMEGAS = {"A": 2.8, "B": 1.6, "C": 2.1, "E": 1.0, "F": 3.4}
FIG3_OMEGA = 2.1

REFERENCE_CONFIGS = ("a", "b", "c", "fig3")

# The bare splitter convention sends a zero-phase two-arm interferometer to
# the cross port, so "tuned constructive" means an extra pi on one arm.
_CONSTRUCTIVE = math.pi


def reference_netlist_text(
    config: str,
    m: float = 0.025,
    epsilon: float = 0.0,
    outer_phase: float = 0.0,
    pzt_phase: float = 0.0,
    order: int = 3,
) -> str:
    """Netlist source for a reference configuration.

    ``outer_phase`` and the inner tuning are offsets from the constructive
    point; ``epsilon`` is the small inner-arm imperfection that regularises
    orthogonal post-selection in configurations b and c.
    """
    if config not in REFERENCE_CONFIGS:
        raise ValueError(f"unknown configuration {config!r}")
    if config == "fig3":
        return "\n".join(
            [
                "# twin-modulator coherence check: equal drives in both arms",
                "source src",
                "bs bsa in=src out=P,Q r=0.5",
                f"eom M1 wire=P omega_ghz={FIG3_OMEGA!r} depth={m!r} order={order}",
                f"eom M2 wire=Q omega_ghz={FIG3_OMEGA!r} depth={m!r} order={order}",
                f"phase pzt wire=Q phi={pzt_phase!r}",
                "bs bsb in=P,Q out=D,G r=0.5",
                "detect D",
                "",
            ]
        )
    tune = _CONSTRUCTIVE if config == "a" else 0.0
    om = REFERENCE_OMEGAS
    lines = [
        f"# nested interferometer, configuration {config}",
        "source src",
        "bs bs1 in=src out=C,E ratio=1:2",
        f"phase outer wire=C phi={(_CONSTRUCTIVE + outer_phase)!r}",
        f"eom C wire=C omega_ghz={om['C']!r} depth={m!r} order={order}",
        f"eom E wire=E omega_ghz={om['E']!r} depth={m!r} order={order}",
        "bs bs2 in=E out=A,B r=0.5",
        f"eom A wire=A omega_ghz={om['A']!r} depth={m!r} order={order}",
        f"eom B wire=B omega_ghz={om['B']!r} depth={m!r} order={order}",
        f"phase tune wire=B phi={tune!r}",
        f"phase eps wire=B phi={epsilon!r}",
    ]
    if config == "c":
        lines.append("block blockC wire=C")
    lines += [
        "bs bs3 in=A,B out=F,G r=0.5",
        f"eom F wire=F omega_ghz={om['F']!r} depth={m!r} order={order}",
        "bs bs4 in=C,F out=D,H ratio=2:1",
        "detect D",
        "",
    ]
    return "\n".join(lines)


def build_reference(config: str, **params) -> Circuit:
    """Instantiate a reference configuration (see reference_netlist_text)."""
    result = parse_netlist(reference_netlist_text(config, **params))
    assert result.circuit is not None, result.diagnostics
    return result.circuit


MID_CUT = "before:bs3"


def reference_projectors(tsv: TwoStateVector) -> dict[str, ProjectorSpec]:
    """Path projectors of the nested reference circuit at the mid cut.

    A, B, C are wire projectors.  E is the rank-1 projector onto the forward
    image of the inner-interferometer feed at the mid cut, F onto the
    backward image of the inner output; built from the circuit itself, they
    track any arm phases, which is what keeps their weak values pinned at
    unity under blocked-arm post-selection for every imperfection value.
    """
    c = tsv.circuit
    projs = {
        "A": ProjectorSpec.diagonal(MID_CUT, {"A"}, label="A"),
        "B": ProjectorSpec.diagonal(MID_CUT, {"B"}, label="B"),
        "C": ProjectorSpec.diagonal(MID_CUT, {"C"}, label="C"),
    }
    e_img = forward_image(c, {"E": 1.0 + 0.0j}, "after:bs1", MID_CUT, tsv)
    projs["E"] = ProjectorSpec.rank1(MID_CUT, e_img, label="E")
    f_img = backward_image(c, {"F": 1.0 + 0.0j}, "after:bs3", MID_CUT, tsv)
    projs["F"] = ProjectorSpec.rank1(MID_CUT, f_img, label="F")
    return projs


def reference_weak_values(
    config: str, epsilon: float = 0.0, **params
) -> dict[str, WeakValueReport]:
    """Weak values of the A/B/C/E/F projectors at the detection port."""
    c = build_reference(config, epsilon=epsilon, **params)
    tsv = two_state(c, "D")
    return {
        label: replace_epsilon(weak_value(tsv, p), epsilon)
        for label, p in reference_projectors(tsv).items()
    }


def replace_epsilon(rep: WeakValueReport, epsilon: float) -> WeakValueReport:
    return WeakValueReport(
        projector=rep.projector,
        value=rep.value,
        divergent=rep.divergent,
        epsilon=epsilon,
    )


def reference_weak_value_family(
    config: str, label: str, **params
) -> Callable[[float], WeakValueReport]:
    """epsilon -> weak value of one reference projector, for scaling fits."""

    def family(epsilon: float) -> WeakValueReport:
        return reference_weak_values(config, epsilon=epsilon, **params)[label]

    return family


def reference_trajectory_eoms(config: str, eta: float = 1e-6) -> frozenset[str]:
    """Modulators on the trajectory of the idealised (epsilon = 0) circuit."""
    c = build_reference(config, epsilon=0.0)
    tsv = two_state(c, "D")
    wires = tsvf_trajectory(tsv, eta)
    return frozenset(
        eid for eid, e in _eoms_by_id(c).items() if e.wire in wires
    )


def _eoms_by_id(c: Circuit):
    from .elements import EomSpec

    return {e.id: e for e in c.elements if isinstance(e, EomSpec)}


# ---------------------------------------------------------------------------
# Spectral scans


@dataclass(frozen=True)
class ScanConfig:
    """Etalon sweep grid and counting statistics.

    ``photons_per_point`` is sized so that the weakest first-order sideband
    peaks of configuration a (weak value 1/4, expected peak probability
    ~3e-6) carry >= 100 expected counts and clear a 5 sigma test against the
    shot noise of the carrier's etalon-tail background, while the
    imperfection-induced second-order peaks of configurations b/c stay below
    threshold through a 10x statistics increase.
    """

    lo_ghz: float = -4.2
    hi_ghz: float = 4.2
    step_ghz: float = 0.02
    photons_per_point: int = 4_000_000_000
    seed: int = 1
    dark: float = 0.0  # dark-count probability per gate
    window_linewidths: float = 3.0  # exclusion half-width, etalon linewidths

    def __post_init__(self):
        if self.step_ghz <= 0:
            raise ValueError("scan step must be positive")
        if self.photons_per_point < 1:
            raise ValueError("photons_per_point must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.dark < 0:
            raise ValueError("dark-count probability must be non-negative")

    def grid(self) -> np.ndarray:
        n = int(round((self.hi_ghz - self.lo_ghz) / self.step_ghz))
        return self.lo_ghz + self.step_ghz * np.arange(n + 1)


@dataclass(eq=False)
class SpectralScan:
    """Etalon-setting sweep: expected probabilities, background and counts."""

    detunings: np.ndarray
    expected_p: np.ndarray
    expected_bg: np.ndarray  # off-window leakage template per point
    counts: np.ndarray
    config: ScanConfig
    etalon: EtalonSpec
    envelope: SpectralEnvelope
    registry: dict  # eom id -> omega_ghz
    detect_wire: str
    window_ghz: float

    def index_near(self, nu: float) -> int | None:
        if nu < self.config.lo_ghz - 1e-9 or nu > self.config.hi_ghz + 1e-9:
            return None
        i = int(round((nu - self.config.lo_ghz) / self.config.step_ghz))
        i = min(max(i, 0), len(self.detunings) - 1)
        if abs(self.detunings[i] - nu) > self.config.step_ghz / 2 + 1e-9:
            return None
        return i

    def positions_for(self, omega: float) -> list[int]:
        """Grid indices of the covered signed sideband positions."""
        idx = [self.index_near(s * omega) for s in (+1.0, -1.0)]
        return [i for i in idx if i is not None]

    def expected_peak_content(self, omega: float) -> float:
        """Noise-free peak content: expected p minus leakage at +/- omega."""
        pos = self.positions_for(omega)
        if not pos:
            raise ValueError(f"scan does not cover +/-{omega} GHz")
        return float(
            sum(self.expected_p[i] - self.expected_bg[i] for i in pos)
        )


def _dense_grid(shifts, env, etalon, scan_cfg):
    pad = 6.0 * env.fwhm_ghz if env.shape == "gaussian" else 60.0 * env.fwhm_ghz
    lo = min(min(shifts), scan_cfg.lo_ghz) - pad
    hi = max(max(shifts), scan_cfg.hi_ghz) + pad
    step = min(env.fwhm_ghz, etalon.linewidth_ghz) / 12.0
    n = int(math.ceil((hi - lo) / step))
    return lo + (hi - lo) * np.arange(n + 1) / n


def _coherent_density(modes, env, grid):
    field = np.zeros(grid.shape, dtype=complex)
    for shift, a in modes:
        field += a * env.amplitude(grid - shift)
    return np.abs(field) ** 2


# Scan-path rendering drops modes this far (relative) below the strongest
# one; their largest effect on any density point is a cross term of the same
# relative order, far inside the counting noise.
_RENDER_FLOOR = 1e-9


def run_spectrum_scan(
    c: Circuit,
    etalon: EtalonSpec,
    env: SpectralEnvelope,
    scan_cfg: ScanConfig,
    detect_wire: str | None = None,
) -> SpectralScan:
    """Sweep the etalon over the detection-port spectrum and draw counts.

    For every setting nu the expected probability is the etalon-weighted
    spectral density; counts are Poisson(N * (p + dark)) with an independent
    per-point stream derived from (seed, point index), so results do not
    depend on evaluation order.  The background column holds the same
    integral with the modes within one exclusion window of the point's
    nearest registered line removed; at points far from every registered
    line it equals the expected probability.
    """
    if detect_wire is None:
        if len(c.detect_wires) != 1:
            raise ValueError("circuit has several detect wires; pick one")
        detect_wire = c.detect_wires[0]
    out = propagate(c, carrier_state(c.source_wire))[detect_wire]
    freqs = c.eom_freqs()
    modes = out.modes_at(detect_wire, freqs)
    if modes:
        floor = _RENDER_FLOOR * max(abs(a) for _s, a in modes)
        modes = [(s, a) for s, a in modes if abs(a) >= floor]
    nus = scan_cfg.grid()
    window = scan_cfg.window_linewidths * etalon.linewidth_ghz

    registry = dict(freqs)
    centers = sorted({0.0} | {s * om for om in registry.values() for s in (1, -1)})

    if modes:
        shifts = [s for s, _a in modes]
        dense = _dense_grid(shifts, env, etalon, scan_cfg)
        s_full = _coherent_density(modes, env, dense)
        # T(omega - nu) rows per scan point, reused for full and background.
        t_rows = etalon_profile(
            dense[None, :] - nus[:, None], replace(etalon, setting_ghz=0.0)
        )
        p = np.trapezoid(t_rows * s_full[None, :], dense, axis=1)

        center_of = np.full(len(nus), np.nan)
        for j, nu in enumerate(nus):
            near = [cc for cc in centers if abs(cc - nu) <= window]
            if near:
                center_of[j] = min(near, key=lambda cc: abs(cc - nu))
        p_bg = p.copy()
        for cc in np.unique(center_of[~np.isnan(center_of)]):
            remote = [(s, a) for s, a in modes if abs(s - cc) > window]
            s_remote = _coherent_density(remote, env, dense)
            rows = np.where(center_of == cc)[0]
            p_bg[rows] = np.trapezoid(
                t_rows[rows] * s_remote[None, :], dense, axis=1
            )
    else:
        p = np.zeros(len(nus))
        p_bg = np.zeros(len(nus))

    n_phot = scan_cfg.photons_per_point
    lam = n_phot * (p + scan_cfg.dark)
    counts = np.empty(len(nus), dtype=np.int64)
    for j in range(len(nus)):
        rng = np.random.default_rng((scan_cfg.seed, j))
        counts[j] = rng.poisson(lam[j])

    return SpectralScan(
        detunings=nus,
        expected_p=p,
        expected_bg=p_bg,
        counts=counts,
        config=scan_cfg,
        etalon=etalon,
        envelope=env,
        registry=registry,
        detect_wire=detect_wire,
        window_ghz=window,
    )


# ---------------------------------------------------------------------------
# Peak detection and inferred weak values


@dataclass(frozen=True)
class PeakRow:
    eom_id: str
    omega_ghz: float
    excess_counts: float  # counts above the scaled background template
    significance: float   # excess / sqrt(baseline + counts)
    present: bool
    assessable: bool


@dataclass
class PeakReport:
    rows: dict[str, PeakRow]
    k_sigma: float
    beta: float  # fitted background scale

    @property
    def present_set(self) -> frozenset[str]:
        return frozenset(r.eom_id for r in self.rows.values() if r.present)

    @property
    def absent_set(self) -> frozenset[str]:
        return frozenset(
            r.eom_id for r in self.rows.values() if r.assessable and not r.present
        )


def detect_peaks(
    scan: SpectralScan,
    registry: Mapping[str, float] | None = None,
    k_sigma: float = 5.0,
) -> PeakReport:
    """Operational trajectory: which registered sidebands stick out.

    The background under each candidate peak is the scan's leakage template
    scaled by beta, the median of counts / template over all points outside
    every exclusion window (a robust one-parameter fit, beta ~ 1).  A peak is
    present when summed counts over its covered +/-Omega positions exceed
    the scaled background by k_sigma standard deviations, using the Poisson
    proxy sigma^2 = baseline + counts.  A modulator whose frequency the scan
    does not cover on either side is reported as not assessable.
    """
    if registry is None:
        registry = scan.registry
    n_phot = scan.config.photons_per_point

    off_window = scan.expected_bg == scan.expected_p
    template = n_phot * scan.expected_bg
    usable = off_window & (template >= 25.0)
    beta = (
        float(np.median(scan.counts[usable] / template[usable]))
        if np.any(usable)
        else 1.0
    )

    rows = {}
    for eid, omega in registry.items():
        pos = scan.positions_for(omega)
        if not pos:
            rows[eid] = PeakRow(eid, omega, 0.0, 0.0, False, False)
            continue
        baseline = float(beta * sum(template[i] for i in pos))
        counts = float(sum(scan.counts[i] for i in pos))
        excess = counts - baseline
        sigma = math.sqrt(max(baseline + counts, 1.0))
        significance = excess / sigma
        rows[eid] = PeakRow(
            eid, omega, excess, significance, bool(significance >= k_sigma), True
        )
    return PeakReport(rows=rows, k_sigma=k_sigma, beta=beta)


@dataclass(frozen=True)
class InferredWeakValue:
    magnitude: float | None
    sideband_excess: float
    carrier_excess: float
    flagged: bool
    reason: str = ""


def infer_weak_value(scan: SpectralScan, eom_id: str, m: float) -> InferredWeakValue:
    """|W| estimate from sideband-to-carrier count ratio.

    |W| = (2/m) sqrt(sideband excess per side / carrier excess); both lines
    share the photon envelope, so the envelope-etalon overlap factors of the
    sideband and carrier peaks are equal and cancel in the ratio (the small
    residual bias from the exact harmonic coefficient is O(m^2)).
    """
    omega = scan.registry[eom_id]
    report = detect_peaks(scan)
    beta = report.beta
    n_phot = scan.config.photons_per_point

    i0 = scan.index_near(0.0)
    if i0 is None:
        return InferredWeakValue(None, 0.0, 0.0, True, "carrier not covered")
    carrier = float(scan.counts[i0]) - beta * n_phot * scan.expected_bg[i0]
    pos = scan.positions_for(omega)
    if not pos:
        return InferredWeakValue(None, 0.0, carrier, True, "sideband not covered")
    side = sum(
        float(scan.counts[i]) - beta * n_phot * scan.expected_bg[i] for i in pos
    ) / len(pos)
    if carrier <= 0.0:
        return InferredWeakValue(None, side, carrier, True, "zero carrier counts")
    if side < 0.0:
        side = 0.0
    return InferredWeakValue(
        (2.0 / m) * math.sqrt(side / carrier), side, carrier, False
    )


# ---------------------------------------------------------------------------
# Phase sweeps and fringe visibility


@dataclass(eq=False)
class PhaseSweep:
    phases: np.ndarray
    expected_p: np.ndarray
    counts: np.ndarray | None  # None in noise-free mode


def phase_sweep(
    build: Callable[[float], Circuit],
    phases: Iterable[float],
    etalon: EtalonSpec,
    env: SpectralEnvelope,
    photons_per_point: int | None = None,
    seed: int = 0,
    detect_wire: str | None = None,
) -> PhaseSweep:
    """Expected detection probability behind a parked etalon vs arm phase."""
    phases = np.asarray(list(phases), dtype=float)
    probs = np.empty(len(phases))
    for j, phi in enumerate(phases):
        c = build(float(phi))
        wire = detect_wire
        if wire is None:
            if len(c.detect_wires) != 1:
                raise ValueError("circuit has several detect wires; pick one")
            wire = c.detect_wires[0]
        out = propagate(c, carrier_state(c.source_wire))[wire]
        modes = out.modes_at(wire, c.eom_freqs())
        if not modes:
            probs[j] = 0.0
            continue
        shifts = [s for s, _a in modes]
        pad = 6.0 * env.fwhm_ghz if env.shape == "gaussian" else 60.0 * env.fwhm_ghz
        step = min(env.fwhm_ghz, etalon.linewidth_ghz) / 12.0
        lo, hi = min(shifts) - pad, max(shifts) + pad
        n = int(math.ceil((hi - lo) / step))
        dense = lo + (hi - lo) * np.arange(n + 1) / n
        s_dense = _coherent_density(modes, env, dense)
        probs[j] = float(
            np.trapezoid(s_dense * etalon_profile(dense, etalon), dense)
        )
    counts = None
    if photons_per_point is not None:
        counts = np.empty(len(phases), dtype=np.int64)
        for j in range(len(phases)):
            rng = np.random.default_rng((seed, j))
            counts[j] = rng.poisson(photons_per_point * probs[j])
    return PhaseSweep(phases=phases, expected_p=probs, counts=counts)


@dataclass(frozen=True)
class VisibilityReport:
    value: float | None
    mode: str  # "expected" or "counts"
    flagged: bool
    reason: str = ""


def visibility(sweep: PhaseSweep) -> VisibilityReport:
    """Fringe visibility (max - min) / (max + min) of a phase sweep.

    Needs at least 8 points spanning a full turn.  In counts mode a
    sinusoid a + b cos(phi) + c sin(phi) is fitted least-squares and the
    visibility is sqrt(b^2 + c^2) / a.  An all-zero sweep has no fringe and
    is flagged instead of reported.
    """
    ph = sweep.phases
    if len(ph) < 8 or (ph.max() - ph.min()) < 2.0 * math.pi - 1e-9:
        raise ValueError("need >= 8 phase points covering >= 2 pi")
    if sweep.counts is None:
        hi, lo = float(sweep.expected_p.max()), float(sweep.expected_p.min())
        if hi <= 0.0:
            return VisibilityReport(None, "expected", True, "all-zero sweep")
        return VisibilityReport((hi - lo) / (hi + lo), "expected", False)
    y = sweep.counts.astype(float)
    if not np.any(y > 0):
        return VisibilityReport(None, "counts", True, "all-zero sweep")
    design = np.column_stack([np.ones_like(ph), np.cos(ph), np.sin(ph)])
    a, b, cc = np.linalg.lstsq(design, y, rcond=None)[0]
    if a <= 0.0:
        return VisibilityReport(None, "counts", True, "non-positive fitted offset")
    return VisibilityReport(math.hypot(b, cc) / a, "counts", False)
