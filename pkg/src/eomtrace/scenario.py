"""Declarative scenario files for scans and sweeps.

One ``key = value`` pair per line, ``#`` comments.  Only ``config`` is
required; everything else has the reference defaults below.  Example::

    config = c
    epsilon = 0.01
    seed = 7
    scan_lo_ghz = -4.2
    scan_hi_ghz = 4.2

Note the reference scenarios use the Gaussian envelope: with a Lorentzian
envelope the 1/delta amplitude tails of the carrier interfere coherently
with the first-order sidebands a few GHz away and bury them, so sideband
spectroscopy of this apparatus needs the fast-decaying line shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .elements import EtalonSpec
from .experiments import FIG3_OMEGA, REFERENCE_CONFIGS, ScanConfig, build_reference
from .netlist import Circuit
from .state import SpectralEnvelope


@dataclass
class Scenario:
    config: str = ""
    m: float = 0.025
    epsilon: float = 0.0
    outer_phase: float = 0.0
    pzt_phase: float = 0.0
    order: int = 3
    envelope_shape: str = "gaussian"
    envelope_fwhm_mhz: float = 315.0
    etalon_linewidth_mhz: float = 100.0
    etalon_fsr_ghz: float = 8.0
    etalon_setting_ghz: float = FIG3_OMEGA  # parked etalon for phase sweeps
    scan_lo_ghz: float = -4.2
    scan_hi_ghz: float = 4.2
    scan_step_ghz: float = 0.02
    photons_per_point: int = 4_000_000_000
    seed: int = 1
    dark: float = 0.0
    ksigma: float = 5.0
    phase_points: int = 33

    def circuit(self) -> Circuit:
        return build_reference(
            self.config,
            m=self.m,
            epsilon=self.epsilon,
            outer_phase=self.outer_phase,
            pzt_phase=self.pzt_phase,
            order=self.order,
        )

    def etalon(self) -> EtalonSpec:
        return EtalonSpec(
            linewidth_mhz=self.etalon_linewidth_mhz,
            fsr_ghz=self.etalon_fsr_ghz,
            setting_ghz=self.etalon_setting_ghz,
        )

    def envelope(self) -> SpectralEnvelope:
        return SpectralEnvelope(
            shape=self.envelope_shape, fwhm_mhz=self.envelope_fwhm_mhz
        )

    def scan(self) -> ScanConfig:
        return ScanConfig(
            lo_ghz=self.scan_lo_ghz,
            hi_ghz=self.scan_hi_ghz,
            step_ghz=self.scan_step_ghz,
            photons_per_point=self.photons_per_point,
            seed=self.seed,
            dark=self.dark,
        )

    def resolved(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(Scenario)}


_FIELD_TYPES = {f.name: f.type for f in fields(Scenario)}


def parse_scenario(text: str) -> tuple[Scenario | None, list[str]]:
    """Parse scenario text; returns (scenario, problems keyed by line/key)."""
    problems: list[str] = []
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected key = value, got {line!r}")
            continue
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _FIELD_TYPES:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in values:
            problems.append(f"line {lineno}: duplicate key {key!r}")
            continue
        kind = _FIELD_TYPES[key]
        try:
            if kind == "int":
                values[key] = int(val)
            elif kind == "float":
                values[key] = float(val)
            else:
                values[key] = val
        except ValueError:
            problems.append(f"line {lineno}: bad value for {key!r}: {val!r}")
    if "config" not in values:
        problems.append("config: missing required key")
    elif values["config"] not in REFERENCE_CONFIGS:
        problems.append(
            f"config: must be one of {', '.join(REFERENCE_CONFIGS)}, "
            f"got {values['config']!r}"
        )
    if problems:
        return None, problems
    scn = Scenario(**values)
    for key, low in (("m", 0.0), ("scan_step_ghz", 1e-12), ("photons_per_point", 1)):
        if getattr(scn, key) < low:
            problems.append(f"{key}: must be >= {low}")
    if scn.envelope_shape not in ("gaussian", "lorentzian"):
        problems.append(f"envelope_shape: unknown shape {scn.envelope_shape!r}")
    if scn.scan_hi_ghz <= scn.scan_lo_ghz:
        problems.append("scan_hi_ghz: must exceed scan_lo_ghz")
    if problems:
        return None, problems
    return scn, []


def format_scenario(scn: Scenario) -> str:
    lines = [f"{k} = {v!r}" if isinstance(v, str) else f"{k} = {v}"
             for k, v in scn.resolved().items()]
    return "\n".join(lines) + "\n"
