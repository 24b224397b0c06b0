"""Photon path-frequency state on a discrete sideband lattice.

A single photon crossing a network of electro-optic phase modulators is
described here in factored form: a slowly varying spectral envelope common to
all components, times a sparse map of complex amplitudes indexed by
(wire, sideband vector).  The sideband vector counts, per modulator, how many
modulation quanta the component has absorbed (positive order) or emitted
(negative order); its total frequency shift is the dot product with the
modulation frequencies.  The factorisation is exact as long as every element
acts uniformly across the photon bandwidth, i.e. bandwidth << all modulation
frequencies, which holds by orders of magnitude for the default parameters
(0.315 GHz bandwidth vs 1.0-3.4 GHz modulation).

All frequencies are detunings in GHz relative to the optical carrier; the
absolute carrier frequency is carried along only as a label.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

# Optical carrier, GHz.  Enters no arithmetic; detunings are relative to it.
CARRIER_GHZ = 340696.55

# Amplitudes below this magnitude are dropped from the sparse map.
DEFAULT_PRUNE = 1e-15

GHZ_PER_MHZ = 1e-3


@dataclass(frozen=True)
class SidebandVector:
    """Signed harmonic orders per modulator, zero entries omitted.

    Stored as a sorted tuple of (modulator id, order) pairs so instances are
    hashable and equality ignores entry order and explicit zeros.
    """

    entries: tuple[tuple[str, int], ...] = ()

    @staticmethod
    def of(orders: Mapping[str, int] | None = None, **kw: int) -> "SidebandVector":
        merged = dict(orders or {})
        merged.update(kw)
        items = tuple(sorted((k, int(n)) for k, n in merged.items() if n != 0))
        return SidebandVector(items)

    def order(self, eom_id: str) -> int:
        for k, n in self.entries:
            if k == eom_id:
                return n
        return 0

    def bumped(self, eom_id: str, delta: int) -> "SidebandVector":
        """Vector with the given modulator's order shifted by ``delta``."""
        d = dict(self.entries)
        d[eom_id] = d.get(eom_id, 0) + delta
        return SidebandVector.of(d)

    def as_dict(self) -> dict[str, int]:
        return dict(self.entries)

    def relabeled(self, mapping: Mapping[str, str]) -> "SidebandVector":
        return SidebandVector.of({mapping.get(k, k): n for k, n in self.entries})

    def __repr__(self) -> str:  # {A:+1,B:-2}; {} is the carrier
        inner = ",".join(f"{k}:{n:+d}" for k, n in self.entries)
        return "{" + inner + "}"


CARRIER = SidebandVector()


def total_shift(v: SidebandVector, eom_freqs: Mapping[str, float]) -> float:
    """Total frequency shift of a sideband vector, GHz: sum of n_i * Omega_i.

    Raises KeyError if the vector references a modulator with no registered
    frequency (a configuration error).
    """
    shift = 0.0
    for k, n in v.entries:
        if k not in eom_freqs:
            raise KeyError(f"no modulation frequency registered for EOM {k!r}")
        shift += n * eom_freqs[k]
    return shift


class PhotonState:
    """Sparse complex amplitude map over (wire, sideband vector) modes.

    Distinct sideband vectors are orthogonal modes regardless of accidental
    frequency coincidences; coincidences only matter when rendering a
    spectrum, where amplitudes are summed coherently.  Instances are treated
    as immutable; element actions return new states.
    """

    __slots__ = ("amplitudes", "reference_ghz", "prune_threshold")

    def __init__(
        self,
        amplitudes: Mapping[tuple[str, SidebandVector], complex] | None = None,
        reference_ghz: float = CARRIER_GHZ,
        prune_threshold: float = DEFAULT_PRUNE,
    ):
        pruned = {}
        for key, a in (amplitudes or {}).items():
            a = complex(a)
            if abs(a) >= prune_threshold:
                pruned[key] = a
        self.amplitudes = pruned
        self.reference_ghz = reference_ghz
        self.prune_threshold = prune_threshold

    def replace(self, amplitudes) -> "PhotonState":
        return PhotonState(amplitudes, self.reference_ghz, self.prune_threshold)

    def amplitude(self, wire: str, v: SidebandVector = CARRIER) -> complex:
        return self.amplitudes.get((wire, v), 0.0 + 0.0j)

    def wires(self) -> set[str]:
        return {w for (w, _v) in self.amplitudes}

    def restricted_to(self, wire: str) -> "PhotonState":
        return self.replace(
            {k: a for k, a in self.amplitudes.items() if k[0] == wire}
        )

    def norm_squared(self) -> float:
        return sum(abs(a) ** 2 for a in self.amplitudes.values())

    def modes_at(
        self, wire: str, eom_freqs: Mapping[str, float]
    ) -> list[tuple[float, complex]]:
        """(total shift, amplitude) for every stored mode on a wire."""
        return [
            (total_shift(v, eom_freqs), a)
            for (w, v), a in self.amplitudes.items()
            if w == wire
        ]

    def __repr__(self) -> str:
        parts = ", ".join(
            f"{w}{v!r}={a:.4g}" for (w, v), a in sorted(
                self.amplitudes.items(), key=lambda kv: (kv[0][0], kv[0][1].entries)
            )
        )
        return f"PhotonState({parts})"


def carrier_state(wire: str, amplitude: complex = 1.0 + 0.0j) -> PhotonState:
    """A photon in the unshifted carrier mode on a single wire."""
    return PhotonState({(wire, CARRIER): amplitude})


def norm_squared(s: PhotonState) -> float:
    """Sum of |amplitude|^2 over all stored modes."""
    return s.norm_squared()


@dataclass(frozen=True)
class SpectralEnvelope:
    """L2-normalised amplitude envelope of the photon wave packet.

    ``fwhm_mhz`` is the full width at half maximum of the *power* spectrum
    |E|^2.  The Lorentzian envelope is the causal single-pole amplitude
    sqrt(g/2pi) / (g/2 - i*delta) of a cavity-filtered photon (one-sided
    exponential decay in time); the Gaussian envelope is real.
    """

    shape: str = "lorentzian"
    fwhm_mhz: float = 315.0
    center_ghz: float = 0.0

    def __post_init__(self):
        if self.shape not in ("lorentzian", "gaussian"):
            raise ValueError(f"unknown envelope shape {self.shape!r}")
        if self.fwhm_mhz <= 0:
            raise ValueError("envelope fwhm must be positive")

    @property
    def fwhm_ghz(self) -> float:
        return self.fwhm_mhz * GHZ_PER_MHZ

    def amplitude(self, delta_ghz) -> np.ndarray:
        """Complex amplitude E(delta) on an array of detunings (GHz)."""
        x = np.asarray(delta_ghz, dtype=float) - self.center_ghz
        if self.shape == "gaussian":
            sigma = self.fwhm_ghz / (2.0 * np.sqrt(2.0 * np.log(2.0)))
            norm = (2.0 * np.pi * sigma**2) ** -0.25
            return norm * np.exp(-(x**2) / (4.0 * sigma**2)) + 0.0j
        g = self.fwhm_ghz
        return np.sqrt(g / (2.0 * np.pi)) / (g / 2.0 - 1.0j * x)

    def coherence_time_ns(self) -> float:
        return 1.0 / self.fwhm_ghz


@dataclass(eq=False)
class SpectralDensity:
    """Non-negative spectral density per GHz on a uniform detuning grid."""

    grid: np.ndarray
    values: np.ndarray

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.grid))

    def at(self, delta_ghz: float) -> float:
        return float(np.interp(delta_ghz, self.grid, self.values))


def detuning_grid(lo_ghz: float, hi_ghz: float, step_ghz: float) -> np.ndarray:
    if step_ghz <= 0:
        raise ValueError("grid step must be positive")
    n = int(round((hi_ghz - lo_ghz) / step_ghz))
    return lo_ghz + step_ghz * np.arange(n + 1)


def render_spectrum(
    s: PhotonState,
    wire: str,
    env: SpectralEnvelope,
    grid: np.ndarray,
    eom_freqs: Mapping[str, float],
) -> SpectralDensity:
    """Coherent spectral density at a wire: |sum_v a_v E(delta - shift_v)|^2.

    Sideband components of the one photon interfere whenever their total
    shifts bring their envelopes into overlap, so the amplitudes are summed
    before squaring.  An empty wire yields an all-zero density.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size >= 2:
        step = float(grid[1] - grid[0])
        if step > env.fwhm_ghz / 10.0:
            warnings.warn(
                f"grid step {step:g} GHz exceeds envelope fwhm/10 "
                f"({env.fwhm_ghz / 10:g} GHz); spectrum will be undersampled",
                stacklevel=2,
            )
    field_sum = np.zeros(grid.shape, dtype=complex)
    for shift, a in s.modes_at(wire, eom_freqs):
        field_sum += a * env.amplitude(grid - shift)
    return SpectralDensity(grid=grid, values=np.abs(field_sum) ** 2)
