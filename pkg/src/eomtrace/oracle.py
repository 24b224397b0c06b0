"""Brute-force time-domain reference simulation.

Instead of tracking a sideband lattice, this engine samples the photon
envelope on a time grid, multiplies in the exact modulation phase
exp(-i m sin(2 pi Omega (t - t0))) on every modulator wire (no harmonic
expansion), composes the same splitter/phase/block algebra pointwise in
time, and Fourier transforms to a dense frequency grid.  It exists to
validate the lattice engine and to derive expected values independently; it
is allowed to be slow.

The modulator drives are referenced to the envelope's temporal center t0,
which is what the lattice engine's zero drive phase means; with any other
reference the relative phases of different sidebands (and hence coherent
overlaps) would differ.  Propagation delays are ignored by both engines, so
they target the same model and any disagreement is implementation error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elements import BeamSplitterSpec, BlockSpec, EomSpec, PhaseShifterSpec
from .netlist import Circuit
from .state import SpectralDensity, SpectralEnvelope


class OracleError(RuntimeError):
    """Configuration cannot be simulated faithfully (e.g. Nyquist violation)."""


@dataclass(frozen=True)
class TimeDomainConfig:
    """Sampling window for the time-domain engine.

    The window must hold at least 20 coherence times of the envelope and the
    Nyquist frequency must clear the largest possible total sideband shift
    (sum of order * Omega over all modulators) plus five envelope widths.
    """

    envelope: SpectralEnvelope
    window_ns: float = 64.0
    samples: int = 32768
    keep_ghz: float | None = None  # restrict the output grid to +/- keep_ghz

    def __post_init__(self):
        if self.samples < 2 or self.samples & (self.samples - 1):
            raise ValueError("samples must be a power of two")
        if self.window_ns <= 0:
            raise ValueError("window must be positive")
        if self.window_ns < 20.0 * self.envelope.coherence_time_ns():
            raise ValueError(
                f"window {self.window_ns} ns is shorter than 20 coherence times "
                f"({20.0 * self.envelope.coherence_time_ns():.1f} ns)"
            )

    @property
    def dt_ns(self) -> float:
        return self.window_ns / self.samples

    @property
    def nyquist_ghz(self) -> float:
        return 0.5 / self.dt_ns


def _sampled_envelope(env: SpectralEnvelope, t: np.ndarray, t0: float) -> np.ndarray:
    """L2-normalised (sum |e|^2 dt = 1) time-domain envelope."""
    if env.shape == "gaussian":
        sigma_nu = env.fwhm_ghz / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        sigma_t = 1.0 / (4.0 * np.pi * sigma_nu)
        e = np.exp(-((t - t0) ** 2) / (4.0 * sigma_t**2)).astype(complex)
    else:  # one-sided exponential: causal decay of a cavity-filtered photon
        g = env.fwhm_ghz
        e = np.where(t >= t0, np.exp(-np.pi * g * (t - t0)), 0.0).astype(complex)
    if env.center_ghz:
        e = e * np.exp(2.0j * np.pi * env.center_ghz * (t - t0))
    e /= np.sqrt(np.sum(np.abs(e) ** 2) * (t[1] - t[0]))
    return e


def _max_total_shift(c: Circuit) -> float:
    return sum(
        e.order * e.omega_ghz for e in c.elements if isinstance(e, EomSpec)
    )


def time_domain_propagate(
    c: Circuit, cfg: TimeDomainConfig
) -> dict[str, SpectralDensity]:
    """Dense spectral density at every detect wire of the circuit."""
    env = cfg.envelope
    required = _max_total_shift(c) + 5.0 * env.fwhm_ghz
    if cfg.nyquist_ghz <= required:
        raise OracleError(
            f"Nyquist frequency {cfg.nyquist_ghz:.1f} GHz does not clear the "
            f"maximum sideband shift + 5 fwhm ({required:.1f} GHz); "
            "increase samples or shrink the window"
        )
    t = cfg.dt_ns * np.arange(cfg.samples)
    t0 = 0.0 if env.shape == "lorentzian" else cfg.window_ns / 2.0

    fields: dict[str, np.ndarray] = {
        c.source_wire: _sampled_envelope(env, t, t0)
    }
    zeros = np.zeros(cfg.samples, dtype=complex)
    for i in c.schedule:
        e = c.elements[i]
        if isinstance(e, BeamSplitterSpec):
            a1 = fields.pop(e.in_wires[0], zeros)
            a2 = fields.pop(e.in_wires[1], zeros) if len(e.in_wires) == 2 else zeros
            tt = np.sqrt(e.r)
            kk = 1.0j * np.sqrt(1.0 - e.r)
            fields[e.out_wires[0]] = tt * a1 + kk * a2
            fields[e.out_wires[1]] = kk * a1 + tt * a2
        elif isinstance(e, EomSpec):
            if e.wire in fields and e.depth:
                drive = np.sin(2.0 * np.pi * e.omega_ghz * (t - t0))
                fields[e.wire] = fields[e.wire] * np.exp(
                    -1.0j * e.sign * e.depth * drive
                )
        elif isinstance(e, PhaseShifterSpec):
            if e.wire in fields:
                fields[e.wire] = fields[e.wire] * np.exp(1.0j * e.phi)
        elif isinstance(e, BlockSpec):
            fields.pop(e.wire, None)

    freqs = np.fft.fftshift(np.fft.fftfreq(cfg.samples, d=cfg.dt_ns))
    keep = slice(None)
    if cfg.keep_ghz is not None:
        keep = np.abs(freqs) <= cfg.keep_ghz
    out = {}
    for w in c.detect_wires:
        if w in fields:
            spectrum = np.fft.fftshift(np.fft.fft(fields[w])) * cfg.dt_ns
            density = np.abs(spectrum) ** 2
        else:
            density = np.zeros(cfg.samples)
        out[w] = SpectralDensity(grid=freqs[keep].copy(), values=density[keep])
    return out


def compare(a: SpectralDensity, b: SpectralDensity, floor: float) -> float:
    """Max relative deviation over grid points where either density > floor.

    Densities on different grids are resampled onto the coarser one; grids
    that do not overlap are an error.  Returns 0.0 when nothing clears the
    floor.
    """
    if len(a.grid) == len(b.grid) and np.allclose(a.grid, b.grid):
        ga, va, vb = a.grid, a.values, b.values
    else:
        lo = max(a.grid[0], b.grid[0])
        hi = min(a.grid[-1], b.grid[-1])
        if lo >= hi:
            raise ValueError("spectral grids do not overlap")
        fine, coarse = (a, b) if len(a.grid) >= len(b.grid) else (b, a)
        mask = (coarse.grid >= lo) & (coarse.grid <= hi)
        ga = coarse.grid[mask]
        vc = coarse.values[mask]
        vf = np.interp(ga, fine.grid, fine.values)
        va, vb = (vc, vf) if coarse is a else (vf, vc)
    peak = np.maximum(va, vb)
    mask = peak > floor
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(va[mask] - vb[mask]) / peak[mask]))
