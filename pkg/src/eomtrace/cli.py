"""Command-line front end: check netlists, run scans, run two-state analysis.

Exit codes: 0 ok, 2 validation failure, 3 I/O failure, 4 scenario schema
failure.  Every result-producing command writes CSV and JSON side by side
(numeric fields agree exactly), renders a matplotlib figure next to them
unless --no-plot is given, and drops a manifest recording inputs, resolved
parameters, seed and output digests; re-running the same command reproduces
the delimited outputs byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    build_reference,
    detect_peaks,
    infer_weak_value,
    phase_sweep,
    reference_projectors,
    reference_weak_value_family,
    run_spectrum_scan,
    visibility,
)
from .netlist import parse_netlist
from .scenario import Scenario, parse_scenario
from .tsvf import tsvf_trajectory, two_state, weak_value, weak_value_scaling

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_SCHEMA = 4


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(prefix: Path, command, inputs, parameters, seed, outputs):
    manifest = {
        "tool": "eomtrace",
        "version": __version__,
        "command": command,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "parameters": parameters,
        "seed": seed,
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    path = prefix.with_suffix(".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _json_complex(z) -> dict:
    return {"re": z.real, "im": z.imag, "magnitude": abs(z)}


def cmd_check(args) -> int:
    try:
        text = _read(args.netlist)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    result = parse_netlist(text)
    for d in result.diagnostics:
        print(str(d), file=sys.stderr)
    if result.circuit is None:
        return EXIT_VALIDATION
    print(
        f"{args.netlist}: ok "
        f"({len(result.circuit.elements)} elements, "
        f"{len(result.circuit.eom_registry)} EOMs, "
        f"detect {', '.join(result.circuit.detect_wires)})"
    )
    return EXIT_OK


def _load_scenario(path: str) -> tuple[Scenario | None, int]:
    try:
        text = _read(path)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_IO
    scn, problems = parse_scenario(text)
    if scn is None:
        for p in problems:
            print(f"{path}: {p}", file=sys.stderr)
        return None, EXIT_SCHEMA
    return scn, EXIT_OK


def _scan_rows(scan) -> list[tuple]:
    return [
        (float(d), float(p), int(k))
        for d, p, k in zip(scan.detunings, scan.expected_p, scan.counts)
    ]


def cmd_scan(args) -> int:
    scn, code = _load_scenario(args.scenario)
    if scn is None:
        return code
    if args.seed is not None:
        scn.seed = args.seed
    if args.ksigma is not None:
        scn.ksigma = args.ksigma
    prefix = Path(args.out) if args.out else Path(args.scenario).with_suffix("")
    prefix.parent.mkdir(parents=True, exist_ok=True)
    outputs = []

    if args.sweep_phase:
        if scn.config != "fig3":
            print("error: --sweep-phase needs a fig3 scenario", file=sys.stderr)
            return EXIT_SCHEMA
        phases = np.linspace(0.0, 2.0 * np.pi, scn.phase_points)
        sweep = phase_sweep(
            lambda phi: build_reference(
                "fig3", m=scn.m, pzt_phase=phi, order=scn.order
            ),
            phases,
            scn.etalon(),
            scn.envelope(),
        )
        vis = visibility(sweep)
        csv_path = prefix.with_suffix(".csv")
        with csv_path.open("w") as fh:
            fh.write("phase_rad,expected_p\n")
            for ph, p in zip(sweep.phases, sweep.expected_p):
                fh.write(f"{float(ph)!r},{float(p)!r}\n")
        payload = {
            "scenario": scn.resolved(),
            "sweep": [
                {"phase_rad": float(ph), "expected_p": float(p)}
                for ph, p in zip(sweep.phases, sweep.expected_p)
            ],
            "visibility": {
                "value": vis.value,
                "mode": vis.mode,
                "flagged": vis.flagged,
                "reason": vis.reason,
            },
        }
        json_path = prefix.with_suffix(".json")
        json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        outputs += [csv_path, json_path]
        if not args.no_plot:
            outputs.append(_plot_sweep(sweep, vis, prefix))
        _write_manifest(
            prefix, ["scan", "--sweep-phase"], [args.scenario],
            scn.resolved(), scn.seed, outputs,
        )
        if vis.value is not None:
            print(f"visibility: {vis.value:.6f} ({vis.mode} mode)")
        else:
            print(f"visibility undefined: {vis.reason}")
        return EXIT_OK

    circuit = scn.circuit()
    scan = run_spectrum_scan(circuit, scn.etalon(), scn.envelope(), scn.scan())
    peaks = detect_peaks(scan, k_sigma=scn.ksigma)

    csv_path = prefix.with_suffix(".csv")
    with csv_path.open("w") as fh:
        fh.write("detuning_ghz,expected_p,counts\n")
        for d, p, k in _scan_rows(scan):
            fh.write(f"{d!r},{p!r},{k}\n")
    inferred = {}
    for eid in sorted(scan.registry):
        est = infer_weak_value(scan, eid, scn.m)
        inferred[eid] = {
            "magnitude": est.magnitude,
            "flagged": est.flagged,
            "reason": est.reason,
        }
    payload = {
        "scenario": scn.resolved(),
        "scan": [
            {"detuning_ghz": d, "expected_p": p, "counts": k}
            for d, p, k in _scan_rows(scan)
        ],
        "peaks": {
            eid: {
                "omega_ghz": row.omega_ghz,
                "excess_counts": row.excess_counts,
                "significance": row.significance,
                "present": row.present,
                "assessable": row.assessable,
            }
            for eid, row in sorted(peaks.rows.items())
        },
        "present": sorted(peaks.present_set),
        "inferred_weak_values": inferred,
        "background_scale_beta": peaks.beta,
    }
    json_path = prefix.with_suffix(".json")
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    outputs += [csv_path, json_path]
    if not args.no_plot:
        outputs.append(_plot_scan(scan, peaks, prefix))
    _write_manifest(
        prefix, ["scan"], [args.scenario], scn.resolved(), scn.seed, outputs
    )
    print(f"present peaks: {', '.join(sorted(peaks.present_set)) or '(none)'}")
    for p in outputs:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_tsvf(args) -> int:
    if args.config:
        circuit = build_reference(args.config, epsilon=args.epsilon)
        postselect = args.postselect or "D"
    else:
        if not args.netlist:
            print("error: give a netlist path or --config", file=sys.stderr)
            return EXIT_VALIDATION
        try:
            text = _read(args.netlist)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        result = parse_netlist(text)
        for d in result.diagnostics:
            print(str(d), file=sys.stderr)
        if result.circuit is None:
            return EXIT_VALIDATION
        circuit = result.circuit
        postselect = args.postselect or (
            circuit.detect_wires[0] if len(circuit.detect_wires) == 1 else None
        )
        if postselect is None:
            print("error: several detect wires; use --postselect", file=sys.stderr)
            return EXIT_VALIDATION

    tsv = two_state(circuit, postselect)
    trajectory = sorted(tsvf_trajectory(tsv))

    weak_values = {}
    if args.config and args.config != "fig3":
        for label, proj in sorted(reference_projectors(tsv).items()):
            rep = weak_value(tsv, proj)
            weak_values[label] = (
                {"divergent": True}
                if rep.divergent
                else {"divergent": False, **_json_complex(rep.value)}
            )
    else:
        # Wire projectors at each wire's own cut.
        for w in sorted(circuit.wires):
            num = np.conj(tsv.wire_backward[w]) * tsv.wire_forward[w]
            if abs(tsv.overlap) <= 1e-15:
                weak_values[w] = {"divergent": True}
            else:
                weak_values[w] = {
                    "divergent": False,
                    **_json_complex(num / tsv.overlap),
                }

    payload = {
        "postselect": postselect,
        "overlap": _json_complex(tsv.overlap),
        "trajectory": trajectory,
        "weak_values": weak_values,
    }
    scaling_curves = None
    if args.epsilon_sweep:
        if not args.config or args.config == "fig3":
            print("error: --epsilon-sweep needs --config a|b|c", file=sys.stderr)
            return EXIT_VALIDATION
        lo, hi, count = args.epsilon_sweep
        grid = np.logspace(np.log10(lo), np.log10(hi), int(count))
        exponents = {}
        scaling_curves = {}
        for label in ("A", "B", "C", "E", "F"):
            family = reference_weak_value_family(args.config, label)
            mags = []
            for e in grid:
                rep = family(float(e))
                mags.append(None if rep.divergent else abs(rep.value))
            fit = weak_value_scaling(family, grid)
            exponents[label] = {
                "slope": fit.slope,
                "n_used": fit.n_used,
                "identically_zero": fit.identically_zero,
            }
            scaling_curves[label] = mags
        payload["scaling"] = exponents
        payload["epsilon_grid"] = [float(e) for e in grid]

    prefix = Path(args.out) if args.out else Path("tsvf_report")
    prefix.parent.mkdir(parents=True, exist_ok=True)
    json_path = prefix.with_suffix(".json")
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    outputs = [json_path]
    if args.epsilon_sweep and not args.no_plot:
        outputs.append(
            _plot_scaling(payload["epsilon_grid"], scaling_curves, prefix)
        )
    inputs = [args.netlist] if args.netlist else []
    _write_manifest(
        prefix,
        ["tsvf"],
        inputs,
        {"config": args.config, "epsilon": args.epsilon, "postselect": postselect},
        0,
        outputs,
    )
    print(f"trajectory: {{{', '.join(trajectory)}}}")
    for p in outputs:
        print(f"wrote {p}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Figures (lazy matplotlib so library use never imports a plotting stack)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _plot_scan(scan, peaks, prefix: Path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(9, 4.5))
    n = scan.config.photons_per_point
    ax.semilogy(scan.detunings, np.maximum(scan.counts, 0.5), ".", ms=3,
                color="#1f77b4", label="counts")
    ax.semilogy(scan.detunings, np.maximum(n * scan.expected_p, 1e-2), "-",
                lw=0.8, color="#444444", label="expected")
    ax.semilogy(scan.detunings, np.maximum(n * scan.expected_bg, 1e-2), "--",
                lw=0.8, color="#999999", label="background template")
    top = scan.counts.max() * 1.5 if scan.counts.max() > 0 else 1.0
    for eid, row in sorted(peaks.rows.items()):
        color = "#2ca02c" if row.present else "#d62728"
        for s in (+1, -1):
            if scan.index_near(s * row.omega_ghz) is not None:
                ax.axvline(s * row.omega_ghz, color=color, lw=0.6, alpha=0.4)
        ax.annotate(eid, (row.omega_ghz, top), color=color, ha="center", fontsize=9)
    ax.set_xlabel("etalon setting (GHz from carrier)")
    ax.set_ylabel("counts per point")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    path = prefix.with_suffix(".png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _plot_sweep(sweep, vis, prefix: Path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(sweep.phases, sweep.expected_p, "o-", ms=3, lw=0.9)
    label = f"visibility = {vis.value:.4f}" if vis.value is not None else vis.reason
    ax.set_title(label, fontsize=10)
    ax.set_xlabel("arm phase (rad)")
    ax.set_ylabel("detection probability behind etalon")
    fig.tight_layout()
    path = prefix.with_suffix(".png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _plot_scaling(grid, curves, prefix: Path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, mags in sorted(curves.items()):
        xs = [g for g, v in zip(grid, mags) if v]
        ys = [v for v in mags if v]
        if xs:
            ax.loglog(xs, ys, "o-", ms=3, lw=0.9, label=label)
    ax.set_xlabel("inner-arm imperfection (rad)")
    ax.set_ylabel("|weak value|")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = prefix.with_suffix(".png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="eomtrace",
        description="Single-photon interferometer networks with "
        "phase-modulator path marking.",
    )
    ap.add_argument("--version", action="version", version=f"eomtrace {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="parse and validate a netlist")
    p_check.add_argument("netlist")
    p_check.set_defaults(func=cmd_check)

    p_scan = sub.add_parser("scan", help="run a scenario's spectral scan")
    p_scan.add_argument("scenario")
    p_scan.add_argument("--out", help="output path prefix (default: scenario name)")
    p_scan.add_argument("--seed", type=int, default=None)
    p_scan.add_argument("--ksigma", type=float, default=None)
    p_scan.add_argument("--sweep-phase", action="store_true",
                        help="fig3 only: sweep the arm phase behind a parked etalon")
    p_scan.add_argument("--no-plot", action="store_true")
    p_scan.set_defaults(func=cmd_scan)

    p_tsvf = sub.add_parser("tsvf", help="two-state trajectory and weak values")
    p_tsvf.add_argument("netlist", nargs="?", default=None)
    p_tsvf.add_argument("--config", choices=["a", "b", "c", "fig3"], default=None)
    p_tsvf.add_argument("--epsilon", type=float, default=0.0)
    p_tsvf.add_argument("--postselect", default=None)
    p_tsvf.add_argument("--epsilon-sweep", nargs=3, type=float, default=None,
                        metavar=("MIN", "MAX", "COUNT"))
    p_tsvf.add_argument("--out", default=None)
    p_tsvf.add_argument("--no-plot", action="store_true")
    p_tsvf.set_defaults(func=cmd_tsvf)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
