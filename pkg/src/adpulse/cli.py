"""Command-line front end.

Every command writes into ``--out``: ``config.json`` (normalized config, written
before any computation), the command's CSV/JSON results, ``run.log`` and
``manifest.json`` whose ``status`` moves from ``running`` to ``complete`` (or
``failed``). Outputs contain no timestamps, host data or worker counts, so a
rerun with the same config and seed is byte-identical.

Exit codes: 0 ok, 2 config error, 3 physics validity error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from . import config as cfgmod
from .config import ConfigError
from .ensemble import AdPulseSettings, EnsembleSettings, PulsePolSettings, run_ensemble, sample_clusters
from .floquet import find_avoided_crossing, spectroscopy
from .hamiltonian import (
    DOWN,
    ELECTRON_0,
    HostNitrogenSpec,
    NuclearSpinSpec,
    PhysicsError,
    SpinSystem,
    initial_state,
    nitrogen_state,
    nuclear_frequency,
    resonance_spacing,
)
from .protocols import (
    AdPulseBlock,
    LZParams,
    PulsePolBlock,
    SweepSchedule,
    TuningRule,
    flip_pair,
    high_az_rows,
    hyperfine_surface_scan,
    lz_prediction,
    pumped_polarization,
    region_violations,
    run_adpulse,
    run_hyperpolarization,
    run_pulsepol,
)
from .pulses import INSTANTANEOUS, Compiler, PulseShape, SequenceError, gaussian
from .readout import (
    AmbiguousAssignmentError,
    ResolutionError,
    extract_polarization,
    fid_spectrum,
    polarization,
    polarized_nuclear_state,
    simulate_ramsey_fid,
)
EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_RUNTIME = 0, 2, 3, 4
TWO_PI = 2 * math.pi


def code_version() -> str:
    """Hash of the package sources; recorded in every manifest."""
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def _dump(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


class RunDir:
    """Single collector for everything a command writes."""

    def __init__(self, out: Path, command: str, seed: int, snapshot: dict):
        self.out = out
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.seed = seed
        self.files: list[str] = []
        self.log_lines: list[str] = []
        _dump(self.out / "config.json", snapshot)
        self.config_hash = hashlib.sha256(json.dumps(snapshot, sort_keys=True).encode()).hexdigest()[:16]
        self._manifest("running")

    def _manifest(self, status: str, error: str | None = None, exit_code: int | None = None) -> None:
        doc = {
            "command": self.command,
            "seed": self.seed,
            "code_version": code_version(),
            "status": status,
            "outputs": sorted(self.files),
            "config_hash": self.config_hash,
        }
        if error is not None:
            doc["error"] = error
            doc["exit_code"] = exit_code
            doc["partial"] = True
        _dump(self.out / "manifest.json", doc)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def json(self, name: str, obj) -> None:
        _dump(self.path(name), obj)

    def log(self, msg: str) -> None:
        self.log_lines.append(msg)
        with open(self.out / "run.log", "w") as fh:
            fh.write("\n".join(self.log_lines) + "\n")

    def complete(self) -> None:
        self._manifest("complete")

    def fail(self, error: str, exit_code: int) -> None:
        self.log(f"error: {error}")
        self._manifest("failed", error, exit_code)


# builders ------------------------------------------------------------------------------


def section(cfg: dict, name: str) -> dict:
    if cfg.get(name) is None:
        raise ConfigError(f"this command needs a [{name}] section with its required keys")
    return cfg[name]


def build_system(cfg: dict) -> SpinSystem:
    s = cfg["system"]
    nuclei = [NuclearSpinSpec(n["a_x"], n["a_z"], TWO_PI * n["gamma_hz_per_t"]) for n in s["nuclei"]]
    nitrogen = None
    if s["nitrogen"] is not None:
        nitrogen = HostNitrogenSpec(s["nitrogen"]["a_parallel"], s["nitrogen"]["initial_state"])
    return SpinSystem(s["b0"], tuple(nuclei), nitrogen, s["frame"]).validate()


def build_shape(p: dict) -> PulseShape:
    if p["shape"] == "instantaneous":
        return INSTANTANEOUS
    return gaussian(p["duration"], p["slices"], p["truncation"])


def _first_resonance(sys: SpinSystem, k: int) -> float:
    if not sys.nuclei:
        raise ConfigError("a resonance-relative setting needs at least one nucleus")
    return resonance_spacing("pulsepol", nuclear_frequency(sys.nuclei[0], sys.b0), k)


def _reference_vector(sys: SpinSystem, k: int) -> np.ndarray:
    if sys.nuclei:
        v = flip_pair(k)[0]
        for _ in sys.nuclei[1:]:
            v = np.kron(v, DOWN)
    else:
        v = ELECTRON_0
    if sys.nitrogen is not None:
        v = np.kron(v, np.array([0, 1, 0], dtype=complex))
    return v


# commands --------------------------------------------------------------------------------


def cmd_spectroscopy(cfg: dict, run: RunDir, workers: int, granularity: str) -> None:
    sys_ = build_system(cfg)
    c = section(cfg, "spectroscopy")
    if c["tau_min"] is not None and c["tau_max"] is not None:
        lo, hi = c["tau_min"], c["tau_max"]
    else:
        if not sys_.nuclei:
            raise ConfigError("spectroscopy without nuclei needs tau_min and tau_max")
        tau_r = resonance_spacing(c["protocol"], nuclear_frequency(sys_.nuclei[0], sys_.b0), c["k"])
        lo, hi = tau_r * (1 - c["window"]), tau_r * (1 + c["window"])
    if not 0 < lo < hi or c["points"] < 3:
        raise ConfigError("spectroscopy grid needs 0 < tau_min < tau_max and at least 3 points")
    taus = np.linspace(lo, hi, c["points"])
    shape = build_shape(c["pulse"])
    ref = _reference_vector(sys_, c["k"])
    spec = spectroscopy(sys_, c["protocol"], taus, ref, shape)
    spec.to_csv(run.path("spectrum.csv"))
    report: dict = {"tau_min_s": float(lo), "tau_max_s": float(hi), "points": int(c["points"]), "tracking_flags": spec.flags}
    coupled = any(n.a_x > 0 for n in sys_.nuclei)
    if not coupled:
        report["crossings"] = "none"
    else:
        partner = flip_pair(c["k"])[1]
        for _ in sys_.nuclei[1:]:
            partner = np.kron(partner, DOWN)
        if sys_.nitrogen is not None:
            partner = np.kron(partner, np.array([0, 1, 0], dtype=complex))
        a = spec.branch_of(ref, 0)
        b = spec.branch_of(partner, 0)
        cross = find_avoided_crossing(spec, (a, b))
        tau_analytic = resonance_spacing(c["protocol"], nuclear_frequency(sys_.nuclei[0], sys_.b0), c["k"])
        report["crossings"] = [
            {
                "tau_s": cross.tau,
                "gap_rad": cross.gap,
                "at_boundary": cross.at_boundary,
                "tau_analytic_s": tau_analytic,
                "relative_offset": (cross.tau - tau_analytic) / tau_analytic,
                "branches": [a, b],
            }
        ]
        run.log(f"crossing at {cross.tau!r} s, gap {cross.gap!r} rad")
    run.json("crossings.json", report)


def _sweep_schedule(c: dict, tau_r: float | None, delta_tau: float) -> SweepSchedule:
    if c["tau_0"] is not None and c["tau_f"] is not None:
        return SweepSchedule(c["tau_0"], c["tau_f"], delta_tau, c["n_p"], c["k"])
    if tau_r is None or c["span"] is None:
        raise ConfigError("sweep needs tau_0/tau_f, or span (with at least one nucleus)")
    if c["start_offset"] is not None:
        t0 = tau_r + c["start_offset"]
        return SweepSchedule(t0, t0 + c["span"], delta_tau, c["n_p"], c["k"])
    return SweepSchedule.symmetric(tau_r, c["span"], delta_tau, c["n_p"], c["k"])


def cmd_sweep(cfg: dict, run: RunDir, workers: int, granularity: str) -> None:
    sys_ = build_system(cfg)
    c = section(cfg, "sweep")
    tau_r = _first_resonance(sys_, c["k"]) if sys_.nuclei else None
    scheds = [_sweep_schedule(c, tau_r, dt) for dt in c["delta_tau"]]
    shape = build_shape(c["pulse"])
    rho_0 = initial_state(sys_, c["initial"]["electron"], c["initial"]["nuclear"])
    comp = Compiler(sys_)
    runs = []
    for i, sched in enumerate(scheds):
        tr = run_adpulse(sys_, rho_0, sched, shape, comp, granularity=granularity)
        tr.to_csv(run.path(f"trace_{i}.csv"))
        entry = {
            "delta_tau_s": sched.delta_tau,
            "tau_0_s": sched.tau_0,
            "tau_f_s": sched.tau_f,
            "steps": sched.m + 1,
            "duration_s": sched.duration,
            "final_P0": float(tr.electron_population[-1]),
            "final_polarization": [float(v) for v in tr.final_polarization],
            "final_pumped_polarization": [pumped_polarization(tr.final_state, sys_, n, sched.k) for n in range(sys_.n_nuclei)],
            "flags": tr.flags,
        }
        if sys_.nuclei:
            params = LZParams.from_spec(sys_.nuclei[0], sys_.b0, sched)
            lz = lz_prediction(params, sched, sched.taus)
            with open(run.path(f"lz_{i}.csv"), "w") as fh:
                fh.write("tau_s,P0_lz\n")
                for tau, p in zip(sched.taus, np.atleast_1d(lz)):
                    fh.write(f"{float(tau)!r},{float(p)!r}\n")
            entry["gamma_0"] = params.gamma_0
            entry["final_P0_lz"] = float(np.atleast_1d(lz)[-1])
        runs.append(entry)
        run.log(f"sweep {i}: delta_tau {sched.delta_tau!r} s, final P0 {entry['final_P0']!r}")
    run.json("summary.json", {"runs": runs, "tau_r_s": tau_r})


def cmd_pulsepol(cfg: dict, run: RunDir, workers: int, granularity: str) -> None:
    sys_ = build_system(cfg)
    c = section(cfg, "pulsepol")
    tau = (c["tau"] if c["tau"] is not None else _first_resonance(sys_, c["k"])) + c["tau_offset"]
    shape = build_shape(c["pulse"])
    rho_0 = initial_state(sys_, c["initial"]["electron"], c["initial"]["nuclear"])
    tr = run_pulsepol(sys_, rho_0, tau, c["n_cycles"], shape)
    tr.to_csv(run.path("trace.csv"))
    pol = tr.polarization[:, 0] if sys_.nuclei else np.zeros(len(tr.times))
    run.json(
        "summary.json",
        {
            "tau_s": tau,
            "n_cycles": c["n_cycles"],
            "final_polarization": [float(v) for v in tr.final_polarization],
            "max_abs_polarization": float(np.max(np.abs(pol))) if len(pol) else 0.0,
            "period_of_max": int(np.argmax(np.abs(pol))) + 1 if len(pol) else 0,
        },
    )
    run.log(f"pulsepol at tau {tau!r} s for {c['n_cycles']} periods")


def cmd_scan(cfg: dict, run: RunDir, workers: int, granularity: str) -> None:
    s = cfg["system"]
    c = section(cfg, "scan")
    ax = np.linspace(c["a_x_min"], c["a_x_max"], c["a_x_points"])
    az = np.linspace(c["a_z_min"], c["a_z_max"], c["a_z_points"])
    if c["a_x_min"] < 0 or c["a_x_points"] < 1 or c["a_z_points"] < 1:
        raise ConfigError("scan grids need non-negative A_x and at least one point per axis")
    rule = TuningRule(c["k"], c["span_fraction"], tuple(c["step_counts"]), c["max_periods"])
    shape = build_shape(c["pulse"])
    results = {}
    meta: dict = {
        "a_x_hz": [float(x / TWO_PI) for x in ax],
        "a_z_hz": [float(z / TWO_PI) for z in az],
        "b0_t": s["b0"],
        "rule": {"k": rule.k, "span_fraction": rule.span_fraction, "step_counts": list(rule.step_counts), "max_periods": rule.max_periods},
        "seed": run.seed,
        "config_hash": run.config_hash,
        "failures": {},
    }
    for proto in c["protocols"]:
        if proto not in ("adpulse", "pulsepol"):
            raise ConfigError(f"unknown scan protocol {proto!r}")
        res = hyperfine_surface_scan(proto, ax, az, s["b0"], rule, shape, workers)
        res.to_csv(run.path(f"scan_{proto}.csv"))
        meta["failures"][proto] = {f"{i},{j}": msg for (i, j), msg in sorted(res.reasons.items())}
        results[proto] = res
        run.log(f"scan {proto}: {int(np.isfinite(res.polarization).sum())} points")
    if "adpulse" in results and "pulsepol" in results:
        rows = high_az_rows(az)
        bad = region_violations(results["adpulse"].polarization, results["pulsepol"].polarization, 0.5, rows)
        meta["containment"] = {"rows": rows, "violations": [list(b) for b in bad], "holds": not bad}
    run.json("scan_meta.json", meta)


def cmd_hyperpol(cfg: dict, run: RunDir, workers: int, granularity: str) -> None:
    sys_ = build_system(cfg)
    c = section(cfg, "hyperpol")
    shape = build_shape(c["pulse"])
    tau = c["tau"] if c["tau"] is not None else _first_resonance(sys_, c["k"])
    if c["protocol"] == "pulsepol":
        block = PulsePolBlock(tau, c["n_p"], shape)
    else:
        if c["span"] is None or c["delta_tau"] is None:
            raise ConfigError("hyperpol with adpulse needs span and delta_tau")
        block = AdPulseBlock(SweepSchedule.symmetric(tau, c["span"], c["delta_tau"], c["n_p"], c["k"]), shape)
    tr = run_hyperpolarization(sys_, block, c["reinit"], c["reinit_overhead"])
    tr.to_csv(run.path("trace.csv"))
    run.json(
        "summary.json",
        {
            "protocol": c["protocol"],
            "reinit": c["reinit"],
            "cycle_time_s": block.duration + c["reinit_overhead"],
            "operating_time_s": tr.total_time,
            "final_polarization": [float(v) for v in tr.final_polarization],
            "final_mean_polarization": float(tr.final_polarization.mean()) if sys_.nuclei else 0.0,
        },
    )
    run.log(f"hyperpol {c['protocol']}: {c['reinit']} cycles, t_ex {tr.total_time!r} s")


def cmd_ensemble(cfg: dict, run: RunDir, workers: int, granularity: str) -> None:
    c = section(cfg, "ensemble")
    settings = EnsembleSettings(
        tau_r=c["tau_r"],
        budget=c["budget"],
        reinit_overhead=c["reinit_overhead"],
        adpulse=AdPulseSettings(c["adpulse_span"], c["adpulse_delta_tau"], c["adpulse_n_p"], c["k"]),
        pulsepol=PulsePolSettings(c["pulsepol_n_p"], c["k"]),
        shape=build_shape(c["pulse"]),
        include_nitrogen=c["include_nitrogen"],
        keep_traces=c["keep_traces"],
    )
    band = (c["band_min"] / TWO_PI, c["band_max"] / TWO_PI)
    clusters = sample_clusters(c["n_clusters"], c["cluster_size"], band, c["signed_az"], run.seed)
    result = run_ensemble(clusters, settings, workers)
    result.bins = np.linspace(-1.0, 1.0, c["histogram_bins"] + 1)
    result.to_json(run.path("ensemble.json"))
    result.to_csv(run.path("clusters.csv"))
    with open(run.path("cluster_couplings.csv"), "w") as fh:
        fh.write("cluster,nucleus,a_x_hz,a_z_hz\n")
        for i, cl in enumerate(clusters):
            for j, (x, z) in enumerate(cl.couplings):
                fh.write(f"{i},{j},{x / TWO_PI!r},{z / TWO_PI!r}\n")
    if settings.keep_traces:
        for p in result.write_traces(run.out):
            run.files.append(Path(p).name)
    sm = result.summary()
    run.log(f"ensemble: {sm['n_clusters']} clusters, {sm['n_failed']} failed")


def cmd_fid(cfg: dict, run: RunDir, workers: int, granularity: str) -> None:
    sys_ = build_system(cfg)
    c = section(cfg, "fid")
    if not sys_.nuclei:
        raise ConfigError("fid needs at least one nucleus")
    pols = c["polarization"]
    if len(pols) == 1:
        pols = pols * sys_.n_nuclei
    if len(pols) != sys_.n_nuclei:
        raise ConfigError("fid.polarization needs one value or one per nucleus")
    parts = [np.diag([1.0, 0.0]).astype(complex)] + [polarized_nuclear_state(p) for p in pols]
    if sys_.nitrogen is not None:
        parts.append(nitrogen_state(sys_.nitrogen))
    rho = parts[0]
    for p in parts[1:]:
        rho = np.kron(rho, p)
    delays = np.arange(c["points"]) * c["delay_step"]
    det = None if c["detuning"] is None else c["detuning"] / TWO_PI
    trace = simulate_ramsey_fid(sys_, rho, delays, det, c["noise_std"], run.seed)
    trace.to_csv(run.path("fid.csv"))
    spec = fid_spectrum(trace, c["window"], c["zero_padding"], exclude_ambiguous=c["exclude_ambiguous"])
    spec.to_csv(run.path("spectrum.csv"))
    doc = {
        "detuning_hz": trace.detuning,
        "window": spec.window,
        "resolution_hz": spec.resolution,
        "visible_peaks": spec.n_visible,
        "visible_peaks_hz": [float(f) for f in spec.visible_peaks],
        "ambiguous": spec.ambiguous,
        "peaks": spec.peak_table(),
        "extracted_polarization": [extract_polarization(spec, n) for n in range(sys_.n_nuclei)],
        "direct_polarization": [polarization(rho, sys_, n) for n in range(sys_.n_nuclei)],
    }
    run.json("peaks.json", doc)
    run.log(f"fid: {spec.n_visible} visible peaks")


COMMANDS: dict[str, Callable] = {
    "spectroscopy": cmd_spectroscopy,
    "sweep": cmd_sweep,
    "pulsepol": cmd_pulsepol,
    "scan": cmd_scan,
    "hyperpol": cmd_hyperpol,
    "ensemble": cmd_ensemble,
    "fid": cmd_fid,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adpulse", description="Pulsed DNP simulations: PulsePol and swept-spacing AdPulse.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", required=True, type=Path)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--trace-granularity", choices=["period", "step"], default=None)
    return p


def _snapshot(raw: dict, cfg: dict) -> dict:
    """Config as written to disk: raw values plus effective run block, minus the worker count."""
    snap = copy.deepcopy(raw)
    snap["run"] = {"seed": cfg["run"]["seed"], "trace_granularity": cfg["run"]["trace_granularity"]}
    return snap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    run = None
    try:
        raw, _ = cfgmod.load_config(args.config)
        raw.setdefault("run", {})
        if args.seed is not None:
            raw["run"]["seed"] = args.seed
        if args.workers is not None:
            raw["run"]["workers"] = args.workers
        if args.trace_granularity is not None:
            raw["run"]["trace_granularity"] = args.trace_granularity
        cfg = cfgmod.validate(raw)
        run = RunDir(args.out, args.command, cfg["run"]["seed"], _snapshot(raw, cfg))
        run.log(f"command {args.command}, seed {cfg['run']['seed']}")
        COMMANDS[args.command](cfg, run, cfg["run"]["workers"], cfg["run"]["trace_granularity"])
    except ConfigError as exc:
        return _fail(run, f"config error: {exc}", EXIT_CONFIG)
    except (PhysicsError, SequenceError, ResolutionError, AmbiguousAssignmentError) as exc:
        return _fail(run, f"physics validity error: {exc}", EXIT_PHYSICS)
    except ValueError as exc:
        return _fail(run, f"config error: {exc}", EXIT_CONFIG)
    except Exception as exc:  # noqa: BLE001 - mapped to the runtime exit code
        return _fail(run, f"runtime error: {type(exc).__name__}: {exc}", EXIT_RUNTIME)
    run.log("done")
    run.complete()
    return EXIT_OK


def _fail(run: RunDir | None, msg: str, code: int) -> int:
    print(msg, file=sys.stderr)
    if run is not None:
        run.fail(msg, code)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
