"""Acceptance criteria, one test each.

Every test records a ``criterion N: PASS|FAIL <detail>`` line that is printed
immediately and repeated in the pytest terminal summary. Run standalone with
``python3 tests/test_acceptance.py`` or as part of ``pytest``.
"""

from __future__ import annotations

import filecmp
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES, B0, STRONG  # noqa: E402

from adpulse import cli  # noqa: E402
from adpulse.ensemble import EnsembleSettings, run_ensemble, sample_clusters  # noqa: E402
from adpulse.floquet import find_avoided_crossing, spectroscopy  # noqa: E402
from adpulse.hamiltonian import (  # noqa: E402
    HostNitrogenSpec,
    NuclearSpinSpec,
    SpinSystem,
    initial_state,
    nuclear_frequency,
    resonance_spacing,
)
from adpulse.protocols import (  # noqa: E402
    LZParams,
    SweepSchedule,
    adpulse_unitary,
    flip_pair,
    high_az_rows,
    hyperfine_surface_scan,
    lz_prediction,
    pumped_polarization,
    region_violations,
    resonance_fwhm,
    run_adpulse,
    TuningRule,
)
from adpulse.pulses import Compiler, gaussian, pulsepol  # noqa: E402
from adpulse.quantum import EigenPropagator, evolve, partial_trace, random_density_matrix, random_hermitian  # noqa: E402
from adpulse.readout import (  # noqa: E402
    AmbiguousAssignmentError,
    degenerate_nitrogen_coupling,
    extract_polarization,
    fid_spectrum,
    polarization,
    polarized_nuclear_state,
    simulate_ramsey_fid,
)

TWO_PI = 2 * math.pi
WORKERS = max(1, min(4, os.cpu_count() or 1))


def record(n: int, ok: bool, detail: str, seconds: float) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}  ({seconds:.1f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)


def tau_r(sys: SpinSystem, k: int = 3) -> float:
    return resonance_spacing("pulsepol", nuclear_frequency(sys.nuclei[0], sys.b0), k)


def first_maximum(sys: SpinSystem, k: int = 3, limit: int = 5000) -> tuple[int, float]:
    """Period count and value of the first maximum of the pumped polarization under PulsePol at tau_r."""
    u = Compiler(sys).period_propagator(pulsepol(tau_r(sys, k)))
    rho = initial_state(sys, "0", "mixed")
    prev = -np.inf
    for n in range(1, limit):
        rho = evolve(rho, u)
        v = pumped_polarization(rho, sys, 0, k)
        if v < prev:
            return n - 1, prev
        prev = v
    raise AssertionError("no maximum within the period limit")


def _partial_trace_oracle(rho, dims, keep):
    """Explicit index loops, independent of the reshape implementation."""
    n = len(dims)
    keep = sorted(keep)
    drop = [i for i in range(n) if i not in keep]
    d_keep = int(np.prod([dims[i] for i in keep]))
    out = np.zeros((d_keep, d_keep), dtype=complex)
    for a in np.ndindex(*dims):
        for b in np.ndindex(*dims):
            if any(a[i] != b[i] for i in drop):
                continue
            ia = np.ravel_multi_index(tuple(a[i] for i in keep), [dims[i] for i in keep])
            ib = np.ravel_multi_index(tuple(b[i] for i in keep), [dims[i] for i in keep])
            out[ia, ib] += rho[np.ravel_multi_index(a, dims), np.ravel_multi_index(b, dims)]
    return out


# 1 ------------------------------------------------------------------------------


def test_criterion_1_core_numerics():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    worst = {"unitarity": 0.0, "trace": 0.0, "partial_trace": 0.0, "semigroup": 0.0}
    layouts = [[2, 2], [2, 3], [2, 2, 2], [3, 2], [2, 2, 3], [2, 2, 2, 2]]
    n_instances = 1000
    for i in range(n_instances):
        dims = layouts[i % len(layouts)]
        d = int(np.prod(dims))
        h = random_hermitian(d, rng, scale=TWO_PI * rng.uniform(1e5, 1e7))
        t1, t2 = rng.uniform(0, 2e-6, size=2)
        prop = EigenPropagator(h)
        u1, u2, u12 = prop.at(t1), prop.at(t2), prop.at(t1 + t2)
        worst["unitarity"] = max(worst["unitarity"], np.linalg.norm(u1 @ u1.conj().T - np.eye(d), 2))
        rho = random_density_matrix(d, rng)
        worst["trace"] = max(worst["trace"], abs(np.trace(evolve(rho, u1)) - 1))
        worst["semigroup"] = max(worst["semigroup"], np.max(np.abs(u2 @ u1 - u12)))
        keep = sorted(rng.choice(len(dims), size=rng.integers(1, len(dims)), replace=False).tolist())
        diff = np.max(np.abs(partial_trace(rho, dims, keep) - _partial_trace_oracle(rho, dims, keep)))
        worst["partial_trace"] = max(worst["partial_trace"], diff)
    ok = (
        worst["unitarity"] < 1e-10
        and worst["trace"] < 1e-12
        and worst["partial_trace"] < 1e-12
        and worst["semigroup"] < 1e-10
    )
    detail = f"{n_instances} instances, worst " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record(1, ok, detail, time.perf_counter() - t0)
    assert ok, detail


# 2 ------------------------------------------------------------------------------


def test_criterion_2_pulsepol_resonance():
    t0 = time.perf_counter()
    strong = SpinSystem(B0, (STRONG,)).validate()
    n_max, p_max = first_maximum(strong)
    # weak coupling: A_x doubling halves the transfer time
    times = []
    for a_x in (0.1e6, 0.2e6):
        sys_ = SpinSystem(0.6, (NuclearSpinSpec(TWO_PI * a_x, TWO_PI * 0.5e6),)).validate()
        times.append(first_maximum(sys_)[0])
    ratio = times[0] / times[1]
    ok = p_max > 0.95 and abs(ratio - 2.0) <= 0.2
    detail = f"first maximum {p_max:.4f} after {n_max} periods; transfer-time ratio for doubled A_x {ratio:.3f}"
    record(2, ok, detail, time.perf_counter() - t0)
    assert ok, detail


# 3 ------------------------------------------------------------------------------


def test_criterion_3_floquet_crossing():
    t0 = time.perf_counter()
    b0, a_z = 0.6, TWO_PI * 0.5e6
    offsets, gaps, ratios = [], [], []
    a, c = flip_pair(3)
    for a_x in (0.05e6, 0.1e6, 0.2e6, 0.3e6):
        spec = NuclearSpinSpec(TWO_PI * a_x, a_z)
        sys_ = SpinSystem(b0, (spec,)).validate()
        tr = tau_r(sys_)
        sp = spectroscopy(sys_, "pulsepol", np.linspace(0.97 * tr, 1.03 * tr, 121), a)
        cross = find_avoided_crossing(sp, (sp.branch_of(a, 0), sp.branch_of(c, 0)), strict=True)
        offsets.append(abs(cross.tau - tr) / tr)
        gaps.append(cross.gap)
        ratios.append(spec.a_x / (spec.gamma * b0))
    ok = max(ratios) <= 0.05 and max(offsets) < 0.01 and all(np.diff(gaps) > 0)
    detail = (
        f"{len(gaps)} sets, A_x/w_L <= {max(ratios):.3f}, max offset {max(offsets):.1e}, "
        f"gaps {', '.join(f'{g:.3f}' for g in gaps)} rad"
    )
    record(3, ok, detail, time.perf_counter() - t0)
    assert ok, detail


# 4 ------------------------------------------------------------------------------


def test_criterion_4_adiabatic_limit():
    t0 = time.perf_counter()
    sys_ = SpinSystem(B0, (STRONG,)).validate()
    tr = tau_r(sys_)
    comp = Compiler(sys_)
    deviations = []
    pure_start = initial_state(sys_, "0", "dressed_down")
    steps = (1e-9, 0.5e-9, 0.25e-9, 0.125e-9)
    for dt in steps:
        sched = SweepSchedule.symmetric(tr, 40e-9, dt)
        trace = run_adpulse(sys_, pure_start, sched, compiler=comp)
        lz = lz_prediction(LZParams.from_spec(STRONG, B0, sched), sched, sched.tau_f)
        deviations.append(abs(trace.electron_population[-1] - lz))
    final = SweepSchedule.symmetric(tr, 40e-9, steps[-1])
    rho = evolve(initial_state(sys_, "0", "mixed"), adpulse_unitary(sys_, final, compiler=comp))
    pol = pumped_polarization(rho, sys_)
    ok = all(np.diff(deviations) < 0) and pol >= 0.90
    detail = f"|P0 - LZ| {', '.join(f'{d:.4f}' for d in deviations)}; adiabatic polarization from mixed start {pol:.4f}"
    record(4, ok, detail, time.perf_counter() - t0)
    assert ok, detail


# 5 ------------------------------------------------------------------------------


def test_criterion_5_robustness_window():
    t0 = time.perf_counter()
    sys_ = SpinSystem(B0, (STRONG,)).validate()
    tr = tau_r(sys_)
    comp = Compiler(sys_)
    rho_0 = initial_state(sys_, "0", "mixed")
    pp_offsets = np.arange(-8.0, 8.0001, 0.1) * 1e-9
    pp = [
        pumped_polarization(evolve(rho_0, np.linalg.matrix_power(comp.period_propagator(pulsepol(tr + o)), 16)), sys_)
        for o in pp_offsets
    ]
    ad_offsets = np.arange(-50.0, 50.001, 1.0) * 1e-9
    ad = [
        pumped_polarization(evolve(rho_0, adpulse_unitary(sys_, SweepSchedule.symmetric(tr + o, 40e-9, 0.25e-9), compiler=comp)), sys_)
        for o in ad_offsets
    ]
    w_pp, w_ad = resonance_fwhm(pp_offsets, pp), resonance_fwhm(ad_offsets, ad)
    ratio = w_ad / w_pp
    ok = math.isfinite(ratio) and ratio >= 5.0
    detail = f"FWHM AdPulse {w_ad * 1e9:.2f} ns, PulsePol (N_p=16) {w_pp * 1e9:.2f} ns, ratio {ratio:.1f}"
    record(5, ok, detail, time.perf_counter() - t0)
    assert ok, detail


# 6 ------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_6_surface_containment():
    t0 = time.perf_counter()
    a_x = TWO_PI * np.linspace(0.1e6, 1.5e6, 6)
    a_z = TWO_PI * np.linspace(0.2e6, 5.0e6, 6)
    shape = gaussian(16e-9)
    rule = TuningRule()
    ad = hyperfine_surface_scan("adpulse", a_x, a_z, B0, rule, shape, WORKERS)
    pp = hyperfine_surface_scan("pulsepol", a_x, a_z, B0, rule, shape, WORKERS)
    rows = high_az_rows(a_z)
    bad = region_violations(ad.polarization, pp.polarization, 0.5, rows)
    complete = not ad.reasons and not pp.reasons
    n_pp = int(np.sum(pp.polarization[rows] >= 0.5))
    n_ad = int(np.sum(ad.polarization[rows] >= 0.5))
    ok = complete and not bad
    detail = f"6x6 Gaussian-pulse grid, high-A_z rows {rows}: PulsePol >=50% cells {n_pp}, AdPulse {n_ad}, violations {bad}"
    record(6, ok, detail, time.perf_counter() - t0)
    assert ok, detail


# 7 ------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_7_ensemble_trend():
    t0 = time.perf_counter()
    clusters = sample_clusters(60, 3, seed=0)
    res = run_ensemble(clusters, EnsembleSettings(), WORKERS)
    s = res.summary()
    mean_ok = s["adpulse_mean"] >= s["pulsepol_mean"] - 0.01
    rho = s["spearman_metric_vs_deficit"]
    rank_ok = rho < 0
    ok = mean_ok and rank_ok and s["n_failed"] == 0
    detail = (
        f"60 3-spin clusters, t_ex {s['operating_time_adpulse_s'] * 1e3:.2f} ms: mean AdPulse {s['adpulse_mean']:.4f} "
        f"vs PulsePol {s['pulsepol_mean']:.4f} ({'ok' if mean_ok else 'fails'}); "
        f"Spearman(metric, AdPulse - PulsePol) {rho:+.3f} ({'ok' if rank_ok else 'not negative'})"
    )
    record(7, ok, detail, time.perf_counter() - t0)
    assert ok, detail


# 8 ------------------------------------------------------------------------------


def test_criterion_8_readout_round_trip():
    t0 = time.perf_counter()
    sys_ = SpinSystem(B0, (NuclearSpinSpec(TWO_PI * 137e3, TWO_PI * 607e3),), HostNitrogenSpec()).validate()
    delays = np.arange(4000) * 10e-9
    errors = []
    for p in (0.0, 0.25, 0.5, 0.91, 1.0):
        rho = np.kron(np.kron(np.diag([1.0, 0.0]), polarized_nuclear_state(p)), np.eye(3) / 3)
        spec = fid_spectrum(simulate_ramsey_fid(sys_, rho, delays))
        errors.append(abs(extract_polarization(spec) - polarization(rho, sys_, 0)))
    a_n = degenerate_nitrogen_coupling(sys_)
    degenerate = SpinSystem(B0, sys_.nuclei, HostNitrogenSpec(a_n)).validate()
    rho = np.kron(np.kron(np.diag([1.0, 0.0]), polarized_nuclear_state(0.5)), np.eye(3) / 3)
    trace = simulate_ramsey_fid(degenerate, rho, delays)
    with pytest.raises(AmbiguousAssignmentError):
        fid_spectrum(trace)
    spec = fid_spectrum(trace, exclude_ambiguous=True)
    n_peaks = spec.n_visible
    ok = max(errors) <= 0.02 and n_peaks == 5
    detail = f"max |extracted - direct| {max(errors):.1e} over 5 polarizations; degenerate a_N {a_n / TWO_PI / 1e3:.1f} kHz shows {n_peaks} peaks"
    record(8, ok, detail, time.perf_counter() - t0)
    assert ok, detail


# 9 ------------------------------------------------------------------------------

_SMALL_CONFIG = """
[system]
b0 = "23.392944 mT"

[[system.nuclei]]
a_x = "1.42 MHz"
a_z = "4.12 MHz"

[[system.nuclei]]
a_x = "30 kHz"
a_z = "-45 kHz"

[spectroscopy]
points = 41

[sweep]
span = "40 ns"
delta_tau = ["2 ns", "1 ns"]

[pulsepol]
n_cycles = 12

[hyperpol]
reinit = 3
span = "40 ns"
delta_tau = "1 ns"

[scan]
a_x_min = "0.2 MHz"
a_x_max = "1.4 MHz"
a_x_points = 2
a_z_min = "0.5 MHz"
a_z_max = "4 MHz"
a_z_points = 2
step_counts = [20, 80]
max_periods = 40

[ensemble]
n_clusters = 4
cluster_size = 2

"""

_FID_CONFIG = """
[system]
b0 = "23.392944 mT"

[[system.nuclei]]
a_x = "137 kHz"
a_z = "607 kHz"

[fid]
polarization = [0.7]
points = 3000
noise_std = 0.01
"""


@pytest.mark.slow
def test_criterion_9_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "small.toml"
    cfg.write_text(_SMALL_CONFIG)
    fid_cfg = tmp_path / "fid.toml"
    fid_cfg.write_text(_FID_CONFIG)
    mismatches = []
    for command in cli.COMMANDS:
        runs = []
        for tag, workers in (("a", 1), ("b", 1), ("c", 2)):
            out = tmp_path / f"{command}_{tag}"
            path = fid_cfg if command == "fid" else cfg
            code = cli.main([command, "--config", str(path), "--out", str(out), "--workers", str(workers), "--seed", "7"])
            assert code == 0, f"{command} exited with {code}"
            runs.append(out)
        for other in runs[1:]:
            cmp = filecmp.dircmp(runs[0], other)
            names = sorted(p.name for p in runs[0].iterdir())
            same = sorted(q.name for q in other.iterdir()) == names and all(
                filecmp.cmp(runs[0] / n, other / n, shallow=False) for n in names
            )
            if not same or cmp.diff_files:
                mismatches.append(f"{command}:{other.name}")
    ok = not mismatches
    detail = f"{len(cli.COMMANDS)} commands x 3 runs (workers 1, 1, 2): " + ("all byte-identical" if ok else f"differences {mismatches}")
    record(9, ok, detail, time.perf_counter() - t0)
    assert ok, detail


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
