"""Polarization build-up of a single 13C under AdPulse sweeps and fixed-spacing PulsePol.

Writes CSV traces for the NV-A (K=3) and NV-B (K=1) couplings, each at the
field of its shipped config, and a plot when matplotlib is available.

    python3 scripts/polarization_dynamics.py --out results/dynamics
"""

import argparse
import math
from pathlib import Path

import numpy as np

from adpulse.hamiltonian import NuclearSpinSpec, SpinSystem, initial_state, nuclear_frequency, resonance_spacing
from adpulse.protocols import SweepSchedule, pumped_polarization, run_adpulse, run_pulsepol
from adpulse.pulses import Compiler

TWO_PI = 2 * math.pi

CASES = {
    # name: (a_x Hz, a_z Hz, b0 T, k, tau_f offset s, pulsepol periods)
    "nv_a": (1.42e6, 4.12e6, 23.392944e-3, 3, 60e-9, 40),
    "nv_b": (137e3, 607e3, 89e-3, 1, 60e-9, 60),
}


def run_case(name, out: Path, steps=(1e-9, 0.5e-9)):
    a_x, a_z, b0, k, tail, n_pp = CASES[name]
    spec = NuclearSpinSpec(TWO_PI * a_x, TWO_PI * a_z)
    sys = SpinSystem(b0, (spec,)).validate()
    tau_r = resonance_spacing("pulsepol", nuclear_frequency(spec, b0), k)
    comp = Compiler(sys)
    rho = initial_state(sys, "0", "mixed")
    curves = {}
    for dt in steps:
        sched = SweepSchedule(tau_r - 5e-9, tau_r + tail, dt, 1, k)
        tr = run_adpulse(sys, rho, sched, compiler=comp)
        tr.to_csv(out / f"{name}_adpulse_dt{dt * 1e12:.0f}ps.csv")
        curves[f"AdPulse dtau={dt * 1e9:g} ns"] = (tr.step_taus - tau_r, tr.polarization[:, 0])
    tr = run_pulsepol(sys, rho, tau_r, n_pp, compiler=comp)
    tr.to_csv(out / f"{name}_pulsepol.csv")
    final = pumped_polarization(tr.final_state, sys, 0, k)
    print(f"{name}: tau_r = {tau_r * 1e9:.2f} ns, PulsePol pumped polarization after {n_pp} periods {final:.3f}")
    return tau_r, curves, tr


def plot(results, out: Path):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping plot")
        return
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    for row, (name, (tau_r, curves, pp)) in enumerate(results.items()):
        ax = axes[row, 0]
        for label, (x, y) in curves.items():
            ax.plot(x * 1e9, y, label=label)
        ax.set_xlabel("tau - tau_r (ns)")
        ax.set_ylabel("2<I_z>")
        ax.set_title(f"{name} AdPulse")
        ax.legend(fontsize=7)
        ax = axes[row, 1]
        ax.plot(np.arange(1, len(pp.times) + 1), pp.polarization[:, 0])
        ax.set_xlabel("PulsePol periods")
        ax.set_title(f"{name} PulsePol")
    fig.tight_layout()
    fig.savefig(out / "dynamics.png", dpi=150)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("results/dynamics"))
    args = p.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    results = {name: run_case(name, args.out) for name in CASES}
    plot(results, args.out)


if __name__ == "__main__":
    main()
