"""Final polarization versus detuning of the pulse spacing from resonance.

PulsePol runs N_p periods at tau_r + offset; AdPulse runs a symmetric sweep
centred at tau_r + offset. Prints both FWHMs and writes window.csv.

    python3 scripts/robustness_window.py --span 40e-9 --delta-tau 0.25e-9
"""

import argparse
import csv
import math
from pathlib import Path

import numpy as np

from adpulse.hamiltonian import NuclearSpinSpec, SpinSystem, initial_state, nuclear_frequency, resonance_spacing
from adpulse.protocols import SweepSchedule, adpulse_unitary, pumped_polarization, resonance_fwhm
from adpulse.pulses import Compiler, gaussian, pulsepol, INSTANTANEOUS
from adpulse.quantum import evolve

TWO_PI = 2 * math.pi


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--a-x", type=float, default=1.42e6, help="Hz")
    p.add_argument("--a-z", type=float, default=4.12e6, help="Hz")
    p.add_argument("--b0", type=float, default=23.392944e-3, help="T")
    p.add_argument("--span", type=float, default=40e-9)
    p.add_argument("--delta-tau", type=float, default=0.25e-9)
    p.add_argument("--n-p", type=int, default=16, help="PulsePol periods")
    p.add_argument("--gaussian", action="store_true", help="16 ns Gaussian pulses instead of ideal ones")
    p.add_argument("--out", type=Path, default=Path("results/window"))
    args = p.parse_args()

    spec = NuclearSpinSpec(TWO_PI * args.a_x, TWO_PI * args.a_z)
    sys = SpinSystem(args.b0, (spec,)).validate()
    shape = gaussian(16e-9) if args.gaussian else INSTANTANEOUS
    tau_r = resonance_spacing("pulsepol", nuclear_frequency(spec, args.b0), 3)
    comp = Compiler(sys)
    rho = initial_state(sys, "0", "mixed")

    pp_off = np.arange(-8.0, 8.0001, 0.1) * 1e-9
    pp = [
        pumped_polarization(evolve(rho, np.linalg.matrix_power(comp.period_propagator(pulsepol(tau_r + o, shape)), args.n_p)), sys)
        for o in pp_off
    ]
    ad_off = np.arange(-1.25 * args.span, 1.25 * args.span + 1e-15, args.span / 40)
    ad = [
        pumped_polarization(evolve(rho, adpulse_unitary(sys, SweepSchedule.symmetric(tau_r + o, args.span, args.delta_tau), shape, comp)), sys)
        for o in ad_off
    ]
    w_pp, w_ad = resonance_fwhm(pp_off, pp), resonance_fwhm(ad_off, ad)
    print(f"FWHM PulsePol {w_pp * 1e9:.2f} ns, AdPulse {w_ad * 1e9:.2f} ns, ratio {w_ad / w_pp:.1f}")

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "window.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["protocol", "offset_s", "pumped_polarization"])
        w.writerows(("pulsepol", repr(float(o)), repr(v)) for o, v in zip(pp_off, pp))
        w.writerows(("adpulse", repr(float(o)), repr(v)) for o, v in zip(ad_off, ad))


if __name__ == "__main__":
    main()
