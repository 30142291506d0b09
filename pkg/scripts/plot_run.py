"""Plot the primary output of an ``adpulse`` run directory (requires matplotlib).

    python3 scripts/plot_run.py results/scan
"""

import argparse
import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def plot_scan(run: Path):
    files = sorted(run.glob("scan_*.csv"))
    fig, axes = plt.subplots(1, len(files), figsize=(4.5 * len(files), 4), squeeze=False)
    for ax, f in zip(axes[0], files):
        header, data = read_csv(f)
        a_x = np.array(header[1:], dtype=float) / 1e3
        a_z, pol = data[:, 0] / 1e3, data[:, 1:]
        im = ax.pcolormesh(a_x, a_z, 100 * pol, shading="nearest", vmin=0, vmax=100)
        ax.contour(a_x, a_z, pol, levels=[0.5], colors="k")
        ax.set_xlabel("A_x (kHz)")
        ax.set_ylabel("A_z (kHz)")
        ax.set_title(f.stem.replace("scan_", ""))
        fig.colorbar(im, ax=ax, label="polarization (%)")
    return fig


def plot_ensemble(run: Path):
    s = json.loads((run / "ensemble.json").read_text())["summary"]
    edges = np.array(s["histogram_bins"])
    centres = 0.5 * (edges[1:] + edges[:-1])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    width = np.diff(edges)
    ax.bar(centres, s["histogram_pulsepol"], width=width, alpha=0.6, label=f"PulsePol, mean {s['pulsepol_mean']:.3f}")
    ax.bar(centres, s["histogram_adpulse"], width=width, alpha=0.6, label=f"AdPulse, mean {s['adpulse_mean']:.3f}")
    ax.set_xlabel("cluster polarization")
    ax.set_ylabel("clusters")
    ax.legend()
    return fig


def plot_traces(run: Path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for f in sorted(run.glob("trace*.csv")):
        header, data = read_csv(f)
        for j in range(3, len(header)):
            ax.plot(data[:, 0] * 1e6, data[:, j], label=f"{f.stem} {header[j]}")
    ax.set_xlabel("time (us)")
    ax.set_ylabel("2<I_z>")
    ax.legend(fontsize=7)
    return fig


def plot_fid(run: Path):
    _, data = read_csv(run / "spectrum.csv")
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(data[:, 0] / 1e6, data[:, 1])
    ax.set_xlabel("frequency (MHz)")
    ax.set_ylabel("|FFT|")
    return fig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("run_dir", type=Path)
    args = p.parse_args()
    run = args.run_dir
    command = json.loads((run / "manifest.json").read_text())["command"]
    plotter = {"scan": plot_scan, "ensemble": plot_ensemble, "fid": plot_fid}.get(command, plot_traces)
    fig = plotter(run)
    fig.tight_layout()
    fig.savefig(run / f"{command}.png", dpi=150)
    print(run / f"{command}.png")


if __name__ == "__main__":
    main()
