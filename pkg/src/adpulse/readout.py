"""Nuclear polarization observables and simulated Ramsey-FID detection.

The FID model applies an ideal (pi/2)_X pulse, free evolution under the static
Hamiltonian and a second pi/2 pulse whose phase advances linearly with the
delay (a virtual detuning). The detuning moves every hyperfine line to a
positive frequency, so the real signal has a clean one-sided spectrum.

Each line is the coherence between an eigenstate ``a`` of the electron-|0>
sector and an eigenstate ``b`` of the electron-|1> sector. Its weight is
``<a|rho_nuc|a> |<b|a>|^2``, so summing the line amplitudes that start from
nuclear-up states gives the up population exactly. Manifold areas are
therefore taken from the magnitude spectrum, which is linear in amplitude.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import find_peaks, get_window

from .hamiltonian import SpinSystem, build_static_hamiltonian, nuclear_axis, nuclear_operators
from .protocols import reinitialize_electron
from .quantum import check_density_matrix, embed, expectation, spin_operators

LINE_WEIGHT_FLOOR = 1e-4
PEAK_FLOOR = 0.1  # visible peaks must exceed this fraction of the tallest one


class ResolutionError(ValueError):
    """The delay grid is too short to separate the configured splittings."""


class AmbiguousAssignmentError(ValueError):
    """Lines from different nuclear manifolds coincide and cannot be split."""


# observables ---------------------------------------------------------------------


def polarization(rho: np.ndarray, sys: SpinSystem, nucleus_index: int = 0) -> float:
    """2 <I_z> of one nucleus."""
    if not 0 <= nucleus_index < sys.n_nuclei:
        raise IndexError(f"nucleus index {nucleus_index} out of range for {sys.n_nuclei} nuclei")
    return 2.0 * expectation(rho, nuclear_operators(sys, nucleus_index)[2])


def axis_polarization(rho: np.ndarray, sys: SpinSystem, nucleus_index: int, axis: Sequence[float]) -> float:
    """2 <I . n> for a unit vector ``axis``."""
    ix, iy, iz = nuclear_operators(sys, nucleus_index)
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    return 2.0 * expectation(rho, n[0] * ix + n[1] * iy + n[2] * iz)


def dressed_polarization(rho: np.ndarray, sys: SpinSystem, nucleus_index: int = 0) -> float:
    """Polarization along the electron-averaged precession axis of the nucleus."""
    return axis_polarization(rho, sys, nucleus_index, nuclear_axis(sys.nuclei[nucleus_index], sys.b0))


def polarized_nuclear_state(p: float) -> np.ndarray:
    """Single spin-1/2 density matrix with 2<I_z> = p."""
    if not -1.0 <= p <= 1.0:
        raise ValueError("polarization must lie in [-1, 1]")
    return np.diag([(1 + p) / 2, (1 - p) / 2]).astype(complex)


# hyperfine lines -------------------------------------------------------------------


@dataclass(frozen=True)
class HyperfineLine:
    """One electron coherence line; ``m_c`` holds the nuclear-spin labels of the |0>-sector state."""

    m_c: tuple[float, ...]
    m_n: float | None
    frequency: float  # Hz, before the virtual detuning
    strength: float  # |<b|a>|^2

    @property
    def label(self) -> str:
        parts = [f"{m:+.1f}".replace(".0", "").replace("+0.5", "+1/2").replace("-0.5", "-1/2") for m in self.m_c]
        if self.m_n is not None:
            parts.append(f"{int(round(self.m_n)):+d}")
        return "|" + ",".join(parts) + ">"


def _sector_blocks(sys: SpinSystem) -> tuple[np.ndarray, np.ndarray]:
    h = build_static_hamiltonian(sys)
    n = sys.dim // 2
    return h[:n, :n], h[n:, n:]


def _sector_eigen(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if np.allclose(h, np.diag(np.diag(h)), atol=0.0):
        e = np.real(np.diag(h)).copy()
        return e, np.eye(len(e), dtype=complex)
    return np.linalg.eigh(h)


def _nuclear_labels(sys: SpinSystem, vec: np.ndarray) -> tuple[tuple[float, ...], float | None]:
    dims = sys.dims[1:]
    rho = np.outer(vec, vec.conj())
    sz = spin_operators(0.5)[2]
    m_c = tuple(
        round(2 * expectation(rho, embed(sz, i, dims))) / 2 for i in range(sys.n_nuclei)
    )
    m_n = None
    if sys.nitrogen is not None:
        m_n = float(round(expectation(rho, embed(spin_operators(1.0)[2], len(dims) - 1, dims))))
    return m_c, m_n


def hyperfine_lines(sys: SpinSystem, floor: float = LINE_WEIGHT_FLOOR) -> list[HyperfineLine]:
    """All electron coherence lines with non-negligible transition strength.

    Frequencies are ``(E_b - E_a) / 2 pi`` with ``a`` in the electron-|0>
    sector and ``b`` in the electron-|1> sector.
    """
    h0, h1 = _sector_blocks(sys)
    e0, v0 = _sector_eigen(h0)
    e1, v1 = _sector_eigen(h1)
    strength = np.abs(v1.conj().T @ v0) ** 2  # [b, a]
    lines = []
    for a in range(len(e0)):
        m_c, m_n = _nuclear_labels(sys, v0[:, a])
        for b in range(len(e1)):
            if strength[b, a] > floor:
                lines.append(HyperfineLine(m_c, m_n, float((e1[b] - e0[a]) / (2 * math.pi)), float(strength[b, a])))
    lines.sort(key=lambda ln: (ln.frequency, ln.m_c, ln.m_n if ln.m_n is not None else 0.0))
    return lines


def degenerate_nitrogen_coupling(sys: SpinSystem) -> float:
    """14N coupling (rad/s) at which |down, -1> and |up, +1> main lines coincide (single 13C)."""
    if sys.n_nuclei != 1:
        raise ValueError("defined for a single 13C")
    probe = sys.without_nitrogen()
    lines = [ln for ln in hyperfine_lines(probe) if ln.strength > 0.5]
    f_up = next(ln.frequency for ln in lines if ln.m_c[0] > 0)
    f_dn = next(ln.frequency for ln in lines if ln.m_c[0] < 0)
    # main line frequencies shift by -m_N a_N / 2 pi in the nv frame
    return abs(f_dn - f_up) * math.pi


# FID simulation --------------------------------------------------------------------


@dataclass
class FidTrace:
    """Ramsey signal ``2 P_0 - 1`` on a uniform delay grid."""

    delays: np.ndarray
    signal: np.ndarray
    detuning: float = 0.0  # Hz
    lines: list[HyperfineLine] = field(default_factory=list)

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=float)
        self.signal = np.asarray(self.signal, dtype=float)
        if self.delays.shape != self.signal.shape:
            raise ValueError("delays and signal must have equal length")

    @property
    def dt(self) -> float:
        return float(self.delays[1] - self.delays[0])

    def check_uniform(self) -> None:
        if len(self.delays) < 4:
            raise ValueError("need at least four delays")
        d = np.diff(self.delays)
        if np.max(np.abs(d - d[0])) > 1e-9 * abs(d[0]) or d[0] <= 0:
            raise ValueError("delay grid must be uniform and ascending")

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("delay_s,signal\n")
            for t, s in zip(self.delays, self.signal):
                fh.write(f"{float(t)!r},{float(s)!r}\n")


def default_detuning(lines: Sequence[HyperfineLine]) -> float:
    """Virtual detuning (Hz) placing every line at a positive frequency with some headroom."""
    if not lines:
        return 1e6
    fmax = max(abs(ln.frequency) for ln in lines)
    return 1.5 * fmax + 0.5e6


def _pi2_x(dim: int) -> np.ndarray:
    r = np.array([[1, -1j], [-1j, 1]], dtype=complex) / math.sqrt(2)
    return np.kron(r, np.eye(dim // 2))


def _pi2_phase(dim: int, phase: float) -> np.ndarray:
    c = 1 / math.sqrt(2)
    r = np.array([[c, -1j * c * np.exp(-1j * phase)], [-1j * c * np.exp(1j * phase), c]], dtype=complex)
    return np.kron(r, np.eye(dim // 2))


def simulate_ramsey_fid(
    sys: SpinSystem,
    rho: np.ndarray,
    delays: Sequence[float],
    detuning: float | None = None,
    noise_std: float = 0.0,
    seed: int = 0,
) -> FidTrace:
    """Ramsey FID of the nuclear state carried by ``rho``.

    The electron is first reset to |0> (optical initialization); the nuclear
    marginal is untouched. ``detuning`` is the virtual detuning in Hz (default
    from the line table). ``noise_std`` adds seeded Gaussian noise to the signal.
    """
    rho = check_density_matrix(rho)
    rho = reinitialize_electron(rho, sys.dims)
    lines = hyperfine_lines(sys)
    det = default_detuning(lines) if detuning is None else float(detuning)
    h = build_static_hamiltonian(sys)
    e, v = np.linalg.eigh(h)
    dim = sys.dim
    r1 = _pi2_x(dim)
    rho1 = v.conj().T @ (r1 @ rho @ r1.conj().T) @ v
    phase_diff = e[:, None] - e[None, :]
    p0 = np.zeros(dim)
    p0[: dim // 2] = 1
    delays = np.asarray(delays, dtype=float)
    if np.any(delays < 0):
        raise ValueError("delays must be non-negative")
    signal = np.empty(len(delays))
    for i, t in enumerate(delays):
        rho_t = v @ (rho1 * np.exp(-1j * phase_diff * t)) @ v.conj().T
        r2 = _pi2_phase(dim, 2 * math.pi * det * t)
        out = r2 @ rho_t @ r2.conj().T
        signal[i] = 2 * float(np.real(np.sum(np.diag(out) * p0))) - 1
    if noise_std > 0:
        signal = signal + np.random.default_rng(seed).normal(0.0, noise_std, size=signal.shape)
    return FidTrace(delays, signal, det, lines)


# spectrum ------------------------------------------------------------------------


@dataclass(frozen=True)
class PeakAssignment:
    label: str
    m_c: tuple[float, ...]
    m_n: float | None
    frequency: float  # Hz, in the detuned spectrum
    area: float  # integral of the magnitude spectrum
    power: float  # integral of the power spectral density
    visible: bool


@dataclass
class FidSpectrum:
    """One-sided spectrum of an FID.

    ``amplitudes`` is the magnitude spectrum scaled so that a cosine of
    amplitude ``a`` peaks at ``a``; ``psd`` integrates to the mean signal power.
    """

    freqs: np.ndarray
    amplitudes: np.ndarray
    psd: np.ndarray
    peaks: list[PeakAssignment]
    window: str
    resolution: float  # Hz, 1 / grid span
    visible_peaks: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ambiguous: list[str] = field(default_factory=list)

    @property
    def n_visible(self) -> int:
        return len(self.visible_peaks)

    def manifold_areas(self, nucleus_index: int = 0) -> tuple[float, float]:
        up = sum(p.area for p in self.peaks if p.m_c and p.m_c[nucleus_index] > 0)
        down = sum(p.area for p in self.peaks if p.m_c and p.m_c[nucleus_index] < 0)
        return up, down

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("freq_hz,amplitude,psd\n")
            for f, a, p in zip(self.freqs, self.amplitudes, self.psd):
                fh.write(f"{float(f)!r},{float(a)!r},{float(p)!r}\n")

    def peak_table(self) -> list[dict]:
        return [
            {
                "label": p.label,
                "m_c": list(p.m_c),
                "m_n": p.m_n,
                "frequency_hz": p.frequency,
                "area": p.area,
                "power": p.power,
                "visible": p.visible,
            }
            for p in self.peaks
        ]

    def to_json(self, path) -> None:
        doc = {
            "window": self.window,
            "resolution_hz": self.resolution,
            "visible_peaks_hz": [float(f) for f in self.visible_peaks],
            "ambiguous": self.ambiguous,
            "peaks": self.peak_table(),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _window(name: str, n: int) -> np.ndarray:
    if name in ("rect", "rectangular", "boxcar"):
        return np.ones(n)
    return get_window(name, n, fftbins=False)


def parseval_residual(signal: np.ndarray) -> float:
    """Relative mismatch between time-domain and spectral energy (rectangular window)."""
    x = np.asarray(signal, dtype=float)
    spec = np.fft.fft(x)
    e_time = float(np.sum(x**2))
    e_freq = float(np.sum(np.abs(spec) ** 2) / len(x))
    return abs(e_time - e_freq) / max(e_time, 1e-300)


def _support(freqs: np.ndarray, centre: float, half_width: float) -> np.ndarray:
    return (freqs >= centre - half_width) & (freqs <= centre + half_width)


def fid_spectrum(
    trace: FidTrace,
    window: str = "hann",
    zero_padding: int = 8,
    merge_tolerance: float | None = None,
    exclude_ambiguous: bool = False,
) -> FidSpectrum:
    """Windowed FFT, peak finding and per-line areas.

    Visible peaks are local maxima above ``PEAK_FLOOR`` of the tallest one.
    When the trace carries a line table, every line is assigned an area: the
    complex amplitudes of all lines are fitted jointly to the windowed
    spectrum (the window kernel is the line shape), and each line's area is
    the trapezoidal integral of its fitted component over the main lobe.
    Lines from different manifolds closer than ``merge_tolerance`` (default a
    thousandth of the resolution) cannot be split; they raise
    :class:`AmbiguousAssignmentError` unless ``exclude_ambiguous`` drops them.
    Without a line table each visible peak is integrated directly.
    """
    trace.check_uniform()
    n = len(trace.delays)
    dt = trace.dt
    span = n * dt
    resolution = 1.0 / span
    w = _window(window, n)
    n_fft = int(2 ** math.ceil(math.log2(n * max(1, zero_padding))))
    x = trace.signal * w
    spec = np.fft.rfft(x, n_fft)
    freqs = np.fft.rfftfreq(n_fft, dt)
    amp = 2 * np.abs(spec) / np.sum(w)
    # one-sided density; integrates to the mean power of the windowed signal over <w^2>
    psd = 2 * np.abs(spec) ** 2 * dt / np.sum(w**2)
    psd[0] /= 2
    idx, _ = find_peaks(amp, height=PEAK_FLOOR * float(amp.max()) if amp.max() > 0 else np.inf)
    visible = freqs[idx]
    lobe = (2.0 if window not in ("rect", "rectangular", "boxcar") else 1.0) * resolution
    peaks: list[PeakAssignment] = []
    ambiguous: list[str] = []
    if trace.lines:
        line_freqs = np.array([ln.frequency + trace.detuning for ln in trace.lines])
        nyquist = 0.5 / dt
        if np.any(line_freqs <= 0) or np.any(line_freqs >= nyquist):
            raise ResolutionError("detuned lines fall outside (0, Nyquist); adjust detuning or sampling")
        tol = 1e-3 * resolution if merge_tolerance is None else merge_tolerance
        keep = np.ones(len(trace.lines), dtype=bool)
        order = np.argsort(line_freqs, kind="stable")
        groups: list[list[int]] = []
        for i in order:
            if groups and line_freqs[i] - line_freqs[groups[-1][-1]] <= tol:
                groups[-1].append(int(i))
            else:
                groups.append([int(i)])
        for g in groups:
            if len({trace.lines[i].m_c for i in g}) > 1:
                names = " / ".join(trace.lines[i].label for i in g)
                if not exclude_ambiguous:
                    raise AmbiguousAssignmentError(f"coincident lines from different manifolds: {names}")
                ambiguous.append(names)
                keep[g] = False
        centres = np.array([np.mean(line_freqs[g]) for g in groups])
        if len(centres) > 1:
            gaps = np.diff(centres)
            if np.min(gaps) < 2 * resolution:
                raise ResolutionError(
                    f"grid span {span:.3e} s cannot resolve a {np.min(gaps):.3e} Hz splitting"
                )
        comps = _fit_lines(trace.delays, trace.signal, w, n_fft, centres)
        for gi, g in enumerate(groups):
            comp = comps[gi]
            sup = _support(freqs, centres[gi], lobe)
            c_amp = 2 * np.abs(comp) / np.sum(w)
            c_psd = 2 * np.abs(comp) ** 2 * dt / np.sum(w**2)
            area_total = float(trapezoid(c_amp[sup], freqs[sup]))
            power_total = float(trapezoid(c_psd[sup], freqs[sup]))
            strengths = np.array([trace.lines[i].strength for i in g])
            share = strengths / strengths.sum()
            is_visible = bool(np.any(np.abs(visible - centres[gi]) <= resolution))
            for i, s in zip(g, share):
                if not keep[i]:
                    continue
                ln = trace.lines[i]
                peaks.append(
                    PeakAssignment(ln.label, ln.m_c, ln.m_n, float(line_freqs[i]), area_total * s, power_total * s, is_visible)
                )
    else:
        for k, i in enumerate(idx):
            lo = i
            while lo > 0 and amp[lo - 1] < amp[lo]:
                lo -= 1
            hi = i
            while hi < len(amp) - 1 and amp[hi + 1] < amp[hi]:
                hi += 1
            sl = slice(lo, hi + 1)
            peaks.append(
                PeakAssignment(
                    f"peak{k + 1}",
                    (),
                    None,
                    float(freqs[i]),
                    float(trapezoid(amp[sl], freqs[sl])),
                    float(trapezoid(psd[sl], freqs[sl])),
                    True,
                )
            )
    return FidSpectrum(freqs, amp, psd, peaks, window, resolution, visible, ambiguous)


def _fit_lines(t: np.ndarray, x: np.ndarray, w: np.ndarray, n_fft: int, freqs: np.ndarray) -> list[np.ndarray]:
    """Least-squares cosine/sine amplitudes at known frequencies; returns each line's windowed spectrum."""
    cols = []
    for f in freqs:
        cols.append(np.cos(2 * math.pi * f * t))
        cols.append(np.sin(2 * math.pi * f * t))
    a = np.array(cols).T * w[:, None]
    coef, *_ = np.linalg.lstsq(a, x * w, rcond=None)
    out = []
    for k, f in enumerate(freqs):
        comp = (coef[2 * k] * np.cos(2 * math.pi * f * t) + coef[2 * k + 1] * np.sin(2 * math.pi * f * t)) * w
        out.append(np.fft.rfft(comp, n_fft))
    return out


def extract_polarization(spectrum: FidSpectrum, nucleus_index: int = 0) -> float:
    """(area_up - area_down) / (area_up + area_down) over the two 13C manifolds."""
    up, down = spectrum.manifold_areas(nucleus_index)
    total = up + down
    if not spectrum.peaks or total <= 0:
        raise AmbiguousAssignmentError("no peaks assigned to nuclear manifolds")
    return float((up - down) / total)
