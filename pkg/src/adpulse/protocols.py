"""Protocol runners: fixed-spacing PulsePol, swept-spacing AdPulse, the
Landau-Zener overlay, electron reinitialization cycles and hyperfine scans.

Traces are stroboscopic: one record per PulsePol period (8 tau).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .hamiltonian import (
    ELECTRON_0,
    NuclearSpinSpec,
    PhysicsError,
    SpinSystem,
    initial_state,
    nuclear_axis,
    nuclear_frequency,
    nuclear_operators,
    resonance_spacing,
)
from .pulses import INSTANTANEOUS, Compiler, PulseShape, pulsepol
from .quantum import evolve, kron, partial_trace

BETA = 3 * math.pi / (2 + math.sqrt(2))
# Flip-flop splitting of the K=3 PulsePol Floquet pair per unit A_x, measured from
# the period propagator (ideal pulses, weak coupling); see tests/test_protocols.py.
PULSEPOL_K3_COUPLING = 0.3768
DEFAULT_REINIT_OVERHEAD = 6e-6


def g3(a_x: float) -> float:
    """Flip-flop rate A_x (2 + sqrt 2) / 6 pi of the K=3 effective Hamiltonian."""
    return a_x * (2 + math.sqrt(2)) / (6 * math.pi)


def target_sign(k: int) -> int:
    """+1 if harmonic ``k`` drives flip-flop (|0,dn> <-> |1,up>), -1 for flip-flip."""
    return 1 if k % 4 == 3 else -1


def flip_pair(k: int) -> tuple[np.ndarray, np.ndarray]:
    """(initial, partner) electron-nuclear basis states coupled at harmonic ``k``."""
    up = np.array([1, 0], dtype=complex)
    dn = np.array([0, 1], dtype=complex)
    e0 = ELECTRON_0
    e1 = np.array([0, 1], dtype=complex)
    if target_sign(k) > 0:
        return np.kron(e0, dn), np.kron(e1, up)
    return np.kron(e0, up), np.kron(e1, dn)


def pumped_polarization(rho: np.ndarray, sys: SpinSystem, nucleus_index: int = 0, k: int = 3) -> float:
    """Polarization along the direction harmonic ``k`` pumps the nucleus towards.

    The pumped axis is the electron-averaged precession axis, flipped for
    flip-flip harmonics. It coincides with lab +z for weak coupling and tilts
    (or inverts) once A_z/2 becomes comparable with the Larmor frequency.
    """
    ix, iy, iz = nuclear_operators(sys, nucleus_index)
    n = target_sign(k) * nuclear_axis(sys.nuclei[nucleus_index], sys.b0)
    op = n[0] * ix + n[1] * iy + n[2] * iz
    return 2.0 * float(np.real(np.sum(rho * op.T)))


@dataclass(frozen=True)
class SweepSchedule:
    """Pulse-spacing sweep tau_0 -> tau_f in steps of delta_tau, n_p periods per step."""

    tau_0: float
    tau_f: float
    delta_tau: float
    n_p: int = 1
    k: int = 3

    def __post_init__(self):
        if not self.tau_0 < self.tau_f:
            raise ValueError("tau_0 must be smaller than tau_f")
        if self.delta_tau <= 0:
            raise ValueError("delta_tau must be positive")
        if self.n_p < 1:
            raise ValueError("n_p must be a positive integer")
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError("k must be an odd positive integer")
        if self.m < 2:
            raise ValueError("a sweep needs at least two steps")
        if self.tau_0 <= 0:
            raise ValueError("pulse spacings must be positive")

    @property
    def m(self) -> int:
        return int(round((self.tau_f - self.tau_0) / self.delta_tau))

    @property
    def span(self) -> float:
        return self.tau_f - self.tau_0

    @property
    def taus(self) -> np.ndarray:
        return self.tau_0 + self.delta_tau * np.arange(self.m + 1)

    @property
    def duration(self) -> float:
        """Total protocol time of one sweep (s)."""
        return float(np.sum(8 * self.taus) * self.n_p)

    @classmethod
    def symmetric(cls, tau_r: float, span: float, delta_tau: float, n_p: int = 1, k: int = 3) -> "SweepSchedule":
        return cls(tau_r - span / 2, tau_r + span / 2, delta_tau, n_p, k)


@dataclass
class PolarizationTrace:
    """Stroboscopic record of a protocol run.

    ``polarization[i, n]`` is 2<I_z> of nucleus ``n`` after record ``i``;
    ``electron_population`` is the population of the electron |0> state.
    """

    times: np.ndarray
    polarization: np.ndarray
    electron_population: np.ndarray
    step_taus: np.ndarray
    flags: list[str] = field(default_factory=list)
    final_state: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.polarization) == len(self.electron_population) == len(self.step_taus) == n):
            raise ValueError("trace fields must have equal length")

    @property
    def mean_polarization(self) -> np.ndarray:
        return self.polarization.mean(axis=1)

    @property
    def final_polarization(self) -> np.ndarray:
        return self.polarization[-1]

    @property
    def total_time(self) -> float:
        return float(self.times[-1]) if len(self.times) else 0.0

    def to_csv(self, path) -> None:
        n_nuc = self.polarization.shape[1]
        header = ["time_s", "tau_s", "P0"] + [f"pol_nucleus_{i + 1}" for i in range(n_nuc)]
        lines = [",".join(header)]
        for t, tau, p0, pol in zip(self.times, self.step_taus, self.electron_population, self.polarization):
            lines.append(",".join(repr(float(v)) for v in (t, tau, p0, *pol)))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


class _Recorder:
    def __init__(self, sys: SpinSystem):
        self.iz = [nuclear_operators(sys, n)[2] for n in range(sys.n_nuclei)]
        self.p0 = kron(np.diag([1.0, 0.0]), np.eye(sys.dim // 2))
        self.times: list[float] = []
        self.pols: list[list[float]] = []
        self.pop: list[float] = []
        self.taus: list[float] = []

    def record(self, rho, t, tau):
        # Tr(rho O) for diagonal-free O via elementwise product
        self.pols.append([2 * float(np.real(np.sum(rho * op.T))) for op in self.iz])
        self.pop.append(float(np.real(np.sum(rho * self.p0.T))))
        self.times.append(t)
        self.taus.append(tau)

    def trace(self, flags=None, final_state=None) -> PolarizationTrace:
        pol = np.array(self.pols, dtype=float).reshape(len(self.times), len(self.iz))
        return PolarizationTrace(
            np.array(self.times), pol, np.array(self.pop), np.array(self.taus), flags or [], final_state
        )


def run_pulsepol(
    sys: SpinSystem,
    rho_0: np.ndarray,
    tau: float,
    n_cycles: int,
    shape: PulseShape = INSTANTANEOUS,
    compiler: Compiler | None = None,
    t_offset: float = 0.0,
) -> PolarizationTrace:
    """Apply the PulsePol period ``n_cycles`` times at fixed spacing ``tau``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    comp = compiler or Compiler(sys)
    seq = pulsepol(tau, shape)
    u = comp.period_propagator(seq)
    rec = _Recorder(sys)
    rho = rho_0
    t = t_offset
    for _ in range(n_cycles):
        rho = evolve(rho, u)
        t += seq.period
        rec.record(rho, t, tau)
    return rec.trace(final_state=rho)


def resonance_flags(sys: SpinSystem, sched: SweepSchedule) -> list[str]:
    """Warn when the sweep never gets within 3 gaps of any nuclear resonance."""
    flags = []
    for n, spec in enumerate(sys.nuclei):
        w_i = nuclear_frequency(spec, sys.b0)
        tau_r = resonance_spacing("pulsepol", w_i, sched.k)
        omegas = 2 * math.pi * sched.k / (8 * sched.taus)
        gap = PULSEPOL_K3_COUPLING * spec.a_x
        if np.min(np.abs(omegas - w_i)) > 3 * max(gap, 1e-30) and not (sched.tau_0 <= tau_r <= sched.tau_f):
            flags.append(f"nucleus {n + 1}: resonance {tau_r:.4e} s outside sweep window")
    return flags


def run_adpulse(
    sys: SpinSystem,
    rho_0: np.ndarray,
    sched: SweepSchedule,
    shape: PulseShape = INSTANTANEOUS,
    compiler: Compiler | None = None,
    t_offset: float = 0.0,
    granularity: str = "period",
) -> PolarizationTrace:
    """Swept-spacing PulsePol: ``n_p`` periods at each tau_0 + i delta_tau, i = 0..m.

    ``granularity="period"`` records after every period, ``"step"`` only after
    the last period of each step.
    """
    if granularity not in ("period", "step"):
        raise ValueError("granularity must be 'period' or 'step'")
    comp = compiler or Compiler(sys)
    rec = _Recorder(sys)
    rho = rho_0
    t = t_offset
    for tau in sched.taus:
        u = comp.period_propagator(pulsepol(float(tau), shape))
        for j in range(sched.n_p):
            rho = evolve(rho, u)
            t += 8 * tau
            if granularity == "period" or j == sched.n_p - 1:
                rec.record(rho, t, float(tau))
    return rec.trace(flags=resonance_flags(sys, sched), final_state=rho)


def adpulse_unitary(sys: SpinSystem, sched: SweepSchedule, shape: PulseShape = INSTANTANEOUS, compiler: Compiler | None = None) -> np.ndarray:
    """Propagator of one full sweep."""
    comp = compiler or Compiler(sys)
    u = np.eye(sys.dim, dtype=complex)
    for tau in sched.taus:
        up = comp.period_propagator(pulsepol(float(tau), shape))
        u = np.linalg.matrix_power(up, sched.n_p) @ u
    return u


# Landau-Zener overlay --------------------------------------------------------


@dataclass(frozen=True)
class LZParams:
    """Landau-Zener parameters; all frequencies in rad/s and times in s."""

    gamma_0: float
    omega_i: float
    tau_r: float
    beta: float = BETA

    def __post_init__(self):
        if self.gamma_0 < 0:
            raise ValueError("gamma_0 must be non-negative")

    @classmethod
    def from_spec(cls, spec: NuclearSpinSpec, b0: float, sched: SweepSchedule) -> "LZParams":
        w_i = nuclear_frequency(spec, b0)
        tau_r = resonance_spacing("pulsepol", w_i, sched.k)
        gamma_0 = tau_r**3 * spec.a_x**2 / (2 * math.pi * BETA**2 * sched.delta_tau)
        return cls(gamma_0, w_i, tau_r)


def sweep_rate(params: LZParams, sched: SweepSchedule) -> float:
    """Detuning sweep rate (3 pi / 16 tau_r^3)(delta_tau / N_p)."""
    return 3 * math.pi / (16 * params.tau_r**3) * sched.delta_tau / sched.n_p


def lz_phi(params: LZParams, sched: SweepSchedule, tau) -> np.ndarray:
    """Phi(tau) = 2 Delta sqrt(rate / 4 pi) with Delta = omega_I - 2 pi K / (8 tau)."""
    delta = params.omega_i - 2 * math.pi * sched.k / (8 * np.asarray(tau, dtype=float))
    return 2 * delta * math.sqrt(sweep_rate(params, sched) / (4 * math.pi))


def lz_prediction(params: LZParams, sched: SweepSchedule, tau) -> np.ndarray | float:
    """Population left in the initial diabatic state after sweeping to ``tau``.

    Evaluates exp(-2 pi Gamma_0 F(tau; tau_0)) with
    F = [arctan Phi(tau) - arctan Phi(tau_0)] / pi. With SI inputs Phi is
    very large away from resonance, so the curve is close to a step at tau_r.
    """
    f = (np.arctan(lz_phi(params, sched, tau)) - np.arctan(lz_phi(params, sched, sched.tau_0))) / math.pi
    p = np.exp(-2 * math.pi * params.gamma_0 * f)
    p = np.clip(p, 0.0, 1.0)
    return float(p) if np.ndim(p) == 0 else p


# reinitialization -------------------------------------------------------------


def reinitialize_electron(rho: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """Reset the electron (subsystem 0) to |0><0|, keeping the rest untouched."""
    rest = partial_trace(rho, dims, range(1, len(dims)))
    e0 = np.zeros((dims[0], dims[0]), dtype=complex)
    e0[0, 0] = 1
    return np.kron(e0, rest)


@dataclass(frozen=True)
class PulsePolBlock:
    tau: float
    n_p: int = 4
    shape: PulseShape = INSTANTANEOUS

    @property
    def duration(self) -> float:
        return 8 * self.tau * self.n_p

    def unitary(self, sys: SpinSystem, compiler: Compiler) -> np.ndarray:
        return np.linalg.matrix_power(compiler.period_propagator(pulsepol(self.tau, self.shape)), self.n_p)


@dataclass(frozen=True)
class AdPulseBlock:
    schedule: SweepSchedule
    shape: PulseShape = INSTANTANEOUS

    @property
    def duration(self) -> float:
        return self.schedule.duration

    def unitary(self, sys: SpinSystem, compiler: Compiler) -> np.ndarray:
        return adpulse_unitary(sys, self.schedule, self.shape, compiler)


ProtocolBlock = Union[PulsePolBlock, AdPulseBlock]


def run_hyperpolarization(
    sys: SpinSystem,
    block: ProtocolBlock,
    r: int,
    reinit_overhead: float = DEFAULT_REINIT_OVERHEAD,
    rho_0: np.ndarray | None = None,
    compiler: Compiler | None = None,
) -> PolarizationTrace:
    """Alternate ``r`` protocol blocks with electron resets; one record per cycle.

    The electron starts in |0>; each cycle is protocol block, record, then
    reinitialization. Reported times include ``reinit_overhead`` per cycle, so
    ``trace.total_time`` is the operating time t_ex.
    """
    if r < 1:
        raise ValueError("at least one reinitialization cycle is required")
    comp = compiler or Compiler(sys)
    u = block.unitary(sys, comp)
    rho = initial_state(sys, "0", "mixed") if rho_0 is None else rho_0
    rec = _Recorder(sys)
    t = 0.0
    cycle = block.duration + reinit_overhead
    tau_label = block.tau if isinstance(block, PulsePolBlock) else float(block.schedule.tau_0)
    for _ in range(r):
        rho = evolve(rho, u)
        t += cycle
        rec.record(rho, t, tau_label)
        rho = reinitialize_electron(rho, sys.dims)
    return rec.trace(final_state=rho)


# tuning rules and surface scans ---------------------------------------------------


@dataclass(frozen=True)
class TuningRule:
    """Per-point protocol parameters for hyperfine surface scans.

    Both protocols are centred on the analytic resonance tau_r of the point and
    get one numerically optimized knob each, starting from electron |0> and a
    mixed nucleus:

    PulsePol
        tau = tau_r; the packet length N_p <= ``max_periods`` that maximizes
        the pumped polarization.
    AdPulse
        a sweep symmetric about tau_r spanning ``span_fraction * tau_r``; the
        step count from ``step_counts`` that maximizes the pumped polarization.

    Transfer is not monotone in the step size once weaker crossings share the
    window (slow sweeps also follow them adiabatically), hence a candidate
    search rather than a closed-form rate.
    """

    k: int = 3
    span_fraction: float = 0.2
    step_counts: tuple[int, ...] = (25, 50, 100, 200, 400, 800, 1600)
    max_periods: int = 200
    n_p_sweep: int = 1

    def __post_init__(self):
        if not 0 < self.span_fraction < 2.0 / self.k:
            raise ValueError("span_fraction must keep the sweep clear of neighbouring harmonics")
        if not self.step_counts or min(self.step_counts) < 2:
            raise ValueError("step counts must be at least 2")
        if self.max_periods < 1:
            raise ValueError("max_periods must be positive")

    def tau_r(self, spec: NuclearSpinSpec, b0: float) -> float:
        return resonance_spacing("pulsepol", nuclear_frequency(spec, b0), self.k)

    def pulsepol(self, sys: SpinSystem, shape: PulseShape = INSTANTANEOUS, compiler: Compiler | None = None) -> PulsePolBlock:
        comp = compiler or Compiler(sys)
        tau = self.tau_r(sys.nuclei[0], sys.b0)
        u = comp.period_propagator(pulsepol(tau, shape))
        rho = initial_state(sys, "0", "mixed")
        best, best_n = -np.inf, 1
        for n in range(1, self.max_periods + 1):
            rho = evolve(rho, u)
            v = pumped_polarization(rho, sys, 0, self.k)
            if v > best + 1e-12:
                best, best_n = v, n
        return PulsePolBlock(tau, best_n, shape)

    def schedules(self, spec: NuclearSpinSpec, b0: float) -> list[SweepSchedule]:
        tau_r = self.tau_r(spec, b0)
        span = self.span_fraction * tau_r
        return [SweepSchedule.symmetric(tau_r, span, span / n, self.n_p_sweep, self.k) for n in self.step_counts]

    def adpulse(self, sys: SpinSystem, shape: PulseShape = INSTANTANEOUS, compiler: Compiler | None = None) -> AdPulseBlock:
        comp = compiler or Compiler(sys)
        rho_0 = initial_state(sys, "0", "mixed")
        best, best_sched = -np.inf, None
        for sched in self.schedules(sys.nuclei[0], sys.b0):
            v = pumped_polarization(evolve(rho_0, adpulse_unitary(sys, sched, shape, comp)), sys, 0, self.k)
            if v > best + 1e-12:
                best, best_sched = v, sched
        return AdPulseBlock(best_sched, shape)


def tune_delta_tau(
    sys: SpinSystem,
    tau_r: float,
    span: float,
    target: float,
    k: int = 3,
    n_p: int = 1,
    shape: PulseShape = INSTANTANEOUS,
    bounds: tuple[float, float] | None = None,
    iterations: int = 12,
    nucleus_index: int = 0,
) -> float:
    """Largest step size whose symmetric sweep reaches ``target`` pumped polarization.

    Bisection in log(delta_tau) between ``bounds`` (default span/4000 .. span/4)
    starting from electron |0> and a mixed nucleus. Transfer is not strictly
    monotone in delta_tau, so the result is a step size that works, not
    necessarily the largest one.
    """
    comp = Compiler(sys)
    rho_0 = initial_state(sys, "0", "mixed")
    lo, hi = bounds or (span / 4000, span / 4)

    def transfer(dt):
        sched = SweepSchedule.symmetric(tau_r, span, dt, n_p, k)
        return pumped_polarization(evolve(rho_0, adpulse_unitary(sys, sched, shape, comp)), sys, nucleus_index, k)

    if transfer(lo) < target:
        raise PhysicsError(f"target {target} not reached even at delta_tau = {lo:.3e} s")
    if transfer(hi) >= target:
        return hi
    for _ in range(iterations):
        mid = math.sqrt(lo * hi)
        if transfer(mid) >= target:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class ScanResult:
    a_x: np.ndarray
    a_z: np.ndarray
    polarization: np.ndarray  # [i_z, i_x]
    reasons: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        """Matrix CSV: header row of A_x/2pi (Hz), then one row per A_z/2pi (Hz)."""
        with open(path, "w") as fh:
            fh.write("a_z_hz\\a_x_hz," + ",".join(repr(float(x / (2 * math.pi))) for x in self.a_x) + "\n")
            for z, row in zip(self.a_z, self.polarization):
                fh.write(repr(float(z / (2 * math.pi))) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def region_violations(outer: np.ndarray, inner: np.ndarray, threshold: float = 0.5, rows=None) -> list[tuple[int, int]]:
    """Cells where ``inner`` reaches ``threshold`` but ``outer`` does not, within ``rows``."""
    outer = np.asarray(outer)
    inner = np.asarray(inner)
    rows = range(outer.shape[0]) if rows is None else rows
    bad = []
    for i in rows:
        for j in range(outer.shape[1]):
            if inner[i, j] >= threshold and not outer[i, j] >= threshold:
                bad.append((int(i), int(j)))
    return bad


def high_az_rows(a_z: np.ndarray) -> list[int]:
    """Upper half of the A_z grid (by magnitude)."""
    order = np.argsort(np.abs(np.asarray(a_z)), kind="stable")
    return sorted(int(i) for i in order[len(order) // 2 :])


def scan_point(protocol: str, b0: float, a_x: float, a_z: float, rule: TuningRule, shape: PulseShape) -> float:
    """Tuned single-nucleus run at one grid point; returns the final pumped polarization."""
    spec = NuclearSpinSpec(a_x, a_z)
    sys = SpinSystem(b0, (spec,)).validate()
    comp = Compiler(sys)
    p = protocol.lower()
    if p == "pulsepol":
        block = rule.pulsepol(sys, shape, comp)
    elif p == "adpulse":
        block = rule.adpulse(sys, shape, comp)
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    rho = evolve(initial_state(sys, "0", "mixed"), block.unitary(sys, comp))
    return pumped_polarization(rho, sys, 0, rule.k)


def hyperfine_surface_scan(
    protocol: str,
    a_x_grid: Sequence[float],
    a_z_grid: Sequence[float],
    b0: float,
    rule: TuningRule = TuningRule(),
    shape: PulseShape = INSTANTANEOUS,
    workers: int = 1,
) -> ScanResult:
    """Final pumped polarization (see :func:`pumped_polarization`) on an A_x x A_z grid.

    Failing points are stored as NaN with the reason keyed by grid index.
    """
    from .parallel import parallel_map

    ax = np.asarray(a_x_grid, dtype=float)
    az = np.asarray(a_z_grid, dtype=float)
    jobs = [(protocol, b0, float(x), float(z), rule, shape) for z in az for x in ax]
    results = parallel_map(_scan_job, jobs, workers)
    out = np.full((len(az), len(ax)), np.nan)
    reasons = {}
    for idx, (val, err) in enumerate(results):
        iz, ix = divmod(idx, len(ax))
        if err is None:
            out[iz, ix] = val
        else:
            reasons[(iz, ix)] = err
    return ScanResult(ax, az, out, reasons)


def _scan_job(args):
    try:
        return scan_point(*args), None
    except (PhysicsError, ValueError) as exc:
        return float("nan"), str(exc)


def resonance_fwhm(offsets: Sequence[float], values: Sequence[float]) -> float:
    """Full width at half maximum of the peak containing the largest value.

    Half-maximum crossings are linearly interpolated; a peak that does not
    drop below half maximum before the grid edge returns ``inf``.
    """
    x = np.asarray(offsets, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.shape != y.shape or len(x) < 3 or np.any(np.diff(x) <= 0):
        raise ValueError("need at least three strictly increasing offsets with matching values")
    i = int(np.argmax(y))
    half = y[i] / 2
    lo = i
    while lo > 0 and y[lo - 1] >= half:
        lo -= 1
    hi = i
    while hi < len(y) - 1 and y[hi + 1] >= half:
        hi += 1
    if lo == 0 or hi == len(y) - 1:
        return math.inf
    left = x[lo - 1] + (half - y[lo - 1]) * (x[lo] - x[lo - 1]) / (y[lo] - y[lo - 1])
    right = x[hi] + (half - y[hi]) * (x[hi + 1] - x[hi]) / (y[hi + 1] - y[hi])
    return float(right - left)
