"""Pulse shapes, XY-8 / PulsePol sequences and single-period propagators.

Pulse spacings are measured centre to centre. With finite pulses the free
delays are shortened by the pulse widths so the period is the same as with
instantaneous pulses (8 tau for both XY-8 and PulsePol).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence, Union

import numpy as np

from .hamiltonian import SX, SY, SpinSystem, build_static_hamiltonian
from .quantum import EigenPropagator, embed

X = 0.0
Y = math.pi / 2


class SequenceError(ValueError):
    pass


@dataclass(frozen=True)
class PulseShape:
    kind: Literal["instantaneous", "gaussian"] = "instantaneous"
    duration: float = 0.0
    sigma: float = 0.0
    truncation: float = 2.0
    n_slices: int = 32

    def __post_init__(self):
        if self.kind == "gaussian":
            if self.duration <= 0 or self.sigma <= 0:
                raise SequenceError("gaussian pulses need positive duration and sigma")
            if self.n_slices < 1:
                raise SequenceError("n_slices must be positive")
        elif self.kind == "instantaneous":
            if self.duration != 0.0 or self.sigma != 0.0:
                raise SequenceError("instantaneous pulses carry no timing fields")
        else:
            raise SequenceError(f"unknown pulse shape {self.kind!r}")

    @property
    def width(self) -> float:
        return self.duration if self.kind == "gaussian" else 0.0


INSTANTANEOUS = PulseShape()


def gaussian(duration: float = 16e-9, n_slices: int = 32, truncation: float = 2.0) -> PulseShape:
    """Gaussian truncated at +-``truncation`` sigma, filling ``duration``."""
    return PulseShape("gaussian", duration, duration / (2 * truncation), truncation, n_slices)


@dataclass(frozen=True)
class Pulse:
    phase: float
    angle: float
    shape: PulseShape = INSTANTANEOUS

    def __post_init__(self):
        if not 0 < self.angle <= 2 * math.pi + 1e-12:
            raise SequenceError("rotation angle must lie in (0, 2pi]")
        object.__setattr__(self, "phase", float(self.phase) % (2 * math.pi))

    @property
    def duration(self) -> float:
        return self.shape.width


@dataclass(frozen=True)
class Delay:
    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise SequenceError(f"negative delay {self.duration:.3e} s: pulses overlap")


Element = Union[Pulse, Delay]


@dataclass(frozen=True)
class PulseSequence:
    elements: tuple[Element, ...]
    period: float
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if self.period <= 0:
            raise SequenceError("period must be positive")
        total = sum(e.duration for e in self.elements)
        if abs(total - self.period) > 1e-15 * max(self.period, 1.0) + 1e-9 * self.period:
            raise SequenceError(f"element durations sum to {total:.6e}, period is {self.period:.6e}")

    @property
    def pulses(self) -> list[Pulse]:
        return [e for e in self.elements if isinstance(e, Pulse)]

    @property
    def delays(self) -> list[Delay]:
        return [e for e in self.elements if isinstance(e, Delay)]


def _timeline(events: Sequence[tuple[float, Pulse]], period: float, label: str) -> PulseSequence:
    """Build a sequence from pulse centre times, inserting the free delays."""
    elements: list[Element] = []
    t = 0.0
    for centre, pulse in events:
        start = centre - pulse.duration / 2
        gap = start - t
        if gap < -1e-18:
            raise SequenceError(f"pulse at {centre:.3e} s overlaps the previous element")
        if gap > 0:
            elements.append(Delay(gap))
        elements.append(pulse)
        t = start + pulse.duration
    if period - t < -1e-18:
        raise SequenceError("pulses run past the end of the period")
    if period - t > 0:
        elements.append(Delay(period - t))
    return PulseSequence(tuple(elements), period, label)


def xy8(tau: float, shape: PulseShape = INSTANTANEOUS) -> PulseSequence:
    """XY-8 block tau/2-X-tau-Y-tau-X-tau-Y-tau-Y-tau-X-tau-Y-tau-X-tau/2, period 8 tau."""
    if tau <= shape.width:
        raise SequenceError("pulse spacing must exceed the pulse duration")
    phases = [X, Y, X, Y, Y, X, Y, X]
    events = [(tau / 2 + k * tau, Pulse(p, math.pi, shape)) for k, p in enumerate(phases)]
    return _timeline(events, 8 * tau, "XY8")


def pulsepol(tau: float, shape: PulseShape = INSTANTANEOUS) -> PulseSequence:
    """PulsePol period ABAB with A = (pi/2)_Y-tau-pi_X-tau-(pi/2)_Y and B = (pi/2)_X-tau-pi_Y-tau-(pi/2)_X.

    Each half-block spans 2 tau. Its pi/2 pulses sit flush with the block edges and
    the pi pulse is centred, so finite pulses keep the period at exactly 8 tau.
    """
    d = shape.width
    if d > 0 and tau <= 2 * d:
        raise SequenceError("pulse spacing must exceed twice the pulse duration")
    events: list[tuple[float, Pulse]] = []
    for b, (outer, inner) in enumerate([(Y, X), (X, Y), (Y, X), (X, Y)]):
        t0 = 2 * tau * b
        events.append((t0 + d / 2, Pulse(outer, math.pi / 2, shape)))
        events.append((t0 + tau, Pulse(inner, math.pi, shape)))
        events.append((t0 + 2 * tau - d / 2, Pulse(outer, math.pi / 2, shape)))
    return _timeline(events, 8 * tau, "PulsePol")


def build_sequence(protocol: str, tau: float, shape: PulseShape = INSTANTANEOUS) -> PulseSequence:
    p = protocol.lower()
    if p == "xy8":
        return xy8(tau, shape)
    if p == "pulsepol":
        return pulsepol(tau, shape)
    raise SequenceError(f"unknown protocol {protocol!r}")


def sequence_from_elements(items: Sequence[dict], label: str = "custom") -> PulseSequence:
    """Explicit element list, e.g. ``[{"delay": 1e-7}, {"phase": 0, "angle": pi}]``."""
    elements: list[Element] = []
    for it in items:
        if "delay" in it:
            elements.append(Delay(float(it["delay"])))
        else:
            elements.append(Pulse(float(it.get("phase", 0.0)), float(it["angle"]), it.get("shape", INSTANTANEOUS)))
    period = sum(e.duration for e in elements)
    return PulseSequence(tuple(elements), period, label)


# compilation ----------------------------------------------------------------


@dataclass
class Segment:
    """Piecewise-constant piece of the period: either (hamiltonian, duration) or an exact unitary."""

    duration: float
    hamiltonian: np.ndarray | None = None
    unitary: np.ndarray | None = None


def gaussian_amplitudes(shape: PulseShape, angle: float) -> tuple[np.ndarray, float]:
    """Slice Rabi frequencies (rad/s) whose summed area equals ``angle`` exactly."""
    n = shape.n_slices
    dt = shape.duration / n
    t = (np.arange(n) + 0.5) * dt - shape.duration / 2
    env = np.exp(-(t**2) / (2 * shape.sigma**2))
    return angle * env / (env.sum() * dt), dt


class Compiler:
    """Compiles sequences against one spin system, caching pulse propagators.

    The static Hamiltonian is diagonalized once; delay propagators are then
    cheap for any duration, which is what parameter sweeps need.
    """

    def __init__(self, sys: SpinSystem, h_static: np.ndarray | None = None):
        self.sys = sys
        self.h_static = build_static_hamiltonian(sys) if h_static is None else h_static
        self.static = EigenPropagator(self.h_static)
        self.sx = embed(SX, 0, sys.dims)
        self.sy = embed(SY, 0, sys.dims)
        self._pulse_cache: dict[Pulse, np.ndarray] = {}

    def drive(self, phase: float) -> np.ndarray:
        return math.cos(phase) * self.sx + math.sin(phase) * self.sy

    def segments(self, seq: PulseSequence) -> list[Segment]:
        out: list[Segment] = []
        for e in seq.elements:
            if isinstance(e, Delay):
                if e.duration > 0:
                    out.append(Segment(e.duration, hamiltonian=self.h_static))
            elif e.shape.kind == "instantaneous":
                out.append(Segment(0.0, unitary=self.pulse_unitary(e)))
            else:
                amps, dt = gaussian_amplitudes(e.shape, e.angle)
                drive = self.drive(e.phase)
                for a in amps:
                    out.append(Segment(dt, hamiltonian=self.h_static + a * drive))
        return out

    def pulse_unitary(self, pulse: Pulse) -> np.ndarray:
        u = self._pulse_cache.get(pulse)
        if u is None:
            drive = self.drive(pulse.phase)
            if pulse.shape.kind == "instantaneous":
                # drive has eigenvalues +-1/2 on the electron, so exp(-i angle drive) is exact
                u = EigenPropagator(drive).at(pulse.angle)
            else:
                amps, dt = gaussian_amplitudes(pulse.shape, pulse.angle)
                u = np.eye(self.sys.dim, dtype=complex)
                for a in amps:
                    u = EigenPropagator(self.h_static + a * drive).at(dt) @ u
            self._pulse_cache[pulse] = u
        return u

    def period_propagator(self, seq: PulseSequence) -> np.ndarray:
        u = np.eye(self.sys.dim, dtype=complex)
        for e in seq.elements:
            if isinstance(e, Delay):
                if e.duration > 0:
                    u = self.static.at(e.duration) @ u
            else:
                u = self.pulse_unitary(e) @ u
        return u


def compile_sequence(seq: PulseSequence, sys: SpinSystem) -> list[Segment]:
    return Compiler(sys).segments(seq)


def segments_propagator(segments: Sequence[Segment], dim: int) -> np.ndarray:
    """Time-ordered product of segment propagators (leftmost = latest)."""
    u = np.eye(dim, dtype=complex)
    for s in segments:
        step = s.unitary if s.unitary is not None else EigenPropagator(s.hamiltonian).at(s.duration)
        u = step @ u
    return u


def period_propagator(seq: PulseSequence, sys: SpinSystem) -> np.ndarray:
    return Compiler(sys).period_propagator(seq)
