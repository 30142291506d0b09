"""Rotating-frame Hamiltonian of an effective two-level electron coupled to nuclei.

Subsystem order is electron, then each 13C nucleus, then the optional host 14N.
The electron basis is ordered (|0>, |-1>) in NV language, i.e. S_z = +1/2, -1/2.

Two electron frames are supported:

``"nv"`` (default)
    Hyperfine terms enter as ``(S_z - 1/2) A.I``, the NV m_s in {0, -1} doublet
    written with S_z = +-1/2. The electron-averaged nuclear precession is then
    ``sqrt((w_L - A_z/2)^2 + (A_x/2)^2)``, which is the frequency that sets the
    dynamical-decoupling resonances.
``"symmetric"``
    Hyperfine terms enter as ``S_z A.I`` literally; the same frequency is then
    the nuclear gap of the S_z = -1/2 sector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .quantum import MAX_DIM, embed, kron, spin_operators

TWO_PI = 2.0 * math.pi

GAMMA_E = TWO_PI * 28.024951e9  # rad s^-1 T^-1
GAMMA_C13 = TWO_PI * 10.7084e6
DEFAULT_N14_HYPERFINE = TWO_PI * 2.16e6
VALIDITY_FACTOR = 10.0

Frame = Literal["nv", "symmetric"]

SX, SY, SZ = spin_operators(0.5)
NX, NY, NZ = spin_operators(1.0)


class PhysicsError(ValueError):
    """A physically invalid configuration (validity condition or size cap violated)."""


@dataclass(frozen=True)
class NuclearSpinSpec:
    """A spin-1/2 nucleus; hyperfine components in rad/s."""

    a_x: float
    a_z: float
    gamma: float = GAMMA_C13

    def __post_init__(self):
        if self.a_x < 0:
            raise PhysicsError("a_x must be non-negative (its phase is absorbed into the nuclear frame)")
        if not (math.isfinite(self.a_x) and math.isfinite(self.a_z) and math.isfinite(self.gamma)):
            raise PhysicsError("nuclear spin parameters must be finite")


@dataclass(frozen=True)
class HostNitrogenSpec:
    a_parallel: float = DEFAULT_N14_HYPERFINE
    initial_state: Literal["-1", "0", "+1", "mixed"] = "mixed"

    def __post_init__(self):
        if not math.isfinite(self.a_parallel):
            raise PhysicsError("14N hyperfine must be finite")
        if self.initial_state not in ("-1", "0", "+1", "mixed"):
            raise PhysicsError(f"unknown 14N initial state {self.initial_state!r}")


@dataclass(frozen=True)
class SpinSystem:
    b0: float
    nuclei: tuple[NuclearSpinSpec, ...] = ()
    nitrogen: HostNitrogenSpec | None = None
    frame: Frame = "nv"

    def __post_init__(self):
        object.__setattr__(self, "nuclei", tuple(self.nuclei))
        if self.frame not in ("nv", "symmetric"):
            raise PhysicsError(f"unknown electron frame {self.frame!r}")

    @property
    def dims(self) -> list[int]:
        return [2] + [2] * len(self.nuclei) + ([3] if self.nitrogen is not None else [])

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_nuclei(self) -> int:
        return len(self.nuclei)

    @property
    def nitrogen_index(self) -> int | None:
        return None if self.nitrogen is None else 1 + len(self.nuclei)

    def validate(self) -> "SpinSystem":
        if self.b0 <= 0:
            raise PhysicsError("B0 must be positive")
        if self.dim > MAX_DIM:
            raise PhysicsError(f"Hilbert dimension {self.dim} exceeds cap {MAX_DIM}")
        couplings = [abs(c) for n in self.nuclei for c in (n.a_x, n.a_z)]
        if self.nitrogen is not None:
            couplings.append(abs(self.nitrogen.a_parallel))
        if couplings and GAMMA_E * self.b0 < VALIDITY_FACTOR * max(couplings):
            raise PhysicsError(
                "electron Zeeman splitting must exceed every hyperfine coupling by a factor 10"
            )
        return self

    def with_nuclei(self, nuclei) -> "SpinSystem":
        return replace(self, nuclei=tuple(nuclei))

    def without_nitrogen(self) -> "SpinSystem":
        return replace(self, nitrogen=None)


def larmor(spec: NuclearSpinSpec, b0: float) -> float:
    return spec.gamma * b0


def nuclear_frequency(spec: NuclearSpinSpec, b0: float) -> float:
    """Net nuclear precession frequency (rad/s) dressed by the hyperfine field."""
    if b0 <= 0:
        raise PhysicsError("B0 must be positive")
    w_l = spec.gamma * b0
    return math.hypot(w_l - spec.a_z / 2.0, spec.a_x / 2.0)


def nuclear_axis(spec: NuclearSpinSpec, b0: float) -> np.ndarray:
    """Unit vector (x, y, z) of the electron-averaged nuclear precession axis (nv frame)."""
    w_l = spec.gamma * b0
    v = np.array([-spec.a_x / 2.0, 0.0, w_l - spec.a_z / 2.0])
    norm = np.linalg.norm(v)
    if norm == 0:
        return np.array([0.0, 0.0, 1.0])
    return v / norm


def resonance_spacing(protocol: str, omega_i: float, k: int) -> float:
    """Resonant pulse spacing tau_r (s) for the given odd harmonic ``k``."""
    if int(k) != k or k < 1 or k % 2 == 0:
        raise ValueError(f"harmonic index must be an odd positive integer, got {k}")
    if omega_i <= 0:
        raise ValueError("omega_I must be positive")
    p = protocol.lower()
    if p == "xy8":
        return k * math.pi / omega_i
    if p == "pulsepol":
        return k * math.pi / (4.0 * omega_i)
    raise ValueError(f"unknown protocol {protocol!r}")


def electron_operators(sys: SpinSystem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dims = sys.dims
    return tuple(embed(op, 0, dims) for op in (SX, SY, SZ))


def nuclear_operators(sys: SpinSystem, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not 0 <= n < sys.n_nuclei:
        raise IndexError(f"nucleus index {n} out of range")
    dims = sys.dims
    return tuple(embed(op, 1 + n, dims) for op in (SX, SY, SZ))


def _electron_hyperfine_factor(sys: SpinSystem) -> np.ndarray:
    if sys.frame == "nv":
        return SZ - 0.5 * np.eye(2)
    return SZ


def build_static_hamiltonian(sys: SpinSystem) -> np.ndarray:
    """Static (delay-period) Hamiltonian in rad/s."""
    sys.validate()
    dims = sys.dims
    h = np.zeros((sys.dim, sys.dim), dtype=complex)
    e_fac = _electron_hyperfine_factor(sys)
    for n, spec in enumerate(sys.nuclei):
        ix = embed(SX, 1 + n, dims)
        iz = embed(SZ, 1 + n, dims)
        h += spec.gamma * sys.b0 * iz
        # electron factor times nuclear operator, both embedded in the full space
        coupling = spec.a_x * SX + spec.a_z * SZ
        parts = [np.eye(d, dtype=complex) for d in dims]
        parts[0] = e_fac
        parts[1 + n] = coupling
        h += kron(*parts)
    if sys.nitrogen is not None:
        parts = [np.eye(d, dtype=complex) for d in dims]
        parts[0] = e_fac
        parts[-1] = sys.nitrogen.a_parallel * NZ
        h += kron(*parts)
    return h


def averaged_nuclear_hamiltonian(spec: NuclearSpinSpec, b0: float, frame: Frame = "nv") -> np.ndarray:
    """2x2 nuclear Hamiltonian averaged over the two electron states."""
    w_l = spec.gamma * b0
    shift = 0.5 if frame == "nv" else 0.0
    return w_l * SZ - shift * (spec.a_x * SX + spec.a_z * SZ)


def sector_hamiltonian(spec: NuclearSpinSpec, b0: float, ms: float, frame: Frame = "nv") -> np.ndarray:
    """Nuclear Hamiltonian for the electron sector with S_z = ``ms``."""
    w_l = spec.gamma * b0
    fac = ms - 0.5 if frame == "nv" else ms
    return w_l * SZ + fac * (spec.a_x * SX + spec.a_z * SZ)


# basis vectors --------------------------------------------------------------

ELECTRON_0 = np.array([1.0, 0.0], dtype=complex)
ELECTRON_1 = np.array([0.0, 1.0], dtype=complex)
UP = np.array([1.0, 0.0], dtype=complex)
DOWN = np.array([0.0, 1.0], dtype=complex)


def dressed_nuclear_states(spec: NuclearSpinSpec, b0: float) -> tuple[np.ndarray, np.ndarray]:
    """(up, down) eigenvectors of the electron-averaged nuclear Hamiltonian.

    "up" is the state whose spin points along the averaged precession axis.
    """
    n = nuclear_axis(spec, b0)
    theta = math.atan2(n[0], n[2])
    up = np.array([math.cos(theta / 2), math.sin(theta / 2)], dtype=complex)
    down = np.array([-math.sin(theta / 2), math.cos(theta / 2)], dtype=complex)
    return up, down


def nitrogen_state(spec: HostNitrogenSpec) -> np.ndarray:
    if spec.initial_state == "mixed":
        return np.eye(3, dtype=complex) / 3
    idx = {"+1": 0, "0": 1, "-1": 2}[spec.initial_state]
    rho = np.zeros((3, 3), dtype=complex)
    rho[idx, idx] = 1
    return rho


def initial_state(
    sys: SpinSystem,
    electron: str = "0",
    nuclear: str | list[str] = "mixed",
) -> np.ndarray:
    """Product density matrix: electron |0>, |1> or mixed; nuclei up/down/mixed.

    Nuclear labels ``up``/``down`` are lab-frame I_z eigenstates,
    ``dressed_up``/``dressed_down`` follow the averaged precession axis.
    """
    e = {"0": np.diag([1, 0]), "1": np.diag([0, 1]), "mixed": np.eye(2) / 2}[electron]
    labels = [nuclear] * sys.n_nuclei if isinstance(nuclear, str) else list(nuclear)
    if len(labels) != sys.n_nuclei:
        raise ValueError("one nuclear label per nucleus required")
    parts = [np.asarray(e, dtype=complex)]
    for spec, lab in zip(sys.nuclei, labels):
        if lab == "mixed":
            parts.append(np.eye(2, dtype=complex) / 2)
        elif lab in ("up", "down"):
            v = UP if lab == "up" else DOWN
            parts.append(np.outer(v, v.conj()))
        elif lab in ("dressed_up", "dressed_down"):
            up, down = dressed_nuclear_states(spec, sys.b0)
            v = up if lab == "dressed_up" else down
            parts.append(np.outer(v, v.conj()))
        else:
            raise ValueError(f"unknown nuclear label {lab!r}")
    if sys.nitrogen is not None:
        parts.append(nitrogen_state(sys.nitrogen))
    return kron(*parts)


def b0_for_larmor_resonance(tau_r: float, k: int = 3, gamma: float = GAMMA_C13) -> float:
    """Field at which a bare nucleus has its PulsePol resonance at ``tau_r``."""
    omega = k * math.pi / (4.0 * tau_r)
    return omega / gamma
