"""Pulsed dynamic nuclear polarization of NV-coupled 13C spins: PulsePol and swept-spacing AdPulse."""

from .hamiltonian import HostNitrogenSpec, NuclearSpinSpec, PhysicsError, SpinSystem, initial_state
from .protocols import AdPulseBlock, PulsePolBlock, SweepSchedule, run_adpulse, run_hyperpolarization, run_pulsepol
from .pulses import INSTANTANEOUS, PulseShape, SequenceError, gaussian

__version__ = "0.1.0"

__all__ = [
    "AdPulseBlock",
    "HostNitrogenSpec",
    "INSTANTANEOUS",
    "NuclearSpinSpec",
    "PhysicsError",
    "PulsePolBlock",
    "PulseShape",
    "SequenceError",
    "SpinSystem",
    "SweepSchedule",
    "gaussian",
    "initial_state",
    "run_adpulse",
    "run_hyperpolarization",
    "run_pulsepol",
]
