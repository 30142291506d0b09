import math

import pytest

from adpulse.hamiltonian import NuclearSpinSpec, SpinSystem, b0_for_larmor_resonance

TWO_PI = 2 * math.pi

# field that puts the bare 13C K=3 resonance at 1497 ns
B0 = b0_for_larmor_resonance(1497e-9)
STRONG = NuclearSpinSpec(TWO_PI * 1.42e6, TWO_PI * 4.12e6)
WEAK = NuclearSpinSpec(TWO_PI * 137e3, TWO_PI * 607e3)

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def strong_system():
    return SpinSystem(B0, (STRONG,)).validate()


@pytest.fixture
def weak_system():
    return SpinSystem(B0, (WEAK,)).validate()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
