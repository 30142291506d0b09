import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from conftest import B0, STRONG

from adpulse.floquet import (
    CrossingOutsideWindow,
    detect_crossings,
    find_avoided_crossing,
    floquet_phases,
    spectroscopy,
    spectrum_from_unitaries,
    wrap,
)
from adpulse.hamiltonian import NuclearSpinSpec, SpinSystem, nuclear_frequency, resonance_spacing
from adpulse.protocols import flip_pair

TWO_PI = 2 * math.pi


@given(st.integers(0, 2**31 - 1), st.sampled_from([2, 4, 8]))
@settings(max_examples=40, deadline=None)
def test_eigendecomposition_reconstructs_unitary(seed, d):
    u = unitary_group.rvs(d, random_state=seed)
    phases, q = floquet_phases(u)
    assert np.all(phases > -math.pi) and np.all(phases <= math.pi)
    assert np.allclose(q.conj().T @ q, np.eye(d), atol=1e-10)
    assert np.allclose(q @ np.diag(np.exp(-1j * phases)) @ q.conj().T, u, atol=1e-10)


def test_degenerate_identity_gives_computational_basis():
    phases, q = floquet_phases(np.eye(4, dtype=complex))
    assert np.allclose(phases, 0)
    assert np.allclose(np.abs(q), np.eye(4))


def test_wrap_range():
    assert wrap(math.pi) == pytest.approx(math.pi)
    assert wrap(-math.pi) == pytest.approx(math.pi)
    assert wrap(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


def test_tau_grid_must_ascend():
    with pytest.raises(ValueError):
        spectrum_from_unitaries([2.0, 1.0], [np.eye(2), np.eye(2)], np.array([1, 0]))


def _crossing(sys, window=0.03, points=121):
    tr = resonance_spacing("pulsepol", nuclear_frequency(sys.nuclei[0], sys.b0), 3)
    a, c = flip_pair(3)
    sp = spectroscopy(sys, "pulsepol", np.linspace((1 - window) * tr, (1 + window) * tr, points), a)
    return sp, (sp.branch_of(a, 0), sp.branch_of(c, 0)), tr


def test_crossing_at_analytic_resonance_weak_coupling():
    sys = SpinSystem(0.6, (NuclearSpinSpec(TWO_PI * 0.1e6, TWO_PI * 0.5e6),))
    sp, br, tr = _crossing(sys)
    cross = find_avoided_crossing(sp, br, strict=True)
    assert abs(cross.tau - tr) / tr < 1e-3
    assert not sp.flags
    assert detect_crossings(sp, br, threshold=2 * cross.gap)


def test_crossing_gap_vanishes_without_transverse_coupling():
    sys = SpinSystem(0.6, (NuclearSpinSpec(0.0, TWO_PI * 0.5e6),))
    sp, br, _ = _crossing(sys)
    assert find_avoided_crossing(sp, br).gap < 1e-6


def test_strong_coupling_crossing_within_one_percent():
    sys = SpinSystem(B0, (STRONG,))
    sp, br, tr = _crossing(sys, window=0.05, points=201)
    cross = find_avoided_crossing(sp, br, strict=True)
    assert abs(cross.tau - tr) / tr < 0.01


def test_boundary_minimum_is_flagged_or_raised():
    sys = SpinSystem(0.6, (NuclearSpinSpec(TWO_PI * 0.1e6, TWO_PI * 0.5e6),))
    tr = resonance_spacing("pulsepol", nuclear_frequency(sys.nuclei[0], sys.b0), 3)
    a, c = flip_pair(3)
    sp = spectroscopy(sys, "pulsepol", np.linspace(1.01 * tr, 1.05 * tr, 21), a)
    br = (sp.branch_of(a, 0), sp.branch_of(c, 0))
    assert find_avoided_crossing(sp, br).at_boundary
    with pytest.raises(CrossingOutsideWindow):
        find_avoided_crossing(sp, br, strict=True)


def test_spectrum_csv(tmp_path):
    sys = SpinSystem(0.6, (NuclearSpinSpec(TWO_PI * 0.1e6, TWO_PI * 0.5e6),))
    sp, _, _ = _crossing(sys, points=5)
    path = tmp_path / "s.csv"
    sp.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "tau_s,branch,phase_rad,overlap"
    assert len(lines) == 1 + 5 * 4
