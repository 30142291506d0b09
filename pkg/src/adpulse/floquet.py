"""Floquet phases of single-period propagators and Floquet spectroscopy.

A Floquet state obeys ``U(T)|chi> = exp(-i eps)|chi>``; the phases ``eps`` are
reported in (-pi, pi]. Spectroscopy evaluates them on a grid of pulse spacings
and follows each eigenvector from one grid point to the next by maximal
overlap, so avoided crossings show up as minima of the wrapped distance between
two tracked branches.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import schur
from scipy.optimize import linear_sum_assignment

from .hamiltonian import SpinSystem
from .pulses import INSTANTANEOUS, Compiler, PulseShape, build_sequence
from .quantum import check_unitary

DEGENERACY_TOL = 1e-9
TRACKING_MIN_OVERLAP = 0.5


class TrackingError(RuntimeError):
    pass


class CrossingOutsideWindow(RuntimeError):
    """The minimum gap sits on the edge of the scanned grid."""


def wrap(phase):
    """Map phases onto (-pi, pi]."""
    w = np.mod(np.asarray(phase, dtype=float) + math.pi, 2 * math.pi) - math.pi
    return np.where(w == -math.pi, math.pi, w)


def wrapped_distance(a, b):
    return np.abs(wrap(np.asarray(a) - np.asarray(b)))


def floquet_phases(u, label_observable: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition ``U|chi_l> = exp(-i eps_l)|chi_l>``.

    Returns ``(phases, vectors)`` with eigenvectors as columns. A complex Schur
    form of a unitary is diagonal, so the vectors are orthonormal even inside
    degenerate clusters. Degenerate clusters are rotated to diagonalize
    ``label_observable`` (default: the computational-basis index), which makes
    the basis deterministic in the uncoupled limit.
    """
    u = check_unitary(u)
    t, q = schur(u, output="complex")
    lam = np.diag(t)
    phases = wrap(-np.angle(lam))
    dim = u.shape[0]
    obs = np.diag(np.arange(dim, dtype=float)) if label_observable is None else label_observable
    order = np.argsort(phases, kind="stable")
    phases, q = phases[order], q[:, order]
    # clusters of (circularly) degenerate phases
    clusters: list[list[int]] = []
    for i in range(dim):
        if clusters and wrapped_distance(phases[i], phases[clusters[-1][-1]]) < DEGENERACY_TOL:
            clusters[-1].append(i)
        else:
            clusters.append([i])
    if len(clusters) > 1 and wrapped_distance(phases[clusters[0][0]], phases[clusters[-1][-1]]) < DEGENERACY_TOL:
        clusters[0] = clusters.pop() + clusters[0]
    for c in clusters:
        if len(c) > 1:
            sub = q[:, c]
            m = sub.conj().T @ obs @ sub
            _, w = np.linalg.eigh(0.5 * (m + m.conj().T))
            q[:, c] = sub @ w
    # fix the global phase of each vector: largest component real positive
    for j in range(dim):
        k = int(np.argmax(np.abs(q[:, j])))
        q[:, j] *= np.exp(-1j * np.angle(q[k, j]))
    return phases, q


@dataclass
class FloquetSpectrum:
    """Tracked Floquet spectrum; ``phases[i, b]`` is branch ``b`` at ``taus[i]``.

    ``phases`` are wrapped to (-pi, pi]; ``unwrapped`` continues each branch
    across the branch cut. ``overlaps[i, b]`` is ``|<ref|chi_b>|^2``.
    """

    taus: np.ndarray
    phases: np.ndarray
    unwrapped: np.ndarray
    states: np.ndarray
    overlaps: np.ndarray
    flags: list[str] = field(default_factory=list)

    @property
    def n_branches(self) -> int:
        return self.phases.shape[1]

    def branch_of(self, vector: np.ndarray, index: int = 0) -> int:
        """Branch with the largest overlap with ``vector`` at grid point ``index``."""
        ov = np.abs(vector.conj() @ self.states[index]) ** 2
        return int(np.argmax(ov))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau_s", "branch", "phase_rad", "overlap"])
            for i, tau in enumerate(self.taus):
                for b in range(self.n_branches):
                    w.writerow([repr(float(tau)), b, repr(float(self.phases[i, b])), repr(float(self.overlaps[i, b]))])


def _track(all_phases, all_states, flags) -> tuple[np.ndarray, np.ndarray]:
    n, dim = all_phases.shape
    phases = np.empty_like(all_phases)
    states = np.empty_like(all_states)
    phases[0], states[0] = all_phases[0], all_states[0]
    for i in range(1, n):
        ov = np.abs(states[i - 1].conj().T @ all_states[i]) ** 2  # [prev branch, new eigvec]
        rows, cols = linear_sum_assignment(-ov)
        perm = np.empty(dim, dtype=int)
        perm[rows] = cols
        best = ov[rows, cols]
        if best.min() < TRACKING_MIN_OVERLAP:
            flags.append(f"tracking ambiguity between grid points {i - 1} and {i} (min overlap {best.min():.3f})")
        phases[i] = all_phases[i][perm]
        states[i] = all_states[i][:, perm]
    return phases, states


def unwrap_branches(phases: np.ndarray) -> np.ndarray:
    return np.unwrap(phases, axis=0)


def spectrum_from_unitaries(
    taus: Sequence[float],
    unitaries: Sequence[np.ndarray],
    reference: np.ndarray,
    label_observable: np.ndarray | None = None,
) -> FloquetSpectrum:
    taus = np.asarray(taus, dtype=float)
    if np.any(np.diff(taus) <= 0):
        raise ValueError("tau grid must be strictly ascending")
    res = [floquet_phases(u, label_observable) for u in unitaries]
    all_phases = np.array([r[0] for r in res])
    all_states = np.array([r[1] for r in res])
    flags: list[str] = []
    phases, states = _track(all_phases, all_states, flags)
    ref = np.asarray(reference, dtype=complex).ravel()
    ref = ref / np.linalg.norm(ref)
    overlaps = np.abs(np.einsum("j,ijb->ib", ref.conj(), states)) ** 2
    return FloquetSpectrum(taus, phases, unwrap_branches(phases), states, overlaps, flags)


def spectroscopy(
    sys: SpinSystem,
    protocol: str,
    taus: Sequence[float],
    reference: np.ndarray,
    shape: PulseShape = INSTANTANEOUS,
    compiler: Compiler | None = None,
) -> FloquetSpectrum:
    """Floquet spectrum of ``protocol`` over the pulse-spacing grid ``taus``."""
    comp = compiler or Compiler(sys)
    unitaries = [comp.period_propagator(build_sequence(protocol, float(t), shape)) for t in taus]
    return spectrum_from_unitaries(taus, unitaries, reference)


@dataclass(frozen=True)
class Crossing:
    tau: float
    gap: float
    index: int
    at_boundary: bool


def find_avoided_crossing(spec: FloquetSpectrum, branches: tuple[int, int], strict: bool = False) -> Crossing:
    """Minimum wrapped phase distance between two tracked branches.

    The location is refined by a parabola through the minimum and its two
    neighbours. With ``strict=True`` a minimum on the grid edge raises
    :class:`CrossingOutsideWindow`; otherwise it is flagged in the result.
    """
    a, b = branches
    d = wrapped_distance(spec.phases[:, a], spec.phases[:, b])
    i = int(np.argmin(d))
    n = len(d)
    at_boundary = i == 0 or i == n - 1
    if at_boundary:
        if strict:
            raise CrossingOutsideWindow("minimum gap lies on the boundary of the scanned window")
        return Crossing(float(spec.taus[i]), float(d[i]), i, True)
    x0, x1, x2 = spec.taus[i - 1 : i + 2]
    y0, y1, y2 = d[i - 1 : i + 2]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    ca = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    cb = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    cc = (x1 * x2 * (x1 - x2) * y0 + x2 * x0 * (x2 - x0) * y1 + x0 * x1 * (x0 - x1) * y2) / denom
    if ca > 0:
        xv = -cb / (2 * ca)
        if x0 <= xv <= x2:
            yv = ca * xv**2 + cb * xv + cc
            return Crossing(float(xv), float(max(yv, 0.0)), i, False)
    return Crossing(float(spec.taus[i]), float(d[i]), i, False)


def detect_crossings(spec: FloquetSpectrum, branches: tuple[int, int], threshold: float) -> list[Crossing]:
    """Interior local minima of the branch distance below ``threshold``."""
    a, b = branches
    d = wrapped_distance(spec.phases[:, a], spec.phases[:, b])
    out = []
    for i in range(1, len(d) - 1):
        if d[i] <= d[i - 1] and d[i] < d[i + 1] and d[i] < threshold:
            out.append(Crossing(float(spec.taus[i]), float(d[i]), i, False))
    return out
