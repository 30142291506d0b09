"""Dense linear algebra for small spin Hilbert spaces.

Operators, unitaries and density matrices are plain complex ``numpy`` arrays of
shape ``(dim, dim)``. The ``check_*`` helpers enforce the numerical invariants
each kind of matrix must satisfy; everything else is a pure function.

All frequencies are angular (rad/s) and all times are in seconds.
"""

from __future__ import annotations

from functools import reduce
from typing import Iterable, Sequence

import numpy as np

MAX_DIM = 512

HERMITIAN_TOL = 1e-12
REJECT_HERMITIAN_TOL = 1e-8
UNITARY_TOL = 1e-10
TRACE_TOL = 1e-10
EIGEN_FLOOR = -1e-10
IMAG_REJECT_TOL = 1e-8


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class NotHermitianError(ValueError):
    pass


class NotUnitaryError(ValueError):
    pass


class InvalidStateError(ValueError):
    pass


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    return m


def hermitian_residual(h: np.ndarray) -> float:
    return float(np.max(np.abs(h - h.conj().T))) if h.size else 0.0


def unitary_residual(u: np.ndarray) -> float:
    return float(np.linalg.norm(u @ u.conj().T - np.eye(u.shape[0]), ord=2))


def check_hermitian(h, tol: float = REJECT_HERMITIAN_TOL) -> np.ndarray:
    h = as_matrix(h)
    r = hermitian_residual(h)
    if r > tol:
        raise NotHermitianError(f"operator is not Hermitian (residual {r:.3e})")
    return h


def check_unitary(u, tol: float = 1e-8) -> np.ndarray:
    u = as_matrix(u)
    r = unitary_residual(u)
    if r > tol:
        raise NotUnitaryError(f"operator is not unitary (residual {r:.3e})")
    return u


def check_density_matrix(rho, tol: float = TRACE_TOL) -> np.ndarray:
    """Validate trace, hermiticity and positivity of a density matrix."""
    rho = as_matrix(rho)
    tr = np.trace(rho)
    if abs(tr - 1.0) > tol:
        raise InvalidStateError(f"trace {tr:.12g} differs from 1")
    if hermitian_residual(rho) > 1e-10:
        raise InvalidStateError("density matrix is not Hermitian")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise InvalidStateError("density matrix has negative eigenvalues")
    return rho


def kron(*ops) -> np.ndarray:
    """Tensor product of one or more square operators, left to right."""
    if not ops:
        raise DimensionError("kron needs at least one operand")
    mats = [as_matrix(o) for o in ops]
    return reduce(np.kron, mats)


def propagate(h, t: float) -> np.ndarray:
    """Return ``exp(-i h t)`` for a Hermitian ``h`` and ``t >= 0``.

    Uses the Hermitian eigendecomposition, so the result is unitary to
    machine precision even for large accumulated phases.
    """
    h = check_hermitian(h)
    if t < 0:
        raise ValueError("propagation time must be non-negative")
    if t == 0:
        return np.eye(h.shape[0], dtype=complex)
    return EigenPropagator(h).at(t)


class EigenPropagator:
    """Diagonalize a static Hamiltonian once, then evaluate ``exp(-iHt)`` for many ``t``."""

    def __init__(self, h):
        h = check_hermitian(h)
        h = 0.5 * (h + h.conj().T)
        self.energies, self.vectors = np.linalg.eigh(h)
        self.dim = h.shape[0]

    def at(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("propagation time must be non-negative")
        phases = np.exp(-1j * self.energies * t)
        return (self.vectors * phases) @ self.vectors.conj().T


def evolve(rho, u) -> np.ndarray:
    """Return ``U rho U^dagger``."""
    rho = as_matrix(rho)
    u = as_matrix(u)
    if rho.shape != u.shape:
        raise DimensionError(f"state {rho.shape} and unitary {u.shape} differ")
    return u @ rho @ u.conj().T


def partial_trace(rho, subsystem_dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Reduced density matrix over the subsystems listed in ``keep``.

    ``keep`` indices refer to positions in ``subsystem_dims``; the kept
    subsystems appear in ascending order in the result.
    """
    rho = as_matrix(rho)
    dims = [int(d) for d in subsystem_dims]
    if any(d < 1 for d in dims) or int(np.prod(dims)) != rho.shape[0]:
        raise DimensionError(f"subsystem dims {dims} do not multiply to {rho.shape[0]}")
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise DimensionError("keep must name at least one subsystem")
    if keep[0] < 0 or keep[-1] >= len(dims):
        raise DimensionError(f"keep indices {keep} out of range for {len(dims)} subsystems")
    n = len(dims)
    traced = [i for i in range(n) if i not in keep]
    t = rho.reshape(dims + dims)
    # trace pairs from the highest axis down so earlier axis numbers stay valid
    for i in reversed(traced):
        t = np.trace(t, axis1=i, axis2=i + t.ndim // 2)
    d_keep = int(np.prod([dims[k] for k in keep]))
    return t.reshape(d_keep, d_keep)


def expectation(rho, obs) -> float:
    """Return the real value ``Tr(rho obs)``; rejects a significant imaginary part."""
    rho = as_matrix(rho)
    obs = as_matrix(obs)
    if rho.shape != obs.shape:
        raise DimensionError(f"state {rho.shape} and observable {obs.shape} differ")
    # Tr(AB) = sum_ij A_ij B_ji
    val = np.einsum("ij,ji->", rho, obs)
    if abs(val.imag) > IMAG_REJECT_TOL:
        raise InvalidStateError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def spin_operators(s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spin matrices (Sx, Sy, Sz) for spin quantum number ``s``, basis ordered m = s, ..., -s."""
    d = int(round(2 * s + 1))
    m = s - np.arange(d)
    sz = np.diag(m).astype(complex)
    # <m+1|S+|m> = sqrt(s(s+1) - m(m+1))
    sp = np.zeros((d, d), dtype=complex)
    for k in range(1, d):
        sp[k - 1, k] = np.sqrt(s * (s + 1) - m[k] * (m[k] + 1))
    sx = 0.5 * (sp + sp.conj().T)
    sy = -0.5j * (sp - sp.conj().T)
    return sx, sy, sz


def embed(op, index: int, dims: Sequence[int]) -> np.ndarray:
    """Place a single-subsystem operator at position ``index`` of a product space."""
    parts = [np.eye(d, dtype=complex) for d in dims]
    parts[index] = as_matrix(op)
    return kron(*parts)


def pure(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def maximally_mixed(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex) / dim


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (g + g.conj().T)
