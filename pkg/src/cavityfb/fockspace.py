"""Truncated single-mode Fock space: states, operators, coherent states.

Conventions: hbar = 1, rates in units of the cavity decay rate kappa, time in
units of 1/kappa.  States are dense complex vectors over the number basis
|0..dim-1>, operators are dense complex matrices.  Truncation error is always
*measured* (top-level weight, "leakage") rather than silently absorbed.

Global phase is physically meaningless here; states are compared through
fidelity |<a|b>|^2, never componentwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

__all__ = [
    "CoherentAmplitude",
    "DimensionMismatchError",
    "FockOperator",
    "PureState",
    "annihilation_op",
    "displacement_op",
    "expectation",
    "expectation_real",
    "fidelity",
    "field_amplitude",
    "make_coherent_state",
    "make_number_basis_state",
    "number_op",
]

NORM_TOL = 1e-12
HERMITICITY_TOL = 1e-10


class DimensionMismatchError(ValueError):
    """States/operators with different truncation dims were combined."""


def _check_dims(*dims: int) -> int:
    d0 = dims[0]
    for d in dims[1:]:
        if d != d0:
            raise DimensionMismatchError(f"truncation dims differ: {dims}")
    return d0


def _validate_dim(dim: int) -> int:
    if not isinstance(dim, (int, np.integer)) or dim < 2:
        raise ValueError(f"truncation dim must be an integer >= 2, got {dim!r}")
    return int(dim)


@dataclass(frozen=True)
class CoherentAmplitude:
    """Polar form of a coherent amplitude: modulus >= 0, phase in [0, 2pi).

    The decomposition is canonical: modulus 0 forces phase 0.
    """

    modulus: float
    phase: float = 0.0

    def __post_init__(self):
        if self.modulus < 0:
            raise ValueError("coherent amplitude modulus must be >= 0")
        phase = float(self.phase) % (2.0 * np.pi)
        if self.modulus == 0.0:
            phase = 0.0
        object.__setattr__(self, "modulus", float(self.modulus))
        object.__setattr__(self, "phase", phase)

    @classmethod
    def from_complex(cls, z: complex) -> "CoherentAmplitude":
        z = complex(z)
        return cls(abs(z), float(np.angle(z)) if z != 0 else 0.0)

    @property
    def value(self) -> complex:
        return self.modulus * np.exp(1j * self.phase)


@dataclass(frozen=True)
class PureState:
    """Normalized state vector on the truncated Fock space."""

    amplitudes: np.ndarray
    dim: int

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        dim = _validate_dim(self.dim)
        if amps.shape != (dim,):
            raise ValueError(f"amplitude vector has shape {amps.shape}, expected ({dim},)")
        nrm = np.linalg.norm(amps)
        if abs(nrm - 1.0) > NORM_TOL:
            raise ValueError(f"state not normalized: ||psi|| = {nrm!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dim", dim)

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "PureState":
        """Normalize an arbitrary nonzero vector into a PureState."""
        vec = np.asarray(vec, dtype=complex)
        nrm = np.linalg.norm(vec)
        if nrm < 1e-14:
            raise ValueError("cannot normalize a (near-)zero vector")
        return cls(vec / nrm, len(vec))

    @property
    def leakage(self) -> float:
        """Weight on the top retained level, |<dim-1|psi>|^2."""
        return float(abs(self.amplitudes[-1]) ** 2)


@dataclass(frozen=True)
class FockOperator:
    """Dense operator on the truncated space, optionally labeled by structure.

    kind is "unitary", "hermitian" or "general"; the label is trusted by
    downstream code (expectation_real, unitarity checks) and verified for
    hermitian at construction.  Labeled unitaries are only expected to be
    unitary away from the truncation band at the top of the space.
    """

    matrix: np.ndarray
    dim: int
    kind: str = "general"

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        dim = _validate_dim(self.dim)
        if mat.shape != (dim, dim):
            raise ValueError(f"matrix has shape {mat.shape}, expected ({dim}, {dim})")
        if self.kind not in ("unitary", "hermitian", "general"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.kind == "hermitian":
            dev = np.max(np.abs(mat - mat.conj().T))
            if dev > HERMITICITY_TOL:
                raise ValueError(f"operator labeled hermitian deviates by {dev:.3e}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "dim", dim)

    def dagger(self) -> "FockOperator":
        return FockOperator(self.matrix.conj().T, self.dim, self.kind)

    def __matmul__(self, other: "FockOperator") -> "FockOperator":
        _check_dims(self.dim, other.dim)
        return FockOperator(self.matrix @ other.matrix, self.dim)

    def apply(self, psi: PureState) -> np.ndarray:
        """Raw (unnormalized) action on a state vector."""
        _check_dims(self.dim, psi.dim)
        return self.matrix @ psi.amplitudes

    def unitarity_defect(self, skip_top: int = 0) -> float:
        """max |U+U - I| over the block that excludes the top skip_top levels."""
        dev = self.matrix.conj().T @ self.matrix - np.eye(self.dim)
        keep = self.dim - skip_top
        return float(np.max(np.abs(dev[:keep, :keep])))


def make_number_basis_state(n: int, dim: int) -> PureState:
    """|n> on a dim-level space."""
    dim = _validate_dim(dim)
    if not 0 <= n < dim:
        raise ValueError(f"level index {n} out of range for dim={dim}")
    amps = np.zeros(dim, dtype=complex)
    amps[n] = 1.0
    return PureState(amps, dim)


def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    """Unnormalized coherent-state amplitudes alpha^n / sqrt(n!) (real scale e^{-|a|^2/2}).

    Computed by the stable recurrence c_n = c_{n-1} * alpha / sqrt(n).
    """
    amps = np.empty(dim, dtype=complex)
    amps[0] = np.exp(-0.5 * abs(alpha) ** 2)
    for n in range(1, dim):
        amps[n] = amps[n - 1] * alpha / np.sqrt(n)
    return amps


def make_coherent_state(alpha: CoherentAmplitude | complex, dim: int) -> tuple[PureState, float]:
    """Truncated coherent state |alpha>, renormalized.

    Returns (state, tail) where tail = 1 - sum_{n<dim} |c_n|^2 is the weight
    the truncation removed (the Poisson tail above dim-1).  Never fatal; the
    caller decides whether the tail is acceptable.
    """
    dim = _validate_dim(dim)
    if isinstance(alpha, CoherentAmplitude):
        alpha = alpha.value
    amps = coherent_amplitudes(complex(alpha), dim)
    kept = float(np.sum(np.abs(amps) ** 2))
    tail = max(0.0, 1.0 - kept)
    return PureState(amps / np.sqrt(kept), dim), tail


def annihilation_op(dim: int) -> FockOperator:
    """Photon annihilation operator c: <n-1|c|n> = sqrt(n)."""
    dim = _validate_dim(dim)
    return FockOperator(np.diag(np.sqrt(np.arange(1.0, dim)), 1), dim)


def number_op(dim: int) -> FockOperator:
    """Photon number operator c+c."""
    dim = _validate_dim(dim)
    return FockOperator(np.diag(np.arange(dim, dtype=float)), dim, kind="hermitian")


def displacement_op(beta: CoherentAmplitude | complex, dim: int) -> FockOperator:
    """Displacement D(beta) = exp(beta c+ - beta* c), labeled unitary.

    expm uses scaling-and-squaring with Pade approximants; on the truncated
    space D is unitary except in the top few levels (see unitarity_defect).
    """
    dim = _validate_dim(dim)
    if isinstance(beta, CoherentAmplitude):
        beta = beta.value
    beta = complex(beta)
    c = annihilation_op(dim).matrix
    gen = beta * c.conj().T - np.conj(beta) * c
    return FockOperator(expm(gen), dim, kind="unitary")


def expectation(op: FockOperator, psi: PureState) -> complex:
    """<psi|op|psi>."""
    _check_dims(op.dim, psi.dim)
    return complex(np.vdot(psi.amplitudes, op.matrix @ psi.amplitudes))


def expectation_real(op: FockOperator, psi: PureState) -> float:
    """Real expectation value of a hermitian-labeled operator."""
    if op.kind != "hermitian":
        raise ValueError("expectation_real requires a hermitian-labeled operator")
    val = expectation(op, psi)
    if abs(val.imag) > HERMITICITY_TOL:
        raise ValueError(f"imaginary part {val.imag:.3e} too large for a hermitian operator")
    return val.real


def field_amplitude(psi: PureState) -> complex:
    """<c>, the per-trajectory estimator of the coherent field amplitude."""
    a = psi.amplitudes
    n = np.arange(1.0, psi.dim)
    return complex(np.sum(a[:-1].conj() * np.sqrt(n) * a[1:]))


def fidelity(a: PureState, b: PureState) -> float:
    """|<a|b>|^2 (global-phase independent)."""
    _check_dims(a.dim, b.dim)
    return float(min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2))
