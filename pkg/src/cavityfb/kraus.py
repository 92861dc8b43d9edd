"""Sequential generalized measurements vs. single-shot entangled measurements.

N repeated two-outcome generalized measurements on one qubit define outcome
probabilities p(b1..bN) = ||K_bN ... K_b1 |psi>||^2.  The same distribution
is reproduced by a single-shot product measurement in the {|xi0>, |xi1>}
basis on the N-party state whose amplitudes are sqrt(p(b)) on |xi_b1 ... xi_bN>
— generally an entangled state.  Everything here is exact, dense, and small.

Bit strings read left to right in measurement order; string "01" means first
outcome 0, second outcome 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

__all__ = [
    "EffectiveEntangledState",
    "KrausPair",
    "OutcomeDistribution",
    "QubitState",
    "build_effective_state",
    "entanglement_measure",
    "sequential_distribution",
    "swap_pair",
]

COMPLETENESS_TOL = 1e-10
MAX_SEQUENTIAL_N = 20
MAX_EFFECTIVE_N = 12


@dataclass(frozen=True)
class QubitState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2,):
            raise ValueError("qubit state must be a complex 2-vector")
        nrm = np.linalg.norm(amps)
        if abs(nrm - 1.0) > 1e-12:
            raise ValueError(f"qubit state not normalized: {nrm!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)


@dataclass(frozen=True)
class KrausPair:
    """Two-outcome measurement {K0, K1} with K0+K0 + K1+K1 = I."""

    k0: np.ndarray
    k1: np.ndarray

    def __post_init__(self):
        k0 = np.asarray(self.k0, dtype=complex)
        k1 = np.asarray(self.k1, dtype=complex)
        if k0.shape != (2, 2) or k1.shape != (2, 2):
            raise ValueError("Kraus operators must be 2x2")
        defect = np.max(np.abs(k0.conj().T @ k0 + k1.conj().T @ k1 - np.eye(2)))
        if defect > COMPLETENESS_TOL:
            raise ValueError(
                f"completeness violated by {defect:.3e}: branch weights would "
                "not form a probability distribution")
        k0.setflags(write=False)
        k1.setflags(write=False)
        object.__setattr__(self, "k0", k0)
        object.__setattr__(self, "k1", k1)

    @classmethod
    def rank_one(cls, xi0, xi1, xi0_tilde, xi1_tilde) -> "KrausPair":
        """K_i = |xi_i_tilde><xi_i| with orthonormal {xi_i} and unit xi_tilde.

        Orthonormality of the measured basis plus unit-norm targets is
        exactly the completeness condition for this form.
        """
        xi0 = np.asarray(xi0, dtype=complex)
        xi1 = np.asarray(xi1, dtype=complex)
        if abs(np.vdot(xi0, xi1)) > 1e-12:
            raise ValueError("xi0 and xi1 must be orthogonal")
        for v in (xi0, xi1, xi0_tilde, xi1_tilde):
            if abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise ValueError("all rank-one factors must be unit vectors")
        k0 = np.outer(np.asarray(xi0_tilde, dtype=complex), xi0.conj())
        k1 = np.outer(np.asarray(xi1_tilde, dtype=complex), xi1.conj())
        return cls(k0, k1)


def swap_pair(xi0, xi1) -> KrausPair:
    """K0 = |xi1><xi0|, K1 = |xi0><xi1|: each outcome flips the basis state."""
    return KrausPair.rank_one(xi0, xi1, xi1, xi0)


@dataclass(frozen=True)
class OutcomeDistribution:
    """Probabilities over length-n outcome strings, indexed b1..bn (b1 = MSB)."""

    probs: np.ndarray
    n: int

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (2**self.n,):
            raise ValueError("probability table size must be 2^n")
        if probs.min() < -1e-12:
            raise ValueError("negative outcome probability")
        total = probs.sum()
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"outcome probabilities sum to {total!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def prob(self, bits: str) -> float:
        if len(bits) != self.n or set(bits) - {"0", "1"}:
            raise ValueError(f"need a length-{self.n} bit string")
        return float(self.probs[int(bits, 2)])

    def as_dict(self) -> dict[str, float]:
        return {format(i, f"0{self.n}b"): float(p) for i, p in enumerate(self.probs)}

    def max_abs_difference(self, other: "OutcomeDistribution") -> float:
        if self.n != other.n:
            raise ValueError("distributions over different string lengths")
        return float(np.max(np.abs(self.probs - other.probs)))


def sequential_distribution(psi: QubitState, kp: KrausPair, n: int) -> OutcomeDistribution:
    """Exact branch-tree probabilities of n successive measurements.

    Branch i at depth k extends to 2i (outcome 0) and 2i+1 (outcome 1), so
    leaf index read in binary is the outcome string.
    """
    if not 1 <= n <= MAX_SEQUENTIAL_N:
        raise ValueError(f"n must lie in [1, {MAX_SEQUENTIAL_N}]")
    states = psi.amplitudes[None, :]
    k0t = kp.k0.T
    k1t = kp.k1.T
    for _ in range(n):
        nxt = np.empty((2 * states.shape[0], 2), dtype=complex)
        nxt[0::2] = states @ k0t
        nxt[1::2] = states @ k1t
        states = nxt
    probs = np.einsum("ij,ij->i", states.conj(), states).real
    return OutcomeDistribution(probs=probs, n=n)


@dataclass(frozen=True)
class EffectiveEntangledState:
    """N-party state sqrt(p(b)) |xi_b1 ... xi_bN> with real amplitudes.

    Branch phases of the sequential process are discarded by construction;
    the outcome distribution is preserved.
    """

    amplitudes: np.ndarray       # sqrt(p), indexed like OutcomeDistribution
    xi0: np.ndarray
    xi1: np.ndarray
    n: int

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float)
        if amps.shape != (2**self.n,):
            raise ValueError("amplitude table size must be 2^n")
        nrm = np.linalg.norm(amps)
        if abs(nrm - 1.0) > 1e-10:
            raise ValueError(f"effective state not normalized: {nrm!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def computational_vector(self) -> np.ndarray:
        """Expansion in the computational product basis (2^n amplitudes)."""
        out = np.zeros(2**self.n, dtype=complex)
        for idx in np.nonzero(self.amplitudes)[0]:
            bits = format(idx, f"0{self.n}b")
            factors = [self.xi0 if b == "0" else self.xi1 for b in bits]
            out += self.amplitudes[idx] * reduce(np.kron, factors)
        return out

    def born_distribution(self) -> OutcomeDistribution:
        """Single-shot product measurement in the xi basis, evaluated in the
        computational basis (independent of the amplitude table)."""
        vec = self.computational_vector()
        probs = np.empty(2**self.n)
        for idx in range(2**self.n):
            bits = format(idx, f"0{self.n}b")
            basis = reduce(np.kron, [self.xi0 if b == "0" else self.xi1 for b in bits])
            probs[idx] = abs(np.vdot(basis, vec)) ** 2
        return OutcomeDistribution(probs=probs, n=self.n)


def build_effective_state(psi: QubitState, kp: KrausPair, n: int,
                          xi0=None, xi1=None) -> EffectiveEntangledState:
    """Effective N-party state reproducing sequential_distribution.

    The measured basis {xi0, xi1} defaults to the computational basis; for
    rank-one pairs pass the basis the pair was built from.
    """
    if not 1 <= n <= MAX_EFFECTIVE_N:
        raise ValueError(f"n must lie in [1, {MAX_EFFECTIVE_N}]")
    dist = sequential_distribution(psi, kp, n)
    xi0 = np.array([1.0, 0.0], dtype=complex) if xi0 is None else np.asarray(xi0, complex)
    xi1 = np.array([0.0, 1.0], dtype=complex) if xi1 is None else np.asarray(xi1, complex)
    if abs(np.vdot(xi0, xi1)) > 1e-12:
        raise ValueError("xi basis must be orthogonal")
    return EffectiveEntangledState(
        amplitudes=np.sqrt(dist.probs), xi0=xi0, xi1=xi1, n=n)


def entanglement_measure(state: EffectiveEntangledState, cut: int) -> float:
    """Bipartite entanglement entropy (base 2) across parties [1..cut | cut+1..n].

    Computed from the Schmidt spectrum of the amplitude tensor; the xi basis
    is orthonormal and local, so it does not affect the spectrum.
    """
    if not 1 <= cut < state.n:
        raise ValueError(f"cut must lie in [1, {state.n - 1}]")
    mat = state.amplitudes.reshape(2**cut, 2 ** (state.n - cut))
    svals = np.linalg.svd(mat, compute_uv=False)
    lam = svals[svals > 1e-15] ** 2
    return float(-(lam * np.log2(lam)).sum())
