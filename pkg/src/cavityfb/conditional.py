"""Conditional (no-emission) evolution and quantum jumps with optional feedback.

The no-emission branch evolves with K0 = exp(-i H_cond dt), where
H_cond = H - (i/2) kappa L+L is non-Hermitian; an emission applies the reset
L (the sqrt(kappa dt) prefactor cancels under normalization), followed by the
instantaneous feedback unitary R when a feedback rule is set.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .fockspace import (
    CoherentAmplitude,
    FockOperator,
    PureState,
    _check_dims,
    displacement_op,
)

__all__ = [
    "ConditionalGenerator",
    "DarkStateJumpError",
    "DecayRate",
    "FeedbackRule",
    "TimeStep",
    "apply_jump",
    "apply_no_jump",
    "build_conditional_generator",
    "jump_probability",
    "make_feedback_rule",
    "no_jump_propagator",
]

COARSE_STEP_LIMIT = 0.1   # kappa*dt above this is flagged as coarse
DARK_NORM_EPS = 1e-14


class DarkStateJumpError(RuntimeError):
    """A jump was requested from a state annihilated by the Lindblad operator."""


@dataclass(frozen=True)
class DecayRate:
    """Cavity decay rate kappa > 0 (units of inverse time)."""

    kappa: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"decay rate must be positive, got {self.kappa}")
        object.__setattr__(self, "kappa", float(self.kappa))


@dataclass(frozen=True)
class TimeStep:
    """Step length dt > 0; is_fine(kappa) flags whether kappa*dt <= 0.1."""

    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        object.__setattr__(self, "dt", float(self.dt))

    def is_fine(self, rate: DecayRate) -> bool:
        return rate.kappa * self.dt <= COARSE_STEP_LIMIT


@dataclass(frozen=True)
class ConditionalGenerator:
    """Bundle (H, L, kappa) with the derived non-Hermitian H_cond."""

    h_cond: FockOperator
    h: FockOperator
    lindblad: FockOperator
    rate: DecayRate

    def __post_init__(self):
        _check_dims(self.h_cond.dim, self.h.dim, self.lindblad.dim)
        ldl = self.lindblad.matrix.conj().T @ self.lindblad.matrix
        expected = self.h.matrix - 0.5j * self.rate.kappa * ldl
        dev = np.max(np.abs(self.h_cond.matrix - expected))
        if dev > 1e-12:
            raise ValueError(f"H_cond does not satisfy H - (i/2) kappa L+L, deviates by {dev:.3e}")

    @property
    def dim(self) -> int:
        return self.h.dim

    def lindblad_squared(self) -> np.ndarray:
        return self.lindblad.matrix.conj().T @ self.lindblad.matrix


@dataclass(frozen=True)
class FeedbackRule:
    """Displacement feedback applied right after each detected emission."""

    beta: CoherentAmplitude
    r_op: FockOperator

    def __post_init__(self):
        if self.r_op.kind != "unitary":
            raise ValueError("feedback operator must be labeled unitary")


def build_conditional_generator(h: FockOperator, lindblad: FockOperator,
                                rate: DecayRate) -> ConditionalGenerator:
    """Assemble H_cond = H - (i/2) kappa L+L from a Hermitian H and Lindblad L."""
    if h.kind != "hermitian":
        raise ValueError("H must be hermitian-labeled")
    _check_dims(h.dim, lindblad.dim)
    ldl = lindblad.matrix.conj().T @ lindblad.matrix
    h_cond = FockOperator(h.matrix - 0.5j * rate.kappa * ldl, h.dim)
    return ConditionalGenerator(h_cond=h_cond, h=h, lindblad=lindblad, rate=rate)


def no_jump_propagator(gen: ConditionalGenerator, dt: TimeStep) -> FockOperator:
    """K0 = exp(-i H_cond dt); contractive (||K0 psi|| <= 1) but not unitary."""
    return FockOperator(expm(-1j * gen.h_cond.matrix * dt.dt), gen.dim)


def apply_no_jump(k0: FockOperator, psi: PureState) -> tuple[PureState, float]:
    """Evolve conditioned on no emission; returns (state, survival probability).

    survival = ||K0 psi||^2 is the probability of the no-emission record.
    """
    _check_dims(k0.dim, psi.dim)
    vec = k0.matrix @ psi.amplitudes
    nrm = np.linalg.norm(vec)
    if nrm < DARK_NORM_EPS:
        raise RuntimeError("no-jump branch annihilated the state; upstream logic error")
    return PureState(vec / nrm, psi.dim), float(nrm**2)


def jump_probability(gen: ConditionalGenerator, psi: PureState, dt: TimeStep) -> float:
    """First-order emission probability kappa dt <L+L> for the step.

    Requires kappa dt <L+L> <= 1: beyond that the single-emission-per-step
    picture breaks down and the step size must be reduced.
    """
    _check_dims(gen.dim, psi.dim)
    lpsi = gen.lindblad.matrix @ psi.amplitudes
    p = gen.rate.kappa * dt.dt * float(np.linalg.norm(lpsi) ** 2)
    if p > 1.0 + 1e-9:
        raise ValueError(
            f"kappa*dt*<L+L> = {p:.4f} > 1: step too coarse for a first-order jump probability")
    return min(max(p, 0.0), 1.0)


def apply_jump(gen: ConditionalGenerator, fb: FeedbackRule | None,
               psi: PureState) -> PureState:
    """State right after a detected emission: L psi (then R L psi with feedback).

    The sqrt(kappa dt) prefactor of the reset operator cancels under
    normalization.  A jump from a dark state (||L psi|| ~ 0) is an error,
    never a silent no-op.
    """
    _check_dims(gen.dim, psi.dim)
    vec = gen.lindblad.matrix @ psi.amplitudes
    nrm = np.linalg.norm(vec)
    if nrm < DARK_NORM_EPS:
        raise DarkStateJumpError("jump requested from a dark state (||L psi|| ~ 0)")
    if fb is not None:
        _check_dims(fb.r_op.dim, psi.dim)
        vec = fb.r_op.matrix @ vec
        nrm = np.linalg.norm(vec)
    return PureState(vec / nrm, psi.dim)


def make_feedback_rule(phi: float, magnitude: float, dim: int) -> FeedbackRule:
    """Feedback displacement beta = magnitude * e^{i phi}."""
    if magnitude < 0:
        raise ValueError("feedback magnitude must be >= 0")
    beta = CoherentAmplitude(magnitude, phi)
    return FeedbackRule(beta=beta, r_op=displacement_op(beta, dim))
