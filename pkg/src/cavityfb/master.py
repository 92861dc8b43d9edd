"""Dense Lindblad master-equation integrator: the trajectory ensemble oracle.

d rho/dt = -i [H, rho] + (kappa/2) (2 L rho L+ - L+L rho - rho L+L)

With feedback on, the Lindblad operator is L(phi) = R(phi) c; the dissipator
rates are unchanged (L+L = c+c) but the reset channel is displaced.  The
default integrator is an adaptive explicit Runge-Kutta pair; exponentiating
the (dim^2 x dim^2) superoperator is available as an independent cross-check
at small dimension.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .fockspace import FockOperator, PureState, _check_dims, annihilation_op, number_op
from .trajectories import EnsembleRecord

__all__ = [
    "DensityMatrix",
    "EquivalenceReport",
    "LindbladGenerator",
    "density_from_pure",
    "driven_relaxation",
    "equivalence_check",
    "evolve_density",
    "lindblad_generator_for",
    "lindblad_rhs",
    "superoperator_matrix",
]

log = logging.getLogger(__name__)

TRACE_TOL = 1e-8
HERM_TOL = 1e-10
POSITIVITY_TOL = 1e-8


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive (within tolerance) density operator."""

    matrix: np.ndarray
    dim: int

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.shape != (self.dim, self.dim):
            raise ValueError(f"matrix shape {mat.shape} != ({self.dim}, {self.dim})")
        herm = np.max(np.abs(mat - mat.conj().T))
        if herm > HERM_TOL:
            raise ValueError(f"density matrix not hermitian: deviation {herm:.3e}")
        tr = np.trace(mat).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace {tr!r} != 1")
        evals = np.linalg.eigvalsh(0.5 * (mat + mat.conj().T))
        if evals.min() < -POSITIVITY_TOL:
            raise ValueError(f"density matrix indefinite: min eigenvalue {evals.min():.3e}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def expectation(self, op: FockOperator) -> complex:
        _check_dims(self.dim, op.dim)
        return complex(np.trace(op.matrix @ self.matrix))


def density_from_pure(psi: PureState) -> DensityMatrix:
    return DensityMatrix(np.outer(psi.amplitudes, psi.amplitudes.conj()), psi.dim)


@dataclass(frozen=True)
class LindbladGenerator:
    """(H, L, kappa) defining the Lindblad superoperator."""

    h: FockOperator
    lindblad: FockOperator
    kappa: float

    def __post_init__(self):
        if self.h.kind != "hermitian":
            raise ValueError("H must be hermitian-labeled")
        _check_dims(self.h.dim, self.lindblad.dim)
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")

    @property
    def dim(self) -> int:
        return self.h.dim


def lindblad_generator_for(dim: int, kappa: float, feedback_beta: complex | None = None,
                           h: FockOperator | None = None) -> LindbladGenerator:
    """Convenience: L = c, or the feedback-modified L = D(beta) c."""
    from .fockspace import displacement_op

    if h is None:
        h = FockOperator(np.zeros((dim, dim)), dim, kind="hermitian")
    c = annihilation_op(dim)
    lop = c if feedback_beta in (None, 0) else displacement_op(feedback_beta, dim) @ c
    return LindbladGenerator(h=h, lindblad=lop, kappa=kappa)


def lindblad_rhs(gen: LindbladGenerator, rho: np.ndarray) -> np.ndarray:
    """Right-hand side of the master equation for a raw density matrix."""
    L = gen.lindblad.matrix
    Ld = L.conj().T
    LdL = Ld @ L
    H = gen.h.matrix
    out = -1j * (H @ rho - rho @ H)
    out += 0.5 * gen.kappa * (2.0 * (L @ rho @ Ld) - (LdL @ rho + rho @ LdL))
    return out


def superoperator_matrix(gen: LindbladGenerator) -> np.ndarray:
    """Dense (dim^2, dim^2) Liouvillian for row-major vec(rho).

    Row-major flattening obeys vec(A rho B) = (A kron B^T) vec(rho).
    """
    d = gen.dim
    eye = np.eye(d)
    L = gen.lindblad.matrix
    Ld = L.conj().T
    LdL = Ld @ L
    H = gen.h.matrix
    sup = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    sup += 0.5 * gen.kappa * (
        2.0 * np.kron(L, Ld.T) - np.kron(LdL, eye) - np.kron(eye, LdL.T))
    return sup


def _repair_positivity(mat: np.ndarray) -> np.ndarray:
    """Clip small negative eigenvalues and renormalize; hard error beyond tol."""
    mat = 0.5 * (mat + mat.conj().T)
    evals, vecs = np.linalg.eigh(mat)
    if evals.min() < -POSITIVITY_TOL:
        raise RuntimeError(
            f"integrator produced an indefinite state (min eigenvalue {evals.min():.3e})")
    if evals.min() < 0:
        log.warning("clipping negative eigenvalues down to %.3e", evals.min())
        evals = np.clip(evals, 0.0, None)
        mat = (vecs * evals) @ vecs.conj().T
    return mat / np.trace(mat).real


def evolve_density(gen: LindbladGenerator, rho0: DensityMatrix, t: float,
                   method: str = "adaptive", rtol: float = 1e-9,
                   atol: float = 1e-11) -> DensityMatrix:
    """rho(t) = exp(Lt) rho(0).

    method "adaptive": RK45 on the flattened master equation with local error
    control; method "superop": multiply by the exponentiated Liouvillian
    (cross-check mode, dim <= 60).  Output invariants are verified and small
    positivity violations repaired.
    """
    _check_dims(gen.dim, rho0.dim)
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return rho0
    d = gen.dim
    if method == "adaptive":
        def rhs(_t, y):
            return lindblad_rhs(gen, y.reshape(d, d)).ravel()

        sol = solve_ivp(rhs, (0.0, t), rho0.matrix.ravel().astype(complex),
                        method="RK45", rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(f"master-equation integration failed: {sol.message}")
        out = sol.y[:, -1].reshape(d, d)
    elif method == "superop":
        if d > 60:
            raise ValueError("superoperator exponentiation is limited to dim <= 60")
        out = (expm(superoperator_matrix(gen) * t) @ rho0.matrix.ravel()).reshape(d, d)
    else:
        raise ValueError(f"unknown method {method!r}")
    return DensityMatrix(_repair_positivity(out), d)


def evolve_expectations(gen: LindbladGenerator, rho0: DensityMatrix,
                        times: list[float], rtol: float = 1e-9,
                        atol: float = 1e-11) -> dict[float, dict[str, float]]:
    """<n>, Re<c>, Im<c> at the requested times, from one adaptive solve."""
    _check_dims(gen.dim, rho0.dim)
    d = gen.dim
    times = sorted(times)
    if times and times[0] < 0:
        raise ValueError("times must be >= 0")

    def rhs(_t, y):
        return lindblad_rhs(gen, y.reshape(d, d)).ravel()

    sol = solve_ivp(rhs, (0.0, max(times)), rho0.matrix.ravel().astype(complex),
                    t_eval=times, method="RK45", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"master-equation integration failed: {sol.message}")
    c = annihilation_op(d).matrix
    nop = number_op(d).matrix
    out = {}
    for i, t in enumerate(times):
        rho = sol.y[:, i].reshape(d, d)
        amp = np.trace(c @ rho)
        out[t] = {"n": float(np.trace(nop @ rho).real),
                  "re_c": float(amp.real), "im_c": float(amp.imag)}
    return out


@dataclass(frozen=True)
class EquivalenceReport:
    """Trajectory-ensemble vs. oracle comparison at a set of times."""

    rows: tuple
    z_threshold: float = 4.0

    @property
    def passed(self) -> bool:
        return all(abs(r["z"]) < self.z_threshold for r in self.rows)

    def __str__(self) -> str:
        lines = [f"{'observable':>10} {'time':>8} {'ensemble':>14} {'std_err':>10} "
                 f"{'oracle':>14} {'z':>8}"]
        for r in self.rows:
            lines.append(f"{r['observable']:>10} {r['time']:8.3f} {r['mean']:14.6g} "
                         f"{r['std_err']:10.3g} {r['oracle']:14.6g} {r['z']:8.2f}")
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"equivalence: {verdict} (|z| < {self.z_threshold})")
        return "\n".join(lines)


_OBSERVABLES = ("n", "re_c", "im_c")


def equivalence_check(ensemble: EnsembleRecord, gen: LindbladGenerator,
                      observables: list[str], times: list[float],
                      numerical_floor: float = 1e-7) -> EquivalenceReport:
    """z-score comparison of ensemble means against the master equation.

    Observables are named traces: "n" (photon number) and/or "c" / "re_c" /
    "im_c" (field quadratures).  The generator must describe the same physics
    as the ensemble config, including L = R(phi) c when feedback is on.
    z = (mean - oracle) / max(se, numerical_floor); the floor keeps the test
    meaningful when the trajectory variance is exactly zero (deterministic
    no-feedback coherent ensembles).
    """
    cfg = ensemble.config
    if cfg.representation == "fock" and gen.dim != cfg.dim:
        raise ValueError(f"oracle dim {gen.dim} != ensemble dim {cfg.dim}")
    if abs(gen.kappa - cfg.kappa) > 1e-12:
        raise ValueError("oracle decay rate differs from the ensemble config")
    if ensemble.amp_trace is None:
        raise ValueError("equivalence check requires trace_mode='full'")

    wanted = []
    for name in observables:
        if name == "c":
            wanted += ["re_c", "im_c"]
        elif name in _OBSERVABLES:
            wanted.append(name)
        else:
            raise ValueError(f"unknown observable {name!r}; recorded traces: n, c")

    if not wanted:
        return EquivalenceReport(rows=())

    from .fockspace import make_coherent_state

    rho0 = density_from_pure(make_coherent_state(cfg.initial_amplitude, gen.dim)[0])
    oracle = evolve_expectations(gen, rho0, list(times))

    n = ensemble.n_traj
    rows = []
    for t in times:
        k = int(round(t / cfg.dt)) - 1
        if not 0 <= k < cfg.n_steps:
            raise ValueError(f"time {t} outside the simulated range")
        samples = {
            "n": ensemble.n_trace[:, k],
            "re_c": ensemble.amp_trace[:, k].real,
            "im_c": ensemble.amp_trace[:, k].imag,
        }
        for name in wanted:
            x = samples[name]
            mean = float(x.mean())
            se = float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
            z = (mean - oracle[t][name]) / max(se, numerical_floor)
            rows.append({"observable": name, "time": float(t), "mean": mean,
                         "std_err": se, "oracle": oracle[t][name], "z": float(z)})
    return EquivalenceReport(rows=tuple(rows))


def driven_relaxation(alpha0: float, phi: float, kappa: float, dim: int,
                      duration: float | None = None) -> dict:
    """Preparation-stage validation: drive a leaky cavity to its steady state.

    H_drive = i (eta e^{i phi} c+ - eta e^{-i phi} c) with eta = alpha0 kappa/2
    drives the stationary field to <c> = alpha0 e^{i phi}.  The default
    duration 16/kappa brings the residual |<c> - target| under 1e-3 for
    alpha0 <= 2 or so (the transient decays as alpha0 e^{-kappa t / 2}).
    """
    if duration is None:
        duration = 16.0 / kappa
    eta = alpha0 * kappa / 2.0
    c = annihilation_op(dim).matrix
    hmat = 1j * eta * (np.exp(1j * phi) * c.conj().T - np.exp(-1j * phi) * c)
    h = FockOperator(hmat, dim, kind="hermitian")
    gen = LindbladGenerator(h=h, lindblad=annihilation_op(dim), kappa=kappa)
    vac = np.zeros((dim, dim), dtype=complex)
    vac[0, 0] = 1.0
    rho = evolve_density(gen, DensityMatrix(vac, dim), duration)
    amp = rho.expectation(annihilation_op(dim))
    target = alpha0 * np.exp(1j * phi)
    return {"amplitude": amp, "target": target, "error": abs(amp - target),
            "duration": duration,
            "n": rho.expectation(number_op(dim)).real}
