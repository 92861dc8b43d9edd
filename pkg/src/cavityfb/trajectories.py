"""Seeded stochastic trajectories and deterministic parallel ensembles.

A trajectory alternates no-emission evolution (K0) with detector-triggered
jumps (L, then the feedback displacement R), one uniform draw per step.  Two
state representations implement the same process:

  * "fock": dense state vector on the truncated number basis.  Fully general
    within the truncation; aborts a trajectory when the top-level weight
    exceeds the configured leakage budget.
  * "coherent": exact closed form for the measurement-stage family simulated
    here (H = 0, L = c, displacement feedback, coherent initial state), where
    the state remains coherent with amplitude alpha -> alpha e^{-kappa dt/2}
    between emissions and alpha -> alpha + beta at each emission.  Free of
    truncation error, so it also covers the divergent-feedback regime where
    no finite Fock dimension suffices.

Ensembles are embarrassingly parallel and bit-reproducible: trajectory i uses
the seed derive_seed(master_seed, i) regardless of worker count or execution
order, and records are assembled in index order.
"""
from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import __version__, kernels
from .conditional import (
    ConditionalGenerator,
    DecayRate,
    FeedbackRule,
    TimeStep,
    apply_jump,
    apply_no_jump,
    build_conditional_generator,
    jump_probability,
    make_feedback_rule,
)
from .fockspace import (
    FockOperator,
    PureState,
    annihilation_op,
    make_coherent_state,
)

__all__ = [
    "EnsembleRecord",
    "SimConfig",
    "TrajectoryRecord",
    "TruncationError",
    "prepare_initial_state",
    "run_ensemble",
    "run_trajectory",
    "step",
]

CSV_FLOAT = "{:.17g}"


class TruncationError(RuntimeError):
    """Trajectory left the representable region of the truncated space."""

    def __init__(self, message: str, step_index: int):
        super().__init__(message)
        self.step_index = step_index


@dataclass(frozen=True)
class SimConfig:
    """Full physical + numerical description of one trajectory experiment.

    The feedback displacement defaults to the paper's convention
    beta = feedback_magnitude * e^{i phi} (the unknown phase rides on the
    feedback pulse, the preparation laser is the reference frame);
    feedback_phase_override fixes the feedback direction independently of phi
    for the rotated-frame convention.  leakage_budget None disables
    truncation aborts (used for truncated-space consistency checks).
    """

    dim: int = 200
    alpha0: float = 2.0
    alpha0_phase: float = 0.0
    phi: float = np.pi
    feedback_magnitude: float = 2.0
    kappa: float = 1.0
    dt: float = 0.01
    n_steps: int = 500
    leakage_budget: float | None = 1e-6
    representation: str = "fock"
    feedback_phase_override: float | None = None
    trace_mode: str = "full"
    skip_fraction_max: float = 0.01

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.alpha0 < 0:
            raise ValueError("alpha0 is a modulus, must be >= 0")
        if self.feedback_magnitude < 0:
            raise ValueError("feedback_magnitude must be >= 0")
        if self.kappa <= 0 or self.dt <= 0:
            raise ValueError("kappa and dt must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.leakage_budget is not None and not 0 < self.leakage_budget < 1:
            raise ValueError("leakage_budget must lie in (0, 1) or be None")
        if self.representation not in ("fock", "coherent"):
            raise ValueError(f"unknown representation {self.representation!r}")
        if self.trace_mode not in ("full", "flags"):
            raise ValueError(f"unknown trace_mode {self.trace_mode!r}")
        if not 0 <= self.skip_fraction_max <= 1:
            raise ValueError("skip_fraction_max must lie in [0, 1]")

    @property
    def total_time(self) -> float:
        return self.n_steps * self.dt

    @property
    def initial_amplitude(self) -> complex:
        return self.alpha0 * np.exp(1j * self.alpha0_phase)

    @property
    def feedback_beta(self) -> complex:
        angle = self.phi if self.feedback_phase_override is None else self.feedback_phase_override
        return self.feedback_magnitude * np.exp(1j * angle)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "alpha0": self.alpha0,
            "alpha0_phase": self.alpha0_phase,
            "phi": self.phi,
            "feedback_magnitude": self.feedback_magnitude,
            "kappa": self.kappa,
            "dt": self.dt,
            "n_steps": self.n_steps,
            "leakage_budget": self.leakage_budget,
            "representation": self.representation,
            "feedback_phase_override": self.feedback_phase_override,
            "trace_mode": self.trace_mode,
            "skip_fraction_max": self.skip_fraction_max,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_updates(self, **kw) -> "SimConfig":
        return replace(self, **kw)

    # Operator assembly (fock representation) -------------------------------

    def conditional_generator(self) -> ConditionalGenerator:
        h = FockOperator(np.zeros((self.dim, self.dim)), self.dim, kind="hermitian")
        return build_conditional_generator(h, annihilation_op(self.dim), DecayRate(self.kappa))

    def feedback_rule(self) -> FeedbackRule | None:
        if self.feedback_magnitude == 0:
            return None
        angle = self.phi if self.feedback_phase_override is None else self.feedback_phase_override
        return make_feedback_rule(angle, self.feedback_magnitude, self.dim)

    def no_jump_matrix(self) -> np.ndarray:
        # H = 0 makes H_cond diagonal; the exponential is exact.
        levels = np.arange(self.dim, dtype=float)
        return np.diag(np.exp(-0.5 * self.kappa * self.dt * levels)).astype(complex)

    def jump_matrix(self) -> np.ndarray:
        """Full jump-step matrix: reset (and feedback) at the interval start,
        then conditional no-photon evolution to the interval end.

        Composing K0 after R L keeps both exact properties the physics
        demands: feedback-free coherent trajectories are identical for every
        emission pattern (c-eigenstate transparency plus the common decay),
        and the phi = pi feedback empties the cavity into an exactly
        K0-invariant vacuum.
        """
        c = annihilation_op(self.dim).matrix
        fb = self.feedback_rule()
        reset = c if fb is None else fb.r_op.matrix @ c
        return self.no_jump_matrix() @ reset


@dataclass(frozen=True)
class TrajectoryRecord:
    """One stochastic run: emission flags, optional traces, telemetry."""

    seed: int
    emitted: np.ndarray
    amp_trace: np.ndarray | None
    n_trace: np.ndarray | None
    final_leakage: float
    clamped_steps: int = 0

    @property
    def n_steps(self) -> int:
        return len(self.emitted)


@dataclass(frozen=True)
class EnsembleRecord:
    """Completed trajectories of one configuration, plus skip bookkeeping.

    Rows of the arrays correspond to traj_ids (original indices); skipped
    trajectories (truncation aborts) are recorded separately.
    """

    config: SimConfig
    master_seed: int
    traj_ids: np.ndarray
    seeds: np.ndarray
    emitted: np.ndarray
    amp_trace: np.ndarray | None
    n_trace: np.ndarray | None
    clamped_steps: np.ndarray
    skipped: tuple
    n_requested: int
    configs_hash: str = ""

    def __post_init__(self):
        if not self.configs_hash:
            object.__setattr__(self, "configs_hash", self.config.config_hash())

    @property
    def n_traj(self) -> int:
        return len(self.traj_ids)

    @property
    def skip_fraction(self) -> float:
        return len(self.skipped) / self.n_requested

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.configs_hash.encode())
        h.update(np.ascontiguousarray(self.traj_ids).tobytes())
        h.update(np.ascontiguousarray(self.seeds).tobytes())
        h.update(np.ascontiguousarray(self.emitted).tobytes())
        for arr in (self.amp_trace, self.n_trace):
            if arr is not None:
                h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def metadata(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "configs_hash": self.configs_hash,
            "master_seed": self.master_seed,
            "n_requested": self.n_requested,
            "n_kept": self.n_traj,
            "skipped": [
                {"traj_id": int(i), "status": int(s), "step": int(k)} for i, s, k in self.skipped
            ],
            "backend": kernels.BACKEND,
            "version": __version__,
        }

    def to_csv(self, path) -> None:
        """Columnar dump, one row per (trajectory, step); requires full traces."""
        if self.amp_trace is None or self.n_trace is None:
            raise ValueError("CSV serialization requires trace_mode='full'")
        with open(path, "w") as fh:
            fh.write("traj_id,step,emitted,re_amp,im_amp,n_exp\n")
            for r, tid in enumerate(self.traj_ids):
                for k in range(self.emitted.shape[1]):
                    a = self.amp_trace[r, k]
                    fh.write(
                        f"{tid},{k},{int(self.emitted[r, k])},"
                        f"{CSV_FLOAT.format(a.real)},{CSV_FLOAT.format(a.imag)},"
                        f"{CSV_FLOAT.format(self.n_trace[r, k])}\n")

    def write_metadata(self, path, extra: dict | None = None) -> None:
        meta = self.metadata()
        meta["written_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        if extra:
            meta.update(extra)
        with open(path, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def prepare_initial_state(cfg: SimConfig) -> PureState:
    """Truncated coherent state |alpha0 e^{i alpha0_phase}> within budget."""
    state, tail = make_coherent_state(cfg.initial_amplitude, cfg.dim)
    if cfg.leakage_budget is not None and tail > cfg.leakage_budget:
        raise TruncationError(
            f"initial coherent state loses {tail:.3e} probability at dim={cfg.dim}, "
            f"budget {cfg.leakage_budget:.3e}", step_index=-1)
    return state


def step(psi: PureState, k0: FockOperator, gen: ConditionalGenerator,
         fb: FeedbackRule | None, dt: TimeStep, u: float) -> tuple[PureState, bool]:
    """One measurement step: branch on the first-order jump probability.

    A detected emission applies the reset (and feedback) to the state at the
    start of the interval; both branches then evolve under the no-photon
    propagator to the interval end.  Composing the remainder-of-step K0 into
    the jump branch is what makes feedback-free coherent trajectories exactly
    seed-independent and the phi = pi vacuum trap exact.

    Reference implementation of the per-step contract; the kernels fuse the
    same operations for ensemble runs.
    """
    p = jump_probability(gen, psi, dt)
    if u < p:
        out, _ = apply_no_jump(k0, apply_jump(gen, fb, psi))
        return out, True
    out, _ = apply_no_jump(k0, psi)
    return out, False


def _run_single(cfg: SimConfig, seed: int, psi0, k0, jump_mat, record_traces, backend):
    uniforms = kernels.uniform_stream(seed, cfg.n_steps)
    kappa_dt = cfg.kappa * cfg.dt
    if cfg.representation == "coherent":
        emitted, amp, ntr, alpha, clamped = kernels.coherent_trajectory(
            cfg.initial_amplitude, cfg.feedback_beta, kappa_dt,
            np.exp(-0.5 * kappa_dt), uniforms, record_traces, backend=backend)
        return emitted, amp, ntr, 0.0, kernels.STATUS_OK, -1, clamped
    emitted, amp, ntr, psi, status, abort_step, clamped = kernels.fock_trajectory(
        psi0, k0, jump_mat, kappa_dt, uniforms, cfg.leakage_budget,
        record_traces, backend=backend)
    leak = float(abs(psi[-1]) ** 2)
    return emitted, amp, ntr, leak, status, abort_step, clamped


def _fock_operators(cfg: SimConfig):
    if cfg.representation != "fock":
        return None, None, None
    return prepare_initial_state(cfg).amplitudes, cfg.no_jump_matrix(), cfg.jump_matrix()


def run_trajectory(cfg: SimConfig, seed: int, backend: str | None = None) -> TrajectoryRecord:
    """Deterministic function of (cfg, seed); raises TruncationError on abort."""
    psi0, k0, jump_mat = _fock_operators(cfg)
    record_traces = cfg.trace_mode == "full"
    emitted, amp, ntr, leak, status, abort_step, clamped = _run_single(
        cfg, seed, psi0, k0, jump_mat, record_traces, backend)
    if status == kernels.STATUS_LEAK:
        raise TruncationError(
            f"leakage budget {cfg.leakage_budget:.3e} exceeded at step {abort_step}",
            step_index=abort_step)
    if status == kernels.STATUS_DARK:
        raise TruncationError(
            f"jump drawn from a dark state at step {abort_step}", step_index=abort_step)
    return TrajectoryRecord(seed=seed, emitted=emitted, amp_trace=amp, n_trace=ntr,
                            final_leakage=leak, clamped_steps=clamped)


def run_ensemble(cfg: SimConfig, n_traj: int, master_seed: int,
                 workers: int = 1, backend: str | None = None) -> EnsembleRecord:
    """Run n_traj independent trajectories with derived seeds.

    Truncation aborts are skipped and counted; the run fails once more than
    cfg.skip_fraction_max of the requested trajectories were skipped.
    Results are identical for any worker count.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    record_traces = cfg.trace_mode == "full"
    psi0, k0, jump_mat = _fock_operators(cfg)
    seeds = np.array([kernels.derive_seed(master_seed, i) for i in range(n_traj)],
                     dtype=np.uint64)

    emitted = np.zeros((n_traj, cfg.n_steps), dtype=np.uint8)
    amp = np.zeros((n_traj, cfg.n_steps), dtype=complex) if record_traces else None
    ntr = np.zeros((n_traj, cfg.n_steps), dtype=float) if record_traces else None
    clamped = np.zeros(n_traj, dtype=np.int64)
    status = np.zeros(n_traj, dtype=np.int64)
    abort_at = np.full(n_traj, -1, dtype=np.int64)

    def work(i: int) -> None:
        em, am, nt, _leak, st, ab, cl = _run_single(
            cfg, int(seeds[i]), psi0, k0, jump_mat, record_traces, backend)
        emitted[i] = em
        if record_traces:
            amp[i] = am
            ntr[i] = nt
        clamped[i] = cl
        status[i] = st
        abort_at[i] = ab

    if workers <= 1:
        for i in range(n_traj):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(n_traj)))

    kept = status == kernels.STATUS_OK
    skipped = tuple(
        (int(i), int(status[i]), int(abort_at[i])) for i in np.nonzero(~kept)[0])
    if len(skipped) > cfg.skip_fraction_max * n_traj:
        raise TruncationError(
            f"{len(skipped)}/{n_traj} trajectories exceeded the truncation budget "
            f"(allowed fraction {cfg.skip_fraction_max})",
            step_index=int(skipped[0][2]))

    ids = np.nonzero(kept)[0].astype(np.int64)
    return EnsembleRecord(
        config=cfg, master_seed=int(master_seed), traj_ids=ids, seeds=seeds[kept],
        emitted=emitted[kept],
        amp_trace=amp[kept] if record_traces else None,
        n_trace=ntr[kept] if record_traces else None,
        clamped_steps=clamped[kept], skipped=skipped, n_requested=n_traj)
