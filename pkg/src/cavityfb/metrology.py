"""Post-selection, photon-correlation estimation, and phase-uncertainty scaling.

The measurement signal is the renormalized second-order correlation
g2(t, 0) = I(t|0) / I(t): the probability of a detection in the step
containing t conditioned on a detection in the first step, over the
unconditioned detection probability.  Emissions between the two times are
ignored.  Being a ratio of rates, g2 is independent of detector efficiency.

Phase uncertainty uses error propagation Delta phi = dM / |dM/dphi| with
M = g2(t, 0), from three ensembles at phi - d, phi, phi + d with independent
derived seeds.  At the symmetric operating point phi = pi the signal is even
in (phi - pi), the central-difference slope vanishes, and the propagation
formula is continued by its finite limit
    Delta phi -> 1 / (2 sqrt(M2 * I(t) * n0)),
where M2 is the quadratic coefficient of g2 around pi (second central
difference) and n0 the number of post-selected trajectories; both the slope
and the signal noise vanish linearly, leaving this ratio.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .trajectories import EnsembleRecord, SimConfig, run_ensemble

__all__ = [
    "CorrelationEstimate",
    "PhaseUncertaintyResult",
    "PostselectedSubensemble",
    "ScalingFit",
    "UninformativePointError",
    "amplitude_trace",
    "estimate_g2",
    "fit_loglog",
    "fit_scaling",
    "phase_uncertainty",
    "postselect",
    "thin_emissions",
]

WIDE_ERROR_MIN_COUNTS = 10
SLOPE_SIGNIFICANCE = 10.0
CURVATURE_SIGNIFICANCE = 3.0


class UninformativePointError(RuntimeError):
    """The signal carries no resolvable phase information at this point."""


@dataclass(frozen=True)
class PostselectedSubensemble:
    """Trajectories with a detection in the first measurement step."""

    parent: EnsembleRecord
    selected_rows: np.ndarray
    fraction: float

    @property
    def n_selected(self) -> int:
        return len(self.selected_rows)


def postselect(ensemble: EnsembleRecord) -> PostselectedSubensemble:
    """Select trajectories with emitted[0]; error if none qualify."""
    rows = np.nonzero(ensemble.emitted[:, 0] != 0)[0]
    if len(rows) == 0:
        raise UninformativePointError(
            "no trajectory emitted in the first step; raise n_traj or the initial field")
    return PostselectedSubensemble(
        parent=ensemble, selected_rows=rows,
        fraction=len(rows) / ensemble.n_traj)


def amplitude_trace(sub: PostselectedSubensemble,
                    mode: str = "mean-then-abs") -> tuple[np.ndarray, np.ndarray]:
    """Per-step |field| averaged over the subensemble.

    Default averages the complex <c> values first and then takes the modulus,
    preserving coherent-phase cancellations; "abs-then-mean" averages the
    moduli instead (exposed for comparison, the two differ once trajectories
    dephase).
    """
    ens = sub.parent
    if ens.amp_trace is None:
        raise ValueError("amplitude_trace requires trace_mode='full'")
    amps = ens.amp_trace[sub.selected_rows]
    if mode == "mean-then-abs":
        values = np.abs(amps.mean(axis=0))
    elif mode == "abs-then-mean":
        values = np.abs(amps).mean(axis=0)
    else:
        raise ValueError(f"unknown averaging mode {mode!r}")
    cfg = ens.config
    times = cfg.dt * np.arange(1, cfg.n_steps + 1)
    return times, values


def _rate_and_se(k: int, n: int) -> tuple[float, float]:
    """Binomial rate and standard error, Agresti-corrected for small counts."""
    if n <= 0:
        raise ValueError("empty sample")
    p = k / n
    if k < 30 or n - k < 30:
        pt = (k + 1) / (n + 2)
        se = float(np.sqrt(pt * (1 - pt) / (n + 2)))
    else:
        se = float(np.sqrt(p * (1 - p) / n))
    return p, se


@dataclass(frozen=True)
class CorrelationEstimate:
    """g2(t, 0) from counting statistics."""

    g2: float
    std_err: float
    n_conditional: int
    i_t: float
    i_t_given_0: float
    n_selected: int
    wide_error: bool

    def __post_init__(self):
        if self.i_t > 0:
            assert abs(self.g2 - self.i_t_given_0 / self.i_t) < 1e-12


def estimate_g2(ensemble: EnsembleRecord, step_t: int) -> CorrelationEstimate:
    """Conditional/unconditional detection-rate ratio at step_t.

    i_t_given_0 counts only step-0 emitters that also emit at step_t
    (intermediate emissions are not conditioned on); i_t counts all
    trajectories emitting at step_t.
    """
    cfg = ensemble.config
    if not 0 <= step_t < cfg.n_steps:
        raise ValueError(f"step_t {step_t} outside [0, {cfg.n_steps})")
    first = ensemble.emitted[:, 0] != 0
    late = ensemble.emitted[:, step_t] != 0
    n_all = ensemble.n_traj
    n0 = int(first.sum())
    if n0 == 0:
        raise UninformativePointError("no step-0 emissions to condition on")
    k1 = int((first & late).sum())
    kt = int(late.sum())
    if kt == 0:
        raise UninformativePointError(f"no emissions at step {step_t}: g2 undefined (I(t)=0)")
    p_cond, se_cond = _rate_and_se(k1, n0)
    i_t, se_t = _rate_and_se(kt, n_all)
    g2 = p_cond / i_t
    std_err = float(np.sqrt((se_cond / i_t) ** 2 + (p_cond * se_t / i_t**2) ** 2))
    return CorrelationEstimate(
        g2=g2, std_err=std_err, n_conditional=k1, i_t=i_t, i_t_given_0=p_cond,
        n_selected=n0, wide_error=k1 < WIDE_ERROR_MIN_COUNTS)


def thin_emissions(ensemble: EnsembleRecord, eta: float, seed: int) -> EnsembleRecord:
    """Detector-efficiency post-processing: keep each click with probability eta.

    Models an inefficient detector on the recorded emission stream; g2
    estimates are invariant under thinning in expectation.
    """
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=int(seed))))
    keep = rng.random(ensemble.emitted.shape) < eta
    thinned = (ensemble.emitted != 0) & keep
    return EnsembleRecord(
        config=ensemble.config, master_seed=ensemble.master_seed,
        traj_ids=ensemble.traj_ids, seeds=ensemble.seeds,
        emitted=thinned.astype(np.uint8), amp_trace=ensemble.amp_trace,
        n_trace=ensemble.n_trace, clamped_steps=ensemble.clamped_steps,
        skipped=ensemble.skipped, n_requested=ensemble.n_requested)


@dataclass(frozen=True)
class PhaseUncertaintyResult:
    delta_phi: float
    signal: float
    slope: float
    slope_se: float
    curvature: float
    curvature_se: float
    method: str              # "slope" or "symmetric-limit"
    g2_minus: CorrelationEstimate
    g2_center: CorrelationEstimate
    g2_plus: CorrelationEstimate
    dphi_fd: float

    def as_tuple(self) -> tuple[float, float, float]:
        return self.delta_phi, self.signal, self.slope


def phase_uncertainty(cfg: SimConfig, step_t: int, dphi: float, n_traj: int,
                      master_seed: int, workers: int = 1) -> PhaseUncertaintyResult:
    """Error-propagation phase uncertainty from g2(t, 0) at cfg.phi.

    Three ensembles run at phi - dphi, phi, phi + dphi with independent
    derived seeds.  When the central-difference slope is significant
    (|slope| >= 10 x its standard error) the standard propagation
    delta_phi = std_err(g2)/|slope| applies.  Otherwise the operating point
    is slope-degenerate; if the curvature is significant the symmetric-point
    limit 1/(2 sqrt(M2 I(t) n0)) is used (method "symmetric-limit"), and if
    neither is resolvable the point is uninformative.
    """
    if dphi <= 0:
        raise ValueError("dphi must be positive")
    estimates = []
    for j, phi in enumerate((cfg.phi - dphi, cfg.phi, cfg.phi + dphi)):
        sub_cfg = cfg.with_updates(phi=phi, trace_mode="flags")
        ens = run_ensemble(sub_cfg, n_traj, kernels.derive_seed(master_seed, j),
                           workers=workers)
        estimates.append(estimate_g2(ens, step_t))
    gm, g0, gp = estimates

    slope = (gp.g2 - gm.g2) / (2 * dphi)
    slope_se = float(np.sqrt(gp.std_err**2 + gm.std_err**2) / (2 * dphi))
    curvature = (gp.g2 + gm.g2 - 2 * g0.g2) / dphi**2
    curvature_se = float(
        np.sqrt(gp.std_err**2 + gm.std_err**2 + 4 * g0.std_err**2) / dphi**2)

    if abs(slope) >= SLOPE_SIGNIFICANCE * slope_se and slope != 0:
        delta_phi = g0.std_err / abs(slope)
        method = "slope"
    elif curvature > CURVATURE_SIGNIFICANCE * curvature_se:
        # Even signal around the operating point: both the slope and the
        # estimator noise vanish linearly in (phi - pi); their ratio's limit
        # depends only on the curvature and the conditional statistics.
        m2 = 0.5 * curvature
        delta_phi = 1.0 / (2.0 * np.sqrt(m2 * g0.i_t * g0.n_selected))
        method = "symmetric-limit"
    else:
        raise UninformativePointError(
            f"slope {slope:.3g} (se {slope_se:.3g}) and curvature {curvature:.3g} "
            f"(se {curvature_se:.3g}) both insignificant: g2 carries no resolvable "
            "phase information here")
    return PhaseUncertaintyResult(
        delta_phi=float(delta_phi), signal=g0.g2, slope=float(slope),
        slope_se=slope_se, curvature=float(curvature), curvature_se=curvature_se,
        method=method, g2_minus=gm, g2_center=g0, g2_plus=gp, dphi_fd=dphi)


@dataclass(frozen=True)
class ScalingFit:
    """OLS fit of log(delta_phi) against log(N)."""

    points: tuple
    exponent: float
    exponent_err: float
    intercept: float

    @property
    def surpasses_sql(self) -> bool:
        """Below the standard-quantum-limit exponent -0.5 by >= 2 std errors."""
        return self.exponent + 2.0 * self.exponent_err < -0.5


def fit_loglog(points) -> ScalingFit:
    """Least-squares power-law fit on (N, delta_phi) pairs."""
    pts = [(float(n), float(d)) for n, d in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points for a log-log fit")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    a = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = a @ coef - y
    dof = len(pts) - 2
    sxx = float(((x - x.mean()) ** 2).sum())
    err = float(np.sqrt(resid @ resid / dof / sxx)) if dof > 0 else 0.0
    return ScalingFit(points=tuple(pts), exponent=float(coef[0]),
                      exponent_err=err, intercept=float(coef[1]))


def fit_scaling(cfg_base: SimConfig, n_list, n_traj: int, master_seed: int,
                dphi: float = 0.1, workers: int = 1) -> tuple[ScalingFit, list]:
    """Phase-uncertainty scaling over measurement lengths N (steps).

    Each N runs its own three-ensemble phase_uncertainty with t = N dt
    (step_t = N - 1) and an independent derived seed.  Requires >= 4 distinct
    N spanning at least a decade.
    """
    ns = sorted(set(int(n) for n in n_list))
    if len(ns) < 4:
        raise ValueError("need at least 4 distinct N values")
    if max(ns) < 10 * min(ns):
        raise ValueError("N values must span at least a decade")
    details = []
    points = []
    for i, n in enumerate(ns):
        cfg = cfg_base.with_updates(n_steps=n)
        res = phase_uncertainty(cfg, step_t=n - 1, dphi=dphi, n_traj=n_traj,
                                master_seed=kernels.derive_seed(master_seed, 1000 + i),
                                workers=workers)
        details.append((n, res))
        points.append((n, res.delta_phi))
    return fit_loglog(points), details
