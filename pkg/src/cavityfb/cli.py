"""Batch command-line front-end.

    cavityfb <experiment> [--config FILE] [--seed N] [--ntraj N]
             [--workers N] [--out DIR] [--set section.key=value ...]

Experiments: oracle-check, fig3-trace, g2-scan, scaling, kraus-demo,
prep-validate, bench.  Results are CSV files plus a metadata JSON in the
output directory; partial files are written to a temporary name and renamed
only on success.  Exit codes: 0 success, 2 configuration error, 3 runtime or
truncation error, 4 statistical acceptance failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .master import driven_relaxation, equivalence_check, evolve_expectations, \
    density_from_pure, lindblad_generator_for
from .fockspace import make_coherent_state
from .kraus import KrausPair, QubitState, build_effective_state, \
    sequential_distribution, swap_pair
from .metrology import amplitude_trace, estimate_g2, fit_scaling, postselect
from .runconfig import ConfigError, RunConfig, parse_config
from .trajectories import SimConfig, TruncationError, run_ensemble

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_STATISTICAL = 4

F = "{:.17g}".format


def _atomic_write(path: Path, content: str) -> None:
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_text(content)
    os.replace(tmp, path)


def _write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(F(x) if isinstance(x, float) else str(x) for x in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_metadata(out: Path, rc: RunConfig, started: float, extra: dict | None = None) -> None:
    meta = {
        "experiment": rc.experiment,
        "sim": rc.sim.to_dict(),
        "scan": {k: (list(v) if isinstance(v, (list, tuple)) else v)
                 for k, v in rc.scan.items()},
        "n_traj": rc.n_traj,
        "master_seed": rc.master_seed,
        "workers": rc.workers,
        "backend": kernels.BACKEND,
        "version": __version__,
        "wall_time_s": round(time.monotonic() - started, 3),
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        meta.update(extra)
    _atomic_write(out / "metadata.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def run_oracle_check(rc: RunConfig, out: Path) -> int:
    """Trajectory-ensemble vs. master-equation z-test, without and with feedback."""
    times = rc.scan.get("times", [0.25, 0.5, 1.0, 2.0])
    cases = [("no-feedback", rc.sim.with_updates(feedback_magnitude=0.0))]
    if rc.sim.feedback_magnitude > 0:
        cases.append(("feedback", rc.sim))
    rows, curve_rows = [], []
    all_pass = True
    for idx, (label, sim) in enumerate(cases):
        ens = run_ensemble(sim, rc.n_traj, kernels.derive_seed(rc.master_seed, idx),
                           workers=rc.workers)
        beta = sim.feedback_beta if sim.feedback_magnitude > 0 else None
        gen = lindblad_generator_for(sim.dim, sim.kappa, feedback_beta=beta)
        report = equivalence_check(ens, gen, ["n", "c"], times)
        print(f"--- {label}")
        print(report)
        all_pass &= report.passed
        for r in report.rows:
            rows.append((label, r["observable"], r["time"], r["mean"],
                         r["std_err"], r["oracle"], r["z"]))
        rho0 = density_from_pure(make_coherent_state(sim.initial_amplitude, sim.dim)[0])
        for t, vals in evolve_expectations(gen, rho0, times).items():
            for obs, val in vals.items():
                curve_rows.append((label, t, obs, val))
    _write_csv(out / "oracle_check.csv",
               ["case", "observable", "time", "ensemble_mean", "std_err", "oracle", "z"],
               rows)
    _write_csv(out / "oracle_curve.csv", ["case", "time", "observable", "value"],
               curve_rows)
    return EXIT_OK if all_pass else EXIT_STATISTICAL


_FIG3_GP = """\
# Post-selected field-amplitude separation, logarithmic layout
set datafile separator ","
set logscale y
set xlabel "t  [1/kappa]"
set ylabel "|mean alpha(t)| over step-0-detection subensemble"
set key left bottom
plot {series}
"""


def run_fig3_trace(rc: RunConfig, out: Path) -> int:
    """Post-selected |field| trace per feedback phase (log-layout plot script)."""
    phis = rc.scan["phi_list"]
    avg_mode = rc.scan.get("avg_mode", "mean-then-abs")
    rows = []
    for idx, phi in enumerate(phis):
        sim = rc.sim.with_updates(phi=phi)
        ens = run_ensemble(sim, rc.n_traj, kernels.derive_seed(rc.master_seed, idx),
                           workers=rc.workers)
        sub = postselect(ens)
        times, values = amplitude_trace(sub, mode=avg_mode)
        log.info("phi=%.6f: %d/%d selected", phi, sub.n_selected, ens.n_traj)
        rows += [(phi, t, v) for t, v in zip(times, values)]
    _write_csv(out / "amplitude_trace.csv", ["phi", "t", "mean_abs_amp"], rows)
    series = ", \\\n     ".join(
        f"\"amplitude_trace.csv\" using 2:(abs($1-{F(phi)})<1e-9?$3:1/0) "
        f"with lines title \"phi={phi/np.pi:.3f} pi\"" for phi in phis)
    _atomic_write(out / "fig3_plot.gp", _FIG3_GP.format(series=series))
    return EXIT_OK


def run_g2_scan(rc: RunConfig, out: Path) -> int:
    """g2(t, 0) over feedback phases and a set of correlation steps."""
    phis = rc.scan["phi_list"]
    steps = rc.scan["step_t_list"]
    if max(steps) >= rc.sim.n_steps:
        raise ConfigError(f"step_t {max(steps)} >= n_steps {rc.sim.n_steps}")
    rows = []
    for idx, phi in enumerate(phis):
        sim = rc.sim.with_updates(phi=phi)
        ens = run_ensemble(sim, rc.n_traj, kernels.derive_seed(rc.master_seed, idx),
                           workers=rc.workers)
        for step_t in steps:
            est = estimate_g2(ens, step_t)
            rows.append((phi, step_t, est.g2, est.std_err, est.n_conditional))
    _write_csv(out / "g2_scan.csv", ["phi", "step_t", "g2", "std_err", "n_cond"], rows)
    return EXIT_OK


def run_scaling(rc: RunConfig, out: Path) -> int:
    """Phase-uncertainty scaling fit over measurement lengths."""
    fit, details = fit_scaling(rc.sim, rc.scan["n_list"], rc.n_traj,
                               rc.master_seed, dphi=rc.scan.get("dphi", 0.1),
                               workers=rc.workers)
    rows = [(n, res.delta_phi, res.signal, res.slope) for n, res in details]
    _write_csv(out / "scaling.csv", ["N", "delta_phi", "signal", "slope"], rows)
    summary = {
        "exponent": fit.exponent,
        "exponent_err": fit.exponent_err,
        "intercept": fit.intercept,
        "surpasses_sql_2se": fit.surpasses_sql,
        "methods": {str(n): res.method for n, res in details},
        "dphi": rc.scan.get("dphi", 0.1),
    }
    _atomic_write(out / "scaling_fit.json", json.dumps(summary, indent=2) + "\n")
    print(f"fitted exponent: {fit.exponent:+.4f} +- {fit.exponent_err:.4f} "
          f"(SQL surpassed by >=2 se: {fit.surpasses_sql})")
    return EXIT_OK


def run_kraus_demo(rc: RunConfig, out: Path) -> int:
    """Swap-pair closed form plus randomized sequential/entangled equivalence."""
    rng = np.random.default_rng(rc.master_seed)
    psi = QubitState(np.array([0.6, 0.8j]))
    pair = swap_pair([1.0, 0.0], [0.0, 1.0])
    dist = sequential_distribution(psi, pair, 2)
    print("swap pair, n=2, psi = 0.6|xi0> + 0.8i|xi1>:")
    for bits, p in dist.as_dict().items():
        print(f"  p({bits}) = {p:.6f}")
    print("  (closed form: p(01) = |<xi0|psi>|^2, p(10) = |<xi1|psi>|^2, others 0)")

    worst = 0.0
    n_instances = rc.n_traj
    for _ in range(n_instances):
        n = int(rng.integers(1, 9))
        z = rng.normal(size=2) + 1j * rng.normal(size=2)
        psi_r = QubitState(z / np.linalg.norm(z))
        k0 = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        k0 /= np.linalg.norm(k0, 2) * (1.0 + rng.random())
        rest = np.eye(2) - k0.conj().T @ k0
        evals, vecs = np.linalg.eigh(rest)
        k1 = (vecs * np.sqrt(np.clip(evals, 0, None))) @ vecs.conj().T
        pair_r = KrausPair(k0, k1)
        seq = sequential_distribution(psi_r, pair_r, n)
        eff = build_effective_state(psi_r, pair_r, n)
        worst = max(worst, seq.max_abs_difference(eff.born_distribution()))
    print(f"max |sequential - single-shot| over {n_instances} random instances: {worst:.3e}")
    _atomic_write(out / "kraus_demo.json", json.dumps(
        {"swap_distribution": dist.as_dict(), "n_instances": n_instances,
         "max_abs_difference": worst}, indent=2) + "\n")
    return EXIT_OK if worst < 1e-12 else EXIT_STATISTICAL


def run_prep_validate(rc: RunConfig, out: Path) -> int:
    """Driven-cavity relaxation reproduces the target coherent state."""
    sim = rc.sim
    duration = rc.scan.get("duration", 16.0) / sim.kappa
    res = driven_relaxation(sim.alpha0, sim.phi, sim.kappa, sim.dim, duration)
    ok = bool(res["error"] < 1e-3)
    print(f"driven relaxation for t = {res['duration']:.1f}/kappa: "
          f"<c> = {res['amplitude']:.6f}, target {res['target']:.6f}, "
          f"|error| = {res['error']:.2e} -> {'PASS' if ok else 'FAIL'}")
    _atomic_write(out / "prep_validate.json", json.dumps(
        {"amplitude_re": float(res["amplitude"].real),
         "amplitude_im": float(res["amplitude"].imag),
         "target_re": float(res["target"].real),
         "target_im": float(res["target"].imag),
         "abs_error": float(res["error"]), "duration": float(res["duration"]),
         "n": float(res["n"]), "passed": ok}, indent=2) + "\n")
    return EXIT_OK if ok else EXIT_STATISTICAL


def run_bench(rc: RunConfig, out: Path) -> int:
    """Time both kernel backends on both state representations."""
    from .kernels import backend_module  # noqa: F401  (probe availability)

    backends = ["python"]
    if kernels.BACKEND == "cython":
        backends.insert(0, "cython")
    n_traj = rc.n_traj
    rows = []
    print(f"{'representation':>14} {'backend':>8} {'n_traj':>7} {'steps':>6} "
          f"{'wall [s]':>9} {'steps/s':>12}")
    for rep in ("coherent", "fock"):
        sim = rc.sim.with_updates(representation=rep)
        for backend in backends:
            start = time.monotonic()
            run_ensemble(sim, n_traj, rc.master_seed, workers=rc.workers,
                         backend=backend)
            wall = time.monotonic() - start
            rate = n_traj * sim.n_steps / wall
            rows.append((rep, backend, n_traj, sim.n_steps, wall, rate))
            print(f"{rep:>14} {backend:>8} {n_traj:7d} {sim.n_steps:6d} "
                  f"{wall:9.3f} {rate:12.0f}")
    _write_csv(out / "bench.csv",
               ["representation", "backend", "n_traj", "n_steps", "wall_s", "steps_per_s"],
               rows)
    return EXIT_OK


_RUNNERS = {
    "oracle-check": run_oracle_check,
    "fig3-trace": run_fig3_trace,
    "g2-scan": run_g2_scan,
    "scaling": run_scaling,
    "kraus-demo": run_kraus_demo,
    "prep-validate": run_prep_validate,
    "bench": run_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavityfb",
        description="Feedback-cavity trajectory experiments (batch runner).")
    parser.add_argument("experiment", choices=sorted(_RUNNERS),
                        help="which experiment to run")
    parser.add_argument("--config", type=Path, default=None,
                        help="INI run configuration (see README)")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--ntraj", type=int, default=None, help="trajectory count override")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker threads (default: all cores)")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config key (repeatable)")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    started = time.monotonic()
    try:
        text = args.config.read_text() if args.config else ""
        overrides = {"run.experiment": args.experiment}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set needs SECTION.KEY=VALUE, got {item!r}")
            dotted, value = item.split("=", 1)
            overrides[dotted.strip()] = value
        if args.seed is not None:
            overrides["run.master_seed"] = str(args.seed)
        if args.ntraj is not None:
            overrides["run.n_traj"] = str(args.ntraj)
        if args.workers is not None:
            overrides["run.workers"] = str(args.workers)
        if args.out is not None:
            overrides["run.output_dir"] = args.out
        rc = parse_config(text, overrides)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(rc.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        code = _RUNNERS[rc.experiment](rc, out)
        _write_metadata(out, rc, started, extra={"exit_code": code})
        return code
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TruncationError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
