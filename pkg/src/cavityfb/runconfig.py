"""Flat INI-style run configuration for the batch CLI.

Three sections, all optional, unknown keys rejected:

  [run]   experiment, n_traj, master_seed, output_dir, workers
  [sim]   one key per SimConfig field
  [scan]  experiment-specific lists and knobs (phi_list, n_list, step_t_list,
          dphi, eta, times, duration, avg_mode)

Angles accept plain radians or a "pi" suffix ("0.96pi", "pi").  Defaults
reproduce the feedback-separation figure: alpha0 = 2, |beta| = 2, phi = pi,
kappa dt = 0.01.  Command-line --set section.key=value entries override file
values key by key.
"""
from __future__ import annotations

import configparser
import io
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .trajectories import SimConfig

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_phi"]

log = logging.getLogger(__name__)

EXPERIMENTS = ("oracle-check", "fig3-trace", "g2-scan", "scaling",
               "kraus-demo", "prep-validate", "bench")

_RUN_KEYS = {"experiment", "n_traj", "master_seed", "output_dir", "workers"}
_SIM_KEYS = {"dim", "alpha0", "alpha0_phase", "phi", "feedback_magnitude",
             "kappa", "dt", "n_steps", "leakage_budget", "representation",
             "feedback_phase_override", "trace_mode", "skip_fraction_max"}
_SCAN_KEYS = {"phi_list", "n_list", "step_t_list", "dphi", "eta", "times",
              "duration", "avg_mode"}

# experiment-specific run defaults; everything else falls back to SimConfig
_EXPERIMENT_DEFAULTS = {
    "oracle-check": {"n_traj": 10_000,
                     "sim": {"dim": 30, "alpha0": 1.0, "feedback_magnitude": 1.0,
                             "phi": np.pi / 2, "n_steps": 200,
                             "leakage_budget": None, "representation": "fock"},
                     "scan": {"times": [0.25, 0.5, 1.0, 2.0]}},
    "fig3-trace": {"n_traj": 10_000,
                   "sim": {"representation": "coherent"},
                   "scan": {"phi_list": [0.96 * np.pi, 0.98 * np.pi, np.pi,
                                         1.02 * np.pi, 1.04 * np.pi]}},
    "g2-scan": {"n_traj": 10_000,
                "sim": {"representation": "coherent", "trace_mode": "flags"},
                "scan": {"phi_list": [0.96 * np.pi, 0.98 * np.pi, np.pi],
                         "step_t_list": [99, 249, 499]}},
    "scaling": {"n_traj": 10_000,
                "sim": {"representation": "coherent", "trace_mode": "flags"},
                "scan": {"n_list": [25, 50, 100, 200, 400], "dphi": 0.1}},
    "kraus-demo": {"n_traj": 200, "scan": {}},
    "prep-validate": {"n_traj": 1,
                      "sim": {"dim": 40, "alpha0": 1.0, "phi": np.pi / 3},
                      "scan": {"duration": 16.0}},
    "bench": {"n_traj": 200, "scan": {}},
}


class ConfigError(ValueError):
    """Malformed or out-of-range run configuration."""


def parse_phi(text: str) -> float:
    """Angle in radians; accepts e.g. "1.5", "pi", "0.96pi", "-0.5pi"."""
    s = text.strip().lower()
    if s.endswith("pi"):
        head = s[:-2].strip()
        factor = 1.0 if head in ("", "+") else (-1.0 if head == "-" else float(head))
        return factor * np.pi
    return float(s)


def _parse_scalar(key: str, raw: str):
    s = raw.strip()
    if s.lower() in ("none", "null"):
        return None
    if key in ("phi", "alpha0_phase", "feedback_phase_override", "dphi"):
        return parse_phi(s)
    if key in ("dim", "n_steps", "n_traj", "master_seed", "workers"):
        return int(s)
    if key in ("experiment", "output_dir", "representation", "trace_mode", "avg_mode"):
        return s
    return float(s)


def _parse_list(key: str, raw: str) -> list:
    items = [x for x in (p.strip() for p in raw.split(",")) if x]
    if key == "phi_list":
        return [parse_phi(x) for x in items]
    if key == "times":
        return [float(x) for x in items]
    return [int(x) for x in items]


@dataclass
class RunConfig:
    experiment: str
    sim: SimConfig
    n_traj: int
    master_seed: int
    output_dir: str
    workers: int
    scan: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; "
                              f"choose from {', '.join(EXPERIMENTS)}")
        if self.n_traj < 1:
            raise ConfigError("n_traj must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.sim.kappa * self.sim.dt > 0.1:
            log.warning("kappa*dt = %.3g > 0.1: coarse steps, first-order jump "
                        "probabilities degrade", self.sim.kappa * self.sim.dt)
        dim_rec = 4 * self.sim.alpha0**2 + 20
        if self.sim.representation == "fock" and self.sim.dim < dim_rec:
            log.warning("dim = %d below the recommended 4|alpha0|^2 + 20 = %d",
                        self.sim.dim, int(dim_rec))
        if self.experiment == "scaling":
            ns = self.scan.get("n_list", [])
            if len(set(ns)) < 4:
                raise ConfigError("scaling needs >= 4 distinct n_list values")
            if max(ns) < 10 * min(ns):
                raise ConfigError("scaling n_list must span at least a decade")


def parse_config(text: str, overrides: dict[str, str] | None = None) -> RunConfig:
    """Parse and validate a configuration document (flat INI with sections).

    overrides maps "section.key" to raw string values and wins over the file.
    Unknown sections or keys are hard errors.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_file(io.StringIO(text))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    raw: dict[str, dict[str, str]] = {"run": {}, "sim": {}, "scan": {}}
    for section in parser.sections():
        if section not in raw:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in parser.items(section):
            raw[section][key] = value
    for dotted, value in (overrides or {}).items():
        try:
            section, key = dotted.split(".", 1)
        except ValueError:
            raise ConfigError(f"override {dotted!r} must look like section.key") from None
        if section not in raw:
            raise ConfigError(f"unknown section in override {dotted!r}")
        raw[section][key] = value

    for section, allowed in (("run", _RUN_KEYS), ("sim", _SIM_KEYS), ("scan", _SCAN_KEYS)):
        for key in raw[section]:
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]")

    experiment = raw["run"].get("experiment")
    if not experiment:
        raise ConfigError("run.experiment is required")
    experiment = experiment.strip()
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; "
                          f"choose from {', '.join(EXPERIMENTS)}")
    defaults = _EXPERIMENT_DEFAULTS[experiment]

    sim_kwargs = dict(defaults.get("sim", {}))
    for key, value in raw["sim"].items():
        try:
            sim_kwargs[key] = _parse_scalar(key, value)
        except ValueError as exc:
            raise ConfigError(f"bad value for sim.{key}: {value!r} ({exc})") from exc
    try:
        sim = SimConfig(**sim_kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid sim config: {exc}") from exc

    scan = dict(defaults.get("scan", {}))
    for key, value in raw["scan"].items():
        try:
            if key.endswith("_list") or key == "times":
                scan[key] = _parse_list(key, value)
            else:
                scan[key] = _parse_scalar(key, value)
        except ValueError as exc:
            raise ConfigError(f"bad value for scan.{key}: {value!r} ({exc})") from exc

    def run_val(key, fallback):
        if key in raw["run"]:
            try:
                return _parse_scalar(key, raw["run"][key])
            except ValueError as exc:
                raise ConfigError(f"bad value for run.{key}: {raw['run'][key]!r}") from exc
        return fallback

    cfg = RunConfig(
        experiment=experiment,
        sim=sim,
        n_traj=run_val("n_traj", defaults.get("n_traj", 10_000)),
        master_seed=run_val("master_seed", 42),
        output_dir=run_val("output_dir", "out"),
        workers=run_val("workers", os.cpu_count() or 1),
        scan=scan,
    )
    cfg.validate()
    return cfg
