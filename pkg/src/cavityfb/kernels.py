"""Kernel backend selection and the seeded RNG contract.

The compiled Cython kernels are used when importable; setting the environment
variable CAVITYFB_PURE_PYTHON=1 forces the NumPy fallback.  Both backends
implement the same stepping semantics and consume the same uniform stream.

RNG contract (frozen for golden tests):
  * per-trajectory seeds derive from the master seed through
    numpy.random.SeedSequence(entropy=master, spawn_key=(index, ...)),
    collapsed to one uint64 (derive_seed);
  * a trajectory consumes uniforms from
    Generator(Philox(SeedSequence(entropy=seed))).random(n_steps),
    exactly one double in [0, 1) per step, used only for the branch decision.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

STATUS_OK = _kernels_py.STATUS_OK
STATUS_LEAK = _kernels_py.STATUS_LEAK
STATUS_DARK = _kernels_py.STATUS_DARK

if os.environ.get("CAVITYFB_PURE_PYTHON", "") == "1":
    _cy = None
else:
    try:
        from . import _kernels_cy as _cy
    except ImportError:
        _cy = None

BACKEND = "cython" if _cy is not None else "python"


def backend_module(name: str | None = None):
    """Kernel module for the active backend (or an explicitly named one)."""
    if name is None:
        name = BACKEND
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _cy is None:
            raise RuntimeError("compiled kernels are not available in this build")
        return _cy
    raise ValueError(f"unknown backend {name!r}")


def derive_seed(master_seed: int, *path: int) -> int:
    """Deterministic uint64 sub-seed for a trajectory or a nested scan point."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])


def uniform_stream(seed: int, n: int) -> np.ndarray:
    """The trajectory's branch-decision uniforms (Philox, one per step)."""
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=int(seed))))
    return gen.random(n)


def fock_trajectory(psi0, k0, jump_mat, kappa_dt, uniforms, leak_budget,
                    record_traces=True, backend: str | None = None):
    mod = backend_module(backend)
    if mod is _kernels_py:
        return _kernels_py.fock_trajectory(psi0, k0, jump_mat, kappa_dt,
                                           uniforms, leak_budget, record_traces)
    budget = np.inf if leak_budget is None else float(leak_budget)
    return mod.fock_trajectory(
        np.ascontiguousarray(psi0, dtype=np.complex128),
        np.ascontiguousarray(k0, dtype=np.complex128),
        np.ascontiguousarray(jump_mat, dtype=np.complex128),
        float(kappa_dt), np.ascontiguousarray(uniforms, dtype=np.float64),
        budget, bool(record_traces))


def coherent_trajectory(alpha0, beta, kappa_dt, decay, uniforms,
                        record_traces=True, backend: str | None = None):
    mod = backend_module(backend)
    if mod is _kernels_py:
        return _kernels_py.coherent_trajectory(alpha0, beta, kappa_dt, decay,
                                               uniforms, record_traces)
    return mod.coherent_trajectory(
        complex(alpha0), complex(beta), float(kappa_dt), float(decay),
        np.ascontiguousarray(uniforms, dtype=np.float64), bool(record_traces))
