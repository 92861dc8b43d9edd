"""NumPy reference implementations of the trajectory stepping kernels.

These are the import-time fallback when the compiled extension is not
available, and the ground truth the compiled kernels are tested against.
Per-trajectory math is shape-stable (never batched across trajectories), so
results are independent of how trajectories are distributed over workers.

Status codes shared with the compiled kernels:
  0 = completed, 1 = leakage budget exceeded, 2 = jump drawn from a dark state.
"""
from __future__ import annotations

import numpy as np

STATUS_OK = 0
STATUS_LEAK = 1
STATUS_DARK = 2

_DARK_EPS_SQ = 1e-28


def fock_trajectory(psi0, k0, jump_mat, kappa_dt, uniforms, leak_budget,
                    record_traces=True):
    """Run one Fock-space trajectory.

    Per step k: emission probability p = clip(kappa*dt*<n>, 0, 1); if
    uniforms[k] < p apply the jump-step matrix (reset, feedback and the
    remainder-of-step no-photon evolution folded into one matrix), else
    apply K0; renormalize; record <c> and <n>; abort once the top-level
    weight exceeds leak_budget.

    Returns (emitted, amp, nexp, psi, status, abort_step, clamp_count);
    amp/nexp are None when record_traces is false, abort_step is -1 unless
    the run aborted, and traces beyond abort_step are unspecified.
    """
    n_steps = len(uniforms)
    dim = len(psi0)
    psi = psi0.astype(complex, copy=True)
    levels = np.arange(dim, dtype=float)
    roots = np.sqrt(levels[1:])
    emitted = np.zeros(n_steps, dtype=np.uint8)
    amp = np.zeros(n_steps, dtype=complex) if record_traces else None
    nexp_tr = np.zeros(n_steps, dtype=float) if record_traces else None
    clamp_count = 0
    for k in range(n_steps):
        nexp = float(np.sum(levels * (psi.real**2 + psi.imag**2)))
        p = kappa_dt * nexp
        if p > 1.0:
            clamp_count += 1
            p = 1.0
        if uniforms[k] < p:
            if nexp < _DARK_EPS_SQ:
                return emitted, amp, nexp_tr, psi, STATUS_DARK, k, clamp_count
            psi = jump_mat @ psi
            emitted[k] = 1
        else:
            psi = k0 @ psi
        psi /= np.linalg.norm(psi)
        if record_traces:
            amp[k] = np.sum(psi[:-1].conj() * roots * psi[1:])
            nexp_tr[k] = np.sum(levels * (psi.real**2 + psi.imag**2))
        leak = psi[-1].real**2 + psi[-1].imag**2
        if leak_budget is not None and leak > leak_budget:
            return emitted, amp, nexp_tr, psi, STATUS_LEAK, k, clamp_count
    return emitted, amp, nexp_tr, psi, STATUS_OK, -1, clamp_count


def coherent_trajectory(alpha0, beta, kappa_dt, decay, uniforms,
                        record_traces=True):
    """Run one trajectory in the exact coherent-state representation.

    Valid for H = 0, L = c, displacement feedback and a coherent initial
    state: the state stays coherent, so only its amplitude is tracked.
    Every step multiplies alpha by exp(-kappa*dt/2); a jump first adds beta
    at the interval start (beta = 0 reproduces the feedback-free eigenstate
    transparency exactly).  There is no truncation, hence no leakage abort.

    Returns (emitted, amp, nexp, alpha, clamp_count).
    """
    n_steps = len(uniforms)
    alpha = complex(alpha0)
    beta = complex(beta)
    emitted = np.zeros(n_steps, dtype=np.uint8)
    amp = np.zeros(n_steps, dtype=complex) if record_traces else None
    nexp_tr = np.zeros(n_steps, dtype=float) if record_traces else None
    clamp_count = 0
    for k in range(n_steps):
        nexp = alpha.real * alpha.real + alpha.imag * alpha.imag
        p = kappa_dt * nexp
        if p > 1.0:
            clamp_count += 1
            p = 1.0
        if uniforms[k] < p:
            alpha = complex((alpha.real + beta.real) * decay,
                            (alpha.imag + beta.imag) * decay)
            emitted[k] = 1
        else:
            alpha = complex(alpha.real * decay, alpha.imag * decay)
        if record_traces:
            amp[k] = alpha
            nexp_tr[k] = alpha.real * alpha.real + alpha.imag * alpha.imag
    return emitted, amp, nexp_tr, alpha, clamp_count
