# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled trajectory stepping kernels (see _kernels_py for the contract)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

STATUS_OK = 0
STATUS_LEAK = 1
STATUS_DARK = 2

DEF C_STATUS_OK = 0
DEF C_STATUS_LEAK = 1
DEF C_STATUS_DARK = 2
DEF DARK_EPS_SQ = 1e-28


def fock_trajectory(const cnp.complex128_t[::1] psi0,
                    const cnp.complex128_t[:, ::1] k0,
                    const cnp.complex128_t[:, ::1] jump_mat,
                    double kappa_dt,
                    const double[::1] uniforms,
                    double leak_budget,
                    bint record_traces):
    cdef Py_ssize_t n_steps = uniforms.shape[0]
    cdef Py_ssize_t dim = psi0.shape[0]
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] emitted = np.zeros(n_steps, dtype=np.uint8)
    amp_arr = np.zeros(n_steps, dtype=np.complex128) if record_traces else None
    nexp_arr = np.zeros(n_steps, dtype=np.float64) if record_traces else None
    cdef cnp.complex128_t[::1] amp_v = amp_arr if record_traces else None
    cdef double[::1] nexp_v = nexp_arr if record_traces else None
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] psi_arr = np.array(psi0, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] tmp_arr = np.empty(dim, dtype=np.complex128)
    cdef cnp.complex128_t[::1] psi = psi_arr
    cdef cnp.complex128_t[::1] tmp = tmp_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] roots_arr = np.sqrt(np.arange(dim, dtype=np.float64))
    cdef double[::1] roots = roots_arr
    cdef cnp.uint8_t[::1] emitted_v = emitted
    cdef Py_ssize_t k, i, j
    cdef double nexp, p, nrm, leak
    cdef double complex acc, a
    cdef int status = C_STATUS_OK
    cdef Py_ssize_t abort_step = -1
    cdef long clamp_count = 0
    cdef bint jump

    with nogil:
        for k in range(n_steps):
            nexp = 0.0
            for i in range(dim):
                a = psi[i]
                nexp += roots[i] * roots[i] * (a.real * a.real + a.imag * a.imag)
            p = kappa_dt * nexp
            if p > 1.0:
                clamp_count += 1
                p = 1.0
            jump = uniforms[k] < p
            if jump and nexp < DARK_EPS_SQ:
                status = C_STATUS_DARK
                abort_step = k
                break
            for i in range(dim):
                acc = 0.0
                if jump:
                    for j in range(dim):
                        acc = acc + jump_mat[i, j] * psi[j]
                else:
                    for j in range(dim):
                        acc = acc + k0[i, j] * psi[j]
                tmp[i] = acc
            if jump:
                emitted_v[k] = 1
            nrm = 0.0
            for i in range(dim):
                a = tmp[i]
                nrm += a.real * a.real + a.imag * a.imag
            nrm = sqrt(nrm)
            for i in range(dim):
                psi[i] = tmp[i] / nrm
            if record_traces:
                acc = 0.0
                nexp = 0.0
                for i in range(dim - 1):
                    acc = acc + psi[i].conjugate() * roots[i + 1] * psi[i + 1]
                for i in range(dim):
                    a = psi[i]
                    nexp += roots[i] * roots[i] * (a.real * a.real + a.imag * a.imag)
                amp_v[k] = acc
                nexp_v[k] = nexp
            a = psi[dim - 1]
            leak = a.real * a.real + a.imag * a.imag
            if leak > leak_budget:
                status = C_STATUS_LEAK
                abort_step = k
                break

    return emitted, amp_arr, nexp_arr, psi_arr, status, abort_step, clamp_count


def coherent_trajectory(double complex alpha0,
                        double complex beta,
                        double kappa_dt,
                        double decay,
                        const double[::1] uniforms,
                        bint record_traces):
    cdef Py_ssize_t n_steps = uniforms.shape[0]
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] emitted = np.zeros(n_steps, dtype=np.uint8)
    amp_arr = np.zeros(n_steps, dtype=np.complex128) if record_traces else None
    nexp_arr = np.zeros(n_steps, dtype=np.float64) if record_traces else None
    cdef cnp.complex128_t[::1] amp_v = amp_arr if record_traces else None
    cdef double[::1] nexp_v = nexp_arr if record_traces else None
    cdef cnp.uint8_t[::1] emitted_v = emitted
    cdef double complex alpha = alpha0
    cdef double re, im, nexp, p
    cdef Py_ssize_t k
    cdef long clamp_count = 0

    with nogil:
        for k in range(n_steps):
            re = alpha.real
            im = alpha.imag
            nexp = re * re + im * im
            p = kappa_dt * nexp
            if p > 1.0:
                clamp_count += 1
                p = 1.0
            if uniforms[k] < p:
                alpha = (alpha + beta) * decay
                emitted_v[k] = 1
            else:
                alpha = alpha * decay
            if record_traces:
                amp_v[k] = alpha
                re = alpha.real
                im = alpha.imag
                nexp_v[k] = re * re + im * im

    return emitted, amp_arr, nexp_arr, alpha, clamp_count
