# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Same signatures and results as ``_pykernels``."""
from libc.math cimport exp, log, sqrt, fabs, lgamma, cos, sin, atan2

import numpy as np

cdef double BIG = 1e150
cdef double LOG_BIG = 345.38776394910684  # log(1e150)
cdef double PI_M14 = 0.7511255444649425   # pi ** -0.25
cdef double INV_PI = 0.3183098861837907
cdef int RESYNC = 64


cdef void _hermite_coeffs(int nmax, double[::1] a, double[::1] b):
    cdef int n
    for n in range(nmax):
        a[n] = sqrt(2.0 / (n + 1.0))
        b[n] = sqrt(n / (n + 1.0))


def hermite_table(int nmax, double[::1] x):
    """Rows ``psi_0 .. psi_nmax`` of the normalized Hermite functions at ``x``."""
    cdef Py_ssize_t nx = x.shape[0], i
    cdef int n
    a_ = np.empty(max(nmax, 1))
    b_ = np.empty(max(nmax, 1))
    cdef double[::1] a = a_, b = b_
    _hermite_coeffs(nmax, a, b)
    tr = np.empty((nx, nmax + 1))
    cdef double[:, ::1] o = tr
    cdef double xi, prev, cur, nxt, logs, scale
    for i in range(nx):
        xi = x[i]
        # value = mantissa * exp(logs); keeps large |x| from underflowing early
        logs = -0.5 * xi * xi
        scale = exp(logs)
        prev = 0.0
        cur = PI_M14
        o[i, 0] = cur * scale
        for n in range(nmax):
            nxt = a[n] * xi * cur - b[n] * prev
            prev = cur
            cur = nxt
            if fabs(cur) > BIG:
                prev /= BIG
                cur /= BIG
                logs += LOG_BIG
                scale = exp(logs)
            o[i, n + 1] = cur * scale
    return np.ascontiguousarray(tr.T)


def hermite_series(double complex[:, ::1] coeffs, double[::1] x):
    """Evaluate ``f_r(x) = sum_n coeffs[n, r] psi_n(x)`` for every column ``r``."""
    cdef Py_ssize_t nb = coeffs.shape[0], nr = coeffs.shape[1], nx = x.shape[0]
    cdef Py_ssize_t i, n, r
    a_ = np.empty(max(nb, 1))
    b_ = np.empty(max(nb, 1))
    cdef double[::1] a = a_, b = b_
    _hermite_coeffs(<int>nb, a, b)
    # split real and imaginary parts for contiguous real arithmetic
    cre_ = np.ascontiguousarray(np.asarray(coeffs).real)
    cim_ = np.ascontiguousarray(np.asarray(coeffs).imag)
    cdef double[:, ::1] cre = cre_, cim = cim_
    ore_ = np.zeros((nx, nr))
    oim_ = np.zeros((nx, nr))
    cdef double[:, ::1] ore = ore_, oim = oim_
    cdef double xi, prev, cur, nxt, logs, scale, w
    for i in range(nx):
        xi = x[i]
        logs = -0.5 * xi * xi
        scale = exp(logs)
        prev = 0.0
        cur = PI_M14
        for n in range(nb):
            if n > 0:
                nxt = a[n - 1] * xi * cur - b[n - 1] * prev
                prev = cur
                cur = nxt
                if fabs(cur) > BIG:
                    prev /= BIG
                    cur /= BIG
                    logs += LOG_BIG
                    scale = exp(logs)
            w = cur * scale
            if w != 0.0:
                for r in range(nr):
                    ore[i, r] += cre[n, r] * w
                    oim[i, r] += cim[n, r] * w
    return ore_ + 1j * oim_


def wigner_fock(double complex[:, ::1] rho, double[::1] x, double[::1] p, double cut=1e-12):
    """Wigner function of a Fock-basis density matrix on the grid ``x`` by ``p``.

    Standard quadratures (hbar = 1). Uses normalized associated Laguerre
    functions along each diagonal ``d`` of ``rho``; diagonals whose entries are
    all below ``cut`` in modulus are skipped.
    """
    cdef Py_ssize_t nb = rho.shape[0], nx = x.shape[0], npp = p.shape[0]
    cdef Py_ssize_t i, k, d, n, m
    active = [d for d in range(nb) if np.any(np.abs(np.diagonal(rho, offset=-d)) >= cut)]
    cdef Py_ssize_t na = len(active)
    act_ = np.asarray(active, dtype=np.intp)
    cdef Py_ssize_t[::1] act = act_
    # diagonals, signed (-1)^n, and recurrence coefficients, packed per d
    dre_ = np.zeros((nb, nb))
    dim_ = np.zeros((nb, nb))
    c1_ = np.zeros((nb, nb))
    c2_ = np.zeros((nb, nb))
    c3_ = np.zeros((nb, nb))
    lg_ = np.zeros(nb)
    cdef double[:, ::1] dre = dre_, dim = dim_, c1 = c1_, c2 = c2_, c3 = c3_
    cdef double[::1] lg = lg_
    cdef double sgn
    for d in range(nb):
        lg[d] = 0.5 * lgamma(d + 1.0)
        sgn = 1.0
        for n in range(nb - d):
            dre[d, n] = sgn * rho[n + d, n].real
            dim[d, n] = sgn * rho[n + d, n].imag
            sgn = -sgn
            if n > 0:
                c3[d, n] = 1.0 / sqrt(n * (n + d + 0.0))
                c1[d, n] = 2.0 * n - 1.0 + d
                c2[d, n] = sqrt((n - 1.0) * (n - 1.0 + d))
    out = np.zeros((nx, npp))
    cdef double[:, ::1] o = out
    cdef double z, lz, theta, prev, cur, nxt, logs, scale, total, are, aim, w
    for i in range(nx):
        for k in range(npp):
            z = 2.0 * (x[i] * x[i] + p[k] * p[k])
            lz = log(z) if z > 0.0 else 0.0
            theta = atan2(p[k], x[i])
            total = 0.0
            for m in range(na):
                d = act[m]
                if z == 0.0:
                    if d > 0:
                        continue
                    logs = 0.0
                else:
                    logs = 0.5 * d * lz - 0.5 * z - lg[d]
                scale = exp(logs)
                prev = 0.0
                cur = 1.0
                are = dre[d, 0]
                aim = dim[d, 0]
                for n in range(1, nb - d):
                    nxt = ((c1[d, n] - z) * cur - c2[d, n] * prev) * c3[d, n]
                    prev = cur
                    cur = nxt
                    if fabs(cur) > BIG:
                        prev /= BIG
                        cur /= BIG
                        are /= BIG
                        aim /= BIG
                        logs += LOG_BIG
                        scale = exp(logs)
                    are += dre[d, n] * cur
                    aim += dim[d, n] * cur
                are *= scale
                aim *= scale
                if d == 0:
                    total += are
                else:
                    total += 2.0 * (are * cos(d * theta) + aim * sin(d * theta))
            o[i, k] = total * INV_PI
    return out


def survival_amplitude(double[::1] prob, double[::1] energies, double[::1] times):
    """``sum_i prob_i exp(-i E_i t)`` for each ``t``.

    On uniform time grids the phases advance by a fixed rotation per step and
    are recomputed exactly every few steps, which avoids most sin/cos calls.
    """
    cdef Py_ssize_t nk = prob.shape[0], nt = times.shape[0], i, t
    out = np.empty(nt, dtype=np.complex128)
    cdef double complex[::1] o = out
    cdef double re, im, phase, tt, dt, zr, zi, tmp
    zre_ = np.empty(nk)
    zim_ = np.empty(nk)
    rre_ = np.empty(nk)
    rim_ = np.empty(nk)
    cdef double[::1] zre = zre_, zim = zim_, rre = rre_, rim = rim_
    cdef bint uniform = nt > 2
    if uniform:
        dt = (times[nt - 1] - times[0]) / (nt - 1)
        for t in range(nt):
            if fabs(times[t] - (times[0] + t * dt)) > 1e-12 * (fabs(times[t]) + fabs(dt)):
                uniform = False
                break
    if uniform:
        for i in range(nk):
            rre[i] = cos(energies[i] * dt)
            rim[i] = -sin(energies[i] * dt)
    for t in range(nt):
        tt = times[t]
        re = 0.0
        im = 0.0
        if not uniform or t % RESYNC == 0:
            for i in range(nk):
                phase = energies[i] * tt
                zr = prob[i] * cos(phase)
                zi = -prob[i] * sin(phase)
                zre[i] = zr
                zim[i] = zi
                re += zr
                im += zi
        else:
            for i in range(nk):
                zr = zre[i]
                zi = zim[i]
                tmp = zr * rre[i] - zi * rim[i]
                zi = zr * rim[i] + zi * rre[i]
                zr = tmp
                zre[i] = zr
                zim[i] = zi
                re += zr
                im += zi
        o[t] = re + 1j * im
    return out
