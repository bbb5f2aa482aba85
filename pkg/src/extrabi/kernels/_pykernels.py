"""Pure-numpy versions of the compiled kernels.

Vectorized over grid points; the recurrences run as Python loops over the
Fock index. Results agree with ``_ckernels`` to rounding.
"""
import numpy as np
from scipy.special import gammaln

BIG = 1e150
LOG_BIG = np.log(BIG)
PI_M14 = np.pi ** -0.25


def hermite_table(nmax, x):
    x = np.ascontiguousarray(x, dtype=float)
    out = np.empty((nmax + 1, x.size))
    logs = -0.5 * x * x
    prev = np.zeros_like(x)
    cur = np.full_like(x, PI_M14)
    out[0] = cur * np.exp(logs)
    for n in range(nmax):
        nxt = np.sqrt(2.0 / (n + 1.0)) * x * cur - np.sqrt(n / (n + 1.0)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > BIG
        if big.any():
            prev[big] /= BIG
            cur[big] /= BIG
            logs[big] += LOG_BIG
        out[n + 1] = cur * np.exp(logs)
    return out


def hermite_series(coeffs, x):
    coeffs = np.asarray(coeffs, dtype=complex)
    x = np.ascontiguousarray(x, dtype=float)
    out = np.zeros((x.size, coeffs.shape[1]), dtype=complex)
    logs = -0.5 * x * x
    prev = np.zeros_like(x)
    cur = np.full_like(x, PI_M14)
    for n in range(coeffs.shape[0]):
        if n > 0:
            nxt = np.sqrt(2.0 / n) * x * cur - np.sqrt((n - 1.0) / n) * prev
            prev, cur = cur, nxt
            big = np.abs(cur) > BIG
            if big.any():
                prev[big] /= BIG
                cur[big] /= BIG
                logs[big] += LOG_BIG
        out += np.outer(cur * np.exp(logs), coeffs[n])
    return out


def wigner_fock(rho, x, p, cut=1e-12):
    rho = np.asarray(rho, dtype=complex)
    nb = rho.shape[0]
    xx, pp = np.meshgrid(np.asarray(x, float), np.asarray(p, float), indexing="ij")
    z = 2.0 * (xx**2 + pp**2)
    theta = np.arctan2(pp, xx)
    total = np.zeros_like(z)
    with np.errstate(divide="ignore"):
        logz = np.log(z)
    for d in range(nb):
        diag = np.diagonal(rho, offset=-d)
        if not np.any(np.abs(diag) >= cut):
            continue
        if d == 0:
            logs = -0.5 * z
        else:
            logs = np.where(z > 0, 0.5 * d * logz - 0.5 * z - 0.5 * gammaln(d + 1.0), -np.inf)
        prev = np.zeros_like(z)
        cur = np.ones_like(z)
        acc = np.zeros(z.shape, dtype=complex)
        sign = 1.0
        for n in range(nb - d):
            if n > 0:
                nxt = ((2.0 * n - 1.0 + d - z) * cur
                       - np.sqrt((n - 1.0) * (n - 1.0 + d)) * prev) / np.sqrt(n * (n + d + 0.0))
                prev, cur = cur, nxt
                big = np.abs(cur) > BIG
                if big.any():
                    prev[big] /= BIG
                    cur[big] /= BIG
                    logs[big] += LOG_BIG
            acc += diag[n] * (sign * cur * np.exp(logs))
            sign = -sign
        if d == 0:
            total += acc.real
        else:
            total += 2.0 * (acc.real * np.cos(d * theta) + acc.imag * np.sin(d * theta))
    return total / np.pi


def survival_amplitude(prob, energies, times, chunk=2048):
    prob = np.asarray(prob, dtype=float)
    energies = np.asarray(energies, dtype=float)
    times = np.asarray(times, dtype=float)
    out = np.empty(times.size, dtype=complex)
    for start in range(0, times.size, chunk):
        t = times[start:start + chunk]
        out[start:start + chunk] = np.exp(-1j * np.outer(t, energies)) @ prob
    return out
