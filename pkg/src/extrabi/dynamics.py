"""Quench from ``|m=-j> x |n=0>``: evolution, survival, averages, reduced states."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .model import (
    HilbertBasis,
    ModelParams,
    OperatorMatrix,
    boson_operator,
    build_basis,
    build_hamiltonian,
    quasispin_operator,
    validate_params,
)
from .spectrum import (
    EigenDecomposition,
    StrengthFunction,
    degenerate_clusters,
    solve_quench_spectrum,
    strength_function,
)

OBSERVABLES = ("Jx", "Jy", "Jz", "n", "q", "p")


@dataclass(frozen=True, eq=False)
class QuenchState:
    """Complex amplitudes ``c_mn`` in basis order at time ``t``."""

    coefficients: np.ndarray
    t: float
    basis: HilbertBasis
    params: ModelParams | None = None

    def matrix(self) -> np.ndarray:
        """Amplitudes reshaped to ``(n_spin, n_fock)``."""
        return self.coefficients.reshape(self.basis.n_spin, self.basis.n_fock)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))


@dataclass(frozen=True, eq=False)
class ReducedDensity:
    """Reduced density operator; ``factor`` F gives ``rho = F F^+``."""

    subsystem: str  # qubit | field
    factor: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return self.factor @ self.factor.conj().T

    @property
    def trace(self) -> float:
        return float(np.sum(np.abs(self.factor) ** 2))

    def eigenvalues(self) -> np.ndarray:
        """Nonzero spectrum from the small Gram matrix, descending."""
        g = self.factor.conj().T @ self.factor
        return np.sort(np.linalg.eigvalsh(g))[::-1]

    def purity(self) -> float:
        g = self.factor.conj().T @ self.factor
        return float(np.real(np.sum(g * g.conj())))


@dataclass(eq=False)
class QuenchRecord:
    times: np.ndarray
    P: np.ndarray
    Pq: np.ndarray
    Pb: np.ndarray
    Jx: np.ndarray
    Jy: np.ndarray
    Jz: np.ndarray
    n: np.ndarray
    q: np.ndarray
    p: np.ndarray
    purity: np.ndarray
    averages: dict
    params: ModelParams
    meta: dict = field(default_factory=dict)

    COLUMNS = ("t", "P", "Pq", "Pb", "Jx", "Jy", "Jz", "n", "q", "p", "purity")

    def rows(self):
        cols = [self.times, self.P, self.Pq, self.Pb, self.Jx, self.Jy, self.Jz,
                self.n, self.q, self.p, self.purity]
        return zip(*cols)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for row in self.rows():
                w.writerow([repr(float(v)) for v in row])

    def sidecar(self) -> dict:
        return {
            "params": self.params.as_dict(),
            "averages": {k: float(v) for k, v in self.averages.items()},
            "meta": self.meta,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)


# -- states and evolution ----------------------------------------------------


def initial_state(basis: HilbertBasis, params: ModelParams | None = None) -> QuenchState:
    c = np.zeros(basis.dim, dtype=complex)
    c[basis.index_of(-basis.j, 0)] = 1.0
    return QuenchState(c, 0.0, basis, params)


def _phases(eigs: EigenDecomposition, a: np.ndarray, times: np.ndarray) -> np.ndarray:
    return a[:, None] * np.exp(-1j * np.outer(eigs.energies, times))


def evolve_support(eigs: EigenDecomposition, s0: QuenchState, times) -> np.ndarray:
    """Amplitudes on ``eigs.support`` for every time, shape ``(len(support), nt)``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    a = eigs.project(s0.coefficients)
    return eigs.vectors @ _phases(eigs, a, times)


def evolve(eigs: EigenDecomposition, s0: QuenchState, times) -> list[QuenchState]:
    """``c(t) = V exp(-i Lambda t) V^T c(0)`` at each requested time."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    sub = evolve_support(eigs, s0, times)
    out = []
    for k, t in enumerate(times):
        c = np.zeros(eigs.basis.dim, dtype=complex)
        c[eigs.support] = sub[:, k]
        out.append(QuenchState(c, float(t), eigs.basis, eigs.params))
    return out


def survival_probability(s0: QuenchState, st: QuenchState) -> float:
    return float(abs(np.vdot(s0.coefficients, st.coefficients)) ** 2)


def survival_trace(sf: StrengthFunction, times, threshold: float = 0.0) -> np.ndarray:
    """``P(t) = |sum_i p_i exp(-i E_i t)|^2`` from the strength function."""
    keep = sf.probabilities > threshold
    prob = np.ascontiguousarray(sf.probabilities[keep])
    en = np.ascontiguousarray(sf.energies[keep])
    amp = kernels.survival_amplitude(prob, en, np.ascontiguousarray(times, dtype=float))
    return np.abs(amp) ** 2


def _expect_columns(mat: sp.csr_array, imaginary: bool, C: np.ndarray) -> np.ndarray:
    """Expectation of the tagged operator for each column of ``C``."""
    if imaginary:
        x, y = C.real, C.imag
        return 2.0 * np.einsum("ik,ik->k", x, mat @ y)
    return np.real(np.einsum("ik,ik->k", C.conj(), mat @ C))


def expectation(st: QuenchState, obs: OperatorMatrix) -> float:
    c = st.coefficients[:, None]
    return float(_expect_columns(obs.matrix, obs.imaginary, c)[0])


def observables(basis: HilbertBasis, params: ModelParams) -> dict[str, OperatorMatrix]:
    """Standard observable set in the scaled quadrature convention."""
    return {
        "Jx": quasispin_operator(basis, "x"),
        "Jy": quasispin_operator(basis, "y"),
        "Jz": quasispin_operator(basis, "z"),
        "n": boson_operator(basis, "number"),
        "q": boson_operator(basis, "q", params.NR),
        "p": boson_operator(basis, "p", params.NR),
    }


# -- infinite-time averages --------------------------------------------------


def cluster_states(eigs: EigenDecomposition, sf: StrengthFunction, rtol: float = 1e-9):
    """Projections of the initial state onto degenerate eigenspaces.

    Returns ``(p_cluster, psi)`` with ``psi[:, c]`` on ``eigs.support``.
    """
    labels = degenerate_clusters(eigs.energies, rtol)
    nc = int(labels[-1]) + 1 if labels.size else 0
    pc = np.bincount(labels, weights=sf.probabilities, minlength=nc)
    keep = pc > 0
    # sum a_i v_i over each cluster
    W = eigs.vectors * np.real_if_close(sf.amplitudes)[None, :]
    starts = np.concatenate([[0], np.nonzero(np.diff(labels))[0] + 1])
    psi = np.add.reduceat(W, starts, axis=1) if W.shape[1] else W
    return pc[keep], psi[:, keep]


def infinite_time_averages(sf: StrengthFunction, eigs: EigenDecomposition,
                           obs: dict[str, OperatorMatrix] | None = None, rtol: float = 1e-9) -> dict:
    """Spectral averages: ``P_bar = sum_c p_c^2`` and ``A_bar = sum_c <psi_c|A|psi_c>``."""
    basis = eigs.basis
    obs = observables(basis, eigs.params) if obs is None else obs
    pc, psi = cluster_states(eigs, sf, rtol)
    out = {"P": float(np.sum(pc**2))}
    sup = eigs.support
    for name, op in obs.items():
        mat = op.matrix[sup][:, sup]
        out[name] = float(np.sum(_expect_columns(mat, op.imaginary, psi)))
    # subsystem survivals are expectations of projectors
    m0 = basis.m[sup] == -basis.j
    n0 = basis.n[sup] == 0
    out["Pq"] = float(np.sum(np.abs(psi[m0]) ** 2))
    out["Pb"] = float(np.sum(np.abs(psi[n0]) ** 2))
    return out


# -- reduced states ----------------------------------------------------------


def reduced_density(st: QuenchState, subsystem: str) -> ReducedDensity:
    C = st.matrix()
    if subsystem == "qubit":
        return ReducedDensity("qubit", C)
    if subsystem == "field":
        return ReducedDensity("field", C.T)
    raise ValueError("subsystem must be 'qubit' or 'field'")


def subsystem_survivals(st: QuenchState) -> tuple[float, float]:
    C = st.matrix()
    return float(np.sum(np.abs(C[0]) ** 2)), float(np.sum(np.abs(C[:, 0]) ** 2))


def bloch_and_purity(st: QuenchState) -> tuple[float, float, float, float]:
    """``(J_x, J_y, J_z, wp)`` with ``wp = |2 J|`` the normalized purity."""
    if st.basis.n_spin != 2:
        raise ValueError("Bloch parametrization requires N=1")
    C = st.matrix()
    rho = C @ C.conj().T  # rows m = -1/2, +1/2
    jz = 0.5 * float(np.real(rho[1, 1] - rho[0, 0]))
    jx = float(np.real(rho[1, 0]))
    jy = float(np.imag(rho[1, 0]))
    return jx, jy, jz, 2.0 * math.sqrt(jx * jx + jy * jy + jz * jz)


def _bloch_columns(C3: np.ndarray):
    """Bloch components for a stack of ``(2, n_fock, nt)`` amplitudes."""
    r00 = np.sum(np.abs(C3[0]) ** 2, axis=0)
    r11 = np.sum(np.abs(C3[1]) ** 2, axis=0)
    r10 = np.sum(C3[1] * C3[0].conj(), axis=0)
    jz = 0.5 * (r11 - r00)
    return r10.real, r10.imag, jz


# -- protocols ---------------------------------------------------------------


def two_step_quench(p_target: ModelParams, basis: HilbertBasis, ramp_time: float = 0.0,
                    tol: float = 1e-12) -> QuenchState:
    """Stage-2 initial state of the two-step protocol.

    Stage 1 holds ``delta = +1`` while ``lambda`` is switched on; the initial
    state is an eigenstate of every such Hamiltonian, so it only gains the
    phase ``exp(i omega R j t)``. Stage 2 switches ``delta`` to its target.
    """
    p_target = validate_params(p_target)
    if p_target.mu != 0:
        raise ValueError("two-step protocol needs a parity-conserving target (mu = 0)")
    if p_target.delta == 1:
        raise ValueError("target delta = +1 has no dynamics")
    s0 = initial_state(basis, p_target)
    H1 = build_hamiltonian(p_target.with_(delta=1.0), basis)
    E0 = -p_target.omega * p_target.R * p_target.j
    resid = np.max(np.abs(H1.matrix @ s0.coefficients - E0 * s0.coefficients))
    if resid > tol * max(1.0, abs(E0)):
        raise RuntimeError(f"stage-1 state is not frozen (residual {resid:.2e})")
    return QuenchState(s0.coefficients * np.exp(-1j * E0 * ramp_time), 0.0, basis, p_target)


def run_quench(p: ModelParams, times, n_max: int | None = None, eigs=None, sf=None,
               chunk: int = 256) -> QuenchRecord:
    """Full quench record on ``times`` plus spectral averages."""
    p = validate_params(p)
    if eigs is None:
        eigs, sf = solve_quench_spectrum(p, n_max=n_max)
    basis = eigs.basis
    s0 = initial_state(basis, p)
    if sf is None:
        sf = strength_function(eigs, s0)
    times = np.asarray(times, dtype=float)
    obs = observables(basis, p)
    sup = eigs.support
    mats = {k: (v.matrix[sup][:, sup], v.imaginary) for k, v in obs.items()}
    cols = {k: np.empty(times.size) for k in ("Pq", "Pb", "purity", *OBSERVABLES)}
    full_idx = sup
    for lo in range(0, times.size, chunk):
        ts = times[lo:lo + chunk]
        C = eigs.vectors @ _phases(eigs, sf.amplitudes, ts)
        for k, (mat, imag) in mats.items():
            cols[k][lo:lo + chunk] = _expect_columns(mat, imag, C)
        F = np.zeros((basis.dim, ts.size), dtype=complex)
        F[full_idx] = C
        F3 = F.reshape(basis.n_spin, basis.n_fock, ts.size)
        cols["Pq"][lo:lo + chunk] = np.sum(np.abs(F3[0]) ** 2, axis=0)
        cols["Pb"][lo:lo + chunk] = np.sum(np.abs(F3[:, 0]) ** 2, axis=0)
        if basis.n_spin == 2:
            jx, jy, jz = _bloch_columns(F3)
            cols["purity"][lo:lo + chunk] = 2.0 * np.sqrt(jx**2 + jy**2 + jz**2)
        else:
            cols["purity"][lo:lo + chunk] = np.nan
    P = survival_trace(sf, times)
    avg = infinite_time_averages(sf, eigs, obs)
    meta = {"n_max": basis.n_max, "residual": eigs.residual,
            "tail_bound": eigs.meta.get("tail_bound"), "dimension": int(len(sup))}
    return QuenchRecord(times, P, cols["Pq"], cols["Pb"], cols["Jx"], cols["Jy"], cols["Jz"],
                        cols["n"], cols["q"], cols["p"], cols["purity"], avg, p, meta)


def size_scaling_study(p: ModelParams, R_list, **kw) -> list[tuple[float, float, float]]:
    """``(R, P_bar, Pq_bar)`` for each size with the cutoff adapted per ``R``."""
    R_list = [float(r) for r in R_list]
    if any(b <= a for a, b in zip(R_list, R_list[1:])):
        raise ValueError("R list must be ascending")
    out = []
    for R in R_list:
        q = p.with_(R=R, n_max=None)
        eigs, sf = solve_quench_spectrum(q, **kw)
        avg = infinite_time_averages(sf, eigs, obs={})
        out.append((R, avg["P"], avg["Pq"]))
    return out


def snapshot_times(times: np.ndarray, P: np.ndarray) -> tuple[float, float, float]:
    """``(early, first dip, first revival)`` located from a survival trace.

    A dip episode starts when ``P`` first falls within 10% of its global
    depth and ends when ``P`` recovers above the midpoint between that level
    and 1; the dip is the minimum of the episode. The revival is the maximum
    before the next dip episode. The early instant is a quarter of the dip time.
    """
    times = np.asarray(times)
    P = np.asarray(P)
    pmin = float(P.min())
    low = pmin + 0.1 * (1.0 - pmin)
    mid = 0.5 * (1.0 + low)
    i0 = int(np.argmax(P <= low))
    up = np.nonzero(P[i0:] >= mid)[0]
    k = i0 + int(up[0]) if up.size else P.size
    i_dip = i0 + int(np.argmin(P[i0:k]))
    if k < P.size:
        again = np.nonzero(P[k:] <= low)[0]
        k2 = k + int(again[0]) if again.size else P.size
        i_rev = k + int(np.argmax(P[k:k2]))
    else:
        i_rev = P.size - 1
    return float(0.25 * times[i_dip]), float(times[i_dip]), float(times[i_rev])
