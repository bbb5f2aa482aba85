"""Wigner functions of the reduced field state.

Internally everything is evaluated in standard oscillator quadratures
``x = (b + b^+)/sqrt(2)``, ``p = i(b^+ - b)/sqrt(2)`` with hbar = 1, where the
overlap rule ``Tr(rho1 rho2) = 2 pi int W1 W2`` holds exactly. The ``scaled``
convention rescales to ``q = x/sqrt(NR)``, ``p -> p/sqrt(NR)`` with
``W_scaled = NR * W_standard`` so that both stay normalized.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dynamics import ReducedDensity, evolve, initial_state, reduced_density, snapshot_times, survival_trace
from .model import ModelParams
from .spectrum import solve_quench_spectrum

VACUUM_WIDTH = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class WignerGrid:
    q_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray  # shape (len(q_axis), len(p_axis))
    convention: str = "standard"
    NR: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def cell(self) -> float:
        return float((self.q_axis[1] - self.q_axis[0]) * (self.p_axis[1] - self.p_axis[0]))

    def integral(self) -> float:
        return float(self.values.sum() * self.cell)

    def overlap_prefactor(self) -> float:
        return 2 * math.pi / (self.NR if self.convention == "scaled" else 1.0)

    def purity(self) -> float:
        return self.overlap_prefactor() * float(np.sum(self.values**2) * self.cell)

    def at(self, q: float, p: float) -> float:
        """Value at the grid node nearest to ``(q, p)``."""
        i = int(np.argmin(np.abs(self.q_axis - q)))
        k = int(np.argmin(np.abs(self.p_axis - p)))
        return float(self.values[i, k])

    def to_files(self, csv_path, json_path, extra: dict | None = None) -> None:
        np.savetxt(csv_path, self.values, delimiter=",", fmt="%.17g")
        header = {
            "q_axis": [float(self.q_axis[0]), float(self.q_axis[-1]), int(self.q_axis.size)],
            "p_axis": [float(self.p_axis[0]), float(self.p_axis[-1]), int(self.p_axis.size)],
            "convention": self.convention,
            "NR": self.NR,
            "rows": "q",
            "columns": "p",
            **self.meta,
            **(extra or {}),
        }
        with open(json_path, "w") as fh:
            json.dump(header, fh, indent=2, sort_keys=True)


def oscillator_wavefunction(n: int, x, scale: float = 1.0) -> np.ndarray:
    """Normalized oscillator eigenfunction for Planck constant ``scale``.

    ``scale**-0.25 * psi_n(x / sqrt(scale))`` via the stable three-term
    recurrence; no factorials appear, so large ``n`` is fine.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    row = kernels.hermite_table(int(n), np.ascontiguousarray(x / math.sqrt(scale)))[n]
    return row * scale**-0.25


def _as_factor(rho_b) -> np.ndarray:
    """Low-rank factor F (n_fock x r) with ``rho_b = F F^+``."""
    if isinstance(rho_b, ReducedDensity):
        if rho_b.subsystem != "field":
            raise ValueError("Wigner function needs the field reduced density")
        return np.asarray(rho_b.factor, dtype=complex)
    rho = np.asarray(rho_b)
    if rho.ndim == 1:
        return rho.astype(complex)[:, None]
    w, v = np.linalg.eigh(rho)
    keep = w > 1e-14 * max(w.max(), 1e-300)
    return (v[:, keep] * np.sqrt(w[keep])).astype(complex)


def _effective_fock(F: np.ndarray, tol: float = 1e-16) -> int:
    w = np.sum(np.abs(F) ** 2, axis=1)
    tail = np.cumsum(w[::-1])[::-1]
    above = np.nonzero(tail > tol * tail[0])[0]
    return int(above[-1]) + 1 if above.size else 1


def _moments(F: np.ndarray) -> tuple[float, float, float, float]:
    """Mean and standard deviation of x and p in standard quadratures."""
    n = F.shape[0]
    sq = np.sqrt(np.arange(1, n))
    bF = np.zeros_like(F)
    bF[:-1] = sq[:, None] * F[1:]
    b2F = np.zeros_like(F)
    b2F[:-1] = sq[:, None] * bF[1:]
    tr = np.sum(np.abs(F) ** 2)
    eb = np.sum(F.conj() * bF) / tr
    eb2 = np.sum(F.conj() * b2F) / tr
    en = np.sum(np.abs(bF) ** 2) / tr
    mx = math.sqrt(2) * eb.real
    mp = math.sqrt(2) * eb.imag
    vx = 0.5 * (2 * eb2.real + 2 * en.real + 1) - mx * mx
    vp = 0.5 * (-2 * eb2.real + 2 * en.real + 1) - mp * mp
    return mx, math.sqrt(max(vx, 0.0)), mp, math.sqrt(max(vp, 0.0))


def _bandwidth(n_eff: int) -> float:
    return math.sqrt(2 * n_eff + 1) + 3.0


def default_axes(F: np.ndarray, n_points: int = 201, widths: float = 6.0,
                 tail: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Square-cell axes in standard units.

    The grid covers the second-moment box (mean +- 2 std) padded by ``widths``
    vacuum widths, and also the disk that holds all Fock components above
    relative weight ``tail``. The point count grows above ``n_points`` if
    needed to sample the state's finest phase-space structure.
    """
    mx, sx, mp, sp_ = _moments(F)
    pad = widths * VACUUM_WIDTH
    disk = math.sqrt(2 * _effective_fock(F, tail) + 1) + 4.0
    lo = min(mx - 2 * sx - pad, mp - 2 * sp_ - pad, -disk)
    hi = max(mx + 2 * sx + pad, mp + 2 * sp_ + pad, disk)
    step_max = 0.8 * math.pi / (2 * _bandwidth(_effective_fock(F)))
    npts = max(n_points, int(math.ceil((hi - lo) / step_max)) + 1)
    npts += (npts + 1) % 2  # odd so the centre is a node
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    axis = np.linspace(mid - half, mid + half, npts)
    return axis, axis.copy()


def _uniform(axis: np.ndarray) -> bool:
    d = np.diff(axis)
    return axis.size > 1 and np.allclose(d, d[0], rtol=1e-9, atol=0)


def _wigner_coordinate(F: np.ndarray, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Standard-unit Wigner function by the coordinate-space integral.

    ``W(x, p) = (1/pi) int dy <x+y|rho|x-y> exp(-2ipy)``, with the kernel
    ``sum_r f_r(x+y) f_r(x-y)^*`` on a lattice fine enough that the
    trapezoidal sum in ``y`` is free of aliasing.
    """
    n_eff = _effective_fock(F)
    F = np.ascontiguousarray(F[:n_eff])
    k = _bandwidth(n_eff)
    dx = x[1] - x[0] if x.size > 1 else 0.5 / k
    h_max = 0.8 * math.pi / (2 * k + 2 * float(np.max(np.abs(p))))
    s = max(1, int(math.ceil(dx / h_max)))
    h = dx / s
    reach = math.sqrt(2 * n_eff + 1) + 10.0
    L = int(math.ceil(reach / h))
    lattice = x[0] + h * np.arange(-L, (x.size - 1) * s + L + 1)
    f = kernels.hermite_series(F, np.ascontiguousarray(lattice))  # (nlat, r)
    centre = L + s * np.arange(x.size)
    ls = np.arange(L + 1)
    G = np.zeros((x.size, L + 1), dtype=complex)
    for r in range(F.shape[1]):
        fr = f[:, r]
        G += fr[centre[:, None] + ls[None, :]] * fr[centre[:, None] - ls[None, :]].conj()
    wts = np.full(L + 1, 2.0)
    wts[0] = 1.0
    E = wts[:, None] * np.exp(-2j * h * np.outer(ls, p))
    return (h / math.pi) * np.real(G @ E)


def wigner(rho_b, q_axis=None, p_axis=None, convention: str = "standard", NR: float = 1.0,
           method: str = "coordinate", n_points: int = 201, tail_tol: float = 1e-6,
           meta: dict | None = None) -> WignerGrid:
    """Wigner function of a field state on a uniform grid.

    ``rho_b`` is a field :class:`ReducedDensity`, a Fock density matrix, or a
    Fock state vector. Axes are in the units of ``convention``; defaults cover
    the state's second-moment box. ``method='fock'`` uses the Laguerre
    expansion of each density-matrix diagonal instead.
    """
    if convention not in ("standard", "scaled"):
        raise ValueError("convention must be 'standard' or 'scaled'")
    F = _as_factor(rho_b)
    tr = float(np.sum(np.abs(F) ** 2))
    if abs(tr - 1.0) > 1e-8:
        raise ValueError(f"field state must have unit trace (got {tr:.12g})")
    n_fock = F.shape[0]
    top = np.sum(np.abs(F[int(0.9 * n_fock):]) ** 2) if n_fock > 10 else 0.0
    if top > tail_tol:
        warnings.warn(f"Fock tail weight {top:.2e} near the cutoff; Wigner function may alias")
    unit = math.sqrt(NR) if convention == "scaled" else 1.0
    if q_axis is None or p_axis is None:
        dq, dp = default_axes(F, n_points)
        q_std = dq if q_axis is None else np.asarray(q_axis, float) * unit
        p_std = dp if p_axis is None else np.asarray(p_axis, float) * unit
    else:
        q_std = np.asarray(q_axis, float) * unit
        p_std = np.asarray(p_axis, float) * unit
    if method == "coordinate":
        if q_std.size > 1 and not _uniform(q_std):
            raise ValueError("coordinate route needs a uniform q axis")
        W = _wigner_coordinate(F, q_std, p_std)
    elif method == "fock":
        rho = F @ F.conj().T
        W = kernels.wigner_fock(np.ascontiguousarray(rho), np.ascontiguousarray(q_std),
                                np.ascontiguousarray(p_std))
    else:
        raise ValueError("method must be 'coordinate' or 'fock'")
    if convention == "scaled":
        return WignerGrid(q_std / unit, p_std / unit, NR * W, "scaled", float(NR), dict(meta or {}))
    return WignerGrid(q_std, p_std, W, "standard", 1.0, dict(meta or {}))


def wigner_overlap(W1: WignerGrid, W2: WignerGrid) -> float:
    """``2 pi int W1 W2 dq dp`` (divided by NR in the scaled convention)."""
    same = (
        W1.convention == W2.convention
        and W1.NR == W2.NR
        and np.array_equal(W1.q_axis, W2.q_axis)
        and np.array_equal(W1.p_axis, W2.p_axis)
    )
    if not same:
        raise ValueError("grid mismatch: overlap needs identical axes and convention")
    return W1.overlap_prefactor() * float(np.sum(W1.values * W2.values) * W1.cell)


def vacuum_state(n_fock: int) -> np.ndarray:
    v = np.zeros(n_fock, dtype=complex)
    v[0] = 1.0
    return v


def wigner_snapshots(p: ModelParams, times=None, convention: str = "standard", n_points: int = 201,
                     scan=None, eigs=None, sf=None) -> list[WignerGrid]:
    """Field Wigner functions of the quench at ``times`` on one shared grid.

    Without ``times`` the instants are located automatically from ``P(t)`` on
    ``scan`` (default 0..50/omega): early stage, first deep dip, first revival.
    """
    if eigs is None:
        eigs, sf = solve_quench_spectrum(p)
    basis = eigs.basis
    if times is None:
        scan = np.linspace(0, 50 / p.omega, 2001) if scan is None else np.asarray(scan)
        times = snapshot_times(scan, survival_trace(sf, scan))
    states = evolve(eigs, initial_state(basis, p), times)
    factors = [reduced_density(st, "field").factor for st in states]
    q_std = p_std = None
    for Fk in factors:
        qa, pa = default_axes(Fk, n_points)
        q_std = qa if q_std is None else _union_axis(q_std, qa)
        p_std = pa if p_std is None else _union_axis(p_std, pa)
    unit = math.sqrt(p.NR) if convention == "scaled" else 1.0
    out = []
    for st, Fk in zip(states, factors):
        out.append(wigner(ReducedDensity("field", Fk), q_std / unit, p_std / unit, convention, p.NR,
                          meta={"t": st.t, "params": p.as_dict()}))
    return out


def _union_axis(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    lo, hi = min(a[0], b[0]), max(a[-1], b[-1])
    step = min(a[1] - a[0], b[1] - b[0])
    n = int(math.ceil((hi - lo) / step)) + 1
    return np.linspace(lo, hi, n + (n + 1) % 2)
