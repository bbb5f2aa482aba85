"""Classical (R -> infinity) limit of the extended Rabi model.

For a fixed quasispin projection ``m'`` along the local field direction the
field mode is a single classical degree of freedom with

    h(q, p) = (q^2 + p^2)/2 + c q + m' sqrt(a q^2 + b p^2 + (e0 + d q)^2)

where ``a = 8 lam^2/w^2``, ``b = a delta^2``, ``c = sqrt(2) N mu gamma / w``,
``d = sqrt(8) mu / w`` and ``e0 = 1/N``. Energies are scaled, ``eps = E/(N R w)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .model import ModelParams, validate_params

VACUUM_TOL = 1e-9


@dataclass(frozen=True)
class ClassicalPoint:
    q: float
    p: float


@dataclass(frozen=True)
class StationaryPoint:
    point: ClassicalPoint
    energy: float
    hessian: np.ndarray
    index_r: int
    degenerate: bool
    kind: str  # minimum | saddle | maximum | degenerate
    singularity: str  # none | upward_step | log_divergence | downward_step

    @property
    def is_vacuum(self) -> bool:
        return abs(self.point.q) < VACUUM_TOL and abs(self.point.p) < VACUUM_TOL


@dataclass(frozen=True)
class VacuumPhase:
    label: str  # N | S0 | S1 | S2
    lambda_c: float
    lambda_0: float
    lambda_c_prime: float | None
    det_hessian: float


@dataclass(frozen=True)
class _Coeffs:
    a: float
    b: float
    c: float
    d: float
    e0: float
    m: float


def _coeffs(p: ModelParams, m_prime: float) -> _Coeffs:
    w = p.omega
    a = 8.0 * p.lam**2 / w**2
    return _Coeffs(
        a=a,
        b=a * p.delta**2,
        c=math.sqrt(2.0) * p.N * p.mu * p.gamma / w,
        d=math.sqrt(8.0) * p.mu / w,
        e0=1.0 / p.N,
        m=float(m_prime),
    )


def _default_m(p: ModelParams, m_prime):
    m = -p.j if m_prime is None else float(m_prime)
    if abs(m) > p.j + 1e-12 or abs((m + p.j) - round(m + p.j)) > 1e-12:
        raise ValueError(f"m'={m_prime} is not a projection of j={p.j}")
    return m


def _qp(x):
    if isinstance(x, ClassicalPoint):
        return x.q, x.p
    q, pp = x
    return q, pp


def classical_hamiltonian(p: ModelParams, m_prime, x) -> float | np.ndarray:
    """Scaled classical energy ``h_{m'}(q, p)``; ``x`` is a point or ``(q, p)`` arrays."""
    k = _coeffs(p, _default_m(p, m_prime))
    q, pp = _qp(x)
    q = np.asarray(q, dtype=float)
    pp = np.asarray(pp, dtype=float)
    S = np.sqrt(k.a * q**2 + k.b * pp**2 + (k.e0 + k.d * q) ** 2)
    h = 0.5 * (q**2 + pp**2) + k.c * q + k.m * S
    return float(h) if h.ndim == 0 else h


def relative_energy(p: ModelParams, m_prime, x):
    """``h(q, p) - h(0, 0)`` written without the cancellation of the square roots."""
    k = _coeffs(p, _default_m(p, m_prime))
    q, pp = _qp(x)
    q = np.asarray(q, dtype=float)
    pp = np.asarray(pp, dtype=float)
    S = np.sqrt(k.a * q**2 + k.b * pp**2 + (k.e0 + k.d * q) ** 2)
    dS2 = k.a * q**2 + k.b * pp**2 + 2 * k.e0 * k.d * q + (k.d * q) ** 2
    out = 0.5 * (q**2 + pp**2) + k.c * q + k.m * dS2 / (S + k.e0)
    return float(out) if out.ndim == 0 else out


def gradient(p: ModelParams, m_prime, x) -> np.ndarray:
    k = _coeffs(p, _default_m(p, m_prime))
    q, pp = (np.asarray(v, dtype=float) for v in _qp(x))
    S = np.sqrt(k.a * q**2 + k.b * pp**2 + (k.e0 + k.d * q) ** 2)
    u = k.a * q + k.d * (k.e0 + k.d * q)
    return np.array([q + k.c + k.m * u / S, pp + k.m * k.b * pp / S])


def hessian_at(p: ModelParams, m_prime, x) -> np.ndarray:
    """Analytic second derivatives ``[[h_qq, h_qp], [h_pq, h_pp]]``."""
    k = _coeffs(p, _default_m(p, m_prime))
    q, pp = (np.asarray(v, dtype=float) for v in _qp(x))
    S = np.sqrt(k.a * q**2 + k.b * pp**2 + (k.e0 + k.d * q) ** 2)
    u = k.a * q + k.d * (k.e0 + k.d * q)
    v = k.b * pp
    hqq = 1.0 + k.m * ((k.a + k.d**2) / S - u**2 / S**3)
    hpp = 1.0 + k.m * (k.b / S - v**2 / S**3)
    hqp = -k.m * u * v / S**3
    return np.array([[hqq, hqp], [hqp, hpp]])


def critical_couplings(p: ModelParams) -> tuple[float, float]:
    """``(lambda_c, lambda_0)``; ``lambda_0`` is ``inf`` for ``delta = 0``."""
    return p.lambda_c, p.lambda_0


# -- stationary points -------------------------------------------------------


def _classify(p: ModelParams, m: float, q: float, pp: float, tol: float = 1e-9):
    hess = hessian_at(p, m, (q, pp))
    eig = np.linalg.eigvalsh(hess)
    degenerate = bool(np.min(np.abs(eig)) < tol * max(1.0, np.max(np.abs(eig))))
    r = int(np.sum(eig < 0)) if not degenerate else int(np.sum(eig < -tol))
    kind = "degenerate" if degenerate else ("minimum", "saddle", "maximum")[r]
    return hess, r, degenerate, kind


def _closed_form_points(p: ModelParams) -> list[tuple[float, float]]:
    """Stationary points of ``h_{-j}`` for ``mu = 0`` (any lambda, delta)."""
    pts = [(0.0, 0.0)]
    lc, l0 = p.lambda_c, p.lambda_0
    if p.lam > lc:
        x = p.lam / lc
        qq = math.sqrt(0.5 * (x**2 - x**-2))
        pts += [(-qq, 0.0), (qq, 0.0)]
    if p.lam > l0:
        x = p.lam / l0
        pp = math.sqrt(0.5 * (x**2 - x**-2))
        pts += [(0.0, -pp), (0.0, pp)]
    return pts


def _seed_window(p: ModelParams, m: float) -> tuple[float, float]:
    # |q + c| <= |m'| sqrt(a + d^2) and p^2 <= m'^2 b bound every stationary point
    k = _coeffs(p, m)
    qb = abs(k.c) + abs(m) * math.sqrt(k.a + k.d**2) + 0.5
    pb = abs(m) * math.sqrt(k.b) + 0.5
    return max(3.0, qb), max(1.5, pb)


def _newton_roots(p: ModelParams, m: float, seeds: np.ndarray, tol: float = 1e-12,
                  max_iter: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Damped Newton on grad h = 0 from all seeds at once.

    Returns converged points and a boolean mask over the seeds.
    """
    x = seeds.astype(float).copy()

    def grad(v):
        return gradient(p, m, (v[:, 0], v[:, 1])).T

    g = grad(x)
    gn = np.linalg.norm(g, axis=1)
    for _ in range(max_iter):
        active = gn > tol
        if not active.any():
            break
        xa = x[active]
        H = hessian_at(p, m, (xa[:, 0], xa[:, 1]))
        h11, h12, h22 = H[0, 0], H[0, 1], H[1, 1]
        det = h11 * h22 - h12**2
        ga = g[active]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = -np.stack([(h22 * ga[:, 0] - h12 * ga[:, 1]) / det,
                              (-h12 * ga[:, 0] + h11 * ga[:, 1]) / det], axis=1)
        bad = ~np.isfinite(step).all(axis=1) | (np.abs(det) < 1e-14)
        step[bad] = -ga[bad]
        # backtracking on |grad|
        t = np.ones(len(xa))
        new = xa + step
        gnew = grad(new)
        nnew = np.linalg.norm(gnew, axis=1)
        for _ in range(30):
            worse = nnew > gn[active] * (1 - 1e-4 * t) + 1e-300
            worse &= t > 1e-6
            if not worse.any():
                break
            t[worse] *= 0.5
            new[worse] = xa[worse] + t[worse, None] * step[worse]
            gnew[worse] = grad(new[worse])
            nnew[worse] = np.linalg.norm(gnew[worse], axis=1)
        x[active] = new
        g[active] = gnew
        gn[active] = nnew
    return x, gn < 1e-10


def stationary_points(p: ModelParams, m_prime=None, dedup: float = 1e-8) -> list[StationaryPoint]:
    """All stationary points of ``h_{m'}``, sorted by energy then position.

    ``mu = 0`` with ``m' = -j`` uses the closed-form set; otherwise a damped
    Newton search runs from a 21x11 seed grid plus the closed-form points.
    """
    p = validate_params(p)
    m = _default_m(p, m_prime)
    if p.mu == 0 and m == -p.j:
        raw = _closed_form_points(p)
    else:
        qb, pb = _seed_window(p, m)
        qs, ps = np.meshgrid(np.linspace(-qb, qb, 21), np.linspace(-pb, pb, 11), indexing="ij")
        seeds = np.column_stack([qs.ravel(), ps.ravel()])
        warm = np.array(_closed_form_points(p.with_(mu=0.0)))
        seeds = np.vstack([warm, seeds])
        roots, ok = _newton_roots(p, m, seeds)
        if not ok.any():
            warnings.warn(f"Newton search found no stationary point for {p} (m'={m}); "
                          f"{len(seeds)} seeds over q in [-{qb:.3g}, {qb:.3g}], "
                          f"p in [-{pb:.3g}, {pb:.3g}]")
        raw = []
        for q, pp in roots[ok]:
            if not any(abs(q - u) < dedup and abs(pp - v) < dedup for u, v in raw):
                raw.append((float(q), float(pp)))
        raw = [(0.0 if abs(q) < 1e-12 else q, 0.0 if abs(pp) < 1e-12 else pp) for q, pp in raw]

    pts = []
    for q, pp in raw:
        hess, r, degen, kind = _classify(p, m, q, pp)
        energy = classical_hamiltonian(p, m, (q, pp))
        pts.append((q, pp, energy, hess, r, degen, kind))
    emin = min(t[2] for t in pts)
    out = []
    for q, pp, energy, hess, r, degen, kind in pts:
        if degen:
            sing = "none"
        elif r == 0 and energy <= emin + 1e-12:
            sing = "none"
        else:
            sing = ("upward_step", "log_divergence", "downward_step")[r]
        out.append(StationaryPoint(ClassicalPoint(q, pp), energy, hess, r, degen, kind, sing))
    out.sort(key=lambda s: (round(s.energy, 12), s.point.q, s.point.p))
    return out


# -- vacuum stability and phases ---------------------------------------------


def _require_stationary_vacuum(p: ModelParams):
    if not (p.mu == 0 or p.gamma == 1):
        raise ValueError("vacuum not a fixed point (needs mu = 0 or gamma = 1)")


def linearized_flow(p: ModelParams, m_prime=None) -> np.ndarray:
    """Eigenvalues of the linearized flow matrix at ``(q, p) = (0, 0)``."""
    p = validate_params(p)
    _require_stationary_vacuum(p)
    k = hessian_at(p, _default_m(p, m_prime), (0.0, 0.0))
    flow = np.array([[k[0, 1], k[1, 1]], [-k[0, 0], -k[1, 0]]])
    ev = np.linalg.eigvals(flow).astype(complex)
    return ev[np.lexsort((ev.imag, ev.real))]


def classify_vacuum_phase(p: ModelParams) -> VacuumPhase:
    """Phase label from the nature of the vacuum stationary point of ``h_{-j}``."""
    p = validate_params(p)
    _require_stationary_vacuum(p)
    lc, l0 = p.lambda_c, p.lambda_0
    det = float(np.linalg.det(hessian_at(p, -p.j, (0.0, 0.0))))
    if p.mu == 0:
        lcp = lc
    elif p.mu < 0.5 * p.omega / p.N:
        lcp = first_order_critical(p)
    else:
        lcp = -math.inf  # vacuum never the global minimum
    if p.lam <= lcp and not (p.mu > 0 and lcp == -math.inf):
        label = "N"
    elif p.lam <= lc:
        label = "S0" if p.mu > 0 else "N"
    elif p.lam <= l0:
        label = "S1"
    else:
        label = "S2"
    return VacuumPhase(label, lc, l0, None if lcp == -math.inf else lcp, det)


# -- global minimum and the first-order transition ---------------------------


def _profile(p: ModelParams, m: float, q: np.ndarray):
    """Minimum over ``p`` of ``h(q, p)``; returns (relative energy, p*)."""
    k = _coeffs(p, m)
    q = np.asarray(q, dtype=float)
    C = k.a * q**2 + (k.e0 + k.d * q) ** 2
    if m < 0 and k.b > 0:
        s = np.maximum(0.0, m * m * k.b - C / k.b)
    else:
        s = np.zeros_like(q)
    pstar = np.sqrt(s)
    return relative_energy(p, m, (q, pstar)), pstar


def _profile_grid(p: ModelParams, m: float) -> np.ndarray:
    qb, _ = _seed_window(p, m)
    fine = np.geomspace(1e-8, 1.0, 500)
    return np.unique(np.concatenate([np.linspace(-qb, qb, 6001), fine, -fine, [0.0]]))


def _local_minima(p: ModelParams, m: float, exclude_vacuum: bool) -> list[tuple[float, float, float]]:
    """Local minima of the p-minimized profile: list of (relative energy, q, p*)."""
    q = _profile_grid(p, m)
    v, _ = _profile(p, m, q)
    out = []
    for i in range(1, q.size - 1):
        if v[i] <= v[i - 1] and v[i] <= v[i + 1] and (v[i] < v[i - 1] or v[i] < v[i + 1]):
            if exclude_vacuum and q[i] == 0.0:
                continue
            res = optimize.minimize_scalar(
                lambda t: float(_profile(p, m, np.array([t]))[0][0]),
                bounds=(q[i - 1], q[i + 1]), method="bounded",
                options={"xatol": 1e-13, "maxiter": 500},
            )
            qq = float(res.x)
            if exclude_vacuum and abs(qq) < 1e-10:
                continue
            e, ps = _profile(p, m, np.array([qq]))
            out.append((float(e[0]), qq, float(ps[0])))
    return out


def global_minimum(p: ModelParams, m_prime=None) -> tuple[float, ClassicalPoint]:
    """Lowest energy of ``h_{m'}`` and its location (one of a symmetric pair)."""
    p = validate_params(p)
    m = _default_m(p, m_prime)
    mins = _local_minima(p, m, exclude_vacuum=False)
    h0 = classical_hamiltonian(p, m, (0.0, 0.0))
    e, q, ps = min(mins + [(float(_profile(p, m, np.array([0.0]))[0][0]), 0.0, 0.0)])
    return h0 + e, ClassicalPoint(q, ps)


def _nonvacuum_gap(p: ModelParams) -> float:
    mins = _local_minima(p, -p.j, exclude_vacuum=True)
    return min((e for e, _, _ in mins), default=math.inf)


def first_order_critical(p: ModelParams, tol: float = 1e-9) -> float:
    """Coupling where a non-vacuum minimum drops below the vacuum (``gamma = 1``)."""
    p = validate_params(p)
    if p.gamma != 1 or not (0 < p.mu < 0.5 * p.omega / p.N):
        raise ValueError("first-order transition needs gamma = 1 and 0 < mu < omega/(2N)")
    lo, hi = 0.0, p.lambda_c
    if _nonvacuum_gap(p.with_(lam=lo)) <= 0 or _nonvacuum_gap(p.with_(lam=hi)) >= 0:
        raise ValueError("cannot bracket the first-order critical coupling in (0, lambda_c)")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _nonvacuum_gap(p.with_(lam=mid)) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- phase-space area and level density --------------------------------------


def _p_extent(k: _Coeffs, q: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """For each q, the interval ``[s_lo, s_hi]`` of ``s = p^2`` with ``h <= eps``.

    Empty intervals come back with ``s_hi < s_lo``.
    """
    u = 0.5 * q**2 + k.c * q - eps
    C = k.a * q**2 + (k.e0 + k.d * q) ** 2
    m = k.m
    s_lo = np.zeros_like(q)
    if m == 0:
        return s_lo, -2.0 * u
    if k.b == 0:
        return s_lo, -2.0 * (u + m * np.sqrt(C))
    D = m * m * k.b * k.b - 2 * u * k.b + C
    sq = np.sqrt(np.maximum(D, 0.0))
    am = abs(m)
    if m < 0:
        s_hi = 2.0 * (m * m * k.b - u + am * sq)
        lower_valid = am * k.b >= sq
        s_lo = np.where(lower_valid, np.maximum(0.0, 2.0 * (m * m * k.b - u - am * sq)), 0.0)
    else:
        s_hi = np.where(am * k.b <= sq, 2.0 * (m * m * k.b - u - am * sq), -1.0)
    s_hi = np.where(D < 0, -1.0, s_hi)
    return s_lo, s_hi


def _p_length(k: _Coeffs, q, eps: float):
    q = np.atleast_1d(np.asarray(q, dtype=float))
    s_lo, s_hi = _p_extent(k, q, eps)
    ok = s_hi > s_lo
    return np.where(ok, 2.0 * (np.sqrt(np.maximum(s_hi, 0)) - np.sqrt(np.maximum(s_lo, 0))), 0.0)


def _support_and_breaks(p: ModelParams, m: float, eps: float, extra_q=()):
    k = _coeffs(p, m)
    K = abs(k.c) + abs(m) * math.sqrt(k.a + k.d**2)
    rhs = eps + abs(m) * k.e0 + 0.5 * m * m * k.b
    if rhs < -0.5 * K * K:
        return [], []
    Q = K + math.sqrt(max(K * K + 2 * rhs, 0.0)) + 1e-6
    q = np.unique(np.concatenate([np.linspace(-Q, Q, 4001), np.asarray(extra_q, float)]))
    h0 = classical_hamiltonian(p, m, (0.0, 0.0))

    def f_support(t):
        return float(_profile(p, m, np.array([t]))[0][0]) + h0 - eps

    def f_floor(t):
        return classical_hamiltonian(p, m, (t, 0.0)) - eps

    vs = _profile(p, m, q)[0] + h0 - eps
    inside = vs <= 0
    edges = []
    for i in np.nonzero(inside[1:] != inside[:-1])[0]:
        edges.append(optimize.brentq(f_support, q[i], q[i + 1], xtol=1e-15, rtol=1e-15))
    # intervals of the support
    intervals = []
    start = None if not inside[0] else q[0]
    e_iter = iter(edges)
    for i in range(1, q.size):
        if inside[i] != inside[i - 1]:
            r = next(e_iter)
            if inside[i]:
                start = r
            else:
                intervals.append((start, r))
                start = None
    if start is not None:
        intervals.append((start, q[-1]))
    vf = classical_hamiltonian(p, m, (q, np.zeros_like(q))) - eps
    breaks = []
    for i in np.nonzero(np.sign(vf[1:]) != np.sign(vf[:-1]))[0]:
        if vf[i] == 0:
            breaks.append(q[i])
        else:
            breaks.append(optimize.brentq(f_floor, q[i], q[i + 1], xtol=1e-15, rtol=1e-15))
    return intervals, breaks


def phase_space_area(p: ModelParams, m_prime, eps: float) -> float:
    """Area of ``{(q, p) : h_{m'}(q, p) <= eps}``."""
    p = validate_params(p)
    m = _default_m(p, m_prime)
    k = _coeffs(p, m)
    extra = [s.point.q for s in _cached_stationary(p, m)]
    intervals, breaks = _support_and_breaks(p, m, eps, extra)
    total = 0.0
    for lo, hi in intervals:
        cuts = [lo] + sorted(b for b in breaks if lo < b < hi) + [hi]
        for a, b in zip(cuts[:-1], cuts[1:]):
            total += _edge_quad(lambda t: _p_length(k, t, eps), a, b)
    return total


def _edge_quad(f, a: float, b: float) -> float:
    """Integral of ``f`` over ``[a, b]`` for square-root behaviour at both ends.

    The substitution ``x = a + (b - a)(1 - cos t)/2`` removes the endpoint
    singularities of the p-extent so Gauss-Kronrod converges quickly.
    """
    half = 0.5 * (b - a)
    if half <= 0:
        return 0.0

    def g(t):
        return float(f(np.array([a + half * (1.0 - math.cos(t))]))[0]) * half * math.sin(t)

    val, _ = integrate.quad(g, 0.0, math.pi, limit=400, epsabs=1e-14, epsrel=1e-13)
    return val


_STAT_CACHE: dict = {}


def _cached_stationary(p: ModelParams, m: float):
    key = (p, m)
    if key not in _STAT_CACHE:
        if len(_STAT_CACHE) > 256:
            _STAT_CACHE.clear()
        _STAT_CACHE[key] = stationary_points(p, m)
    return _STAT_CACHE[key]


def semiclassical_level_density(p: ModelParams, m_prime=None, eps_grid=(), d_eps: float | None = None,
                                monotone_tol: float = 1e-9) -> np.ndarray:
    """Semiclassical level density ``(1/2pi) dA/deps`` on ``eps_grid``.

    ``A`` is the phase-space area below ``eps``. The derivative is a central
    difference with step ``d_eps`` (default: the grid spacing, at most 1e-3);
    windows that would straddle a stationary-point energy switch to the
    one-sided difference on the far side.
    """
    p = validate_params(p)
    m = _default_m(p, m_prime)
    eps_grid = np.asarray(eps_grid, dtype=float)
    if eps_grid.size == 0:
        return np.zeros(0)
    if d_eps is None:
        spacing = np.min(np.diff(np.unique(eps_grid))) if eps_grid.size > 1 else 1e-3
        d_eps = min(spacing, 1e-3)
    crit = np.array([s.energy for s in _cached_stationary(p, m)])
    out = np.empty(eps_grid.size)
    for i, e in enumerate(eps_grid):
        h = d_eps
        near = crit[(np.abs(crit - e) < h) & (np.abs(crit - e) > 1e-14)]
        if near.size and (near > e).any() and (near < e).any():
            h = 0.5 * np.min(np.abs(near - e))
            near = near[np.abs(near - e) < h]
        a0 = phase_space_area(p, m, e)
        if near.size == 0:
            am, ap = phase_space_area(p, m, e - h), phase_space_area(p, m, e + h)
            if ap + monotone_tol < a0 or a0 + monotone_tol < am:
                warnings.warn(f"phase-space area not monotone near eps={e}; grid under-resolved")
            out[i] = (ap - am) / (2 * h)
        elif (near > e).all():
            out[i] = (a0 - phase_space_area(p, m, e - h)) / h
        else:
            out[i] = (phase_space_area(p, m, e + h) - a0) / h
    return out / (2 * math.pi)


def esqpt_critical_lines(p: ModelParams, lambdas, m_prime=None) -> list[tuple[float, float, str]]:
    """``(lambda, eps_c, singularity)`` for every stationary point above the ground state.

    Symmetric partners at the same energy and type are reported once.
    """
    out = []
    for lam in np.asarray(lambdas, dtype=float):
        q = p.with_(lam=float(lam))
        seen = set()
        for s in stationary_points(q, m_prime):
            if s.singularity == "none":
                continue
            key = (round(s.energy, 10), s.singularity)
            if key in seen:
                continue
            seen.add(key)
            out.append((float(lam), s.energy, s.singularity))
    return out


def turning_radius(p: ModelParams, m_prime, eps: float) -> float:
    """Largest ``sqrt(q^2 + p^2)`` on the classically allowed region ``h <= eps``."""
    p = validate_params(p)
    m = _default_m(p, m_prime)
    k = _coeffs(p, m)
    intervals, _ = _support_and_breaks(p, m, eps)
    r2 = 0.0
    for lo, hi in intervals:
        q = np.linspace(lo, hi, 2001)
        _, s_hi = _p_extent(k, q, eps)
        r2 = max(r2, float(np.max(q**2 + np.maximum(s_hi, 0.0))))
    return math.sqrt(r2)
