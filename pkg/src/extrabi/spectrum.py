"""Exact diagonalization, strength functions, level densities and cutoffs."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from . import semiclassics
from .model import (
    HilbertBasis,
    ModelParams,
    OperatorMatrix,
    build_basis,
    build_hamiltonian,
    validate_params,
)

DEGENERACY_RTOL = 1e-9


class EigensolverError(RuntimeError):
    """Eigensolver failed or produced an inaccurate decomposition."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    """Eigenpairs of a (possibly parity-restricted) truncated Hamiltonian.

    ``vectors[:, i]`` holds eigenvector ``i`` on the basis indices ``support``.
    A full solve has ``support = arange(dim)``.
    """

    energies: np.ndarray
    vectors: np.ndarray
    support: np.ndarray
    basis: HilbertBasis
    params: ModelParams
    block_labels: np.ndarray | None = None
    residual: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_max(self) -> int:
        return self.basis.n_max

    def __len__(self) -> int:
        return self.energies.size

    def project(self, vec: np.ndarray) -> np.ndarray:
        """Eigenbasis coefficients of a full-basis vector."""
        return self.vectors.T @ np.asarray(vec)[self.support]

    def embed(self, coeffs: np.ndarray) -> np.ndarray:
        """Full-basis vector(s) from eigenbasis coefficients."""
        sub = self.vectors @ coeffs
        out = np.zeros((self.basis.dim,) + sub.shape[1:], dtype=sub.dtype)
        out[self.support] = sub
        return out

    def scaled_energies(self) -> np.ndarray:
        return self.energies / (self.params.NR * self.params.omega)


@dataclass(frozen=True)
class StrengthFunction:
    energies: np.ndarray
    probabilities: np.ndarray
    amplitudes: np.ndarray
    mean: float
    variance: float


def _solve_block(H: OperatorMatrix, idx: np.ndarray, check: bool):
    sub = H.matrix[idx][:, idx]
    try:
        w, v = la.eigh(sub.toarray(), overwrite_a=True, check_finite=False)
    except la.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise EigensolverError(f"eigh failed: {exc}", math.inf) from exc
    res = 0.0
    if check:
        res = float(np.max(np.abs(sub @ v - v * w))) if w.size else 0.0
    return w, v, res


def diagonalize(H: OperatorMatrix, use_parity_blocks: bool = False, sector: int | None = None,
                check: bool = True) -> EigenDecomposition:
    """Dense symmetric eigensolve of ``H``.

    With ``use_parity_blocks`` the two parity sectors are solved separately and
    merged with labels; ``sector=+1`` or ``-1`` keeps a single sector. Both
    need a parity-conserving Hamiltonian (``mu = 0``).
    """
    basis, params = H.basis, H.params
    if basis is None or params is None:
        raise ValueError("Hamiltonian must carry its basis and params")
    if use_parity_blocks or sector is not None:
        if params.mu != 0:
            raise ValueError("parity blocks need mu = 0")
        sectors = (1, -1) if sector is None else (int(sector),)
        if any(s not in (1, -1) for s in sectors):
            raise ValueError("sector must be +1 or -1")
        parts = [(s, np.nonzero(basis.parity == s)[0]) for s in sectors]
    else:
        parts = [(None, np.arange(basis.dim))]

    norm = float(np.max(np.abs(H.matrix.data))) if H.matrix.nnz else 1.0
    energies, labels, solved, res = [], [], [], 0.0
    for s, idx in parts:
        w, v, r = _solve_block(H, idx, check)
        res = max(res, r)
        energies.append(w)
        labels.append(np.full(w.size, 0 if s is None else s, dtype=np.int8))
        solved.append((idx, v))
    if check and res > 1e-7 * max(norm, 1.0):
        raise EigensolverError("eigendecomposition residual too large", res)

    energies = np.concatenate(energies)
    labels = np.concatenate(labels)
    if len(parts) == 1:
        support, vectors = solved[0]
    else:
        support = np.arange(basis.dim)
        vectors = np.zeros((basis.dim, energies.size))
        col = 0
        for idx, v in solved:
            vectors[np.ix_(idx, np.arange(col, col + v.shape[1]))] = v
            col += v.shape[1]
    order = np.argsort(energies, kind="stable")
    return EigenDecomposition(
        energies=energies[order],
        vectors=np.ascontiguousarray(vectors[:, order]),
        support=np.asarray(support),
        basis=basis,
        params=params,
        block_labels=None if parts[0][0] is None else labels[order],
        residual=res,
    )


def strength_function(eigs: EigenDecomposition, initial) -> StrengthFunction:
    """Overlaps ``p_i = |<E_i|Psi(0)>|^2`` of a normalized initial vector."""
    vec = getattr(initial, "coefficients", initial)
    vec = np.asarray(vec)
    if abs(np.linalg.norm(vec) - 1.0) > 1e-10:
        raise ValueError("initial state must be normalized")
    amp = eigs.project(vec)
    prob = np.abs(amp) ** 2
    total = prob.sum()
    mean = float(np.dot(prob, eigs.energies) / total)
    var = float(np.dot(prob, (eigs.energies - mean) ** 2) / total)
    return StrengthFunction(eigs.energies, prob, amp, mean, var)


def degenerate_clusters(energies: np.ndarray, rtol: float = DEGENERACY_RTOL) -> np.ndarray:
    """Cluster label per (sorted) eigenvalue; gaps below ``rtol * span`` merge."""
    e = np.asarray(energies)
    if e.size == 0:
        return np.zeros(0, dtype=int)
    span = max(float(e[-1] - e[0]), 1e-300)
    gaps = np.diff(e) > rtol * span
    return np.concatenate([[0], np.cumsum(gaps)])


def smoothed_level_density(eigs: EigenDecomposition, p: ModelParams | None = None,
                           kernel_width: float = 0.02, eps_max: float | None = None):
    """Gaussian-smoothed density of scaled levels, divided by ``N R``.

    Returns a vectorized function of the scaled energy. Levels above
    ``eps_max`` (typically where truncation sets in) are ignored.
    """
    if kernel_width <= 0:
        raise ValueError("kernel_width must be positive")
    p = eigs.params if p is None else p
    eps_i = eigs.energies / (p.NR * p.omega)
    if eps_max is not None:
        eps_i = eps_i[eps_i <= eps_max]
    norm = 1.0 / (math.sqrt(2 * math.pi) * kernel_width * p.NR)

    def density(eps):
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        out = np.zeros(eps.size)
        for chunk in range(0, eps_i.size, 4096):
            d = (eps[:, None] - eps_i[None, chunk:chunk + 4096]) / kernel_width
            out += np.exp(-0.5 * d * d).sum(axis=1)
        return out * norm

    return density


# -- cutoff policy -----------------------------------------------------------


def quench_energy_spread(p: ModelParams) -> float:
    """Standard deviation of ``H`` in ``|m=-j> x |n=0>``, in units of ``omega``."""
    j = p.j
    var = 4 * p.NR * (p.lam**2 * (1 - p.delta) ** 2 * j / 2 + p.mu**2 * j**2 * (1 - p.gamma) ** 2)
    return math.sqrt(var)


def cutoff_for_energy(p: ModelParams, eps_top: float, floor: int = 64) -> int:
    """Fock cutoff covering the classical region ``h_{m'} <= eps_top`` of every branch."""
    p = validate_params(p)
    r = 0.0
    for k in range(int(round(2 * p.j)) + 1):
        r = max(r, semiclassics.turning_radius(p, -p.j + k, eps_top))
    n_turn = 0.5 * p.NR * r * r
    return max(floor, int(math.ceil(1.15 * n_turn + 8 * math.sqrt(n_turn) + 48)))


def quench_cutoff(p: ModelParams, n_sigma: float = 8.0) -> int:
    """Starting cutoff for a quench from ``|m=-j> x |n=0>``."""
    sigma = quench_energy_spread(p) / (p.NR * p.omega)
    return cutoff_for_energy(p, -0.5 + n_sigma * sigma + 2.0 / p.NR)


def tail_weight_bound(eigs: EigenDecomposition, amplitudes: np.ndarray, frac: float = 0.9) -> float:
    """Upper bound on ``sum_{n > frac n_max} |c_mn(t)|^2`` valid for all times."""
    n = eigs.basis.n[eigs.support]
    tail = n > frac * eigs.basis.n_max
    w = np.sqrt(np.sum(eigs.vectors[tail] ** 2, axis=0))
    return float(np.sum(np.abs(amplitudes) * w) ** 2)


def _parity_sector(p: ModelParams):
    return 1 if p.mu == 0 else None


def solve_quench_spectrum(p: ModelParams, n_max: int | None = None, tail_tol: float = 1e-8,
                          grow: float = 1.4, max_rounds: int = 6, verify: bool = False):
    """Eigenpairs adequate for the quench from ``|m=-j> x |n=0>``.

    Returns ``(eigs, strength)``. Unless ``n_max`` is pinned, the cutoff grows
    until the all-time tail-weight bound drops below ``tail_tol``. With
    ``verify`` a doubled cutoff is also solved and compared.
    """
    p = validate_params(p)
    pinned = n_max if n_max is not None else p.n_max
    nm = pinned if pinned is not None else quench_cutoff(p)
    sector = _parity_sector(p)
    for _ in range(max_rounds):
        basis = build_basis(p.j, nm)
        eigs = diagonalize(build_hamiltonian(p, basis), sector=sector)
        vec0 = np.zeros(basis.dim)
        vec0[basis.index_of(-p.j, 0)] = 1.0
        sf = strength_function(eigs, vec0)
        tail = tail_weight_bound(eigs, sf.amplitudes)
        eigs.meta.update(tail_bound=tail, n_max=nm)
        if pinned is not None or tail < tail_tol:
            break
        nm = int(math.ceil(grow * nm))
    else:
        raise EigensolverError(f"cutoff did not converge up to n_max={nm}", tail)
    if verify:
        big = diagonalize(build_hamiltonian(p, build_basis(p.j, 2 * nm)), sector=sector)
        eigs.meta["doubling_shift"] = float(abs(big.energies[0] - eigs.energies[0]) / (p.NR * p.omega))
    return eigs, sf


def ground_state_energy(p: ModelParams, n_max: int | None = None, tol: float = 1e-9,
                        max_rounds: int = 6) -> tuple[float, int]:
    """Converged scaled ground-state energy and the cutoff used.

    The cutoff is doubled until the scaled energy moves by less than ``tol``.
    """
    p = validate_params(p)
    sector = _parity_sector(p)
    if n_max is None and p.n_max is None:
        emin, _ = semiclassics.global_minimum(p)
        nm = cutoff_for_energy(p, emin + 0.25)
    else:
        nm = n_max if n_max is not None else p.n_max

    def e0(cut):
        basis = build_basis(p.j, cut)
        eigs = diagonalize(build_hamiltonian(p, basis), sector=sector)
        return eigs.energies[0] / (p.NR * p.omega)

    cur = e0(nm)
    for _ in range(max_rounds):
        nxt = e0(2 * nm)
        if abs(nxt - cur) < tol:
            return cur, nm
        nm, cur = 2 * nm, nxt
    raise EigensolverError("ground-state energy not converged in the cutoff", abs(nxt - cur))


def ground_state_curve(p: ModelParams, lambda_grid) -> list[tuple[float, float]]:
    """``(lambda, eps_gs)`` with the cutoff re-converged at each coupling."""
    grid = [float(x) for x in lambda_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("lambda grid must be sorted")
    return [(lam, ground_state_energy(p.with_(lam=lam, n_max=None))[0]) for lam in grid]


# -- export ------------------------------------------------------------------


def save_eigen(path, eigs: EigenDecomposition, include_vectors: bool = True) -> None:
    """Write an ``.npz`` with a JSON ``header`` plus ``energies`` (and ``vectors``, ``support``)."""
    header = {
        "params": eigs.params.as_dict(),
        "n_max": eigs.basis.n_max,
        "j": eigs.basis.j,
        "dimension": eigs.basis.dim,
        "residual": eigs.residual,
        "ordering": "m-major, index = (m + j) * (n_max + 1) + n",
    }
    arrays = {"header": np.array(json.dumps(header, sort_keys=True)), "energies": eigs.energies}
    if eigs.block_labels is not None:
        arrays["block_labels"] = eigs.block_labels
    if include_vectors:
        arrays["vectors"] = eigs.vectors
        arrays["support"] = eigs.support
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_eigen(path) -> EigenDecomposition:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        params = ModelParams.from_dict(header["params"])
        basis = build_basis(header["j"], header["n_max"])
        energies = data["energies"]
        vectors = data["vectors"] if "vectors" in data else np.zeros((0, energies.size))
        support = data["support"] if "support" in data else np.zeros(0, dtype=int)
        labels = data["block_labels"] if "block_labels" in data else None
    return EigenDecomposition(energies, vectors, support, basis, params, labels, header["residual"])
