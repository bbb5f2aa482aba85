"""Model parameters, truncated product basis and operator matrices.

The Hilbert space is spanned by ``|m, n>`` with ``m = -j..+j`` the collective
quasispin projection (``j = N/2``) and ``n = 0..n_max`` the boson number.
States are ordered m-major, n-minor::

    index(m, n) = (m + j) * (n_max + 1) + n

All operators are stored as real sparse matrices. Operators that are purely
imaginary in this basis (``J_y`` and ``p``) are stored as ``i * O`` together
with ``imaginary=True``; the represented operator is ``-1j * matrix``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class ParameterError(ValueError):
    """Raised when model parameters violate their allowed ranges."""


@dataclass(frozen=True)
class ModelParams:
    """Controls of the extended Rabi Hamiltonian.

    ``lam`` is the parity-conserving coupling (``lambda`` is a Python keyword).
    ``n_max`` optionally pins the Fock cutoff; ``None`` lets the cutoff policy
    choose it.
    """

    omega: float = 1.0
    R: float = 100.0
    N: int = 1
    lam: float = 0.0
    delta: float = 0.0
    mu: float = 0.0
    gamma: float = 0.0
    n_max: int | None = None
    allow_continuous_gamma: bool = False

    @property
    def j(self) -> float:
        return self.N / 2

    @property
    def NR(self) -> float:
        return self.N * self.R

    @property
    def lambda_c(self) -> float:
        return self.omega / (2 * self.N)

    @property
    def lambda_0(self) -> float:
        return math.inf if self.delta == 0 else self.lambda_c / abs(self.delta)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {
            "omega": self.omega,
            "R": self.R,
            "N": self.N,
            "lambda": self.lam,
            "delta": self.delta,
            "mu": self.mu,
            "gamma": self.gamma,
            "n_max": self.n_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown model parameter(s): {sorted(unknown)}")
        return cls(**d)


def validate_params(p: ModelParams) -> ModelParams:
    """Check parameter ranges; snap ``gamma`` onto 0 or 1 when within 1e-12."""
    checks = [
        (not (p.omega > 0), "omega must be positive"),
        (not (p.R >= 1), "R must be >= 1"),
        (int(p.N) != p.N or p.N < 1, "N must be a positive integer"),
        (not (p.lam >= 0), "lambda negative"),
        (not (p.mu >= 0), "mu negative"),
        (not (abs(p.delta) <= 1), "delta out of [-1,1]"),
    ]
    for failed, msg in checks:
        if failed:
            raise ParameterError(msg)
    if p.n_max is not None and (int(p.n_max) != p.n_max or p.n_max < 0):
        raise ParameterError("n_max must be a non-negative integer")
    gamma = float(p.gamma)
    for target in (0.0, 1.0):
        if abs(gamma - target) <= 1e-12:
            gamma = target
    if gamma not in (0.0, 1.0) and not p.allow_continuous_gamma:
        raise ParameterError("gamma must be 0 or 1 (set allow_continuous_gamma to override)")
    if gamma != p.gamma:
        return replace(p, gamma=gamma)
    return p


@dataclass(frozen=True)
class HilbertBasis:
    """Truncated product basis ``|m> x |n>`` in m-major order."""

    j: float
    n_max: int

    def __post_init__(self):
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")
        if abs(2 * self.j - round(2 * self.j)) > 1e-12 or self.j < 0:
            raise ValueError("j must be a non-negative half-integer")

    @property
    def n_spin(self) -> int:
        return int(round(2 * self.j)) + 1

    @property
    def n_fock(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return self.n_spin * self.n_fock

    @cached_property
    def m(self) -> np.ndarray:
        """Quasispin projection of every basis state."""
        return np.repeat(np.arange(self.n_spin) - self.j, self.n_fock)

    @cached_property
    def n(self) -> np.ndarray:
        """Boson number of every basis state."""
        return np.tile(np.arange(self.n_fock), self.n_spin)

    @cached_property
    def parity(self) -> np.ndarray:
        """``(-1)^n (-1)^(m+j)`` for every basis state."""
        k = np.repeat(np.arange(self.n_spin), self.n_fock)
        return np.where((self.n + k) % 2 == 0, 1, -1)

    @property
    def states(self) -> list[tuple[float, int]]:
        return list(zip(self.m.tolist(), self.n.tolist()))

    def index_of(self, m: float, n: int) -> int:
        k = m + self.j
        if abs(k - round(k)) > 1e-12 or not 0 <= round(k) < self.n_spin:
            raise KeyError(f"m={m} outside [-j, j]")
        if not 0 <= n <= self.n_max:
            raise KeyError(f"n={n} outside [0, {self.n_max}]")
        return int(round(k)) * self.n_fock + int(n)

    def parity_of(self, index: int) -> int:
        return int(self.parity[index])


def build_basis(j: float, n_max: int) -> HilbertBasis:
    return HilbertBasis(j=float(j), n_max=int(n_max))


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Real sparse matrix in :class:`HilbertBasis` order.

    With ``imaginary=True`` the stored matrix is ``i * O`` and the operator is
    ``O = -1j * matrix``.
    """

    matrix: sp.csr_array
    symmetry: str = "general"
    imaginary: bool = False
    basis: HilbertBasis | None = field(default=None, repr=False)
    params: ModelParams | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def operator(self) -> sp.csr_array:
        """The represented operator, complex when ``imaginary``."""
        if self.imaginary:
            return (-1j * self.matrix).tocsr()
        return self.matrix

    def __matmul__(self, other):
        return self.operator() @ other


def _tag(mat: sp.spmatrix, imaginary: bool = False, basis=None, params=None) -> OperatorMatrix:
    mat = sp.csr_array(mat)
    diff = abs(mat - mat.T).max() if mat.nnz else 0.0
    if diff == 0:
        sym = "symmetric"
    elif mat.nnz and abs(mat + mat.T).max() == 0:
        sym = "antisymmetric"
    else:
        sym = "general"
    return OperatorMatrix(mat, sym, imaginary, basis, params)


def _spin_matrices(j: float) -> dict[str, np.ndarray]:
    """Single-block quasispin matrices on ``m = -j..j`` (ascending)."""
    ms = np.arange(int(round(2 * j)) + 1) - j
    jp = np.zeros((ms.size, ms.size))
    for k in range(ms.size - 1):
        jp[k + 1, k] = math.sqrt(j * (j + 1) - ms[k] * (ms[k] + 1))
    jm = jp.T.copy()
    return {
        "z": np.diag(ms),
        "+": jp,
        "-": jm,
        "x": 0.5 * (jp + jm),
        # i * J_y = (J_+ - J_-) / 2, real antisymmetric
        "iy": 0.5 * (jp - jm),
    }


def _fock_ladder(n_fock: int) -> sp.csr_array:
    """Truncated annihilation operator ``b``."""
    return sp.diags(np.sqrt(np.arange(1, n_fock)), 1, shape=(n_fock, n_fock), format="csr")


def quasispin_operator(basis: HilbertBasis, component: str) -> OperatorMatrix:
    """``J_x, J_y, J_z, J_+, J_-`` tensored with the Fock identity.

    ``component='y'`` returns the real matrix of ``i J_y`` tagged imaginary.
    """
    mats = _spin_matrices(basis.j)
    key = {"x": "x", "y": "iy", "z": "z", "+": "+", "-": "-", "plus": "+", "minus": "-"}.get(component)
    if key is None:
        raise ValueError(f"unknown quasispin component {component!r}")
    eye_b = sp.identity(basis.n_fock, format="csr")
    mat = sp.kron(sp.csr_array(mats[key]), eye_b, format="csr")
    return _tag(mat, imaginary=(key == "iy"), basis=basis)


def boson_operator(basis: HilbertBasis, kind: str, nr: float = 1.0) -> OperatorMatrix:
    """Field operators tensored with the quasispin identity.

    ``kind`` is one of ``create, annihilate, number, q, p``. The quadratures
    use the scaled convention ``q = (b^+ + b)/sqrt(2 nr)``,
    ``p = i (b^+ - b)/sqrt(2 nr)`` so that ``[q, p] = i/nr``; ``p`` comes back
    as the real matrix of ``i p`` tagged imaginary.
    """
    b = _fock_ladder(basis.n_fock)
    s = 1.0 / math.sqrt(2.0 * nr)
    single = {
        "annihilate": (b, False),
        "create": (b.T, False),
        "number": (sp.diags(np.arange(basis.n_fock, dtype=float), format="csr"), False),
        "q": (s * (b.T + b), False),
        "p": (s * (b - b.T), True),  # i * p = (b - b^+)/sqrt(2 nr)
    }
    if kind not in single:
        raise ValueError(f"unknown boson operator {kind!r}")
    mat, imag = single[kind]
    eye_q = sp.identity(basis.n_spin, format="csr")
    return _tag(sp.kron(eye_q, mat, format="csr"), imaginary=imag, basis=basis)


def parity_operator(basis: HilbertBasis) -> OperatorMatrix:
    return _tag(sp.diags(basis.parity.astype(float), format="csr"), basis=basis)


def excitation_operator(basis: HilbertBasis, sign: int) -> OperatorMatrix:
    """``M_+ = n + n_*`` (sign=+1) or ``M_- = n - n_*`` (sign=-1), ``n_* = J_z + j``."""
    nstar = basis.m + basis.j
    return _tag(sp.diags(basis.n + sign * nstar, format="csr"), basis=basis)


def build_hamiltonian(p: ModelParams, basis: HilbertBasis) -> OperatorMatrix:
    """Ladder-operator assembly of the full Hamiltonian (real symmetric)."""
    p = validate_params(p)
    spin = _spin_matrices(basis.j)
    b = _fock_ladder(basis.n_fock)
    bd = b.T.tocsr()
    nb = sp.diags(np.arange(basis.n_fock, dtype=float), format="csr")
    eye_b = sp.identity(basis.n_fock, format="csr")
    eye_q = sp.identity(basis.n_spin, format="csr")
    kron = lambda a, c: sp.kron(sp.csr_array(a), c, format="csr")  # noqa: E731

    h = p.omega * (kron(eye_q, nb) + p.R * kron(spin["z"], eye_b))
    g = 2.0 * math.sqrt(p.NR)
    if p.lam:
        # -i delta (b^+ - b) J_y = -delta (b^+ - b) (i J_y)
        h = h + g * p.lam * (kron(spin["x"], bd + b) - p.delta * kron(spin["iy"], bd - b))
    if p.mu:
        h = h + g * p.mu * kron(spin["z"] + p.gamma * p.j * np.eye(basis.n_spin), bd + b)
    h = sp.csr_array(h)
    h.sum_duplicates()
    return OperatorMatrix(h, "symmetric", False, basis, p)


def build_hamiltonian_qp(p: ModelParams, basis: HilbertBasis) -> OperatorMatrix:
    """Assembly from the scaled coordinate-momentum form.

    ``H = NR w [-1/(2NR) + (q^2+p^2)/2 + sqrt(2) N (mu gamma/w) q + B.J]`` with
    ``B = (sqrt(8) lam q/w, -sqrt(8) lam delta p/w, 1/N + sqrt(8) mu q/w)``.
    Quadrature squares are formed with one extra Fock level and then cut back,
    so the truncation does not distort their diagonal.
    """
    p = validate_params(p)
    nr = p.NR
    spin = _spin_matrices(basis.j)
    ext = basis.n_fock + 1
    b_ext = _fock_ladder(ext)
    s = 1.0 / math.sqrt(2.0 * nr)
    q_ext = s * (b_ext.T + b_ext)
    ip_ext = s * (b_ext - b_ext.T)
    keep = slice(0, basis.n_fock)
    q = q_ext[keep, keep]
    ip = ip_ext[keep, keep]
    # p^2 = -(i p)^2
    quad = ((q_ext @ q_ext) - (ip_ext @ ip_ext))[keep, keep]
    eye_b = sp.identity(basis.n_fock, format="csr")
    eye_q = sp.identity(basis.n_spin, format="csr")
    kron = lambda a, c: sp.kron(sp.csr_array(a), c, format="csr")  # noqa: E731

    w = p.omega
    rt8 = math.sqrt(8.0)
    h = (-1.0 / (2 * nr)) * sp.identity(basis.dim, format="csr") + 0.5 * kron(eye_q, quad)
    h = h + math.sqrt(2.0) * p.N * (p.mu * p.gamma / w) * kron(eye_q, q)
    h = h + rt8 * (p.lam / w) * kron(spin["x"], q)
    # -sqrt8 (lam delta / w) p J_y with p J_y = -(i p)(i J_y)
    h = h + rt8 * (p.lam * p.delta / w) * kron(spin["iy"], ip)
    h = h + (1.0 / p.N) * kron(spin["z"], eye_b) + rt8 * (p.mu / w) * kron(spin["z"], q)
    h = sp.csr_array(nr * w * h)
    h.sum_duplicates()
    return OperatorMatrix(h, "symmetric", False, basis, p)


def scaled_energy(E, p: ModelParams):
    """``epsilon = E / (N R omega)``."""
    return np.asarray(E) / (p.NR * p.omega) if np.ndim(E) else E / (p.NR * p.omega)
