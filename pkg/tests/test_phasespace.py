import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from extrabi import dynamics as dyn
from extrabi import phasespace as ps
from extrabi.model import ModelParams
from extrabi.spectrum import solve_quench_spectrum


def fock(n, size):
    v = np.zeros(size, complex)
    v[n] = 1
    return v


pytestmark = pytest.mark.filterwarnings("ignore:Fock tail weight")


def random_factor(rng, n_fock, rank):
    F = rng.normal(size=(n_fock, rank)) + 1j * rng.normal(size=(n_fock, rank))
    F *= np.exp(-0.05 * np.arange(n_fock))[:, None]
    return F / np.linalg.norm(F)


# -- oscillator wavefunctions ------------------------------------------------


def test_ground_wavefunction_peak():
    assert ps.oscillator_wavefunction(0, 0.0)[0] == pytest.approx(math.pi**-0.25)
    assert ps.oscillator_wavefunction(0, 0.0, scale=0.01)[0] == pytest.approx((0.01 * math.pi) ** -0.25)


def test_wavefunction_orthonormal_and_parity():
    x = np.linspace(-14, 14, 8001)
    psi = np.array([ps.oscillator_wavefunction(n, x) for n in range(51)])
    gram = psi @ psi.T * (x[1] - x[0])
    assert np.allclose(gram, np.eye(51), atol=1e-8)
    for n in (3, 10, 47):
        assert np.allclose(ps.oscillator_wavefunction(n, -x), (-1) ** n * psi[n], atol=1e-14)
    with pytest.raises(ValueError):
        ps.oscillator_wavefunction(-1, x)


# -- Wigner function ---------------------------------------------------------


def test_vacuum_wigner():
    W = ps.wigner(ps.vacuum_state(10))
    Q, P = np.meshgrid(W.q_axis, W.p_axis, indexing="ij")
    assert W.at(0, 0) == pytest.approx(1 / math.pi, abs=1e-12)
    assert np.allclose(W.values, np.exp(-Q**2 - P**2) / math.pi, atol=1e-12)
    assert W.integral() == pytest.approx(1, abs=1e-4)


def test_first_fock_negative_at_origin():
    for method in ("coordinate", "fock"):
        W = ps.wigner(fock(1, 6), method=method)
        assert W.at(0, 0) == pytest.approx(-1 / math.pi, abs=1e-12)


def test_routes_agree_on_complex_states():
    rng = np.random.default_rng(7)
    F = random_factor(rng, 25, 3)
    axis = np.linspace(-7, 7, 141)
    a = ps.wigner(F @ F.conj().T, axis, axis, method="coordinate")
    b = ps.wigner(F @ F.conj().T, axis, axis, method="fock")
    assert np.max(np.abs(a.values - b.values)) < 1e-10


def test_displaced_state_centre():
    # coherent state alpha = 1 + 0.5 i sits at x = sqrt(2) Re(alpha), p = sqrt(2) Im(alpha)
    alpha = 1 + 0.5j
    n = np.arange(40)
    logfact = np.array([math.lgamma(k + 1) for k in n])
    v = np.exp(-abs(alpha) ** 2 / 2 + n * np.log(alpha) - 0.5 * logfact)
    W = ps.wigner(v)
    i, k = np.unravel_index(np.argmax(W.values), W.values.shape)
    step = W.q_axis[1] - W.q_axis[0]
    assert abs(W.q_axis[i] - math.sqrt(2)) <= step and abs(W.p_axis[k] - math.sqrt(2) * 0.5) <= step
    assert W.values.max() == pytest.approx(1 / math.pi, abs=1e-3)


def test_purity_and_marginal():
    rng = np.random.default_rng(3)
    F = random_factor(rng, 20, 2)
    rho = F @ F.conj().T
    W = ps.wigner(rho)
    assert W.integral() == pytest.approx(1, abs=1e-4)
    assert W.purity() == pytest.approx(np.trace(rho @ rho).real, abs=1e-4)
    marginal = W.values.sum(axis=1) * (W.p_axis[1] - W.p_axis[0])
    psi = np.array([ps.oscillator_wavefunction(n, W.q_axis) for n in range(20)])
    diag = np.sum(np.abs(psi.T @ F) ** 2, axis=1)
    assert np.max(np.abs(marginal - diag)) < 1e-4


def test_unit_trace_required():
    with pytest.raises(ValueError, match="unit trace"):
        ps.wigner(2 * ps.vacuum_state(4))


def test_tail_warning():
    v = np.ones(20, complex) / math.sqrt(20)
    with pytest.warns(UserWarning, match="tail"):
        ps.wigner(v)


# -- overlaps ----------------------------------------------------------------


def test_overlap_elementary():
    axis = np.linspace(-8, 8, 161)
    vac = ps.wigner(ps.vacuum_state(4), axis, axis)
    one = ps.wigner(fock(1, 4), axis, axis)
    assert ps.wigner_overlap(vac, vac) == pytest.approx(1, abs=1e-10)
    assert ps.wigner_overlap(vac, one) == pytest.approx(0, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), n_fock=st.integers(2, 31), rank=st.integers(1, 4))
def test_overlap_with_vacuum_is_vacuum_population(seed, n_fock, rank):
    rng = np.random.default_rng(seed)
    F = random_factor(rng, n_fock, rank)
    rho = F @ F.conj().T
    W = ps.wigner(rho)
    vac = ps.wigner(ps.vacuum_state(n_fock), W.q_axis, W.p_axis)
    assert ps.wigner_overlap(W, vac) == pytest.approx(rho[0, 0].real, abs=1e-6)


def test_overlap_grid_mismatch():
    a = ps.wigner(ps.vacuum_state(3), np.linspace(-5, 5, 51), np.linspace(-5, 5, 51))
    b = ps.wigner(ps.vacuum_state(3), np.linspace(-5, 5, 41), np.linspace(-5, 5, 41))
    with pytest.raises(ValueError, match="grid mismatch"):
        ps.wigner_overlap(a, b)
    c = ps.wigner(ps.vacuum_state(3), np.linspace(-5, 5, 51), np.linspace(-5, 5, 51), "scaled", NR=4)
    with pytest.raises(ValueError, match="grid mismatch"):
        ps.wigner_overlap(a, c)


def test_scaled_convention_consistency():
    rng = np.random.default_rng(11)
    F = random_factor(rng, 15, 2)
    rho = F @ F.conj().T
    NR = 25.0
    std = ps.wigner(rho)
    sc = ps.wigner(rho, std.q_axis / math.sqrt(NR), std.p_axis / math.sqrt(NR), "scaled", NR)
    assert np.allclose(sc.values, NR * std.values, atol=1e-12)
    assert sc.integral() == pytest.approx(1, abs=1e-4)
    vac = ps.wigner(ps.vacuum_state(15), sc.q_axis, sc.p_axis, "scaled", NR)
    assert ps.wigner_overlap(sc, vac) == pytest.approx(rho[0, 0].real, abs=1e-6)


# -- snapshots ---------------------------------------------------------------


@pytest.mark.parametrize("lam", [0.4, 0.75, 1.5])
def test_initial_snapshot_is_vacuum(lam):
    W = ps.wigner_snapshots(ModelParams(lam=lam, delta=0.5, R=20), times=[0.0])[0]
    Q, P = np.meshgrid(W.q_axis, W.p_axis, indexing="ij")
    assert np.allclose(W.values, np.exp(-Q**2 - P**2) / math.pi, atol=1e-12)


def test_snapshot_overlap_matches_field_survival():
    p = ModelParams(lam=0.75, delta=0.5)
    eigs, sf = solve_quench_spectrum(p)
    scan = np.linspace(0, 50, 2001)
    times = dyn.snapshot_times(scan, dyn.survival_trace(sf, scan))
    grids = ps.wigner_snapshots(p, times=times, eigs=eigs, sf=sf)
    vac = ps.wigner(ps.vacuum_state(eigs.basis.n_fock), grids[0].q_axis, grids[0].p_axis)
    for W, st_ in zip(grids, dyn.evolve(eigs, dyn.initial_state(eigs.basis, p), times)):
        assert ps.wigner_overlap(W, vac) == pytest.approx(dyn.subsystem_survivals(st_)[1], abs=1e-6)
        assert W.integral() == pytest.approx(1, abs=1e-4)
    # at the dip the distribution stretches along the unstable q direction
    W = grids[1]
    Q, P = np.meshgrid(W.q_axis, W.p_axis, indexing="ij")
    var_q = np.sum(W.values * Q**2) * W.cell
    var_p = np.sum(W.values * P**2) * W.cell
    assert var_q > 2 * var_p and var_q > 50 * 0.5
    assert math.pi * W.at(0, 0) < 0.75


def test_golden_stable_phase_centre(golden):
    g = golden["wigner_centre_lam1.5"]
    grids = ps.wigner_snapshots(ModelParams(lam=1.5, delta=0.5))
    assert [W.meta["t"] for W in grids] == pytest.approx(g["times"])
    centre = [math.pi * W.at(0, 0) for W in grids]
    assert centre == pytest.approx(g["pi_W00"], abs=1e-8)
    assert min(centre) > 0.9


def test_snapshot_export(tmp_path):
    W = ps.wigner(ps.vacuum_state(3), np.linspace(-3, 3, 7), np.linspace(-3, 3, 7))
    W.to_files(tmp_path / "w.csv", tmp_path / "w.json", {"t": 0.0})
    back = np.loadtxt(tmp_path / "w.csv", delimiter=",")
    assert np.array_equal(back, W.values)
