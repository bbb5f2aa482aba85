import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from extrabi import dynamics as dyn
from extrabi.model import ModelParams, build_basis, build_hamiltonian, parity_operator
from extrabi.spectrum import EigenDecomposition, StrengthFunction, diagonalize, solve_quench_spectrum, strength_function


def setup(p, n_max):
    basis = build_basis(p.j, n_max)
    eigs = diagonalize(build_hamiltonian(p, basis))
    s0 = dyn.initial_state(basis, p)
    return eigs, s0, strength_function(eigs, s0)


def toy(prob, energies):
    prob = np.asarray(prob, float)
    return StrengthFunction(np.asarray(energies, float), prob, np.sqrt(prob), 0.0, 0.0)


# -- initial state and evolution ---------------------------------------------


def test_initial_state():
    basis = build_basis(0.5, 2)
    s0 = dyn.initial_state(basis)
    e = np.zeros(basis.dim)
    e[basis.index_of(-0.5, 0)] = 1
    assert np.array_equal(s0.coefficients, e) and s0.t == 0
    P = parity_operator(basis)
    assert dyn.expectation(s0, P) == 1
    obs = dyn.observables(basis, ModelParams())
    assert dyn.expectation(s0, obs["Jz"]) == -0.5 and dyn.expectation(s0, obs["n"]) == 0


@pytest.mark.parametrize("p", [ModelParams(lam=0.7, delta=0.3, R=5), ModelParams(N=2, lam=0.2, mu=0.3, gamma=1, R=5)])
def test_mean_energy(p):
    eigs, s0, sf = setup(p, 15)
    H = build_hamiltonian(p, eigs.basis)
    assert dyn.expectation(s0, H) == pytest.approx(-p.omega * p.R * p.j)
    assert sf.mean / (p.NR * p.omega) == pytest.approx(-0.5, rel=1e-10)


def test_time_zero_is_identity():
    eigs, s0, _ = setup(ModelParams(lam=0.75, delta=0.5, R=10), 30)
    st = dyn.evolve(eigs, s0, [0.0])[0]
    assert np.allclose(st.coefficients, s0.coefficients, atol=1e-13)


def test_free_evolution_is_phase():
    p = ModelParams()
    eigs, s0, sf = setup(p, 4)
    for st in dyn.evolve(eigs, s0, [0.3, 2.0]):
        k = eigs.basis.index_of(-0.5, 0)
        assert st.coefficients[k] == pytest.approx(np.exp(1j * 50 * st.t))
        assert dyn.survival_probability(s0, st) == pytest.approx(1, abs=1e-14)


def test_jaynes_cummings_frozen():
    p = ModelParams(lam=0.75, delta=1.0)
    eigs, sf = solve_quench_spectrum(p)
    P = dyn.survival_trace(sf, np.linspace(0, 100, 501))
    assert np.all(abs(P - 1) < 1e-8)


def test_two_level_toy():
    assert dyn.survival_trace(toy([0.5, 0.5], [0, math.pi]), [0.0, 1.0]) == pytest.approx([1, 0], abs=1e-15)


def test_survival_forms_agree():
    p = ModelParams(lam=0.75, delta=0.5, R=10)
    eigs, s0, sf = setup(p, 40)
    times = np.linspace(0, 5, 11)
    direct = [dyn.survival_probability(s0, st) for st in dyn.evolve(eigs, s0, times)]
    assert np.allclose(dyn.survival_trace(sf, times), direct, atol=1e-12)


def test_conservation_laws():
    p = ModelParams(lam=1.5, delta=0.5, R=10)
    eigs, s0, sf = setup(p, 60)
    H = build_hamiltonian(p, eigs.basis)
    Pi = parity_operator(eigs.basis)
    e0 = dyn.expectation(s0, H)
    for st in dyn.evolve(eigs, s0, np.linspace(0, 40, 9)):
        assert abs(st.norm - 1) < 1e-10
        assert dyn.expectation(st, H) == pytest.approx(e0, rel=1e-8)
        assert dyn.expectation(st, Pi) == pytest.approx(1, abs=1e-10)


def test_odes_oracle():
    p = ModelParams(lam=0.9, delta=0.4, mu=0.3, gamma=1, R=2)
    eigs, s0, _ = setup(p, 6)
    H = build_hamiltonian(p, eigs.basis).matrix.toarray()
    times = np.linspace(0, 10, 21)
    sol = solve_ivp(lambda t, c: -1j * (H @ c), (0, 10), s0.coefficients, method="DOP853",
                    t_eval=times, rtol=1e-12, atol=1e-13)
    ours = np.column_stack([st.coefficients for st in dyn.evolve(eigs, s0, times)])
    assert np.max(np.abs(ours - sol.y)) < 1e-6


# -- observables and exact identities ----------------------------------------


def test_parity_conserving_zeros_and_identities():
    p = ModelParams(lam=0.75, delta=0.5, R=20)
    rec = dyn.run_quench(p, np.linspace(0, 30, 121))
    for k in ("Jx", "Jy", "q", "p"):
        assert np.max(np.abs(getattr(rec, k))) < 1e-8
    assert np.allclose(rec.P, rec.Pb, atol=1e-10)
    assert np.all(rec.Pq >= rec.P - 1e-12)
    assert np.allclose(rec.Pq, 0.5 - rec.Jz, atol=1e-10)
    assert np.allclose(rec.purity, 2 * np.abs(rec.Jz), atol=1e-10)
    assert np.all((rec.P >= -1e-12) & (rec.P <= 1 + 1e-12))


def test_reduced_states():
    p = ModelParams(lam=0.75, delta=0.5, R=10)
    eigs, s0, _ = setup(p, 40)
    rq0 = dyn.reduced_density(s0, "qubit")
    assert rq0.purity() == pytest.approx(1)
    assert dyn.subsystem_survivals(s0) == (1.0, 1.0)
    for st in dyn.evolve(eigs, s0, [0.7, 3.1, 12.0]):
        rq = dyn.reduced_density(st, "qubit")
        rb = dyn.reduced_density(st, "field")
        assert rq.trace == pytest.approx(1, abs=1e-10)
        assert rb.trace == pytest.approx(1, abs=1e-10)
        ev_q = np.linalg.eigvalsh(rq.matrix)[::-1]
        ev_b = np.linalg.eigvalsh(rb.matrix)[::-1][:2]
        assert np.allclose(ev_q, ev_b, atol=1e-8)
        assert np.all(np.linalg.eigvalsh(rb.matrix) > -1e-12)
        assert abs(rq.matrix[0, 1]) < 1e-12
        jx, jy, jz, wp = dyn.bloch_and_purity(st)
        assert np.trace(rq.matrix @ rq.matrix).real == pytest.approx((wp**2 + 1) / 2)
        assert wp == pytest.approx(2 * abs(jz), abs=1e-10)


def test_reduced_state_eigenvalues_with_drive():
    p = ModelParams(N=2, lam=0.5, delta=0.2, mu=0.3, gamma=1, R=5)
    eigs, s0, _ = setup(p, 30)
    st = dyn.evolve(eigs, s0, [2.0])[0]
    ev_q = dyn.reduced_density(st, "qubit").eigenvalues()
    ev_b = dyn.reduced_density(st, "field").eigenvalues()
    assert np.allclose(ev_q[:3], ev_b[:3], atol=1e-8)


def test_bloch_endpoints():
    basis = build_basis(0.5, 3)
    s0 = dyn.initial_state(basis)
    assert dyn.bloch_and_purity(s0) == (0.0, 0.0, -0.5, 1.0)
    c = np.zeros(basis.dim, complex)
    c[basis.index_of(-0.5, 0)] = c[basis.index_of(0.5, 1)] = 1 / math.sqrt(2)
    mixed = dyn.QuenchState(c, 0.0, basis)
    assert dyn.bloch_and_purity(mixed)[3] == pytest.approx(0, abs=1e-15)
    assert dyn.reduced_density(mixed, "qubit").purity() == pytest.approx(0.5)
    with pytest.raises(ValueError, match="Bloch parametrization requires N=1"):
        dyn.bloch_and_purity(dyn.initial_state(build_basis(1.0, 3)))


# -- averages ----------------------------------------------------------------


def test_free_averages():
    eigs, s0, sf = setup(ModelParams(), 5)
    avg = dyn.infinite_time_averages(sf, eigs)
    assert avg["P"] == 1 and avg["n"] == 0 and avg["Jz"] == -0.5


def test_toy_average():
    basis = build_basis(0.5, 0)
    V = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    eigs = EigenDecomposition(np.array([0.0, math.pi]), V, np.arange(2), basis, ModelParams())
    sf = strength_function(eigs, dyn.initial_state(basis).coefficients.real)
    assert sf.probabilities == pytest.approx([0.5, 0.5])
    assert dyn.infinite_time_averages(sf, eigs, obs={})["P"] == pytest.approx(0.5)


def test_degenerate_doublets_merge():
    p = ModelParams(lam=0.75, delta=0.5, R=10)
    eigs, s0, sf = setup(p, 60)
    pc, psi = dyn.cluster_states(eigs, sf)
    assert pc.sum() == pytest.approx(1)
    assert np.allclose(np.sum(psi**2, axis=0), pc)


def test_drive_zero_averages():
    p = ModelParams(lam=0.6, delta=0.5, mu=0.2, gamma=0, R=10)
    eigs, sf = solve_quench_spectrum(p)
    avg = dyn.infinite_time_averages(sf, eigs)
    assert abs(avg["Jy"]) < 1e-8 and abs(avg["p"]) < 1e-8


def test_spectral_vs_temporal_average():
    p = ModelParams(lam=0.75, delta=0.5, R=10)
    eigs, sf = solve_quench_spectrum(p)
    t = np.linspace(0, 1e4, 200001)
    P = dyn.survival_trace(sf, t)
    avg = dyn.infinite_time_averages(sf, eigs)
    assert np.trapezoid(P, t) / t[-1] == pytest.approx(avg["P"], rel=0.05)


# -- protocols ---------------------------------------------------------------


def test_two_step_quench():
    p = ModelParams(lam=0.75, delta=0.5, R=10)
    eigs, s0, sf = setup(p, 40)
    s1 = dyn.two_step_quench(p, eigs.basis, ramp_time=3.0)
    assert dyn.survival_probability(s0, s1) == pytest.approx(1, abs=1e-14)
    times = np.linspace(0, 10, 21)
    a = [dyn.survival_probability(s1, st) for st in dyn.evolve(eigs, s1, times)]
    assert np.allclose(a, dyn.survival_trace(sf, times), atol=1e-10)
    with pytest.raises(ValueError):
        dyn.two_step_quench(p.with_(delta=1.0), eigs.basis)
    with pytest.raises(ValueError):
        dyn.two_step_quench(p.with_(mu=0.1), eigs.basis)


def test_size_scaling():
    s1 = dyn.size_scaling_study(ModelParams(lam=0.75, delta=0.5), [10, 30, 100])
    P = [r[1] for r in s1]
    miss = [1 - r[2] for r in s1]
    assert P[0] > P[1] > P[2]
    assert miss[0] > miss[1] > miss[2]
    slope, icpt = np.polyfit(np.log([10, 30, 100]), np.log(miss), 1)
    assert np.max(np.abs(np.polyval([slope, icpt], np.log([10, 30, 100])) - np.log(miss))) < 0.01
    s2 = dyn.size_scaling_study(ModelParams(lam=1.5, delta=0.5), [10, 30, 100])
    assert s2[0][1] < s2[1][1] < s2[2][1]
    assert s2[0][2] < s2[1][2] < s2[2][2]
    with pytest.raises(ValueError):
        dyn.size_scaling_study(ModelParams(), [30, 10])


def test_golden_survival(golden):
    g = golden["survival_lam0.75"]
    eigs, sf = solve_quench_spectrum(ModelParams(lam=0.75, delta=0.5))
    P = dyn.survival_trace(sf, np.array(g["times"]))
    assert np.allclose(P, g["P"], atol=1e-8)
    assert P.min() < 0.1


def test_record_export(tmp_path):
    rec = dyn.run_quench(ModelParams(lam=0.4, delta=0.5, R=10), np.linspace(0, 1, 5))
    rec.to_csv(tmp_path / "q.csv")
    rec.to_json(tmp_path / "q.json")
    rows = (tmp_path / "q.csv").read_text().splitlines()
    assert rows[0] == ",".join(rec.COLUMNS) and len(rows) == 6
    assert "averages" in (tmp_path / "q.json").read_text()


def test_snapshot_times():
    t = np.linspace(0, 10, 1001)
    P = np.cos(t) ** 2
    early, dip, rev = dyn.snapshot_times(t, P)
    assert dip == pytest.approx(math.pi / 2, abs=0.01)
    assert rev == pytest.approx(math.pi, abs=0.01)
    assert early == pytest.approx(dip / 4)
