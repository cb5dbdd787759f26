import math

import numpy as np
import pytest
from scipy.linalg import expm

from tactsim.dynamics import TimeSeries
from tactsim.errors import ChannelMissing
from tactsim.model import build_lmg_hamiltonian, build_tmss_hamiltonian, TwoCavityParams
from tactsim.observables import (
    analytic_estimates,
    channel_minimum,
    entanglement_entropy,
    overlap_fidelity,
    qfi_matrix,
    reduced_density_matrix,
    squeezing_parameter,
    squeezing_summary,
    tmss_delta,
)
from tactsim.operators import dicke_spin_matrices, pair_spin_ops
from tactsim.spaces import Dicke, make_space


def rotate(psi, S, axis, angle):
    mats = [m.toarray() for m in dicke_spin_matrices(S)]
    gen = sum(a * m for a, m in zip(axis, mats))
    return expm(-1j * angle * gen) @ psi


def stretched(S):
    space = make_space([Dicke(S)])
    return space.basis_state((0,)), space


# ---------------------------------------------------------------- squeezing

@pytest.mark.parametrize("axis,angle", [
    ((0, 1, 0), 0.0), ((0, 1, 0), 0.5 * math.pi), ((1, 0, 0), 1.1), ((0.6, 0.8, 0), 2.3),
])
def test_coherent_state_is_unsqueezed(axis, angle):
    S = 2.0
    psi, space = stretched(S)
    psi = rotate(psi, S, np.array(axis, dtype=float), angle)
    res = squeezing_parameter(psi, S, space)
    assert res.xi2 == pytest.approx(1.0, abs=1e-10)
    assert res.xi2_db == pytest.approx(0.0, abs=1e-9)
    assert not res.degenerate


def test_spin1_twisting_snapshot():
    # closed form 1 - |sin(2 chi t)| at chi t = pi / 8 gives 1 - sqrt(2)/2
    S = 1.0
    psi, space = stretched(S)
    h = build_lmg_hamiltonian(0.0, 1.0, 1.0, 0.0, space).toarray()
    t = math.pi / 8.0
    psit = expm(-1j * h * t) @ psi
    res = squeezing_parameter(psit, S, space)
    assert res.xi2 == pytest.approx(1.0 - math.sqrt(2.0) / 2.0, abs=1e-12)


def test_degenerate_mean_spin_flagged():
    space = make_space([Dicke(1.0)])
    psi = space.basis_state((1,))  # m = 0: zero mean spin in every direction
    res = squeezing_parameter(psi, 1.0, space)
    assert res.degenerate
    assert math.isnan(res.xi2)
    assert res.optimal_direction is None


def test_squeezing_rotation_invariant():
    S = 2.0
    psi, space = stretched(S)
    h = build_lmg_hamiltonian(0.0, 1.0, 1.0, 0.0, space).toarray()
    psit = expm(-1j * h * 0.1) @ psi
    base = squeezing_parameter(psit, S, space).xi2
    rng = np.random.default_rng(5)
    for _ in range(3):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        rot = rotate(psit, S, axis, rng.uniform(0, 2 * math.pi))
        assert squeezing_parameter(rot, S, space).xi2 == pytest.approx(base, abs=1e-10)


def test_squeezing_matches_direction_scan():
    # brute-force minimum of the transverse variance over a fine angle grid
    S = 1.5
    space = make_space([Dicke(S)])
    rng = np.random.default_rng(9)
    psi = rng.normal(size=space.dimension) + 1j * rng.normal(size=space.dimension)
    psi /= np.linalg.norm(psi)
    res = squeezing_parameter(psi, S, space)
    if res.degenerate:
        pytest.skip("random state happened to have zero mean spin")
    mats = [m.toarray() for m in dicke_spin_matrices(S)]
    mean = np.array([np.vdot(psi, m @ psi).real for m in mats])
    n = mean / np.linalg.norm(mean)
    ref = np.zeros(3)
    ref[int(np.argmin(np.abs(n)))] = 1.0
    e1 = np.cross(n, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    best = math.inf
    for th in np.linspace(0.0, math.pi, 4001):
        d = math.cos(th) * e1 + math.sin(th) * e2
        op = sum(c * m for c, m in zip(d, mats))
        v = op @ psi
        var = np.vdot(v, v).real - np.vdot(psi, v).real ** 2
        best = min(best, var)
    assert res.xi2 == pytest.approx(best / (S / 2.0), abs=1e-6)
    # the reported direction achieves the reported variance
    op = sum(c * m for c, m in zip(res.optimal_direction, mats))
    v = op @ psi
    var = np.vdot(v, v).real - np.vdot(psi, v).real ** 2
    assert var / (S / 2.0) == pytest.approx(res.xi2, abs=1e-10)


def test_density_matrix_agrees_with_pure_state():
    S = 1.0
    psi, space = stretched(S)
    h = build_lmg_hamiltonian(0.0, 1.0, 1.0, 0.0, space).toarray()
    psit = expm(-1j * h * 0.2) @ psi
    a = squeezing_parameter(psit, S, space)
    b = squeezing_parameter(np.outer(psit, psit.conj()), S, space)
    assert b.xi2 == pytest.approx(a.xi2, abs=1e-12)


def test_overlap_fidelity_phase_invariant():
    psi = np.array([1.0, 1j]) / math.sqrt(2)
    assert overlap_fidelity(psi, np.exp(0.7j) * psi) == pytest.approx(1.0)


# ---------------------------------------------------------------- two-mode

def test_tmss_delta_zero_for_product_coherent_state():
    space = make_space([Dicke(5.0), Dicke(5.0)])
    psi = space.basis_state((0, 0))  # both polarized along +z
    res = tmss_delta(psi, space)
    assert abs(res.delta_prime) < 1e-10
    assert res.mean_plus_z == pytest.approx(10.0)


def test_tmss_delta_negative_after_coupled_twisting():
    tc = TwoCavityParams.balanced(chi=1.0, J=0.1, S_L=2.0, S_R=2.0)
    space = make_space([Dicke(2.0), Dicke(2.0)])
    h = build_tmss_hamiltonian(tc, space).toarray()
    psi = expm(-1j * h * 0.4) @ space.basis_state((0, 0))
    assert tmss_delta(psi, space).delta_prime < 0.0


def test_entanglement_entropy_reference_values():
    product = np.kron([1.0, 0.0], [0.0, 1.0]).astype(complex)
    assert entanglement_entropy(product, 2, 2) == pytest.approx(0.0, abs=1e-12)
    bell = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex) / math.sqrt(2)
    assert entanglement_entropy(bell, 2, 2) == pytest.approx(math.log(2.0), abs=1e-12)
    rng = np.random.default_rng(3)
    psi = rng.normal(size=12) + 1j * rng.normal(size=12)
    psi /= np.linalg.norm(psi)
    ent = entanglement_entropy(psi, 3, 4)
    assert 0.0 <= ent <= math.log(3.0) + 1e-12


def test_reduced_density_matrices_share_spectrum():
    rng = np.random.default_rng(4)
    psi = rng.normal(size=12) + 1j * rng.normal(size=12)
    psi /= np.linalg.norm(psi)
    rho_l = reduced_density_matrix(psi, 3, 4, keep="L")
    rho_r = reduced_density_matrix(psi, 3, 4, keep="R")
    assert np.trace(rho_l).real == pytest.approx(1.0)
    assert np.trace(rho_r).real == pytest.approx(1.0)
    el = np.sort(np.linalg.eigvalsh(rho_l))[::-1]
    er = np.sort(np.linalg.eigvalsh(rho_r))[::-1]
    assert np.allclose(el[:3], er[:3], atol=1e-12)


def test_qfi_of_product_coherent_state():
    space = make_space([Dicke(5.0), Dicke(5.0)])
    psi = space.basis_state((0, 0))
    I = qfi_matrix(psi, space).I
    assert I[0, 0] == pytest.approx(20.0, abs=1e-10)
    assert I[1, 1] == pytest.approx(20.0, abs=1e-10)
    assert abs(I[0, 1]) < 1e-10
    assert np.allclose(I, I.T)


def test_qfi_symmetry_under_balanced_evolution():
    tc = TwoCavityParams.balanced(chi=1.0, J=0.1, S_L=2.0, S_R=2.0)
    space = make_space([Dicke(2.0), Dicke(2.0)])
    h = build_tmss_hamiltonian(tc, space).toarray()
    psi = expm(-1j * h * 0.5) @ space.basis_state((0, 0))
    I = qfi_matrix(psi, space).I
    assert abs(I[0, 1]) < 1e-8
    assert I[0, 0] == pytest.approx(I[1, 1], abs=1e-8)


# ---------------------------------------------------------------- estimates

def test_optimal_time_estimate():
    est = analytic_estimates(1e5, 0.0252)
    assert est["t_o"] == pytest.approx(2.4e-3, rel=0.02)


def test_effective_decay_estimate():
    est = analytic_estimates(100, 5.7e4, g=5e7, delta=1e8, gamma_d=5e6)
    assert est["gamma_eff"] == pytest.approx(1e8 * 5.7e4 / 5e7**2 * 5e6, rel=1e-12)
    assert est["gamma_eff_two_channel"] == 2.0 * est["gamma_eff"]
    assert est["t_decay_two_channel"] == est["t_decay"] / 2.0


def test_channel_minimum_parabola():
    times = np.linspace(0.0, 1.0, 21)
    vals = 2.0 + (times - 0.3) ** 2
    y, t = channel_minimum(times, vals)
    assert t == pytest.approx(0.3, abs=1e-12)
    assert y == pytest.approx(2.0, abs=1e-12)


def test_channel_minimum_edge_cases():
    times = np.linspace(0.0, 1.0, 5)
    y, t = channel_minimum(times, np.full(5, np.nan))
    assert math.isnan(y) and math.isnan(t)
    # minimum on the boundary is returned without refinement
    y, t = channel_minimum(times, times.copy())
    assert (y, t) == (0.0, 0.0)


def test_squeezing_summary():
    times = np.linspace(0.0, 1.0, 21)
    xi2 = 0.5 + (times - 0.4) ** 2
    series = TimeSeries(times=times, channels={"xi2": xi2})
    out = squeezing_summary(series)
    assert out["xi2_min"] == pytest.approx(0.5, abs=1e-12)
    assert out["t_at_min"] == pytest.approx(0.4, abs=1e-12)
    assert out["xi2_min_db"] == pytest.approx(10.0 * math.log10(0.5), abs=1e-9)
    with pytest.raises(ChannelMissing):
        squeezing_summary(TimeSeries(times=times, channels={"other": xi2}))
