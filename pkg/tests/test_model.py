import math

import numpy as np
import pytest

from tactsim.errors import BadFactor, BasisMismatch, InconsistentParams, NoConvergence
from tactsim.model import (
    DissipationParams,
    DriveParams,
    ExperimentalConstraints,
    TwoCavityParams,
    build_full_hamiltonian,
    build_intermediate_hamiltonian,
    build_lmg_hamiltonian,
    build_tmss_hamiltonian,
    build_two_cavity_hamiltonian,
    dissipation_from_drive,
    effective_coeffs,
    effective_dissipation_rates,
    effective_dissipators,
    fig2_params,
    full_jump_operators,
    solve_experimental_params,
    validate_regime,
)
from tactsim.operators import check_hermitian, collective_spin_ops, dicke_spin_matrices
from tactsim.spaces import AtomLevels, Dicke, Fock, make_space

from dataclasses import replace


# ---------------------------------------------------------------- coefficients

def test_reference_coupling_value():
    # g Omega (1/Delta + 1/(Delta + delta)) for the reference drive set
    c = effective_coeffs(fig2_params())
    assert c.A == pytest.approx(4.7727e6, rel=1e-3)
    assert c.A / c.B == pytest.approx(
        (1e-9 + 1 / 1.1e9) / (1e-9 + 1 / 0.874e9), rel=1e-12
    )


def test_reference_twisting_strength():
    c = effective_coeffs(fig2_params())
    assert c.chi == pytest.approx(5.69e4, rel=5e-3)


def test_symmetric_drive_cancels_linear_zeeman():
    c = effective_coeffs(fig2_params())
    # zero up to floating-point cancellation of the two cavity branches
    assert abs(c.c_z) < 1e-12 * abs(c.chi)
    # oscillating Zeeman coefficient from independent arithmetic
    p = fig2_params()
    expected = 0.25 * p.Omega1 * p.Omega_tilde1 * (
        1 / (p.Delta1 + p.delta1) + 1 / (p.Delta1 - p.gamma1)
        + 1 / (p.Delta2 + p.delta2) + 1 / (p.Delta2 - p.gamma2)
    )
    assert c.c_z_prime == pytest.approx(expected, rel=1e-12)


def test_exact_mode_shifted_detunings():
    p = fig2_params(N=8)
    c = effective_coeffs(p, mode="exact")
    shift = 8 * p.g1**2 / p.Delta1
    assert c.delta_prime == pytest.approx(1e8 - shift)
    assert c.gamma_prime == pytest.approx(1.26e8 + shift)
    assert c.c_x == pytest.approx(c.A**2 / (4 * c.delta_prime), rel=1e-12)


def test_exact_approaches_approx_for_weak_cavity_coupling():
    p = fig2_params()
    gaps = []
    for scale in (1.0, 0.1, 0.01):
        q = replace(p, g1=p.g1 * scale, g2=p.g2 * scale)
        ca = effective_coeffs(q, mode="approx")
        ce = effective_coeffs(q, mode="exact")
        gaps.append(abs(ce.c_x - ca.c_x) / ca.c_x)
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3


def test_branch_mismatch_rejected():
    p = replace(fig2_params(), g1=6e7)
    with pytest.raises(InconsistentParams):
        effective_coeffs(p)
    # a loose tolerance admits the same parameters
    effective_coeffs(p, branch_tol=0.5)


def test_unequal_cavity_detunings_rejected():
    with pytest.raises(InconsistentParams):
        effective_coeffs(replace(fig2_params(), delta1=1e8, delta2=2e8))


def test_zero_denominator_rejected():
    with pytest.raises(InconsistentParams):
        DriveParams(
            g1=1, g2=1, Omega1=1, Omega2=1, Omega_tilde1=1, Omega_tilde2=1,
            Delta1=1.0, Delta2=1.0, delta1=-1.0, delta2=-1.0,
            gamma1=0.5, gamma2=0.5, N=2,
        )


# ---------------------------------------------------------------- regime report

def test_regime_report_reference_ratios():
    p = fig2_params(N=8)
    rep = validate_regime(p, effective_coeffs(p))
    assert rep.eq_detuning_ratios["|Delta1|"] == pytest.approx(20.0)
    assert rep.detuning_pass()["|Delta1|"]
    assert rep.eq_coupling_ratios["|delta|"] > 5.0
    # the delta - gamma beat is the marginal scale of this parameter set
    assert rep.eq_coupling_ratios["|delta-gamma|"] < 5.0
    assert not rep.passed


def test_regime_report_passes_for_few_atoms():
    p = fig2_params(N=2)
    rep = validate_regime(p, effective_coeffs(p))
    assert rep.passed


# ---------------------------------------------------------------- dissipation

def test_effective_decay_multipliers():
    p = fig2_params()
    a_z, a_plus, a_minus = effective_dissipation_rates(p)
    expected = 0.25 * (
        (p.Omega1 / (p.Delta1 - p.gamma1)) ** 2
        + (p.Omega_tilde1 / (p.Delta1 + p.delta1)) ** 2
    )
    assert a_plus == pytest.approx(expected, rel=1e-12)
    assert a_plus == a_minus
    assert a_z == a_plus + a_minus


def test_negative_rate_rejected():
    with pytest.raises(Exception):
        DissipationParams(kappa=-1.0)


def test_full_jump_operators_structure():
    N = 3
    space = make_space([AtomLevels(4, N), Fock(1)])
    d = DissipationParams(kappa=1.0, gamma_d=2.0)
    jumps = full_jump_operators(space, d)
    assert len(jumps) == 1 + 4 * N
    total = None
    for op, rate in jumps[1:]:
        assert rate == 2.0
        assert (op @ op).nnz == 0  # lowering operators are nilpotent
        term = (op.conj().T @ op)
        total = term if total is None else total + term
    # sum L^dag L = 2 (P_3 + P_4): two decay paths out of each excited level
    diag = np.real(total.todense().diagonal()).A1 if hasattr(total.todense(), "A1") else np.real(np.asarray(total.todense()).diagonal())
    for flat in range(space.dimension):
        multi = space.multi_index(flat)
        n_excited = sum(
            1 for k in range(N)
            if (multi[0] // 4**(N - 1 - k)) % 4 in (2, 3)
        )
        assert diag[flat] == pytest.approx(2.0 * n_excited)


def test_effective_dissipators_rates_and_basis():
    p = fig2_params(N=4)
    d = dissipation_from_drive(p, kappa=3.0, gamma_d=0.0)
    space = make_space([Dicke(2.0)])
    chans = effective_dissipators(p, d, space, include_individual=False)
    c = effective_coeffs(p)
    rates = sorted(rate for _, rate in chans)
    assert rates == sorted(
        [3.0 * c.A**2 / (4 * c.delta**2), 3.0 * c.B**2 / (4 * c.gamma**2)]
    )
    d2 = dissipation_from_drive(p, kappa=0.0, gamma_d=1.0)
    with pytest.raises(BasisMismatch):
        effective_dissipators(p, d2, space, include_individual=True)
    space_a = make_space([AtomLevels(2, 4)])
    chans2 = effective_dissipators(p, d2, space_a, include_individual=True)
    assert len(chans2) == 3 * 4


# ---------------------------------------------------------------- Hamiltonians

def test_full_hamiltonian_hermitian():
    p = fig2_params(N=2, n_max=1)
    space = make_space([AtomLevels(4, 2), Fock(1)])
    H = build_full_hamiltonian(p, space)
    for t in (0.0, 1.3e-9, 7.7e-8):
        assert check_hermitian(H.matrix(t))


def test_full_hamiltonian_single_atom_elements():
    p = fig2_params(N=1, n_max=1)
    space = make_space([AtomLevels(4, 1), Fock(1)])
    H = build_full_hamiltonian(p, space)
    for t in (0.0, 3.1e-9):
        m = H.matrix(t).toarray()
        drive = 0.5 * p.Omega_tilde2 * np.exp(-1j * (p.Delta2 + p.delta2) * t) \
            - 0.5j * p.Omega2 * np.exp(-1j * (p.Delta2 - p.gamma2) * t)
        assert m[space.index((0, 0)), space.index((3, 0))] == pytest.approx(drive)
        cav = p.g1 * np.exp(-1j * p.Delta1 * t)
        assert m[space.index((0, 1)), space.index((2, 0))] == pytest.approx(cav)
        # no direct coupling between the two ground levels
        assert m[space.index((0, 0)), space.index((1, 0))] == 0


def test_intermediate_hamiltonian_phase_structure():
    p = fig2_params(N=2)
    c = effective_coeffs(p)
    space = make_space([Dicke(1.0), Fock(1)])
    H = build_intermediate_hamiltonian(c, 0.0, space)
    for t in (0.0, 2e-9, 5e-8):
        assert check_hermitian(H.matrix(t))
    # diagonal carries -c'_z sin((delta + gamma) t) S_z
    t = 3e-9
    m = H.matrix(t).toarray()
    i_top = space.index((0, 0))  # m = +1, vacuum
    expected = -c.c_z_prime * math.sin((c.delta + c.gamma) * t) * 1.0
    assert m[i_top, i_top] == pytest.approx(expected, rel=1e-9)


def test_lmg_spin1_twisting_matrix():
    chi = 0.7
    space = make_space([Dicke(1.0)])
    h = build_lmg_hamiltonian(0.0, chi, chi, 0.0, space).toarray()
    expected = np.zeros((3, 3))
    expected[0, 2] = expected[2, 0] = -chi
    assert np.allclose(h, expected, atol=1e-12)


def test_lmg_oat_special_case():
    chi = 0.9
    space = make_space([Dicke(1.5)])
    h = build_lmg_hamiltonian(0.0, -chi, 0.0, 0.0, space).toarray()
    sx = dicke_spin_matrices(1.5)[0].toarray()
    assert np.allclose(h, chi * sx @ sx, atol=1e-12)


@pytest.mark.parametrize("S", [1.0, 2.0, 3.5])
def test_twisting_spectrum_symmetric_about_zero(S):
    space = make_space([Dicke(S)])
    h = build_lmg_hamiltonian(0.0, 1.0, 1.0, 0.0, space).toarray()
    evals = np.sort(np.linalg.eigvalsh(h))
    assert np.allclose(evals, -evals[::-1], atol=1e-10)


def test_twisting_conserves_parity():
    space = make_space([Dicke(3.0)])
    h = build_lmg_hamiltonian(0.0, 1.0, 1.0, 0.0, space).toarray()
    dim = h.shape[0]
    for i in range(dim):
        for j in range(dim):
            if (i - j) % 2 == 1:
                assert h[i, j] == 0


def test_phi_rotation_is_a_similarity():
    space = make_space([Dicke(2.0)])
    h0 = build_lmg_hamiltonian(0.3, 1.0, 0.5, 0.0, space).toarray()
    h1 = build_lmg_hamiltonian(0.3, 1.0, 0.5, 0.8, space).toarray()
    assert np.allclose(
        np.sort(np.linalg.eigvalsh(h0)), np.sort(np.linalg.eigvalsh(h1)), atol=1e-10
    )


# ---------------------------------------------------------------- two cavities

def test_two_cavity_sign_pattern_enforced():
    with pytest.raises(InconsistentParams):
        TwoCavityParams.from_per_cavity(
            A=1.0, B=1.0, delta_L=1.0, delta_R=1.0, gamma_L=-1.0, gamma_R=1.0,
            J_tilde=0.1, S_L=1, S_R=1,
        )
    tc = TwoCavityParams.from_per_cavity(
        A=2.0, B=2.0, delta_L=1.0, delta_R=-1.0, gamma_L=-1.0, gamma_R=1.0,
        J_tilde=0.1, S_L=1, S_R=1,
    )
    assert tc.chi == pytest.approx(1.0)
    assert tc.Delta_omega == pytest.approx(2.0)


def test_two_cavity_chi_consistency():
    with pytest.raises(InconsistentParams):
        TwoCavityParams(A=1.0, B=2.0, delta=1.0, gamma=1.0, J_tilde=0.0, S_L=1, S_R=1)


def test_balanced_constructor():
    tc = TwoCavityParams.balanced(chi=0.5, J=0.2, S_L=2, S_R=3)
    assert tc.chi == pytest.approx(0.5)
    assert tc.J == pytest.approx(0.2)


def test_two_cavity_hamiltonian_hermitian():
    tc = TwoCavityParams.balanced(chi=1.0, J=0.1, S_L=1, S_R=1, n_max=1)
    space = make_space([Dicke(1.0), Fock(1), Dicke(1.0), Fock(1)])
    H = build_two_cavity_hamiltonian(tc, space)
    for t in (0.0, 0.3):
        assert check_hermitian(H.matrix(t))


def test_tmss_hamiltonian_constant_shift_identity():
    # the x/y-quadratic form differs from the z-quadratic form only by
    # chi * (S_L (S_L + 1) - S_R (S_R + 1)) via the Casimir identity
    tc = TwoCavityParams.balanced(chi=0.8, J=0.15, S_L=1.0, S_R=1.5)
    space = make_space([Dicke(1.0), Dicke(1.5)])
    h = build_tmss_hamiltonian(tc, space).toarray()
    slx, sly, _ = collective_spin_ops(space, 0)
    srx, sry, _ = collective_spin_ops(space, 1)
    chi, J = tc.chi, tc.J
    h_alt = (
        -chi * (slx @ slx + sly @ sly) + chi * (srx @ srx + sry @ sry)
        + 2 * J * chi * (slx @ sry + sly @ srx)
    ).toarray()
    shift = chi * (1.0 * 2.0 - 1.5 * 2.5)
    e1 = np.sort(np.linalg.eigvalsh(h))
    e2 = np.sort(np.linalg.eigvalsh(h_alt))
    assert np.allclose(e1 - e2, shift, atol=1e-10)


def test_tmss_space_mismatch():
    tc = TwoCavityParams.balanced(chi=1.0, J=0.1, S_L=1, S_R=1)
    with pytest.raises(BadFactor):
        build_tmss_hamiltonian(tc, make_space([Dicke(1.0), Dicke(2.0)]))


# ---------------------------------------------------------------- solver

def test_solve_params_feasible():
    start = replace(fig2_params(), Delta2=0.98e9, Omega2=5.2e7)
    res = solve_experimental_params(
        ExperimentalConstraints(
            start=start, delta_splitting=2e7, chi_target=5.69e4,
            fixed=("delta1", "delta2", "gamma1", "gamma2"),
            residual_tol=5e-6,
        )
    )
    assert res.max_residual < 5e-6
    p = res.params
    # splitting residual is scaled by Delta1 ~ 1e9, so 5e-6 allows ~5 kHz
    assert p.Delta1 - p.Delta2 == pytest.approx(2e7, rel=1e-3)
    c = effective_coeffs(p)
    assert c.c_x == pytest.approx(5.69e4, rel=1e-4)
    assert abs(c.c_z) < 1e-3 * abs(c.c_x)


def test_solve_params_contradiction_raises():
    # c_x = A^2 / (4 delta) > 0 with the detunings pinned positive, so a
    # negative twisting target is unreachable
    with pytest.raises(NoConvergence):
        solve_experimental_params(
            ExperimentalConstraints(
                start=fig2_params(), chi_target=-5.69e4,
                fixed=("delta1", "delta2", "gamma1", "gamma2"),
            )
        )
