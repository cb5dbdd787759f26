"""Physical parameter sets, effective coefficients, and Hamiltonian builders.

All rates are angular frequencies in rad/s; hbar = 1 throughout. Lindblad
rates returned by the dissipator builders multiply the standard dissipator
r * (O rho O^dag - {O^dag O, rho}/2), which is the same superoperator as
the -r/2 * (O^dag O rho + rho O^dag O - 2 O rho O^dag) form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.optimize import least_squares

from .errors import BadFactor, BasisMismatch, InconsistentParams, NoConvergence, RateNegative
from .operators import (
    PhasedOperator,
    boson_ops,
    collective_spin_ops,
    embed_factor,
    level_transition,
    single_atom_operator,
)
from .spaces import AtomLevels, Dicke, Fock, HilbertSpace

BRANCH_TOL = 1e-3  # default relative tolerance for the A/B branch consistency
CHI_MATCH_TOL = 1e-6


@dataclass(frozen=True)
class DriveParams:
    """Couplings, Rabi frequencies, detunings and the lock phase of the full model."""

    g1: float
    g2: float
    Omega1: float
    Omega2: float
    Omega_tilde1: float
    Omega_tilde2: float
    Delta1: float
    Delta2: float
    delta1: float
    delta2: float
    gamma1: float
    gamma2: float
    N: int
    phi: float = 0.0
    n_max: int = 4

    def __post_init__(self):
        vals = [
            self.g1, self.g2, self.Omega1, self.Omega2, self.Omega_tilde1,
            self.Omega_tilde2, self.Delta1, self.Delta2, self.delta1,
            self.delta2, self.gamma1, self.gamma2, self.phi,
        ]
        if not all(math.isfinite(v) for v in vals):
            raise InconsistentParams("all rates must be finite")
        for name, den in (
            ("Delta1 + delta1", self.Delta1 + self.delta1),
            ("Delta1 - gamma1", self.Delta1 - self.gamma1),
            ("Delta2 + delta2", self.Delta2 + self.delta2),
            ("Delta2 - gamma2", self.Delta2 - self.gamma2),
        ):
            if den == 0.0:
                raise InconsistentParams(f"denominator {name} is zero")
        if self.N < 1:
            raise InconsistentParams("N must be >= 1")


def fig2_params(N: int = 8, n_max: int = 4) -> DriveParams:
    """The symmetric reference parameter set used throughout the tests."""
    g = 5e7
    return DriveParams(
        g1=g, g2=g, Omega1=g, Omega2=g, Omega_tilde1=g, Omega_tilde2=g,
        Delta1=1e9, Delta2=1e9, delta1=1e8, delta2=1e8,
        gamma1=1.26e8, gamma2=1.26e8, N=N, n_max=n_max,
    )


@dataclass(frozen=True)
class EffectiveCoeffs:
    """Coefficients of the reduced spin-cavity and LMG Hamiltonians."""

    A: float
    B: float
    c_z: float
    c_z_prime: float
    delta: float
    gamma: float
    delta_prime: float
    gamma_prime: float
    c_x: float
    c_y: float
    chi: float
    mode: str
    branch_mismatch_A: float
    branch_mismatch_B: float


def effective_coeffs(
    p: DriveParams, mode: str = "approx", branch_tol: float = BRANCH_TOL
) -> EffectiveCoeffs:
    """Reduce the full drive parameters to the effective coefficients.

    In "approx" mode the twisting strengths use the bare detunings delta,
    gamma; in "exact" mode they use the cavity-shifted delta', gamma'.
    The two transition branches must yield the same A (and B) for the
    reduction to exist; their relative mismatch is checked against
    branch_tol.
    """
    if mode not in ("approx", "exact"):
        raise ValueError(f"unknown mode {mode!r}")
    if abs(p.delta1 - p.delta2) > 1e-9 * max(abs(p.delta1), abs(p.delta2), 1.0):
        raise InconsistentParams("reduction requires delta1 == delta2")
    if abs(p.gamma1 - p.gamma2) > 1e-9 * max(abs(p.gamma1), abs(p.gamma2), 1.0):
        raise InconsistentParams("reduction requires gamma1 == gamma2")
    delta, gamma = p.delta1, p.gamma1

    a1 = p.g1 * p.Omega_tilde1 * (1.0 / p.Delta1 + 1.0 / (p.Delta1 + p.delta1))
    a2 = p.g2 * p.Omega_tilde2 * (1.0 / p.Delta2 + 1.0 / (p.Delta2 + p.delta2))
    b1 = p.g1 * p.Omega1 * (1.0 / p.Delta1 + 1.0 / (p.Delta1 - p.gamma1))
    b2 = p.g2 * p.Omega2 * (1.0 / p.Delta2 + 1.0 / (p.Delta2 - p.gamma2))
    mis_a = abs(a1 - a2) / max(abs(a1), abs(a2), 1e-300)
    mis_b = abs(b1 - b2) / max(abs(b1), abs(b2), 1e-300)
    if mis_a > branch_tol:
        raise InconsistentParams(
            f"A branches disagree: {a1:.6e} vs {a2:.6e} (relative {mis_a:.2e})"
        )
    if mis_b > branch_tol:
        raise InconsistentParams(
            f"B branches disagree: {b1:.6e} vs {b2:.6e} (relative {mis_b:.2e})"
        )
    A = 0.5 * (a1 + a2)
    B = 0.5 * (b1 + b2)

    # Zeeman coefficients; the a^dag a part of c_z is evaluated at vacuum
    c_z = 0.25 * (
        p.Omega_tilde1**2 / (p.Delta1 + p.delta1)
        + p.Omega1**2 / (p.Delta1 - p.gamma1)
        - p.Omega_tilde2**2 / (p.Delta2 + p.delta2)
        - p.Omega2**2 / (p.Delta2 - p.gamma2)
    )
    c_z_prime = 0.25 * (
        p.Omega_tilde1 * p.Omega1 / (p.Delta1 + p.delta1)
        + p.Omega_tilde1 * p.Omega1 / (p.Delta1 - p.gamma1)
        + p.Omega_tilde2 * p.Omega2 / (p.Delta2 + p.delta2)
        + p.Omega_tilde2 * p.Omega2 / (p.Delta2 - p.gamma2)
    )

    shift = 0.5 * p.N * (p.g1**2 / p.Delta1 + p.g2**2 / p.Delta2)
    delta_prime = delta - shift
    gamma_prime = gamma + shift
    d_star = delta_prime if mode == "exact" else delta
    g_star = gamma_prime if mode == "exact" else gamma
    c_x = A**2 / (4.0 * d_star)
    c_y = B**2 / (4.0 * g_star)
    return EffectiveCoeffs(
        A=A, B=B, c_z=c_z, c_z_prime=c_z_prime, delta=delta, gamma=gamma,
        delta_prime=delta_prime, gamma_prime=gamma_prime, c_x=c_x, c_y=c_y,
        chi=0.5 * (c_x + c_y), mode=mode,
        branch_mismatch_A=mis_a, branch_mismatch_B=mis_b,
    )


@dataclass(frozen=True)
class RegimeReport:
    """Per-ratio virtual-excitation checks for the two elimination steps."""

    eq_detuning_ratios: dict  # label -> detuning / strongest drive
    eq_coupling_ratios: dict  # label -> detuning / strongest collective coupling
    threshold: float

    def min_detuning_ratio(self) -> float:
        return min(self.eq_detuning_ratios.values())

    def min_coupling_ratio(self) -> float:
        return min(self.eq_coupling_ratios.values())

    def detuning_pass(self) -> dict:
        return {k: v >= self.threshold for k, v in self.eq_detuning_ratios.items()}

    def coupling_pass(self) -> dict:
        return {k: v >= self.threshold for k, v in self.eq_coupling_ratios.items()}

    @property
    def passed(self) -> bool:
        return (
            self.min_detuning_ratio() >= self.threshold
            and self.min_coupling_ratio() >= self.threshold
        )


def validate_regime(
    p: DriveParams, coeffs: EffectiveCoeffs, threshold: float = 5.0
) -> RegimeReport:
    """Report how well the two adiabatic-elimination conditions are met."""
    drive_max = max(
        abs(p.g1), abs(p.g2), abs(p.Omega1), abs(p.Omega2),
        abs(p.Omega_tilde1), abs(p.Omega_tilde2), 1e-300,
    )
    det = {
        "|Delta1|": abs(p.Delta1),
        "|Delta2|": abs(p.Delta2),
        "|Delta1+delta|": abs(p.Delta1 + p.delta1),
        "|Delta2+delta|": abs(p.Delta2 + p.delta2),
        "|Delta1-gamma|": abs(p.Delta1 - p.gamma1),
        "|Delta2-gamma|": abs(p.Delta2 - p.gamma2),
    }
    coupling_max = max(p.N * abs(coeffs.A) / 4.0, p.N * abs(coeffs.B) / 4.0, 1e-300)
    cav = {
        "|delta|": abs(coeffs.delta),
        "|gamma|": abs(coeffs.gamma),
        "|delta+gamma|": abs(coeffs.delta + coeffs.gamma),
        "|delta-gamma|": abs(coeffs.delta - coeffs.gamma),
    }
    return RegimeReport(
        eq_detuning_ratios={k: v / drive_max for k, v in det.items()},
        eq_coupling_ratios={k: v / coupling_max for k, v in cav.items()},
        threshold=threshold,
    )


def _check_full_space(space: HilbertSpace) -> tuple[int, int]:
    if (
        len(space.factors) != 2
        or not isinstance(space.factors[0], AtomLevels)
        or space.factors[0].d != 4
        or not isinstance(space.factors[1], Fock)
    ):
        raise BadFactor("full model needs AtomLevels(4, N) x Fock(n_max)")
    return 0, 1


def _collective_transition(space: HilbertSpace, factor: int, a: int, b: int) -> sp.csr_matrix:
    """sum_j |a>_j<b| over all atoms of an AtomLevels factor."""
    atoms = space.factors[factor].n
    local = level_transition(space.factors[factor].d, a, b)
    total = single_atom_operator(space, factor, 0, local)
    for j in range(1, atoms):
        total = total + single_atom_operator(space, factor, j, local)
    return total


def build_full_hamiltonian(p: DriveParams, space: HilbertSpace) -> PhasedOperator:
    """Four-level rotating-frame Hamiltonian with all drive and cavity terms.

    Level indices 0..3 stand for the states |1>..|4>.
    """
    atom_f, fock_f = _check_full_space(space)
    if space.factors[atom_f].n != p.N:
        raise BadFactor(f"space hosts {space.factors[atom_f].n} atoms, params say N={p.N}")
    a_op, adag = boson_ops(space, fock_f)
    t14 = _collective_transition(space, atom_f, 0, 3)
    t23 = _collective_transition(space, atom_f, 1, 2)
    t13_ad = _collective_transition(space, atom_f, 0, 2) @ adag
    t24_ad = _collective_transition(space, atom_f, 1, 3) @ adag

    eip = np.exp(1j * p.phi)
    terms = []

    def add(amp, freq, op):
        if amp == 0:
            return
        terms.append((amp, freq, op))
        terms.append((np.conj(amp), -freq, op.conj().T.tocsr()))

    add(0.5 * eip * p.Omega_tilde2, -(p.Delta2 + p.delta2), t14)
    add(-0.5j * eip * p.Omega2, -(p.Delta2 - p.gamma2), t14)
    add(0.5 * np.conj(eip) * p.Omega_tilde1, -(p.Delta1 + p.delta1), t23)
    add(0.5j * np.conj(eip) * p.Omega1, -(p.Delta1 - p.gamma1), t23)
    add(p.g1, -p.Delta1, t13_ad)
    add(p.g2, -p.Delta2, t24_ad)
    return PhasedOperator(space, terms)


def _spin_and_fock(space: HilbertSpace) -> tuple[int, int]:
    spin_f = fock_f = None
    for i, f in enumerate(space.factors):
        if isinstance(f, (Dicke, AtomLevels)) and spin_f is None:
            spin_f = i
        elif isinstance(f, Fock) and fock_f is None:
            fock_f = i
    if spin_f is None or fock_f is None or len(space.factors) != 2:
        raise BadFactor("intermediate model needs a spin factor and one Fock factor")
    return spin_f, fock_f


def build_intermediate_hamiltonian(
    coeffs: EffectiveCoeffs, phi: float, space: HilbertSpace
) -> PhasedOperator:
    """Spin-cavity Hamiltonian after eliminating the atomic excited states."""
    spin_f, fock_f = _spin_and_fock(space)
    sx, sy, sz = collective_spin_ops(space, spin_f)
    _, adag = boson_ops(space, fock_f)
    x_phi = (sx * np.cos(phi) - sy * np.sin(phi)).tocsr()
    y_phi = (sx * np.sin(phi) + sy * np.cos(phi)).tocsr()
    use_primed = coeffs.mode == "exact"
    d_star = coeffs.delta_prime if use_primed else coeffs.delta
    g_star = coeffs.gamma_prime if use_primed else coeffs.gamma
    w_zeeman = coeffs.delta + coeffs.gamma

    terms = []
    if coeffs.c_z != 0.0:
        terms.append((coeffs.c_z, 0.0, sz))
    if coeffs.c_z_prime != 0.0:
        # -c'_z sin(wt) S_z expanded into its two phase components
        terms.append((0.5j * coeffs.c_z_prime, w_zeeman, sz))
        terms.append((-0.5j * coeffs.c_z_prime, -w_zeeman, sz))

    def add(amp, freq, op):
        op = op.tocsr()
        terms.append((amp, freq, op))
        terms.append((np.conj(amp), -freq, op.conj().T.tocsr()))

    add(-0.5 * coeffs.A, d_star, x_phi @ adag)
    add(-0.5 * coeffs.B, -g_star, y_phi @ adag)
    return PhasedOperator(space, terms)


def build_lmg_hamiltonian(
    c_z: float,
    c_x: float,
    c_y: float,
    phi: float,
    space: HilbertSpace,
    which_factor: int = 0,
) -> sp.csr_matrix:
    """H = c_z S_z - c_x X_phi^2 + c_y Y_phi^2 with phi-rotated quadratures.

    The one-axis-twisting comparator chi * S_x^2 is the special case
    build_lmg_hamiltonian(0, -chi, 0, 0, space).
    """
    sx, sy, sz = collective_spin_ops(space, which_factor)
    x_phi = (sx * np.cos(phi) - sy * np.sin(phi)).tocsr()
    y_phi = (sx * np.sin(phi) + sy * np.cos(phi)).tocsr()
    h = c_z * sz - c_x * (x_phi @ x_phi) + c_y * (y_phi @ y_phi)
    h = sp.csr_matrix(h)
    h.sum_duplicates()
    h.sort_indices()
    return h


@dataclass(frozen=True)
class DissipationParams:
    """Cavity loss, atomic decay, and the effective single-spin rate multipliers."""

    kappa: float = 0.0
    gamma_d: float = 0.0
    a_z: float = 0.0
    a_plus: float = 0.0
    a_minus: float = 0.0

    def __post_init__(self):
        for name in ("kappa", "gamma_d", "a_z", "a_plus", "a_minus"):
            if getattr(self, name) < 0:
                raise RateNegative(f"{name} must be >= 0")


def effective_dissipation_rates(p: DriveParams) -> tuple[float, float, float]:
    """(a_z, a_plus, a_minus) multipliers of gamma_d after eliminating |3>, |4>."""
    u1 = p.Omega1**2 / (p.Delta1 - p.gamma1) ** 2
    v1 = p.Omega_tilde1**2 / (p.Delta1 + p.delta1) ** 2
    u2 = p.Omega2**2 / (p.Delta2 - p.gamma2) ** 2
    v2 = p.Omega_tilde2**2 / (p.Delta2 + p.delta2) ** 2
    a_plus = 0.25 * (u1 + v1)
    a_minus = 0.25 * (u2 + v2)
    return a_plus + a_minus, a_plus, a_minus


def dissipation_from_drive(p: DriveParams, kappa: float, gamma_d: float) -> DissipationParams:
    a_z, a_plus, a_minus = effective_dissipation_rates(p)
    return DissipationParams(kappa=kappa, gamma_d=gamma_d, a_z=a_z, a_plus=a_plus, a_minus=a_minus)


def full_jump_operators(space: HilbertSpace, d: DissipationParams):
    """Cavity jump plus the 4N spontaneous-decay jumps of the full model."""
    atom_f, fock_f = _check_full_space(space)
    a_op, _ = boson_ops(space, fock_f)
    jumps = [(a_op, d.kappa)]
    n_atoms = space.factors[atom_f].n
    dloc = space.factors[atom_f].d
    for k in range(n_atoms):
        for lo, hi in ((0, 2), (1, 2), (0, 3), (1, 3)):
            jumps.append(
                (single_atom_operator(space, atom_f, k, level_transition(dloc, lo, hi)), d.gamma_d)
            )
    return jumps


def effective_dissipators(
    p: DriveParams,
    d: DissipationParams,
    space: HilbertSpace,
    which_factor: int = 0,
    include_individual: bool = True,
):
    """Dissipation channels of the cavity-eliminated master equation.

    Collective (S_x, S_y) channels live on any spin-hosting factor; the
    per-atom sigma channels break permutation symmetry and require an
    AtomLevels factor.
    """
    coeffs = effective_coeffs(p, mode="approx")
    channels = []
    if d.kappa > 0:
        sx, sy, _ = collective_spin_ops(space, which_factor)
        channels.append((sx, d.kappa * coeffs.A**2 / (4.0 * coeffs.delta**2)))
        channels.append((sy, d.kappa * coeffs.B**2 / (4.0 * coeffs.gamma**2)))
    if d.gamma_d > 0 and include_individual:
        factor = space.factors[which_factor]
        if not isinstance(factor, AtomLevels):
            raise BasisMismatch(
                "individual sigma channels need an AtomLevels basis, not a Dicke sector"
            )
        dloc = factor.d
        sz_loc = level_transition(dloc, 0, 0) - level_transition(dloc, 1, 1)
        sp_loc = level_transition(dloc, 0, 1)
        sm_loc = level_transition(dloc, 1, 0)
        for k in range(factor.n):
            channels.append(
                (single_atom_operator(space, which_factor, k, sz_loc), d.gamma_d * d.a_z)
            )
            channels.append(
                (single_atom_operator(space, which_factor, k, sm_loc), d.gamma_d * d.a_minus)
            )
            channels.append(
                (single_atom_operator(space, which_factor, k, sp_loc), d.gamma_d * d.a_plus)
            )
    return [(op, rate) for op, rate in channels if rate > 0]


@dataclass(frozen=True)
class TwoCavityParams:
    """Effective parameters of the coupled two-cavity system.

    delta and gamma are the canonical positive detunings; the left cavity
    carries (delta_L, gamma_L) = (delta, -gamma) and the right cavity
    (-delta, gamma), which is the sign pattern required for opposite
    z-quadratic coefficients.
    """

    A: float
    B: float
    delta: float
    gamma: float
    J_tilde: float
    S_L: float
    S_R: float
    n_max: int = 2

    def __post_init__(self):
        if self.delta <= 0 or self.gamma <= 0:
            raise InconsistentParams("canonical detunings must satisfy delta > 0, gamma > 0")
        cx = self.A**2 / (4 * self.delta)
        cy = self.B**2 / (4 * self.gamma)
        if abs(cx - cy) > CHI_MATCH_TOL * max(abs(cx), abs(cy), 1e-300):
            raise InconsistentParams(
                f"A^2/(4 delta) = {cx:.6e} and B^2/(4 gamma) = {cy:.6e} must agree"
            )

    @property
    def chi(self) -> float:
        return self.A**2 / (4 * self.delta)

    @property
    def J(self) -> float:
        return self.J_tilde / math.sqrt(self.delta * self.gamma)

    @property
    def Delta_omega(self) -> float:
        return self.delta + self.gamma

    @classmethod
    def from_per_cavity(
        cls, A, B, delta_L, delta_R, gamma_L, gamma_R, J_tilde, S_L, S_R, n_max=2
    ) -> "TwoCavityParams":
        if delta_L * delta_R >= 0 or gamma_L * gamma_R >= 0:
            raise InconsistentParams(
                "z-quadratic coefficients would share a sign; detunings of the two "
                "cavities must have opposite signs"
            )
        if delta_L <= 0 or gamma_R <= 0:
            raise InconsistentParams("need delta_L = -delta_R > 0 and gamma_R = -gamma_L > 0")
        if abs(delta_L + delta_R) > 1e-9 * abs(delta_L) or abs(gamma_L + gamma_R) > 1e-9 * abs(
            gamma_R
        ):
            raise InconsistentParams("need delta_L = -delta_R and gamma_L = -gamma_R")
        return cls(
            A=A, B=B, delta=delta_L, gamma=gamma_R, J_tilde=J_tilde,
            S_L=S_L, S_R=S_R, n_max=n_max,
        )

    @classmethod
    def balanced(cls, chi, J, S_L, S_R, delta=1.0, gamma=1.0, n_max=2) -> "TwoCavityParams":
        """Parameters realizing given dimensionless chi and J directly."""
        return cls(
            A=math.sqrt(4 * delta * chi), B=math.sqrt(4 * gamma * chi),
            delta=delta, gamma=gamma, J_tilde=J * math.sqrt(delta * gamma),
            S_L=S_L, S_R=S_R, n_max=n_max,
        )


def _check_two_cavity_space(space: HilbertSpace, tc: TwoCavityParams):
    ok = (
        len(space.factors) == 4
        and isinstance(space.factors[0], Dicke)
        and isinstance(space.factors[1], Fock)
        and isinstance(space.factors[2], Dicke)
        and isinstance(space.factors[3], Fock)
    )
    if not ok:
        raise BadFactor("two-cavity model needs Dicke x Fock x Dicke x Fock")
    if space.factors[0].S != tc.S_L or space.factors[2].S != tc.S_R:
        raise BadFactor("space Dicke sectors do not match S_L, S_R")


def build_two_cavity_hamiltonian(tc: TwoCavityParams, space: HilbertSpace) -> PhasedOperator:
    """Rotating-frame two-cavity Hamiltonian with photon tunneling."""
    _check_two_cavity_space(space, tc)
    slx, sly, _ = collective_spin_ops(space, 0)
    srx, sry, _ = collective_spin_ops(space, 2)
    a_l, adag_l = boson_ops(space, 1)
    a_r, adag_r = boson_ops(space, 3)

    terms = []

    def add(amp, freq, op):
        if amp == 0:
            return
        op = op.tocsr()
        terms.append((amp, freq, op))
        terms.append((np.conj(amp), -freq, op.conj().T.tocsr()))

    # local terms with delta_L = delta, gamma_L = -gamma, delta_R = -delta, gamma_R = gamma
    add(-0.5 * tc.A, tc.delta, slx @ adag_l)
    add(-0.5 * tc.B, tc.gamma, sly @ adag_l)
    add(-0.5 * tc.A, -tc.delta, srx @ adag_r)
    add(-0.5 * tc.B, -tc.gamma, sry @ adag_r)
    add(-tc.J_tilde, tc.Delta_omega, adag_l @ a_r)
    return PhasedOperator(space, terms)


def build_tmss_hamiltonian(tc: TwoCavityParams, space: HilbertSpace) -> sp.csr_matrix:
    """Effective two-mode Hamiltonian after eliminating both cavity modes."""
    if (
        len(space.factors) != 2
        or not isinstance(space.factors[0], Dicke)
        or not isinstance(space.factors[1], Dicke)
    ):
        raise BadFactor("TMSS model needs Dicke x Dicke")
    if space.factors[0].S != tc.S_L or space.factors[1].S != tc.S_R:
        raise BadFactor("space Dicke sectors do not match S_L, S_R")
    slx, sly, slz = collective_spin_ops(space, 0)
    srx, sry, srz = collective_spin_ops(space, 1)
    chi, J = tc.chi, tc.J
    h = chi * (slz @ slz - srz @ srz) + 2 * J * chi * (slx @ sry + sly @ srx)
    h = sp.csr_matrix(h)
    h.sum_duplicates()
    h.sort_indices()
    return h


_SOLVE_FREE = (
    "Delta1", "Delta2", "Omega1", "Omega2", "Omega_tilde1", "Omega_tilde2",
    "delta1", "delta2", "gamma1", "gamma2",
)


@dataclass(frozen=True)
class ExperimentalConstraints:
    """Targets for the parameter-constraint solver."""

    start: DriveParams
    delta_splitting: float | None = None  # target Delta1 - Delta2
    chi_target: float | None = None
    enforce_cz_zero: bool = True
    enforce_cx_equals_cy: bool = True
    fixed: tuple = ()
    residual_tol: float = 1e-8
    max_iter: int = 10_000


@dataclass(frozen=True)
class SolveResult:
    params: DriveParams
    residuals: dict
    max_residual: float


def _constraint_residuals(p: DriveParams, c: ExperimentalConstraints) -> dict:
    a1 = p.g1 * p.Omega_tilde1 * (1.0 / p.Delta1 + 1.0 / (p.Delta1 + p.delta1))
    a2 = p.g2 * p.Omega_tilde2 * (1.0 / p.Delta2 + 1.0 / (p.Delta2 + p.delta2))
    b1 = p.g1 * p.Omega1 * (1.0 / p.Delta1 + 1.0 / (p.Delta1 - p.gamma1))
    b2 = p.g2 * p.Omega2 * (1.0 / p.Delta2 + 1.0 / (p.Delta2 - p.gamma2))
    res = {
        "A_branch": (a1 - a2) / max(abs(a1), abs(a2), 1e-300),
        "B_branch": (b1 - b2) / max(abs(b1), abs(b2), 1e-300),
        "delta_match": (p.delta1 - p.delta2) / max(abs(p.delta1), abs(p.delta2), 1e-300),
        "gamma_match": (p.gamma1 - p.gamma2) / max(abs(p.gamma1), abs(p.gamma2), 1e-300),
    }
    c_z = 0.25 * (
        p.Omega_tilde1**2 / (p.Delta1 + p.delta1)
        + p.Omega1**2 / (p.Delta1 - p.gamma1)
        - p.Omega_tilde2**2 / (p.Delta2 + p.delta2)
        - p.Omega2**2 / (p.Delta2 - p.gamma2)
    )
    A = 0.5 * (a1 + a2)
    B = 0.5 * (b1 + b2)
    delta = 0.5 * (p.delta1 + p.delta2)
    gamma = 0.5 * (p.gamma1 + p.gamma2)
    c_x = A**2 / (4 * delta) if delta != 0 else math.inf
    c_y = B**2 / (4 * gamma) if gamma != 0 else math.inf
    scale_c = max(abs(c_x), abs(c_y), 1e-300)
    if c.enforce_cz_zero:
        res["c_z"] = c_z / max(abs(c.start.Omega1**2 / c.start.Delta1), 1e-300)
    if c.enforce_cx_equals_cy:
        res["cx_cy"] = (c_x - c_y) / scale_c
    if c.delta_splitting is not None:
        # fixed scale: normalizing by the live Delta1 would let the solver
        # shrink this residual by inflating the detuning instead of meeting it
        res["splitting"] = (p.Delta1 - p.Delta2 - c.delta_splitting) / max(
            abs(c.delta_splitting), abs(c.start.Delta1), 1e-300
        )
    if c.chi_target is not None:
        res["chi"] = (c_x - c.chi_target) / max(abs(c.chi_target), 1e-300)
    return res


def solve_experimental_params(constraints: ExperimentalConstraints) -> SolveResult:
    """Least-squares fit of the ten adjustable drive parameters to the targets.

    Deterministic damped least squares from the given starting point; raises
    NoConvergence when the residual stays above tolerance.
    """
    free = [n for n in _SOLVE_FREE if n not in constraints.fixed]
    p0 = constraints.start
    x0 = np.array([getattr(p0, n) for n in free], dtype=float)
    scales = np.maximum(np.abs(x0), 1.0)

    def to_params(x) -> DriveParams:
        return replace(p0, **{n: float(v * s) for n, v, s in zip(free, x, scales)})

    def fun(x):
        res = _constraint_residuals(to_params(x), constraints)
        return np.array(list(res.values()))

    n_res = len(_constraint_residuals(p0, constraints))
    method = "lm" if n_res >= len(free) else "trf"
    sol = least_squares(
        fun, x0 / scales, method=method, xtol=1e-15, ftol=1e-15, gtol=1e-15,
        max_nfev=constraints.max_iter,
    )
    params = to_params(sol.x)
    residuals = _constraint_residuals(params, constraints)
    worst = max(abs(v) for v in residuals.values())
    if worst > constraints.residual_tol:
        raise NoConvergence(
            f"constraint residual {worst:.3e} above tolerance {constraints.residual_tol:.1e}"
        )
    return SolveResult(params=params, residuals=residuals, max_residual=worst)
