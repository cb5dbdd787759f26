"""Cavity-mediated spin-squeezing simulator.

Simulates phase-locked atom-photon driving schemes that realize two-axis
counter-twisting, one-axis twisting, and two-mode squeezing dynamics, from
the full four-level atom-cavity model down to the effective collective-spin
Hamiltonians, with matched dissipation at every level of description.
"""

__version__ = "1.0.0"

from .errors import (
    BadFactor,
    BasisMismatch,
    ChannelMissing,
    DegenerateMeanSpin,
    DimensionMismatch,
    DimensionOverflow,
    InconsistentParams,
    NoConvergence,
    ParseError,
    RateNegative,
    StepSizeTooLarge,
    TactsimError,
    TraceDrift,
    ValidationError,
)
from .spaces import AtomLevels, Dicke, Fock, HilbertSpace, make_space
from .operators import (
    PairSpinOps,
    PhasedOperator,
    boson_ops,
    collective_spin_ops,
    dicke_spin_matrices,
    pair_spin_ops,
)
from .model import (
    DissipationParams,
    DriveParams,
    EffectiveCoeffs,
    ExperimentalConstraints,
    TwoCavityParams,
    build_full_hamiltonian,
    build_intermediate_hamiltonian,
    build_lmg_hamiltonian,
    build_tmss_hamiltonian,
    build_two_cavity_hamiltonian,
    effective_coeffs,
    effective_dissipators,
    fig2_params,
    full_jump_operators,
    solve_experimental_params,
    validate_regime,
)
from .dynamics import (
    IntegratorConfig,
    TimeSeries,
    evolve_lindblad,
    evolve_mcwf,
    evolve_schrodinger,
)
from .observables import (
    SpinChannels,
    TmssChannels,
    analytic_estimates,
    channel_minimum,
    entanglement_entropy,
    overlap_fidelity,
    qfi_matrix,
    squeezing_from_moments,
    squeezing_parameter,
    squeezing_summary,
    tmss_delta,
)
from .scenario import Scenario, load_scenario, validate_scenario
from .runner import RunRecord, SweepResult, run_scenario, run_sweep
