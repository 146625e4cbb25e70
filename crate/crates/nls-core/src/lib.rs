//! Exact and numeric machinery for the resonant normal form of the cubic
//! nonlinear Schrödinger equation on a torus of circumference L: lattice
//! forms and resonance enumeration, leveled diagram forests, the H/G
//! normal-form coefficients with exact-rational vanishing verification,
//! lattice counting oracles, and a truncated spectral simulator with the
//! phase ladder and modified-scattering diagnostics.

pub mod coeffs;
pub mod counting;
pub mod forest;
pub mod lattice;
pub mod sim;

pub use coeffs::{
    chain_sum, chain_sum_p3_total, g2_initial, g_coeff_recurrence, g_coeff_trees, h2_initial,
    h_coeff_recurrence, h_coeff_trees, quintic_main_term, quintic_main_term_exact, verify_vanishing, CoeffCache,
    CoefficientValue, Partition, VanishingReport,
};
pub use counting::{
    count_constrained_tuples, count_cubic_resonances, count_cubic_resonances_brute, divisor_count,
    scaling_report, CountQuery, ScalingRow,
};
pub use forest::{generate_forest, generate_g_forest, ConstraintReport, DiagramTree, Forest};
pub use lattice::{
    enumerate_resonances, weighted_supnorm, ExactRational, LatticeFrequency, ModeTuple,
};
pub use sim::{
    error_metric, evolve, evolve_with, gaussian_profile, limit_profile_eval, normal_form_c,
    p_functional, q_functional, theorem1_experiment, ExperimentReport, LimitProfile, PhaseLadder,
    RunConfig, SpectralState,
};
