//! Floquet-based decay certification for damped Klein–Gordon equations with
//! time-periodic dissipation and mass.
//!
//! After a partial Fourier transform in space, each frequency ξ evolves by a
//! 2×2 first-order system with T-periodic coefficients. This crate computes
//! its fundamental solution and monodromy, searches for a contraction power
//! on bounded frequencies, bounds the high-frequency region by a
//! diagonalization argument, and assembles a uniform exponential decay
//! certificate.

pub mod certify;
pub mod coefficients;
pub mod error;
pub mod export;
pub mod highfreq;
pub mod monodromy;
pub mod parallel;
pub mod perturbation;
pub mod propagator;
pub mod quadrature;

pub use certify::{
    decay_constants, fit_rate, gamma_curve, gamma_of, sup_norm_curve, DecayConstants, DecayGrid,
    DecayKind, DecayReport, RateFit, Verdict,
};
pub use coefficients::{
    AssumptionReport, CoefficientDecl, Interpolation, Mass, ModelSpec, PeriodicCoefficient,
};
pub use error::{Error, Result};
pub use highfreq::{
    find_threshold_n, n_pm, suplarge_quantity, window_bound_check, ThresholdOptions,
    ThresholdResult, ThresholdStep, WindowBoundCheck,
};
pub use monodromy::{
    assemble_certificate, find_contraction_k, max_power_norm, monodromy_at, refinement_check,
    spectral_radius_scan, ContractionCertificate, ContractionGrid, ContractionOptions,
    ContractionResult, EigenClass, MonodromySample,
};
pub use parallel::Workers;
pub use perturbation::{
    epsilon_at_frequency, epsilon_bound, gronwall_difference_bound, lambert_w0,
    verify_perturbed_contraction, EpsilonBound, PerturbedContraction,
};
pub use propagator::{
    eigenvalues_2x2, peano_baker_truncated, propagate, propagate_difference, propagate_through,
    spectral_norm_2x2, system_matrix, Mat2C, PropagationResult, C64, DEFAULT_TOL,
};
