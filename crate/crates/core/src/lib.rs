//! Simulation of the Gaussian entire function
//! `psi(z) = sum_k zeta_k z^k / sqrt(k!)` and of its hole probability.
//!
//! Samples are truncated polynomials carrying a certified tail bound; zero
//! counts come from an argument-principle count with a Rouche guard, so every
//! Monte Carlo outcome is either certified or explicitly reported as
//! uncertain.

// Negated comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod complex_gaussian;
pub mod error;
pub mod experiments;
pub mod gef;
pub mod potential;
pub mod stats;
pub mod zeros;

pub use complex_gaussian::{derive_trial_rng, sample_standard_complex, RngState};
pub use error::{GefError, Result};
pub use experiments::{
    count_histogram, estimate_event_probability, fit_decay_exponent, log_prob_omega, sample_conditional_omega,
    verify_omega_chain, jensen_sweep, omega_verification, probe_sweep, CountHistogram, EventSpec, FitResult, JensenSummary,
    McEstimate, OmegaChainReport, OmegaRow, PlacementKind, ProbeRow,
};
pub use gef::{sample_gef, TailBound, TruncatedGef, TruncationPolicy};
pub use num_complex::Complex64;
pub use potential::{CircleGrid, LogMode, PoissonProbe, ProbePlacement};
pub use zeros::{classify_hole, find_zeros, winding_count, CountResult, DiscZeroSet, HoleVerdict};
