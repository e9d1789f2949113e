//! Squeezed-vacuum enhancement of interferometric gravitational-wave
//! detectors.
//!
//! - [`squeeze`]: quadrature variances under optical loss and phase jitter.
//! - [`ifo`]: shot noise and radiation pressure of a Fabry–Perot Michelson,
//!   with fixed-angle or frequency-dependent squeezed input.
//! - [`budget`]: tabulated curves, quadrature sums and improvement metrics.
//! - [`estimate`]: efficiency fits, Monte Carlo uncertainties and the
//!   optimal squeezing level under phase noise.
//!
//! All dB values are power dB: `s` dB of squeezing is a variance of
//! `10^(-s/10)` relative to vacuum.

pub mod budget;
pub mod error;
pub mod estimate;
pub mod ifo;
mod solve;
pub mod squeeze;

pub use budget::{
    compose, equivalent_power_increase, improvement_db, ingest_asd, resample, Improvement,
    NoiseBudget, TabulatedAsd,
};
pub use error::{Error, Result};
pub use estimate::{
    fit_efficiency, mc_chain_efficiency, mc_uncertainty, optimal_inject_db, ChainInputs,
    FitResult, McSummary, Measurement, Optimum,
};
pub use ifo::{
    coupling_kappa, quantum_noise_asd, quantum_noise_curve, sql_asd, AnglePolicy,
    FrequencyGrid, InterferometerConfig, QuantumNoiseCurve, SqueezerSetup,
};
pub use squeeze::{
    apply_loss, apply_phase_noise, chain_total, detected_db, propagate, state_from_db,
    LossChain, PhaseAveraging, PhaseNoise, Propagation, SqueezedState,
};
