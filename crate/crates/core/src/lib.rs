//! Sparse stealth data-injection attacks against Bayesian DC state
//! estimation.
//!
//! The library models a power network observed through a DC measurement
//! Jacobian, equips it with a Gaussian state prior, and constructs
//! additive Gaussian attacks that jointly minimize the information the
//! operator gets from the observations and the detectability of the
//! attack under a likelihood ratio test. Sparse attacks are built
//! greedily, one sensor per round, using the closed-form single-sensor
//! optimum on the not-yet-attacked observations.
//!
//! Modules follow the pipeline:
//!
//! - [`grid_model`]: MATPOWER case parsing and the DC Jacobian.
//! - [`gaussian`]: state/observation covariances, mutual information,
//!   KL divergence, SNR calibration, reproducible sampling.
//! - [`stealth`]: the weighted stealth objective and the single-sensor
//!   and greedy k-sparse constructions.
//! - [`detector`]: likelihood ratio test and Monte Carlo error estimates.
//! - [`experiment`]: the (lambda, k) sweep, CSV output, SVG charts.

pub mod detector;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod grid_model;
pub mod stealth;
pub mod svg;

pub use detector::{estimate_probabilities, log_likelihood_ratio, DetectionEstimate, LrtModel};
pub use error::{Error, Result};
pub use experiment::{emit_csv, emit_plots, run_sweep, EvalReport, ExperimentConfig};
pub use gaussian::{
    build_state_model, kl_divergence, mutual_information, sample_mvn, snr_to_noise_variance,
    toeplitz_cov, SampleStream, StateModel,
};
pub use grid_model::{build_jacobian, parse_case, GridCase, MeasurementModel};
pub use stealth::{
    assemble_cov, greedy_k_sparse, optimal_sensor_variance, single_sensor_attack,
    stealth_objective, unconstrained_optimum, AttackPlan, SingleSensorSolution,
};
