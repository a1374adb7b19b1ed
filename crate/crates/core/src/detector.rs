//! Likelihood ratio test between attacked and nominal observations.
//!
//! The operator tests `L(y) = f_attacked(y) / f_nominal(y)` against a
//! threshold tau. Both densities are zero-mean Gaussians, so the log
//! ratio needs only two quadratic forms (via triangular solves against
//! stored Cholesky factors) and two log-determinants. Detection and
//! false-alarm probabilities are estimated by Monte Carlo with one
//! counter-based substream per trial, which makes the estimates
//! bit-identical across runs and thread counts.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{
    ln_det_from_factor, spd_cholesky, validate_attack_cov, SampleStream, StateModel,
};

/// Precomputed factors for evaluating the log likelihood ratio.
#[derive(Debug, Clone)]
pub struct LrtModel {
    /// Lower Cholesky factor of the nominal observation covariance.
    pub chol_yy: DMatrix<f64>,
    /// Lower Cholesky factor of the attacked observation covariance.
    pub chol_yaya: DMatrix<f64>,
    pub log_det_yy: f64,
    pub log_det_yaya: f64,
    /// ln tau, the log decision threshold.
    pub log_tau: f64,
}

impl LrtModel {
    /// Builds the test for a state model and attack covariance.
    pub fn new(state: &StateModel, sigma_aa: &DMatrix<f64>, tau: f64) -> Result<LrtModel> {
        if tau <= 0.0 {
            return Err(Error::Domain(format!(
                "decision threshold must be positive, got {tau}"
            )));
        }
        validate_attack_cov(state.num_measurements(), sigma_aa)?;
        let chol_yaya = spd_cholesky(&(&state.sigma_yy + sigma_aa))?.l();
        Ok(LrtModel {
            chol_yy: state.chol_yy.clone(),
            log_det_yy: state.ln_det_yy(),
            log_det_yaya: ln_det_from_factor(&chol_yaya),
            chol_yaya,
            log_tau: tau.ln(),
        })
    }

    pub fn dim(&self) -> usize {
        self.chol_yy.nrows()
    }
}

/// Empirical detection and false-alarm fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEstimate {
    /// Fraction of attacked-distribution draws with log LR >= ln tau.
    pub p_detection: f64,
    /// Fraction of nominal draws with log LR >= ln tau (Type I error).
    pub p_false_alarm: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Log likelihood ratio `ln [f_attacked(y) / f_nominal(y)]`:
/// `0.5 [y^T W y - y^T S_attacked^-1 y + ln det S_yy - ln det S_attacked]`.
pub fn log_likelihood_ratio(model: &LrtModel, y: &DVector<f64>) -> Result<f64> {
    if y.len() != model.dim() {
        return Err(Error::Domain(format!(
            "observation has length {}, expected {}",
            y.len(),
            model.dim()
        )));
    }
    let q_nominal = quadratic_form(&model.chol_yy, y)?;
    let q_attacked = quadratic_form(&model.chol_yaya, y)?;
    Ok(0.5 * (q_nominal - q_attacked + model.log_det_yy - model.log_det_yaya))
}

/// `y^T S^-1 y` through a forward substitution against the lower factor.
fn quadratic_form(lower: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let u = lower
        .solve_lower_triangular(y)
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?;
    Ok(u.norm_squared())
}

/// Monte Carlo estimate of detection and false-alarm probabilities.
///
/// Trial `t` draws one standard normal vector from substream
/// `(seed, t)` and pushes it through both Cholesky factors (common
/// random numbers across the two hypotheses). Ties at the threshold
/// count as detections. Trials run in parallel; the counts are
/// order-independent, so the result does not depend on scheduling.
pub fn estimate_probabilities(
    state: &StateModel,
    sigma_aa: &DMatrix<f64>,
    tau: f64,
    trials: usize,
    seed: u64,
) -> Result<DetectionEstimate> {
    if trials == 0 {
        return Err(Error::Domain("at least one trial is required".into()));
    }
    let model = LrtModel::new(state, sigma_aa, tau)?;
    let (detections, false_alarms) = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let g = SampleStream::new(seed, t).standard_normal(model.dim());
            let nominal = &model.chol_yy * &g;
            let attacked = &model.chol_yaya * &g;
            let hit_nominal =
                log_likelihood_ratio(&model, &nominal).expect("dimensions fixed") >= model.log_tau;
            let hit_attacked =
                log_likelihood_ratio(&model, &attacked).expect("dimensions fixed") >= model.log_tau;
            (hit_attacked as u64, hit_nominal as u64)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    Ok(DetectionEstimate {
        p_detection: detections as f64 / trials as f64,
        p_false_alarm: false_alarms as f64 / trials as f64,
        trials,
        seed,
    })
}
