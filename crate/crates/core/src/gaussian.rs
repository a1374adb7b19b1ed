//! Bayesian Gaussian observation model and its information measures.
//!
//! The state prior is zero-mean Gaussian with a Toeplitz covariance
//! `(S_xx)_ij = rho^|i-j|`; observations then carry covariance
//! `S_yy = H S_xx H^T + sigma^2 I` with precision `W = S_yy^-1`. Mutual
//! information and KL divergence between attacked and nominal
//! observations have closed forms in log-determinants, which are always
//! evaluated through Cholesky factors rather than explicit determinants.
//! All information quantities are in nats.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid_model::MeasurementModel;

/// Relative eigenvalue slack below zero accepted when validating a
/// covariance as positive semidefinite.
pub const PSD_TOLERANCE: f64 = 1e-9;

/// Gaussian model of nominal observations: state covariance, observation
/// covariance, precision, and the Cholesky factor used for sampling.
#[derive(Debug, Clone)]
pub struct StateModel {
    /// State covariance, n x n Toeplitz.
    pub sigma_xx: DMatrix<f64>,
    /// Exponential correlation decay of the state prior.
    pub rho: f64,
    /// Sensor noise variance sigma^2.
    pub noise_variance: f64,
    /// Observation covariance S_yy = H S_xx H^T + sigma^2 I.
    pub sigma_yy: DMatrix<f64>,
    /// Precision W = S_yy^-1, symmetrized.
    pub w: DMatrix<f64>,
    /// Lower-triangular Cholesky factor of S_yy.
    pub chol_yy: DMatrix<f64>,
}

impl StateModel {
    pub fn num_measurements(&self) -> usize {
        self.sigma_yy.nrows()
    }

    /// 2 * sum(ln diag L), the log-determinant of S_yy.
    pub fn ln_det_yy(&self) -> f64 {
        ln_det_from_factor(&self.chol_yy)
    }
}

/// Toeplitz state covariance with entries `rho^|i-j|`.
pub fn toeplitz_cov(n: usize, rho: f64) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!(
            "correlation decay must lie in [0, 1), got {rho}"
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        rho.powi((i as i32 - j as i32).abs())
    }))
}

/// Builds the observation-space Gaussian model for a measurement model.
pub fn build_state_model(meas: &MeasurementModel, rho: f64) -> Result<StateModel> {
    let sigma_xx = toeplitz_cov(meas.num_states(), rho)?;
    let m = meas.num_measurements();
    let h = &meas.jacobian;
    let mut sigma_yy = h * &sigma_xx * h.transpose();
    for i in 0..m {
        sigma_yy[(i, i)] += meas.noise_variance;
    }
    // downstream factorizations assume exact symmetry
    sigma_yy = symmetrize(&sigma_yy);

    let chol = Cholesky::new(sigma_yy.clone()).ok_or_else(|| {
        Error::Numerical("observation covariance is not positive definite".into())
    })?;
    let w = symmetrize(&chol.inverse());

    Ok(StateModel {
        sigma_xx,
        rho,
        noise_variance: meas.noise_variance,
        sigma_yy,
        w,
        chol_yy: chol.l(),
    })
}

/// Inverts the SNR definition `SNR = 10 log10(tr(H S_xx H^T) / (m sigma^2))`
/// to the noise variance that realizes `snr_db`.
pub fn snr_to_noise_variance(
    jacobian: &DMatrix<f64>,
    sigma_xx: &DMatrix<f64>,
    snr_db: f64,
) -> Result<f64> {
    let signal_trace = (jacobian * sigma_xx * jacobian.transpose()).trace();
    if signal_trace <= 0.0 {
        return Err(Error::Domain(
            "signal trace tr(H S_xx H^T) must be positive".into(),
        ));
    }
    let m = jacobian.nrows() as f64;
    Ok(signal_trace / (m * 10f64.powf(snr_db / 10.0)))
}

/// The SNR in dB realized by a given noise variance.
pub fn noise_variance_to_snr(
    jacobian: &DMatrix<f64>,
    sigma_xx: &DMatrix<f64>,
    noise_variance: f64,
) -> f64 {
    let signal_trace = (jacobian * sigma_xx * jacobian.transpose()).trace();
    let m = jacobian.nrows() as f64;
    10.0 * (signal_trace / (m * noise_variance)).log10()
}

/// Mutual information between the states and the attacked observations,
/// in nats: `0.5 ln det(S_yy + S_aa) - 0.5 ln det(sigma^2 I + S_aa)`.
pub fn mutual_information(state: &StateModel, sigma_aa: &DMatrix<f64>) -> Result<f64> {
    validate_attack_cov(state.num_measurements(), sigma_aa)?;
    let attacked = ln_det_spd(&(&state.sigma_yy + sigma_aa))?;
    let mut noise = sigma_aa.clone();
    for i in 0..noise.nrows() {
        noise[(i, i)] += state.noise_variance;
    }
    let noise = ln_det_spd(&noise)?;
    Ok((0.5 * (attacked - noise)).max(0.0))
}

/// KL divergence from attacked to nominal observation distribution,
/// in nats: `0.5 [tr(W S_aa) - ln det(I + W S_aa)]`.
pub fn kl_divergence(state: &StateModel, sigma_aa: &DMatrix<f64>) -> Result<f64> {
    validate_attack_cov(state.num_measurements(), sigma_aa)?;
    let trace = (&state.w * sigma_aa).trace();
    // ln det(I + W S_aa) = ln det(S_yy + S_aa) - ln det(S_yy)
    let attacked = ln_det_spd(&(&state.sigma_yy + sigma_aa))?;
    Ok((0.5 * (trace - (attacked - state.ln_det_yy()))).max(0.0))
}

/// Deterministic per-trial substream: the same `(seed, trial_counter)`
/// yields bit-identical draws regardless of thread scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleStream {
    pub seed: u64,
    pub trial_counter: u64,
}

impl SampleStream {
    pub fn new(seed: u64, trial_counter: u64) -> Self {
        SampleStream {
            seed,
            trial_counter,
        }
    }

    /// Counter-based generator: one ChaCha stream per trial.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.trial_counter);
        rng
    }

    /// Standard normal vector of length `dim` from this substream.
    pub fn standard_normal(&self, dim: usize) -> DVector<f64> {
        let mut rng = self.rng();
        DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
    }
}

/// Mixes auxiliary keys (sweep point indices, trial blocks) into a base
/// seed so that distinct sweep points get independent substream families.
pub fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut state = seed;
    for &part in parts {
        state = splitmix64(state ^ part.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    splitmix64(state)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `L g` with `g` standard normal from the given substream.
pub fn sample_mvn(chol_factor: &DMatrix<f64>, stream: &SampleStream) -> DVector<f64> {
    chol_factor * stream.standard_normal(chol_factor.ncols())
}

/// Rejects matrices that are not symmetric PSD of dimension `m`: the
/// smallest eigenvalue must satisfy `l_min >= -1e-9 * max(1, l_max)`.
pub fn validate_attack_cov(m: usize, sigma_aa: &DMatrix<f64>) -> Result<()> {
    if sigma_aa.nrows() != m || sigma_aa.ncols() != m {
        return Err(Error::Domain(format!(
            "attack covariance must be {m}x{m}, got {}x{}",
            sigma_aa.nrows(),
            sigma_aa.ncols()
        )));
    }
    let scale = sigma_aa.amax().max(1.0);
    for i in 0..m {
        for j in (i + 1)..m {
            if (sigma_aa[(i, j)] - sigma_aa[(j, i)]).abs() > PSD_TOLERANCE * scale {
                return Err(Error::Domain("attack covariance is not symmetric".into()));
            }
        }
    }
    let eigenvalues = symmetrize(sigma_aa).symmetric_eigenvalues();
    let max = eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE * max.max(1.0) {
        return Err(Error::Domain(format!(
            "attack covariance is not PSD: smallest eigenvalue {min}"
        )));
    }
    Ok(())
}

pub(crate) fn symmetrize(mat: &DMatrix<f64>) -> DMatrix<f64> {
    (mat + mat.transpose()) * 0.5
}

pub(crate) fn spd_cholesky(mat: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(mat.clone())
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))
}

/// Log-determinant of an SPD matrix through its Cholesky factor.
pub fn ln_det_spd(mat: &DMatrix<f64>) -> Result<f64> {
    Ok(ln_det_from_factor(&spd_cholesky(mat)?.l()))
}

pub(crate) fn ln_det_from_factor(lower: &DMatrix<f64>) -> f64 {
    2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}
