//! Sparse stealth attack construction.
//!
//! The attacker trades estimation disruption against detectability by
//! minimizing, over attack covariances S_aa,
//!
//! ```text
//! (1 - lambda) ln det(I + W S_aa) - ln det(sigma^2 I + S_aa) + lambda tr(W S_aa)
//! ```
//!
//! which differs from `2 [I(X; Y_A) + lambda D(P_attacked || P_nominal)]`
//! only by a constant independent of S_aa. Restricted to a single sensor,
//! the optimum selects the index with the smallest nominal precision
//! `(W)_ii` and has a closed-form variance; the greedy construction
//! repeats that selection on the not-yet-attacked rows until k sensors
//! are compromised.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gaussian::{
    ln_det_spd, spd_cholesky, symmetrize, validate_attack_cov, StateModel,
};
use crate::grid_model::MeasurementModel;

/// A k-sparse diagonal Gaussian attack. Sensor indices are 1-based and
/// listed in selection order.
#[derive(Debug, Clone)]
pub struct AttackPlan {
    /// Attacked sensor indices, in the order the construction chose them.
    pub support: Vec<usize>,
    /// Per-sensor attack variances, aligned with `support`.
    pub variances: Vec<f64>,
    /// Nominal precision (W_j)_aa observed when each sensor was selected.
    pub precisions: Vec<f64>,
    /// Weighting parameter the variances were computed for.
    pub lambda: f64,
    /// Assembled m x m diagonal attack covariance.
    pub sigma_aa: DMatrix<f64>,
}

impl AttackPlan {
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    /// The plan truncated to its first `k` selections.
    pub fn prefix(&self, k: usize) -> Result<AttackPlan> {
        if k > self.support.len() {
            return Err(Error::Domain(format!(
                "prefix length {k} exceeds plan sparsity {}",
                self.support.len()
            )));
        }
        let mut plan = AttackPlan {
            support: self.support[..k].to_vec(),
            variances: self.variances[..k].to_vec(),
            precisions: self.precisions[..k].to_vec(),
            lambda: self.lambda,
            sigma_aa: DMatrix::zeros(self.sigma_aa.nrows(), self.sigma_aa.ncols()),
        };
        plan.sigma_aa = assemble_cov(&plan, self.sigma_aa.nrows())?;
        Ok(plan)
    }
}

/// A sensor is treated as uninformative when `w sigma^2` reaches 1 within
/// a few ulps; past that point the closed-form variance is dominated by
/// rounding in the radicand.
const DEGENERACY_TOLERANCE: f64 = 8.0 * f64::EPSILON;

fn is_degenerate(w: f64, noise_variance: f64) -> bool {
    w * noise_variance >= 1.0 - DEGENERACY_TOLERANCE
}

/// Optimal attack on a single sensor: its index, its nominal precision,
/// and the closed-form variance.
#[derive(Debug, Clone, Copy)]
pub struct SingleSensorSolution {
    /// 1-based index of the attacked sensor.
    pub alpha: usize,
    /// Smallest diagonal entry of W.
    pub w_min: f64,
    /// Optimal attack variance for that sensor.
    pub variance: f64,
}

/// Weighted stealth objective evaluated at an attack covariance.
pub fn stealth_objective(state: &StateModel, sigma_aa: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    if lambda < 1.0 {
        return Err(Error::Domain(format!(
            "weighting parameter must satisfy lambda >= 1, got {lambda}"
        )));
    }
    let m = state.num_measurements();
    validate_attack_cov(m, sigma_aa)?;
    let ln_det_attacked = ln_det_spd(&(&state.sigma_yy + sigma_aa))?;
    let ln_det_ratio = ln_det_attacked - state.ln_det_yy();
    let mut noise = sigma_aa.clone();
    for i in 0..m {
        noise[(i, i)] += state.noise_variance;
    }
    let ln_det_noise = ln_det_spd(&noise)?;
    let trace = (&state.w * sigma_aa).trace();
    Ok((1.0 - lambda) * ln_det_ratio - ln_det_noise + lambda * trace)
}

/// The non-sparse optimal Gaussian attack covariance `(1/lambda) H S_xx H^T`,
/// computed as `(1/lambda)(S_yy - sigma^2 I)`.
pub fn unconstrained_optimum(state: &StateModel, lambda: f64) -> Result<DMatrix<f64>> {
    if lambda < 1.0 {
        return Err(Error::Domain(format!(
            "weighting parameter must satisfy lambda >= 1, got {lambda}"
        )));
    }
    let m = state.num_measurements();
    let mut cov = state.sigma_yy.clone();
    for i in 0..m {
        cov[(i, i)] -= state.noise_variance;
    }
    Ok(symmetrize(&cov) / lambda)
}

/// Closed-form optimal variance for a sensor with nominal precision `w`:
///
/// ```text
/// -sigma^2/2 + (1/2) sqrt(sigma^4 - 4 (w sigma^2 - 1) / (lambda w^2))
/// ```
///
/// Nonnegative because `w <= 1/sigma^2`; zero exactly when `w sigma^2 = 1`.
pub fn optimal_sensor_variance(w: f64, noise_variance: f64, lambda: f64) -> Result<f64> {
    if lambda <= 1.0 {
        return Err(Error::Domain(format!(
            "closed-form variance requires lambda > 1, got {lambda}"
        )));
    }
    if w <= 0.0 {
        return Err(Error::Domain(format!("precision must be positive, got {w}")));
    }
    let s2 = noise_variance;
    let radicand = s2 * s2 - 4.0 * (w * s2 - 1.0) / (lambda * w * w);
    if radicand < 0.0 {
        return Err(Error::Domain(format!(
            "precision {w} exceeds the noise floor 1/sigma^2 = {}",
            1.0 / s2
        )));
    }
    Ok(-s2 / 2.0 + radicand.sqrt() / 2.0)
}

/// Optimal single-sensor attack: pick the index minimizing `(W)_ii`
/// (ties broken toward the lowest index) and its closed-form variance.
pub fn single_sensor_attack(state: &StateModel, lambda: f64) -> Result<SingleSensorSolution> {
    if lambda <= 1.0 {
        return Err(Error::Domain(format!(
            "single-sensor construction requires lambda > 1, got {lambda}"
        )));
    }
    let (pos, w_min) = argmin_diagonal(&state.w);
    let variance = optimal_sensor_variance(w_min, state.noise_variance, lambda)?;
    if is_degenerate(w_min, state.noise_variance) || variance <= 0.0 {
        return Err(Error::DegenerateAttack {
            round: 1,
            sensor: pos + 1,
        });
    }
    Ok(SingleSensorSolution {
        alpha: pos + 1,
        w_min,
        variance,
    })
}

/// Greedy k-sparse construction.
///
/// Round j forms the precision of the not-yet-attacked observations,
/// `W_j = (H_j S_xx H_j^T + sigma^2 I)^-1`, picks the position with the
/// smallest diagonal entry, maps it back to the original sensor index,
/// and assigns that sensor its closed-form variance. Selection never
/// depends on lambda; only the variances do.
pub fn greedy_k_sparse(
    meas: &MeasurementModel,
    sigma_xx: &DMatrix<f64>,
    lambda: f64,
    k: usize,
) -> Result<AttackPlan> {
    let m = meas.num_measurements();
    let n = meas.num_states();
    if lambda <= 1.0 {
        return Err(Error::Domain(format!(
            "greedy construction requires lambda > 1, got {lambda}"
        )));
    }
    if k < 1 || k > m {
        return Err(Error::Domain(format!(
            "sparsity must satisfy 1 <= k <= {m}, got {k}"
        )));
    }
    if sigma_xx.nrows() != n || sigma_xx.ncols() != n {
        return Err(Error::Domain(format!(
            "state covariance must be {n}x{n}, got {}x{}",
            sigma_xx.nrows(),
            sigma_xx.ncols()
        )));
    }
    let sigma2 = meas.noise_variance;
    if sigma2 <= 0.0 {
        return Err(Error::Domain(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }

    let h = &meas.jacobian;
    // remaining original row indices, kept ascending so that the argmin
    // tie-break lands on the lowest original sensor index
    let mut remaining: Vec<usize> = (0..m).collect();
    let mut support = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    let mut precisions = Vec::with_capacity(k);

    for round in 1..=k {
        let rows = remaining.len();
        let h_j = DMatrix::from_fn(rows, n, |i, j| h[(remaining[i], j)]);
        let mut cov = &h_j * sigma_xx * h_j.transpose();
        for i in 0..rows {
            cov[(i, i)] += sigma2;
        }
        let w_j = symmetrize(&spd_cholesky(&symmetrize(&cov))?.inverse());
        let (pos, w_min) = argmin_diagonal(&w_j);
        let sensor = remaining[pos] + 1;
        let variance = optimal_sensor_variance(w_min, sigma2, lambda)?;
        if is_degenerate(w_min, sigma2) || variance <= 0.0 {
            return Err(Error::DegenerateAttack { round, sensor });
        }
        support.push(sensor);
        variances.push(variance);
        precisions.push(w_min);
        remaining.remove(pos);
    }

    let mut plan = AttackPlan {
        support,
        variances,
        precisions,
        lambda,
        sigma_aa: DMatrix::zeros(m, m),
    };
    plan.sigma_aa = assemble_cov(&plan, m)?;
    Ok(plan)
}

/// Diagonal attack covariance `sum_i variance_i e_i e_i^T` for a plan,
/// in original sensor coordinates.
pub fn assemble_cov(plan: &AttackPlan, m: usize) -> Result<DMatrix<f64>> {
    let mut cov = DMatrix::zeros(m, m);
    for (&sensor, &variance) in plan.support.iter().zip(&plan.variances) {
        if sensor == 0 || sensor > m {
            return Err(Error::Domain(format!(
                "sensor index {sensor} outside 1..={m}"
            )));
        }
        cov[(sensor - 1, sensor - 1)] = variance;
    }
    Ok(cov)
}

fn argmin_diagonal(mat: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, mat[(0, 0)]);
    for i in 1..mat.nrows() {
        if mat[(i, i)] < best.1 {
            best = (i, mat[(i, i)]);
        }
    }
    best
}
