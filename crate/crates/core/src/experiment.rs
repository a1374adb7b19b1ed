//! End-to-end experiment runner: load a case, calibrate the noise floor
//! from an SNR target, run the greedy construction per lambda, and
//! evaluate every sparsity level analytically (mutual information, KL
//! divergence, objective) and empirically (Monte Carlo detection and
//! false-alarm probabilities).
//!
//! One greedy pass per lambda suffices: the construction is sequential,
//! so the k-sparse attack is the k-prefix of the k_max-sparse plan.
//! Monte Carlo substreams are keyed by (seed, lambda index, k, trial),
//! making the whole report, and the files written from it, byte-stable
//! across runs and thread counts.

use std::fs;
use std::path::{Path, PathBuf};

use crate::detector::estimate_probabilities;
use crate::error::{Error, Result};
use crate::gaussian::{
    build_state_model, kl_divergence, mix_seed, mutual_information, snr_to_noise_variance,
    toeplitz_cov, StateModel,
};
use crate::grid_model::{build_jacobian, parse_case, MeasurementModel};
use crate::stealth::{greedy_k_sparse, stealth_objective};
use crate::svg::{render, Panel, Series};

/// Sweep parameters. Defaults mirror the reference experiment: SNR 30 dB,
/// rho 0.1, tau 2, lambda in {2, 30}, 20000 Monte Carlo trials.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub case_path: PathBuf,
    pub snr_db: f64,
    pub rho: f64,
    pub tau: f64,
    pub lambdas: Vec<f64>,
    /// Largest sparsity to sweep; `None` means every sensor (k_max = m).
    pub k_max: Option<usize>,
    pub trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub plots: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            case_path: PathBuf::new(),
            snr_db: 30.0,
            rho: 0.1,
            tau: 2.0,
            lambdas: vec![2.0, 30.0],
            k_max: None,
            trials: 20_000,
            seed: 42,
            output_dir: PathBuf::from("out"),
            plots: false,
        }
    }
}

impl ExperimentConfig {
    /// Checks every field that can be validated before the case is loaded.
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::Domain("at least one lambda is required".into()));
        }
        for &lambda in &self.lambdas {
            if lambda <= 1.0 {
                return Err(Error::Domain(format!(
                    "every lambda must exceed 1, got {lambda}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Domain(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if self.tau <= 0.0 {
            return Err(Error::Domain(format!("tau must be positive, got {}", self.tau)));
        }
        if self.trials == 0 {
            return Err(Error::Domain("trials must be at least 1".into()));
        }
        if self.k_max == Some(0) {
            return Err(Error::Domain("k_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// Metrics for one sparsity level of one lambda.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    /// Sensor added at step k (1-based).
    pub sensor: usize,
    /// Variance assigned to that sensor.
    pub variance: f64,
    pub mi_nats: f64,
    pub kl_nats: f64,
    pub objective: f64,
    pub p_detection: f64,
    pub p_false_alarm: f64,
}

/// All sparsity levels for one lambda, ordered by k; the sensor column is
/// prefix-consistent because every row extends the previous support by
/// exactly one index.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSweep {
    pub lambda: f64,
    pub rows: Vec<SweepRow>,
    /// Reason the sweep stopped before k_max, if it did.
    pub truncated: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub sweeps: Vec<LambdaSweep>,
    pub k_max: usize,
    pub trials: usize,
    pub seed: u64,
    pub noise_variance: f64,
    pub num_measurements: usize,
}

/// Loads the case named by the config and returns the calibrated
/// measurement and state models.
pub fn load_models(config: &ExperimentConfig) -> Result<(MeasurementModel, StateModel)> {
    let text = fs::read_to_string(&config.case_path)?;
    let case = parse_case(&text)?;
    let probe = build_jacobian(&case, 1.0)?;
    let sigma_xx = toeplitz_cov(probe.num_states(), config.rho)?;
    let noise_variance = snr_to_noise_variance(&probe.jacobian, &sigma_xx, config.snr_db)?;
    let meas = build_jacobian(&case, noise_variance)?;
    let state = build_state_model(&meas, config.rho)?;
    Ok((meas, state))
}

/// Runs the full (lambda, k) sweep described by the config.
pub fn run_sweep(config: &ExperimentConfig) -> Result<EvalReport> {
    config.validate()?;
    let (meas, state) = load_models(config)?;
    let m = meas.num_measurements();
    let k_max = config.k_max.unwrap_or(m);
    if k_max < 1 || k_max > m {
        return Err(Error::Domain(format!(
            "k_max must satisfy 1 <= k_max <= {m}, got {k_max}"
        )));
    }

    let mut sweeps = Vec::with_capacity(config.lambdas.len());
    for (lambda_idx, &lambda) in config.lambdas.iter().enumerate() {
        let (plan, truncated) =
            match greedy_k_sparse(&meas, &state.sigma_xx, lambda, k_max) {
                Ok(plan) => (Some(plan), None),
                Err(Error::DegenerateAttack { round, sensor }) => {
                    let reason = format!(
                        "construction stopped at k = {round}: sensor {sensor} is uninformative \
                         (w * sigma^2 = 1 forces zero variance)"
                    );
                    if round > 1 {
                        (
                            Some(greedy_k_sparse(&meas, &state.sigma_xx, lambda, round - 1)?),
                            Some(reason),
                        )
                    } else {
                        (None, Some(reason))
                    }
                }
                Err(other) => return Err(other),
            };

        let mut rows = Vec::new();
        if let Some(plan) = &plan {
            for k in 1..=plan.sparsity() {
                let prefix = plan.prefix(k)?;
                let sigma_aa = &prefix.sigma_aa;
                let mi_nats = mutual_information(&state, sigma_aa)?;
                let kl_nats = kl_divergence(&state, sigma_aa)?;
                let objective = stealth_objective(&state, sigma_aa, lambda)?;
                let trial_seed = mix_seed(config.seed, &[lambda_idx as u64, k as u64]);
                let detection =
                    estimate_probabilities(&state, sigma_aa, config.tau, config.trials, trial_seed)?;
                rows.push(SweepRow {
                    k,
                    sensor: plan.support[k - 1],
                    variance: plan.variances[k - 1],
                    mi_nats,
                    kl_nats,
                    objective,
                    p_detection: detection.p_detection,
                    p_false_alarm: detection.p_false_alarm,
                });
            }
        }
        sweeps.push(LambdaSweep {
            lambda,
            rows,
            truncated,
        });
    }

    Ok(EvalReport {
        sweeps,
        k_max,
        trials: config.trials,
        seed: config.seed,
        noise_variance: state.noise_variance,
        num_measurements: m,
    })
}

/// Renders a float with nine significant digits; byte-stable across runs.
fn sig9(value: f64) -> String {
    format!("{value:.8e}")
}

/// Writes one `sweep_lambda<lambda>.csv` per lambda and returns the paths.
pub fn emit_csv(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for sweep in &report.sweeps {
        let path = dir.join(format!("sweep_lambda{}.csv", sweep.lambda));
        let mut out = String::from(
            "k,sensor,variance,mi_nats,mi_bits,kl_nats,objective,p_detection,p_false_alarm\n",
        );
        for row in &sweep.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row.k,
                row.sensor,
                sig9(row.variance),
                sig9(row.mi_nats),
                sig9(row.mi_nats / std::f64::consts::LN_2),
                sig9(row.kl_nats),
                sig9(row.objective),
                sig9(row.p_detection),
                sig9(row.p_false_alarm),
            ));
        }
        if let Some(reason) = &sweep.truncated {
            out.push_str(&format!("# truncated: {reason}\n"));
        }
        fs::write(&path, out)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Writes the overview chart (mutual information and detection
/// probability vs k) plus one per-lambda profile chart (per-step
/// variance, detection, false alarm). Probabilities are clamped to
/// `1 / (2 trials)` for the log axis, with a footnote when that happens.
pub fn emit_plots(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let floor = 1.0 / (2.0 * report.trials as f64);
    let mut clamped = false;
    let mut clamp = |p: f64| {
        if p < floor {
            clamped = true;
            floor
        } else {
            p
        }
    };

    let mi_series: Vec<Series> = report
        .sweeps
        .iter()
        .map(|s| Series {
            label: format!("lambda = {}", s.lambda),
            points: s.rows.iter().map(|r| (r.k as f64, r.mi_nats)).collect(),
        })
        .collect();
    let pd_series: Vec<Series> = report
        .sweeps
        .iter()
        .map(|s| Series {
            label: format!("lambda = {}", s.lambda),
            points: s
                .rows
                .iter()
                .map(|r| (r.k as f64, clamp(r.p_detection)))
                .collect(),
        })
        .collect();
    let footnote = clamped.then(|| {
        format!("zero probabilities clamped to {floor:.2e} (half of one count) for log display")
    });

    let overview = vec![
        Panel {
            title: "Mutual information vs compromised observations".into(),
            x_label: "k (attacked sensors)".into(),
            y_label: "MI (nats)".into(),
            log_y: false,
            series: mi_series,
            footnote: None,
        },
        Panel {
            title: "Probability of detection".into(),
            x_label: "k (attacked sensors)".into(),
            y_label: "P_D".into(),
            log_y: true,
            series: pd_series,
            footnote,
        },
    ];
    let overview_path = dir.join("fig_overview.svg");
    fs::write(&overview_path, render(&overview, 760, 300))?;
    let mut paths = vec![overview_path];

    for sweep in &report.sweeps {
        let mut clamped_profile = false;
        let mut clamp_p = |p: f64| {
            if p < floor {
                clamped_profile = true;
                floor
            } else {
                p
            }
        };
        let variance_panel = Panel {
            title: format!("Per-step attack variance, lambda = {}", sweep.lambda),
            x_label: "k (attacked sensors)".into(),
            y_label: "variance (p.u.^2)".into(),
            log_y: false,
            series: vec![Series {
                label: "variance".into(),
                points: sweep.rows.iter().map(|r| (r.k as f64, r.variance)).collect(),
            }],
            footnote: None,
        };
        let prob_series = vec![
            Series {
                label: "P_D".into(),
                points: sweep
                    .rows
                    .iter()
                    .map(|r| (r.k as f64, clamp_p(r.p_detection)))
                    .collect(),
            },
            Series {
                label: "P_FA".into(),
                points: sweep
                    .rows
                    .iter()
                    .map(|r| (r.k as f64, clamp_p(r.p_false_alarm)))
                    .collect(),
            },
        ];
        let prob_panel = Panel {
            title: format!("Detection and false alarm, lambda = {}", sweep.lambda),
            x_label: "k (attacked sensors)".into(),
            y_label: "probability".into(),
            log_y: true,
            series: prob_series,
            footnote: clamped_profile.then(|| {
                format!("zero probabilities clamped to {floor:.2e} (half of one count) for log display")
            }),
        };
        let path = dir.join(format!("fig_profile_lambda{}.svg", sweep.lambda));
        fs::write(&path, render(&[variance_panel, prob_panel], 760, 300))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stealth::greedy_k_sparse;

    fn two_bus_config(dir: &Path) -> ExperimentConfig {
        let case_path = dir.join("two_bus.m");
        fs::write(
            &case_path,
            "mpc.baseMVA = 100;\n\
             mpc.bus = [\n 1 3 0 0 0 0 1 1 0 132 1 1.06 0.94;\n 2 1 10 2 0 0 1 1 0 132 1 1.06 0.94;\n];\n\
             mpc.branch = [\n 1 2 0.0 0.5 0.0 0 0 0 0 0 1 -360 360;\n];\n",
        )
        .unwrap();
        ExperimentConfig {
            case_path,
            k_max: Some(3),
            trials: 400,
            seed: 7,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn sweep_shape_and_lambda_invariant_support() {
        let dir = tempfile::tempdir().unwrap();
        let config = two_bus_config(dir.path());
        let report = run_sweep(&config).unwrap();
        assert_eq!(report.sweeps.len(), 2);
        for sweep in &report.sweeps {
            assert_eq!(sweep.rows.len(), 3, "lambda {}", sweep.lambda);
            assert!(sweep.truncated.is_none());
            for (i, row) in sweep.rows.iter().enumerate() {
                assert_eq!(row.k, i + 1);
            }
        }
        let supports: Vec<Vec<usize>> = report
            .sweeps
            .iter()
            .map(|s| s.rows.iter().map(|r| r.sensor).collect())
            .collect();
        assert_eq!(supports[0], supports[1]);
    }

    #[test]
    fn rows_match_freshly_constructed_attacks() {
        let dir = tempfile::tempdir().unwrap();
        let config = two_bus_config(dir.path());
        let report = run_sweep(&config).unwrap();
        let (meas, state) = load_models(&config).unwrap();

        for (lambda_idx, sweep) in report.sweeps.iter().enumerate() {
            for row in &sweep.rows {
                let fresh =
                    greedy_k_sparse(&meas, &state.sigma_xx, sweep.lambda, row.k).unwrap();
                assert_eq!(fresh.support[row.k - 1], row.sensor);
                let mi = mutual_information(&state, &fresh.sigma_aa).unwrap();
                assert!((mi - row.mi_nats).abs() < 1e-12);
                let seed = mix_seed(config.seed, &[lambda_idx as u64, row.k as u64]);
                let est =
                    estimate_probabilities(&state, &fresh.sigma_aa, config.tau, config.trials, seed)
                        .unwrap();
                assert_eq!(est.p_detection, row.p_detection);
                assert_eq!(est.p_false_alarm, row.p_false_alarm);
            }
        }
    }

    #[test]
    fn objective_differences_recombine_mi_and_kl() {
        let dir = tempfile::tempdir().unwrap();
        let config = two_bus_config(dir.path());
        let report = run_sweep(&config).unwrap();
        for sweep in &report.sweeps {
            for pair in sweep.rows.windows(2) {
                let info = |r: &SweepRow| r.mi_nats + sweep.lambda * r.kl_nats;
                let obj_diff = pair[1].objective - pair[0].objective;
                let info_diff = 2.0 * (info(&pair[1]) - info(&pair[0]));
                assert!(
                    (obj_diff - info_diff).abs() < 1e-9,
                    "lambda {}: {obj_diff} vs {info_diff}",
                    sweep.lambda
                );
            }
        }
    }

    #[test]
    fn mutual_information_non_increasing_in_k() {
        let dir = tempfile::tempdir().unwrap();
        let config = two_bus_config(dir.path());
        let report = run_sweep(&config).unwrap();
        for sweep in &report.sweeps {
            for pair in sweep.rows.windows(2) {
                assert!(pair[1].mi_nats <= pair[0].mi_nats + 1e-9);
            }
        }
    }

    #[test]
    fn csv_has_expected_shape_and_unit_conversion() {
        let dir = tempfile::tempdir().unwrap();
        let config = two_bus_config(dir.path());
        let report = run_sweep(&config).unwrap();
        let paths = emit_csv(&report, dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        assert!(paths[0].file_name().unwrap() == "sweep_lambda2.csv");
        assert!(paths[1].file_name().unwrap() == "sweep_lambda30.csv");

        let text = fs::read_to_string(&paths[0]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4); // header + 3 rows
        assert_eq!(
            lines[0],
            "k,sensor,variance,mi_nats,mi_bits,kl_nats,objective,p_detection,p_false_alarm"
        );
        for line in &lines[1..] {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 9);
            let mi_nats: f64 = fields[3].parse().unwrap();
            let mi_bits: f64 = fields[4].parse().unwrap();
            // both columns carry 9 significant digits, hence the slack
            let expected = mi_nats / std::f64::consts::LN_2;
            assert!((mi_bits - expected).abs() <= 1e-7 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn csv_is_byte_identical_across_runs() {
        let dir = tempfile::tempdir().unwrap();
        let config = two_bus_config(dir.path());
        let first = run_sweep(&config).unwrap();
        let second = run_sweep(&config).unwrap();
        assert_eq!(first, second);

        let dir_a = dir.path().join("a");
        let dir_b = dir.path().join("b");
        emit_csv(&first, &dir_a).unwrap();
        emit_csv(&second, &dir_b).unwrap();
        for name in ["sweep_lambda2.csv", "sweep_lambda30.csv"] {
            let a = fs::read(dir_a.join(name)).unwrap();
            let b = fs::read(dir_b.join(name)).unwrap();
            assert_eq!(a, b, "{name}");
        }
    }

    /// Minimal XML well-formedness check: declaration, balanced tags,
    /// quoted attributes consumed opaquely.
    fn assert_well_formed_xml(text: &str) {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = text;
        while let Some(start) = rest.find('<') {
            rest = &rest[start + 1..];
            let end = rest.find('>').expect("unterminated tag");
            let tag = &rest[..end];
            rest = &rest[end + 1..];
            if tag.starts_with('?') || tag.starts_with('!') {
                continue;
            }
            if let Some(name) = tag.strip_prefix('/') {
                let open = stack.pop().unwrap_or_else(|| panic!("stray closer {name}"));
                assert_eq!(open, name.trim(), "mismatched tag");
            } else if !tag.ends_with('/') {
                let name = tag.split_whitespace().next().unwrap().to_string();
                stack.push(name);
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    #[test]
    fn plots_are_well_formed_and_annotate_clamped_probabilities() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = two_bus_config(dir.path());
        config.tau = 1e6; // forces p = 0 everywhere -> log floor kicks in
        let report = run_sweep(&config).unwrap();
        let paths = emit_plots(&report, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        for path in &paths {
            let text = fs::read_to_string(path).unwrap();
            assert!(text.starts_with("<?xml"));
            assert_well_formed_xml(&text);
        }
        let overview = fs::read_to_string(&paths[0]).unwrap();
        assert!(overview.contains("clamped"), "floor annotation missing");
    }

    #[test]
    fn single_row_report_renders_markers() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = two_bus_config(dir.path());
        config.k_max = Some(1);
        let report = run_sweep(&config).unwrap();
        let paths = emit_plots(&report, dir.path()).unwrap();
        let overview = fs::read_to_string(&paths[0]).unwrap();
        assert!(overview.contains("<circle"));
    }

    #[test]
    fn degenerate_round_truncates_the_report() {
        // a branch with an absurdly large reactance yields a flow row so
        // small that its optimal variance underflows to zero; the greedy
        // construction is forced onto it only in the very last round
        let dir = tempfile::tempdir().unwrap();
        let case_path = dir.path().join("weak_branch.m");
        fs::write(
            &case_path,
            "mpc.baseMVA = 100;\n\
             mpc.bus = [\n 1 3 0 0 0 0 1 1 0 132 1 1.06 0.94;\n 2 1 0 0 0 0 1 1 0 132 1 1.06 0.94;\n 3 1 0 0 0 0 1 1 0 132 1 1.06 0.94;\n];\n\
             mpc.branch = [\n 1 2 0.0 0.5 0.0 0 0 0 0 0 1 -360 360;\n 2 3 0.0 1e10 0.0 0 0 0 0 0 1 -360 360;\n 1 3 0.0 0.4 0.0 0 0 0 0 0 1 -360 360;\n];\n",
        )
        .unwrap();
        let config = ExperimentConfig {
            case_path,
            trials: 50,
            seed: 3,
            lambdas: vec![2.0],
            ..ExperimentConfig::default()
        };
        let report = run_sweep(&config).unwrap();
        let sweep = &report.sweeps[0];
        assert_eq!(report.k_max, 6);
        assert_eq!(sweep.rows.len(), 5, "report should stop before the degenerate round");
        let reason = sweep.truncated.as_ref().expect("truncation reason recorded");
        assert!(reason.contains("k = 6"), "{reason}");

        let paths = emit_csv(&report, dir.path()).unwrap();
        let text = fs::read_to_string(&paths[0]).unwrap();
        assert!(text.lines().last().unwrap().starts_with("# truncated:"));
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        let base = ExperimentConfig::default();
        let bad_lambda = ExperimentConfig {
            lambdas: vec![1.0],
            ..base.clone()
        };
        assert!(bad_lambda.validate().is_err());
        let bad_rho = ExperimentConfig {
            rho: 1.0,
            ..base.clone()
        };
        assert!(bad_rho.validate().is_err());
        let bad_trials = ExperimentConfig {
            trials: 0,
            ..base.clone()
        };
        assert!(bad_trials.validate().is_err());
        assert!(base.validate().is_ok());
    }

    #[test]
    fn unreadable_case_is_an_io_error() {
        let config = ExperimentConfig {
            case_path: PathBuf::from("/nonexistent/case.m"),
            ..ExperimentConfig::default()
        };
        assert!(matches!(run_sweep(&config), Err(Error::Io(_))));
    }

    #[test]
    fn k_max_beyond_m_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = two_bus_config(dir.path());
        config.k_max = Some(4); // m = 3 for the two-bus case
        assert!(matches!(run_sweep(&config), Err(Error::Domain(_))));
    }
}
