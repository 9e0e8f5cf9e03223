//! Longitudinal two-arm trial generator with pattern-mixture dropout.
//!
//! Outcomes follow a random intercept + slope model in which subjects who
//! eventually drop out carry an extra slope term and their own residual
//! variance, so that the missing values are systematically different from
//! the observed ones. Dropout is monotone: a per-timepoint hazard removes
//! not-yet-dropped members of the dropout group, and everyone in that
//! group is gone by the final timepoint under the default hazard.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnRole, ColumnSpec, ColumnType, LongitudinalDataset};
use crate::error::{Error, Result};
use crate::stream::StreamPath;

/// Generator parameters.
///
/// `beta` are the fixed effects (intercept, time, group, group x time,
/// dropout x time); `re_cov` is the 2x2 random intercept/slope covariance;
/// the two residual variances apply to nondropouts and dropouts. The
/// hazard vector gives the conditional dropout probability at each
/// post-baseline timepoint among not-yet-dropped members of the dropout
/// group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialGenParams {
    pub beta: [f64; 5],
    pub re_cov: [[f64; 2]; 2],
    pub resid_var_nondrop: f64,
    pub resid_var_drop: f64,
    pub n_per_arm: usize,
    pub n_dropouts_per_arm: usize,
    pub timepoints: usize,
    pub drop_hazard: Vec<f64>,
}

impl Default for TrialGenParams {
    fn default() -> Self {
        Self {
            beta: [25.0, -3.0, 0.0, -1.0, 1.5],
            re_cov: [[4.0, -0.1], [-0.1, 1.0]],
            resid_var_nondrop: 9.0,
            resid_var_drop: 16.0,
            n_per_arm: 150,
            n_dropouts_per_arm: 100,
            timepoints: 5,
            drop_hazard: vec![0.25, 0.50, 0.75, 1.0],
        }
    }
}

impl TrialGenParams {
    pub fn validate(&self) -> Result<()> {
        let [[v0, c01], [c10, v1]] = self.re_cov;
        if c01 != c10 {
            return Err(Error::Parameter(
                "random-effect covariance must be symmetric".into(),
            ));
        }
        if v0 < 0.0 || v1 < 0.0 || v0 * v1 - c01 * c01 < -1e-12 {
            return Err(Error::Parameter(
                "random-effect covariance must be positive semidefinite".into(),
            ));
        }
        if self.resid_var_nondrop <= 0.0 || self.resid_var_drop <= 0.0 {
            return Err(Error::Parameter("residual variances must be positive".into()));
        }
        if self.n_dropouts_per_arm > self.n_per_arm {
            return Err(Error::Parameter(format!(
                "{} dropouts exceed arm size {}",
                self.n_dropouts_per_arm, self.n_per_arm
            )));
        }
        if self.timepoints < 2 {
            return Err(Error::Parameter("at least two timepoints are required".into()));
        }
        if self.drop_hazard.len() != self.timepoints - 1 {
            return Err(Error::Parameter(format!(
                "hazard length {} does not match {} post-baseline timepoints",
                self.drop_hazard.len(),
                self.timepoints - 1
            )));
        }
        if self.drop_hazard.iter().any(|h| !(0.0..=1.0).contains(h)) {
            return Err(Error::Parameter("hazard entries must lie in [0,1]".into()));
        }
        if self.drop_hazard.last() != Some(&1.0) {
            return Err(Error::Parameter(
                "final hazard entry must be 1 so every dropout eventually drops".into(),
            ));
        }
        Ok(())
    }

    /// Lower Cholesky factor of `re_cov`, tolerating zero variances.
    fn re_chol(&self) -> [[f64; 2]; 2] {
        let [[v0, c01], [_, v1]] = self.re_cov;
        let l00 = v0.max(0.0).sqrt();
        let l10 = if l00 > 0.0 { c01 / l00 } else { 0.0 };
        let l11 = (v1 - l10 * l10).max(0.0).sqrt();
        [[l00, 0.0], [l10, l11]]
    }
}

/// Marginal slope of the treatment arm implied by the generator: the
/// dropout share of the arm carries the extra dropout-by-time slope.
pub fn true_target(params: &TrialGenParams) -> f64 {
    let frac = params.n_dropouts_per_arm as f64 / params.n_per_arm as f64;
    params.beta[1] + params.beta[3] + frac * params.beta[4]
}

/// Generate a complete (no missingness) trial dataset plus the per-subject
/// dropout flags.
///
/// Columns: subject id, group dummy (0 = control, 1 = treated), then one
/// outcome column per timepoint with time codes 0..T-1. Dropout-group
/// membership is the first `n_dropouts_per_arm` subjects of each arm, so
/// counts are exact; only the counts enter the analysis model.
pub fn generate_complete(
    params: &TrialGenParams,
    path: &StreamPath,
) -> Result<(LongitudinalDataset, Vec<bool>)> {
    params.validate()?;
    let n = 2 * params.n_per_arm;
    let t = params.timepoints;
    let mut columns = vec![
        ColumnSpec::new("subject_id", ColumnRole::SubjectId, ColumnType::Continuous),
        ColumnSpec::new("tx", ColumnRole::Group, ColumnType::Binary),
    ];
    for j in 0..t {
        columns.push(ColumnSpec::new(
            format!("y_t{j}"),
            ColumnRole::Outcome { time: j as f64 },
            ColumnType::Continuous,
        ));
    }

    let chol = params.re_chol();
    let [b0, b1, b2, b3, b4] = params.beta;
    let mut rng = path.rng();
    let mut values = DMatrix::zeros(n, 2 + t);
    let mut drop_flags = vec![false; n];
    for i in 0..n {
        let arm = (i / params.n_per_arm) as f64;
        let within = i % params.n_per_arm;
        let drop = within < params.n_dropouts_per_arm;
        drop_flags[i] = drop;
        let sd_resid = if drop {
            params.resid_var_drop.sqrt()
        } else {
            params.resid_var_nondrop.sqrt()
        };

        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let v0 = chol[0][0] * z0;
        let v1 = chol[1][0] * z0 + chol[1][1] * z1;

        values[(i, 0)] = i as f64;
        values[(i, 1)] = arm;
        for j in 0..t {
            let time = j as f64;
            let drop_term = if drop { b4 * time } else { 0.0 };
            let eps: f64 = rng.sample(StandardNormal);
            values[(i, 2 + j)] = b0
                + b1 * time
                + b2 * arm
                + b3 * arm * time
                + drop_term
                + v0
                + v1 * time
                + sd_resid * eps;
        }
    }

    let dataset = LongitudinalDataset::complete(columns, values)?;
    Ok((dataset, drop_flags))
}

/// Mask outcomes with monotone dropout.
///
/// Walks post-baseline timepoints in order; a not-yet-dropped member of
/// the dropout group drops at timepoint `j` with probability
/// `drop_hazard[j-1]`, after which all of its outcomes from `j` on are
/// masked. The baseline column and nondropouts are never masked.
pub fn apply_dropout(
    d: &LongitudinalDataset,
    drop_flags: &[bool],
    drop_hazard: &[f64],
    path: &StreamPath,
) -> Result<LongitudinalDataset> {
    if drop_flags.len() != d.n_subjects() {
        return Err(Error::Parameter(format!(
            "{} dropout flags for {} subjects",
            drop_flags.len(),
            d.n_subjects()
        )));
    }
    let outcomes = d.outcome_columns();
    if drop_hazard.len() != outcomes.len().saturating_sub(1) {
        return Err(Error::Parameter(format!(
            "hazard length {} does not match {} post-baseline timepoints",
            drop_hazard.len(),
            outcomes.len().saturating_sub(1)
        )));
    }
    if drop_hazard.iter().any(|h| !(0.0..=1.0).contains(h)) {
        return Err(Error::Parameter("hazard entries must lie in [0,1]".into()));
    }

    let mut rng = path.rng();
    let mut mask = d.mask().clone();
    for (i, &flagged) in drop_flags.iter().enumerate() {
        if !flagged {
            continue;
        }
        for j in 1..outcomes.len() {
            let u: f64 = rng.random();
            if u < drop_hazard[j - 1] {
                // Dropped at timepoint j: mask this and all later outcomes.
                for (later_col, _) in &outcomes[j..] {
                    mask[(i, *later_col)] = true;
                }
                break;
            }
        }
    }
    LongitudinalDataset::new(d.columns().to_vec(), d.values().clone(), mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn noiseless_params() -> TrialGenParams {
        TrialGenParams {
            re_cov: [[0.0, 0.0], [0.0, 0.0]],
            resid_var_nondrop: 1e-300,
            resid_var_drop: 1e-300,
            ..TrialGenParams::default()
        }
    }

    #[test]
    fn noiseless_means_follow_the_model() {
        let params = noiseless_params();
        let (d, flags) = generate_complete(&params, &StreamPath::root(1)).unwrap();
        // Control nondropout at time 3: 25 - 3*3 = 16.
        let row = (0..d.n_subjects())
            .find(|&i| d.value(i, 1) == 0.0 && !flags[i])
            .unwrap();
        assert_relative_eq!(d.value(row, 2 + 3), 16.0, epsilon = 1e-9);
        // Treated dropout slope: b1 + b3 + b4 = -2.5 per unit time.
        let row = (0..d.n_subjects())
            .find(|&i| d.value(i, 1) == 1.0 && flags[i])
            .unwrap();
        let slope = d.value(row, 2 + 4) - d.value(row, 2 + 3);
        assert_relative_eq!(slope, -2.5, epsilon = 1e-9);
    }

    #[test]
    fn moments_match_the_generator() {
        // Mixture-over-dropout moments at each (arm, time): mean is the
        // dropout-weighted fixed-effect mean; variance adds the random
        // effect quadratic, the mixed residual variance, and the spread of
        // the two dropout means.
        let params = TrialGenParams {
            n_per_arm: 50_000,
            n_dropouts_per_arm: 33_333,
            ..TrialGenParams::default()
        };
        let (d, _) = generate_complete(&params, &StreamPath::root(7).child("moments", 0)).unwrap();
        let frac = params.n_dropouts_per_arm as f64 / params.n_per_arm as f64;
        let [b0, b1, b2, b3, b4] = params.beta;
        let [[v0, c01], [_, v1]] = params.re_cov;
        for arm in [0.0, 1.0] {
            for j in [0usize, 2, 4] {
                let t = j as f64;
                let rows: Vec<usize> =
                    (0..d.n_subjects()).filter(|&i| d.value(i, 1) == arm).collect();
                let ys: Vec<f64> = rows.iter().map(|&i| d.value(i, 2 + j)).collect();
                let n = ys.len() as f64;
                let mean = ys.iter().sum::<f64>() / n;
                let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);

                let base = b0 + b1 * t + b2 * arm + b3 * arm * t;
                let mean_true = base + frac * b4 * t;
                let re_var = v0 + 2.0 * t * c01 + t * t * v1;
                let resid = frac * params.resid_var_drop + (1.0 - frac) * params.resid_var_nondrop;
                let mix_var = frac * (1.0 - frac) * (b4 * t).powi(2);
                let var_true = re_var + resid + mix_var;

                let se_mean = (var_true / n).sqrt();
                assert!(
                    (mean - mean_true).abs() < 4.0 * se_mean,
                    "arm {arm} t{j}: mean {mean} vs {mean_true}"
                );
                assert!(
                    (var / var_true - 1.0).abs() < 0.05,
                    "arm {arm} t{j}: var {var} vs {var_true}"
                );
            }
        }
    }

    #[test]
    fn true_target_matches_coefficient_sums() {
        let params = TrialGenParams::default();
        assert_relative_eq!(true_target(&params), -3.0, epsilon = 1e-12);
        let mut p = params.clone();
        p.beta[4] = 0.0;
        assert_relative_eq!(true_target(&p), -4.0, epsilon = 1e-12);
        let mut p = params;
        p.n_dropouts_per_arm = 0;
        assert_relative_eq!(true_target(&p), -4.0, epsilon = 1e-12);
    }

    #[test]
    fn marginal_missing_fractions_match() {
        let params = TrialGenParams {
            n_per_arm: 30_000,
            n_dropouts_per_arm: 20_000,
            ..TrialGenParams::default()
        };
        let (d, flags) = generate_complete(&params, &StreamPath::root(3)).unwrap();
        let masked =
            apply_dropout(&d, &flags, &params.drop_hazard, &StreamPath::root(3).child("drop", 0))
                .unwrap();
        let n = masked.n_subjects() as f64;
        let expect = [0.17, 0.42, 0.60, 0.67];
        for (j, e) in expect.iter().enumerate() {
            let col = 2 + j + 1;
            let frac = masked.column_missing_count(col) as f64 / n;
            assert!((frac - e).abs() < 0.01, "t{}: {frac} vs {e}", j + 1);
        }
        // Cumulative dropout within the dropout group composes the hazard.
        let cum = [0.25, 0.625, 0.90625, 1.0];
        let n_drop = flags.iter().filter(|&&f| f).count() as f64;
        for (j, e) in cum.iter().enumerate() {
            let col = 2 + j + 1;
            let frac = (0..masked.n_subjects())
                .filter(|&i| flags[i] && masked.is_missing(i, col))
                .count() as f64
                / n_drop;
            let tol = 4.0 * (e * (1.0 - e) / n_drop).sqrt() + 1e-9;
            assert!((frac - e).abs() <= tol, "t{}: {frac} vs {e}", j + 1);
        }
    }

    #[test]
    fn deterministic_final_hazard_step() {
        let params = TrialGenParams::default();
        let (d, flags) = generate_complete(&params, &StreamPath::root(11)).unwrap();
        let masked =
            apply_dropout(&d, &flags, &[0.0, 0.0, 0.0, 1.0], &StreamPath::root(11)).unwrap();
        for j in 1..=3 {
            assert_eq!(masked.column_missing_count(2 + j), 0);
        }
        assert_eq!(masked.column_missing_count(2 + 4), 200);
    }

    #[test]
    fn mask_is_monotone_per_subject() {
        let params = TrialGenParams::default();
        let (d, flags) = generate_complete(&params, &StreamPath::root(5)).unwrap();
        let masked =
            apply_dropout(&d, &flags, &params.drop_hazard, &StreamPath::root(6)).unwrap();
        let outcomes = masked.outcome_columns();
        for i in 0..masked.n_subjects() {
            let mut seen_missing = false;
            for (col, _) in &outcomes {
                let miss = masked.is_missing(i, *col);
                assert!(!(seen_missing && !miss), "non-monotone mask at row {i}");
                seen_missing |= miss;
            }
            assert!(!masked.is_missing(i, outcomes[0].0), "baseline masked at row {i}");
            if !flags[i] {
                assert!(outcomes.iter().all(|(c, _)| !masked.is_missing(i, *c)));
            }
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let params = TrialGenParams::default();
        let path = StreamPath::root(42).child("rep", 9);
        let (d1, f1) = generate_complete(&params, &path).unwrap();
        let (d2, f2) = generate_complete(&params, &path).unwrap();
        assert!(d1.bitwise_eq(&d2));
        assert_eq!(f1, f2);
        let m1 = apply_dropout(&d1, &f1, &params.drop_hazard, &path.child("drop", 0)).unwrap();
        let m2 = apply_dropout(&d2, &f2, &params.drop_hazard, &path.child("drop", 0)).unwrap();
        assert!(m1.bitwise_eq(&m2));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = TrialGenParams::default();
        p.drop_hazard = vec![0.25, 0.5, 0.75];
        assert!(p.validate().is_err());
        let mut p = TrialGenParams::default();
        p.drop_hazard = vec![0.25, 0.5, 0.75, 0.9];
        assert!(p.validate().is_err());
        let mut p = TrialGenParams::default();
        p.n_dropouts_per_arm = 151;
        assert!(p.validate().is_err());
        let mut p = TrialGenParams::default();
        p.re_cov = [[1.0, 5.0], [5.0, 1.0]];
        assert!(p.validate().is_err());
    }
}
