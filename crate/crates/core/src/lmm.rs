//! Random intercept + slope linear mixed model, fit by maximum likelihood.
//!
//! The marginal per-subject covariance is `V_i = Z_i G Z_i' + sigma^2 I`.
//! The fit profiles the fixed effects (generalized least squares) and the
//! residual variance out of the Gaussian likelihood and searches over the
//! Cholesky factor of `G / sigma^2` with log-scale diagonal, so the
//! variance components stay positive semidefinite and boundary fits are
//! reachable. Subjects sharing a design pattern are collapsed into
//! sufficient statistics, which makes the per-iteration cost independent
//! of the subject count for balanced data.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix2};
use serde::{Deserialize, Serialize};

use crate::dataset::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::pooling::ScalarEstimate;

/// Model specification mapping wide dataset columns onto the long-format
/// fit: outcome columns with their time codes, one binary group column
/// whose dummy enters with a main effect and a time interaction, and
/// optional time-constant covariates.
///
/// Fixed-effect order: intercept, time, group, group x time, covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmSpec {
    pub subject_col: String,
    pub group_col: Option<String>,
    /// (column name, time code) pairs; time codes strictly increasing.
    pub outcomes: Vec<(String, f64)>,
    pub covariates: Vec<String>,
    /// Restricted maximum likelihood instead of maximum likelihood.
    pub reml: bool,
}

impl LmmSpec {
    /// Derive the spec from a dataset's column roles: subject id, group,
    /// and every outcome column in declaration order.
    pub fn from_dataset(d: &LongitudinalDataset) -> Result<Self> {
        let subject = d
            .subject_id_col()
            .ok_or_else(|| Error::Data("dataset has no subject-id column".into()))?;
        let group = d.group_col().map(|g| d.columns()[g].name.clone());
        let outcomes: Vec<(String, f64)> = d
            .outcome_columns()
            .into_iter()
            .map(|(c, t)| (d.columns()[c].name.clone(), t))
            .collect();
        let spec = Self {
            subject_col: d.columns()[subject].name.clone(),
            group_col: group,
            outcomes,
            covariates: Vec::new(),
            reml: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.outcomes.len() < 2 {
            return Err(Error::Parameter(
                "at least two outcome timepoints are required".into(),
            ));
        }
        for w in self.outcomes.windows(2) {
            if !(w[0].1 < w[1].1) {
                return Err(Error::Parameter(
                    "outcome time codes must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    /// Names of the fixed effects, in design order.
    pub fn fixed_effect_names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_owned(), "time".to_owned()];
        if let Some(g) = &self.group_col {
            names.push(g.clone());
            names.push(format!("{g}:time"));
        }
        names.extend(self.covariates.iter().cloned());
        names
    }

    pub fn n_fixed(&self) -> usize {
        2 + if self.group_col.is_some() { 2 } else { 0 } + self.covariates.len()
    }
}

/// Named scalar estimands on the standard fixed-effect layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimand {
    /// Mean slope of the treated arm: time + group x time.
    TreatmentSlope,
    /// Difference between the arms' slopes: group x time alone.
    TreatmentEffect,
}

impl std::str::FromStr for Estimand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "treatment-slope" => Ok(Self::TreatmentSlope),
            "treatment-effect" => Ok(Self::TreatmentEffect),
            other => Err(Error::Parameter(format!(
                "unknown estimand '{other}' (expected treatment-slope or treatment-effect)"
            ))),
        }
    }
}

/// Weight vector selecting a named estimand from the fixed effects.
pub fn estimand_weights(spec: &LmmSpec, estimand: Estimand) -> Result<Vec<f64>> {
    if spec.group_col.is_none() {
        return Err(Error::Parameter(
            "named estimands require a group column in the model".into(),
        ));
    }
    let mut w = vec![0.0; spec.n_fixed()];
    match estimand {
        Estimand::TreatmentSlope => {
            w[1] = 1.0;
            w[3] = 1.0;
        }
        Estimand::TreatmentEffect => {
            w[3] = 1.0;
        }
    }
    Ok(w)
}

/// Fitted model.
#[derive(Debug, Clone)]
pub struct LmmFit {
    pub fixed_names: Vec<String>,
    pub fixed_estimates: DVector<f64>,
    /// Model-based covariance of the fixed effects.
    pub fixed_cov: DMatrix<f64>,
    pub re_cov_hat: Matrix2<f64>,
    pub resid_var_hat: f64,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Best profiled deviance after each optimizer iteration;
    /// non-increasing by construction.
    pub deviance_trace: Vec<f64>,
}

/// Scalar estimand `w' beta` with model-based variance `w' Cov w`.
pub fn scalar_estimand(fit: &LmmFit, weights: &[f64]) -> Result<ScalarEstimate> {
    let p = fit.fixed_estimates.len();
    if weights.len() != p {
        return Err(Error::Parameter(format!(
            "{} weights for {p} fixed effects",
            weights.len()
        )));
    }
    let w = DVector::from_column_slice(weights);
    let q_hat = w.dot(&fit.fixed_estimates);
    let u = (w.transpose() * &fit.fixed_cov * &w)[(0, 0)];
    Ok(ScalarEstimate::new(q_hat, u))
}

// ---------------------------------------------------------------------------
// Long-format sufficient statistics
// ---------------------------------------------------------------------------

/// Subjects sharing observed timepoints and fixed-effect values collapse
/// into one group: `X` and `Z` are shared, and only the per-group sums
/// `sum(y)` and `sum(y y')` grow with the subject count.
struct PatternGroup {
    time_key: usize,
    x: DMatrix<f64>,
    count: f64,
    sy: DVector<f64>,
    syy: DMatrix<f64>,
}

struct LongData {
    p: usize,
    fixed_names: Vec<String>,
    /// Random-effect design (intercept, time) per distinct timepoint set.
    z_patterns: Vec<DMatrix<f64>>,
    groups: Vec<PatternGroup>,
    n_obs: f64,
}

fn build_long_data(d: &LongitudinalDataset, spec: &LmmSpec) -> Result<LongData> {
    spec.validate()?;
    let subject_col = d
        .column_index(&spec.subject_col)
        .ok_or_else(|| Error::Config(format!("subject column '{}' not found", spec.subject_col)))?;
    let _ = subject_col; // one dataset row per subject; the column is identity here
    let group_col = match &spec.group_col {
        Some(g) => Some(
            d.column_index(g)
                .ok_or_else(|| Error::Config(format!("group column '{g}' not found")))?,
        ),
        None => None,
    };
    let outcome_cols: Vec<(usize, f64)> = spec
        .outcomes
        .iter()
        .map(|(name, t)| {
            d.column_index(name)
                .map(|c| (c, *t))
                .ok_or_else(|| Error::Config(format!("outcome column '{name}' not found")))
        })
        .collect::<Result<_>>()?;
    let covar_cols: Vec<usize> = spec
        .covariates
        .iter()
        .map(|name| {
            d.column_index(name)
                .ok_or_else(|| Error::Config(format!("covariate column '{name}' not found")))
        })
        .collect::<Result<_>>()?;

    // Resolve the group dummy coding: two levels, larger value = 1.
    let group_levels = if let Some(g) = group_col {
        let mut levels: Vec<f64> = Vec::new();
        for r in 0..d.n_subjects() {
            let v = d
                .observed(r, g)
                .ok_or_else(|| Error::Data(format!("group value missing at row {r}")))?;
            if !levels.contains(&v) {
                levels.push(v);
            }
        }
        levels.sort_by(|a, b| a.partial_cmp(b).expect("finite group levels"));
        if levels.len() != 2 {
            return Err(Error::Data(format!(
                "group column must have exactly 2 levels, found {}",
                levels.len()
            )));
        }
        Some(levels)
    } else {
        None
    };

    let p = spec.n_fixed();
    let mut z_patterns: Vec<DMatrix<f64>> = Vec::new();
    let mut z_index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups: Vec<PatternGroup> = Vec::new();
    let mut group_index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut n_obs = 0.0f64;

    for r in 0..d.n_subjects() {
        let obs: Vec<(f64, f64)> = outcome_cols
            .iter()
            .filter(|(c, _)| !d.is_missing(r, *c))
            .map(|(c, t)| (*t, d.value(r, *c)))
            .collect();
        if obs.is_empty() {
            return Err(Error::Data(format!(
                "subject at row {r} contributes no observed outcomes"
            )));
        }
        let dummy: f64 = match (&group_levels, group_col) {
            (Some(levels), Some(g)) => {
                if d.value(r, g) == levels[1] {
                    1.0
                } else {
                    0.0
                }
            }
            _ => 0.0,
        };
        let covs: Vec<f64> = covar_cols
            .iter()
            .map(|&c| {
                d.observed(r, c).ok_or_else(|| {
                    Error::Data(format!(
                        "covariate '{}' missing at row {r}",
                        d.columns()[c].name
                    ))
                })
            })
            .collect::<Result<_>>()?;

        let time_key_bits: Vec<u64> = obs.iter().map(|(t, _)| t.to_bits()).collect();
        let mut group_key = time_key_bits.clone();
        group_key.push(dummy.to_bits());
        group_key.extend(covs.iter().map(|v| v.to_bits()));

        let n_t = obs.len();
        n_obs += n_t as f64;
        let gi = *group_index.entry(group_key).or_insert_with(|| {
            let zi = *z_index.entry(time_key_bits.clone()).or_insert_with(|| {
                let z = DMatrix::from_fn(n_t, 2, |i, j| if j == 0 { 1.0 } else { obs[i].0 });
                z_patterns.push(z);
                z_patterns.len() - 1
            });
            let x = DMatrix::from_fn(n_t, p, |i, j| {
                let t = obs[i].0;
                match j {
                    0 => 1.0,
                    1 => t,
                    2 if group_col.is_some() => dummy,
                    3 if group_col.is_some() => dummy * t,
                    _ => {
                        let offset = if group_col.is_some() { 4 } else { 2 };
                        covs[j - offset]
                    }
                }
            });
            groups.push(PatternGroup {
                time_key: zi,
                x,
                count: 0.0,
                sy: DVector::zeros(n_t),
                syy: DMatrix::zeros(n_t, n_t),
            });
            groups.len() - 1
        });
        let g = &mut groups[gi];
        g.count += 1.0;
        for i in 0..n_t {
            g.sy[i] += obs[i].1;
            for j in 0..n_t {
                g.syy[(i, j)] += obs[i].1 * obs[j].1;
            }
        }
    }

    Ok(LongData {
        p,
        fixed_names: spec.fixed_effect_names(),
        z_patterns,
        groups,
        n_obs,
    })
}

// ---------------------------------------------------------------------------
// Profiled objective
// ---------------------------------------------------------------------------

struct ProfileEval {
    beta: DVector<f64>,
    a_chol: Cholesky<f64, Dyn>,
    sigma2: f64,
    logdet_sigma: f64,
    logdet_a: f64,
    deviance: f64,
}

/// Generalized least squares at fixed per-pattern covariance factors.
/// `sigma_chols[k]` is the Cholesky factor of pattern `k`'s scaled
/// covariance; returns the GLS solution, the factored normal equations,
/// and the residual quadratic form.
fn gls_accumulate(
    data: &LongData,
    sigma_chols: &[Cholesky<f64, Dyn>],
) -> Result<(DVector<f64>, Cholesky<f64, Dyn>, f64)> {
    let p = data.p;
    let mut a = DMatrix::zeros(p, p);
    let mut b = DVector::zeros(p);
    let mut q_yy = 0.0f64;
    for g in &data.groups {
        let chol = &sigma_chols[g.time_key];
        let sx = chol.solve(&g.x);
        a += g.x.transpose() * &sx * g.count;
        b += sx.transpose() * &g.sy;
        q_yy += chol.solve(&g.syy).trace();
    }
    let a_copy = a.clone();
    let a_chol = Cholesky::new(a).ok_or_else(|| Error::SingularDesign {
        columns: data.fixed_names.clone(),
    })?;
    let beta = a_chol.solve(&b);
    let quad = (q_yy - 2.0 * beta.dot(&b) + beta.dot(&(&a_copy * &beta))).max(0.0);
    Ok((beta, a_chol, quad))
}

fn ratio_cholesky(theta: &[f64; 3]) -> [[f64; 2]; 2] {
    let l00 = theta[0].clamp(-40.0, 40.0).exp();
    let l11 = theta[1].clamp(-40.0, 40.0).exp();
    let l10 = theta[2].clamp(-1e8, 1e8);
    [[l00, 0.0], [l10, l11]]
}

fn eval_profile(data: &LongData, theta: &[f64; 3], reml: bool) -> Result<ProfileEval> {
    let l = ratio_cholesky(theta);
    let mut sigma_chols: Vec<Cholesky<f64, Dyn>> = Vec::with_capacity(data.z_patterns.len());
    let mut pattern_logdets: Vec<f64> = Vec::with_capacity(data.z_patterns.len());
    for z in &data.z_patterns {
        let n_t = z.nrows();
        // Sigma = (Z L)(Z L)' + I with L the scaled-G Cholesky factor.
        let mut sigma = DMatrix::identity(n_t, n_t);
        for i in 0..n_t {
            let ai0 = z[(i, 0)] * l[0][0] + z[(i, 1)] * l[1][0];
            let ai1 = z[(i, 1)] * l[1][1];
            for j in 0..n_t {
                let aj0 = z[(j, 0)] * l[0][0] + z[(j, 1)] * l[1][0];
                let aj1 = z[(j, 1)] * l[1][1];
                sigma[(i, j)] += ai0 * aj0 + ai1 * aj1;
            }
        }
        let chol = Cholesky::new(sigma).ok_or_else(|| {
            Error::Data("scaled covariance is not positive definite".into())
        })?;
        let logdet = 2.0 * chol.l().diagonal().map(|x: f64| x.ln()).sum();
        sigma_chols.push(chol);
        pattern_logdets.push(logdet);
    }
    let logdet_sigma: f64 = data
        .groups
        .iter()
        .map(|g| g.count * pattern_logdets[g.time_key])
        .sum();

    let (beta, a_chol, quad) = gls_accumulate(data, &sigma_chols)?;
    let logdet_a = 2.0 * a_chol.l().diagonal().map(|x| x.ln()).sum();

    let denom = if reml {
        data.n_obs - data.p as f64
    } else {
        data.n_obs
    };
    let sigma2 = quad / denom;
    let sigma2_clamped = sigma2.max(f64::MIN_POSITIVE);
    let deviance = if reml {
        denom * sigma2_clamped.ln() + logdet_sigma + logdet_a
    } else {
        denom * sigma2_clamped.ln() + logdet_sigma
    };
    Ok(ProfileEval {
        beta,
        a_chol,
        sigma2,
        logdet_sigma,
        logdet_a,
        deviance,
    })
}

// ---------------------------------------------------------------------------
// Nelder-Mead
// ---------------------------------------------------------------------------

struct NmOutcome {
    x: [f64; 3],
    f: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

/// Deterministic Nelder-Mead over three parameters. Converges when the
/// simplex is flat in value (relative spread below `ftol`) and tight in
/// parameters (`xtol`). Restarts with a smaller simplex around the best
/// point when progress stalls inside the iteration budget; near-flat
/// valleys otherwise keep accepting hairline reflections and the simplex
/// never contracts.
fn nelder_mead(
    f: impl Fn(&[f64; 3]) -> f64,
    x0: [f64; 3],
    step: f64,
    max_iter: usize,
    ftol: f64,
    xtol: f64,
) -> NmOutcome {
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut start = x0;
    let mut start_step = step;

    'segments: while iterations < max_iter {
        let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
        simplex.push((start, f(&start)));
        for i in 0..3 {
            let mut x = start;
            x[i] += start_step;
            simplex.push((x, f(&x)));
        }
        let segment_budget = (max_iter - iterations).min(max_iter / 3 + 1);
        let mut segment_iter = 0;

        while segment_iter < segment_budget {
            iterations += 1;
            segment_iter += 1;
            simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
            let best = simplex[0].1;
            let worst = simplex[3].1;
            trace.push(best);

            let fspread = (worst - best).abs();
            let xspread = (0..3)
                .map(|i| {
                    let vals: Vec<f64> = simplex.iter().map(|(x, _)| x[i]).collect();
                    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    hi - lo
                })
                .fold(0.0f64, f64::max);
            // Secondary stop for boundary ridges where hairline reflections
            // keep getting accepted and the simplex never contracts: if a
            // 50-iteration window improves the best value by less than the
            // relative tolerance, the basin floor is reached.
            let window_flat = trace.len() >= 50
                && trace[trace.len() - 50] - best <= ftol * (best.abs() + ftol);
            if (fspread <= ftol * (best.abs() + ftol) && xspread <= xtol) || window_flat {
                converged = true;
            }
            if converged || iterations >= max_iter {
                start = simplex[0].0;
                break 'segments;
            }

            // Centroid of all but the worst.
            let mut centroid = [0.0; 3];
            for (x, _) in &simplex[..3] {
                for i in 0..3 {
                    centroid[i] += x[i] / 3.0;
                }
            }
            let xw = simplex[3].0;
            let reflect = |alpha: f64| {
                let mut x = [0.0; 3];
                for i in 0..3 {
                    x[i] = centroid[i] + alpha * (centroid[i] - xw[i]);
                }
                x
            };

            let xr = reflect(1.0);
            let fr = f(&xr);
            if fr < simplex[0].1 {
                let xe = reflect(2.0);
                let fe = f(&xe);
                simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[2].1 {
                simplex[3] = (xr, fr);
            } else {
                let xc = if fr < simplex[3].1 {
                    reflect(0.5)
                } else {
                    reflect(-0.5)
                };
                let fc = f(&xc);
                if fc < simplex[3].1.min(fr) {
                    simplex[3] = (xc, fc);
                } else {
                    // Shrink toward the best vertex.
                    let xb = simplex[0].0;
                    for k in 1..4 {
                        let mut x = [0.0; 3];
                        for i in 0..3 {
                            x[i] = xb[i] + 0.5 * (simplex[k].0[i] - xb[i]);
                        }
                        simplex[k] = (x, f(&x));
                    }
                }
            }
        }
        // Segment exhausted without convergence: restart tighter around
        // the incumbent best.
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        start = simplex[0].0;
        start_step *= 0.1;
    }

    let f_best = f(&start);
    NmOutcome {
        x: start,
        f: f_best,
        iterations,
        converged,
        trace,
    }
}

// ---------------------------------------------------------------------------
// Public fits
// ---------------------------------------------------------------------------

const MAX_ITER: usize = 500;
const FTOL: f64 = 1e-8;
const XTOL: f64 = 1e-6;

/// Fit the random intercept + slope model by (restricted) maximum
/// likelihood.
pub fn fit_lmm_ml(d: &LongitudinalDataset, spec: &LmmSpec) -> Result<LmmFit> {
    let data = build_long_data(d, spec)?;
    if data.n_obs <= data.p as f64 {
        return Err(Error::Data(format!(
            "{} observations cannot identify {} fixed effects",
            data.n_obs, data.p
        )));
    }

    // Structural problems (rank-deficient design) surface on the first
    // evaluation; numeric failures later on are treated as +inf.
    let theta0 = [-0.5, -0.5, 0.0];
    eval_profile(&data, &theta0, spec.reml)?;

    let objective = |theta: &[f64; 3]| -> f64 {
        eval_profile(&data, theta, spec.reml)
            .map(|e| e.deviance)
            .unwrap_or(f64::INFINITY)
    };
    let nm = nelder_mead(objective, theta0, 0.7, MAX_ITER, FTOL, XTOL);
    let eval = eval_profile(&data, &nm.x, spec.reml)?;

    if !nm.converged {
        let denom = if spec.reml {
            data.n_obs - data.p as f64
        } else {
            data.n_obs
        };
        let best_loglik = -0.5 * (nm.f + denom * (1.0 + (2.0 * std::f64::consts::PI).ln()));
        return Err(Error::NonConvergence {
            iterations: nm.iterations,
            best_loglik,
            loglik_trace: nm
                .trace
                .iter()
                .map(|dev| -0.5 * (dev + denom * (1.0 + (2.0 * std::f64::consts::PI).ln())))
                .collect(),
        });
    }

    let l = ratio_cholesky(&nm.x);
    let sigma2 = eval.sigma2;
    let re_cov_hat = Matrix2::new(
        l[0][0] * l[0][0],
        l[0][0] * l[1][0],
        l[0][0] * l[1][0],
        l[1][0] * l[1][0] + l[1][1] * l[1][1],
    ) * sigma2;
    let fixed_cov = eval.a_chol.inverse() * sigma2;

    let two_pi_ln = (2.0 * std::f64::consts::PI).ln();
    let sigma2_c = sigma2.max(f64::MIN_POSITIVE);
    let loglik = if spec.reml {
        let np = data.n_obs - data.p as f64;
        -0.5 * (np * two_pi_ln
            + np
            + np * sigma2_c.ln()
            + eval.logdet_sigma
            + eval.logdet_a)
    } else {
        -0.5 * (data.n_obs * two_pi_ln + data.n_obs + data.n_obs * sigma2_c.ln() + eval.logdet_sigma)
    };

    Ok(LmmFit {
        fixed_names: data.fixed_names.clone(),
        fixed_estimates: eval.beta,
        fixed_cov,
        re_cov_hat,
        resid_var_hat: sigma2,
        loglik,
        converged: nm.converged,
        iterations: nm.iterations,
        deviance_trace: nm.trace,
    })
}

/// Closed-form generalized least squares with known variance components.
/// `V_i = Z_i G Z_i' + sigma2 I`; no iteration. Test oracle for the ML fit.
pub fn gls_known_variance(
    d: &LongitudinalDataset,
    spec: &LmmSpec,
    g: &Matrix2<f64>,
    sigma2: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if sigma2 <= 0.0 {
        return Err(Error::Parameter("sigma2 must be positive".into()));
    }
    if g[(0, 1)] != g[(1, 0)]
        || g[(0, 0)] < 0.0
        || g[(1, 1)] < 0.0
        || g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(0, 1)] < -1e-12
    {
        return Err(Error::Parameter(
            "G must be symmetric positive semidefinite".into(),
        ));
    }
    let data = build_long_data(d, spec)?;
    let mut sigma_chols = Vec::with_capacity(data.z_patterns.len());
    for z in &data.z_patterns {
        let n_t = z.nrows();
        let v = z * g * z.transpose() + DMatrix::identity(n_t, n_t) * sigma2;
        let chol = Cholesky::new(v)
            .ok_or_else(|| Error::Data("V is not positive definite".into()))?;
        sigma_chols.push(chol);
    }
    let (beta, a_chol, _) = gls_accumulate(&data, &sigma_chols)?;
    Ok((beta, a_chol.inverse()))
}
