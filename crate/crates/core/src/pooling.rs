//! Combining rules for nested multiple imputation and rates of missing
//! information, plus flat single-model pooling as a baseline.
//!
//! An `M x N` grid of completed-data analyses (M models, N imputations per
//! model) is pooled into one inference whose total variance carries three
//! parts: the average complete-data variance, the between-model variance
//! inflated by `1 + 1/M`, and the within-model variance weighted by
//! `1 - 1/N`. Interval estimates use a Student-t reference whose degrees of
//! freedom blend the two variance-component degrees of freedom.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// A completed-data scalar analysis: point estimate and its variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarEstimate {
    pub q_hat: f64,
    pub u: f64,
}

impl ScalarEstimate {
    pub fn new(q_hat: f64, u: f64) -> Self {
        Self { q_hat, u }
    }
}

/// Full `M x N` grid of completed-data analyses, row-major by model.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedEstimateGrid {
    m: usize,
    n: usize,
    estimates: Vec<ScalarEstimate>,
}

impl NestedEstimateGrid {
    /// Build from a flat vector laid out model-major: entry `m * n + i` is
    /// imputation `i` under model `m`.
    pub fn from_flat(m: usize, n: usize, estimates: Vec<ScalarEstimate>) -> Result<Self> {
        if m < 2 {
            return Err(Error::Data(format!(
                "nested pooling requires m >= 2 models, got {m}"
            )));
        }
        if n < 1 {
            return Err(Error::Data("at least one imputation per model is required".into()));
        }
        if estimates.len() != m * n {
            return Err(Error::Data(format!(
                "grid has holes: expected {m}x{n}={} estimates, got {}",
                m * n,
                estimates.len()
            )));
        }
        Ok(Self { m, n, estimates })
    }

    pub fn from_rows(rows: Vec<Vec<ScalarEstimate>>) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Data("grid has holes: ragged model rows".into()));
        }
        Self::from_flat(m, n, rows.into_iter().flatten().collect())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, model: usize, imputation: usize) -> &ScalarEstimate {
        &self.estimates[model * self.n + imputation]
    }

    fn model_row(&self, model: usize) -> &[ScalarEstimate] {
        &self.estimates[model * self.n..(model + 1) * self.n]
    }
}

/// Rates of missing information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissingInformation {
    /// Overall rate: fraction of total variance from nonresponse plus
    /// model uncertainty.
    pub gamma: f64,
    /// Rate due to nonresponse alone (correct model known).
    pub gamma_w: f64,
    /// Rate due to model uncertainty, clamped at zero: the moment
    /// estimator can go negative when there is no model uncertainty.
    pub gamma_b: f64,
    /// Contribution of model uncertainty to the overall rate, in [0, 1].
    pub gamma_ratio: f64,
}

/// Rates of missing information from the pooled variance components.
///
/// `gamma = (B + (1-1/N)W) / (U + B + (1-1/N)W)`, `gamma_w = W / (U + W)`,
/// `gamma_b = max(gamma - gamma_w, 0)`, and the ratio is `gamma_b / gamma`
/// (zero when `gamma` is zero). Only `gamma_b` and the ratio are clamped;
/// `gamma` and `gamma_w` are reported as computed.
pub fn missing_information(u_bar: f64, w: f64, b: f64, n: usize) -> Result<MissingInformation> {
    if !(u_bar > 0.0) {
        return Err(Error::Data(format!(
            "average complete-data variance must be positive, got {u_bar}"
        )));
    }
    if w < 0.0 || b < 0.0 || !w.is_finite() || !b.is_finite() {
        return Err(Error::Data(format!(
            "variance components must be finite and nonnegative (W={w}, B={b})"
        )));
    }
    if n < 1 {
        return Err(Error::Data("n must be >= 1".into()));
    }
    Ok(missing_information_unchecked(u_bar, w, b, n))
}

fn missing_information_unchecked(u_bar: f64, w: f64, b: f64, n: usize) -> MissingInformation {
    let wn = (1.0 - 1.0 / n as f64) * w;
    let numer = b + wn;
    let gamma = if numer > 0.0 { numer / (u_bar + numer) } else { 0.0 };
    let gamma_w = if w > 0.0 { w / (u_bar + w) } else { 0.0 };
    let gamma_b = (gamma - gamma_w).max(0.0);
    let gamma_ratio = if gamma > 0.0 { gamma_b / gamma } else { 0.0 };
    MissingInformation {
        gamma,
        gamma_w,
        gamma_b,
        gamma_ratio,
    }
}

/// Result of pooling a grid of completed-data analyses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledInference {
    /// Pooled point estimate (grand mean of the grid).
    pub q_bar: f64,
    /// Average complete-data variance.
    pub u_bar: f64,
    /// Within-model variance (zero when N = 1, where it is unidentified
    /// and carries zero weight).
    pub w: f64,
    /// Between-model variance.
    pub b: f64,
    /// Total variance of the pooled estimate.
    pub t: f64,
    /// Degrees of freedom of the t reference; `f64::INFINITY` switches the
    /// reference to the normal distribution.
    pub df: f64,
    pub ci: (f64, f64),
    /// Two-sided p-value against zero.
    pub p_value: f64,
    pub gamma: f64,
    pub gamma_w: f64,
    pub gamma_b: f64,
    pub gamma_ratio: f64,
    /// Confidence level of `ci`.
    pub level: f64,
}

fn reference_quantile(df: f64, prob: f64) -> f64 {
    if df.is_finite() {
        StudentsT::new(0.0, 1.0, df)
            .expect("positive degrees of freedom")
            .inverse_cdf(prob)
    } else {
        Normal::standard().inverse_cdf(prob)
    }
}

fn reference_sf(df: f64, x: f64) -> f64 {
    if df.is_finite() {
        StudentsT::new(0.0, 1.0, df)
            .expect("positive degrees of freedom")
            .sf(x)
    } else {
        Normal::standard().sf(x)
    }
}

/// Pool a full `M x N` grid with the nested combining rules.
///
/// With `Q_hat` the per-dataset estimates and `U` their variances:
/// `T = U_bar + (1 + 1/M) B + (1 - 1/N) W`, and the reference df follows
/// from the squared relative shares of the two variance components. A grid
/// with no estimation spread (B = W = 0) gets an infinite-df (normal)
/// reference. `N = 1` grids are accepted; the W term has weight zero and
/// contributes nothing to the df.
pub fn pool_nested(grid: &NestedEstimateGrid, level: f64) -> Result<PooledInference> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::Parameter(format!(
            "confidence level must be in (0,1), got {level}"
        )));
    }
    let (m, n) = (grid.m, grid.n);
    for e in &grid.estimates {
        if !e.q_hat.is_finite() || !e.u.is_finite() || e.u < 0.0 {
            return Err(Error::Data(format!(
                "estimates must be finite with nonnegative variance, got ({}, {})",
                e.q_hat, e.u
            )));
        }
    }
    let (mf, nf) = (m as f64, n as f64);
    let q_bar = grid.estimates.iter().map(|e| e.q_hat).sum::<f64>() / (mf * nf);
    let u_bar = grid.estimates.iter().map(|e| e.u).sum::<f64>() / (mf * nf);
    let model_means: Vec<f64> = (0..m)
        .map(|i| grid.model_row(i).iter().map(|e| e.q_hat).sum::<f64>() / nf)
        .collect();
    let b = model_means.iter().map(|q| (q - q_bar).powi(2)).sum::<f64>() / (mf - 1.0);
    let w = if n > 1 {
        (0..m)
            .map(|i| {
                grid.model_row(i)
                    .iter()
                    .map(|e| (e.q_hat - model_means[i]).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / (mf * (nf - 1.0))
    } else {
        0.0
    };

    let b_term = (1.0 + 1.0 / mf) * b;
    let w_term = (1.0 - 1.0 / nf) * w;
    let t = u_bar + b_term + w_term;

    let mut df_inv = 0.0;
    if t > 0.0 {
        if b_term > 0.0 {
            df_inv += (b_term / t).powi(2) / (mf - 1.0);
        }
        if n > 1 && w_term > 0.0 {
            df_inv += (w_term / t).powi(2) / (mf * (nf - 1.0));
        }
    }
    let df = if df_inv > 0.0 { 1.0 / df_inv } else { f64::INFINITY };

    let se = t.sqrt();
    let half = if se > 0.0 {
        reference_quantile(df, 0.5 + level / 2.0) * se
    } else {
        0.0
    };
    let ci = (q_bar - half, q_bar + half);
    let p_value = if se > 0.0 {
        2.0 * reference_sf(df, (q_bar / se).abs())
    } else if q_bar == 0.0 {
        1.0
    } else {
        0.0
    };

    let mi = if u_bar > 0.0 {
        missing_information_unchecked(u_bar, w, b, n)
    } else {
        MissingInformation {
            gamma: 0.0,
            gamma_w: 0.0,
            gamma_b: 0.0,
            gamma_ratio: 0.0,
        }
    };

    Ok(PooledInference {
        q_bar,
        u_bar,
        w,
        b,
        t,
        df,
        ci,
        p_value,
        gamma: mi.gamma,
        gamma_w: mi.gamma_w,
        gamma_b: mi.gamma_b,
        gamma_ratio: mi.gamma_ratio,
        level,
    })
}

/// Standard single-model pooling of a list of completed-data analyses.
///
/// Algebraically this is the nested rule with one imputation per model:
/// `T = U_bar + (1 + 1/m) B` with the classic df. Only meaningful when all
/// imputations come from one posterior; the nested rules exist because
/// these underestimate `T` across models.
pub fn pool_flat(estimates: &[ScalarEstimate], level: f64) -> Result<PooledInference> {
    if estimates.len() < 2 {
        return Err(Error::Data(format!(
            "flat pooling requires at least 2 estimates, got {}",
            estimates.len()
        )));
    }
    let grid = NestedEstimateGrid::from_flat(estimates.len(), 1, estimates.to_vec())?;
    pool_nested(&grid, level)
}
