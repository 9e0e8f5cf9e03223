//! Ignorable (MAR) multiple imputation for continuous columns.
//!
//! Each column is imputed from a Bayesian linear regression: the residual
//! variance is drawn from its scaled inverse chi-square posterior, the
//! coefficients from their conditional normal, and each missing cell
//! receives its linear prediction plus a fresh residual draw. The monotone
//! driver sweeps columns left to right, conditioning each on all earlier
//! ones; the chained driver initializes with stratum means and cycles
//! full-conditional regressions. Per-group imputation never mixes rows
//! across strata, and every imputation owns its own derived stream.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnType, LongitudinalDataset};
use crate::error::{Error, Result};
use crate::stream::StreamPath;

/// Which driver completes the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImputationDriver {
    /// Monotone-sequential when the pattern allows it, chained otherwise.
    #[default]
    Auto,
    Monotone,
    /// Chained equations regardless of pattern. Conditions every column on
    /// all other listed columns, before and after it.
    Chained,
}

/// Which rows estimate each column's imputation regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitRows {
    /// Rows where the target column is observed. Uses all cases the data
    /// offer for each regression.
    #[default]
    TargetObserved,
    /// Rows observed in every listed column. The classical scheme that
    /// estimates the joint distribution from complete cases and imputes
    /// sequentially from it; with attrition this anchors imputations to
    /// the completers' distribution.
    CompleteCases,
}

/// Configuration shared by the imputation drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputerConfig {
    /// Impute each level of this column separately; no information crosses
    /// strata.
    pub group_by: Option<String>,
    /// Columns entering the imputation model, in conditioning order.
    /// Fully observed columns act as predictors only.
    pub column_order: Vec<String>,
    /// Chained-equations cycles; ignored by the monotone driver.
    pub sweeps: usize,
    /// Relative ridge added to the normal equations (scaled by the mean
    /// diagonal of X'X) to rescue near-singular small strata.
    pub ridge_epsilon: f64,
    #[serde(default)]
    pub driver: ImputationDriver,
    #[serde(default)]
    pub fit_rows: FitRows,
}

impl ImputerConfig {
    pub fn new(column_order: Vec<String>) -> Self {
        Self {
            group_by: None,
            column_order,
            sweeps: 10,
            ridge_epsilon: 1e-8,
            driver: ImputationDriver::Auto,
            fit_rows: FitRows::TargetObserved,
        }
    }

    pub fn validate(&self, d: &LongitudinalDataset) -> Result<()> {
        if self.column_order.is_empty() {
            return Err(Error::Config("column_order must not be empty".into()));
        }
        if self.sweeps == 0 {
            return Err(Error::Config("sweeps must be >= 1".into()));
        }
        if self.ridge_epsilon < 0.0 {
            return Err(Error::Config("ridge_epsilon must be >= 0".into()));
        }
        for name in &self.column_order {
            let col = d
                .column_index(name)
                .ok_or_else(|| Error::Config(format!("column '{name}' not found")))?;
            if d.columns()[col].kind != ColumnType::Continuous {
                return Err(Error::Config(format!(
                    "column '{name}' is not continuous; only continuous columns are imputed"
                )));
            }
        }
        if let Some(g) = &self.group_by {
            if d.column_index(g).is_none() {
                return Err(Error::Config(format!("group column '{g}' not found")));
            }
        }
        Ok(())
    }

    fn column_indices(&self, d: &LongitudinalDataset) -> Result<Vec<usize>> {
        self.column_order
            .iter()
            .map(|name| {
                d.column_index(name)
                    .ok_or_else(|| Error::Config(format!("column '{name}' not found")))
            })
            .collect()
    }
}

/// One draw from the posterior of a linear regression.
#[derive(Debug, Clone)]
pub struct PosteriorDraw {
    pub beta: DVector<f64>,
    pub sigma: f64,
}

/// Cholesky factorization of a symmetric positive definite matrix that
/// reports the first non-positive pivot, i.e. the first column that is
/// linearly dependent on its predecessors.
fn cholesky_with_pivot_check(a: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, usize> {
    let p = a.nrows();
    let mut l = DMatrix::zeros(p, p);
    for j in 0..p {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        // Relative pivot test against the original diagonal.
        if d <= 1e-12 * a[(j, j)].max(f64::MIN_POSITIVE) {
            return Err(j);
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..p {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(l)
}

fn forward_substitute(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        for k in 0..i {
            let v = x[k];
            x[i] -= l[(i, k)] * v;
        }
        x[i] /= l[(i, i)];
    }
    x
}

fn back_substitute_transpose(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = x[k];
            x[i] -= l[(k, i)] * v;
        }
        x[i] /= l[(i, i)];
    }
    x
}

/// Draw `(beta*, sigma*)` from the posterior of `y = X beta + e` under the
/// standard noninformative prior.
///
/// `sigma*^2 = RSS / c` with `c` a chi-square draw on `n - p` degrees of
/// freedom, and `beta*` is normal around the least-squares solution with
/// covariance `sigma*^2 (X'X)^-1`. An exact fit (RSS = 0) collapses both
/// draws to the least-squares solution.
pub fn posterior_draw_linear(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    ridge_epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PosteriorDraw> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(Error::Parameter(format!(
            "design has {n} rows but response has {}",
            y.len()
        )));
    }
    if n <= p {
        return Err(Error::SingularDesign {
            columns: vec![format!("n = {n} rows <= p = {p} columns")],
        });
    }
    let mut xtx = x.transpose() * x;
    if ridge_epsilon > 0.0 {
        let scale = xtx.diagonal().sum() / p as f64;
        for j in 0..p {
            xtx[(j, j)] += ridge_epsilon * scale;
        }
    }
    let l = cholesky_with_pivot_check(&xtx)
        .map_err(|j| Error::SingularDesign { columns: vec![format!("design column {j}")] })?;
    let xty = x.transpose() * y;
    let beta_hat = back_substitute_transpose(&l, &forward_substitute(&l, &xty));
    let resid = y - x * &beta_hat;
    let rss = resid.dot(&resid);

    let df = (n - p) as f64;
    let c: f64 = ChiSquared::new(df).expect("df > 0").sample(rng);
    let sigma2 = if c > 0.0 { rss / c } else { f64::INFINITY };
    let sigma = sigma2.sqrt();

    // beta* = beta_hat + sigma * L^-T z has covariance sigma^2 (X'X)^-1.
    let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta = &beta_hat + back_substitute_transpose(&l, &z) * sigma;
    Ok(PosteriorDraw { beta, sigma })
}

/// Check that missingness is monotone in `cols` for the given rows: once a
/// row is missing in a listed column it stays missing in all later listed
/// columns. Returns the offending column on violation.
fn check_monotone(d: &LongitudinalDataset, cols: &[usize]) -> Result<()> {
    for r in 0..d.n_subjects() {
        let mut seen_missing: Option<usize> = None;
        for &c in cols {
            if d.is_missing(r, c) {
                seen_missing.get_or_insert(c);
            } else if seen_missing.is_some() {
                return Err(Error::NonMonotone {
                    column: d.columns()[c].name.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Regress `target` on `predictors` over `fit_rows` of `work`, then fill
/// `fill_rows` with posterior-predictive draws. Values are read from and
/// written into the working matrix.
#[allow(clippy::too_many_arguments)]
fn impute_column(
    work: &mut DMatrix<f64>,
    column_names: &[String],
    target: usize,
    predictors: &[usize],
    fit_rows: &[usize],
    fill_rows: &[usize],
    ridge_epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let p = predictors.len() + 1;
    let n = fit_rows.len();
    if n <= p {
        return Err(Error::SingularDesign {
            columns: vec![format!(
                "column '{}': {n} observed rows for {p} coefficients in its stratum",
                column_names[target]
            )],
        });
    }
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (i, &r) in fit_rows.iter().enumerate() {
        x[(i, 0)] = 1.0;
        for (j, &c) in predictors.iter().enumerate() {
            x[(i, j + 1)] = work[(r, c)];
        }
        y[i] = work[(r, target)];
    }
    let draw = posterior_draw_linear(&x, &y, ridge_epsilon, rng).map_err(|e| match e {
        Error::SingularDesign { columns } => {
            let named: Vec<String> = columns
                .iter()
                .map(|c| {
                    // Map "design column j" back to a dataset column name.
                    c.strip_prefix("design column ")
                        .and_then(|j| j.parse::<usize>().ok())
                        .map(|j| {
                            if j == 0 {
                                "intercept".to_owned()
                            } else {
                                column_names[predictors[j - 1]].clone()
                            }
                        })
                        .unwrap_or_else(|| c.clone())
                })
                .collect();
            Error::SingularDesign { columns: named }
        }
        other => other,
    })?;
    for &r in fill_rows {
        let mut mu = draw.beta[0];
        for (j, &c) in predictors.iter().enumerate() {
            mu += draw.beta[j + 1] * work[(r, c)];
        }
        let z: f64 = rng.sample(StandardNormal);
        work[(r, target)] = mu + draw.sigma * z;
    }
    Ok(())
}

fn column_names(d: &LongitudinalDataset) -> Vec<String> {
    d.columns().iter().map(|c| c.name.clone()).collect()
}

/// Impute a monotone missingness pattern, left to right in
/// `cfg.column_order`. Each column's regression conditions on all earlier
/// listed columns (observed and previously imputed), restricted to the
/// row's stratum.
pub fn impute_monotone(
    d: &LongitudinalDataset,
    cfg: &ImputerConfig,
    path: &StreamPath,
) -> Result<LongitudinalDataset> {
    cfg.validate(d)?;
    let cols = cfg.column_indices(d)?;
    check_monotone(d, &cols)?;
    if d.total_missing() == 0 {
        return Ok(d.clone());
    }
    let names = column_names(d);
    let group_col = cfg.group_by.as_deref().and_then(|g| d.column_index(g));
    let strata = d.strata(group_col)?;

    let mut out = d.clone();
    let mut work = d.values().clone();
    for (s, rows) in strata.iter().enumerate() {
        let mut rng = path.child("stratum", s as u64).rng();
        for (k, &target) in cols.iter().enumerate() {
            let fill_rows: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&r| d.is_missing(r, target))
                .collect();
            if fill_rows.is_empty() {
                continue;
            }
            let fit_rows: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&r| match cfg.fit_rows {
                    FitRows::TargetObserved => !d.is_missing(r, target),
                    FitRows::CompleteCases => cols.iter().all(|&c| !d.is_missing(r, c)),
                })
                .collect();
            let predictors = &cols[..k];
            impute_column(
                &mut work,
                &names,
                target,
                predictors,
                &fit_rows,
                &fill_rows,
                cfg.ridge_epsilon,
                &mut rng,
            )?;
            for &r in &fill_rows {
                out.fill_cell(r, target, work[(r, target)]);
            }
        }
    }
    Ok(out)
}

/// Impute an arbitrary missingness pattern by chained equations: stratum-
/// mean initialization, then `cfg.sweeps` cycles in which each listed
/// column with missing cells is regressed on all other listed columns and
/// its missing cells redrawn. The last sweep's state is returned.
pub fn impute_chained(
    d: &LongitudinalDataset,
    cfg: &ImputerConfig,
    path: &StreamPath,
) -> Result<LongitudinalDataset> {
    cfg.validate(d)?;
    let cols = cfg.column_indices(d)?;
    if d.total_missing() == 0 {
        return Ok(d.clone());
    }
    let names = column_names(d);
    let group_col = cfg.group_by.as_deref().and_then(|g| d.column_index(g));
    let strata = d.strata(group_col)?;

    let mut out = d.clone();
    let mut work = d.values().clone();
    for (s, rows) in strata.iter().enumerate() {
        let mut rng = path.child("stratum", s as u64).rng();

        // Stratum-mean fill so first-sweep regressions see complete
        // predictors; washed out by subsequent sweeps.
        for &c in &cols {
            let observed: Vec<f64> = rows
                .iter()
                .copied()
                .filter(|&r| !d.is_missing(r, c))
                .map(|r| d.value(r, c))
                .collect();
            if observed.is_empty() {
                return Err(Error::SingularDesign {
                    columns: vec![format!(
                        "column '{}' has no observed values in stratum {s}",
                        names[c]
                    )],
                });
            }
            let mean = observed.iter().sum::<f64>() / observed.len() as f64;
            for &r in rows {
                if d.is_missing(r, c) {
                    work[(r, c)] = mean;
                }
            }
        }

        for _sweep in 0..cfg.sweeps {
            for (k, &target) in cols.iter().enumerate() {
                let fill_rows: Vec<usize> = rows
                    .iter()
                    .copied()
                    .filter(|&r| d.is_missing(r, target))
                    .collect();
                if fill_rows.is_empty() {
                    continue;
                }
                let fit_rows: Vec<usize> = rows
                    .iter()
                    .copied()
                    .filter(|&r| match cfg.fit_rows {
                        FitRows::TargetObserved => !d.is_missing(r, target),
                        FitRows::CompleteCases => cols.iter().all(|&c| !d.is_missing(r, c)),
                    })
                    .collect();
                let predictors: Vec<usize> = cols
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, &c)| c)
                    .collect();
                impute_column(
                    &mut work,
                    &names,
                    target,
                    &predictors,
                    &fit_rows,
                    &fill_rows,
                    cfg.ridge_epsilon,
                    &mut rng,
                )?;
            }
        }
        for &c in &cols {
            for &r in rows {
                if d.is_missing(r, c) {
                    out.fill_cell(r, c, work[(r, c)]);
                }
            }
        }
    }
    Ok(out)
}

/// Generate `count` independent completed datasets, each from its own
/// derived sub-stream. Dispatches to the monotone driver when the pattern
/// allows it, otherwise to chained equations.
pub fn generate_ignorable_set(
    d: &LongitudinalDataset,
    count: usize,
    cfg: &ImputerConfig,
    path: &StreamPath,
) -> Result<Vec<LongitudinalDataset>> {
    cfg.validate(d)?;
    let cols = cfg.column_indices(d)?;
    let use_monotone = match cfg.driver {
        ImputationDriver::Monotone => {
            check_monotone(d, &cols)?;
            true
        }
        ImputationDriver::Chained => false,
        ImputationDriver::Auto => check_monotone(d, &cols).is_ok(),
    };
    (0..count)
        .into_par_iter()
        .map(|i| {
            let sub = path.child("imputation", i as u64);
            if use_monotone {
                impute_monotone(d, cfg, &sub)
            } else {
                impute_chained(d, cfg, &sub)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnRole, ColumnSpec, ColumnType};
    use approx::assert_relative_eq;

    fn yc(name: &str, t: f64) -> ColumnSpec {
        ColumnSpec::new(name, ColumnRole::Outcome { time: t }, ColumnType::Continuous)
    }

    #[test]
    fn exact_fit_collapses_the_draw() {
        let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(20, |i, _| 2.0 + 3.0 * i as f64);
        let mut rng = StreamPath::root(1).rng();
        let draw = posterior_draw_linear(&x, &y, 0.0, &mut rng).unwrap();
        assert!(draw.sigma.abs() < 1e-8, "sigma {}", draw.sigma);
        assert_relative_eq!(draw.beta[0], 2.0, epsilon = 1e-7);
        assert_relative_eq!(draw.beta[1], 3.0, epsilon = 1e-7);
    }

    #[test]
    fn posterior_mean_converges_to_least_squares() {
        let n = 10_000;
        let mut rng = StreamPath::root(2).rng();
        let xs: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let y = DVector::from_fn(n, |i, _| 2.0 * xs[i] + rng.sample::<f64, _>(StandardNormal));
        let mut mean_slope = 0.0;
        let m = 1000;
        for _ in 0..m {
            let draw = posterior_draw_linear(&x, &y, 1e-8, &mut rng).unwrap();
            mean_slope += draw.beta[1];
        }
        mean_slope /= m as f64;
        assert!((mean_slope - 2.0).abs() < 0.01, "mean slope {mean_slope}");
    }

    #[test]
    fn duplicated_column_without_ridge_is_singular() {
        let x = DMatrix::from_fn(10, 3, |i, j| match j {
            0 => 1.0,
            _ => i as f64, // columns 1 and 2 identical
        });
        let y = DVector::from_fn(10, |i, _| i as f64);
        let mut rng = StreamPath::root(3).rng();
        let err = posterior_draw_linear(&x, &y, 0.0, &mut rng).unwrap_err();
        match err {
            Error::SingularDesign { columns } => {
                assert!(columns[0].contains('2'), "{columns:?}")
            }
            other => panic!("expected singular design, got {other}"),
        }
    }

    #[test]
    fn too_few_rows_is_singular() {
        let x = DMatrix::from_element(2, 3, 1.0);
        let y = DVector::zeros(2);
        let mut rng = StreamPath::root(4).rng();
        assert!(matches!(
            posterior_draw_linear(&x, &y, 0.0, &mut rng),
            Err(Error::SingularDesign { .. })
        ));
    }

    fn two_column_monotone() -> LongitudinalDataset {
        // y2 == y1 among observed rows; two rows missing y2.
        let columns = vec![yc("y1", 0.0), yc("y2", 1.0)];
        let mut values = DMatrix::zeros(12, 2);
        let mut mask = DMatrix::from_element(12, 2, false);
        for r in 0..12 {
            let v = 1.0 + r as f64 * 0.5;
            values[(r, 0)] = v;
            values[(r, 1)] = v;
        }
        mask[(10, 1)] = true;
        mask[(11, 1)] = true;
        LongitudinalDataset::new(columns, values, mask).unwrap()
    }

    #[test]
    fn complete_data_is_returned_unchanged() {
        let columns = vec![yc("y1", 0.0), yc("y2", 1.0)];
        let values = DMatrix::from_fn(8, 2, |i, j| (i + j) as f64);
        let d = LongitudinalDataset::complete(columns, values).unwrap();
        let cfg = ImputerConfig::new(vec!["y1".into(), "y2".into()]);
        let out = impute_monotone(&d, &cfg, &StreamPath::root(5)).unwrap();
        assert!(out.bitwise_eq(&d));
        let out = impute_chained(&d, &cfg, &StreamPath::root(5)).unwrap();
        assert!(out.bitwise_eq(&d));
    }

    #[test]
    fn zero_residual_relation_propagates() {
        let d = two_column_monotone();
        let cfg = ImputerConfig {
            ridge_epsilon: 0.0,
            ..ImputerConfig::new(vec!["y1".into(), "y2".into()])
        };
        let out = impute_monotone(&d, &cfg, &StreamPath::root(6)).unwrap();
        for r in [10, 11] {
            assert_relative_eq!(out.value(r, 1), out.value(r, 0), epsilon = 1e-7);
        }
    }

    #[test]
    fn non_monotone_pattern_is_rejected_by_monotone_driver() {
        let columns = vec![yc("y1", 0.0), yc("y2", 1.0)];
        let values = DMatrix::from_fn(10, 2, |i, j| (i * 2 + j) as f64);
        let mut mask = DMatrix::from_element(10, 2, false);
        mask[(0, 0)] = true; // y1 missing while y2 observed
        let d = LongitudinalDataset::new(columns, values, mask).unwrap();
        let cfg = ImputerConfig::new(vec!["y1".into(), "y2".into()]);
        let err = impute_monotone(&d, &cfg, &StreamPath::root(7)).unwrap_err();
        assert!(matches!(err, Error::NonMonotone { .. }), "{err}");
    }

    #[test]
    fn observed_cells_are_never_modified() {
        let d = two_column_monotone();
        let cfg = ImputerConfig::new(vec!["y1".into(), "y2".into()]);
        let out = impute_monotone(&d, &cfg, &StreamPath::root(8)).unwrap();
        for r in 0..d.n_subjects() {
            for c in 0..d.n_columns() {
                if !d.is_missing(r, c) {
                    assert_eq!(out.value(r, c).to_bits(), d.value(r, c).to_bits());
                }
            }
        }
        assert_eq!(out.total_missing(), 0);
    }

    #[test]
    fn single_missing_cell_reduces_to_one_posterior_draw() {
        // With one missing cell in one column, a chained run with one sweep
        // consumes the stream exactly like one posterior draw plus one
        // residual draw.
        let columns = vec![yc("y1", 0.0), yc("y2", 1.0)];
        let mut rng = StreamPath::root(77).rng();
        let values = DMatrix::from_fn(15, 2, |i, j| {
            i as f64 * 0.3 + j as f64 + rng.sample::<f64, _>(StandardNormal)
        });
        let mut mask = DMatrix::from_element(15, 2, false);
        mask[(14, 1)] = true;
        let d = LongitudinalDataset::new(columns, values, mask).unwrap();
        let cfg = ImputerConfig {
            sweeps: 1,
            ..ImputerConfig::new(vec!["y1".into(), "y2".into()])
        };
        let path = StreamPath::root(9);
        let out = impute_chained(&d, &cfg, &path).unwrap();

        let mut rng = path.child("stratum", 0).rng();
        let fit_rows: Vec<usize> = (0..14).collect();
        let x = DMatrix::from_fn(14, 2, |i, j| {
            if j == 0 {
                1.0
            } else {
                d.value(fit_rows[i], 0)
            }
        });
        let y = DVector::from_fn(14, |i, _| d.value(fit_rows[i], 1));
        let draw = posterior_draw_linear(&x, &y, cfg.ridge_epsilon, &mut rng).unwrap();
        let z: f64 = rng.sample(StandardNormal);
        let expect = draw.beta[0] + draw.beta[1] * d.value(14, 0) + draw.sigma * z;
        assert_eq!(out.value(14, 1).to_bits(), expect.to_bits());
    }

    #[test]
    fn set_generation_is_deterministic_and_proper() {
        let d = two_column_monotone();
        let cfg = ImputerConfig::new(vec!["y1".into(), "y2".into()]);
        let path = StreamPath::root(10);
        let one = generate_ignorable_set(&d, 1, &cfg, &path).unwrap();
        assert_eq!(one.len(), 1);
        let a = generate_ignorable_set(&d, 20, &cfg, &path).unwrap();
        let b = generate_ignorable_set(&d, 20, &cfg, &path).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(x.bitwise_eq(y));
        }
        // Proper imputation: completed-data statistics vary across draws.
        let means: Vec<f64> = a
            .iter()
            .map(|d| (0..d.n_subjects()).map(|r| d.value(r, 1)).sum::<f64>() / 12.0)
            .collect();
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
        assert!(var > 0.0);
    }

    #[test]
    fn groups_are_imputed_independently() {
        // Permuting the other group's rows leaves this group's imputations
        // bit-identical under the same stream.
        let columns = vec![
            ColumnSpec::new("g", ColumnRole::Group, ColumnType::Binary),
            yc("y1", 0.0),
            yc("y2", 1.0),
        ];
        let mut rng = StreamPath::root(11).rng();
        let mut values = DMatrix::zeros(24, 3);
        let mut mask = DMatrix::from_element(24, 3, false);
        for r in 0..24 {
            values[(r, 0)] = if r < 12 { 0.0 } else { 1.0 };
            values[(r, 1)] = rng.sample::<f64, _>(StandardNormal);
            values[(r, 2)] = values[(r, 1)] * 0.5 + rng.sample::<f64, _>(StandardNormal);
        }
        for r in [3usize, 7, 15, 20] {
            mask[(r, 2)] = true;
        }
        let d = LongitudinalDataset::new(columns.clone(), values.clone(), mask.clone()).unwrap();

        // Swap two rows inside group 1 (rows 12..24).
        let mut values2 = values.clone();
        let mut mask2 = mask.clone();
        for c in 0..3 {
            values2.swap((13, c), (18, c));
            let t = mask2[(13, c)];
            mask2[(13, c)] = mask2[(18, c)];
            mask2[(18, c)] = t;
        }
        let d2 = LongitudinalDataset::new(columns, values2, mask2).unwrap();

        let cfg = ImputerConfig {
            group_by: Some("g".into()),
            ..ImputerConfig::new(vec!["y1".into(), "y2".into()])
        };
        let path = StreamPath::root(12);
        let out1 = impute_monotone(&d, &cfg, &path).unwrap();
        let out2 = impute_monotone(&d2, &cfg, &path).unwrap();
        for r in [3usize, 7] {
            assert_eq!(out1.value(r, 2).to_bits(), out2.value(r, 2).to_bits());
        }
    }
}
