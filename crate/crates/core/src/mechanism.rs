//! The nonignorable layer: multiplier distributions, the transform applied
//! to imputed values, round-to-observed support, and elicitation of a
//! multiplier distribution from expert bounds.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::LongitudinalDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiplierFamily {
    Normal,
    Uniform,
    Point,
}

/// Distribution over the multiplier `k`. A mean of 1 with zero spread is
/// the ignorable (MAR) model; spread encodes mechanism uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierDistribution {
    pub family: MultiplierFamily,
    /// Mean (normal), lower bound (uniform), or the value (point).
    pub param1: f64,
    /// Standard deviation (normal), upper bound (uniform); unused for point.
    pub param2: f64,
}

impl MultiplierDistribution {
    pub fn normal(mean: f64, sd: f64) -> Self {
        Self {
            family: MultiplierFamily::Normal,
            param1: mean,
            param2: sd,
        }
    }

    pub fn uniform(lower: f64, upper: f64) -> Self {
        Self {
            family: MultiplierFamily::Uniform,
            param1: lower,
            param2: upper,
        }
    }

    pub fn point(value: f64) -> Self {
        Self {
            family: MultiplierFamily::Point,
            param1: value,
            param2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.param1.is_finite() || !self.param2.is_finite() {
            return Err(Error::Parameter(
                "multiplier distribution parameters must be finite".into(),
            ));
        }
        match self.family {
            MultiplierFamily::Normal => {
                if self.param2 < 0.0 {
                    return Err(Error::Parameter(format!(
                        "normal multiplier sd must be >= 0, got {}",
                        self.param2
                    )));
                }
            }
            MultiplierFamily::Uniform => {
                if self.param1 > self.param2 {
                    return Err(Error::Parameter(format!(
                        "uniform multiplier bounds out of order: {} > {}",
                        self.param1, self.param2
                    )));
                }
            }
            MultiplierFamily::Point => {}
        }
        Ok(())
    }
}

impl std::fmt::Display for MultiplierDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.family {
            MultiplierFamily::Normal => write!(f, "normal mean={} sd={}", self.param1, self.param2),
            MultiplierFamily::Uniform => {
                write!(f, "uniform lower={} upper={}", self.param1, self.param2)
            }
            MultiplierFamily::Point => write!(f, "point value={}", self.param1),
        }
    }
}

/// How a drawn multiplier is applied to imputed cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub dist: MultiplierDistribution,
    /// Replace each transformed cell by the nearest observed value in its
    /// column (and imputation stratum), producing plausible scores.
    pub round_to_observed: bool,
    /// Optional clamp applied after the multiplier, before rounding.
    pub clamp_range: Option<(f64, f64)>,
}

impl MechanismSpec {
    pub fn new(dist: MultiplierDistribution) -> Self {
        Self {
            dist,
            round_to_observed: false,
            clamp_range: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dist.validate()?;
        if let Some((lo, hi)) = self.clamp_range {
            if !(lo <= hi) {
                return Err(Error::Parameter(format!(
                    "clamp range out of order: {lo} > {hi}"
                )));
            }
        }
        Ok(())
    }
}

/// Transform one ignorable imputed value by multiplier `k`.
///
/// Returns `(k-1)*|y| + y`, which equals `k*y` for `y >= 0` and is
/// nondecreasing in `k` for every `y`.
pub fn apply_multiplier(y: f64, k: f64) -> f64 {
    (k - 1.0) * y.abs() + y
}

/// One draw from the multiplier distribution. Point and zero-spread
/// families return `param1` exactly without consuming the stream.
pub fn draw_multiplier(dist: &MultiplierDistribution, rng: &mut ChaCha8Rng) -> f64 {
    match dist.family {
        MultiplierFamily::Point => dist.param1,
        MultiplierFamily::Normal => {
            if dist.param2 == 0.0 {
                dist.param1
            } else {
                Normal::new(dist.param1, dist.param2)
                    .expect("validated normal parameters")
                    .sample(rng)
            }
        }
        MultiplierFamily::Uniform => {
            if dist.param1 == dist.param2 {
                dist.param1
            } else {
                Uniform::new(dist.param1, dist.param2)
                    .expect("validated uniform bounds")
                    .sample(rng)
            }
        }
    }
}

/// Per-column, per-stratum sorted observed values used as the rounding
/// support, plus the row-to-stratum map of the source dataset.
#[derive(Debug, Clone)]
pub struct ObservedPool {
    /// Transform column index paired with one sorted value pool per stratum.
    columns: Vec<(usize, Vec<Vec<f64>>)>,
    row_stratum: Vec<usize>,
}

impl ObservedPool {
    pub fn column_indices(&self) -> Vec<usize> {
        self.columns.iter().map(|(c, _)| *c).collect()
    }
}

/// Collect the pre-imputation observed values of each transform column,
/// within the strata that per-group imputation uses.
pub fn build_observed_pool(
    original: &LongitudinalDataset,
    group_by: Option<&str>,
    transform_columns: &[String],
) -> Result<ObservedPool> {
    let group_col = match group_by {
        Some(name) => Some(original.column_index(name).ok_or_else(|| {
            Error::Config(format!("group column '{name}' not found"))
        })?),
        None => None,
    };
    let strata = original.strata(group_col)?;
    let mut row_stratum = vec![0usize; original.n_subjects()];
    for (s, rows) in strata.iter().enumerate() {
        for &r in rows {
            row_stratum[r] = s;
        }
    }
    let mut columns = Vec::with_capacity(transform_columns.len());
    for name in transform_columns {
        let col = original
            .column_index(name)
            .ok_or_else(|| Error::Config(format!("transform column '{name}' not found")))?;
        let pools = strata
            .iter()
            .map(|rows| {
                let mut vs: Vec<f64> = rows
                    .iter()
                    .filter(|&&r| !original.is_missing(r, col))
                    .map(|&r| original.value(r, col))
                    .collect();
                vs.sort_by(|a, b| a.partial_cmp(b).expect("observed values are finite"));
                vs
            })
            .collect();
        columns.push((col, pools));
    }
    Ok(ObservedPool {
        columns,
        row_stratum,
    })
}

/// Nearest value in a sorted pool; ties break to the smaller value.
fn round_to_pool(v: f64, pool: &[f64]) -> f64 {
    debug_assert!(!pool.is_empty());
    let right = pool.partition_point(|p| *p < v);
    if right == 0 {
        return pool[0];
    }
    if right == pool.len() {
        return pool[right - 1];
    }
    let lo = pool[right - 1];
    let hi = pool[right];
    if v - lo <= hi - v {
        lo
    } else {
        hi
    }
}

/// Diagnostics accumulated while transforming one completed dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransformStats {
    /// Imputed cells whose sign flipped under the multiplier. Large
    /// multipliers on negative values can do this; the count surfaces
    /// potentially unrealistic imputations.
    pub sign_flips: usize,
    pub clamped: usize,
    pub transformed_cells: usize,
}

impl TransformStats {
    pub fn merge(&mut self, other: &TransformStats) {
        self.sign_flips += other.sign_flips;
        self.clamped += other.clamped;
        self.transformed_cells += other.transformed_cells;
    }
}

/// Apply the multiplier `k` to every cell of `completed` that was missing
/// in the original data (per `original_mask`), restricted to the pool's
/// transform columns. Observed cells are untouched, bit for bit.
pub fn transform_imputations(
    completed: &LongitudinalDataset,
    original_mask: &DMatrix<bool>,
    k: f64,
    spec: &MechanismSpec,
    pool: &ObservedPool,
) -> Result<(LongitudinalDataset, TransformStats)> {
    if original_mask.nrows() != completed.n_subjects()
        || original_mask.ncols() != completed.n_columns()
    {
        return Err(Error::Parameter(format!(
            "original mask is {}x{} but dataset is {}x{}",
            original_mask.nrows(),
            original_mask.ncols(),
            completed.n_subjects(),
            completed.n_columns()
        )));
    }
    spec.validate()?;
    let mut out = completed.clone();
    let mut stats = TransformStats::default();
    for (col, strata_pools) in &pool.columns {
        let name = &completed.columns()[*col].name;
        for r in 0..completed.n_subjects() {
            if !original_mask[(r, *col)] {
                continue;
            }
            let y = completed.value(r, *col);
            if y.is_nan() {
                return Err(Error::Data(format!(
                    "cell ({r}, '{name}') is still missing; transform expects a completed dataset"
                )));
            }
            let mut t = apply_multiplier(y, k);
            if t * y < 0.0 {
                stats.sign_flips += 1;
            }
            if let Some((lo, hi)) = spec.clamp_range {
                let clamped = t.clamp(lo, hi);
                if clamped != t {
                    stats.clamped += 1;
                    t = clamped;
                }
            }
            if spec.round_to_observed {
                let p = &strata_pools[pool.row_stratum[r]];
                if p.is_empty() {
                    return Err(Error::Config(format!(
                        "round-to-observed requested but column '{name}' has no observed values in the stratum of row {r}"
                    )));
                }
                t = round_to_pool(t, p);
            }
            stats.transformed_cells += 1;
            out.fill_cell(r, *col, t);
        }
    }
    Ok((out, stats))
}

/// Turn expert lower/upper bounds for the multiplier into a distribution.
///
/// Normal: mean at the midpoint, sd = (upper - lower) / 4, reading the
/// bounds as a 95% interval. Uniform: the bounds become the support.
pub fn elicit_multiplier(
    lower: f64,
    upper: f64,
    family: MultiplierFamily,
) -> Result<MultiplierDistribution> {
    if !lower.is_finite() || !upper.is_finite() {
        return Err(Error::Parameter("elicitation bounds must be finite".into()));
    }
    if lower > upper {
        return Err(Error::Parameter(format!(
            "elicitation bounds out of order: {lower} > {upper}"
        )));
    }
    match family {
        MultiplierFamily::Normal => Ok(MultiplierDistribution::normal(
            (lower + upper) / 2.0,
            (upper - lower) / 4.0,
        )),
        MultiplierFamily::Uniform => Ok(MultiplierDistribution::uniform(lower, upper)),
        MultiplierFamily::Point => Err(Error::Parameter(
            "elicitation is defined for the normal and uniform families".into(),
        )),
    }
}
