//! Rectangular numeric datasets with a missingness mask and column roles.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// What a column means to the analysis and imputation machinery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColumnRole {
    SubjectId,
    Group,
    Covariate,
    /// Repeated outcome measured at the given time code.
    Outcome {
        time: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Continuous,
    Binary,
    Nominal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    pub name: String,
    pub role: ColumnRole,
    pub kind: ColumnType,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, role: ColumnRole, kind: ColumnType) -> Self {
        Self {
            name: name.into(),
            role,
            kind,
        }
    }
}

/// Subjects-by-columns value matrix plus a boolean missingness mask
/// (`true` = missing).
///
/// Masked cells hold a NaN sentinel and are never read by analysis code;
/// all statistics work on mask-filtered views. The type is immutable after
/// construction except through [`LongitudinalDataset::fill_cell`], which
/// imputation drivers use to complete a clone.
#[derive(Debug, Clone)]
pub struct LongitudinalDataset {
    columns: Vec<ColumnSpec>,
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
}

impl LongitudinalDataset {
    pub fn new(
        columns: Vec<ColumnSpec>,
        mut values: DMatrix<f64>,
        mask: DMatrix<bool>,
    ) -> Result<Self> {
        if values.nrows() != mask.nrows() || values.ncols() != mask.ncols() {
            return Err(Error::Parameter(format!(
                "values are {}x{} but mask is {}x{}",
                values.nrows(),
                values.ncols(),
                mask.nrows(),
                mask.ncols()
            )));
        }
        if values.ncols() != columns.len() {
            return Err(Error::Parameter(format!(
                "{} column specs for a {}-column matrix",
                columns.len(),
                values.ncols()
            )));
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Parameter(format!("duplicate column name '{}'", c.name)));
            }
        }
        // Enforce the sentinel invariant at the door.
        for r in 0..values.nrows() {
            for c in 0..values.ncols() {
                if mask[(r, c)] {
                    values[(r, c)] = f64::NAN;
                }
            }
        }
        Ok(Self {
            columns,
            values,
            mask,
        })
    }

    /// Fully observed dataset.
    pub fn complete(columns: Vec<ColumnSpec>, values: DMatrix<f64>) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), false);
        Self::new(columns, values, mask)
    }

    /// Build from row-major value and mask buffers.
    pub fn from_row_major(
        columns: Vec<ColumnSpec>,
        n_rows: usize,
        values: &[f64],
        mask: &[bool],
    ) -> Result<Self> {
        let n_cols = columns.len();
        if values.len() != n_rows * n_cols || mask.len() != n_rows * n_cols {
            return Err(Error::Parameter(format!(
                "expected {} cells for a {n_rows}x{n_cols} dataset",
                n_rows * n_cols
            )));
        }
        let v = DMatrix::from_fn(n_rows, n_cols, |r, c| values[r * n_cols + c]);
        let m = DMatrix::from_fn(n_rows, n_cols, |r, c| mask[r * n_cols + c]);
        Self::new(columns, v, m)
    }

    pub fn n_subjects(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.values.ncols()
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.mask[(row, col)]
    }

    /// Raw cell value; NaN sentinel when masked.
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }

    /// Cell value if observed.
    pub fn observed(&self, row: usize, col: usize) -> Option<f64> {
        (!self.mask[(row, col)]).then(|| self.values[(row, col)])
    }

    /// Write an imputed value and clear the mask at a cell.
    pub fn fill_cell(&mut self, row: usize, col: usize, value: f64) {
        self.values[(row, col)] = value;
        self.mask[(row, col)] = false;
    }

    pub fn subject_id_col(&self) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.role == ColumnRole::SubjectId)
    }

    pub fn group_col(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.role == ColumnRole::Group)
    }

    /// Outcome column indices with their time codes, in declaration order.
    pub fn outcome_columns(&self) -> Vec<(usize, f64)> {
        self.columns
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c.role {
                ColumnRole::Outcome { time } => Some((i, time)),
                _ => None,
            })
            .collect()
    }

    /// Observed values of one column, in row order.
    pub fn observed_column_values(&self, col: usize) -> Vec<f64> {
        (0..self.n_subjects())
            .filter(|&r| !self.mask[(r, col)])
            .map(|r| self.values[(r, col)])
            .collect()
    }

    pub fn column_missing_count(&self, col: usize) -> usize {
        (0..self.n_subjects()).filter(|&r| self.mask[(r, col)]).count()
    }

    pub fn total_missing(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Row indices split by the values of `group_by` (ascending group
    /// value), or a single stratum holding every row.
    pub fn strata(&self, group_by: Option<usize>) -> Result<Vec<Vec<usize>>> {
        let Some(g) = group_by else {
            return Ok(vec![(0..self.n_subjects()).collect()]);
        };
        let mut keys: Vec<f64> = Vec::new();
        for r in 0..self.n_subjects() {
            if self.mask[(r, g)] {
                return Err(Error::Data(format!(
                    "group column '{}' has a missing entry at row {r}",
                    self.columns[g].name
                )));
            }
            let v = self.values[(r, g)];
            if !keys.iter().any(|k| *k == v) {
                keys.push(v);
            }
        }
        keys.sort_by(|a, b| a.partial_cmp(b).expect("group keys are finite"));
        Ok(keys
            .iter()
            .map(|k| {
                (0..self.n_subjects())
                    .filter(|&r| self.values[(r, g)] == *k)
                    .collect()
            })
            .collect())
    }

    /// Bit-exact equality of values (NaN == NaN), mask, and column specs.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.columns == other.columns
            && self.mask == other.mask
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Everything wrong with a dataset; empty means valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_valid() {
            write!(f, "valid")
        } else {
            write!(f, "{}", self.issues.join("; "))
        }
    }
}

/// Check every dataset invariant and report all violations. Side-effect
/// free; never errors.
pub fn validate_dataset(d: &LongitudinalDataset) -> ValidationReport {
    let mut issues = Vec::new();

    for r in 0..d.n_subjects() {
        for c in 0..d.n_columns() {
            let v = d.values[(r, c)];
            if d.mask[(r, c)] {
                if !v.is_nan() {
                    issues.push(format!(
                        "masked cell ({r}, '{}') does not hold the missing sentinel",
                        d.columns[c].name
                    ));
                }
            } else if !v.is_finite() {
                issues.push(format!(
                    "observed cell ({r}, '{}') is not finite",
                    d.columns[c].name
                ));
            }
        }
    }

    if let Some(id) = d.subject_id_col() {
        let name = &d.columns[id].name;
        let mut seen: Vec<f64> = Vec::new();
        for r in 0..d.n_subjects() {
            if d.mask[(r, id)] {
                issues.push(format!("subject-id column '{name}' is missing at row {r}"));
                continue;
            }
            let v = d.values[(r, id)];
            if seen.iter().any(|s| *s == v) {
                issues.push(format!("subject-id column '{name}' has duplicated id {v}"));
            } else {
                seen.push(v);
            }
        }
    }

    if let Some(g) = d.group_col() {
        let name = &d.columns[g].name;
        for r in 0..d.n_subjects() {
            if d.mask[(r, g)] {
                issues.push(format!("group column '{name}' is missing at row {r}"));
            }
        }
    }

    ValidationReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_cols() -> Vec<ColumnSpec> {
        vec![
            ColumnSpec::new("id", ColumnRole::SubjectId, ColumnType::Continuous),
            ColumnSpec::new("tx", ColumnRole::Group, ColumnType::Binary),
            ColumnSpec::new("y_t0", ColumnRole::Outcome { time: 0.0 }, ColumnType::Continuous),
        ]
    }

    #[test]
    fn masked_cells_hold_sentinel() {
        let values = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.5, 1.0, 1.0, 2.5]);
        let mut mask = DMatrix::from_element(2, 3, false);
        mask[(1, 2)] = true;
        let d = LongitudinalDataset::new(spec_cols(), values, mask).unwrap();
        assert!(d.value(1, 2).is_nan());
        assert_eq!(d.observed(1, 2), None);
        assert_eq!(d.observed(0, 2), Some(1.5));
    }

    #[test]
    fn valid_dataset_yields_empty_report() {
        let values = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.5, 1.0, 1.0, 2.5]);
        let d = LongitudinalDataset::complete(spec_cols(), values).unwrap();
        let report = validate_dataset(&d);
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn duplicate_subject_ids_are_named() {
        let values = DMatrix::from_row_slice(2, 3, &[7.0, 0.0, 1.5, 7.0, 1.0, 2.5]);
        let d = LongitudinalDataset::complete(spec_cols(), values).unwrap();
        let report = validate_dataset(&d);
        assert!(!report.is_valid());
        assert!(report.issues[0].contains("id"), "{report}");
        assert!(report.issues[0].contains('7'), "{report}");
    }

    #[test]
    fn missing_group_entry_is_flagged() {
        let values = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.5, 1.0, 1.0, 2.5]);
        let mut mask = DMatrix::from_element(2, 3, false);
        mask[(0, 1)] = true;
        let d = LongitudinalDataset::new(spec_cols(), values, mask).unwrap();
        let report = validate_dataset(&d);
        assert!(report.issues.iter().any(|i| i.contains("group column 'tx'")), "{report}");
    }

    #[test]
    fn validation_mutates_nothing() {
        let values = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.5, 1.0, 1.0, 2.5]);
        let mut mask = DMatrix::from_element(2, 3, false);
        mask[(1, 2)] = true;
        let d = LongitudinalDataset::new(spec_cols(), values, mask).unwrap();
        let before = d.clone();
        let _ = validate_dataset(&d);
        assert!(d.bitwise_eq(&before));
    }

    #[test]
    fn strata_split_by_group_value() {
        let values = DMatrix::from_row_slice(4, 3, &[0., 1., 1., 1., 0., 2., 2., 1., 3., 3., 0., 4.]);
        let d = LongitudinalDataset::complete(spec_cols(), values).unwrap();
        let strata = d.strata(Some(1)).unwrap();
        assert_eq!(strata, vec![vec![1, 3], vec![0, 2]]);
        let all = d.strata(None).unwrap();
        assert_eq!(all, vec![vec![0, 1, 2, 3]]);
    }
}
