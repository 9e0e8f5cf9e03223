//! File formats: dataset CSV (wide, missing cells empty), dataset/plan
//! configuration, run manifest, and pooled reports. Configs and manifests
//! are JSON with a fixed key schema; unknown keys are errors so drift is
//! caught instead of silently ignored.

use std::path::Path;

use serde::{Deserialize, Serialize};

use mmmi::dataset::{ColumnRole, ColumnSpec, ColumnType, LongitudinalDataset};
use mmmi::imputer::{ImputationDriver, ImputerConfig};
use mmmi::lmm::LmmSpec;
use mmmi::mechanism::{MechanismSpec, MultiplierDistribution, MultiplierFamily};
use mmmi::pooling::PooledInference;

use crate::error::{CliError, Result};

pub use mmmi::imputer::FitRows;

// ---------------------------------------------------------------------------
// Dataset configuration (sidecar for a CSV)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSpec {
    pub column: String,
    pub time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImputeSection {
    pub column_order: Vec<String>,
    #[serde(default)]
    pub group_by: Option<String>,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_ridge")]
    pub ridge_epsilon: f64,
    #[serde(default)]
    pub driver: ImputationDriver,
    #[serde(default)]
    pub fit_rows: FitRows,
}

fn default_sweeps() -> usize {
    10
}

fn default_ridge() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSection {
    pub family: MultiplierFamily,
    pub param1: f64,
    #[serde(default)]
    pub param2: f64,
    #[serde(default)]
    pub round_to_observed: bool,
    #[serde(default)]
    pub clamp: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub m_models: usize,
    pub n_per_model: usize,
}

/// Sidecar configuration naming column roles and the imputation plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub subject_id: String,
    #[serde(default)]
    pub group: Option<String>,
    pub outcomes: Vec<OutcomeSpec>,
    /// Time-constant covariates entering the analysis model.
    #[serde(default)]
    pub covariates: Vec<String>,
    pub impute: ImputeSection,
    pub mechanism: MechanismSection,
    pub plan: PlanSection,
    /// Columns whose imputed cells receive the multiplier.
    pub transform_columns: Vec<String>,
}

impl DatasetConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config '{}': {e}", path.display()))
        })?;
        let cfg: DatasetConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn mechanism_spec(&self) -> MechanismSpec {
        MechanismSpec {
            dist: MultiplierDistribution {
                family: self.mechanism.family,
                param1: self.mechanism.param1,
                param2: self.mechanism.param2,
            },
            round_to_observed: self.mechanism.round_to_observed,
            clamp_range: self.mechanism.clamp,
        }
    }

    pub fn imputer_config(&self) -> ImputerConfig {
        ImputerConfig {
            group_by: self.impute.group_by.clone(),
            column_order: self.impute.column_order.clone(),
            sweeps: self.impute.sweeps,
            ridge_epsilon: self.impute.ridge_epsilon,
            driver: self.impute.driver,
            fit_rows: self.impute.fit_rows,
        }
    }

    pub fn lmm_spec(&self) -> LmmSpec {
        LmmSpec {
            subject_col: self.subject_id.clone(),
            group_col: self.group.clone(),
            outcomes: self
                .outcomes
                .iter()
                .map(|o| (o.column.clone(), o.time))
                .collect(),
            covariates: self.covariates.clone(),
            reml: false,
        }
    }

    fn role_of(&self, name: &str) -> (ColumnRole, ColumnType) {
        if name == self.subject_id {
            return (ColumnRole::SubjectId, ColumnType::Continuous);
        }
        if self.group.as_deref() == Some(name) {
            return (ColumnRole::Group, ColumnType::Nominal);
        }
        if let Some(o) = self.outcomes.iter().find(|o| o.column == name) {
            return (ColumnRole::Outcome { time: o.time }, ColumnType::Continuous);
        }
        (ColumnRole::Covariate, ColumnType::Continuous)
    }
}

// ---------------------------------------------------------------------------
// Dataset CSV
// ---------------------------------------------------------------------------

/// Read a wide dataset CSV. Header row names the columns; an empty field
/// is a missing cell.
pub fn read_dataset_csv(path: &Path, config: &DatasetConfig) -> Result<LongitudinalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read '{}': {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    if headers.is_empty() {
        return Err(CliError::Data(format!("'{}' has no columns", path.display())));
    }
    if headers[0] != config.subject_id {
        return Err(CliError::Data(format!(
            "first column must be the subject id '{}', found '{}'",
            config.subject_id, headers[0]
        )));
    }
    let columns: Vec<ColumnSpec> = headers
        .iter()
        .map(|name| {
            let (role, kind) = config.role_of(name);
            ColumnSpec::new(name.clone(), role, kind)
        })
        .collect();

    let mut values: Vec<f64> = Vec::new();
    let mut mask: Vec<bool> = Vec::new();
    let mut n_rows = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(CliError::Data(format!(
                "row {} has {} fields, expected {}",
                row_idx + 1,
                record.len(),
                headers.len()
            )));
        }
        for (col, field) in record.iter().enumerate() {
            let field = field.trim();
            if field.is_empty() {
                values.push(f64::NAN);
                mask.push(true);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    CliError::Data(format!(
                        "row {}, column '{}': cannot parse '{}' as a number",
                        row_idx + 1,
                        headers[col],
                        field
                    ))
                })?;
                values.push(v);
                mask.push(false);
            }
        }
        n_rows += 1;
    }
    Ok(LongitudinalDataset::from_row_major(
        columns, n_rows, &values, &mask,
    )?)
}

/// Write a dataset CSV. Observed values render with shortest round-trip
/// precision; masked cells become empty fields.
pub fn write_dataset_csv(path: &Path, d: &LongitudinalDataset) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Config(format!("cannot write '{}': {e}", path.display())))?;
    let header: Vec<&str> = d.columns().iter().map(|c| c.name.as_str()).collect();
    writer.write_record(&header)?;
    for r in 0..d.n_subjects() {
        let record: Vec<String> = (0..d.n_columns())
            .map(|c| match d.observed(r, c) {
                Some(v) => format!("{v}"),
                None => String::new(),
            })
            .collect();
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    pub master_seed: u64,
    pub config: DatasetConfig,
    /// Multiplier drawn for each model, in model order.
    pub multipliers: Vec<f64>,
    /// Completed dataset files, model-major: entry `m * n_per_model + n`.
    pub outputs: Vec<String>,
    pub sign_flips: usize,
    pub timing_ms: u64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read manifest '{}': {e}", path.display()))
        })?;
        let m: RunManifest = serde_json::from_str(&text)?;
        if m.outputs.len() != m.config.plan.m_models * m.config.plan.n_per_model {
            return Err(CliError::Data(format!(
                "manifest lists {} outputs for a {}x{} plan",
                m.outputs.len(),
                m.config.plan.m_models,
                m.config.plan.n_per_model
            )));
        }
        if m.multipliers.len() != m.config.plan.m_models {
            return Err(CliError::Data(format!(
                "manifest lists {} multipliers for {} models",
                m.multipliers.len(),
                m.config.plan.m_models
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Pooled report
// ---------------------------------------------------------------------------

/// Write the pooled report CSV (full precision) and return the pretty
/// table printed to stdout (4 significant decimals).
pub fn write_report(path: &Path, label: &str, p: &PooledInference) -> Result<String> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::Config(format!("cannot write '{}': {e}", path.display())))?;
    writer.write_record([
        "estimand",
        "est",
        "se",
        "lci",
        "uci",
        "p_value",
        "gamma",
        "gamma_w",
        "gamma_b",
        "gamma_ratio",
    ])?;
    let se = p.t.sqrt();
    writer.write_record([
        label.to_owned(),
        format!("{}", p.q_bar),
        format!("{se}"),
        format!("{}", p.ci.0),
        format!("{}", p.ci.1),
        format!("{}", p.p_value),
        format!("{}", p.gamma),
        format!("{}", p.gamma_w),
        format!("{}", p.gamma_b),
        format!("{}", p.gamma_ratio),
    ])?;
    writer.flush()?;

    Ok(format!(
        "{label}: est {:.4}  se {:.4}  {:.0}% ci [{:.4}, {:.4}]  p {:.4}\n\
         rates of missing information: gamma {:.4}  gamma_w {:.4}  gamma_b {:.4}  gamma_b/gamma {:.4}",
        p.q_bar,
        se,
        p.level * 100.0,
        p.ci.0,
        p.ci.1,
        p.p_value,
        p.gamma,
        p.gamma_w,
        p.gamma_b,
        p.gamma_ratio
    ))
}
