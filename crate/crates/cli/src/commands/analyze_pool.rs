use std::path::Path;

use rayon::prelude::*;

use mmmi::lmm::{estimand_weights, fit_lmm_ml, scalar_estimand, Estimand};
use mmmi::pooling::{pool_nested, NestedEstimateGrid};

use crate::commands::ensure_out_dir;
use crate::error::{CliError, Result};
use crate::formats::{read_dataset_csv, write_report, RunManifest};

pub fn run(
    cli: &crate::Cli,
    manifest_path: &Path,
    estimand: Option<&str>,
    weights: &[f64],
    level: f64,
) -> Result<()> {
    ensure_out_dir(cli)?;
    let manifest = RunManifest::load(manifest_path)?;
    let spec = manifest.config.lmm_spec();

    let (weights, label): (Vec<f64>, String) = match (estimand, weights.is_empty()) {
        (Some(name), true) => {
            let est: Estimand = name.parse()?;
            (estimand_weights(&spec, est)?, name.to_owned())
        }
        (None, false) => (weights.to_vec(), "weighted".to_owned()),
        (None, true) => {
            let est = Estimand::TreatmentSlope;
            (estimand_weights(&spec, est)?, "treatment-slope".to_owned())
        }
        (Some(_), false) => {
            return Err(CliError::Config(
                "--estimand and --weights are mutually exclusive".into(),
            ))
        }
    };

    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let estimates = manifest
        .outputs
        .par_iter()
        .map(|file| {
            let d = read_dataset_csv(&base.join(file), &manifest.config)?;
            let fit = fit_lmm_ml(&d, &spec)?;
            Ok(scalar_estimand(&fit, &weights)?)
        })
        .collect::<Result<Vec<_>>>()?;

    let grid = NestedEstimateGrid::from_flat(
        manifest.config.plan.m_models,
        manifest.config.plan.n_per_model,
        estimates,
    )?;
    let pooled = pool_nested(&grid, level)?;
    let report = write_report(&cli.out.join("report.csv"), &label, &pooled)?;
    println!("{report}");
    Ok(())
}
