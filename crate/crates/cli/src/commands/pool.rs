use std::collections::BTreeMap;
use std::path::Path;

use mmmi::pooling::{pool_flat, pool_nested, NestedEstimateGrid, ScalarEstimate};

use crate::commands::ensure_out_dir;
use crate::error::{CliError, Result};
use crate::formats::write_report;

/// Read `model,rep,q_hat,u` rows into per-model estimate lists, keyed and
/// ordered by model id.
fn read_estimates(path: &Path) -> Result<BTreeMap<i64, Vec<(i64, ScalarEstimate)>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read '{}': {e}", path.display())))?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    let expected = ["model", "rep", "q_hat", "u"];
    if headers != expected {
        return Err(CliError::Data(format!(
            "estimates CSV must have columns {expected:?}, found {headers:?}"
        )));
    }
    let mut by_model: BTreeMap<i64, Vec<(i64, ScalarEstimate)>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let parse_int = |j: usize| -> Result<i64> {
            record[j]
                .trim()
                .parse()
                .map_err(|_| CliError::Data(format!("row {}: bad integer '{}'", i + 1, &record[j])))
        };
        let parse_f = |j: usize| -> Result<f64> {
            record[j]
                .trim()
                .parse()
                .map_err(|_| CliError::Data(format!("row {}: bad number '{}'", i + 1, &record[j])))
        };
        let model = parse_int(0)?;
        let rep = parse_int(1)?;
        let est = ScalarEstimate::new(parse_f(2)?, parse_f(3)?);
        by_model.entry(model).or_default().push((rep, est));
    }
    Ok(by_model)
}

pub fn run(cli: &crate::Cli, estimates: &Path, flat: bool, level: f64) -> Result<()> {
    ensure_out_dir(cli)?;
    let by_model = read_estimates(estimates)?;
    if by_model.is_empty() {
        return Err(CliError::Data("estimates CSV has no rows".into()));
    }

    let pooled = if flat {
        let all: Vec<ScalarEstimate> = by_model
            .values()
            .flat_map(|v| v.iter().map(|(_, e)| *e))
            .collect();
        pool_flat(&all, level)?
    } else {
        let n = by_model.values().next().map_or(0, Vec::len);
        if by_model.values().any(|v| v.len() != n) {
            return Err(CliError::Data(
                "grid has holes: every model needs the same number of reps".into(),
            ));
        }
        let mut rows = Vec::with_capacity(by_model.len());
        for (_, mut reps) in by_model {
            reps.sort_by_key(|(rep, _)| *rep);
            rows.push(reps.into_iter().map(|(_, e)| e).collect::<Vec<_>>());
        }
        let grid = NestedEstimateGrid::from_rows(rows)?;
        pool_nested(&grid, level)?
    };

    let label = if flat { "flat" } else { "nested" };
    let report = write_report(&cli.out.join("report.csv"), label, &pooled)?;
    println!("{report}");
    println!(
        "components: u_bar {:.6}  w {:.6}  b {:.6}  t {:.6}  df {}",
        pooled.u_bar,
        pooled.w,
        pooled.b,
        pooled.t,
        if pooled.df.is_finite() {
            format!("{:.4}", pooled.df)
        } else {
            "inf".to_owned()
        }
    );
    Ok(())
}
