use serde::Serialize;

use mmmi::harness::{full_grid, run_scenario, scenario_by_name, GridSettings, ScenarioMetrics};

use crate::commands::{ensure_out_dir, require_seed};
use crate::error::{CliError, Result};

#[derive(Serialize)]
struct RunLog {
    tool_version: String,
    command: String,
    seed: u64,
    scenarios: Vec<String>,
    replications: usize,
    m_models: usize,
    n_per_model: usize,
    level: f64,
    outputs: Vec<String>,
    rows: Vec<RunLogRow>,
}

#[derive(Serialize)]
struct RunLogRow {
    scenario: String,
    status: String,
}

fn dist_label(name: &str) -> String {
    let mean = mmmi::harness::IGNORABILITY
        .iter()
        .find(|(n, _)| name.starts_with(n))
        .map(|(_, v)| *v)
        .unwrap_or(f64::NAN);
    let sd = mmmi::harness::UNCERTAINTY
        .iter()
        .find(|(n, _)| name.ends_with(n))
        .map(|(_, v)| *v)
        .unwrap_or(f64::NAN);
    format!("N({mean},{sd})")
}

pub fn run(
    cli: &crate::Cli,
    scenarios: &[String],
    grid: Option<&str>,
    reps: usize,
    m: usize,
    n: usize,
    level: f64,
) -> Result<()> {
    let seed = require_seed(cli)?;
    ensure_out_dir(cli)?;
    let settings = GridSettings {
        replications: reps,
        m_models: m,
        n_per_model: n,
        master_seed: seed,
        level,
    };
    let configs = match (grid, scenarios.is_empty()) {
        (Some("table1"), true) => full_grid(&settings),
        (Some(other), true) => {
            return Err(CliError::Config(format!(
                "unknown grid '{other}' (expected 'table1')"
            )))
        }
        (None, false) => scenarios
            .iter()
            .map(|name| scenario_by_name(name, &settings))
            .collect::<mmmi::Result<Vec<_>>>()?,
        (Some(_), false) => {
            return Err(CliError::Config(
                "--grid and --scenarios are mutually exclusive".into(),
            ))
        }
        (None, true) => {
            return Err(CliError::Config(
                "one of --scenarios or --grid is required".into(),
            ))
        }
    };

    let metrics_path = cli.out.join("metrics.csv");
    let mut writer = csv::Writer::from_path(&metrics_path)
        .map_err(|e| CliError::Config(format!("cannot write '{}': {e}", metrics_path.display())))?;
    writer.write_record([
        "scenario",
        "ignorability",
        "uncertainty",
        "model_distribution",
        "percent_bias",
        "rmse",
        "coverage",
        "ci_width",
        "gamma",
        "gamma_w",
        "gamma_b",
        "gamma_ratio",
        "replications_completed",
        "replications_failed",
    ])?;

    let mut rows = Vec::new();
    println!(
        "{:<16} {:>8} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "scenario", "pb", "rmse", "cvg", "width", "gamma", "gammaW", "gammaB", "ratio"
    );
    for cfg in &configs {
        match run_scenario(cfg) {
            Ok(metrics) => {
                write_metrics_row(&mut writer, cfg, &metrics)?;
                println!(
                    "{:<16} {:>8.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
                    metrics.name,
                    metrics.percent_bias,
                    metrics.rmse,
                    metrics.coverage,
                    metrics.ci_width,
                    metrics.mean_gamma,
                    metrics.mean_gamma_w,
                    metrics.mean_gamma_b,
                    metrics.mean_ratio
                );
                rows.push(RunLogRow {
                    scenario: cfg.name.clone(),
                    status: "ok".into(),
                });
            }
            Err(e) => {
                eprintln!("scenario '{}' failed: {e}", cfg.name);
                rows.push(RunLogRow {
                    scenario: cfg.name.clone(),
                    status: format!("error: {e}"),
                });
            }
        }
    }
    writer.flush().map_err(|e| CliError::Config(e.to_string()))?;

    let failed = rows.iter().any(|r| r.status != "ok");
    let log = RunLog {
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        command: "simulate".into(),
        seed,
        scenarios: configs.iter().map(|c| c.name.clone()).collect(),
        replications: reps,
        m_models: m,
        n_per_model: n,
        level,
        outputs: vec!["metrics.csv".into()],
        rows,
    };
    let log_path = cli.out.join("run_log.json");
    std::fs::write(&log_path, serde_json::to_string_pretty(&log)? + "\n")?;

    if failed {
        return Err(CliError::Data("one or more scenarios failed".into()));
    }
    Ok(())
}

fn write_metrics_row(
    writer: &mut csv::Writer<std::fs::File>,
    cfg: &mmmi::harness::ScenarioConfig,
    m: &ScenarioMetrics,
) -> Result<()> {
    let (ign, unc) = cfg.name.rsplit_once('-').unwrap_or((cfg.name.as_str(), ""));
    writer.write_record([
        m.name.clone(),
        ign.to_owned(),
        unc.to_owned(),
        dist_label(&m.name),
        format!("{}", m.percent_bias),
        format!("{}", m.rmse),
        format!("{}", m.coverage),
        format!("{}", m.ci_width),
        format!("{}", m.mean_gamma),
        format!("{}", m.mean_gamma_w),
        format!("{}", m.mean_gamma_b),
        format!("{}", m.mean_ratio),
        format!("{}", m.replications_completed),
        format!("{}", m.replications_failed),
    ])?;
    Ok(())
}
