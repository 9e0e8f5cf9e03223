use mmmi::mechanism::{elicit_multiplier, MultiplierFamily};

use crate::error::{CliError, Result};

pub fn run(lower: f64, upper: f64, family: &str) -> Result<()> {
    let family = match family {
        "normal" => MultiplierFamily::Normal,
        "uniform" => MultiplierFamily::Uniform,
        other => {
            return Err(CliError::Config(format!(
                "unknown family '{other}' (expected normal or uniform)"
            )))
        }
    };
    let dist = elicit_multiplier(lower, upper, family)?;
    println!("{dist}");
    Ok(())
}
