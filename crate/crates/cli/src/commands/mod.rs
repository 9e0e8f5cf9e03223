pub mod analyze_pool;
pub mod elicit;
pub mod impute;
pub mod pool;
pub mod simulate;

use crate::error::{CliError, Result};

/// `--seed` has no default for commands that draw randomness.
pub fn require_seed(cli: &crate::Cli) -> Result<u64> {
    cli.seed
        .ok_or_else(|| CliError::Config("--seed is required for this command".into()))
}

pub fn ensure_out_dir(cli: &crate::Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out).map_err(|e| {
        CliError::Config(format!(
            "cannot create output directory '{}': {e}",
            cli.out.display()
        ))
    })
}
