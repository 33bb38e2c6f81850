//! Configuration-driven experiment runner for the `wgent-core` simulator.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod progress;

pub use config::{load, Config, ConfigError, Experiment};
pub use error::CliError;
pub use progress::Progress;

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Runs the configured experiment and writes its tables plus
/// `<experiment>.meta.json` into `config.out_dir`. Returns the written paths.
pub fn execute(config: &Config, progress: &Progress) -> Result<Vec<PathBuf>, CliError> {
    let experiment = config.experiment();
    let tables = experiments::run(config, progress)?;
    let dir = Path::new(&config.out_dir);
    let meta_name = format!("{experiment}.meta.json");
    let metadata = vec![
        ("tool".to_string(), "wgent".to_string()),
        ("version".to_string(), VERSION.to_string()),
        ("experiment".to_string(), experiment.to_string()),
        ("seed".to_string(), config.seed.to_string()),
        ("config".to_string(), meta_name.clone()),
    ];
    let mut written = output::write_tables(dir, &tables, &metadata, config.json).map_err(|e| CliError::io(dir, e))?;
    let outputs: Vec<String> =
        written.iter().filter_map(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()).collect();
    let meta = json!({
        "tool": "wgent",
        "version": VERSION,
        "experiment": experiment.name(),
        "seed": config.seed,
        "config": config,
        "outputs": outputs,
    });
    let meta_path = dir.join(meta_name);
    let mut text = serde_json::to_string_pretty(&meta).expect("configs serialise");
    text.push('\n');
    fs::write(&meta_path, text).map_err(|e| CliError::io(&meta_path, e))?;
    written.push(meta_path);
    Ok(written)
}
