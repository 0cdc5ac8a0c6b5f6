//! Pipeline orchestration for the `mixcity` command: configuration, stage
//! execution with manifest-based resume, and report tables.

pub mod config;
pub mod manifest;
pub mod report;
pub mod stages;

use std::path::{Path, PathBuf};

use mixcity_core::synth::generate_city;

pub use config::PipelineConfig;
pub use stages::{run_stages, Context, StageName, StageOutcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("stage {stage} failed: {cause}")]
    Stage { stage: String, cause: String },
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::MissingArtifact(_) => 2,
            CliError::Stage { .. } | CliError::Io(_) => 3,
        }
    }
}

/// Config file written next to a generated city, pointing at its files.
pub const CITY_CONFIG: &str = "mixcity.toml";

/// Runs every stage up to and including `until`.
pub fn run_pipeline(cfg: PipelineConfig, out: &Path, until: Option<StageName>, resume: bool) -> Result<Vec<(StageName, StageOutcome)>, CliError> {
    cfg.validate()?;
    let stages: Vec<StageName> = StageName::ALL.into_iter().filter(|s| until.is_none_or(|u| *s <= u)).collect();
    run_stages(&Context::new(cfg, out.to_path_buf()), &stages, resume)
}

/// Generates a synthetic city from `cfg.synth` into `dir`, with a config
/// file that runs the pipeline on it.
pub fn write_synth_city(cfg: &PipelineConfig, dir: &Path) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let city = generate_city(&cfg.synth).map_err(|e| CliError::Validation(e.to_string()))?;
    city.write(dir).map_err(|e| CliError::Io(e.to_string()))?;
    let mut run_cfg = cfg.clone();
    run_cfg.input.dir = PathBuf::from(".");
    run_cfg.input.survey_year = Some(city.params.survey_year);
    let path = dir.join(CITY_CONFIG);
    std::fs::write(&path, run_cfg.to_toml()).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(path)
}
