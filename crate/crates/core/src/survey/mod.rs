//! Travel-survey ingest, category standardization, income grouping and
//! person-level flags.

mod categories;
mod income;
mod io;
mod model;
mod population;

use std::path::Path;

pub use categories::{CategoryField, Standardized, Standardizer};
pub use income::{assign_income_groups, cut_by_weight, IncomeGrouping};
pub use io::{
    load_survey, load_survey_from, write_legs, write_persons, write_rejects, SchemaConfig, CAR_OWNER_COLUMN,
    LEG_COLUMNS, PERSON_COLUMNS,
};
pub use model::{Gender, Mode, Person, Purpose, Reject, SurveyDataset, TripLeg, WorkStatus, MAX_MINUTE};
pub use population::{filter_analysis_population, flag_caregivers, FilterReport, PopulationRules};

#[derive(Debug, thiserror::Error)]
pub enum SurveyError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("no income data")]
    NoIncomeData,
    #[error("io error: {0}")]
    Io(String),
}

impl SurveyError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        SurveyError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<csv::Error> for SurveyError {
    fn from(e: csv::Error) -> Self {
        SurveyError::Io(e.to_string())
    }
}
