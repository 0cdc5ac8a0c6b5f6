//! Grouped linear models of daytime mixing: design assembly, OLS with
//! heteroskedasticity-robust errors and LMG relative importance.

mod design;
mod lmg;
mod ols;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::fmt::{fmt_f64, fmt_opt};

pub use design::{build_design_matrix, Column, Design, DesignInputs, DesignSpec};
pub use lmg::{lmg_decompose, stratified_lmg, subset_r2, BandLmg, LmgResult, MAX_LMG_GROUPS};
pub use ols::{ols_fit, OlsFit};

#[derive(Debug, thiserror::Error)]
pub enum RegressError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("rank deficient design; dependent columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("too many groups for exact LMG: {0} > {MAX_LMG_GROUPS}")]
    TooManyGroups(usize),
    #[error("regression output: {0}")]
    Io(String),
}

impl From<csv::Error> for RegressError {
    fn from(e: csv::Error) -> Self {
        RegressError::Io(e.to_string())
    }
}

/// The five variable groups of the mixing model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VarGroup {
    S,
    H,
    PD,
    PH,
    M,
}

impl VarGroup {
    pub const ALL: [VarGroup; 5] = [VarGroup::S, VarGroup::H, VarGroup::PD, VarGroup::PH, VarGroup::M];

    pub fn as_str(self) -> &'static str {
        match self {
            VarGroup::S => "S",
            VarGroup::H => "H",
            VarGroup::PD => "PD",
            VarGroup::PH => "PH",
            VarGroup::M => "M",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        VarGroup::ALL.into_iter().find(|g| g.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

/// `regression.csv`: one row per term and model.
pub fn write_regression_csv(fits: &[(String, &OlsFit)], out: impl Write) -> Result<(), RegressError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "term", "coef", "robust_se", "z", "r2", "n"])?;
    for (model, fit) in fits {
        for (j, name) in fit.names.iter().enumerate() {
            w.write_record([
                model.clone(),
                name.clone(),
                fmt_f64(fit.coef[j]),
                fmt_f64(fit.se[j]),
                fmt_f64(fit.coef[j] / fit.se[j]),
                fmt_f64(fit.r2),
                fit.n.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| RegressError::Io(e.to_string()))
}

/// `lmg.csv`: one row per band and group; skipped bands get a note and empty values.
pub fn write_lmg_csv(bands: &[BandLmg], out: impl Write) -> Result<(), RegressError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["band", "group", "share", "normalized_share", "r2", "n", "note"])?;
    for b in bands {
        match &b.result {
            Some(r) => {
                for (i, g) in r.groups.iter().enumerate() {
                    w.write_record([
                        b.band.clone(),
                        g.clone(),
                        fmt_f64(r.shares[i]),
                        fmt_opt(r.normalized[i]),
                        fmt_f64(r.r2_full),
                        b.n.to_string(),
                        String::new(),
                    ])?;
                }
            }
            None => w.write_record([
                b.band.clone(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                b.n.to_string(),
                b.note.clone().unwrap_or_default(),
            ])?,
        }
    }
    w.flush().map_err(|e| RegressError::Io(e.to_string()))
}
