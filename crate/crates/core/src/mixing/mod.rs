//! Exposure-based income mixing.
//!
//! A person's exposure `tau_iq` to income group `q` is the visit-share
//! weighted average of the group composition of the cells they visit:
//! `tau_iq = sum_a tau_ia tau_aq`. The daytime mixing index maps that
//! distribution to `[0, 1]`, with 1 for exposure spread evenly across all
//! groups and 0 for exposure to a single group. Nighttime mixing applies the
//! same index to the resident composition of the person's home cell.

mod exposure;
mod proxy;
mod report;
mod summary;
mod visits;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::grid::{CellId, GridError, HexGrid};
use crate::survey::{IncomeGrouping, SurveyDataset, SurveyError};

pub use exposure::{
    daytime_mixing, individual_exposure, normalizer, place_composition, CellMass, CompositionMatrix, ExposureTable,
    MixingFormula, SelfInclusion, SUM_TOL,
};
pub use proxy::{proxy_income_dm, ProxyComparison, ProxyPair};
pub use report::{read_mixing_csv, write_group_summary, write_mixing_csv, write_proxy_csv};
pub use summary::{age_band, group_summary, GroupStat, SummaryInput};
pub use visits::{build_visit_table, PersonVisits, VisitOptions, VisitTable};

#[derive(Debug, thiserror::Error)]
pub enum MixingError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("person '{0}' has no income group")]
    Ungrouped(String),
    #[error("cell {0} has zero total visit weight")]
    ZeroWeightCell(CellId),
    #[error("internal consistency: cell {0} missing from composition")]
    MissingCell(CellId),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Survey(#[from] SurveyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingConfig {
    pub level: u8,
    pub k: usize,
    pub visits: VisitOptions,
    pub self_inclusion: SelfInclusion,
    pub formula: MixingFormula,
}

impl Default for MixingConfig {
    fn default() -> Self {
        Self {
            level: 8,
            k: 4,
            visits: VisitOptions::default(),
            self_inclusion: SelfInclusion::Include,
            formula: MixingFormula::Complement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingRow {
    pub person_id: String,
    pub group: usize,
    pub tau: Vec<f64>,
    pub dm: f64,
    pub nm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingResult {
    pub config: MixingConfig,
    /// Whether groups came from home-zone proxy incomes.
    pub proxy: bool,
    pub rows: Vec<MixingRow>,
    /// Persons without an income group or with zero expansion weight.
    pub excluded: Vec<String>,
    /// Grouped persons with no surviving daytime visit.
    pub no_visits: Vec<String>,
}

impl MixingResult {
    pub fn dm_by_person(&self) -> BTreeMap<&str, f64> {
        self.rows.iter().map(|r| (r.person_id.as_str(), r.dm)).collect()
    }
}

/// Persons that can take part in composition: grouped and positively weighted.
fn eligible(ds: &SurveyDataset, grouping: &IncomeGrouping) -> (SurveyDataset, Vec<String>) {
    let mut excluded = Vec::new();
    let sub = ds.retain(|_, p| {
        let ok = grouping.group_of(&p.person_id).is_some() && p.expansion_factor > 0.0;
        if !ok {
            excluded.push(p.person_id.clone());
        }
        ok
    });
    (sub, excluded)
}

/// Full daytime (and nighttime) mixing for one grouping.
pub fn compute_mixing(
    ds: &SurveyDataset,
    grid: &HexGrid,
    grouping: &IncomeGrouping,
    cfg: &MixingConfig,
) -> Result<MixingResult, MixingError> {
    if grouping.k != cfg.k {
        return Err(MixingError::Input(format!("grouping has k={} but config k={}", grouping.k, cfg.k)));
    }
    let (pop, excluded) = eligible(ds, grouping);
    let vt = build_visit_table(&pop, grid, cfg.level, cfg.visits)?;
    let comp = place_composition(&vt, grouping)?;
    let exposure = individual_exposure(&vt, &comp, grouping, cfg.self_inclusion)?;
    let night = nighttime_mixing(&pop, grid, cfg.level, grouping, cfg.formula)?;
    let rows = exposure
        .rows
        .into_iter()
        .map(|(id, tau)| {
            let dm = daytime_mixing(&tau, cfg.formula)?;
            Ok(MixingRow {
                group: grouping.group_of(&id).expect("eligible persons are grouped"),
                nm: night.get(&id).copied(),
                person_id: id,
                tau,
                dm,
            })
        })
        .collect::<Result<Vec<_>, MixingError>>()?;
    Ok(MixingResult { config: *cfg, proxy: false, rows, excluded, no_visits: vt.omitted })
}

/// Mixing index of each person's home-cell resident composition.
///
/// Residents are weighted by expansion factor; persons without a group or
/// with zero weight neither contribute nor receive a value. A person alone in
/// their cell gets the one-hot value.
pub fn nighttime_mixing(
    ds: &SurveyDataset,
    grid: &HexGrid,
    level: u8,
    grouping: &IncomeGrouping,
    formula: MixingFormula,
) -> Result<BTreeMap<String, f64>, MixingError> {
    let k = grouping.k;
    let mut homes: Vec<(&str, CellId, usize)> = Vec::new();
    let mut mass: BTreeMap<CellId, Vec<f64>> = BTreeMap::new();
    for p in ds.persons() {
        let Some(g) = grouping.group_of(&p.person_id) else { continue };
        if !(p.expansion_factor > 0.0) {
            continue;
        }
        let cell = grid.bin_point(p.home, level)?;
        mass.entry(cell).or_insert_with(|| vec![0.0; k])[g] += p.expansion_factor;
        homes.push((p.person_id.as_str(), cell, g));
    }
    let mut nm_by_cell: BTreeMap<CellId, f64> = BTreeMap::new();
    for (cell, m) in &mass {
        let total: f64 = m.iter().sum();
        let row: Vec<f64> = m.iter().map(|v| v / total).collect();
        nm_by_cell.insert(*cell, daytime_mixing(&row, formula)?);
    }
    Ok(homes.into_iter().map(|(id, cell, _)| (id.to_string(), nm_by_cell[&cell])).collect())
}

/// Person ids of a mixing result as a set.
pub fn person_set(result: &MixingResult) -> HashSet<&str> {
    result.rows.iter().map(|r| r.person_id.as_str()).collect()
}
