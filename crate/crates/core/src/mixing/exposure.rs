use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::CellId;
use crate::survey::IncomeGrouping;

use super::visits::VisitTable;
use super::MixingError;

/// Tolerance on probability vectors summing to one.
pub const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CellMass {
    /// Expansion-weighted visit mass per income group.
    pub by_group: Vec<f64>,
    pub total: f64,
}

/// Income-group composition of every visited cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionMatrix {
    pub k: usize,
    pub cells: BTreeMap<CellId, CellMass>,
}

impl CompositionMatrix {
    /// Row-stochastic group shares at `cell`.
    pub fn row(&self, cell: &CellId) -> Option<Vec<f64>> {
        self.cells.get(cell).map(|m| m.by_group.iter().map(|v| v / m.total).collect())
    }
}

/// Whether a person's own visits count toward the composition they are exposed to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfInclusion {
    #[default]
    Include,
    /// Remove the person's own mass; falls back to the full row when the
    /// person is the cell's only visitor.
    LeaveOneOut,
}

/// Which closed form turns exposure into a mixing index.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingFormula {
    /// `1 - c_k * sum_q |tau_q - 1/k|`, equal to 1 for uniform exposure.
    #[default]
    Complement,
    /// `c_k * sum_q |tau_q - 1/k|` exactly as typeset in the source formula;
    /// kept for comparison only.
    AsPrinted,
}

/// `tau_aq = sum_{i in q} w_i tau_ia / sum_i w_i tau_ia` over the table.
///
/// Every person in the table must have a group; cells are accumulated in
/// table order so the result is reproducible.
pub fn place_composition(vt: &VisitTable, grouping: &IncomeGrouping) -> Result<CompositionMatrix, MixingError> {
    let k = grouping.k;
    let mut cells: BTreeMap<CellId, CellMass> = BTreeMap::new();
    for row in &vt.rows {
        let g = grouping.group_of(&row.person_id).ok_or_else(|| MixingError::Ungrouped(row.person_id.clone()))?;
        for &(cell, share) in &row.visits {
            let m = cells.entry(cell).or_insert_with(|| CellMass { by_group: vec![0.0; k], total: 0.0 });
            let mass = row.expansion_factor * share;
            m.by_group[g] += mass;
            m.total += mass;
        }
    }
    if let Some((cell, _)) = cells.iter().find(|(_, m)| !(m.total > 0.0)) {
        return Err(MixingError::ZeroWeightCell(*cell));
    }
    Ok(CompositionMatrix { k, cells })
}

/// Per-person exposure to each income group, in table order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureTable {
    pub k: usize,
    pub rows: Vec<(String, Vec<f64>)>,
}

/// `tau_iq = sum_a tau_ia tau_aq`.
pub fn individual_exposure(
    vt: &VisitTable,
    comp: &CompositionMatrix,
    grouping: &IncomeGrouping,
    self_inclusion: SelfInclusion,
) -> Result<ExposureTable, MixingError> {
    let k = comp.k;
    let rows = vt
        .rows
        .par_iter()
        .map(|row| {
            let own_group = grouping.group_of(&row.person_id);
            let mut tau = vec![0.0; k];
            for &(cell, share) in &row.visits {
                let m = comp.cells.get(&cell).ok_or(MixingError::MissingCell(cell))?;
                let mut by_group = std::borrow::Cow::Borrowed(&m.by_group);
                let mut total = m.total;
                if self_inclusion == SelfInclusion::LeaveOneOut {
                    let own = row.expansion_factor * share;
                    let g = own_group.ok_or_else(|| MixingError::Ungrouped(row.person_id.clone()))?;
                    let rest = total - own;
                    if rest > total * 1e-12 {
                        let v = by_group.to_mut();
                        v[g] = (v[g] - own).max(0.0);
                        total = rest;
                    }
                }
                for q in 0..k {
                    tau[q] += share * by_group[q] / total;
                }
            }
            Ok((row.person_id.clone(), tau))
        })
        .collect::<Result<Vec<_>, MixingError>>()?;
    Ok(ExposureTable { k, rows })
}

/// Normalizer `c_k = k / (2 (k - 1))` mapping the L1 deviation into `[0, 1]`.
pub fn normalizer(k: usize) -> f64 {
    k as f64 / (2.0 * (k as f64 - 1.0))
}

/// Mixing index of an exposure vector.
pub fn daytime_mixing(tau: &[f64], formula: MixingFormula) -> Result<f64, MixingError> {
    let k = tau.len();
    if k < 2 {
        return Err(MixingError::Input(format!("need at least 2 groups, got {k}")));
    }
    let sum: f64 = tau.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL || tau.iter().any(|t| !(*t >= -SUM_TOL)) {
        return Err(MixingError::Input(format!("exposure vector not normalized (sum {sum})")));
    }
    let kf = k as f64;
    let dev: f64 = tau.iter().map(|t| (t - 1.0 / kf).abs()).sum();
    // k * dev / (2(k-1)) keeps the one-hot case exactly 1.
    let scaled = (kf * dev / (2.0 * (kf - 1.0))).clamp(0.0, 1.0);
    Ok(match formula {
        MixingFormula::Complement => 1.0 - scaled,
        MixingFormula::AsPrinted => scaled,
    })
}
