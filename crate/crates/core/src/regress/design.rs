use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::mixing::MixingRow;
use crate::places::ExposureRow;
use crate::survey::{flag_caregivers, Gender, Mode, SurveyDataset, WorkStatus};
use crate::transit::AccessRow;

use super::{RegressError, VarGroup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub group: VarGroup,
    pub values: Vec<f64>,
}

/// Outcome, regressors and per-row stratification labels. No constant column
/// is stored; [`super::ols_fit`] adds the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub person_ids: Vec<String>,
    pub y: Vec<f64>,
    pub columns: Vec<Column>,
    /// Columns removed for zero variance or missing data, with the reason.
    pub dropped: Vec<(String, String)>,
    /// Mixing rows without a matching access or exposure row.
    pub join_losses: Vec<String>,
    /// Home-hub distance band per row.
    pub bands: Vec<String>,
}

impl Design {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.columns.iter().map(|c| c.values.clone()).collect()
    }

    /// Column indices per group, in canonical group order; empty groups omitted.
    pub fn groups(&self) -> Vec<(String, Vec<usize>)> {
        VarGroup::ALL
            .iter()
            .filter_map(|g| {
                let idx: Vec<usize> = self.columns.iter().enumerate().filter(|(_, c)| c.group == *g).map(|(i, _)| i).collect();
                (!idx.is_empty()).then(|| (g.as_str().to_string(), idx))
            })
            .collect()
    }

    /// Keeps only columns of the listed groups.
    pub fn select(&self, groups: &[VarGroup]) -> Design {
        let mut d = self.clone();
        d.columns.retain(|c| groups.contains(&c.group));
        d
    }

    pub fn rows(&self, rows: &[usize]) -> Design {
        let pick = |v: &Vec<f64>| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        Design {
            person_ids: rows.iter().map(|&i| self.person_ids[i].clone()).collect(),
            y: pick(&self.y),
            columns: self.columns.iter().map(|c| Column { name: c.name.clone(), group: c.group, values: pick(&c.values) }).collect(),
            dropped: self.dropped.clone(),
            join_losses: self.join_losses.clone(),
            bands: rows.iter().map(|&i| self.bands[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub k: usize,
    pub groups: Vec<VarGroup>,
    /// Stratify by the poly-hub band (else the mono-hub band).
    pub poly_band: bool,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self { k: 4, groups: VarGroup::ALL.to_vec(), poly_band: true }
    }
}

pub struct DesignInputs<'a> {
    /// Survey including household members outside the analysis population,
    /// so caregiver flags see the children.
    pub survey: &'a SurveyDataset,
    pub mixing: &'a [MixingRow],
    pub access: &'a [AccessRow],
    pub pd: &'a [ExposureRow],
    pub ph: &'a [ExposureRow],
    pub labels: &'a [String],
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Joins the per-person tables on `person_id` and assembles the regressors.
///
/// Categorical variables enter as indicators with the first level (group 0,
/// `female`, `full_time`) as baseline. Columns with zero variance in the
/// joined sample are dropped and listed.
pub fn build_design_matrix(inp: &DesignInputs, spec: &DesignSpec) -> Result<Design, RegressError> {
    let access: HashMap<&str, &AccessRow> = inp.access.iter().map(|r| (r.person_id.as_str(), r)).collect();
    let pd: HashMap<&str, &ExposureRow> = inp.pd.iter().map(|r| (r.person_id.as_str(), r)).collect();
    let ph: HashMap<&str, &ExposureRow> = inp.ph.iter().map(|r| (r.person_id.as_str(), r)).collect();
    let caregivers = flag_caregivers(inp.survey);
    let n_cat = inp.labels.len();

    let mut names: Vec<(String, VarGroup)> = Vec::new();
    for g in 1..spec.k {
        names.push((format!("income_g{g}"), VarGroup::S));
    }
    names.push(("age".into(), VarGroup::S));
    for g in &Gender::ALL[1..] {
        names.push((format!("gender_{g}"), VarGroup::S));
    }
    names.push(("caregiver".into(), VarGroup::S));
    for w in &WorkStatus::ALL[1..] {
        names.push((format!("work_{w}"), VarGroup::S));
    }
    let car_col = names.len();
    names.push(("car_owner".into(), VarGroup::S));
    names.push(("train_access".into(), VarGroup::S));
    names.push(("bus_access".into(), VarGroup::S));
    names.push(("hub_mono_km".into(), VarGroup::H));
    names.push(("hub_poly_km".into(), VarGroup::H));
    for l in inp.labels {
        names.push((format!("pd_{l}"), VarGroup::PD));
    }
    for l in inp.labels {
        names.push((format!("ph_{l}"), VarGroup::PH));
    }
    names.push(("share_public_transit".into(), VarGroup::M));
    names.push(("share_private_car".into(), VarGroup::M));

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ids = Vec::new();
    let mut y = Vec::new();
    let mut bands = Vec::new();
    let mut losses = Vec::new();
    let mut car_missing = false;
    for m in inp.mixing {
        let id = m.person_id.as_str();
        let (Some(a), Some(d), Some(h), Some(pi)) = (access.get(id), pd.get(id), ph.get(id), inp.survey.person_index(id)) else {
            losses.push(m.person_id.clone());
            continue;
        };
        if d.values.len() != n_cat || h.values.len() != n_cat {
            return Err(RegressError::Input(format!("exposure vectors for '{id}' do not match {n_cat} labels")));
        }
        if m.group >= spec.k {
            return Err(RegressError::Input(format!("person '{id}' has group {} but k = {}", m.group, spec.k)));
        }
        let p = inp.survey.person(pi);
        let legs = inp.survey.legs_of(pi);
        let share = |mode: Mode| {
            if legs.is_empty() {
                0.0
            } else {
                legs.iter().filter(|l| l.mode == mode).count() as f64 / legs.len() as f64
            }
        };
        let mut r = Vec::with_capacity(names.len());
        r.extend((1..spec.k).map(|g| flag(m.group == g)));
        r.push(p.age as f64);
        r.extend(Gender::ALL[1..].iter().map(|g| flag(p.gender == *g)));
        r.push(flag(caregivers.get(id).copied().unwrap_or(false)));
        r.extend(WorkStatus::ALL[1..].iter().map(|w| flag(p.work_status == *w)));
        car_missing |= p.car_owner.is_none();
        r.push(flag(p.car_owner.unwrap_or(false)));
        r.push(flag(a.train_access));
        r.push(flag(a.bus_access));
        r.push(a.mono_km);
        r.push(a.poly_km);
        r.extend(&d.values);
        r.extend(&h.values);
        r.push(share(Mode::PublicTransit));
        r.push(share(Mode::PrivateCar));
        if r.iter().any(|v| !v.is_finite()) || !m.dm.is_finite() {
            return Err(RegressError::Input(format!("non-finite value for person '{id}'")));
        }
        rows.push(r);
        ids.push(m.person_id.clone());
        y.push(m.dm);
        bands.push(if spec.poly_band { a.poly_band.clone() } else { a.mono_band.clone() });
    }
    if rows.is_empty() {
        return Err(RegressError::Input("no persons left after joining tables".into()));
    }

    let mut columns = Vec::new();
    let mut dropped = Vec::new();
    for (j, (name, group)) in names.into_iter().enumerate() {
        if !spec.groups.contains(&group) {
            continue;
        }
        let values: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        if j == car_col && car_missing {
            dropped.push((name, "missing values".to_string()));
            continue;
        }
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        if lo == hi {
            dropped.push((name, "zero variance".to_string()));
            continue;
        }
        columns.push(Column { name, group, values });
    }
    Ok(Design { person_ids: ids, y, columns, dropped, join_losses: losses, bands })
}
