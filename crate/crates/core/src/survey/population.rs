use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::model::SurveyDataset;

/// Marks likely parents/caretakers: older than 21 with a household minor
/// (under 18) who is at least 18 years younger.
pub fn flag_caregivers(ds: &SurveyDataset) -> HashMap<String, bool> {
    let mut by_household: HashMap<&str, Vec<u32>> = HashMap::new();
    for p in ds.persons() {
        by_household.entry(p.household_id.as_str()).or_default().push(p.age);
    }
    ds.persons()
        .iter()
        .map(|p| {
            let flag = p.age > 21
                && by_household[p.household_id.as_str()].iter().any(|&m| m < 18 && p.age - m >= 18);
            (p.person_id.clone(), flag)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationRules {
    pub min_age: u32,
    pub require_travel: bool,
}

impl Default for PopulationRules {
    fn default() -> Self {
        Self { min_age: 12, require_travel: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    pub removed: BTreeMap<String, usize>,
}

/// Restricts the dataset to the analysis population. A person failing
/// several rules is counted once, under the first rule that fails.
pub fn filter_analysis_population(ds: &SurveyDataset, rules: &PopulationRules) -> (SurveyDataset, FilterReport) {
    let mut report = FilterReport::default();
    let out = ds.retain(|i, p| {
        let reason = if p.age < rules.min_age {
            Some("under_min_age")
        } else if rules.require_travel && ds.legs_of(i).is_empty() {
            Some("no_travel")
        } else {
            None
        };
        match reason {
            Some(r) => {
                *report.removed.entry(r.to_string()).or_insert(0) += 1;
                false
            }
            None => true,
        }
    });
    report.kept = out.len();
    (out, report)
}
