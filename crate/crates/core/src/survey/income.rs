//! Expansion-weighted income grouping.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::model::SurveyDataset;
use super::SurveyError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncomeGrouping {
    pub k: usize,
    /// person_id -> group index in `0..k`, lowest income first.
    pub assignment: HashMap<String, usize>,
    /// Upper income bound (inclusive) of groups `0..k-1`.
    pub cut_points: Vec<f64>,
}

impl IncomeGrouping {
    pub fn group_of(&self, person_id: &str) -> Option<usize> {
        self.assignment.get(person_id).copied()
    }
}

/// Ranks persons with income by `(income, person_id)` and cuts the cumulative
/// expansion weight at multiples of `W/k`.
///
/// A person belongs to the group in which its mass starts: group
/// `g = max { g : cum_before * k >= g * W }`. The person whose cumulative
/// weight first reaches a boundary is therefore the last member of the lower
/// group.
pub fn assign_income_groups(ds: &SurveyDataset, k: usize) -> Result<IncomeGrouping, SurveyError> {
    if k < 2 {
        return Err(SurveyError::Parameter(format!("k must be >= 2, got {k}")));
    }
    let mut ranked: Vec<(f64, &str, f64)> = ds
        .persons()
        .iter()
        .filter_map(|p| p.income.map(|inc| (inc, p.person_id.as_str(), p.expansion_factor)))
        .collect();
    if ranked.is_empty() {
        return Err(SurveyError::NoIncomeData);
    }
    if ranked.len() < k {
        return Err(SurveyError::Parameter(format!(
            "need at least {k} persons with income, found {}",
            ranked.len()
        )));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    let groups = cut_by_weight(&ranked.iter().map(|r| r.2).collect::<Vec<_>>(), k);

    let mut cut_points = vec![f64::NAN; k - 1];
    let mut assignment = HashMap::with_capacity(ranked.len());
    for ((inc, id, _), &g) in ranked.iter().zip(&groups) {
        assignment.insert(id.to_string(), g);
        // Groups are non-decreasing along the ranking, so the last person seen
        // with group <= c carries the cut.
        for c in g..k - 1 {
            cut_points[c] = *inc;
        }
    }
    let lowest = ranked[0].0;
    for c in cut_points.iter_mut() {
        if c.is_nan() {
            *c = lowest;
        }
    }
    Ok(IncomeGrouping { k, assignment, cut_points })
}

/// Group index for each ranked weight under the start-of-mass rule.
pub fn cut_by_weight(weights: &[f64], k: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let eps = 1e-12 * total.max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(weights.len());
    let mut before = 0.0;
    let mut g = 0usize;
    for &w in weights {
        if total <= 0.0 {
            // All-zero weights: fall back to equal counts.
            out.push(out.len() * k / weights.len());
            continue;
        }
        while g + 1 < k && before * k as f64 >= (g + 1) as f64 * total - eps * k as f64 {
            g += 1;
        }
        out.push(g);
        before += w;
    }
    out
}
