//! Re-estimation of daytime mixing with income inferred from the home zone.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::grid::HexGrid;
use crate::survey::{assign_income_groups, SurveyDataset};
use crate::zones::ZoneIndex;

use super::{compute_mixing, MixingConfig, MixingError, MixingResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyPair {
    pub person_id: String,
    pub weight: f64,
    pub dm_survey: f64,
    pub dm_proxy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyComparison {
    pub pairs: Vec<ProxyPair>,
    pub survey: MixingResult,
    pub proxy: MixingResult,
    /// Persons with reported income whose home lies outside every zone.
    pub outside_zones: usize,
    pub mean_survey: f64,
    pub mean_proxy: f64,
    /// `1 - mean_proxy / mean_survey`; positive when the proxy understates mixing.
    pub relative_gap: f64,
    /// Fewer distinct zone medians than groups: the proxy ranking is decided
    /// by tie-breaking, not income.
    pub degenerate: bool,
    /// Least-squares fit `dm_proxy = intercept + slope * dm_survey`.
    pub slope: f64,
    pub intercept: f64,
}

/// Runs the mixing pipeline twice on the same population (persons with
/// reported income whose home falls in a zone): once grouped by reported
/// income, once grouped by the home zone's median income.
pub fn proxy_income_dm(
    ds: &SurveyDataset,
    zones: &ZoneIndex,
    grid: &HexGrid,
    cfg: &MixingConfig,
) -> Result<ProxyComparison, MixingError> {
    let mut outside = 0usize;
    let pop = ds.retain(|_, p| {
        if p.income.is_none() {
            return false;
        }
        if zones.assign(p.home).is_none() {
            outside += 1;
            return false;
        }
        true
    });
    let proxy_ds = pop.with_incomes(|p| zones.assign(p.home).map(|z| z.median_income));

    let distinct: HashSet<u64> = proxy_ds.persons().iter().filter_map(|p| p.income.map(f64::to_bits)).collect();
    let degenerate = distinct.len() < cfg.k;

    let survey_groups = assign_income_groups(&pop, cfg.k)?;
    let proxy_groups = assign_income_groups(&proxy_ds, cfg.k)?;
    let survey = compute_mixing(&pop, grid, &survey_groups, cfg)?;
    let mut proxy = compute_mixing(&pop, grid, &proxy_groups, cfg)?;
    proxy.proxy = true;

    let proxy_dm = proxy.dm_by_person();
    let pairs: Vec<ProxyPair> = survey
        .rows
        .iter()
        .filter_map(|r| {
            proxy_dm.get(r.person_id.as_str()).map(|&dm_proxy| ProxyPair {
                person_id: r.person_id.clone(),
                weight: pop.person(pop.person_index(&r.person_id).expect("same population")).expansion_factor,
                dm_survey: r.dm,
                dm_proxy,
            })
        })
        .collect();

    let wsum: f64 = pairs.iter().map(|p| p.weight).sum();
    let mean_survey = pairs.iter().map(|p| p.weight * p.dm_survey).sum::<f64>() / wsum;
    let mean_proxy = pairs.iter().map(|p| p.weight * p.dm_proxy).sum::<f64>() / wsum;
    let (slope, intercept) = simple_ols(pairs.iter().map(|p| (p.dm_survey, p.dm_proxy)));

    Ok(ProxyComparison {
        pairs,
        survey,
        proxy,
        outside_zones: outside,
        mean_survey,
        mean_proxy,
        relative_gap: if mean_survey > 0.0 { 1.0 - mean_proxy / mean_survey } else { 0.0 },
        degenerate,
        slope,
        intercept,
    })
}

/// Unweighted least-squares slope and intercept; NaN slope when x is constant.
pub(crate) fn simple_ols(points: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = points.collect();
    let n = pts.len() as f64;
    if pts.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return (f64::NAN, my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
