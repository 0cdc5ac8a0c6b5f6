use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryInput {
    pub key: String,
    pub value: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub group: String,
    pub n: usize,
    pub weight_sum: f64,
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Kish effective sample size `(sum w)^2 / sum w^2`.
    pub n_eff: Option<f64>,
}

/// Expansion-weighted mean per group with a linearized standard error
/// `sqrt(n/(n-1) * sum w_i^2 (v_i - m)^2) / sum w_i` and a normal 95% CI.
///
/// Every label in `levels` gets a row, in that order, even when empty (null
/// statistics); groups not listed follow in sorted order.
pub fn group_summary(inputs: &[SummaryInput], levels: &[String]) -> Vec<GroupStat> {
    let mut buckets: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for x in inputs {
        buckets.entry(x.key.as_str()).or_default().push((x.value, x.weight));
    }
    let mut order: Vec<String> = levels.to_vec();
    for k in buckets.keys() {
        if !levels.iter().any(|l| l == k) {
            order.push(k.to_string());
        }
    }
    order
        .into_iter()
        .map(|group| {
            let items = buckets.get(group.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            stat(group, items)
        })
        .collect()
}

fn stat(group: String, items: &[(f64, f64)]) -> GroupStat {
    let n = items.len();
    let wsum: f64 = items.iter().map(|(_, w)| w).sum();
    if n == 0 || !(wsum > 0.0) {
        return GroupStat { group, n, weight_sum: wsum, mean: None, se: None, ci_low: None, ci_high: None, n_eff: None };
    }
    let mean = items.iter().map(|(v, w)| v * w).sum::<f64>() / wsum;
    let w2: f64 = items.iter().map(|(_, w)| w * w).sum();
    let n_eff = wsum * wsum / w2;
    let se = (n > 1).then(|| {
        let s: f64 = items.iter().map(|(v, w)| (w * (v - mean)).powi(2)).sum();
        (n as f64 / (n as f64 - 1.0) * s).sqrt() / wsum
    });
    GroupStat {
        group,
        n,
        weight_sum: wsum,
        mean: Some(mean),
        ci_low: se.map(|s| mean - Z95 * s),
        ci_high: se.map(|s| mean + Z95 * s),
        se,
        n_eff: Some(n_eff),
    }
}

/// Age bands used for the demographic cuts.
pub fn age_band(age: u32) -> &'static str {
    match age {
        0..=17 => "0-17",
        18..=24 => "18-24",
        25..=34 => "25-34",
        35..=44 => "35-44",
        45..=54 => "45-54",
        55..=64 => "55-64",
        _ => "65+",
    }
}
