//! Reference implementations used only to check the main estimators.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::grid::{CellId, GridError, HexGrid};
use crate::mixing::VisitOptions;
use crate::survey::{IncomeGrouping, Purpose, SurveyDataset};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub person_id: String,
    pub tau: Vec<f64>,
    pub dm: f64,
}

/// Unaggregated `(cell, weight)` per surviving leg.
fn leg_visits(ds: &SurveyDataset, i: usize, grid: &HexGrid, level: u8, opts: &VisitOptions) -> Result<Vec<(CellId, f64)>, GridError> {
    let home = grid.bin_point(ds.person(i).home, level)?;
    let legs = ds.legs_of(i);
    let mut out = Vec::new();
    for j in 0..legs.len() {
        let cell = grid.bin_point(legs[j].dest, level)?;
        if opts.exclude_home && (cell == home || legs[j].purpose == Purpose::Home) {
            continue;
        }
        let w = if opts.time_weighted {
            let end = if j + 1 < legs.len() { legs[j + 1].depart_min } else { opts.day_end };
            if end > legs[j].arrive_min {
                (end - legs[j].arrive_min) as f64
            } else {
                0.0
            }
        } else {
            1.0
        };
        if w > 0.0 {
            out.push((cell, w));
        }
    }
    Ok(out)
}

/// Exposure and daytime mixing by direct accumulation over every pair of
/// person visits, with self-inclusive place composition. Quadratic in the
/// number of persons; meant for small instances.
pub fn oracle_exposure(
    ds: &SurveyDataset,
    grid: &HexGrid,
    level: u8,
    opts: &VisitOptions,
    grouping: &IncomeGrouping,
) -> Result<Vec<OracleRow>, GridError> {
    let k = grouping.k;
    let mut people: Vec<(usize, usize, f64, Vec<(CellId, f64)>)> = Vec::new();
    for (i, p) in ds.persons().iter().enumerate() {
        let Some(g) = grouping.group_of(&p.person_id) else { continue };
        if !(p.expansion_factor > 0.0) {
            continue;
        }
        let v = leg_visits(ds, i, grid, level, opts)?;
        let total: f64 = v.iter().map(|x| x.1).sum();
        if total > 0.0 {
            people.push((i, g, p.expansion_factor, v.into_iter().map(|(c, w)| (c, w / total)).collect()));
        }
    }
    let mut out = Vec::with_capacity(people.len());
    for (i, _, _, visits) in &people {
        let mut tau = vec![0.0; k];
        for &(cell, share) in visits {
            let mut mass = vec![0.0; k];
            for (_, gj, wj, vj) in &people {
                for &(c, s) in vj {
                    if c == cell {
                        mass[*gj] += wj * s;
                    }
                }
            }
            let total: f64 = mass.iter().sum();
            for q in 0..k {
                tau[q] += share * mass[q] / total;
            }
        }
        let kf = k as f64;
        let dev: f64 = tau.iter().map(|t| (t - 1.0 / kf).abs()).sum();
        let dm = 1.0 - kf * dev / (2.0 * (kf - 1.0));
        out.push(OracleRow { person_id: ds.person(*i).person_id.clone(), tau, dm });
    }
    Ok(out)
}

/// R² of OLS with intercept on the given columns, by SVD least squares.
fn r2_svd(columns: &[Vec<f64>], y: &[f64], cols: &[usize]) -> f64 {
    let n = y.len();
    let x = DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { columns[cols[j - 1]][i] });
    let yv = DVector::from_column_slice(y);
    let beta = x.clone().svd(true, true).solve(&yv, 1e-12).expect("u and v requested");
    let ssr = (&yv - &x * beta).norm_squared();
    let mean = yv.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    1.0 - ssr / sst
}

/// LMG shares by averaging each group's incremental R² over all `g!`
/// orderings explicitly.
pub fn oracle_lmg(columns: &[Vec<f64>], y: &[f64], groups: &[(String, Vec<usize>)]) -> Vec<f64> {
    let g = groups.len();
    let mut shares = vec![0.0; g];
    let mut count = 0usize;
    for order in (0..g).permutations(g) {
        let mut cols: Vec<usize> = Vec::new();
        let mut prev = 0.0;
        for &gi in &order {
            cols.extend(&groups[gi].1);
            let now = r2_svd(columns, y, &cols);
            shares[gi] += now - prev;
            prev = now;
        }
        count += 1;
    }
    shares.iter().map(|s| s / count as f64).collect()
}
