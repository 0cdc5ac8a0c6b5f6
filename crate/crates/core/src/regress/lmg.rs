use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Design, RegressError};

pub const MAX_LMG_GROUPS: usize = 8;

/// Columns whose residual norm after orthogonalization falls below this
/// fraction of their centered norm are treated as dependent and skipped.
const DEP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmgResult {
    pub groups: Vec<String>,
    /// Absolute shares of R²; they sum to `r2_full`.
    pub shares: Vec<f64>,
    /// Shares divided by `r2_full`; `None` when the full R² is zero.
    pub normalized: Vec<Option<f64>>,
    pub r2_full: f64,
    pub n: usize,
}

fn centered(v: &[f64]) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - m).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// R² of regressing centered `y` on the centered columns `subset`, by
/// modified Gram-Schmidt with one reorthogonalization pass. Dependent
/// columns contribute nothing, so duplicated or collinear sets are fine.
pub fn subset_r2(columns: &[Vec<f64>], y: &[f64], subset: &[usize]) -> f64 {
    let yc = centered(y);
    let syy = dot(&yc, &yc);
    if !(syy > 0.0) || subset.is_empty() {
        return 0.0;
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(subset.len());
    for &j in subset {
        let mut v = centered(&columns[j]);
        let norm0 = dot(&v, &v).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm <= DEP_TOL * norm0 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    let explained: f64 = basis.iter().map(|q| dot(q, &yc).powi(2)).sum();
    (explained / syy).clamp(0.0, 1.0)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Shapley decomposition of R² over column groups from all `2^g` subset fits.
pub fn lmg_decompose(columns: &[Vec<f64>], y: &[f64], groups: &[(String, Vec<usize>)]) -> Result<LmgResult, RegressError> {
    let g = groups.len();
    if g == 0 {
        return Err(RegressError::Input("no groups".into()));
    }
    if g > MAX_LMG_GROUPS {
        return Err(RegressError::TooManyGroups(g));
    }
    if y.len() < 2 {
        return Err(RegressError::Input("need at least 2 observations".into()));
    }
    if let Some(bad) = groups.iter().flat_map(|(_, c)| c).find(|&&j| j >= columns.len() || columns[j].len() != y.len()) {
        return Err(RegressError::Input(format!("bad column index {bad}")));
    }
    let r2: Vec<f64> = (0..1usize << g)
        .into_par_iter()
        .map(|mask| {
            let cols: Vec<usize> = (0..g).filter(|b| mask >> b & 1 == 1).flat_map(|b| groups[b].1.iter().copied()).collect();
            subset_r2(columns, y, &cols)
        })
        .collect();
    let gf = factorial(g);
    let weight: Vec<f64> = (0..g).map(|s| factorial(s) * factorial(g - s - 1) / gf).collect();
    let shares: Vec<f64> = (0..g)
        .map(|k| {
            (0..1usize << g)
                .filter(|m| m >> k & 1 == 0)
                .map(|m| weight[m.count_ones() as usize] * (r2[m | 1 << k] - r2[m]))
                .sum()
        })
        .collect();
    let r2_full = r2[(1 << g) - 1];
    Ok(LmgResult {
        groups: groups.iter().map(|(n, _)| n.clone()).collect(),
        normalized: shares.iter().map(|s| (r2_full > 0.0).then(|| s / r2_full)).collect(),
        shares,
        r2_full,
        n: y.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandLmg {
    pub band: String,
    pub n: usize,
    pub result: Option<LmgResult>,
    /// Why the band was skipped.
    pub note: Option<String>,
}

/// LMG separately within each band, in the order given; the `all` row is the
/// unstratified fit. Bands with `n <= p` are skipped with a note.
pub fn stratified_lmg(design: &Design, bands: &[String]) -> Result<Vec<BandLmg>, RegressError> {
    let groups = design.groups();
    let p = design.columns.len() + 1;
    let mut out = Vec::with_capacity(bands.len() + 1);
    let all: Vec<usize> = (0..design.n()).collect();
    let mut run = |label: &str, rows: Vec<usize>| -> Result<(), RegressError> {
        let n = rows.len();
        if n <= p {
            out.push(BandLmg { band: label.to_string(), n, result: None, note: Some(format!("skipped: n = {n} <= p = {p}")) });
            return Ok(());
        }
        let sub = design.rows(&rows);
        let result = lmg_decompose(&sub.values(), &sub.y, &groups)?;
        out.push(BandLmg { band: label.to_string(), n, result: Some(result), note: None });
        Ok(())
    };
    run("all", all)?;
    for b in bands {
        let rows: Vec<usize> = design.bands.iter().enumerate().filter(|(_, x)| *x == b).map(|(i, _)| i).collect();
        run(b, rows)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::{ols_fit, Column, VarGroup};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn grp(name: &str, cols: &[usize]) -> (String, Vec<usize>) {
        (name.to_string(), cols.to_vec())
    }

    #[test]
    fn subset_r2_matches_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| normals(&mut rng, 200)).collect();
        let y: Vec<f64> = (0..200).map(|i| cols[0][i] - 0.5 * cols[2][i] + rng.sample::<f64, _>(StandardNormal)).collect();
        let fit = ols_fit(&cols, &["a".into(), "b".into(), "c".into()], &y, false).unwrap();
        assert!((subset_r2(&cols, &y, &[0, 1, 2]) - fit.r2).abs() < 1e-12);
    }

    #[test]
    fn pure_signal_and_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x1 = centered(&normals(&mut rng, 500));
        // Noise regressor made exactly orthogonal to the signal in-sample.
        let mut x2 = centered(&normals(&mut rng, 500));
        let c = dot(&x1, &x2) / dot(&x1, &x1);
        x2.iter_mut().zip(&x1).for_each(|(a, b)| *a -= c * b);
        let r = lmg_decompose(&[x1.clone(), x2], &x1, &[grp("signal", &[0]), grp("noise", &[1])]).unwrap();
        assert!((r.r2_full - 1.0).abs() < 1e-12);
        assert!((r.shares[0] - r.r2_full).abs() < 1e-6 && r.shares[1].abs() < 1e-6, "{:?}", r.shares);
    }

    #[test]
    fn duplicated_group_splits_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x1 = normals(&mut rng, 300);
        let y: Vec<f64> = x1.iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect();
        let r = lmg_decompose(&[x1.clone(), x1], &y, &[grp("a", &[0]), grp("b", &[1])]).unwrap();
        assert!((r.shares[0] - r.shares[1]).abs() < 1e-9);
        assert!((r.shares.iter().sum::<f64>() - r.r2_full).abs() < 1e-9);
    }

    #[test]
    fn three_groups_by_ordering_enumeration() {
        // Independent of the Shapley weights: average increments over all 3! orderings.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cols: Vec<Vec<f64>> = (0..4).map(|_| normals(&mut rng, 120)).collect();
        let y: Vec<f64> = (0..120).map(|i| cols[0][i] + 0.5 * cols[1][i] + 0.3 * cols[2][i] * cols[3][i] + cols[3][i]).collect();
        let groups = vec![grp("a", &[0]), grp("b", &[1, 2]), grp("c", &[3])];
        let r = lmg_decompose(&cols, &y, &groups).unwrap();
        let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut want = [0.0; 3];
        for o in orders {
            let mut cols_in: Vec<usize> = Vec::new();
            let mut prev = 0.0;
            for &gi in &o {
                cols_in.extend(&groups[gi].1);
                let now = subset_r2(&cols, &y, &cols_in);
                want[gi] += (now - prev) / 6.0;
                prev = now;
            }
        }
        for k in 0..3 {
            assert!((r.shares[k] - want[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn too_many_groups() {
        let cols: Vec<Vec<f64>> = (0..9).map(|j| (0..20).map(|i| ((i * (j + 1)) as f64).sin()).collect()).collect();
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let groups: Vec<_> = (0..9).map(|j| grp(&j.to_string(), &[j])).collect();
        assert!(matches!(lmg_decompose(&cols, &y, &groups), Err(RegressError::TooManyGroups(9))));
    }

    fn design(n: usize, seed: u64) -> Design {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = normals(&mut rng, n);
        let b = normals(&mut rng, n);
        let bands: Vec<String> = (0..n).map(|i| if i % 2 == 0 { "near".into() } else { "far".into() }).collect();
        // Near rows depend on a, far rows on b.
        let y: Vec<f64> =
            (0..n).map(|i| if i % 2 == 0 { a[i] } else { b[i] } + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        Design {
            person_ids: (0..n).map(|i| i.to_string()).collect(),
            y,
            columns: vec![
                Column { name: "a".into(), group: VarGroup::S, values: a },
                Column { name: "b".into(), group: VarGroup::H, values: b },
            ],
            dropped: vec![],
            join_losses: vec![],
            bands,
        }
    }

    #[test]
    fn stratified_recovers_planted_bands() {
        let d = design(400, 5);
        let res = stratified_lmg(&d, &["near".into(), "far".into(), "empty".into()]).unwrap();
        assert_eq!(res.len(), 4);
        let near = res[1].result.as_ref().unwrap();
        let far = res[2].result.as_ref().unwrap();
        assert!(near.shares[0] > near.shares[1] && far.shares[1] > far.shares[0]);
        assert!(res[3].result.is_none() && res[3].n == 0);
    }

    #[test]
    fn single_band_equals_unstratified() {
        let mut d = design(100, 6);
        d.bands = vec!["only".into(); 100];
        let res = stratified_lmg(&d, &["only".into()]).unwrap();
        assert_eq!(res[0].result, res[1].result);
    }

    proptest! {
        #[test]
        fn additivity_nonnegativity_scale_invariance(seed in 0u64..1000, scale in 0.001f64..1000.0, g in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 60;
            let cols: Vec<Vec<f64>> = (0..g + 1).map(|_| normals(&mut rng, n)).collect();
            let y: Vec<f64> = (0..n).map(|i| cols.iter().enumerate().map(|(j, c)| c[i] * (j as f64 - 1.0)).sum::<f64>() + rng.sample::<f64, _>(StandardNormal)).collect();
            let mut groups: Vec<(String, Vec<usize>)> = (0..g).map(|j| grp(&j.to_string(), &[j])).collect();
            groups[0].1.push(g);
            let r = lmg_decompose(&cols, &y, &groups).unwrap();
            prop_assert!((r.shares.iter().sum::<f64>() - r.r2_full).abs() < 1e-9);
            prop_assert!(r.shares.iter().all(|s| *s >= -1e-12));
            let mut scaled = cols.clone();
            scaled[0].iter_mut().for_each(|v| *v *= scale);
            let r2 = lmg_decompose(&scaled, &y, &groups).unwrap();
            for k in 0..g {
                prop_assert!((r.shares[k] - r2.shares[k]).abs() < 1e-9);
            }
        }
    }
}
