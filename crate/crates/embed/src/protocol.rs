//! Repeated-split evaluation, ablation and cross-income transfer.

use std::collections::BTreeMap;
use std::io::Write;

use mixcity_core::fmt::fmt_f64;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mixcity_core::places::ExposureRow;
use mixcity_core::survey::IncomeGrouping;

use crate::autoenc::{ablate, evaluate, train_exposure_model, Ablation, AeConfig, Combo, Component, Evaluation, Inputs};
use crate::features::ComponentSet;
use crate::{EmbedError, Result};

/// Persons with features, a destination-exposure vector and an income group.
#[derive(Debug, Clone)]
pub struct PredictionData {
    pub x: Inputs,
    pub y: DMatrix<f64>,
    pub groups: Vec<usize>,
    /// Persons with features but no exposure vector or no income group.
    pub dropped: Vec<String>,
}

impl PredictionData {
    pub fn assemble(features: &ComponentSet, pd: &[ExposureRow], grouping: &IncomeGrouping) -> Result<Self> {
        let targets: BTreeMap<&str, &Vec<f64>> = pd.iter().map(|r| (r.person_id.as_str(), &r.values)).collect();
        let n_out = pd.first().map_or(0, |r| r.values.len());
        let mut keep = Vec::new();
        let mut dropped = Vec::new();
        for r in &features.rows {
            match (targets.get(r.person_id.as_str()), grouping.group_of(&r.person_id)) {
                (Some(_), Some(_)) => keep.push(r.clone()),
                _ => dropped.push(r.person_id.clone()),
            }
        }
        if keep.is_empty() {
            return Err(EmbedError::Input("no person has features, exposure and an income group".into()));
        }
        let y = DMatrix::from_fn(keep.len(), n_out, |i, c| targets[keep[i].person_id.as_str()][c]);
        let groups = keep.iter().map(|r| grouping.group_of(&r.person_id).expect("filtered")).collect();
        let x = Inputs::from_features(&ComponentSet { rows: keep, excluded: Vec::new() })?;
        Ok(Self { x, y, groups, dropped })
    }
}

/// Per group, a seeded shuffle puts `round(frac * n_g)` members in training.
/// Returns `(train, test)`, each ascending.
pub fn stratified_split(groups: &[usize], train_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = groups.iter().max().map_or(0, |g| g + 1);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for g in 0..k {
        let mut members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
        members.shuffle(&mut rng);
        let cut = (members.len() as f64 * train_frac).round() as usize;
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n_splits: usize,
    pub train_frac: f64,
    pub seed: u64,
    pub ae: AeConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { n_splits: 10, train_frac: 0.75, seed: 101, ae: AeConfig::default() }
    }
}

impl ProtocolConfig {
    fn split_seed(&self, s: usize) -> u64 {
        self.seed.wrapping_add(1_000_003 * s as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRun {
    pub combo: String,
    pub split: usize,
    pub split_seed: u64,
    pub evaluation: Evaluation,
    pub ablations: Vec<Ablation>,
}

/// One model per combo and split; every included component is ablated.
/// Models train independently, so the parallel loop stays deterministic.
pub fn run_combos(x: &Inputs, y: &DMatrix<f64>, groups: &[usize], combos: &[Combo], cfg: &ProtocolConfig) -> Result<Vec<SplitRun>> {
    if groups.len() != x.n() {
        return Err(EmbedError::Input(format!("{} groups for {} persons", groups.len(), x.n())));
    }
    let jobs: Vec<(usize, usize)> = (0..combos.len()).flat_map(|c| (0..cfg.n_splits).map(move |s| (c, s))).collect();
    jobs.par_iter()
        .map(|&(c, s)| {
            let seed = cfg.split_seed(s);
            let (train, test) = stratified_split(groups, cfg.train_frac, seed);
            let model = train_exposure_model(x, y, &train, &combos[c], &cfg.ae)?;
            let evaluation = evaluate(&model, x, y, &test)?;
            let ablations = combos[c].components().iter().map(|&k| ablate(&model, x, y, &test, k)).collect::<Result<Vec<_>>>()?;
            Ok(SplitRun { combo: combos[c].label(), split: s, split_seed: seed, evaluation, ablations })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboSummary {
    pub combo: String,
    pub n_splits: usize,
    pub mean_r2: f64,
    pub sd_r2: f64,
    pub mae: f64,
    pub mse: f64,
    pub raw_mean_r2: f64,
    /// Mean change in test loss and mean-R² when each component is zeroed.
    pub ablation: BTreeMap<String, (f64, f64)>,
}

/// Means over splits, in order of first appearance.
pub fn summarize(runs: &[SplitRun]) -> Vec<ComboSummary> {
    let mut order: Vec<&str> = Vec::new();
    for r in runs {
        if !order.contains(&r.combo.as_str()) {
            order.push(&r.combo);
        }
    }
    order
        .into_iter()
        .map(|c| {
            let rs: Vec<&SplitRun> = runs.iter().filter(|r| r.combo == c).collect();
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&SplitRun) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            let m = mean(&|r| r.evaluation.transformed.mean_r2);
            let sd = if rs.len() > 1 {
                (rs.iter().map(|r| (r.evaluation.transformed.mean_r2 - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let mut ablation = BTreeMap::new();
            for comp in Component::ALL {
                let ds: Vec<&Ablation> = rs.iter().flat_map(|r| r.ablations.iter().filter(|a| a.component == comp)).collect();
                if !ds.is_empty() {
                    let k = ds.len() as f64;
                    ablation.insert(
                        comp.as_str().to_string(),
                        (ds.iter().map(|a| a.delta_loss).sum::<f64>() / k, ds.iter().map(|a| a.delta_mean_r2).sum::<f64>() / k),
                    );
                }
            }
            ComboSummary {
                combo: c.to_string(),
                n_splits: rs.len(),
                mean_r2: m,
                sd_r2: sd,
                mae: mean(&|r| r.evaluation.transformed.mae),
                mse: mean(&|r| r.evaluation.transformed.mse),
                raw_mean_r2: mean(&|r| r.evaluation.raw.mean_r2),
                ablation,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub combo: String,
    pub train_group: usize,
    pub test_group: usize,
    /// Trained on the training group only.
    pub transferred_r2: f64,
    /// Trained on an income-stratified random sample of the same size.
    pub baseline_r2: f64,
    /// `baseline_r2 - transferred_r2`.
    pub loss: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Trains on one income group's training members and evaluates on every
/// group's test members, against a size-matched stratified baseline; all
/// numbers averaged over `cfg.n_splits` splits.
pub fn transfer_by_income(
    x: &Inputs,
    y: &DMatrix<f64>,
    groups: &[usize],
    train_group: usize,
    combos: &[Combo],
    cfg: &ProtocolConfig,
    min_group: usize,
) -> Result<Vec<TransferCell>> {
    if groups.len() != x.n() {
        return Err(EmbedError::Input(format!("{} groups for {} persons", groups.len(), x.n())));
    }
    let k = groups.iter().max().map_or(0, |g| g + 1);
    if train_group >= k {
        return Err(EmbedError::Parameter(format!("train group {train_group} outside {k} groups")));
    }
    for g in 0..k {
        let n = groups.iter().filter(|&&h| h == g).count();
        if n < min_group {
            return Err(EmbedError::Input(format!("income group {g} has {n} persons, fewer than {min_group}")));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..combos.len()).flat_map(|c| (0..cfg.n_splits).map(move |s| (c, s))).collect();
    // (combo, split) -> per test group (transferred, baseline, n_train, n_test)
    let per_job: Vec<Vec<(f64, f64, usize, usize)>> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let seed = cfg.split_seed(s);
            let (train, test) = stratified_split(groups, cfg.train_frac, seed);
            let own: Vec<usize> = train.iter().copied().filter(|&i| groups[i] == train_group).collect();
            let baseline = stratified_sample(&train, groups, own.len(), seed ^ 0xba5e);
            let mt = train_exposure_model(x, y, &own, &combos[c], &cfg.ae)?;
            let mb = train_exposure_model(x, y, &baseline, &combos[c], &cfg.ae)?;
            (0..k)
                .map(|h| {
                    let rows: Vec<usize> = test.iter().copied().filter(|&i| groups[i] == h).collect();
                    let t = evaluate(&mt, x, y, &rows)?.transformed.mean_r2;
                    let b = evaluate(&mb, x, y, &rows)?.transformed.mean_r2;
                    Ok((t, b, own.len(), rows.len()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (c, combo) in combos.iter().enumerate() {
        for h in 0..k {
            let cells: Vec<&(f64, f64, usize, usize)> = (0..cfg.n_splits).map(|s| &per_job[c * cfg.n_splits + s][h]).collect();
            let n = cells.len() as f64;
            let t = cells.iter().map(|v| v.0).sum::<f64>() / n;
            let b = cells.iter().map(|v| v.1).sum::<f64>() / n;
            out.push(TransferCell {
                combo: combo.label(),
                train_group,
                test_group: h,
                transferred_r2: t,
                baseline_r2: b,
                loss: b - t,
                n_train: cells[0].2,
                n_test: cells[0].3,
            });
        }
    }
    Ok(out)
}

/// `size` rows of `pool` with group shares matching the pool's, by seeded
/// shuffle within each group; ascending.
fn stratified_sample(pool: &[usize], groups: &[usize], size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = groups.iter().max().map_or(0, |g| g + 1);
    let mut by_group: Vec<Vec<usize>> = vec![Vec::new(); k];
    for &i in pool {
        by_group[groups[i]].push(i);
    }
    let mut out = Vec::with_capacity(size);
    let mut taken = 0usize;
    let mut cum = 0usize;
    for members in &mut by_group {
        members.shuffle(&mut rng);
        cum += members.len();
        // Largest-remainder style cut keeps the total exactly `size`.
        let target = (size as f64 * cum as f64 / pool.len().max(1) as f64).round() as usize;
        let take = target.saturating_sub(taken).min(members.len());
        out.extend_from_slice(&members[..take]);
        taken += take;
    }
    out.sort_unstable();
    out
}

pub fn write_transfer_csv(cells: &[TransferCell], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["combo", "train_group", "test_group", "transferred_r2", "baseline_r2", "loss", "n_train", "n_test"])?;
    for c in cells {
        w.write_record([
            c.combo.clone(),
            c.train_group.to_string(),
            c.test_group.to_string(),
            fmt_f64(c.transferred_r2),
            fmt_f64(c.baseline_r2),
            fmt_f64(c.loss),
            c.n_train.to_string(),
            c.n_test.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
