//! Supervised autoencoder: one tanh encoder per included component, latent
//! code `z` by concatenation, linear decoder `Ŷ = z W_d + b_d`.

use std::fmt;
use std::ops::Range;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{ComponentSet, PersonFeatures};
use crate::tensors::{find, Tensor};
use crate::{EmbedError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    #[serde(rename = "h_h")]
    Home,
    #[serde(rename = "h_a")]
    Activity,
    #[serde(rename = "h_d")]
    Demo,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Home, Component::Activity, Component::Demo];

    pub fn as_str(self) -> &'static str {
        match self {
            Component::Home => "h_h",
            Component::Activity => "h_a",
            Component::Demo => "h_d",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Component::ALL.into_iter().find(|c| c.as_str() == s)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Non-empty set of components in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Combo(Vec<Component>);

impl Combo {
    pub fn new(mut parts: Vec<Component>) -> Result<Self> {
        parts.sort();
        parts.dedup();
        if parts.is_empty() {
            return Err(EmbedError::Parameter("a combo needs at least one component".into()));
        }
        Ok(Self(parts))
    }

    /// Parses labels such as `h_a||h_d`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts = s
            .split("||")
            .map(|p| Component::from_label(p.trim()).ok_or_else(|| EmbedError::Parameter(format!("unknown component '{p}' in '{s}'"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(parts)
    }

    pub fn components(&self) -> &[Component] {
        &self.0
    }

    pub fn contains(&self, c: Component) -> bool {
        self.0.contains(&c)
    }

    pub fn label(&self) -> String {
        self.0.iter().map(|c| c.as_str()).collect::<Vec<_>>().join("||")
    }

    pub fn full() -> Self {
        Self(Component::ALL.to_vec())
    }
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Feature blocks, one row per person, indexed by component.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub person_ids: Vec<String>,
    blocks: [DMatrix<f64>; 3],
}

impl Inputs {
    pub fn new(person_ids: Vec<String>, h_h: DMatrix<f64>, h_a: DMatrix<f64>, h_d: DMatrix<f64>) -> Result<Self> {
        let n = person_ids.len();
        if [&h_h, &h_a, &h_d].iter().any(|m| m.nrows() != n) {
            return Err(EmbedError::Input(format!("feature blocks must have {n} rows")));
        }
        Ok(Self { person_ids, blocks: [h_h, h_a, h_d] })
    }

    pub fn from_features(set: &ComponentSet) -> Result<Self> {
        let n = set.rows.len();
        let block = |f: fn(&PersonFeatures) -> &Vec<f64>| {
            let d = set.rows.first().map(|r| f(r).len()).unwrap_or(0);
            DMatrix::from_fn(n, d, |i, k| f(&set.rows[i])[k])
        };
        Self::new(set.rows.iter().map(|r| r.person_id.clone()).collect(), block(|r| &r.h_h), block(|r| &r.h_a), block(|r| &r.h_d))
    }

    pub fn n(&self) -> usize {
        self.person_ids.len()
    }

    pub fn block(&self, c: Component) -> &DMatrix<f64> {
        &self.blocks[c.slot()]
    }

    pub fn block_mut(&mut self, c: Component) -> &mut DMatrix<f64> {
        &mut self.blocks[c.slot()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    Log1p,
    Identity,
}

impl TargetTransform {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            TargetTransform::Log1p => v.ln_1p(),
            TargetTransform::Identity => v,
        }
    }

    pub fn invert(self, v: f64) -> f64 {
        match self {
            TargetTransform::Log1p => v.exp_m1(),
            TargetTransform::Identity => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub transform: TargetTransform,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self { hidden: 32, lr: 0.05, epochs: 300, seed: 17, transform: TargetTransform::Log1p }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Encoder {
    component: Component,
    mean: Vec<f64>,
    sd: Vec<f64>,
    w: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl Encoder {
    fn standardize(&self, x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), x.ncols(), |i, k| (x[(rows[i], k)] - self.mean[k]) / self.sd[k])
    }
}

fn add_row(m: &mut DMatrix<f64>, b: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            m[(i, j)] += b[(0, j)];
        }
    }
}

fn col_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(1, m.ncols(), |_, j| m.column(j).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureModel {
    pub combo: Combo,
    pub hidden: usize,
    pub transform: TargetTransform,
    encoders: Vec<Encoder>,
    pub w_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
}

impl ExposureModel {
    /// Columns of `z` produced by `c`, if included.
    pub fn block(&self, c: Component) -> Option<Range<usize>> {
        self.encoders.iter().position(|e| e.component == c).map(|k| k * self.hidden..(k + 1) * self.hidden)
    }

    pub fn latent_dim(&self) -> usize {
        self.encoders.len() * self.hidden
    }

    pub fn output_dim(&self) -> usize {
        self.w_d.ncols()
    }

    /// Latent codes with the blocks of `zeroed` components set to zero, plus
    /// the standardized inputs and activations for backpropagation.
    fn encode_full(&self, x: &Inputs, rows: &[usize], zeroed: &[Component]) -> (DMatrix<f64>, Vec<(DMatrix<f64>, DMatrix<f64>)>) {
        let mut z = DMatrix::zeros(rows.len(), self.latent_dim());
        let mut cache = Vec::with_capacity(self.encoders.len());
        for (k, e) in self.encoders.iter().enumerate() {
            let xs = e.standardize(x.block(e.component), rows);
            let mut a = &xs * &e.w;
            add_row(&mut a, &e.b);
            let h = a.map(f64::tanh);
            if !zeroed.contains(&e.component) {
                z.columns_mut(k * self.hidden, self.hidden).copy_from(&h);
            }
            cache.push((xs, h));
        }
        (z, cache)
    }

    pub fn encode(&self, x: &Inputs, rows: &[usize]) -> DMatrix<f64> {
        self.encode_full(x, rows, &[]).0
    }

    /// `z W_d + b_d`.
    pub fn decode(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = z * &self.w_d;
        add_row(&mut y, &self.b_d);
        y
    }

    /// Predictions on the transformed target scale.
    pub fn predict(&self, x: &Inputs, rows: &[usize]) -> DMatrix<f64> {
        self.decode(&self.encode(x, rows))
    }

    pub fn predict_ablated(&self, x: &Inputs, rows: &[usize], zeroed: &[Component]) -> DMatrix<f64> {
        self.decode(&self.encode_full(x, rows, zeroed).0)
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        for e in &self.encoders {
            let p = format!("encoder.{}", e.component);
            out.push(Tensor::from_matrix(format!("{p}.mean"), &DMatrix::from_row_slice(1, e.mean.len(), &e.mean)));
            out.push(Tensor::from_matrix(format!("{p}.sd"), &DMatrix::from_row_slice(1, e.sd.len(), &e.sd)));
            out.push(Tensor::from_matrix(format!("{p}.w"), &e.w));
            out.push(Tensor::from_matrix(format!("{p}.b"), &e.b));
        }
        out.push(Tensor::from_matrix("decoder.w", &self.w_d));
        out.push(Tensor::from_matrix("decoder.b", &self.b_d));
        out
    }

    pub fn from_tensors(ts: &[Tensor], combo: Combo, transform: TargetTransform) -> Result<Self> {
        let mut encoders = Vec::new();
        for &c in combo.components() {
            let get = |n: &str| find(ts, &format!("encoder.{c}.{n}")).map(|t| t.to_matrix());
            encoders.push(Encoder {
                component: c,
                mean: get("mean")?.iter().copied().collect(),
                sd: get("sd")?.iter().copied().collect(),
                w: get("w")?,
                b: get("b")?,
            });
        }
        let hidden = encoders.first().map(|e| e.w.ncols()).unwrap_or(0);
        Ok(Self { combo, hidden, transform, encoders, w_d: find(ts, "decoder.w")?.to_matrix(), b_d: find(ts, "decoder.b")?.to_matrix() })
    }

    /// Replaces a component's encoder weights and bias with zeros.
    pub fn zero_encoder(&mut self, c: Component) {
        for e in self.encoders.iter_mut().filter(|e| e.component == c) {
            e.w.fill(0.0);
            e.b.fill(0.0);
        }
    }
}

struct Grads {
    encoders: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    w_d: DMatrix<f64>,
    b_d: DMatrix<f64>,
}

/// Mean over rows of the summed squared error, and its gradient, for
/// standardized inputs `xs` (one per encoder) and targets `ys`.
fn loss_and_grads(model: &ExposureModel, xs: &[DMatrix<f64>], ys: &DMatrix<f64>) -> (f64, Grads) {
    let h = model.hidden;
    let n = ys.nrows() as f64;
    let mut z = DMatrix::zeros(ys.nrows(), model.latent_dim());
    let mut acts = Vec::with_capacity(xs.len());
    for (k, (e, xk)) in model.encoders.iter().zip(xs).enumerate() {
        let mut a = xk * &e.w;
        add_row(&mut a, &e.b);
        let hk = a.map(f64::tanh);
        z.columns_mut(k * h, h).copy_from(&hk);
        acts.push(hk);
    }
    let resid = model.decode(&z) - ys;
    let loss = resid.norm_squared() / n;
    let dy = resid * (2.0 / n);
    let dz = &dy * model.w_d.transpose();
    let encoders = xs
        .iter()
        .zip(acts)
        .enumerate()
        .map(|(k, (xk, hk))| {
            let mut da = dz.columns(k * h, h).into_owned();
            da.zip_apply(&hk, |g, t| *g *= 1.0 - t * t);
            (xk.transpose() * &da, col_sums(&da))
        })
        .collect();
    (loss, Grads { encoders, w_d: z.transpose() * &dy, b_d: col_sums(&dy) })
}

/// Transformed targets for the given rows.
pub fn transform_targets(y: &DMatrix<f64>, rows: &[usize], t: TargetTransform) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), y.ncols(), |i, c| t.apply(y[(rows[i], c)]))
}

/// Full-batch gradient descent on the per-person squared error summed over
/// categories (the category count times the MSE), from a seeded Glorot start.
pub fn train_exposure_model(x: &Inputs, y: &DMatrix<f64>, rows: &[usize], combo: &Combo, cfg: &AeConfig) -> Result<ExposureModel> {
    if rows.is_empty() {
        return Err(EmbedError::Input("no training rows".into()));
    }
    if y.nrows() != x.n() {
        return Err(EmbedError::Input(format!("{} target rows for {} persons", y.nrows(), x.n())));
    }
    if !(cfg.lr > 0.0) || cfg.hidden == 0 {
        return Err(EmbedError::Parameter(format!("{cfg:?}")));
    }
    let yt = transform_targets(y, rows, cfg.transform);
    if yt.iter().any(|v| !v.is_finite()) {
        return Err(EmbedError::Input("targets are not finite after transform".into()));
    }
    let n = rows.len() as f64;
    let h = cfg.hidden;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut glorot = |r: usize, c: usize| {
        let a = (6.0 / (r + c) as f64).sqrt();
        let v: Vec<f64> = (0..r * c).map(|_| rng.random_range(-a..a)).collect();
        DMatrix::from_row_slice(r, c, &v)
    };
    let mut encoders = Vec::new();
    for &c in combo.components() {
        let xb = x.block(c);
        let d = xb.ncols();
        let mut mean = vec![0.0; d];
        let mut sd = vec![1.0; d];
        for k in 0..d {
            let m = rows.iter().map(|&i| xb[(i, k)]).sum::<f64>() / n;
            let s = (rows.iter().map(|&i| (xb[(i, k)] - m).powi(2)).sum::<f64>() / n).sqrt();
            mean[k] = m;
            sd[k] = if s > 1e-12 { s } else { 1.0 };
        }
        encoders.push(Encoder { component: c, mean, sd, w: glorot(d, h), b: DMatrix::zeros(1, h) });
    }
    // Training runs on per-category standardized targets; the scale is folded
    // back into the decoder at the end, so the fitted map keeps its form.
    let n_out = y.ncols();
    let y_mean = col_sums(&yt) / n;
    let y_sd: Vec<f64> = (0..n_out)
        .map(|c| {
            let s = (yt.column(c).iter().map(|v| (v - y_mean[(0, c)]).powi(2)).sum::<f64>() / n).sqrt();
            if s > 1e-12 { s } else { 1.0 }
        })
        .collect();
    let ys = DMatrix::from_fn(yt.nrows(), n_out, |i, c| (yt[(i, c)] - y_mean[(0, c)]) / y_sd[c]);
    let w_d = glorot(encoders.len() * h, n_out);
    let b_d = DMatrix::zeros(1, n_out);
    let mut model = ExposureModel { combo: combo.clone(), hidden: h, transform: cfg.transform, encoders, w_d, b_d };
    let xs: Vec<DMatrix<f64>> = model.encoders.iter().map(|e| e.standardize(x.block(e.component), rows)).collect();

    for epoch in 0..cfg.epochs {
        let (loss, g) = loss_and_grads(&model, &xs, &ys);
        if !loss.is_finite() {
            return Err(EmbedError::NonFinite(format!("autoencoder {combo} epoch {epoch}: loss {loss}, lr {}", cfg.lr)));
        }
        model.w_d -= g.w_d * cfg.lr;
        model.b_d -= g.b_d * cfg.lr;
        for (e, (gw, gb)) in model.encoders.iter_mut().zip(g.encoders) {
            e.w -= gw * cfg.lr;
            e.b -= gb * cfg.lr;
        }
    }
    for c in 0..n_out {
        model.w_d.column_mut(c).scale_mut(y_sd[c]);
        model.b_d[(0, c)] = model.b_d[(0, c)] * y_sd[c] + y_mean[(0, c)];
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mean_r2: f64,
    /// `None` where the category does not vary in the evaluation rows.
    pub per_category_r2: Vec<Option<f64>>,
    pub skipped: Vec<usize>,
    pub mae: f64,
    pub mse: f64,
    pub n: usize,
}

/// Mean over varying categories of `1 - SSE_c / SST_c`, plus MAE and MSE.
pub fn metrics(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<Metrics> {
    if pred.shape() != truth.shape() || truth.nrows() == 0 {
        return Err(EmbedError::Input(format!("prediction {:?} vs truth {:?}", pred.shape(), truth.shape())));
    }
    let n = truth.nrows() as f64;
    let mut per = Vec::with_capacity(truth.ncols());
    let mut skipped = Vec::new();
    for c in 0..truth.ncols() {
        let t = truth.column(c);
        let mean = t.sum() / n;
        let sst: f64 = t.iter().map(|v| (v - mean).powi(2)).sum();
        if sst == 0.0 {
            per.push(None);
            skipped.push(c);
            continue;
        }
        let sse: f64 = t.iter().zip(pred.column(c).iter()).map(|(a, b)| (a - b).powi(2)).sum();
        per.push(Some(1.0 - sse / sst));
    }
    let valid: Vec<f64> = per.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(EmbedError::Input("no category varies in the evaluation rows".into()));
    }
    let diff = pred - truth;
    let cells = diff.len() as f64;
    Ok(Metrics {
        mean_r2: valid.iter().sum::<f64>() / valid.len() as f64,
        per_category_r2: per,
        skipped,
        mae: diff.iter().map(|v| v.abs()).sum::<f64>() / cells,
        mse: diff.norm_squared() / cells,
        n: truth.nrows(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// On the model's target scale; the headline numbers.
    pub transformed: Metrics,
    /// After inverting the transform.
    pub raw: Metrics,
}

pub fn evaluate(model: &ExposureModel, x: &Inputs, y: &DMatrix<f64>, rows: &[usize]) -> Result<Evaluation> {
    let pred = model.predict(x, rows);
    let truth = transform_targets(y, rows, model.transform);
    let raw_pred = pred.map(|v| model.transform.invert(v));
    let raw_truth = DMatrix::from_fn(rows.len(), y.ncols(), |i, c| y[(rows[i], c)]);
    Ok(Evaluation { transformed: metrics(&pred, &truth)?, raw: metrics(&raw_pred, &raw_truth)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub component: Component,
    pub loss_full: f64,
    pub loss_ablated: f64,
    /// `loss_ablated - loss_full`.
    pub delta_loss: f64,
    /// `mean_r2(ablated) - mean_r2(full)`.
    pub delta_mean_r2: f64,
}

/// Zeroes the component's block of `z` at inference and compares test MSE
/// and mean-R² on the transformed scale.
pub fn ablate(model: &ExposureModel, x: &Inputs, y: &DMatrix<f64>, rows: &[usize], component: Component) -> Result<Ablation> {
    if !model.combo.contains(component) {
        return Err(EmbedError::Parameter(format!("{component} is not part of combo {}", model.combo)));
    }
    let truth = transform_targets(y, rows, model.transform);
    let full = metrics(&model.predict(x, rows), &truth)?;
    let abl = metrics(&model.predict_ablated(x, rows, &[component]), &truth)?;
    Ok(Ablation {
        component,
        loss_full: full.mse,
        loss_ablated: abl.mse,
        delta_loss: abl.mse - full.mse,
        delta_mean_r2: abl.mean_r2 - full.mean_r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn synthetic(n: usize, seed: u64) -> (Inputs, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
        let hh = g(n, 6);
        let ha = g(n, 6);
        let hd = g(n, 4);
        let a = g(6, 5);
        let noise = g(n, 5) * 0.1;
        let y = &ha * &a * 0.3 + noise;
        let ids = (0..n).map(|i| format!("p{i}")).collect();
        (Inputs::new(ids, hh, ha, hd).unwrap(), y)
    }

    fn cfg() -> AeConfig {
        AeConfig { transform: TargetTransform::Identity, epochs: 400, ..AeConfig::default() }
    }

    #[test]
    fn combo_labels() {
        let c = Combo::parse("h_d||h_a").unwrap();
        assert_eq!(c.label(), "h_a||h_d");
        assert!(Combo::parse("h_x").is_err());
        assert!(Combo::new(vec![]).is_err());
        assert_eq!(Combo::full().label(), "h_h||h_a||h_d");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (x, y) = synthetic(7, 9);
        let rows: Vec<usize> = (0..7).collect();
        let m = train_exposure_model(&x, &y, &rows, &Combo::parse("h_a||h_d").unwrap(), &AeConfig { epochs: 2, hidden: 2, ..cfg() }).unwrap();
        let xs: Vec<DMatrix<f64>> = m.encoders.iter().map(|e| e.standardize(x.block(e.component), &rows)).collect();
        let ys = y.clone();
        let (_, g) = loss_and_grads(&m, &xs, &ys);
        let eps = 1e-6;
        let mut worst = 0.0f64;
        let mut check = |analytic: f64, m_plus: &ExposureModel, m_minus: &ExposureModel| {
            let fd = (loss_and_grads(m_plus, &xs, &ys).0 - loss_and_grads(m_minus, &xs, &ys).0) / (2.0 * eps);
            worst = worst.max((fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-8));
        };
        for k in 0..m.encoders.len() {
            for idx in 0..m.encoders[k].w.len() {
                let (mut p, mut q) = (m.clone(), m.clone());
                p.encoders[k].w[idx] += eps;
                q.encoders[k].w[idx] -= eps;
                check(g.encoders[k].0[idx], &p, &q);
            }
            for idx in 0..m.encoders[k].b.len() {
                let (mut p, mut q) = (m.clone(), m.clone());
                p.encoders[k].b[idx] += eps;
                q.encoders[k].b[idx] -= eps;
                check(g.encoders[k].1[idx], &p, &q);
            }
        }
        for idx in 0..m.w_d.len() {
            let (mut p, mut q) = (m.clone(), m.clone());
            p.w_d[idx] += eps;
            q.w_d[idx] -= eps;
            check(g.w_d[idx], &p, &q);
        }
        for idx in 0..m.b_d.len() {
            let (mut p, mut q) = (m.clone(), m.clone());
            p.b_d[idx] += eps;
            q.b_d[idx] -= eps;
            check(g.b_d[idx], &p, &q);
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn metric_anchors() {
        let truth = DMatrix::from_row_slice(4, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 6.0, 5.0]);
        let perfect = metrics(&truth, &truth).unwrap();
        assert_eq!((perfect.mean_r2, perfect.mae), (1.0, 0.0));
        assert_eq!(perfect.skipped, vec![1]);
        let means = DMatrix::from_fn(4, 2, |_, c| if c == 0 { 3.0 } else { 5.0 });
        assert!(metrics(&means, &truth).unwrap().mean_r2.abs() < 1e-15);
    }

    #[test]
    fn decoder_is_affine() {
        let (x, y) = synthetic(50, 1);
        let rows: Vec<usize> = (0..50).collect();
        let m = train_exposure_model(&x, &y, &rows, &Combo::parse("h_a||h_d").unwrap(), &AeConfig { epochs: 3, ..cfg() }).unwrap();
        // Dyadic inputs keep every product and sum exact.
        let mut m = m;
        m.w_d = m.w_d.map(|v| (v * 64.0).round() / 64.0);
        m.b_d = m.b_d.map(|v| (v * 64.0).round() / 64.0);
        let z1 = DMatrix::from_fn(3, 64, |i, k| ((i * 7 + k) % 5) as f64 / 4.0 - 0.5);
        let z2 = DMatrix::from_fn(3, 64, |i, k| ((i + k * 3) % 7) as f64 / 8.0 - 0.25);
        let lhs = m.decode(&(&z1 + &z2)) - m.decode(&z1) - m.decode(&z2);
        for i in 0..3 {
            for c in 0..5 {
                assert_eq!(lhs[(i, c)] + m.b_d[(0, c)], 0.0);
            }
        }
    }

    #[test]
    fn planted_component_wins() {
        let (x, y) = synthetic(600, 2);
        let train: Vec<usize> = (0..450).collect();
        let test: Vec<usize> = (450..600).collect();
        let r2 = |combo: &str| {
            let m = train_exposure_model(&x, &y, &train, &Combo::parse(combo).unwrap(), &cfg()).unwrap();
            evaluate(&m, &x, &y, &test).unwrap().transformed.mean_r2
        };
        let (a, h, d) = (r2("h_a"), r2("h_h"), r2("h_d"));
        assert!(a > 0.8, "{a}");
        assert!(h < 0.2 && d < 0.2, "{h} {d}");
        let full = train_exposure_model(&x, &y, &train, &Combo::full(), &cfg()).unwrap();
        let da = ablate(&full, &x, &y, &test, Component::Activity).unwrap();
        let dh = ablate(&full, &x, &y, &test, Component::Home).unwrap();
        assert!(da.delta_loss > dh.delta_loss && da.delta_loss > 0.0);
    }

    #[test]
    fn ablation_edge_cases() {
        let (x, y) = synthetic(80, 3);
        let rows: Vec<usize> = (0..80).collect();
        let mut m = train_exposure_model(&x, &y, &rows, &Combo::full(), &AeConfig { epochs: 20, ..cfg() }).unwrap();
        m.zero_encoder(Component::Demo);
        assert_eq!(ablate(&m, &x, &y, &rows, Component::Demo).unwrap().delta_loss, 0.0);
        let all = m.predict_ablated(&x, &rows, &Component::ALL);
        for i in 0..rows.len() {
            assert_eq!(all.row(i), m.b_d.row(0));
        }
        let only_a = train_exposure_model(&x, &y, &rows, &Combo::parse("h_a").unwrap(), &AeConfig { epochs: 2, ..cfg() }).unwrap();
        assert!(matches!(ablate(&only_a, &x, &y, &rows, Component::Home), Err(EmbedError::Parameter(_))));
    }

    #[test]
    fn weights_round_trip_and_determinism() {
        let (x, y) = synthetic(60, 4);
        let rows: Vec<usize> = (0..60).collect();
        let combo = Combo::parse("h_h||h_d").unwrap();
        let m = train_exposure_model(&x, &y, &rows, &combo, &AeConfig { epochs: 10, ..cfg() }).unwrap();
        assert_eq!(m, train_exposure_model(&x, &y, &rows, &combo, &AeConfig { epochs: 10, ..cfg() }).unwrap());
        let mut buf = Vec::new();
        crate::tensors::write_tensors(&m.to_tensors(), &mut buf).unwrap();
        let back = ExposureModel::from_tensors(&crate::tensors::read_tensors(buf.as_slice()).unwrap(), combo, m.transform).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.latent_dim(), 64);
        assert_eq!(m.block(Component::Demo), Some(32..64));
    }

    #[test]
    fn log1p_targets() {
        let (x, _) = synthetic(40, 5);
        let y = DMatrix::from_fn(40, 3, |i, c| ((i * (c + 1)) % 9) as f64);
        let rows: Vec<usize> = (0..40).collect();
        let m = train_exposure_model(&x, &y, &rows, &Combo::parse("h_a").unwrap(), &AeConfig { epochs: 50, ..AeConfig::default() }).unwrap();
        let ev = evaluate(&m, &x, &y, &rows).unwrap();
        assert!(ev.transformed.mse.is_finite() && ev.raw.mse.is_finite());
        let neg = DMatrix::from_element(40, 3, -2.0);
        assert!(train_exposure_model(&x, &neg, &rows, &Combo::parse("h_a").unwrap(), &AeConfig::default()).is_err());
    }
}
