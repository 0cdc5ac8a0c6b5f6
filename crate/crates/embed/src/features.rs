//! Per-person component features: pooled home-isochrone embedding (`h_h`),
//! pooled activity-hull embedding (`h_a`) and demographics (`h_d`).

use std::io::Write;

use mixcity_core::fmt::fmt_f64;
use mixcity_core::geo::WALK_SPEED_M_PER_MIN;
use mixcity_core::places::IsochroneProvider;
use mixcity_core::survey::{Gender, Person, SurveyDataset, WorkStatus};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gcn::NodeEmbeddings;
use crate::hull::Region;
use crate::{EmbedError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub t_minutes: f64,
    /// Radius used when the activity hull has no area.
    pub buffer_m: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { t_minutes: 15.0, buffer_m: 15.0 * WALK_SPEED_M_PER_MIN }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonFeatures {
    pub person_id: String,
    pub h_h: Vec<f64>,
    pub h_a: Vec<f64>,
    pub h_d: Vec<f64>,
    /// No POI within the home isochrone; `h_h` is zero.
    pub home_empty: bool,
    /// No POI inside the activity region; `h_a` is zero.
    pub activity_empty: bool,
    pub degenerate_hull: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet {
    pub rows: Vec<PersonFeatures>,
    /// Persons without legs.
    pub excluded: Vec<String>,
}

pub fn demographic_labels() -> Vec<String> {
    let mut v = vec!["age".to_string(), "gender_male".into(), "gender_other".into()];
    v.extend(WorkStatus::ALL.iter().map(|w| format!("work_{w}")));
    v
}

/// Age over 100, gender indicators against female, and work status one-hot.
/// Income is deliberately absent.
pub fn demographic_vector(p: &Person) -> Vec<f64> {
    let mut v = vec![p.age as f64 / 100.0, (p.gender == Gender::Male) as u8 as f64, (p.gender == Gender::Other) as u8 as f64];
    v.extend(WorkStatus::ALL.iter().map(|w| (p.work_status == *w) as u8 as f64));
    v
}

fn mean_rows(emb: &DMatrix<f64>, ids: &[usize]) -> Vec<f64> {
    let mut m = vec![0.0; emb.ncols()];
    for &i in ids {
        for (k, v) in m.iter_mut().enumerate() {
            *v += emb[(i, k)];
        }
    }
    if !ids.is_empty() {
        m.iter_mut().for_each(|v| *v /= ids.len() as f64);
    }
    m
}

/// POI indices inside the activity region of the given visited points.
pub fn activity_pois(points: &[(f64, f64)], provider: &dyn IsochroneProvider, buffer_m: f64) -> (Region, Vec<usize>) {
    let region = Region::from_points(points, buffer_m);
    let (min, max) = region.bbox();
    let index = provider.index();
    let ids = index.in_box(min, max).into_iter().filter(|&i| region.contains(index.xy(i))).collect();
    (region, ids)
}

/// Embeddings must be in the provider's POI order.
pub fn component_embeddings(
    ds: &SurveyDataset,
    emb: &NodeEmbeddings,
    provider: &dyn IsochroneProvider,
    cfg: &FeatureConfig,
) -> Result<ComponentSet> {
    let index = provider.index();
    if emb.len() != index.len() || emb.ids.iter().zip(index.pois()).any(|(a, p)| *a != p.poi_id) {
        return Err(EmbedError::Input("embedding ids do not match the POI index order".into()));
    }
    let proj = index.projection();
    let per_person: Vec<Result<Option<PersonFeatures>>> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let p = ds.person(i);
            let legs = ds.legs_of(i);
            if legs.is_empty() {
                return Ok(None);
            }
            let home_ids = provider.reachable(p.home, cfg.t_minutes)?;
            let mut pts = vec![proj.forward(p.home)];
            pts.extend(legs.iter().map(|l| proj.forward(l.dest)));
            let (region, act_ids) = activity_pois(&pts, provider, cfg.buffer_m);
            Ok(Some(PersonFeatures {
                person_id: p.person_id.clone(),
                h_h: mean_rows(&emb.vectors, &home_ids),
                h_a: mean_rows(&emb.vectors, &act_ids),
                h_d: demographic_vector(p),
                home_empty: home_ids.is_empty(),
                activity_empty: act_ids.is_empty(),
                degenerate_hull: region.is_degenerate(),
            }))
        })
        .collect();
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (i, r) in per_person.into_iter().enumerate() {
        match r? {
            Some(f) => rows.push(f),
            None => excluded.push(ds.person(i).person_id.clone()),
        }
    }
    Ok(ComponentSet { rows, excluded })
}

/// One row per person: id, flags, then the three blocks with prefixed columns.
pub fn write_features_csv(set: &ComponentSet, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = set.rows.first() else {
        w.write_record(["person_id"])?;
        w.flush()?;
        return Ok(());
    };
    let mut header: Vec<String> = ["person_id", "home_empty", "activity_empty", "degenerate_hull"].map(String::from).to_vec();
    header.extend((0..first.h_h.len()).map(|k| format!("hh{k}")));
    header.extend((0..first.h_a.len()).map(|k| format!("ha{k}")));
    header.extend(demographic_labels().into_iter().map(|l| format!("hd_{l}")));
    w.write_record(&header)?;
    for r in &set.rows {
        let mut rec = vec![r.person_id.clone(), (r.home_empty as u8).to_string(), (r.activity_empty as u8).to_string(), (r.degenerate_hull as u8).to_string()];
        rec.extend(r.h_h.iter().chain(&r.h_a).chain(&r.h_d).map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
