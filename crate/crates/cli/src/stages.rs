//! Pipeline stages. Each stage reads its inputs from the raw input files or
//! from earlier stages' artifacts, writes its own artifacts, and is recorded
//! in the manifest with a hash of everything it read.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mixcity_core::geo::GeoPoint;
use mixcity_core::mixing::{age_band, compute_mixing, group_summary, proxy_income_dm, read_mixing_csv, write_group_summary, write_mixing_csv, write_proxy_csv, GroupStat, SummaryInput};
use mixcity_core::places::{categorize_pois, compute_exposure, read_exposure_csv, read_pois, write_exposure_csv, CategorySet, DiscIsochrone, PoiIndex, PoiMapping};
use mixcity_core::regress::{build_design_matrix, ols_fit, stratified_lmg, write_lmg_csv, write_regression_csv, DesignInputs, DesignSpec, VarGroup};
use mixcity_core::survey::{assign_income_groups, filter_analysis_population, flag_caregivers, load_survey, write_legs, write_persons, write_rejects, SchemaConfig, Standardizer, SurveyDataset};
use mixcity_core::transit::{compute_access, filter_open, read_access_csv, read_stations, write_access_csv, write_hubs_csv, GreatCircle, Station};
use mixcity_core::zones::{read_zones, ZoneIndex};
use mixcity_core::HexGrid;
use mixcity_embed::autoenc::{train_exposure_model, Combo};
use mixcity_embed::features::{component_embeddings, write_features_csv};
use mixcity_embed::gcn::{embed_index, read_embeddings_csv, write_embeddings_csv, NodeEmbeddings, TrainingInfo};
use mixcity_embed::graph::{build_place_graph, read_ride_table, write_graph_csv, EdgeType, TransitTimes, TravelTime};
use mixcity_embed::protocol::{run_combos, stratified_split, summarize, transfer_by_income, write_transfer_csv, PredictionData};
use mixcity_embed::tensors::write_tensors;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::manifest::{InputHasher, Manifest};
use crate::{report, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StageName {
    Ingest,
    Mixing,
    Access,
    Exposure,
    Regress,
    Embed,
    Predict,
    Report,
}

impl StageName {
    pub const ALL: [StageName; 8] = [
        StageName::Ingest,
        StageName::Mixing,
        StageName::Access,
        StageName::Exposure,
        StageName::Regress,
        StageName::Embed,
        StageName::Predict,
        StageName::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageName::Ingest => "ingest",
            StageName::Mixing => "mixing",
            StageName::Access => "access",
            StageName::Exposure => "exposure",
            StageName::Regress => "regress",
            StageName::Embed => "embed",
            StageName::Predict => "predict",
            StageName::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        Self::ALL.into_iter().find(|n| n.as_str() == s).ok_or_else(|| CliError::Validation(format!("unknown stage '{s}'")))
    }
}

// Artifact paths, relative to the output directory.
pub const PERSONS_ALL: &str = "survey/persons_all.csv";
pub const LEGS_ALL: &str = "survey/legs_all.csv";
pub const PERSONS: &str = "survey/persons.csv";
pub const LEGS: &str = "survey/legs.csv";
pub const REJECTS: &str = "survey/rejects.csv";
pub const INGEST_SUMMARY: &str = "survey/ingest.json";
pub const MIXING: &str = "mixing/mixing.csv";
pub const PROXY: &str = "mixing/proxy_comparison.csv";
pub const GROUP_SUMMARY: &str = "mixing/group_summary.csv";
pub const MIXING_SUMMARY: &str = "mixing/summary.json";
pub const ACCESS: &str = "access/access.csv";
pub const HUBS: &str = "access/hubs.csv";
pub const ACCESS_SUMMARY: &str = "access/summary.json";
pub const PD: &str = "exposure/pd.csv";
pub const PH: &str = "exposure/ph.csv";
pub const EXPOSURE_SUMMARY: &str = "exposure/summary.json";
pub const REGRESSION: &str = "regress/regression.csv";
pub const LMG: &str = "regress/lmg.csv";
pub const REGRESS_SUMMARY: &str = "regress/summary.json";
pub const GRAPH: &str = "embed/graph.csv";
pub const EMBEDDINGS: &str = "embed/embeddings.csv";
pub const GCN_WEIGHTS: &str = "embed/gcn_weights.txt";
pub const GCN_SUMMARY: &str = "embed/gcn.json";
pub const FEATURES: &str = "predict/features.csv";
pub const METRICS: &str = "predict/metrics.json";
pub const COMBOS: &str = "predict/combos.csv";
pub const TRANSFER: &str = "predict/transfer_matrix.csv";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

pub struct Context {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
}

fn stage_err(stage: StageName) -> impl Fn(&dyn std::fmt::Display) -> CliError {
    move |e| CliError::Stage { stage: stage.as_str().to_string(), cause: e.to_string() }
}

impl Context {
    pub fn new(cfg: PipelineConfig, out: PathBuf) -> Self {
        Self { cfg, out }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn create(&self, rel: &str) -> Result<BufWriter<File>, CliError> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        }
        File::create(&p).map(BufWriter::new).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(rel)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::Io(e.to_string()))
    }

    fn open(&self, rel: &str) -> Result<BufReader<File>, CliError> {
        let p = self.path(rel);
        File::open(&p).map(BufReader::new).map_err(|e| CliError::MissingArtifact(format!("{rel} ({e}); run the stage that produces it first")))
    }

    fn input(&self, p: &Path) -> PathBuf {
        self.cfg.input.path(p)
    }

    fn open_input(&self, p: &Path) -> Result<BufReader<File>, CliError> {
        let full = self.input(p);
        File::open(&full).map(BufReader::new).map_err(|e| CliError::Validation(format!("{}: {e}", full.display())))
    }

    fn zone_paths(&self) -> Option<(PathBuf, PathBuf)> {
        let i = &self.cfg.input;
        let (a, v) = (self.input(i.zones.as_ref()?), self.input(i.zone_vertices.as_ref()?));
        (a.exists() && v.exists()).then_some((a, v))
    }

    fn load_canonical(&self, persons: &str, legs: &str) -> Result<SurveyDataset, CliError> {
        let (p, l) = (self.path(persons), self.path(legs));
        if !p.exists() || !l.exists() {
            return Err(CliError::MissingArtifact(format!("{persons}; run the ingest stage first")));
        }
        load_survey(&p, &l, &SchemaConfig::default(), &mut Standardizer::with_defaults()).map_err(|e| CliError::Io(e.to_string()))
    }

    /// Analysis population.
    pub fn survey(&self) -> Result<SurveyDataset, CliError> {
        self.load_canonical(PERSONS, LEGS)
    }

    /// Every valid person, including those outside the analysis population.
    pub fn full_survey(&self) -> Result<SurveyDataset, CliError> {
        self.load_canonical(PERSONS_ALL, LEGS_ALL)
    }

    fn stations(&self) -> Result<Vec<Station>, CliError> {
        read_stations(self.open_input(&self.cfg.input.stations)?).map_err(|e| CliError::Validation(format!("stations: {e}")))
    }

    fn poi_index(&self, origin: GeoPoint) -> Result<(PoiIndex, mixcity_core::places::CategorizeReport), CliError> {
        let raw = read_pois(self.open_input(&self.cfg.input.pois)?).map_err(|e| CliError::Validation(format!("pois: {e}")))?;
        let mut mapping = PoiMapping::with_defaults();
        if let Some(m) = &self.cfg.input.poi_mapping {
            mapping.merge(PoiMapping::read(self.open_input(m)?).map_err(|e| CliError::Validation(format!("poi mapping: {e}")))?);
        }
        let set = CategorySet::default();
        let (pois, report) = categorize_pois(&raw, &mapping, &set);
        Ok((PoiIndex::new(pois, set, origin), report))
    }

    /// Hashes the config sections and files a stage depends on.
    pub fn input_hash(&self, stage: StageName) -> Result<String, CliError> {
        let c = &self.cfg;
        let mut h = InputHasher::new(stage.as_str());
        let json = |v: &dyn erased::Json| v.json();
        let i = &c.input;
        match stage {
            StageName::Ingest => {
                h.text("population", &json(&c.population));
                h.file("persons", &self.input(&i.persons))?;
                h.file("legs", &self.input(&i.legs))?;
            }
            StageName::Mixing => {
                h.text("mixing", &json(&c.mixing));
                for f in [PERSONS, LEGS, PERSONS_ALL, LEGS_ALL] {
                    h.file(f, &self.path(f))?;
                }
                if let Some((a, v)) = self.zone_paths() {
                    h.file("zones", &a)?;
                    h.file("zone_vertices", &v)?;
                }
            }
            StageName::Access => {
                h.text("access", &json(&c.access));
                h.text("level", &c.mixing.level.to_string());
                h.text("survey_year", &json(&i.survey_year));
                h.file(PERSONS, &self.path(PERSONS))?;
                h.file(LEGS, &self.path(LEGS))?;
                h.file("stations", &self.input(&i.stations))?;
            }
            StageName::Exposure => {
                h.text("exposure", &json(&c.exposure));
                h.text("level", &c.mixing.level.to_string());
                self.hash_pois(&mut h)?;
                h.file(PERSONS, &self.path(PERSONS))?;
                h.file(LEGS, &self.path(LEGS))?;
            }
            StageName::Regress => {
                h.text("regress", &json(&c.regress));
                h.text("k", &c.mixing.k.to_string());
                for f in [PERSONS_ALL, LEGS_ALL, MIXING, ACCESS, PD, PH] {
                    h.file(f, &self.path(f))?;
                }
            }
            StageName::Embed => {
                h.text("graph", &json(&c.graph));
                h.text("gcn", &json(&c.gcn));
                h.text("seed", &c.seeds.gcn.to_string());
                h.text("survey_year", &json(&i.survey_year));
                self.hash_pois(&mut h)?;
                h.file(PERSONS, &self.path(PERSONS))?;
                h.file("stations", &self.input(&i.stations))?;
                if let Some(r) = &i.ride_table {
                    h.file("ride_table", &self.input(r))?;
                }
            }
            StageName::Predict => {
                h.text("predict", &json(&c.predict));
                h.text("seeds", &json(&c.seeds));
                h.text("k", &c.mixing.k.to_string());
                self.hash_pois(&mut h)?;
                for f in [PERSONS, LEGS, PD, EMBEDDINGS, GCN_SUMMARY] {
                    h.file(f, &self.path(f))?;
                }
            }
            StageName::Report => {
                for f in report::INPUTS {
                    let p = self.path(f);
                    if p.exists() {
                        h.file(f, &p)?;
                    }
                }
            }
        }
        Ok(h.finish())
    }

    fn hash_pois(&self, h: &mut InputHasher) -> Result<(), CliError> {
        h.file("pois", &self.input(&self.cfg.input.pois))?;
        if let Some(m) = &self.cfg.input.poi_mapping {
            h.file("poi_mapping", &self.input(m))?;
        }
        Ok(())
    }
}

/// Small shim so config sections of different types hash the same way.
mod erased {
    pub trait Json {
        fn json(&self) -> String;
    }
    impl<T: serde::Serialize> Json for T {
        fn json(&self) -> String {
            serde_json::to_string(self).expect("config serializes")
        }
    }
}

/// South-west corner of the surveyed homes, floored to 0.01 degrees; fixes
/// the hex grid and the planar frame for every stage.
pub fn grid_origin(ds: &SurveyDataset) -> GeoPoint {
    let lat = ds.persons().iter().map(|p| p.home.lat).fold(f64::INFINITY, f64::min);
    let lon = ds.persons().iter().map(|p| p.home.lon).fold(f64::INFINITY, f64::min);
    if !lat.is_finite() {
        return GeoPoint::new(0.0, 0.0);
    }
    GeoPoint::new((lat * 100.0).floor() / 100.0, (lon * 100.0).floor() / 100.0)
}

/// Runs one stage and returns the artifacts it wrote.
pub fn run_stage(ctx: &Context, stage: StageName) -> Result<Vec<String>, CliError> {
    match stage {
        StageName::Ingest => ingest(ctx),
        StageName::Mixing => mixing(ctx),
        StageName::Access => access(ctx),
        StageName::Exposure => exposure(ctx),
        StageName::Regress => regress(ctx),
        StageName::Embed => embed(ctx),
        StageName::Predict => predict(ctx),
        StageName::Report => report::emit(ctx),
    }
}

#[derive(Serialize)]
struct IngestSummary {
    persons_valid: usize,
    legs_valid: usize,
    rejects: usize,
    unknown_categories: BTreeMap<String, usize>,
    analysis_persons: usize,
    removed: BTreeMap<String, usize>,
}

fn ingest(ctx: &Context) -> Result<Vec<String>, CliError> {
    let err = stage_err(StageName::Ingest);
    let i = &ctx.cfg.input;
    let mut std = Standardizer::with_defaults();
    let ds = load_survey(&ctx.input(&i.persons), &ctx.input(&i.legs), &SchemaConfig::default(), &mut std)
        .map_err(|e| CliError::Validation(format!("survey: {e}")))?;
    if ds.is_empty() {
        return Err(CliError::Validation("survey has no valid persons".into()));
    }
    let (pop, report) = filter_analysis_population(&ds, &ctx.cfg.population_rules());
    write_persons(&ds, ctx.create(PERSONS_ALL)?).map_err(|e| err(&e))?;
    write_legs(&ds, ctx.create(LEGS_ALL)?).map_err(|e| err(&e))?;
    write_persons(&pop, ctx.create(PERSONS)?).map_err(|e| err(&e))?;
    write_legs(&pop, ctx.create(LEGS)?).map_err(|e| err(&e))?;
    write_rejects(&ds.rejects, ctx.create(REJECTS)?).map_err(|e| err(&e))?;
    ctx.write_json(
        INGEST_SUMMARY,
        &IngestSummary {
            persons_valid: ds.len(),
            legs_valid: ds.legs().len(),
            rejects: ds.rejects.len(),
            unknown_categories: ds.unknown_categories.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            analysis_persons: pop.len(),
            removed: report.removed,
        },
    )?;
    Ok([PERSONS_ALL, LEGS_ALL, PERSONS, LEGS, REJECTS, INGEST_SUMMARY].map(String::from).to_vec())
}

#[derive(Serialize)]
struct MixingSummary {
    k: usize,
    level: u8,
    persons: usize,
    excluded: usize,
    no_visits: usize,
    mean_dm: Option<f64>,
    mean_nm: Option<f64>,
    proxy: Option<ProxySummary>,
    note: Option<String>,
}

#[derive(Serialize)]
pub struct ProxySummary {
    pub pairs: usize,
    pub outside_zones: usize,
    pub mean_survey: f64,
    pub mean_proxy: f64,
    pub relative_gap: f64,
    pub degenerate: bool,
    pub slope: f64,
    pub intercept: f64,
}

fn weighted_mean(vals: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (s, w) = vals.fold((0.0, 0.0), |(s, w), (v, x)| (s + v * x, w + x));
    (w > 0.0).then(|| s / w)
}

fn mixing(ctx: &Context) -> Result<Vec<String>, CliError> {
    let err = stage_err(StageName::Mixing);
    let ds = ctx.survey()?;
    let full = ctx.full_survey()?;
    let cfg = ctx.cfg.mixing_config();
    let grid = HexGrid::new(grid_origin(&ds));
    let grouping = assign_income_groups(&ds, cfg.k).map_err(|e| err(&e))?;
    let res = compute_mixing(&ds, &grid, &grouping, &cfg).map_err(|e| err(&e))?;
    write_mixing_csv(&res, ctx.create(MIXING)?).map_err(|e| err(&e))?;
    let mut outputs = vec![MIXING.to_string()];

    let weight: HashMap<&str, f64> = ds.persons().iter().map(|p| (p.person_id.as_str(), p.expansion_factor)).collect();
    let caregivers = flag_caregivers(&full);
    let person = |id: &str| ds.person(ds.person_index(id).expect("mixing rows come from the survey"));
    let cut = |name: &str, key: &dyn Fn(&str) -> String, levels: Vec<String>| -> (String, Vec<GroupStat>) {
        let inputs: Vec<SummaryInput> =
            res.rows.iter().map(|r| SummaryInput { key: key(&r.person_id), value: r.dm, weight: weight[r.person_id.as_str()] }).collect();
        (name.to_string(), group_summary(&inputs, &levels))
    };
    let group_of: HashMap<&str, usize> = res.rows.iter().map(|r| (r.person_id.as_str(), r.group)).collect();
    let cuts = vec![
        cut("income", &|id| format!("g{}", group_of[id]), (0..cfg.k).map(|g| format!("g{g}")).collect()),
        cut("age", &|id| age_band(person(id).age).to_string(), Vec::new()),
        cut("gender", &|id| person(id).gender.to_string(), Vec::new()),
        cut("caregiver", &|id| caregivers.get(id).copied().unwrap_or(false).to_string(), vec!["false".into(), "true".into()]),
        cut("work_status", &|id| person(id).work_status.to_string(), Vec::new()),
        cut("car_owner", &|id| person(id).car_owner.map_or("unknown".to_string(), |c| c.to_string()), Vec::new()),
    ];
    write_group_summary(&cuts, ctx.create(GROUP_SUMMARY)?).map_err(|e| err(&e))?;
    outputs.push(GROUP_SUMMARY.to_string());

    let mut note = None;
    let proxy = match ctx.zone_paths() {
        Some((a, v)) => {
            let open = |p: &Path| File::open(p).map(BufReader::new).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())));
            let zones = read_zones(open(&a)?, open(&v)?).map_err(|e| CliError::Validation(format!("zones: {e}")))?;
            let index = ZoneIndex::new(zones).map_err(|e| CliError::Validation(format!("zones: {e}")))?;
            let cmp = proxy_income_dm(&ds, &index, &grid, &cfg).map_err(|e| err(&e))?;
            write_proxy_csv(&cmp, ctx.create(PROXY)?).map_err(|e| err(&e))?;
            outputs.push(PROXY.to_string());
            Some(ProxySummary {
                pairs: cmp.pairs.len(),
                outside_zones: cmp.outside_zones,
                mean_survey: cmp.mean_survey,
                mean_proxy: cmp.mean_proxy,
                relative_gap: cmp.relative_gap,
                degenerate: cmp.degenerate,
                slope: cmp.slope,
                intercept: cmp.intercept,
            })
        }
        None => {
            note = Some("no census zones; proxy comparison skipped".to_string());
            None
        }
    };
    ctx.write_json(
        MIXING_SUMMARY,
        &MixingSummary {
            k: cfg.k,
            level: cfg.level,
            persons: res.rows.len(),
            excluded: res.excluded.len(),
            no_visits: res.no_visits.len(),
            mean_dm: weighted_mean(res.rows.iter().map(|r| (r.dm, weight[r.person_id.as_str()]))),
            mean_nm: weighted_mean(res.rows.iter().filter_map(|r| r.nm.map(|nm| (nm, weight[r.person_id.as_str()])))),
            proxy,
            note,
        },
    )?;
    outputs.push(MIXING_SUMMARY.to_string());
    Ok(outputs)
}

#[derive(Serialize)]
struct AccessSummary {
    stations_used: usize,
    mono_cells: usize,
    mono_coverage: f64,
    poly_cells: usize,
    poly_coverage: f64,
    train_access_share: f64,
    bus_access_share: f64,
}

fn access(ctx: &Context) -> Result<Vec<String>, CliError> {
    let err = stage_err(StageName::Access);
    let ds = ctx.survey()?;
    let stations = ctx.stations()?;
    let grid = HexGrid::new(grid_origin(&ds));
    let rep = compute_access(&ds, &stations, &grid, &ctx.cfg.access_config(), &GreatCircle).map_err(|e| err(&e))?;
    write_access_csv(&rep.rows, ctx.create(ACCESS)?).map_err(|e| err(&e))?;
    write_hubs_csv(&[&rep.mono, &rep.poly], ctx.create(HUBS)?).map_err(|e| err(&e))?;
    let n = rep.rows.len().max(1) as f64;
    ctx.write_json(
        ACCESS_SUMMARY,
        &AccessSummary {
            stations_used: rep.stations_used,
            mono_cells: rep.mono.cells.len(),
            mono_coverage: rep.mono.coverage_share,
            poly_cells: rep.poly.cells.len(),
            poly_coverage: rep.poly.coverage_share,
            train_access_share: rep.rows.iter().filter(|r| r.train_access).count() as f64 / n,
            bus_access_share: rep.rows.iter().filter(|r| r.bus_access).count() as f64 / n,
        },
    )?;
    Ok([ACCESS, HUBS, ACCESS_SUMMARY].map(String::from).to_vec())
}

#[derive(Serialize)]
struct ExposureSummary {
    pois_active: usize,
    categorize: mixcity_core::places::CategorizeReport,
    persons_with_pd: usize,
    omitted: usize,
}

fn exposure(ctx: &Context) -> Result<Vec<String>, CliError> {
    let err = stage_err(StageName::Exposure);
    let ds = ctx.survey()?;
    let origin = grid_origin(&ds);
    let (index, categorize) = ctx.poi_index(origin)?;
    let iso = DiscIsochrone::walking(&index);
    let res = compute_exposure(&ds, &HexGrid::new(origin), &iso, &ctx.cfg.exposure_config()).map_err(|e| err(&e))?;
    write_exposure_csv(&res.labels, &res.pd, ctx.create(PD)?).map_err(|e| err(&e))?;
    write_exposure_csv(&res.labels, &res.ph, ctx.create(PH)?).map_err(|e| err(&e))?;
    ctx.write_json(EXPOSURE_SUMMARY, &ExposureSummary { pois_active: index.len(), categorize, persons_with_pd: res.pd.len(), omitted: res.omitted.len() })?;
    Ok([PD, PH, EXPOSURE_SUMMARY].map(String::from).to_vec())
}

#[derive(Serialize)]
struct RegressSummary {
    n: usize,
    join_losses: usize,
    dropped: Vec<(String, String)>,
    r2_model1: f64,
    r2_model2: f64,
}

/// Model 1 leaves out the place-exposure groups; model 2 is the full model.
pub const MODEL1_GROUPS: [VarGroup; 3] = [VarGroup::S, VarGroup::H, VarGroup::M];

fn regress(ctx: &Context) -> Result<Vec<String>, CliError> {
    let err = stage_err(StageName::Regress);
    let full = ctx.full_survey()?;
    let mixing = read_mixing_csv(ctx.open(MIXING)?).map_err(|e| err(&e))?;
    let access = read_access_csv(ctx.open(ACCESS)?).map_err(|e| err(&e))?;
    let (labels, pd) = read_exposure_csv(ctx.open(PD)?).map_err(|e| err(&e))?;
    let (_, ph) = read_exposure_csv(ctx.open(PH)?).map_err(|e| err(&e))?;
    let spec = DesignSpec { k: ctx.cfg.mixing.k, poly_band: ctx.cfg.regress.poly_band, ..DesignSpec::default() };
    let design = build_design_matrix(&DesignInputs { survey: &full, mixing: &mixing, access: &access, pd: &pd, ph: &ph, labels: &labels }, &spec)
        .map_err(|e| err(&e))?;
    let robust = ctx.cfg.regress.robust;
    let m1 = design.select(&MODEL1_GROUPS);
    let fit1 = ols_fit(&m1.values(), &m1.names(), &m1.y, robust).map_err(|e| err(&e))?;
    let fit2 = ols_fit(&design.values(), &design.names(), &design.y, robust).map_err(|e| err(&e))?;
    write_regression_csv(&[("model1".to_string(), &fit1), ("model2".to_string(), &fit2)], ctx.create(REGRESSION)?).map_err(|e| err(&e))?;
    let bands = ctx.cfg.access_config().bands.labels();
    let lmg = stratified_lmg(&design, &bands).map_err(|e| err(&e))?;
    write_lmg_csv(&lmg, ctx.create(LMG)?).map_err(|e| err(&e))?;
    ctx.write_json(
        REGRESS_SUMMARY,
        &RegressSummary { n: design.n(), join_losses: design.join_losses.len(), dropped: design.dropped.clone(), r2_model1: fit1.r2, r2_model2: fit2.r2 },
    )?;
    Ok([REGRESSION, LMG, REGRESS_SUMMARY].map(String::from).to_vec())
}

#[derive(Serialize)]
struct GcnSummary {
    edge_type: String,
    nodes: usize,
    edges: usize,
    info: TrainingInfo,
}

fn embed(ctx: &Context) -> Result<Vec<String>, CliError> {
    let err = stage_err(StageName::Embed);
    let ds = ctx.survey()?;
    let (index, _) = ctx.poi_index(grid_origin(&ds))?;
    let edge_type = ctx.cfg.edge_type()?;
    let params = ctx.cfg.graph_params();
    let graph = match edge_type {
        EdgeType::TransitBinary | EdgeType::TransitWeighted => {
            let stations = filter_open(&ctx.stations()?, ctx.cfg.input.survey_year);
            let rides = match &ctx.cfg.input.ride_table {
                Some(p) => read_ride_table(ctx.open_input(p)?).map_err(|e| CliError::Validation(format!("ride table: {e}")))?,
                None => HashMap::new(),
            };
            let times = TransitTimes::new(&index, &stations, ctx.cfg.transit_params(), &rides);
            build_place_graph(&index, edge_type, &params, Some(&times as &dyn TravelTime))
        }
        _ => build_place_graph(&index, edge_type, &params, None),
    }
    .map_err(|e| err(&e))?;
    let (emb, weights) = embed_index(&index, &graph, &ctx.cfg.gcn_config()).map_err(|e| err(&e))?;
    write_graph_csv(&graph, ctx.create(GRAPH)?).map_err(|e| err(&e))?;
    write_embeddings_csv(&emb, ctx.create(EMBEDDINGS)?).map_err(|e| err(&e))?;
    write_tensors(&weights.to_tensors("gcn"), ctx.create(GCN_WEIGHTS)?).map_err(|e| err(&e))?;
    ctx.write_json(GCN_SUMMARY, &GcnSummary { edge_type: edge_type.to_string(), nodes: graph.n, edges: graph.edges.len(), info: emb.info.clone() })?;
    Ok([GRAPH, EMBEDDINGS, GCN_WEIGHTS, GCN_SUMMARY].map(String::from).to_vec())
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    transform: mixcity_embed::autoenc::TargetTransform,
    persons: usize,
    dropped: usize,
    runs: &'a [mixcity_embed::protocol::SplitRun],
}

fn predict(ctx: &Context) -> Result<Vec<String>, CliError> {
    let err = stage_err(StageName::Predict);
    let ds = ctx.survey()?;
    let (index, _) = ctx.poi_index(grid_origin(&ds))?;
    let (ids, vectors) = read_embeddings_csv(ctx.open(EMBEDDINGS)?).map_err(|e| err(&e))?;
    let gcn: serde_json::Value = serde_json::from_reader(ctx.open(GCN_SUMMARY)?).map_err(|e| err(&e))?;
    let info: TrainingInfo = serde_json::from_value(gcn["info"].clone()).map_err(|e| err(&e))?;
    let emb = NodeEmbeddings { ids, vectors, info };
    let iso = DiscIsochrone::walking(&index);
    let feats = component_embeddings(&ds, &emb, &iso, &ctx.cfg.feature_config()).map_err(|e| err(&e))?;
    write_features_csv(&feats, ctx.create(FEATURES)?).map_err(|e| err(&e))?;
    let (_, pd) = read_exposure_csv(ctx.open(PD)?).map_err(|e| err(&e))?;
    let grouping = assign_income_groups(&ds, ctx.cfg.mixing.k).map_err(|e| err(&e))?;
    let data = PredictionData::assemble(&feats, &pd, &grouping).map_err(|e| err(&e))?;

    let pc = ctx.cfg.protocol_config();
    let combos: Vec<Combo> = ctx.cfg.predict.combos.iter().map(|c| Combo::parse(c)).collect::<Result<_, _>>().map_err(|e| err(&e))?;
    let runs = run_combos(&data.x, &data.y, &data.groups, &combos, &pc).map_err(|e| err(&e))?;
    ctx.write_json(METRICS, &MetricsFile { transform: pc.ae.transform, persons: data.x.n(), dropped: data.dropped.len(), runs: &runs })?;
    report::write_combo_summary(&summarize(&runs), ctx.create(COMBOS)?)?;
    let mut outputs = vec![FEATURES.to_string(), METRICS.to_string(), COMBOS.to_string()];

    // Weights of each combo's first-split model.
    let (train, _) = stratified_split(&data.groups, pc.train_frac, pc.seed);
    for c in &combos {
        let model = train_exposure_model(&data.x, &data.y, &train, c, &pc.ae).map_err(|e| err(&e))?;
        let rel = format!("predict/models/{}.txt", c.label().replace("||", "+"));
        write_tensors(&model.to_tensors(), ctx.create(&rel)?).map_err(|e| err(&e))?;
        outputs.push(rel);
    }

    let transfer_combos: Vec<Combo> =
        ctx.cfg.predict.transfer_combos.iter().map(|c| Combo::parse(c)).collect::<Result<_, _>>().map_err(|e| err(&e))?;
    let mut cells = Vec::new();
    if !transfer_combos.is_empty() {
        for &g in &ctx.cfg.predict.transfer_train_groups {
            cells.extend(transfer_by_income(&data.x, &data.y, &data.groups, g, &transfer_combos, &pc, ctx.cfg.predict.min_group).map_err(|e| err(&e))?);
        }
    }
    write_transfer_csv(&cells, ctx.create(TRANSFER)?).map_err(|e| err(&e))?;
    outputs.push(TRANSFER.to_string());
    Ok(outputs)
}

/// Outcome of a stage within a pipeline run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

/// Runs `stages` in order, skipping up-to-date ones when `resume` is set,
/// recording each completed stage in the manifest as it finishes.
pub fn run_stages(ctx: &Context, stages: &[StageName], resume: bool) -> Result<Vec<(StageName, StageOutcome)>, CliError> {
    std::fs::create_dir_all(&ctx.out).map_err(|e| CliError::Io(format!("{}: {e}", ctx.out.display())))?;
    std::fs::write(ctx.path(RESOLVED_CONFIG), ctx.cfg.to_toml()).map_err(|e| CliError::Io(e.to_string()))?;
    let mut manifest = Manifest::load(&ctx.out)?;
    let mut done = Vec::new();
    for &s in stages {
        let hash = ctx.input_hash(s).map_err(|e| match e {
            CliError::Validation(m) if s != StageName::Ingest => CliError::MissingArtifact(format!("{}: {m}", s.as_str())),
            other => other,
        })?;
        if resume && manifest.is_current(&ctx.out, s.as_str(), &hash) {
            done.push((s, StageOutcome::Skipped));
            continue;
        }
        let outputs = run_stage(ctx, s)?;
        manifest.record(&ctx.out, s.as_str(), hash, &outputs)?;
        manifest.save(&ctx.out)?;
        done.push((s, StageOutcome::Ran));
    }
    Ok(done)
}
