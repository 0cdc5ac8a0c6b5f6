//! Pipeline configuration: a TOML file with one section per stage. Every
//! field has a default, so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use mixcity_core::mixing::{MixingConfig, MixingFormula, SelfInclusion, VisitOptions};
use mixcity_core::places::ExposureConfig;
use mixcity_core::survey::PopulationRules;
use mixcity_core::synth::CityParams;
use mixcity_core::transit::{AccessConfig, AccessThresholds, HubBands, HubConfig, StationKind};
use mixcity_embed::autoenc::{AeConfig, Combo, TargetTransform};
use mixcity_embed::features::FeatureConfig;
use mixcity_embed::gcn::GcnConfig;
use mixcity_embed::graph::{EdgeType, GraphParams, TransitParams};
use mixcity_embed::protocol::ProtocolConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Base directory for the relative paths below.
    pub dir: PathBuf,
    pub persons: PathBuf,
    pub legs: PathBuf,
    pub pois: PathBuf,
    pub stations: PathBuf,
    /// Census zones; the proxy comparison is skipped when absent.
    pub zones: Option<PathBuf>,
    pub zone_vertices: Option<PathBuf>,
    /// `raw_tag,label` overrides of the built-in POI mapping.
    pub poi_mapping: Option<PathBuf>,
    /// `from,to,minutes` station-to-station ride times.
    pub ride_table: Option<PathBuf>,
    pub survey_year: Option<i32>,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            persons: "persons.csv".into(),
            legs: "legs.csv".into(),
            pois: "pois.csv".into(),
            stations: "stations.csv".into(),
            zones: Some("zones.csv".into()),
            zone_vertices: Some("zone_vertices.csv".into()),
            poi_mapping: None,
            ride_table: None,
            survey_year: None,
        }
    }
}

impl InputConfig {
    pub fn path(&self, p: &Path) -> PathBuf {
        self.dir.join(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSection {
    pub min_age: u32,
    pub require_travel: bool,
}

impl Default for PopulationSection {
    fn default() -> Self {
        let r = PopulationRules::default();
        Self { min_age: r.min_age, require_travel: r.require_travel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixingSection {
    pub level: u8,
    pub k: usize,
    pub time_weighted: bool,
    pub exclude_home: bool,
    pub day_end: u32,
    pub self_inclusion: SelfInclusion,
    pub formula: MixingFormula,
}

impl Default for MixingSection {
    fn default() -> Self {
        let m = MixingConfig::default();
        Self {
            level: m.level,
            k: m.k,
            time_weighted: m.visits.time_weighted,
            exclude_home: m.visits.exclude_home,
            day_end: m.visits.day_end,
            self_inclusion: m.self_inclusion,
            formula: m.formula,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccessSection {
    pub train_m: f64,
    pub bus_m: f64,
    pub hub_level: u8,
    pub hub_share: f64,
    pub window: [u32; 2],
    pub hub_station_kind: StationKind,
    /// Count only public-transit arrivals toward hubs.
    pub transit_arrivals_only: bool,
    pub bands_km: Vec<f64>,
}

impl Default for AccessSection {
    fn default() -> Self {
        let (t, h, b) = (AccessThresholds::default(), HubConfig::default(), HubBands::default());
        Self {
            train_m: t.train_m,
            bus_m: t.bus_m,
            hub_level: h.level,
            hub_share: h.threshold,
            window: [h.window.0, h.window.1],
            hub_station_kind: h.kind,
            transit_arrivals_only: h.modes.is_some(),
            bands_km: b.breaks_km,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExposureSection {
    pub t_minutes: f64,
    pub exclude_home: bool,
    pub normalize_pd: bool,
}

impl Default for ExposureSection {
    fn default() -> Self {
        let e = ExposureConfig::default();
        Self { t_minutes: e.t_minutes, exclude_home: e.exclude_home, normalize_pd: e.normalize_pd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressSection {
    /// Stratify LMG by the poly-hub distance band rather than the mono one.
    pub poly_band: bool,
    pub robust: bool,
}

impl Default for RegressSection {
    fn default() -> Self {
        Self { poly_band: true, robust: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub edge_type: String,
    pub t_minutes: f64,
    pub dist_m: f64,
    pub alpha_minutes: f64,
    pub alpha_m: f64,
    pub epsilon: f64,
    pub walk_m_per_min: f64,
    pub headway_min: f64,
    pub ride_m_per_min: f64,
}

impl Default for GraphSection {
    fn default() -> Self {
        let (g, t) = (GraphParams::default(), TransitParams::default());
        Self {
            edge_type: EdgeType::TransitBinary.to_string(),
            t_minutes: g.t_minutes,
            dist_m: g.dist_m,
            alpha_minutes: g.alpha_minutes,
            alpha_m: g.alpha_m,
            epsilon: g.epsilon,
            walk_m_per_min: t.walk_m_per_min,
            headway_min: t.headway_min,
            ride_m_per_min: t.ride_m_per_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    pub feature_t_minutes: f64,
    pub hull_buffer_m: f64,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub transform: TargetTransform,
    pub n_splits: usize,
    pub train_frac: f64,
    pub combos: Vec<String>,
    pub transfer_combos: Vec<String>,
    pub transfer_train_groups: Vec<usize>,
    pub min_group: usize,
}

impl Default for PredictSection {
    fn default() -> Self {
        let (f, a, p) = (FeatureConfig::default(), AeConfig::default(), ProtocolConfig::default());
        Self {
            feature_t_minutes: f.t_minutes,
            hull_buffer_m: f.buffer_m,
            hidden: a.hidden,
            lr: a.lr,
            epochs: a.epochs,
            transform: a.transform,
            n_splits: p.n_splits,
            train_frac: p.train_frac,
            combos: ["h_h", "h_h||h_d", "h_a", "h_a||h_d", "h_d", "h_h||h_a||h_d"].map(String::from).to_vec(),
            transfer_combos: ["h_a||h_d"].map(String::from).to_vec(),
            transfer_train_groups: vec![0],
            min_group: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedSection {
    pub gcn: u64,
    pub autoencoder: u64,
    pub splits: u64,
}

impl Default for SeedSection {
    fn default() -> Self {
        Self { gcn: GcnConfig::default().seed, autoencoder: AeConfig::default().seed, splits: ProtocolConfig::default().seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcnSection {
    pub epochs: usize,
    pub lr: f64,
    pub hidden: usize,
    pub patience: usize,
    pub val_fraction: f64,
}

impl Default for GcnSection {
    fn default() -> Self {
        let g = GcnConfig::default();
        Self { epochs: g.epochs, lr: g.lr, hidden: g.hidden, patience: g.patience, val_fraction: g.val_fraction }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Artifact directory; not echoed into the resolved config so that runs
    /// into different directories stay byte-identical.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub input: InputConfig,
    pub population: PopulationSection,
    pub mixing: MixingSection,
    pub access: AccessSection,
    pub exposure: ExposureSection,
    pub regress: RegressSection,
    pub graph: GraphSection,
    pub gcn: GcnSection,
    pub predict: PredictSection,
    pub seeds: SeedSection,
    pub synth: CityParams,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative input paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.input.dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.input.dir = parent.join(&cfg.input.dir);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Uses one seed for every stochastic stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.seeds = SeedSection { gcn: seed, autoencoder: seed, splits: seed };
        self.synth.seed = seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        if !(mixcity_core::grid::MIN_LEVEL..=mixcity_core::grid::MAX_LEVEL).contains(&self.mixing.level) {
            return bad(format!("mixing.level {} outside supported levels", self.mixing.level));
        }
        if self.mixing.k < 2 {
            return bad(format!("mixing.k must be at least 2, got {}", self.mixing.k));
        }
        if self.access.window[0] > self.access.window[1] {
            return bad(format!("access.window {:?} is reversed", self.access.window));
        }
        if !(self.access.hub_share > 0.0 && self.access.hub_share <= 1.0) {
            return bad(format!("access.hub_share {} outside (0, 1]", self.access.hub_share));
        }
        if !(self.exposure.t_minutes > 0.0) {
            return bad("exposure.t_minutes must be positive".into());
        }
        self.edge_type()?;
        self.graph_params().validate().map_err(|e| CliError::Validation(e.to_string()))?;
        for c in self.predict.combos.iter().chain(&self.predict.transfer_combos) {
            Combo::parse(c).map_err(|e| CliError::Validation(format!("predict combo: {e}")))?;
        }
        if self.predict.combos.is_empty() {
            return bad("predict.combos is empty".into());
        }
        if let Some(g) = self.predict.transfer_train_groups.iter().find(|g| **g >= self.mixing.k) {
            return bad(format!("transfer train group {g} outside k = {}", self.mixing.k));
        }
        if !(self.predict.train_frac > 0.0 && self.predict.train_frac < 1.0) || self.predict.n_splits == 0 {
            return bad("predict.train_frac must lie in (0, 1) and n_splits be positive".into());
        }
        if !(self.gcn.val_fraction > 0.0 && self.gcn.val_fraction < 1.0) {
            return bad("gcn.val_fraction must lie in (0, 1)".into());
        }
        self.synth.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(())
    }

    pub fn population_rules(&self) -> PopulationRules {
        PopulationRules { min_age: self.population.min_age, require_travel: self.population.require_travel }
    }

    pub fn mixing_config(&self) -> MixingConfig {
        let m = &self.mixing;
        MixingConfig {
            level: m.level,
            k: m.k,
            visits: VisitOptions { time_weighted: m.time_weighted, exclude_home: m.exclude_home, day_end: m.day_end },
            self_inclusion: m.self_inclusion,
            formula: m.formula,
        }
    }

    pub fn access_config(&self) -> AccessConfig {
        let a = &self.access;
        AccessConfig {
            thresholds: AccessThresholds { train_m: a.train_m, bus_m: a.bus_m },
            hubs: HubConfig {
                level: a.hub_level,
                window: (a.window[0], a.window[1]),
                threshold: a.hub_share,
                modes: if a.transit_arrivals_only { HubConfig::default().modes } else { None },
                kind: a.hub_station_kind,
            },
            bands: HubBands { breaks_km: a.bands_km.clone() },
            survey_year: self.input.survey_year,
        }
    }

    pub fn exposure_config(&self) -> ExposureConfig {
        let e = &self.exposure;
        ExposureConfig { t_minutes: e.t_minutes, level: self.mixing.level, exclude_home: e.exclude_home, normalize_pd: e.normalize_pd }
    }

    pub fn edge_type(&self) -> Result<EdgeType, CliError> {
        self.graph.edge_type.parse().map_err(|e: mixcity_embed::EmbedError| CliError::Validation(e.to_string()))
    }

    pub fn graph_params(&self) -> GraphParams {
        let g = &self.graph;
        GraphParams { t_minutes: g.t_minutes, dist_m: g.dist_m, alpha_minutes: g.alpha_minutes, alpha_m: g.alpha_m, epsilon: g.epsilon }
    }

    pub fn transit_params(&self) -> TransitParams {
        let g = &self.graph;
        TransitParams { walk_m_per_min: g.walk_m_per_min, headway_min: g.headway_min, ride_m_per_min: g.ride_m_per_min }
    }

    pub fn gcn_config(&self) -> GcnConfig {
        let g = &self.gcn;
        GcnConfig { seed: self.seeds.gcn, epochs: g.epochs, lr: g.lr, hidden: g.hidden, patience: g.patience, val_fraction: g.val_fraction }
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig { t_minutes: self.predict.feature_t_minutes, buffer_m: self.predict.hull_buffer_m }
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        let p = &self.predict;
        ProtocolConfig {
            n_splits: p.n_splits,
            train_frac: p.train_frac,
            seed: self.seeds.splits,
            ae: AeConfig { hidden: p.hidden, lr: p.lr, epochs: p.epochs, seed: self.seeds.autoencoder, transform: p.transform },
        }
    }
}
