//! Synthetic cities with tunable residential segregation (`rho`) and
//! income-stratified destination choice (`mu`), plus brute-force oracles.
//!
//! Generation is a pure function of the parameters: one sequential ChaCha
//! stream drives every draw, and coordinates, incomes and weights are rounded
//! to values that survive a CSV round trip unchanged.

mod oracle;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::geo::{GeoPoint, Projection};
use crate::places::{write_pois, CategorySet, PoiCategory, PoiMapping, RawPoi};
use crate::survey::{
    assign_income_groups, cut_by_weight, write_legs, write_persons, Gender, Mode, Person, Purpose, SurveyDataset,
    TripLeg, WorkStatus, MAX_MINUTE,
};
use crate::transit::{write_stations, Station, StationKind};
use crate::zones::{write_zones, CensusZone};

pub use oracle::{oracle_exposure, oracle_lmg, OracleRow};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid city parameter: {0}")]
    Parameter(String),
    #[error("writing bundle: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CityParams {
    pub n_persons: usize,
    pub n_zones: usize,
    /// Side of the square city, km.
    pub extent_km: f64,
    /// Residential segregation: 0 shuffles incomes across zones, 1 sorts them.
    pub rho: f64,
    /// Destination stratification: 0 ignores income, 1 confines each group
    /// to its own POI clusters.
    pub mu: f64,
    pub n_pois: usize,
    /// Inclusive range of legs per person, including the trip home.
    pub legs_per_person: (u32, u32),
    pub seed: u64,
    pub k_groups: usize,
    pub max_household_size: usize,
    /// Distance decay of destination choice, km.
    pub gravity_km: f64,
    pub n_train_stations: usize,
    pub n_bus_stations: usize,
    /// Share of households without reported income.
    pub missing_income: f64,
    pub survey_year: i32,
    /// South-west corner of the city.
    pub origin: GeoPoint,
}

impl Default for CityParams {
    fn default() -> Self {
        Self {
            n_persons: 5000,
            n_zones: 36,
            extent_km: 12.0,
            rho: 0.5,
            mu: 0.5,
            n_pois: 2000,
            legs_per_person: (2, 5),
            seed: 1,
            k_groups: 4,
            max_household_size: 4,
            gravity_km: 1.5,
            n_train_stations: 12,
            n_bus_stations: 60,
            missing_income: 0.02,
            survey_year: 2019,
            origin: GeoPoint::new(42.30, -71.15),
        }
    }
}

impl CityParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Parameter(m));
        if self.n_persons == 0 || self.n_zones == 0 || self.n_pois == 0 {
            return bad("n_persons, n_zones and n_pois must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.rho) || !(0.0..=1.0).contains(&self.mu) {
            return bad(format!("rho {} and mu {} must lie in [0, 1]", self.rho, self.mu));
        }
        if !(self.extent_km > 0.0) || !(self.gravity_km > 0.0) {
            return bad("extent_km and gravity_km must be positive".into());
        }
        if self.legs_per_person.0 < 2 || self.legs_per_person.1 < self.legs_per_person.0 {
            return bad(format!("legs_per_person {:?} must satisfy 2 <= min <= max", self.legs_per_person));
        }
        if self.k_groups < 2 || self.max_household_size == 0 {
            return bad("k_groups >= 2 and max_household_size >= 1 required".into());
        }
        if !(0.0..1.0).contains(&self.missing_income) {
            return bad(format!("missing_income {} must lie in [0, 1)", self.missing_income));
        }
        Ok(())
    }

    /// Number of zone columns and rows; zones are numbered column by column
    /// from the west.
    pub fn zone_layout(&self) -> (usize, usize) {
        let cols = (self.n_zones as f64).sqrt().ceil() as usize;
        (cols, self.n_zones.div_ceil(cols))
    }
}

#[derive(Debug, Clone)]
pub struct CityBundle {
    pub params: CityParams,
    pub survey: SurveyDataset,
    pub pois: Vec<RawPoi>,
    pub stations: Vec<Station>,
    pub zones: Vec<CensusZone>,
}

impl CityBundle {
    /// Writes the canonical input files and `params.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir).map_err(|e| SynthError::Io(e.to_string()))?;
        let create = |name: &str| File::create(dir.join(name)).map(BufWriter::new).map_err(|e| SynthError::Io(format!("{name}: {e}")));
        let io = |e: &dyn std::fmt::Display| SynthError::Io(e.to_string());
        write_persons(&self.survey, create("persons.csv")?).map_err(|e| io(&e))?;
        write_legs(&self.survey, create("legs.csv")?).map_err(|e| io(&e))?;
        write_pois(&self.pois, create("pois.csv")?).map_err(|e| io(&e))?;
        write_stations(&self.stations, create("stations.csv")?).map_err(|e| io(&e))?;
        write_zones(&self.zones, create("zones.csv")?, create("zone_vertices.csv")?).map_err(|e| io(&e))?;
        let json = serde_json::to_string_pretty(&self.params).map_err(|e| io(&e))?;
        std::fs::write(dir.join("params.json"), json + "\n").map_err(|e| io(&e))
    }
}

fn round_coord(v: f64) -> f64 {
    (v * 1e7).round() / 1e7
}

struct Cluster {
    center: (f64, f64),
    size: f64,
    affinity: usize,
    mix: Vec<(PoiCategory, f64)>,
}

struct Household {
    income: Option<f64>,
    members: Vec<(u32, Gender, WorkStatus, f64)>,
    car: bool,
}

fn work_status(rng: &mut ChaCha8Rng, age: u32) -> WorkStatus {
    let u: f64 = rng.random();
    match age {
        0..=17 => WorkStatus::Student,
        18..=24 if u < 0.5 => WorkStatus::Student,
        18..=64 => match u {
            u if u < 0.62 => WorkStatus::FullTime,
            u if u < 0.78 => WorkStatus::PartTime,
            u if u < 0.87 => WorkStatus::Homemaker,
            u if u < 0.95 => WorkStatus::Unemployed,
            _ => WorkStatus::Other,
        },
        _ if u < 0.8 => WorkStatus::Retired,
        _ => WorkStatus::PartTime,
    }
}

fn households(p: &CityParams, rng: &mut ChaCha8Rng) -> Vec<Household> {
    let income_dist = LogNormal::new(60_000f64.ln(), 0.6).expect("valid");
    let mut out = Vec::new();
    let mut left = p.n_persons;
    while left > 0 {
        let size = rng.random_range(1..=p.max_household_size).min(left);
        left -= size;
        let income = income_dist.sample(rng).round().max(1.0);
        let income = (rng.random::<f64>() >= p.missing_income).then_some(income);
        let head: u32 = rng.random_range(22..=80);
        let mut members = Vec::with_capacity(size);
        for m in 0..size {
            let age = match m {
                0 => head,
                1 if rng.random::<f64>() < 0.5 || head < 30 => (head as i64 + rng.random_range(-5..=5)).clamp(18, 90) as u32,
                _ => rng.random_range(0..=17u32.min(head - 18)),
            };
            let gender = if rng.random::<f64>() < 0.5 { Gender::Female } else { Gender::Male };
            let weight = rng.random_range(50..=200) as f64 / 100.0;
            members.push((age, gender, work_status(rng, age), weight));
        }
        let car_p = income.map(|i| (i / 120_000.0).clamp(0.15, 0.9)).unwrap_or(0.5);
        out.push(Household { income, members, car: rng.random::<f64>() < car_p });
    }
    out
}

fn clusters(p: &CityParams, rng: &mut ChaCha8Rng, set: &CategorySet) -> Vec<Cluster> {
    let ext = p.extent_km * 1000.0;
    let n = (p.n_pois / 25).max(p.k_groups);
    let size_dist = LogNormal::new(0.0, 0.5).expect("valid");
    let cats = set.categories();
    let jitter = Normal::new(0.0, 2.0).expect("valid");
    let mut cs: Vec<Cluster> = (0..n)
        .map(|_| {
            let center = (rng.random_range(0.0..ext), rng.random_range(0.0..ext));
            // Dominant categories drift west to east, so neighbourhoods far
            // apart differ more in what they offer.
            let at = center.0 / ext * (cats.len() - 1) as f64;
            let mut mix = Vec::new();
            for w in [0.45, 0.25, 0.15] {
                let c = (at + jitter.sample(rng)).round().clamp(0.0, (cats.len() - 1) as f64) as usize;
                mix.push((cats[c], w));
            }
            Cluster { center, size: size_dist.sample(rng), affinity: 0, mix }
        })
        .collect();
    // Affinity by west-to-east rank, equal counts per group.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cs[a].center.0.total_cmp(&cs[b].center.0));
    for (rank, &c) in order.iter().enumerate() {
        cs[c].affinity = rank * p.k_groups / n;
    }
    cs
}

/// Builds a city. Pure in `params` (including the seed).
pub fn generate_city(params: &CityParams) -> Result<CityBundle, SynthError> {
    params.validate()?;
    let p = params;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let proj = Projection::new(p.origin);
    let to_geo = |x: f64, y: f64| {
        let g = proj.inverse(x, y);
        GeoPoint::new(round_coord(g.lat), round_coord(g.lon))
    };
    let ext = p.extent_km * 1000.0;
    let set = CategorySet::default();
    let mapping = PoiMapping::with_defaults();

    // Households and zone placement.
    let hh = households(p, &mut rng);
    let mut by_income: Vec<usize> = (0..hh.len()).collect();
    by_income.sort_by(|&a, &b| hh[a].income.unwrap_or(0.0).total_cmp(&hh[b].income.unwrap_or(0.0)).then(a.cmp(&b)));
    let mut rank = vec![0.0; hh.len()];
    let denom = (hh.len().max(2) - 1) as f64;
    for (r, &h) in by_income.iter().enumerate() {
        rank[h] = r as f64 / denom;
    }
    let keys: Vec<f64> = (0..hh.len()).map(|h| p.rho * rank[h] + (1.0 - p.rho) * rng.random::<f64>()).collect();
    let mut by_key: Vec<usize> = (0..hh.len()).collect();
    by_key.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
    let hh_weight: Vec<f64> = by_key.iter().map(|&h| hh[h].members.iter().map(|m| m.3).sum()).collect();
    let zone_of_rank = cut_by_weight(&hh_weight, p.n_zones);
    let mut zone = vec![0usize; hh.len()];
    for (i, &h) in by_key.iter().enumerate() {
        zone[h] = zone_of_rank[i];
    }

    let (cols, rows) = p.zone_layout();
    let (zw, zh) = (ext / cols as f64, ext / rows as f64);
    let margin = 1100f64.min(0.25 * zw.min(zh));
    let zone_box = |z: usize| {
        let (c, r) = (z / rows, z % rows);
        (c as f64 * zw, r as f64 * zh)
    };

    let mut persons = Vec::with_capacity(p.n_persons);
    let mut pid = 0usize;
    for (h, house) in hh.iter().enumerate() {
        let (x0, y0) = zone_box(zone[h]);
        let home = to_geo(x0 + rng.random_range(margin..zw - margin), y0 + rng.random_range(margin..zh - margin));
        for &(age, gender, work, weight) in &house.members {
            persons.push(Person {
                person_id: format!("p{pid:06}"),
                household_id: format!("h{h:06}"),
                age,
                gender,
                work_status: work,
                income: house.income,
                expansion_factor: weight,
                home,
                car_owner: Some(house.car),
            });
            pid += 1;
        }
    }
    let grouping = assign_income_groups(&SurveyDataset::from_parts(persons.clone(), vec![]), p.k_groups)
        .map_err(|e| SynthError::Parameter(e.to_string()))?;

    // POIs.
    let cs = clusters(p, &mut rng, &set);
    let total_size: f64 = cs.iter().map(|c| c.size).sum();
    let spread = Normal::new(0.0, 250.0).expect("valid");
    let mut pois = Vec::with_capacity(p.n_pois);
    let mut cluster_pois: Vec<Vec<usize>> = vec![Vec::new(); cs.len()];
    let excluded_tags = ["hotel", "warehouse", "farm", "power_substation"];
    for i in 0..p.n_pois {
        let mut u = rng.random::<f64>() * total_size;
        let mut ci = cs.len() - 1;
        for (j, c) in cs.iter().enumerate() {
            if u < c.size {
                ci = j;
                break;
            }
            u -= c.size;
        }
        let c = &cs[ci];
        let x = (c.center.0 + spread.sample(&mut rng)).clamp(0.0, ext);
        let y = (c.center.1 + spread.sample(&mut rng)).clamp(0.0, ext);
        let tag = if rng.random::<f64>() < 0.03 {
            excluded_tags.choose(&mut rng).expect("non-empty").to_string()
        } else {
            let mut v = rng.random::<f64>();
            let cat = c
                .mix
                .iter()
                .find(|(_, w)| {
                    v -= w;
                    v < 0.0
                })
                .map(|(c, _)| *c)
                .unwrap_or_else(|| *set.categories().choose(&mut rng).expect("non-empty"));
            mapping.tags_for(cat.as_str()).choose(&mut rng).expect("every category has a tag").to_string()
        };
        let point = to_geo(x, y);
        cluster_pois[ci].push(pois.len());
        pois.push((RawPoi { poi_id: format!("poi{i:05}"), point, raw_tag: tag }, (x, y)));
    }

    // Stations: trains at the largest clusters, buses scattered.
    let mut stations = Vec::new();
    let mut by_size: Vec<usize> = (0..cs.len()).collect();
    by_size.sort_by(|&a, &b| cs[b].size.total_cmp(&cs[a].size).then(a.cmp(&b)));
    for (i, &c) in by_size.iter().cycle().take(p.n_train_stations).enumerate() {
        let (x, y) = cs[c].center;
        let open_year = if rng.random::<f64>() < 0.15 { p.survey_year + 11 } else { 1950 + rng.random_range(0..60) };
        stations.push(Station { station_id: format!("t{i:03}"), kind: StationKind::Train, point: to_geo(x, y), open_year: Some(open_year) });
    }
    for i in 0..p.n_bus_stations {
        let point = to_geo(rng.random_range(0.0..ext), rng.random_range(0.0..ext));
        stations.push(Station { station_id: format!("b{i:03}"), kind: StationKind::Bus, point, open_year: None });
    }
    let train_xy: Vec<(f64, f64)> = stations.iter().filter(|s| s.kind == StationKind::Train).map(|s| proj.forward(s.point)).collect();

    // Trips.
    let mut legs = Vec::new();
    let gravity_m = p.gravity_km * 1000.0;
    for person in &persons {
        let group = grouping.group_of(&person.person_id);
        let home = proj.forward(person.home);
        let weights: Vec<f64> = cs
            .iter()
            .enumerate()
            .map(|(ci, c)| {
                if cluster_pois[ci].is_empty() {
                    return 0.0;
                }
                let d = (c.center.0 - home.0).hypot(c.center.1 - home.1);
                let bias = match group {
                    Some(g) => 1.0 - p.mu + p.mu * p.k_groups as f64 * if c.affinity == g { 1.0 } else { 0.0 },
                    None => 1.0,
                };
                c.size * (-d / gravity_m).exp() * bias
            })
            .collect();
        let wsum: f64 = weights.iter().sum();
        let n_dest = rng.random_range(p.legs_per_person.0..=p.legs_per_person.1) - 1;
        let mut t = rng.random_range(390..=540u32);
        let mut at = (home, person.home);
        for d in 0..=n_dest {
            let last = d == n_dest;
            let (dest_xy, dest) = if last {
                (home, person.home)
            } else {
                let mut u = rng.random::<f64>() * wsum;
                let mut ci = 0;
                for (j, w) in weights.iter().enumerate() {
                    if u < *w {
                        ci = j;
                        break;
                    }
                    u -= w;
                    ci = j;
                }
                let pi = *cluster_pois[ci].choose(&mut rng).expect("non-empty cluster");
                (pois[pi].1, pois[pi].0.point)
            };
            let dist_km = (dest_xy.0 - at.0 .0).hypot(dest_xy.1 - at.0 .1) / 1000.0;
            let near_train = train_xy.iter().any(|s| (s.0 - dest_xy.0).hypot(s.1 - dest_xy.1) < 1500.0);
            let mode = if dist_km < 1.0 {
                if rng.random::<f64>() < 0.85 { Mode::Walk } else { Mode::Bike }
            } else if near_train && rng.random::<f64>() < 0.6 {
                Mode::PublicTransit
            } else if person.car_owner == Some(true) && rng.random::<f64>() < 0.75 {
                Mode::PrivateCar
            } else if rng.random::<f64>() < 0.8 {
                Mode::PublicTransit
            } else {
                Mode::Bike
            };
            let per_km = match mode {
                Mode::Walk => 12.0,
                Mode::Bike => 4.0,
                Mode::PrivateCar => 2.0,
                _ => 3.0,
            };
            let arrive = t + 3 + (dist_km * per_km).round() as u32;
            if arrive > MAX_MINUTE {
                break;
            }
            let purpose = if last {
                Purpose::Home
            } else if d == 0 && matches!(person.work_status, WorkStatus::FullTime | WorkStatus::PartTime) {
                Purpose::Work
            } else if d == 0 && person.work_status == WorkStatus::Student {
                Purpose::School
            } else if rng.random::<f64>() < 0.5 {
                Purpose::Shop
            } else {
                Purpose::Other
            };
            legs.push(TripLeg {
                person_id: person.person_id.clone(),
                leg_index: d,
                origin: at.1,
                dest,
                depart_min: t,
                arrive_min: arrive,
                mode,
                purpose,
            });
            at = (dest_xy, dest);
            t = arrive + rng.random_range(20..=240);
        }
    }

    // Zones with weighted median incomes of their residents.
    let mut residents: Vec<Vec<(f64, f64)>> = vec![Vec::new(); p.n_zones];
    let mut population = vec![0u64; p.n_zones];
    for (h, house) in hh.iter().enumerate() {
        population[zone[h]] += house.members.len() as u64;
        if let Some(inc) = house.income {
            for m in &house.members {
                residents[zone[h]].push((inc, m.3));
            }
        }
    }
    let fallback = weighted_median(&mut residents.iter().flatten().copied().collect::<Vec<_>>()).unwrap_or(0.0);
    let zones: Vec<CensusZone> = (0..p.n_zones)
        .map(|z| {
            let (x0, y0) = zone_box(z);
            CensusZone {
                zone_id: format!("z{z:03}"),
                rings: vec![vec![to_geo(x0, y0), to_geo(x0 + zw, y0), to_geo(x0 + zw, y0 + zh), to_geo(x0, y0 + zh)]],
                median_income: weighted_median(&mut residents[z]).unwrap_or(fallback),
                population: population[z],
            }
        })
        .collect();

    Ok(CityBundle {
        params: p.clone(),
        survey: SurveyDataset::from_parts(persons, legs),
        pois: pois.into_iter().map(|(r, _)| r).collect(),
        stations,
        zones,
    })
}

/// Lower weighted median: the first value at which cumulative weight reaches half.
fn weighted_median(v: &mut [(f64, f64)]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = v.iter().map(|x| x.1).sum::<f64>() / 2.0;
    let mut cum = 0.0;
    for (x, w) in v.iter() {
        cum += w;
        if cum >= half {
            return Some(*x);
        }
    }
    v.last().map(|x| x.0)
}
