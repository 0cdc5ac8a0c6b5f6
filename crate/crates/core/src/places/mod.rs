//! Points of interest: tag categorization, walking-isochrone queries and the
//! destination (PD) and home (PH) place-exposure vectors.

mod exposure;
mod index;

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::fmt::fmt_f64;
use crate::geo::GeoPoint;
use crate::grid::GridError;

pub use exposure::{
    compute_exposure, destination_exposure, home_exposure, read_exposure_csv, write_exposure_csv, ExposureConfig,
    ExposureResult, ExposureRow,
};
pub use index::{isochrone_pois, DiscIsochrone, IsochroneProvider, PoiIndex, ReachableTable};

#[derive(Debug, thiserror::Error)]
pub enum PlacesError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("poi file: {0}")]
    Format(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl From<csv::Error> for PlacesError {
    fn from(e: csv::Error) -> Self {
        PlacesError::Format(e.to_string())
    }
}

macro_rules! poi_categories {
    ($($variant:ident => $label:literal),+ $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum PoiCategory {
            $($variant),+
        }

        impl PoiCategory {
            pub const ALL: &'static [PoiCategory] = &[$(PoiCategory::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(PoiCategory::$variant => $label),+
                }
            }

            pub fn from_label(s: &str) -> Option<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($label => Some(PoiCategory::$variant),)+
                    _ => None,
                }
            }
        }
    };
}

poi_categories!(
    ArtMuseum => "art_museum",
    Cafe => "cafe",
    Community => "community",
    Education => "education",
    Entertainment => "entertainment",
    Finance => "finance",
    Food => "food",
    Government => "government",
    Grocery => "grocery",
    Health => "health",
    Library => "library",
    Office => "office",
    Outdoor => "outdoor",
    Service => "service",
    Shopping => "shopping",
    Sports => "sports",
    Tourism => "tourism",
    Transportation => "transportation",
    Worship => "worship",
);

impl std::fmt::Display for PoiCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Standard labels that are always removed.
pub const EXCLUDED_LABELS: [&str; 6] = ["accommodation", "agriculture", "construction", "industry", "utilities", "other"];

/// The categories kept in a run, in column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySet {
    categories: Vec<PoiCategory>,
}

impl Default for CategorySet {
    /// Eighteen categories: the full list without `transportation`.
    fn default() -> Self {
        Self::new(PoiCategory::ALL.iter().copied().filter(|c| *c != PoiCategory::Transportation).collect())
            .expect("non-empty")
    }
}

impl CategorySet {
    pub fn new(mut categories: Vec<PoiCategory>) -> Result<Self, PlacesError> {
        categories.sort();
        categories.dedup();
        if categories.is_empty() {
            return Err(PlacesError::Parameter("empty category set".into()));
        }
        Ok(Self { categories })
    }

    pub fn all() -> Self {
        Self { categories: PoiCategory::ALL.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn categories(&self) -> &[PoiCategory] {
        &self.categories
    }

    pub fn position(&self, c: PoiCategory) -> Option<usize> {
        self.categories.binary_search(&c).ok()
    }

    pub fn labels(&self) -> Vec<&'static str> {
        self.categories.iter().map(|c| c.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPoi {
    pub poi_id: String,
    pub point: GeoPoint,
    pub raw_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub poi_id: String,
    pub point: GeoPoint,
    pub raw_tag: String,
    pub category: PoiCategory,
}

const DEFAULT_POI_MAPPING: &str = "raw_tag,category
museum,art_museum
art_gallery,art_museum
gallery,art_museum
cafe,cafe
coffee_shop,cafe
bakery,cafe
community_centre,community
community_center,community
social_facility,community
school,education
university,education
college,education
kindergarten,education
cinema,entertainment
theatre,entertainment
nightclub,entertainment
bar,entertainment
pub,entertainment
bank,finance
atm,finance
restaurant,food
fast_food,food
food_court,food
townhall,government
courthouse,government
post_office,government
police,government
supermarket,grocery
grocery,grocery
convenience,grocery
greengrocer,grocery
hospital,health
clinic,health
pharmacy,health
dentist,health
doctors,health
library,library
office,office
coworking,office
park,outdoor
playground,outdoor
garden,outdoor
hairdresser,service
laundry,service
car_repair,service
mall,shopping
clothes,shopping
department_store,shopping
hardware,shopping
gym,sports
fitness_centre,sports
sports_centre,sports
stadium,sports
swimming_pool,sports
attraction,tourism
viewpoint,tourism
monument,tourism
bus_station,transportation
train_station,transportation
parking,transportation
place_of_worship,worship
church,worship
mosque,worship
synagogue,worship
hotel,accommodation
motel,accommodation
hostel,accommodation
farm,agriculture
construction,construction
warehouse,industry
factory,industry
industrial,industry
power_substation,utilities
water_works,utilities
";

/// Raw tag to standard label; lookups are case-insensitive.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PoiMapping {
    map: HashMap<String, String>,
}

impl PoiMapping {
    pub fn with_defaults() -> Self {
        Self::read(DEFAULT_POI_MAPPING.as_bytes()).expect("built-in mapping parses")
    }

    /// Reads `raw_tag,category`. Labels must be a known category or one of
    /// the excluded labels.
    pub fn read(input: impl Read) -> Result<Self, PlacesError> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut map = HashMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(PlacesError::Format(format!("mapping row has {} fields", rec.len())));
            }
            let label = rec[1].trim().to_ascii_lowercase();
            if PoiCategory::from_label(&label).is_none() && !EXCLUDED_LABELS.contains(&label.as_str()) {
                return Err(PlacesError::Format(format!("unknown POI category '{label}'")));
            }
            map.insert(rec[0].trim().to_ascii_lowercase(), label);
        }
        Ok(Self { map })
    }

    /// Entries of `other` replace matching tags here.
    pub fn merge(&mut self, other: PoiMapping) {
        self.map.extend(other.map);
    }

    pub fn insert(&mut self, raw_tag: &str, label: &str) {
        self.map.insert(raw_tag.trim().to_ascii_lowercase(), label.trim().to_ascii_lowercase());
    }

    /// Raw tags mapping to `label`, sorted.
    pub fn tags_for(&self, label: &str) -> Vec<&str> {
        let mut v: Vec<&str> = self.map.iter().filter(|(_, l)| l.as_str() == label).map(|(t, _)| t.as_str()).collect();
        v.sort_unstable();
        v
    }

    /// Standard label for a tag; unmapped tags read as `other`.
    pub fn label(&self, raw_tag: &str) -> &str {
        self.map.get(&raw_tag.trim().to_ascii_lowercase()).map(String::as_str).unwrap_or("other")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorizeReport {
    /// POIs whose label is one of the excluded labels (unmapped tags included).
    pub excluded: usize,
    /// POIs with a valid category outside the active set.
    pub inactive: usize,
    /// Tags missing from the mapping.
    pub unmapped: usize,
}

pub fn categorize_pois(raw: &[RawPoi], mapping: &PoiMapping, set: &CategorySet) -> (Vec<Poi>, CategorizeReport) {
    let mut report = CategorizeReport::default();
    let mut out = Vec::new();
    for p in raw {
        let label = mapping.label(&p.raw_tag);
        if !mapping.map.contains_key(&p.raw_tag.trim().to_ascii_lowercase()) {
            report.unmapped += 1;
        }
        match PoiCategory::from_label(label) {
            Some(c) if set.position(c).is_some() => {
                out.push(Poi { poi_id: p.poi_id.clone(), point: p.point, raw_tag: p.raw_tag.clone(), category: c })
            }
            Some(_) => report.inactive += 1,
            None => report.excluded += 1,
        }
    }
    (out, report)
}

pub fn read_pois(input: impl Read) -> Result<Vec<RawPoi>, PlacesError> {
    let mut rdr = csv::Reader::from_reader(input);
    let h = rdr.headers()?.clone();
    let col = |name: &str| h.iter().position(|c| c.trim() == name).ok_or_else(|| PlacesError::Format(format!("pois.csv missing '{name}'")));
    let (ci, cla, clo, ct) = (col("poi_id")?, col("lat")?, col("lon")?, col("raw_tag")?);
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| PlacesError::Format(format!("bad coordinate '{s}'")));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let point = GeoPoint::new(num(&rec[cla])?, num(&rec[clo])?);
        if !point.is_finite() {
            return Err(PlacesError::Format(format!("poi '{}' has non-finite coordinates", &rec[ci])));
        }
        out.push(RawPoi { poi_id: rec[ci].to_string(), point, raw_tag: rec[ct].to_string() });
    }
    Ok(out)
}

pub fn write_pois(pois: &[RawPoi], out: impl Write) -> Result<(), PlacesError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["poi_id", "lat", "lon", "raw_tag"])?;
    for p in pois {
        w.write_record([p.poi_id.clone(), fmt_f64(p.point.lat), fmt_f64(p.point.lon), p.raw_tag.clone()])?;
    }
    w.flush().map_err(|e| PlacesError::Format(e.to_string()))
}
