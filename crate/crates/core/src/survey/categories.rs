//! Raw-to-canonical category mapping for mode, work status and trip purpose.
//!
//! Mapping tables are two-column `raw,standard` CSV files. Lookups are
//! case-insensitive on trimmed input; a raw value equal to a canonical label
//! maps to itself. Anything else lands in the field's catch-all and is counted.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Mode, Purpose, WorkStatus};
use super::SurveyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryField {
    Mode,
    WorkStatus,
    Purpose,
}

impl CategoryField {
    pub fn as_str(self) -> &'static str {
        match self {
            CategoryField::Mode => "mode",
            CategoryField::WorkStatus => "work_status",
            CategoryField::Purpose => "purpose",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Standardized {
    Mode(Mode),
    WorkStatus(WorkStatus),
    Purpose(Purpose),
}

const DEFAULT_MODE: &str = "\
raw,standard
bus,public_transit
subway,public_transit
metro,public_transit
tram,public_transit
train,public_transit
rail,public_transit
mtr,public_transit
ferry,public_transit
transit,public_transit
car,private_car
auto,private_car
drive,private_car
driver,private_car
passenger,private_car
taxi,private_car
motorcycle,private_car
walking,walk
foot,walk
bicycle,bike
cycle,bike
";

const DEFAULT_WORK: &str = "\
raw,standard
employed full time,full_time
full-time,full_time
fulltime,full_time
employed part time,part_time
part-time,part_time
parttime,part_time
school,student
pupil,student
university,student
housewife,homemaker
home duties,homemaker
retiree,retired
pensioner,retired
jobless,unemployed
looking for work,unemployed
";

const DEFAULT_PURPOSE: &str = "\
raw,standard
return home,home
go home,home
work-related,work
commute,work
office,work
education,school
study,school
shopping,shop
grocery,shop
errand,other
";

/// Category lookup tables plus a counter of values that fell to a catch-all.
#[derive(Debug, Clone, Default)]
pub struct Standardizer {
    tables: HashMap<CategoryField, HashMap<String, String>>,
    unknown: BTreeMap<CategoryField, usize>,
}

impl Standardizer {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Tables covering common survey vocabularies.
    pub fn with_defaults() -> Self {
        let mut s = Self::empty();
        for (field, text) in [
            (CategoryField::Mode, DEFAULT_MODE),
            (CategoryField::WorkStatus, DEFAULT_WORK),
            (CategoryField::Purpose, DEFAULT_PURPOSE),
        ] {
            s.load_table(field, text.as_bytes()).expect("built-in table parses");
        }
        s
    }

    pub fn load_table_file(&mut self, field: CategoryField, path: &Path) -> Result<(), SurveyError> {
        let file = std::fs::File::open(path).map_err(|e| SurveyError::io(path, e))?;
        self.load_table(field, file)
    }

    /// Adds (or overrides) entries from a `raw,standard` CSV.
    pub fn load_table(&mut self, field: CategoryField, reader: impl Read) -> Result<(), SurveyError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let table = self.tables.entry(field).or_default();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| SurveyError::Schema(format!("{} mapping: {e}", field.as_str())))?;
            if rec.len() < 2 {
                return Err(SurveyError::Schema(format!("{} mapping row needs 2 columns", field.as_str())));
            }
            let standard = rec[1].to_ascii_lowercase();
            if !is_canonical(field, &standard) {
                return Err(SurveyError::Schema(format!(
                    "{} mapping targets unknown category '{standard}'",
                    field.as_str()
                )));
            }
            table.insert(rec[0].to_ascii_lowercase(), standard);
        }
        Ok(())
    }

    pub fn insert(&mut self, field: CategoryField, raw: &str, standard: &str) {
        self.tables.entry(field).or_default().insert(raw.trim().to_ascii_lowercase(), standard.to_string());
    }

    /// Maps a raw value; unmapped values go to the catch-all and are counted.
    pub fn standardize(&mut self, raw: &str, field: CategoryField) -> Standardized {
        let key = raw.trim().to_ascii_lowercase();
        let mapped = self
            .tables
            .get(&field)
            .and_then(|t| t.get(&key))
            .map(String::as_str)
            .or_else(|| is_canonical(field, &key).then_some(key.as_str()));
        let hit = mapped.and_then(|label| parse(field, label));
        match hit {
            Some(v) => v,
            None => {
                *self.unknown.entry(field).or_insert(0) += 1;
                parse(field, "other").expect("catch-all exists")
            }
        }
    }

    pub fn mode(&mut self, raw: &str) -> Mode {
        match self.standardize(raw, CategoryField::Mode) {
            Standardized::Mode(m) => m,
            _ => unreachable!(),
        }
    }

    pub fn work_status(&mut self, raw: &str) -> WorkStatus {
        match self.standardize(raw, CategoryField::WorkStatus) {
            Standardized::WorkStatus(w) => w,
            _ => unreachable!(),
        }
    }

    pub fn purpose(&mut self, raw: &str) -> Purpose {
        match self.standardize(raw, CategoryField::Purpose) {
            Standardized::Purpose(p) => p,
            _ => unreachable!(),
        }
    }

    pub fn unknown_count(&self, field: CategoryField) -> usize {
        self.unknown.get(&field).copied().unwrap_or(0)
    }

    pub fn unknown_counts(&self) -> HashMap<String, usize> {
        self.unknown.iter().map(|(k, v)| (k.as_str().to_string(), *v)).collect()
    }
}

fn is_canonical(field: CategoryField, label: &str) -> bool {
    parse(field, label).is_some()
}

fn parse(field: CategoryField, label: &str) -> Option<Standardized> {
    match field {
        CategoryField::Mode => Mode::from_label(label).map(Standardized::Mode),
        CategoryField::WorkStatus => WorkStatus::from_label(label).map(Standardized::WorkStatus),
        CategoryField::Purpose => Purpose::from_label(label).map(Standardized::Purpose),
    }
}
