//! Canonical CSV ingest and emission for persons, legs and rejects.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::categories::Standardizer;
use super::model::{Gender, Person, Reject, SurveyDataset, TripLeg, MAX_MINUTE};
use super::SurveyError;
use crate::fmt::fmt_f64;
use crate::geo::GeoPoint;

pub const PERSON_COLUMNS: [&str; 9] = [
    "person_id",
    "household_id",
    "age",
    "gender",
    "work_status",
    "income",
    "expansion_factor",
    "home_lat",
    "home_lon",
];

pub const LEG_COLUMNS: [&str; 10] = [
    "person_id",
    "leg_index",
    "o_lat",
    "o_lon",
    "d_lat",
    "d_lon",
    "depart_min",
    "arrive_min",
    "mode",
    "purpose",
];

/// Optional person column carrying household vehicle ownership (0/1).
pub const CAR_OWNER_COLUMN: &str = "car_owner";

/// Maps canonical column names to the headers used in a particular file.
/// Columns not listed are expected under their canonical name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    #[serde(default)]
    pub columns: HashMap<String, String>,
}

impl SchemaConfig {
    fn header_for<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.columns.get(canonical).map(String::as_str).unwrap_or(canonical)
    }

    fn resolve(&self, headers: &csv::StringRecord, wanted: &[&str], file: &str) -> Result<Vec<usize>, SurveyError> {
        wanted
            .iter()
            .map(|c| {
                let h = self.header_for(c);
                headers
                    .iter()
                    .position(|x| x == h)
                    .ok_or_else(|| SurveyError::Schema(format!("{file}: missing required column '{h}'")))
            })
            .collect()
    }
}

pub fn load_survey(
    persons_path: &Path,
    legs_path: &Path,
    schema: &SchemaConfig,
    standardizer: &mut Standardizer,
) -> Result<SurveyDataset, SurveyError> {
    let persons = std::fs::File::open(persons_path).map_err(|e| SurveyError::io(persons_path, e))?;
    let legs = std::fs::File::open(legs_path).map_err(|e| SurveyError::io(legs_path, e))?;
    load_survey_from(persons, legs, schema, standardizer)
}

/// Reader-based ingest; rows that fail validation go to `rejects` with a reason.
pub fn load_survey_from(
    persons: impl Read,
    legs: impl Read,
    schema: &SchemaConfig,
    standardizer: &mut Standardizer,
) -> Result<SurveyDataset, SurveyError> {
    let mut rejects = Vec::new();

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(persons);
    let headers = rdr.headers().map_err(|e| SurveyError::Schema(format!("persons: {e}")))?.clone();
    let cols = schema.resolve(&headers, &PERSON_COLUMNS, "persons")?;
    let car_col = headers.iter().position(|x| x == schema.header_for(CAR_OWNER_COLUMN));
    let mut person_rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                rejects.push(Reject { file: "persons".into(), line, reason: format!("unreadable: {e}"), raw: String::new() });
                continue;
            }
        };
        match parse_person(&rec, &cols, car_col, standardizer) {
            Ok(p) => person_rows.push(p),
            Err(reason) => rejects.push(Reject { file: "persons".into(), line, reason, raw: join(&rec) }),
        }
    }

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(legs);
    let headers = rdr.headers().map_err(|e| SurveyError::Schema(format!("legs: {e}")))?.clone();
    let cols = schema.resolve(&headers, &LEG_COLUMNS, "legs")?;
    let mut leg_rows = Vec::new();
    let mut leg_lines = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                rejects.push(Reject { file: "legs".into(), line, reason: format!("unreadable: {e}"), raw: String::new() });
                continue;
            }
        };
        match parse_leg(&rec, &cols, standardizer) {
            Ok(l) => {
                leg_rows.push(l);
                leg_lines.push((line, join(&rec)));
            }
            Err(reason) => rejects.push(Reject { file: "legs".into(), line, reason, raw: join(&rec) }),
        }
    }

    let known: std::collections::HashSet<&str> = person_rows.iter().map(|p| p.person_id.as_str()).collect();
    let mut kept = Vec::with_capacity(leg_rows.len());
    for (leg, (line, raw)) in leg_rows.into_iter().zip(leg_lines) {
        if known.contains(leg.person_id.as_str()) {
            kept.push(leg);
        } else {
            rejects.push(Reject { file: "legs".into(), line, reason: "unknown person".into(), raw });
        }
    }

    let mut ds = SurveyDataset::from_parts(person_rows, kept);
    ds.rejects = rejects;
    ds.unknown_categories = standardizer.unknown_counts();
    Ok(ds)
}

fn join(rec: &csv::StringRecord) -> String {
    rec.iter().collect::<Vec<_>>().join(",")
}

fn num<T: std::str::FromStr>(rec: &csv::StringRecord, col: usize, name: &str) -> Result<T, String> {
    let raw = rec.get(col).unwrap_or("");
    raw.parse::<T>().map_err(|_| format!("bad {name}: '{raw}'"))
}

fn finite(v: f64, name: &str) -> Result<f64, String> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite {name}"))
    }
}

fn parse_person(
    rec: &csv::StringRecord,
    c: &[usize],
    car_col: Option<usize>,
    standardizer: &mut Standardizer,
) -> Result<Person, String> {
    let person_id = rec.get(c[0]).unwrap_or("").to_string();
    if person_id.is_empty() {
        return Err("empty person_id".into());
    }
    let household_id = rec.get(c[1]).unwrap_or("").to_string();
    if household_id.is_empty() {
        return Err("empty household_id".into());
    }
    let age: i64 = num(rec, c[2], "age")?;
    if age < 0 {
        return Err("age<0".into());
    }
    let income_raw = rec.get(c[5]).unwrap_or("");
    let income = if income_raw.is_empty() || income_raw.eq_ignore_ascii_case("na") {
        None
    } else {
        let v = finite(num::<f64>(rec, c[5], "income")?, "income")?;
        if v < 0.0 {
            return Err("income<0".into());
        }
        Some(v)
    };
    let weight = finite(num::<f64>(rec, c[6], "expansion_factor")?, "expansion_factor")?;
    if weight < 0.0 {
        return Err("weight<0".into());
    }
    let home = GeoPoint::new(
        finite(num(rec, c[7], "home_lat")?, "home_lat")?,
        finite(num(rec, c[8], "home_lon")?, "home_lon")?,
    );
    let car_owner = match car_col.and_then(|i| rec.get(i)).map(str::trim) {
        None | Some("") => None,
        Some("1") | Some("true") | Some("yes") => Some(true),
        Some("0") | Some("false") | Some("no") => Some(false),
        Some(other) => return Err(format!("bad car_owner: '{other}'")),
    };
    Ok(Person {
        person_id,
        household_id,
        age: age as u32,
        gender: Gender::parse_lenient(rec.get(c[3]).unwrap_or("")),
        work_status: standardizer.work_status(rec.get(c[4]).unwrap_or("")),
        income,
        expansion_factor: weight,
        home,
        car_owner,
    })
}

fn parse_leg(rec: &csv::StringRecord, c: &[usize], standardizer: &mut Standardizer) -> Result<TripLeg, String> {
    let person_id = rec.get(c[0]).unwrap_or("").to_string();
    if person_id.is_empty() {
        return Err("empty person_id".into());
    }
    let leg_index: u32 = num(rec, c[1], "leg_index")?;
    let origin = GeoPoint::new(finite(num(rec, c[2], "o_lat")?, "o_lat")?, finite(num(rec, c[3], "o_lon")?, "o_lon")?);
    let dest = GeoPoint::new(finite(num(rec, c[4], "d_lat")?, "d_lat")?, finite(num(rec, c[5], "d_lon")?, "d_lon")?);
    let depart_min: u32 = num(rec, c[6], "depart_min")?;
    let arrive_min: u32 = num(rec, c[7], "arrive_min")?;
    if arrive_min < depart_min {
        return Err("arrive<depart".into());
    }
    if arrive_min > MAX_MINUTE {
        return Err(format!("minute>{MAX_MINUTE}"));
    }
    Ok(TripLeg {
        person_id,
        leg_index,
        origin,
        dest,
        depart_min,
        arrive_min,
        mode: standardizer.mode(rec.get(c[8]).unwrap_or("")),
        purpose: standardizer.purpose(rec.get(c[9]).unwrap_or("")),
    })
}

/// Writes persons in the canonical schema (plus `car_owner` when any person has it).
pub fn write_persons(ds: &SurveyDataset, out: impl Write) -> Result<(), SurveyError> {
    let with_car = ds.persons().iter().any(|p| p.car_owner.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = PERSON_COLUMNS.to_vec();
    if with_car {
        header.push(CAR_OWNER_COLUMN);
    }
    w.write_record(&header)?;
    for p in ds.persons() {
        let mut row = vec![
            p.person_id.clone(),
            p.household_id.clone(),
            p.age.to_string(),
            p.gender.to_string(),
            p.work_status.to_string(),
            p.income.map(fmt_f64).unwrap_or_default(),
            fmt_f64(p.expansion_factor),
            fmt_f64(p.home.lat),
            fmt_f64(p.home.lon),
        ];
        if with_car {
            row.push(match p.car_owner {
                Some(true) => "1".into(),
                Some(false) => "0".into(),
                None => String::new(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| SurveyError::Io(e.to_string()))?;
    Ok(())
}

pub fn write_legs(ds: &SurveyDataset, out: impl Write) -> Result<(), SurveyError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEG_COLUMNS)?;
    for l in ds.legs() {
        w.write_record([
            l.person_id.clone(),
            l.leg_index.to_string(),
            fmt_f64(l.origin.lat),
            fmt_f64(l.origin.lon),
            fmt_f64(l.dest.lat),
            fmt_f64(l.dest.lon),
            l.depart_min.to_string(),
            l.arrive_min.to_string(),
            l.mode.to_string(),
            l.purpose.to_string(),
        ])?;
    }
    w.flush().map_err(|e| SurveyError::Io(e.to_string()))?;
    Ok(())
}

pub fn write_rejects(rejects: &[Reject], out: impl Write) -> Result<(), SurveyError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["file", "line", "reason", "raw"])?;
    for r in rejects {
        w.write_record([r.file.as_str(), &r.line.to_string(), &r.reason, &r.raw])?;
    }
    w.flush().map_err(|e| SurveyError::Io(e.to_string()))?;
    Ok(())
}
