use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::geo::GeoPoint;

/// Latest minute a leg may end at (27:00) to accommodate post-midnight travel.
pub const MAX_MINUTE: u32 = 1620;

macro_rules! labeled_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            /// Parses the canonical lower-case label.
            pub fn from_label(s: &str) -> Option<Self> {
                match s {
                    $($label => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

labeled_enum!(Gender { Female => "female", Male => "male", Other => "other" });

labeled_enum!(WorkStatus {
    FullTime => "full_time",
    PartTime => "part_time",
    Student => "student",
    Homemaker => "homemaker",
    Retired => "retired",
    Unemployed => "unemployed",
    Other => "other",
});

labeled_enum!(Mode {
    PublicTransit => "public_transit",
    PrivateCar => "private_car",
    Walk => "walk",
    Bike => "bike",
    Other => "other",
});

labeled_enum!(Purpose {
    Home => "home",
    Work => "work",
    School => "school",
    Shop => "shop",
    Other => "other",
});

impl Gender {
    /// Lenient parse of the handful of spellings surveys use.
    pub fn parse_lenient(raw: &str) -> Self {
        match raw.trim().to_ascii_lowercase().as_str() {
            "female" | "f" | "woman" | "w" => Gender::Female,
            "male" | "m" | "man" => Gender::Male,
            _ => Gender::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub person_id: String,
    pub household_id: String,
    pub age: u32,
    pub gender: Gender,
    pub work_status: WorkStatus,
    pub income: Option<f64>,
    pub expansion_factor: f64,
    pub home: GeoPoint,
    /// Household vehicle ownership when the survey reports it.
    pub car_owner: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripLeg {
    pub person_id: String,
    pub leg_index: u32,
    pub origin: GeoPoint,
    pub dest: GeoPoint,
    pub depart_min: u32,
    pub arrive_min: u32,
    pub mode: Mode,
    pub purpose: Purpose,
}

/// A row that failed validation during ingest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub file: String,
    pub line: u64,
    pub reason: String,
    pub raw: String,
}

/// Ingested survey: persons sorted by id, legs grouped per person and
/// ordered by departure.
#[derive(Debug, Clone, Default)]
pub struct SurveyDataset {
    persons: Vec<Person>,
    legs: Vec<TripLeg>,
    leg_ranges: Vec<Range<usize>>,
    index: HashMap<String, usize>,
    pub rejects: Vec<Reject>,
    pub unknown_categories: HashMap<String, usize>,
}

impl SurveyDataset {
    /// Builds a dataset from already-validated rows.
    ///
    /// Persons are sorted by id; legs of unknown persons are dropped into
    /// `rejects`; each person's legs are sorted by departure time and their
    /// `leg_index` renumbered densely from zero.
    pub fn from_parts(mut persons: Vec<Person>, legs: Vec<TripLeg>) -> Self {
        persons.sort_by(|a, b| a.person_id.cmp(&b.person_id));
        persons.dedup_by(|a, b| a.person_id == b.person_id);
        let index: HashMap<String, usize> =
            persons.iter().enumerate().map(|(i, p)| (p.person_id.clone(), i)).collect();

        let mut rejects = Vec::new();
        let mut buckets: Vec<Vec<TripLeg>> = vec![Vec::new(); persons.len()];
        for leg in legs {
            match index.get(&leg.person_id) {
                Some(&i) => buckets[i].push(leg),
                None => rejects.push(Reject {
                    file: "legs".into(),
                    line: 0,
                    reason: "unknown person".into(),
                    raw: format!("{}:{}", leg.person_id, leg.leg_index),
                }),
            }
        }

        let mut flat = Vec::new();
        let mut leg_ranges = Vec::with_capacity(persons.len());
        for mut bucket in buckets {
            bucket.sort_by_key(|l| (l.depart_min, l.leg_index, l.arrive_min));
            let start = flat.len();
            for (i, mut leg) in bucket.into_iter().enumerate() {
                leg.leg_index = i as u32;
                flat.push(leg);
            }
            leg_ranges.push(start..flat.len());
        }

        Self { persons, legs: flat, leg_ranges, index, rejects, unknown_categories: HashMap::new() }
    }

    pub fn persons(&self) -> &[Person] {
        &self.persons
    }

    pub fn legs(&self) -> &[TripLeg] {
        &self.legs
    }

    pub fn len(&self) -> usize {
        self.persons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.persons.is_empty()
    }

    pub fn person_index(&self, person_id: &str) -> Option<usize> {
        self.index.get(person_id).copied()
    }

    pub fn person(&self, idx: usize) -> &Person {
        &self.persons[idx]
    }

    pub fn legs_of(&self, idx: usize) -> &[TripLeg] {
        &self.legs[self.leg_ranges[idx].clone()]
    }

    /// Returns a dataset restricted to the persons for which `keep` is true.
    pub fn retain(&self, mut keep: impl FnMut(usize, &Person) -> bool) -> Self {
        let mut persons = Vec::new();
        let mut legs = Vec::new();
        for (i, p) in self.persons.iter().enumerate() {
            if keep(i, p) {
                persons.push(p.clone());
                legs.extend_from_slice(self.legs_of(i));
            }
        }
        let mut out = Self::from_parts(persons, legs);
        out.rejects = self.rejects.clone();
        out.unknown_categories = self.unknown_categories.clone();
        out
    }

    /// Copy of the dataset with each person's income replaced by `income(person)`.
    pub fn with_incomes(&self, mut income: impl FnMut(&Person) -> Option<f64>) -> Self {
        let mut out = self.clone();
        for p in &mut out.persons {
            p.income = income(p);
        }
        out
    }
}
