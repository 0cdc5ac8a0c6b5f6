use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grid::{CellId, HexGrid};
use crate::survey::{Purpose, SurveyDataset};

use super::MixingError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisitOptions {
    /// Weight each visit by dwell minutes instead of counting it once.
    pub time_weighted: bool,
    /// Drop destinations in the home cell or with purpose `home`.
    pub exclude_home: bool,
    /// End of the day for the dwell of the final visit, minutes since midnight.
    pub day_end: u32,
}

impl Default for VisitOptions {
    fn default() -> Self {
        Self { time_weighted: false, exclude_home: true, day_end: 1440 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonVisits {
    pub person_id: String,
    pub expansion_factor: f64,
    /// `(cell, share)` sorted by cell; shares sum to one.
    pub visits: Vec<(CellId, f64)>,
}

/// Per-person share of daytime visits by cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitTable {
    pub level: u8,
    pub options: VisitOptions,
    pub rows: Vec<PersonVisits>,
    /// Persons with no surviving visit.
    pub omitted: Vec<String>,
}

impl VisitTable {
    /// Keeps only rows for which `keep(person_id)` holds.
    pub fn restrict(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        Self {
            level: self.level,
            options: self.options,
            rows: self.rows.iter().filter(|r| keep(&r.person_id)).cloned().collect(),
            omitted: self.omitted.clone(),
        }
    }
}

/// Raw (unnormalized) visit weights per destination cell for one person.
pub(crate) fn raw_visits(
    ds: &SurveyDataset,
    idx: usize,
    grid: &HexGrid,
    level: u8,
    opts: &VisitOptions,
) -> Result<BTreeMap<CellId, f64>, MixingError> {
    let person = ds.person(idx);
    let home = grid.bin_point(person.home, level)?;
    let legs = ds.legs_of(idx);
    let mut acc: BTreeMap<CellId, f64> = BTreeMap::new();
    for (j, leg) in legs.iter().enumerate() {
        let cell = grid.bin_point(leg.dest, level)?;
        if opts.exclude_home && (cell == home || leg.purpose == Purpose::Home) {
            continue;
        }
        let w = if opts.time_weighted {
            let until = legs.get(j + 1).map(|n| n.depart_min).unwrap_or(opts.day_end);
            until.saturating_sub(leg.arrive_min) as f64
        } else {
            1.0
        };
        *acc.entry(cell).or_insert(0.0) += w;
    }
    Ok(acc)
}

pub fn build_visit_table(
    ds: &SurveyDataset,
    grid: &HexGrid,
    level: u8,
    opts: VisitOptions,
) -> Result<VisitTable, MixingError> {
    let mut rows = Vec::new();
    let mut omitted = Vec::new();
    for (i, p) in ds.persons().iter().enumerate() {
        let acc = raw_visits(ds, i, grid, level, &opts)?;
        let total: f64 = acc.values().sum();
        if total <= 0.0 {
            omitted.push(p.person_id.clone());
            continue;
        }
        rows.push(PersonVisits {
            person_id: p.person_id.clone(),
            expansion_factor: p.expansion_factor,
            visits: acc.into_iter().filter(|(_, w)| *w > 0.0).map(|(c, w)| (c, w / total)).collect(),
        });
    }
    Ok(VisitTable { level, options: opts, rows, omitted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::testutil::*;

    #[test]
    fn two_legs_split_evenly() {
        let f = Fixture::new();
        let ds = f.dataset(&[("p", 1.0, (0, 0))], &[("p", (3, 0), 540, 560, Purpose::Work), ("p", (0, 3), 600, 620, Purpose::Shop)]);
        let vt = build_visit_table(&ds, &f.grid, 8, VisitOptions::default()).unwrap();
        assert_eq!(vt.rows.len(), 1);
        let shares: Vec<f64> = vt.rows[0].visits.iter().map(|v| v.1).collect();
        assert_eq!(shares, vec![0.5, 0.5]);
    }

    #[test]
    fn home_cell_and_home_purpose_dropped() {
        let f = Fixture::new();
        let ds = f.dataset(
            &[("p", 1.0, (0, 0))],
            &[
                ("p", (0, 0), 540, 560, Purpose::Other),
                ("p", (3, 0), 600, 620, Purpose::Work),
                ("p", (5, 0), 700, 720, Purpose::Home),
            ],
        );
        let vt = build_visit_table(&ds, &f.grid, 8, VisitOptions::default()).unwrap();
        assert_eq!(vt.rows[0].visits, vec![(f.cell(3, 0), 1.0)]);
        let keep = VisitOptions { exclude_home: false, ..Default::default() };
        assert_eq!(build_visit_table(&ds, &f.grid, 8, keep).unwrap().rows[0].visits.len(), 3);
    }

    #[test]
    fn dwell_weighting() {
        // Arrive A at 540, leave at 600; arrive B at 630, day ends at 690.
        let f = Fixture::new();
        let ds = f.dataset(&[("p", 1.0, (0, 0))], &[("p", (3, 0), 500, 540, Purpose::Work), ("p", (0, 3), 600, 630, Purpose::Shop)]);
        let opts = VisitOptions { time_weighted: true, exclude_home: true, day_end: 690 };
        let vt = build_visit_table(&ds, &f.grid, 8, opts).unwrap();
        assert_eq!(vt.rows[0].visits, vec![(f.cell(0, 3), 0.5), (f.cell(3, 0), 0.5)]);
    }

    #[test]
    fn arrival_after_day_end_has_zero_dwell() {
        let f = Fixture::new();
        let ds = f.dataset(&[("p", 1.0, (0, 0))], &[("p", (3, 0), 1400, 1450, Purpose::Other)]);
        let opts = VisitOptions { time_weighted: true, ..Default::default() };
        let vt = build_visit_table(&ds, &f.grid, 8, opts).unwrap();
        assert!(vt.rows.is_empty());
        assert_eq!(vt.omitted, vec!["p".to_string()]);
    }

    #[test]
    fn person_with_only_home_trips_is_omitted() {
        let f = Fixture::new();
        let ds = f.dataset(&[("p", 1.0, (0, 0)), ("q", 1.0, (0, 0))], &[("p", (0, 0), 500, 510, Purpose::Home), ("q", (2, 2), 500, 510, Purpose::Work)]);
        let vt = build_visit_table(&ds, &f.grid, 8, VisitOptions::default()).unwrap();
        assert_eq!(vt.omitted, vec!["p".to_string()]);
        assert_eq!(vt.rows.len(), 1);
    }
}
