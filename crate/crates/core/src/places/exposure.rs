use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fmt::fmt_f64;
use crate::geo::GeoPoint;
use crate::grid::HexGrid;
use crate::survey::{Purpose, SurveyDataset};

use super::index::{isochrone_pois, IsochroneProvider};
use super::PlacesError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureConfig {
    pub t_minutes: f64,
    /// Level used to decide which destinations count as home.
    pub level: u8,
    pub exclude_home: bool,
    /// Scale each PD vector to sum to one.
    pub normalize_pd: bool,
}

impl Default for ExposureConfig {
    fn default() -> Self {
        Self { t_minutes: 15.0, level: 8, exclude_home: true, normalize_pd: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRow {
    pub person_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureResult {
    pub labels: Vec<String>,
    pub pd: Vec<ExposureRow>,
    pub ph: Vec<ExposureRow>,
    /// Persons without a non-home destination; they get PH but no PD.
    pub omitted: Vec<String>,
}

/// Mean isochrone vector over the destinations, counting repeats; `None`
/// when there are no destinations.
pub fn destination_exposure(
    dests: &[GeoPoint],
    t_minutes: f64,
    provider: &dyn IsochroneProvider,
) -> Result<Option<Vec<f64>>, PlacesError> {
    if dests.is_empty() {
        return Ok(None);
    }
    let mut acc = vec![0.0; provider.index().categories().len()];
    for d in dests {
        for (a, v) in acc.iter_mut().zip(isochrone_pois(*d, t_minutes, provider)?) {
            *a += v;
        }
    }
    let n = dests.len() as f64;
    Ok(Some(acc.into_iter().map(|a| a / n).collect()))
}

pub fn home_exposure(home: GeoPoint, t_minutes: f64, provider: &dyn IsochroneProvider) -> Result<Vec<f64>, PlacesError> {
    isochrone_pois(home, t_minutes, provider)
}

/// PD and PH for every person in the dataset.
pub fn compute_exposure(
    ds: &SurveyDataset,
    grid: &HexGrid,
    provider: &dyn IsochroneProvider,
    cfg: &ExposureConfig,
) -> Result<ExposureResult, PlacesError> {
    let per_person = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let p = ds.person(i);
            let home_cell = grid.bin_point(p.home, cfg.level)?;
            let mut dests = Vec::new();
            for leg in ds.legs_of(i) {
                if cfg.exclude_home && (leg.purpose == Purpose::Home || grid.bin_point(leg.dest, cfg.level)? == home_cell) {
                    continue;
                }
                dests.push(leg.dest);
            }
            let pd = destination_exposure(&dests, cfg.t_minutes, provider)?.map(|v| if cfg.normalize_pd { l1(v) } else { v });
            let ph = home_exposure(p.home, cfg.t_minutes, provider)?;
            Ok((pd, ph))
        })
        .collect::<Result<Vec<_>, PlacesError>>()?;
    let mut out = ExposureResult {
        labels: provider.index().categories().labels().iter().map(|s| s.to_string()).collect(),
        pd: Vec::new(),
        ph: Vec::new(),
        omitted: Vec::new(),
    };
    for (p, (pd, ph)) in ds.persons().iter().zip(per_person) {
        match pd {
            Some(values) => out.pd.push(ExposureRow { person_id: p.person_id.clone(), values }),
            None => out.omitted.push(p.person_id.clone()),
        }
        out.ph.push(ExposureRow { person_id: p.person_id.clone(), values: ph });
    }
    Ok(out)
}

fn l1(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.into_iter().map(|x| x / s).collect()
    } else {
        v
    }
}

pub fn write_exposure_csv(labels: &[String], rows: &[ExposureRow], out: impl Write) -> Result<(), PlacesError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["person_id".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.person_id.clone()];
        rec.extend(r.values.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| PlacesError::Format(e.to_string()))
}

/// Returns the category labels and rows.
pub fn read_exposure_csv(input: impl Read) -> Result<(Vec<String>, Vec<ExposureRow>), PlacesError> {
    let mut rdr = csv::Reader::from_reader(input);
    let h = rdr.headers()?.clone();
    if h.get(0) != Some("person_id") {
        return Err(PlacesError::Format("exposure file must start with person_id".into()));
    }
    let labels: Vec<String> = h.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|_| PlacesError::Format(format!("bad number '{s}'"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(ExposureRow { person_id: rec[0].to_string(), values });
    }
    Ok((labels, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Projection;
    use crate::places::{CategorySet, DiscIsochrone, Poi, PoiCategory, PoiIndex};
    use crate::survey::{Gender, Mode, Person, TripLeg, WorkStatus};
    use proptest::prelude::*;

    const ORIGIN: GeoPoint = GeoPoint::new(40.0, -75.0);

    fn at(x: f64, y: f64) -> GeoPoint {
        Projection::new(ORIGIN).inverse(x, y)
    }

    fn poi(id: usize, x: f64, y: f64, c: PoiCategory) -> Poi {
        Poi { poi_id: id.to_string(), point: at(x, y), raw_tag: String::new(), category: c }
    }

    fn cafe() -> usize {
        CategorySet::default().position(PoiCategory::Cafe).unwrap()
    }

    /// Two cafes near (0,0), none near (5000,0), groceries near (10000,0).
    fn index() -> PoiIndex {
        PoiIndex::new(
            vec![
                poi(0, 50.0, 0.0, PoiCategory::Cafe),
                poi(1, -50.0, 0.0, PoiCategory::Cafe),
                poi(2, 10_000.0, 10.0, PoiCategory::Grocery),
                poi(3, 10_000.0, -10.0, PoiCategory::Grocery),
                poi(4, 10_010.0, 0.0, PoiCategory::Grocery),
            ],
            CategorySet::default(),
            ORIGIN,
        )
    }

    #[test]
    fn singleton_mean() {
        let idx = index();
        let iso = DiscIsochrone::walking(&idx);
        let pd = destination_exposure(&[at(0.0, 0.0)], 15.0, &iso).unwrap().unwrap();
        assert_eq!(pd, isochrone_pois(at(0.0, 0.0), 15.0, &iso).unwrap());
    }

    #[test]
    fn mean_of_two() {
        let idx = index();
        let iso = DiscIsochrone::walking(&idx);
        let pd = destination_exposure(&[at(0.0, 0.0), at(5000.0, 0.0)], 15.0, &iso).unwrap().unwrap();
        assert_eq!(pd[cafe()], 1.0);
    }

    #[test]
    fn multiplicity_counts() {
        let idx = index();
        let iso = DiscIsochrone::walking(&idx);
        let pd = destination_exposure(&[at(0.0, 0.0), at(0.0, 0.0), at(5000.0, 0.0)], 15.0, &iso).unwrap().unwrap();
        assert!((pd[cafe()] - 4.0 / 3.0).abs() < 1e-15);
        assert!(destination_exposure(&[], 15.0, &iso).unwrap().is_none());
    }

    #[test]
    fn home_vector() {
        let idx = index();
        let iso = DiscIsochrone::walking(&idx);
        assert_eq!(home_exposure(at(5000.0, 0.0), 15.0, &iso).unwrap(), vec![0.0; 18]);
        let g = CategorySet::default().position(PoiCategory::Grocery).unwrap();
        assert_eq!(home_exposure(at(10_000.0, 0.0), 15.0, &iso).unwrap()[g], 3.0);
    }

    fn person(id: &str, home: GeoPoint) -> Person {
        Person {
            person_id: id.into(),
            household_id: id.into(),
            age: 30,
            gender: Gender::Male,
            work_status: WorkStatus::FullTime,
            income: Some(1.0),
            expansion_factor: 1.0,
            home,
            car_owner: None,
        }
    }

    fn leg(id: &str, dest: GeoPoint, t: u32, purpose: Purpose) -> TripLeg {
        TripLeg { person_id: id.into(), leg_index: 0, origin: ORIGIN, dest, depart_min: t, arrive_min: t + 10, mode: Mode::Walk, purpose }
    }

    #[test]
    fn pipeline_excludes_home_and_keeps_ph_independent_of_legs() {
        let idx = index();
        let iso = DiscIsochrone::walking(&idx);
        let grid = HexGrid::new(ORIGIN);
        let home = at(10_000.0, 0.0);
        let ds = SurveyDataset::from_parts(
            vec![person("a", home), person("b", home)],
            vec![
                leg("a", at(0.0, 0.0), 480, Purpose::Work),
                leg("a", home, 1000, Purpose::Home),
                leg("b", home, 600, Purpose::Shop),
            ],
        );
        let res = compute_exposure(&ds, &grid, &iso, &ExposureConfig::default()).unwrap();
        assert_eq!(res.labels.len(), 18);
        assert_eq!(res.pd.len(), 1);
        assert_eq!(res.pd[0].values[cafe()], 2.0);
        assert_eq!(res.omitted, vec!["b".to_string()]);
        assert_eq!(res.ph[0].values, res.ph[1].values);

        let norm = compute_exposure(&ds, &grid, &iso, &ExposureConfig { normalize_pd: true, ..Default::default() }).unwrap();
        assert_eq!(norm.pd[0].values.iter().sum::<f64>(), 1.0);

        let mut buf = Vec::new();
        write_exposure_csv(&res.labels, &res.ph, &mut buf).unwrap();
        let (labels, rows) = read_exposure_csv(buf.as_slice()).unwrap();
        assert_eq!(labels, res.labels);
        assert_eq!(rows, res.ph);
    }

    proptest! {
        #[test]
        fn mean_is_bounded(dests in prop::collection::vec((-1500.0f64..11_500.0, -1500.0f64..1500.0), 1..8)) {
            let idx = index();
            let iso = DiscIsochrone::walking(&idx);
            let pts: Vec<GeoPoint> = dests.iter().map(|(x, y)| at(*x, *y)).collect();
            let pd = destination_exposure(&pts, 15.0, &iso).unwrap().unwrap();
            let each: Vec<Vec<f64>> = pts.iter().map(|p| isochrone_pois(*p, 15.0, &iso).unwrap()).collect();
            for c in 0..pd.len() {
                let lo = each.iter().map(|v| v[c]).fold(f64::INFINITY, f64::min);
                let hi = each.iter().map(|v| v[c]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(pd[c] >= lo - 1e-12 && pd[c] <= hi + 1e-12);
            }
        }
    }
}
