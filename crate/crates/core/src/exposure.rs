//! Population exposure to PM2.5.
//!
//! Daily station readings are interpolated to sub-district centroids by
//! inverse-distance weighting, optionally backed by a supplementary gridded
//! surface. Days above the threshold count as exposed; intensity is population
//! density times exposed days. Results are aggregated by month and by city.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};
use geo::{Point, Polygon};
use rayon::prelude::*;
use rstar::primitives::GeomWithData;
use rstar::RTree;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 75.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationReading {
    pub station_id: String,
    pub location: Point<f64>,
    pub date: NaiveDate,
    pub pm25: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subdistrict {
    pub id: String,
    pub location: Point<f64>,
    pub polygon: Option<Polygon<f64>>,
    /// Persons per km².
    pub pop_density: f64,
    pub d0_14: f64,
    pub d15_64: f64,
    pub d65p: f64,
    pub city_id: String,
}

impl Subdistrict {
    pub fn validate(&self) -> Result<()> {
        let all = [self.pop_density, self.d0_14, self.d15_64, self.d65p];
        if all.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::param(
                "pop_density",
                format!("{}: densities must be finite and >= 0", self.id),
            ));
        }
        let groups = self.d0_14 + self.d15_64 + self.d65p;
        if (groups - self.pop_density).abs() > 0.005 * self.pop_density {
            return Err(Error::param(
                "age groups",
                format!(
                    "{}: age-group densities sum to {groups}, total is {}",
                    self.id, self.pop_density
                ),
            ));
        }
        Ok(())
    }

    pub fn density(&self, group: AgeGroup) -> f64 {
        match group {
            AgeGroup::Total => self.pop_density,
            AgeGroup::Age0To14 => self.d0_14,
            AgeGroup::Age15To64 => self.d15_64,
            AgeGroup::Age65Plus => self.d65p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgeGroup {
    Total,
    Age0To14,
    Age15To64,
    Age65Plus,
}

impl AgeGroup {
    pub const BANDS: [AgeGroup; 3] = [AgeGroup::Age0To14, AgeGroup::Age15To64, AgeGroup::Age65Plus];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdwParams {
    pub power: f64,
    /// Number of nearest stations used.
    pub k: usize,
    /// Queries closer than this to a station take its value.
    pub exact_radius_m: f64,
    /// Beyond this distance to the nearest station the estimate is missing.
    pub max_station_distance_m: f64,
}

impl Default for IdwParams {
    fn default() -> Self {
        IdwParams {
            power: 2.0,
            k: 8,
            exact_radius_m: 1.0,
            max_station_distance_m: 200_000.0,
        }
    }
}

impl IdwParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k", "must be >= 1"));
        }
        if !(self.power > 0.0) {
            return Err(Error::param("power", format!("{} must be > 0", self.power)));
        }
        if !(self.max_station_distance_m > 0.0) {
            return Err(Error::param(
                "max_station_distance_m",
                format!("{} must be > 0", self.max_station_distance_m),
            ));
        }
        Ok(())
    }
}

type Station = GeomWithData<[f64; 2], f64>;

fn station_tree(readings: &[&StationReading]) -> RTree<Station> {
    let mut sorted: Vec<&&StationReading> = readings.iter().collect();
    sorted.sort_by(|a, b| a.station_id.cmp(&b.station_id));
    RTree::bulk_load(
        sorted
            .into_iter()
            .map(|r| GeomWithData::new([r.location.x(), r.location.y()], r.pm25))
            .collect(),
    )
}

fn idw_at(tree: &RTree<Station>, q: Point<f64>, params: &IdwParams) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, (s, d2)) in tree.nearest_neighbor_iter_with_distance_2(&[q.x(), q.y()]).take(params.k).enumerate() {
        let d = d2.sqrt();
        if i == 0 {
            if d > params.max_station_distance_m {
                return None;
            }
            if d < params.exact_radius_m {
                return Some(s.data);
            }
        }
        let w = d.powf(-params.power);
        num += w * s.data;
        den += w;
        lo = lo.min(s.data);
        hi = hi.max(s.data);
    }
    // A weighted mean can round one ulp past its inputs.
    (den > 0.0).then(|| (num / den).clamp(lo, hi))
}

/// Inverse-distance estimates at `queries` from one day's readings. A day
/// without readings yields all-missing estimates.
pub fn interpolate_daily(readings: &[StationReading], queries: &[Point<f64>], params: &IdwParams) -> Result<Vec<Option<f64>>> {
    params.validate()?;
    let refs: Vec<&StationReading> = readings.iter().collect();
    Ok(interpolate_refs(&refs, queries, params))
}

fn interpolate_refs(readings: &[&StationReading], queries: &[Point<f64>], params: &IdwParams) -> Vec<Option<f64>> {
    if readings.is_empty() {
        return vec![None; queries.len()];
    }
    let tree = station_tree(readings);
    queries.iter().map(|q| idw_at(&tree, *q, params)).collect()
}

/// Primary estimate where present, supplement elsewhere.
pub fn merge_supplement(primary: &[Option<f64>], supplement: &[Option<f64>]) -> Result<Vec<Option<f64>>> {
    if primary.len() != supplement.len() {
        return Err(Error::LengthMismatch(format!(
            "primary surface has {} points, supplement {}",
            primary.len(),
            supplement.len()
        )));
    }
    Ok(primary.iter().zip(supplement).map(|(p, s)| p.or(*s)).collect())
}

/// Supplementary daily concentration surface sampled at grid points.
#[derive(Debug, Clone, Default)]
pub struct SupplementGrid {
    days: BTreeMap<NaiveDate, RTree<Station>>,
}

impl SupplementGrid {
    pub fn new(cells: &[StationReading]) -> Self {
        let mut by_day: BTreeMap<NaiveDate, Vec<&StationReading>> = BTreeMap::new();
        for c in cells {
            by_day.entry(c.date).or_default().push(c);
        }
        SupplementGrid {
            days: by_day
                .into_iter()
                .map(|(d, mut v)| {
                    v.sort_by(|a, b| {
                        a.location
                            .x()
                            .total_cmp(&b.location.x())
                            .then(a.location.y().total_cmp(&b.location.y()))
                    });
                    let tree = RTree::bulk_load(
                        v.into_iter()
                            .map(|r| GeomWithData::new([r.location.x(), r.location.y()], r.pm25))
                            .collect(),
                    );
                    (d, tree)
                })
                .collect(),
        }
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.days.keys().copied()
    }

    /// Nearest grid value for each query on `date`.
    pub fn sample(&self, date: NaiveDate, queries: &[Point<f64>]) -> Vec<Option<f64>> {
        match self.days.get(&date) {
            Some(tree) => queries
                .iter()
                .map(|q| tree.nearest_neighbor(&[q.x(), q.y()]).map(|s| s.data))
                .collect(),
            None => vec![None; queries.len()],
        }
    }
}

/// Non-missing days strictly above `threshold`.
pub fn exposed_days(series: &[Option<f64>], threshold: f64) -> Result<u32> {
    if !(threshold > 0.0) {
        return Err(Error::param("threshold", format!("{threshold} must be > 0")));
    }
    Ok(series.iter().flatten().filter(|c| **c > threshold).count() as u32)
}

/// Persons·days per km² for one population group.
pub fn exposure_intensity(subdistrict: &Subdistrict, exposed_days: u32, group: AgeGroup) -> f64 {
    subdistrict.density(group) * exposed_days as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MonthKey {
    pub year: i32,
    pub month: u32,
}

impl MonthKey {
    pub fn of(date: NaiveDate) -> Self {
        MonthKey {
            year: date.year(),
            month: date.month(),
        }
    }
}

impl std::fmt::Display for MonthKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthlyCount {
    pub month: MonthKey,
    pub exceed_days: u32,
    /// Days with an estimate.
    pub valid_days: u32,
}

/// Per-month exceedance counts for one daily series aligned with `dates`.
pub fn monthly_exceedance(dates: &[NaiveDate], series: &[Option<f64>], threshold: f64) -> Result<Vec<MonthlyCount>> {
    if dates.len() != series.len() {
        return Err(Error::LengthMismatch(format!(
            "{} dates, {} values",
            dates.len(),
            series.len()
        )));
    }
    if !(threshold > 0.0) {
        return Err(Error::param("threshold", format!("{threshold} must be > 0")));
    }
    let mut months: BTreeMap<MonthKey, MonthlyCount> = BTreeMap::new();
    for (d, v) in dates.iter().zip(series) {
        let key = MonthKey::of(*d);
        let e = months.entry(key).or_insert(MonthlyCount {
            month: key,
            exceed_days: 0,
            valid_days: 0,
        });
        if let Some(c) = v {
            e.valid_days += 1;
            if *c > threshold {
                e.exceed_days += 1;
            }
        }
    }
    Ok(months.into_values().collect())
}

/// Months whose share of exceedance days among valid days is above `cut`.
pub fn exposed_months(monthly: &[MonthlyCount], cut: f64) -> u32 {
    monthly
        .iter()
        .filter(|m| m.valid_days > 0 && m.exceed_days as f64 / m.valid_days as f64 > cut)
        .count() as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CityMean {
    pub members: usize,
    pub mean_intensity: f64,
    pub mean_exposed_days: f64,
    pub mean_exposed_months: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CityAggregation {
    pub cities: BTreeMap<String, CityMean>,
    /// Requested cities without any sub-district.
    pub empty: Vec<String>,
}

/// Arithmetic means over each city's sub-districts.
pub fn aggregate_cities(series: &[ExposureSeries], expected: &[String]) -> CityAggregation {
    let mut acc: BTreeMap<&str, (usize, f64, f64, f64)> = BTreeMap::new();
    for s in series {
        let e = acc.entry(s.city_id.as_str()).or_default();
        e.0 += 1;
        e.1 += s.intensity;
        e.2 += s.exposed_days as f64;
        e.3 += s.exposed_months as f64;
    }
    let cities: BTreeMap<String, CityMean> = acc
        .into_iter()
        .map(|(c, (n, i, d, m))| {
            let n_f = n as f64;
            (
                c.to_string(),
                CityMean {
                    members: n,
                    mean_intensity: i / n_f,
                    mean_exposed_days: d / n_f,
                    mean_exposed_months: m / n_f,
                },
            )
        })
        .collect();
    let empty = expected
        .iter()
        .filter(|c| !cities.contains_key(*c))
        .cloned()
        .collect();
    CityAggregation { cities, empty }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureParams {
    pub threshold: f64,
    pub idw: IdwParams,
    /// Exceedance share above which a month counts as exposed.
    pub exposed_month_cut: f64,
}

impl Default for ExposureParams {
    fn default() -> Self {
        ExposureParams {
            threshold: DEFAULT_THRESHOLD,
            idw: IdwParams::default(),
            exposed_month_cut: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureSeries {
    pub subdistrict_id: String,
    pub city_id: String,
    pub daily: Vec<Option<f64>>,
    pub exposed_days: u32,
    pub intensity: f64,
    /// Intensity per age band, in [`AgeGroup::BANDS`] order.
    pub group_intensity: [f64; 3],
    pub monthly: Vec<MonthlyCount>,
    pub exposed_months: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureReport {
    pub dates: Vec<NaiveDate>,
    /// Days where no estimate exists anywhere.
    pub missing_days: Vec<NaiveDate>,
    pub series: Vec<ExposureSeries>,
    pub cities: CityAggregation,
}

/// Runs interpolation, exceedance counting and aggregation over the full
/// date span of the readings (and supplement, when given).
pub fn estimate_exposure(
    readings: &[StationReading],
    subdistricts: &[Subdistrict],
    supplement: Option<&SupplementGrid>,
    params: &ExposureParams,
    expected_cities: &[String],
) -> Result<ExposureReport> {
    params.idw.validate()?;
    if !(params.threshold > 0.0) {
        return Err(Error::param("threshold", format!("{} must be > 0", params.threshold)));
    }
    for s in subdistricts {
        s.validate()?;
    }
    let mut by_day: BTreeMap<NaiveDate, Vec<&StationReading>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for r in readings {
        if !(r.pm25 >= 0.0) {
            return Err(Error::param("pm25", format!("{} on {}: {} must be >= 0", r.station_id, r.date, r.pm25)));
        }
        if !seen.insert((r.station_id.as_str(), r.date)) {
            return Err(Error::DuplicateReading {
                station: r.station_id.clone(),
                date: r.date.to_string(),
            });
        }
        by_day.entry(r.date).or_default().push(r);
    }
    let first = by_day
        .keys()
        .next()
        .copied()
        .into_iter()
        .chain(supplement.and_then(|s| s.dates().next()))
        .min();
    let last = by_day
        .keys()
        .next_back()
        .copied()
        .into_iter()
        .chain(supplement.and_then(|s| s.dates().last()))
        .max();
    let dates: Vec<NaiveDate> = match (first, last) {
        (Some(a), Some(b)) => a.iter_days().take_while(|d| *d <= b).collect(),
        _ => Vec::new(),
    };
    let queries: Vec<Point<f64>> = subdistricts.iter().map(|s| s.location).collect();
    let empty: Vec<&StationReading> = Vec::new();
    let surfaces: Vec<Vec<Option<f64>>> = dates
        .par_iter()
        .map(|d| {
            let primary = interpolate_refs(by_day.get(d).unwrap_or(&empty), &queries, &params.idw);
            match supplement {
                Some(grid) => merge_supplement(&primary, &grid.sample(*d, &queries)).expect("aligned"),
                None => primary,
            }
        })
        .collect();
    let missing_days = dates
        .iter()
        .zip(&surfaces)
        .filter(|(_, s)| s.iter().all(Option::is_none))
        .map(|(d, _)| *d)
        .collect();

    let series = subdistricts
        .par_iter()
        .enumerate()
        .map(|(j, s)| {
            let daily: Vec<Option<f64>> = surfaces.iter().map(|day| day[j]).collect();
            let days = exposed_days(&daily, params.threshold)?;
            let monthly = monthly_exceedance(&dates, &daily, params.threshold)?;
            Ok(ExposureSeries {
                subdistrict_id: s.id.clone(),
                city_id: s.city_id.clone(),
                exposed_days: days,
                intensity: exposure_intensity(s, days, AgeGroup::Total),
                group_intensity: AgeGroup::BANDS.map(|g| exposure_intensity(s, days, g)),
                exposed_months: exposed_months(&monthly, params.exposed_month_cut),
                monthly,
                daily,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cities = aggregate_cities(&series, expected_cities);
    Ok(ExposureReport {
        dates,
        missing_days,
        series,
        cities,
    })
}
