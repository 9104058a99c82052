//! Synthetic "toy nation": three 3 km cities with street grids, random POIs,
//! two air-quality stations and every table the pipeline reads.
//!
//! The road grids mix classes and carry deliberate defects — short dangling
//! stubs, one long stub, and a street interrupted by a 15 m gap — so that
//! trimming and extension both have work to do. Calibration labels are drawn
//! from a known logistic model on top of the identified map.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use geo::{polygon, Coord, LineString, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{Inputs, PipelineConfig};
use crate::error::Result;
use crate::expansion_sim::logistic::sigmoid;
use crate::expansion_sim::{
    CityRecord, FeatureContext, ScenarioRules, SizeClass, StateRecord, FEATURE_DENSITY, FEATURE_DISTANCE,
    FEATURE_NEIGHBOR,
};
use crate::exposure::{StationReading, Subdistrict};
use crate::io;
use crate::pipeline::{Overrides, Pipeline, Stage, IDENTIFIED};
use crate::poi_density::PoiPoint;
use crate::road_parcel::{AdminUnit, LandState, RoadLayer, RoadSegment, WidthTable};
use crate::urban_identify::build_neighbor_graph;

pub const TOY_CRS: &str = "EPSG:32650";
pub const CITY_SIZE_M: f64 = 3000.0;
const BLOCK_M: f64 = 375.0;
const CITY_GAP_M: f64 = 1000.0;
pub const START_DATE: (i32, u32, u32) = (2013, 4, 8);
pub const DAYS: usize = 365;

/// Logistic model the calibration labels are drawn from: intercept, density,
/// neighbor share, distance to center (km).
pub const TRUE_WEIGHTS: [f64; 4] = [-2.0, 3.0, 2.5, -0.8];

#[derive(Debug, Clone)]
pub struct ToyCity {
    pub id: &'static str,
    pub pois: usize,
    pub identify_target_km2: f64,
    pub cagr: f64,
    pub in_agglomeration: bool,
    pub size_class: SizeClass,
}

pub fn toy_cities() -> Vec<ToyCity> {
    vec![
        ToyCity {
            id: "C1",
            pois: 900,
            identify_target_km2: 2.5,
            cagr: 0.05,
            in_agglomeration: true,
            size_class: SizeClass::Large,
        },
        ToyCity {
            id: "C2",
            pois: 600,
            identify_target_km2: 1.8,
            cagr: 0.04,
            in_agglomeration: true,
            size_class: SizeClass::Medium,
        },
        ToyCity {
            id: "C3",
            pois: 300,
            identify_target_km2: 1.0,
            cagr: 0.06,
            in_agglomeration: false,
            size_class: SizeClass::Small,
        },
    ]
}

fn origin(i: usize) -> Coord<f64> {
    Coord {
        x: i as f64 * (CITY_SIZE_M + CITY_GAP_M),
        y: 0.0,
    }
}

fn line(points: &[(f64, f64)]) -> LineString<f64> {
    LineString::from(points.to_vec())
}

/// Street grid of one city, split into major (classes 1–2) and minor layers.
fn city_roads(o: Coord<f64>, rng: &mut ChaCha8Rng) -> (Vec<(LineString<f64>, u32)>, Vec<(LineString<f64>, u32)>) {
    let n = (CITY_SIZE_M / BLOCK_M).round() as usize;
    let lo = -100.0;
    let hi = CITY_SIZE_M + 100.0;
    let mut major = Vec::new();
    let mut minor = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..=n {
        let jitter = |rng: &mut ChaCha8Rng| if k == 0 || k == n { 0.0 } else { rng.random_range(-30.0..30.0) };
        xs.push(k as f64 * BLOCK_M + jitter(rng));
        ys.push(k as f64 * BLOCK_M + jitter(rng));
    }
    let class_of = |k: usize| match k {
        _ if k == 0 || k == n => 2,
        _ if k == n / 2 => 1,
        _ if k % 2 == 0 => 3,
        _ => 4,
    };
    for k in 0..=n {
        let c = class_of(k);
        let target = if c <= 2 { &mut major } else { &mut minor };
        let x = o.x + xs[k];
        if k == 3 {
            // A vertical street interrupted mid-block by a 15 m gap.
            let gap_at = o.y + (ys[4] + ys[5]) / 2.0;
            target.push((line(&[(x, o.y + lo), (x, gap_at - 7.5)]), c));
            target.push((line(&[(x, gap_at + 7.5), (x, o.y + hi)]), c));
        } else {
            target.push((line(&[(x, o.y + lo), (x, o.y + hi)]), c));
        }
        let target = if c <= 2 { &mut major } else { &mut minor };
        let y = o.y + ys[k];
        target.push((line(&[(o.x + lo, y), (o.x + hi, y)]), c));
    }
    // Short dead ends that trimming removes, and one long one it keeps.
    for s in 0..4 {
        let bx = 1 + (s * 2) % (n - 1);
        let by = 1 + (s * 3) % (n - 1);
        let x0 = o.x + xs[bx];
        let y0 = o.y + (ys[by] + ys[by + 1]) / 2.0;
        let len: f64 = if s == 3 { 260.0 } else { rng.random_range(60.0..150.0) };
        minor.push((line(&[(x0, y0), (x0 + len.min((xs[bx + 1] - xs[bx]) - 40.0), y0)]), 5));
    }
    (major, minor)
}

fn pm25_series(rng: &mut ChaCha8Rng, scale: f64) -> Vec<Option<f64>> {
    let noise = Normal::new(0.0, 22.0).expect("valid sigma");
    let start = NaiveDate::from_ymd_opt(START_DATE.0, START_DATE.1, START_DATE.2).expect("valid date");
    (0..DAYS)
        .map(|d| {
            let date = start + chrono::Duration::days(d as i64);
            let phase = 2.0 * std::f64::consts::PI * (date.ordinal0() as f64 - 15.0) / 365.0;
            let v = scale * (68.0 + 42.0 * phase.cos()) + noise.sample(rng);
            if rng.random::<f64>() < 0.02 {
                None
            } else {
                Some((v.max(3.0) * 10.0).round() / 10.0)
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ToyNation {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub parcels: usize,
    pub cities: Vec<CityRecord>,
}

/// Writes the fixture into `dir` (created if needed). Output is a pure
/// function of `seed`.
pub fn write_toy_nation(dir: &Path, seed: u64) -> Result<ToyNation> {
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cities = toy_cities();

    let mut major = RoadLayer {
        crs: Some(TOY_CRS.into()),
        segments: vec![],
    };
    let mut minor = major.clone();
    let mut admins = Vec::new();
    let mut pois = Vec::new();
    let mut subdistricts = Vec::new();
    let scatter = Normal::new(0.0, 550.0).expect("valid sigma");
    for (i, c) in cities.iter().enumerate() {
        let o = origin(i);
        let (maj, min) = city_roads(o, &mut rng);
        for (ls, class) in maj {
            major.segments.push(RoadSegment::new(major.segments.len() as u64, ls, class)?);
        }
        for (ls, class) in min {
            minor.segments.push(RoadSegment::new(minor.segments.len() as u64, ls, class)?);
        }
        let s = CITY_SIZE_M;
        admins.push(AdminUnit::new(
            c.id,
            format!("Toy city {}", &c.id[1..]),
            polygon![(x: o.x, y: o.y), (x: o.x + s, y: o.y), (x: o.x + s, y: o.y + s), (x: o.x, y: o.y + s)],
        )?);
        // Activity clusters around the center with a thin uniform background.
        for k in 0..c.pois {
            let (x, y) = if k % 5 == 0 {
                (rng.random_range(0.0..s), rng.random_range(0.0..s))
            } else {
                (
                    (s / 2.0 + scatter.sample(&mut rng)).clamp(1.0, s - 1.0),
                    (s / 2.0 + scatter.sample(&mut rng)).clamp(1.0, s - 1.0),
                )
            };
            pois.push(PoiPoint {
                id: format!("{}-{k:04}", c.id),
                location: Point::new(((o.x + x) * 100.0).round() / 100.0, ((o.y + y) * 100.0).round() / 100.0),
                category: ["retail", "food", "office", "school", "health"][k % 5].into(),
            });
        }
        for q in 0..4 {
            let cx = o.x + s * (0.25 + 0.5 * (q % 2) as f64);
            let cy = o.y + s * (0.25 + 0.5 * (q / 2) as f64);
            let density = (rng.random_range(2000.0..15000.0f64)).round();
            let d0 = (density * 0.15).round();
            let d65 = (density * 0.13).round();
            subdistricts.push(Subdistrict {
                id: format!("{}-S{q}", c.id),
                location: Point::new(cx, cy),
                polygon: None,
                pop_density: density,
                d0_14: d0,
                d15_64: density - d0 - d65,
                d65p: d65,
                city_id: c.id.into(),
            });
        }
    }

    let start = NaiveDate::from_ymd_opt(START_DATE.0, START_DATE.1, START_DATE.2).expect("valid date");
    let mut readings = Vec::new();
    for (sid, at, scale) in [("ST1", origin(0), 1.1), ("ST2", origin(2), 0.85)] {
        let series = pm25_series(&mut rng, scale);
        for (d, v) in series.into_iter().enumerate() {
            if let Some(pm25) = v {
                readings.push(StationReading {
                    station_id: sid.into(),
                    location: Point::new(at.x + 1500.0, at.y + 1500.0),
                    date: start + chrono::Duration::days(d as i64),
                    pm25,
                });
            }
        }
    }

    let records: Vec<CityRecord> = cities
        .iter()
        .map(|c| CityRecord {
            city_id: c.id.into(),
            existing_urban_km2: c.identify_target_km2,
            historical_cagr: c.cagr,
            in_agglomeration: c.in_agglomeration,
            size_class: c.size_class,
        })
        .collect();
    let targets: BTreeMap<String, f64> = cities.iter().map(|c| (c.id.to_string(), c.identify_target_km2)).collect();

    io::save_roads(&dir.join("roads_major.geojson"), &major)?;
    io::save_roads(&dir.join("roads_minor.geojson"), &minor)?;
    io::save_admin(&dir.join("admin.geojson"), &admins, Some(TOY_CRS))?;
    io::save_pois_csv(&dir.join("pois.csv"), &pois)?;
    io::save_targets(&dir.join("targets.csv"), &targets)?;
    io::save_cities(&dir.join("cities.csv"), &records)?;
    io::save_stations(&dir.join("stations.csv"), &readings)?;
    io::save_subdistricts_csv(&dir.join("subdistricts.csv"), &subdistricts)?;
    io::save_width_table(&dir.join("widths.csv"), &WidthTable::default())?;
    io::save_scenario_rules(&dir.join("scenarios.toml"), &ScenarioRules::default())?;

    // Run the first three stages in a scratch directory to get parcel ids
    // and the identified map the calibration labels start from.
    let work = dir.join(".work");
    let inputs = Inputs {
        roads: vec![dir.join("roads_major.geojson"), dir.join("roads_minor.geojson")],
        admin: dir.join("admin.geojson"),
        pois: dir.join("pois.csv"),
        targets: dir.join("targets.csv"),
        cities: dir.join("cities.csv"),
        stations: dir.join("stations.csv"),
        subdistricts: dir.join("subdistricts.csv"),
        supplement: None,
        width_table: Some(dir.join("widths.csv")),
        scenarios: Some(dir.join("scenarios.toml")),
        weights: None,
        calibration_t0: None,
        calibration_t1: None,
    };
    let mut cfg = PipelineConfig::from_toml(&config_text())?;
    cfg.inputs = inputs;
    cfg.out_dir = work.clone();
    let pipeline = Pipeline::new(cfg, &Overrides::default())?;
    for stage in [Stage::Parcels, Stage::Density, Stage::Identify] {
        pipeline.run(stage)?;
    }
    let parcels = io::load_parcels(&work.join(IDENTIFIED))?;
    std::fs::remove_dir_all(&work).map_err(|e| crate::Error::io(&work, e))?;

    let t0: Vec<LandState> = parcels.iter().map(|p| p.state).collect();
    let graph = build_neighbor_graph(&parcels, pipeline.config.identify.contact_distance_m)?;
    let ctx = FeatureContext::new(&parcels, &graph, &t0);
    let names = [FEATURE_DENSITY, FEATURE_NEIGHBOR, FEATURE_DISTANCE];
    let all: Vec<usize> = (0..parcels.len()).collect();
    let rows = ctx.rows(&names, &all, &t0)?;
    let t1: Vec<LandState> = t0
        .iter()
        .zip(&rows)
        .map(|(s, x)| {
            if s.is_urban() {
                return *s;
            }
            let eta = TRUE_WEIGHTS[0] + x.iter().zip(&TRUE_WEIGHTS[1..]).map(|(a, b)| a * b).sum::<f64>();
            if rng.random::<f64>() < sigmoid(eta) {
                LandState::Urban
            } else {
                LandState::NonUrban
            }
        })
        .collect();
    let record = |states: &[LandState]| -> Vec<StateRecord> {
        parcels
            .iter()
            .zip(states)
            .map(|(p, s)| StateRecord {
                id: p.id,
                state: *s,
                area_km2: p.area_km2,
            })
            .collect()
    };
    io::save_states(&dir.join("calibration_t0.csv"), &record(&t0))?;
    io::save_states(&dir.join("calibration_t1.csv"), &record(&t1))?;

    let config = dir.join("config.toml");
    io::write_atomic(&config, config_text().as_bytes())?;
    Ok(ToyNation {
        dir: dir.to_path_buf(),
        config,
        parcels: parcels.len(),
        cities: records,
    })
}

fn config_text() -> String {
    format!(
        r#"# Toy nation: three 3 km cities, two PM2.5 stations.
crs = "{TOY_CRS}"
out_dir = "out"

[inputs]
roads = ["roads_major.geojson", "roads_minor.geojson"]
admin = "admin.geojson"
pois = "pois.csv"
targets = "targets.csv"
cities = "cities.csv"
stations = "stations.csv"
subdistricts = "subdistricts.csv"
width_table = "widths.csv"
scenarios = "scenarios.toml"
calibration_t0 = "calibration_t0.csv"
calibration_t1 = "calibration_t1.csv"

[aicp]
trim_threshold_m = 200.0
extension_m = 20.0
min_parcel_area_m2 = 1000.0

[identify]
w_density = 0.7
w_neighbor = 0.3
batch_fraction = 0.01

[simulate]
scenario = "bau"
seed = 42
gamma = 0.1
quota_fraction = 0.05
horizon_years = 5

[exposure]
threshold = 75.0
unit = "ug/m3"
k = 8
power = 2.0
"#
    )
}

/// The committed copy of the fixture.
pub fn bundled_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("toy_nation")
}

pub const BUNDLED_SEED: u64 = 20130408;
