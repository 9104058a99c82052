//! Acceptance checks, one line per criterion. Every expected value comes from
//! an oracle written here, not from the library under test.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use bigmodel_core::expansion_sim::logistic::{log_likelihood, log_likelihood_gradient};
use bigmodel_core::expansion_sim::{
    compute_city_targets, fit_logistic, simulate_expansion, CalibratedWeights, FitOptions, Scenario,
    ScenarioConfig, SimulateConfig, FEATURE_DENSITY, FEATURE_DISTANCE, FEATURE_INTERCEPT, FEATURE_NEIGHBOR,
};
use bigmodel_core::exposure::{
    exposed_days, exposure_intensity, interpolate_daily, monthly_exceedance, AgeGroup, IdwParams, StationReading,
    Subdistrict,
};
use bigmodel_core::fixture::bundled_dir;
use bigmodel_core::io;
use bigmodel_core::pipeline::{self, Overrides, Pipeline, Stage};
use bigmodel_core::poi_density::{standardize_density, DensityStats};
use bigmodel_core::road_parcel::{
    assign_parcel_ids, extend_ends, run_aicp, trim_dangles, AdminUnit, AicpParams, RoadLayer, RoadSegment,
};
use bigmodel_core::urban_identify::{build_neighbor_graph, identify_urban, IdentifyConfig};
use bigmodel_core::{LandState, Parcel};
use chrono::NaiveDate;
use geo::{coord, Area, Coord, LineString, Point, Rect};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rect(x0: f64, y0: f64, w: f64, h: f64) -> geo::Polygon<f64> {
    Rect::new(coord! { x: x0, y: y0 }, coord! { x: x0 + w, y: y0 + h }).to_polygon()
}

// ---------------------------------------------------------------- criterion 1

fn through_street_grid() -> Check {
    let start = Instant::now();
    let spacing = 200.0;
    let overhang = 50.0;
    let mut worst: f64 = 0.0;
    for n in 2..=6usize {
        for m in 2..=6usize {
            let width = (m - 1) as f64 * spacing;
            let height = (n - 1) as f64 * spacing;
            let mut segments = Vec::new();
            for i in 0..n {
                let y = i as f64 * spacing;
                let line = LineString::from(vec![(-overhang, y), (width + overhang, y)]);
                segments.push(RoadSegment::new(segments.len() as u64, line, 3).map_err(err)?);
            }
            for j in 0..m {
                let x = j as f64 * spacing;
                let line = LineString::from(vec![(x, -overhang), (x, height + overhang)]);
                segments.push(RoadSegment::new(segments.len() as u64, line, 3).map_err(err)?);
            }
            let admin = AdminUnit::new("A", "A", rect(0.0, 0.0, width, height)).map_err(err)?;
            let layer = RoadLayer {
                crs: Some("EPSG:32650".into()),
                segments,
            };
            let out = run_aicp(&[layer], &[admin], &AicpParams::default()).map_err(err)?;
            let expected = (n - 1) * (m - 1);
            ensure!(
                out.parcels.len() == expected,
                "{n}x{m} streets: {} parcels, expected {expected}",
                out.parcels.len()
            );
            let r = out.delineations[0].conservation_residual();
            ensure!(r <= 1e-6, "{n}x{m} streets: conservation residual {r:e}");
            worst = worst.max(r);
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("25 grids, worst residual {worst:.1e}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- criterion 2

fn dist_point_segment(p: Coord<f64>, a: Coord<f64>, b: Coord<f64>) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.x - a.x - t * dx).hypot(p.y - a.y - t * dy)
}

fn dist_point_line(p: Coord<f64>, line: &LineString<f64>) -> f64 {
    line.0
        .windows(2)
        .map(|w| dist_point_segment(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

fn length(line: &LineString<f64>) -> f64 {
    line.0.windows(2).map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y)).sum()
}

/// An endpoint is shared when another segment passes within 1 cm of it.
fn free_ends_oracle(segments: &[RoadSegment]) -> Vec<[bool; 2]> {
    segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let c = &s.geometry.0;
            [c[0], c[c.len() - 1]].map(|p| {
                segments
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .all(|(_, t)| dist_point_line(p, &t.geometry) > 0.01)
            })
        })
        .collect()
}

fn point_on(line: &LineString<f64>, rng: &mut ChaCha8Rng) -> Coord<f64> {
    let k = rng.random_range(0..line.0.len() - 1);
    let (a, b) = (line.0[k], line.0[k + 1]);
    let t: f64 = rng.random_range(0.05..0.95);
    coord! { x: a.x + t * (b.x - a.x), y: a.y + t * (b.y - a.y) }
}

fn wiggly(from: Coord<f64>, dir: f64, len: f64, parts: usize, rng: &mut ChaCha8Rng) -> LineString<f64> {
    let mut pts = vec![from];
    let step = len / parts as f64;
    let mut heading = dir;
    for _ in 0..parts {
        let last = *pts.last().unwrap();
        pts.push(coord! { x: last.x + step * heading.cos(), y: last.y + step * heading.sin() });
        heading += rng.random_range(-0.4..0.4);
    }
    LineString::new(pts)
}

fn random_network(rng: &mut ChaCha8Rng) -> Vec<RoadSegment> {
    let extent = 2000.0;
    let mut lines: Vec<LineString<f64>> = Vec::new();
    for _ in 0..rng.random_range(2..5) {
        let y = rng.random_range(0.0..extent);
        let pts: Vec<(f64, f64)> = (0..5)
            .map(|k| (k as f64 * extent / 4.0, y + rng.random_range(-20.0..20.0)))
            .collect();
        lines.push(LineString::from(pts));
    }
    for _ in 0..rng.random_range(2..5) {
        let x = rng.random_range(0.0..extent);
        let pts: Vec<(f64, f64)> = (0..5)
            .map(|k| (x + rng.random_range(-20.0..20.0), k as f64 * extent / 4.0))
            .collect();
        lines.push(LineString::from(pts));
    }
    // Stubs hang off existing lines; some continue from the previous stub's
    // tip so trimming has to cascade.
    let mut prev_tip: Option<Coord<f64>> = None;
    for _ in 0..rng.random_range(5..30) {
        let from = match prev_tip {
            Some(tip) if rng.random_bool(0.4) => tip,
            _ => {
                let host = lines[rng.random_range(0..lines.len())].clone();
                point_on(&host, rng)
            }
        };
        let dir = rng.random_range(0.0..std::f64::consts::TAU);
        let len = rng.random_range(5.0..400.0);
        let parts = rng.random_range(1..4);
        let stub = wiggly(from, dir, len, parts, rng);
        prev_tip = stub.0.last().copied();
        lines.push(stub);
    }
    for _ in 0..rng.random_range(0..4) {
        let from = coord! { x: rng.random_range(0.0..extent), y: rng.random_range(0.0..extent) };
        let len = rng.random_range(10.0..500.0);
        lines.push(wiggly(from, rng.random_range(0.0..6.28), len, 2, rng));
    }
    lines
        .into_iter()
        .enumerate()
        .map(|(i, l)| RoadSegment::new(i as u64, l, 4).unwrap())
        .collect()
}

fn dangle_trimming() -> Check {
    let threshold = 200.0;
    let extension = 20.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut removed, mut extended_ends) = (0usize, 0usize);
    for net in 0..500 {
        let segments = random_network(&mut rng);
        let trimmed = trim_dangles(&segments, threshold).map_err(err)?;
        for id in &trimmed.removed {
            let s = segments.iter().find(|s| s.id == *id).unwrap();
            ensure!(length(&s.geometry) < threshold, "network {net}: removed segment {id} is long");
        }
        removed += trimmed.removed.len();
        let free = free_ends_oracle(&trimmed.segments);
        for (s, f) in trimmed.segments.iter().zip(&free) {
            let len = length(&s.geometry);
            ensure!(
                !(len < threshold && (f[0] || f[1])),
                "network {net}: segment {} ({len:.1} m) still dangles",
                s.id
            );
        }
        let extended = extend_ends(&trimmed.segments, extension).map_err(err)?;
        ensure!(extended.len() == trimmed.segments.len(), "network {net}: extension changed segment count");
        for ((before, after), f) in trimmed.segments.iter().zip(&extended).zip(&free) {
            let ends = f.iter().filter(|x| **x).count();
            let grown = length(&after.geometry) - length(&before.geometry);
            let want = extension * ends as f64;
            ensure!(
                (grown - want).abs() <= 1e-9,
                "network {net}: segment {} grew {grown} m, expected {want} m",
                before.id
            );
            extended_ends += ends;
        }
    }
    Ok(format!("500 networks, {removed} segments trimmed, {extended_ends} ends extended"))
}

// ---------------------------------------------------------------- criterion 3

fn density_standardization() -> Check {
    let stats = DensityStats::new(1e4).map_err(err)?;
    for (raw, want) in [(1e4, 1.0), (1.0, 0.0), (100.0, 0.5)] {
        let got = standardize_density(raw, &stats).map_err(err)?;
        ensure!((got - want).abs() <= 1e-12, "raw {raw}: {got}, expected {want}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let max = 10f64.powf(rng.random_range(0.2..7.0));
        let stats = DensityStats::new(max).map_err(err)?;
        let mut raws: Vec<f64> = (0..50).map(|_| 10f64.powf(rng.random_range(0.0..max.log10()))).collect();
        raws.push(1.0);
        raws.push(max);
        raws.sort_by(f64::total_cmp);
        let mut last = -1.0;
        for &r in &raws {
            let s = standardize_density(r, &stats).map_err(err)?;
            ensure!((0.0..=1.0).contains(&s), "max {max}, raw {r}: {s} out of [0, 1]");
            ensure!(s >= last, "max {max}: not monotone at raw {r}");
            last = s;
            for (name, v) in [("log10", r.log10() / max.log10()), ("log2", r.log2() / max.log2())] {
                ensure!((s - v).abs() <= 1e-12, "max {max}, raw {r}: {s} vs {name} ratio {v}");
            }
        }
    }
    Ok("exact values and 1000 random regions".into())
}

// ---------------------------------------------------------------- criterion 4

/// Walks parcels by descending density (ties by id) until the target is met,
/// stopping within 1e-12 relative of the target.
fn greedy_oracle(parcels: &[Parcel], target: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..parcels.len()).collect();
    order.sort_by(|&a, &b| {
        parcels[b]
            .density_std
            .total_cmp(&parcels[a].density_std)
            .then(parcels[a].id.cmp(&parcels[b].id))
    });
    let mut urban = vec![false; parcels.len()];
    let mut area = 0.0;
    for i in order {
        if area >= target * (1.0 - 1e-12) {
            break;
        }
        urban[i] = true;
        area += parcels[i].area_km2;
    }
    urban
}

fn identify_stopping() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..300 {
        let n = rng.random_range(1..=20);
        let mut parcels: Vec<Parcel> = (0..n)
            .map(|k| {
                let w = rng.random_range(50.0..500.0);
                Parcel::new(rect(k as f64 * 600.0, 0.0, w, 100.0), "A")
            })
            .collect();
        assign_parcel_ids(&mut parcels);
        let coarse = rng.random_bool(0.5);
        for p in &mut parcels {
            let d: f64 = rng.random();
            p.density_std = if coarse { (d * 4.0).round() / 4.0 } else { d };
        }
        let total: f64 = parcels.iter().map(|p| p.area_km2).sum();
        let target = if rng.random_bool(0.1) { total } else { rng.random_range(0.0..total) };
        let graph = build_neighbor_graph(&parcels, 60.0).map_err(err)?;
        let config = IdentifyConfig {
            w_density: 1.0,
            w_neighbor: 0.0,
            batch_fraction: [0.01, 0.1, 0.5, 1.0][rng.random_range(0..4)],
            targets: BTreeMap::from([("A".to_string(), target)]),
            ..IdentifyConfig::default()
        };
        let out = identify_urban(&parcels, &graph, &config).map_err(err)?;
        let got: Vec<bool> = out.states.iter().map(|s| s.is_urban()).collect();
        ensure!(got == greedy_oracle(&parcels, target), "trial {trial}: differs from greedy ranking");
    }

    let mut parcels = Vec::new();
    for (c, city) in ["A", "B"].iter().enumerate() {
        for r in 0..15 {
            for k in 0..10 {
                let side = rng.random_range(60.0..140.0);
                let x = c as f64 * 5000.0 + k as f64 * 160.0;
                parcels.push(Parcel::new(rect(x, r as f64 * 160.0, side, side), *city));
            }
        }
    }
    assign_parcel_ids(&mut parcels);
    for p in &mut parcels {
        p.density_std = rng.random();
    }
    let graph = build_neighbor_graph(&parcels, 60.0).map_err(err)?;
    let available: BTreeMap<&str, f64> = ["A", "B"]
        .iter()
        .map(|c| (*c, parcels.iter().filter(|p| p.admin_id == *c).map(|p| p.area_km2).sum()))
        .collect();
    let mut worst: f64 = 0.0;
    for run in 0..1000 {
        let targets: BTreeMap<String, f64> = available
            .iter()
            .map(|(c, a)| (c.to_string(), rng.random_range(0.0..*a)))
            .collect();
        let config = IdentifyConfig {
            batch_fraction: rng.random_range(0.005..0.5),
            targets: targets.clone(),
            ..IdentifyConfig::default()
        };
        let out = identify_urban(&parcels, &graph, &config).map_err(err)?;
        for log in &out.logs {
            let target = targets[&log.city_id];
            let urban: f64 = parcels
                .iter()
                .zip(&out.states)
                .filter(|(p, s)| p.admin_id == log.city_id && s.is_urban())
                .map(|(p, _)| p.area_km2)
                .sum();
            ensure!(
                (urban - log.achieved_km2).abs() <= 1e-12,
                "run {run}: log says {} km² urban, map has {urban}",
                log.achieved_km2
            );
            let over = urban - target;
            ensure!(over >= -1e-12 * target, "run {run} {}: short by {}", log.city_id, -over);
            ensure!(
                over <= log.last_flipped_km2 + 1e-12,
                "run {run} {}: overshoot {over} above last parcel {}",
                log.city_id,
                log.last_flipped_km2
            );
            worst = worst.max(over / log.last_flipped_km2.max(f64::MIN_POSITIVE));
        }
    }
    Ok(format!("300 greedy cases, 1000 targets, worst overshoot {worst:.3} of last parcel"))
}

// ---------------------------------------------------------------- criterion 5

fn logistic_recovery() -> Check {
    let start = Instant::now();
    let truth = [-1.5, 2.0, -1.5, 1.5];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut rows = Vec::with_capacity(5000);
    let mut y = Vec::with_capacity(5000);
    for _ in 0..5000 {
        let x: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let eta = truth[0] + truth[1] * x[0] + truth[2] * x[1] + truth[3] * x[2];
        y.push(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()));
        rows.push(x);
    }

    for probe in [vec![0.0; 4], vec![0.3, -0.7, 1.1, 0.2], truth.to_vec()] {
        let g = log_likelihood_gradient(&probe, &rows, &y);
        let h = 1e-5;
        for j in 0..4 {
            let mut up = probe.clone();
            let mut down = probe.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (log_likelihood(&up, &rows, &y) - log_likelihood(&down, &rows, &y)) / (2.0 * h);
            let scale = g[j].abs().max(1e-3);
            ensure!(
                (fd - g[j]).abs() <= 1e-6 * scale,
                "gradient {j} at {probe:?}: analytic {} vs finite difference {fd}",
                g[j]
            );
        }
    }

    let fit = fit_logistic(&rows, &y, &FitOptions::default()).map_err(err)?;
    ensure!(fit.converged, "did not converge: gradient norm {:e}", fit.gradient_norm);
    let g = log_likelihood_gradient(&fit.coefficients, &rows, &y);
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    ensure!(norm <= 1e-8, "gradient norm {norm:e}");
    for (j, (b, t)) in fit.coefficients.iter().zip(truth).enumerate() {
        ensure!(((b - t) / t).abs() <= 0.10, "coefficient {j}: {b:.4} vs truth {t}");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "coefficients {:?}, gradient norm {norm:.1e}, {elapsed:.2?}",
        fit.coefficients.iter().map(|b| (b * 1000.0).round() / 1000.0).collect::<Vec<_>>()
    ))
}

// ---------------------------------------------------------------- criterion 6

fn scenario_budgets() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let config = bundled_dir().join("config.toml");
    let cities = io::load_cities(&bundled_dir().join("cities.csv")).map_err(err)?;
    let rules = io::load_scenario_rules(&bundled_dir().join("scenarios.toml")).map_err(err)?;

    let mut achieved: BTreeMap<(Scenario, String), f64> = BTreeMap::new();
    for scenario in [Scenario::Bau, Scenario::Uao] {
        let out = dir.path().join(scenario.to_string());
        let overrides = Overrides {
            scenario: Some(scenario),
            out_dir: Some(out.clone()),
            ..Overrides::default()
        };
        let mut p = Pipeline::from_file(&config, &overrides).map_err(err)?;
        p.config.simulate.gamma = 0.0;
        for stage in [Stage::Parcels, Stage::Density, Stage::Identify, Stage::Calibrate, Stage::Simulate] {
            p.run(stage).map_err(err)?;
        }

        let sc = ScenarioConfig {
            rules: rules.clone(),
            ..ScenarioConfig::new(scenario)
        };
        let targets = compute_city_targets(&cities, &sc).map_err(err)?;
        for c in &cities {
            let m = match (scenario, c.in_agglomeration) {
                (Scenario::Bau, _) => 1.0,
                (_, true) => 1.5,
                (_, false) => 0.8,
            };
            let want = c.existing_urban_km2 * ((1.0 + c.historical_cagr * m).powi(5) - 1.0);
            let got = targets[&c.city_id];
            ensure!(
                (got - want).abs() <= 1e-9,
                "{scenario} {}: target {got}, closed form {want}",
                c.city_id
            );
        }

        let parcels = io::load_parcels(&out.join(pipeline::IDENTIFIED)).map_err(err)?;
        let weights = io::load_weights(&out.join(pipeline::WEIGHTS)).map_err(err)?;
        let graph = build_neighbor_graph(&parcels, p.config.identify.contact_distance_m).map_err(err)?;
        let sim_config = SimulateConfig {
            gamma: 0.0,
            quota_fraction: p.config.simulate.quota_fraction,
        };
        let sim = simulate_expansion(&parcels, &graph, &weights, &targets, 42, &sim_config).map_err(err)?;
        let summary = io::load_simulate_summary(&out.join(pipeline::SIMULATE_SUMMARY)).map_err(err)?;
        let area: BTreeMap<_, _> = parcels.iter().map(|p| (p.id, p.area_km2)).collect();
        for c in &sim.cities {
            let row = summary.iter().find(|r| r.city_id == c.city_id).ok_or("city missing from summary")?;
            ensure!(
                (row.achieved_km2 - c.achieved_km2).abs() <= 1e-12,
                "{scenario} {}: pipeline achieved {} vs direct run {}",
                c.city_id,
                row.achieved_km2,
                c.achieved_km2
            );
            let last = c.flips.last().map(|f| area[&f.parcel]).unwrap_or(0.0);
            let over = c.achieved_km2 - c.target_km2;
            ensure!(c.shortfall_km2 == 0.0, "{scenario} {}: shortfall {}", c.city_id, c.shortfall_km2);
            ensure!(
                over >= -1e-12 * c.target_km2 && over <= last + 1e-12,
                "{scenario} {}: overshoot {over} outside [0, {last}]",
                c.city_id
            );
            achieved.insert((scenario, c.city_id.clone()), c.achieved_km2);
        }
    }
    let mut lines = Vec::new();
    for c in cities.iter().filter(|c| c.in_agglomeration) {
        let bau = achieved[&(Scenario::Bau, c.city_id.clone())];
        let uao = achieved[&(Scenario::Uao, c.city_id.clone())];
        ensure!(uao >= bau, "{}: UAO {uao} below BAU {bau}", c.city_id);
        lines.push(format!("{} {bau:.3}->{uao:.3}", c.city_id));
    }
    Ok(format!("targets match closed form; agglomeration km² BAU->UAO {}", lines.join(", ")))
}

// ---------------------------------------------------------------- criterion 7

fn run_cli(out: &Path, jobs: &str) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_bigmodel"))
        .env("RUST_LOG", "warn")
        .arg("all")
        .arg("--config")
        .arg(bundled_dir().join("config.toml"))
        .args(["--seed", "42", "--jobs", jobs])
        .arg("--out")
        .arg(out)
        .status()
        .map_err(err)?;
    ensure!(status.success(), "--jobs {jobs} exited with {status}");
    Ok(())
}

fn artifacts(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(err)? {
        let path = entry.map_err(err)?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if !name.ends_with(".manifest.json") {
            files.insert(name, std::fs::read(&path).map_err(err)?);
        }
    }
    Ok(files)
}

fn thread_count_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let one = dir.path().join("jobs1");
    let eight = dir.path().join("jobs8");
    run_cli(&one, "1")?;
    run_cli(&eight, "8")?;
    let a = artifacts(&one)?;
    let b = artifacts(&eight)?;
    ensure!(
        a.keys().eq(b.keys()),
        "artifact sets differ: {:?} vs {:?}",
        a.keys().collect::<Vec<_>>(),
        b.keys().collect::<Vec<_>>()
    );
    for (name, bytes) in &a {
        ensure!(*bytes == b[name], "{name} differs between --jobs 1 and --jobs 8");
    }
    Ok(format!("{} artifacts byte-identical", a.len()))
}

// ---------------------------------------------------------------- criterion 8

fn exposure_counts() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(365);
    let start = NaiveDate::from_ymd_opt(2013, 1, 1).unwrap();
    let dates: Vec<NaiveDate> = (0..365).map(|d| start + chrono::Days::new(d)).collect();
    let threshold = 75.0;
    for trial in 0..200 {
        let series: Vec<Option<f64>> = (0..365)
            .map(|_| {
                if rng.random_bool(0.08) {
                    None
                } else if rng.random_bool(0.02) {
                    Some(threshold)
                } else {
                    Some(rng.random_range(5.0..250.0))
                }
            })
            .collect();
        let oracle = series.iter().filter(|v| matches!(v, Some(c) if *c > threshold)).count() as u32;
        let got = exposed_days(&series, threshold).map_err(err)?;
        ensure!(got == oracle, "trial {trial}: {got} exposed days, oracle {oracle}");
        let monthly = monthly_exceedance(&dates, &series, threshold).map_err(err)?;
        ensure!(monthly.len() == 12, "trial {trial}: {} months", monthly.len());
        let sum: u32 = monthly.iter().map(|m| m.exceed_days).sum();
        ensure!(sum == oracle, "trial {trial}: monthly sum {sum} vs annual {oracle}");
    }

    let params = IdwParams::default();
    for day in 0..200 {
        let stations: Vec<StationReading> = (0..rng.random_range(1..12))
            .map(|s| StationReading {
                station_id: format!("S{s}"),
                location: Point::new(rng.random_range(0.0..50_000.0), rng.random_range(0.0..50_000.0)),
                date: start,
                pm25: rng.random_range(0.0..400.0),
            })
            .collect();
        let lo = stations.iter().map(|s| s.pm25).fold(f64::INFINITY, f64::min);
        let hi = stations.iter().map(|s| s.pm25).fold(f64::NEG_INFINITY, f64::max);
        let queries: Vec<Point<f64>> = (0..100)
            .map(|_| Point::new(rng.random_range(-5_000.0..55_000.0), rng.random_range(-5_000.0..55_000.0)))
            .collect();
        let est = interpolate_daily(&stations, &queries, &params).map_err(err)?;
        for v in est.iter().flatten() {
            ensure!(*v >= lo && *v <= hi, "day {day}: estimate {v} outside [{lo}, {hi}]");
        }
    }

    let sub = Subdistrict {
        id: "S".into(),
        location: Point::new(0.0, 0.0),
        polygon: None,
        pop_density: 977.0,
        d0_14: 977.0 * 0.2,
        d15_64: 977.0 * 0.7,
        d65p: 977.0 * 0.1,
        city_id: "C".into(),
    };
    let intensity = exposure_intensity(&sub, 30, AgeGroup::Total);
    ensure!(intensity == 29310.0, "977 x 30 gave {intensity}");
    Ok("200 series, 200 interpolation days, 977x30 = 29310".into())
}

// ---------------------------------------------------------------- criterion 9

fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn national_scale() -> Check {
    let start = Instant::now();
    let cities = 10;
    let side = 100;
    let pitch = 100.0;
    let mut rng = ChaCha8Rng::seed_from_u64(100_000);
    let mut parcels = Vec::with_capacity(cities * side * side);
    for c in 0..cities {
        let ox = c as f64 * (side as f64 * pitch + 5_000.0);
        let center = side as f64 * pitch / 2.0;
        for r in 0..side {
            for k in 0..side {
                let (x, y) = (k as f64 * pitch, r as f64 * pitch);
                let mut p = Parcel::new(rect(ox + x, y, 90.0, 90.0), format!("C{c:02}"));
                let d = (x - center).hypot(y - center) / center;
                p.density_std = ((1.0 - d).max(0.0) * 0.8 + rng.random_range(0.0..0.2)).min(1.0);
                parcels.push(p);
            }
        }
    }
    assign_parcel_ids(&mut parcels);
    let city_area = (side * side) as f64 * 0.0081;

    let graph = build_neighbor_graph(&parcels, 60.0).map_err(err)?;
    let config = IdentifyConfig {
        targets: (0..cities).map(|c| (format!("C{c:02}"), city_area * 0.15)).collect(),
        ..IdentifyConfig::default()
    };
    let identified = identify_urban(&parcels, &graph, &config).map_err(err)?;
    for (p, s) in parcels.iter_mut().zip(&identified.states) {
        p.state = *s;
    }
    let weights = CalibratedWeights::new(
        [FEATURE_INTERCEPT, FEATURE_DENSITY, FEATURE_NEIGHBOR, FEATURE_DISTANCE]
            .map(String::from)
            .to_vec(),
        vec![-2.0, 3.0, 2.5, -0.8],
    )
    .map_err(err)?;
    let targets: BTreeMap<String, f64> = (0..cities).map(|c| (format!("C{c:02}"), city_area * 0.10)).collect();
    let sim = simulate_expansion(&parcels, &graph, &weights, &targets, 42, &SimulateConfig::default()).map_err(err)?;
    let elapsed = start.elapsed();

    let urban = sim.states.iter().filter(|s| **s == LandState::Urban).count();
    ensure!(sim.cities.iter().all(|c| c.shortfall_km2 == 0.0), "a city ran short");
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    let rss = peak_rss_bytes().ok_or("VmHWM unavailable")?;
    ensure!(rss < 4 << 30, "peak resident memory {} MiB", rss >> 20);
    let total: f64 = parcels.iter().map(|p| p.geometry.unsigned_area()).sum::<f64>() / 1e6;
    Ok(format!(
        "{} parcels ({total:.0} km²), {urban} urban after simulation, {elapsed:.2?}, peak RSS {} MiB",
        parcels.len(),
        rss >> 20
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Check); 9] = [
        (1, "through-street grids give (n-1)(m-1) parcels, area conserved", through_street_grid),
        (2, "no short dangles after trimming; ends extended exactly", dangle_trimming),
        (3, "density standardization", density_standardization),
        (4, "identification matches greedy ranking and stops within one parcel", identify_stopping),
        (5, "logistic calibration recovers known coefficients", logistic_recovery),
        (6, "scenario targets and budgets on the toy nation", scenario_budgets),
        (7, "outputs identical for --jobs 1 and --jobs 8", thread_count_determinism),
        (8, "exposed-day counts and interpolation bounds", exposure_counts),
        (9, "100k parcels within time and memory limits", national_scale),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match result {
            Ok(detail) => println!("criterion {n} PASS  {name} ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
