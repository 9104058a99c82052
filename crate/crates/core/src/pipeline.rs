//! Stage orchestration: parcels → density → identify → (calibrate) → simulate,
//! plus the independent exposure stage.
//!
//! Each stage reads the previous stage's artifact from the output directory,
//! writes its own, and records a `<stage>.manifest.json` with input and
//! artifact checksums, the effective parameters, seed and timings.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::expansion_sim::{
    calibrate_weights, compute_city_targets, simulate_expansion, FeatureContext, FeatureTable, Scenario,
    ScenarioConfig, FEATURE_DENSITY, FEATURE_DISTANCE, FEATURE_NEIGHBOR,
};
use crate::expansion_sim::logistic::FitOptions;
use crate::exposure::{estimate_exposure, SupplementGrid};
use crate::io;
use crate::poi_density::{apply_density, assign_pois};
use crate::road_parcel::{merge_road_layers, run_aicp, AicpParams, LandState, Parcel, ParcelId, WidthTable};
use crate::urban_identify::{build_neighbor_graph, identify_urban};

pub const PARCELS: &str = "parcels.geojson";
pub const DENSITY: &str = "density.geojson";
pub const IDENTIFIED: &str = "identified.geojson";
pub const IDENTIFY_LOG: &str = "identify_log.csv";
pub const WEIGHTS: &str = "weights.toml";
pub const SIMULATED: &str = "simulated.geojson";
pub const SIMULATE_SUMMARY: &str = "simulate_summary.csv";
pub const EXPOSURE_ANNUAL: &str = "exposure_annual.csv";
pub const EXPOSURE_MONTHLY: &str = "exposure_monthly.csv";
pub const EXPOSURE_CITY: &str = "exposure_city.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Parcels,
    Density,
    Identify,
    Calibrate,
    Simulate,
    Exposure,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Parcels => "parcels",
            Stage::Density => "density",
            Stage::Identify => "identify",
            Stage::Calibrate => "calibrate",
            Stage::Simulate => "simulate",
            Stage::Exposure => "exposure",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "parcels" => Stage::Parcels,
            "density" => Stage::Density,
            "identify" => Stage::Identify,
            "calibrate" => Stage::Calibrate,
            "simulate" => Stage::Simulate,
            "exposure" => Stage::Exposure,
            other => return Err(Error::Config(format!("unknown stage `{other}`"))),
        })
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub scenario: Option<Scenario>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    config_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest {
    stage: &'static str,
    tool_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_file: Option<FileDigest>,
    inputs: Vec<FileDigest>,
    artifacts: Vec<FileDigest>,
    seed: u64,
    scenario: String,
    jobs: usize,
    params: serde_json::Value,
    stats: serde_json::Value,
    elapsed_ms: u128,
}

#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: Stage,
    pub artifacts: Vec<PathBuf>,
    pub elapsed_ms: u128,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

impl Pipeline {
    /// Loads the config file and applies overrides.
    pub fn from_file(path: &Path, overrides: &Overrides) -> Result<Self> {
        let config = PipelineConfig::load(path)?;
        let mut p = Pipeline {
            config,
            config_path: Some(path.to_path_buf()),
        };
        p.apply(overrides);
        Ok(p)
    }

    pub fn new(config: PipelineConfig, overrides: &Overrides) -> Result<Self> {
        config.validate()?;
        let mut p = Pipeline {
            config,
            config_path: None,
        };
        p.apply(overrides);
        Ok(p)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.config.simulate.seed = s;
        }
        if let Some(s) = o.scenario {
            self.config.simulate.scenario = s;
        }
        if let Some(d) = &o.out_dir {
            self.config.out_dir = d.clone();
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    /// Stages executed by `all`, in order.
    pub fn all_stages(&self) -> Vec<Stage> {
        let mut v = vec![Stage::Parcels, Stage::Density, Stage::Identify];
        if self.config.inputs.weights.is_none() {
            v.push(Stage::Calibrate);
        }
        v.extend([Stage::Simulate, Stage::Exposure]);
        v
    }

    pub fn run_all(&self) -> Result<Vec<StageReport>> {
        self.all_stages().into_iter().map(|s| self.run(s)).collect()
    }

    pub fn run(&self, stage: Stage) -> Result<StageReport> {
        let start = Instant::now();
        log::info!("stage {stage}: start");
        let outcome = match stage {
            Stage::Parcels => self.parcels()?,
            Stage::Density => self.density()?,
            Stage::Identify => self.identify()?,
            Stage::Calibrate => self.calibrate()?,
            Stage::Simulate => self.simulate()?,
            Stage::Exposure => self.exposure()?,
        };
        let elapsed_ms = start.elapsed().as_millis();
        self.write_manifest(stage, &outcome, elapsed_ms)?;
        log::info!("stage {stage}: done in {elapsed_ms} ms");
        Ok(StageReport {
            stage,
            artifacts: outcome.artifacts,
            elapsed_ms,
        })
    }

    fn require(&self, stage: Stage, requires: Stage, name: &str) -> Result<PathBuf> {
        let p = self.artifact(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::MissingDependency {
                stage: stage.to_string(),
                requires: requires.to_string(),
                artifact: p,
            })
        }
    }

    fn write_manifest(&self, stage: Stage, outcome: &Outcome, elapsed_ms: u128) -> Result<()> {
        let manifest = Manifest {
            stage: stage.name(),
            tool_version: env!("CARGO_PKG_VERSION"),
            config_file: self.config_path.as_deref().map(digest).transpose()?,
            inputs: outcome.inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            artifacts: outcome.artifacts.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            seed: self.config.simulate.seed,
            scenario: self.config.simulate.scenario.to_string(),
            jobs: rayon::current_num_threads(),
            params: outcome.params.clone(),
            stats: outcome.stats.clone(),
            elapsed_ms,
        };
        let path = self.artifact(&format!("{}.manifest.json", stage.name()));
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("serializable");
        bytes.push(b'\n');
        io::write_atomic(&path, &bytes)
    }

    fn crs(&self) -> Option<&str> {
        self.config.crs.as_deref()
    }

    fn parcels(&self) -> Result<Outcome> {
        let inp = &self.config.inputs;
        let mut layers = Vec::new();
        for p in &inp.roads {
            let layer = io::load_roads(p)?;
            self.check_crs(p, layer.crs.as_deref())?;
            layers.push(layer);
        }
        let (admins, admin_crs) = io::load_admin(&inp.admin)?;
        self.check_crs(&inp.admin, admin_crs.as_deref())?;
        let widths = match &inp.width_table {
            Some(p) => io::load_width_table(p)?,
            None => WidthTable::default(),
        };
        let a = &self.config.aicp;
        let params = AicpParams {
            trim_threshold_m: a.trim_threshold_m,
            extension_m: a.extension_m,
            widths: widths.clone(),
            min_parcel_area_m2: a.min_parcel_area_m2,
            split_straddling: a.split_straddling,
        };
        // Validates CRS agreement across layers before the heavy work.
        merge_road_layers(&layers)?;
        let out = run_aicp(&layers, &admins, &params)?;
        let path = self.artifact(PARCELS);
        io::save_parcels(&path, &out.parcels, None, self.crs())?;

        let mut inputs = inp.roads.clone();
        inputs.push(inp.admin.clone());
        inputs.extend(inp.width_table.clone());
        let widths_json: BTreeMap<String, f64> = widths.iter().map(|(c, w)| (c.to_string(), w)).collect();
        Ok(Outcome {
            inputs,
            artifacts: vec![path],
            params: json!({ "aicp": self.config.aicp, "half_widths_m": widths_json, "crs": self.config.crs }),
            stats: json!({
                "parcels": out.parcels.len(),
                "trimmed_segments": out.trimmed_segments,
                "road_area_m2": out.road_area_m2,
                "unassigned": out.unassigned.len(),
                "slivers_dropped": out.delineations.iter().map(|d| d.slivers_dropped).sum::<usize>(),
                "max_conservation_residual": out
                    .delineations
                    .iter()
                    .map(|d| d.conservation_residual())
                    .fold(0.0, f64::max),
            }),
        })
    }

    fn check_crs(&self, path: &Path, found: Option<&str>) -> Result<()> {
        match (self.crs(), found) {
            (Some(want), Some(got)) if want != got => Err(Error::CrsMismatch(format!(
                "{} declares {got}, config expects {want}",
                path.display()
            ))),
            _ => Ok(()),
        }
    }

    fn density(&self) -> Result<Outcome> {
        let src = self.require(Stage::Density, Stage::Parcels, PARCELS)?;
        let mut parcels = io::load_parcels(&src)?;
        let pois = io::load_pois(&self.config.inputs.pois)?;
        let assignment = assign_pois(&mut parcels, &pois, self.config.density.near_distance_m)?;
        let stats = apply_density(&mut parcels, None)?;
        let path = self.artifact(DENSITY);
        io::save_parcels(&path, &parcels, None, self.crs())?;
        Ok(Outcome {
            inputs: vec![src, self.config.inputs.pois.clone()],
            artifacts: vec![path],
            params: json!({ "density": self.config.density }),
            stats: json!({
                "pois": pois.len(),
                "assigned": assignment.assigned,
                "discarded": assignment.discarded.len(),
                "max_raw_density": stats.max_raw,
            }),
        })
    }

    fn identify(&self) -> Result<Outcome> {
        let src = self.require(Stage::Identify, Stage::Density, DENSITY)?;
        let mut parcels = io::load_parcels(&src)?;
        let targets = io::load_targets(&self.config.inputs.targets)?;
        let graph = build_neighbor_graph(&parcels, self.config.identify.contact_distance_m)?;
        let cfg = self.config.identify_config(targets);
        let outcome = identify_urban(&parcels, &graph, &cfg)?;
        for (p, s) in parcels.iter_mut().zip(&outcome.states) {
            p.state = *s;
        }
        let path = self.artifact(IDENTIFIED);
        io::save_parcels(&path, &parcels, Some(&outcome.flip_iteration), self.crs())?;
        let log = self.artifact(IDENTIFY_LOG);
        io::save_identify_log(&log, &outcome.logs)?;
        let achieved: BTreeMap<&str, f64> = outcome.logs.iter().map(|l| (l.city_id.as_str(), l.achieved_km2)).collect();
        Ok(Outcome {
            inputs: vec![src, self.config.inputs.targets.clone()],
            artifacts: vec![path, log],
            params: json!({ "identify": self.config.identify }),
            stats: json!({ "neighbor_edges": graph.edge_count(), "achieved_km2": achieved }),
        })
    }

    fn calibrate(&self) -> Result<Outcome> {
        let src = self.require(Stage::Calibrate, Stage::Density, DENSITY)?;
        let inp = &self.config.inputs;
        let (Some(t0_path), Some(t1_path)) = (&inp.calibration_t0, &inp.calibration_t1) else {
            return Err(Error::Config(
                "calibrate needs inputs.calibration_t0 and inputs.calibration_t1".into(),
            ));
        };
        let parcels = io::load_parcels(&src)?;
        let t0 = align_states(&parcels, &io::load_states(t0_path)?)?;
        let t1 = align_states(&parcels, &io::load_states(t1_path)?)?;
        let graph = build_neighbor_graph(&parcels, self.config.identify.contact_distance_m)?;
        let ctx = FeatureContext::new(&parcels, &graph, &t0);
        let names = [FEATURE_DENSITY, FEATURE_NEIGHBOR, FEATURE_DISTANCE];
        let all: Vec<usize> = (0..parcels.len()).collect();
        let table = FeatureTable {
            names: names.iter().map(|s| s.to_string()).collect(),
            rows: ctx.rows(&names, &all, &t0)?,
        };
        let cal = calibrate_weights(&t0, &t1, &table, &FitOptions::default())?;
        let path = self.artifact(WEIGHTS);
        io::save_weights(&path, &cal.weights)?;
        Ok(Outcome {
            inputs: vec![src, t0_path.clone(), t1_path.clone()],
            artifacts: vec![path],
            params: json!({ "features": names, "fit": FitOptions::default(), "contact_distance_m": self.config.identify.contact_distance_m }),
            stats: json!({
                "samples": cal.samples,
                "flips": cal.flips,
                "iterations": cal.fit.iterations,
                "gradient_norm": cal.fit.gradient_norm,
                "converged": cal.fit.converged,
                "separated": cal.fit.separated,
            }),
        })
    }

    fn simulate(&self) -> Result<Outcome> {
        let src = self.require(Stage::Simulate, Stage::Identify, IDENTIFIED)?;
        let inp = &self.config.inputs;
        let weights_path = match &inp.weights {
            Some(p) => p.clone(),
            None => self.require(Stage::Simulate, Stage::Calibrate, WEIGHTS)?,
        };
        let weights = io::load_weights(&weights_path)?;
        let parcels = io::load_parcels(&src)?;
        let cities = io::load_cities(&inp.cities)?;
        let s = &self.config.simulate;
        let mut scenario = ScenarioConfig::new(s.scenario);
        scenario.horizon_years = s.horizon_years;
        scenario.growth = s.growth;
        if let Some(p) = &inp.scenarios {
            scenario.rules = io::load_scenario_rules(p)?;
        }
        let targets = compute_city_targets(&cities, &scenario)?;
        let graph = build_neighbor_graph(&parcels, self.config.identify.contact_distance_m)?;
        let result = simulate_expansion(&parcels, &graph, &weights, &targets, s.seed, &s.simulate_config())?;
        let mut out = parcels;
        for (p, st) in out.iter_mut().zip(&result.states) {
            p.state = *st;
        }
        let path = self.artifact(SIMULATED);
        io::save_parcels(&path, &out, Some(&result.flip_iteration), self.crs())?;
        let summary = self.artifact(SIMULATE_SUMMARY);
        io::save_simulate_summary(&summary, &result.cities)?;

        let mut inputs = vec![src, weights_path, inp.cities.clone()];
        inputs.extend(inp.scenarios.clone());
        Ok(Outcome {
            inputs,
            artifacts: vec![path, summary],
            params: json!({
                "simulate": self.config.simulate,
                "multipliers": scenario.rules,
                "contact_distance_m": self.config.identify.contact_distance_m,
                "weights": weights,
            }),
            stats: json!({ "targets_km2": targets }),
        })
    }

    fn exposure(&self) -> Result<Outcome> {
        let inp = &self.config.inputs;
        let readings = io::load_stations(&inp.stations)?;
        let subs = io::load_subdistricts(&inp.subdistricts)?;
        let supplement = inp
            .supplement
            .as_deref()
            .map(io::load_supplement)
            .transpose()?
            .map(|cells| SupplementGrid::new(&cells));
        let cities: Vec<String> = io::load_cities(&inp.cities)?.into_iter().map(|c| c.city_id).collect();
        let report = estimate_exposure(&readings, &subs, supplement.as_ref(), &self.config.exposure.params(), &cities)?;
        if !report.cities.empty.is_empty() {
            log::warn!("cities without sub-districts: {}", report.cities.empty.join(", "));
        }
        if !report.missing_days.is_empty() {
            log::warn!("{} days have no concentration estimate", report.missing_days.len());
        }
        let annual = self.artifact(EXPOSURE_ANNUAL);
        let monthly = self.artifact(EXPOSURE_MONTHLY);
        let city = self.artifact(EXPOSURE_CITY);
        io::save_exposure(&annual, &monthly, &city, &report)?;
        let mut inputs = vec![inp.stations.clone(), inp.subdistricts.clone(), inp.cities.clone()];
        inputs.extend(inp.supplement.clone());
        Ok(Outcome {
            inputs,
            artifacts: vec![annual, monthly, city],
            params: json!({ "exposure": self.config.exposure }),
            stats: json!({
                "days": report.dates.len(),
                "missing_days": report.missing_days.len(),
                "subdistricts": report.series.len(),
                "empty_cities": report.cities.empty,
            }),
        })
    }
}

struct Outcome {
    inputs: Vec<PathBuf>,
    artifacts: Vec<PathBuf>,
    params: serde_json::Value,
    stats: serde_json::Value,
}

/// Orders a state table by the parcel sequence; every parcel must be present.
pub fn align_states(parcels: &[Parcel], states: &BTreeMap<ParcelId, LandState>) -> Result<Vec<LandState>> {
    let missing: Vec<u64> = parcels.iter().filter(|p| !states.contains_key(&p.id)).map(|p| p.id.0).collect();
    let known: std::collections::BTreeSet<ParcelId> = parcels.iter().map(|p| p.id).collect();
    let extra: Vec<u64> = states.keys().filter(|k| !known.contains(k)).map(|k| k.0).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::IdMismatch {
            missing_in_simulated: extra,
            missing_in_reference: missing,
        });
    }
    Ok(parcels.iter().map(|p| states[&p.id]).collect())
}
