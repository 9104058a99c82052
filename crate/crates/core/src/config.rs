//! Pipeline configuration, read from TOML.
//!
//! Input paths are resolved against the directory holding the config file
//! and must exist when the config is loaded.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion_sim::{GrowthModel, Scenario, SimulateConfig};
use crate::exposure::{ExposureParams, IdwParams};
use crate::poi_density::DEFAULT_NEAR_DISTANCE_M;
use crate::road_parcel::{
    DEFAULT_EXTENSION_M, DEFAULT_MIN_PARCEL_AREA_M2, DEFAULT_TRIM_THRESHOLD_M,
};
use crate::urban_identify::DEFAULT_CONTACT_DISTANCE_M;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// Road layers, merged in order.
    pub roads: Vec<PathBuf>,
    pub admin: PathBuf,
    pub pois: PathBuf,
    /// Per-unit urban area targets for identification.
    pub targets: PathBuf,
    pub cities: PathBuf,
    pub stations: PathBuf,
    pub subdistricts: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supplement: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<PathBuf>,
    /// Fixed simulation weights; when absent, `simulate` uses the output of `calibrate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_t0: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_t1: Option<PathBuf>,
}

impl Inputs {
    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut v: Vec<&mut PathBuf> = self.roads.iter_mut().collect();
        v.extend([
            &mut self.admin,
            &mut self.pois,
            &mut self.targets,
            &mut self.cities,
            &mut self.stations,
            &mut self.subdistricts,
        ]);
        v.extend(
            [
                &mut self.supplement,
                &mut self.width_table,
                &mut self.scenarios,
                &mut self.weights,
                &mut self.calibration_t0,
                &mut self.calibration_t1,
            ]
            .into_iter()
            .flatten(),
        );
        v
    }

    pub fn paths(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = self.roads.iter().map(PathBuf::as_path).collect();
        v.extend([
            self.admin.as_path(),
            &self.pois,
            &self.targets,
            &self.cities,
            &self.stations,
            &self.subdistricts,
        ]);
        v.extend(
            [
                &self.supplement,
                &self.width_table,
                &self.scenarios,
                &self.weights,
                &self.calibration_t0,
                &self.calibration_t1,
            ]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path),
        );
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AicpSection {
    pub trim_threshold_m: f64,
    pub extension_m: f64,
    pub min_parcel_area_m2: f64,
    pub split_straddling: bool,
}

impl Default for AicpSection {
    fn default() -> Self {
        AicpSection {
            trim_threshold_m: DEFAULT_TRIM_THRESHOLD_M,
            extension_m: DEFAULT_EXTENSION_M,
            min_parcel_area_m2: DEFAULT_MIN_PARCEL_AREA_M2,
            split_straddling: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySection {
    pub near_distance_m: f64,
}

impl Default for DensitySection {
    fn default() -> Self {
        DensitySection {
            near_distance_m: DEFAULT_NEAR_DISTANCE_M,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifySection {
    pub w_density: f64,
    pub w_neighbor: f64,
    pub extra_weights: BTreeMap<String, f64>,
    pub batch_fraction: f64,
    pub contact_distance_m: f64,
}

impl Default for IdentifySection {
    fn default() -> Self {
        IdentifySection {
            w_density: 0.7,
            w_neighbor: 0.3,
            extra_weights: BTreeMap::new(),
            batch_fraction: 0.01,
            contact_distance_m: DEFAULT_CONTACT_DISTANCE_M,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub scenario: Scenario,
    pub gamma: f64,
    pub quota_fraction: f64,
    pub seed: u64,
    pub horizon_years: u32,
    pub growth: GrowthModel,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let s = SimulateConfig::default();
        SimulateSection {
            scenario: Scenario::Bau,
            gamma: s.gamma,
            quota_fraction: s.quota_fraction,
            seed: 0,
            horizon_years: 5,
            growth: GrowthModel::Compound,
        }
    }
}

impl SimulateSection {
    pub fn simulate_config(&self) -> SimulateConfig {
        SimulateConfig {
            gamma: self.gamma,
            quota_fraction: self.quota_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExposureSection {
    pub threshold: f64,
    /// Label for the concentration unit of threshold and readings.
    pub unit: String,
    pub k: usize,
    pub power: f64,
    pub exposed_month_cut: f64,
    pub max_station_distance_m: f64,
    pub exact_radius_m: f64,
}

impl Default for ExposureSection {
    fn default() -> Self {
        let p = ExposureParams::default();
        ExposureSection {
            threshold: p.threshold,
            unit: "ug/m3".into(),
            k: p.idw.k,
            power: p.idw.power,
            exposed_month_cut: p.exposed_month_cut,
            max_station_distance_m: p.idw.max_station_distance_m,
            exact_radius_m: p.idw.exact_radius_m,
        }
    }
}

impl ExposureSection {
    pub fn params(&self) -> ExposureParams {
        ExposureParams {
            threshold: self.threshold,
            idw: IdwParams {
                power: self.power,
                k: self.k,
                exact_radius_m: self.exact_radius_m,
                max_station_distance_m: self.max_station_distance_m,
            },
            exposed_month_cut: self.exposed_month_cut,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Expected CRS of every spatial input; layers declaring another are rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crs: Option<String>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    pub inputs: Inputs,
    #[serde(default)]
    pub aicp: AicpSection,
    #[serde(default)]
    pub density: DensitySection,
    #[serde(default)]
    pub identify: IdentifySection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub exposure: ExposureSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn in_range(name: &'static str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::param(name, format!("{v} outside [{lo}, {hi}]")))
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads, resolves relative paths against the file's directory and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        cfg.check_inputs_exist()?;
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        for p in self.inputs.paths_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if self.out_dir.is_relative() {
            self.out_dir = base.join(&self.out_dir);
        }
    }

    pub fn check_inputs_exist(&self) -> Result<()> {
        for p in self.inputs.paths() {
            if !p.is_file() {
                return Err(Error::Input {
                    path: p.to_path_buf(),
                    reason: "file does not exist".into(),
                });
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.roads.is_empty() {
            return Err(Error::Config("inputs.roads lists no layers".into()));
        }
        if self.inputs.calibration_t0.is_some() != self.inputs.calibration_t1.is_some() {
            return Err(Error::Config(
                "calibration_t0 and calibration_t1 must be given together".into(),
            ));
        }
        let a = &self.aicp;
        in_range("trim_threshold_m", a.trim_threshold_m, 0.0, 10_000.0)?;
        in_range("extension_m", a.extension_m, 0.0, 1_000.0)?;
        in_range("min_parcel_area_m2", a.min_parcel_area_m2, 0.0, 1e9)?;
        in_range("near_distance_m", self.density.near_distance_m, 0.0, 10_000.0)?;
        in_range("contact_distance_m", self.identify.contact_distance_m, 0.0, 10_000.0)?;
        self.identify_config(BTreeMap::new()).validate()?;
        self.simulate.simulate_config().validate()?;
        if self.simulate.horizon_years == 0 {
            return Err(Error::param("horizon_years", "must be >= 1"));
        }
        let e = &self.exposure;
        if e.unit.trim().is_empty() {
            return Err(Error::param("unit", "must not be empty"));
        }
        in_range("threshold", e.threshold, f64::MIN_POSITIVE, 1e6)?;
        in_range("exposed_month_cut", e.exposed_month_cut, 0.0, 1.0)?;
        in_range("exact_radius_m", e.exact_radius_m, 0.0, 1e6)?;
        e.params().idw.validate()
    }

    pub fn identify_config(&self, targets: BTreeMap<String, f64>) -> crate::urban_identify::IdentifyConfig {
        crate::urban_identify::IdentifyConfig {
            w_density: self.identify.w_density,
            w_neighbor: self.identify.w_neighbor,
            extra_weights: self.identify.extra_weights.clone(),
            batch_fraction: self.identify.batch_fraction,
            targets,
        }
    }
}
