//! Scenario-driven urban expansion.
//!
//! A macro step turns each city's historical growth rate and the active
//! scenario into a five-year area budget. A stochastic vector CA then spends
//! the budget parcel by parcel using calibrated logistic transition
//! probabilities.

pub mod logistic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use geo::{Centroid, Coord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::road_parcel::{LandState, Parcel, ParcelId};
use crate::urban_identify::{city_members, NeighborGraph, TARGET_EPS};

pub use logistic::{fit_logistic, sigmoid, FitOptions, LogisticFit};

pub const FEATURE_INTERCEPT: &str = "intercept";
pub const FEATURE_DENSITY: &str = "density_std";
pub const FEATURE_NEIGHBOR: &str = "neighbor_share";
pub const FEATURE_DISTANCE: &str = "dist_center_km";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl FromStr for SizeClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "small" => Ok(SizeClass::Small),
            "medium" => Ok(SizeClass::Medium),
            "large" => Ok(SizeClass::Large),
            other => Err(Error::Config(format!("unknown size class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityRecord {
    pub city_id: String,
    pub existing_urban_km2: f64,
    /// Compound annual growth rate of urban area.
    pub historical_cagr: f64,
    pub in_agglomeration: bool,
    pub size_class: SizeClass,
}

impl CityRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.existing_urban_km2 > 0.0) {
            return Err(Error::param(
                "existing_urban_km2",
                format!("{}: {} must be > 0", self.city_id, self.existing_urban_km2),
            ));
        }
        if !(self.historical_cagr >= -1.0) {
            return Err(Error::param(
                "historical_cagr",
                format!("{}: {} must be >= -1", self.city_id, self.historical_cagr),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Business as usual.
    Bau,
    /// Urban-agglomeration oriented.
    Uao,
    /// New urban development.
    Ntu,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Bau => "bau",
            Scenario::Uao => "uao",
            Scenario::Ntu => "ntu",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bau" => Ok(Scenario::Bau),
            "uao" => Ok(Scenario::Uao),
            "ntu" => Ok(Scenario::Ntu),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Growth multiplier for one scenario. A size-class entry takes precedence,
/// then the agglomeration entry for member cities, then `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierRule {
    pub default: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_agglomeration: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub size_class: BTreeMap<SizeClass, f64>,
}

impl MultiplierRule {
    pub fn flat(m: f64) -> Self {
        MultiplierRule {
            default: m,
            in_agglomeration: None,
            size_class: BTreeMap::new(),
        }
    }

    pub fn multiplier(&self, city: &CityRecord) -> f64 {
        if let Some(m) = self.size_class.get(&city.size_class) {
            return *m;
        }
        match (city.in_agglomeration, self.in_agglomeration) {
            (true, Some(m)) => m,
            _ => self.default,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = std::iter::once(self.default)
            .chain(self.in_agglomeration)
            .chain(self.size_class.values().copied());
        for m in all {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::param("multiplier", format!("{m} must be > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRules {
    pub bau: MultiplierRule,
    pub uao: MultiplierRule,
    pub ntu: MultiplierRule,
}

impl Default for ScenarioRules {
    fn default() -> Self {
        ScenarioRules {
            bau: MultiplierRule::flat(1.0),
            uao: MultiplierRule {
                default: 0.8,
                in_agglomeration: Some(1.5),
                size_class: BTreeMap::new(),
            },
            ntu: MultiplierRule {
                default: 0.9,
                in_agglomeration: None,
                size_class: BTreeMap::from([(SizeClass::Small, 1.4), (SizeClass::Medium, 1.4)]),
            },
        }
    }
}

impl ScenarioRules {
    pub fn rule(&self, scenario: Scenario) -> &MultiplierRule {
        match scenario {
            Scenario::Bau => &self.bau,
            Scenario::Uao => &self.uao,
            Scenario::Ntu => &self.ntu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthModel {
    #[default]
    Compound,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub rules: ScenarioRules,
    pub horizon_years: u32,
    pub growth: GrowthModel,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        ScenarioConfig {
            scenario,
            rules: ScenarioRules::default(),
            horizon_years: 5,
            growth: GrowthModel::Compound,
        }
    }

    pub fn multiplier(&self, city: &CityRecord) -> f64 {
        self.rules.rule(self.scenario).multiplier(city)
    }
}

/// New urban area (km²) each city should add over the horizon.
pub fn compute_city_targets(cities: &[CityRecord], scenario: &ScenarioConfig) -> Result<BTreeMap<String, f64>> {
    scenario.rules.rule(scenario.scenario).validate()?;
    let mut out = BTreeMap::new();
    for c in cities {
        c.validate()?;
        let g = c.historical_cagr * scenario.multiplier(c);
        let years = scenario.horizon_years as f64;
        let target = if g <= 0.0 {
            0.0
        } else {
            match scenario.growth {
                GrowthModel::Compound => c.existing_urban_km2 * ((1.0 + g).powf(years) - 1.0),
                GrowthModel::Linear => c.existing_urban_km2 * g * years,
            }
        };
        if out.insert(c.city_id.clone(), target).is_some() {
            return Err(Error::Config(format!("duplicate city {}", c.city_id)));
        }
    }
    Ok(out)
}

/// Named logistic coefficients; `intercept` is the constant feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedWeights {
    pub features: Vec<String>,
    pub coefficients: Vec<f64>,
}

impl CalibratedWeights {
    pub fn new(features: Vec<String>, coefficients: Vec<f64>) -> Result<Self> {
        let w = CalibratedWeights {
            features,
            coefficients,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.coefficients.len() {
            return Err(Error::LengthMismatch(format!(
                "{} feature names, {} coefficients",
                self.features.len(),
                self.coefficients.len()
            )));
        }
        if let Some(c) = self.coefficients.iter().find(|c| !c.is_finite()) {
            return Err(Error::param("coefficients", format!("{c} is not finite")));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.features
            .iter()
            .position(|f| f == name)
            .map(|i| self.coefficients[i])
    }
}

/// Per-parcel feature values outside the neighbor term, which changes as the
/// automaton runs.
#[derive(Debug, Clone)]
pub struct FeatureContext<'a> {
    pub parcels: &'a [Parcel],
    pub graph: &'a NeighborGraph,
    /// City center per admin id.
    pub centers: BTreeMap<String, Coord<f64>>,
}

fn parcel_centroid(p: &Parcel) -> Coord<f64> {
    p.geometry
        .centroid()
        .map(|c| c.0)
        .unwrap_or_else(|| p.geometry.exterior().0[0])
}

/// Area-weighted centroid of each city's urban parcels (all parcels when none are urban).
pub fn city_centers(parcels: &[Parcel], states: &[LandState]) -> BTreeMap<String, Coord<f64>> {
    let mut out = BTreeMap::new();
    for (city, members) in city_members(parcels) {
        let weighted = |only_urban: bool| {
            let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
            for &i in &members {
                if only_urban && !states[i].is_urban() {
                    continue;
                }
                let c = parcel_centroid(&parcels[i]);
                let w = parcels[i].area_km2;
                sx += c.x * w;
                sy += c.y * w;
                sw += w;
            }
            (sw > 0.0).then(|| Coord {
                x: sx / sw,
                y: sy / sw,
            })
        };
        if let Some(c) = weighted(true).or_else(|| weighted(false)) {
            out.insert(city.to_string(), c);
        }
    }
    out
}

impl<'a> FeatureContext<'a> {
    pub fn new(parcels: &'a [Parcel], graph: &'a NeighborGraph, states: &[LandState]) -> Self {
        FeatureContext {
            parcels,
            graph,
            centers: city_centers(parcels, states),
        }
    }

    fn distance_km(&self, i: usize) -> f64 {
        let p = &self.parcels[i];
        match self.centers.get(&p.admin_id) {
            Some(c) => {
                let q = parcel_centroid(p);
                (q.x - c.x).hypot(q.y - c.y) / 1000.0
            }
            None => 0.0,
        }
    }

    /// Value of feature `name` for parcel `i` under `states`.
    pub fn value(&self, name: &str, i: usize, states: &[LandState]) -> Result<f64> {
        Ok(match name {
            FEATURE_INTERCEPT => 1.0,
            FEATURE_DENSITY => self.parcels[i].density_std,
            FEATURE_NEIGHBOR => self.graph.urban_share(i, states),
            FEATURE_DISTANCE => self.distance_km(i),
            other => *self.parcels[i].attributes.get(other).ok_or_else(|| {
                Error::Config(format!(
                    "parcel {} has no attribute `{other}`",
                    self.parcels[i].id
                ))
            })?,
        })
    }

    /// Feature rows for `indices`, in `names` order.
    pub fn rows(&self, names: &[&str], indices: &[usize], states: &[LandState]) -> Result<Vec<Vec<f64>>> {
        indices
            .par_iter()
            .map(|&i| names.iter().map(|n| self.value(n, i, states)).collect())
            .collect()
    }
}

/// Feature values for calibration, one row per parcel, intercept excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub weights: CalibratedWeights,
    pub fit: LogisticFit,
    pub samples: usize,
    pub flips: usize,
}

/// Fits flip-versus-stay among parcels that were non-urban at t0.
pub fn calibrate_weights(
    t0: &[LandState],
    t1: &[LandState],
    features: &FeatureTable,
    options: &FitOptions,
) -> Result<Calibration> {
    if t0.len() != t1.len() || t0.len() != features.rows.len() {
        return Err(Error::LengthMismatch(format!(
            "t0 {} / t1 {} / feature rows {}",
            t0.len(),
            t1.len(),
            features.rows.len()
        )));
    }
    if let Some(i) = (0..t0.len()).find(|&i| t0[i].is_urban() && !t1[i].is_urban()) {
        return Err(Error::Calibration(format!(
            "parcel at position {i} is urban at t0 but not at t1"
        )));
    }
    let sample: Vec<usize> = (0..t0.len()).filter(|&i| !t0[i].is_urban()).collect();
    let y: Vec<bool> = sample.iter().map(|&i| t1[i].is_urban()).collect();
    let flips = y.iter().filter(|f| **f).count();
    if flips == 0 || flips == y.len() {
        return Err(Error::Calibration(format!(
            "need at least one flip and one non-flip, got {flips} of {}",
            y.len()
        )));
    }
    let rows: Vec<Vec<f64>> = sample.iter().map(|&i| features.rows[i].clone()).collect();
    let fit = fit_logistic(&rows, &y, options)?;
    let mut names = vec![FEATURE_INTERCEPT.to_string()];
    names.extend(features.names.iter().cloned());
    Ok(Calibration {
        weights: CalibratedWeights::new(names, fit.coefficients.clone())?,
        fit,
        samples: sample.len(),
        flips,
    })
}

const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// `sigmoid(linear) * (1 + gamma * u)`, clamped into (0, 1).
pub fn expansion_probability(linear: f64, gamma: f64, u: f64) -> f64 {
    (sigmoid(linear) * (1.0 + gamma * u)).clamp(f64::MIN_POSITIVE, P_MAX)
}

/// Random stream for one city, keyed by the run seed and the city id so it
/// does not depend on which worker runs the city.
pub fn city_rng(seed: u64, city_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(city_id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    /// Multiplicative noise amplitude on transition probabilities.
    pub gamma: f64,
    /// Share of the remaining budget spent per iteration.
    pub quota_fraction: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            gamma: 0.1,
            quota_fraction: 0.05,
        }
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::param("gamma", format!("{} must be in [0, 1]", self.gamma)));
        }
        if !(self.quota_fraction > 0.0 && self.quota_fraction <= 1.0) {
            return Err(Error::param(
                "quota_fraction",
                format!("{} must be in (0, 1]", self.quota_fraction),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipRecord {
    pub parcel: ParcelId,
    pub iteration: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitySimulation {
    pub city_id: String,
    pub target_km2: f64,
    pub achieved_km2: f64,
    /// Budget that could not be spent because the city ran out of parcels.
    pub shortfall_km2: f64,
    pub max_flipped_km2: f64,
    pub iterations: u32,
    pub flips: Vec<FlipRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub seed: u64,
    pub cities: Vec<CitySimulation>,
    pub states: Vec<LandState>,
    pub flip_iteration: Vec<Option<u32>>,
}

fn simulate_city(
    city: &str,
    members: &[usize],
    target: f64,
    ctx: &FeatureContext<'_>,
    weights: &CalibratedWeights,
    initial: &[LandState],
    seed: u64,
    config: &SimulateConfig,
) -> Result<(CitySimulation, Vec<(usize, u32)>)> {
    let parcels = ctx.parcels;
    let mut states = initial.to_vec();
    let mut candidates: Vec<usize> = members.iter().copied().filter(|&i| !states[i].is_urban()).collect();
    candidates.sort_by_key(|&i| parcels[i].id);

    // Everything but the neighbor term is fixed during a run.
    let neighbor_w = weights.get(FEATURE_NEIGHBOR).unwrap_or(0.0);
    let fixed: Vec<(&str, f64)> = weights
        .features
        .iter()
        .zip(&weights.coefficients)
        .filter(|(n, _)| n.as_str() != FEATURE_NEIGHBOR)
        .map(|(n, c)| (n.as_str(), *c))
        .collect();
    let mut base = vec![0.0; parcels.len()];
    let computed: Vec<(usize, f64)> = candidates
        .par_iter()
        .map(|&i| {
            fixed
                .iter()
                .map(|(n, c)| ctx.value(n, i, &states).map(|v| c * v))
                .sum::<Result<f64>>()
                .map(|s| (i, s))
        })
        .collect::<Result<_>>()?;
    for (i, s) in computed {
        base[i] = s;
    }

    let mut rng = city_rng(seed, city);
    let goal = target * (1.0 - TARGET_EPS);
    let mut achieved = 0.0;
    let mut max_flipped: f64 = 0.0;
    let mut flips = Vec::new();
    let mut iteration = 0u32;
    while achieved < goal && !candidates.is_empty() {
        iteration += 1;
        let noise: Vec<f64> = candidates.iter().map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let mut ranked: Vec<(f64, usize)> = candidates
            .par_iter()
            .zip(noise.par_iter())
            .map(|(&i, &u)| {
                let linear = base[i] + neighbor_w * ctx.graph.urban_share(i, &states);
                (expansion_probability(linear, config.gamma, u), i)
            })
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(parcels[a.1].id.cmp(&parcels[b.1].id)));
        let quota = config.quota_fraction * (target - achieved);
        let mut batch = 0.0;
        for &(_, i) in &ranked {
            if batch >= quota || achieved >= goal {
                break;
            }
            let a = parcels[i].area_km2;
            states[i] = LandState::Urban;
            batch += a;
            achieved += a;
            max_flipped = max_flipped.max(a);
            flips.push((i, iteration));
        }
        candidates.retain(|&i| !states[i].is_urban());
    }
    let shortfall = (target - achieved).max(0.0);
    let shortfall = if shortfall <= target * TARGET_EPS { 0.0 } else { shortfall };
    Ok((
        CitySimulation {
            city_id: city.to_string(),
            target_km2: target,
            achieved_km2: achieved,
            shortfall_km2: shortfall,
            max_flipped_km2: max_flipped,
            iterations: iteration,
            flips: flips
                .iter()
                .map(|&(i, it)| FlipRecord {
                    parcel: parcels[i].id,
                    iteration: it,
                })
                .collect(),
        },
        flips,
    ))
}

/// Spends each city's new-area budget on its non-urban parcels.
///
/// Starting states come from `parcels[i].state`. Per iteration every
/// candidate gets a perturbed probability; candidates are taken in descending
/// probability (ties by id) until the iteration quota, a fixed share of the
/// remaining budget, is met. A city stops once its budget is reached; if it
/// runs out of parcels the gap is reported as shortfall.
pub fn simulate_expansion(
    parcels: &[Parcel],
    graph: &NeighborGraph,
    weights: &CalibratedWeights,
    targets: &BTreeMap<String, f64>,
    seed: u64,
    config: &SimulateConfig,
) -> Result<SimulationResult> {
    config.validate()?;
    weights.validate()?;
    if graph.len() != parcels.len() {
        return Err(Error::LengthMismatch(format!(
            "graph has {} nodes, {} parcels given",
            graph.len(),
            parcels.len()
        )));
    }
    if let Some((city, t)) = targets.iter().find(|(_, t)| !(**t >= 0.0)) {
        return Err(Error::param("target", format!("{city}: {t} must be >= 0")));
    }
    let initial: Vec<LandState> = parcels.iter().map(|p| p.state).collect();
    let ctx = FeatureContext::new(parcels, graph, &initial);
    let members = city_members(parcels);
    let runs = targets
        .par_iter()
        .map(|(city, &target)| {
            let m = members.get(city.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            simulate_city(city, m, target, &ctx, weights, &initial, seed, config)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut states = initial;
    let mut flip_iteration = vec![None; parcels.len()];
    let mut cities = Vec::with_capacity(runs.len());
    for (summary, flips) in runs {
        for (i, it) in flips {
            states[i] = LandState::Urban;
            flip_iteration[i] = Some(it);
        }
        cities.push(summary);
    }
    Ok(SimulationResult {
        seed,
        cities,
        states,
        flip_iteration,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub id: ParcelId,
    pub state: LandState,
    pub area_km2: f64,
}

impl From<&Parcel> for StateRecord {
    fn from(p: &Parcel) -> Self {
        StateRecord {
            id: p.id,
            state: p.state,
            area_km2: p.area_km2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    /// Area share of parcels whose states match.
    pub overall_accuracy: f64,
    /// Matching area among reference-urban parcels; `None` without any.
    pub urban_accuracy: Option<f64>,
    pub non_urban_accuracy: Option<f64>,
    /// Simulated urban area over reference urban area.
    pub urban_area_ratio: Option<f64>,
}

/// Area-weighted agreement between two labelings of the same parcels.
/// Areas are taken from `simulated`.
pub fn agreement_metrics(simulated: &[StateRecord], reference: &[StateRecord]) -> Result<Agreement> {
    let sim: BTreeMap<ParcelId, &StateRecord> = simulated.iter().map(|r| (r.id, r)).collect();
    let refm: BTreeMap<ParcelId, LandState> = reference.iter().map(|r| (r.id, r.state)).collect();
    let missing_in_simulated: Vec<u64> = refm.keys().filter(|k| !sim.contains_key(k)).map(|k| k.0).collect();
    let missing_in_reference: Vec<u64> = sim.keys().filter(|k| !refm.contains_key(k)).map(|k| k.0).collect();
    if !missing_in_simulated.is_empty() || !missing_in_reference.is_empty() {
        return Err(Error::IdMismatch {
            missing_in_simulated,
            missing_in_reference,
        });
    }
    // [reference][simulated] area, index 1 = urban.
    let mut m = [[0.0f64; 2]; 2];
    for (id, s) in &sim {
        let r = refm[id];
        m[r.code() as usize][s.state.code() as usize] += s.area_km2;
    }
    let total: f64 = m.iter().flatten().sum();
    let ratio = |num: f64, den: f64| (den > 0.0).then(|| num / den);
    Ok(Agreement {
        overall_accuracy: if total > 0.0 { (m[0][0] + m[1][1]) / total } else { 1.0 },
        urban_accuracy: ratio(m[1][1], m[1][0] + m[1][1]),
        non_urban_accuracy: ratio(m[0][0], m[0][0] + m[0][1]),
        urban_area_ratio: ratio(m[0][1] + m[1][1], m[1][0] + m[1][1]),
    })
}
