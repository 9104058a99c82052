//! Constrained vector cellular automaton that labels parcels urban.
//!
//! Every parcel starts non-urban. Each iteration scores the remaining
//! non-urban parcels of a city from their own density and the urban share of
//! their neighbors, flips the best-scoring batch, and stops as soon as the
//! city's urban area reaches its statistical target.

use std::collections::BTreeMap;

use geo::{BoundingRect, Distance, Euclidean};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, polygon_index};
use crate::road_parcel::{LandState, Parcel, ParcelId};

/// Twice the widest default road half-width, so parcels facing each other
/// across any road are neighbors.
pub const DEFAULT_CONTACT_DISTANCE_M: f64 = 60.0;

/// Relative slack when comparing accumulated area against a target.
pub(crate) const TARGET_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Position of the neighbor in the parcel slice the graph was built from.
    pub index: usize,
    /// Neighbor area in km², used to weight the urban share.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    ids: Vec<ParcelId>,
    adjacency: Vec<Vec<Neighbor>>,
}

impl NeighborGraph {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, index: usize) -> ParcelId {
        self.ids[index]
    }

    pub fn neighbors(&self, index: usize) -> &[Neighbor] {
        &self.adjacency[index]
    }

    pub fn degree(&self, index: usize) -> usize {
        self.adjacency[index].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Area-weighted share of urban neighbors; zero for isolated parcels.
    pub fn urban_share(&self, index: usize, states: &[LandState]) -> f64 {
        let (urban, total) = self.adjacency[index]
            .iter()
            .fold((0.0, 0.0), |(u, t), n| {
                let u = if states[n.index].is_urban() { u + n.weight } else { u };
                (u, t + n.weight)
            });
        if total > 0.0 {
            urban / total
        } else {
            0.0
        }
    }
}

/// Two parcels are neighbors when their geometries come within
/// `contact_distance_m` of each other.
pub fn build_neighbor_graph(parcels: &[Parcel], contact_distance_m: f64) -> Result<NeighborGraph> {
    if !(contact_distance_m >= 0.0) {
        return Err(Error::param(
            "contact_distance_m",
            format!("{contact_distance_m} must be >= 0"),
        ));
    }
    let geoms: Vec<_> = parcels.iter().map(|p| &p.geometry).collect();
    let index = polygon_index(&geoms);
    let upper: Vec<Vec<usize>> = parcels
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let Some(bbox) = p.geometry.bounding_rect() else {
                return vec![];
            };
            let mut js: Vec<usize> = index
                .locate_in_envelope_intersecting(&geometry::grow_rect(bbox, contact_distance_m))
                .map(|e| e.data)
                .filter(|&j| j > i)
                .filter(|&j| Euclidean.distance(&p.geometry, &parcels[j].geometry) <= contact_distance_m)
                .collect();
            js.sort_unstable();
            js
        })
        .collect();
    let mut adjacency: Vec<Vec<Neighbor>> = vec![Vec::new(); parcels.len()];
    for (i, js) in upper.iter().enumerate() {
        for &j in js {
            adjacency[i].push(Neighbor {
                index: j,
                weight: parcels[j].area_km2,
            });
            adjacency[j].push(Neighbor {
                index: i,
                weight: parcels[i].area_km2,
            });
        }
    }
    for list in &mut adjacency {
        list.sort_by_key(|n| n.index);
    }
    Ok(NeighborGraph {
        ids: parcels.iter().map(|p| p.id).collect(),
        adjacency,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyConfig {
    pub w_density: f64,
    pub w_neighbor: f64,
    /// Weights on named parcel attributes (e.g. population density).
    #[serde(default)]
    pub extra_weights: BTreeMap<String, f64>,
    pub batch_fraction: f64,
    /// Urban area target per administrative unit, km².
    #[serde(default)]
    pub targets: BTreeMap<String, f64>,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        IdentifyConfig {
            w_density: 0.7,
            w_neighbor: 0.3,
            extra_weights: BTreeMap::new(),
            batch_fraction: 0.01,
            targets: BTreeMap::new(),
        }
    }
}

impl IdentifyConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.w_density, self.w_neighbor]
            .into_iter()
            .chain(self.extra_weights.values().copied());
        let mut any_positive = false;
        for w in weights {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::param("weights", format!("{w} must be finite and >= 0")));
            }
            any_positive |= w > 0.0;
        }
        if !any_positive {
            return Err(Error::param("weights", "all weights are zero"));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return Err(Error::param(
                "batch_fraction",
                format!("{} must be in (0, 1]", self.batch_fraction),
            ));
        }
        for (city, t) in &self.targets {
            if !(*t >= 0.0) {
                return Err(Error::param("target_area_km2", format!("{city}: {t} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Score of parcel `index` for turning urban given the current `states`.
pub fn transition_score(
    parcel: &Parcel,
    index: usize,
    graph: &NeighborGraph,
    states: &[LandState],
    config: &IdentifyConfig,
) -> f64 {
    let extras: f64 = config
        .extra_weights
        .iter()
        .map(|(name, w)| w * parcel.attributes.get(name).copied().unwrap_or(0.0))
        .sum();
    config.w_density * parcel.density_std + config.w_neighbor * graph.urban_share(index, states) + extras
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: u32,
    pub flipped: usize,
    pub flipped_area_km2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityRunLog {
    pub city_id: String,
    pub target_km2: f64,
    pub achieved_km2: f64,
    /// Area of the parcel whose flip ended the run; bounds the overshoot.
    pub last_flipped_km2: f64,
    pub iterations: Vec<IterationLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyOutcome {
    pub states: Vec<LandState>,
    /// Iteration (1-based) in which each parcel turned urban.
    pub flip_iteration: Vec<Option<u32>>,
    pub logs: Vec<CityRunLog>,
}

/// Parcel positions grouped by admin id.
pub(crate) fn city_members(parcels: &[Parcel]) -> BTreeMap<&str, Vec<usize>> {
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in parcels.iter().enumerate() {
        members.entry(p.admin_id.as_str()).or_default().push(i);
    }
    members
}

struct CityRun {
    flips: Vec<(usize, u32)>,
    log: CityRunLog,
}

fn run_city(
    city: &str,
    members: &[usize],
    target: f64,
    parcels: &[Parcel],
    graph: &NeighborGraph,
    initial: &[LandState],
    config: &IdentifyConfig,
) -> CityRun {
    let mut states = initial.to_vec();
    let mut candidates: Vec<usize> = members.iter().copied().filter(|&i| !states[i].is_urban()).collect();
    let quota = config.batch_fraction * target;
    let goal = target * (1.0 - TARGET_EPS);
    let mut cumulative = 0.0;
    let mut last_flipped = 0.0;
    let mut flips = Vec::new();
    let mut iterations = Vec::new();
    let mut iteration = 0u32;
    while cumulative < goal && !candidates.is_empty() {
        iteration += 1;
        let mut ranked: Vec<(f64, usize)> = candidates
            .par_iter()
            .map(|&i| (transition_score(&parcels[i], i, graph, &states, config), i))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(parcels[a.1].id.cmp(&parcels[b.1].id)));
        let mut batch_area = 0.0;
        let mut batch = 0;
        for &(_, i) in &ranked {
            if batch_area >= quota || cumulative >= goal {
                break;
            }
            states[i] = LandState::Urban;
            batch_area += parcels[i].area_km2;
            cumulative += parcels[i].area_km2;
            last_flipped = parcels[i].area_km2;
            batch += 1;
            flips.push((i, iteration));
        }
        candidates.retain(|&i| !states[i].is_urban());
        iterations.push(IterationLog {
            iteration,
            flipped: batch,
            flipped_area_km2: batch_area,
        });
    }
    CityRun {
        flips,
        log: CityRunLog {
            city_id: city.to_string(),
            target_km2: target,
            achieved_km2: cumulative,
            last_flipped_km2: last_flipped,
            iterations,
        },
    }
}

/// Labels parcels urban city by city until each city's urban area reaches its
/// target. Cities run independently; a parcel's neighbors in other cities are
/// seen in their starting (non-urban) state.
pub fn identify_urban(parcels: &[Parcel], graph: &NeighborGraph, config: &IdentifyConfig) -> Result<IdentifyOutcome> {
    config.validate()?;
    if graph.len() != parcels.len() {
        return Err(Error::LengthMismatch(format!(
            "graph has {} nodes, {} parcels given",
            graph.len(),
            parcels.len()
        )));
    }
    let members = city_members(parcels);
    for (city, target) in &config.targets {
        let available: f64 = members
            .get(city.as_str())
            .map(|m| m.iter().map(|&i| parcels[i].area_km2).sum())
            .unwrap_or(0.0);
        if *target > available * (1.0 + TARGET_EPS) {
            return Err(Error::UnreachableTarget {
                city: city.clone(),
                target_km2: *target,
                available_km2: available,
            });
        }
    }
    for city in members.keys() {
        if !config.targets.contains_key(*city) {
            warn!("no urban area target for {city}; its parcels stay non-urban");
        }
    }
    let initial = vec![LandState::NonUrban; parcels.len()];
    let runs: Vec<CityRun> = config
        .targets
        .par_iter()
        .map(|(city, &target)| {
            let m = members.get(city.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            run_city(city, m, target, parcels, graph, &initial, config)
        })
        .collect();
    let mut states = initial;
    let mut flip_iteration = vec![None; parcels.len()];
    let mut logs = Vec::with_capacity(runs.len());
    for run in runs {
        for (i, it) in run.flips {
            states[i] = LandState::Urban;
            flip_iteration[i] = Some(it);
        }
        logs.push(run.log);
    }
    Ok(IdentifyOutcome {
        states,
        flip_iteration,
        logs,
    })
}
