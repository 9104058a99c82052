//! Road network cleaning and parcel delineation.
//!
//! The pipeline runs in six steps: merge road layers, trim short dangling
//! segments, extend free ends, buffer the network into road space, subtract
//! road space from each administrative unit, and overlay the resulting parcels
//! with the administrative units.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use geo::algorithm::buffer::{Buffer, BufferStyle, LineCap, LineJoin};
use geo::{
    unary_union, Area, BooleanOps, BoundingRect, Coord, Euclidean, Length, LineString,
    MultiLineString, MultiPolygon, Polygon, Validation,
};
use rayon::prelude::*;
use rstar::primitives::{GeomWithData, Line as RLine};
use rstar::RTree;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, SNAP_TOLERANCE_M};

/// Admin id given to parcel pieces that fall outside every administrative unit.
pub const UNASSIGNED: &str = "unassigned";

pub const DEFAULT_TRIM_THRESHOLD_M: f64 = 200.0;
pub const DEFAULT_EXTENSION_M: f64 = 20.0;
pub const DEFAULT_MIN_PARCEL_AREA_M2: f64 = 1000.0;
pub const MIN_HALF_WIDTH_M: f64 = 2.0;
pub const MAX_HALF_WIDTH_M: f64 = 30.0;

/// Mitre limit 2 expressed as the smallest corner angle that still gets a mitre.
const MITRE_MIN_ANGLE: f64 = std::f64::consts::PI / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParcelId(pub u64);

impl fmt::Display for ParcelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandState {
    #[default]
    NonUrban,
    Urban,
}

impl LandState {
    pub fn is_urban(self) -> bool {
        self == LandState::Urban
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LandState::NonUrban => "non_urban",
            LandState::Urban => "urban",
        }
    }

    /// Export code: urban = 1, non-urban = 0.
    pub fn code(self) -> u8 {
        match self {
            LandState::NonUrban => 0,
            LandState::Urban => 1,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "urban" | "1" => Some(LandState::Urban),
            "non_urban" | "0" => Some(LandState::NonUrban),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    pub id: u64,
    pub geometry: LineString<f64>,
    pub road_class: u32,
}

impl RoadSegment {
    pub fn new(id: u64, geometry: LineString<f64>, road_class: u32) -> Result<Self> {
        if geometry.0.len() < 2 {
            return Err(Error::InvalidSegment {
                id: id.to_string(),
                reason: format!("{} vertices, need at least 2", geometry.0.len()),
            });
        }
        if geometry.0.iter().any(|c| !c.x.is_finite() || !c.y.is_finite()) {
            return Err(Error::InvalidSegment {
                id: id.to_string(),
                reason: "non-finite coordinate".into(),
            });
        }
        Ok(RoadSegment {
            id,
            geometry,
            road_class,
        })
    }

    pub fn length(&self) -> f64 {
        geometry::polyline_length(&self.geometry)
    }

    fn is_closed(&self) -> bool {
        let c = &self.geometry.0;
        c.len() > 2 && geometry::coords_close(c[0], c[c.len() - 1], SNAP_TOLERANCE_M)
    }
}

/// One input road layer with its declared coordinate reference system.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoadLayer {
    pub crs: Option<String>,
    pub segments: Vec<RoadSegment>,
}

#[derive(Debug, Clone)]
pub struct AdminUnit {
    pub id: String,
    pub name: String,
    pub boundary: Polygon<f64>,
}

impl AdminUnit {
    pub fn new(id: impl Into<String>, name: impl Into<String>, boundary: Polygon<f64>) -> Result<Self> {
        let id = id.into();
        if boundary.unsigned_area() <= 0.0 {
            return Err(Error::DegenerateAdmin(id));
        }
        if !boundary.is_valid() {
            return Err(Error::Config(format!(
                "administrative unit {id} has an invalid boundary"
            )));
        }
        Ok(AdminUnit {
            id,
            name: name.into(),
            boundary,
        })
    }
}

/// Union of buffered road center-lines.
#[derive(Debug, Clone)]
pub struct RoadSpace {
    pub polygons: MultiPolygon<f64>,
    pub total_area: f64,
}

impl RoadSpace {
    pub fn empty() -> Self {
        RoadSpace {
            polygons: MultiPolygon::new(vec![]),
            total_area: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parcel {
    pub id: ParcelId,
    pub geometry: Polygon<f64>,
    pub area_km2: f64,
    pub admin_id: String,
    pub poi_count: u32,
    pub density_raw: f64,
    pub density_std: f64,
    pub state: LandState,
    /// Extra numeric feature columns (e.g. population density) usable by the automata.
    pub attributes: BTreeMap<String, f64>,
}

impl Parcel {
    pub fn new(geometry: Polygon<f64>, admin_id: impl Into<String>) -> Self {
        let area_km2 = geometry.unsigned_area() / 1.0e6;
        Parcel {
            id: ParcelId(0),
            geometry,
            area_km2,
            admin_id: admin_id.into(),
            poi_count: 0,
            density_raw: 1.0,
            density_std: 0.0,
            state: LandState::NonUrban,
            attributes: BTreeMap::new(),
        }
    }
}

/// Half-width in meters per road class.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthTable(BTreeMap<u32, f64>);

impl Default for WidthTable {
    fn default() -> Self {
        WidthTable(BTreeMap::from([
            (1, 30.0),
            (2, 20.0),
            (3, 12.0),
            (4, 6.0),
            (5, 2.0),
        ]))
    }
}

impl WidthTable {
    pub fn new(widths: BTreeMap<u32, f64>) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::InvalidWidthTable("no classes".into()));
        }
        for (class, w) in &widths {
            if !(MIN_HALF_WIDTH_M..=MAX_HALF_WIDTH_M).contains(w) {
                return Err(Error::InvalidWidthTable(format!(
                    "class {class}: half-width {w} m outside [{MIN_HALF_WIDTH_M}, {MAX_HALF_WIDTH_M}]"
                )));
            }
        }
        Ok(WidthTable(widths))
    }

    pub fn half_width(&self, class: u32) -> Result<f64> {
        self.0
            .get(&class)
            .copied()
            .ok_or(Error::UnknownRoadClass(class))
    }

    pub fn max_half_width(&self) -> f64 {
        self.0.values().copied().fold(0.0, f64::max)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.0.iter().map(|(c, w)| (*c, *w))
    }
}

/// Concatenates road layers into one, re-issuing ids `0..n` in layer order.
///
/// Every non-empty layer must declare the same CRS.
pub fn merge_road_layers(layers: &[RoadLayer]) -> Result<RoadLayer> {
    let mut crs: Option<&str> = None;
    for (i, layer) in layers.iter().enumerate() {
        match (&layer.crs, layer.segments.is_empty()) {
            (None, true) => continue,
            (None, false) => {
                return Err(Error::CrsMismatch(format!(
                    "layer {i} has {} segments but no CRS",
                    layer.segments.len()
                )))
            }
            (Some(c), _) => match crs {
                None => crs = Some(c),
                Some(prev) if prev != c => {
                    return Err(Error::CrsMismatch(format!(
                        "layer {i} declares {c}, earlier layers declare {prev}"
                    )))
                }
                Some(_) => {}
            },
        }
    }
    let segments = layers
        .iter()
        .flat_map(|l| l.segments.iter())
        .enumerate()
        .map(|(i, s)| RoadSegment {
            id: i as u64,
            geometry: s.geometry.clone(),
            road_class: s.road_class,
        })
        .collect();
    Ok(RoadLayer {
        crs: crs.map(str::to_owned),
        segments,
    })
}

type EdgeItem = GeomWithData<RLine<[f64; 2]>, usize>;

fn edge_index(segments: &[RoadSegment]) -> RTree<EdgeItem> {
    let edges = segments
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            s.geometry
                .0
                .windows(2)
                .map(move |w| GeomWithData::new(RLine::new(w[0].into(), w[1].into()), i))
        })
        .collect();
    RTree::bulk_load(edges)
}

fn touches_other(
    tree: &RTree<EdgeItem>,
    alive: &[bool],
    owner: usize,
    p: Coord<f64>,
) -> bool {
    tree.locate_within_distance([p.x, p.y], SNAP_TOLERANCE_M * SNAP_TOLERANCE_M)
        .any(|e| e.data != owner && alive[e.data])
}

fn free_ends_with(
    segments: &[RoadSegment],
    tree: &RTree<EdgeItem>,
    alive: &[bool],
    i: usize,
) -> (bool, bool) {
    let s = &segments[i];
    if s.is_closed() {
        return (false, false);
    }
    let c = &s.geometry.0;
    (
        !touches_other(tree, alive, i, c[0]),
        !touches_other(tree, alive, i, c[c.len() - 1]),
    )
}

/// For each segment, whether its (start, end) endpoint is free.
///
/// An endpoint is free when no other segment passes within the snapping
/// tolerance of it, so T-junctions onto unsplit through-streets count as shared.
/// Closed polylines have no free ends.
pub fn free_endpoints(segments: &[RoadSegment]) -> Vec<(bool, bool)> {
    let tree = edge_index(segments);
    let alive = vec![true; segments.len()];
    (0..segments.len())
        .into_par_iter()
        .map(|i| free_ends_with(segments, &tree, &alive, i))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Trimmed {
    pub segments: Vec<RoadSegment>,
    pub removed: Vec<u64>,
    /// Passes that removed at least one segment.
    pub passes: usize,
}

/// Removes dangling segments shorter than `threshold_m`, repeating until no
/// segment has a free end and a length below the threshold.
pub fn trim_dangles(segments: &[RoadSegment], threshold_m: f64) -> Result<Trimmed> {
    if !(threshold_m > 0.0) {
        return Err(Error::param("threshold_m", format!("{threshold_m} must be > 0")));
    }
    let tree = edge_index(segments);
    let mut alive = vec![true; segments.len()];
    let lengths: Vec<f64> = segments.iter().map(RoadSegment::length).collect();
    let mut removed = Vec::new();
    let mut passes = 0;
    loop {
        let doomed: Vec<usize> = (0..segments.len())
            .into_par_iter()
            .filter(|&i| alive[i] && lengths[i] < threshold_m)
            .filter(|&i| {
                let (a, b) = free_ends_with(segments, &tree, &alive, i);
                a || b
            })
            .collect();
        if doomed.is_empty() {
            break;
        }
        passes += 1;
        for i in doomed {
            alive[i] = false;
            removed.push(segments[i].id);
        }
    }
    let kept = segments
        .iter()
        .zip(&alive)
        .filter(|(_, a)| **a)
        .map(|(s, _)| s.clone())
        .collect();
    Ok(Trimmed {
        segments: kept,
        removed,
        passes,
    })
}

fn extend_end(coords: &mut [Coord<f64>], at_start: bool, by: f64) {
    let n = coords.len();
    let (end, others): (usize, Box<dyn Iterator<Item = usize>>) = if at_start {
        (0, Box::new(1..n))
    } else {
        (n - 1, Box::new((0..n - 1).rev()))
    };
    let tip = coords[end];
    let Some(prev) = others
        .map(|i| coords[i])
        .find(|c| (c.x - tip.x).hypot(c.y - tip.y) > 0.0)
    else {
        return;
    };
    let dx = tip.x - prev.x;
    let dy = tip.y - prev.y;
    let len = dx.hypot(dy);
    coords[end] = Coord {
        x: tip.x + by * dx / len,
        y: tip.y + by * dy / len,
    };
}

/// Moves every free endpoint `extension_m` further along its terminal edge.
pub fn extend_ends(segments: &[RoadSegment], extension_m: f64) -> Result<Vec<RoadSegment>> {
    if !(extension_m >= 0.0) {
        return Err(Error::param("extension_m", format!("{extension_m} must be >= 0")));
    }
    let free = free_endpoints(segments);
    Ok(segments
        .iter()
        .zip(free)
        .map(|(s, (start, end))| {
            let mut s = s.clone();
            if extension_m > 0.0 {
                if start {
                    extend_end(&mut s.geometry.0, true, extension_m);
                }
                if end {
                    extend_end(&mut s.geometry.0, false, extension_m);
                }
            }
            s
        })
        .collect())
}

/// Closed rings are restarted at the midpoint of their first edge so the flat
/// caps at the seam meet flush.
fn open_at_seam(line: LineString<f64>) -> LineString<f64> {
    let c = &line.0;
    if c.len() < 3 || c[0] != c[c.len() - 1] {
        return line;
    }
    let mid = Coord {
        x: (c[0].x + c[1].x) / 2.0,
        y: (c[0].y + c[1].y) / 2.0,
    };
    let mut out = Vec::with_capacity(c.len() + 1);
    out.push(mid);
    out.extend_from_slice(&c[1..]);
    out.push(mid);
    LineString::new(out)
}

fn buffer_style(half_width: f64) -> BufferStyle<f64> {
    BufferStyle::new(half_width)
        .line_cap(LineCap::Butt)
        .line_join(LineJoin::Miter(MITRE_MIN_ANGLE))
}

/// Buffers every segment by its class half-width (flat caps, mitred joins) and
/// unions the result.
pub fn build_road_space(segments: &[RoadSegment], widths: &WidthTable) -> Result<RoadSpace> {
    let mut by_class: BTreeMap<u32, Vec<LineString<f64>>> = BTreeMap::new();
    for s in segments {
        widths.half_width(s.road_class)?;
        let line = open_at_seam(geometry::snap_line(&s.geometry, SNAP_TOLERANCE_M));
        if line.0.len() >= 2 {
            by_class.entry(s.road_class).or_default().push(line);
        }
    }
    let buffers: Vec<MultiPolygon<f64>> = by_class
        .into_par_iter()
        .map(|(class, lines)| {
            let w = widths.half_width(class).expect("checked above");
            MultiLineString::new(lines).buffer_with_style(buffer_style(w))
        })
        .collect();
    let polygons = match buffers.len() {
        0 => MultiPolygon::new(vec![]),
        1 => buffers.into_iter().next().expect("one buffer"),
        _ => unary_union(buffers.iter()),
    };
    let total_area = polygons.unsigned_area();
    Ok(RoadSpace {
        polygons,
        total_area,
    })
}

/// Parcels cut from one administrative unit plus the area bookkeeping.
#[derive(Debug, Clone)]
pub struct Delineation {
    pub admin_id: String,
    pub parcels: Vec<Parcel>,
    pub admin_area_m2: f64,
    /// Recorded at delineation, so it survives the parcels being moved out.
    pub parcel_area_m2: f64,
    pub road_area_m2: f64,
    pub sliver_area_m2: f64,
    pub slivers_dropped: usize,
}

impl Delineation {
    /// Relative gap in `parcels + road + slivers = admin`.
    pub fn conservation_residual(&self) -> f64 {
        let total = self.parcel_area_m2 + self.road_area_m2 + self.sliver_area_m2;
        (total - self.admin_area_m2).abs() / self.admin_area_m2
    }
}

fn road_near(road_space: &RoadSpace, admin: &AdminUnit) -> MultiPolygon<f64> {
    let Some(bbox) = admin.boundary.bounding_rect() else {
        return MultiPolygon::new(vec![]);
    };
    MultiPolygon::new(
        road_space
            .polygons
            .iter()
            .filter(|p| {
                p.bounding_rect().is_some_and(|r| {
                    r.min().x <= bbox.max().x
                        && r.max().x >= bbox.min().x
                        && r.min().y <= bbox.max().y
                        && r.max().y >= bbox.min().y
                })
            })
            .cloned()
            .collect(),
    )
}

/// Subtracts road space from an administrative unit; each connected remainder
/// at least `min_parcel_area_m2` large becomes a parcel.
pub fn delineate_parcels(
    admin: &AdminUnit,
    road_space: &RoadSpace,
    min_parcel_area_m2: f64,
) -> Result<Delineation> {
    let admin_area = admin.boundary.unsigned_area();
    if admin_area <= 0.0 {
        return Err(Error::DegenerateAdmin(admin.id.clone()));
    }
    let roads = road_near(road_space, admin);
    let (remainder, road_area) = if roads.0.is_empty() {
        (MultiPolygon::new(vec![admin.boundary.clone()]), 0.0)
    } else {
        (
            admin.boundary.difference(&roads),
            admin.boundary.intersection(&roads).unsigned_area(),
        )
    };
    let mut parcels = Vec::new();
    let mut parcel_area = 0.0;
    let mut sliver_area = 0.0;
    let mut slivers = 0;
    for poly in remainder {
        let a = poly.unsigned_area();
        if a < min_parcel_area_m2 {
            sliver_area += a;
            slivers += 1;
        } else {
            parcel_area += a;
            parcels.push(Parcel::new(poly, admin.id.clone()));
        }
    }
    Ok(Delineation {
        admin_id: admin.id.clone(),
        parcels,
        admin_area_m2: admin_area,
        parcel_area_m2: parcel_area,
        road_area_m2: road_area,
        sliver_area_m2: sliver_area,
        slivers_dropped: slivers,
    })
}

fn ordering_key(p: &Parcel) -> (f64, f64, f64, f64, f64) {
    let r = p.geometry.bounding_rect().expect("parcel has vertices");
    (r.min().x, r.min().y, r.max().x, r.max().y, p.area_km2)
}

/// Sorts parcels by (admin id, min x, min y) and numbers them from zero.
pub fn assign_parcel_ids(parcels: &mut [Parcel]) {
    parcels.sort_by(|a, b| {
        let (ka, kb) = (ordering_key(a), ordering_key(b));
        a.admin_id
            .cmp(&b.admin_id)
            .then(ka.0.total_cmp(&kb.0))
            .then(ka.1.total_cmp(&kb.1))
            .then(ka.2.total_cmp(&kb.2))
            .then(ka.3.total_cmp(&kb.3))
            .then(ka.4.total_cmp(&kb.4))
    });
    for (i, p) in parcels.iter_mut().enumerate() {
        p.id = ParcelId(i as u64);
    }
}

#[derive(Debug, Clone)]
pub struct Overlay {
    pub parcels: Vec<Parcel>,
    /// Ids (after renumbering) of parcels that lie outside every unit.
    pub unassigned: Vec<ParcelId>,
}

fn perimeter(p: &Polygon<f64>) -> f64 {
    Euclidean.length(p.exterior()) + p.interiors().iter().map(|r| Euclidean.length(r)).sum::<f64>()
}

fn overlay_one(parcel: &Parcel, units: &[AdminUnit], index: &RTree<geometry::IndexedEnvelope>, split: bool) -> Vec<Parcel> {
    let area = parcel.geometry.unsigned_area();
    let tol = SNAP_TOLERANCE_M * perimeter(&parcel.geometry);
    let Some(bbox) = parcel.geometry.bounding_rect() else {
        return vec![];
    };
    let mut candidates: Vec<usize> = index
        .locate_in_envelope_intersecting(&geometry::grow_rect(bbox, 0.0))
        .map(|e| e.data)
        .collect();
    candidates.sort_unstable();
    let pieces: Vec<(usize, MultiPolygon<f64>, f64)> = candidates
        .into_iter()
        .map(|u| {
            let inter = parcel.geometry.intersection(&units[u].boundary);
            let a = inter.unsigned_area();
            (u, inter, a)
        })
        .filter(|(_, _, a)| *a > tol)
        .collect();

    let inside: f64 = pieces.iter().map(|(_, _, a)| a).sum();
    if let [(u, _, a)] = pieces.as_slice() {
        if area - a <= tol {
            let mut whole = parcel.clone();
            whole.admin_id = units[*u].id.clone();
            return vec![whole];
        }
    }
    if !split {
        let mut whole = parcel.clone();
        whole.admin_id = pieces
            .iter()
            .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)))
            .map_or_else(|| UNASSIGNED.to_string(), |(u, _, _)| units[*u].id.clone());
        return vec![whole];
    }

    let mut out: Vec<Parcel> = pieces
        .into_iter()
        .flat_map(|(u, mp, _)| {
            mp.into_iter()
                .filter(|p| p.unsigned_area() > tol)
                .map(move |p| Parcel::new(p, units[u].id.clone()))
        })
        .collect();
    if area - inside > tol {
        let mut outside = MultiPolygon::new(vec![parcel.geometry.clone()]);
        for p in &out {
            outside = outside.difference(&p.geometry);
        }
        out.extend(
            outside
                .into_iter()
                .filter(|p| p.unsigned_area() > tol)
                .map(|p| Parcel::new(p, UNASSIGNED)),
        );
    }
    out
}

/// Assigns every parcel to the administrative unit containing it. With
/// `split`, parcels straddling units are cut at unit boundaries; otherwise the
/// unit holding most of the parcel's area wins. Ids are reissued.
pub fn overlay_admin(parcels: Vec<Parcel>, units: &[AdminUnit], split: bool) -> Overlay {
    let boundaries: Vec<&Polygon<f64>> = units.iter().map(|u| &u.boundary).collect();
    let index = geometry::polygon_index(&boundaries);
    let mut out: Vec<Parcel> = parcels
        .par_iter()
        .map(|p| overlay_one(p, units, &index, split))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    assign_parcel_ids(&mut out);
    let unassigned = out
        .iter()
        .filter(|p| p.admin_id == UNASSIGNED)
        .map(|p| p.id)
        .collect();
    Overlay {
        parcels: out,
        unassigned,
    }
}

#[derive(Debug, Clone)]
pub struct AicpParams {
    pub trim_threshold_m: f64,
    pub extension_m: f64,
    pub widths: WidthTable,
    pub min_parcel_area_m2: f64,
    pub split_straddling: bool,
}

impl Default for AicpParams {
    fn default() -> Self {
        AicpParams {
            trim_threshold_m: DEFAULT_TRIM_THRESHOLD_M,
            extension_m: DEFAULT_EXTENSION_M,
            widths: WidthTable::default(),
            min_parcel_area_m2: DEFAULT_MIN_PARCEL_AREA_M2,
            split_straddling: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AicpOutput {
    pub parcels: Vec<Parcel>,
    pub delineations: Vec<Delineation>,
    pub trimmed_segments: usize,
    pub road_area_m2: f64,
    pub unassigned: Vec<ParcelId>,
}

/// Runs all six delineation steps over a set of administrative units.
pub fn run_aicp(layers: &[RoadLayer], admins: &[AdminUnit], params: &AicpParams) -> Result<AicpOutput> {
    let ids: BTreeSet<&str> = admins.iter().map(|a| a.id.as_str()).collect();
    if ids.len() != admins.len() {
        return Err(Error::Config("duplicate administrative unit ids".into()));
    }
    let merged = merge_road_layers(layers)?;
    let trimmed = trim_dangles(&merged.segments, params.trim_threshold_m)?;
    let extended = extend_ends(&trimmed.segments, params.extension_m)?;
    let road_space = build_road_space(&extended, &params.widths)?;
    let mut delineations = admins
        .par_iter()
        .map(|a| delineate_parcels(a, &road_space, params.min_parcel_area_m2))
        .collect::<Result<Vec<_>>>()?;
    let parcels: Vec<Parcel> = delineations
        .iter_mut()
        .flat_map(|d| std::mem::take(&mut d.parcels))
        .collect();
    let overlay = overlay_admin(parcels, admins, params.split_straddling);
    Ok(AicpOutput {
        parcels: overlay.parcels,
        delineations,
        trimmed_segments: trimmed.removed.len(),
        road_area_m2: road_space.total_area,
        unassigned: overlay.unassigned,
    })
}
