//! Reading and writing pipeline inputs and artifacts.
//!
//! Vector data is GeoJSON, tables are CSV with a header row, and small
//! parameter sets are TOML. Parse failures name the file and the offending
//! feature index or CSV line. Writers produce byte-stable output: one feature
//! per line, sorted property keys, shortest round-trip float formatting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use geo::{Centroid, LineString, MultiLineString, MultiPolygon, Point, Polygon};
use geojson::{Feature, Geometry, GeometryValue, JsonObject, JsonValue};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::expansion_sim::{CalibratedWeights, CityRecord, CitySimulation, ScenarioRules, SizeClass, StateRecord};
use crate::exposure::{CityAggregation, ExposureReport, StationReading, Subdistrict};
use crate::poi_density::PoiPoint;
use crate::road_parcel::{AdminUnit, LandState, Parcel, ParcelId, RoadLayer, RoadSegment, WidthTable};
use crate::urban_identify::CityRunLog;

/// Writes through a sibling temp file so readers never see partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn input_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Input {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn feature_err(path: &Path, index: usize, reason: impl Into<String>) -> Error {
    Error::Feature {
        path: path.to_path_buf(),
        index,
        reason: reason.into(),
    }
}

// ---------------------------------------------------------------- GeoJSON

/// A parsed feature collection with its top-level foreign members (e.g. `crs`).
#[derive(Debug, Clone, Default)]
pub struct FeatureFile {
    pub features: Vec<Feature>,
    pub foreign: JsonObject,
}

impl FeatureFile {
    /// CRS declared either as a string or as `{"properties": {"name": ...}}`.
    pub fn crs(&self) -> Option<String> {
        match self.foreign.get("crs")? {
            JsonValue::String(s) => Some(s.clone()),
            JsonValue::Object(o) => o
                .get("properties")
                .and_then(|p| p.get("name"))
                .and_then(JsonValue::as_str)
                .map(str::to_string),
            _ => None,
        }
    }
}

pub fn read_feature_file(path: &Path) -> Result<FeatureFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut root: JsonValue = serde_json::from_str(&text).map_err(|e| input_err(path, format!("not JSON: {e}")))?;
    let obj = root
        .as_object_mut()
        .ok_or_else(|| input_err(path, "top level is not an object"))?;
    if obj.get("type").and_then(JsonValue::as_str) != Some("FeatureCollection") {
        return Err(input_err(path, "expected a FeatureCollection"));
    }
    let raw = match obj.remove("features") {
        Some(JsonValue::Array(a)) => a,
        _ => return Err(input_err(path, "`features` is missing or not an array")),
    };
    obj.remove("type");
    let foreign = std::mem::take(obj);
    let features = raw
        .into_iter()
        .enumerate()
        .map(|(i, v)| serde_json::from_value::<Feature>(v).map_err(|e| feature_err(path, i, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureFile { features, foreign })
}

pub fn write_feature_file(path: &Path, file: &FeatureFile) -> Result<()> {
    let mut out = b"{\"type\":\"FeatureCollection\"".to_vec();
    for (k, v) in &file.foreign {
        out.push(b',');
        serde_json::to_writer(&mut out, k).expect("serializable");
        out.push(b':');
        serde_json::to_writer(&mut out, v).expect("serializable");
    }
    out.extend_from_slice(b",\"features\":[\n");
    for (i, f) in file.features.iter().enumerate() {
        if i > 0 {
            out.extend_from_slice(b",\n");
        }
        serde_json::to_writer(&mut out, f).map_err(|e| input_err(path, e.to_string()))?;
    }
    out.extend_from_slice(b"\n]}\n");
    write_atomic(path, &out)
}

fn crs_member(crs: Option<&str>) -> JsonObject {
    let mut m = JsonObject::new();
    if let Some(c) = crs {
        m.insert("crs".into(), JsonValue::String(c.to_string()));
    }
    m
}

fn geometry_of<'a>(f: &'a Feature, path: &Path, i: usize) -> Result<&'a GeometryValue> {
    f.geometry
        .as_ref()
        .map(|g| &g.value)
        .ok_or_else(|| feature_err(path, i, "feature has no geometry"))
}

fn prop<'a>(f: &'a Feature, key: &str) -> Option<&'a JsonValue> {
    f.properties.as_ref()?.get(key).filter(|v| !v.is_null())
}

fn prop_f64(f: &Feature, key: &str, path: &Path, i: usize) -> Result<f64> {
    prop(f, key)
        .and_then(JsonValue::as_f64)
        .ok_or_else(|| feature_err(path, i, format!("property `{key}` missing or not a number")))
}

fn prop_u64(f: &Feature, key: &str, path: &Path, i: usize) -> Result<u64> {
    prop(f, key)
        .and_then(JsonValue::as_u64)
        .ok_or_else(|| feature_err(path, i, format!("property `{key}` missing or not a non-negative integer")))
}

/// String property; numbers are accepted and rendered as text.
fn prop_text(f: &Feature, key: &str) -> Option<String> {
    match prop(f, key)? {
        JsonValue::String(s) => Some(s.clone()),
        JsonValue::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Road layer; each feature needs an integer `class` property. Multi-part
/// lines become one segment per part.
pub fn load_roads(path: &Path) -> Result<RoadLayer> {
    let file = read_feature_file(path)?;
    let crs = file.crs();
    let mut segments = Vec::new();
    for (i, f) in file.features.iter().enumerate() {
        let class = prop_u64(f, "class", path, i)?;
        let class = u32::try_from(class).map_err(|_| feature_err(path, i, "class out of range"))?;
        let parts: Vec<LineString<f64>> = match geometry_of(f, path, i)? {
            g @ GeometryValue::LineString { .. } => vec![LineString::try_from(g).map_err(|e| feature_err(path, i, e.to_string()))?],
            g @ GeometryValue::MultiLineString { .. } => MultiLineString::try_from(g)
                .map_err(|e| feature_err(path, i, e.to_string()))?
                .0,
            other => return Err(feature_err(path, i, format!("expected a line, got {}", other.type_name()))),
        };
        for line in parts {
            let seg = RoadSegment::new(segments.len() as u64, line, class)
                .map_err(|e| feature_err(path, i, e.to_string()))?;
            segments.push(seg);
        }
    }
    Ok(RoadLayer { crs, segments })
}

pub fn save_roads(path: &Path, layer: &RoadLayer) -> Result<()> {
    let features = layer
        .segments
        .iter()
        .map(|s| {
            let mut props = JsonObject::new();
            props.insert("class".into(), s.road_class.into());
            props.insert("id".into(), s.id.into());
            feature(GeometryValue::from(&s.geometry), props)
        })
        .collect();
    write_feature_file(
        path,
        &FeatureFile {
            features,
            foreign: crs_member(layer.crs.as_deref()),
        },
    )
}

fn feature(geometry: GeometryValue, properties: JsonObject) -> Feature {
    Feature {
        bbox: None,
        geometry: Some(Geometry::new(geometry)),
        id: None,
        properties: Some(properties),
        foreign_members: None,
    }
}

fn single_polygon(g: &GeometryValue, path: &Path, i: usize) -> Result<Polygon<f64>> {
    match g {
        GeometryValue::Polygon { .. } => Polygon::try_from(g).map_err(|e| feature_err(path, i, e.to_string())),
        GeometryValue::MultiPolygon { .. } => {
            let mp = MultiPolygon::try_from(g).map_err(|e| feature_err(path, i, e.to_string()))?;
            match <[Polygon<f64>; 1]>::try_from(mp.0) {
                Ok([p]) => Ok(p),
                Err(v) => Err(feature_err(path, i, format!("multipolygon with {} parts; split it first", v.len()))),
            }
        }
        other => Err(feature_err(path, i, format!("expected a polygon, got {}", other.type_name()))),
    }
}

/// Administrative units; `id` is required, `name` defaults to the id.
pub fn load_admin(path: &Path) -> Result<(Vec<AdminUnit>, Option<String>)> {
    let file = read_feature_file(path)?;
    let crs = file.crs();
    let units = file
        .features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let id = prop_text(f, "id").ok_or_else(|| feature_err(path, i, "property `id` missing"))?;
            let name = prop_text(f, "name").unwrap_or_else(|| id.clone());
            let poly = single_polygon(geometry_of(f, path, i)?, path, i)?;
            AdminUnit::new(id, name, poly).map_err(|e| feature_err(path, i, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((units, crs))
}

pub fn save_admin(path: &Path, units: &[AdminUnit], crs: Option<&str>) -> Result<()> {
    let features = units
        .iter()
        .map(|u| {
            let mut props = JsonObject::new();
            props.insert("id".into(), u.id.clone().into());
            props.insert("name".into(), u.name.clone().into());
            feature(GeometryValue::from(&u.boundary), props)
        })
        .collect();
    write_feature_file(
        path,
        &FeatureFile {
            features,
            foreign: crs_member(crs),
        },
    )
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

#[derive(Debug, Serialize, Deserialize)]
struct PoiRow {
    id: String,
    x: f64,
    y: f64,
    #[serde(default)]
    category: String,
}

/// POIs from `id,x,y,category` CSV or point GeoJSON.
pub fn load_pois(path: &Path) -> Result<Vec<PoiPoint>> {
    if is_csv(path) {
        return Ok(read_csv::<PoiRow>(path)?
            .into_iter()
            .map(|r| PoiPoint {
                id: r.id,
                location: Point::new(r.x, r.y),
                category: r.category,
            })
            .collect());
    }
    let file = read_feature_file(path)?;
    file.features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let g = geometry_of(f, path, i)?;
            let location = Point::try_from(g).map_err(|e| feature_err(path, i, e.to_string()))?;
            Ok(PoiPoint {
                id: prop_text(f, "id").unwrap_or_else(|| i.to_string()),
                location,
                category: prop_text(f, "category").unwrap_or_default(),
            })
        })
        .collect()
}

pub fn save_pois_csv(path: &Path, pois: &[PoiPoint]) -> Result<()> {
    write_csv(
        path,
        pois.iter().map(|p| PoiRow {
            id: p.id.clone(),
            x: p.location.x(),
            y: p.location.y(),
            category: p.category.clone(),
        }),
    )
}

/// Parcels with every attribute. `flips`, when given, adds the 1-based
/// iteration in which each parcel turned urban.
pub fn save_parcels(path: &Path, parcels: &[Parcel], flips: Option<&[Option<u32>]>, crs: Option<&str>) -> Result<()> {
    if let Some(f) = flips {
        if f.len() != parcels.len() {
            return Err(Error::LengthMismatch(format!("{} parcels, {} flip entries", parcels.len(), f.len())));
        }
    }
    let features = parcels
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut props = JsonObject::new();
            props.insert("id".into(), p.id.0.into());
            props.insert("admin_id".into(), p.admin_id.clone().into());
            props.insert("area_km2".into(), p.area_km2.into());
            props.insert("poi_count".into(), p.poi_count.into());
            props.insert("density_raw".into(), p.density_raw.into());
            props.insert("density_std".into(), p.density_std.into());
            props.insert("state".into(), p.state.as_str().into());
            props.insert("urban".into(), p.state.code().into());
            if let Some(f) = flips {
                props.insert("flip_iter".into(), f[i].map_or(JsonValue::Null, JsonValue::from));
            }
            if !p.attributes.is_empty() {
                let attrs: JsonObject = p.attributes.iter().map(|(k, v)| (k.clone(), (*v).into())).collect();
                props.insert("attributes".into(), attrs.into());
            }
            feature(GeometryValue::from(&p.geometry), props)
        })
        .collect();
    write_feature_file(
        path,
        &FeatureFile {
            features,
            foreign: crs_member(crs),
        },
    )
}

pub fn load_parcels(path: &Path) -> Result<Vec<Parcel>> {
    let file = read_feature_file(path)?;
    file.features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let geometry = single_polygon(geometry_of(f, path, i)?, path, i)?;
            let state_text = prop_text(f, "state").ok_or_else(|| feature_err(path, i, "property `state` missing"))?;
            let state = LandState::parse(&state_text)
                .ok_or_else(|| feature_err(path, i, format!("unknown state `{state_text}`")))?;
            let attributes = match prop(f, "attributes") {
                None => BTreeMap::new(),
                Some(JsonValue::Object(o)) => o
                    .iter()
                    .map(|(k, v)| {
                        v.as_f64()
                            .map(|x| (k.clone(), x))
                            .ok_or_else(|| feature_err(path, i, format!("attribute `{k}` is not a number")))
                    })
                    .collect::<Result<_>>()?,
                Some(_) => return Err(feature_err(path, i, "`attributes` is not an object")),
            };
            let poi_count = u32::try_from(prop_u64(f, "poi_count", path, i)?)
                .map_err(|_| feature_err(path, i, "poi_count out of range"))?;
            Ok(Parcel {
                id: ParcelId(prop_u64(f, "id", path, i)?),
                geometry,
                area_km2: prop_f64(f, "area_km2", path, i)?,
                admin_id: prop_text(f, "admin_id").ok_or_else(|| feature_err(path, i, "property `admin_id` missing"))?,
                poi_count,
                density_raw: prop_f64(f, "density_raw", path, i)?,
                density_std: prop_f64(f, "density_std", path, i)?,
                state,
                attributes,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- CSV

/// Deserializes every row, reporting the 1-based file line of a bad record.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input_err(path, e.to_string()))?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        match row {
            Ok(r) => out.push(r),
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(Error::Record {
                    path: path.to_path_buf(),
                    line,
                    reason: match e.kind() {
                        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                        _ => e.to_string(),
                    },
                });
            }
        }
    }
    Ok(out)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| input_err(path, e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| input_err(path, e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Writes only the header when there are no rows.
fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(|e| input_err(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| input_err(path, e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| input_err(path, e.to_string()))?;
    write_atomic(path, &bytes)
}

fn flexible_bool<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(serde::de::Error::custom(format!("`{other}` is not a boolean"))),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WidthRow {
    class: u32,
    half_width_m: f64,
}

pub fn load_width_table(path: &Path) -> Result<WidthTable> {
    let rows: Vec<WidthRow> = read_csv(path)?;
    let mut map = BTreeMap::new();
    for r in rows {
        if map.insert(r.class, r.half_width_m).is_some() {
            return Err(input_err(path, format!("class {} listed twice", r.class)));
        }
    }
    WidthTable::new(map)
}

pub fn save_width_table(path: &Path, table: &WidthTable) -> Result<()> {
    write_csv(path, table.iter().map(|(class, half_width_m)| WidthRow { class, half_width_m }))
}

#[derive(Debug, Serialize, Deserialize)]
struct TargetRow {
    admin_id: String,
    target_urban_km2: f64,
}

/// Urban area targets per administrative unit.
pub fn load_targets(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for r in read_csv::<TargetRow>(path)? {
        if out.insert(r.admin_id.clone(), r.target_urban_km2).is_some() {
            return Err(input_err(path, format!("admin {} listed twice", r.admin_id)));
        }
    }
    Ok(out)
}

pub fn save_targets(path: &Path, targets: &BTreeMap<String, f64>) -> Result<()> {
    write_csv(
        path,
        targets.iter().map(|(k, v)| TargetRow {
            admin_id: k.clone(),
            target_urban_km2: *v,
        }),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct CityRow {
    city_id: String,
    existing_urban_km2: f64,
    historical_cagr: f64,
    #[serde(deserialize_with = "flexible_bool")]
    in_agglomeration: bool,
    size_class: SizeClass,
}

pub fn load_cities(path: &Path) -> Result<Vec<CityRecord>> {
    Ok(read_csv::<CityRow>(path)?
        .into_iter()
        .map(|r| CityRecord {
            city_id: r.city_id,
            existing_urban_km2: r.existing_urban_km2,
            historical_cagr: r.historical_cagr,
            in_agglomeration: r.in_agglomeration,
            size_class: r.size_class,
        })
        .collect())
}

pub fn save_cities(path: &Path, cities: &[CityRecord]) -> Result<()> {
    write_csv(
        path,
        cities.iter().map(|c| CityRow {
            city_id: c.city_id.clone(),
            existing_urban_km2: c.existing_urban_km2,
            historical_cagr: c.historical_cagr,
            in_agglomeration: c.in_agglomeration,
            size_class: c.size_class,
        }),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct StationRow {
    station_id: String,
    x: f64,
    y: f64,
    date: NaiveDate,
    /// Empty for a missing reading.
    pm25: Option<f64>,
}

/// Daily readings; rows with an empty value are skipped as missing.
pub fn load_stations(path: &Path) -> Result<Vec<StationReading>> {
    let rows: Vec<StationRow> = read_csv(path)?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, r) in rows.into_iter().enumerate() {
        let Some(pm25) = r.pm25 else { continue };
        if !(pm25 >= 0.0) || !pm25.is_finite() {
            return Err(Error::Record {
                path: path.to_path_buf(),
                line: i as u64 + 2,
                reason: format!("pm25 {pm25} must be finite and >= 0"),
            });
        }
        out.push(StationReading {
            station_id: r.station_id,
            location: Point::new(r.x, r.y),
            date: r.date,
            pm25,
        });
    }
    Ok(out)
}

pub fn save_stations(path: &Path, readings: &[StationReading]) -> Result<()> {
    write_csv(
        path,
        readings.iter().map(|r| StationRow {
            station_id: r.station_id.clone(),
            x: r.location.x(),
            y: r.location.y(),
            date: r.date,
            pm25: Some(r.pm25),
        }),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct SupplementRow {
    x: f64,
    y: f64,
    date: NaiveDate,
    pm25: f64,
}

pub fn load_supplement(path: &Path) -> Result<Vec<StationReading>> {
    Ok(read_csv::<SupplementRow>(path)?
        .into_iter()
        .map(|r| StationReading {
            station_id: String::new(),
            location: Point::new(r.x, r.y),
            date: r.date,
            pm25: r.pm25,
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct SubdistrictRow {
    id: String,
    x: f64,
    y: f64,
    pop_density: f64,
    d0_14: f64,
    d15_64: f64,
    d65p: f64,
    city_id: String,
}

/// Sub-districts from CSV (`x,y` is the centroid) or polygon GeoJSON.
pub fn load_subdistricts(path: &Path) -> Result<Vec<Subdistrict>> {
    if is_csv(path) {
        return Ok(read_csv::<SubdistrictRow>(path)?
            .into_iter()
            .map(|r| Subdistrict {
                id: r.id,
                location: Point::new(r.x, r.y),
                polygon: None,
                pop_density: r.pop_density,
                d0_14: r.d0_14,
                d15_64: r.d15_64,
                d65p: r.d65p,
                city_id: r.city_id,
            })
            .collect());
    }
    let file = read_feature_file(path)?;
    file.features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let poly = single_polygon(geometry_of(f, path, i)?, path, i)?;
            let location = poly
                .centroid()
                .ok_or_else(|| feature_err(path, i, "polygon has no centroid"))?;
            Ok(Subdistrict {
                id: prop_text(f, "id").ok_or_else(|| feature_err(path, i, "property `id` missing"))?,
                location,
                polygon: Some(poly),
                pop_density: prop_f64(f, "pop_density", path, i)?,
                d0_14: prop_f64(f, "d0_14", path, i)?,
                d15_64: prop_f64(f, "d15_64", path, i)?,
                d65p: prop_f64(f, "d65p", path, i)?,
                city_id: prop_text(f, "city_id").ok_or_else(|| feature_err(path, i, "property `city_id` missing"))?,
            })
        })
        .collect()
}

pub fn save_subdistricts_csv(path: &Path, subs: &[Subdistrict]) -> Result<()> {
    write_csv(
        path,
        subs.iter().map(|s| SubdistrictRow {
            id: s.id.clone(),
            x: s.location.x(),
            y: s.location.y(),
            pop_density: s.pop_density,
            d0_14: s.d0_14,
            d15_64: s.d15_64,
            d65p: s.d65p,
            city_id: s.city_id.clone(),
        }),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct StateRow {
    id: u64,
    state: String,
}

/// Parcel states keyed by id; `state` is `urban`/`non_urban` or `1`/`0`.
pub fn load_states(path: &Path) -> Result<BTreeMap<ParcelId, LandState>> {
    let mut out = BTreeMap::new();
    for (i, r) in read_csv::<StateRow>(path)?.into_iter().enumerate() {
        let line = i as u64 + 2;
        let state = LandState::parse(&r.state).ok_or_else(|| Error::Record {
            path: path.to_path_buf(),
            line,
            reason: format!("unknown state `{}`", r.state),
        })?;
        if out.insert(ParcelId(r.id), state).is_some() {
            return Err(Error::Record {
                path: path.to_path_buf(),
                line,
                reason: format!("parcel {} listed twice", r.id),
            });
        }
    }
    Ok(out)
}

pub fn save_states(path: &Path, states: &[StateRecord]) -> Result<()> {
    write_csv(
        path,
        states.iter().map(|s| StateRow {
            id: s.id.0,
            state: s.state.as_str().to_string(),
        }),
    )
}

#[derive(Serialize)]
struct IdentifyLogRow<'a> {
    city_id: &'a str,
    target_km2: f64,
    achieved_km2: f64,
    iteration: u32,
    flipped: usize,
    flipped_area_km2: f64,
}

/// One row per city iteration; cities that never iterate get a row with iteration 0.
pub fn save_identify_log(path: &Path, logs: &[CityRunLog]) -> Result<()> {
    let mut rows = Vec::new();
    for l in logs {
        if l.iterations.is_empty() {
            rows.push(IdentifyLogRow {
                city_id: &l.city_id,
                target_km2: l.target_km2,
                achieved_km2: l.achieved_km2,
                iteration: 0,
                flipped: 0,
                flipped_area_km2: 0.0,
            });
        }
        for it in &l.iterations {
            rows.push(IdentifyLogRow {
                city_id: &l.city_id,
                target_km2: l.target_km2,
                achieved_km2: l.achieved_km2,
                iteration: it.iteration,
                flipped: it.flipped,
                flipped_area_km2: it.flipped_area_km2,
            });
        }
    }
    write_csv_with_header(
        path,
        &["city_id", "target_km2", "achieved_km2", "iteration", "flipped", "flipped_area_km2"],
        &rows,
    )
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulateSummaryRow {
    pub city_id: String,
    pub target_km2: f64,
    pub achieved_km2: f64,
    pub shortfall_km2: f64,
    pub max_flipped_km2: f64,
    pub iterations: u32,
    pub flips: usize,
}

pub fn save_simulate_summary(path: &Path, cities: &[CitySimulation]) -> Result<()> {
    let rows: Vec<SimulateSummaryRow> = cities
        .iter()
        .map(|c| SimulateSummaryRow {
            city_id: c.city_id.clone(),
            target_km2: c.target_km2,
            achieved_km2: c.achieved_km2,
            shortfall_km2: c.shortfall_km2,
            max_flipped_km2: c.max_flipped_km2,
            iterations: c.iterations,
            flips: c.flips.len(),
        })
        .collect();
    write_csv_with_header(
        path,
        &["city_id", "target_km2", "achieved_km2", "shortfall_km2", "max_flipped_km2", "iterations", "flips"],
        &rows,
    )
}

pub fn load_simulate_summary(path: &Path) -> Result<Vec<SimulateSummaryRow>> {
    read_csv(path)
}

#[derive(Serialize)]
struct AnnualRow<'a> {
    subdistrict_id: &'a str,
    city_id: &'a str,
    valid_days: usize,
    exposed_days: u32,
    intensity: f64,
    intensity_0_14: f64,
    intensity_15_64: f64,
    intensity_65p: f64,
    exposed_months: u32,
}

#[derive(Serialize)]
struct MonthlyRow<'a> {
    subdistrict_id: &'a str,
    month: String,
    exceed_days: u32,
    valid_days: u32,
}

#[derive(Serialize)]
struct CityRow2<'a> {
    city_id: &'a str,
    subdistricts: usize,
    mean_intensity: Option<f64>,
    mean_exposed_days: Option<f64>,
    mean_exposed_months: Option<f64>,
}

/// Writes the annual, monthly and per-city exposure tables.
pub fn save_exposure(annual: &Path, monthly: &Path, city: &Path, report: &ExposureReport) -> Result<()> {
    let rows: Vec<AnnualRow> = report
        .series
        .iter()
        .map(|s| AnnualRow {
            subdistrict_id: &s.subdistrict_id,
            city_id: &s.city_id,
            valid_days: s.daily.iter().flatten().count(),
            exposed_days: s.exposed_days,
            intensity: s.intensity,
            intensity_0_14: s.group_intensity[0],
            intensity_15_64: s.group_intensity[1],
            intensity_65p: s.group_intensity[2],
            exposed_months: s.exposed_months,
        })
        .collect();
    write_csv_with_header(
        annual,
        &[
            "subdistrict_id",
            "city_id",
            "valid_days",
            "exposed_days",
            "intensity",
            "intensity_0_14",
            "intensity_15_64",
            "intensity_65p",
            "exposed_months",
        ],
        &rows,
    )?;
    let rows: Vec<MonthlyRow> = report
        .series
        .iter()
        .flat_map(|s| {
            s.monthly.iter().map(|m| MonthlyRow {
                subdistrict_id: &s.subdistrict_id,
                month: m.month.to_string(),
                exceed_days: m.exceed_days,
                valid_days: m.valid_days,
            })
        })
        .collect();
    write_csv_with_header(monthly, &["subdistrict_id", "month", "exceed_days", "valid_days"], &rows)?;
    write_csv_with_header(
        city,
        &["city_id", "subdistricts", "mean_intensity", "mean_exposed_days", "mean_exposed_months"],
        &city_rows(&report.cities),
    )
}

fn city_rows(agg: &CityAggregation) -> Vec<CityRow2<'_>> {
    let mut rows: Vec<CityRow2> = agg
        .cities
        .iter()
        .map(|(c, m)| CityRow2 {
            city_id: c,
            subdistricts: m.members,
            mean_intensity: Some(m.mean_intensity),
            mean_exposed_days: Some(m.mean_exposed_days),
            mean_exposed_months: Some(m.mean_exposed_months),
        })
        .collect();
    rows.extend(agg.empty.iter().map(|c| CityRow2 {
        city_id: c,
        subdistricts: 0,
        mean_intensity: None,
        mean_exposed_days: None,
        mean_exposed_months: None,
    }));
    rows.sort_by(|a, b| a.city_id.cmp(b.city_id));
    rows
}

// ---------------------------------------------------------------- TOML

fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| input_err(path, e.to_string()))
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| input_err(path, e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

pub fn load_weights(path: &Path) -> Result<CalibratedWeights> {
    let w: CalibratedWeights = read_toml(path)?;
    w.validate().map_err(|e| input_err(path, e.to_string()))?;
    Ok(w)
}

pub fn save_weights(path: &Path, weights: &CalibratedWeights) -> Result<()> {
    write_toml(path, weights)
}

pub fn load_scenario_rules(path: &Path) -> Result<ScenarioRules> {
    read_toml(path)
}

pub fn save_scenario_rules(path: &Path, rules: &ScenarioRules) -> Result<()> {
    write_toml(path, rules)
}
