//! POI assignment and land-use intensity.
//!
//! Raw density is POIs per km² with a floor of one; standardized density is
//! `ln(raw) / ln(max_raw)` over the study region.

use geo::{Contains, Distance, Euclidean, Point};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, polygon_index};
use crate::road_parcel::Parcel;

pub const DEFAULT_NEAR_DISTANCE_M: f64 = 50.0;
pub const MIN_RAW_DENSITY: f64 = 1.0;
const DEGENERATE_MAX_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiPoint {
    pub id: String,
    pub location: Point<f64>,
    pub category: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityStats {
    pub max_raw: f64,
    pub min_raw_floor: f64,
}

impl DensityStats {
    pub fn new(max_raw: f64) -> Result<Self> {
        if !(max_raw >= MIN_RAW_DENSITY) {
            return Err(Error::param("max_raw", format!("{max_raw} is below the floor of 1")));
        }
        Ok(DensityStats {
            max_raw,
            min_raw_floor: MIN_RAW_DENSITY,
        })
    }

    /// Reduction over every parcel's raw density.
    pub fn from_parcels(parcels: &[Parcel]) -> Result<Self> {
        let max = parcels
            .par_iter()
            .map(raw_density)
            .try_reduce(|| MIN_RAW_DENSITY, |a, b| Ok(a.max(b)))?;
        DensityStats::new(max)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoiAssignment {
    /// POIs per parcel, aligned with the parcel slice.
    pub counts: Vec<u32>,
    pub assigned: usize,
    /// Ids of POIs farther than the near distance from every parcel.
    pub discarded: Vec<String>,
}

/// Index of the parcel that receives `poi`, if any.
///
/// Containment wins; otherwise the nearest parcel within `near_distance_m`.
/// Ties go to the earlier parcel.
fn owner(
    poi: &PoiPoint,
    parcels: &[Parcel],
    index: &rstar::RTree<geometry::IndexedEnvelope>,
    near_distance_m: f64,
) -> Option<usize> {
    let p = poi.location;
    let mut candidates: Vec<usize> = index
        .locate_in_envelope_intersecting(&geometry::query_box(p.0, near_distance_m))
        .map(|e| e.data)
        .collect();
    candidates.sort_unstable();
    if let Some(&i) = candidates.iter().find(|&&i| parcels[i].geometry.contains(&p)) {
        return Some(i);
    }
    candidates
        .into_iter()
        .map(|i| (i, Euclidean.distance(&p, &parcels[i].geometry)))
        .filter(|(_, d)| *d <= near_distance_m)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}

/// Counts POIs per parcel. Each POI counts at most once.
pub fn count_pois(parcels: &[Parcel], pois: &[PoiPoint], near_distance_m: f64) -> Result<PoiAssignment> {
    if !(near_distance_m >= 0.0) {
        return Err(Error::param(
            "near_distance_m",
            format!("{near_distance_m} must be >= 0"),
        ));
    }
    let geoms: Vec<_> = parcels.iter().map(|p| &p.geometry).collect();
    let index = polygon_index(&geoms);
    let owners: Vec<Option<usize>> = pois
        .par_iter()
        .map(|poi| owner(poi, parcels, &index, near_distance_m))
        .collect();
    let mut out = PoiAssignment {
        counts: vec![0; parcels.len()],
        ..Default::default()
    };
    for (poi, o) in pois.iter().zip(owners) {
        match o {
            Some(i) => {
                out.counts[i] += 1;
                out.assigned += 1;
            }
            None => out.discarded.push(poi.id.clone()),
        }
    }
    Ok(out)
}

/// Writes POI counts onto the parcels and returns the assignment report.
pub fn assign_pois(parcels: &mut [Parcel], pois: &[PoiPoint], near_distance_m: f64) -> Result<PoiAssignment> {
    let report = count_pois(parcels, pois, near_distance_m)?;
    for (p, c) in parcels.iter_mut().zip(&report.counts) {
        p.poi_count = *c;
    }
    Ok(report)
}

/// POIs per km², floored at one.
pub fn raw_density(parcel: &Parcel) -> Result<f64> {
    raw_density_of(parcel.poi_count, parcel.area_km2).map_err(|_| Error::ZeroAreaParcel(parcel.id.0))
}

pub fn raw_density_of(poi_count: u32, area_km2: f64) -> Result<f64> {
    if !(area_km2 > 0.0) {
        return Err(Error::param("area_km2", format!("{area_km2} must be > 0")));
    }
    Ok((poi_count as f64 / area_km2).max(MIN_RAW_DENSITY))
}

/// `ln(raw) / ln(max_raw)`, or 0 when the region maximum is at the floor.
pub fn standardize_density(raw: f64, stats: &DensityStats) -> Result<f64> {
    if !(raw >= MIN_RAW_DENSITY) {
        return Err(Error::param("raw", format!("{raw} is below the floor of 1")));
    }
    if raw > stats.max_raw {
        return Err(Error::DensityAboveMax {
            raw,
            max: stats.max_raw,
        });
    }
    if stats.max_raw <= MIN_RAW_DENSITY + DEGENERATE_MAX_EPS {
        return Ok(0.0);
    }
    Ok((raw.ln() / stats.max_raw.ln()).clamp(0.0, 1.0))
}

/// Fills `density_raw` and `density_std` for every parcel. When `stats` is
/// `None` the maximum is taken over `parcels` themselves.
pub fn apply_density(parcels: &mut [Parcel], stats: Option<DensityStats>) -> Result<DensityStats> {
    let raws = parcels
        .par_iter()
        .map(raw_density)
        .collect::<Result<Vec<_>>>()?;
    let stats = match stats {
        Some(s) => s,
        None => DensityStats::new(raws.iter().copied().fold(MIN_RAW_DENSITY, f64::max))?,
    };
    for (p, raw) in parcels.iter_mut().zip(raws) {
        p.density_raw = raw;
        p.density_std = standardize_density(raw, &stats)?;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road_parcel::{assign_parcel_ids, ParcelId};
    use geo::{coord, Rect};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Parcel {
        Parcel::new(
            Rect::new(coord! { x: x0, y: y0 }, coord! { x: x1, y: y1 }).to_polygon(),
            "A",
        )
    }

    fn poi(id: usize, x: f64, y: f64) -> PoiPoint {
        PoiPoint {
            id: id.to_string(),
            location: Point::new(x, y),
            category: "shop".into(),
        }
    }

    fn stats(max: f64) -> DensityStats {
        DensityStats::new(max).unwrap()
    }

    #[test]
    fn poi_at_centroid_counts() {
        let mut parcels = vec![rect(0.0, 0.0, 100.0, 100.0)];
        let r = assign_pois(&mut parcels, &[poi(0, 50.0, 50.0)], 50.0).unwrap();
        assert_eq!(parcels[0].poi_count, 1);
        assert_eq!(r.assigned, 1);
    }

    #[test]
    fn road_poi_goes_to_nearest_parcel() {
        // Road center-line at x = 108; A's edge is 8 m away, B's 15 m.
        let mut parcels = vec![rect(0.0, 0.0, 100.0, 100.0), rect(123.0, 0.0, 200.0, 100.0)];
        let r = assign_pois(&mut parcels, &[poi(0, 108.0, 50.0)], 20.0).unwrap();
        assert_eq!((parcels[0].poi_count, parcels[1].poi_count), (1, 0));
        assert!(r.discarded.is_empty());
    }

    #[test]
    fn far_poi_is_discarded() {
        let mut parcels = vec![rect(0.0, 0.0, 100.0, 100.0)];
        let r = assign_pois(&mut parcels, &[poi(7, 300.0, 50.0)], 50.0).unwrap();
        assert_eq!(parcels[0].poi_count, 0);
        assert_eq!(r.discarded, vec!["7".to_string()]);
    }

    #[test]
    fn random_pois_match_exhaustive_oracle() {
        // 2x2 grid of 400 m parcels separated by a 20 m cross street.
        let mut parcels = vec![
            rect(0.0, 0.0, 400.0, 400.0),
            rect(420.0, 0.0, 820.0, 400.0),
            rect(0.0, 420.0, 400.0, 820.0),
            rect(420.0, 420.0, 820.0, 820.0),
        ];
        assign_parcel_ids(&mut parcels);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pois: Vec<PoiPoint> = (0..1000)
            .map(|i| poi(i, rng.random_range(-30.0..850.0), rng.random_range(-30.0..850.0)))
            .collect();
        let near = 15.0;
        let r = count_pois(&parcels, &pois, near).unwrap();

        // Oracle: axis-aligned rectangles, so containment and distance are closed-form.
        let mut expected = vec![0u32; 4];
        let mut discarded = 0;
        for p in &pois {
            let (x, y) = (p.location.x(), p.location.y());
            let mut best: Option<(f64, usize)> = None;
            for (i, parcel) in parcels.iter().enumerate() {
                let b = geo::BoundingRect::bounding_rect(&parcel.geometry).unwrap();
                let dx = (b.min().x - x).max(0.0).max(x - b.max().x);
                let dy = (b.min().y - y).max(0.0).max(y - b.max().y);
                let d = dx.hypot(dy);
                let inside = x > b.min().x && x < b.max().x && y > b.min().y && y < b.max().y;
                let d = if inside { -1.0 } else { d };
                if d <= near && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
            match best {
                Some((_, i)) => expected[i] += 1,
                None => discarded += 1,
            }
        }
        assert_eq!(r.counts, expected);
        assert_eq!(r.discarded.len(), discarded);
        assert_eq!(r.counts.iter().sum::<u32>() as usize + r.discarded.len(), 1000);
    }

    #[test]
    fn raw_density_examples() {
        assert_eq!(raw_density_of(50, 0.5).unwrap(), 100.0);
        assert_eq!(raw_density_of(0, 3.7).unwrap(), 1.0);
        assert_eq!(raw_density_of(1, 2.0).unwrap(), 1.0);
        assert!(raw_density_of(1, 0.0).is_err());
        let mut p = rect(0.0, 0.0, 1.0, 1.0);
        p.area_km2 = 0.0;
        p.id = ParcelId(4);
        assert!(matches!(raw_density(&p), Err(Error::ZeroAreaParcel(4))));
    }

    #[test]
    fn standardize_examples() {
        assert_eq!(standardize_density(10_000.0, &stats(10_000.0)).unwrap(), 1.0);
        assert_eq!(standardize_density(1.0, &stats(10_000.0)).unwrap(), 0.0);
        assert!((standardize_density(100.0, &stats(10_000.0)).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(standardize_density(1.0, &stats(1.0)).unwrap(), 0.0);
        assert!(matches!(
            standardize_density(20.0, &stats(10.0)),
            Err(Error::DensityAboveMax { .. })
        ));
    }

    #[test]
    fn apply_density_uses_region_max() {
        let mut parcels = vec![rect(0.0, 0.0, 1000.0, 1000.0), rect(2000.0, 0.0, 3000.0, 1000.0)];
        parcels[0].poi_count = 100;
        parcels[1].poi_count = 10_000;
        let s = apply_density(&mut parcels, None).unwrap();
        assert_eq!(s.max_raw, 10_000.0);
        assert!((parcels[0].density_std - 0.5).abs() < 1e-12);
        assert_eq!(parcels[1].density_std, 1.0);
    }

    proptest! {
        #[test]
        fn range_and_monotonicity(a in 1.0f64..1e6, b in 1.0f64..1e6, extra in 0.0f64..1e6) {
            let max = a.max(b) + extra + 1.0;
            let s = stats(max);
            let (lo, hi) = (a.min(b), a.max(b));
            let slo = standardize_density(lo, &s).unwrap();
            let shi = standardize_density(hi, &s).unwrap();
            prop_assert!((0.0..=1.0).contains(&slo) && (0.0..=1.0).contains(&shi));
            if hi > lo * (1.0 + 1e-12) {
                prop_assert!(shi > slo);
            }
        }

        #[test]
        fn log_base_cancels(raw in 1.0f64..1e5, extra in 1e-3f64..1e5, base in 1.5f64..20.0) {
            let max = raw + extra;
            let natural = standardize_density(raw, &stats(max)).unwrap();
            let other = raw.log(base) / max.log(base);
            prop_assert!((natural - other).abs() < 1e-12);
        }

        #[test]
        fn doubling_counts_shifts_logs(count in 1u32..5000, max_count in 5000u32..20000) {
            let area = 0.25;
            let raw = raw_density_of(count, area).unwrap();
            let max = raw_density_of(max_count, area).unwrap();
            let raw2 = raw_density_of(2 * count, area).unwrap();
            let max2 = raw_density_of(2 * max_count, area).unwrap();
            let got = standardize_density(raw2, &stats(max2)).unwrap();
            let expected = (raw.ln() + 2f64.ln()) / (max.ln() + 2f64.ln());
            prop_assert!((got - expected).abs() < 1e-12);
        }
    }
}
