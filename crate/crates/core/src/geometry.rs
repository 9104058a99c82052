//! Planar geometry helpers shared by the parcel, density and neighbor code.

use geo::{BoundingRect, Coord, LineString, MapCoords, Polygon, Rect};
use rstar::primitives::{GeomWithData, Rectangle};
use rstar::{RTree, AABB};

/// Snapping tolerance for all boolean geometry and endpoint matching, meters.
pub const SNAP_TOLERANCE_M: f64 = 0.01;

/// An axis-aligned envelope tagged with the index of the geometry it bounds.
pub type IndexedEnvelope = GeomWithData<Rectangle<[f64; 2]>, usize>;

pub fn envelope_of_rect(rect: Rect<f64>, index: usize) -> IndexedEnvelope {
    GeomWithData::new(
        Rectangle::from_corners(rect.min().into(), rect.max().into()),
        index,
    )
}

/// Bulk-loads an R-tree over the bounding boxes of `polygons`, keyed by slice position.
pub fn polygon_index(polygons: &[&Polygon<f64>]) -> RTree<IndexedEnvelope> {
    let items = polygons
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.bounding_rect().map(|r| envelope_of_rect(r, i)))
        .collect();
    RTree::bulk_load(items)
}

/// Envelope around `p` grown by `radius` in every direction.
pub fn query_box(p: Coord<f64>, radius: f64) -> AABB<[f64; 2]> {
    AABB::from_corners([p.x - radius, p.y - radius], [p.x + radius, p.y + radius])
}

pub fn grow_rect(rect: Rect<f64>, by: f64) -> AABB<[f64; 2]> {
    AABB::from_corners(
        [rect.min().x - by, rect.min().y - by],
        [rect.max().x + by, rect.max().y + by],
    )
}

pub fn snap_coord(c: Coord<f64>, grid: f64) -> Coord<f64> {
    Coord {
        x: (c.x / grid).round() * grid,
        y: (c.y / grid).round() * grid,
    }
}

pub fn snap_line(line: &LineString<f64>, grid: f64) -> LineString<f64> {
    let mut snapped = line.map_coords(|c| snap_coord(c, grid));
    snapped.0.dedup();
    snapped
}

pub fn coords_close(a: Coord<f64>, b: Coord<f64>, tol: f64) -> bool {
    (a.x - b.x).hypot(a.y - b.y) <= tol
}

pub fn polyline_length(line: &LineString<f64>) -> f64 {
    line.0
        .windows(2)
        .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
        .sum()
}

/// Distance from `p` to the segment `a`-`b`.
pub fn point_segment_distance(p: Coord<f64>, a: Coord<f64>, b: Coord<f64>) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return (p.x - a.x).hypot(p.y - a.y);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    let qx = a.x + t * dx;
    let qy = a.y + t * dy;
    (p.x - qx).hypot(p.y - qy)
}
