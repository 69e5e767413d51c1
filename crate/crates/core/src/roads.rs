//! Road network ingestion and Voronoi seed selection.
//!
//! The network comes in as a GeoJSON FeatureCollection of LineStrings.
//! Vertices that coincide within a snapping tolerance merge into a single
//! node, so junctions duplicated across ways (the usual situation in OSM
//! exports) get a true intersection degree. High-degree intersections then
//! serve as tessellation seeds: a greedy pass keeps seeds at least `d_small`
//! apart, and a coverage pass drops lattice-center fallbacks wherever the
//! road graph leaves a hole bigger than `d_big`.

use serde::Serialize;
use serde_json::Value;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geo::{BoundingBox, PlanarPoint, Projection};
use crate::geojson;

/// Default vertex snapping tolerance in meters.
pub const DEFAULT_SNAP_TOL: f64 = 0.5;

/// Default minimum intersection degree for seed candidates.
pub const DEFAULT_MIN_DEGREE: usize = 4;

#[derive(Clone, Debug, Serialize)]
pub struct RoadNode {
    pub id: usize,
    pub pos: PlanarPoint,
    /// Number of incident road segments after vertex merging.
    pub degree: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RoadSegment {
    pub u: usize,
    pub v: usize,
    pub length: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RoadNetwork {
    pub nodes: Vec<RoadNode>,
    pub segments: Vec<RoadSegment>,
    pub bbox: BoundingBox,
    /// Features skipped because their geometry was not a LineString.
    pub skipped_features: usize,
}

impl RoadNetwork {
    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedSource {
    RoadNode,
    FallbackGrid,
}

/// Voronoi seed points with their provenance.
#[derive(Clone, Debug, Serialize)]
pub struct SeedSet {
    pub seeds: Vec<PlanarPoint>,
    pub sources: Vec<SeedSource>,
    pub d_small: f64,
    pub d_big: f64,
}

impl SeedSet {
    /// Validates the spacing and lattice-coverage invariants.
    fn new(
        seeds: Vec<PlanarPoint>,
        sources: Vec<SeedSource>,
        d_small: f64,
        d_big: f64,
        bbox: &BoundingBox,
    ) -> Result<Self> {
        debug_assert_eq!(seeds.len(), sources.len());
        for i in 0..seeds.len() {
            for j in (i + 1)..seeds.len() {
                if seeds[i].distance(seeds[j]) < d_small {
                    return Err(Error::InvalidParameter(format!(
                        "seeds {i} and {j} closer than d_small = {d_small}"
                    )));
                }
            }
        }
        // Every lattice cell center is within d_big of a seed, which bounds
        // any bbox point's distance to a seed by d_big * (1 + sqrt(2)/2).
        for center in lattice_centers(bbox, d_big) {
            let nearest = seeds
                .iter()
                .map(|s| s.distance(center))
                .fold(f64::INFINITY, f64::min);
            if nearest > d_big {
                return Err(Error::InvalidParameter(format!(
                    "lattice center ({}, {}) not covered within d_big = {d_big}",
                    center.x, center.y
                )));
            }
        }
        Ok(Self { seeds, sources, d_small, d_big })
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }
}

/// Parse a GeoJSON FeatureCollection of LineString/MultiLineString roads.
///
/// Every vertex becomes a node candidate; candidates within `snap_tol`
/// meters merge. Consecutive vertex pairs become undirected segments, with
/// duplicates across features collapsed.
pub fn parse_road_geojson(
    bytes: &[u8],
    proj: &Projection,
    snap_tol: f64,
) -> Result<RoadNetwork> {
    if snap_tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("snap_tol must be > 0, got {snap_tol}")));
    }
    let features = geojson::feature_collection(bytes)?;

    let mut merger = VertexMerger::new(snap_tol);
    let mut segment_keys: HashMap<(usize, usize), ()> = HashMap::new();
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut skipped = 0usize;

    for (index, feature) in features.iter().enumerate() {
        let Some((kind, coords)) = geojson::geometry(feature, index)? else {
            skipped += 1;
            continue;
        };
        let lines: Vec<&Value> = match kind {
            "LineString" => vec![coords],
            "MultiLineString" => coords
                .as_array()
                .ok_or_else(|| Error::GeoJsonFeature {
                    feature: index,
                    message: "MultiLineString coordinates are not an array".into(),
                })?
                .iter()
                .collect(),
            _ => {
                skipped += 1;
                continue;
            }
        };
        for line in lines {
            let positions = line.as_array().ok_or_else(|| Error::GeoJsonFeature {
                feature: index,
                message: "LineString coordinates are not an array".into(),
            })?;
            let mut prev: Option<usize> = None;
            for pos in positions {
                let g = geojson::position(pos, index)?;
                if !g.is_valid() {
                    return Err(Error::GeoJsonFeature {
                        feature: index,
                        message: format!("coordinate ({}, {}) outside WGS84 range", g.lon, g.lat),
                    });
                }
                let node = merger.insert(proj.project(g));
                if let Some(p) = prev {
                    if p != node {
                        let key = (p.min(node), p.max(node));
                        if segment_keys.insert(key, ()).is_none() {
                            segments.push(key);
                        }
                    }
                }
                prev = Some(node);
            }
        }
    }

    let positions = merger.positions;
    let mut degree = vec![0usize; positions.len()];
    let road_segments: Vec<RoadSegment> = segments
        .iter()
        .map(|&(u, v)| {
            degree[u] += 1;
            degree[v] += 1;
            RoadSegment { u, v, length: positions[u].distance(positions[v]) }
        })
        .collect();
    let nodes: Vec<RoadNode> = positions
        .iter()
        .enumerate()
        .map(|(id, &pos)| RoadNode { id, pos, degree: degree[id] })
        .collect();
    let bbox = BoundingBox::from_points(positions.iter().copied())
        .unwrap_or(BoundingBox { min_x: 0.0, min_y: 0.0, max_x: 0.0, max_y: 0.0 });

    Ok(RoadNetwork { nodes, segments: road_segments, bbox, skipped_features: skipped })
}

/// Grid-hashed vertex merging: a new vertex reuses the nearest existing node
/// within `tol` (ties to the lowest id), searching the 3x3 cell neighborhood.
struct VertexMerger {
    tol: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    positions: Vec<PlanarPoint>,
}

impl VertexMerger {
    fn new(tol: f64) -> Self {
        Self { tol, cells: HashMap::new(), positions: Vec::new() }
    }

    fn cell(&self, p: PlanarPoint) -> (i64, i64) {
        ((p.x / self.tol).floor() as i64, (p.y / self.tol).floor() as i64)
    }

    fn insert(&mut self, p: PlanarPoint) -> usize {
        let (cx, cy) = self.cell(p);
        let mut best: Option<(usize, f64)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.cells.get(&(cx + dx, cy + dy)) {
                    for &id in ids {
                        let d = self.positions[id].distance(p);
                        if d <= self.tol {
                            let better = match best {
                                None => true,
                                Some((bid, bd)) => d < bd || (d == bd && id < bid),
                            };
                            if better {
                                best = Some((id, d));
                            }
                        }
                    }
                }
            }
        }
        if let Some((id, _)) = best {
            return id;
        }
        let id = self.positions.len();
        self.positions.push(p);
        self.cells.entry((cx, cy)).or_default().push(id);
        id
    }
}

/// Centers of a `d_big`-pitch lattice laid over `bbox`, with the last
/// row/column clipped to the box so centers always fall inside it.
fn lattice_centers(bbox: &BoundingBox, pitch: f64) -> Vec<PlanarPoint> {
    let cols = ((bbox.width() / pitch).ceil() as usize).max(1);
    let rows = ((bbox.height() / pitch).ceil() as usize).max(1);
    let mut centers = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let x0 = bbox.min_x + c as f64 * pitch;
            let y0 = bbox.min_y + r as f64 * pitch;
            let x1 = (x0 + pitch).min(bbox.max_x);
            let y1 = (y0 + pitch).min(bbox.max_y);
            centers.push(PlanarPoint::new((x0 + x1) * 0.5, (y0 + y1) * 0.5));
        }
    }
    centers
}

/// Select Voronoi seeds from high-degree intersections.
///
/// Candidates of degree >= `min_degree` are taken greedily in (degree desc,
/// id asc) order subject to the `d_small` spacing; lattice centers farther
/// than `d_big` from every seed accepted so far are then added as fallbacks
/// so sparse areas stay covered.
pub fn select_seeds(
    net: &RoadNetwork,
    min_degree: usize,
    d_small: f64,
    d_big: f64,
) -> Result<SeedSet> {
    if !(d_small > 0.0 && d_small < d_big) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < d_small < d_big, got d_small = {d_small}, d_big = {d_big}"
        )));
    }
    if min_degree < 1 {
        return Err(Error::InvalidParameter("min_degree must be >= 1".into()));
    }
    if net.nodes.is_empty() && net.bbox.is_degenerate() {
        return Err(Error::NoSeedsDerivable);
    }

    let mut candidates: Vec<&RoadNode> =
        net.nodes.iter().filter(|n| n.degree >= min_degree).collect();
    candidates.sort_by(|a, b| b.degree.cmp(&a.degree).then(a.id.cmp(&b.id)));

    let mut seeds: Vec<PlanarPoint> = Vec::new();
    let mut sources: Vec<SeedSource> = Vec::new();
    for cand in candidates {
        if seeds.iter().all(|s| s.distance(cand.pos) >= d_small) {
            seeds.push(cand.pos);
            sources.push(SeedSource::RoadNode);
        }
    }

    for center in lattice_centers(&net.bbox, d_big) {
        if seeds.iter().all(|s| s.distance(center) > d_big) {
            seeds.push(center);
            sources.push(SeedSource::FallbackGrid);
        }
    }

    if seeds.is_empty() {
        return Err(Error::NoSeedsDerivable);
    }
    SeedSet::new(seeds, sources, d_small, d_big, &net.bbox)
}
