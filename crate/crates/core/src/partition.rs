//! Region construction: the three interchangeable spatial mapping strategies.
//!
//! A `Partition` turns the city extent into graph nodes. Grid and Voronoi
//! partitions tile their bounding box exactly; administrative partitions
//! take region outlines from a GeoJSON file and may leave gaps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geo::{
    halfplane_clip, polygon_area, BoundingBox, PlanarPoint, Polygon, Projection,
};
use crate::geojson;
use crate::roads::SeedSet;

/// Coordinates from administrative files are snapped to this grid (meters)
/// to absorb digitization noise before boundary comparison.
pub const ADMIN_SNAP_GRID: f64 = 0.001;

/// Relative tolerance for the exact-tiling invariant.
const TILING_REL_TOL: f64 = 1e-6;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Grid,
    Admin,
    Voronoi,
}

impl RegionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionKind::Grid => "grid",
            RegionKind::Admin => "admin",
            RegionKind::Voronoi => "voronoi",
        }
    }
}

/// Partition-level construction parameters, kept for downstream stages that
/// need the layout (grid adjacency works on row/column arithmetic).
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PartitionScheme {
    Grid { rows: usize, cols: usize, cell_size: f64 },
    Admin,
    Voronoi,
}

impl PartitionScheme {
    pub fn region_kind(&self) -> RegionKind {
        match self {
            PartitionScheme::Grid { .. } => RegionKind::Grid,
            PartitionScheme::Admin => RegionKind::Admin,
            PartitionScheme::Voronoi => RegionKind::Voronoi,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Region {
    pub id: usize,
    pub geometry: Polygon,
    pub kind: RegionKind,
    pub label: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Partition {
    regions: Vec<Region>,
    pub proj: Projection,
    pub bbox: BoundingBox,
    pub scheme: PartitionScheme,
}

impl Partition {
    fn new(
        regions: Vec<Region>,
        proj: Projection,
        bbox: BoundingBox,
        scheme: PartitionScheme,
    ) -> Result<Self> {
        for (i, r) in regions.iter().enumerate() {
            if r.id != i {
                return Err(Error::Geometry(format!(
                    "region ids must be dense from 0; found {} at position {i}",
                    r.id
                )));
            }
            if polygon_area(&r.geometry) <= 0.0 {
                return Err(Error::Geometry(format!("region {i} has zero area")));
            }
        }
        if matches!(scheme, PartitionScheme::Grid { .. } | PartitionScheme::Voronoi) {
            let total: f64 = regions.iter().map(|r| polygon_area(&r.geometry)).sum();
            let expected = bbox.area();
            if (total - expected).abs() > TILING_REL_TOL * expected {
                return Err(Error::Geometry(format!(
                    "partition does not tile its bbox: regions sum to {total}, bbox area {expected}"
                )));
            }
        }
        Ok(Self { regions, proj, bbox, scheme })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Tile `bbox` with square cells of `cell_size` meters, row-major from the
/// lower-left corner. The last row/column is clipped so the tiling is exact.
pub fn grid_partition(bbox: &BoundingBox, cell_size: f64, proj: Projection) -> Result<Partition> {
    if cell_size <= 0.0 {
        return Err(Error::InvalidParameter(format!("cell_size must be > 0, got {cell_size}")));
    }
    if bbox.is_degenerate() {
        return Err(Error::Geometry("grid partition needs a non-degenerate bbox".into()));
    }
    let cols = (bbox.width() / cell_size).ceil() as usize;
    let rows = (bbox.height() / cell_size).ceil() as usize;
    let mut regions = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            let x0 = bbox.min_x + col as f64 * cell_size;
            let y0 = bbox.min_y + row as f64 * cell_size;
            let cell = BoundingBox {
                min_x: x0,
                min_y: y0,
                max_x: (x0 + cell_size).min(bbox.max_x),
                max_y: (y0 + cell_size).min(bbox.max_y),
            };
            regions.push(Region {
                id: row * cols + col,
                geometry: Polygon::rectangle(&cell),
                kind: RegionKind::Grid,
                label: Some(format!("{row},{col}")),
            });
        }
    }
    Partition::new(regions, proj, *bbox, PartitionScheme::Grid { rows, cols, cell_size })
}

/// One region per administrative feature, ids in file order.
///
/// MultiPolygon parts become sibling regions labeled `"<id>-k"`. Within each
/// part the largest ring is taken as the exterior and the rest as holes.
/// Coordinates are snapped to [`ADMIN_SNAP_GRID`] after projection.
pub fn admin_partition(bytes: &[u8], proj: Projection, id_property: &str) -> Result<Partition> {
    let features = geojson::feature_collection(bytes)?;
    let mut regions: Vec<Region> = Vec::new();

    for (index, feature) in features.iter().enumerate() {
        let label = geojson::string_property(feature, id_property).ok_or_else(|| {
            Error::MissingProperty { feature: index, property: id_property.to_string() }
        })?;
        let Some((kind, coords)) = geojson::geometry(feature, index)? else {
            return Err(Error::GeoJsonFeature {
                feature: index,
                message: "feature has no geometry".into(),
            });
        };
        let parts: Vec<&Value> = match kind {
            "Polygon" => vec![coords],
            "MultiPolygon" => coords
                .as_array()
                .ok_or_else(|| Error::GeoJsonFeature {
                    feature: index,
                    message: "MultiPolygon coordinates are not an array".into(),
                })?
                .iter()
                .collect(),
            other => {
                return Err(Error::GeoJsonFeature {
                    feature: index,
                    message: format!("unsupported geometry type {other:?}"),
                })
            }
        };
        let multi = parts.len() > 1 || kind == "MultiPolygon";
        for (part_idx, part) in parts.iter().enumerate() {
            let geometry = parse_polygon_part(part, index, &proj)?;
            let label = if multi { format!("{label}-{part_idx}") } else { label.clone() };
            regions.push(Region {
                id: regions.len(),
                geometry,
                kind: RegionKind::Admin,
                label: Some(label),
            });
        }
    }

    let bbox = regions
        .iter()
        .map(|r| r.geometry.bounds())
        .reduce(|a, b| a.merge(&b))
        .ok_or_else(|| Error::EmptyInput("admin file has no regions".into()))?;
    Partition::new(regions, proj, bbox, PartitionScheme::Admin)
}

fn parse_polygon_part(part: &Value, index: usize, proj: &Projection) -> Result<Polygon> {
    let rings_json = part.as_array().ok_or_else(|| Error::GeoJsonFeature {
        feature: index,
        message: "Polygon coordinates are not an array of rings".into(),
    })?;
    if rings_json.is_empty() {
        return Err(Error::GeoJsonFeature { feature: index, message: "polygon has no rings".into() });
    }
    let mut rings: Vec<Vec<PlanarPoint>> = Vec::with_capacity(rings_json.len());
    for ring_json in rings_json {
        let positions = ring_json.as_array().ok_or_else(|| Error::GeoJsonFeature {
            feature: index,
            message: "ring is not an array of positions".into(),
        })?;
        let mut ring = Vec::with_capacity(positions.len());
        for pos in positions {
            let g = geojson::position(pos, index)?;
            let p = proj.project(g);
            ring.push(PlanarPoint::new(snap(p.x), snap(p.y)));
        }
        rings.push(ring);
    }
    // Largest ring is the exterior regardless of input order.
    let largest = rings
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            ring_abs_area(a).partial_cmp(&ring_abs_area(b)).expect("finite areas")
        })
        .map(|(i, _)| i)
        .expect("at least one ring");
    let exterior = rings.remove(largest);
    Polygon::new(exterior, rings)
        .map_err(|e| Error::GeoJsonFeature { feature: index, message: e.to_string() })
}

fn snap(v: f64) -> f64 {
    (v / ADMIN_SNAP_GRID).round() * ADMIN_SNAP_GRID
}

fn ring_abs_area(ring: &[PlanarPoint]) -> f64 {
    let mut acc = 0.0;
    for i in 0..ring.len() {
        let a = ring[i];
        let b = ring[(i + 1) % ring.len()];
        acc += a.x * b.y - b.x * a.y;
    }
    (acc * 0.5).abs()
}

/// Half-plane Voronoi tessellation of `bbox` around the given seeds.
///
/// Each cell is the bbox clipped against the perpendicular bisector to every
/// other seed, visited nearest-first so the running cell radius prunes the
/// O(n^2) construction. Cell construction is parallel over seeds and results
/// are assembled by seed index, so the output is schedule-independent.
pub fn voronoi_partition(seeds: &SeedSet, bbox: &BoundingBox, proj: Projection) -> Result<Partition> {
    let pts = &seeds.seeds;
    if pts.is_empty() {
        return Err(Error::InvalidParameter("voronoi needs at least one seed".into()));
    }
    for (i, p) in pts.iter().enumerate() {
        if !bbox.contains(*p) {
            return Err(Error::SeedOutsideBounds { index: i });
        }
        for (j, q) in pts.iter().enumerate().skip(i + 1) {
            if p.distance(*q) < 1e-9 {
                return Err(Error::DuplicateSeeds { a: i, b: j });
            }
        }
    }

    let cells: Vec<Polygon> = (0..pts.len())
        .into_par_iter()
        .map(|i| voronoi_cell(pts, i, bbox))
        .collect();

    let regions: Vec<Region> = cells
        .into_iter()
        .enumerate()
        .map(|(id, geometry)| Region {
            id,
            geometry,
            kind: RegionKind::Voronoi,
            label: Some(id.to_string()),
        })
        .collect();
    Partition::new(regions, proj, *bbox, PartitionScheme::Voronoi)
}

fn voronoi_cell(seeds: &[PlanarPoint], i: usize, bbox: &BoundingBox) -> Polygon {
    let site = seeds[i];
    let mut order: Vec<usize> = (0..seeds.len()).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| {
        site.distance_sq(seeds[a])
            .partial_cmp(&site.distance_sq(seeds[b]))
            .expect("finite distances")
            .then(a.cmp(&b))
    });

    let mut cell = Polygon::rectangle(bbox);
    let mut max_r_sq = cell_radius_sq(&cell, site);
    for &j in &order {
        // A bisector at distance d/2 cannot cut a cell of radius r < d/2.
        if site.distance_sq(seeds[j]) > 4.0 * max_r_sq {
            break;
        }
        if let Some(clipped) = halfplane_clip(&cell, site, seeds[j]) {
            cell = clipped;
            max_r_sq = cell_radius_sq(&cell, site);
        } else {
            // Only possible through float degeneracy; the seed keeps its
            // previous cell rather than vanishing.
            break;
        }
    }
    cell
}

fn cell_radius_sq(cell: &Polygon, site: PlanarPoint) -> f64 {
    cell.exterior()
        .iter()
        .map(|v| site.distance_sq(*v))
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Partition file format
// ---------------------------------------------------------------------------

/// One region as stored in the partition file, holes included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionFileRegion {
    pub id: usize,
    pub kind: RegionKind,
    pub label: Option<String>,
    pub exterior: Vec<[f64; 2]>,
    pub holes: Vec<Vec<[f64; 2]>>,
}

/// Full-fidelity partition document: scheme, projection, bbox, regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub scheme: PartitionScheme,
    pub proj: Projection,
    pub bbox: BoundingBox,
    pub regions: Vec<PartitionFileRegion>,
}

pub fn write_partition_json(part: &Partition) -> String {
    let file = PartitionFile {
        scheme: part.scheme,
        proj: part.proj,
        bbox: part.bbox,
        regions: part
            .regions
            .iter()
            .map(|r| PartitionFileRegion {
                id: r.id,
                kind: r.kind,
                label: r.label.clone(),
                exterior: r.geometry.exterior().iter().map(|p| [p.x, p.y]).collect(),
                holes: r
                    .geometry
                    .holes()
                    .iter()
                    .map(|h| h.iter().map(|p| [p.x, p.y]).collect())
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("partition serialization cannot fail")
}

/// Parse and re-validate a partition document.
pub fn read_partition_json(bytes: &[u8]) -> Result<Partition> {
    let file: PartitionFile = serde_json::from_slice(bytes)?;
    let regions = file
        .regions
        .into_iter()
        .map(|r| {
            let ring = |pts: Vec<[f64; 2]>| -> Vec<PlanarPoint> {
                pts.into_iter().map(|[x, y]| PlanarPoint::new(x, y)).collect()
            };
            let geometry =
                Polygon::new(ring(r.exterior), r.holes.into_iter().map(ring).collect())?;
            Ok(Region { id: r.id, geometry, kind: r.kind, label: r.label })
        })
        .collect::<Result<Vec<_>>>()?;
    Partition::new(regions, file.proj, file.bbox, file.scheme)
}
