//! Region-adjacency graph construction and its JSON file format.
//!
//! Edge weights carry the strength of the spatial relation: for grid and
//! boundary-based adjacency the length of the shared border, and for
//! road-seeded Voronoi partitions the total road length crossing between
//! the two regions.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::events::{resolve_region, BucketIndex, UrbanFeatures};
use crate::geo::shared_boundary_length;
use crate::partition::{Partition, PartitionScheme};
use crate::roads::RoadNetwork;

/// Default collinearity tolerance (meters) for shared-border detection.
pub const DEFAULT_BOUNDARY_TOL: f64 = 0.01;

/// Undirected weighted edge, stored once with `u < v`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum GridNeighbors {
    Rook,
    Queen,
}

/// Regions, adjacency, and optional static features.
#[derive(Clone, Debug)]
pub struct RegionGraph {
    pub partition: Partition,
    pub edges: Vec<GraphEdge>,
    pub static_features: Option<UrbanFeatures>,
}

/// Rook adjacency for grids; shared-border adjacency otherwise.
pub fn build_adjacency(part: &Partition, tol: f64) -> Vec<GraphEdge> {
    build_adjacency_with(part, tol, GridNeighbors::Rook)
}

/// Adjacency with an explicit grid connectivity choice. Queen connectivity
/// adds diagonal edges with weight `0.1 * cell_size`, since point contact
/// has no shared border length of its own.
pub fn build_adjacency_with(
    part: &Partition,
    tol: f64,
    grid_neighbors: GridNeighbors,
) -> Vec<GraphEdge> {
    match part.scheme {
        PartitionScheme::Grid { rows, cols, cell_size } => {
            grid_adjacency(part, rows, cols, cell_size, grid_neighbors)
        }
        PartitionScheme::Admin | PartitionScheme::Voronoi => boundary_adjacency(part, tol),
    }
}

fn grid_adjacency(
    part: &Partition,
    rows: usize,
    cols: usize,
    cell_size: f64,
    neighbors: GridNeighbors,
) -> Vec<GraphEdge> {
    let bbox = &part.bbox;
    let col_width =
        |c: usize| (bbox.width() - c as f64 * cell_size).min(cell_size);
    let row_height =
        |r: usize| (bbox.height() - r as f64 * cell_size).min(cell_size);

    let mut edges = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
    for r in 0..rows {
        for c in 0..cols {
            let id = r * cols + c;
            if c + 1 < cols {
                // Vertical shared side: its length is this row's height.
                edges.push(GraphEdge { u: id, v: id + 1, weight: row_height(r) });
            }
            if r + 1 < rows {
                // Horizontal shared side: its length is this column's width.
                edges.push(GraphEdge { u: id, v: id + cols, weight: col_width(c) });
            }
            if neighbors == GridNeighbors::Queen {
                if r + 1 < rows && c + 1 < cols {
                    edges.push(GraphEdge { u: id, v: id + cols + 1, weight: 0.1 * cell_size });
                }
                if r + 1 < rows && c > 0 {
                    edges.push(GraphEdge { u: id, v: id + cols - 1, weight: 0.1 * cell_size });
                }
            }
        }
    }
    sort_edges(&mut edges);
    edges
}

fn boundary_adjacency(part: &Partition, tol: f64) -> Vec<GraphEdge> {
    let regions = part.regions();
    let boxes: Vec<_> = regions.iter().map(|r| r.geometry.bounds()).collect();
    let mut edges = Vec::new();
    for i in 0..regions.len() {
        for j in (i + 1)..regions.len() {
            let grown = crate::geo::BoundingBox {
                min_x: boxes[i].min_x - tol,
                min_y: boxes[i].min_y - tol,
                max_x: boxes[i].max_x + tol,
                max_y: boxes[i].max_y + tol,
            };
            if !grown.intersects(&boxes[j]) {
                continue;
            }
            let shared = shared_boundary_length(&regions[i].geometry, &regions[j].geometry, tol);
            if shared > 0.0 {
                edges.push(GraphEdge { u: i, v: j, weight: shared });
            }
        }
    }
    sort_edges(&mut edges);
    edges
}

/// Weight edges of a Voronoi partition by shared road length: each segment
/// whose endpoints resolve to two different regions adds its length to that
/// pair. Segments with an endpoint outside all regions are ignored.
pub fn build_road_weights(part: &Partition, net: &RoadNetwork) -> Result<Vec<GraphEdge>> {
    if !matches!(part.scheme, PartitionScheme::Voronoi) {
        return Err(Error::NotVoronoi);
    }
    let index = BucketIndex::build(part)?;
    let region_of: Vec<Option<usize>> =
        net.nodes.iter().map(|n| resolve_region(n.pos, part, &index)).collect();

    let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for seg in &net.segments {
        let (Some(ru), Some(rv)) = (region_of[seg.u], region_of[seg.v]) else {
            continue;
        };
        if ru == rv {
            continue;
        }
        *weights.entry((ru.min(rv), ru.max(rv))).or_insert(0.0) += seg.length;
    }
    Ok(weights
        .into_iter()
        .filter(|&(_, w)| w > 0.0)
        .map(|((u, v), weight)| GraphEdge { u, v, weight })
        .collect())
}

fn sort_edges(edges: &mut [GraphEdge]) {
    edges.sort_by(|a, b| a.u.cmp(&b.u).then(a.v.cmp(&b.v)));
}

/// Validate and assemble the final graph; edges are canonicalized to
/// `u < v` and sorted for deterministic serialization.
pub fn assemble_graph(
    part: Partition,
    edges: Vec<GraphEdge>,
    features: Option<UrbanFeatures>,
) -> Result<RegionGraph> {
    let n = part.len();
    let mut edges: Vec<GraphEdge> = edges
        .into_iter()
        .map(|e| {
            if e.u == e.v {
                return Err(Error::InvalidParameter(format!("self-loop on region {}", e.u)));
            }
            if e.u >= n || e.v >= n {
                return Err(Error::DanglingEdge { u: e.u, v: e.v, regions: n });
            }
            if !e.weight.is_finite() || e.weight <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "edge ({}, {}) has non-positive weight {}",
                    e.u, e.v, e.weight
                )));
            }
            Ok(GraphEdge { u: e.u.min(e.v), v: e.u.max(e.v), weight: e.weight })
        })
        .collect::<Result<_>>()?;
    sort_edges(&mut edges);
    for pair in edges.windows(2) {
        if pair[0].u == pair[1].u && pair[0].v == pair[1].v {
            return Err(Error::InvalidParameter(format!(
                "duplicate edge ({}, {})",
                pair[0].u, pair[0].v
            )));
        }
    }
    if let Some(f) = &features {
        if f.matrix.len() != n {
            return Err(Error::FeatureRowMismatch { rows: f.matrix.len(), regions: n });
        }
    }
    Ok(RegionGraph { partition: part, edges, static_features: features })
}

// ---------------------------------------------------------------------------
// Graph file format
// ---------------------------------------------------------------------------

/// One region as stored in the graph file (exterior ring only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFileRegion {
    pub id: usize,
    pub kind: String,
    pub label: Option<String>,
    pub ring: Vec<[f64; 2]>,
}

/// The on-disk graph document. Field order is part of the format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub regions: Vec<GraphFileRegion>,
    pub edges: Vec<(usize, usize, f64)>,
    pub feature_categories: Vec<String>,
    pub features: Vec<Vec<f64>>,
}

impl GraphFile {
    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn static_features(&self) -> Option<UrbanFeatures> {
        if self.feature_categories.is_empty() {
            return None;
        }
        Some(UrbanFeatures {
            categories: self.feature_categories.clone(),
            matrix: self.features.clone(),
            normalized: false,
        })
    }
}

impl From<&RegionGraph> for GraphFile {
    fn from(g: &RegionGraph) -> Self {
        GraphFile {
            regions: g
                .partition
                .regions()
                .iter()
                .map(|r| GraphFileRegion {
                    id: r.id,
                    kind: r.kind.as_str().to_string(),
                    label: r.label.clone(),
                    ring: r.geometry.exterior().iter().map(|p| [p.x, p.y]).collect(),
                })
                .collect(),
            edges: g.edges.iter().map(|e| (e.u, e.v, e.weight)).collect(),
            feature_categories: g
                .static_features
                .as_ref()
                .map(|f| f.categories.clone())
                .unwrap_or_default(),
            features: g
                .static_features
                .as_ref()
                .map(|f| f.matrix.clone())
                .unwrap_or_default(),
        }
    }
}

pub fn write_graph_json(g: &RegionGraph) -> String {
    serde_json::to_string(&GraphFile::from(g)).expect("graph serialization cannot fail")
}

pub fn read_graph_json(bytes: &[u8]) -> Result<GraphFile> {
    let file: GraphFile = serde_json::from_slice(bytes)?;
    for &(u, v, w) in &file.edges {
        if u >= file.regions.len() || v >= file.regions.len() {
            return Err(Error::DanglingEdge { u, v, regions: file.regions.len() });
        }
        if !w.is_finite() || w <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "edge ({u}, {v}) has non-positive weight {w}"
            )));
        }
    }
    if !file.feature_categories.is_empty() && file.features.len() != file.regions.len() {
        return Err(Error::FeatureRowMismatch {
            rows: file.features.len(),
            regions: file.regions.len(),
        });
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{BoundingBox, GeoPoint, PlanarPoint, Projection};
    use crate::partition::{admin_partition, grid_partition, voronoi_partition};
    use crate::roads::{SeedSet, SeedSource};

    fn proj() -> Projection {
        Projection::centered_at(GeoPoint::new(0.0, 0.0)).unwrap()
    }

    #[test]
    fn grid_3x3_rook_has_12_edges_of_weight_500() {
        // Oracle: 2 * 3 * 2 enumeration.
        let bbox = BoundingBox::new(0.0, 0.0, 1500.0, 1500.0).unwrap();
        let part = grid_partition(&bbox, 500.0, proj()).unwrap();
        let edges = build_adjacency(&part, DEFAULT_BOUNDARY_TOL);
        assert_eq!(edges.len(), 12);
        for e in &edges {
            assert_eq!(e.weight, 500.0);
        }
    }

    #[test]
    fn grid_rook_edge_count_formula() {
        let bbox = BoundingBox::new(0.0, 0.0, 2300.0, 1700.0).unwrap();
        let part = grid_partition(&bbox, 500.0, proj()).unwrap();
        let (rows, cols) = match part.scheme {
            PartitionScheme::Grid { rows, cols, .. } => (rows, cols),
            _ => unreachable!(),
        };
        let edges = build_adjacency(&part, DEFAULT_BOUNDARY_TOL);
        assert_eq!(edges.len(), rows * (cols - 1) + cols * (rows - 1));
        // Clipped last row/column shortens the corresponding weights.
        let short = edges.iter().filter(|e| e.weight < 500.0).count();
        assert!(short > 0);
    }

    #[test]
    fn queen_adds_diagonals_with_fractional_weight() {
        let bbox = BoundingBox::new(0.0, 0.0, 1000.0, 1000.0).unwrap();
        let part = grid_partition(&bbox, 500.0, proj()).unwrap();
        let rook = build_adjacency(&part, DEFAULT_BOUNDARY_TOL);
        let queen = build_adjacency_with(&part, DEFAULT_BOUNDARY_TOL, GridNeighbors::Queen);
        assert_eq!(rook.len(), 4);
        assert_eq!(queen.len(), 6);
        let diagonal = queen.iter().find(|e| e.u == 0 && e.v == 3).unwrap();
        assert_eq!(diagonal.weight, 50.0);
    }

    #[test]
    fn admin_squares_share_a_unit_edge() {
        // Two 0.001-degree squares sharing their full vertical edge.
        let doc = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"id":"A"},"geometry":{"type":"Polygon",
             "coordinates":[[[0,0],[0.001,0],[0.001,0.001],[0,0.001],[0,0]]]}},
            {"type":"Feature","properties":{"id":"B"},"geometry":{"type":"Polygon",
             "coordinates":[[[0.001,0],[0.002,0],[0.002,0.001],[0.001,0.001],[0.001,0]]]}}
        ]}"#;
        let part = admin_partition(doc.as_bytes(), proj(), "id").unwrap();
        let edges = build_adjacency(&part, DEFAULT_BOUNDARY_TOL);
        assert_eq!(edges.len(), 1);
        // 0.001 degrees of latitude in meters.
        let expected = 0.001 * 111_195.08023353292;
        assert!((edges[0].weight - expected).abs() < 0.01);
    }

    fn two_seed_voronoi() -> (Partition, SeedSet) {
        let bbox = BoundingBox::new(-10.0, -10.0, 10.0, 10.0).unwrap();
        let seeds = SeedSet {
            seeds: vec![PlanarPoint::new(0.0, 0.0), PlanarPoint::new(10.0, 0.0)],
            sources: vec![SeedSource::RoadNode; 2],
            d_small: 1.0,
            d_big: 100.0,
        };
        (voronoi_partition(&seeds, &bbox, proj()).unwrap(), seeds)
    }

    #[test]
    fn voronoi_bisector_edge_weight_is_20() {
        // Oracle: the x = 5 bisector spans the 20 m tall box.
        let (part, _) = two_seed_voronoi();
        let edges = build_adjacency(&part, DEFAULT_BOUNDARY_TOL);
        assert_eq!(edges.len(), 1);
        assert!((edges[0].weight - 20.0).abs() < 1e-9);
    }

    #[test]
    fn road_weights_sum_segment_lengths_between_regions() {
        let (part, _) = two_seed_voronoi();
        // One 8 m segment crossing the bisector, one internal to cell 0,
        // plus a second 4 m crossing segment: weight = 8 + 4 = 12.
        let nodes = [
            PlanarPoint::new(1.0, 0.0),
            PlanarPoint::new(9.0, 0.0),
            PlanarPoint::new(-5.0, -5.0),
            PlanarPoint::new(-1.0, -5.0),
            PlanarPoint::new(3.0, 5.0),
            PlanarPoint::new(7.0, 5.0),
        ];
        let net = RoadNetwork {
            nodes: nodes
                .iter()
                .enumerate()
                .map(|(id, &pos)| crate::roads::RoadNode { id, pos, degree: 1 })
                .collect(),
            segments: vec![
                crate::roads::RoadSegment { u: 0, v: 1, length: 8.0 },
                crate::roads::RoadSegment { u: 2, v: 3, length: 4.0 },
                crate::roads::RoadSegment { u: 4, v: 5, length: 4.0 },
            ],
            bbox: BoundingBox::new(-10.0, -10.0, 10.0, 10.0).unwrap(),
            skipped_features: 0,
        };
        let edges = build_road_weights(&part, &net).unwrap();
        assert_eq!(edges.len(), 1);
        assert_eq!(edges[0], GraphEdge { u: 0, v: 1, weight: 12.0 });

        // All segments internal to one cell produce no edges.
        let internal = RoadNetwork {
            nodes: net.nodes[2..4]
                .iter()
                .enumerate()
                .map(|(id, n)| crate::roads::RoadNode { id, pos: n.pos, degree: 1 })
                .collect(),
            segments: vec![crate::roads::RoadSegment { u: 0, v: 1, length: 4.0 }],
            bbox: net.bbox,
            skipped_features: 0,
        };
        assert!(build_road_weights(&part, &internal).unwrap().is_empty());
    }

    #[test]
    fn road_weights_reject_non_voronoi_partitions() {
        let bbox = BoundingBox::new(0.0, 0.0, 1000.0, 1000.0).unwrap();
        let part = grid_partition(&bbox, 500.0, proj()).unwrap();
        let net = RoadNetwork {
            nodes: vec![],
            segments: vec![],
            bbox,
            skipped_features: 0,
        };
        assert!(matches!(build_road_weights(&part, &net), Err(Error::NotVoronoi)));
    }

    #[test]
    fn road_weights_never_exceed_total_length() {
        let (part, _) = two_seed_voronoi();
        let mut rng = crate::rng::SplitMix64::new(5);
        let nodes: Vec<crate::roads::RoadNode> = (0..40)
            .map(|id| crate::roads::RoadNode {
                id,
                pos: PlanarPoint::new(rng.uniform(-12.0, 12.0), rng.uniform(-12.0, 12.0)),
                degree: 1,
            })
            .collect();
        let segments: Vec<crate::roads::RoadSegment> = (0..39)
            .map(|i| crate::roads::RoadSegment {
                u: i,
                v: i + 1,
                length: nodes[i].pos.distance(nodes[i + 1].pos),
            })
            .collect();
        let total: f64 = segments.iter().map(|s| s.length).sum();
        let net = RoadNetwork {
            nodes,
            segments,
            bbox: BoundingBox::new(-12.0, -12.0, 12.0, 12.0).unwrap(),
            skipped_features: 0,
        };
        let weighted: f64 =
            build_road_weights(&part, &net).unwrap().iter().map(|e| e.weight).sum();
        assert!(weighted <= total + 1e-9);
    }

    #[test]
    fn assemble_validates_and_canonicalizes() {
        let bbox = BoundingBox::new(0.0, 0.0, 2000.0, 2000.0).unwrap();
        let part = grid_partition(&bbox, 500.0, proj()).unwrap();
        let edges = build_adjacency(&part, DEFAULT_BOUNDARY_TOL);
        assert_eq!(edges.len(), 24); // 4 * 3 * 2
        let graph = assemble_graph(part.clone(), edges.clone(), None).unwrap();
        assert!(graph.edges.windows(2).all(|w| (w[0].u, w[0].v) < (w[1].u, w[1].v)));

        // Dangling edge ids error.
        let bad = vec![GraphEdge { u: 0, v: 99, weight: 1.0 }];
        assert!(matches!(
            assemble_graph(part.clone(), bad, None),
            Err(Error::DanglingEdge { .. })
        ));

        // Feature row count mismatch errors.
        let features = UrbanFeatures {
            categories: vec!["x".into()],
            matrix: vec![vec![1.0]; 3],
            normalized: false,
        };
        assert!(matches!(
            assemble_graph(part.clone(), edges, Some(features)),
            Err(Error::FeatureRowMismatch { rows: 3, regions: 16 })
        ));

        // A single-region partition has a valid empty edge set.
        let solo = grid_partition(&bbox, 5000.0, proj()).unwrap();
        let g = assemble_graph(solo, Vec::new(), None).unwrap();
        assert!(g.edges.is_empty());
    }

    #[test]
    fn adjacency_matrix_reconstruction_is_symmetric() {
        let bbox = BoundingBox::new(0.0, 0.0, 1500.0, 1000.0).unwrap();
        let part = grid_partition(&bbox, 500.0, proj()).unwrap();
        let edges = build_adjacency(&part, DEFAULT_BOUNDARY_TOL);
        let n = part.len();
        let mut adj = vec![vec![0.0; n]; n];
        for e in &edges {
            adj[e.u][e.v] = e.weight;
            adj[e.v][e.u] = e.weight;
        }
        for i in 0..n {
            for j in 0..n {
                assert_eq!(adj[i][j], adj[j][i]);
            }
        }
    }

    #[test]
    fn graph_file_roundtrip_is_identity() {
        let bbox = BoundingBox::new(0.0, 0.0, 1500.0, 1500.0).unwrap();
        let part = grid_partition(&bbox, 500.0, proj()).unwrap();
        let edges = build_adjacency(&part, DEFAULT_BOUNDARY_TOL);
        let features = UrbanFeatures {
            categories: vec!["cafe".into(), "school".into()],
            matrix: vec![vec![1.0, 0.0]; 9],
            normalized: false,
        };
        let graph = assemble_graph(part, edges, Some(features)).unwrap();
        let json = write_graph_json(&graph);
        let loaded = read_graph_json(json.as_bytes()).unwrap();
        let rewritten = serde_json::to_string(&loaded).unwrap();
        assert_eq!(json, rewritten);
        assert_eq!(loaded.n_regions(), 9);
        assert_eq!(loaded.static_features().unwrap().categories.len(), 2);
    }
}
