//! Spatio-temporal mapping core.
//!
//! The library turns raw urban event logs into region-partitioned,
//! temporally binned graph datasets and evaluates a graph-convolutional
//! occurrence predictor on them. The stages compose in pipeline order:
//!
//! 1. [`geo`] — planar projection and the polygon kernel.
//! 2. [`roads`] — road network parsing and Voronoi seed selection.
//! 3. [`partition`] — grid, administrative, and Voronoi region mappings.
//! 4. [`events`] — CSV ingestion, bucket-indexed region assignment, and
//!    POI feature aggregation.
//! 5. [`graph`] — weighted region-adjacency graphs and their file format.
//! 6. [`temporal`] — count matrices, window samples, chronological splits.
//! 7. [`gcn`] — the from-scratch graph-convolutional baseline.
//! 8. [`metrics`] — the evaluation suite for imbalanced binary labels.

pub mod error;
pub mod events;
pub mod gcn;
pub mod geo;
mod geojson;
pub mod graph;
pub mod metrics;
pub mod partition;
pub mod rng;
pub mod roads;
pub mod temporal;

pub use error::{Error, Result};
pub use events::{
    aggregate_poi_features, assign_events, parse_events_csv, parse_poi_csv, AssignedEvent,
    BucketIndex, CsvSchema, Event, ParsedEvents, UrbanFeatures,
};
pub use gcn::{
    evaluate, forward, normalize_adjacency, train, GcnModel, NormalizedAdjacency, TrainConfig,
};
pub use geo::{
    halfplane_clip, point_in_polygon, polygon_area, shared_boundary_length, BoundingBox,
    GeoPoint, PlanarPoint, Polygon, Projection,
};
pub use graph::{
    assemble_graph, build_adjacency, build_road_weights, GraphEdge, GraphFile, RegionGraph,
};
pub use metrics::{auc, confusion, derived_metrics, Confusion, EvaluationReport};
pub use partition::{
    admin_partition, grid_partition, read_partition_json, voronoi_partition, write_partition_json,
    Partition, PartitionScheme, Region, RegionKind,
};
pub use roads::{parse_road_geojson, select_seeds, RoadNetwork, SeedSet};
pub use temporal::{
    bin_events, chronological_split, make_windows, CountMatrix, SplitDataset, WindowSample,
};
