//! Cross-module pipeline tests on synthetic data: raw events through
//! partitioning, assignment, binning, training, and evaluation.

use stm_core::events::{
    aggregate_poi_features, assign_events, BucketIndex, Event,
};
use stm_core::gcn;
use stm_core::geo::{point_in_polygon, BoundingBox, GeoPoint, PlanarPoint, Projection};
use stm_core::graph;
use stm_core::partition::{grid_partition, voronoi_partition, Partition};
use stm_core::rng::SplitMix64;
use stm_core::roads::{SeedSet, SeedSource};
use stm_core::temporal;

fn proj() -> Projection {
    Projection::centered_at(GeoPoint::new(-74.0, 40.7)).unwrap()
}

/// Synthetic clustered events over a `width x height` meter frame.
fn synthetic_events(n: usize, width: f64, height: f64, seed: u64) -> Vec<Event> {
    let proj = proj();
    let mut rng = SplitMix64::new(seed);
    let hotspots = [
        (width * 0.25, height * 0.25, width * 0.08),
        (width * 0.7, height * 0.6, width * 0.1),
        (width * 0.5, height * 0.85, width * 0.06),
    ];
    (0..n)
        .map(|id| {
            let (x, y) = if rng.next_f64() < 0.8 {
                let (cx, cy, s) = hotspots[rng.below(3) as usize];
                (
                    (cx + s * rng.next_gaussian()).clamp(0.0, width),
                    (cy + s * rng.next_gaussian()).clamp(0.0, height),
                )
            } else {
                (rng.uniform(0.0, width), rng.uniform(0.0, height))
            };
            Event {
                id,
                timestamp: rng.below(60 * 86_400) as i64,
                pos: proj.unproject(PlanarPoint::new(x, y)),
                category: None,
            }
        })
        .collect()
}

#[test]
fn assignment_is_identical_across_worker_counts() {
    let bbox = BoundingBox::new(0.0, 0.0, 4000.0, 3000.0).unwrap();
    let part = grid_partition(&bbox, 500.0, proj()).unwrap();
    let index = BucketIndex::build(&part).unwrap();
    let events = synthetic_events(5000, 4200.0, 3200.0, 31);

    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| assign_events(&events, &part, &index));
    let parallel = rayon::ThreadPoolBuilder::new()
        .num_threads(8)
        .build()
        .unwrap()
        .install(|| assign_events(&events, &part, &index));
    assert_eq!(single, parallel);
}

#[test]
fn conservation_holds_through_binning() {
    let bbox = BoundingBox::new(0.0, 0.0, 4000.0, 3000.0).unwrap();
    let part = grid_partition(&bbox, 500.0, proj()).unwrap();
    let index = BucketIndex::build(&part).unwrap();
    // Frame is larger than the partition, so some events land outside.
    let events = synthetic_events(8000, 4500.0, 3500.0, 77);
    let assigned = assign_events(&events, &part, &index);

    let inside = assigned.iter().filter(|a| a.region_id.is_some()).count();
    let outside = assigned.len() - inside;
    assert_eq!(inside + outside, events.len());
    assert!(outside > 0, "fixture should produce some outside events");

    let cm = temporal::bin_events(&assigned, part.len(), 86_400).unwrap();
    assert_eq!(cm.total(), inside as u64);
    let heat: u64 = cm.region_totals().iter().sum();
    assert_eq!(heat, inside as u64);
}

fn voronoi_fixture() -> (Partition, SeedSet) {
    let bbox = BoundingBox::new(0.0, 0.0, 4000.0, 3000.0).unwrap();
    let mut rng = SplitMix64::new(5);
    let pts: Vec<PlanarPoint> = (0..25)
        .map(|_| PlanarPoint::new(rng.uniform(100.0, 3900.0), rng.uniform(100.0, 2900.0)))
        .collect();
    let seeds = SeedSet {
        sources: vec![SeedSource::RoadNode; pts.len()],
        seeds: pts,
        d_small: 10.0,
        d_big: 10_000.0,
    };
    (voronoi_partition(&seeds, &bbox, proj()).unwrap(), seeds)
}

#[test]
fn bucket_index_agrees_with_brute_force_on_voronoi_cells() {
    let (part, _) = voronoi_fixture();
    let index = BucketIndex::build(&part).unwrap();
    let events = synthetic_events(1000, 4200.0, 3200.0, 13);
    let assigned = assign_events(&events, &part, &index);
    for (e, a) in events.iter().zip(&assigned) {
        let p = part.proj.project(e.pos);
        let brute = part
            .regions()
            .iter()
            .find(|r| point_in_polygon(p, &r.geometry))
            .map(|r| r.id);
        assert_eq!(a.region_id, brute);
    }
}

#[test]
fn end_to_end_training_on_synthetic_city() {
    let bbox = BoundingBox::new(0.0, 0.0, 4000.0, 3000.0).unwrap();
    let part = grid_partition(&bbox, 1000.0, proj()).unwrap();
    let index = BucketIndex::build(&part).unwrap();
    let events = synthetic_events(6000, 4000.0, 3000.0, 99);
    let assigned = assign_events(&events, &part, &index);

    let mut rng = SplitMix64::new(1);
    let pois: Vec<Event> = (0..60)
        .map(|id| Event {
            id,
            timestamp: 0,
            pos: part
                .proj
                .unproject(PlanarPoint::new(rng.uniform(0.0, 4000.0), rng.uniform(0.0, 3000.0))),
            category: Some(["cafe", "school", "park"][id % 3].to_string()),
        })
        .collect();
    let features = aggregate_poi_features(&pois, &part, &index, false).unwrap();

    let edges = graph::build_adjacency(&part, 0.01);
    let region_graph = graph::assemble_graph(part, edges, Some(features)).unwrap();

    let cm = temporal::bin_events(&assigned, region_graph.partition.len(), 86_400).unwrap();
    let samples = temporal::make_windows(&cm, 6).unwrap();
    let split = temporal::chronological_split(&samples, (0.70, 0.15, 0.15)).unwrap();

    let adj = gcn::normalize_adjacency(&region_graph, true);
    let dataset =
        gcn::prepare_dataset(&split, region_graph.static_features.as_ref(), &adj).unwrap();
    assert_eq!(dataset.input_dim, 6 + 3);

    let cfg = gcn::TrainConfig { epochs: 40, learning_rate: 0.1, seed: 11, ..Default::default() };
    let outcome = gcn::train(&adj, &dataset, &cfg).unwrap();
    assert_eq!(outcome.trace.len(), 40);
    assert!(outcome.trace.iter().all(|r| r.train_loss.is_finite()));

    let report = gcn::evaluate(&outcome.model, &adj, &dataset.test).unwrap();
    assert!((0.0..=1.0).contains(&report.auc));
    assert!((-1.0..=1.0).contains(&report.mcc));
    assert_eq!(
        report.confusion.total() as usize,
        dataset.test.len() * region_graph.partition.len()
    );
}

#[test]
fn road_weighted_graph_roundtrips_through_json() {
    let (part, seeds) = voronoi_fixture();
    // A random walk subdivided into steps short enough that no segment can
    // jump over an intermediate cell.
    let mut rng = SplitMix64::new(21);
    let mut waypoints = Vec::new();
    let mut prev = PlanarPoint::new(2000.0, 1500.0);
    waypoints.push(prev);
    for _ in 0..60 {
        let next =
            PlanarPoint::new(rng.uniform(0.0, 4000.0), rng.uniform(0.0, 3000.0));
        let steps = (prev.distance(next) / 100.0).ceil().max(1.0) as usize;
        for s in 1..=steps {
            let t = s as f64 / steps as f64;
            waypoints.push(PlanarPoint::new(
                prev.x + t * (next.x - prev.x),
                prev.y + t * (next.y - prev.y),
            ));
        }
        prev = next;
    }
    let nodes: Vec<stm_core::roads::RoadNode> = waypoints
        .iter()
        .enumerate()
        .map(|(id, &pos)| stm_core::roads::RoadNode { id, pos, degree: 1 })
        .collect();
    let segments: Vec<stm_core::roads::RoadSegment> = (1..nodes.len())
        .map(|i| stm_core::roads::RoadSegment {
            u: i - 1,
            v: i,
            length: nodes[i - 1].pos.distance(nodes[i].pos),
        })
        .collect();
    let net = stm_core::roads::RoadNetwork {
        nodes,
        segments,
        bbox: BoundingBox::new(0.0, 0.0, 4000.0, 3000.0).unwrap(),
        skipped_features: 0,
    };
    let total_road: f64 = net.total_length();
    let edges = graph::build_road_weights(&part, &net).unwrap();
    assert!(!edges.is_empty());
    let weighted: f64 = edges.iter().map(|e| e.weight).sum();
    assert!(weighted <= total_road + 1e-9);

    // Every road-weighted pair is geometrically adjacent.
    let boundary = graph::build_adjacency(&part, 0.01);
    let touching: std::collections::HashSet<(usize, usize)> =
        boundary.iter().map(|e| (e.u, e.v)).collect();
    for e in &edges {
        assert!(
            touching.contains(&(e.u, e.v)),
            "road-weighted pair ({}, {}) is not geometrically adjacent",
            e.u,
            e.v
        );
    }

    let g = graph::assemble_graph(part, edges, None).unwrap();
    let json = graph::write_graph_json(&g);
    let loaded = graph::read_graph_json(json.as_bytes()).unwrap();
    assert_eq!(serde_json::to_string(&loaded).unwrap(), json);
    let _ = seeds;
}
