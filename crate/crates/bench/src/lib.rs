//! Shared fixtures for the criterion benches.

use stm_core::events::Event;
use stm_core::geo::{BoundingBox, GeoPoint, PlanarPoint, Projection};
use stm_core::partition::{grid_partition, voronoi_partition, Partition};
use stm_core::rng::SplitMix64;
use stm_core::roads::{SeedSet, SeedSource};

pub fn projection() -> Projection {
    Projection::centered_at(GeoPoint::new(-74.0, 40.7)).unwrap()
}

/// A 40 x 25 grid of 500 m cells: exactly 1000 regions.
pub fn thousand_region_grid() -> Partition {
    let bbox = BoundingBox::new(0.0, 0.0, 20_000.0, 12_500.0).unwrap();
    grid_partition(&bbox, 500.0, projection()).unwrap()
}

pub fn random_seed_set(n: usize, extent: f64, seed: u64) -> SeedSet {
    let mut rng = SplitMix64::new(seed);
    let seeds: Vec<PlanarPoint> = (0..n)
        .map(|_| {
            PlanarPoint::new(rng.uniform(1.0, extent - 1.0), rng.uniform(1.0, extent - 1.0))
        })
        .collect();
    SeedSet { sources: vec![SeedSource::RoadNode; seeds.len()], seeds, d_small: 0.5, d_big: extent * 2.0 }
}

pub fn random_voronoi(n_seeds: usize, extent: f64, seed: u64) -> Partition {
    let bbox = BoundingBox::new(0.0, 0.0, extent, extent).unwrap();
    voronoi_partition(&random_seed_set(n_seeds, extent, seed), &bbox, projection()).unwrap()
}

pub fn random_events(part: &Partition, n: usize, seed: u64) -> Vec<Event> {
    let mut rng = SplitMix64::new(seed);
    let bb = part.bbox;
    (0..n)
        .map(|id| Event {
            id,
            timestamp: rng.below(86_400 * 60) as i64,
            pos: part.proj.unproject(PlanarPoint::new(
                rng.uniform(bb.min_x, bb.max_x),
                rng.uniform(bb.min_y, bb.max_y),
            )),
            category: None,
        })
        .collect()
}
