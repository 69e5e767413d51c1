//! Event and POI ingestion, region assignment, and urban feature aggregation.
//!
//! Assignment goes through a bucket grid over the partition so that each
//! event only tests the handful of regions whose boxes overlap its bucket,
//! instead of every region. Ties on shared borders resolve to the lowest
//! region id, and events outside every region are kept (as `None`) so the
//! run manifest can report them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::geo::{point_in_polygon, GeoPoint, PlanarPoint};
use crate::partition::Partition;

/// One timestamped, geolocated record.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub id: usize,
    /// UTC seconds since the epoch.
    pub timestamp: i64,
    pub pos: GeoPoint,
    pub category: Option<String>,
}

/// Parse output plus the count of rows dropped by validation.
#[derive(Clone, Debug)]
pub struct ParsedEvents {
    pub events: Vec<Event>,
    pub dropped: usize,
}

/// Column names for the CSV inputs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct CsvSchema {
    pub timestamp: String,
    pub lat: String,
    pub lon: String,
    pub category: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            lat: "latitude".into(),
            lon: "longitude".into(),
            category: "category".into(),
        }
    }
}

/// Parse an event CSV. Rows with an unparseable timestamp or out-of-range
/// coordinates are dropped and counted; survivors are numbered in input
/// order. The category column is optional.
pub fn parse_events_csv(bytes: &[u8], schema: &CsvSchema) -> Result<ParsedEvents> {
    parse_csv(bytes, schema, Mode::Events)
}

/// Parse a POI CSV: the category column is mandatory, the timestamp column
/// optional (missing or blank timestamps default to 0).
pub fn parse_poi_csv(bytes: &[u8], schema: &CsvSchema) -> Result<ParsedEvents> {
    parse_csv(bytes, schema, Mode::Pois)
}

#[derive(Copy, Clone, PartialEq)]
enum Mode {
    Events,
    Pois,
}

fn parse_csv(bytes: &[u8], schema: &CsvSchema, mode: Mode) -> Result<ParsedEvents> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(Error::EmptyInput("csv file is empty".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes);
    let headers = reader.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);

    let ts_col = col(&schema.timestamp);
    let lat_col = col(&schema.lat).ok_or_else(|| Error::MissingColumn(schema.lat.clone()))?;
    let lon_col = col(&schema.lon).ok_or_else(|| Error::MissingColumn(schema.lon.clone()))?;
    let cat_col = col(&schema.category);
    match mode {
        Mode::Events => {
            if ts_col.is_none() {
                return Err(Error::MissingColumn(schema.timestamp.clone()));
            }
        }
        Mode::Pois => {
            if cat_col.is_none() {
                return Err(Error::MissingColumn(schema.category.clone()));
            }
        }
    }

    let mut events = Vec::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let Ok(record) = record else {
            dropped += 1;
            continue;
        };
        let field = |i: usize| record.get(i).unwrap_or("");
        let lat: Option<f64> = field(lat_col).parse().ok();
        let lon: Option<f64> = field(lon_col).parse().ok();
        let pos = match (lon, lat) {
            (Some(lon), Some(lat)) => GeoPoint::new(lon, lat),
            _ => {
                dropped += 1;
                continue;
            }
        };
        if !pos.is_valid() {
            dropped += 1;
            continue;
        }
        let timestamp = match (mode, ts_col) {
            (Mode::Events, Some(i)) => match parse_iso8601_utc(field(i)) {
                Some(ts) => ts,
                None => {
                    dropped += 1;
                    continue;
                }
            },
            (Mode::Pois, Some(i)) => parse_iso8601_utc(field(i)).unwrap_or(0),
            (Mode::Pois, None) => 0,
            (Mode::Events, None) => unreachable!("checked above"),
        };
        let category = cat_col
            .map(field)
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        if mode == Mode::Pois && category.is_none() {
            dropped += 1;
            continue;
        }
        events.push(Event { id: events.len(), timestamp, pos, category });
    }
    Ok(ParsedEvents { events, dropped })
}

/// ISO-8601 date-time assumed UTC: `YYYY-MM-DD[T| ]HH:MM:SS[.frac][Z]`.
/// Fractional seconds are truncated.
pub fn parse_iso8601_utc(s: &str) -> Option<i64> {
    let s = s.trim().strip_suffix('Z').unwrap_or_else(|| s.trim());
    let bytes = s.as_bytes();
    if bytes.len() < 19 || (bytes[10] != b'T' && bytes[10] != b' ') {
        return None;
    }
    let num = |range: std::ops::Range<usize>| -> Option<i64> {
        let chunk = s.get(range)?;
        if !chunk.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        chunk.parse().ok()
    };
    let (year, month, day) = (num(0..4)?, num(5..7)?, num(8..10)?);
    let (hour, minute, second) = (num(11..13)?, num(14..16)?, num(17..19)?);
    if bytes[4] != b'-' || bytes[7] != b'-' || bytes[13] != b':' || bytes[16] != b':' {
        return None;
    }
    if bytes.len() > 19 && bytes[19] != b'.' {
        return None;
    }
    if !(1..=12).contains(&month) || !(0..24).contains(&hour) || !(0..60).contains(&minute) {
        return None;
    }
    if !(0..60).contains(&second) || !(1..=days_in_month(year, month)).contains(&day) {
        return None;
    }
    Some(days_from_civil(year, month, day) * 86_400 + hour * 3600 + minute * 60 + second)
}

fn days_in_month(year: i64, month: i64) -> i64 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if year % 4 == 0 && (year % 100 != 0 || year % 400 == 0) => 29,
        _ => 28,
    }
}

/// Days since 1970-01-01 for a civil date (Howard Hinnant's algorithm).
fn days_from_civil(mut y: i64, m: i64, d: i64) -> i64 {
    y -= i64::from(m <= 2);
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let doy = (153 * (m + if m > 2 { -3 } else { 9 }) + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

/// The event-to-region resolution for one event.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct AssignedEvent {
    pub event_id: usize,
    /// `None` when the event falls outside every region.
    pub region_id: Option<usize>,
    pub timestamp: i64,
}

/// Uniform bucket grid mapping planar positions to candidate region ids.
#[derive(Clone, Debug)]
pub struct BucketIndex {
    bucket_size: f64,
    origin_x: f64,
    origin_y: f64,
    buckets: HashMap<(i64, i64), Vec<u32>>,
}

impl BucketIndex {
    /// Build with the default bucket size: the median region bbox width.
    pub fn build(part: &Partition) -> Result<Self> {
        let mut widths: Vec<f64> =
            part.regions().iter().map(|r| r.geometry.bounds().width()).collect();
        if widths.is_empty() {
            return Err(Error::EmptyInput("partition has no regions".into()));
        }
        widths.sort_by(|a, b| a.partial_cmp(b).expect("finite widths"));
        let median = widths[widths.len() / 2];
        Self::with_bucket_size(part, median)
    }

    pub fn with_bucket_size(part: &Partition, bucket_size: f64) -> Result<Self> {
        if bucket_size <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "bucket_size must be > 0, got {bucket_size}"
            )));
        }
        let origin_x = part.bbox.min_x;
        let origin_y = part.bbox.min_y;
        let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for region in part.regions() {
            let bb = region.geometry.bounds();
            let bx0 = ((bb.min_x - origin_x) / bucket_size).floor() as i64;
            let bx1 = ((bb.max_x - origin_x) / bucket_size).floor() as i64;
            let by0 = ((bb.min_y - origin_y) / bucket_size).floor() as i64;
            let by1 = ((bb.max_y - origin_y) / bucket_size).floor() as i64;
            for bx in bx0..=bx1 {
                for by in by0..=by1 {
                    buckets.entry((bx, by)).or_default().push(region.id as u32);
                }
            }
        }
        Ok(Self { bucket_size, origin_x, origin_y, buckets })
    }

    pub fn bucket_size(&self) -> f64 {
        self.bucket_size
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    /// Candidate region ids for a planar position (ascending id order).
    pub fn candidates(&self, p: PlanarPoint) -> &[u32] {
        let key = (
            ((p.x - self.origin_x) / self.bucket_size).floor() as i64,
            ((p.y - self.origin_y) / self.bucket_size).floor() as i64,
        );
        self.buckets.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Resolve a single planar position to its region under the lowest-id tie
/// rule, or `None` when outside all regions.
pub fn resolve_region(p: PlanarPoint, part: &Partition, index: &BucketIndex) -> Option<usize> {
    index
        .candidates(p)
        .iter()
        .map(|&id| id as usize)
        .find(|&id| point_in_polygon(p, &part.regions()[id].geometry))
}

/// Assign every event to a region. Output order equals input order no
/// matter how the work is scheduled internally.
pub fn assign_events(
    events: &[Event],
    part: &Partition,
    index: &BucketIndex,
) -> Vec<AssignedEvent> {
    events
        .par_iter()
        .map(|e| AssignedEvent {
            event_id: e.id,
            region_id: resolve_region(part.proj.project(e.pos), part, index),
            timestamp: e.timestamp,
        })
        .collect()
}

/// Per-region POI category counts used as static node features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UrbanFeatures {
    /// Sorted distinct category names; column order of `matrix`.
    pub categories: Vec<String>,
    /// `|regions| x |categories|` counts, optionally row-normalized.
    pub matrix: Vec<Vec<f64>>,
    pub normalized: bool,
}

/// Count POIs per (region, category). With `normalize`, each nonzero row is
/// scaled to sum to one; zero rows stay zero.
pub fn aggregate_poi_features(
    pois: &[Event],
    part: &Partition,
    index: &BucketIndex,
    normalize: bool,
) -> Result<UrbanFeatures> {
    let categories: BTreeSet<&str> =
        pois.iter().filter_map(|p| p.category.as_deref()).collect();
    if categories.is_empty() {
        return Err(Error::NoPoiCategories);
    }
    let categories: Vec<String> = categories.into_iter().map(str::to_string).collect();
    let col: HashMap<&str, usize> =
        categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    let mut matrix = vec![vec![0.0f64; categories.len()]; part.len()];
    let assigned = assign_events(pois, part, index);
    for (poi, a) in pois.iter().zip(&assigned) {
        let (Some(region), Some(category)) = (a.region_id, poi.category.as_deref()) else {
            continue;
        };
        matrix[region][col[category]] += 1.0;
    }
    if normalize {
        for row in &mut matrix {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
        }
    }
    Ok(UrbanFeatures { categories, matrix, normalized: normalize })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{BoundingBox, Projection};
    use crate::partition::grid_partition;
    use crate::rng::SplitMix64;

    fn proj() -> Projection {
        Projection::centered_at(GeoPoint::new(0.0, 0.0)).unwrap()
    }

    const CSV: &str = "timestamp,latitude,longitude,category\n\
        2020-01-01T00:00:00Z,0.001,0.001,a\n\
        2020-01-01T01:00:00Z,0.002,0.002,b\n\
        2020-01-01T02:00:00Z,0.003,0.003,\n";

    #[test]
    fn parses_three_valid_rows_in_order() {
        let parsed = parse_events_csv(CSV.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(parsed.events.len(), 3);
        assert_eq!(parsed.dropped, 0);
        assert_eq!(
            parsed.events.iter().map(|e| e.id).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(parsed.events[0].timestamp, 1_577_836_800);
        assert_eq!(parsed.events[2].category, None);
    }

    #[test]
    fn out_of_range_latitude_is_dropped_and_counted() {
        let csv = "timestamp,latitude,longitude\n\
            2020-01-01T00:00:00Z,0.0,0.0\n\
            2020-01-01T00:00:00Z,999,0.0\n\
            2020-01-01T00:00:00Z,1.0,1.0\n";
        let parsed = parse_events_csv(csv.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(parsed.events.len(), 2);
        assert_eq!(parsed.dropped, 1);
        assert_eq!(parsed.events[1].id, 1);
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "time,latitude,longitude\n2020-01-01T00:00:00Z,0,0\n";
        let err = parse_events_csv(csv.as_bytes(), &CsvSchema::default()).unwrap_err();
        match err {
            Error::MissingColumn(name) => assert_eq!(name, "timestamp"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let err = parse_events_csv(b"", &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyInput(_)));
    }

    #[test]
    fn iso8601_epoch_conversion() {
        // Oracle: independent epoch conversion.
        assert_eq!(parse_iso8601_utc("2020-01-01T00:00:00Z"), Some(1_577_836_800));
        assert_eq!(parse_iso8601_utc("1970-01-01T00:00:00"), Some(0));
        assert_eq!(parse_iso8601_utc("1969-12-31 23:59:59"), Some(-1));
        assert_eq!(parse_iso8601_utc("2024-02-29T12:30:15.250Z"), Some(1_709_209_815));
        assert_eq!(parse_iso8601_utc("2023-02-29T00:00:00Z"), None);
        assert_eq!(parse_iso8601_utc("not a date"), None);
        assert_eq!(parse_iso8601_utc("2020-13-01T00:00:00Z"), None);
    }

    #[test]
    fn poi_csv_requires_category_and_defaults_timestamp() {
        let csv = "latitude,longitude,category\n0.001,0.001,cafe\n0.002,0.002,\n";
        let parsed = parse_poi_csv(csv.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(parsed.events.len(), 1);
        assert_eq!(parsed.dropped, 1);
        assert_eq!(parsed.events[0].timestamp, 0);

        let csv = "latitude,longitude\n0.001,0.001\n";
        let err = parse_poi_csv(csv.as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "category"));
    }

    fn grid_4x4() -> Partition {
        let bbox = BoundingBox::new(0.0, 0.0, 2000.0, 2000.0).unwrap();
        grid_partition(&bbox, 500.0, proj()).unwrap()
    }

    #[test]
    fn bucket_index_covers_interior_buckets() {
        let part = grid_4x4();
        let index = BucketIndex::with_bucket_size(&part, 500.0).unwrap();
        for bx in 0..4 {
            for by in 0..4 {
                let p = PlanarPoint::new(bx as f64 * 500.0 + 250.0, by as f64 * 500.0 + 250.0);
                assert!(!index.candidates(p).is_empty());
            }
        }
    }

    #[test]
    fn single_region_appears_in_every_bucket() {
        let bbox = BoundingBox::new(0.0, 0.0, 1000.0, 1000.0).unwrap();
        let part = grid_partition(&bbox, 1000.0, proj()).unwrap();
        let index = BucketIndex::with_bucket_size(&part, 100.0).unwrap();
        for bx in 0..10 {
            for by in 0..10 {
                let p = PlanarPoint::new(bx as f64 * 100.0 + 50.0, by as f64 * 100.0 + 50.0);
                assert_eq!(index.candidates(p), &[0]);
            }
        }
    }

    #[test]
    fn oversized_bucket_holds_all_regions() {
        let part = grid_4x4();
        let index = BucketIndex::with_bucket_size(&part, 10_000.0).unwrap();
        assert_eq!(index.bucket_count(), 1);
        let p = PlanarPoint::new(1.0, 1.0);
        assert_eq!(index.candidates(p).len(), 16);
    }

    /// Geographic position projecting to the given planar point.
    fn geo_at(p: PlanarPoint) -> GeoPoint {
        proj().unproject(p)
    }

    fn event_at(id: usize, p: PlanarPoint) -> Event {
        Event { id, timestamp: 0, pos: geo_at(p), category: None }
    }

    #[test]
    fn assignment_uses_row_major_region_ids() {
        // Center of cell (row 1, col 1) in a 4x4 grid of 500 m cells.
        let part = grid_4x4();
        let index = BucketIndex::build(&part).unwrap();
        let events = vec![event_at(0, PlanarPoint::new(750.0, 750.0))];
        let assigned = assign_events(&events, &part, &index);
        assert_eq!(assigned[0].region_id, Some(5));
    }

    #[test]
    fn shared_edge_resolves_to_lowest_region_id() {
        let part = grid_4x4();
        let index = BucketIndex::build(&part).unwrap();
        // x = 500 is the border between cells 0 and 1 in row 0.
        let events = vec![event_at(0, PlanarPoint::new(500.0, 250.0))];
        let assigned = assign_events(&events, &part, &index);
        assert_eq!(assigned[0].region_id, Some(0));
    }

    #[test]
    fn outside_event_is_none_and_conserved() {
        let part = grid_4x4();
        let index = BucketIndex::build(&part).unwrap();
        let events = vec![
            event_at(0, PlanarPoint::new(-100.0, 0.0)),
            event_at(1, PlanarPoint::new(100.0, 100.0)),
        ];
        let assigned = assign_events(&events, &part, &index);
        assert_eq!(assigned[0].region_id, None);
        assert_eq!(assigned[1].region_id, Some(0));
        let inside = assigned.iter().filter(|a| a.region_id.is_some()).count();
        let outside = assigned.iter().filter(|a| a.region_id.is_none()).count();
        assert_eq!(inside + outside, events.len());
    }

    #[test]
    fn bucket_assignment_matches_brute_force() {
        let part = grid_4x4();
        let index = BucketIndex::build(&part).unwrap();
        let mut rng = SplitMix64::new(12);
        let events: Vec<Event> = (0..1000)
            .map(|id| {
                event_at(
                    id,
                    PlanarPoint::new(rng.uniform(-200.0, 2200.0), rng.uniform(-200.0, 2200.0)),
                )
            })
            .collect();
        let fast = assign_events(&events, &part, &index);
        for (e, a) in events.iter().zip(&fast) {
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
    fn poi_counts_per_region_and_category() {
        // Oracle: hand count. Two cafes in region 0, one school in region 1
        // of a 2-region grid.
        let bbox = BoundingBox::new(0.0, 0.0, 1000.0, 500.0).unwrap();
        let part = grid_partition(&bbox, 500.0, proj()).unwrap();
        let index = BucketIndex::build(&part).unwrap();
        let poi = |id, x, cat: &str| Event {
            id,
            timestamp: 0,
            pos: geo_at(PlanarPoint::new(x, 250.0)),
            category: Some(cat.to_string()),
        };
        let pois = vec![poi(0, 100.0, "cafe"), poi(1, 200.0, "cafe"), poi(2, 700.0, "school")];
        let features = aggregate_poi_features(&pois, &part, &index, false).unwrap();
        assert_eq!(features.categories, vec!["cafe", "school"]);
        assert_eq!(features.matrix, vec![vec![2.0, 0.0], vec![0.0, 1.0]]);

        let normalized = aggregate_poi_features(&pois, &part, &index, true).unwrap();
        assert_eq!(normalized.matrix, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn empty_rows_survive_normalization() {
        let part = grid_4x4();
        let index = BucketIndex::build(&part).unwrap();
        let pois = vec![Event {
            id: 0,
            timestamp: 0,
            pos: geo_at(PlanarPoint::new(100.0, 100.0)),
            category: Some("cafe".into()),
        }];
        let features = aggregate_poi_features(&pois, &part, &index, true).unwrap();
        assert_eq!(features.matrix[0], vec![1.0]);
        for row in &features.matrix[1..] {
            assert_eq!(row, &vec![0.0]);
        }
        // Column sums equal inside-assigned POI totals.
        let sum: f64 = features.matrix.iter().map(|r| r[0]).sum();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn pois_without_categories_error() {
        let part = grid_4x4();
        let index = BucketIndex::build(&part).unwrap();
        let pois =
            vec![Event { id: 0, timestamp: 0, pos: geo_at(PlanarPoint::new(1.0, 1.0)), category: None }];
        let err = aggregate_poi_features(&pois, &part, &index, false).unwrap_err();
        assert!(matches!(err, Error::NoPoiCategories));
    }
}
