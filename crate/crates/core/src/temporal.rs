//! Temporal binning, window samples, and the chronological split.
//!
//! Assigned events become a region x time-bin count matrix; sliding windows
//! over the bins become supervised samples whose targets are next-bin
//! occurrence flags; and the sample set is cut 70/15/15 along the bin axis
//! with straddling windows dropped so no sample leaks across a boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::AssignedEvent;

/// Region x time-bin event counts.
#[derive(Clone, Debug, PartialEq)]
pub struct CountMatrix {
    /// `counts[region][bin]`.
    pub counts: Vec<Vec<u32>>,
    /// Bin width in seconds.
    pub bin_width: i64,
    /// UTC second at which bin 0 starts (aligned down to `bin_width`).
    pub t0: i64,
}

impl CountMatrix {
    pub fn n_regions(&self) -> usize {
        self.counts.len()
    }

    pub fn n_bins(&self) -> usize {
        self.counts.first().map(Vec::len).unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().map(|&c| u64::from(c)).sum()
    }

    /// Per-region totals across all bins (heatmap values).
    pub fn region_totals(&self) -> Vec<u64> {
        self.counts
            .iter()
            .map(|row| row.iter().map(|&c| u64::from(c)).sum())
            .collect()
    }
}

/// Sidecar metadata stored next to the count CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountMeta {
    pub t0: i64,
    pub bin_width: i64,
    pub n_regions: usize,
    #[serde(rename = "T")]
    pub n_bins: usize,
}

/// Bin inside-assigned events into a count matrix. Events outside every
/// region are excluded; if none remain that is an error.
pub fn bin_events(
    assigned: &[AssignedEvent],
    n_regions: usize,
    bin_width: i64,
) -> Result<CountMatrix> {
    if bin_width <= 0 {
        return Err(Error::InvalidParameter(format!("bin_width must be > 0, got {bin_width}")));
    }
    let inside: Vec<&AssignedEvent> =
        assigned.iter().filter(|a| a.region_id.is_some()).collect();
    if inside.is_empty() {
        return Err(Error::NoEventsInside);
    }
    let min_ts = inside.iter().map(|a| a.timestamp).min().expect("non-empty");
    let max_ts = inside.iter().map(|a| a.timestamp).max().expect("non-empty");
    let t0 = min_ts.div_euclid(bin_width) * bin_width;
    let n_bins = ((max_ts - t0) / bin_width) as usize + 1;

    let mut counts = vec![vec![0u32; n_bins]; n_regions];
    for a in inside {
        let region = a.region_id.expect("filtered to inside");
        let bin = ((a.timestamp - t0) / bin_width) as usize;
        counts[region][bin] += 1;
    }
    Ok(CountMatrix { counts, bin_width, t0 })
}

/// One supervised instance: `window` bins of per-region counts and the
/// next bin's occurrence labels.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    /// Start bin index.
    pub t: usize,
    /// `input[region][offset]` = count at bin `t + offset`, raw.
    pub input: Vec<Vec<f64>>,
    /// `target[region]` = whether bin `t + window` has any event.
    pub target: Vec<bool>,
}

/// Slide a `window`-bin input over the matrix; one sample per start bin,
/// `n_bins - window` in total.
pub fn make_windows(cm: &CountMatrix, window: usize) -> Result<Vec<WindowSample>> {
    let n_bins = cm.n_bins();
    if window == 0 {
        return Err(Error::InvalidParameter("window must be >= 1".into()));
    }
    if window >= n_bins {
        return Err(Error::WindowTooLong { window, bins: n_bins });
    }
    let samples = (0..n_bins - window)
        .map(|t| WindowSample {
            t,
            input: cm
                .counts
                .iter()
                .map(|row| row[t..t + window].iter().map(|&c| f64::from(c)).collect())
                .collect(),
            target: cm.counts.iter().map(|row| row[t + window] > 0).collect(),
        })
        .collect();
    Ok(samples)
}

/// Chronological train/validation/test cut of a window-sample set.
#[derive(Clone, Debug)]
pub struct SplitDataset {
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    /// Bin-index boundaries `(b1, b2)`: train bins `< b1`, validation bins
    /// `[b1, b2)`, test bins `>= b2`.
    pub boundaries: (usize, usize),
    /// Samples dropped because their bin range straddled a boundary.
    pub dropped_straddlers: usize,
    pub window: usize,
}

/// Cut samples at `floor(f1 * T)` and `floor((f1 + f2) * T)` bin indices.
/// A sample belongs to a split only if its whole bin range, target bin
/// included, lies inside that split; straddlers are dropped and counted.
pub fn chronological_split(
    samples: &[WindowSample],
    fractions: (f64, f64, f64),
) -> Result<SplitDataset> {
    let (f1, f2, f3) = fractions;
    if !(f1 >= 0.0 && f2 >= 0.0 && f3 >= 0.0) || (f1 + f2 + f3 - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "split fractions must be non-negative and sum to 1, got ({f1}, {f2}, {f3})"
        )));
    }
    if samples.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 samples to split, got {}",
            samples.len()
        )));
    }
    let window = samples[0].input.first().map(Vec::len).unwrap_or(0);
    let n_bins = samples.len() + window;
    let b1 = (f1 * n_bins as f64).floor() as usize;
    let b2 = ((f1 + f2) * n_bins as f64).floor() as usize;

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    let mut dropped = 0usize;
    for sample in samples {
        let last_bin = sample.t + window; // target bin
        if last_bin < b1 {
            train.push(sample.clone());
        } else if sample.t >= b1 && last_bin < b2 {
            val.push(sample.clone());
        } else if sample.t >= b2 {
            test.push(sample.clone());
        } else {
            dropped += 1;
        }
    }
    for (name, split) in [("train", &train), ("validation", &val), ("test", &test)] {
        if split.is_empty() {
            return Err(Error::EmptySplit { split: name });
        }
    }
    Ok(SplitDataset {
        train,
        val,
        test,
        boundaries: (b1, b2),
        dropped_straddlers: dropped,
        window,
    })
}

// ---------------------------------------------------------------------------
// Count matrix file format: CSV rows = regions, columns = bins, plus a JSON
// sidecar carrying the layout.
// ---------------------------------------------------------------------------

pub fn write_counts_csv(cm: &CountMatrix) -> String {
    let mut out = String::new();
    for row in &cm.counts {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn count_meta(cm: &CountMatrix) -> CountMeta {
    CountMeta {
        t0: cm.t0,
        bin_width: cm.bin_width,
        n_regions: cm.n_regions(),
        n_bins: cm.n_bins(),
    }
}

pub fn read_counts_csv(bytes: &[u8], meta: &CountMeta) -> Result<CountMatrix> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Csv(format!("count matrix is not utf-8: {e}")))?;
    let mut counts = Vec::with_capacity(meta.n_regions);
    for (lineno, line) in text.lines().enumerate() {
        let row: Vec<u32> = line
            .split(',')
            .map(|field| {
                field.trim().parse().map_err(|e| {
                    Error::Csv(format!("count matrix line {}: {e}", lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != meta.n_bins {
            return Err(Error::Csv(format!(
                "count matrix line {} has {} bins, expected {}",
                lineno + 1,
                row.len(),
                meta.n_bins
            )));
        }
        counts.push(row);
    }
    if counts.len() != meta.n_regions {
        return Err(Error::Csv(format!(
            "count matrix has {} rows, expected {}",
            counts.len(),
            meta.n_regions
        )));
    }
    Ok(CountMatrix { counts, bin_width: meta.bin_width, t0: meta.t0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assigned(region: Option<usize>, timestamp: i64) -> AssignedEvent {
        AssignedEvent { event_id: 0, region_id: region, timestamp }
    }

    #[test]
    fn bins_use_floor_arithmetic() {
        // Oracle: floor arithmetic; t = 0 and 1800 share bin 0, 3600 is bin 1.
        let events = vec![
            assigned(Some(0), 0),
            assigned(Some(0), 1800),
            assigned(Some(0), 3600),
        ];
        let cm = bin_events(&events, 1, 3600).unwrap();
        assert_eq!(cm.counts, vec![vec![2, 1]]);
        assert_eq!(cm.n_bins(), 2);
        assert_eq!(cm.t0, 0);
    }

    #[test]
    fn single_event_gives_1x1_matrix() {
        let events = vec![assigned(Some(0), 86_461)];
        let cm = bin_events(&events, 1, 86_400).unwrap();
        assert_eq!(cm.counts, vec![vec![1]]);
        assert_eq!(cm.t0, 86_400);
    }

    #[test]
    fn only_outside_events_error() {
        let events = vec![assigned(None, 0), assigned(None, 100)];
        assert!(matches!(bin_events(&events, 1, 3600), Err(Error::NoEventsInside)));
    }

    #[test]
    fn negative_timestamps_bin_correctly() {
        let events = vec![assigned(Some(0), -10), assigned(Some(0), 10)];
        let cm = bin_events(&events, 1, 3600).unwrap();
        assert_eq!(cm.t0, -3600);
        assert_eq!(cm.counts, vec![vec![1, 1]]);
    }

    #[test]
    fn count_conservation_is_exact() {
        let mut rng = crate::rng::SplitMix64::new(17);
        let events: Vec<AssignedEvent> = (0..5000)
            .map(|_| {
                let region = if rng.next_f64() < 0.1 { None } else { Some(rng.below(20) as usize) };
                assigned(region, rng.below(1_000_000) as i64)
            })
            .collect();
        let inside = events.iter().filter(|a| a.region_id.is_some()).count() as u64;
        let cm = bin_events(&events, 20, 3600).unwrap();
        assert_eq!(cm.total(), inside);
    }

    #[test]
    fn rebinning_at_half_width_doubles_bins_and_keeps_total() {
        let mut rng = crate::rng::SplitMix64::new(23);
        let events: Vec<AssignedEvent> =
            (0..2000).map(|_| assigned(Some(0), rng.below(500_000) as i64)).collect();
        let coarse = bin_events(&events, 1, 7200).unwrap();
        let fine = bin_events(&events, 1, 3600).unwrap();
        let diff = (fine.n_bins() as i64 - 2 * coarse.n_bins() as i64).abs();
        assert!(diff <= 1, "fine {} vs coarse {}", fine.n_bins(), coarse.n_bins());
        assert_eq!(fine.total(), coarse.total());
    }

    fn matrix(counts: Vec<Vec<u32>>) -> CountMatrix {
        CountMatrix { counts, bin_width: 3600, t0: 0 }
    }

    #[test]
    fn window_count_is_bins_minus_window() {
        let cm = matrix(vec![(0..10).map(|i| i as u32).collect()]);
        let samples = make_windows(&cm, 3).unwrap();
        assert_eq!(samples.len(), 7);
        assert_eq!(samples[0].input, vec![vec![0.0, 1.0, 2.0]]);
        assert!(samples[0].target[0]); // bin 3 has count 3 > 0
    }

    #[test]
    fn minimal_window_case() {
        let cm = matrix(vec![vec![4, 0]]);
        let samples = make_windows(&cm, 1).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].target, vec![false]);

        let cm = matrix(vec![vec![0, 5]]);
        let samples = make_windows(&cm, 1).unwrap();
        assert_eq!(samples[0].target, vec![true]);
    }

    #[test]
    fn window_must_be_shorter_than_series() {
        let cm = matrix(vec![vec![1, 2]]);
        assert!(matches!(
            make_windows(&cm, 2),
            Err(Error::WindowTooLong { window: 2, bins: 2 })
        ));
        assert!(make_windows(&cm, 0).is_err());
    }

    fn samples_for(n_bins: usize, window: usize) -> Vec<WindowSample> {
        let cm = matrix(vec![(0..n_bins).map(|i| (i % 3) as u32).collect()]);
        make_windows(&cm, window).unwrap()
    }

    #[test]
    fn split_boundaries_at_70_and_85_of_bins() {
        // Oracle: boundary arithmetic for T = 100, W = 3.
        let samples = samples_for(100, 3);
        let split = chronological_split(&samples, (0.70, 0.15, 0.15)).unwrap();
        assert_eq!(split.boundaries, (70, 85));
        assert_eq!(split.train.iter().map(|s| s.t).max(), Some(66));
        assert_eq!(split.val.iter().map(|s| s.t).min(), Some(70));
        assert_eq!(split.val.iter().map(|s| s.t).max(), Some(81));
        assert_eq!(split.test.iter().map(|s| s.t).min(), Some(85));
        assert_eq!(split.test.iter().map(|s| s.t).max(), Some(96));
        assert_eq!(split.dropped_straddlers, 97 - 67 - 12 - 12);
    }

    #[test]
    fn degenerate_fractions_error() {
        let samples = samples_for(100, 3);
        assert!(matches!(
            chronological_split(&samples, (1.0, 0.0, 0.0)),
            Err(Error::EmptySplit { .. })
        ));
    }

    #[test]
    fn split_boundaries_for_20_bins() {
        // Oracle: floor arithmetic; floor(0.7*20) = 14, floor(0.85*20) = 17.
        let samples = samples_for(20, 1);
        let split = chronological_split(&samples, (0.70, 0.15, 0.15)).unwrap();
        assert_eq!(split.boundaries, (14, 17));
    }

    #[test]
    fn no_leakage_across_boundaries() {
        for (bins, window) in [(100, 3), (50, 5), (40, 1), (200, 12)] {
            let samples = samples_for(bins, window);
            let split = chronological_split(&samples, (0.70, 0.15, 0.15)).unwrap();
            let max_bin = |xs: &[WindowSample]| xs.iter().map(|s| s.t + window).max().unwrap();
            let min_bin = |xs: &[WindowSample]| xs.iter().map(|s| s.t).min().unwrap();
            assert!(max_bin(&split.train) < min_bin(&split.val));
            assert!(max_bin(&split.val) < min_bin(&split.test));
        }
    }

    #[test]
    fn counts_csv_roundtrip() {
        let cm = matrix(vec![vec![1, 0, 3], vec![0, 2, 0]]);
        let csv = write_counts_csv(&cm);
        assert_eq!(csv, "1,0,3\n0,2,0\n");
        let meta = count_meta(&cm);
        let back = read_counts_csv(csv.as_bytes(), &meta).unwrap();
        assert_eq!(back, cm);
    }
}
