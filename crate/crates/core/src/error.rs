use thiserror::Error;

/// Errors surfaced by the pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("geojson: {0}")]
    GeoJson(String),

    #[error("geojson feature {feature}: {message}")]
    GeoJsonFeature { feature: usize, message: String },

    #[error("geojson feature {feature}: missing property {property:?}")]
    MissingProperty { feature: usize, property: String },

    #[error("csv: {0}")]
    Csv(String),

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("no seeds derivable: empty network and degenerate bounding box")]
    NoSeedsDerivable,

    #[error("duplicate seeds {a} and {b} (distance below 1e-9 m)")]
    DuplicateSeeds { a: usize, b: usize },

    #[error("seed {index} lies outside the bounding box")]
    SeedOutsideBounds { index: usize },

    #[error("no events were assigned to any region; check that the event extent matches the partition bounding box")]
    NoEventsInside,

    #[error("no POI carries a category")]
    NoPoiCategories,

    #[error("edge ({u},{v}) references a region outside 0..{regions}")]
    DanglingEdge { u: usize, v: usize, regions: usize },

    #[error("feature matrix has {rows} rows but the partition has {regions} regions")]
    FeatureRowMismatch { rows: usize, regions: usize },

    #[error("road-length weights are defined only for voronoi partitions")]
    NotVoronoi,

    #[error("window length {window} must be shorter than the {bins} available bins")]
    WindowTooLong { window: usize, bins: usize },

    #[error("the {split} split is empty; use a smaller window or bin width")]
    EmptySplit { split: &'static str },

    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },

    #[error("labels contain a single class; AUC is undefined")]
    SingleClassLabels,

    #[error("confusion matrix is empty")]
    EmptyConfusion,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
