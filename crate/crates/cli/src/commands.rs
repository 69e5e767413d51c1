//! The five pipeline subcommands. Each one reads its inputs through the
//! run context (digesting them), writes outputs atomically, and finishes by
//! emitting `manifest_<command>.json`.

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use stm_core::events::{self, Event, ParsedEvents};
use stm_core::gcn;
use stm_core::geo::{BoundingBox, GeoPoint, Projection};
use stm_core::graph::{self, GridNeighbors};
use stm_core::partition::{self, Partition, PartitionScheme};
use stm_core::roads;
use stm_core::temporal;

use crate::config::{GridNeighborsChoice, Mapping, VoronoiWeights};
use crate::context::RunContext;
use crate::geojson_out::regions_geojson;
use crate::{log_debug, log_info, log_warn};

const PARTITION_FILE: &str = "partition.json";
const REGIONS_FILE: &str = "regions.geojson";
const GRAPH_FILE: &str = "graph.json";
const COUNTS_FILE: &str = "counts.csv";
const COUNTS_META_FILE: &str = "counts_meta.json";
const HEATMAP_FILE: &str = "heatmap.geojson";
const CHECKPOINT_FILE: &str = "checkpoint.json";
const TRACE_FILE: &str = "loss_trace.csv";
const REPORT_FILE: &str = "report.json";

fn parse_events(ctx: &mut RunContext) -> Result<ParsedEvents> {
    let path = ctx.cfg.events.clone();
    let bytes = ctx.read_input(&path)?;
    let schema = ctx.cfg.schema.clone();
    let parsed = events::parse_events_csv(&bytes, &schema)?;
    ctx.counter("events_parsed", parsed.events.len() as u64);
    ctx.counter("events_dropped", parsed.dropped as u64);
    if parsed.dropped > 0 {
        log_warn!("dropped {} malformed event rows", parsed.dropped);
    }
    if parsed.events.is_empty() {
        bail!("events file {} contains no valid rows", path.display());
    }
    Ok(parsed)
}

/// Projection centered on the mean event coordinate.
fn dataset_projection(events: &[Event]) -> Result<Projection> {
    let n = events.len() as f64;
    let lon = events.iter().map(|e| e.pos.lon).sum::<f64>() / n;
    let lat = events.iter().map(|e| e.pos.lat).sum::<f64>() / n;
    Ok(Projection::centered_at(GeoPoint::new(lon, lat))?)
}

pub fn cmd_partition(mut ctx: RunContext) -> Result<()> {
    let parsed = ctx.time("parse_events", parse_events)?;
    let proj = dataset_projection(&parsed.events)?;
    log_debug!("projection origin ({}, {})", proj.origin_lon, proj.origin_lat);

    let part = ctx.time("partition", |ctx| match ctx.cfg.mapping.clone() {
        Mapping::Grid { cell_size } => {
            let bbox = BoundingBox::from_points(
                parsed.events.iter().map(|e| proj.project(e.pos)),
            )
            .expect("events are non-empty");
            Ok(partition::grid_partition(&bbox, cell_size, proj)?)
        }
        Mapping::Admin { id_property } => {
            let path = ctx.cfg.admin.clone().expect("validated at load");
            let bytes = ctx.read_input(&path)?;
            Ok(partition::admin_partition(&bytes, proj, &id_property)?)
        }
        Mapping::Voronoi { min_degree, d_small, d_big, snap_tol } => {
            let path = ctx.cfg.roads.clone().expect("validated at load");
            let bytes = ctx.read_input(&path)?;
            let net = roads::parse_road_geojson(&bytes, &proj, snap_tol)?;
            if net.skipped_features > 0 {
                log_warn!("skipped {} non-LineString road features", net.skipped_features);
            }
            ctx.counter("road_nodes", net.nodes.len() as u64);
            ctx.counter("road_segments", net.segments.len() as u64);
            ctx.counter("road_features_skipped", net.skipped_features as u64);
            let seeds = roads::select_seeds(&net, min_degree, d_small, d_big)?;
            ctx.counter("seeds", seeds.len() as u64);
            Ok(partition::voronoi_partition(&seeds, &net.bbox, proj)?)
        }
    })?;
    ctx.counter("regions", part.len() as u64);
    log_info!("partitioned into {} regions", part.len());

    ctx.write_output(PARTITION_FILE, partition::write_partition_json(&part).as_bytes())?;
    ctx.write_output(REGIONS_FILE, regions_geojson(&part, None).as_bytes())?;
    ctx.finish("partition")
}

fn load_partition(ctx: &mut RunContext) -> Result<Partition> {
    let path = ctx.out_path(PARTITION_FILE);
    if !path.is_file() {
        bail!("{} not found; run the partition command first", path.display());
    }
    let bytes = ctx.read_input(&path)?;
    Ok(partition::read_partition_json(&bytes)?)
}

pub fn cmd_build(mut ctx: RunContext) -> Result<()> {
    let part = load_partition(&mut ctx)?;
    let parsed = ctx.time("parse_events", parse_events)?;

    let index = events::BucketIndex::build(&part)?;
    let assigned = ctx.time("assign_events", |_| Ok(events::assign_events(&parsed.events, &part, &index)))?;
    let inside = assigned.iter().filter(|a| a.region_id.is_some()).count();
    let outside = assigned.len() - inside;
    ctx.counter("events_inside", inside as u64);
    ctx.counter("events_outside", outside as u64);
    log_info!("assigned {} events ({} outside all regions)", assigned.len(), outside);

    let features = match ctx.cfg.pois.clone() {
        Some(path) => ctx.time("aggregate_pois", |ctx| {
            let bytes = ctx.read_input(&path)?;
            let schema = ctx.cfg.schema.clone();
            let pois = events::parse_poi_csv(&bytes, &schema)?;
            ctx.counter("pois_parsed", pois.events.len() as u64);
            ctx.counter("pois_dropped", pois.dropped as u64);
            let normalize = ctx.cfg.normalize_features;
            Ok(Some(events::aggregate_poi_features(&pois.events, &part, &index, normalize)?))
        })?,
        None => None,
    };

    let edges = ctx.time("build_edges", |ctx| match part.scheme {
        PartitionScheme::Grid { .. } => {
            let neighbors = match ctx.cfg.adjacency.grid_neighbors {
                GridNeighborsChoice::Rook => GridNeighbors::Rook,
                GridNeighborsChoice::Queen => GridNeighbors::Queen,
            };
            Ok(graph::build_adjacency_with(&part, ctx.cfg.adjacency.tol, neighbors))
        }
        PartitionScheme::Admin => Ok(graph::build_adjacency(&part, ctx.cfg.adjacency.tol)),
        PartitionScheme::Voronoi => match ctx.cfg.adjacency.voronoi_weights {
            VoronoiWeights::Boundary => Ok(graph::build_adjacency(&part, ctx.cfg.adjacency.tol)),
            VoronoiWeights::Road => {
                let path = ctx.cfg.roads.clone().context(
                    "road-length weights need a roads file; set adjacency.voronoi_weights \
                     to \"boundary\" to weight by shared borders instead",
                )?;
                let bytes = ctx.read_input(&path)?;
                let snap_tol = match ctx.cfg.mapping {
                    Mapping::Voronoi { snap_tol, .. } => snap_tol,
                    _ => roads::DEFAULT_SNAP_TOL,
                };
                let net = roads::parse_road_geojson(&bytes, &part.proj, snap_tol)?;
                Ok(graph::build_road_weights(&part, &net)?)
            }
        },
    })?;
    ctx.counter("edges", edges.len() as u64);

    let region_graph = graph::assemble_graph(part, edges, features)?;
    ctx.write_output(GRAPH_FILE, graph::write_graph_json(&region_graph).as_bytes())?;

    let cm = ctx.time("bin_events", |ctx| {
        Ok(temporal::bin_events(&assigned, region_graph.partition.len(), ctx.cfg.bin_width)?)
    })?;
    ctx.counter("bins", cm.n_bins() as u64);
    ctx.counter("events_in_matrix", cm.total());
    ctx.write_output(COUNTS_FILE, temporal::write_counts_csv(&cm).as_bytes())?;
    ctx.write_output(
        COUNTS_META_FILE,
        serde_json::to_string_pretty(&temporal::count_meta(&cm))?.as_bytes(),
    )?;

    let totals = cm.region_totals();
    let heatmap = regions_geojson(&region_graph.partition, Some(("total_events", &totals)));
    ctx.write_output(HEATMAP_FILE, heatmap.as_bytes())?;
    ctx.finish("build")
}

struct LoadedDataset {
    graph: stm_core::graph::GraphFile,
    adjacency: gcn::NormalizedAdjacency,
    dataset: gcn::PreparedDataset,
    split: temporal::SplitDataset,
}

fn load_dataset(ctx: &mut RunContext) -> Result<LoadedDataset> {
    let graph_path = ctx.out_path(GRAPH_FILE);
    let counts_path = ctx.out_path(COUNTS_FILE);
    let meta_path = ctx.out_path(COUNTS_META_FILE);
    for path in [&graph_path, &counts_path, &meta_path] {
        if !path.is_file() {
            bail!("{} not found; run the build command first", path.display());
        }
    }
    let graph = graph::read_graph_json(&ctx.read_input(&graph_path)?)?;
    let meta: temporal::CountMeta = serde_json::from_slice(&ctx.read_input(&meta_path)?)?;
    let cm = temporal::read_counts_csv(&ctx.read_input(&counts_path)?, &meta)?;
    if cm.n_regions() != graph.n_regions() {
        bail!(
            "count matrix covers {} regions but the graph has {}",
            cm.n_regions(),
            graph.n_regions()
        );
    }

    let samples = temporal::make_windows(&cm, ctx.cfg.window)?;
    let split = temporal::chronological_split(&samples, ctx.cfg.fractions)?;
    ctx.counter("samples", samples.len() as u64);
    ctx.counter("samples_train", split.train.len() as u64);
    ctx.counter("samples_val", split.val.len() as u64);
    ctx.counter("samples_test", split.test.len() as u64);
    ctx.counter("samples_straddling_dropped", split.dropped_straddlers as u64);

    let adjacency = gcn::normalize_adjacency_file(&graph, ctx.cfg.adjacency.binary);
    let dataset = gcn::prepare_dataset(&split, graph.static_features().as_ref(), &adjacency)?;
    Ok(LoadedDataset { graph, adjacency, dataset, split })
}

pub fn cmd_train(mut ctx: RunContext) -> Result<()> {
    let loaded = ctx.time("load_dataset", load_dataset)?;
    log_info!(
        "training on {} samples over {} regions (window {}, {} input columns)",
        loaded.split.train.len(),
        loaded.graph.n_regions(),
        ctx.cfg.window,
        loaded.dataset.input_dim,
    );

    let train_cfg = ctx.cfg.train.clone();
    let outcome = ctx.time("train", |_| Ok(gcn::train(&loaded.adjacency, &loaded.dataset, &train_cfg)?))?;
    for row in &outcome.trace {
        log_debug!(
            "epoch {}: train_loss {:.6}, val_auc {:.4}",
            row.epoch,
            row.train_loss,
            row.val_auc
        );
    }
    if let Some(best) = outcome.best_epoch {
        ctx.counter("best_epoch", best as u64);
        log_info!("best validation epoch {best}");
    }

    let checkpoint = gcn::checkpoint(&outcome.model, &ctx.cfg.train);
    ctx.write_output(CHECKPOINT_FILE, serde_json::to_string_pretty(&checkpoint)?.as_bytes())?;
    ctx.write_output(TRACE_FILE, gcn::write_trace_csv(&outcome.trace).as_bytes())?;
    ctx.finish("train")
}

/// Report document: the five metrics, confusion counts, and the digest of
/// the configuration that produced the run.
#[derive(Serialize)]
struct ReportDocument {
    auc: f64,
    accuracy: f64,
    balanced_accuracy: f64,
    f1: f64,
    mcc: f64,
    confusion: stm_core::metrics::Confusion,
    config_digest: String,
}

pub fn cmd_evaluate(mut ctx: RunContext) -> Result<()> {
    let loaded = ctx.time("load_dataset", load_dataset)?;
    let checkpoint_path = ctx.out_path(CHECKPOINT_FILE);
    if !checkpoint_path.is_file() {
        bail!("{} not found; run the train command first", checkpoint_path.display());
    }
    let checkpoint: gcn::CheckpointFile = serde_json::from_slice(&ctx.read_input(&checkpoint_path)?)?;
    let model = gcn::model_from_checkpoint(&checkpoint)?;
    if model.input_dim != loaded.dataset.input_dim {
        bail!(
            "checkpoint expects {} input columns but the dataset has {}",
            model.input_dim,
            loaded.dataset.input_dim
        );
    }

    let report = ctx.time("evaluate", |_| {
        gcn::evaluate(&model, &loaded.adjacency, &loaded.dataset.test)
            .map_err(|e| anyhow!("test-split evaluation failed: {e}"))
    })?;
    log_info!(
        "test metrics: auc {:.4}, accuracy {:.4}, balanced {:.4}, f1 {:.4}, mcc {:.4}",
        report.auc,
        report.accuracy,
        report.balanced_accuracy,
        report.f1,
        report.mcc
    );

    let document = ReportDocument {
        auc: report.auc,
        accuracy: report.accuracy,
        balanced_accuracy: report.balanced_accuracy,
        f1: report.f1,
        mcc: report.mcc,
        confusion: report.confusion,
        config_digest: ctx.config_digest.clone(),
    };
    ctx.write_output(REPORT_FILE, serde_json::to_string_pretty(&document)?.as_bytes())?;
    ctx.finish("evaluate")
}

pub fn cmd_export(mut ctx: RunContext) -> Result<()> {
    let part = load_partition(&mut ctx)?;
    ctx.write_output(REGIONS_FILE, regions_geojson(&part, None).as_bytes())?;

    let counts_path = ctx.out_path(COUNTS_FILE);
    let meta_path = ctx.out_path(COUNTS_META_FILE);
    if counts_path.is_file() && meta_path.is_file() {
        let meta: temporal::CountMeta = serde_json::from_slice(&ctx.read_input(&meta_path)?)?;
        let cm = temporal::read_counts_csv(&ctx.read_input(&counts_path)?, &meta)?;
        if cm.n_regions() == part.len() {
            let totals = cm.region_totals();
            let heatmap = regions_geojson(&part, Some(("total_events", &totals)));
            ctx.write_output(HEATMAP_FILE, heatmap.as_bytes())?;
        } else {
            log_warn!("count matrix does not match the partition; heatmap skipped");
        }
    } else {
        log_debug!("no count matrix present; exporting regions only");
    }
    ctx.finish("export")
}
