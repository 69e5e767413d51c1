//! GeoJSON exports for external map viewers. Regions are unprojected back
//! to WGS84; properties are flat and alphabetically ordered, so identical
//! runs serialize identically.

use serde::Serialize;
use serde_json::{Map, Number, Value};

use stm_core::geo::Projection;
use stm_core::partition::Partition;

#[derive(Serialize)]
struct FeatureCollection {
    r#type: &'static str,
    features: Vec<Feature>,
}

#[derive(Serialize)]
struct Feature {
    r#type: &'static str,
    properties: Map<String, Value>,
    geometry: Geometry,
}

#[derive(Serialize)]
struct Geometry {
    r#type: &'static str,
    coordinates: Vec<Vec<[f64; 2]>>,
}

fn ring_to_wgs84(ring: &[stm_core::geo::PlanarPoint], proj: &Projection) -> Vec<[f64; 2]> {
    let mut coords: Vec<[f64; 2]> = ring
        .iter()
        .map(|p| {
            let g = proj.unproject(*p);
            [g.lon, g.lat]
        })
        .collect();
    if let Some(first) = coords.first().copied() {
        coords.push(first); // GeoJSON rings close explicitly
    }
    coords
}

/// FeatureCollection of region polygons with `id`, `kind`, `label`
/// properties, plus any extra per-region properties supplied.
pub fn regions_geojson(part: &Partition, extra: Option<(&str, &[u64])>) -> String {
    let features = part
        .regions()
        .iter()
        .map(|r| {
            let mut properties = Map::new();
            properties.insert("id".into(), Value::Number(Number::from(r.id)));
            properties.insert("kind".into(), Value::String(r.kind.as_str().into()));
            properties.insert(
                "label".into(),
                r.label.clone().map(Value::String).unwrap_or(Value::Null),
            );
            if let Some((name, values)) = extra {
                properties.insert(name.into(), Value::Number(Number::from(values[r.id])));
            }
            let mut coordinates = vec![ring_to_wgs84(r.geometry.exterior(), &part.proj)];
            for hole in r.geometry.holes() {
                coordinates.push(ring_to_wgs84(hole, &part.proj));
            }
            Feature {
                r#type: "Feature",
                properties,
                geometry: Geometry { r#type: "Polygon", coordinates },
            }
        })
        .collect();
    let collection = FeatureCollection { r#type: "FeatureCollection", features };
    serde_json::to_string(&collection).expect("geojson serialization cannot fail")
}
