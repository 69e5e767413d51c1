//! Minimal GeoJSON FeatureCollection reading for the two file inputs
//! (road LineStrings and administrative Polygons). Inputs are WGS84.

use serde_json::Value;

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

/// Parse bytes as a GeoJSON FeatureCollection and return the feature array.
pub fn feature_collection(bytes: &[u8]) -> Result<Vec<Value>> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| {
        Error::GeoJson(format!("line {} column {}: {}", e.line(), e.column(), e))
    })?;
    let kind = doc
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::GeoJson("document has no \"type\" member".into()))?;
    if kind != "FeatureCollection" {
        return Err(Error::GeoJson(format!(
            "expected a FeatureCollection, got {kind:?}"
        )));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::GeoJson("FeatureCollection has no \"features\" array".into()))?;
    Ok(features.to_vec())
}

/// Geometry type and coordinates of a feature, if it has a geometry at all.
pub fn geometry(feature: &Value, index: usize) -> Result<Option<(&str, &Value)>> {
    let geom = match feature.get("geometry") {
        None | Some(Value::Null) => return Ok(None),
        Some(g) => g,
    };
    let kind = geom.get("type").and_then(Value::as_str).ok_or_else(|| {
        Error::GeoJsonFeature { feature: index, message: "geometry has no \"type\"".into() }
    })?;
    let coords = geom.get("coordinates").ok_or_else(|| Error::GeoJsonFeature {
        feature: index,
        message: "geometry has no \"coordinates\"".into(),
    })?;
    Ok(Some((kind, coords)))
}

/// A `[lon, lat]` position array.
pub fn position(v: &Value, index: usize) -> Result<GeoPoint> {
    let arr = v.as_array().filter(|a| a.len() >= 2).ok_or_else(|| Error::GeoJsonFeature {
        feature: index,
        message: "position is not a [lon, lat] array".into(),
    })?;
    let lon = arr[0].as_f64();
    let lat = arr[1].as_f64();
    match (lon, lat) {
        (Some(lon), Some(lat)) => Ok(GeoPoint::new(lon, lat)),
        _ => Err(Error::GeoJsonFeature {
            feature: index,
            message: "position has non-numeric coordinates".into(),
        }),
    }
}

/// String or numeric property rendered as text.
pub fn string_property(feature: &Value, name: &str) -> Option<String> {
    let props = feature.get("properties")?.as_object()?;
    match props.get(name)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}
