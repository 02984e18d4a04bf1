//! Canonical structured-text rendering: pretty JSON, sorted keys, two-space
//! indent, trailing newline. Reports written this way are bit-stable and can
//! be diffed against checked-in manifests.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

#[derive(Serialize)]
#[serde(untagged)]
enum Sorted {
    Leaf(Value),
    List(Vec<Sorted>),
    Map(BTreeMap<String, Sorted>),
}

fn sort(value: Value) -> Sorted {
    match value {
        Value::Array(items) => Sorted::List(items.into_iter().map(sort).collect()),
        Value::Object(map) => Sorted::Map(map.into_iter().map(|(k, v)| (k, sort(v))).collect()),
        leaf => Sorted::Leaf(leaf),
    }
}

/// Render any serializable value in canonical form.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let sorted = sort(serde_json::to_value(value)?);
    let mut out = serde_json::to_string_pretty(&sorted)?;
    out.push('\n');
    Ok(out)
}

/// Round to a fixed number of decimals through the decimal formatter so the
/// emitted number is the shortest representation of the rounded value.
pub fn round_decimals(v: f64, decimals: usize) -> f64 {
    format!("{v:.decimals$}").parse().unwrap_or(v)
}
