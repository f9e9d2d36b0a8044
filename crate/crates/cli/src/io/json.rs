//! JSON output with stable key order and fixed float precision.

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, Result};

/// Significant digits kept for floats in reports.
pub const SIGNIFICANT_DIGITS: usize = 9;

pub fn round_significant(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

/// Rounds every float in `value` to [`SIGNIFICANT_DIGITS`].
pub fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or_default();
            if let Some(r) = serde_json::Number::from_f64(round_significant(x, SIGNIFICANT_DIGITS)) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

pub fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    serde_json::to_value(x).map_err(|e| CliError::Config(format!("cannot serialize: {e}")))
}

/// Pretty JSON with a trailing newline; floats are written as given.
pub fn to_pretty(value: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("Value serializes");
    out.push(b'\n');
    out
}

/// Pretty JSON with floats rounded to [`SIGNIFICANT_DIGITS`].
pub fn to_report(value: &Value) -> Vec<u8> {
    let mut v = value.clone();
    round_floats(&mut v);
    to_pretty(&v)
}
