use std::fs;
use std::io::{self, Write};
use std::path::Path;

use bbmsf_core::small_signal::sig9;
use serde::Serialize;
use serde_json::Value;

/// Rounds every float in a JSON tree to nine significant digits so that
/// reports are stable across platforms and runs.
pub fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = sig9(n.as_f64().unwrap_or(f64::NAN));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("report types serialize");
    let mut s = serde_json::to_string_pretty(&round_floats(v)).expect("json values serialize");
    s.push('\n');
    s
}

/// A number with its unit, as carried in the JSON reports.
pub fn quantity(value: f64, unit: &str) -> Value {
    serde_json::json!({ "value": value, "unit": unit })
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(text: &str, path: Option<&Path>) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}

/// Formats a float for CSV at nine significant digits.
pub fn csv_num(x: f64) -> String {
    format!("{}", sig9(x))
}
