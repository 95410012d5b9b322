//! Output formatting shared by every report: 17 significant digits for all
//! floating-point values so that written numbers round-trip exactly.

use serde::Serialize;
use serde_json::{Map, Number, Value};

use crate::error::Result;

/// Formats a float with 17 significant digits (`NaN`/`inf` become empty).
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        String::new()
    }
}

pub fn fmt17_opt(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

fn rewrite(v: Value) -> Value {
    match v {
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                return Value::Number(n);
            }
            match n.as_f64() {
                Some(f) if f.is_finite() => fmt17(f)
                    .parse::<Number>()
                    .map(Value::Number)
                    .unwrap_or(Value::Number(n)),
                _ => Value::Null,
            }
        }
        Value::Array(a) => Value::Array(a.into_iter().map(rewrite).collect()),
        Value::Object(o) => {
            let mut out = Map::new();
            for (k, v) in o {
                out.insert(k, rewrite(v));
            }
            Value::Object(out)
        }
        other => other,
    }
}

/// Pretty JSON with every float written to 17 significant digits.
pub fn to_json17<T: Serialize>(value: &T) -> Result<String> {
    let v = rewrite(serde_json::to_value(value)?);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}
