//! Option values from a JSON file. Keys are option names (`target_index`
//! or `target-index`); flags given on the command line win.

use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::exit::{CliResult, Context, Failure};

pub fn load(path: &Path) -> CliResult<Map<String, Value>> {
    let text = std::fs::read_to_string(path).context(path.display())?;
    match serde_json::from_str(&text).context(path.display())? {
        Value::Object(map) => Ok(map
            .into_iter()
            .map(|(k, v)| (k.replace('-', "_"), v))
            .collect()),
        _ => Err(Failure::config(format!("{}: expected a JSON object", path.display()))),
    }
}

pub fn merge<T: Serialize + DeserializeOwned>(
    args: T,
    matches: &ArgMatches,
    config: &Map<String, Value>,
) -> CliResult<T> {
    if config.is_empty() {
        return Ok(args);
    }
    let Value::Object(mut merged) = serde_json::to_value(&args)? else {
        return Ok(args);
    };
    for (key, value) in config {
        if !merged.contains_key(key) {
            return Err(Failure::config(format!("unknown option '{key}' in config file")));
        }
        let from_cli = matches!(matches.value_source(key), Some(ValueSource::CommandLine));
        if !from_cli {
            merged.insert(key.clone(), value.clone());
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Failure::config(format!("config file: {e}")))
}
