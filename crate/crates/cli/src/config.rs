//! `--config <json>`: a flat object whose keys mirror the long flags
//! (`batch-size` or `batch_size`). Flags given on the command line win.

use std::fs;
use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

pub fn read_config(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    match value {
        Value::Object(map) => Ok(map
            .into_iter()
            .map(|(k, v)| (k.replace('-', "_"), v))
            .collect()),
        _ => Err(CliError::Data(format!("{}: expected a JSON object", path.display()))),
    }
}

/// Overwrites fields of `args` with config values unless the flag was given
/// explicitly. Consumed keys are removed from `config`.
pub fn merge<T: Serialize + DeserializeOwned>(
    args: T,
    matches: &ArgMatches,
    config: &mut Map<String, Value>,
    path: &Path,
) -> Result<T, CliError> {
    let mut value = serde_json::to_value(&args).expect("arguments serialize");
    let Value::Object(fields) = &mut value else {
        return Ok(args);
    };
    let keys: Vec<String> = config.keys().filter(|k| fields.contains_key(*k)).cloned().collect();
    for key in keys {
        let v = config.remove(&key).expect("key present");
        let explicit = matches
            .try_get_raw(&key)
            .is_ok_and(|_| matches.value_source(&key) == Some(ValueSource::CommandLine));
        if !explicit {
            fields.insert(key, v);
        }
    }
    serde_json::from_value(value).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
